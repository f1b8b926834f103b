//! Self-contained HTML heatmap of attention weights over paragraph tokens.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{ParagraphResult, PipelineResult};
use crate::corpus::{Document, Paragraph, SpanAnnotation};
use crate::textprep::{tokenize, TokenizerConfig};
use crate::{Error, Result};

const STYLE: &str = "body{font-family:sans-serif;max-width:60em;margin:2em auto;line-height:1.7}\
section{border-top:1px solid #ccc;padding:.5em 0}\
.meta{color:#555;font-size:.9em}\
.par{margin:.6em 0;padding:.3em .5em}\
.par.flagged{border-left:4px solid #d62728}\
.tok{padding:0 1px;border-radius:2px}\
.ext{outline:2px solid #1f77b4}\
.gold{text-decoration:underline;text-decoration-thickness:2px}\
.notice{font-style:italic;color:#555}\
.legend span{margin-right:1em}";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn covers(spans: &[SpanAnnotation], t: usize) -> bool {
    spans.iter().any(|s| (s.start_token..s.end_token).contains(&t))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn render_paragraph(out: &mut String, p: &Paragraph, result: Option<&ParagraphResult>, tokenizer: &TokenizerConfig) {
    let flagged = result.is_some_and(|r| r.par_contains_frame);
    let _ = write!(out, "<div class=\"par{}\">", if flagged { " flagged" } else { "" });
    if let Some(r) = result {
        let _ = write!(
            out,
            "<div class=\"meta\">paragraph {}: frame {} (score {:.3})</div>",
            p.index,
            yes_no(r.par_contains_frame),
            r.score
        );
    }
    let weights: &[f64] = result.and_then(|r| r.attention.as_deref()).unwrap_or(&[]);
    let max = weights.iter().copied().fold(0.0, f64::max);
    let extracted: &[SpanAnnotation] = result.map_or(&[], |r| &r.spans);
    let mut last = 0;
    for (t, tok) in tokenize(&p.text, tokenizer).iter().enumerate() {
        out.push_str(&escape(&p.text[last..tok.span.start]));
        let w = weights.get(t).copied().unwrap_or(0.0);
        let alpha = if max > 0.0 { w / max } else { 0.0 };
        let mut class = String::from("tok");
        if covers(extracted, t) {
            class.push_str(" ext");
        }
        if covers(&p.gold_frame_spans, t) {
            class.push_str(" gold");
        }
        let _ = write!(
            out,
            "<span class=\"{class}\" data-w=\"{w:.6}\" style=\"background:rgba(214,39,40,{alpha:.3})\">{}</span>",
            escape(&p.text[tok.span.clone()])
        );
        last = tok.span.end;
    }
    out.push_str(&escape(&p.text[last..]));
    out.push_str("</div>\n");
}

fn render_document(out: &mut String, r: &PipelineResult, doc: Option<&Document>, tokenizer: &TokenizerConfig) {
    let _ = write!(out, "<section><h2>{}</h2><p class=\"meta\">", escape(&r.doc_id));
    if let Some(d) = doc.filter(|d| !d.source.is_empty()) {
        let _ = write!(out, "source {} | ", escape(&d.source));
    }
    let _ = write!(out, "contains AI: {}", yes_no(r.doc_contains_ai));
    if let (Some(f), Some(s)) = (r.doc_contains_frame, r.doc_frame_score) {
        let _ = write!(out, " | contains frame: {} (score {s:.3})", yes_no(f));
    }
    out.push_str("</p>\n");
    let Some(doc) = doc else {
        out.push_str("<p class=\"notice\">document text not available</p></section>\n");
        return;
    };
    let by_index: HashMap<usize, &ParagraphResult> =
        r.paragraphs.iter().flatten().map(|p| (p.index, p)).collect();
    for p in &doc.paragraphs {
        render_paragraph(out, p, by_index.get(&p.index).copied(), tokenizer);
    }
    out.push_str("</section>\n");
}

/// HTML for `results`, one section per result. Token backgrounds scale
/// linearly with attention weight (paragraph maximum = full intensity);
/// extracted spans are outlined and gold spans underlined.
pub fn render_report(results: &[PipelineResult], docs: &[Document], tokenizer: &TokenizerConfig) -> String {
    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut out = String::new();
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Frame detections</title>\n<style>{STYLE}</style>\n</head>\n<body>\n<h1>Frame detections</h1>\n"
    );
    out.push_str(
        "<p class=\"legend\"><span style=\"background:rgba(214,39,40,1)\">attention</span>\
<span class=\"tok ext\">extracted span</span><span class=\"tok gold\">gold span</span></p>\n",
    );
    if !results.iter().any(|r| r.flagged_paragraphs().next().is_some()) {
        out.push_str("<p class=\"notice\">No detections.</p>\n");
    }
    for r in results {
        render_document(&mut out, r, by_id.get(r.doc_id.as_str()).copied(), tokenizer);
    }
    out.push_str("</body>\n</html>\n");
    out
}

pub fn emit_report(
    results: &[PipelineResult],
    docs: &[Document],
    tokenizer: &TokenizerConfig,
    path: &Path,
) -> Result<()> {
    std::fs::write(path, render_report(results, docs, tokenizer)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::StageTiming;

    fn result(doc: &Document, weights: Vec<f64>, spans: Vec<SpanAnnotation>) -> PipelineResult {
        PipelineResult {
            doc_id: doc.id.clone(),
            doc_contains_ai: true,
            ai_keywords: vec![],
            doc_contains_frame: Some(true),
            doc_frame_score: Some(0.9),
            paragraphs: Some(vec![ParagraphResult {
                index: 0,
                par_contains_frame: true,
                score: 0.8,
                attention: Some(weights),
                spans,
                truncated: false,
            }]),
            timing: StageTiming::default(),
        }
    }

    fn alphas(html: &str) -> Vec<f64> {
        html.split("rgba(214,39,40,")
            .skip(2) // legend swatch
            .map(|s| s[..s.find(')').unwrap()].parse().unwrap())
            .collect()
    }

    #[test]
    fn intensity_is_linear_in_weight() {
        let doc = Document::from_text("d1", "wire", "arms race now");
        let html = render_report(&[result(&doc, vec![0.6, 0.3, 0.1], vec![])], &[doc], &TokenizerConfig::default());
        let a = alphas(&html);
        assert_eq!(a.len(), 3);
        assert_eq!(a[0], 1.0);
        assert!(a[0] > a[1] && a[1] > a[2]);
        assert!((a[1] - 0.5).abs() < 1e-3);
        assert!(!html.contains("No detections"));
    }

    #[test]
    fn gold_and_extracted_markers_share_tokens() {
        let mut doc = Document::from_text("d1", "", "the arms race heats up");
        doc.paragraphs[0].gold_par_contains_frame = Some(true);
        doc.paragraphs[0].gold_frame_spans = vec![SpanAnnotation::new(1, 3)];
        let r = result(&doc, vec![0.1, 0.4, 0.3, 0.1, 0.1], vec![SpanAnnotation::new(2, 4)]);
        let html = render_report(&[r], &[doc], &TokenizerConfig::default());
        assert_eq!(html.matches("tok ext gold").count(), 1);
        assert_eq!(html.matches("class=\"tok gold\"").count(), 2);
        assert_eq!(html.matches("class=\"tok ext\"").count(), 2);
    }

    #[test]
    fn empty_results_give_notice() {
        let html = render_report(&[], &[], &TokenizerConfig::default());
        assert!(html.starts_with("<!DOCTYPE html>"));
        assert!(html.contains("No detections."));
        assert!(html.trim_end().ends_with("</html>"));
    }

    #[test]
    fn text_is_escaped() {
        let doc = Document::from_text("<x>", "", "AI & <b>race</b>");
        let r = result(&doc, vec![0.5, 0.5], vec![]);
        let html = render_report(&[r], &[doc], &TokenizerConfig::default());
        assert!(html.contains("&lt;x&gt;"));
        assert!(!html.contains("<b>race"));
    }

    #[test]
    fn writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.html");
        emit_report(&[], &[], &TokenizerConfig::default(), &path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().contains("No detections"));
        assert!(emit_report(&[], &[], &TokenizerConfig::default(), &dir.path().join("no/such/r.html")).is_err());
    }
}
