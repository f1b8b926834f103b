//! Central finite-difference checks for hand-written gradients.

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const REL_FLOOR: f64 = 1e-5;

/// Models exposing their trainable parameters as flat `f64` groups.
pub trait ParamGroups {
    fn group_names(&self) -> Vec<&'static str>;
    fn groups_mut(&mut self) -> Vec<&mut [f64]>;
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(group name, max relative error, parameters checked)`.
    pub per_group: Vec<(&'static str, f64, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compare `analytic` (one vector per group, same order as `groups_mut`)
/// against central differences of `loss`.
pub fn check<M: ParamGroups>(
    model: &mut M,
    analytic: &[Vec<f64>],
    loss: impl Fn(&M) -> f64,
) -> GradCheckReport {
    let names = model.group_names();
    let sizes: Vec<usize> = model.groups_mut().iter().map(|g| g.len()).collect();
    assert_eq!(sizes.len(), analytic.len(), "group count mismatch");
    let mut per_group = Vec::with_capacity(sizes.len());
    let mut max_rel_error = 0.0f64;
    for (g, &n) in sizes.iter().enumerate() {
        assert_eq!(analytic[g].len(), n, "group {} size mismatch", names[g]);
        let mut worst = 0.0f64;
        for i in 0..n {
            let orig = model.groups_mut()[g][i];
            model.groups_mut()[g][i] = orig + FD_STEP;
            let plus = loss(model);
            model.groups_mut()[g][i] = orig - FD_STEP;
            let minus = loss(model);
            model.groups_mut()[g][i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic[g][i], numeric));
        }
        max_rel_error = max_rel_error.max(worst);
        per_group.push((names[g], worst, n));
    }
    GradCheckReport {
        max_rel_error,
        per_group,
    }
}
