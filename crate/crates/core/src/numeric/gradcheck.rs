use super::ParamSet;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error `|a - n| / max(|a|, |n|, floor)`.
///
/// Central differences at `FD_STEP` carry roughly 1e-10 absolute error on
/// O(1) losses, so entries whose true gradient is below the floor are judged
/// on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub entries: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BlockCheck> {
        self.blocks.iter().filter(|b| !b.passed)
    }
}

/// Compares `analytic` against central finite differences of `loss_fn`
/// around `params`, one report entry per parameter block.
pub fn grad_check<P, F>(params: &P, analytic: &P, mut loss_fn: F, tolerance: f64) -> GradCheckReport
where
    P: ParamSet<f64> + Clone,
    F: FnMut(&P) -> f64,
{
    let mut work = params.clone();
    let mut blocks = Vec::with_capacity(params.block_count());
    for bi in 0..params.block_count() {
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        let n = params.block(bi).len();
        for j in 0..n {
            let original = params.block(bi)[j];
            work.block_mut(bi)[j] = original + FD_STEP;
            let plus = loss_fn(&work);
            work.block_mut(bi)[j] = original - FD_STEP;
            let minus = loss_fn(&work);
            work.block_mut(bi)[j] = original;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic.block(bi)[j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = if rel.is_nan() { f64::INFINITY } else { max_rel.max(rel) };
        }
        blocks.push(BlockCheck {
            name: params.block_name(bi),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            entries: n,
            passed: max_rel < tolerance,
        });
    }
    GradCheckReport { tolerance, blocks }
}
