//! Hierarchical center-heatmap focal loss, size and offset L1 losses, and their weighted total.
//!
//! All values come with analytic gradients with respect to the prediction.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::DenseTargetSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Focal exponent on the prediction.
    pub alpha: f64,
    /// Exponent down-weighting negatives near a center.
    pub beta: f64,
    pub lambda_shm: f64,
    pub lambda_wh: f64,
    pub lambda_off: f64,
    /// Predictions are clamped to `[clamp_eps, 1 - clamp_eps]`.
    pub clamp_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 4.0,
            lambda_shm: 1.0,
            lambda_wh: 0.1,
            lambda_off: 1.0,
            clamp_eps: 1e-4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidConfig("alpha and beta must be non-negative".into()));
        }
        if self.lambda_shm < 0.0 || self.lambda_wh < 0.0 || self.lambda_off < 0.0 {
            return Err(Error::InvalidConfig("loss weights must be non-negative".into()));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "clamp_eps must lie in (0, 0.5), got {}",
                self.clamp_eps
            )));
        }
        Ok(())
    }
}

/// Network outputs evaluated against a [`DenseTargetSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Same shape as the target heatmap.
    pub heatmap: Array3<f64>,
    /// Predicted `(w, h)` at each target peak, in target object order.
    pub sizes: Vec<[f64; 2]>,
    /// Predicted offsets at each target peak, in target object order.
    pub offsets: Vec<[f64; 2]>,
}

/// A loss value and its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<G> {
    pub value: f64,
    pub grad: G,
}

fn check_pairs(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::ShapeMismatch(format!(
            "{what}: prediction has {got} entries, target has {want} objects"
        )));
    }
    Ok(())
}

/// `x^p`, with `x^0 = 1` for every `x` including 0.
fn pow(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        x.powf(p)
    }
}

/// Per-cell term `t(ŷ)` whose negated normalized sum is the loss, and `dt/dŷ`.
fn focal_term(y: f64, p: f64, alpha: f64, beta: f64) -> (f64, f64) {
    if y == 1.0 {
        // (1 - p)^a ln p
        let q = 1.0 - p;
        let t = pow(q, alpha) * p.ln();
        let dq = if alpha == 0.0 { 0.0 } else { -alpha * pow(q, alpha - 1.0) * p.ln() };
        (t, dq + pow(q, alpha) / p)
    } else {
        // (1 - y)^b p^a ln(1 - p)
        let w = pow(1.0 - y, beta);
        let l = (1.0 - p).ln();
        let t = w * pow(p, alpha) * l;
        let dp = if alpha == 0.0 { 0.0 } else { alpha * pow(p, alpha - 1.0) * l };
        (t, w * (dp - pow(p, alpha) / (1.0 - p)))
    }
}

/// Focal loss over every cell and channel of the heatmap, normalized by the
/// object count. Peak cells are those where the target equals exactly 1.
pub fn focal_loss_shm(target: &DenseTargetSet, pred: &Prediction, cfg: &LossConfig) -> Result<LossGrad<Array3<f64>>> {
    if target.heatmap.shape() != pred.heatmap.shape() {
        return Err(Error::ShapeMismatch(format!(
            "heatmap: prediction {:?} vs target {:?}",
            pred.heatmap.shape(),
            target.heatmap.shape()
        )));
    }
    focal_loss_grid(&target.heatmap, &pred.heatmap, target.n_objects(), cfg)
}

/// Grid form of [`focal_loss_shm`] with an explicit normalizer `n`.
pub fn focal_loss_grid(y: &Array3<f64>, y_hat: &Array3<f64>, n: usize, cfg: &LossConfig) -> Result<LossGrad<Array3<f64>>> {
    if y.shape() != y_hat.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", y_hat.shape(), y.shape())));
    }
    let mut grad = Array3::<f64>::zeros(y.raw_dim());
    if n == 0 {
        return Ok(LossGrad { value: 0.0, grad });
    }
    let (lo, hi) = (cfg.clamp_eps, 1.0 - cfg.clamp_eps);
    let scale = -1.0 / n as f64;
    let mut sum = 0.0;
    for ((g, &t), &raw) in grad.iter_mut().zip(y.iter()).zip(y_hat.iter()) {
        let p = raw.clamp(lo, hi);
        let (term, dterm) = focal_term(t, p, cfg.alpha, cfg.beta);
        sum += term;
        *g = if raw > lo && raw < hi { scale * dterm } else { 0.0 };
    }
    Ok(LossGrad {
        value: scale * sum,
        grad,
    })
}

fn l1_pairs(pred: &[[f64; 2]], target: &[[f64; 2]]) -> LossGrad<Vec<[f64; 2]>> {
    let n = target.len();
    if n == 0 {
        return LossGrad {
            value: 0.0,
            grad: Vec::new(),
        };
    }
    let inv = 1.0 / n as f64;
    let sign = |d: f64| if d > 0.0 { inv } else if d < 0.0 { -inv } else { 0.0 };
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let (dx, dy) = (p[0] - t[0], p[1] - t[1]);
            sum += dx.abs() + dy.abs();
            [sign(dx), sign(dy)]
        })
        .collect();
    LossGrad {
        value: sum * inv,
        grad,
    }
}

/// Mean L1 distance between predicted and target sizes.
pub fn size_loss_wh(target: &DenseTargetSet, pred: &Prediction) -> Result<LossGrad<Vec<[f64; 2]>>> {
    check_pairs("sizes", pred.sizes.len(), target.n_objects())?;
    Ok(l1_pairs(&pred.sizes, &target.sizes))
}

/// Mean L1 distance between predicted offsets and the fractional center offsets.
pub fn offset_loss(target: &DenseTargetSet, pred: &Prediction) -> Result<LossGrad<Vec<[f64; 2]>>> {
    check_pairs("offsets", pred.offsets.len(), target.n_objects())?;
    Ok(l1_pairs(&pred.offsets, &target.offsets))
}

/// Weighted sum of the heatmap, size and offset losses.
pub fn total_loss(parts: (f64, f64, f64), cfg: &LossConfig) -> f64 {
    let (shm, wh, off) = parts;
    cfg.lambda_shm * shm + cfg.lambda_wh * wh + cfg.lambda_off * off
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_shm: f64,
    pub l_wh: f64,
    pub l_off: f64,
    pub total: f64,
}

pub fn evaluate(target: &DenseTargetSet, pred: &Prediction, cfg: &LossConfig) -> Result<LossReport> {
    cfg.validate()?;
    let l_shm = focal_loss_shm(target, pred, cfg)?.value;
    let l_wh = size_loss_wh(target, pred)?.value;
    let l_off = offset_loss(target, pred)?.value;
    Ok(LossReport {
        l_shm,
        l_wh,
        l_off,
        total: total_loss((l_shm, l_wh, l_off), cfg),
    })
}

/// Largest relative error between analytic and central-difference gradients
/// of the heatmap loss over the given cells.
///
/// Cells within `step` of a clamp boundary are skipped; the denominator is
/// floored at `1e-6` so vanishing gradients compare absolutely.
pub fn heatmap_grad_check(
    target: &DenseTargetSet,
    pred: &Prediction,
    cfg: &LossConfig,
    cells: &[[usize; 3]],
    step: f64,
) -> Result<f64> {
    let analytic = focal_loss_shm(target, pred, cfg)?.grad;
    let mut probe = pred.clone();
    let mut worst = 0.0f64;
    for &[r, c, k] in cells {
        let x = pred.heatmap[[r, c, k]];
        if x - step <= cfg.clamp_eps || x + step >= 1.0 - cfg.clamp_eps {
            continue;
        }
        probe.heatmap[[r, c, k]] = x + step;
        let up = focal_loss_shm(target, &probe, cfg)?.value;
        probe.heatmap[[r, c, k]] = x - step;
        let down = focal_loss_shm(target, &probe, cfg)?.value;
        probe.heatmap[[r, c, k]] = x;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[[r, c, k]];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImageDims;
    use approx::assert_abs_diff_eq;

    fn one_cell(y: f64, n_obj: usize) -> DenseTargetSet {
        DenseTargetSet {
            heatmap: Array3::from_elem((1, 1, 1), y),
            sizes: vec![[1.0, 1.0]; n_obj],
            offsets: vec![[0.0, 0.0]; n_obj],
            peak_cells: vec![[0, 0]; n_obj],
            classes: vec![1; n_obj],
            down_ratio: 4,
            image_dims: ImageDims::new(4.0, 4.0),
        }
    }

    fn pred_cell(p: f64, n_obj: usize) -> Prediction {
        Prediction {
            heatmap: Array3::from_elem((1, 1, 1), p),
            sizes: vec![[1.0, 1.0]; n_obj],
            offsets: vec![[0.0, 0.0]; n_obj],
        }
    }

    #[test]
    fn scalar_branches() {
        let cfg = LossConfig::default();
        let v = focal_loss_shm(&one_cell(1.0, 1), &pred_cell(0.5, 1), &cfg).unwrap().value;
        assert_abs_diff_eq!(v, 0.173287, epsilon = 1e-6);
        let v = focal_loss_shm(&one_cell(0.5, 1), &pred_cell(0.5, 1), &cfg).unwrap().value;
        assert_abs_diff_eq!(v, 0.010830, epsilon = 1e-6);
    }

    #[test]
    fn near_perfect_prediction_is_near_zero() {
        let cfg = LossConfig::default();
        let mut t = one_cell(0.0, 1);
        t.heatmap = Array3::zeros((4, 4, 2));
        t.heatmap[[1, 2, 0]] = 1.0;
        let mut p = pred_cell(0.0, 1);
        p.heatmap = Array3::from_elem((4, 4, 2), 1e-4);
        p.heatmap[[1, 2, 0]] = 1.0 - 1e-4;
        let v = focal_loss_shm(&t, &p, &cfg).unwrap().value;
        assert!((0.0..=1e-3).contains(&v), "{v}");
    }

    #[test]
    fn empty_target_has_zero_loss() {
        let cfg = LossConfig::default();
        let t = one_cell(0.3, 0);
        let r = focal_loss_shm(&t, &pred_cell(0.9, 0), &cfg).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.grad.iter().all(|&g| g == 0.0));
        assert_eq!(size_loss_wh(&t, &pred_cell(0.9, 0)).unwrap().value, 0.0);
    }

    #[test]
    fn clamped_cells_have_flat_gradient() {
        let cfg = LossConfig::default();
        for &(y, p) in &[(1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.2, -3.0)] {
            let r = focal_loss_shm(&one_cell(y, 1), &pred_cell(p, 1), &cfg).unwrap();
            assert!(r.value.is_finite());
            assert_eq!(r.grad[[0, 0, 0]], 0.0);
        }
    }

    #[test]
    fn shape_mismatch() {
        let cfg = LossConfig::default();
        let mut p = pred_cell(0.5, 1);
        p.heatmap = Array3::zeros((2, 1, 1));
        assert!(matches!(
            focal_loss_shm(&one_cell(1.0, 1), &p, &cfg),
            Err(Error::ShapeMismatch(_))
        ));
        let mut p = pred_cell(0.5, 1);
        p.sizes.clear();
        assert!(size_loss_wh(&one_cell(1.0, 1), &p).is_err());
    }

    #[test]
    fn size_and_offset_examples() {
        let mut t = one_cell(1.0, 1);
        t.sizes = vec![[10.0, 20.0]];
        let mut p = pred_cell(0.5, 1);
        p.sizes = vec![[12.0, 17.0]];
        let r = size_loss_wh(&t, &p).unwrap();
        assert_eq!(r.value, 5.0);
        assert_eq!(r.grad, vec![[1.0, -1.0]]);
        p.sizes = t.sizes.clone();
        assert_eq!(size_loss_wh(&t, &p).unwrap().value, 0.0);

        let mut t = one_cell(1.0, 2);
        t.offsets = vec![[0.25, 0.75], [0.5, 0.5]];
        let mut p = pred_cell(0.5, 2);
        p.offsets = vec![[0.30, 0.80], [0.35, 0.35]];
        assert_abs_diff_eq!(offset_loss(&t, &p).unwrap().value, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn l1_is_positively_homogeneous() {
        let t = [[10.0, 20.0], [3.0, 4.0]];
        let p = [[12.0, 17.0], [1.0, 9.0]];
        let base = l1_pairs(&p, &t).value;
        for &c in &[0.0, 0.5, 2.0, 7.0] {
            let scaled: Vec<[f64; 2]> = p
                .iter()
                .zip(&t)
                .map(|(p, t)| [t[0] + c * (p[0] - t[0]), t[1] + c * (p[1] - t[1])])
                .collect();
            assert_abs_diff_eq!(l1_pairs(&scaled, &t).value, c * base, epsilon = 1e-12);
        }
    }

    #[test]
    fn total_examples() {
        let cfg = LossConfig::default();
        assert_abs_diff_eq!(total_loss((1.0, 10.0, 0.5), &cfg), 2.5, epsilon = 1e-12);
        assert_eq!(total_loss((0.0, 0.0, 0.0), &cfg), 0.0);
        let doubled = LossConfig {
            lambda_wh: 2.0 * cfg.lambda_wh,
            ..cfg
        };
        let parts = (0.7, 3.0, 0.2);
        assert_abs_diff_eq!(
            total_loss(parts, &doubled) - total_loss(parts, &cfg),
            cfg.lambda_wh * parts.1,
            epsilon = 1e-12
        );
    }

    #[test]
    fn monotone_in_prediction() {
        let cfg = LossConfig::default();
        let f = |y: f64, p: f64| focal_loss_shm(&one_cell(y, 1), &pred_cell(p, 1), &cfg).unwrap().value;
        let grid: Vec<f64> = (1..99).map(|i| i as f64 / 100.0).collect();
        for w in grid.windows(2) {
            assert!(f(1.0, w[1]) < f(1.0, w[0]));
            assert!(f(0.3, w[1]) > f(0.3, w[0]));
            assert!(f(0.0, w[1]) > f(0.0, w[0]));
        }
    }
}
