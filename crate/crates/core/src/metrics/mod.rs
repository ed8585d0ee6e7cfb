//! Distribution metrics for attention maps: Pearson correlation, KL
//! divergence, entropy and earth mover's distance.

mod transport;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::map::AttentionMap;

pub use transport::{transport_cost, MAX_TRANSPORT_CELLS};

/// Regularizer used in both guard positions of the KL sum.
pub const KL_EPSILON: f64 = 1e-7;

/// KL is measured as D(ground truth || prediction): prediction mass missing
/// where the ground truth has mass is penalized heavily.
pub const KL_DIRECTION: &str = "gt_vs_pred";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cc: f64,
    pub kl: f64,
    pub entropy: f64,
    pub count: usize,
}

impl MetricReport {
    /// Arithmetic means of per-frame (cc, kl, entropy) triples.
    pub fn from_frames(frames: &[(f64, f64, f64)]) -> Result<Self> {
        if frames.is_empty() {
            return Err(CoreError::Empty("metric frames"));
        }
        let n = frames.len() as f64;
        let (cc, kl, h) = frames.iter().fold((0.0, 0.0, 0.0), |acc, f| {
            (acc.0 + f.0, acc.1 + f.1, acc.2 + f.2)
        });
        Ok(Self {
            cc: cc / n,
            kl: kl / n,
            entropy: h / n,
            count: frames.len(),
        })
    }

    /// Scores one (prediction, ground truth) pair.
    pub fn frame(pred: &AttentionMap, gt: &AttentionMap) -> Result<(f64, f64, f64)> {
        Ok((cc(pred, gt)?, kl(pred, gt, KL_EPSILON)?, entropy(pred)))
    }
}

/// Pearson correlation over the flattened cells.
pub fn cc(p: &AttentionMap, q: &AttentionMap) -> Result<f64> {
    p.ensure_same_shape(q)?;
    pearson(p.values(), q.values())
}

/// Pearson correlation of two raw grids of equal length; used when the
/// inputs are not normalized maps.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(CoreError::ValueCount {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(CoreError::UndefinedMetric { metric: "cc" });
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// `sum_i gt_i * ln(gt_i / (pred_i + eps) + eps)`, clamped at zero.
pub fn kl(pred: &AttentionMap, gt: &AttentionMap, epsilon: f64) -> Result<f64> {
    pred.ensure_same_shape(gt)?;
    let total: f64 = gt
        .values()
        .iter()
        .zip(pred.values())
        .map(|(g, p)| g * (g / (p + epsilon) + epsilon).ln())
        .sum();
    Ok(total.max(0.0))
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &AttentionMap) -> f64 {
    -p.values()
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

/// Exact earth mover's distance with Euclidean ground distance between cell
/// centers (unit cell side). Grids above [`MAX_TRANSPORT_CELLS`] must be
/// reduced with [`downsample_map`] first.
pub fn emd(p: &AttentionMap, q: &AttentionMap) -> Result<f64> {
    p.ensure_same_shape(q)?;
    let cells = p.len();
    if cells > MAX_TRANSPORT_CELLS {
        return Err(CoreError::GridTooLarge {
            cells,
            limit: MAX_TRANSPORT_CELLS,
        });
    }
    let (sp, sq) = (p.sum(), q.sum());
    if !(sp > 0.0) || !(sq > 0.0) {
        return Err(CoreError::InvalidMap("zero total mass".into()));
    }
    let a: Vec<f64> = p.values().iter().map(|v| v / sp).collect();
    let b: Vec<f64> = q.values().iter().map(|v| v / sq).collect();
    let width = p.width();
    Ok(transport_cost(&a, &b, |i, j| {
        let dr = (i / width) as f64 - (j / width) as f64;
        let dc = (i % width) as f64 - (j % width) as f64;
        (dr * dr + dc * dc).sqrt()
    }))
}

/// Sums mass over `factor x factor` blocks.
pub fn downsample_map(p: &AttentionMap, factor: usize) -> Result<AttentionMap> {
    let (h, w) = p.shape();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(CoreError::IndivisibleDimensions {
            height: h,
            width: w,
            factor,
        });
    }
    if factor == 1 {
        return Ok(p.clone());
    }
    let (oh, ow) = (h / factor, w / factor);
    let mut out = vec![0.0; oh * ow];
    for r in 0..h {
        for c in 0..w {
            out[(r / factor) * ow + c / factor] += p.get(r, c);
        }
    }
    AttentionMap::normalized_or_uniform(oh, ow, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, v: &[f64]) -> AttentionMap {
        AttentionMap::from_values(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn cc_examples() {
        let p = map(1, 4, &[0.1, 0.2, 0.3, 0.4]);
        assert!((cc(&p, &p).unwrap() - 1.0).abs() < 1e-12);
        let affine: Vec<f64> = p.values().iter().map(|v| 3.0 * v + 2.0).collect();
        assert!((pearson(p.values(), &affine).unwrap() - 1.0).abs() < 1e-12);

        // Brute force on four numbers: means 0.25, deviations (0.75,-0.25,-0.25,-0.25)
        // and (-0.25,0.75,-0.25,-0.25); cov = -0.1875 - 0.1875 + 0.0625 + 0.0625 = -0.25,
        // each variance sum 0.75, so cc = -0.25/0.75.
        let a = map(1, 4, &[1.0, 0.0, 0.0, 0.0]);
        let b = map(1, 4, &[0.0, 1.0, 0.0, 0.0]);
        assert!((cc(&a, &b).unwrap() + 1.0 / 3.0).abs() < 1e-12);

        let u = AttentionMap::uniform(1, 4);
        assert_eq!(
            cc(&u, &u),
            Err(CoreError::UndefinedMetric { metric: "cc" })
        );
        assert!(cc(&a, &AttentionMap::uniform(2, 2)).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = AttentionMap::uniform(32, 64);
        assert!(kl(&p, &p, KL_EPSILON).unwrap() <= 2e-6);
        let gt = AttentionMap::delta(32, 64, 5, 9);
        assert!((kl(&p, &gt, KL_EPSILON).unwrap() - 2048f64.ln()).abs() < 1e-3);
        let gt = map(1, 2, &[1.0, 0.0]);
        let pred = map(1, 2, &[0.5, 0.5]);
        assert!((kl(&pred, &gt, KL_EPSILON).unwrap() - 2f64.ln()).abs() < 1e-4);
        assert!(kl(&pred, &AttentionMap::uniform(2, 1), KL_EPSILON).is_err());
    }

    #[test]
    fn kl_grows_as_prediction_leaves_support() {
        let gt = map(1, 2, &[1.0, 0.0]);
        let mut last = -1.0;
        for k in 0..=99 {
            let moved = k as f64 / 100.0;
            let pred = map(1, 2, &[1.0 - moved, moved]);
            let v = kl(&pred, &gt, KL_EPSILON).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&AttentionMap::delta(32, 64, 0, 0)), 0.0);
        assert!((entropy(&AttentionMap::uniform(32, 64)) - 2048f64.ln()).abs() < 1e-9);
        assert!((entropy(&map(1, 2, &[0.5, 0.5])) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn emd_examples() {
        let p = AttentionMap::uniform(4, 4);
        assert_eq!(emd(&p, &p).unwrap(), 0.0);
        let a = map(1, 2, &[1.0, 0.0]);
        let b = map(1, 2, &[0.0, 1.0]);
        assert!((emd(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let a = map(1, 3, &[0.5, 0.5, 0.0]);
        let b = map(1, 3, &[0.0, 0.5, 0.5]);
        assert!((emd(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let big = AttentionMap::uniform(32, 64);
        assert!(matches!(emd(&big, &big), Err(CoreError::GridTooLarge { .. })));
    }

    #[test]
    fn diagonal_move_uses_euclidean_cost() {
        let a = AttentionMap::delta(3, 3, 0, 0);
        let b = AttentionMap::delta(3, 3, 2, 2);
        assert!((emd(&a, &b).unwrap() - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn downsample_examples() {
        let d = AttentionMap::delta(32, 64, 13, 45);
        assert_eq!(downsample_map(&d, 1).unwrap(), d);
        assert_eq!(downsample_map(&d, 4).unwrap(), AttentionMap::delta(8, 16, 3, 11));
        let u = downsample_map(&AttentionMap::uniform(32, 64), 4).unwrap();
        assert!(u.max_abs_diff(&AttentionMap::uniform(8, 16)) < 1e-15);
        assert!((u.sum() - 1.0).abs() < 1e-9);
        assert!(downsample_map(&AttentionMap::uniform(6, 6), 4).is_err());
    }
}
