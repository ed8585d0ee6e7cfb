use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Mass tolerance used by every normalized map crossing a module boundary.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

pub const DEFAULT_MAP_HEIGHT: usize = 32;
pub const DEFAULT_MAP_WIDTH: usize = 64;

/// Probability mass over a `height x width` grid of scene cells.
///
/// Row 0 is the top of the scene and column 0 the left edge. The values are
/// stored row-major. Construction only checks the shape; use
/// [`validate_map`] or [`AttentionMap::normalized`] when the invariants
/// matter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl AttentionMap {
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CoreError::EmptyDimensions { height, width });
        }
        if values.len() != height * width {
            return Err(CoreError::ValueCount {
                expected: height * width,
                actual: values.len(),
            });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    /// Builds a map from a raw density, dividing by its total mass.
    ///
    /// Fails on negative or non-finite cells and on zero total mass.
    pub fn normalized(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let mut map = Self::from_values(height, width, values)?;
        if map.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CoreError::InvalidMap(
                "negative or non-finite cell".to_string(),
            ));
        }
        let total = map.sum();
        if total <= 0.0 {
            return Err(CoreError::InvalidMap("zero total mass".to_string()));
        }
        map.values.iter_mut().for_each(|v| *v /= total);
        Ok(map)
    }

    /// Like [`AttentionMap::normalized`] but falls back to the uniform map
    /// when the density carries no mass.
    pub fn normalized_or_uniform(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let total: f64 = values.iter().sum();
        if total > 0.0 {
            Self::normalized(height, width, values)
        } else {
            Self::from_values(height, width, values)?;
            Ok(Self::uniform(height, width))
        }
    }

    pub fn uniform(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "map dimensions must be positive");
        let n = height * width;
        Self {
            height,
            width,
            values: vec![1.0 / n as f64; n],
        }
    }

    pub fn delta(height: usize, width: usize, row: usize, col: usize) -> Self {
        assert!(row < height && col < width, "delta cell out of bounds");
        let mut values = vec![0.0; height * width];
        values[row * width + col] = 1.0;
        Self {
            height,
            width,
            values,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Cell with the largest value; ties go to the smallest (row, col).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }

    /// Mass-weighted mean (row, col) position.
    pub fn center_of_mass(&self) -> (f64, f64) {
        let total = self.sum();
        let (mut r, mut c) = (0.0, 0.0);
        for (i, v) in self.values.iter().enumerate() {
            r += v * (i / self.width) as f64;
            c += v * (i % self.width) as f64;
        }
        (r / total, c / total)
    }

    pub fn is_valid(&self) -> bool {
        validate_map(self)
    }

    pub fn ensure_same_shape(&self, other: &AttentionMap) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(CoreError::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Largest absolute per-cell difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &AttentionMap) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// True iff every cell is finite and non-negative and the mass sums to one
/// within [`NORMALIZATION_TOLERANCE`].
pub fn validate_map(m: &AttentionMap) -> bool {
    if m.height == 0 || m.width == 0 || m.values.len() != m.height * m.width {
        return false;
    }
    if m.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return false;
    }
    (m.sum() - 1.0).abs() <= NORMALIZATION_TOLERANCE
}

/// Unnormalized grid used for visualization output such as clipped
/// cumulative heatmaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_map_is_valid() {
        let m = AttentionMap::uniform(32, 64);
        assert!(validate_map(&m));
        assert!((m.get(3, 7) - 1.0 / 2048.0).abs() < 1e-15);
    }

    #[test]
    fn negative_cell_is_invalid() {
        let mut values = AttentionMap::uniform(32, 64).into_values();
        values[5] = -0.1;
        let m = AttentionMap::from_values(32, 64, values).unwrap();
        assert!(!validate_map(&m));
    }

    #[test]
    fn overweight_map_is_invalid() {
        let values: Vec<f64> = AttentionMap::uniform(32, 64)
            .into_values()
            .into_iter()
            .map(|v| v * 1.01)
            .collect();
        let total: f64 = values.iter().sum();
        assert!((total - 1.01).abs() < 1e-9);
        let m = AttentionMap::from_values(32, 64, values).unwrap();
        assert!(!validate_map(&m));
    }

    #[test]
    fn validation_does_not_mutate() {
        let m = AttentionMap::delta(4, 4, 1, 2);
        let copy = m.clone();
        assert!(validate_map(&m));
        assert_eq!(m, copy);
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(AttentionMap::from_values(0, 4, vec![]).is_err());
        assert!(AttentionMap::from_values(2, 2, vec![0.25; 3]).is_err());
    }

    #[test]
    fn zero_mass_is_invalid_but_has_uniform_fallback() {
        assert!(AttentionMap::normalized(2, 2, vec![0.0; 4]).is_err());
        let m = AttentionMap::normalized_or_uniform(2, 2, vec![0.0; 4]).unwrap();
        assert_eq!(m, AttentionMap::uniform(2, 2));
    }

    #[test]
    fn argmax_breaks_ties_lexicographically() {
        let m = AttentionMap::uniform(3, 5);
        assert_eq!(m.argmax(), (0, 0));
        let m = AttentionMap::normalized(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(m.argmax(), (0, 1));
    }
}
