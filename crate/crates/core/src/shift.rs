//! Integer re-centering of attention maps: windowed density peaks and
//! translation.

use std::collections::VecDeque;

use crate::error::{CoreError, Result};
use crate::map::AttentionMap;

/// `(row_delta, col_delta)` in cells; positive moves mass down and right.
pub type Offset = (i64, i64);

/// Offset clamp on a 32x64 grid.
pub const DEFAULT_MAX_OFFSET: usize = 12;

/// Reference cell that the coarse stage moves the density peak onto.
pub fn center_cell(height: usize, width: usize) -> (usize, usize) {
    (height / 2, width / 2)
}

/// Offset from the peak of the window's mean map to the grid center,
/// clamped per component to `[-max_offset, max_offset]`.
pub fn coarse_offset(window: &[AttentionMap], max_offset: usize) -> Result<Offset> {
    let first = window.first().ok_or(CoreError::Empty("calibration window"))?;
    let mut acc = vec![0.0; first.len()];
    for m in window {
        first.ensure_same_shape(m)?;
        for (a, v) in acc.iter_mut().zip(m.values()) {
            *a += v;
        }
    }
    Ok(offset_from_sum(&acc, first.height(), first.width(), max_offset))
}

fn offset_from_sum(acc: &[f64], height: usize, width: usize, max_offset: usize) -> Offset {
    let mut best = 0;
    for (i, v) in acc.iter().enumerate() {
        if *v > acc[best] {
            best = i;
        }
    }
    let (pr, pc) = (best / width, best % width);
    let (cr, cc) = center_cell(height, width);
    let m = max_offset as i64;
    (
        (cr as i64 - pr as i64).clamp(-m, m),
        (cc as i64 - pc as i64).clamp(-m, m),
    )
}

/// Translates `m` by whole cells. Mass shifted past a border is dropped and
/// vacated cells are zero; the result is renormalized, falling back to the
/// uniform map when nothing remains.
pub fn apply_shift(m: &AttentionMap, offset: Offset) -> AttentionMap {
    let (h, w) = m.shape();
    if offset == (0, 0) {
        return m.clone();
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        let nr = r as i64 + offset.0;
        if nr < 0 || nr >= h as i64 {
            continue;
        }
        for c in 0..w {
            let nc = c as i64 + offset.1;
            if nc < 0 || nc >= w as i64 {
                continue;
            }
            out[nr as usize * w + nc as usize] = m.get(r, c);
        }
    }
    AttentionMap::normalized_or_uniform(h, w, out).expect("shape preserved")
}

/// Causal running aggregate over the most recent `capacity` maps.
///
/// One instance serves one session; push maps in frame order.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    capacity: usize,
    max_offset: usize,
    maps: VecDeque<AttentionMap>,
    sum: Vec<f64>,
}

impl SlidingWindow {
    pub fn new(capacity: usize, max_offset: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(CoreError::InvalidConfig("window must hold at least one map".into()));
        }
        Ok(Self {
            capacity,
            max_offset,
            maps: VecDeque::with_capacity(capacity),
            sum: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Adds a map and returns the offset for the window ending at it.
    pub fn push(&mut self, m: AttentionMap) -> Result<Offset> {
        if let Some(front) = self.maps.front() {
            front.ensure_same_shape(&m)?;
        } else {
            self.sum = vec![0.0; m.len()];
        }
        let (h, w) = m.shape();
        if self.maps.len() == self.capacity {
            // Summing afresh keeps results identical to `coarse_offset` on the
            // same window, ties included.
            self.maps.pop_front();
            self.maps.push_back(m);
            self.recompute();
        } else {
            for (s, v) in self.sum.iter_mut().zip(m.values()) {
                *s += v;
            }
            self.maps.push_back(m);
        }
        Ok(offset_from_sum(&self.sum, h, w, self.max_offset))
    }

    fn recompute(&mut self) {
        self.sum.iter_mut().for_each(|s| *s = 0.0);
        for m in &self.maps {
            for (s, v) in self.sum.iter_mut().zip(m.values()) {
                *s += v;
            }
        }
    }
}
