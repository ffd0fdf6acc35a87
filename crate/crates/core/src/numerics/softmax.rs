//! Softmax over masked groups.
//!
//! Every variant subtracts the group maximum before exponentiating.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Each row is one group.
    Row,
    /// Each column is one group.
    Column,
}

/// Softmax of `scores` restricted to entries where `mask` is true.
///
/// Masked entries are exactly zero. A group with no unmasked entry is an
/// error because it cannot be normalized.
pub fn masked_softmax(scores: &Matrix, mask: &[bool], axis: Axis) -> Result<Matrix> {
    if mask.len() != scores.len() {
        return Err(Error::ShapeMismatch {
            context: "masked_softmax",
            expected: format!("{} mask entries", scores.len()),
            actual: format!("{}", mask.len()),
        });
    }
    let (rows, cols) = scores.shape();
    let (groups, width) = match axis {
        Axis::Row => (rows, cols),
        Axis::Column => (cols, rows),
    };
    let flat = |g: usize, j: usize| match axis {
        Axis::Row => g * cols + j,
        Axis::Column => j * cols + g,
    };
    let values = scores.as_slice();
    let mut out = Matrix::zeros(rows, cols);
    for g in 0..groups {
        let mut max = f64::NEG_INFINITY;
        for j in 0..width {
            let p = flat(g, j);
            if mask[p] {
                max = max.max(values[p]);
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::DegenerateGroup { group: g });
        }
        let mut total = 0.0;
        for j in 0..width {
            let p = flat(g, j);
            if mask[p] {
                let e = (values[p] - max).exp();
                out.as_mut_slice()[p] = e;
                total += e;
            }
        }
        for j in 0..width {
            let p = flat(g, j);
            if mask[p] {
                out.as_mut_slice()[p] /= total;
            }
        }
    }
    Ok(out)
}

/// In-place softmax of each contiguous segment `values[ptr[g]..ptr[g+1]]`.
pub(crate) fn segment_softmax(values: &mut [f64], ptr: &[usize]) -> Result<()> {
    for g in 0..ptr.len().saturating_sub(1) {
        let seg = &mut values[ptr[g]..ptr[g + 1]];
        if seg.is_empty() {
            return Err(Error::DegenerateGroup { group: g });
        }
        let max = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in seg.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in seg.iter_mut() {
            *v /= total;
        }
    }
    Ok(())
}

/// Softmax of every row.
pub fn row_softmax(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    let cols = m.cols();
    if cols == 0 {
        return out;
    }
    let ptr: Vec<usize> = (0..=m.rows()).map(|r| r * cols).collect();
    segment_softmax(out.as_mut_slice(), &ptr).expect("rows are non-empty");
    out
}
