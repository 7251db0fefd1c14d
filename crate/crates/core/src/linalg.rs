//! Ridge-regularised dense solves and order-stable parallel reductions.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Paths per reduction chunk. Fixed so that summation order never depends
/// on the number of worker threads.
const CHUNK: usize = 1024;

/// Outcome of one regularised normal-equation solve.
#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub x: DVector<f64>,
    /// 1-norm condition estimate of the regularised matrix.
    pub condition: f64,
}

/// Solves `(A + εI) x = b` by LU with partial pivoting.
///
/// Returns `Err(condition)` when the factorisation is singular or the
/// solution is not finite.
pub fn ridge_solve(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<RidgeSolution, f64> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    debug_assert_eq!(n, b.len());
    let mut reg = a.clone();
    for i in 0..n {
        reg[(i, i)] += ridge;
    }
    let norm = one_norm(&reg);
    let lu = reg.clone().lu();
    let Some(inverse) = lu.try_inverse() else {
        return Err(f64::INFINITY);
    };
    let condition = norm * one_norm(&inverse);
    let Some(x) = lu.solve(b) else {
        return Err(condition);
    };
    // one step of iterative refinement against the regularised system
    let residual = b - &reg * &x;
    let x = match lu.solve(&residual) {
        Some(correction) => x + correction,
        None => x,
    };
    if !condition.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(condition);
    }
    Ok(RidgeSolution { x, condition })
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Sums per-path contributions into a buffer of `width` accumulators.
///
/// `accumulate(k, buf)` adds path `k`'s contribution into `buf`. Paths are
/// grouped into fixed-size chunks processed in parallel, and chunk partials
/// are combined by a pairwise tree in chunk order, so the result is
/// bit-identical for any thread count.
pub fn accumulate_paths<F>(n_paths: usize, width: usize, accumulate: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let n_chunks = n_paths.div_ceil(CHUNK).max(1);
    let partials: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut buf = vec![0.0; width];
            let end = ((c + 1) * CHUNK).min(n_paths);
            for k in c * CHUNK..end {
                accumulate(k, &mut buf);
            }
            buf
        })
        .collect();
    pairwise_sum(partials)
}

fn pairwise_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut iter = parts.into_iter();
        while let Some(mut a) = iter.next() {
            if let Some(b) = iter.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Mean of a column, using the pairwise chunk reduction.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    accumulate_paths(values.len(), 1, |k, buf| buf[0] += values[k])[0] / values.len() as f64
}
