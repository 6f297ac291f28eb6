//! Spectral angle distance, abundance RMSE and endmember matching.

use crate::error::{Error, Result};
use crate::linalg::{dot, l2, Matrix};

const MAX_MATCH_K: usize = 12;
const EXHAUSTIVE_MAX_K: usize = 8;

/// Spectral angle between two spectra, in radians.
pub fn sad(m: &[f64], m_hat: &[f64]) -> Result<f64> {
    if m.len() != m_hat.len() {
        return Err(Error::invalid(format!(
            "sad: length mismatch {} vs {}",
            m.len(),
            m_hat.len()
        )));
    }
    let (na, nb) = (l2(m), l2(m_hat));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("sad of a zero spectrum is undefined"));
    }
    Ok((dot(m, m_hat) / (na * nb)).clamp(-1.0, 1.0).acos())
}

/// `sqrt(mean((a - a_hat)^2))`.
pub fn rmse(a: &[f64], a_hat: &[f64]) -> Result<f64> {
    if a.len() != a_hat.len() || a.is_empty() {
        return Err(Error::invalid(format!(
            "rmse: lengths {} and {} must match and be >= 1",
            a.len(),
            a_hat.len()
        )));
    }
    let sq = a
        .iter()
        .zip(a_hat)
        .fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y));
    Ok((sq / a.len() as f64).sqrt())
}

/// `assignment[t]` is the estimated endmember paired with truth column `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn identity(k: usize) -> Self {
        Self((0..k).collect())
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.0.len()];
        self.0
            .iter()
            .all(|&e| e < seen.len() && !std::mem::replace(&mut seen[e], true))
    }
}

fn sad_cost(m_true: &Matrix, m_est: &Matrix) -> Result<Vec<Vec<f64>>> {
    let k = m_true.cols();
    let truth: Vec<_> = (0..k).map(|c| m_true.col(c)).collect();
    let est: Vec<_> = (0..k).map(|c| m_est.col(c)).collect();
    truth
        .iter()
        .map(|t| est.iter().map(|e| sad(t, e)).collect())
        .collect()
}

/// Pairs estimated endmembers with true ones so total SAD is minimal.
///
/// Enumerates all permutations for `K <= 8` (first minimum in lexicographic
/// order wins ties) and runs the Hungarian algorithm for `9 <= K <= 12`.
pub fn match_endmembers(m_true: &Matrix, m_est: &Matrix) -> Result<Assignment> {
    if m_true.shape() != m_est.shape() {
        return Err(Error::Shape {
            op: "match_endmembers",
            left: m_true.shape(),
            right: m_est.shape(),
        });
    }
    let k = m_true.cols();
    if k == 0 || k > MAX_MATCH_K {
        return Err(Error::invalid(format!(
            "matching supports 1..={MAX_MATCH_K} endmembers, got {k}"
        )));
    }
    let cost = sad_cost(m_true, m_est)?;
    Ok(if k <= EXHAUSTIVE_MAX_K {
        exhaustive(&cost)
    } else {
        hungarian(&cost)
    })
}

fn exhaustive(cost: &[Vec<f64>]) -> Assignment {
    let k = cost.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let c = perm
            .iter()
            .enumerate()
            .fold(0.0, |acc, (t, &e)| acc + cost[t][e]);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&perm);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Assignment(best)
}

/// Advances to the next permutation in lexicographic order.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Kuhn-Munkres with row/column potentials, `O(K^3)`.
fn hungarian(cost: &[Vec<f64>]) -> Assignment {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // way/p are 1-based; p[j] is the row matched to column j
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    Assignment(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub assignment: Assignment,
    /// Per true endmember, radians.
    pub sad: Vec<f64>,
    pub rmse: Vec<f64>,
    pub mean_sad: f64,
    pub mean_rmse: f64,
}

/// Matches endmembers by SAD, then scores each pair: SAD on columns of `M`,
/// RMSE on rows of `A`.
pub fn evaluate(truth: (&Matrix, &Matrix), est: (&Matrix, &Matrix)) -> Result<EvalReport> {
    let (m_true, a_true) = truth;
    let (m_est, a_est) = est;
    if a_true.shape() != a_est.shape() || a_true.rows() != m_true.cols() {
        return Err(Error::Shape {
            op: "evaluate",
            left: a_true.shape(),
            right: a_est.shape(),
        });
    }
    let assignment = match_endmembers(m_true, m_est)?;
    let mut sads = Vec::with_capacity(assignment.0.len());
    let mut rmses = Vec::with_capacity(assignment.0.len());
    for (t, &e) in assignment.0.iter().enumerate() {
        sads.push(sad(&m_true.col(t), &m_est.col(e))?);
        rmses.push(rmse(a_true.row(t), a_est.row(e))?);
    }
    let k = sads.len() as f64;
    Ok(EvalReport {
        mean_sad: sads.iter().sum::<f64>() / k,
        mean_rmse: rmses.iter().sum::<f64>() / k,
        assignment,
        sad: sads,
        rmse: rmses,
    })
}
