//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..n {
                        a[row][k] -= f * a[col][k];
                    }
                    b[row] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    go(0, n, k, &mut Vec::new(), f);
}

/// Maximum of `c x` over `{x >= 0, a x <= b}` by enumerating every basic
/// solution. The region must be bounded. `None` when infeasible.
pub fn vertex_max(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = c.len();
    let mut rows: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = -1.0;
        rows.push((e, 0.0));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    combinations(rows.len(), n, &mut |idx| {
        let sa: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].0.clone()).collect();
        let sb: Vec<f64> = idx.iter().map(|&i| rows[i].1).collect();
        let Some(x) = solve_square(sa, sb) else { return };
        let feasible = rows.iter().all(|(r, rhs)| r.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= rhs + 1e-9);
        if feasible {
            let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
            if best.as_ref().map_or(true, |(bv, _)| v > *bv + 1e-12) {
                best = Some((v, x));
            }
        }
    });
    best
}

/// Minimum mean abstention for the rows `hyps` at budget `eta`, from the
/// unreduced program over `(xi, zeta)` solved by vertex enumeration.
pub fn crp_vertex_phi(hyps: &[Vec<i8>], eta: f64) -> f64 {
    let m = hyps[0].len();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for h in hyps {
        let mut row = vec![0.0; 2 * m];
        for i in 0..m {
            if h[i] == 1 {
                row[m + i] = 1.0;
            } else {
                row[i] = 1.0;
            }
        }
        a.push(row);
        b.push(eta * m as f64);
    }
    for i in 0..m {
        let mut row = vec![0.0; 2 * m];
        row[i] = 1.0;
        row[m + i] = 1.0;
        a.push(row);
        b.push(1.0);
    }
    let (cover, _) = vertex_max(&a, &b, &vec![1.0; 2 * m]).expect("zero is feasible");
    1.0 - cover / m as f64
}

pub fn random_rows<R: Rng>(rng: &mut R, n: usize, m: usize) -> Vec<Vec<i8>> {
    (0..n).map(|_| (0..m).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect()).collect()
}

/// Largest fraction of columns on which two rows differ.
pub fn max_pairwise_disagreement(rows: &[Vec<i8>]) -> f64 {
    let m = rows[0].len() as f64;
    let mut best = 0.0f64;
    for a in rows {
        for b in rows {
            let d = a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / m;
            best = best.max(d);
        }
    }
    best
}
