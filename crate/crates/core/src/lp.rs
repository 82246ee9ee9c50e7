//! Dense two-phase tableau simplex.
//!
//! Problems are `min c·x + offset` subject to `A x <= b`, `E x = f`, `x >= 0`.
//! Pricing is Dantzig's rule with lowest-index tie-breaking; after a run of
//! degenerate pivots the solver switches to Bland's rule until the objective
//! moves again, which rules out cycling. Everything is deterministic for a
//! given input.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;

/// Pivots that leave the objective unchanged before Bland's rule kicks in.
const DEGENERATE_STREAK: usize = 25;
const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    /// Constant added to the objective value; it does not affect the optimum.
    pub objective_offset: f64,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
}

impl LpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            objective_offset: 0.0,
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.a_ub.len() != self.b_ub.len() || self.a_eq.len() != self.b_eq.len() {
            return Err(Error::MalformedProgram("row count differs from rhs length".into()));
        }
        for row in self.a_ub.iter().chain(&self.a_eq) {
            if row.len() != n {
                return Err(Error::MalformedProgram(format!(
                    "constraint row has {} coefficients, expected {n}",
                    row.len()
                )));
            }
        }
        let finite = self
            .objective
            .iter()
            .chain(self.a_ub.iter().flatten())
            .chain(self.a_eq.iter().flatten())
            .chain(&self.b_ub)
            .chain(&self.b_eq)
            .all(|v| v.is_finite())
            && self.objective_offset.is_finite();
        if !finite {
            return Err(Error::MalformedProgram("non-finite entry".into()));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.objective_offset
    }

    /// Largest violation of any constraint or nonnegativity bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        let ub = self.a_ub.iter().zip(&self.b_ub).map(|(r, b)| dot(r) - b);
        let eq = self.a_eq.iter().zip(&self.b_eq).map(|(r, f)| (dot(r) - f).abs());
        let lb = x.iter().map(|v| -v);
        ub.chain(eq).chain(lb).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

struct Tableau {
    rows: usize,
    cols: usize,
    cells: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    reduced: Vec<f64>,
    /// Negated objective value of the current basis.
    value: f64,
    n_struct: usize,
    first_artificial: usize,
    iterations: usize,
}

enum Phase {
    Done,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn build(p: &LpProblem) -> Self {
        let n = p.n_vars();
        let m1 = p.a_ub.len();
        let m2 = p.a_eq.len();
        let rows = m1 + m2;
        let needs_art: Vec<bool> = p
            .b_ub
            .iter()
            .map(|&b| b < 0.0)
            .chain(std::iter::repeat(true).take(m2))
            .collect();
        let n_art = needs_art.iter().filter(|&&a| a).count();
        let first_artificial = n + m1;
        let cols = n + m1 + n_art;
        let mut cells = vec![0.0; rows * cols];
        let mut rhs = vec![0.0; rows];
        let mut basis = vec![0; rows];
        let mut next_art = first_artificial;
        for i in 0..rows {
            let (coefs, b, slack) = if i < m1 {
                (&p.a_ub[i], p.b_ub[i], Some(n + i))
            } else {
                (&p.a_eq[i - m1], p.b_eq[i - m1], None)
            };
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            let row = &mut cells[i * cols..(i + 1) * cols];
            for (j, &a) in coefs.iter().enumerate() {
                row[j] = sign * a;
            }
            if let Some(s) = slack {
                row[s] = sign;
            }
            rhs[i] = sign * b;
            if needs_art[i] {
                row[next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            } else {
                basis[i] = slack.expect("rows without artificials are inequalities");
            }
        }
        Self {
            rows,
            cols,
            cells,
            rhs,
            basis,
            reduced: vec![0.0; cols],
            value: 0.0,
            n_struct: n,
            first_artificial,
            iterations: 0,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.cells[i * self.cols..(i + 1) * self.cols]
    }

    fn set_costs(&mut self, costs: &[f64]) {
        self.reduced = costs.to_vec();
        self.value = 0.0;
        for i in 0..self.rows {
            let cb = costs[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.cols {
                    self.reduced[j] -= cb * self.cells[i * self.cols + j];
                }
                self.value -= cb * self.rhs[i];
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let inv = 1.0 / self.cells[r * cols + q];
        let mut nz = Vec::new();
        for j in 0..cols {
            let v = &mut self.cells[r * cols + j];
            if *v != 0.0 {
                *v *= inv;
                nz.push(j);
            }
        }
        self.cells[r * cols + q] = 1.0;
        self.rhs[r] *= inv;
        let (pivot_rhs, pivot_row) = (self.rhs[r], self.cells[r * cols..(r + 1) * cols].to_vec());
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.cells[i * cols + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.cells[i * cols..(i + 1) * cols];
            for &j in &nz {
                row[j] -= f * pivot_row[j];
            }
            row[q] = 0.0;
            self.rhs[i] -= f * pivot_rhs;
            if self.rhs[i] < 0.0 && self.rhs[i] > -1e-12 {
                self.rhs[i] = 0.0;
            }
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for &j in &nz {
                self.reduced[j] -= f * pivot_row[j];
            }
            self.reduced[q] = 0.0;
            self.value -= f * pivot_rhs;
        }
        self.basis[r] = q;
        self.iterations += 1;
    }

    fn run(&mut self, allowed: usize, tol: f64, max_iters: usize) -> Phase {
        let mut streak = 0usize;
        loop {
            if self.iterations >= max_iters {
                return Phase::IterationLimit;
            }
            let bland = streak >= DEGENERATE_STREAK;
            let mut entering = None;
            let mut best = -tol;
            for j in 0..allowed {
                let d = self.reduced[j];
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                return Phase::Done;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.cells[i * self.cols + q];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i].max(0.0) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((r, best_ratio)) => {
                            let slack = 1e-12 * (1.0 + best_ratio.abs());
                            if ratio < best_ratio - slack
                                || (ratio <= best_ratio + slack && self.basis[i] < self.basis[r])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Phase::Unbounded;
            };
            if ratio <= tol {
                streak += 1;
            } else {
                streak = 0;
            }
            self.pivot(r, q);
        }
    }

    /// Pivots basic artificials out after phase one; rows that only involve
    /// artificials are redundant and dropped.
    fn expel_artificials(&mut self) {
        let mut i = 0;
        while i < self.rows {
            if self.basis[i] >= self.first_artificial {
                let row = self.row(i);
                let q = (0..self.first_artificial)
                    .filter(|&j| row[j].abs() > 1e-9)
                    .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()).then(b.cmp(&a)));
                match q {
                    Some(q) => self.pivot(i, q),
                    None => {
                        self.cells.drain(i * self.cols..(i + 1) * self.cols);
                        self.rhs.remove(i);
                        self.basis.remove(i);
                        self.rows -= 1;
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_struct];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                x[b] = self.rhs[i];
            }
        }
        x
    }

    fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tableau {} rows x {} cols (+rhs)", self.rows, self.cols);
        let _ = write!(out, "obj  ");
        for v in &self.reduced {
            let _ = write!(out, " {v:>10.4}");
        }
        let _ = writeln!(out, " | {:>10.4}", self.value);
        for i in 0..self.rows {
            let _ = write!(out, "b{:<3} ", self.basis[i]);
            for v in self.row(i) {
                let _ = write!(out, " {v:>10.4}");
            }
            let _ = writeln!(out, " | {:>10.4}", self.rhs[i]);
        }
        out
    }
}

/// Plain-text dump of the initial phase-one tableau.
pub fn tableau_dump(p: &LpProblem) -> Result<String> {
    p.validate()?;
    let mut t = Tableau::build(p);
    let mut costs = vec![0.0; t.cols];
    for c in costs.iter_mut().skip(t.first_artificial) {
        *c = 1.0;
    }
    t.set_costs(&costs);
    Ok(t.dump())
}

pub fn solve_lp(p: &LpProblem, tol: f64, max_iters: usize) -> Result<LpSolution> {
    p.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let n = p.n_vars();
    let mut t = Tableau::build(p);
    let finish = |t: &Tableau, status: LpStatus| {
        let x = t.primal();
        LpSolution { status, objective: p.evaluate(&x), x, iterations: t.iterations }
    };

    if t.cols > t.first_artificial {
        let mut costs = vec![0.0; t.cols];
        for c in costs.iter_mut().skip(t.first_artificial) {
            *c = 1.0;
        }
        t.set_costs(&costs);
        match t.run(t.cols, tol, max_iters) {
            Phase::IterationLimit => return Ok(finish(&t, LpStatus::IterationLimit)),
            Phase::Unbounded => unreachable!("phase one is bounded below by zero"),
            Phase::Done => {}
        }
        let scale = 1.0 + t.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if -t.value > 1e-7 * scale {
            return Ok(finish(&t, LpStatus::Infeasible));
        }
        t.expel_artificials();
    }

    let mut costs = vec![0.0; t.cols];
    costs[..n].copy_from_slice(&p.objective);
    t.set_costs(&costs);
    let status = match t.run(t.first_artificial, tol, max_iters) {
        Phase::Done => LpStatus::Optimal,
        Phase::Unbounded => LpStatus::Unbounded,
        Phase::IterationLimit => LpStatus::IterationLimit,
    };
    Ok(finish(&t, status))
}
