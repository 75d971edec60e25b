//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Only meant for the small instances built in [`crate::collections`]; every
//! row gets its own artificial column so the final tableau carries `B^-1`,
//! from which row duals (or a Farkas vector on infeasibility) are read off.

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-11;
/// Absolute feasibility tolerance on the phase-one objective.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    /// Feasible; with a nonzero objective, also optimal.
    Feasible,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    pub primal: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Row duals when feasible, a Farkas vector when infeasible, a primal ray
    /// when unbounded.
    pub certificate: Option<Vec<f64>>,
}

impl LpResult {
    pub fn is_feasible(&self) -> bool {
        self.status == LpStatus::Feasible
    }
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<f64>,
    rel: Relation,
    rhs: f64,
}

/// `minimize c^T x` subject to linear rows; variables are nonnegative unless
/// marked free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    n_vars: usize,
    free: Vec<bool>,
    cost: Vec<f64>,
    rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        LinearProgram { n_vars, free: vec![false; n_vars], cost: vec![0.0; n_vars], rows: Vec::new() }
    }

    pub fn set_free(&mut self, var: usize) -> &mut Self {
        self.free[var] = true;
        self
    }

    pub fn minimize(&mut self, cost: Vec<f64>) -> &mut Self {
        assert_eq!(cost.len(), self.n_vars);
        self.cost = cost;
        self
    }

    pub fn maximize(&mut self, gain: Vec<f64>) -> &mut Self {
        self.minimize(gain.into_iter().map(|g| -g).collect())
    }

    pub fn constraint(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.n_vars);
        self.rows.push(Row { coeffs, rel, rhs });
        self
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Largest violation of any row or sign constraint at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            if !self.free[j] {
                worst = worst.max(-v);
            }
        }
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let d = lhs - row.rhs;
            worst = worst.max(match row.rel {
                Relation::Le => d,
                Relation::Ge => -d,
                Relation::Eq => d.abs(),
            });
        }
        worst
    }

    pub fn solve(&self) -> LpResult {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    m: usize,
    /// structural + slack columns; artificials follow.
    n_struct: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    flipped: Vec<bool>,
    /// expanded column -> (original var, sign)
    column_map: Vec<Option<(usize, f64)>>,
    cost: Vec<f64>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let mut column_map = Vec::new();
        let mut first_col = Vec::with_capacity(lp.n_vars);
        for j in 0..lp.n_vars {
            first_col.push(column_map.len());
            column_map.push(Some((j, 1.0)));
            if lp.free[j] {
                column_map.push(Some((j, -1.0)));
            }
        }
        let n_slack = lp.rows.iter().filter(|r| r.rel != Relation::Eq).count();
        let n_cols_var = column_map.len();
        column_map.extend(std::iter::repeat_n(None, n_slack));
        let n_struct = column_map.len();
        let m = lp.rows.len();
        let width = n_struct + m + 1;
        let mut data = vec![0.0; m * width];
        let mut flipped = vec![false; m];
        let mut slack = n_cols_var;
        for (i, row) in lp.rows.iter().enumerate() {
            let r = &mut data[i * width..(i + 1) * width];
            for j in 0..lp.n_vars {
                let c = first_col[j];
                r[c] = row.coeffs[j];
                if lp.free[j] {
                    r[c + 1] = -row.coeffs[j];
                }
            }
            match row.rel {
                Relation::Le => {
                    r[slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    r[slack] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            r[width - 1] = row.rhs;
            if row.rhs < 0.0 {
                flipped[i] = true;
                for v in r.iter_mut() {
                    *v = -*v;
                }
            }
            r[n_struct + i] = 1.0;
        }
        let mut cost = vec![0.0; n_struct + m];
        for (c, map) in column_map.iter().enumerate() {
            if let Some((j, sign)) = map {
                cost[c] = sign * lp.cost[*j];
            }
        }
        Tableau {
            m,
            n_struct,
            width,
            data,
            basis: (n_struct..n_struct + m).collect(),
            flipped,
            column_map,
            cost,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.data[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, row: usize, col: usize, reduced: &mut [f64]) {
        let w = self.width;
        let p = self.data[row * w + col];
        for v in &mut self.data[row * w..(row + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[row * w..(row + 1) * w].to_vec();
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let f = self.data[i * w + col];
            if f != 0.0 {
                let r = &mut self.data[i * w..(i + 1) * w];
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                r[col] = 0.0;
            }
        }
        let f = reduced[col];
        if f != 0.0 {
            for (v, pv) in reduced.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            reduced[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Reduced costs (last entry: minus the objective value) for `cost`.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        d.push(0.0);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (j, v) in d.iter_mut().enumerate() {
                    *v -= cb * self.at(i, j);
                }
            }
        }
        d
    }

    /// Bland's rule iterations. Returns the unbounded entering column, if any.
    fn iterate(&mut self, reduced: &mut [f64], allowed: usize) -> Option<usize> {
        loop {
            let enter = (0..allowed).find(|&j| reduced[j] < -COST_TOL)?;
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, enter);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-14
                                || (ratio <= best + 1e-14 && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((row, _)) => self.pivot(row, enter, reduced),
                None => return Some(enter),
            }
        }
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|k| {
                let y: f64 = (0..self.m).map(|i| cost[self.basis[i]] * self.at(i, self.n_struct + k)).sum();
                if self.flipped[k] {
                    -y
                } else {
                    y
                }
            })
            .collect()
    }

    fn run(mut self, lp: &LinearProgram) -> LpResult {
        let total = self.n_struct + self.m;
        let mut phase1 = vec![0.0; total];
        for c in &mut phase1[self.n_struct..] {
            *c = 1.0;
        }
        let mut reduced = self.reduced_costs(&phase1);
        self.iterate(&mut reduced, self.n_struct);
        let infeasibility: f64 = (0..self.m).filter(|&i| self.basis[i] >= self.n_struct).map(|i| self.rhs(i)).sum();
        if infeasibility > FEAS_TOL {
            return LpResult {
                status: LpStatus::Infeasible,
                primal: None,
                objective: None,
                certificate: Some(self.duals(&phase1)),
            };
        }

        for i in 0..self.m {
            if self.basis[i] >= self.n_struct {
                if let Some(j) = (0..self.n_struct).find(|&j| self.at(i, j).abs() > PIVOT_TOL) {
                    self.pivot(i, j, &mut reduced);
                }
            }
        }

        let cost = self.cost.clone();
        let mut reduced = self.reduced_costs(&cost);
        if let Some(col) = self.iterate(&mut reduced, self.n_struct) {
            let mut ray = vec![0.0; lp.n_vars];
            if let Some((j, s)) = self.column_map[col] {
                ray[j] += s;
            }
            for i in 0..self.m {
                if let Some((j, s)) = self.column_map.get(self.basis[i]).copied().flatten() {
                    ray[j] -= s * self.at(i, col);
                }
            }
            return LpResult { status: LpStatus::Unbounded, primal: None, objective: None, certificate: Some(ray) };
        }

        let mut x = vec![0.0; lp.n_vars];
        for i in 0..self.m {
            if let Some((j, s)) = self.column_map.get(self.basis[i]).copied().flatten() {
                x[j] += s * self.rhs(i);
            }
        }
        let objective = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpResult {
            status: LpStatus::Feasible,
            certificate: Some(self.duals(&cost)),
            primal: Some(x),
            objective: Some(objective),
        }
    }
}
