//! Dense two-phase primal simplex. Dantzig's rule picks the entering column;
//! after a run of degenerate pivots Bland's rule takes over until progress
//! resumes, which rules out cycling.
//!
//! Solves `minimize c·x subject to rows, x >= 0`. Sized for the selection
//! problems here (a few hundred rows), not for general use.

use thiserror::Error;

const EPS: f64 = 1e-9;
const FEASIBILITY_TOL: f64 = 1e-7;
const MAX_PIVOTS: usize = 200_000;
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self { coeffs, relation, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("pivot limit reached")]
    PivotLimit,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    /// Pivots on `(r, c)`, also eliminating column `c` from `obj`.
    fn pivot(&mut self, r: usize, c: usize, obj: Option<&mut Vec<f64>>) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = std::mem::take(&mut self.rows[r]);
        // Pivot rows are sparse; touch only their nonzero columns.
        let nonzero: Vec<(usize, f64)> = pivot_row.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        let eliminate = |row: &mut Vec<f64>| {
            let f = row[c];
            if f != 0.0 {
                for &(j, pv) in &nonzero {
                    row[j] -= f * pv;
                }
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        if let Some(obj) = obj {
            eliminate(obj);
        }
        self.rows[r] = pivot_row;
        self.basis[r] = c;
    }

    /// Runs primal simplex for `cost` over columns where `allowed` is true.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<(), LpError> {
        // Reduced costs, kept current by every pivot.
        let mut obj: Vec<f64> = cost.iter().copied().chain([0.0]).collect();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                obj.iter_mut().zip(&self.rows[i]).for_each(|(o, v)| *o -= cb * v);
            }
        }
        let mut streak = 0;
        for _ in 0..MAX_PIVOTS {
            let candidates = (0..self.width).filter(|&j| allowed[j] && obj[j] < -EPS);
            let entering = if streak >= DEGENERATE_STREAK {
                candidates.min()
            } else {
                candidates.min_by(|&a, &b| obj[a].total_cmp(&obj[b]).then(a.cmp(&b)))
            };
            let Some(c) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a <= EPS {
                    continue;
                }
                let ratio = self.rhs(i) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - EPS || (ratio <= lr + EPS && self.basis[i] < self.basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else { return Err(LpError::Unbounded) };
            streak = if ratio <= EPS { streak + 1 } else { 0 };
            self.pivot(r, c, Some(&mut obj));
        }
        Err(LpError::PivotLimit)
    }
}

pub fn minimize(c: &[f64], constraints: &[Constraint]) -> Result<LpSolution, LpError> {
    let n = c.len();
    let m = constraints.len();
    let n_slack = constraints.iter().filter(|k| k.relation != Relation::Eq).count();
    let n_art = constraints.iter().filter(|k| k.relation != Relation::Le || k.rhs < 0.0).count();
    let width = n + n_slack + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut is_art = vec![false; width];
    let (mut next_slack, mut next_art) = (n, n + n_slack);
    for k in constraints {
        assert_eq!(k.coeffs.len(), n, "constraint width must match objective");
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(&k.coeffs);
        row[width] = k.rhs;
        let mut rel = k.relation;
        if k.rhs < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
            rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        match rel {
            Relation::Le => {
                row[next_slack] = 1.0;
                if k.rhs < 0.0 {
                    // Sign flip turned a >= into <=; it still owns an artificial column, unused.
                    next_art += 1;
                }
                basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
                row[next_art] = 1.0;
                is_art[next_art] = true;
                basis.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                row[next_art] = 1.0;
                is_art[next_art] = true;
                basis.push(next_art);
                next_art += 1;
            }
        }
        rows.push(row);
    }
    let mut t = Tableau { rows, basis, width };

    if is_art.iter().any(|a| *a) {
        let cost: Vec<f64> = is_art.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
        t.optimize(&cost, &vec![true; width])?;
        let infeasibility: f64 = (0..t.rows.len()).filter(|&i| is_art[t.basis[i]]).map(|i| t.rhs(i)).sum();
        if infeasibility > FEASIBILITY_TOL {
            return Err(LpError::Infeasible);
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < t.rows.len() {
            if is_art[t.basis[i]] {
                match (0..width).find(|&j| !is_art[j] && t.rows[i][j].abs() > EPS) {
                    Some(j) => t.pivot(i, j, None),
                    None => {
                        t.rows.remove(i);
                        t.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(c);
    let allowed: Vec<bool> = is_art.iter().map(|a| !a).collect();
    t.optimize(&cost, &allowed)?;

    let mut x = vec![0.0; n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs(i).max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(LpSolution { x, objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn textbook_minimum() {
        // min -x - y s.t. x + 2y <= 4, 3x + y <= 6 -> x = 1.6, y = 1.2
        let sol = minimize(
            &[-1.0, -1.0],
            &[
                Constraint::new(vec![1.0, 2.0], Relation::Le, 4.0),
                Constraint::new(vec![3.0, 1.0], Relation::Le, 6.0),
            ],
        )
        .unwrap();
        assert!((sol.x[0] - 1.6).abs() < 1e-9 && (sol.x[1] - 1.2).abs() < 1e-9);
        assert!((sol.objective + 2.8).abs() < 1e-9);
    }

    #[test]
    fn covering_with_ge_rows() {
        // min x + y s.t. x + y >= 1, x >= 0.25
        let sol = minimize(
            &[1.0, 1.0],
            &[
                Constraint::new(vec![1.0, 1.0], Relation::Ge, 1.0),
                Constraint::new(vec![1.0, 0.0], Relation::Ge, 0.25),
            ],
        )
        .unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!(sol.x[0] >= 0.25 - 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let inf = minimize(
            &[1.0],
            &[
                Constraint::new(vec![1.0], Relation::Ge, 2.0),
                Constraint::new(vec![1.0], Relation::Le, 1.0),
            ],
        );
        assert_eq!(inf, Err(LpError::Infeasible));
        let unb = minimize(&[-1.0], &[Constraint::new(vec![1.0], Relation::Ge, 1.0)]);
        assert_eq!(unb, Err(LpError::Unbounded));
    }

    #[test]
    fn equality_and_negative_rhs() {
        // min x s.t. x + y = 3, -x <= -1  (i.e. x >= 1)
        let sol = minimize(
            &[1.0, 0.0],
            &[
                Constraint::new(vec![1.0, 1.0], Relation::Eq, 3.0),
                Constraint::new(vec![-1.0, 0.0], Relation::Le, -1.0),
            ],
        )
        .unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && (sol.x[1] - 2.0).abs() < 1e-9);
    }

    /// Independent oracle: enumerate every vertex of a boxed polytope.
    fn vertex_oracle(c: &[f64], cons: &[Constraint], bound: f64) -> Option<f64> {
        let n = c.len();
        let mut all: Vec<(Vec<f64>, Relation, f64)> =
            cons.iter().map(|k| (k.coeffs.clone(), k.relation, k.rhs)).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            all.push((e.clone(), Relation::Ge, 0.0));
            all.push((e, Relation::Le, bound));
        }
        let feasible = |x: &[f64]| {
            all.iter().all(|(a, rel, b)| {
                let v: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
                match rel {
                    Relation::Le => v <= b + 1e-7,
                    Relation::Ge => v >= b - 1e-7,
                    Relation::Eq => (v - b).abs() <= 1e-7,
                }
            })
        };
        let mut best: Option<f64> = None;
        let total = all.len();
        let mut combo: Vec<usize> = (0..n).collect();
        loop {
            let mut mat: Vec<Vec<f64>> = combo
                .iter()
                .map(|&i| {
                    let mut r = all[i].0.clone();
                    r.push(all[i].2);
                    r
                })
                .collect();
            if let Some(x) = gauss(&mut mat, n) {
                if feasible(&x) {
                    let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
            // next combination
            let mut k = n;
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                if combo[k] < total - n + k {
                    combo[k] += 1;
                    for l in k + 1..n {
                        combo[l] = combo[l - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn gauss(m: &mut [Vec<f64>], n: usize) -> Option<Vec<f64>> {
        for col in 0..n {
            let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
            if m[piv][col].abs() < 1e-10 {
                return None;
            }
            m.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for k in col..=n {
                        m[r][k] -= f * m[col][k];
                    }
                }
            }
        }
        Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
    }

    #[test]
    fn agrees_with_vertex_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let n = rng.random_range(1..=3);
            let m = rng.random_range(1..=4);
            let bound = 5.0;
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-3i32..=3) as f64).collect();
            let mut cons: Vec<Constraint> = (0..m)
                .map(|_| {
                    let rel = match rng.random_range(0..3) {
                        0 => Relation::Le,
                        1 => Relation::Ge,
                        _ => Relation::Eq,
                    };
                    Constraint::new(
                        (0..n).map(|_| rng.random_range(-3i32..=3) as f64).collect(),
                        rel,
                        rng.random_range(-4i32..=6) as f64,
                    )
                })
                .collect();
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                cons.push(Constraint::new(e, Relation::Le, bound));
            }
            let oracle = vertex_oracle(&c, &cons[..m], bound);
            match (minimize(&c, &cons), oracle) {
                (Ok(sol), Some(best)) => assert!((sol.objective - best).abs() < 1e-6, "{c:?} {cons:?}"),
                (Err(LpError::Infeasible), None) => {}
                (got, want) => panic!("mismatch: {got:?} vs {want:?} for {c:?} {cons:?}"),
            }
        }
    }
}
