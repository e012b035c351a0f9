//! Dense two-phase tableau simplex with Bland's rule.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;

/// Optimum of `min cᵀy  s.t.  A y = b, y ≥ 0`.
#[derive(Debug, Clone)]
pub struct StandardSolution {
    pub y: Vec<f64>,
    /// Simplex multipliers `π` with `Aᵀπ ≤ c`; these solve the dual
    /// `max bᵀπ  s.t.  Aᵀπ ≤ c`.
    pub multipliers: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    m: usize,
    /// Number of structural columns; artificials follow.
    n: usize,
    /// Row-major `m × (n + m + 1)`, last column is the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
    /// Reduced costs for all `n + m` columns plus `-objective` at the end.
    z: Vec<f64>,
    pivots: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.n + self.m + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width() + j]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let p = self.at(r, c);
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.at(i, c);
            if f != 0.0 {
                for j in 0..w {
                    self.t[i * w + j] -= f * self.t[r * w + j];
                }
            }
        }
        let f = self.z[c];
        if f != 0.0 {
            for j in 0..w {
                self.z[j] -= f * self.t[r * w + j];
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn price(&mut self, cost: &[f64]) {
        let w = self.width();
        self.z = vec![0.0; w];
        self.z[..cost.len()].copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    self.z[j] -= cb * self.t[i * w + j];
                }
            }
        }
    }

    /// Run simplex iterations over columns `< enter_limit`.
    fn run(&mut self, enter_limit: usize, max_pivots: usize) -> Result<()> {
        let rhs = self.width() - 1;
        loop {
            let Some(c) = (0..enter_limit).find(|&j| self.z[j] < -FEAS_EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > PIVOT_EPS {
                    let ratio = self.at(i, rhs) / a;
                    let better = match leave {
                        None => true,
                        Some((k, best)) => ratio < best - 1e-14 || (ratio <= best + 1e-14 && self.basis[i] < self.basis[k]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Numerical("linear program is unbounded".into()));
            };
            self.pivot(r, c);
            if self.pivots > max_pivots {
                return Err(Error::Numerical(format!("simplex exceeded {max_pivots} pivots")));
            }
        }
    }
}

/// Solve `min cᵀy  s.t.  A y = b, y ≥ 0` with `A` given row-major (`m × n`).
pub fn solve_standard(a: &[f64], b: &[f64], c: &[f64]) -> Result<StandardSolution> {
    let m = b.len();
    let n = c.len();
    if a.len() != m * n {
        return Err(Error::InvalidInput(format!("LP matrix has {} entries, expected {m}×{n}", a.len())));
    }
    let w = n + m + 1;
    let mut sign = vec![1.0; m];
    let mut t = vec![0.0; m * w];
    for i in 0..m {
        sign[i] = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * w + j] = sign[i] * a[i * n + j];
        }
        t[i * w + n + i] = 1.0;
        t[i * w + w - 1] = sign[i] * b[i];
    }
    let mut tab = Tableau {
        m,
        n,
        t,
        basis: (n..n + m).collect(),
        z: Vec::new(),
        pivots: 0,
    };
    let max_pivots = 50 * (n + m) + 1000;

    // Phase 1: minimise the sum of artificials.
    let mut phase1 = vec![0.0; n + m];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    tab.price(&phase1);
    tab.run(n + m, max_pivots)?;
    let infeasibility = -tab.z[w - 1];
    let scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if infeasibility > FEAS_EPS * scale {
        return Err(Error::Infeasible(format!("LP infeasible (phase-1 residual {infeasibility:.3e})")));
    }
    // Drive zero-level artificials out of the basis where possible.
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(c) = (0..n).find(|&j| tab.at(r, j).abs() > 1e-9) {
                tab.pivot(r, c);
            }
        }
    }

    // Phase 2: artificials may not re-enter.
    let mut cost = vec![0.0; n + m];
    cost[..n].copy_from_slice(c);
    tab.price(&cost);
    tab.run(n, max_pivots)?;

    let mut y = vec![0.0; n];
    for (i, &bv) in tab.basis.iter().enumerate() {
        if bv < n {
            y[bv] = tab.at(i, w - 1).max(0.0);
        }
    }
    let multipliers = (0..m).map(|i| -tab.z[n + i] * sign[i]).collect();
    Ok(StandardSolution {
        objective: c.iter().zip(&y).map(|(a, b)| a * b).sum(),
        y,
        multipliers,
        pivots: tab.pivots,
    })
}

/// Solve `max cᵀx  s.t.  G x ≤ h` with free `x` (`G` row-major, `p × n`)
/// through its dual `min hᵀy  s.t.  Gᵀy = c, y ≥ 0`.
pub fn maximize_inequality(g: &[f64], h: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    let p = h.len();
    let n = c.len();
    let mut gt = vec![0.0; n * p];
    for i in 0..p {
        for j in 0..n {
            gt[j * p + i] = g[i * n + j];
        }
    }
    let sol = solve_standard(&gt, c, h)?;
    Ok(sol.multipliers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_min() {
        // min -x1 - 2x2  s.t. x1 + x2 + s1 = 4, x1 + 3x2 + s2 = 6.
        let a = [1.0, 1.0, 1.0, 0.0, 1.0, 3.0, 0.0, 1.0];
        let s = solve_standard(&a, &[4.0, 6.0], &[-1.0, -2.0, 0.0, 0.0]).unwrap();
        assert!((s.objective + 5.0).abs() < 1e-12);
        assert!((s.y[0] - 3.0).abs() < 1e-12 && (s.y[1] - 1.0).abs() < 1e-12);
        // Dual optimum equals primal optimum.
        let dual: f64 = s.multipliers[0] * 4.0 + s.multipliers[1] * 6.0;
        assert!((dual + 5.0).abs() < 1e-12);
    }

    #[test]
    fn inequality_form_box() {
        // max x + y s.t. x ≤ 1, y ≤ 2, -x ≤ 0, -y ≤ 0.
        let g = [1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0];
        let x = maximize_inequality(&g, &[1.0, 2.0, 0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        // y1 + y2 = -1 with y ≥ 0.
        assert!(matches!(
            solve_standard(&[1.0, 1.0], &[-1.0], &[1.0, 1.0]),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook rule; Bland terminates.
        let a = [
            0.25, -8.0, -1.0, 9.0, 1.0, 0.0, 0.0, //
            0.5, -12.0, -0.5, 3.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
        ];
        let s = solve_standard(&a, &[0.0, 0.0, 1.0], &[-0.75, 20.0, -0.5, 6.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((s.objective + 1.25).abs() < 1e-9, "{}", s.objective);
    }
}
