//! Dense strictly convex QP by the Goldfarb-Idnani dual active-set method.
//!
//! Solves `min ½xᵀHx + gᵀx  s.t.  Cx ≥ b`. The factor `J = L⁻ᵀ` (with
//! `H = LLᵀ`) and the upper-triangular `R` with `JᵀN = [R; 0]` for the active
//! normals `N` are kept up to date by Givens rotations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Smallest eigenvalue enforced on the Hessian.
pub const MIN_EIGENVALUE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint row (zero for inactive rows).
    pub multipliers: DVector<f64>,
    pub active: Vec<usize>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// Max of stationarity, primal infeasibility, dual infeasibility and
    /// complementarity residuals (infinity norms).
    pub kkt_residual: f64,
    /// Eigenvalue shift added to the Hessian (0 if it was already PD).
    pub regularization: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    /// A row counts as satisfied when `(Cᵢx − bᵢ)/‖Cᵢ‖ ≥ −tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 2000,
        }
    }
}

/// Cholesky factor of `H`, shifting its spectrum up if needed.
fn factor(h: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (h + h.transpose()) * 0.5;
    if let Some(ch) = sym.clone().cholesky() {
        return (ch.l(), 0.0);
    }
    let lmin = SymmetricEigen::new(sym.clone()).eigenvalues.min();
    let shift = MIN_EIGENVALUE - lmin.min(0.0);
    let shifted = sym + DMatrix::identity(h.nrows(), h.ncols()) * shift;
    let l = shifted
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| DMatrix::identity(h.nrows(), h.ncols()));
    (l, shift)
}

/// Rotation `[c s; s −c]` mapping `(a, b)` to `(h, 0)` with `h ≥ 0`.
#[inline]
fn givens(a: f64, b: f64) -> Option<(f64, f64, f64)> {
    let h = a.hypot(b);
    if h == 0.0 {
        None
    } else {
        Some((a / h, b / h, h))
    }
}

struct State {
    n: usize,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    active: Vec<usize>,
    u: Vec<f64>,
}

impl State {
    fn iq(&self) -> usize {
        self.active.len()
    }

    /// Rotate `d` (and the columns of `J`) so `d[iq+1..] = 0`, then append `d[..=iq]` to `R`.
    /// Returns false if the new normal is linearly dependent on the active ones.
    fn add(&mut self, d: &mut DVector<f64>, row: usize, mult: f64) -> bool {
        let iq = self.iq();
        for k in (iq + 1..self.n).rev() {
            let Some((c, s, h)) = givens(d[k - 1], d[k]) else { continue };
            d[k - 1] = h;
            d[k] = 0.0;
            for i in 0..self.n {
                let (a, b) = (self.j[(i, k - 1)], self.j[(i, k)]);
                self.j[(i, k - 1)] = c * a + s * b;
                self.j[(i, k)] = s * a - c * b;
            }
        }
        let scale = d.amax().max(1.0);
        if d[iq].abs() <= 1e-13 * scale {
            return false;
        }
        for i in 0..=iq {
            self.r[(i, iq)] = d[i];
        }
        self.active.push(row);
        self.u.push(mult);
        true
    }

    /// Remove the active constraint at position `q` and restore triangularity.
    fn drop(&mut self, q: usize) {
        let iq = self.iq();
        self.active.remove(q);
        self.u.remove(q);
        for col in q..iq - 1 {
            for i in 0..self.n {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..self.n {
            self.r[(i, iq - 1)] = 0.0;
        }
        let iq = iq - 1;
        for k in q..iq {
            let Some((c, s, h)) = givens(self.r[(k, k)], self.r[(k + 1, k)]) else { continue };
            self.r[(k, k)] = h;
            self.r[(k + 1, k)] = 0.0;
            for col in k + 1..iq {
                let (a, b) = (self.r[(k, col)], self.r[(k + 1, col)]);
                self.r[(k, col)] = c * a + s * b;
                self.r[(k + 1, col)] = s * a - c * b;
            }
            for i in 0..self.n {
                let (a, b) = (self.j[(i, k)], self.j[(i, k + 1)]);
                self.j[(i, k)] = c * a + s * b;
                self.j[(i, k + 1)] = s * a - c * b;
            }
        }
    }

    /// Primal step direction `z = J₂d₂` and dual direction `r = R⁻¹d₁`.
    fn directions(&self, d: &DVector<f64>) -> (DVector<f64>, Vec<f64>) {
        let iq = self.iq();
        let mut z = DVector::zeros(self.n);
        for k in iq..self.n {
            z.axpy(d[k], &self.j.column(k), 1.0);
        }
        let mut r = vec![0.0; iq];
        for i in (0..iq).rev() {
            let mut s = d[i];
            for k in i + 1..iq {
                s -= self.r[(i, k)] * r[k];
            }
            r[i] = s / self.r[(i, i)];
        }
        (z, r)
    }
}

/// Solve `min ½xᵀHx + gᵀx  s.t.  Cx ≥ b` (`C` is `m × n`).
pub fn solve_qp(h: &DMatrix<f64>, g: &DVector<f64>, c: &DMatrix<f64>, b: &DVector<f64>, opts: QpOptions) -> QpSolution {
    let n = h.nrows();
    let m = c.nrows();
    assert_eq!(h.ncols(), n, "Hessian must be square");
    assert_eq!(g.len(), n);
    assert!(m == 0 || c.ncols() == n, "constraint matrix has wrong width");
    assert_eq!(b.len(), m);

    let (l, shift) = factor(h);
    let lt_inv = l
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let mut st = State {
        n,
        j: lt_inv,
        r: DMatrix::zeros(n, n),
        active: Vec::new(),
        u: Vec::new(),
    };
    // Unconstrained minimiser x = −H⁻¹g = −JJᵀg.
    let mut x = -(&st.j * (st.j.transpose() * g));
    let row_norm: Vec<f64> = (0..m).map(|i| c.row(i).norm().max(1e-300)).collect();
    let slack = |x: &DVector<f64>, i: usize| c.row(i).dot(&x.transpose()) - b[i];

    let mut status = QpStatus::Optimal;
    let mut iterations = 0;
    'outer: loop {
        // Most violated inactive constraint (scaled).
        let mut p = None;
        let mut worst = -opts.tol;
        for i in 0..m {
            if st.active.contains(&i) {
                continue;
            }
            let s = slack(&x, i) / row_norm[i];
            if s < worst {
                worst = s;
                p = Some(i);
            }
        }
        let Some(p) = p else { break };
        let np = c.row(p).transpose();
        let mut u_plus = 0.0;
        loop {
            iterations += 1;
            if iterations > opts.max_iter {
                status = QpStatus::MaxIter;
                break 'outer;
            }
            let mut d = st.j.transpose() * &np;
            let (z, r) = st.directions(&d);
            let sp = slack(&x, p);
            // Partial step: first active multiplier to hit zero.
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (k, &rk) in r.iter().enumerate() {
                if rk > 1e-14 {
                    let ratio = st.u[k] / rk;
                    if ratio < t1 {
                        t1 = ratio;
                        drop_at = Some(k);
                    }
                }
            }
            // Full step: make constraint p active.
            let zn = z.dot(&np);
            let t2 = if z.amax() > 1e-14 * (1.0 + np.amax()) && zn > 0.0 {
                -sp / zn
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                status = QpStatus::Infeasible;
                break 'outer;
            }
            if t2.is_finite() {
                x.axpy(t, &z, 1.0);
            }
            for (k, rk) in r.iter().enumerate() {
                st.u[k] -= t * rk;
            }
            u_plus += t;
            if t2 <= t1 {
                // A dependent normal is left inactive; it is satisfied after the step.
                st.add(&mut d, p, u_plus);
                break;
            }
            st.drop(drop_at.expect("partial step without a blocking constraint"));
        }
    }

    let mut multipliers = DVector::zeros(m);
    for (k, &i) in st.active.iter().enumerate() {
        multipliers[i] = st.u[k].max(0.0);
    }
    let objective = 0.5 * x.dot(&(h * &x)) + g.dot(&x);
    let kkt_residual = kkt_residual(h, g, c, b, &x, &multipliers);
    QpSolution {
        x,
        multipliers,
        active: st.active,
        objective,
        status,
        iterations,
        kkt_residual,
        regularization: shift,
    }
}

/// Infinity-norm KKT residual of a primal-dual pair.
pub fn kkt_residual(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    c: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> f64 {
    let mut stat = h * x + g;
    if c.nrows() > 0 {
        stat -= c.transpose() * lambda;
    }
    let mut res = stat.amax();
    for i in 0..c.nrows() {
        let s = c.row(i).dot(&x.transpose()) - b[i];
        res = res.max((-s).max(0.0)).max((-lambda[i]).max(0.0)).max((lambda[i] * s).abs());
    }
    res
}
