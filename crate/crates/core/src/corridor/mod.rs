//! Free-space corridors around a reference curve.
//!
//! Clearances are raycast along `±n_r(ξ)` at equidistant arc lengths and two
//! nonnegative polynomials `d̄(ξ)`, `d̲(ξ)` of degree `D` are fitted under the
//! samples by linear programming. The corridor is the region swept by
//! `r(ξ) + s·n_r(ξ)` for `s ∈ [−d̲(ξ), d̄(ξ)]`.

pub mod lp;

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PlanarCurve, Vec2};
use crate::world::Costmap;

/// Largest arc-length step for which consecutive raycast endpoints at any
/// offset `d ≤ d_plus` stay within `r_c` of each other on curves with
/// `|κ| ≤ kappa_plus`.
pub fn sampling_step(r_c: f64, d_plus: f64, kappa_plus: f64) -> Result<f64> {
    if !(r_c > 0.0) || !(d_plus > 0.0) || !(kappa_plus >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "sampling_step needs r_c, d_plus > 0 and kappa_plus ≥ 0 (got {r_c}, {d_plus}, {kappa_plus})"
        )));
    }
    Ok(r_c / (1.0 + d_plus * kappa_plus))
}

/// Deepest an obstacle can reach into the sampled free space without any
/// ray detecting it.
pub fn max_protrusion(r_c: f64) -> f64 {
    0.5 * r_c
}

/// Number of samples covering `length` at spacing at most `dxi`, both ends included.
pub fn sample_count(length: f64, dxi: f64) -> usize {
    ((length / dxi - 1e-9).ceil().max(0.0) as usize) + 1
}

/// Raw clearance samples along a curve interval.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSamples {
    pub interval: (f64, f64),
    pub xi: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    /// Samples whose origin lies in an occupied cell (both sides forced to 0).
    pub blocked: usize,
    /// Samples narrower than `r_o` on either side.
    pub pinched: usize,
}

impl OffsetSamples {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}

/// Raycast `±n_r(ξᵢ)` from `r(ξᵢ)` up to `d_plus` at `⌈L/Δξ⌉ + 1`
/// equidistant parameters over `interval`.
pub fn sample_offsets(
    curve: &PlanarCurve,
    map: &Costmap,
    interval: (f64, f64),
    dxi: f64,
    d_plus: f64,
    r_o: f64,
) -> Result<OffsetSamples> {
    let (a, b) = interval;
    if !(a >= 0.0 && b >= a && b <= curve.total_length() + 1e-9) || !(dxi > 0.0) || !(d_plus > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bad sampling request: interval {interval:?} on length {}, step {dxi}, d_plus {d_plus}",
            curve.total_length()
        )));
    }
    let n = sample_count(b - a, dxi);
    let h = if n > 1 { (b - a) / (n - 1) as f64 } else { 0.0 };
    let mut out = OffsetSamples {
        interval,
        xi: Vec::with_capacity(n),
        upper: Vec::with_capacity(n),
        lower: Vec::with_capacity(n),
        blocked: 0,
        pinched: 0,
    };
    for i in 0..n {
        let xi = if i + 1 == n { b } else { a + h * i as f64 };
        let p = curve.evaluate(xi);
        let nr = curve.normal(xi);
        let up = map.raycast(p, nr, d_plus);
        let lo = map.raycast(p, -nr, d_plus);
        let (u, l) = if up.blocked || lo.blocked {
            out.blocked += 1;
            (0.0, 0.0)
        } else {
            (up.distance, lo.distance)
        };
        if u < r_o || l < r_o {
            out.pinched += 1;
        }
        out.xi.push(xi);
        out.upper.push(u);
        out.lower.push(l);
    }
    Ok(out)
}

/// Two polynomial clearance bounds over an arc-length interval.
///
/// Coefficients are in the monomial basis of the local offset `σ = ξ − ξ_k`:
/// `d̄(ξ) = max(0, Σ_j C̄_j σʲ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corridor {
    coeff_upper: Vec<f64>,
    coeff_lower: Vec<f64>,
    interval: (f64, f64),
    samples: OffsetSamples,
    step: f64,
}

impl Corridor {
    /// Corridor from explicit coefficients (σ basis) and samples.
    pub fn from_parts(coeff_upper: Vec<f64>, coeff_lower: Vec<f64>, samples: OffsetSamples) -> Self {
        let interval = samples.interval;
        let step = if samples.len() > 1 {
            (interval.1 - interval.0) / (samples.len() - 1) as f64
        } else {
            0.0
        };
        Self {
            coeff_upper,
            coeff_lower,
            interval,
            samples,
            step,
        }
    }

    /// Constant-width corridor over `interval` (no raycasting; samples are the
    /// widths themselves).
    pub fn constant(interval: (f64, f64), upper: f64, lower: f64) -> Self {
        let samples = OffsetSamples {
            interval,
            xi: vec![interval.0, interval.1],
            upper: vec![upper; 2],
            lower: vec![lower; 2],
            blocked: 0,
            pinched: 0,
        };
        Self::from_parts(vec![upper], vec![lower], samples)
    }

    pub fn coeff_upper(&self) -> &[f64] {
        &self.coeff_upper
    }

    pub fn coeff_lower(&self) -> &[f64] {
        &self.coeff_lower
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn samples(&self) -> &OffsetSamples {
        &self.samples
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn degree(&self) -> usize {
        self.coeff_upper.len().saturating_sub(1)
    }

    /// True if `ξ` had to be clamped into the interval.
    pub fn outside(&self, xi: f64) -> bool {
        xi < self.interval.0 || xi > self.interval.1
    }

    fn sigma(&self, xi: f64) -> f64 {
        xi.clamp(self.interval.0, self.interval.1) - self.interval.0
    }

    /// `d̄(ξ)` with ξ clamped into the interval.
    pub fn d_upper(&self, xi: f64) -> f64 {
        poly(&self.coeff_upper, self.sigma(xi)).max(0.0)
    }

    pub fn d_lower(&self, xi: f64) -> f64 {
        poly(&self.coeff_lower, self.sigma(xi)).max(0.0)
    }

    /// `(d̄, ∂d̄/∂ξ)`; the slope is zero where the width is floored or ξ clamped.
    pub fn d_upper_with_slope(&self, xi: f64) -> (f64, f64) {
        self.with_slope(&self.coeff_upper, xi)
    }

    pub fn d_lower_with_slope(&self, xi: f64) -> (f64, f64) {
        self.with_slope(&self.coeff_lower, xi)
    }

    fn with_slope(&self, c: &[f64], xi: f64) -> (f64, f64) {
        let s = self.sigma(xi);
        let v = poly(c, s);
        if v <= 0.0 {
            return (0.0, 0.0);
        }
        let slope = if self.outside(xi) { 0.0 } else { poly_slope(c, s) };
        (v, slope)
    }

    /// Fitted widths never exceed the measured clearance at any sample.
    pub fn fit_violation(&self) -> f64 {
        let s = &self.samples;
        let mut worst: f64 = 0.0;
        for i in 0..s.len() {
            worst = worst
                .max(self.d_upper(s.xi[i]) - s.upper[i])
                .max(self.d_lower(s.xi[i]) - s.lower[i]);
        }
        worst
    }

    /// Both widths are (numerically) zero everywhere.
    pub fn is_degenerate(&self) -> bool {
        let (a, b) = self.interval;
        (0..=20).all(|k| {
            let xi = a + (b - a) * k as f64 / 20.0;
            self.d_upper(xi) < 1e-9 && self.d_lower(xi) < 1e-9
        })
    }

    /// Upper and lower widths reduced by `margin` (floored at 0 on evaluation).
    pub fn shrunk(&self, margin: f64) -> Corridor {
        let mut out = self.clone();
        out.coeff_upper[0] -= margin;
        out.coeff_lower[0] -= margin;
        out
    }

    /// Per-side scaling of the width polynomials.
    pub fn scaled(&self, upper: f64, lower: f64) -> Corridor {
        let mut out = self.clone();
        out.coeff_upper.iter_mut().for_each(|c| *c *= upper);
        out.coeff_lower.iter_mut().for_each(|c| *c *= lower);
        out
    }

    /// `r̄(ξ) = r(ξ) + d̄(ξ)·n_r(ξ)`.
    pub fn upper_point(&self, curve: &PlanarCurve, xi: f64) -> Vec2 {
        curve.evaluate(xi) + curve.normal(xi) * self.d_upper(xi)
    }

    /// `r̲(ξ) = r(ξ) − d̲(ξ)·n_r(ξ)`.
    pub fn lower_point(&self, curve: &PlanarCurve, xi: f64) -> Vec2 {
        curve.evaluate(xi) - curve.normal(xi) * self.d_lower(xi)
    }

    /// CSV rows `xi,sample_upper,sample_lower,d_upper,d_lower`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("xi,sample_upper,sample_lower,d_upper,d_lower\n");
        let s = &self.samples;
        for i in 0..s.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.xi[i],
                s.upper[i],
                s.lower[i],
                self.d_upper(s.xi[i]),
                self.d_lower(s.xi[i])
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn poly(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * s + v)
}

fn poly_slope(c: &[f64], s: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (j, &v)| acc * s + j as f64 * v)
}

/// Fit the largest-area pair of degree-`degree` polynomials lying between 0
/// and the samples: `max Σ wᵢ d(ξᵢ)` with trapezoid weights, subject to
/// `0 ≤ d(ξᵢ) ≤ sampleᵢ`. Each side is an independent LP.
pub fn fit_corridor(samples: &OffsetSamples, degree: usize) -> Result<Corridor> {
    fit_corridor_with_floor(samples, degree, None)
}

/// As [`fit_corridor`], additionally asking `d̄(ξ_k) ≥ floor.0` and
/// `d̲(ξ_k) ≥ floor.1` at the interval start. A side whose floor cannot be met
/// under the samples falls back to the unconstrained fit.
pub fn fit_corridor_with_floor(samples: &OffsetSamples, degree: usize, floor: Option<(f64, f64)>) -> Result<Corridor> {
    let n = samples.len();
    if n < degree + 1 {
        return Err(Error::InvalidInput(format!(
            "{n} samples cannot determine a degree-{degree} fit"
        )));
    }
    let (a, b) = samples.interval;
    let len = (b - a).max(1e-12);
    let side = |s: &[f64], f: Option<f64>| -> Result<Vec<f64>> {
        match f {
            // An infeasible primal shows up as an unbounded dual.
            Some(f) if f > 0.0 => {
                fit_side(&samples.xi, s, a, len, degree, Some(f)).or_else(|_| fit_side(&samples.xi, s, a, len, degree, None))
            }
            _ => fit_side(&samples.xi, s, a, len, degree, None),
        }
    };
    let upper = side(&samples.upper, floor.map(|f| f.0))?;
    let lower = side(&samples.lower, floor.map(|f| f.1))?;
    let corridor = Corridor::from_parts(upper, lower, samples.clone());
    let viol = corridor.fit_violation();
    if viol > 1e-7 {
        return Err(Error::Numerical(format!("corridor fit exceeds samples by {viol:.3e}")));
    }
    Ok(corridor)
}

fn fit_side(xi: &[f64], s: &[f64], start: f64, len: f64, degree: usize, floor: Option<f64>) -> Result<Vec<f64>> {
    let n = xi.len();
    let m = degree + 1;
    // Work in τ = σ / len ∈ [0, 1] for conditioning.
    let rows = 2 * n + usize::from(floor.is_some());
    let mut g = vec![0.0; rows * m];
    let mut h = vec![0.0; rows];
    if let Some(f) = floor {
        // −c₀ ≤ −floor.
        g[2 * n * m] = -1.0;
        h[2 * n] = -f;
    }
    let mut obj = vec![0.0; m];
    for i in 0..n {
        let tau = (xi[i] - start) / len;
        let w = if n == 1 {
            1.0
        } else if i == 0 || i == n - 1 {
            0.5
        } else {
            1.0
        };
        let mut p = 1.0;
        for j in 0..m {
            g[i * m + j] = p;
            g[(n + i) * m + j] = -p;
            obj[j] += w * p;
            p *= tau;
        }
        h[i] = s[i];
    }
    let x = lp::maximize_inequality(&g, &h, &obj)?;
    let mut c = Vec::with_capacity(m);
    let mut scale = 1.0;
    for xj in x {
        c.push(xj / scale);
        scale *= len;
    }
    // Snap tiny overshoots so the sample bound holds exactly at every sample.
    let over = (0..n)
        .map(|i| poly(&c, xi[i] - start) - s[i])
        .fold(0.0f64, f64::max);
    if over > 0.0 {
        c[0] -= over;
    }
    Ok(c)
}

/// Samplers for the two offset curves.
pub fn offset_curves<'a>(
    curve: &'a PlanarCurve,
    corridor: &'a Corridor,
) -> (impl Fn(f64) -> Vec2 + 'a, impl Fn(f64) -> Vec2 + 'a) {
    (
        move |xi| corridor.upper_point(curve, xi),
        move |xi| corridor.lower_point(curve, xi),
    )
}

/// Dense parameter grid over the corridor interval at spacing ≤ `step`.
fn grid(corridor: &Corridor, step: f64) -> Vec<f64> {
    let (a, b) = corridor.interval;
    let n = (((b - a) / step).ceil() as usize).max(1);
    (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
}

/// Whether each offset curve (upper, lower) folds over itself: the width
/// reaches the radius of curvature on the inner side of a bend, or the dense
/// offset polyline self-intersects.
pub fn check_self_intersection(curve: &PlanarCurve, corridor: &Corridor) -> (bool, bool) {
    let xs = grid(corridor, 0.01);
    let mut upper_fold = false;
    let mut lower_fold = false;
    for &xi in &xs {
        let k = curve.curvature(xi);
        if k > 0.0 && corridor.d_upper(xi) * k >= 1.0 {
            upper_fold = true;
        }
        if k < 0.0 && corridor.d_lower(xi) * -k >= 1.0 {
            lower_fold = true;
        }
    }
    if !upper_fold {
        let pts: Vec<Vec2> = xs.iter().map(|&x| corridor.upper_point(curve, x)).collect();
        upper_fold = polyline_self_intersects(&pts);
    }
    if !lower_fold {
        let pts: Vec<Vec2> = xs.iter().map(|&x| corridor.lower_point(curve, x)).collect();
        lower_fold = polyline_self_intersects(&pts);
    }
    (upper_fold, lower_fold)
}

/// Any two non-adjacent segments cross (proper intersection).
pub fn polyline_self_intersects(pts: &[Vec2]) -> bool {
    let n = pts.len();
    if n < 4 {
        return false;
    }
    // Bounding boxes of runs of 16 segments prune most pairs.
    const RUN: usize = 16;
    let runs: Vec<(Vec2, Vec2)> = (0..n - 1)
        .step_by(RUN)
        .map(|s| {
            let e = (s + RUN).min(n - 1);
            let mut lo = pts[s];
            let mut hi = pts[s];
            for p in &pts[s..=e] {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            (lo, hi)
        })
        .collect();
    for (ra, (la, ha)) in runs.iter().enumerate() {
        for (rb, (lb, hb)) in runs.iter().enumerate().skip(ra) {
            if la.x > hb.x || lb.x > ha.x || la.y > hb.y || lb.y > ha.y {
                continue;
            }
            let ia = ra * RUN..((ra + 1) * RUN).min(n - 1);
            for i in ia {
                let jb = (rb * RUN).max(i + 2)..((rb + 1) * RUN).min(n - 1);
                for j in jb {
                    if segments_cross(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let orient = |p: Vec2, q: Vec2, r: Vec2| (q - p).perp(&(r - p));
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Scale each side by the largest factor in {1, 0.9, …, 0} that removes
/// self-intersection. Scaling by a factor ≤ 1 keeps the fit under the samples.
pub fn shrink_to_regular(curve: &PlanarCurve, corridor: &Corridor) -> Corridor {
    let (up, lo) = check_self_intersection(curve, corridor);
    let pick = |bad: bool, upper: bool| -> f64 {
        if !bad {
            return 1.0;
        }
        for k in (0..10).rev() {
            let f = k as f64 / 10.0;
            let trial = if upper { corridor.scaled(f, 1.0) } else { corridor.scaled(1.0, f) };
            let (u, l) = check_self_intersection(curve, &trial);
            if !(if upper { u } else { l }) {
                return f;
            }
        }
        0.0
    };
    corridor.scaled(pick(up, true), pick(lo, false))
}
