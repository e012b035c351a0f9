//! Piecewise-cubic planar curves.
//!
//! A [`PlanarCurve`] is a C² chain of cubic polynomial pieces. Curves returned
//! by [`fit_spline`] are parameterized by cumulative chord length; passing them
//! through [`reparameterize_arclength`] yields a curve whose parameter is arc
//! length, which is what the controller and the corridor builder expect.
//!
//! Queries outside `[0, total_length]` are clamped to the nearest endpoint.

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Tolerated deviation of `|dr/dξ|` from one on an arc-length curve.
pub const ARCLENGTH_EPS: f64 = 1e-3;

/// Spacing of the per-segment arc-length lookup tables.
const LOOKUP_STEP: f64 = 1e-4;

/// Initial node spacing when resampling a curve by arc length.
const RESAMPLE_SPACING: f64 = 0.05;

const MAX_REFINEMENTS: usize = 8;

/// Rotate a vector by +90°.
#[inline]
pub fn rot90(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// z-component of the 2D cross product.
#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// One cubic piece `c0 + c1 s + c2 s² + c3 s³` on a local parameter `s ∈ [0, len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSegment {
    coeffs: [Vec2; 4],
}

impl CubicSegment {
    pub fn new(coeffs: [Vec2; 4]) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[Vec2; 4] {
        &self.coeffs
    }

    #[inline]
    pub fn position(&self, s: f64) -> Vec2 {
        let [c0, c1, c2, c3] = self.coeffs;
        c0 + (c1 + (c2 + c3 * s) * s) * s
    }

    #[inline]
    pub fn first(&self, s: f64) -> Vec2 {
        let [_, c1, c2, c3] = self.coeffs;
        c1 + (c2 * 2.0 + c3 * (3.0 * s)) * s
    }

    #[inline]
    pub fn second(&self, s: f64) -> Vec2 {
        let [_, _, c2, c3] = self.coeffs;
        c2 * 2.0 + c3 * (6.0 * s)
    }

    fn speed(&self, s: f64) -> f64 {
        self.first(s).norm()
    }

    /// Arc length between local parameters `a` and `b` (8-point Gauss-Legendre
    /// on four sub-panels; the integrand is smooth and strictly positive).
    fn arclength(&self, a: f64, b: f64) -> f64 {
        const NODES: [f64; 4] = [
            0.183_434_642_495_649_8,
            0.525_532_409_916_329,
            0.796_666_477_413_626_7,
            0.960_289_856_497_536_3,
        ];
        const WEIGHTS: [f64; 4] = [
            0.362_683_783_378_362,
            0.313_706_645_877_887_3,
            0.222_381_034_453_374_5,
            0.101_228_536_290_376_3,
        ];
        let panels = if (b - a).abs() < 0.01 { 1 } else { 4 };
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            let half = 0.5 * h;
            let mut acc = 0.0;
            for (x, w) in NODES.iter().zip(WEIGHTS.iter()) {
                acc += w * (self.speed(mid - half * x) + self.speed(mid + half * x));
            }
            total += acc * half;
        }
        total
    }
}

/// Piecewise-cubic C² planar curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarCurve {
    segments: Vec<CubicSegment>,
    knots: Vec<f64>,
}

impl PlanarCurve {
    /// Build a curve from explicit pieces. `knots` holds `segments.len() + 1`
    /// strictly increasing breakpoints starting at zero.
    pub fn from_parts(segments: Vec<CubicSegment>, knots: Vec<f64>) -> Result<Self> {
        if segments.is_empty() || knots.len() != segments.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "curve needs n segments and n+1 knots (got {} and {})",
                segments.len(),
                knots.len()
            )));
        }
        if knots[0] != 0.0 {
            return Err(Error::InvalidInput("first knot must be zero".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("knots must be strictly increasing".into()));
        }
        Ok(Self { segments, knots })
    }

    pub fn segments(&self) -> &[CubicSegment] {
        &self.segments
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn total_length(&self) -> f64 {
        *self.knots.last().expect("curve has knots")
    }

    /// Segment index and local parameter for `xi`, clamped into the domain.
    fn locate(&self, xi: f64) -> (usize, f64) {
        let xi = xi.clamp(0.0, self.total_length());
        let idx = self
            .knots
            .partition_point(|&k| k <= xi)
            .saturating_sub(1)
            .min(self.segments.len() - 1);
        (idx, xi - self.knots[idx])
    }

    pub fn evaluate(&self, xi: f64) -> Vec2 {
        let (i, s) = self.locate(xi);
        self.segments[i].position(s)
    }

    /// `dr/dξ` (not normalized).
    pub fn derivative(&self, xi: f64) -> Vec2 {
        let (i, s) = self.locate(xi);
        self.segments[i].first(s)
    }

    pub fn second_derivative(&self, xi: f64) -> Vec2 {
        let (i, s) = self.locate(xi);
        self.segments[i].second(s)
    }

    pub fn tangent(&self, xi: f64) -> Vec2 {
        let d = self.derivative(xi);
        let n = d.norm();
        if n > 0.0 {
            d / n
        } else {
            Vec2::new(1.0, 0.0)
        }
    }

    /// Counter-clockwise unit normal, the tangent rotated by +90°.
    pub fn normal(&self, xi: f64) -> Vec2 {
        rot90(self.tangent(xi))
    }

    /// Signed curvature; positive when the curve turns counter-clockwise.
    pub fn curvature(&self, xi: f64) -> f64 {
        let (i, s) = self.locate(xi);
        let d1 = self.segments[i].first(s);
        let d2 = self.segments[i].second(s);
        let speed = d1.norm();
        if speed == 0.0 {
            return 0.0;
        }
        cross(d1, d2) / (speed * speed * speed)
    }

    /// Largest `|curvature|` over the curve. Sampled every centimetre (at least
    /// eight samples per piece) and then refined around each sampled peak.
    pub fn max_curvature(&self) -> f64 {
        const STEP: f64 = 0.01;
        let mut xs = Vec::new();
        for (i, w) in self.knots.windows(2).enumerate() {
            let len = w[1] - w[0];
            let n = ((len / STEP).ceil() as usize).max(8);
            for j in 0..n {
                xs.push(w[0] + len * j as f64 / n as f64);
            }
            if i + 1 == self.segments.len() {
                xs.push(w[1]);
            }
        }
        let ks: Vec<f64> = xs.iter().map(|&x| self.curvature(x).abs()).collect();
        let mut best = ks.iter().cloned().fold(0.0, f64::max);
        for j in 0..ks.len() {
            let left = if j > 0 { ks[j - 1] } else { f64::NEG_INFINITY };
            let right = if j + 1 < ks.len() { ks[j + 1] } else { f64::NEG_INFINITY };
            if ks[j] >= left && ks[j] >= right {
                let lo = xs[j.saturating_sub(1)];
                let hi = xs[(j + 1).min(xs.len() - 1)];
                best = best.max(self.refine_peak(lo, hi));
            }
        }
        best
    }

    fn refine_peak(&self, mut lo: f64, mut hi: f64) -> f64 {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let f = |x: f64| self.curvature(x).abs();
        let mut a = hi - INV_PHI * (hi - lo);
        let mut b = lo + INV_PHI * (hi - lo);
        let (mut fa, mut fb) = (f(a), f(b));
        for _ in 0..60 {
            if fa > fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - INV_PHI * (hi - lo);
                fa = f(a);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + INV_PHI * (hi - lo);
                fb = f(b);
            }
        }
        fa.max(fb).max(f(lo)).max(f(hi))
    }

    /// Length of the curve measured by quadrature of `|dr/dξ|`.
    pub fn measured_length(&self) -> f64 {
        self.segments
            .iter()
            .zip(self.knots.windows(2))
            .map(|(seg, w)| seg.arclength(0.0, w[1] - w[0]))
            .sum()
    }

    /// Worst deviation of `|dr/dξ|` from one, sampled at each piece's ends and
    /// at interior points.
    pub fn arclength_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (seg, w) in self.segments.iter().zip(self.knots.windows(2)) {
            let len = w[1] - w[0];
            for j in 0..=8 {
                let s = len * j as f64 / 8.0;
                worst = worst.max((seg.speed(s) - 1.0).abs());
            }
        }
        worst
    }

    /// Keep the part of the curve with parameter in `[0, len]`.
    pub fn truncated(&self, len: f64) -> PlanarCurve {
        if len >= self.total_length() || len <= 0.0 {
            return self.clone();
        }
        let (idx, s) = self.locate(len);
        if s <= 1e-12 && idx > 0 {
            return PlanarCurve {
                segments: self.segments[..idx].to_vec(),
                knots: self.knots[..=idx].to_vec(),
            };
        }
        let mut knots = self.knots[..=idx].to_vec();
        knots.push(len);
        PlanarCurve {
            segments: self.segments[..=idx].to_vec(),
            knots,
        }
    }

    /// Points spaced at most `step` apart in parameter, endpoints included.
    pub fn polyline(&self, step: f64) -> Vec<Vec2> {
        let n = ((self.total_length() / step).ceil() as usize).max(1);
        (0..=n)
            .map(|i| self.evaluate(self.total_length() * i as f64 / n as f64))
            .collect()
    }

    /// Parameter of the point on the curve closest to `p`, searched on a
    /// `step` grid and refined by golden section.
    pub fn project(&self, p: Vec2, step: f64) -> f64 {
        let n = ((self.total_length() / step).ceil() as usize).max(1);
        let h = self.total_length() / n as f64;
        let dist = |xi: f64| (self.evaluate(xi) - p).norm_squared();
        let mut best = (0, f64::INFINITY);
        for i in 0..=n {
            let d = dist(i as f64 * h);
            if d < best.1 {
                best = (i, d);
            }
        }
        let mut lo = (best.0 as f64 - 1.0).max(0.0) * h;
        let mut hi = ((best.0 + 1) as f64 * h).min(self.total_length());
        for _ in 0..50 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if dist(m1) < dist(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        0.5 * (lo + hi)
    }
}

#[derive(Clone, Copy)]
enum EndCondition {
    Natural,
    Clamped(Vec2, Vec2),
}

/// Interpolating cubic spline through `points` at parameters `params`.
fn cubic_spline(params: &[f64], points: &[Vec2], end: EndCondition) -> PlanarCurve {
    let n = points.len() - 1;
    let h: Vec<f64> = params.windows(2).map(|w| w[1] - w[0]).collect();
    let slope: Vec<Vec2> = (0..n).map(|i| (points[i + 1] - points[i]) / h[i]).collect();

    // Tridiagonal system for the second derivatives m_0..m_n.
    let mut sub = vec![0.0; n + 1];
    let mut diag = vec![0.0; n + 1];
    let mut sup = vec![0.0; n + 1];
    let mut rhs = vec![Vec2::zeros(); n + 1];
    for i in 1..n {
        sub[i] = h[i - 1];
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        sup[i] = h[i];
        rhs[i] = (slope[i] - slope[i - 1]) * 6.0;
    }
    match end {
        EndCondition::Natural => {
            diag[0] = 1.0;
            diag[n] = 1.0;
        }
        EndCondition::Clamped(d0, dn) => {
            diag[0] = 2.0 * h[0];
            sup[0] = h[0];
            rhs[0] = (slope[0] - d0) * 6.0;
            sub[n] = h[n - 1];
            diag[n] = 2.0 * h[n - 1];
            rhs[n] = (dn - slope[n - 1]) * 6.0;
        }
    }
    // Thomas algorithm.
    for i in 1..=n {
        let w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        let prev = rhs[i - 1];
        rhs[i] -= prev * w;
    }
    let mut m = vec![Vec2::zeros(); n + 1];
    m[n] = rhs[n] / diag[n];
    for i in (0..n).rev() {
        m[i] = (rhs[i] - m[i + 1] * sup[i]) / diag[i];
    }

    let segments = (0..n)
        .map(|i| {
            let c0 = points[i];
            let c1 = slope[i] - (m[i] * 2.0 + m[i + 1]) * (h[i] / 6.0);
            let c2 = m[i] * 0.5;
            let c3 = (m[i + 1] - m[i]) / (6.0 * h[i]);
            CubicSegment::new([c0, c1, c2, c3])
        })
        .collect();
    PlanarCurve {
        segments,
        knots: params.to_vec(),
    }
}

/// Natural cubic spline through `waypoints`, parameterized by cumulative chord
/// length. Consecutive duplicates are rejected.
pub fn fit_spline(waypoints: &[Vec2]) -> Result<PlanarCurve> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidInput("need at least two waypoints".into()));
    }
    let mut params = Vec::with_capacity(waypoints.len());
    params.push(0.0);
    for (i, w) in waypoints.windows(2).enumerate() {
        let chord = (w[1] - w[0]).norm();
        if !chord.is_finite() || chord < 1e-9 {
            return Err(Error::InvalidInput(format!(
                "waypoints {i} and {} coincide",
                i + 1
            )));
        }
        params.push(params[i] + chord);
    }
    Ok(cubic_spline(&params, waypoints, EndCondition::Natural))
}

/// Cumulative arc length of one piece tabulated on a fine local grid.
struct ArclengthTable {
    params: Vec<f64>,
    lengths: Vec<f64>,
}

impl ArclengthTable {
    fn build(seg: &CubicSegment, len: f64) -> Self {
        let n = ((len / LOOKUP_STEP).ceil() as usize).max(1);
        let mut params = Vec::with_capacity(n + 1);
        let mut lengths = Vec::with_capacity(n + 1);
        params.push(0.0);
        lengths.push(0.0);
        for j in 1..=n {
            let a = len * (j - 1) as f64 / n as f64;
            let b = len * j as f64 / n as f64;
            params.push(b);
            lengths.push(lengths[j - 1] + seg.arclength(a, b));
        }
        Self { params, lengths }
    }

    fn total(&self) -> f64 {
        *self.lengths.last().unwrap()
    }

    /// Local parameter at which the accumulated length equals `target`, by
    /// bisection inside the bracketing table cell.
    fn invert(&self, seg: &CubicSegment, target: f64) -> Result<f64> {
        let j = self
            .lengths
            .partition_point(|&l| l <= target)
            .saturating_sub(1)
            .min(self.params.len() - 2);
        let (mut lo, mut hi) = (self.params[j], self.params[j + 1]);
        let base = self.lengths[j];
        let p0 = lo;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if base + seg.arclength(p0, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                return Ok(0.5 * (lo + hi));
            }
        }
        Err(Error::Numerical(format!(
            "arc-length bisection did not converge (target {target}, bracket [{lo}, {hi}])"
        )))
    }
}

/// Resample `curve` into an arc-length-parameterized C² spline.
///
/// Nodes are placed at equal arc-length spacing (found by bisection on
/// tabulated arc length) and joined by a clamped cubic spline whose end
/// derivatives are the unit tangents. Spacing is halved until
/// `|dr/dξ| ∈ [1 - ARCLENGTH_EPS, 1 + ARCLENGTH_EPS]` and the resampled
/// length matches the measured input length within `tol · s_r`.
pub fn reparameterize_arclength(curve: &PlanarCurve, tol: f64) -> Result<PlanarCurve> {
    let tables: Vec<ArclengthTable> = curve
        .segments
        .iter()
        .zip(curve.knots.windows(2))
        .map(|(seg, w)| ArclengthTable::build(seg, w[1] - w[0]))
        .collect();
    let mut cumulative = Vec::with_capacity(tables.len() + 1);
    cumulative.push(0.0);
    for t in &tables {
        cumulative.push(cumulative.last().unwrap() + t.total());
    }
    let total = *cumulative.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("curve has zero length".into()));
    }

    let start_tangent = curve.segments[0].first(0.0).normalize();
    let last = curve.segments.len() - 1;
    let end_tangent = curve.segments[last]
        .first(curve.knots[last + 1] - curve.knots[last])
        .normalize();

    let mut nodes = ((total / RESAMPLE_SPACING).ceil() as usize).max(1);
    let mut worst = f64::INFINITY;
    for _ in 0..MAX_REFINEMENTS {
        let mut params = Vec::with_capacity(nodes + 1);
        let mut points = Vec::with_capacity(nodes + 1);
        for j in 0..=nodes {
            let s = total * j as f64 / nodes as f64;
            let seg_idx = cumulative
                .partition_point(|&c| c <= s)
                .saturating_sub(1)
                .min(tables.len() - 1);
            let local = if j == nodes {
                curve.knots[seg_idx + 1] - curve.knots[seg_idx]
            } else {
                tables[seg_idx].invert(&curve.segments[seg_idx], s - cumulative[seg_idx])?
            };
            params.push(s);
            points.push(curve.segments[seg_idx].position(local));
        }
        let out = cubic_spline(
            &params,
            &points,
            EndCondition::Clamped(start_tangent, end_tangent),
        );
        worst = out.arclength_defect();
        let length_gap = (out.measured_length() - total).abs();
        if worst <= ARCLENGTH_EPS && length_gap <= tol * total {
            return Ok(out);
        }
        nodes *= 2;
    }
    Err(Error::Numerical(format!(
        "arc-length resampling did not reach |dr/dξ| within {ARCLENGTH_EPS} \
         (worst defect {worst:.3e} with {nodes} nodes, length {total:.6})"
    )))
}
