//! Velocity and pressure from a stream function, and the checks run on them:
//! steady Euler residual, incompressibility, slip, vorticity transport, total
//! curvature against its boundary-limit formula, the balancing law, the
//! angle-set trichotomy and the boundary sign pattern.
//!
//! `v = (-d_y u, d_x u)` and `P = -F(u) - |v|^2 / 2`. Derivatives are central
//! in the interior and one-sided second order on the edges of the grid.

use crate::nonlinearity::{Mode, ProblemSpec};
use crate::strip2d::Field2D;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Velocity, pressure and wall limits on a strip grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub x_min: f64,
    pub hx: f64,
    pub hy: f64,
    pub nx: usize,
    pub ny: usize,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub p: Vec<f64>,
    /// Width excluded at each end of the strip in every quadrature.
    pub end_margin: f64,
    pub limits: BoundaryLimits,
}

/// Limits of `v1` along the walls: top (`x2 = 1`) and bottom (`x2 = 0`), at
/// `x1 -> +inf` and `x1 -> -inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLimits {
    pub top_plus: f64,
    pub top_minus: f64,
    pub bottom_plus: f64,
    pub bottom_minus: f64,
}

fn d_dx(a: &[f64], nx: usize, ny: usize, hx: f64, i: usize, j: usize) -> f64 {
    let at = |i: usize| a[i * ny + j];
    if i == 0 {
        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * hx)
    } else if i == nx - 1 {
        (3.0 * at(nx - 1) - 4.0 * at(nx - 2) + at(nx - 3)) / (2.0 * hx)
    } else {
        (at(i + 1) - at(i - 1)) / (2.0 * hx)
    }
}

fn d_dy(a: &[f64], ny: usize, hy: f64, i: usize, j: usize) -> f64 {
    let col = &a[i * ny..(i + 1) * ny];
    if j == 0 {
        (-3.0 * col[0] + 4.0 * col[1] - col[2]) / (2.0 * hy)
    } else if j == ny - 1 {
        (3.0 * col[ny - 1] - 4.0 * col[ny - 2] + col[ny - 3]) / (2.0 * hy)
    } else {
        (col[j + 1] - col[j - 1]) / (2.0 * hy)
    }
}

impl FlowField {
    /// Assembles a flow from sampled components; limits are extracted from
    /// the wall rows.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        x_min: f64,
        hx: f64,
        nx: usize,
        ny: usize,
        v1: Vec<f64>,
        v2: Vec<f64>,
        p: Vec<f64>,
        end_margin: f64,
    ) -> FlowField {
        assert!(v1.len() == nx * ny && v2.len() == nx * ny && p.len() == nx * ny);
        let mut flow = FlowField {
            x_min,
            hx,
            hy: 1.0 / (ny - 1) as f64,
            nx,
            ny,
            v1,
            v2,
            p,
            end_margin,
            limits: BoundaryLimits { top_plus: 0.0, top_minus: 0.0, bottom_plus: 0.0, bottom_minus: 0.0 },
        };
        flow.limits = flow.extract_limits();
        flow
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.hx
    }
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }
    pub fn x_max(&self) -> f64 {
        self.x(self.nx - 1)
    }
    fn k(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    /// Columns at least `end_margin` away from both ends.
    pub fn trusted_columns(&self) -> std::ops::Range<usize> {
        let skip = (self.end_margin / self.hx - 1e-9).ceil().max(1.0) as usize;
        if 2 * skip >= self.nx {
            return 0..0;
        }
        skip..self.nx - skip
    }

    fn window_mean(&self, j: usize, x_lo: f64, x_hi: f64) -> f64 {
        let (mut s, mut n) = (0.0, 0usize);
        for i in 0..self.nx {
            let x = self.x(i);
            if x >= x_lo - 1e-12 && x <= x_hi + 1e-12 {
                s += self.v1[self.k(i, j)];
                n += 1;
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            s / n as f64
        }
    }

    /// Averages of `v1` on each wall over `[x_max - m - 1, x_max - m]` and
    /// `[x_min + m, x_min + m + 1]`, `m` the end margin.
    pub fn extract_limits(&self) -> BoundaryLimits {
        let m = self.end_margin;
        let (a, b) = (self.x_min, self.x_max());
        let top = self.ny - 1;
        BoundaryLimits {
            top_plus: self.window_mean(top, b - m - 1.0, b - m),
            top_minus: self.window_mean(top, a + m, a + m + 1.0),
            bottom_plus: self.window_mean(0, b - m - 1.0, b - m),
            bottom_minus: self.window_mean(0, a + m, a + m + 1.0),
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.v1
            .iter()
            .zip(&self.v2)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    /// Default stagnation threshold `1e-5 max |v|`.
    pub fn default_eps_stag(&self) -> f64 {
        1e-5 * self.max_speed()
    }
}

/// Flow of the stream function `u` with total potential `big_f`.
pub fn to_flow_with(u: &Field2D, big_f: impl Fn(f64) -> f64, end_margin: f64) -> FlowField {
    let (nx, ny, hx, hy) = (u.nx(), u.ny(), u.hx(), u.hy());
    let vals = u.values();
    let mut v1 = vec![0.0; nx * ny];
    let mut v2 = vec![0.0; nx * ny];
    let mut p = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let k = i * ny + j;
            let a = -d_dy(vals, ny, hy, i, j);
            let b = d_dx(vals, nx, ny, hx, i, j);
            v1[k] = a;
            v2[k] = b;
            p[k] = -big_f(vals[k]) - 0.5 * (a * a + b * b);
        }
    }
    FlowField::from_parts(u.x_min(), hx, nx, ny, v1, v2, p, end_margin)
}

/// Flow of a computed stream function.
pub fn to_flow(u: &Field2D, spec: &ProblemSpec, end_margin: f64) -> FlowField {
    to_flow_with(u, |s| spec.F(s), end_margin)
}

/// Max over interior nodes of the central-difference divergence.
pub fn divergence(v: &FlowField) -> f64 {
    let mut worst = 0.0_f64;
    for i in 1..v.nx - 1 {
        for j in 1..v.ny - 1 {
            let d = d_dx(&v.v1, v.nx, v.ny, v.hx, i, j) + d_dy(&v.v2, v.ny, v.hy, i, j);
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Max `|v2|` on the two walls.
pub fn slip(v: &FlowField) -> f64 {
    (0..v.nx)
        .flat_map(|i| [v.v2[v.k(i, 0)], v.v2[v.k(i, v.ny - 1)]])
        .fold(0.0, |a: f64, b| a.max(b.abs()))
}

/// Rows on which every stencil used below is central.
fn interior_rows(v: &FlowField, depth: usize) -> std::ops::Range<usize> {
    depth..v.ny - depth
}

/// Max over the trusted window of `|v . grad v + grad P|`.
///
/// Rows within two nodes of a wall are skipped: there the velocity is a
/// one-sided sample and the outer central difference would mix orders.
pub fn euler_residual(v: &FlowField) -> f64 {
    let mut worst = 0.0_f64;
    for i in v.trusted_columns() {
        for j in interior_rows(v, 2) {
            let k = v.k(i, j);
            let (a, b) = (v.v1[k], v.v2[k]);
            let r1 = a * d_dx(&v.v1, v.nx, v.ny, v.hx, i, j)
                + b * d_dy(&v.v1, v.ny, v.hy, i, j)
                + d_dx(&v.p, v.nx, v.ny, v.hx, i, j);
            let r2 = a * d_dx(&v.v2, v.nx, v.ny, v.hx, i, j)
                + b * d_dy(&v.v2, v.ny, v.hy, i, j)
                + d_dy(&v.p, v.ny, v.hy, i, j);
            worst = worst.max(r1.hypot(r2));
        }
    }
    worst
}

/// Vorticity `d_x v2 - d_y v1` at every node.
pub fn vorticity(v: &FlowField) -> Vec<f64> {
    let mut w = vec![0.0; v.nx * v.ny];
    for i in 0..v.nx {
        for j in 0..v.ny {
            w[v.k(i, j)] = d_dx(&v.v2, v.nx, v.ny, v.hx, i, j) - d_dy(&v.v1, v.ny, v.hy, i, j);
        }
    }
    w
}

/// Max over the trusted window of `|v . grad omega|`.
pub fn vorticity_transport(v: &FlowField) -> f64 {
    let w = vorticity(v);
    let mut worst = 0.0_f64;
    for i in v.trusted_columns() {
        for j in interior_rows(v, 3) {
            let k = v.k(i, j);
            let t = v.v1[k] * d_dx(&w, v.nx, v.ny, v.hx, i, j) + v.v2[k] * d_dy(&w, v.ny, v.hy, i, j);
            worst = worst.max(t.abs());
        }
    }
    worst
}

/// Scale of the truncation error of the momentum residual, `max|v| max|d^3 v|`,
/// with third derivatives taken by nested central differences.
pub fn truncation_scale(v: &FlowField) -> f64 {
    let mut d3 = 0.0_f64;
    let (nx, ny) = (v.nx, v.ny);
    for comp in [&v.v1, &v.v2] {
        for i in v.trusted_columns() {
            if i < 2 || i + 2 >= nx {
                continue;
            }
            for j in 2..ny - 2 {
                let at = |ii: usize, jj: usize| comp[ii * ny + jj];
                let dxxx = (at(i + 2, j) - 2.0 * at(i + 1, j) + 2.0 * at(i - 1, j) - at(i - 2, j)) / (2.0 * v.hx.powi(3));
                let dyyy = (at(i, j + 2) - 2.0 * at(i, j + 1) + 2.0 * at(i, j - 1) - at(i, j - 2)) / (2.0 * v.hy.powi(3));
                d3 = d3.max(dxxx.abs()).max(dyyy.abs());
            }
        }
    }
    v.max_speed() * d3
}

const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn cross(p: [f64; 2], q: [f64; 2]) -> f64 {
    p[0] * q[1] - p[1] * q[0]
}

/// Integral over `s in [0, h]` of `(|v x gx|^2 + |v x gy|^2) / |v|^2` with `v`
/// linear from `va` to `vb` and the gradients `gx`, `gy` held constant.
///
/// The integrand is a ratio of quadratics. Where `|v|` dips well below its
/// endpoint values (a turning layer thinner than the cell) it is integrated
/// in closed form; elsewhere five-point Gauss-Legendre is exact enough.
fn segment_curvature(va: [f64; 2], vb: [f64; 2], gx: [f64; 2], gy: [f64; 2], h: f64) -> f64 {
    let d = [(vb[0] - va[0]) / h, (vb[1] - va[1]) / h];
    let (ax, ay) = (cross(va, gx), cross(va, gy));
    let (bx, by) = (cross(d, gx), cross(d, gy));
    let (na, nb, nc) = (bx * bx + by * by, 2.0 * (ax * bx + ay * by), ax * ax + ay * ay);
    let (a, b, c) = (d[0] * d[0] + d[1] * d[1], 2.0 * (va[0] * d[0] + va[1] * d[1]), va[0] * va[0] + va[1] * va[1]);
    let den = |s: f64| (a * s + b) * s + c;
    let dmax = den(0.0).max(den(h));
    if dmax == 0.0 {
        return 0.0;
    }
    let smin = if a > 0.0 { (-b / (2.0 * a)).clamp(0.0, h) } else { 0.0 };
    if den(smin) > 1e-2 * dmax {
        return GAUSS5
            .iter()
            .map(|&(x, w)| {
                let s = 0.5 * h * (x + 1.0);
                w * ((na * s + nb) * s + nc) / den(s)
            })
            .sum::<f64>()
            * 0.5
            * h;
    }
    let disc = 4.0 * a * c - b * b;
    if disc <= 1e-14 * b * b {
        // v passes through the origin along a line: the ratio is constant
        return na / a * h;
    }
    let p = nb - na * b / a;
    let q = nc - na * c / a;
    let r = disc.sqrt();
    let atan_part = 2.0 / r * (((2.0 * a * h + b) / r).atan() - (b / r).atan());
    na / a * h + p / (2.0 * a) * (den(h) / den(0.0)).ln() + (q - p * b / (2.0 * a)) * atan_part
}

/// Total curvature `int |v1 grad v2 - v2 grad v1|^2 / |v|^2` over the trusted window.
///
/// Each column is integrated exactly in `x2` for the piecewise-linear
/// interpolant of `v` (node gradients averaged per cell), then the columns
/// are combined by the trapezoid rule. Exact integration matters near the
/// mid-height stagnation lines, where the direction of `v` turns across a
/// layer far thinner than `hy`; node sampling there picks up `hy |grad v|^2`
/// per column whatever the layer width. Cells whose end speeds are both
/// `<= eps_stag` contribute 0.
pub fn total_curvature(v: &FlowField, eps_stag: f64) -> f64 {
    let cols = v.trusted_columns();
    if cols.is_empty() {
        return 0.0;
    }
    let (first, last) = (cols.start, cols.end - 1);
    let column = |i: usize| -> f64 {
        let node = |j: usize| {
            let k = v.k(i, j);
            (
                [v.v1[k], v.v2[k]],
                [d_dx(&v.v1, v.nx, v.ny, v.hx, i, j), d_dx(&v.v2, v.nx, v.ny, v.hx, i, j)],
                [d_dy(&v.v1, v.ny, v.hy, i, j), d_dy(&v.v2, v.ny, v.hy, i, j)],
            )
        };
        let mut prev = node(0);
        let mut sum = 0.0;
        for j in 1..v.ny {
            let next = node(j);
            let speed = |w: [f64; 2]| w[0].hypot(w[1]);
            if speed(prev.0).max(speed(next.0)) > eps_stag {
                let gx = [0.5 * (prev.1[0] + next.1[0]), 0.5 * (prev.1[1] + next.1[1])];
                let gy = [0.5 * (prev.2[0] + next.2[0]), 0.5 * (prev.2[1] + next.2[1])];
                sum += segment_curvature(prev.0, next.0, gx, gy, v.hy);
            }
            prev = next;
        }
        sum
    };
    let total: f64 = cols
        .map(|i| {
            let w = if i == first || i == last { 0.5 } else { 1.0 };
            w * column(i)
        })
        .sum();
    total * v.hx
}

/// `(pi/4)(T+|T+| - T-|T-| + B-|B-| - B+|B+|)` from the wall limits.
pub fn curvature_formula(l: &BoundaryLimits) -> f64 {
    let sq = |x: f64| x * x.abs();
    PI / 4.0 * (sq(l.top_plus) - sq(l.top_minus) + sq(l.bottom_minus) - sq(l.bottom_plus))
}

/// `|(T+^2 - T-^2) - (B+^2 - B-^2)|`.
pub fn balancing_defect(l: &BoundaryLimits) -> f64 {
    ((l.top_plus.powi(2) - l.top_minus.powi(2)) - (l.bottom_plus.powi(2) - l.bottom_minus.powi(2))).abs()
}

/// Largest squared limit, the natural scale of the balancing defect.
pub fn limit_scale(l: &BoundaryLimits) -> f64 {
    [l.top_plus, l.top_minus, l.bottom_plus, l.bottom_minus]
        .iter()
        .map(|x| x * x)
        .fold(0.0, f64::max)
}

/// Outcome of the angle-set classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleClass {
    Shear,
    FullCircle,
    Semicircle,
    Inconclusive,
}

impl AngleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            AngleClass::Shear => "shear",
            AngleClass::FullCircle => "full_circle",
            AngleClass::Semicircle => "semicircle",
            AngleClass::Inconclusive => "inconclusive",
        }
    }
}

/// Histogram of flow directions in 360 one-degree sectors centred on whole
/// degrees (sector 0 is the positive `x1` axis, sector 90 points up).
#[derive(Debug, Clone, PartialEq)]
pub struct AngleHistogram {
    pub counts: Vec<usize>,
    /// Minimum samples for a sector to count as occupied.
    pub min_count: usize,
    /// Longest run of empty sectors tolerated inside an occupied arc.
    pub max_gap: usize,
}

impl AngleHistogram {
    pub fn occupied(&self, k: usize) -> bool {
        self.counts[k % 360] >= self.min_count
    }

    pub fn occupied_count(&self) -> usize {
        (0..360).filter(|&k| self.occupied(k)).count()
    }

    /// Samples in sectors strictly inside the lower half-circle (181..=359).
    pub fn lower_half_mass(&self) -> usize {
        self.counts[181..360].iter().sum()
    }

    fn arc_filled(&self, start: usize, len: usize) -> bool {
        let mut gap = 0;
        for k in start..start + len {
            if self.occupied(k) {
                gap = 0;
            } else {
                gap += 1;
                if gap > self.max_gap {
                    return false;
                }
            }
        }
        self.occupied(start) && self.occupied(start + len - 1)
    }

    fn arc_empty(&self, start: usize, len: usize) -> bool {
        (start..start + len).all(|k| !self.occupied(k))
    }

    pub fn classify(&self) -> AngleClass {
        let occ: Vec<usize> = (0..360).filter(|&k| self.occupied(k)).collect();
        if occ.is_empty() {
            return AngleClass::Inconclusive;
        }
        let k0 = occ[0];
        if occ.iter().all(|&k| k == k0 || k == (k0 + 180) % 360) {
            return AngleClass::Shear;
        }
        if self.arc_filled(0, 360) && (0..360).all(|k| !self.arc_empty(k, self.max_gap + 1)) {
            return AngleClass::FullCircle;
        }
        for start in 0..360 {
            if self.arc_filled(start, 181) && self.arc_empty(start + 181, 179) {
                return AngleClass::Semicircle;
            }
        }
        AngleClass::Inconclusive
    }

    /// Start sector of the closed half-circle holding every occupied sector.
    pub fn semicircle_start(&self) -> Option<usize> {
        (0..360).find(|&s| self.arc_filled(s, 181) && self.arc_empty(s + 181, 179))
    }
}

/// Bins `v / |v|` over all nodes (walls included) with `|v| > eps_stag`.
pub fn angle_histogram(v: &FlowField, eps_stag: f64, min_count: usize, max_gap: usize) -> AngleHistogram {
    let mut counts = vec![0usize; 360];
    for (a, b) in v.v1.iter().zip(&v.v2) {
        if a.hypot(*b) <= eps_stag {
            continue;
        }
        let deg = b.atan2(*a).to_degrees();
        let k = ((deg + 0.5).floor() as i64).rem_euclid(360) as usize;
        counts[k] += 1;
    }
    AngleHistogram { counts, min_count, max_gap }
}

/// Shear, full circle, semicircle or inconclusive.
pub fn angle_classify(v: &FlowField, eps_stag: f64, min_count: usize) -> AngleClass {
    angle_histogram(v, eps_stag, min_count, DEFAULT_MAX_GAP).classify()
}

pub const DEFAULT_MIN_COUNT: usize = 3;
pub const DEFAULT_MAX_GAP: usize = 2;

/// Result of the wall sign-pattern check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignPattern {
    pub ok: bool,
    pub violations: Vec<String>,
    /// Abscissa where `v1(., 1)` changes sign (ramp mode).
    pub top_crossing: Option<f64>,
    /// Distance from the crossing to the nearest node on each side, after
    /// translating the crossing to the origin.
    pub crossing_bracket: Option<(f64, f64)>,
    pub bottom_max: f64,
}

/// Checks the wall behaviour of `v1` expected for each mode.
///
/// Ramp mode: `v1 < 0` on the bottom wall, exactly one sign change on the
/// top wall, top row nondecreasing and bottom row nonincreasing on the
/// trusted window. Zero mode: `v1 >= -tol` on top and `v1 <= tol` on the bottom.
pub fn boundary_sign_pattern(v: &FlowField, mode: Mode) -> SignPattern {
    let top = v.ny - 1;
    let tv: Vec<f64> = (0..v.nx).map(|i| v.v1[v.k(i, top)]).collect();
    let bv: Vec<f64> = (0..v.nx).map(|i| v.v1[v.k(i, 0)]).collect();
    let scale = tv.iter().chain(&bv).fold(0.0_f64, |a, x| a.max(x.abs())).max(1.0);
    let tol = 1e-9 * scale;
    let mut violations = Vec::new();
    let bottom_max = bv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut top_crossing = None;
    let mut crossing_bracket = None;
    match mode {
        Mode::Ramp => {
            if bottom_max >= 0.0 {
                violations.push(format!("bottom v1 reaches {bottom_max:e}"));
            }
            let signs: Vec<(usize, bool)> = tv
                .iter()
                .enumerate()
                .filter(|(_, x)| **x != 0.0)
                .map(|(i, x)| (i, *x > 0.0))
                .collect();
            let changes: Vec<usize> = signs
                .windows(2)
                .filter(|w| w[0].1 != w[1].1)
                .map(|w| w[0].0)
                .collect();
            if changes.len() != 1 {
                violations.push(format!("top v1 changes sign {} times", changes.len()));
            } else {
                let i = changes[0];
                let mut i1 = i + 1;
                while tv[i1] == 0.0 {
                    i1 += 1;
                }
                let (a, b) = (tv[i], tv[i1]);
                let xc = v.x(i) + (v.x(i1) - v.x(i)) * a / (a - b);
                top_crossing = Some(xc);
                crossing_bracket = Some((xc - v.x(i), v.x(i1) - xc));
                if a > 0.0 {
                    violations.push("top v1 goes from positive to negative".into());
                }
            }
            for i in v.trusted_columns().skip(1) {
                if tv[i] < tv[i - 1] - tol {
                    violations.push(format!("top v1 decreases at x1 = {:.4}", v.x(i)));
                    break;
                }
            }
            for i in v.trusted_columns().skip(1) {
                if bv[i] > bv[i - 1] + tol {
                    violations.push(format!("bottom v1 increases at x1 = {:.4}", v.x(i)));
                    break;
                }
            }
        }
        Mode::Zero => {
            if let Some(m) = tv.iter().cloned().reduce(f64::min) {
                if m < -tol {
                    violations.push(format!("top v1 reaches {m:e}"));
                }
            }
            if bottom_max > tol {
                violations.push(format!("bottom v1 reaches {bottom_max:e}"));
            }
        }
    }
    SignPattern {
        ok: violations.is_empty(),
        violations,
        top_crossing,
        crossing_bracket,
        bottom_max,
    }
}

/// Flat summary of every flow check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub euler_residual: f64,
    /// `euler_residual / truncation_scale`.
    pub euler_residual_scaled: f64,
    pub truncation_scale: f64,
    pub divergence: f64,
    pub slip: f64,
    pub vorticity_transport: f64,
    pub total_curvature_quadrature: f64,
    pub total_curvature_formula: f64,
    pub curvature_relative_gap: f64,
    pub balancing_defect: f64,
    pub balancing_defect_relative: f64,
    pub limit_top_plus: f64,
    pub limit_top_minus: f64,
    pub limit_bottom_plus: f64,
    pub limit_bottom_minus: f64,
    pub eps_stag: f64,
    pub angle_class: AngleClass,
    pub occupied_sectors: usize,
    pub lower_half_mass: usize,
    pub sign_pattern_ok: bool,
    pub top_crossing: Option<f64>,
}

impl FlowReport {
    /// All residual-like entries are nonnegative (NaN fails).
    pub fn is_well_formed(&self) -> bool {
        [
            self.euler_residual,
            self.divergence,
            self.slip,
            self.vorticity_transport,
            self.total_curvature_quadrature,
            self.balancing_defect,
        ]
        .iter()
        .all(|x| *x >= 0.0)
    }
}

/// Tolerances of the angle and stagnation checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowCheckOptions {
    /// Stagnation threshold as a fraction of `max |v|`.
    pub eps_stag_rel: f64,
    /// Minimum samples for an occupied angle sector.
    pub min_count: usize,
    /// Longest run of empty sectors tolerated inside an occupied arc.
    pub max_gap: usize,
}

impl Default for FlowCheckOptions {
    fn default() -> Self {
        FlowCheckOptions { eps_stag_rel: 1e-5, min_count: DEFAULT_MIN_COUNT, max_gap: DEFAULT_MAX_GAP }
    }
}

/// Runs every check with default tolerances.
pub fn flow_report(v: &FlowField, mode: Option<Mode>) -> FlowReport {
    flow_report_with(v, mode, &FlowCheckOptions::default())
}

/// Runs every check.
pub fn flow_report_with(v: &FlowField, mode: Option<Mode>, opts: &FlowCheckOptions) -> FlowReport {
    let eps = opts.eps_stag_rel * v.max_speed();
    let l = v.limits;
    let quad = total_curvature(v, eps);
    let formula = curvature_formula(&l);
    let hist = angle_histogram(v, eps, opts.min_count, opts.max_gap);
    let res = euler_residual(v);
    let scale = truncation_scale(v);
    let sign = mode.map(|m| boundary_sign_pattern(v, m));
    FlowReport {
        euler_residual: res,
        euler_residual_scaled: if scale > 0.0 { res / scale } else { 0.0 },
        truncation_scale: scale,
        divergence: divergence(v),
        slip: slip(v),
        vorticity_transport: vorticity_transport(v),
        total_curvature_quadrature: quad,
        total_curvature_formula: formula,
        curvature_relative_gap: (quad - formula).abs() / formula.abs().max(1.0),
        balancing_defect: balancing_defect(&l),
        balancing_defect_relative: balancing_defect(&l) / limit_scale(&l).max(f64::MIN_POSITIVE),
        limit_top_plus: l.top_plus,
        limit_top_minus: l.top_minus,
        limit_bottom_plus: l.bottom_plus,
        limit_bottom_minus: l.bottom_minus,
        eps_stag: eps,
        angle_class: hist.classify(),
        occupied_sectors: hist.occupied_count(),
        lower_half_mass: hist.lower_half_mass(),
        sign_pattern_ok: sign.as_ref().map(|s| s.ok).unwrap_or(false),
        top_crossing: sign.and_then(|s| s.top_crossing),
    }
}

/// Analytic fixtures with known answers.
pub mod fixtures {
    use super::*;

    /// Parallel flow `(g(x2), 0)` with constant pressure.
    pub fn shear(half_length: f64, hx: f64, ny: usize, g: impl Fn(f64) -> f64) -> FlowField {
        let nx = (2.0 * half_length / hx).round() as usize + 1;
        let hy = 1.0 / (ny - 1) as f64;
        let mut v1 = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                v1[i * ny + j] = g(j as f64 * hy);
            }
        }
        FlowField::from_parts(-half_length, hx, nx, ny, v1, vec![0.0; nx * ny], vec![1.0; nx * ny], 0.0)
    }

    /// Stream function `sin x1 sin(pi x2)`, which solves `-Delta u = (1 + pi^2) u`.
    pub fn cellular_stream(half_length: f64, hx: f64, ny: usize) -> Field2D {
        let nx = (2.0 * half_length / hx).round() as usize + 1;
        let hy = 1.0 / (ny - 1) as f64;
        let mut values = vec![0.0; nx * ny];
        for i in 0..nx {
            let x = -half_length + i as f64 * hx;
            for j in 0..ny {
                values[i * ny + j] = if j == 0 || j == ny - 1 { 0.0 } else { x.sin() * (PI * j as f64 * hy).sin() };
            }
        }
        let left = values[..ny].to_vec();
        let right = values[(nx - 1) * ny..].to_vec();
        Field2D::new(Mode::Zero, -half_length, hx, nx, ny, left, right, values)
            .expect("fixture grid is consistent")
    }

    /// Potential `F(s) = (1 + pi^2) s^2 / 2` matching [`cellular_stream`].
    pub fn cellular_potential(s: f64) -> f64 {
        0.5 * (1.0 + PI * PI) * s * s
    }

    /// Flow of [`cellular_stream`] through the discrete pipeline.
    pub fn cellular(half_length: f64, hx: f64, ny: usize, end_margin: f64) -> FlowField {
        to_flow_with(&cellular_stream(half_length, hx, ny), cellular_potential, end_margin)
    }

    /// Exact samples of `(-pi sin x1 cos pi x2, cos x1 sin pi x2)`.
    pub fn cellular_exact(half_length: f64, hx: f64, ny: usize, end_margin: f64) -> FlowField {
        let nx = (2.0 * half_length / hx).round() as usize + 1;
        let hy = 1.0 / (ny - 1) as f64;
        let (mut v1, mut v2, mut p) = (vec![0.0; nx * ny], vec![0.0; nx * ny], vec![0.0; nx * ny]);
        for i in 0..nx {
            let x = -half_length + i as f64 * hx;
            for j in 0..ny {
                let y = j as f64 * hy;
                let k = i * ny + j;
                v1[k] = -PI * x.sin() * (PI * y).cos();
                v2[k] = x.cos() * (PI * y).sin();
                let u = x.sin() * (PI * y).sin();
                p[k] = -cellular_potential(u) - 0.5 * (v1[k] * v1[k] + v2[k] * v2[k]);
            }
        }
        FlowField::from_parts(-half_length, hx, nx, ny, v1, v2, p, end_margin)
    }
}
