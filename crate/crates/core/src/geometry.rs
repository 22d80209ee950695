//! Level curves, streamlines and the search for a non-convex superlevel set.
//!
//! Point evaluation is bilinear throughout.

use crate::eulerflow::FlowField;
use crate::error::{Error, Result};
use crate::strip2d::Field2D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

/// Ordered points, optionally closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Polyline {
    fn dedup(mut self) -> Self {
        self.points.dedup_by(|a, b| a == b);
        if self.closed && self.points.len() > 1 && self.points.first() == self.points.last() {
            self.points.pop();
        }
        self
    }
}

/// Bilinear interpolation of grid samples, clamped to the grid.
fn bilinear_raw(values: &[f64], x_min: f64, hx: f64, hy: f64, nx: usize, ny: usize, x: f64, y: f64) -> f64 {
    let sx = ((x - x_min) / hx).clamp(0.0, (nx - 1) as f64);
    let sy = (y / hy).clamp(0.0, (ny - 1) as f64);
    let i = (sx.floor() as usize).min(nx - 2);
    let j = (sy.floor() as usize).min(ny - 2);
    let (tx, ty) = (sx - i as f64, sy - j as f64);
    let at = |a: usize, b: usize| values[a * ny + b];
    (1.0 - tx) * ((1.0 - ty) * at(i, j) + ty * at(i, j + 1)) + tx * ((1.0 - ty) * at(i + 1, j) + ty * at(i + 1, j + 1))
}

/// Bilinear value of `u` at `(x, y)`.
pub fn eval(u: &Field2D, x: f64, y: f64) -> f64 {
    bilinear_raw(u.values(), u.x_min(), u.hx(), u.hy(), u.nx(), u.ny(), x, y)
}

/// Bilinear velocity at `(x, y)`.
pub fn eval_velocity(v: &FlowField, x: f64, y: f64) -> [f64; 2] {
    [
        bilinear_raw(&v.v1, v.x_min, v.hx, v.hy, v.nx, v.ny, x, y),
        bilinear_raw(&v.v2, v.x_min, v.hx, v.hy, v.nx, v.ny, x, y),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum EdgeKey {
    /// Edge from node `(i, j)` to `(i + 1, j)`.
    H(usize, usize),
    /// Edge from node `(i, j)` to `(i, j + 1)`.
    V(usize, usize),
}

/// Marching-squares extraction of `{u = alpha}`.
///
/// Nodes with `u >= alpha` count as inside; saddle cells are resolved by the
/// cell average. Polylines start from the lexicographically first free end
/// (open curves) or cell (closed curves).
pub fn level_curve(u: &Field2D, alpha: f64) -> Result<Vec<Polyline>> {
    let (lo, hi) = u.min_max();
    if !(alpha >= lo && alpha <= hi) {
        return Err(Error::EmptyLevelSet { alpha, min: lo, max: hi });
    }
    let (nx, ny) = (u.nx(), u.ny());
    let inside = |i: usize, j: usize| u.at(i, j) >= alpha;
    let point = |k: EdgeKey| -> [f64; 2] {
        let ((i0, j0), (i1, j1)) = match k {
            EdgeKey::H(i, j) => ((i, j), (i + 1, j)),
            EdgeKey::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (a, b) = (u.at(i0, j0), u.at(i1, j1));
        let t = if a == b { 0.5 } else { ((alpha - a) / (b - a)).clamp(0.0, 1.0) };
        [
            u.x(i0) + t * (u.x(i1) - u.x(i0)),
            u.y(j0) + t * (u.y(j1) - u.y(j0)),
        ]
    };
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            // corners counter-clockwise from bottom-left
            let c = [inside(i, j), inside(i + 1, j), inside(i + 1, j + 1), inside(i, j + 1)];
            let edges = [EdgeKey::H(i, j), EdgeKey::V(i + 1, j), EdgeKey::H(i, j + 1), EdgeKey::V(i, j)];
            let crossing: Vec<usize> = (0..4).filter(|&e| c[e] != c[(e + 1) % 4]).collect();
            match crossing.len() {
                2 => segments.push((edges[crossing[0]], edges[crossing[1]])),
                4 => {
                    let mean = 0.25 * (u.at(i, j) + u.at(i + 1, j) + u.at(i + 1, j + 1) + u.at(i, j + 1));
                    // join each edge to the neighbour that keeps the centre's side connected
                    if (mean >= alpha) == c[0] {
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }
    let mut incident: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        incident.entry(*a).or_default().push(s);
        incident.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut ends: Vec<EdgeKey> = incident
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(k, _)| *k)
        .collect();
    ends.sort();
    let walk = |start_key: EdgeKey, first_seg: usize, used: &mut [bool]| -> (Vec<[f64; 2]>, EdgeKey) {
        let mut pts = vec![point(start_key)];
        let mut key = start_key;
        let mut seg = first_seg;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            key = if a == key { b } else { a };
            pts.push(point(key));
            match incident[&key].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        (pts, key)
    };
    let mut lines = Vec::new();
    for k in ends {
        let s = incident[&k][0];
        if used[s] {
            continue;
        }
        let (pts, _) = walk(k, s, &mut used);
        lines.push(Polyline { points: pts, closed: false }.dedup());
    }
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        let k = segments[s].0;
        let (pts, _) = walk(k, s, &mut used);
        lines.push(Polyline { points: pts, closed: true }.dedup());
    }
    Ok(lines)
}

/// Points `p, q` in `{u > alpha}` whose midpoint is not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityWitness {
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub mid: [f64; 2],
    pub alpha: f64,
    pub u_p: f64,
    pub u_q: f64,
    pub u_mid: f64,
}

impl ConvexityWitness {
    /// Smallest of the three interpolated inequality margins.
    pub fn margin(&self) -> f64 {
        (self.u_p - self.alpha).min(self.u_q - self.alpha).min(self.alpha - self.u_mid)
    }

    /// Re-evaluates all three inequalities on `u` with margin `tol`.
    pub fn validate(&self, u: &Field2D, tol: f64) -> bool {
        let mid = [0.5 * (self.p[0] + self.q[0]), 0.5 * (self.p[1] + self.q[1])];
        mid == self.mid
            && eval(u, self.p[0], self.p[1]) >= self.alpha + tol
            && eval(u, self.q[0], self.q[1]) >= self.alpha + tol
            && eval(u, mid[0], mid[1]) <= self.alpha - tol
    }
}

/// Tunables of the witness search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WitnessOptions {
    pub tol: f64,
    pub budget: usize,
    pub seed: u64,
    /// Width excluded at each end of the strip.
    pub end_margin: f64,
    /// Number of abscissae sampled per side in the directed phase.
    pub directed_columns: usize,
}

impl Default for WitnessOptions {
    fn default() -> Self {
        WitnessOptions { tol: 1e-4, budget: 100_000, seed: 0x5EED, end_margin: 2.0, directed_columns: 64 }
    }
}

/// Outcome of the search, including how much of the budget was spent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessSearch {
    pub witness: Option<ConvexityWitness>,
    pub candidates_tried: usize,
    pub directed: bool,
}

fn check_pair(u: &Field2D, alpha: f64, tol: f64, p: [f64; 2], q: [f64; 2]) -> Option<ConvexityWitness> {
    let u_p = eval(u, p[0], p[1]);
    if u_p < alpha + tol {
        return None;
    }
    let u_q = eval(u, q[0], q[1]);
    if u_q < alpha + tol {
        return None;
    }
    let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
    let u_mid = eval(u, mid[0], mid[1]);
    (u_mid <= alpha - tol).then_some(ConvexityWitness { p, q, mid, alpha, u_p, u_q, u_mid })
}

fn first_hit(u: &Field2D, alpha: f64, tol: f64, batch: &[([f64; 2], [f64; 2])]) -> Option<ConvexityWitness> {
    batch
        .par_iter()
        .find_map_first(|&(p, q)| check_pair(u, alpha, tol, p, q))
}

/// Searches the trusted window for a witness that `{u > alpha}` is not convex.
///
/// The directed phase pairs a point at the top of a column's superlevel
/// band on the left with points at the lower and upper edges of a wider band
/// further right, so that the midpoint falls below the narrow band. A seeded
/// random phase over pairs in the superlevel set spends the rest of the budget.
pub fn find_nonconvexity_witness(u: &Field2D, alpha: f64, opts: &WitnessOptions) -> WitnessSearch {
    let (x_lo, x_hi) = (u.x_min() + opts.end_margin, u.x_max() - opts.end_margin);
    let mut tried = 0usize;
    if x_hi <= x_lo {
        return WitnessSearch { witness: None, candidates_tried: 0, directed: false };
    }
    let ny = u.ny();
    let n = opts.directed_columns.max(2);
    let xs: Vec<f64> = (0..n).map(|k| x_lo + (x_hi - x_lo) * k as f64 / (n - 1) as f64).collect();
    let column = |x: f64| -> Vec<f64> { (0..ny).map(|j| eval(u, x, u.y(j))).collect() };
    let cols: Vec<Vec<f64>> = xs.iter().map(|&x| column(x)).collect();
    let peak = |c: &[f64]| -> usize { (0..ny).max_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap_or(0) };
    let band_edges = |c: &[f64]| -> Vec<usize> {
        let level = alpha + 2.0 * opts.tol;
        let first = (0..ny).find(|&j| c[j] >= level);
        let last = (0..ny).rev().find(|&j| c[j] >= level);
        match (first, last) {
            (Some(a), Some(b)) => {
                let mut v = vec![a, b, (a + 1).min(b), b.saturating_sub(1).max(a)];
                v.sort();
                v.dedup();
                v
            }
            _ => Vec::new(),
        }
    };
    let mut batch = Vec::new();
    for (a, ca) in cols.iter().enumerate() {
        let jp = peak(ca);
        let p = [xs[a], u.y(jp)];
        for (b, cb) in cols.iter().enumerate().skip(a + 1) {
            for jq in band_edges(cb) {
                batch.push((p, [xs[b], u.y(jq)]));
            }
        }
    }
    batch.truncate(opts.budget);
    tried += batch.len();
    if let Some(w) = first_hit(u, alpha, opts.tol, &batch) {
        return WitnessSearch { witness: Some(w), candidates_tried: tried, directed: true };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    const BATCH: usize = 4096;
    let sample = |rng: &mut ChaCha8Rng| -> [f64; 2] { [rng.gen_range(x_lo..=x_hi), rng.gen_range(0.0..=1.0)] };
    while tried < opts.budget {
        let k = BATCH.min(opts.budget - tried);
        let pairs: Vec<([f64; 2], [f64; 2])> = (0..k).map(|_| (sample(&mut rng), sample(&mut rng))).collect();
        tried += k;
        if let Some(w) = first_hit(u, alpha, opts.tol, &pairs) {
            return WitnessSearch { witness: Some(w), candidates_tried: tried, directed: false };
        }
    }
    WitnessSearch { witness: None, candidates_tried: tried, directed: false }
}

/// Exhaustive midpoint test over all node pairs of a `coarsen`-times coarser
/// grid restricted to the trusted window: returns a violating pair if the
/// rasterized `{u > alpha}` is not midpoint convex.
pub fn brute_force_nonconvex(u: &Field2D, alpha: f64, coarsen: usize, end_margin: f64) -> Option<([f64; 2], [f64; 2])> {
    let c = coarsen.max(1);
    let (x_lo, x_hi) = (u.x_min() + end_margin, u.x_max() - end_margin);
    let mut pts = Vec::new();
    for i in (0..u.nx()).step_by(c) {
        let x = u.x(i);
        if x < x_lo - 1e-12 || x > x_hi + 1e-12 {
            continue;
        }
        for j in (0..u.ny()).step_by(c) {
            if u.at(i, j) > alpha {
                pts.push([x, u.y(j)]);
            }
        }
    }
    (0..pts.len()).into_par_iter().find_map_first(|a| {
        let p = pts[a];
        pts[a + 1..].iter().find_map(|&q| {
            let m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            (eval(u, m[0], m[1]) <= alpha).then_some((p, q))
        })
    })
}

/// Classic fourth-order Runge-Kutta traces of `dx/dt = v(x)`.
///
/// A trace stops on leaving the grid, at a stagnation point
/// (`|v| <= eps_stag`) or after `max_steps` steps.
pub fn trace_streamlines(v: &FlowField, seeds: &[[f64; 2]], step: f64, max_steps: usize, eps_stag: f64) -> Result<Vec<Polyline>> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let (x0, x1) = (v.x_min, v.x_max());
    let inside = |p: [f64; 2]| p[0] >= x0 && p[0] <= x1 && p[1] >= 0.0 && p[1] <= 1.0;
    let f = |p: [f64; 2]| eval_velocity(v, p[0], p[1]);
    let add = |p: [f64; 2], k: [f64; 2], s: f64| [p[0] + s * k[0], p[1] + s * k[1]];
    Ok(seeds
        .par_iter()
        .map(|&seed| {
            let mut pts = vec![seed];
            let mut p = seed;
            for _ in 0..max_steps {
                let k1 = f(p);
                if k1[0].hypot(k1[1]) <= eps_stag {
                    break;
                }
                let k2 = f(add(p, k1, 0.5 * step));
                let k3 = f(add(p, k2, 0.5 * step));
                let k4 = f(add(p, k3, step));
                let next = [
                    p[0] + step / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                    p[1] + step / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
                ];
                if !inside(next) || next == p {
                    break;
                }
                pts.push(next);
                p = next;
            }
            Polyline { points: pts, closed: false }
        })
        .collect())
}

/// CSV with header `id,x1,x2`, one row per point.
pub fn polylines_csv(lines: &[Polyline]) -> String {
    let mut s = String::from("id,x1,x2\n");
    for (id, l) in lines.iter().enumerate() {
        for p in &l.points {
            let _ = writeln!(s, "{id},{:.16e},{:.16e}", p[0], p[1]);
        }
    }
    s
}

/// Minimal SVG with one path per polyline; `x2` points up.
pub fn polylines_svg(lines: &[Polyline], x_range: (f64, f64), width_px: f64) -> String {
    let scale = width_px / (x_range.1 - x_range.0);
    let height = scale;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.3} {:.3}\">\n",
        width_px, height, width_px, height
    );
    for l in lines {
        if l.points.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (k, p) in l.points.iter().enumerate() {
            let (px, py) = ((p[0] - x_range.0) * scale, (1.0 - p[1]) * scale);
            let _ = write!(d, "{}{:.3},{:.3} ", if k == 0 { "M" } else { "L" }, px, py);
        }
        if l.closed {
            d.push('Z');
        }
        let _ = writeln!(s, "<path d=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>", d.trim_end());
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvp1d::Profile1D;
    use crate::eulerflow::fixtures;
    use crate::nonlinearity::Mode;
    use crate::strip2d::uniform_field;

    fn linear_field() -> Field2D {
        uniform_field(&Profile1D::trivial(Mode::Ramp, 16), 3.0, 0.125).unwrap()
    }

    #[test]
    fn horizontal_level_line() {
        let u = linear_field();
        let lines = level_curve(&u, 0.5).unwrap();
        assert_eq!(lines.len(), 1);
        assert!(!lines[0].closed);
        assert_eq!(lines[0].points.len(), u.nx());
        for p in &lines[0].points {
            assert!((p[1] - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn level_outside_range() {
        let u = linear_field();
        assert!(matches!(level_curve(&u, 2.0), Err(Error::EmptyLevelSet { .. })));
    }

    #[test]
    fn level_points_lie_on_level() {
        let u = fixtures::cellular_stream(4.0, 1.0 / 16.0, 17);
        for alpha in [-0.7, 0.1, 0.33] {
            for l in level_curve(&u, alpha).unwrap() {
                for p in &l.points {
                    assert!((eval(&u, p[0], p[1]) - alpha).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn half_strip_has_no_witness() {
        let u = linear_field();
        let opts = WitnessOptions { budget: 20_000, end_margin: 0.5, ..Default::default() };
        for alpha in [0.2, 0.5, 0.8] {
            assert!(find_nonconvexity_witness(&u, alpha, &opts).witness.is_none());
            assert!(brute_force_nonconvex(&u, alpha, 1, 0.5).is_none());
        }
    }

    #[test]
    fn shear_streamline_is_horizontal() {
        let v = fixtures::shear(3.0, 0.125, 17, |_| 1.0);
        let lines = trace_streamlines(&v, &[[0.0, 0.5]], 0.05, 200, 1e-9).unwrap();
        assert!(lines[0].points.len() > 10);
        for p in &lines[0].points {
            assert_eq!(p[1], 0.5);
        }
    }

    #[test]
    fn exports_have_expected_shape() {
        let l = vec![Polyline { points: vec![[0.0, 0.0], [1.0, 0.5]], closed: false }];
        let csv = polylines_csv(&l);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("id,x1,x2\n0,"));
        assert!(polylines_svg(&l, (-1.0, 1.0), 400.0).contains("<path d=\"M"));
    }
}
