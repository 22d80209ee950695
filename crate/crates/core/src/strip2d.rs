//! Minimization on truncated strips `[-L, L] x [0, 1]` and continuation in
//! `L` toward the monotone heteroclinic connecting `phi` (left) to `phibar`
//! (right).
//!
//! Storage is column-major in `x1`: node `(i, j)` lives at `i * ny + j`.
//! The discrete energy weights x-edges by trapezoid weights in `x2` and
//! y-edges by trapezoid weights in `x1`, so a field independent of `x1` has
//! energy exactly `2L` times the one-dimensional discrete energy, and its
//! gradient at interior nodes is `-hx hy (Delta_h u + f(u))`.

use crate::bvp1d::Profile1D;
use crate::error::{Error, Result};
use crate::nonlinearity::{Mode, ProblemSpec};
use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Sampled stream function on a strip with pinned traces.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    mode: Mode,
    x_min: f64,
    hx: f64,
    hy: f64,
    nx: usize,
    ny: usize,
    left: Vec<f64>,
    right: Vec<f64>,
    values: Vec<f64>,
}

impl Field2D {
    /// Builds a field from raw values, checking shape and all four traces.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mode: Mode,
        x_min: f64,
        hx: f64,
        nx: usize,
        ny: usize,
        left: Vec<f64>,
        right: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if nx < 3 || ny < 3 || values.len() != nx * ny || left.len() != ny || right.len() != ny {
            return Err(Error::InvalidArgument(format!(
                "field shape mismatch: nx={nx}, ny={ny}, values={}, traces=({}, {})",
                values.len(),
                left.len(),
                right.len()
            )));
        }
        if !(hx > 0.0) {
            return Err(Error::InvalidArgument(format!("hx must be positive, got {hx}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field has non-finite values".into()));
        }
        let f = Self {
            mode,
            x_min,
            hx,
            hy: 1.0 / (ny - 1) as f64,
            nx,
            ny,
            left,
            right,
            values,
        };
        f.check_traces()?;
        Ok(f)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_min + (self.nx - 1) as f64 * self.hx
    }
    /// Half the strip length.
    pub fn half_length(&self) -> f64 {
        0.5 * (self.nx - 1) as f64 * self.hx
    }
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.hx
    }
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ny + j]
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn column(&self, i: usize) -> &[f64] {
        &self.values[i * self.ny..(i + 1) * self.ny]
    }
    pub fn left_trace(&self) -> &[f64] {
        &self.left
    }
    pub fn right_trace(&self) -> &[f64] {
        &self.right
    }

    /// Same values, with the `x1` coordinates moved by `-a`.
    pub fn translated(&self, a: f64) -> Field2D {
        Field2D { x_min: self.x_min - a, ..self.clone() }
    }

    fn check_traces(&self) -> Result<()> {
        let (b0, b1) = self.mode.boundary();
        for i in 0..self.nx {
            if self.at(i, 0) != b0 || self.at(i, self.ny - 1) != b1 {
                return Err(Error::TraceMismatch { which: if self.at(i, 0) != b0 { "bottom" } else { "top" } });
            }
        }
        if self.column(0) != self.left.as_slice() {
            return Err(Error::TraceMismatch { which: "left" });
        }
        if self.column(self.nx - 1) != self.right.as_slice() {
            return Err(Error::TraceMismatch { which: "right" });
        }
        Ok(())
    }

    /// Largest violation of `left <= u <= right` row-wise (0 inside the corridor).
    pub fn corridor_violation(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.nx {
            for j in 0..self.ny {
                let u = self.at(i, j);
                worst = worst.max(self.left[j] - u).max(u - self.right[j]);
            }
        }
        worst
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }

    /// Values at abscissa `x` for every row, by 4-point Lagrange interpolation
    /// in `x1`; outside the grid the left/right traces are used.
    pub fn column_at(&self, x: f64) -> Vec<f64> {
        let s = (x - self.x_min) / self.hx;
        if s <= 0.0 {
            return self.left.clone();
        }
        if s >= (self.nx - 1) as f64 {
            return self.right.clone();
        }
        let (i0, w) = cubic_weights(s, self.nx);
        (0..self.ny)
            .map(|j| (0..4).map(|k| w[k] * self.at(i0 + k, j)).sum())
            .collect()
    }
}

/// Stencil start and Lagrange weights for fractional index `s` on `n` nodes.
pub(crate) fn cubic_weights(s: f64, n: usize) -> (usize, [f64; 4]) {
    let base = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let t = s - base as f64;
    let w = [
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ];
    (base, w)
}

fn check_pair(phi: &Profile1D, phibar: &Profile1D) -> Result<()> {
    if phi.mode() != phibar.mode() || phi.m() != phibar.m() {
        return Err(Error::InvalidArgument(
            "end profiles must share mode and grid".into(),
        ));
    }
    Ok(())
}

fn grid_nx(half_length: f64, hx: f64) -> Result<usize> {
    let cells = 2.0 * half_length / hx;
    let n = cells.round();
    if !(half_length > 0.0) || (cells - n).abs() > 1e-9 * cells.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "2L = {} is not a multiple of hx = {hx}",
            2.0 * half_length
        )));
    }
    Ok(n as usize + 1)
}

/// The interpolant `(x1 / 2L)(phibar - phi) + (phibar + phi) / 2`.
pub fn seed_field(phi: &Profile1D, phibar: &Profile1D, half_length: f64, hx: f64) -> Result<Field2D> {
    check_pair(phi, phibar)?;
    let nx = grid_nx(half_length, hx)?;
    let ny = phi.m() + 1;
    let (p, q) = (phi.values(), phibar.values());
    let mut values = vec![0.0; nx * ny];
    for i in 0..nx {
        let x = -half_length + i as f64 * hx;
        let s = x / (2.0 * half_length);
        for j in 0..ny {
            values[i * ny + j] = s * (q[j] - p[j]) + 0.5 * (q[j] + p[j]);
        }
    }
    for j in 0..ny {
        values[j] = p[j];
        values[(nx - 1) * ny + j] = q[j];
    }
    Field2D::new(phi.mode(), -half_length, hx, nx, ny, p.to_vec(), q.to_vec(), values)
}

/// Field independent of `x1` with profile `psi` (both side traces equal `psi`).
pub fn uniform_field(psi: &Profile1D, half_length: f64, hx: f64) -> Result<Field2D> {
    let nx = grid_nx(half_length, hx)?;
    let ny = psi.m() + 1;
    let values = (0..nx).flat_map(|_| psi.values().iter().copied()).collect();
    Field2D::new(
        psi.mode(),
        -half_length,
        hx,
        nx,
        ny,
        psi.values().to_vec(),
        psi.values().to_vec(),
        values,
    )
}

fn trap_weight(k: usize, n: usize) -> f64 {
    if k == 0 || k == n - 1 {
        0.5
    } else {
        1.0
    }
}

fn energy_unchecked(u: &Field2D, spec: &ProblemSpec) -> f64 {
    let (nx, ny, hx, hy) = (u.nx, u.ny, u.hx, u.hy);
    let v = &u.values;
    let mut grad = 0.0;
    let mut pot = 0.0;
    for i in 0..nx {
        let wx = trap_weight(i, nx);
        let col = &v[i * ny..(i + 1) * ny];
        let mut gy = 0.0;
        let mut fy = 0.0;
        for j in 0..ny {
            let wy = trap_weight(j, ny);
            fy += wy * spec.F(col[j]);
            if j + 1 < ny {
                gy += (col[j + 1] - col[j]).powi(2);
            }
            if i + 1 < nx {
                grad += wy * (v[(i + 1) * ny + j] - col[j]).powi(2) * (0.5 * hy / hx);
            }
        }
        grad += wx * gy * (0.5 * hx / hy);
        pot += wx * fy;
    }
    grad - hx * hy * pot
}

/// Discrete energy `J(u)` of a field.
pub fn energy_2d(u: &Field2D, spec: &ProblemSpec) -> Result<f64> {
    if u.mode != spec.mode {
        return Err(Error::TraceMismatch { which: "top" });
    }
    u.check_traces()?;
    Ok(energy_unchecked(u, spec))
}

/// Nodewise clamp into `[phi(x2), phibar(x2)]`.
pub fn truncate_corridor(u: &Field2D, phi: &Profile1D, phibar: &Profile1D) -> Result<Field2D> {
    check_pair(phi, phibar)?;
    if phi.m() + 1 != u.ny {
        return Err(Error::InvalidArgument("profile grid does not match field".into()));
    }
    let (p, q) = (phi.values(), phibar.values());
    let mut out = u.clone();
    for i in 0..u.nx {
        for j in 0..u.ny {
            let k = i * u.ny + j;
            out.values[k] = out.values[k].clamp(p[j], q[j]);
        }
    }
    out.left = p.to_vec();
    out.right = q.to_vec();
    out.values[..u.ny].copy_from_slice(p);
    let last = (u.nx - 1) * u.ny;
    out.values[last..].copy_from_slice(q);
    Ok(out)
}

/// Max-norm of `Delta_h u + f(u)` over interior nodes.
pub fn residual_2d(u: &Field2D, spec: &ProblemSpec) -> f64 {
    let (nx, ny) = (u.nx, u.ny);
    let (ix2, iy2) = (1.0 / (u.hx * u.hx), 1.0 / (u.hy * u.hy));
    let v = &u.values;
    (1..nx - 1)
        .map(|i| {
            let mut worst = 0.0_f64;
            for j in 1..ny - 1 {
                let k = i * ny + j;
                let lap = (v[k + ny] - 2.0 * v[k] + v[k - ny]) * ix2 + (v[k + 1] - 2.0 * v[k] + v[k - 1]) * iy2;
                worst = worst.max((lap + spec.f(v[k])).abs());
            }
            worst
        })
        .fold(0.0, f64::max)
}

/// Solver settings for the strip problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Strip2dOptions {
    pub hx: f64,
    pub tol_residual: f64,
    /// Relative energy change below which the iteration counts as stalled.
    pub tol_energy_stall: f64,
    pub max_sweeps: usize,
    pub omega: f64,
    /// Relaxation sweeps between Newton attempts.
    pub sweeps_per_cycle: usize,
    pub newton: bool,
    /// Smallest nonzero diagonal shift tried when the Hessian is not definite.
    pub min_shift: f64,
}

impl Default for Strip2dOptions {
    fn default() -> Self {
        Self {
            hx: 1.0 / 64.0,
            tol_residual: 1e-8,
            tol_energy_stall: 1e-13,
            max_sweeps: 20_000,
            omega: 1.9,
            sweeps_per_cycle: 8,
            newton: true,
            min_shift: 1e-5,
        }
    }
}

/// Converged field plus the iteration record.
#[derive(Debug, Clone)]
pub struct Minimize2dResult {
    pub field: Field2D,
    pub sweeps: usize,
    pub newton_steps: usize,
    pub residual: f64,
    pub energy: f64,
    /// Energy after each sweep or accepted Newton step.
    pub energy_history: Vec<f64>,
    /// Residual at the end of each cycle.
    pub residual_history: Vec<f64>,
    /// Largest corridor violation seen over all iterates.
    pub max_corridor_violation: f64,
}

/// Local objective at one node: `1/2 c s^2 - b s - F(s)`.
#[inline]
fn local_energy(spec: &ProblemSpec, c: f64, b: f64, s: f64) -> f64 {
    0.5 * c * s * s - b * s - spec.F(s)
}

/// Constrained minimizer of the local objective on `[lo, hi]`.
#[inline]
fn local_solve(spec: &ProblemSpec, c: f64, b: f64, s0: f64, lo: f64, hi: f64) -> f64 {
    let mut s = s0;
    for _ in 0..4 {
        let (f, fp) = spec.f_and_prime(s);
        let g = c * s - b - f;
        let dg = c - fp;
        let next = if dg > 0.0 { s - g / dg } else { s - g / c };
        let next = next.clamp(lo, hi);
        if next == s {
            break;
        }
        s = next;
    }
    s
}

/// One red-black relaxation sweep; every node update lowers its local energy.
fn sor_sweep(u: &mut Field2D, spec: &ProblemSpec, omega: f64) {
    let (nx, ny) = (u.nx, u.ny);
    let (ix2, iy2) = (1.0 / (u.hx * u.hx), 1.0 / (u.hy * u.hy));
    let c = 2.0 * ix2 + 2.0 * iy2;
    let (lo, hi) = (u.left.clone(), u.right.clone());
    for color in 0..2 {
        let v = &u.values;
        let updates: Vec<Vec<(usize, f64)>> = (1..nx - 1)
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::with_capacity(ny / 2 + 1);
                let j0 = 1 + (i + 1 + color) % 2;
                let mut j = j0;
                while j < ny - 1 {
                    let k = i * ny + j;
                    let b = (v[k + ny] + v[k - ny]) * ix2 + (v[k + 1] + v[k - 1]) * iy2;
                    let old = v[k];
                    let star = local_solve(spec, c, b, old, lo[j], hi[j]);
                    let relaxed = (old + omega * (star - old)).clamp(lo[j], hi[j]);
                    let e_old = local_energy(spec, c, b, old);
                    let e_star = local_energy(spec, c, b, star);
                    let e_rel = local_energy(spec, c, b, relaxed);
                    let new = if e_rel <= e_old {
                        relaxed
                    } else if e_star <= e_old {
                        star
                    } else {
                        old
                    };
                    out.push((k, new));
                    j += 2;
                }
                out
            })
            .collect();
        for col in updates {
            for (k, val) in col {
                u.values[k] = val;
            }
        }
    }
}

/// Symmetric band matrix in row storage: row `r` holds columns `r-bw..=r`.
struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }
    #[inline]
    fn slot(&self, r: usize, c: usize) -> usize {
        r * (self.bw + 1) + (self.bw + c - r)
    }
    fn set(&mut self, r: usize, c: usize, v: f64) {
        let s = self.slot(r, c);
        self.data[s] = v;
    }

    /// In-place Cholesky of `A + shift I`; fails on a pivot that is not
    /// safely positive.
    fn cholesky_shifted(&mut self, shift: f64) -> bool {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for r in 0..n {
            let c0 = r.saturating_sub(bw);
            for c in c0..=r {
                let p0 = c0.max(c.saturating_sub(bw));
                let a_rc = self.data[r * w + bw + c - r];
                let mut s = a_rc;
                let (row_r, row_c) = (r * w + bw - r, c * w + bw - c);
                for p in p0..c {
                    s -= self.data[row_r + p] * self.data[row_c + p];
                }
                if c < r {
                    self.data[r * w + bw + c - r] = s / self.data[c * w + bw];
                } else {
                    let piv = s + shift;
                    if !(piv > 1e-14 * (a_rc + shift).abs()) {
                        return false;
                    }
                    self.data[r * w + bw] = piv.sqrt();
                }
            }
        }
        true
    }

    fn solve(&self, rhs: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for r in 0..n {
            let c0 = r.saturating_sub(bw);
            let mut s = rhs[r];
            let row = r * w + bw - r;
            for p in c0..r {
                s -= self.data[row + p] * rhs[p];
            }
            rhs[r] = s / self.data[r * w + bw];
        }
        for r in (0..n).rev() {
            rhs[r] /= self.data[r * w + bw];
            let x = rhs[r];
            let c0 = r.saturating_sub(bw);
            let row = r * w + bw - r;
            for p in c0..r {
                rhs[p] -= self.data[row + p] * x;
            }
        }
    }
}

/// Hessian of the energy (per unit area) over interior nodes, and the
/// gradient `-(Delta_h u + f(u))`.
fn assemble_hessian(u: &Field2D, spec: &ProblemSpec) -> (BandMatrix, Vec<f64>) {
    let (nx, ny) = (u.nx, u.ny);
    let (ix2, iy2) = (1.0 / (u.hx * u.hx), 1.0 / (u.hy * u.hy));
    let my = ny - 2;
    let mut a = BandMatrix::zeros((nx - 2) * my, my);
    let mut grad = vec![0.0; (nx - 2) * my];
    let v = &u.values;
    for i in 1..nx - 1 {
        for j in 1..ny - 1 {
            let r = (i - 1) * my + (j - 1);
            let k = i * ny + j;
            let (f, fp) = spec.f_and_prime(v[k]);
            let lap = (v[k + ny] - 2.0 * v[k] + v[k - ny]) * ix2 + (v[k + 1] - 2.0 * v[k] + v[k - 1]) * iy2;
            grad[r] = -(lap + f);
            a.set(r, r, 2.0 * ix2 + 2.0 * iy2 - fp);
            if j > 1 {
                a.set(r, r - 1, -iy2);
            }
            if i > 1 {
                a.set(r, r - my, -ix2);
            }
        }
    }
    (a, grad)
}

/// Newton direction with the smallest shift from the ladder `start, 10 start, ...`
/// (beginning at 0 when `start` is 0) for which the shifted Hessian factors.
fn newton_direction(u: &Field2D, spec: &ProblemSpec, start: f64, min_shift: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let (mut a, grad) = assemble_hessian(u, spec);
    let mut shift = start;
    for attempt in 0..16 {
        if attempt > 0 {
            // the failed factorization overwrote the band; reassembling is
            // cheaper in memory than keeping a copy
            a = assemble_hessian(u, spec).0;
        }
        if a.cholesky_shifted(shift) {
            let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
            a.solve(&mut dir);
            return Some((dir, grad, shift));
        }
        shift = if shift == 0.0 { min_shift } else { 10.0 * shift };
    }
    None
}

fn apply_step(u: &Field2D, dir: &[f64], t: f64) -> Field2D {
    let (nx, ny) = (u.nx, u.ny);
    let my = ny - 2;
    let mut out = u.clone();
    for i in 1..nx - 1 {
        for j in 1..ny - 1 {
            let k = i * ny + j;
            out.values[k] = (u.values[k] + t * dir[(i - 1) * my + (j - 1)]).clamp(u.left[j], u.right[j]);
        }
    }
    out
}

const ENERGY_NOISE: f64 = 1e-13;

/// Safeguarded descent on the strip energy from `seed`.
///
/// Relaxation sweeps are interleaved with Newton steps; a Newton step is
/// accepted only if, after clamping into the corridor, it lowers the energy.
/// Convergence requires the residual tolerance and a stalled energy.
pub fn minimize_2d(
    spec: &ProblemSpec,
    phi: &Profile1D,
    phibar: &Profile1D,
    seed: &Field2D,
    opts: &Strip2dOptions,
) -> Result<Minimize2dResult> {
    let mut u = truncate_corridor(seed, phi, phibar)?;
    let mut energy = energy_unchecked(&u, spec);
    let mut energy_history = vec![energy];
    let mut residual_history = Vec::new();
    let mut sweeps = 0;
    let mut newton_steps = 0;
    let mut max_violation = u.corridor_violation();
    let mut stalled_prev = false;
    let mut shift = 0.0;
    loop {
        let residual = residual_2d(&u, spec);
        residual_history.push(residual);
        let last_change = if energy_history.len() >= 2 {
            let n = energy_history.len();
            (energy_history[n - 2] - energy_history[n - 1]).abs()
        } else {
            f64::INFINITY
        };
        let stalled = last_change <= opts.tol_energy_stall * energy.abs().max(1.0);
        debug!("strip L={} sweeps={sweeps} newton={newton_steps} shift={shift:e} residual={residual:e} energy={energy}", u.half_length());
        if residual <= opts.tol_residual && (stalled || stalled_prev) {
            return Ok(Minimize2dResult {
                field: u,
                sweeps,
                newton_steps,
                residual,
                energy,
                energy_history,
                residual_history,
                max_corridor_violation: max_violation,
            });
        }
        stalled_prev = stalled;
        if sweeps >= opts.max_sweeps {
            return Err(Error::NonConvergence { iterations: sweeps, residual });
        }

        let mut newton_ok = false;
        if opts.newton {
            if let Some((dir, grad, used)) = newton_direction(&u, spec, shift, opts.min_shift) {
                let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
                let mut accepted = false;
                if slope < 0.0 && dir.iter().all(|d| d.is_finite()) {
                    // below this the energy sum is rounding noise and the
                    // residual decides
                    let noise = ENERGY_NOISE * energy.abs().max(1.0);
                    let mut t = 1.0;
                    for _ in 0..30 {
                        let trial = apply_step(&u, &dir, t);
                        let e = energy_unchecked(&trial, spec);
                        if e < energy - noise || (e <= energy + noise && residual_2d(&trial, spec) < residual) {
                            newton_ok = t == 1.0;
                            u = trial;
                            energy = e;
                            energy_history.push(e);
                            newton_steps += 1;
                            accepted = true;
                            break;
                        }
                        t *= 0.5;
                    }
                }
                shift = if accepted && used < 10.0 * opts.min_shift {
                    0.0
                } else if accepted {
                    used / 10.0
                } else {
                    (used * 10.0).max(opts.min_shift)
                };
            }
        }
        let relax = if newton_ok { 2 } else { opts.sweeps_per_cycle };
        for _ in 0..relax {
            sor_sweep(&mut u, spec, opts.omega);
            sweeps += 1;
            let e = energy_unchecked(&u, spec);
            energy_history.push(e);
            energy = e;
        }
        max_violation = max_violation.max(u.corridor_violation());
    }
}

/// Reference abscissa `a` where the mid-height trace crosses the mean of the
/// two end profiles, plus the field resampled so that this point sits at 0.
pub fn reference_shift(u: &Field2D) -> Result<(f64, Field2D)> {
    let a = reference_point(u)?;
    let ny = u.ny;
    let mut values = vec![0.0; u.nx * ny];
    for i in 1..u.nx - 1 {
        let col = u.column_at(u.x(i) + a);
        for j in 0..ny {
            values[i * ny + j] = col[j].clamp(u.left[j], u.right[j]);
        }
    }
    values[..ny].copy_from_slice(&u.left);
    values[(u.nx - 1) * ny..].copy_from_slice(&u.right);
    let shifted = Field2D { values, ..u.clone() };
    Ok((a, shifted))
}

/// The abscissa `a` with `u(a, 1/2) = (phi(1/2) + phibar(1/2)) / 2`.
///
/// Found on the mid-height row by cubic inverse interpolation; `ny` must be odd.
pub fn reference_point(u: &Field2D) -> Result<f64> {
    if u.ny % 2 == 0 {
        return Err(Error::InvalidArgument("ny must be odd to have a mid-height row".into()));
    }
    let jm = u.ny / 2;
    let target = 0.5 * (u.left[jm] + u.right[jm]);
    let row: Vec<f64> = (0..u.nx).map(|i| u.at(i, jm)).collect();
    let (lo, hi) = row
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let i = (0..u.nx - 1)
        .find(|&i| row[i] <= target && row[i + 1] > target)
        .ok_or(Error::TargetNotBracketed { target, lo, hi })?;
    let crossings = row
        .windows(2)
        .filter(|w| (w[0] <= target) != (w[1] <= target))
        .count();
    if crossings != 1 {
        return Err(Error::InvalidArgument(format!(
            "mid-height trace crosses its reference level {crossings} times"
        )));
    }
    // bisection on the cubic through the neighbouring nodes
    let eval = |s: f64| {
        let (i0, w) = cubic_weights(s, u.nx);
        (0..4).map(|k| w[k] * row[i0 + k]).sum::<f64>()
    };
    let (mut a, mut b) = (i as f64, (i + 1) as f64);
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if eval(m) <= target {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(u.x_min + 0.5 * (a + b) * u.hx)
}

/// Column-wise Hamiltonian `int 1/2 (u_y^2 - u_x^2) - F(u) dx2`.
///
/// Each column is a step of a leapfrog scheme in `x1`, so the plain
/// quadrature drifts by `O(hx^2)`; this returns the modified quantity
/// conserved by that scheme to `O(hx^4)`, built from
/// `V(u) = sum 1/2 (D_y u)^2 / hy - hy trap(F(u))` and its Hessian.
/// Entries are `(x1, H)` for interior columns.
pub fn hamiltonian_profile(u: &Field2D, spec: &ProblemSpec) -> Vec<(f64, f64)> {
    hamiltonian_impl(u, spec, true)
}

/// Plain central-difference quadrature of the Hamiltonian (no correction).
pub fn hamiltonian_profile_plain(u: &Field2D, spec: &ProblemSpec) -> Vec<(f64, f64)> {
    hamiltonian_impl(u, spec, false)
}

fn hamiltonian_impl(u: &Field2D, spec: &ProblemSpec, corrected: bool) -> Vec<(f64, f64)> {
    let (nx, ny, hx, hy) = (u.nx, u.ny, u.hx, u.hy);
    (1..nx - 1)
        .map(|i| {
            let (c0, c1, c2) = (u.column(i - 1), u.column(i), u.column(i + 1));
            let mut v_grad = 0.0;
            let mut v_pot = 0.0;
            let mut kin = 0.0;
            let mut hess_grad = 0.0;
            let mut hess_pot = 0.0;
            let mut acc2 = 0.0;
            for j in 0..ny {
                let wy = trap_weight(j, ny);
                let p = (c2[j] - c0[j]) / (2.0 * hx);
                let (big_f, _, fp) = spec.potential_jet(c1[j]);
                v_pot += wy * big_f;
                kin += wy * p * p;
                hess_pot += wy * fp * p * p;
                let a = (c2[j] - 2.0 * c1[j] + c0[j]) / (hx * hx);
                acc2 += wy * a * a;
                if j + 1 < ny {
                    v_grad += (c1[j + 1] - c1[j]).powi(2);
                    let pn = (c2[j + 1] - c0[j + 1]) / (2.0 * hx);
                    hess_grad += (pn - p).powi(2);
                }
            }
            let v = 0.5 * v_grad / hy - hy * v_pot;
            let mut h = v - 0.5 * hy * kin;
            if corrected {
                let hess = hess_grad / hy - hy * hess_pot;
                h += hx * hx * (hess / 12.0 + hy * acc2 / 24.0);
            }
            (u.x(i), h)
        })
        .collect()
}

/// `(max - min, mean)` of a Hamiltonian profile over `|x1| <= limit`.
pub fn profile_spread(profile: &[(f64, f64)], limit: f64) -> (f64, f64) {
    let vals: Vec<f64> = profile.iter().filter(|(x, _)| x.abs() <= limit).map(|p| p.1).collect();
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let (lo, hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    (hi - lo, vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Smallest forward difference in `x1` over interior rows, optionally
/// restricted to columns whose both endpoints satisfy `|x1| <= limit`.
pub fn min_dx1(u: &Field2D, limit: Option<f64>) -> f64 {
    let mut worst = f64::INFINITY;
    for i in 0..u.nx - 1 {
        if let Some(l) = limit {
            if u.x(i).abs() > l || u.x(i + 1).abs() > l {
                continue;
            }
        }
        for j in 1..u.ny - 1 {
            worst = worst.min(u.at(i + 1, j) - u.at(i, j));
        }
    }
    worst
}

/// Max-norm distances of the first and last interior columns to their traces.
pub fn end_gaps(u: &Field2D) -> (f64, f64) {
    let gap = |i: usize, trace: &[f64]| {
        u.column(i).iter().zip(trace).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    (gap(1, &u.left), gap(u.nx - 2, &u.right))
}

/// Max-norm difference of two normalized fields over `|x1| <= half_window`,
/// sampled on the finer of the two grids.
pub fn window_difference(a: &Field2D, b: &Field2D, half_window: f64) -> f64 {
    let h = a.hx.min(b.hx);
    let n = (half_window / h).floor() as i64;
    (-n..=n)
        .map(|k| {
            let x = k as f64 * h;
            let ca = a.column_at(x);
            let cb = b.column_at(x);
            ca.iter().zip(&cb).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Seeds a longer strip by embedding a normalized field and filling the
/// new ends with the traces.
pub fn extend_field(u: &Field2D, half_length: f64) -> Result<Field2D> {
    let nx = grid_nx(half_length, u.hx)?;
    let ny = u.ny;
    let mut values = vec![0.0; nx * ny];
    for i in 0..nx {
        let x = -half_length + i as f64 * u.hx;
        let col = u.column_at(x);
        for j in 0..ny {
            values[i * ny + j] = col[j].clamp(u.left[j], u.right[j]);
        }
    }
    values[..ny].copy_from_slice(&u.left);
    values[(nx - 1) * ny..].copy_from_slice(&u.right);
    Field2D::new(u.mode, -half_length, u.hx, nx, ny, u.left.clone(), u.right.clone(), values)
}

/// Per-strip summary along the continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationLevel {
    pub half_length: f64,
    pub a: f64,
    pub sweeps: usize,
    pub newton_steps: usize,
    pub residual: f64,
    pub energy: f64,
    pub end_gaps: (f64, f64),
    /// Difference to the previous level on the common window.
    pub window_diff: Option<f64>,
}

/// Outcome of the continuation in `L`.
#[derive(Debug, Clone)]
pub struct HeteroclinicResult {
    /// Final minimizer with coordinates translated so the reference point is at 0.
    pub field: Field2D,
    pub half_length: f64,
    pub a: f64,
    pub min_dx1u: f64,
    pub min_dx1u_window: f64,
    pub end_gaps: (f64, f64),
    pub hamiltonian_spread: f64,
    pub hamiltonian_mean: f64,
    pub levels: Vec<ContinuationLevel>,
    /// Largest corridor violation over all iterates of all levels.
    pub max_corridor_violation: f64,
    /// Did every energy history stay non-increasing?
    pub energy_monotone: bool,
}

impl HeteroclinicResult {
    pub fn window_diffs(&self) -> Vec<f64> {
        self.levels.iter().filter_map(|l| l.window_diff).collect()
    }

    /// `L - |a|` per level, which should grow along the schedule.
    pub fn interior_margins(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.half_length - l.a.abs()).collect()
    }
}

/// Settings for the continuation in `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationOptions {
    pub l_schedule: Vec<f64>,
    pub tol_cont: f64,
    pub common_window: f64,
    /// Width excluded at each artificial end in verification quadratures.
    pub end_margin: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            l_schedule: vec![4.0, 8.0, 16.0],
            tol_cont: 1e-4,
            common_window: 4.0,
            end_margin: 2.0,
        }
    }
}

fn energy_monotone(history: &[f64]) -> bool {
    history.windows(2).all(|w| w[1] <= w[0] + ENERGY_NOISE * w[0].abs().max(1.0))
}

/// Minimize, normalize and extend along the whole `L` schedule.
pub fn continuation(
    spec: &ProblemSpec,
    phi: &Profile1D,
    phibar: &Profile1D,
    strip: &Strip2dOptions,
    cont: &ContinuationOptions,
) -> Result<HeteroclinicResult> {
    continuation_from(spec, phi, phibar, strip, cont, None)
}

/// [`continuation`] starting from an optional seed for the first level.
pub fn continuation_from(
    spec: &ProblemSpec,
    phi: &Profile1D,
    phibar: &Profile1D,
    strip: &Strip2dOptions,
    cont: &ContinuationOptions,
    first_seed: Option<&Field2D>,
) -> Result<HeteroclinicResult> {
    if cont.l_schedule.is_empty() || cont.l_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("L schedule must be non-empty and increasing".into()));
    }
    let mut levels: Vec<ContinuationLevel> = Vec::new();
    let mut prev: Option<Field2D> = None;
    let mut violation = 0.0_f64;
    let mut monotone = true;
    for (n, &l) in cont.l_schedule.iter().enumerate() {
        let seed = match (&prev, first_seed) {
            (Some(p), _) => extend_field(p, l)?,
            (None, Some(s)) if n == 0 => s.clone(),
            _ => seed_field(phi, phibar, l, strip.hx)?,
        };
        let sol = minimize_2d(spec, phi, phibar, &seed, strip)?;
        violation = violation.max(sol.max_corridor_violation);
        monotone &= energy_monotone(&sol.energy_history);
        let a = reference_point(&sol.field)?;
        let normalized = sol.field.translated(a);
        let window_diff = prev.as_ref().map(|p| window_difference(p, &normalized, cont.common_window));
        let gaps = end_gaps(&sol.field);
        info!(
            "L={l}: a={a:.6}, sweeps={}, newton={}, residual={:e}, window diff={:?}",
            sol.sweeps, sol.newton_steps, sol.residual, window_diff
        );
        levels.push(ContinuationLevel {
            half_length: l,
            a,
            sweeps: sol.sweeps,
            newton_steps: sol.newton_steps,
            residual: sol.residual,
            energy: sol.energy,
            end_gaps: gaps,
            window_diff,
        });
        prev = Some(normalized);
    }
    let field = prev.expect("schedule is non-empty");
    let last = levels.last().expect("schedule is non-empty").clone();
    if let Some(d) = last.window_diff {
        if d > cont.tol_cont {
            return Err(Error::NoConvergenceAcrossL { last_diff: d, tol: cont.tol_cont });
        }
    }
    let limit = last.half_length - cont.end_margin;
    let ham = hamiltonian_profile(&field, spec);
    let (spread, mean) = profile_spread(&ham, limit - last.a.abs());
    Ok(HeteroclinicResult {
        min_dx1u: min_dx1(&field, None),
        min_dx1u_window: min_dx1(&field, Some(cont.common_window)),
        end_gaps: last.end_gaps,
        hamiltonian_spread: spread,
        hamiltonian_mean: mean,
        half_length: last.half_length,
        a: last.a,
        field,
        levels,
        max_corridor_violation: violation,
        energy_monotone: monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_pair(m: usize) -> (Profile1D, Profile1D) {
        let phi = Profile1D::trivial(Mode::Ramp, m);
        let phibar = Profile1D::from_fn(Mode::Ramp, m, |t| t + 3.0 * (std::f64::consts::PI * t).sin());
        (phi, phibar)
    }

    #[test]
    fn seed_field_traces_and_midpoint() {
        let (phi, phibar) = ramp_pair(16);
        let u = seed_field(&phi, &phibar, 1.0, 0.25).unwrap();
        assert_eq!(u.nx(), 9);
        assert_eq!(u.column(0), phi.values());
        assert_eq!(u.column(8), phibar.values());
        for j in 0..17 {
            let mean = 0.5 * (phi.values()[j] + phibar.values()[j]);
            assert!((u.at(4, j) - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_field_energy_is_length_times_profile_energy() {
        let (_, phibar) = ramp_pair(32);
        let spec = ProblemSpec::new(Mode::Ramp, 0.05);
        let u = uniform_field(&phibar, 2.0, 1.0 / 16.0).unwrap();
        let e2 = energy_2d(&u, &spec).unwrap();
        let e1 = crate::bvp1d::energy_1d(&phibar, &spec).unwrap();
        assert!((e2 - 4.0 * e1).abs() < 1e-10 * e1.abs().max(1.0));
    }

    #[test]
    fn zero_field_has_zero_energy() {
        let z = Profile1D::from_fn(Mode::Zero, 16, |_| 0.0);
        let u = uniform_field(&z, 1.0, 0.125).unwrap();
        assert_eq!(energy_2d(&u, &ProblemSpec::new(Mode::Zero, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn corridor_clamp_to_upper_trace() {
        let (phi, phibar) = ramp_pair(16);
        let u = seed_field(&phi, &phibar, 1.0, 0.25).unwrap();
        let mut raised = u.clone();
        for i in 0..raised.nx {
            for j in 0..raised.ny {
                raised.values[i * raised.ny + j] = phibar.values()[j] + 1.0;
            }
        }
        let out = truncate_corridor(&raised, &phi, &phibar).unwrap();
        for i in 1..out.nx() {
            assert_eq!(out.column(i), phibar.values());
        }
        assert_eq!(truncate_corridor(&u, &phi, &phibar).unwrap(), u);
    }

    #[test]
    fn trace_violation_is_rejected() {
        let (phi, phibar) = ramp_pair(16);
        let mut u = seed_field(&phi, &phibar, 1.0, 0.25).unwrap();
        u.values[3 * 17] = 0.1;
        assert!(matches!(
            energy_2d(&u, &ProblemSpec::new(Mode::Ramp, 0.1)),
            Err(Error::TraceMismatch { which: "bottom" })
        ));
    }

    #[test]
    fn band_cholesky_solves_small_system() {
        // 1D Laplacian with bandwidth 2 storage to exercise off-diagonal zeros
        let n = 7;
        let mut a = BandMatrix::zeros(n, 2);
        for r in 0..n {
            a.set(r, r, 4.0);
            if r > 0 {
                a.set(r, r - 1, -1.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|k| k as f64 - 2.5).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|r| {
                4.0 * x[r] - if r > 0 { x[r - 1] } else { 0.0 } - if r + 1 < n { x[r + 1] } else { 0.0 }
            })
            .collect();
        assert!(a.cholesky_shifted(0.0));
        a.solve(&mut b);
        for (p, q) in b.iter().zip(&x) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_weights_reproduce_cubics() {
        let g = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.1 * x * x * x;
        let nodes: Vec<f64> = (0..10).map(|k| g(k as f64)).collect();
        for s in [0.3, 1.7, 4.5, 8.9] {
            let (i0, w) = cubic_weights(s, 10);
            let v: f64 = (0..4).map(|k| w[k] * nodes[i0 + k]).sum();
            assert!((v - g(s)).abs() < 1e-12);
        }
    }
}
