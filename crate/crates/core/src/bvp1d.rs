//! Discrete one-dimensional energies, their Euler–Lagrange solver, and the
//! search for the critical coupling at which the trivial profile and a
//! nontrivial one become equal-energy global minimizers.
//!
//! Discretization: uniform grid `t_j = j/m`, forward-difference gradient
//! energy summed over cells and trapezoid quadrature of the potential. The
//! gradient of this discrete energy at interior node `j` is exactly
//! `h * (-(psi_{j+1} - 2 psi_j + psi_{j-1}) / h^2 - f(psi_j))`, so minimizing
//! the energy and solving the three-point equation are the same problem.

use crate::error::{Error, Result};
use crate::nonlinearity::{Mode, ProblemSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Sampled profile on `[0, 1]` with pinned end values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile1D {
    mode: Mode,
    values: Vec<f64>,
}

impl Profile1D {
    /// Wraps `values` (length `m + 1`), checking the end values exactly.
    pub fn new(mode: Mode, values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "profile needs at least 3 nodes, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("profile has non-finite values".into()));
        }
        let (b0, b1) = mode.boundary();
        let (v0, v1) = (values[0], values[values.len() - 1]);
        if v0 != b0 || v1 != b1 {
            return Err(Error::BoundaryMismatch {
                got0: v0,
                got1: v1,
                want0: b0,
                want1: b1,
            });
        }
        Ok(Self { mode, values })
    }

    /// Samples `g` on the grid, then pins the end values.
    pub fn from_fn(mode: Mode, m: usize, g: impl Fn(f64) -> f64) -> Self {
        let mut values: Vec<f64> = (0..=m).map(|j| g(j as f64 / m as f64)).collect();
        let (b0, b1) = mode.boundary();
        values[0] = b0;
        values[m] = b1;
        Self { mode, values }
    }

    /// The trivial solution `t` or `t(1-t)`.
    pub fn trivial(mode: Mode, m: usize) -> Self {
        Self::from_fn(mode, m, |t| mode.trivial(t))
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn m(&self) -> usize {
        self.values.len() - 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 / self.m() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Profile1D) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
    }

    /// Restriction to a coarser grid whose spacing is a multiple of this one.
    pub fn restrict(&self, m_coarse: usize) -> Result<Profile1D> {
        let m = self.m();
        if m_coarse == 0 || m % m_coarse != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot restrict m = {m} to m = {m_coarse}"
            )));
        }
        let step = m / m_coarse;
        let values = (0..=m_coarse).map(|j| self.values[j * step]).collect();
        Profile1D::new(self.mode, values)
    }
}

/// Solver and search settings for the one-dimensional stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bvp1dOptions {
    pub m: usize,
    pub tol_residual: f64,
    pub tol_energy: f64,
    pub max_iter: usize,
    /// Amplitudes of the seeds `phi + mu w`.
    pub seed_amplitudes: Vec<f64>,
    /// Margin used to classify scan points as strictly below threshold.
    pub delta_margin: f64,
    /// Overrides the discrete energy of the trivial profile as threshold.
    pub threshold: Option<f64>,
    pub k_min: i32,
    pub k_max: i32,
    /// Final bracket width of the bisection.
    pub tol_lambda: f64,
}

impl Default for Bvp1dOptions {
    fn default() -> Self {
        Self {
            m: 2048,
            tol_residual: 1e-10,
            tol_energy: 1e-8,
            max_iter: 200,
            seed_amplitudes: vec![2.0, 5.0, 10.0, 20.0, 40.0],
            delta_margin: 1e-4,
            threshold: None,
            k_min: -10,
            k_max: 20,
            tol_lambda: 1e-12,
        }
    }
}

impl Bvp1dOptions {
    /// Energy level separating the trivial minimizer from the rest.
    pub fn threshold(&self, mode: Mode) -> f64 {
        self.threshold
            .unwrap_or_else(|| trivial_energy(mode, self.m))
    }
}

/// Discrete energy of the trivial profile on an `m`-cell grid.
pub fn trivial_energy(mode: Mode, m: usize) -> f64 {
    energy_unchecked(&Profile1D::trivial(mode, m).values, &ProblemSpec::new(mode, 0.0))
}

fn energy_unchecked(psi: &[f64], spec: &ProblemSpec) -> f64 {
    let m = psi.len() - 1;
    let h = 1.0 / m as f64;
    let grad: f64 = psi.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() * (0.5 / h);
    let mut pot = 0.5 * (spec.F(psi[0]) + spec.F(psi[m]));
    pot += psi[1..m].iter().map(|&s| spec.F(s)).sum::<f64>();
    grad - h * pot
}

/// Sum of the magnitudes of the two parts of the discrete energy.
fn energy_scale(psi: &[f64], spec: &ProblemSpec) -> f64 {
    let m = psi.len() - 1;
    let h = 1.0 / m as f64;
    let grad: f64 = psi.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() * (0.5 / h);
    grad + h * psi.iter().map(|&s| spec.F(s).abs()).sum::<f64>()
}

/// Discrete energy `sum 1/2 |D+ psi|^2 h - trap(F(psi))`.
pub fn energy_1d(psi: &Profile1D, spec: &ProblemSpec) -> Result<f64> {
    if psi.mode != spec.mode {
        let (b0, b1) = spec.mode.boundary();
        return Err(Error::BoundaryMismatch {
            got0: psi.values[0],
            got1: psi.values[psi.m()],
            want0: b0,
            want1: b1,
        });
    }
    Ok(energy_unchecked(&psi.values, spec))
}

fn residual_into(psi: &[f64], spec: &ProblemSpec, r: &mut [f64], fp: &mut [f64]) -> (f64, f64) {
    let m = psi.len() - 1;
    let inv_h2 = (m * m) as f64;
    let mut rmax = 0.0_f64;
    let mut fmax = 0.0_f64;
    for j in 1..m {
        let (f, dfp) = spec.f_and_prime(psi[j]);
        let lap = (psi[j + 1] - 2.0 * psi[j] + psi[j - 1]) * inv_h2;
        let rj = -lap - f;
        r[j - 1] = rj;
        fp[j - 1] = dfp;
        rmax = rmax.max(rj.abs());
        fmax = fmax.max(f.abs());
    }
    (rmax, fmax)
}

/// Max-norm of `-(psi_{j+1} - 2 psi_j + psi_{j-1})/h^2 - f(psi_j)` over interior nodes.
pub fn residual_1d(psi: &Profile1D, spec: &ProblemSpec) -> f64 {
    let n = psi.m() - 1;
    let mut r = vec![0.0; n];
    let mut fp = vec![0.0; n];
    residual_into(&psi.values, spec, &mut r, &mut fp).0
}

/// Solves a symmetric tridiagonal system in place (Thomas algorithm).
/// Returns `None` on a zero or non-finite pivot.
pub(crate) fn solve_tridiagonal(diag: &[f64], off: f64, rhs: &mut [f64]) -> Option<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d0 = diag[0];
    if d0 == 0.0 || !d0.is_finite() {
        return None;
    }
    c[0] = off / d0;
    rhs[0] /= d0;
    for i in 1..n {
        d0 = diag[i] - off * c[i - 1];
        if d0 == 0.0 || !d0.is_finite() {
            return None;
        }
        c[i] = off / d0;
        rhs[i] = (rhs[i] - off * rhs[i - 1]) / d0;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    rhs.iter().all(|v| v.is_finite()).then_some(())
}

/// Outcome of one safeguarded Newton solve.
#[derive(Debug, Clone)]
pub struct ElSolution {
    pub profile: Profile1D,
    pub iterations: usize,
    pub residual: f64,
    pub energy: f64,
    /// Energy after every accepted step, starting with the seed.
    pub energy_history: Vec<f64>,
}

fn line_search(
    psi: &[f64],
    dir: &[f64],
    energy: f64,
    spec: &ProblemSpec,
    slack: f64,
) -> Option<(Vec<f64>, f64)> {
    let mut step = 1.0;
    let mut trial = psi.to_vec();
    for _ in 0..60 {
        for (j, d) in dir.iter().enumerate() {
            trial[j + 1] = psi[j + 1] + step * d;
        }
        let e = energy_unchecked(&trial, spec);
        if e.is_finite() && e <= energy + slack {
            return Some((trial, e));
        }
        step *= 0.5;
    }
    None
}

/// Damped Newton iteration on the discrete Euler–Lagrange system.
///
/// Every accepted step is required not to raise the energy; when the Newton
/// direction is not a descent direction (the Jacobian can be indefinite far
/// from a minimizer) an `H^1` gradient step is taken instead.
pub fn solve_el(spec: &ProblemSpec, seed: &Profile1D, opts: &Bvp1dOptions) -> Result<ElSolution> {
    if seed.mode != spec.mode {
        return energy_1d(seed, spec).map(|_| unreachable!());
    }
    let m = seed.m();
    let n = m - 1;
    let h = 1.0 / m as f64;
    let inv_h2 = (m * m) as f64;
    let mut psi = seed.values.clone();
    let mut energy = energy_unchecked(&psi, spec);
    let mut history = vec![energy];
    let mut r = vec![0.0; n];
    let mut fp = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut last_step = f64::INFINITY;
    let mut rnorm = f64::INFINITY;

    for it in 0..=opts.max_iter {
        let (rn, _) = residual_into(&psi, spec, &mut r, &mut fp);
        rnorm = rn;
        let sup = psi.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        // rounding floor of the three-point stencil
        let floor = 8.0 * f64::EPSILON * 4.0 * sup.max(1.0) * inv_h2;
        let at_floor = rn <= floor && last_step <= 1e-10 * (1.0 + sup);
        if rn <= opts.tol_residual || at_floor {
            return Ok(ElSolution {
                profile: Profile1D { mode: spec.mode, values: psi },
                iterations: it,
                residual: rn,
                energy,
                energy_history: history,
            });
        }
        if it == opts.max_iter {
            break;
        }
        // rounding in the energy scales with its largest part, not its value
        let slack = 1e-13 * energy_scale(&psi, spec).max(energy.abs()).max(1.0);

        for j in 0..n {
            diag[j] = 2.0 * inv_h2 - fp[j];
        }
        let mut dir: Vec<f64> = r.iter().map(|v| -v).collect();
        let newton_ok = solve_tridiagonal(&diag, -inv_h2, &mut dir).is_some()
            && dir.iter().zip(&r).map(|(d, g)| d * g).sum::<f64>() < 0.0;
        let mut accepted = None;
        if newton_ok {
            accepted = line_search(&psi, &dir, energy, spec, slack);
        }
        if accepted.is_none() {
            let lap_diag = vec![2.0 * inv_h2; n];
            dir = r.iter().map(|v| -v).collect();
            if solve_tridiagonal(&lap_diag, -inv_h2, &mut dir).is_some() {
                accepted = line_search(&psi, &dir, energy, spec, slack);
            }
        }
        match accepted {
            Some((next, e)) => {
                last_step = next
                    .iter()
                    .zip(&psi)
                    .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
                psi = next;
                energy = e;
                history.push(e);
            }
            None => break,
        }
        let _ = h;
    }
    Err(Error::NonConvergence {
        iterations: history.len() - 1,
        residual: rnorm,
    })
}

/// Distinct converged critical point reached from the multistart family.
#[derive(Debug, Clone)]
pub struct Basin {
    pub energy: f64,
    pub sup_norm: f64,
    pub trivial: bool,
    pub profile: Profile1D,
    /// Indices (into the seed list) of starts that landed here.
    pub starts: Vec<usize>,
}

/// Global minimum over the multistart family at one coupling.
#[derive(Debug, Clone)]
pub struct GlobalMin1D {
    pub lambda: f64,
    pub m_lambda: f64,
    pub argmin: Profile1D,
    /// Basins sorted by energy (ties broken lexicographically on values).
    pub basins: Vec<Basin>,
    pub failed_starts: usize,
}

impl GlobalMin1D {
    /// Lowest-energy nontrivial basin, smallest sup-norm among energy ties.
    pub fn best_nontrivial(&self, tol_energy: f64) -> Option<&Basin> {
        let nontrivial: Vec<&Basin> = self.basins.iter().filter(|b| !b.trivial).collect();
        let emin = nontrivial.iter().map(|b| b.energy).fold(f64::INFINITY, f64::min);
        nontrivial
            .into_iter()
            .filter(|b| b.energy <= emin + tol_energy)
            .min_by(|a, b| a.sup_norm.total_cmp(&b.sup_norm))
    }

    pub fn nontrivial_count(&self) -> usize {
        self.basins.iter().filter(|b| !b.trivial).count()
    }
}

const BASIN_MERGE_TOL: f64 = 1e-6;

fn multistart_seeds(mode: Mode, m: usize, amplitudes: &[f64]) -> Vec<Profile1D> {
    let mut seeds = vec![Profile1D::trivial(mode, m)];
    for &mu in amplitudes {
        seeds.push(Profile1D::from_fn(mode, m, |t| {
            mode.trivial(t) + mu * mode.seed_direction(t)
        }));
    }
    seeds
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Runs [`solve_el`] from the fixed multistart family (plus `extra` seeds)
/// and returns the lowest-energy converged profile together with every
/// distinct basin reached.
pub fn global_min_1d_with_seeds(
    spec: &ProblemSpec,
    opts: &Bvp1dOptions,
    extra: &[Profile1D],
) -> Result<GlobalMin1D> {
    let mut seeds = multistart_seeds(spec.mode, opts.m, &opts.seed_amplitudes);
    seeds.extend(extra.iter().filter(|s| s.m() == opts.m).cloned());
    let results: Vec<Result<ElSolution>> =
        seeds.par_iter().map(|s| solve_el(spec, s, opts)).collect();

    let trivial = Profile1D::trivial(spec.mode, opts.m);
    let mut basins: Vec<Basin> = Vec::new();
    let mut failed = 0;
    let mut last_err = None;
    for (idx, res) in results.into_iter().enumerate() {
        let sol = match res {
            Ok(s) => s,
            Err(e) => {
                failed += 1;
                last_err = Some(e);
                continue;
            }
        };
        if let Some(b) = basins
            .iter_mut()
            .find(|b| b.profile.max_abs_diff(&sol.profile) <= BASIN_MERGE_TOL * (1.0 + b.sup_norm))
        {
            b.starts.push(idx);
            if sol.energy < b.energy {
                b.energy = sol.energy;
                b.profile = sol.profile;
            }
            continue;
        }
        let is_trivial = sol.profile.max_abs_diff(&trivial) <= BASIN_MERGE_TOL;
        basins.push(Basin {
            energy: sol.energy,
            sup_norm: sol.profile.sup_norm(),
            trivial: is_trivial,
            profile: sol.profile,
            starts: vec![idx],
        });
    }
    if basins.is_empty() {
        return Err(last_err.unwrap_or(Error::NonConvergence {
            iterations: 0,
            residual: f64::NAN,
        }));
    }
    basins.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then_with(|| lex_cmp(a.profile.values(), b.profile.values()))
    });
    Ok(GlobalMin1D {
        lambda: spec.lambda,
        m_lambda: basins[0].energy,
        argmin: basins[0].profile.clone(),
        basins,
        failed_starts: failed,
    })
}

/// [`global_min_1d_with_seeds`] with the fixed multistart family only.
pub fn global_min_1d(spec: &ProblemSpec, opts: &Bvp1dOptions) -> Result<GlobalMin1D> {
    global_min_1d_with_seeds(spec, opts, &[])
}

/// One row of the geometric lambda scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub k: i32,
    pub lambda: f64,
    pub m_lambda: f64,
    pub basin_count: usize,
    pub sup_norms: Vec<f64>,
    /// `m_lambda < threshold - delta_margin`.
    pub below: bool,
}

/// Evaluates `m_lambda` at `lambda = 2^k` for `k` in `[k_min, k_max]`.
pub fn lambda_scan(mode: Mode, opts: &Bvp1dOptions) -> Result<Vec<ScanRow>> {
    let threshold = opts.threshold(mode);
    (opts.k_min..=opts.k_max)
        .map(|k| {
            let lambda = 2f64.powi(k);
            let g = global_min_1d(&ProblemSpec::new(mode, lambda), opts)?;
            Ok(ScanRow {
                k,
                lambda,
                m_lambda: g.m_lambda,
                basin_count: g.basins.len(),
                sup_norms: g.basins.iter().map(|b| b.sup_norm).collect(),
                below: g.m_lambda < threshold - opts.delta_margin,
            })
        })
        .collect()
}

/// Result of the scan-and-bisect search for the critical coupling.
#[derive(Debug, Clone)]
pub struct LambdaStar {
    pub mode: Mode,
    /// Largest coupling known to carry a nontrivial profile below threshold.
    pub lambda_star: f64,
    pub bracket: (f64, f64),
    pub threshold: f64,
    pub bisection_steps: usize,
    pub scan: Vec<ScanRow>,
    /// Nontrivial minimizer at the lower bracket end (warm start for later solves).
    pub warm: Profile1D,
}

fn nontrivial_below(
    mode: Mode,
    lambda: f64,
    opts: &Bvp1dOptions,
    threshold: f64,
    warm: &[Profile1D],
) -> Result<Option<Profile1D>> {
    let g = global_min_1d_with_seeds(&ProblemSpec::new(mode, lambda), opts, warm)?;
    Ok(g.best_nontrivial(opts.tol_energy)
        .filter(|b| b.energy < threshold)
        .map(|b| b.profile.clone()))
}

/// Locates the critical coupling.
///
/// The bracket comes from the geometric scan classified with
/// `delta_margin`; the bisection itself compares the nontrivial branch with
/// the discrete trivial energy directly, since near the critical coupling the
/// energy gap closes linearly with slope `int chi(phibar)^4` (of order
/// `1e4`), and any margin there would bias the result.
pub fn find_lambda_star(mode: Mode, opts: &Bvp1dOptions) -> Result<LambdaStar> {
    let scan = lambda_scan(mode, opts)?;
    let threshold = opts.threshold(mode);
    let not_found = Error::BracketNotFound {
        k_min: opts.k_min,
        k_max: opts.k_max,
    };
    let flip = scan
        .windows(2)
        .position(|w| w[0].below && !w[1].below)
        .ok_or(not_found)?;
    let (mut lo, mut hi) = (scan[flip].lambda, scan[flip + 1].lambda);
    let mut warm = nontrivial_below(mode, lo, opts, threshold, &[])?.ok_or(Error::BracketNotFound {
        k_min: opts.k_min,
        k_max: opts.k_max,
    })?;
    let mut steps = 0;
    while hi - lo > opts.tol_lambda {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        steps += 1;
        match nontrivial_below(mode, mid, opts, threshold, std::slice::from_ref(&warm))? {
            Some(p) => {
                lo = mid;
                warm = p;
            }
            None => hi = mid,
        }
    }
    Ok(LambdaStar {
        mode,
        lambda_star: lo,
        bracket: (lo, hi),
        threshold,
        bisection_steps: steps,
        scan,
        warm,
    })
}

/// The trivial and the minimal nontrivial global minimizer at the critical coupling.
#[derive(Debug, Clone)]
pub struct MinimizerPair {
    pub mode: Mode,
    pub phi: Profile1D,
    pub phibar: Profile1D,
    pub lambda_star: f64,
    /// Coupling at which `phibar` was computed (just below `lambda_star`).
    pub lambda_used: f64,
    /// Discrete energy of `phibar`.
    pub energy: f64,
    /// Discrete energy of `phi`.
    pub trivial_energy: f64,
    /// Max-norm differences between the three approximations from below.
    pub cauchy_diffs: [f64; 2],
    /// Sup-norms of every other nontrivial basin found at `lambda_used`.
    pub other_basins: Vec<f64>,
}

impl MinimizerPair {
    /// More than one distinct nontrivial minimizer was seen.
    pub fn ambiguous(&self) -> bool {
        !self.other_basins.is_empty()
    }

    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec::new(self.mode, self.lambda_used)
    }
}

/// Computes the nontrivial minimizer at `lambda* - tol_lambda 2^-j`,
/// `j = 0, 1, 2`, and returns the `j = 2` profile paired with the trivial one.
pub fn extract_pair(star: &LambdaStar, opts: &Bvp1dOptions) -> Result<MinimizerPair> {
    let mode = star.mode;
    let mut profiles: Vec<(f64, Profile1D, Vec<f64>)> = Vec::with_capacity(3);
    let mut warm = star.warm.clone();
    for j in 0..3 {
        let lambda = star.lambda_star - opts.tol_lambda * 0.5f64.powi(j);
        let spec = ProblemSpec::new(mode, lambda);
        let g = global_min_1d_with_seeds(&spec, opts, std::slice::from_ref(&warm))?;
        let best = g.best_nontrivial(opts.tol_energy).ok_or(Error::NonConvergence {
            iterations: opts.max_iter,
            residual: f64::NAN,
        })?;
        let others = g
            .basins
            .iter()
            .filter(|b| !b.trivial && b.profile.max_abs_diff(&best.profile) > BASIN_MERGE_TOL)
            .map(|b| b.sup_norm)
            .collect();
        warm = best.profile.clone();
        profiles.push((lambda, best.profile.clone(), others));
    }
    let cauchy_diffs = [
        profiles[0].1.max_abs_diff(&profiles[1].1),
        profiles[1].1.max_abs_diff(&profiles[2].1),
    ];
    let (lambda_used, phibar, others) = profiles.pop().unwrap();
    let phi = Profile1D::trivial(mode, opts.m);
    let min_gap = (1..opts.m)
        .map(|j| phibar.values[j] - phi.values[j])
        .fold(f64::INFINITY, f64::min);
    if min_gap <= 0.0 {
        return Err(Error::PairNotOrdered { min_gap });
    }
    let spec = ProblemSpec::new(mode, lambda_used);
    Ok(MinimizerPair {
        mode,
        energy: energy_unchecked(&phibar.values, &spec),
        trivial_energy: energy_unchecked(&phi.values, &spec),
        phi,
        phibar,
        lambda_star: star.lambda_star,
        lambda_used,
        cauchy_diffs,
        other_basins: others,
    })
}

/// Discrete first integral `1/2 psi'^2 + F(psi)` at interior nodes.
///
/// The three-point scheme is a Störmer–Verlet step for `psi'' = -f(psi)`;
/// the returned quantity is its modified energy through `O(h^2)`, which the
/// discrete solution conserves to `O(h^4)`.
pub fn first_integral(psi: &Profile1D, spec: &ProblemSpec) -> Vec<f64> {
    let v = psi.values();
    let m = psi.m();
    let h = psi.h();
    (1..m)
        .map(|j| {
            let p = (v[j + 1] - v[j - 1]) / (2.0 * h);
            let acc = (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (h * h);
            let (big_f, _, fp) = spec.potential_jet(v[j]);
            0.5 * p * p + big_f + h * h / 12.0 * fp * p * p - h * h / 24.0 * acc * acc
        })
        .collect()
}

pub fn first_integral_spread(psi: &Profile1D, spec: &ProblemSpec) -> f64 {
    let e = first_integral(psi, spec);
    let (lo, hi) = e
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    hi - lo
}

/// Fourth-order one-sided slopes `(psi'(0), psi'(1))`.
pub fn endpoint_slopes(psi: &Profile1D) -> (f64, f64) {
    let v = psi.values();
    let m = psi.m();
    let h = psi.h();
    let left = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / (12.0 * h);
    let right =
        (25.0 * v[m] - 48.0 * v[m - 1] + 36.0 * v[m - 2] - 16.0 * v[m - 3] + 3.0 * v[m - 4]) / (12.0 * h);
    (left, right)
}

/// `max_j |psi(t_j) - psi(1 - t_j)|`.
pub fn symmetry_defect(psi: &Profile1D) -> f64 {
    let v = psi.values();
    let m = psi.m();
    (0..=m).map(|j| (v[j] - v[m - j]).abs()).fold(0.0, f64::max)
}

/// Largest second difference over interior nodes (nonpositive for concave profiles).
pub fn max_second_difference(psi: &Profile1D) -> f64 {
    psi.values()
        .windows(3)
        .map(|w| w[2] - 2.0 * w[1] + w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Number of sign changes in the sequence of first differences.
pub fn slope_sign_changes(psi: &Profile1D) -> usize {
    let diffs: Vec<f64> = psi
        .values()
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d != 0.0)
        .collect();
    diffs.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(m: usize) -> Bvp1dOptions {
        Bvp1dOptions { m, ..Default::default() }
    }

    #[test]
    fn ramp_energy_is_one_half_exactly() {
        for m in [4, 64, 2048] {
            let p = Profile1D::trivial(Mode::Ramp, m);
            let e = energy_1d(&p, &ProblemSpec::new(Mode::Ramp, 5.0)).unwrap();
            assert!((e - 0.5).abs() <= 4.0 * f64::EPSILON, "m={m}: {e}");
        }
    }

    #[test]
    fn zero_mode_trivial_energy() {
        let p = Profile1D::trivial(Mode::Zero, 1000);
        let e = energy_1d(&p, &ProblemSpec::new(Mode::Zero, 5.0)).unwrap();
        assert!((e + 1.0 / 6.0).abs() < 1e-4);
        let flat = Profile1D::from_fn(Mode::Zero, 100, |_| 0.0);
        assert_eq!(energy_1d(&flat, &ProblemSpec::new(Mode::Zero, 5.0)).unwrap(), 0.0);
    }

    #[test]
    fn boundary_mismatch_is_rejected() {
        let err = Profile1D::new(Mode::Ramp, vec![0.0, 0.5, 0.9]).unwrap_err();
        assert!(matches!(err, Error::BoundaryMismatch { .. }));
        let p = Profile1D::trivial(Mode::Zero, 8);
        assert!(energy_1d(&p, &ProblemSpec::new(Mode::Ramp, 1.0)).is_err());
    }

    #[test]
    fn trivial_profiles_are_fixed_points() {
        for (mode, lambda) in [(Mode::Ramp, 0.3), (Mode::Ramp, 40.0), (Mode::Zero, 0.3)] {
            let spec = ProblemSpec::new(mode, lambda);
            let seed = Profile1D::trivial(mode, 256);
            let sol = solve_el(&spec, &seed, &opts(256)).unwrap();
            assert!(sol.profile.max_abs_diff(&seed) < 1e-12);
            assert_eq!(sol.iterations, 0);
        }
    }

    #[test]
    fn amplified_seed_escapes_in_zero_mode() {
        let spec = ProblemSpec::new(Mode::Zero, 1.0 / 1024.0);
        let seed = Profile1D::from_fn(Mode::Zero, 512, |t| 20.0 * t * (1.0 - t));
        let sol = solve_el(&spec, &seed, &opts(512)).unwrap();
        assert!(sol.profile.sup_norm() > 1.0);
        assert!(sol.energy < -1.0 / 6.0);
        for w in sol.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-13 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn tridiagonal_solver_matches_dense_product() {
        let diag = vec![4.0, 5.0, 6.0, 7.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut b: Vec<f64> = (0..4)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s -= x[i - 1];
                }
                if i < 3 {
                    s -= x[i + 1];
                }
                s
            })
            .collect();
        solve_tridiagonal(&diag, -1.0, &mut b).unwrap();
        for (u, v) in b.iter().zip(x) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn restrict_keeps_coarse_nodes() {
        let p = Profile1D::from_fn(Mode::Ramp, 64, |t| t + t * (1.0 - t));
        let c = p.restrict(16).unwrap();
        assert_eq!(c.m(), 16);
        assert_eq!(c.values()[4], p.values()[16]);
        assert!(p.restrict(10).is_err());
    }

    #[test]
    fn sign_change_and_concavity_helpers() {
        let p = Profile1D::from_fn(Mode::Ramp, 64, |t| t + 4.0 * t * (1.0 - t));
        assert_eq!(slope_sign_changes(&p), 1);
        assert!(max_second_difference(&p) < 0.0);
        let z = Profile1D::trivial(Mode::Zero, 64);
        assert!(symmetry_defect(&z) < 1e-15);
    }
}
