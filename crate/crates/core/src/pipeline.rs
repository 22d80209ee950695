//! End-to-end run: critical coupling, minimizer pair, heteroclinic, flow
//! checks, convexity witnesses and figure data, with a checkpoint after each
//! expensive stage.
//!
//! Checkpoints carry a key hashed from the configuration sections they depend
//! on; with `resume` set, a checkpoint whose key matches is loaded instead of
//! recomputed.

use crate::bvp1d::{
    endpoint_slopes, extract_pair, find_lambda_star, first_integral, max_second_difference, slope_sign_changes,
    symmetry_defect, MinimizerPair, Profile1D,
};
use crate::config::{hex, RunConfig};
use crate::error::{Error, Result, StageContext};
use crate::eulerflow::{boundary_sign_pattern, flow_report_with, to_flow, FlowField, FlowReport, SignPattern};
use crate::geometry::{
    brute_force_nonconvex, find_nonconvexity_witness, level_curve, polylines_csv, polylines_svg, trace_streamlines,
    ConvexityWitness,
};
use crate::io::{self, FieldMeta};
use crate::nonlinearity::{Mode, ProblemSpec, CHI_TAG};
use crate::strip2d::{continuation, ContinuationLevel, Field2D};
use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

const SOURCES: &[&str] = &[
    include_str!("bvp1d.rs"),
    include_str!("config.rs"),
    include_str!("error.rs"),
    include_str!("eulerflow.rs"),
    include_str!("geometry.rs"),
    include_str!("io.rs"),
    include_str!("nonlinearity.rs"),
    include_str!("pipeline.rs"),
    include_str!("strip2d.rs"),
];

/// Package version plus a hash of the numerical sources.
pub fn artifact_version() -> String {
    let mut h = Sha256::new();
    for s in SOURCES {
        h.update(s.as_bytes());
    }
    format!("{}+{}", env!("CARGO_PKG_VERSION"), &hex(&h.finalize())[..16])
}

fn key_of<T: Serialize>(parts: &T) -> String {
    let s = serde_json::to_string(parts).expect("keys are plain data");
    hex(&Sha256::digest(format!("{}|{s}", artifact_version()).as_bytes()))
}

/// Critical coupling and pair diagnostics on the fine one-dimensional grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bvp1dSummary {
    pub key: String,
    pub m: usize,
    pub lambda_star: f64,
    pub bracket: (f64, f64),
    pub bisection_steps: usize,
    pub threshold: f64,
    /// Number of below-to-not-below transitions along the scan.
    pub scan_transitions: usize,
    pub lambda_used: f64,
    pub energy: f64,
    /// `I(phibar) - threshold`.
    pub energy_gap: f64,
    pub phibar_sup: f64,
    /// `min (phibar - phi)` over interior nodes.
    pub min_gap: f64,
    pub cauchy_diffs: [f64; 2],
    pub first_integral_mean: f64,
    pub first_integral_spread: f64,
    /// Spread divided by `max(1, |mean|)`.
    pub first_integral_spread_relative: f64,
    pub slope_left: f64,
    pub slope_right: f64,
    pub symmetry_defect: f64,
    pub max_second_difference: f64,
    pub slope_sign_changes: usize,
    pub other_basins: Vec<f64>,
    /// More than one distinct nontrivial minimizer was found.
    pub ambiguous: bool,
}

/// Pair on the strip's vertical grid, enough to rebuild [`MinimizerPair`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheckpoint {
    pub key: String,
    pub mode: Mode,
    pub lambda_star: f64,
    pub lambda_used: f64,
    pub energy: f64,
    pub trivial_energy: f64,
    pub cauchy_diffs: [f64; 2],
    pub other_basins: Vec<f64>,
    pub phibar: Vec<f64>,
}

impl PairCheckpoint {
    fn from_pair(key: String, p: &MinimizerPair) -> Self {
        PairCheckpoint {
            key,
            mode: p.mode,
            lambda_star: p.lambda_star,
            lambda_used: p.lambda_used,
            energy: p.energy,
            trivial_energy: p.trivial_energy,
            cauchy_diffs: p.cauchy_diffs,
            other_basins: p.other_basins.clone(),
            phibar: p.phibar.values().to_vec(),
        }
    }

    pub fn to_pair(&self) -> Result<MinimizerPair> {
        let phibar = Profile1D::new(self.mode, self.phibar.clone())?;
        Ok(MinimizerPair {
            mode: self.mode,
            phi: Profile1D::trivial(self.mode, phibar.m()),
            phibar,
            lambda_star: self.lambda_star,
            lambda_used: self.lambda_used,
            energy: self.energy,
            trivial_energy: self.trivial_energy,
            cauchy_diffs: self.cauchy_diffs,
            other_basins: self.other_basins.clone(),
        })
    }
}

/// Continuation outcome without the field itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSummary {
    pub key: String,
    pub lambda: f64,
    pub half_length: f64,
    pub a: f64,
    pub levels: Vec<ContinuationLevel>,
    pub window_diffs_decreasing: bool,
    /// Ratios of successive common-window differences.
    pub observed_rates: Vec<f64>,
    pub min_dx1u: f64,
    pub min_dx1u_window: f64,
    pub end_gap_left: f64,
    pub end_gap_right: f64,
    pub hamiltonian_spread: f64,
    pub hamiltonian_mean: f64,
    pub max_corridor_violation: f64,
    pub energy_monotone: bool,
}

/// Witness search at one level together with the exhaustive oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessEntry {
    pub alpha: f64,
    pub witness: Option<ConvexityWitness>,
    pub revalidated: bool,
    pub candidates_tried: usize,
    pub oracle_nonconvex: bool,
    pub agrees_with_oracle: bool,
}

/// Counts of the exported figure data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSummary {
    pub levels: Vec<f64>,
    pub level_curves: usize,
    pub streamlines: usize,
    /// Largest drift of `u` along any traced streamline.
    pub max_streamline_drift: f64,
}

/// One pass/fail verification with its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn check_le(name: &str, value: f64, threshold: f64) -> Check {
    Check { name: name.into(), value, threshold, pass: value <= threshold }
}

fn check_flag(name: &str, ok: bool) -> Check {
    Check { name: name.into(), value: if ok { 1.0 } else { 0.0 }, threshold: 1.0, pass: ok }
}

/// Failure record embedded in a partial report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
    pub numerical: bool,
}

/// Aggregate of every stage; sections are absent when a stage did not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub artifact_version: String,
    pub config_sha256: String,
    pub chi: String,
    pub mode: Mode,
    pub bvp1d: Option<Bvp1dSummary>,
    pub pair: Option<PairSummary>,
    pub continuation: Option<ContinuationSummary>,
    pub flow: Option<FlowReport>,
    pub sign_pattern: Option<SignPattern>,
    pub witnesses: Option<Vec<WitnessEntry>>,
    pub plot: Option<PlotSummary>,
    pub checks: Vec<Check>,
    pub verified: bool,
    pub error: Option<StageFailure>,
    pub config: RunConfig,
}

/// Scalar part of the strip-grid pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub m: usize,
    pub lambda_star: f64,
    pub lambda_used: f64,
    pub energy: f64,
    pub trivial_energy: f64,
    pub phibar_sup: f64,
}

/// Stage orchestration over one output directory.
pub struct Pipeline {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub resume: bool,
    timings: Vec<(String, f64)>,
}

/// Everything produced by [`Pipeline::run`].
pub struct RunOutput {
    pub report: Report,
    pub field: Option<Field2D>,
    pub flow: Option<FlowField>,
}

impl Pipeline {
    pub fn new(cfg: RunConfig, out: Option<PathBuf>, resume: bool) -> Self {
        let out = out.unwrap_or_else(|| cfg.out_dir.clone());
        Pipeline { cfg, out, resume, timings: Vec::new() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn timed<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f(self);
        self.timings.push((name.to_string(), t.elapsed().as_secs_f64()));
        r
    }

    /// Wall-clock seconds per stage, in execution order.
    pub fn timings(&self) -> &[(String, f64)] {
        &self.timings
    }

    pub fn write_timings(&self) -> Result<()> {
        let map: serde_json::Map<String, serde_json::Value> =
            self.timings.iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect();
        io::write_json(&self.path("timings.json"), &map)
    }

    fn load_if_current<T: for<'de> Deserialize<'de>>(&self, path: &Path, key: &str, key_of: impl Fn(&T) -> &str) -> Option<T> {
        if !self.resume || !path.exists() {
            return None;
        }
        match io::read_json::<T>(path) {
            Ok(v) if key_of(&v) == key => {
                info!("resuming from {}", path.display());
                Some(v)
            }
            _ => None,
        }
    }

    /// Critical coupling and pair on the fine one-dimensional grid.
    pub fn stage_bvp1d(&mut self) -> Result<Bvp1dSummary> {
        let cfg = &self.cfg;
        let key = key_of(&("bvp1d", cfg.mode, &cfg.chi, &cfg.bvp1d));
        let path = self.path("bvp1d.json");
        if let Some(s) = self.load_if_current::<Bvp1dSummary>(&path, &key, |s| &s.key) {
            return Ok(s);
        }
        self.timed("bvp1d", |p| {
            let (mode, opts) = (p.cfg.mode, p.cfg.bvp1d.clone());
            let star = find_lambda_star(mode, &opts)?;
            let pair = extract_pair(&star, &opts)?;
            let spec = pair.spec();
            let fi = first_integral(&pair.phibar, &spec);
            let (lo, hi) = fi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            let mean = fi.iter().sum::<f64>() / fi.len() as f64;
            let (s0, s1) = endpoint_slopes(&pair.phibar);
            let min_gap = pair
                .phibar
                .values()
                .iter()
                .zip(pair.phi.values())
                .skip(1)
                .take(opts.m - 1)
                .map(|(a, b)| a - b)
                .fold(f64::INFINITY, f64::min);
            let summary = Bvp1dSummary {
                key,
                m: opts.m,
                lambda_star: star.lambda_star,
                bracket: star.bracket,
                bisection_steps: star.bisection_steps,
                threshold: star.threshold,
                scan_transitions: star.scan.windows(2).filter(|w| w[0].below != w[1].below).count(),
                lambda_used: pair.lambda_used,
                energy: pair.energy,
                energy_gap: pair.energy - star.threshold,
                phibar_sup: pair.phibar.sup_norm(),
                min_gap,
                cauchy_diffs: pair.cauchy_diffs,
                first_integral_mean: mean,
                first_integral_spread: hi - lo,
                first_integral_spread_relative: (hi - lo) / mean.abs().max(1.0),
                slope_left: s0,
                slope_right: s1,
                symmetry_defect: symmetry_defect(&pair.phibar),
                max_second_difference: max_second_difference(&pair.phibar),
                slope_sign_changes: slope_sign_changes(&pair.phibar),
                other_basins: pair.other_basins.clone(),
                ambiguous: pair.ambiguous(),
            };
            io::write_atomic(&p.path("lambda_scan.csv"), &io::scan_csv(&star.scan))?;
            io::write_atomic(&p.path("phibar.csv"), &io::profile_csv(&pair.phibar))?;
            io::write_json(&p.path("bvp1d.json"), &summary)?;
            Ok(summary)
        })
        .stage("bvp1d")
    }

    /// Pair on the vertical grid of the strip.
    pub fn stage_pair(&mut self) -> Result<MinimizerPair> {
        let opts = self.cfg.bvp1d_for_strip();
        let key = key_of(&("pair", self.cfg.mode, &self.cfg.chi, &opts));
        let path = self.path("pair.json");
        if let Some(c) = self.load_if_current::<PairCheckpoint>(&path, &key, |c| &c.key) {
            return c.to_pair().stage("pair");
        }
        self.timed("pair", |p| {
            let star = find_lambda_star(p.cfg.mode, &opts)?;
            let pair = extract_pair(&star, &opts)?;
            io::write_json(&path, &PairCheckpoint::from_pair(key, &pair))?;
            Ok(pair)
        })
        .stage("pair")
    }

    /// Continuation in the strip half-length.
    pub fn stage_strip(&mut self, pair: &MinimizerPair) -> Result<(Field2D, ContinuationSummary)> {
        let key = key_of(&(
            "strip2d",
            self.cfg.mode,
            &self.cfg.chi,
            self.cfg.bvp1d_for_strip(),
            &self.cfg.strip2d,
            &self.cfg.continuation,
        ));
        let (csv, summary_path) = (self.path("field.csv"), self.path("continuation.json"));
        if let Some(s) = self.load_if_current::<ContinuationSummary>(&summary_path, &key, |s| &s.key) {
            if let Ok((u, _)) = io::read_field(&csv) {
                return Ok((u, s));
            }
        }
        self.timed("strip2d", |p| {
            let spec = pair.spec();
            let r = continuation(&spec, &pair.phi, &pair.phibar, &p.cfg.strip2d, &p.cfg.continuation)?;
            let diffs = r.window_diffs();
            let summary = ContinuationSummary {
                key,
                lambda: spec.lambda,
                half_length: r.half_length,
                a: r.a,
                window_diffs_decreasing: diffs.windows(2).all(|w| w[1] < w[0]),
                observed_rates: diffs.windows(2).map(|w| w[0] / w[1]).collect(),
                levels: r.levels.clone(),
                min_dx1u: r.min_dx1u,
                min_dx1u_window: r.min_dx1u_window,
                end_gap_left: r.end_gaps.0,
                end_gap_right: r.end_gaps.1,
                hamiltonian_spread: r.hamiltonian_spread,
                hamiltonian_mean: r.hamiltonian_mean,
                max_corridor_violation: r.max_corridor_violation,
                energy_monotone: r.energy_monotone,
            };
            let meta = FieldMeta {
                mode: spec.mode,
                lambda: spec.lambda,
                half_length: r.half_length,
                a: r.a,
                x_min: r.field.x_min(),
                hx: r.field.hx(),
                hy: r.field.hy(),
                nx: r.field.nx(),
                ny: r.field.ny(),
                tol_residual: p.cfg.strip2d.tol_residual,
                tol_cont: p.cfg.continuation.tol_cont,
            };
            io::write_field(&csv, &r.field, &meta)?;
            io::write_json(&summary_path, &summary)?;
            Ok((r.field, summary))
        })
        .stage("strip2d")
    }

    /// Velocity, pressure and every flow check.
    pub fn stage_flow(&mut self, u: &Field2D, lambda: f64) -> Result<(FlowField, FlowReport, SignPattern)> {
        self.timed("flow", |p| {
            let spec = ProblemSpec::new(p.cfg.mode, lambda);
            let v = to_flow(u, &spec, p.cfg.continuation.end_margin);
            let report = flow_report_with(&v, Some(p.cfg.mode), &p.cfg.flow);
            let sign = boundary_sign_pattern(&v, p.cfg.mode);
            io::write_atomic(&p.path("flow.csv"), &io::flow_csv(&v))?;
            io::write_json(&p.path("flow_report.json"), &report)?;
            Ok((v, report, sign))
        })
        .stage("flow")
    }

    /// Witness search and exhaustive oracle at every configured level.
    pub fn stage_witness(&mut self, u: &Field2D, alphas: &[f64]) -> Result<Vec<WitnessEntry>> {
        self.timed("witness", |p| {
            let w = &p.cfg.witness;
            let entries: Vec<WitnessEntry> = alphas
                .iter()
                .map(|&alpha| {
                    let search = find_nonconvexity_witness(u, alpha, &w.search);
                    let oracle = brute_force_nonconvex(u, alpha, w.oracle_coarsen, w.search.end_margin).is_some();
                    let revalidated = search.witness.map(|x| x.validate(u, w.search.tol)).unwrap_or(false);
                    WitnessEntry {
                        alpha,
                        agrees_with_oracle: search.witness.is_some() == oracle,
                        witness: search.witness,
                        revalidated,
                        candidates_tried: search.candidates_tried,
                        oracle_nonconvex: oracle,
                    }
                })
                .collect();
            io::write_json(&p.path("witness.json"), &entries)?;
            Ok(entries)
        })
        .stage("witness")
    }

    /// Level curves and streamlines as CSV and SVG.
    pub fn stage_plot(&mut self, u: &Field2D, v: &FlowField) -> Result<PlotSummary> {
        self.timed("plot", |p| {
            let pc = p.cfg.plot.clone();
            let (lo, hi) = u.min_max();
            let levels: Vec<f64> = if pc.level_alphas.is_empty() {
                vec![0.25, 0.5, 1.0 - 1e-3, 2.0, 5.0]
            } else {
                pc.level_alphas.clone()
            }
            .into_iter()
            .filter(|&a| a > lo && a < hi)
            .collect();
            let mut curves = Vec::new();
            for &a in &levels {
                curves.extend(level_curve(u, a)?);
            }
            let margin = p.cfg.continuation.end_margin;
            let n = pc.streamline_seeds.max(1);
            let mut seeds = Vec::with_capacity(2 * n);
            for x in [u.x_min() + margin, u.x_max() - margin] {
                for k in 0..n {
                    seeds.push([x, (k as f64 + 0.5) / n as f64]);
                }
            }
            let eps = p.cfg.flow.eps_stag_rel * v.max_speed();
            let lines = trace_streamlines(v, &seeds, pc.step, pc.max_steps, eps)?;
            let drift = lines
                .iter()
                .map(|l| {
                    let u0 = crate::geometry::eval(u, l.points[0][0], l.points[0][1]);
                    l.points
                        .iter()
                        .map(|q| (crate::geometry::eval(u, q[0], q[1]) - u0).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            let range = (u.x_min(), u.x_max());
            io::write_atomic(&p.path("level_curves.csv"), &polylines_csv(&curves))?;
            io::write_atomic(&p.path("level_curves.svg"), &polylines_svg(&curves, range, pc.svg_width))?;
            io::write_atomic(&p.path("streamlines.csv"), &polylines_csv(&lines))?;
            io::write_atomic(&p.path("streamlines.svg"), &polylines_svg(&lines, range, pc.svg_width))?;
            Ok(PlotSummary { levels, level_curves: curves.len(), streamlines: lines.len(), max_streamline_drift: drift })
        })
        .stage("plot")
    }

    fn empty_report(&self) -> Report {
        Report {
            artifact_version: artifact_version(),
            config_sha256: self.cfg.sha256(),
            chi: CHI_TAG.to_string(),
            mode: self.cfg.mode,
            bvp1d: None,
            pair: None,
            continuation: None,
            flow: None,
            sign_pattern: None,
            witnesses: None,
            plot: None,
            checks: Vec::new(),
            verified: false,
            error: None,
            config: self.cfg.clone(),
        }
    }

    /// Runs every stage; a failing stage is recorded in the report, which is
    /// always written.
    pub fn run(&mut self) -> RunOutput {
        let mut report = self.empty_report();
        let mut field = None;
        let mut flow = None;
        let result = self.run_into(&mut report, &mut field, &mut flow);
        if let Err(e) = result {
            let stage = match &e {
                Error::Stage { stage, .. } => stage.to_string(),
                _ => "pipeline".to_string(),
            };
            report.error = Some(StageFailure { stage, message: e.root().to_string(), numerical: e.is_numerical() });
        }
        report.checks = self.checks(&report);
        report.verified = report.error.is_none() && report.checks.iter().all(|c| c.pass);
        if let Err(e) = io::write_json(&self.path("report.json"), &report) {
            report.error.get_or_insert(StageFailure { stage: "report".into(), message: e.to_string(), numerical: false });
        }
        let _ = self.write_timings();
        RunOutput { report, field, flow }
    }

    fn run_into(&mut self, report: &mut Report, field: &mut Option<Field2D>, flow: &mut Option<FlowField>) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(Error::from).stage("setup")?;
        report.bvp1d = Some(self.stage_bvp1d()?);
        let pair = self.stage_pair()?;
        report.pair = Some(PairSummary {
            m: pair.phibar.m(),
            lambda_star: pair.lambda_star,
            lambda_used: pair.lambda_used,
            energy: pair.energy,
            trivial_energy: pair.trivial_energy,
            phibar_sup: pair.phibar.sup_norm(),
        });
        let (u, summary) = self.stage_strip(&pair)?;
        report.continuation = Some(summary);
        let (v, fr, sign) = self.stage_flow(&u, pair.lambda_used)?;
        report.flow = Some(fr);
        report.sign_pattern = Some(sign);
        let alphas = self.cfg.witness.effective_alphas(self.cfg.mode);
        report.witnesses = Some(self.stage_witness(&u, &alphas)?);
        report.plot = Some(self.stage_plot(&u, &v)?);
        *field = Some(u);
        *flow = Some(v);
        Ok(())
    }

    /// Verification checks derived from whatever stages completed.
    pub fn checks(&self, r: &Report) -> Vec<Check> {
        let t = &self.cfg.verify;
        let mut c = Vec::new();
        if let Some(s) = &r.continuation {
            c.push(check_le("continuation_end_gap", s.end_gap_left.max(s.end_gap_right), t.max_end_gap));
            c.push(check_flag("continuation_window_diffs_decreasing", s.window_diffs_decreasing));
            c.push(check_flag("monotone_in_x1_on_window", s.min_dx1u_window > 0.0));
            c.push(check_le("hamiltonian_spread", s.hamiltonian_spread, t.max_hamiltonian_spread));
        }
        if let Some(f) = &r.flow {
            c.push(check_le("divergence", f.divergence, t.max_divergence));
            c.push(check_le("slip", f.slip, t.max_slip));
            c.push(check_le("euler_residual_scaled", f.euler_residual_scaled, t.max_euler_residual_scaled));
            c.push(check_le("curvature_relative_gap", f.curvature_relative_gap, t.max_curvature_gap));
            c.push(check_le("balancing_defect_relative", f.balancing_defect_relative, t.max_balancing_defect));
            c.push(check_flag("angle_set_semicircle", f.angle_class == crate::eulerflow::AngleClass::Semicircle));
        }
        if let Some(s) = &r.sign_pattern {
            c.push(check_flag("boundary_sign_pattern", s.ok));
        }
        if let Some(ws) = &r.witnesses {
            for w in ws {
                c.push(check_flag(&format!("witness_alpha_{}", w.alpha), w.witness.is_some() && w.revalidated));
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_depend_on_inputs() {
        assert_ne!(key_of(&("a", 1)), key_of(&("a", 2)));
        assert_eq!(key_of(&("a", 1)), key_of(&("a", 1)));
    }

    #[test]
    fn artifact_version_is_stable() {
        assert_eq!(artifact_version(), artifact_version());
        assert!(artifact_version().starts_with(env!("CARGO_PKG_VERSION")));
    }
}
