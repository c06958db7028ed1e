//! The batch pipeline: cycle, basis and verification always run, then the
//! experiment sections that the configuration asks for.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use planar_ppv::adjoint::verify_basis;
use planar_ppv::isochron::isochron_experiment;
use planar_ppv::phase::{adler_half_width, injection_lock_scan, ppv_fourier, ppv_mean_square, LockScanOptions};
use planar_ppv::stochastic::{diffusion_summary, simulate_sde_ensemble, solve_fp, stable_dt, NoiseModel, PsiGrid};
use planar_ppv::{find_cycle, BasisOptions, DilibertoBasis, LimitCycle};

use crate::config::{NoiseKind, RunConfig};
use crate::svg;

#[derive(Debug)]
pub enum RunError {
    Stage { stage: &'static str, source: planar_ppv::Error },
    Io { path: PathBuf, source: std::io::Error },
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Stage { stage, source } => write!(f, "stage `{stage}` failed: {source}"),
            RunError::Io { path, source } => write!(f, "cannot write {}: {source}", path.display()),
        }
    }
}

impl std::error::Error for RunError {}

trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, RunError>;
}

impl<T> StageExt<T> for planar_ppv::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, RunError> {
        self.map_err(|source| RunError::Stage { stage, source })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub verification_passed: bool,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| RunError::Io { path: path.clone(), source })?;
        self.files.push(path);
        Ok(())
    }
}

fn e(v: f64) -> String {
    format!("{v:.12e}")
}

pub fn run(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    fs::create_dir_all(&cfg.output_dir).map_err(|source| RunError::Io { path: cfg.output_dir.clone(), source })?;
    let mut out = Writer { dir: cfg.output_dir.clone(), files: Vec::new() };
    let mut s = String::new();
    let model = &cfg.model;

    log::info!("locating the limit cycle of {model}");
    let cycle: Arc<LimitCycle> =
        Arc::new(find_cycle(model, cfg.cycle.guess, cfg.cycle.settle_time, cfg.cycle.tol).stage("cycle")?);
    out.write("cycle.csv", &LimitCycle::samples_csv(&cycle.sample(cfg.grid).stage("cycle")?))?;

    log::info!("building the Floquet frame on {} points", cfg.grid);
    let basis = DilibertoBasis::with_options(cycle.clone(), &BasisOptions { grid: cfg.grid, ..Default::default() })
        .stage("basis")?;
    out.write("basis.csv", &basis.to_csv())?;

    log::info!("verifying the closed-form frame");
    let report = verify_basis(&cycle, &basis, cfg.verify_tol).stage("verify")?;
    if cfg.verify {
        let mut text = String::from("metric,value,status\n");
        for item in &report.items {
            let _ = writeln!(
                text,
                "{},{},{}",
                item.metric,
                planar_ppv::csv::fmt_f64(item.value),
                if item.pass { "pass" } else { "fail" }
            );
        }
        out.write("verify.csv", &text)?;
    }

    let _ = writeln!(s, "model={}", model.name());
    let params: Vec<String> = model.params().iter().map(|(n, v)| format!("{n}={v}")).collect();
    let _ = writeln!(s, "params={}", params.join(","));
    let _ = writeln!(s, "seed={}", cfg.seed);
    let _ = writeln!(s, "sections={}", cfg.sections().join(","));
    let _ = writeln!(s, "period={}", e(cycle.period()));
    let _ = writeln!(s, "mu2={:.6}", basis.mu2());
    let _ = writeln!(s, "mu2_full={}", e(basis.mu2()));
    let _ = writeln!(s, "lambda2={}", e(basis.spectrum().lambda2()));
    let _ = writeln!(s, "anchor={},{}", e(cycle.anchor().x), e(cycle.anchor().y));
    let _ = writeln!(s, "closure_error={}", e(cycle.closure_error()));
    let _ = writeln!(s, "orthogonality_defect={}", e(basis.orthogonality_defect()));
    let _ = writeln!(s, "verify_tol={}", e(report.tol));
    s.push_str(&report.to_key_value());
    let _ = writeln!(s, "verification={}", if report.all_pass() { "pass" } else { "fail" });

    if let Some(k) = cfg.harmonics {
        log::info!("Fourier spectrum of v1 up to harmonic {k}");
        let spec = ppv_fourier(&basis, k).stage("ppv-fourier")?;
        out.write("spectrum.csv", &spec.to_csv())?;
        let ms = ppv_mean_square(&basis).stage("ppv-fourier")?;
        let _ = writeln!(s, "ppv_mean_square={}", e(ms));
        let _ = writeln!(s, "ppv_spectrum_power={}", e(spec.power()));
        let _ = writeln!(s, "ppv_first_harmonic_fraction={}", e(2.0 * spec.coeff_norm(1).powi(2) / ms));
    }

    if let Some(l) = &cfg.lock_scan {
        log::info!("injection lock scan over {} x {} points", l.eps.len(), l.detuning.len());
        let map =
            injection_lock_scan(&basis, l.amp, &l.eps, &l.detuning, &LockScanOptions { t_end: l.t_end, rtol: l.rtol })
                .stage("lock-scan")?;
        out.write("lock.csv", &map.to_csv())?;
        let spec = ppv_fourier(&basis, 1).stage("lock-scan")?;
        for (i, eps) in l.eps.iter().enumerate() {
            let measured = map.boundary(i).map(e).unwrap_or_else(|| "none".into());
            let _ = writeln!(
                s,
                "lock_half_width eps={} measured={measured} first_harmonic={}",
                e(*eps),
                e(adler_half_width(&spec, l.amp, *eps))
            );
        }
    }

    if let Some(n) = &cfg.noise {
        let noise = match n.kind {
            NoiseKind::Isotropic => NoiseModel::isotropic(n.sigma),
            NoiseKind::Directional(d) => NoiseModel::directional(d, n.sigma),
        }
        .stage("noise")?;
        let t_end = n.periods * cycle.period();
        let dt = n.dt.unwrap_or(cycle.period() / 100.0);
        log::info!("{} noisy phase paths over t = {t_end}", n.n_paths);
        let ens = simulate_sde_ensemble(&basis, &noise, n.n_paths, t_end, dt, cfg.seed).stage("noise")?;
        out.write("ensemble.csv", &ens.to_csv())?;
        let grid = PsiGrid::for_run(&basis, &noise, t_end, n.fp_cells).stage("noise")?;
        let fp_dt = stable_dt(&basis, &noise, &grid).min(t_end / 10.0);
        let field = solve_fp(&basis, &noise, &grid, t_end, fp_dt).stage("noise")?;
        out.write("density.csv", &field.to_csv())?;
        let mass_error = (0..field.times.len()).map(|i| (field.mass(i) - 1.0).abs()).fold(0.0, f64::max);
        let _ = writeln!(s, "diffusion_summary={}", e(diffusion_summary(&basis, &noise).stage("noise")?));
        let _ = writeln!(s, "mc_variance_rate={}", e(ens.final_variance() / t_end));
        let _ = writeln!(s, "fp_variance_growth={}", e(field.variance_growth()));
        let _ = writeln!(s, "fp_mass_error={}", e(mass_error));
    }

    if let Some(iso) = &cfg.isochron {
        let horizon = iso.horizon.unwrap_or(50.0 / basis.mu2().abs());
        log::info!("isochron experiment with {} offsets", iso.offsets.len());
        let rep = isochron_experiment(model, &cycle, &basis, iso.t_star, &iso.offsets, horizon).stage("isochron")?;
        out.write("isochron.csv", &rep.to_csv())?;
        if iso.svg {
            out.write("isochron.svg", &svg::isochron_figure(&cycle, &basis, &rep))?;
        }
        let _ = writeln!(s, "isochron_spread={}", e(rep.isochron_spread));
        match rep.control_spread {
            Some(c) => {
                let _ = writeln!(s, "control_spread={}", e(c));
            }
            None => s.push_str("control_spread=degenerate\n"),
        }
    }

    out.write("summary.txt", &s)?;
    Ok(RunOutcome { verification_passed: report.all_pass(), summary: s, files: out.files })
}

/// Reads and parses `path`, resolving `output_dir` against its directory.
pub fn load_config(path: &Path) -> Result<RunConfig, String> {
    let text = fs::read_to_string(path).map_err(|err| format!("cannot read {}: {err}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    crate::config::parse_config(&text, &base).map_err(|err| format!("{}: {err}", path.display()))
}
