//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use planar_ppv::adjoint::{adjoint_residual, numeric_monodromy, numeric_ppv, state_transition};
use planar_ppv::diliberto::compute_b;
use planar_ppv::isochron::isochron_experiment;
use planar_ppv::phase::{
    injection_lock_scan, ppv_fourier, ppv_mean_square, simulate_phase, LockScanOptions, Perturbation, Waveform,
};
use planar_ppv::stochastic::{diffusion_summary, simulate_sde_ensemble, solve_fp, stable_dt, NoiseModel, PsiGrid};
use planar_ppv::{find_cycle, DilibertoBasis, LimitCycle, OscillatorModel, Vec2};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn build(model: OscillatorModel, guess: Vec2, settle: f64) -> Result<(Arc<LimitCycle>, DilibertoBasis), String> {
    let cycle = Arc::new(find_cycle(&model, guess, settle, 1e-10).map_err(|e| e.to_string())?);
    let basis = DilibertoBasis::new(cycle.clone()).map_err(|e| e.to_string())?;
    Ok((cycle, basis))
}

fn stuart_landau() -> Result<(Arc<LimitCycle>, DilibertoBasis), String> {
    build(OscillatorModel::stuart_landau(1.0), Vec2::new(1.0, 0.0), 0.0)
}

fn van_der_pol() -> Result<(Arc<LimitCycle>, DilibertoBasis), String> {
    build(OscillatorModel::van_der_pol(1.0), Vec2::new(2.0, 0.0), 100.0)
}

/// Collects `name: value < limit` comparisons into one verdict.
struct Gate {
    notes: Vec<String>,
    failed: bool,
}

impl Gate {
    fn new() -> Self {
        Self { notes: Vec::new(), failed: false }
    }

    fn below(&mut self, name: &str, value: f64, limit: f64) {
        let ok = value < limit;
        self.failed |= !ok;
        self.notes.push(format!("{name}={value:.3e}{}{limit:.0e}", if ok { "<" } else { "!<" }));
    }

    fn within(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        let ok = (lo..=hi).contains(&value);
        self.failed |= !ok;
        self.notes.push(format!("{name}={value:.4}{}[{lo}, {hi}]", if ok { " in " } else { " not in " }));
    }

    fn note(&mut self, s: String) {
        self.notes.push(s);
    }

    fn timed(&mut self, elapsed: Duration, limit: Duration) {
        let ok = elapsed < limit;
        self.failed |= !ok;
        self.notes.push(format!("runtime={:.2}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()));
    }

    fn verdict(self) -> Check {
        let text = self.notes.join(", ");
        if self.failed {
            Err(text)
        } else {
            Ok(text)
        }
    }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut g = Gate::new();
    let (cycle, basis) = stuart_landau()?;
    g.below("|T-2pi|", (cycle.period() - TAU).abs(), 1e-8);
    g.below("|mu2+2|", (basis.mu2() + 2.0).abs(), 1e-8);
    let max_a = basis.grid().iter().map(|s| s.a.abs()).fold(0.0, f64::max);
    g.below("max|a|", max_a, 1e-9);
    // the anchor sits at angle θ₀ on the unit circle, so v₁(t) = (−sin(t+θ₀), cos(t+θ₀))
    let theta0 = cycle.anchor().y.atan2(cycle.anchor().x);
    let v_err = (0..256)
        .map(|j| {
            let t = cycle.period() * j as f64 / 256.0;
            let exact = Vec2::new(-(t + theta0).sin(), (t + theta0).cos());
            (basis.v1(t) - exact).norm()
        })
        .fold(0.0, f64::max);
    g.below("max|v1-exact|", v_err, 1e-7);
    g.below("orthogonality", basis.orthogonality_defect(), 1e-9);
    g.below("lie_bracket", basis.lie_bracket_defect(), 1e-8);
    g.timed(start.elapsed(), Duration::from_secs(10));
    g.verdict()
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut g = Gate::new();
    let (cycle, basis) = van_der_pol()?;
    let numeric = numeric_ppv(&cycle, 256).map_err(|e| e.to_string())?;
    let scale = numeric.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
    let diff = numeric.iter().map(|(t, v)| (basis.v1(*t) - *v).norm()).fold(0.0, f64::max);
    g.below("ppv_rel", diff / scale, 1e-6);
    let phi = numeric_monodromy(&cycle).map_err(|e| e.to_string())?;
    let (_, l2) = phi.real_eigenvalues().ok_or("complex monodromy eigenvalues")?;
    let mu2_num = l2.ln() / cycle.period();
    g.below("mu2_rel", (basis.mu2() - mu2_num).abs() / basis.mu2().abs(), 1e-6);
    let mut liouville: f64 = 0.0;
    for k in 1..=16 {
        let t = cycle.period() * k as f64 / 16.0;
        let det = state_transition(&cycle, t).map_err(|e| e.to_string())?.phi.det();
        let b = compute_b(&cycle, t).map_err(|e| e.to_string())?;
        liouville = liouville.max((det - b).abs() / b);
    }
    g.below("liouville_rel", liouville, 1e-7);
    g.timed(start.elapsed(), Duration::from_secs(30));
    g.verdict()
}

fn structural(g: &mut Gate, tag: &str, cycle: &LimitCycle, basis: &DilibertoBasis) {
    let (mut bi, mut norm) = (0.0f64, 0.0f64);
    for s in basis.grid() {
        let fr = basis.frame(s.t);
        bi = bi
            .max((fr.v1.dot(fr.u1) - 1.0).abs())
            .max(fr.v1.dot(fr.u2).abs())
            .max(fr.v2.dot(fr.u1).abs())
            .max((fr.v2.dot(fr.u2) - 1.0).abs());
        norm = norm.max((fr.v1.dot(cycle.velocity(s.t)) - 1.0).abs());
    }
    g.below(&format!("{tag}.biorth"), bi, 1e-9);
    g.below(&format!("{tag}.norm"), norm, 1e-9);
    let a = basis.frame_in_period(0.0);
    let b = basis.frame_in_period(cycle.period());
    g.below(&format!("{tag}.per_u2"), (a.u2 - b.u2).norm(), 1e-8);
    g.below(&format!("{tag}.per_v1"), (a.v1 - b.v1).norm(), 1e-8);
    g.below(&format!("{tag}.adjoint"), adjoint_residual(basis, 256, cycle.period() / 4096.0), 1e-5);
}

fn criterion_3() -> Check {
    let mut g = Gate::new();
    let (c, b) = stuart_landau()?;
    structural(&mut g, "sl", &c, &b);
    let (c, b) = van_der_pol()?;
    structural(&mut g, "vdp", &c, &b);
    g.verdict()
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let mut g = Gate::new();
    let (_, vdp) = van_der_pol()?;
    let flow = Perturbation::deterministic(Waveform::AlongFlow, 0.01).map_err(|e| e.to_string())?;
    let path = simulate_phase(&vdp, &flow, 100.0, 1e-10).map_err(|e| e.to_string())?;
    g.below("|psi(100)-1|", (path.final_psi() - 1.0).abs(), 1e-6);

    let (_, sl) = stuart_landau()?;
    let spec = ppv_fourier(&sl, 16).map_err(|e| e.to_string())?;
    let total = ppv_mean_square(&sl).map_err(|e| e.to_string())?;
    let first = spec.coeff_norm(1).powi(2) + spec.coeff_norm(-1).powi(2);
    g.below("1-mass(|k|=1)", 1.0 - first / total, 1e-8);

    let amp = Vec2::new(1.0, 0.0);
    let detunings: Vec<f64> = (-60..=60).map(|i| 0.00025 * i as f64).collect();
    let map = injection_lock_scan(&sl, amp, &[0.01, 0.02], &detunings, &LockScanOptions::default())
        .map_err(|e| e.to_string())?;
    let (Some(w1), Some(w2)) = (map.boundary(0), map.boundary(1)) else {
        return Err("lock boundary not bracketed by the detuning grid".into());
    };
    g.note(format!("half_widths={w1:.5},{w2:.5}"));
    g.within("ratio", w2 / w1, 2.0 * 0.85, 2.0 * 1.15);
    g.timed(start.elapsed(), Duration::from_secs(120));
    g.verdict()
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let mut g = Gate::new();
    let (cycle, sl) = stuart_landau()?;
    let noise = NoiseModel::isotropic(0.05).map_err(|e| e.to_string())?;
    let t_end = 10.0 * cycle.period();
    let ens =
        simulate_sde_ensemble(&sl, &noise, 4096, t_end, cycle.period() / 100.0, 20260101).map_err(|e| e.to_string())?;
    let mc = ens.final_variance() / t_end;
    let grid = PsiGrid::for_run(&sl, &noise, t_end, 400).map_err(|e| e.to_string())?;
    let field = solve_fp(&sl, &noise, &grid, t_end, stable_dt(&sl, &noise, &grid)).map_err(|e| e.to_string())?;
    let fp = field.variance_growth();
    let ds = diffusion_summary(&sl, &noise).map_err(|e| e.to_string())?;
    g.note(format!("mc={mc:.4e} fp={fp:.4e} summary={ds:.4e}"));
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
    g.below("mc~fp", rel(mc, fp), 0.05);
    g.below("mc~summary", rel(mc, ds), 0.05);
    g.below("fp~summary", rel(fp, ds), 0.05);
    let mass = (0..field.times.len()).map(|i| (field.mass(i) - 1.0).abs()).fold(0.0, f64::max);
    g.below("mass_err", mass, 1e-6);
    g.timed(start.elapsed(), Duration::from_secs(120));
    g.verdict()
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let mut g = Gate::new();
    let (cycle, basis) = van_der_pol()?;
    let model = cycle.model().clone();
    let horizon = 50.0 / basis.mu2().abs();
    let run =
        |offsets: &[f64]| isochron_experiment(&model, &cycle, &basis, 0.0, offsets, horizon).map_err(|e| e.to_string());
    let full = run(&[-0.05, -0.02, 0.02, 0.05])?;
    let half = run(&[-0.025, -0.01, 0.01, 0.025])?;
    let control = full.control_spread.ok_or("control direction is degenerate")?;
    g.below("spread/T", full.isochron_spread / cycle.period(), 1e-3);
    g.below("spread/control", full.isochron_spread / control, 0.1);
    g.within("scaling", full.isochron_spread / half.isochron_spread, 3.5, 4.5);
    g.timed(start.elapsed(), Duration::from_secs(60));
    g.verdict()
}

const DETERMINISM_CONFIG: &str = "\
model = vanderpol
seed = 11
[verify]
[ppv-fourier]
harmonics = 8
[lock-scan]
eps = 0.02
detuning = linspace(-0.02, 0.02, 9)
t_end = 1000
[noise]
n_paths = 256
periods = 4
fp_cells = 200
[isochron]
offsets = -0.02, 0.02
";

fn run_cli(dir: &Path) -> Result<(), String> {
    fs::write(dir.join("run.cfg"), DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let status = Command::new(env!("CARGO_BIN_EXE_planar-ppv"))
        .arg("run")
        .arg(dir.join("run.cfg"))
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("cli exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr)));
    }
    Ok(())
}

fn criterion_7() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_cli(a.path())?;
    run_cli(b.path())?;
    let mut names: Vec<String> = fs::read_dir(a.path().join("out"))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    if names.len() < 8 {
        return Err(format!("expected all section CSVs, found {names:?}"));
    }
    for n in &names {
        let x = fs::read(a.path().join("out").join(n)).map_err(|e| e.to_string())?;
        let y = fs::read(b.path().join("out").join(n)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{n} differs between runs"));
        }
    }
    Ok(format!("{} CSVs byte-identical", names.len()))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("analytic Stuart-Landau suite", criterion_1),
        ("closed form vs adjoint oracle (van der Pol)", criterion_2),
        ("structural invariants on both models", criterion_3),
        ("phase-model sanity and lock-range linearity", criterion_4),
        ("stochastic self-consistency", criterion_5),
        ("isochron-seeded phase agreement", criterion_6),
        ("CLI determinism", criterion_7),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS {name} ({detail})", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {}: FAIL {name} ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
