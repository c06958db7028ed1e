//! Asymptotic phase readings and the isochron-tangency experiment.

use rayon::prelude::*;

use crate::csv;
use crate::cycle::LimitCycle;
use crate::diliberto::DilibertoBasis;
use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::models::OscillatorModel;
use crate::ode::{integrate, Tolerances};

/// Distance to the cycle above which a reading is rejected.
pub const CONVERGENCE_RESIDUAL: f64 = 1e-6;

const COARSE_SAMPLES: usize = 512;
const RESTARTS: usize = 3;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseReading {
    pub seed: Vec2,
    /// Asymptotic phase in `[0, T)`.
    pub phase: f64,
    /// Distance from the integrated endpoint to the cycle.
    pub residual: f64,
}

fn golden_section(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut g1, mut g2) = (g(x1), g(x2));
    for _ in 0..80 {
        if g1 <= g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - INV_PHI * (hi - lo);
            g1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + INV_PHI * (hi - lo);
            g2 = g(x2);
        }
        if hi - lo < 1e-14 * (1.0 + lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Cycle time `t*` minimizing `‖x₀(t*) − p‖`, and that distance.
///
/// Coarse scan, then golden-section refinement around the three best
/// samples, polished by Newton steps on `(x₀(t) − p)·f(x₀(t)) = 0`. Ties go
/// to the smallest `t*`.
pub fn nearest_cycle_time(cycle: &LimitCycle, p: Vec2) -> (f64, f64) {
    let period = cycle.period();
    let model = cycle.model();
    let dt = period / COARSE_SAMPLES as f64;
    let dist2 = |t: f64| (cycle.point(t) - p).norm_sq();
    let mut coarse: Vec<(f64, usize)> = (0..COARSE_SAMPLES).map(|i| (dist2(i as f64 * dt), i)).collect();
    coarse.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut best: Option<(f64, f64)> = None;
    for &(_, i) in coarse.iter().take(RESTARTS) {
        let center = i as f64 * dt;
        let mut t = golden_section(dist2, center - dt, center + dt);
        for _ in 0..4 {
            let x = cycle.point(t);
            let f = model.field(x);
            let d = x - p;
            let g = d.dot(f);
            let dg = f.norm_sq() + d.dot(model.jacobian(x).mul_vec(f));
            if dg <= 0.0 {
                break;
            }
            let step = g / dg;
            if step.abs() > dt {
                break;
            }
            t -= step;
        }
        let t = cycle.reduce(t);
        let d = dist2(t).sqrt();
        let better = match best {
            None => true,
            Some((bt, bd)) => d < bd || (d == bd && t < bt),
        };
        if better {
            best = Some((t, d));
        }
    }
    best.unwrap()
}

pub fn asymptotic_phase(model: &OscillatorModel, cycle: &LimitCycle, x0: Vec2, horizon: f64) -> Result<PhaseReading> {
    x0.ensure_finite()?;
    if model != cycle.model() {
        return Err(Error::MismatchedProvenance);
    }
    if !(horizon > 0.0) {
        return Err(Error::Argument(format!("horizon must be positive, got {horizon}")));
    }
    let tr = integrate(
        |_, y, dy| {
            let f = model.field(Vec2::new(y[0], y[1]));
            dy[0] = f.x;
            dy[1] = f.y;
        },
        &x0.to_array(),
        0.0,
        horizon,
        Tolerances::new(1e-12, 1e-14),
    )?;
    let end = Vec2::from_slice(tr.final_state());
    if !end.is_finite() {
        return Err(Error::NotConverged { residual: f64::INFINITY });
    }
    let (t_star, residual) = nearest_cycle_time(cycle, end);
    if !(residual <= CONVERGENCE_RESIDUAL) {
        return Err(Error::NotConverged { residual });
    }
    Ok(PhaseReading { seed: x0, phase: cycle.reduce(t_star - horizon), residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedReading {
    pub offset: f64,
    pub reading: PhaseReading,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsochronReport {
    pub t_star: f64,
    pub base_point: Vec2,
    /// Unit `u₂(t*)`.
    pub isochron_direction: Vec2,
    /// Unit `f⊥(t*)`.
    pub control_direction: Vec2,
    pub isochron: Vec<SeedReading>,
    /// Empty when the control direction coincides with the isochron direction.
    pub control: Vec<SeedReading>,
    pub isochron_spread: f64,
    pub control_spread: Option<f64>,
    /// `f⊥` is parallel to `u₂`, so there is no off-isochron control.
    pub degenerate: bool,
}

impl IsochronReport {
    /// `set,offset,phase,residual` rows; `set` is `isochron` or `control`.
    pub fn to_csv(&self) -> String {
        let rows =
            self.isochron.iter().map(|s| ("isochron", s)).chain(self.control.iter().map(|s| ("control", s))).map(
                |(set, s)| {
                    vec![
                        set.to_string(),
                        csv::fmt_f64(s.offset),
                        csv::fmt_f64(s.reading.phase),
                        csv::fmt_f64(s.reading.residual),
                    ]
                },
            );
        csv::to_csv(&["set", "offset", "phase", "residual"], rows)
    }
}

/// Spread of phases around `reference`, each wrapped into `(−T/2, T/2]`.
pub fn phase_spread(readings: &[SeedReading], reference: f64, period: f64) -> f64 {
    if readings.is_empty() {
        return 0.0;
    }
    let wrapped: Vec<f64> = readings
        .iter()
        .map(|s| {
            let d = (s.reading.phase - reference).rem_euclid(period);
            if d > 0.5 * period {
                d - period
            } else {
                d
            }
        })
        .collect();
    let max = wrapped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = wrapped.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Cosine above which `u₂` and `f⊥` count as the same direction.
const PARALLEL_COSINE: f64 = 1.0 - 1e-9;

pub fn isochron_experiment(
    model: &OscillatorModel,
    cycle: &LimitCycle,
    basis: &DilibertoBasis,
    t_star: f64,
    offsets: &[f64],
    horizon: f64,
) -> Result<IsochronReport> {
    if basis.cycle().fingerprint() != cycle.fingerprint() {
        return Err(Error::MismatchedProvenance);
    }
    if offsets.is_empty() {
        return Err(Error::Argument("no offsets given".into()));
    }
    let t_star = cycle.reduce(t_star);
    let base = cycle.point(t_star);
    let fr = basis.frame(t_star);
    let iso_dir = fr.u2.normalized();
    let ctl_dir = fr.f.perp().normalized();
    let degenerate = iso_dir.dot(ctl_dir).abs() > PARALLEL_COSINE;

    let run = |dir: Vec2| -> Result<Vec<SeedReading>> {
        offsets
            .par_iter()
            .map(|&offset| {
                let seed = base + dir.scale(offset);
                asymptotic_phase(model, cycle, seed, horizon).map(|reading| SeedReading { offset, reading })
            })
            .collect()
    };
    let isochron = run(iso_dir)?;
    let control = if degenerate { Vec::new() } else { run(ctl_dir)? };
    let period = cycle.period();
    let isochron_spread = phase_spread(&isochron, t_star, period);
    let control_spread = (!degenerate).then(|| phase_spread(&control, t_star, period));
    Ok(IsochronReport {
        t_star,
        base_point: base,
        isochron_direction: iso_dir,
        control_direction: ctl_dir,
        isochron,
        control,
        isochron_spread,
        control_spread,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::find_cycle;
    use std::sync::{Arc, OnceLock};

    fn sl() -> &'static (OscillatorModel, Arc<LimitCycle>, DilibertoBasis) {
        static S: OnceLock<(OscillatorModel, Arc<LimitCycle>, DilibertoBasis)> = OnceLock::new();
        S.get_or_init(|| {
            let m = OscillatorModel::stuart_landau(1.0);
            let c = Arc::new(find_cycle(&m, Vec2::new(1.0, 0.0), 0.0, 1e-10).unwrap());
            let b = DilibertoBasis::new(c.clone()).unwrap();
            (m, c, b)
        })
    }

    fn vdp() -> &'static (OscillatorModel, Arc<LimitCycle>, DilibertoBasis) {
        static S: OnceLock<(OscillatorModel, Arc<LimitCycle>, DilibertoBasis)> = OnceLock::new();
        S.get_or_init(|| {
            let m = OscillatorModel::van_der_pol(1.0);
            let c = Arc::new(find_cycle(&m, Vec2::new(2.0, 0.0), 100.0, 1e-10).unwrap());
            let b = DilibertoBasis::new(c.clone()).unwrap();
            (m, c, b)
        })
    }

    #[test]
    fn projection_recovers_cycle_time() {
        let (_, c, _) = vdp();
        for k in 0..17 {
            let s = c.period() * k as f64 / 17.0 + 0.013;
            let (t, d) = nearest_cycle_time(c, c.point(s));
            assert!(d < 1e-12);
            assert!((t - c.reduce(s)).abs() < 1e-9, "{t} vs {s}");
        }
    }

    #[test]
    fn on_cycle_seed_keeps_its_phase() {
        let (m, c, _) = vdp();
        for &s in &[0.0, 1.1, 3.3, 6.0] {
            let r = asymptotic_phase(m, c, c.point(s), 30.0).unwrap();
            let d = (r.phase - s).rem_euclid(c.period());
            let d = d.min(c.period() - d);
            assert!(d < 1e-6, "{s}: {}", r.phase);
        }
    }

    #[test]
    fn stuart_landau_isochrons_are_radial() {
        let (m, c, _) = sl();
        let r = asymptotic_phase(m, c, Vec2::new(2.0, 0.0), 20.0).unwrap();
        let d = r.phase.min(c.period() - r.phase);
        assert!(d < 1e-6, "{}", r.phase);
        assert!(matches!(asymptotic_phase(m, c, Vec2::ZERO, 20.0), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn horizon_doubling_does_not_move_the_phase() {
        let (m, c, b) = vdp();
        let seed = c.point(1.0) + b.u2(1.0).normalized().scale(0.1);
        let p1 = asymptotic_phase(m, c, seed, 30.0).unwrap().phase;
        let p2 = asymptotic_phase(m, c, seed, 60.0).unwrap().phase;
        assert!((p1 - p2).abs() < 1e-6);
    }

    #[test]
    fn stuart_landau_experiment_is_degenerate() {
        let (m, c, b) = sl();
        let r = isochron_experiment(m, c, b, 0.0, &[0.02, -0.02, 0.05], 20.0).unwrap();
        assert!(r.degenerate);
        assert!(r.control_spread.is_none());
        assert!(r.control.is_empty());
        assert!(r.isochron_spread < 1e-6);
    }

    #[test]
    fn zero_offset_has_no_spread() {
        let (m, c, b) = vdp();
        let r = isochron_experiment(m, c, b, 0.0, &[0.0], 30.0).unwrap();
        assert_eq!(r.isochron_spread, 0.0);
        assert_eq!(r.control_spread, Some(0.0));
        assert!(r.to_csv().starts_with("set,offset,phase,residual\nisochron,"));
    }

    #[test]
    fn mismatched_basis_is_rejected() {
        let (m, c, _) = vdp();
        let (_, _, b_sl) = sl();
        assert!(matches!(isochron_experiment(m, c, b_sl, 0.0, &[0.01], 30.0), Err(Error::MismatchedProvenance)));
    }
}
