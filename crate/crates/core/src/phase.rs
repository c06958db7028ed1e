//! Deterministic phase-deviation model.
//!
//! `ψ' = ε v₁(t+ψ)ᵀ g(x₀(t+ψ), t)` with `ψ` in time units, so the
//! perturbed oscillator sits at `x₀(t + ψ(t))` to first order.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::csv::{fmt_f64, row, to_csv};
use crate::diliberto::DilibertoBasis;
use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::ode::{integrate, integrate_quadrature, Tolerances};
use crate::stochastic::NoiseModel;

/// Fraction of the run used to fit the final slope.
pub const LOCK_WINDOW: f64 = 0.2;
/// Largest allowed gap between the fitted slope and the locked slope.
pub const LOCK_SLOPE_TOL: f64 = 1e-4;
const FIT_SAMPLES: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    Zero,
    /// `g(x, t) = f(x)`.
    AlongFlow,
    /// `g(x, t) = amp · cos(omega·t + phase)`.
    Sinusoid {
        amp: Vec2,
        omega: f64,
        phase: f64,
    },
}

impl Waveform {
    #[inline]
    pub fn eval(&self, basis: &DilibertoBasis, x: Vec2, t: f64) -> Vec2 {
        match *self {
            Waveform::Zero => Vec2::new(0.0, 0.0),
            Waveform::AlongFlow => basis.model().field(x),
            Waveform::Sinusoid { amp, omega, phase } => amp.scale((omega * t + phase).cos()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Deterministic { waveform: Waveform, eps: f64 },
    Noise(NoiseModel),
}

impl Perturbation {
    pub fn deterministic(waveform: Waveform, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::Argument(format!("eps must be finite and non-negative, got {eps}")));
        }
        if let Waveform::Sinusoid { amp, omega, phase } = waveform {
            if !amp.is_finite() || !omega.is_finite() || !phase.is_finite() {
                return Err(Error::Argument("sinusoid parameters must be finite".into()));
            }
        }
        Ok(Perturbation::Deterministic { waveform, eps })
    }

    /// Injection `amp·cos(omega·t)`.
    pub fn injection(amp: Vec2, omega: f64, eps: f64) -> Result<Self> {
        Self::deterministic(Waveform::Sinusoid { amp, omega, phase: 0.0 }, eps)
    }

    fn parts(&self) -> Result<(Waveform, f64)> {
        match *self {
            Perturbation::Deterministic { waveform, eps } => Ok((waveform, eps)),
            Perturbation::Noise(_) => {
                Err(Error::WrongPerturbation("noise perturbations are handled by the stochastic phase model".into()))
            }
        }
    }
}

#[inline]
fn rhs_unchecked(basis: &DilibertoBasis, waveform: &Waveform, eps: f64, psi: f64, t: f64) -> f64 {
    if eps == 0.0 {
        return 0.0;
    }
    let s = t + psi;
    let x = basis.cycle().point(s);
    eps * basis.v1(s).dot(waveform.eval(basis, x, t))
}

pub fn phase_rhs(basis: &DilibertoBasis, pert: &Perturbation, psi: f64, t: f64) -> Result<f64> {
    let (waveform, eps) = pert.parts()?;
    Ok(rhs_unchecked(basis, &waveform, eps, psi, t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePath {
    pub times: Vec<f64>,
    pub psi: Vec<f64>,
    /// Least-squares slope of `ψ` over the final window.
    pub final_slope: f64,
    /// Slope of `ψ` when the oscillator runs at the forcing frequency:
    /// `(ω_inj − ω)/ω` for a sinusoid, zero otherwise.
    pub locked_slope: f64,
    pub locked: bool,
}

impl PhasePath {
    pub fn final_psi(&self) -> f64 {
        *self.psi.last().expect("path holds at least the initial sample")
    }

    /// Mean angular-frequency shift `ω·ψ'` over the final window.
    pub fn mean_freq_shift(&self, omega: f64) -> f64 {
        omega * self.final_slope
    }
}

fn fit_slope(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        num += (t - tm) * (y - ym);
        den += (t - tm) * (t - tm);
    }
    num / den
}

pub fn simulate_phase(basis: &DilibertoBasis, pert: &Perturbation, t_end: f64, rtol: f64) -> Result<PhasePath> {
    let (waveform, eps) = pert.parts()?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::Argument(format!("t_end must be positive, got {t_end}")));
    }
    let omega = basis.cycle().angular_frequency();
    let locked_slope = match waveform {
        Waveform::Sinusoid { omega: w_inj, .. } => (w_inj - omega) / omega,
        _ => 0.0,
    };
    let (times, psi, final_slope) = if eps == 0.0 {
        (vec![0.0, t_end], vec![0.0, 0.0], 0.0)
    } else {
        let tol = Tolerances::new(rtol, rtol * 1e-2).with_max_step(basis.period() / 8.0);
        let tr = integrate(|t, y, dy| dy[0] = rhs_unchecked(basis, &waveform, eps, y[0], t), &[0.0], 0.0, t_end, tol)?;
        let t0 = t_end * (1.0 - LOCK_WINDOW);
        let ts: Vec<f64> = (0..=FIT_SAMPLES).map(|j| t0 + (t_end - t0) * j as f64 / FIT_SAMPLES as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| tr.eval_component(t, 0)).collect();
        let slope = fit_slope(&ts, &ys);
        let psi = (0..tr.len()).map(|i| tr.state(i)[0]).collect();
        (tr.times().to_vec(), psi, slope)
    };
    if psi.iter().any(|p| !p.is_finite()) {
        return Err(Error::IntegrationFailure { t: t_end, reason: "phase became non-finite".into() });
    }
    Ok(PhasePath { times, psi, final_slope, locked_slope, locked: (final_slope - locked_slope).abs() < LOCK_SLOPE_TOL })
}

/// Fourier coefficients `V_k = (1/T)∫₀ᵀ v₁(t) e^{−ikωt} dt` for `|k| ≤ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PPVSpectrum {
    pub omega: f64,
    pub harmonics: usize,
    /// Entries for `k = −K..=K`, each `(V_kˣ, V_kʸ)`.
    pub coeffs: Vec<(Complex64, Complex64)>,
}

impl PPVSpectrum {
    pub fn coeff(&self, k: i64) -> (Complex64, Complex64) {
        let kk = self.harmonics as i64;
        assert!(k.abs() <= kk, "harmonic {k} outside ±{kk}");
        self.coeffs[(k + kk) as usize]
    }

    pub fn coeff_norm(&self, k: i64) -> f64 {
        let (x, y) = self.coeff(k);
        (x.norm_sqr() + y.norm_sqr()).sqrt()
    }

    /// `Σ_k ‖V_k‖²`.
    pub fn power(&self) -> f64 {
        self.coeffs.iter().map(|(x, y)| x.norm_sqr() + y.norm_sqr()).sum()
    }

    /// Partial sum with harmonics `|k| ≤ k_max`.
    pub fn reconstruct(&self, t: f64, k_max: usize) -> Vec2 {
        let k_max = k_max.min(self.harmonics) as i64;
        let (mut x, mut y) = (0.0, 0.0);
        for k in -k_max..=k_max {
            let (cx, cy) = self.coeff(k);
            let e = Complex64::from_polar(1.0, k as f64 * self.omega * t);
            x += (cx * e).re;
            y += (cy * e).re;
        }
        Vec2::new(x, y)
    }

    /// `V₁ · amp`, the first-harmonic coupling to an injection along `amp`.
    pub fn first_harmonic_coupling(&self, amp: Vec2) -> Complex64 {
        let (x, y) = self.coeff(1);
        x * amp.x + y * amp.y
    }

    pub fn to_csv(&self) -> String {
        let k = self.harmonics as i64;
        let rows = (-k..=k).map(|i| {
            let (x, y) = self.coeff(i);
            let mut r = vec![i.to_string()];
            r.extend(row(&[x.re, x.im, y.re, y.im]));
            r
        });
        to_csv(&["k", "Re_Vkx", "Im_Vkx", "Re_Vky", "Im_Vky"], rows)
    }
}

pub fn ppv_fourier(basis: &DilibertoBasis, harmonics: usize) -> Result<PPVSpectrum> {
    let n = basis.grid().len();
    if harmonics == 0 || harmonics + 1 > n / 2 {
        return Err(Error::Argument(format!(
            "harmonic count must lie in 1..={} for a grid of {n}, got {harmonics}",
            n / 2 - 1
        )));
    }
    let mut xs: Vec<Complex64> = Vec::with_capacity(n);
    let mut ys: Vec<Complex64> = Vec::with_capacity(n);
    for g in basis.grid() {
        let v = basis.v1(g.t);
        xs.push(Complex64::new(v.x, 0.0));
        ys.push(Complex64::new(v.y, 0.0));
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    fft.process(&mut xs);
    fft.process(&mut ys);
    let scale = 1.0 / n as f64;
    let k = harmonics as i64;
    let coeffs = (-k..=k)
        .map(|i| {
            let j = i.rem_euclid(n as i64) as usize;
            (xs[j] * scale, ys[j] * scale)
        })
        .collect();
    Ok(PPVSpectrum { omega: basis.cycle().angular_frequency(), harmonics, coeffs })
}

/// `(1/T)∫₀ᵀ ‖v₁‖² dt` by adaptive quadrature.
pub fn ppv_mean_square(basis: &DilibertoBasis) -> Result<f64> {
    let period = basis.period();
    let (_, q) = integrate_quadrature(
        |_, _, dy| dy[0] = 0.0,
        |t, _| basis.v1(t).norm_sq(),
        &[0.0],
        0.0,
        period,
        Tolerances::new(1e-12, 1e-14).with_max_step(period / 64.0),
    )?;
    Ok(q / period)
}

/// Largest deviation between `v₁` and its `K`-term series on the basis grid.
pub fn reconstruction_error(basis: &DilibertoBasis, spectrum: &PPVSpectrum, k_max: usize) -> f64 {
    basis.grid().iter().map(|g| (spectrum.reconstruct(g.t, k_max) - basis.v1(g.t)).norm()).fold(0.0, f64::max)
}

/// First-harmonic lock half-width `εω|V₁·amp|` in angular frequency.
pub fn adler_half_width(spectrum: &PPVSpectrum, amp: Vec2, eps: f64) -> f64 {
    eps * spectrum.omega * spectrum.first_harmonic_coupling(amp).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockPoint {
    pub eps: f64,
    /// `ω_inj − ω`.
    pub delta_omega: f64,
    pub locked: bool,
    pub mean_freq_shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockMap {
    pub omega: f64,
    pub amp: Vec2,
    pub eps_list: Vec<f64>,
    pub detunings: Vec<f64>,
    /// Row-major over `(eps, detuning)`.
    pub points: Vec<LockPoint>,
}

impl LockMap {
    pub fn point(&self, i_eps: usize, i_det: usize) -> &LockPoint {
        &self.points[i_eps * self.detunings.len() + i_det]
    }

    /// Lock half-width for one `ε`: on each side of zero detuning, the
    /// midpoint between the last locked and first unlocked grid value,
    /// averaged over the sides that have a transition.
    pub fn boundary(&self, i_eps: usize) -> Option<f64> {
        let row: Vec<&LockPoint> = (0..self.detunings.len()).map(|j| self.point(i_eps, j)).collect();
        let side = |sign: f64| -> Option<f64> {
            let mut pts: Vec<(f64, bool)> =
                row.iter().filter(|p| p.delta_omega * sign >= 0.0).map(|p| (p.delta_omega.abs(), p.locked)).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let first_unlocked = pts.iter().position(|p| !p.1)?;
            if first_unlocked == 0 {
                return None;
            }
            Some(0.5 * (pts[first_unlocked - 1].0 + pts[first_unlocked].0))
        };
        match (side(1.0), side(-1.0)) {
            (Some(a), Some(b)) => Some(0.5 * (a + b)),
            (a, b) => a.or(b),
        }
    }

    pub fn boundaries(&self) -> Vec<Option<f64>> {
        (0..self.eps_list.len()).map(|i| self.boundary(i)).collect()
    }

    pub fn to_csv(&self) -> String {
        let rows = self
            .points
            .iter()
            .map(|p| vec![fmt_f64(p.eps), fmt_f64(p.delta_omega), p.locked.to_string(), fmt_f64(p.mean_freq_shift)]);
        to_csv(&["eps", "delta_omega", "locked", "mean_freq_shift"], rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockScanOptions {
    pub t_end: f64,
    pub rtol: f64,
}

impl Default for LockScanOptions {
    fn default() -> Self {
        Self { t_end: 4000.0, rtol: 1e-8 }
    }
}

/// Runs `simulate_phase` under `amp·cos(ω_inj t)` for every `(ε, Δω)` pair.
pub fn injection_lock_scan(
    basis: &DilibertoBasis,
    amp: Vec2,
    eps_list: &[f64],
    detunings: &[f64],
    opts: &LockScanOptions,
) -> Result<LockMap> {
    if eps_list.is_empty() || detunings.is_empty() {
        return Err(Error::Argument("lock scan needs at least one eps and one detuning".into()));
    }
    let omega = basis.cycle().angular_frequency();
    let jobs: Vec<(f64, f64)> = eps_list.iter().flat_map(|&e| detunings.iter().map(move |&d| (e, d))).collect();
    let points = jobs
        .par_iter()
        .map(|&(eps, delta_omega)| {
            let pert = Perturbation::injection(amp, omega + delta_omega, eps)?;
            let path = simulate_phase(basis, &pert, opts.t_end, opts.rtol)?;
            Ok(LockPoint { eps, delta_omega, locked: path.locked, mean_freq_shift: path.mean_freq_shift(omega) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LockMap { omega, amp, eps_list: eps_list.to_vec(), detunings: detunings.to_vec(), points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::{find_cycle, LimitCycle};
    use crate::models::OscillatorModel;
    use std::sync::{Arc, OnceLock};

    fn sl() -> &'static DilibertoBasis {
        static S: OnceLock<DilibertoBasis> = OnceLock::new();
        S.get_or_init(|| {
            let c: Arc<LimitCycle> =
                Arc::new(find_cycle(&OscillatorModel::stuart_landau(1.0), Vec2::new(1.0, 0.0), 0.0, 1e-10).unwrap());
            DilibertoBasis::new(c).unwrap()
        })
    }

    fn vdp() -> &'static DilibertoBasis {
        static S: OnceLock<DilibertoBasis> = OnceLock::new();
        S.get_or_init(|| {
            let c =
                Arc::new(find_cycle(&OscillatorModel::van_der_pol(1.0), Vec2::new(2.0, 0.0), 100.0, 1e-10).unwrap());
            DilibertoBasis::new(c).unwrap()
        })
    }

    #[test]
    fn rhs_examples() {
        let b = vdp();
        let zero = Perturbation::deterministic(Waveform::Zero, 0.3).unwrap();
        let flow = Perturbation::deterministic(Waveform::AlongFlow, 0.01).unwrap();
        for k in 0..20 {
            let (psi, t) = (0.37 * k as f64, 1.3 * k as f64);
            assert_eq!(phase_rhs(b, &zero, psi, t).unwrap(), 0.0);
            assert!((phase_rhs(b, &flow, psi, t).unwrap() - 0.01).abs() < 1e-11);
        }
        let inj = Perturbation::injection(Vec2::new(1.0, 0.0), 1.0, 0.01).unwrap();
        assert!(phase_rhs(sl(), &inj, 0.0, 0.0).unwrap().abs() < 1e-12);
        // v₁(π/2) = (−1, 0)
        let r = phase_rhs(sl(), &inj, std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        assert!((r + 0.01).abs() < 1e-10);
    }

    #[test]
    fn noise_is_rejected() {
        let p = Perturbation::Noise(NoiseModel::isotropic(0.1).unwrap());
        assert!(matches!(phase_rhs(sl(), &p, 0.0, 0.0), Err(Error::WrongPerturbation(_))));
        assert!(matches!(simulate_phase(sl(), &p, 1.0, 1e-8), Err(Error::WrongPerturbation(_))));
        assert!(Perturbation::deterministic(Waveform::Zero, -1.0).is_err());
    }

    #[test]
    fn flow_perturbation_is_a_constant_frequency_shift() {
        let b = vdp();
        let p =
            simulate_phase(b, &Perturbation::deterministic(Waveform::AlongFlow, 0.01).unwrap(), 100.0, 1e-10).unwrap();
        assert!((p.final_psi() - 1.0).abs() < 1e-6);
        let p2 =
            simulate_phase(b, &Perturbation::deterministic(Waveform::AlongFlow, 0.02).unwrap(), 100.0, 1e-10).unwrap();
        assert!((p2.final_slope - 2.0 * p.final_slope).abs() < 1e-9);
        let z = simulate_phase(b, &Perturbation::deterministic(Waveform::Zero, 0.0).unwrap(), 50.0, 1e-8).unwrap();
        assert!(z.psi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stuart_landau_spectrum() {
        let s = ppv_fourier(sl(), 8).unwrap();
        let (x, y) = s.coeff(1);
        assert!((x - Complex64::new(0.0, 0.5)).norm() < 1e-9);
        assert!((y - Complex64::new(0.5, 0.0)).norm() < 1e-9);
        for k in -8..=8i64 {
            if k.abs() != 1 {
                assert!(s.coeff_norm(k) < 1e-9, "k = {k}");
            }
            let (a, b) = s.coeff(k);
            let (c, d) = s.coeff(-k);
            assert!((a - c.conj()).norm() < 1e-12 && (b - d.conj()).norm() < 1e-12);
        }
        assert!((adler_half_width(&s, Vec2::new(1.0, 0.0), 0.01) - 0.005).abs() < 1e-10);
    }

    #[test]
    fn parseval_and_monotone_reconstruction_on_van_der_pol() {
        let b = vdp();
        let s = ppv_fourier(b, 100).unwrap();
        let ms = ppv_mean_square(b).unwrap();
        assert!((s.power() - ms).abs() / ms < 1e-6, "{} vs {ms}", s.power());
        let errs: Vec<f64> = [1, 2, 4, 8, 16].iter().map(|&k| reconstruction_error(b, &s, k)).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
        assert!(errs[4] < 1e-3 * errs[0]);
    }

    #[test]
    fn harmonic_count_is_bounded_by_the_grid() {
        let n = sl().grid().len();
        assert!(ppv_fourier(sl(), n / 2 - 1).is_ok());
        assert!(matches!(ppv_fourier(sl(), n / 2), Err(Error::Argument(_))));
        assert!(matches!(ppv_fourier(sl(), 0), Err(Error::Argument(_))));
    }

    #[test]
    fn inside_and_far_outside_the_tongue() {
        let b = sl();
        let amp = Vec2::new(1.0, 0.0);
        let locked = simulate_phase(b, &Perturbation::injection(amp, 1.003, 0.01).unwrap(), 3000.0, 1e-9).unwrap();
        assert!(locked.locked);
        assert!((locked.final_slope - 0.003).abs() < 1e-4);
        let map =
            injection_lock_scan(b, amp, &[0.01], &[0.0, 0.05], &LockScanOptions { t_end: 2000.0, rtol: 1e-9 }).unwrap();
        assert!(map.point(0, 0).locked);
        let far = map.point(0, 1);
        assert!(!far.locked);
        // the beat Δω − shift stays close to the bare detuning
        let beat = far.delta_omega - far.mean_freq_shift;
        assert!((beat - 0.05).abs() < 0.1 * 0.05, "beat {beat}");
        assert!(map.to_csv().starts_with("eps,delta_omega,locked,mean_freq_shift\n"));
    }

    #[test]
    fn boundary_from_synthetic_rows() {
        let mk = |d: f64, l: bool| LockPoint { eps: 0.1, delta_omega: d, locked: l, mean_freq_shift: 0.0 };
        let map = LockMap {
            omega: 1.0,
            amp: Vec2::new(1.0, 0.0),
            eps_list: vec![0.1],
            detunings: vec![-0.2, -0.1, 0.0, 0.1, 0.2],
            points: vec![mk(-0.2, false), mk(-0.1, true), mk(0.0, true), mk(0.1, true), mk(0.2, false)],
        };
        assert!((map.boundary(0).unwrap() - 0.15).abs() < 1e-15);
    }
}
