//! Closed-form Floquet frame of a planar limit cycle.
//!
//! Along the cycle let `F(t) = f(x₀(t))`, `A(t) = Df(x₀(t))` and
//! `F⊥ = (F₂, −F₁)`. With
//!
//! ```text
//! b(t) = exp ∫₀ᵗ ∇·f(x₀(s)) ds
//! a(t) = ∫₀ᵗ Fᵀ(A + Aᵀ)F⊥ / ‖F‖⁴ · b(s) ds
//! ```
//!
//! the matrix `[F, aF + (b/‖F‖²)F⊥]` solves the variational equation, the
//! monodromy matrix in that frame is `[[1, a(T)], [0, b(T)]]`, and
//!
//! ```text
//! α(t) = a(T)/(b(T) − 1) + a(t),   β(t) = b(t)/‖F‖²,   μ₂ = ln b(T) / T
//! u₁ = F,                          u₂ = e^{−μ₂t}(αF + βF⊥)
//! v₁ = (−αF⊥ + βF) / b,            v₂ = e^{μ₂t} F⊥ / b
//! ```
//!
//! `v₁` is the perturbation projection vector: the periodic adjoint
//! solution normalized by `v₁ᵀF = 1`.

use std::sync::Arc;

use crate::csv;
use crate::cycle::LimitCycle;
use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::models::OscillatorModel;
use crate::ode::{integrate, Tolerances, Trajectory};

/// Gap `|b(T) − 1|` below which the cycle is treated as non-hyperbolic.
pub const DEGENERACY_GAP: f64 = 1e-12;
/// Normalization defect above which `v₁` is divided by the measured `v₁ᵀf`.
pub const RENORMALIZE_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisOptions {
    /// Number of uniform grid points over one period.
    pub grid: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self { grid: 1024, rtol: 1e-12, atol: 1e-14 }
    }
}

impl BasisOptions {
    fn tolerances(&self) -> Tolerances {
        Tolerances::new(self.rtol, self.atol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetSpectrum {
    pub multipliers: (f64, f64),
    pub exponents: (f64, f64),
    /// Monodromy matrix in the `[F, F⊥]` frame.
    pub monodromy: Mat2,
    pub period: f64,
}

impl FloquetSpectrum {
    pub fn mu2(&self) -> f64 {
        self.exponents.1
    }

    pub fn lambda2(&self) -> f64 {
        self.multipliers.1
    }

    pub fn is_stable(&self) -> bool {
        self.multipliers.1 < 1.0
    }
}

/// Integrand of `a(t)` without the `b` factor: `fᵀ(A + Aᵀ)f⊥ / ‖f‖⁴`.
#[inline]
fn shear_rate(model: &OscillatorModel, p: Vec2) -> f64 {
    let f = model.field(p);
    let fp = f.perp();
    let s = model.jacobian(p).symmetrized();
    let n2 = f.norm_sq();
    f.dot(s.mul_vec(fp)) / (n2 * n2)
}

/// Integrates `(x, y, ln b, a)` from the anchor over `[0, t_end]`.
fn diliberto_scalars(cycle: &LimitCycle, t_end: f64, tol: Tolerances) -> Result<Trajectory> {
    let model = cycle.model();
    let a0 = cycle.anchor();
    integrate(
        |_, z, dz| {
            let p = Vec2::new(z[0], z[1]);
            let f = model.field(p);
            dz[0] = f.x;
            dz[1] = f.y;
            dz[2] = model.divergence(p);
            dz[3] = shear_rate(model, p) * z[2].exp();
        },
        &[a0.x, a0.y, 0.0, 0.0],
        0.0,
        t_end,
        tol,
    )
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Argument(format!("time must be finite and non-negative, got {t}")));
    }
    Ok(())
}

/// `b(t) = exp ∫₀ᵗ ∇·f(x₀(s)) ds`.
pub fn compute_b(cycle: &LimitCycle, t: f64) -> Result<f64> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(1.0);
    }
    let tr = diliberto_scalars(cycle, t, BasisOptions::default().tolerances())?;
    Ok(tr.final_state()[2].exp())
}

/// `a(t) = ∫₀ᵗ fᵀ(A + Aᵀ)f⊥ / ‖f‖⁴ · b(s) ds`.
pub fn compute_a(cycle: &LimitCycle, t: f64) -> Result<f64> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let tr = diliberto_scalars(cycle, t, BasisOptions::default().tolerances())?;
    Ok(tr.final_state()[3])
}

fn spectrum_from(a_t: f64, ln_b_t: f64, period: f64) -> Result<FloquetSpectrum> {
    let b_t = ln_b_t.exp();
    if !(b_t > 0.0) || !b_t.is_finite() || !a_t.is_finite() {
        return Err(Error::Internal(format!("b(T) = {b_t}, a(T) = {a_t}: quadrature blew up")));
    }
    let mu2 = ln_b_t / period;
    if b_t >= 1.0 {
        log::warn!("second Floquet multiplier {b_t} is not below one; the cycle is not asymptotically stable");
    }
    Ok(FloquetSpectrum {
        multipliers: (1.0, b_t),
        exponents: (0.0, mu2),
        monodromy: Mat2::new(1.0, a_t, 0.0, b_t),
        period,
    })
}

pub fn floquet_spectrum(cycle: &LimitCycle) -> Result<FloquetSpectrum> {
    let tr = diliberto_scalars(cycle, cycle.period(), BasisOptions::default().tolerances())?;
    let z = tr.final_state();
    spectrum_from(z[3], z[2], cycle.period())
}

/// All closed-form quantities at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub x: Vec2,
    pub f: Vec2,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub u1: Vec2,
    pub u2: Vec2,
    pub v1: Vec2,
    pub v2: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Evaluable `a, b, α, β, u₁, u₂, v₁, v₂` along one limit cycle.
#[derive(Debug, Clone)]
pub struct DilibertoBasis {
    cycle: Arc<LimitCycle>,
    scalars: Trajectory,
    spectrum: FloquetSpectrum,
    alpha0: f64,
    grid: Vec<GridSample>,
    normalization_defect: f64,
    renormalize: bool,
    orthogonality_defect: f64,
}

impl DilibertoBasis {
    pub fn new(cycle: Arc<LimitCycle>) -> Result<Self> {
        Self::with_options(cycle, &BasisOptions::default())
    }

    pub fn with_options(cycle: Arc<LimitCycle>, opts: &BasisOptions) -> Result<Self> {
        if opts.grid < 16 {
            return Err(Error::Argument(format!("basis grid needs at least 16 points, got {}", opts.grid)));
        }
        let period = cycle.period();
        let scalars = diliberto_scalars(&cycle, period, opts.tolerances())?;
        let z = scalars.final_state();
        let spectrum = spectrum_from(z[3], z[2], period)?;
        let b_t = spectrum.lambda2();
        let gap = (b_t - 1.0).abs();
        if gap < DEGENERACY_GAP {
            return Err(Error::DegenerateCycle { gap });
        }
        let alpha0 = z[3] / (b_t - 1.0);

        let mut basis = Self {
            cycle,
            scalars,
            spectrum,
            alpha0,
            grid: Vec::new(),
            normalization_defect: 0.0,
            renormalize: false,
            orthogonality_defect: 0.0,
        };
        let n = opts.grid;
        basis.grid = (0..n)
            .map(|i| {
                let fr = basis.frame(period * i as f64 / n as f64);
                GridSample { t: fr.t, a: fr.a, b: fr.b, alpha: fr.alpha, beta: fr.beta }
            })
            .collect();
        basis.normalization_defect = basis
            .grid
            .iter()
            .map(|g| {
                let fr = basis.frame(g.t);
                (fr.v1.dot(fr.f) - 1.0).abs()
            })
            .fold(0.0, f64::max);
        if basis.normalization_defect > RENORMALIZE_THRESHOLD {
            log::warn!(
                "normalization defect {:e} exceeds {:e}; rescaling v1 pointwise",
                basis.normalization_defect,
                RENORMALIZE_THRESHOLD
            );
            basis.renormalize = true;
        }
        basis.orthogonality_defect = basis.grid.iter().map(|g| basis.orthogonality_at(g.t)).fold(0.0, f64::max);
        Ok(basis)
    }

    pub fn cycle(&self) -> &LimitCycle {
        &self.cycle
    }

    pub fn cycle_arc(&self) -> &Arc<LimitCycle> {
        &self.cycle
    }

    pub fn model(&self) -> &OscillatorModel {
        self.cycle.model()
    }

    pub fn period(&self) -> f64 {
        self.cycle.period()
    }

    pub fn spectrum(&self) -> &FloquetSpectrum {
        &self.spectrum
    }

    pub fn mu2(&self) -> f64 {
        self.spectrum.mu2()
    }

    /// Constant part of α, `a(T)/(b(T) − 1)`.
    pub fn alpha_offset(&self) -> f64 {
        self.alpha0
    }

    pub fn grid(&self) -> &[GridSample] {
        &self.grid
    }

    pub fn grid_times(&self) -> Vec<f64> {
        self.grid.iter().map(|g| g.t).collect()
    }

    /// Largest `|v₁ᵀf − 1|` on the grid, measured before any rescaling.
    pub fn normalization_defect(&self) -> f64 {
        self.normalization_defect
    }

    pub fn is_renormalized(&self) -> bool {
        self.renormalize
    }

    /// Normalized `max |fᵀ(A + Aᵀ)f⊥| / (‖f‖ ‖(A + Aᵀ)f⊥‖)` over the grid.
    pub fn orthogonality_defect(&self) -> f64 {
        self.orthogonality_defect
    }

    fn orthogonality_at(&self, t: f64) -> f64 {
        let p = self.cycle.point(t);
        let model = self.model();
        let f = model.field(p);
        let sfp = model.jacobian(p).symmetrized().mul_vec(f.perp());
        let denom = f.norm() * sfp.norm();
        if denom == 0.0 {
            0.0
        } else {
            f.dot(sfp).abs() / denom
        }
    }

    /// Largest normalized cross product between `[f, f⊥]` and `f⊥` on the grid.
    pub fn lie_bracket_defect(&self) -> f64 {
        self.grid
            .iter()
            .map(|g| {
                let p = self.cycle.point(g.t);
                let l = self.model().lie_bracket(p);
                let fp = self.model().field(p).perp();
                let denom = l.norm() * fp.norm();
                if denom == 0.0 {
                    0.0
                } else {
                    l.cross(fp).abs() / denom
                }
            })
            .fold(0.0, f64::max)
    }

    /// `(ln b, a)` at `tau ∈ [0, T]`.
    #[inline]
    fn log_b_and_a(&self, tau: f64) -> (f64, f64) {
        (self.scalars.eval_component(tau, 2), self.scalars.eval_component(tau, 3))
    }

    /// Closed forms at `tau ∈ [0, T]` without reducing modulo the period;
    /// `tau = T` uses the end-of-period quadrature values.
    pub fn frame_in_period(&self, tau: f64) -> Frame {
        let x = if tau == self.period() {
            Vec2::from_slice(self.cycle.trajectory().final_state())
        } else {
            self.cycle.point(tau)
        };
        let f = self.model().field(x);
        let fp = f.perp();
        let (ln_b, a) = self.log_b_and_a(tau);
        let b = ln_b.exp();
        let alpha = self.alpha0 + a;
        let beta = b / f.norm_sq();
        // e^{−μ₂τ} = e^{−ln b(T)·τ/T}
        let decay = (-self.mu2() * tau).exp();
        let u2 = (f.scale(alpha) + fp.scale(beta)).scale(decay);
        let mut v1 = (f.scale(beta) - fp.scale(alpha)).scale(1.0 / b);
        if self.renormalize {
            v1 = v1.scale(1.0 / v1.dot(f));
        }
        let v2 = fp.scale(1.0 / (decay * b));
        Frame { t: tau, x, f, a, b, alpha, beta, u1: f, u2, v1, v2 }
    }

    /// Closed forms at `t mod T`.
    pub fn frame(&self, t: f64) -> Frame {
        self.frame_in_period(self.cycle.reduce(t))
    }

    pub fn u1(&self, t: f64) -> Vec2 {
        self.cycle.velocity(t)
    }

    pub fn u2(&self, t: f64) -> Vec2 {
        self.frame(t).u2
    }

    /// Perturbation projection vector; the hot path of every phase simulation.
    #[inline]
    pub fn v1(&self, t: f64) -> Vec2 {
        let tau = self.cycle.reduce(t);
        let f = self.cycle.velocity(tau);
        let (ln_b, a) = self.log_b_and_a(tau);
        let inv_b = (-ln_b).exp();
        let beta_over_b = 1.0 / f.norm_sq();
        let v = f.scale(beta_over_b) - f.perp().scale((self.alpha0 + a) * inv_b);
        if self.renormalize {
            v.scale(1.0 / v.dot(f))
        } else {
            v
        }
    }

    pub fn v2(&self, t: f64) -> Vec2 {
        self.frame(t).v2
    }

    pub fn to_csv(&self) -> String {
        let header = ["t", "a", "b", "alpha", "beta", "u1x", "u1y", "u2x", "u2y", "v1x", "v1y", "v2x", "v2y"];
        csv::to_csv(
            &header,
            self.grid.iter().map(|g| {
                let fr = self.frame(g.t);
                csv::row(&[
                    fr.t, fr.a, fr.b, fr.alpha, fr.beta, fr.u1.x, fr.u1.y, fr.u2.x, fr.u2.y, fr.v1.x, fr.v1.y, fr.v2.x,
                    fr.v2.y,
                ])
            }),
        )
    }
}

pub fn eigenvector_u1(basis: &DilibertoBasis, t: f64) -> Vec2 {
    basis.u1(t)
}

pub fn eigenvector_u2(basis: &DilibertoBasis, t: f64) -> Vec2 {
    basis.u2(t)
}

pub fn covector_v1(basis: &DilibertoBasis, t: f64) -> Vec2 {
    basis.v1(t)
}

pub fn covector_v2(basis: &DilibertoBasis, t: f64) -> Vec2 {
    basis.v2(t)
}

pub fn orthogonality_defect(basis: &DilibertoBasis) -> f64 {
    basis.orthogonality_defect()
}

pub fn lie_bracket(model: &OscillatorModel, x: Vec2) -> Vec2 {
    model.lie_bracket(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::find_cycle;
    use std::f64::consts::{PI, TAU};
    use std::sync::OnceLock;

    fn sl_cycle() -> Arc<LimitCycle> {
        static C: OnceLock<Arc<LimitCycle>> = OnceLock::new();
        C.get_or_init(|| {
            Arc::new(find_cycle(&OscillatorModel::stuart_landau(1.0), Vec2::new(1.0, 0.0), 0.0, 1e-10).unwrap())
        })
        .clone()
    }

    fn vdp_basis() -> &'static DilibertoBasis {
        static B: OnceLock<DilibertoBasis> = OnceLock::new();
        B.get_or_init(|| {
            let c = find_cycle(&OscillatorModel::van_der_pol(1.0), Vec2::new(2.0, 0.0), 100.0, 1e-10).unwrap();
            DilibertoBasis::new(Arc::new(c)).unwrap()
        })
    }

    fn sl_basis() -> &'static DilibertoBasis {
        static B: OnceLock<DilibertoBasis> = OnceLock::new();
        B.get_or_init(|| DilibertoBasis::new(sl_cycle()).unwrap())
    }

    #[test]
    fn b_examples() {
        let c = sl_cycle();
        assert_eq!(compute_b(&c, 0.0).unwrap(), 1.0);
        let b = compute_b(&c, TAU).unwrap();
        assert!((b / (-4.0 * PI).exp() - 1.0).abs() < 1e-8);
        assert!(compute_b(&c, -1.0).is_err());
    }

    #[test]
    fn a_vanishes_on_stuart_landau() {
        let c = sl_cycle();
        assert_eq!(compute_a(&c, 0.0).unwrap(), 0.0);
        for &t in &[0.5, 2.0, TAU, 10.0] {
            assert!(compute_a(&c, t).unwrap().abs() < 1e-9);
        }
        for g in sl_basis().grid() {
            assert!(g.a.abs() < 1e-9);
        }
    }

    #[test]
    fn stuart_landau_spectrum() {
        let s = floquet_spectrum(&sl_cycle()).unwrap();
        assert!((s.mu2() + 2.0).abs() < 1e-8);
        assert_eq!(s.multipliers.0, 1.0);
        assert_eq!(s.exponents.0, 0.0);
        assert!(s.monodromy.m[0][1].abs() < 1e-9);
        assert!((s.monodromy.m[1][1] / (-4.0 * PI).exp() - 1.0).abs() < 1e-8);
        assert!((s.lambda2() - (s.mu2() * s.period).exp()).abs() < 1e-9);
        assert!(s.is_stable());
    }

    #[test]
    fn stuart_landau_closed_forms() {
        let b = sl_basis();
        let fr = b.frame(0.0);
        assert_eq!(fr.b, 1.0);
        assert_eq!(fr.a, 0.0);
        assert!((fr.u1 - Vec2::new(0.0, 1.0)).norm() < 1e-12);
        assert!((fr.u2 - Vec2::new(1.0, 0.0)).norm() < 1e-9);
        assert!((fr.v1 - Vec2::new(0.0, 1.0)).norm() < 1e-9);
        assert!((fr.v2 - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        assert!((b.u2(PI / 2.0) - Vec2::new(0.0, 1.0)).norm() < 1e-8);
        for k in 0..64 {
            let t = k as f64 * b.period() / 64.0;
            let v = b.v1(t);
            assert!((v - Vec2::new(-t.sin(), t.cos())).norm() < 1e-7);
        }
        assert!(b.orthogonality_defect() < 1e-9);
        assert!(b.lie_bracket_defect() < 1e-8);
    }

    #[test]
    fn van_der_pol_frame_invariants() {
        let b = vdp_basis();
        let s = b.spectrum();
        assert!(s.mu2() < 0.0);
        assert_eq!(s.multipliers.0, 1.0);
        assert!(b.orthogonality_defect() > 0.1, "{}", b.orthogonality_defect());
        assert!(b.lie_bracket_defect() > 1e-3);
        for g in b.grid() {
            let fr = b.frame(g.t);
            assert!(fr.b > 0.0);
            assert_eq!(fr.u1, b.model().field(b.cycle().point(g.t)));
            assert!((fr.v1.dot(fr.u1) - 1.0).abs() < 1e-9);
            assert!(fr.v1.dot(fr.u2).abs() < 1e-9);
            assert!(fr.v2.dot(fr.u1).abs() < 1e-9);
            assert!((fr.v2.dot(fr.u2) - 1.0).abs() < 1e-9);
        }
        assert!(!b.is_renormalized());
    }

    #[test]
    fn closed_forms_are_periodic() {
        for b in [sl_basis(), vdp_basis()] {
            let start = b.frame_in_period(0.0);
            let end = b.frame_in_period(b.period());
            let scale_u = start.u2.norm().max(1.0);
            let scale_v = start.v1.norm().max(1.0);
            assert!((end.u2 - start.u2).norm() < 1e-8 * scale_u, "{:?} {:?}", end.u2, start.u2);
            assert!((end.v1 - start.v1).norm() < 1e-8 * scale_v);
            // closure of the stored orbit is below 1e-10, so f differs by at most ‖A‖·1e-10
            assert!((end.u1 - start.u1).norm() < 1e-9);
            assert!((b.u1(b.period()) - b.u1(0.0)).norm() < 1e-10);
            for &t in &[0.0, b.period() / 3.0, b.period() / 2.0] {
                assert!((b.u2(t + b.period()) - b.u2(t)).norm() < 1e-8 * scale_u);
                assert!((b.v1(t + b.period()) - b.v1(t)).norm() < 1e-8 * scale_v);
            }
        }
    }

    #[test]
    fn scalar_quasi_periodicity() {
        // b(t + T) = b(t) b(T), a(t + T) = a(t) b(T) + a(T)
        let b = vdp_basis();
        let c = b.cycle();
        let period = c.period();
        let two = diliberto_scalars(c, 2.0 * period, BasisOptions::default().tolerances()).unwrap();
        let b_t = b.spectrum().lambda2();
        let a_t = b.spectrum().monodromy.m[0][1];
        for g in b.grid().iter().step_by(37) {
            let lb = two.eval_component(g.t + period, 2).exp();
            let la = two.eval_component(g.t + period, 3);
            assert!((lb - g.b * b_t).abs() < 1e-8, "{lb} vs {}", g.b * b_t);
            assert!((la - (g.a * b_t + a_t)).abs() < 1e-8, "{la} vs {}", g.a * b_t + a_t);
        }
        assert_eq!(b.grid()[0].b, 1.0);
        assert_eq!(b.grid()[0].a, 0.0);
    }

    #[test]
    fn closed_form_v1_solves_the_adjoint_equation() {
        let b = vdp_basis();
        let h = b.period() / 4096.0;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for g in b.grid().iter().step_by(4) {
            let t = g.t;
            let d = (b.v1(t - 2.0 * h) - b.v1(t + 2.0 * h) + (b.v1(t + h) - b.v1(t - h)).scale(8.0))
                .scale(1.0 / (12.0 * h));
            let at = b.model().jacobian(b.cycle().point(t)).transpose();
            let rhs = at.mul_vec(b.v1(t));
            worst = worst.max((d + rhs).norm());
            scale = scale.max(rhs.norm());
        }
        assert!(worst / scale < 1e-5, "{}", worst / scale);
    }

    #[test]
    fn degenerate_cycle_is_rejected() {
        // the closed forms divide by b(T) − 1
        assert!(matches!(spectrum_from(0.0, 0.0, 1.0).map(|s| s.lambda2()), Ok(l) if (l - 1.0).abs() < DEGENERACY_GAP));
        assert!(matches!(spectrum_from(0.0, f64::NAN, 1.0), Err(Error::Internal(_))));
    }

    #[test]
    fn csv_columns() {
        let s = sl_basis().to_csv();
        let first = s.lines().next().unwrap();
        assert_eq!(first, "t,a,b,alpha,beta,u1x,u1y,u2x,u2y,v1x,v1y,v2x,v2y");
        assert_eq!(s.lines().count(), 1 + 1024);
    }
}
