//! Numerical oracle for the closed-form frame.
//!
//! Everything here integrates the variational equation `Φ' = AΦ` or the
//! adjoint equation `y' = −Aᵀy` directly and never touches the `a(t)`,
//! `b(t)` quadratures, so agreement with [`crate::diliberto`] is a genuine
//! cross-check.

use std::fmt::Write as _;

use crate::cycle::LimitCycle;
use crate::diliberto::DilibertoBasis;
use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::ode::{integrate, Tolerances};

const ORACLE_RTOL: f64 = 1e-11;
const ORACLE_ATOL: f64 = 1e-13;
const PPV_PERIODIC_TOL: f64 = 1e-9;
const PPV_MAX_PERIODS: usize = 50;

fn oracle_tol() -> Tolerances {
    Tolerances::new(ORACLE_RTOL, ORACLE_ATOL)
}

/// `Φ(t, 0)` for the variational equation along the cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateTransition {
    pub t: f64,
    pub phi: Mat2,
}

pub fn state_transition(cycle: &LimitCycle, t: f64) -> Result<StateTransition> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Argument(format!("time must be finite and non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(StateTransition { t, phi: Mat2::IDENTITY });
    }
    let model = cycle.model();
    let a0 = cycle.anchor();
    // The orbit is integrated alongside Φ; the cycle is attracting so this is stable.
    let tr = integrate(
        |_, y, dy| {
            let p = Vec2::new(y[0], y[1]);
            let f = model.field(p);
            let a = model.jacobian(p).m;
            dy[0] = f.x;
            dy[1] = f.y;
            dy[2] = a[0][0] * y[2] + a[0][1] * y[4];
            dy[3] = a[0][0] * y[3] + a[0][1] * y[5];
            dy[4] = a[1][0] * y[2] + a[1][1] * y[4];
            dy[5] = a[1][0] * y[3] + a[1][1] * y[5];
        },
        &[a0.x, a0.y, 1.0, 0.0, 0.0, 1.0],
        0.0,
        t,
        oracle_tol(),
    )?;
    let y = tr.final_state();
    Ok(StateTransition { t, phi: Mat2::new(y[2], y[3], y[4], y[5]) })
}

pub fn numeric_monodromy(cycle: &LimitCycle) -> Result<Mat2> {
    Ok(state_transition(cycle, cycle.period())?.phi)
}

/// Multipliers of the numerical monodromy matrix, larger first.
pub fn numeric_multipliers(cycle: &LimitCycle) -> Result<(f64, f64)> {
    numeric_monodromy(cycle)?
        .real_eigenvalues()
        .ok_or_else(|| Error::OracleFailure("monodromy matrix has complex eigenvalues".into()))
}

/// Expresses `Φ` in the frame `C = [f₀ᵀ/‖f₀‖²; f₀⊥ᵀ]`, i.e. `CΦC⁻¹`.
pub fn diliberto_frame(phi: &Mat2, f0: Vec2) -> Mat2 {
    let n2 = f0.norm_sq();
    let fp = f0.perp();
    let c = Mat2::new(f0.x / n2, f0.y / n2, fp.x, fp.y);
    let c_inv = c.inverse().expect("frame matrix has determinant -1");
    c.mul_mat(phi).mul_mat(&c_inv)
}

/// Periodic solution of `y' = −Aᵀ(t) y` normalized by `yᵀf(x₀(t)) = 1`,
/// sampled at `n` uniform times over one period.
///
/// Integrated backward in time, where the non-periodic adjoint mode decays
/// by the second multiplier every period.
pub fn numeric_ppv(cycle: &LimitCycle, n: usize) -> Result<Vec<(f64, Vec2)>> {
    if n < 16 {
        return Err(Error::Argument(format!("numeric_ppv needs n >= 16, got {n}")));
    }
    let model = cycle.model();
    let period = cycle.period();
    // z(s) = y(T − s) obeys z' = Aᵀ(T − s) z
    let backward = |s: f64, z: &[f64], dz: &mut [f64]| {
        let a = model.jacobian(cycle.point(period - s)).m;
        dz[0] = a[0][0] * z[0] + a[1][0] * z[1];
        dz[1] = a[0][1] * z[0] + a[1][1] * z[1];
    };
    let f0 = cycle.velocity(0.0);
    let mut y_end = f0.scale(1.0 / f0.norm_sq());
    let mut history = Vec::new();
    for _ in 0..PPV_MAX_PERIODS {
        let tr = integrate(backward, &y_end.to_array(), 0.0, period, oracle_tol())?;
        let y_start = Vec2::from_slice(tr.final_state());
        let defect = (y_start - y_end).norm() / y_start.norm();
        history.push(defect);
        if defect < PPV_PERIODIC_TOL {
            let scale = 1.0 / y_start.dot(f0);
            let samples = (0..n)
                .map(|j| {
                    let t = period * j as f64 / n as f64;
                    let z = tr.eval(period - t);
                    (t, Vec2::new(z[0], z[1]).scale(scale))
                })
                .collect();
            log::debug!("adjoint periodicity defects per period: {history:?}");
            return Ok(samples);
        }
        y_end = y_start;
    }
    Err(Error::OracleFailure(format!(
        "adjoint did not become periodic within {PPV_MAX_PERIODS} periods (last defect {:e})",
        history.last().copied().unwrap_or(f64::NAN)
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportItem {
    pub metric: &'static str,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub tol: f64,
    pub items: Vec<ReportItem>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn get(&self, metric: &str) -> Option<&ReportItem> {
        self.items.iter().find(|i| i.metric == metric)
    }

    /// One `metric=value pass|fail` line per item.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            let _ = writeln!(out, "{}={:.6e} {}", item.metric, item.value, if item.pass { "pass" } else { "fail" });
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("basis verification (tolerance {:e})\n", self.tol);
        for item in &self.items {
            let _ = writeln!(
                out,
                "  {:<28} {:>14.6e}  {}",
                item.metric,
                item.value,
                if item.pass { "ok" } else { "FAILED" }
            );
        }
        let _ = writeln!(out, "  overall: {}", if self.all_pass() { "pass" } else { "fail" });
        out
    }
}

/// Samples used for the closed-form versus numeric comparisons.
pub const VERIFY_SAMPLES: usize = 256;

/// Largest `‖v₁' + Aᵀv₁‖` over the samples relative to `max ‖Aᵀv₁‖`, with
/// `v₁'` from a five-point central difference of step `h`.
pub fn adjoint_residual(basis: &DilibertoBasis, samples: usize, h: f64) -> f64 {
    let cycle = basis.cycle();
    let model = cycle.model();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for j in 0..samples {
        let t = cycle.period() * j as f64 / samples as f64;
        let v = |s: f64| basis.v1(s);
        let deriv = (v(t - 2.0 * h) - v(t + 2.0 * h) + (v(t + h) - v(t - h)).scale(8.0)).scale(1.0 / (12.0 * h));
        let rhs = model.jacobian(cycle.point(t)).transpose().mul_vec(v(t));
        worst = worst.max((deriv + rhs).norm());
        scale = scale.max(rhs.norm());
    }
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

/// Checks the closed-form basis against the oracle and its own identities.
pub fn verify_basis(cycle: &LimitCycle, basis: &DilibertoBasis, tol: f64) -> Result<VerificationReport> {
    if basis.cycle().fingerprint() != cycle.fingerprint() {
        return Err(Error::MismatchedProvenance);
    }
    let period = cycle.period();
    let mut items = Vec::new();
    let mut push = |metric: &'static str, value: f64| items.push(ReportItem { metric, value, pass: value < tol });

    let mut biorth: f64 = 0.0;
    let mut norm: f64 = 0.0;
    for g in basis.grid() {
        let fr = basis.frame(g.t);
        let f = cycle.velocity(g.t);
        biorth = biorth
            .max((fr.v1.dot(fr.u1) - 1.0).abs())
            .max(fr.v1.dot(fr.u2).abs())
            .max(fr.v2.dot(fr.u1).abs())
            .max((fr.v2.dot(fr.u2) - 1.0).abs());
        norm = norm.max((fr.v1.dot(f) - 1.0).abs());
    }
    push("biorthogonality", biorth);
    push("normalization", norm);

    let start = basis.frame_in_period(0.0);
    let end = basis.frame_in_period(period);
    let periodicity = ((end.u2 - start.u2).norm() / start.u2.norm().max(1.0))
        .max((end.v1 - start.v1).norm() / start.v1.norm().max(1.0));
    push("periodicity", periodicity);

    push("adjoint_residual", adjoint_residual(basis, VERIFY_SAMPLES, period / 4096.0));

    let phi = numeric_monodromy(cycle)?;
    let (_, lambda2) = phi
        .real_eigenvalues()
        .ok_or_else(|| Error::OracleFailure("monodromy matrix has complex eigenvalues".into()))?;
    if !(lambda2 > 0.0) {
        return Err(Error::OracleFailure(format!("second numeric multiplier {lambda2} is not positive")));
    }
    let mu2_numeric = lambda2.ln() / period;
    let mu2 = basis.mu2();
    push("floquet_exponent_mismatch", (mu2 - mu2_numeric).abs() / mu2.abs());
    let b_t = basis.spectrum().lambda2();
    push("liouville", (phi.det() - b_t).abs() / b_t);

    let numeric = numeric_ppv(cycle, VERIFY_SAMPLES)?;
    let max_num = numeric.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
    let max_diff = numeric.iter().map(|(t, v)| (basis.v1(*t) - *v).norm()).fold(0.0, f64::max);
    push("ppv_discrepancy", max_diff / max_num);

    Ok(VerificationReport { tol, items })
}
