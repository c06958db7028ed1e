//! Adaptive Dormand–Prince 5(4) integration with continuous output.
//!
//! States are flat `f64` slices so the same engine serves the planar flow,
//! the augmented quadrature systems, and the 2×2 variational equations.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Step-control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on a single step; `f64::INFINITY` for none.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, max_step: f64::INFINITY, max_steps: 5_000_000 }
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) || !self.rtol.is_finite() || !self.atol.is_finite() {
            return Err(Error::Argument(format!(
                "tolerances must be positive (rtol = {}, atol = {})",
                self.rtol, self.atol
            )));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::Argument("max_step must be positive".into()));
        }
        Ok(())
    }
}

/// Accepted steps of an integration together with the 4th-order
/// continuous extension of each step.
///
/// Per step `i` the coefficients `r0..r4` are stored so that for
/// `θ = (t − tᵢ)/hᵢ ∈ [0, 1]`
/// `y(t) = r0 + θ(r1 + (1 − θ)(r2 + θ(r3 + (1 − θ) r4)))`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    dense: Vec<f64>,
    tolerances: Tolerances,
}

impl Trajectory {
    pub const INTERPOLATION_ORDER: usize = 4;

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sample times: the start time followed by every accepted step end.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }

    /// Index of the step whose interval contains `t`, clamped to the ends.
    fn step_index(&self, t: f64) -> usize {
        let n = self.steps();
        let k = self.times.partition_point(|&s| s <= t);
        k.saturating_sub(1).min(n - 1)
    }

    /// Dense-output evaluation; `t` outside the span is extrapolated from the
    /// nearest step.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let d = self.dim;
        if self.steps() == 0 {
            out.copy_from_slice(self.state(0));
            return;
        }
        let i = self.step_index(t);
        let t0 = self.times[i];
        let h = self.times[i + 1] - t0;
        let th = (t - t0) / h;
        let th1 = 1.0 - th;
        let r = &self.dense[i * 5 * d..(i + 1) * 5 * d];
        for j in 0..d {
            out[j] = r[j] + th * (r[d + j] + th1 * (r[2 * d + j] + th * (r[3 * d + j] + th1 * r[4 * d + j])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// Single component of the dense output.
    pub fn eval_component(&self, t: f64, j: usize) -> f64 {
        let d = self.dim;
        if self.steps() == 0 {
            return self.state(0)[j];
        }
        let i = self.step_index(t);
        let t0 = self.times[i];
        let th = (t - t0) / (self.times[i + 1] - t0);
        let th1 = 1.0 - th;
        let r = &self.dense[i * 5 * d..(i + 1) * 5 * d];
        r[j] + th * (r[d + j] + th1 * (r[2 * d + j] + th * (r[3 * d + j] + th1 * r[4 * d + j])))
    }
}

struct Workspace {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    err: Vec<f64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; d]), ytmp: vec![0.0; d], ynew: vec![0.0; d], err: vec![0.0; d] }
    }
}

fn error_norm(y0: &[f64], y1: &[f64], err: &[f64], tol: &Tolerances) -> f64 {
    let d = y0.len();
    let sum: f64 = (0..d)
        .map(|i| {
            let sc = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
            let e = err[i] / sc;
            e * e
        })
        .sum();
    (sum / d as f64).sqrt()
}

fn initial_step<F>(rhs: &mut F, t0: f64, y0: &[f64], f0: &[f64], span: f64, tol: &Tolerances, ws: &mut Workspace) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let d = y0.len();
    let sc = |i: usize| tol.atol + tol.rtol * y0[i].abs();
    let d0 = ((0..d).map(|i| (y0[i] / sc(i)).powi(2)).sum::<f64>() / d as f64).sqrt();
    let d1 = ((0..d).map(|i| (f0[i] / sc(i)).powi(2)).sum::<f64>() / d as f64).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span).min(tol.max_step);
    for i in 0..d {
        ws.ytmp[i] = y0[i] + h0 * f0[i];
    }
    let (k1, rest) = ws.k.split_at_mut(1);
    rhs(t0 + h0, &ws.ytmp, &mut rest[0]);
    let d2 = ((0..d).map(|i| ((rest[0][i] - k1[0][i]) / sc(i)).powi(2)).sum::<f64>() / d as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(1.0 / 5.0) };
    (100.0 * h0).min(h1).min(span).min(tol.max_step)
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t1 > t0`.
///
/// `rhs(t, y, dy)` writes the derivative into `dy`.
pub fn integrate<F>(mut rhs: F, y0: &[f64], t0: f64, t1: f64, tol: Tolerances) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    tol.validate()?;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Argument(format!("integration span must satisfy t1 > t0 (t0 = {t0}, t1 = {t1})")));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite initial state".into()));
    }
    let d = y0.len();
    let mut ws = Workspace::new(d);
    let mut times = vec![t0];
    let mut states = y0.to_vec();
    let mut dense = Vec::new();

    let mut t = t0;
    let mut y = y0.to_vec();
    rhs(t, &y, &mut ws.k[0]);
    let mut h = initial_step(&mut rhs, t0, &y, &ws.k[0].clone(), t1 - t0, &tol, &mut ws);
    let mut err_old = 1e-4_f64;
    let mut rejected = false;
    let mut n_steps = 0usize;

    while t < t1 {
        if n_steps >= tol.max_steps {
            return Err(Error::IntegrationFailure { t, reason: format!("step budget of {} exhausted", tol.max_steps) });
        }
        let min_step = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < min_step {
            return Err(Error::IntegrationFailure { t, reason: format!("step size underflow (h = {h:e})") });
        }
        let last = t + h >= t1 || (t1 - (t + h)) < min_step;
        if last {
            h = t1 - t;
        }

        let Workspace { k, ytmp, ynew, err } = &mut ws;
        let [k1, k2, k3, k4, k5, k6, k7] = k;
        for i in 0..d {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, ytmp, k2);
        for i in 0..d {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, ytmp, k3);
        for i in 0..d {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, ytmp, k4);
        for i in 0..d {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, ytmp, k5);
        for i in 0..d {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t1 } else { t + h };
        rhs(t_new, ytmp, k6);
        for i in 0..d {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t_new, ynew, k7);
        for i in 0..d {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        n_steps += 1;

        let e = error_norm(&y, ynew, err, &tol);
        if !e.is_finite() {
            h *= FAC_MIN;
            rejected = true;
            continue;
        }
        if e <= 1.0 {
            let base = dense.len();
            dense.resize(base + 5 * d, 0.0);
            let r = &mut dense[base..];
            for i in 0..d {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                r[i] = y[i];
                r[d + i] = ydiff;
                r[2 * d + i] = bspl;
                r[3 * d + i] = ydiff - h * k7[i] - bspl;
                r[4 * d + i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            t = t_new;
            y.copy_from_slice(ynew);
            times.push(t);
            states.extend_from_slice(&y);
            k1.copy_from_slice(k7);

            let e = e.max(1e-10);
            let mut fac = SAFETY * e.powf(-0.2 + 0.75 * BETA) * err_old.powf(BETA);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if rejected {
                fac = fac.min(1.0);
            }
            err_old = e;
            rejected = false;
            h = (h * fac).min(tol.max_step);
        } else {
            let fac = (SAFETY * e.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            rejected = true;
        }
    }

    Ok(Trajectory { dim: d, times, states, dense, tolerances: tol })
}

/// Integrates the system together with the running integral of `integrand`.
///
/// The returned trajectory carries the running integral as its last
/// component, so the quadrature shares the step-size control of the state.
pub fn integrate_quadrature<F, G>(
    mut rhs: F,
    mut integrand: G,
    y0: &[f64],
    t0: f64,
    t1: f64,
    tol: Tolerances,
) -> Result<(Trajectory, f64)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: FnMut(f64, &[f64]) -> f64,
{
    let d = y0.len();
    let mut aug = y0.to_vec();
    aug.push(0.0);
    let traj = integrate(
        |t, z, dz| {
            rhs(t, &z[..d], &mut dz[..d]);
            dz[d] = integrand(t, &z[..d]);
        },
        &aug,
        t0,
        t1,
        tol,
    )?;
    let q = traj.final_state()[d];
    Ok((traj, q))
}
