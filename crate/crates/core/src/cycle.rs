//! Stable limit cycles located by Poincaré shooting.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::csv;
use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::models::OscillatorModel;
use crate::ode::{integrate, Tolerances, Trajectory};

/// Hyperplane through `point` with normal `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub point: Vec2,
    pub normal: Vec2,
}

impl Section {
    pub fn signed_distance(&self, x: Vec2) -> f64 {
        self.normal.dot(x - self.point)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOptions {
    /// Relaxation time before the section is erected.
    pub settle_time: f64,
    /// Required closure `‖x₀(T) − x₀(0)‖`.
    pub tol: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_newton: usize,
    /// Give up on the first return after this much time.
    pub max_return_time: f64,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self { settle_time: 100.0, tol: 1e-10, rtol: 1e-12, atol: 1e-13, max_newton: 50, max_return_time: 1e4 }
    }
}

const FIXED_POINT_FIELD: f64 = 1e-8;

/// The periodic orbit `x₀(t) = x₀(t + T)`, with `t = 0` at the anchor.
#[derive(Debug, Clone)]
pub struct LimitCycle {
    model: OscillatorModel,
    period: f64,
    anchor: Vec2,
    section: Section,
    trajectory: Trajectory,
    residuals: Vec<f64>,
    closure: f64,
    fingerprint: u64,
}

impl LimitCycle {
    pub fn model(&self) -> &OscillatorModel {
        &self.model
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn angular_frequency(&self) -> f64 {
        std::f64::consts::TAU / self.period
    }

    pub fn anchor(&self) -> Vec2 {
        self.anchor
    }

    pub fn section(&self) -> Section {
        self.section
    }

    /// Dense trajectory over `[0, T]`.
    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    /// Shooting residual after each Newton evaluation, last entry is final.
    pub fn residual_history(&self) -> &[f64] {
        &self.residuals
    }

    pub fn closure_error(&self) -> f64 {
        self.closure
    }

    /// Identifies this particular computed cycle (model, parameters, anchor, period).
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Reduces `t` into `[0, T)`.
    #[inline]
    pub fn reduce(&self, t: f64) -> f64 {
        let r = t.rem_euclid(self.period);
        if r >= self.period {
            0.0
        } else {
            r
        }
    }

    /// `x₀(t mod T)`.
    #[inline]
    pub fn point(&self, t: f64) -> Vec2 {
        let mut out = [0.0; 2];
        self.trajectory.eval_into(self.reduce(t), &mut out);
        Vec2::new(out[0], out[1])
    }

    /// `f(x₀(t))`.
    #[inline]
    pub fn velocity(&self, t: f64) -> Vec2 {
        self.model.field(self.point(t))
    }

    /// `n` uniformly spaced samples over `[0, T)`.
    pub fn sample(&self, n: usize) -> Result<Vec<(f64, Vec2)>> {
        if n < 2 {
            return Err(Error::Argument(format!("need at least 2 samples, got {n}")));
        }
        Ok((0..n)
            .map(|i| {
                let t = self.period * i as f64 / n as f64;
                (t, self.point(t))
            })
            .collect())
    }

    /// `t,x,y` CSV of [`Self::sample`].
    pub fn samples_csv(samples: &[(f64, Vec2)]) -> String {
        csv::to_csv(&["t", "x", "y"], samples.iter().map(|(t, p)| csv::row(&[*t, p.x, p.y])))
    }
}

pub fn cycle_point(cycle: &LimitCycle, t: f64) -> Vec2 {
    cycle.point(t)
}

pub fn sample_cycle(cycle: &LimitCycle, n: usize) -> Result<Vec<(f64, Vec2)>> {
    cycle.sample(n)
}

pub fn find_cycle(model: &OscillatorModel, guess: Vec2, settle_time: f64, tol: f64) -> Result<LimitCycle> {
    let opts = CycleOptions { settle_time, tol, ..CycleOptions::default() };
    find_cycle_with(model, guess, &opts)
}

fn flow_tol(opts: &CycleOptions) -> Tolerances {
    Tolerances::new(opts.rtol, opts.atol)
}

fn flow(model: &OscillatorModel, x0: Vec2, duration: f64, tol: Tolerances) -> Result<Trajectory> {
    integrate(
        |_, y, dy| {
            let f = model.field(Vec2::new(y[0], y[1]));
            dy[0] = f.x;
            dy[1] = f.y;
        },
        &x0.to_array(),
        0.0,
        duration,
        tol,
    )
}

/// Flow together with the variational equation `Φ' = A Φ`, `Φ(0) = I`.
fn flow_with_sensitivity(
    model: &OscillatorModel,
    x0: Vec2,
    duration: f64,
    tol: Tolerances,
) -> Result<(Vec2, [[f64; 2]; 2])> {
    let y0 = [x0.x, x0.y, 1.0, 0.0, 0.0, 1.0];
    let tr = integrate(
        |_, y, dy| {
            let p = Vec2::new(y[0], y[1]);
            let f = model.field(p);
            let a = model.jacobian(p).m;
            dy[0] = f.x;
            dy[1] = f.y;
            // Φ stored row-major in y[2..6]
            dy[2] = a[0][0] * y[2] + a[0][1] * y[4];
            dy[3] = a[0][0] * y[3] + a[0][1] * y[5];
            dy[4] = a[1][0] * y[2] + a[1][1] * y[4];
            dy[5] = a[1][0] * y[3] + a[1][1] * y[5];
        },
        &y0,
        0.0,
        duration,
        tol,
    )?;
    let y = tr.final_state();
    Ok((Vec2::new(y[0], y[1]), [[y[2], y[3]], [y[4], y[5]]]))
}

/// Time of the first upward crossing of the section after the orbit has
/// been on its negative side.
fn first_return(model: &OscillatorModel, section: &Section, opts: &CycleOptions) -> Result<f64> {
    let tol = Tolerances::new(1e-10, 1e-12);
    let mut start = section.point;
    let mut offset = 0.0;
    let mut chunk = 20.0;
    let mut been_negative = false;
    while offset < opts.max_return_time {
        let tr = flow(model, start, chunk, tol)?;
        let g = |i: usize| section.signed_distance(Vec2::from_slice(tr.state(i)));
        for i in 0..tr.steps() {
            let (g0, g1) = (g(i), g(i + 1));
            if g0 < 0.0 {
                been_negative = true;
            }
            if been_negative && g0 <= 0.0 && g1 > 0.0 {
                let (mut lo, mut hi) = (tr.times()[i], tr.times()[i + 1]);
                let mut buf = [0.0; 2];
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    tr.eval_into(mid, &mut buf);
                    if section.signed_distance(Vec2::new(buf[0], buf[1])) <= 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(offset + 0.5 * (lo + hi));
            }
        }
        let end = Vec2::from_slice(tr.final_state());
        if model.field(end).norm() < FIXED_POINT_FIELD {
            return Err(Error::NoOscillation { field_norm: model.field(end).norm() });
        }
        offset += chunk;
        start = end;
        chunk *= 2.0;
    }
    Err(Error::CycleNotFound { iterations: 0, residual: f64::INFINITY })
}

/// Solves the bordered 3×3 Newton system by Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col] == 0.0 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

pub fn find_cycle_with(model: &OscillatorModel, guess: Vec2, opts: &CycleOptions) -> Result<LimitCycle> {
    guess.ensure_finite()?;
    if !(opts.settle_time >= 0.0) {
        return Err(Error::Argument(format!("settle_time must be non-negative, got {}", opts.settle_time)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Argument(format!("cycle tolerance must be positive, got {}", opts.tol)));
    }
    let relaxed = if opts.settle_time > 0.0 {
        let tr = flow(model, guess, opts.settle_time, Tolerances::new(1e-10, 1e-12))?;
        Vec2::from_slice(tr.final_state())
    } else {
        guess
    };
    let f_relaxed = model.field(relaxed);
    if f_relaxed.norm() < FIXED_POINT_FIELD {
        return Err(Error::NoOscillation { field_norm: f_relaxed.norm() });
    }
    let section = Section { point: relaxed, normal: f_relaxed };
    let mut period = first_return(model, &section, opts)?;
    let mut x = relaxed;
    let tol = flow_tol(opts);
    let mut residuals = Vec::new();

    for iter in 0..=opts.max_newton {
        let traj = flow(model, x, period, tol)?;
        let end = Vec2::from_slice(traj.final_state());
        let r = end - x;
        let res = r.norm();
        residuals.push(res);
        log::debug!("shooting iteration {iter}: T = {period:.15}, residual = {res:e}");
        if res < opts.tol {
            let fingerprint = {
                let mut h = DefaultHasher::new();
                model.name().hash(&mut h);
                for (k, v) in model.params() {
                    k.hash(&mut h);
                    v.to_bits().hash(&mut h);
                }
                x.x.to_bits().hash(&mut h);
                x.y.to_bits().hash(&mut h);
                period.to_bits().hash(&mut h);
                h.finish()
            };
            return Ok(LimitCycle {
                model: model.clone(),
                period,
                anchor: x,
                section,
                trajectory: traj,
                residuals,
                closure: res,
                fingerprint,
            });
        }
        if iter == opts.max_newton {
            break;
        }
        let (_, phi) = flow_with_sensitivity(model, x, period, tol)?;
        let f_end = model.field(end);
        let n = section.normal;
        let m = [[phi[0][0] - 1.0, phi[0][1], f_end.x], [phi[1][0], phi[1][1] - 1.0, f_end.y], [n.x, n.y, 0.0]];
        let b = [-r.x, -r.y, -section.signed_distance(x)];
        let dz = solve3(m, b).ok_or_else(|| Error::CycleNotFound { iterations: iter + 1, residual: res })?;
        x = Vec2::new(x.x + dz[0], x.y + dz[1]);
        period += dz[2];
        if !(period > 0.0) || !x.is_finite() {
            return Err(Error::CycleNotFound { iterations: iter + 1, residual: res });
        }
    }
    Err(Error::CycleNotFound { iterations: opts.max_newton, residual: *residuals.last().unwrap() })
}
