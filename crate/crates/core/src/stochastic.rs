//! Noise-driven phase deviation.
//!
//! The phase obeys the Itô equation `dψ = v(t+ψ)ᵀ dW` with
//! `vᵀ = v₁ᵀ G(x₀)`. Its density follows
//! `∂p/∂t = ½ ∂²/∂ψ² (‖v(t+ψ)‖² p)`, so `Var ψ` grows at the period
//! average of `‖v‖²`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::csv::{fmt_f64, row, to_csv};
use crate::diliberto::DilibertoBasis;
use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::ode::{integrate_quadrature, Tolerances};

/// Number of time points kept by an ensemble run.
const ENSEMBLE_SAMPLES: usize = 500;
/// Number of density snapshots kept by the Fokker–Planck solver.
const FP_SNAPSHOTS: usize = 11;
/// Stability margin on the explicit diffusion step.
pub const CFL_FACTOR: f64 = 0.4;
/// Far boundaries sit at least this many predicted standard deviations out.
pub const BOUNDARY_SIGMAS: f64 = 8.0;
const NEGATIVE_TOL: f64 = -1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// `G = σ·I`, two channels.
    Isotropic { sigma: f64 },
    /// `G = σ·d` with unit `d`, one channel.
    Directional { direction: Vec2, sigma: f64 },
}

impl NoiseModel {
    pub fn isotropic(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(NoiseModel::Isotropic { sigma })
    }

    /// `direction` is normalized.
    pub fn directional(direction: Vec2, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Argument("noise direction must be a finite non-zero vector".into()));
        }
        Ok(NoiseModel::Directional { direction: direction.scale(1.0 / n), sigma })
    }

    pub fn channels(&self) -> usize {
        match self {
            NoiseModel::Isotropic { .. } => 2,
            NoiseModel::Directional { .. } => 1,
        }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::Isotropic { sigma } | NoiseModel::Directional { sigma, .. } => sigma,
        }
    }

    /// `v₁ᵀG`, padded with zeros past the channel count.
    #[inline]
    fn project(&self, v1: Vec2) -> [f64; 2] {
        match *self {
            NoiseModel::Isotropic { sigma } => [sigma * v1.x, sigma * v1.y],
            NoiseModel::Directional { direction, sigma } => [sigma * v1.dot(direction), 0.0],
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Argument(format!("sigma must be finite and non-negative, got {sigma}")));
    }
    Ok(())
}

/// `vᵀ(t) = v₁ᵀ(t) G(x₀(t))`, one entry per channel.
pub fn effective_noise_v(basis: &DilibertoBasis, noise: &NoiseModel, t: f64) -> Vec<f64> {
    noise.project(basis.v1(t))[..noise.channels()].to_vec()
}

#[inline]
fn diffusion_at(basis: &DilibertoBasis, noise: &NoiseModel, t: f64) -> f64 {
    let [a, b] = noise.project(basis.v1(t));
    a * a + b * b
}

/// Period average `(1/T)∫₀ᵀ ‖v‖² dt`, the growth rate of `Var ψ`.
pub fn diffusion_summary(basis: &DilibertoBasis, noise: &NoiseModel) -> Result<f64> {
    if noise.sigma() == 0.0 {
        return Ok(0.0);
    }
    let period = basis.period();
    let (_, q) = integrate_quadrature(
        |_, _, dy| dy[0] = 0.0,
        |t, _| diffusion_at(basis, noise, t),
        &[0.0],
        0.0,
        period,
        Tolerances::new(1e-12, 1e-16).with_max_step(period / 64.0),
    )?;
    Ok(q / period)
}

fn max_diffusion(basis: &DilibertoBasis, noise: &NoiseModel) -> f64 {
    basis.grid().iter().map(|g| diffusion_at(basis, noise, g.t)).fold(0.0, f64::max)
}

/// Sums in a fixed binary tree so the result does not depend on scheduling.
fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().fold(0.0, |a, b| a + b),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEnsemble {
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Unbiased sample variance (zero for a single path).
    pub variance: Vec<f64>,
}

impl PhaseEnsemble {
    pub fn final_variance(&self) -> f64 {
        *self.variance.last().expect("ensemble stores at least one time")
    }

    /// Least-squares slope of `Var ψ` through the origin.
    pub fn variance_rate(&self) -> f64 {
        let num: f64 = self.times.iter().zip(&self.variance).map(|(t, v)| t * v).sum();
        let den: f64 = self.times.iter().map(|t| t * t).sum();
        num / den
    }

    pub fn to_csv(&self) -> String {
        let rows = self.times.iter().zip(&self.mean).zip(&self.variance).map(|((t, m), v)| {
            vec![fmt_f64(*t), fmt_f64(*m), fmt_f64(*v), self.n_paths.to_string(), self.seed.to_string()]
        });
        to_csv(&["t", "mean_psi", "var_psi", "n_paths", "seed"], rows)
    }
}

/// Euler–Maruyama ensemble with `ψ(0) = 0`. Path `i` draws from the
/// ChaCha stream `i` of `seed`, so adding paths leaves earlier ones intact.
pub fn simulate_sde_ensemble(
    basis: &DilibertoBasis,
    noise: &NoiseModel,
    n_paths: usize,
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<PhaseEnsemble> {
    if n_paths == 0 {
        return Err(Error::Argument("need at least one path".into()));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::Argument(format!("t_end must be positive, got {t_end}")));
    }
    let max_dt = basis.period() / 100.0;
    if !(dt > 0.0) || dt > max_dt {
        return Err(Error::Argument(format!("dt must lie in (0, T/100 = {max_dt}], got {dt}")));
    }
    let n_steps = (t_end / dt).ceil() as usize;
    let h = t_end / n_steps as f64;
    let stride = n_steps.div_ceil(ENSEMBLE_SAMPLES).max(1);
    let mut record: Vec<usize> = (0..=n_steps).step_by(stride).collect();
    if *record.last().unwrap() != n_steps {
        record.push(n_steps);
    }
    let sqrt_h = h.sqrt();
    let channels = noise.channels();
    let paths: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let mut out = Vec::with_capacity(record.len());
            let mut next = 0;
            let mut psi = 0.0;
            for step in 0..=n_steps {
                if record[next] == step {
                    out.push(psi);
                    next += 1;
                    if step == n_steps {
                        break;
                    }
                }
                let v = noise.project(basis.v1(step as f64 * h + psi));
                let mut d = 0.0;
                for &vc in &v[..channels] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    d += vc * z;
                }
                psi += d * sqrt_h;
            }
            out
        })
        .collect();
    if paths.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Instability("ensemble produced a non-finite phase".into()));
    }
    let n = n_paths as f64;
    let mut mean = Vec::with_capacity(record.len());
    let mut variance = Vec::with_capacity(record.len());
    let mut column = vec![0.0; n_paths];
    for j in 0..record.len() {
        for (c, path) in column.iter_mut().zip(&paths) {
            *c = path[j];
        }
        let m = pairwise_sum(&column) / n;
        for c in column.iter_mut() {
            *c = (*c - m) * (*c - m);
        }
        let var = if n_paths > 1 { pairwise_sum(&column) / (n - 1.0) } else { 0.0 };
        mean.push(m);
        variance.push(var);
    }
    Ok(PhaseEnsemble { n_paths, seed, dt: h, times: record.iter().map(|&s| s as f64 * h).collect(), mean, variance })
}

/// Uniform cell-centred grid on `[−half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiGrid {
    pub half_width: f64,
    pub cells: usize,
}

impl PsiGrid {
    pub fn new(half_width: f64, cells: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() || cells < 8 {
            return Err(Error::Argument(format!(
                "grid needs a positive half-width and at least 8 cells, got {half_width} and {cells}"
            )));
        }
        Ok(Self { half_width, cells })
    }

    /// Grid whose boundaries sit 5% beyond `BOUNDARY_SIGMAS` predicted
    /// deviations after `t_end`.
    pub fn for_run(basis: &DilibertoBasis, noise: &NoiseModel, t_end: f64, cells: usize) -> Result<Self> {
        let d = diffusion_summary(basis, noise)?;
        let spread = BOUNDARY_SIGMAS * (d * t_end).sqrt();
        Self::new((1.05 * spread).max(1e-3), cells)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }

    pub fn centres(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.cells).map(|i| -self.half_width + (i as f64 + 0.5) * h).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub psi: Vec<f64>,
    pub spacing: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    /// One density per stored time.
    pub p: Vec<Vec<f64>>,
}

impl DensityField {
    pub fn mass(&self, i: usize) -> f64 {
        pairwise_sum(&self.p[i]) * self.spacing
    }

    pub fn mean(&self, i: usize) -> f64 {
        let w: Vec<f64> = self.p[i].iter().zip(&self.psi).map(|(p, x)| p * x).collect();
        pairwise_sum(&w) * self.spacing / self.mass(i)
    }

    pub fn variance(&self, i: usize) -> f64 {
        let m = self.mean(i);
        let w: Vec<f64> = self.p[i].iter().zip(&self.psi).map(|(p, x)| p * (x - m) * (x - m)).collect();
        pairwise_sum(&w) * self.spacing / self.mass(i)
    }

    pub fn final_variance(&self) -> f64 {
        self.variance(self.times.len() - 1)
    }

    /// `(Var(t_end) − Var(0)) / t_end`.
    pub fn variance_growth(&self) -> f64 {
        let last = self.times.len() - 1;
        (self.variance(last) - self.variance(0)) / self.times[last]
    }

    pub fn to_csv(&self) -> String {
        let rows = self
            .times
            .iter()
            .zip(&self.p)
            .flat_map(|(t, p)| self.psi.iter().zip(p).map(move |(x, v)| row(&[*t, *x, *v])));
        to_csv(&["t", "psi", "p"], rows)
    }
}

/// Largest step `dt` that satisfies the explicit-scheme bound on `grid`.
pub fn stable_dt(basis: &DilibertoBasis, noise: &NoiseModel, grid: &PsiGrid) -> f64 {
    let d = max_diffusion(basis, noise);
    if d == 0.0 {
        f64::INFINITY
    } else {
        CFL_FACTOR * grid.spacing().powi(2) / d
    }
}

/// Explicit conservative finite differences for
/// `∂p/∂t = ½ ∂²/∂ψ² (‖v(t+ψ)‖² p)` with zero density beyond the grid.
///
/// Starts from a Gaussian of standard deviation `3Δψ` centred at zero,
/// normalized on the grid.
pub fn solve_fp(
    basis: &DilibertoBasis,
    noise: &NoiseModel,
    grid: &PsiGrid,
    t_end: f64,
    dt: f64,
) -> Result<DensityField> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::Argument(format!("t_end must be positive, got {t_end}")));
    }
    let limit = stable_dt(basis, noise, grid);
    if !(dt > 0.0) || dt > limit {
        return Err(Error::Argument(format!("dt = {dt} violates the stability bound {limit:e}")));
    }
    let d_bar = diffusion_summary(basis, noise)?;
    let needed = BOUNDARY_SIGMAS * (d_bar * t_end).sqrt();
    if grid.half_width < needed {
        return Err(Error::Argument(format!(
            "grid half-width {} is below {BOUNDARY_SIGMAS} predicted deviations ({needed})",
            grid.half_width
        )));
    }
    let psi = grid.centres();
    let h = grid.spacing();
    let n = grid.cells;
    let s0 = 3.0 * h;
    let mut p: Vec<f64> = psi.iter().map(|x| (-0.5 * (x / s0).powi(2)).exp()).collect();
    let norm = pairwise_sum(&p) * h;
    p.iter_mut().for_each(|v| *v /= norm);

    let n_steps = (t_end / dt).ceil() as usize;
    let k = t_end / n_steps as f64;
    let snap_every = n_steps.div_ceil(FP_SNAPSHOTS - 1).max(1);
    let coef = 0.5 * k / (h * h);
    let mut times = vec![0.0];
    let mut snaps = vec![p.clone()];
    let mut q = vec![0.0; n + 2];
    let mut next = p.clone();
    for step in 0..n_steps {
        let t = step as f64 * k;
        for (i, x) in psi.iter().enumerate() {
            q[i + 1] = diffusion_at(basis, noise, t + x) * p[i];
        }
        for i in 0..n {
            next[i] = p[i] + coef * (q[i + 2] - 2.0 * q[i + 1] + q[i]);
        }
        std::mem::swap(&mut p, &mut next);
        if let Some(bad) = p.iter().find(|v| !(**v >= NEGATIVE_TOL)) {
            return Err(Error::Instability(format!("density reached {bad} at t = {}", t + k)));
        }
        let done = step + 1;
        if done % snap_every == 0 || done == n_steps {
            times.push(done as f64 * k);
            snaps.push(p.clone());
        }
    }
    Ok(DensityField { psi, spacing: h, dt: k, times, p: snaps })
}
