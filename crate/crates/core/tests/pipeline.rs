use std::sync::Arc;

use planar_ppv::adjoint::verify_basis;
use planar_ppv::phase::{ppv_fourier, ppv_mean_square, simulate_phase, Perturbation, Waveform};
use planar_ppv::stochastic::{diffusion_summary, simulate_sde_ensemble, solve_fp, stable_dt, NoiseModel, PsiGrid};
use planar_ppv::{find_cycle, DilibertoBasis, Error, OscillatorModel, Vec2};

#[test]
fn brusselator_end_to_end() {
    let model = OscillatorModel::brusselator(1.0, 3.0);
    let cycle = Arc::new(find_cycle(&model, Vec2::new(1.5, 3.0), 100.0, 1e-10).unwrap());
    assert!(cycle.period() > 5.0 && cycle.period() < 10.0, "T = {}", cycle.period());
    let basis = DilibertoBasis::new(cycle.clone()).unwrap();
    assert!(basis.mu2() < 0.0);
    let report = verify_basis(&cycle, &basis, 1e-5).unwrap();
    assert!(report.all_pass(), "{}", report.to_text());

    let spec = ppv_fourier(&basis, 64).unwrap();
    let ms = ppv_mean_square(&basis).unwrap();
    assert!((spec.power() - ms).abs() < 1e-6 * ms);

    let p = Perturbation::deterministic(Waveform::AlongFlow, 0.05).unwrap();
    let path = simulate_phase(&basis, &p, 40.0, 1e-10).unwrap();
    assert!((path.final_psi() - 2.0).abs() < 1e-6);
}

#[test]
fn directional_noise_on_van_der_pol_agrees_between_solvers() {
    let model = OscillatorModel::van_der_pol(1.0);
    let cycle = Arc::new(find_cycle(&model, Vec2::new(2.0, 0.0), 100.0, 1e-10).unwrap());
    let basis = DilibertoBasis::new(cycle.clone()).unwrap();
    let noise = NoiseModel::directional(Vec2::new(0.0, 1.0), 0.05).unwrap();
    let t_end = 10.0 * cycle.period();
    let d = diffusion_summary(&basis, &noise).unwrap();
    let grid = PsiGrid::for_run(&basis, &noise, t_end, 300).unwrap();
    let fp = solve_fp(&basis, &noise, &grid, t_end, stable_dt(&basis, &noise, &grid)).unwrap();
    assert!((fp.variance_growth() - d).abs() < 0.02 * d, "{} vs {d}", fp.variance_growth());
    let ens = simulate_sde_ensemble(&basis, &noise, 2048, t_end, cycle.period() / 100.0, 5).unwrap();
    let mc = ens.final_variance() / t_end;
    assert!((mc - d).abs() < 0.1 * d, "{mc} vs {d}");
}

#[test]
fn frames_from_different_cycles_do_not_mix() {
    let a = Arc::new(find_cycle(&OscillatorModel::van_der_pol(1.0), Vec2::new(2.0, 0.0), 100.0, 1e-10).unwrap());
    let b = Arc::new(find_cycle(&OscillatorModel::van_der_pol(2.0), Vec2::new(2.0, 0.0), 100.0, 1e-10).unwrap());
    let basis_b = DilibertoBasis::new(b).unwrap();
    assert_eq!(verify_basis(&a, &basis_b, 1e-5), Err(Error::MismatchedProvenance));
}
