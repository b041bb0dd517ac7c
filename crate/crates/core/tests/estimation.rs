use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use qdkerr::ensemble::{
    calibrate_jitter, phase_scan, Averaging, JitterSpec, ScanGrid, ScatteringModel, SpinEnsemble,
};
use qdkerr::estimation::lm::{self, LmOptions};
use qdkerr::estimation::{
    fit_coupling, residuals, CouplingFitOptions, CouplingFitSetup, CouplingParameterization,
    PhaseDataset, PhaseRow,
};
use qdkerr::par::Execution;
use qdkerr::qed::{coupling_for_rate, CavitySpec, DipoleSpec};
use qdkerr::{Energy, Error};

fn uev(x: f64) -> Energy {
    Energy::from_uev(x)
}

fn model(rate: f64, delta_z: f64) -> ScatteringModel {
    let cavity = CavitySpec::new(Energy::from_mev(1388.0), Energy::from_mev(4.1), 0.9).unwrap();
    let omega_x = Energy::from_mev(1385.3);
    let g = coupling_for_rate(uev(rate), omega_x, &cavity).unwrap();
    let dipole = DipoleSpec::new(omega_x, uev(delta_z), g, uev(0.8 - rate), Energy::ZERO).unwrap();
    let sigma = calibrate_jitter(uev(0.8), uev(4.5)).unwrap();
    ScatteringModel::new(
        cavity,
        dipole,
        JitterSpec::with_sigma(sigma, 1).unwrap(),
        SpinEnsemble::thermal(),
    )
}

/// Phase scan of `truth` with additive Gaussian noise of 2 % of the peak |φ|.
fn synthetic(truth: &ScatteringModel, points: usize, noise: f64, seed: u64) -> PhaseDataset {
    let grid = ScanGrid::around(truth.dipole.omega_x(), uev(-8.0), uev(8.0), points).unwrap();
    let clean = phase_scan(&grid, truth, Averaging::Quadrature, Execution::Parallel).unwrap();
    let peak = clean
        .iter()
        .map(|p| p.phase.phi().unwrap().abs())
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise * peak).unwrap();
    PhaseDataset::new(
        clean
            .iter()
            .map(|p| PhaseRow {
                omega: p.omega,
                phi: p.phase.phi().unwrap()
                    + if noise > 0.0 {
                        normal.sample(&mut rng)
                    } else {
                        0.0
                    },
                weight: 1.0,
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn clean_data_is_recovered_exactly() {
    let truth = model(0.52, 1.0);
    let data = synthetic(&truth, 41, 0.0, 0);
    let setup = CouplingFitSetup::from_model(&truth);
    let options = CouplingFitOptions {
        initial_rate: Some(uev(0.2)),
        ..CouplingFitOptions::default()
    };
    let fit = fit_coupling(&data, &setup, &options).unwrap();
    assert!((fit.value("Gamma_at_qd_ueV").unwrap() - 0.52).abs() < 1e-6);
    assert!((fit.beta.unwrap() - 0.65).abs() < 1e-6);
    assert!(fit.residual_rms < 1e-8);
    assert!(fit.cost_history.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn residuals_of_perfect_and_shifted_data() {
    let truth = model(0.52, 1.0);
    let data = synthetic(&truth, 21, 0.0, 0);
    let r = residuals(&data, &truth, Execution::Sequential).unwrap();
    assert!(r.iter().all(|&x| x == 0.0));
    let eps = 1e-3;
    let shifted = PhaseDataset::new(
        data.rows()
            .iter()
            .map(|row| PhaseRow {
                phi: row.phi + eps,
                ..*row
            })
            .collect(),
    )
    .unwrap();
    let r = residuals(&shifted, &truth, Execution::Sequential).unwrap();
    let rms = (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt();
    assert!((rms - eps).abs() < 1e-12);
}

#[test]
fn rate_and_coupling_parameterizations_agree() {
    let truth = model(0.52, 1.0);
    let data = synthetic(&truth, 81, 0.02, 11);
    let setup = CouplingFitSetup::from_model(&truth);
    let by_rate = fit_coupling(&data, &setup, &CouplingFitOptions::default()).unwrap();
    let by_coupling = fit_coupling(
        &data,
        &setup,
        &CouplingFitOptions {
            parameterization: CouplingParameterization::Coupling,
            ..CouplingFitOptions::default()
        },
    )
    .unwrap();
    let d = (by_rate.beta.unwrap() - by_coupling.beta.unwrap()).abs();
    assert!(d < 1e-6, "{d}");
}

#[test]
fn finite_difference_jacobian_is_accurate() {
    // Reference: five-point stencil at a much larger step.
    let truth = model(0.52, 1.0);
    let data = synthetic(&truth, 41, 0.02, 3);
    let setup = CouplingFitSetup::from_model(&truth);
    let f = |p: &[f64]| {
        let m = setup.model(uev(p[0]), uev(p[1])).unwrap();
        residuals(&data, &m, Execution::Parallel).unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let x = [
            Uniform::new(0.2, 0.7).unwrap().sample(&mut rng),
            Uniform::new(0.5, 3.0).unwrap().sample(&mut rng),
        ];
        let jac = lm::jacobian(&f, &x, 1e-5);
        for j in 0..2 {
            let h = 1e-3 * x[j];
            let at = |s: f64| {
                let mut y = x;
                y[j] += s * h;
                f(&y)
            };
            let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
            let scale = jac[j].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..jac[j].len() {
                let reference = (m2[i] - 8.0 * m1[i] + 8.0 * p1[i] - p2[i]) / (12.0 * h);
                assert!(
                    (jac[j][i] - reference).abs() <= 1e-4 * scale,
                    "param {j}, row {i}: {} vs {reference}",
                    jac[j][i]
                );
            }
        }
    }
}

#[test]
fn one_sigma_intervals_cover_the_truth() {
    let truth = model(0.52, 1.0);
    let setup = CouplingFitSetup::from_model(&truth);
    let mut covered = 0;
    for seed in 0..100 {
        let data = synthetic(&truth, 41, 0.02, 500 + seed);
        let fit = fit_coupling(&data, &setup, &CouplingFitOptions::default()).unwrap();
        let p = fit.parameter("Gamma_at_qd_ueV").unwrap();
        if (p.value - 0.52).abs() <= p.std_err {
            covered += 1;
        }
    }
    assert!(covered >= 60, "{covered}/100");
}

#[test]
fn purely_coherent_dot_fits_to_unit_beta() {
    let truth = model(0.8, 1.0);
    let setup = CouplingFitSetup::from_model(&truth);
    let data = synthetic(&truth, 81, 0.02, 21);
    let fit = fit_coupling(&data, &setup, &CouplingFitOptions::default()).unwrap();
    let beta = fit.beta.unwrap();
    assert!(
        (1.0 - beta) <= 3.0 * fit.beta_std_err.unwrap().max(1e-3),
        "{beta} ± {:?}",
        fit.beta_std_err
    );
}

#[test]
fn splitting_can_be_fitted_jointly() {
    let truth = model(0.52, 1.0);
    let data = synthetic(&truth, 81, 0.0, 0);
    let setup = CouplingFitSetup {
        delta_z: uev(2.0),
        ..CouplingFitSetup::from_model(&truth)
    };
    let options = CouplingFitOptions {
        free_delta_z: true,
        ..CouplingFitOptions::default()
    };
    let fit = fit_coupling(&data, &setup, &options).unwrap();
    assert!((fit.value("Gamma_at_qd_ueV").unwrap() - 0.52).abs() < 1e-5);
    assert!((fit.value("delta_z_ueV").unwrap() - 1.0).abs() < 1e-5);
}

#[test]
fn iteration_cap_reports_best_so_far() {
    let truth = model(0.52, 1.0);
    let data = synthetic(&truth, 41, 0.02, 5);
    let setup = CouplingFitSetup::from_model(&truth);
    let options = CouplingFitOptions {
        initial_rate: Some(uev(0.05)),
        lm: LmOptions {
            max_iterations: 1,
            ..LmOptions::default()
        },
        ..CouplingFitOptions::default()
    };
    match fit_coupling(&data, &setup, &options) {
        Err(Error::NotConverged(best)) => {
            assert!(!best.converged);
            assert_eq!(best.iterations, 1);
            assert!(best.cost_history.len() == 2 && best.cost_history[1] < best.cost_history[0]);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn too_few_rows_are_rejected() {
    let truth = model(0.52, 1.0);
    let data = synthetic(&truth, 4, 0.0, 0);
    let setup = CouplingFitSetup::from_model(&truth);
    assert!(matches!(
        fit_coupling(&data, &setup, &CouplingFitOptions::default()),
        Err(Error::InvalidParameter { .. })
    ));
}
