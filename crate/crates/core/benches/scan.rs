use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qdkerr::ensemble::{
    calibrate_jitter, phase_scan, Averaging, JitterSpec, ScanGrid, ScatteringModel, SpinEnsemble,
};
use qdkerr::par::Execution;
use qdkerr::qed::{coupling_for_rate, CavitySpec, DipoleSpec};
use qdkerr::Energy;

fn study_model() -> ScatteringModel {
    let cavity = CavitySpec::new(Energy::from_mev(1388.0), Energy::from_mev(4.1), 0.9).unwrap();
    let omega_x = Energy::from_mev(1385.3);
    let g = coupling_for_rate(Energy::from_uev(0.52), omega_x, &cavity).unwrap();
    let dipole = DipoleSpec::new(
        omega_x,
        Energy::from_uev(1.0),
        g,
        Energy::from_uev(0.28),
        Energy::ZERO,
    )
    .unwrap();
    let sigma = calibrate_jitter(Energy::from_uev(0.8), Energy::from_uev(4.5)).unwrap();
    let jitter = JitterSpec::new(sigma, 2048, 20_000, 1).unwrap();
    ScatteringModel::new(cavity, dipole, jitter, SpinEnsemble::thermal())
}

fn scan(c: &mut Criterion) {
    let model = study_model();
    let grid = ScanGrid::around(
        model.dipole.omega_x(),
        Energy::from_uev(-8.0),
        Energy::from_uev(8.0),
        161,
    )
    .unwrap();
    let mut group = c.benchmark_group("phase_scan");
    group.sample_size(10);
    for (name, averaging) in [
        ("quadrature", Averaging::Quadrature),
        ("monte_carlo", Averaging::MonteCarlo),
    ] {
        for exec in [Execution::Sequential, Execution::Parallel] {
            group.bench_with_input(
                BenchmarkId::new(name, format!("{exec:?}")),
                &exec,
                |b, &exec| {
                    b.iter(|| phase_scan(black_box(&grid), &model, averaging, exec).unwrap())
                },
            );
        }
    }
    group.finish();
}

criterion_group!(benches, scan);
criterion_main!(benches);
