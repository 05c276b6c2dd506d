//! Trajectory ensemble throughput, sequential against rayon.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tunnelscope::measurement::{ensemble_transmission, Centers, Channel, MeasurementModel, TrajectoryRun};
use tunnelscope::parallel::Execution;
use tunnelscope::potentials::eval_potential;
use tunnelscope::propagator::ScatterOptions;
use tunnelscope::{gaussian_packet, BarrierRegion, Grid1D, PotentialSpec, PropagatorConfig};

fn ensemble(c: &mut Criterion) {
    let grid = Grid1D::new(-64.0, 64.0, 256).unwrap();
    let v = eval_potential(&PotentialSpec::Rectangular { v0: 1.0, width: 3.0, center: 0.0 }, &grid)
        .unwrap()
        .values;
    let psi0 = gaussian_packet(&grid, -28.0, 1.0, 5.0).unwrap();
    let region = BarrierRegion::centered(0.0, 3.0).unwrap();
    let model = MeasurementModel::BrightImaging {
        delta_l: 1.0,
        pulse_duration: None,
        centers: Centers::default(),
    };
    let channel = Channel::new(&model, &grid).unwrap();
    let config = PropagatorConfig::new(0.05, 1000).with_absorber(20.0, 2.0);
    let options = ScatterOptions::default();
    let schedule = [24.0, 28.0, 32.0];
    let run = TrajectoryRun {
        psi0: &psi0,
        potential: &v,
        region: &region,
        model: &model,
        channel: &channel,
        schedule: &schedule,
        config: &config,
        options: &options,
    };

    let mut group = c.benchmark_group("ensemble_transmission");
    group.sample_size(10);
    for n_traj in [8usize, 32] {
        for (label, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(label, n_traj), &n_traj, |b, &n| {
                b.iter(|| ensemble_transmission(&run, n, 7, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
