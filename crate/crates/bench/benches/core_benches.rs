//! Criterion benchmarks for the hot paths: kernel-intensity evaluation and
//! its closed-form compensator (against quadrature), Hawkes log-likelihood
//! and simulation, one ELBO gradient step, and the Hellinger grid metric.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use stpp_core::deepstpp::{self, Anchor, DeepStppConfig, KernelParams, RepresentativePoints};
use stpp_core::eval::{density_grid_from_model, hellinger, KernelWindow, SthpWindow};
use stpp_core::events::{Event, EventSequence, SpatialRegion, WindowExample};
use stpp_core::kernels::Mat2;
use stpp_core::parametric::{sthp_loglik, SthpParams};
use stpp_core::quad;
use stpp_core::rng::SplitRng;
use stpp_core::simulate::simulate_sthp_cluster;

fn ds1() -> SthpParams {
    SthpParams::new(
        0.2,
        0.5,
        1.0,
        [0.0, 0.0],
        Mat2::diagonal(0.2, 0.2),
        Mat2::diagonal(0.5, 0.5),
    )
    .unwrap()
}

fn random_kernel_params(rng: &mut SplitRng, n: usize, t_n: f64) -> KernelParams {
    let anchors = (0..n)
        .map(|_| Anchor {
            s: [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)],
            t: rng.uniform_in(t_n - 3.0, t_n),
        })
        .collect();
    KernelParams::new(
        anchors,
        (0..n).map(|_| rng.uniform_in(0.0, 1.5)).collect(),
        (0..n).map(|_| rng.uniform_in(0.2, 5.0)).collect(),
        (0..n).map(|_| rng.uniform_in(-2.0, 3.0)).collect(),
    )
}

fn bench_compensator(c: &mut Criterion) {
    let mut group = c.benchmark_group("temporal_compensator");
    for n in [10usize, 40] {
        let mut rng = SplitRng::new(1);
        let kp = random_kernel_params(&mut rng, n, 2.0);
        group.bench_with_input(BenchmarkId::new("closed_form", n), &kp, |b, kp| {
            b.iter(|| black_box(kp.temporal_compensator(2.0, 3.5)))
        });
        group.bench_with_input(BenchmarkId::new("quadrature", n), &kp, |b, kp| {
            b.iter(|| {
                quad::integrate_1d(&mut |t| kp.temporal_intensity(t), 2.0, 3.5, 1e-10).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_intensity_grid(c: &mut Criterion) {
    let mut rng = SplitRng::new(2);
    let kp = random_kernel_params(&mut rng, 70, 2.0);
    let window = KernelWindow {
        params: kp,
        t_n: 2.0,
    };
    let region = SpatialRegion::rectangle([-2.0, -2.0], [2.0, 2.0]).unwrap();
    c.bench_function("density_grid_51x51_70_anchors", |b| {
        b.iter(|| density_grid_from_model(&window, 2.5, &region, 51, 51, true).unwrap())
    });
}

fn bench_hawkes(c: &mut Criterion) {
    let p = ds1();
    let seq = simulate_sthp_cluster(&p, 2000.0, &mut SplitRng::new(3)).unwrap();
    c.bench_function("sthp_loglik_2000_units", |b| {
        b.iter(|| black_box(sthp_loglik(&p, &seq, None)))
    });
    c.bench_function("sthp_cluster_simulate_500_units", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            simulate_sthp_cluster(&p, 500.0, &mut SplitRng::with_stream(9, seed)).unwrap()
        })
    });
}

fn bench_hellinger(c: &mut Criterion) {
    let p = ds1();
    let hist = vec![Event::new(0.5, 0.1, -0.2), Event::new(1.2, 0.4, 0.3)];
    let truth = SthpWindow::new(&p, &hist, 1.2);
    let region = SpatialRegion::rectangle([-3.0, -3.0], [3.0, 3.0]).unwrap();
    let grid_p = density_grid_from_model(&truth, 1.5, &region, 51, 51, true).unwrap();
    let mut rng = SplitRng::new(4);
    let kp = random_kernel_params(&mut rng, 22, 1.2);
    let model = KernelWindow {
        params: kp,
        t_n: 1.2,
    };
    let grid_q = density_grid_from_model(&model, 1.5, &region, 51, 51, true).unwrap();
    c.bench_function("hellinger_51x51", |b| {
        b.iter(|| hellinger(black_box(&grid_p), black_box(&grid_q)).unwrap())
    });
}

fn bench_elbo_step(c: &mut Criterion) {
    let cfg = DeepStppConfig {
        d_model: 32,
        layers: 3,
        heads: 2,
        d_hidden: 64,
        d_z: 16,
        decoder_hidden: 64,
        rep_points: 20,
        max_events: 24,
        seed: 5,
        ..DeepStppConfig::default()
    };
    let model = deepstpp::DeepStpp::init(cfg.clone(), SpatialRegion::unit_square()).unwrap();
    let mut rng = SplitRng::new(6);
    let mut t = 0.0;
    let events: Vec<Event> = (0..20)
        .map(|_| {
            t += rng.exponential(0.5);
            Event::new(t, rng.uniform(), rng.uniform())
        })
        .collect();
    let window = WindowExample {
        input: EventSequence::new(events, t).unwrap(),
        target: Event::new(t + 1.0, 0.5, 0.5),
    };
    let tensors: Vec<stpp_core::ndiff::Tensor> = model.weights.tensors().cloned().collect();
    c.bench_function("elbo_forward_backward_20_events", |b| {
        b.iter(|| {
            let mut tape = stpp_core::ndiff::Tape::new();
            let bound = deepstpp::model::bind_tensors(&mut tape, &tensors, &cfg);
            let mut rep_rng = SplitRng::new(7);
            let rep = RepresentativePoints::sample(
                cfg.rep_points,
                &model.rep_region,
                window.t_n(),
                &mut rep_rng,
            );
            let eps = stpp_core::ndiff::Tensor::matrix(1, cfg.d_z, vec![0.1; cfg.d_z]);
            let parts =
                deepstpp::train::elbo_graph(&mut tape, &bound, &window, &rep, Some(&eps), &cfg)
                    .unwrap();
            tape.backward(parts.loss).unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_compensator,
    bench_intensity_grid,
    bench_hawkes,
    bench_hellinger,
    bench_elbo_step
);
criterion_main!(benches);
