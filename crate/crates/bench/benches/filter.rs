use criterion::{criterion_group, criterion_main, Criterion};
use ipsukf::{
    build_duffing_chain, build_linear_chain, generate_sigma_points, AugmentedState, Covariance,
    DuffingChainSpec, FilterConfig, InputFrame, IpsUkf, LinearChainSpec, ObservationLayout,
    SystemModel, UnscentedParams,
};
use nalgebra::DVector;
use std::hint::black_box;

fn sigma_points(c: &mut Criterion) {
    let z = AugmentedState::from_parts(&[0.1; 3], &[0.0; 3], &[1.0; 6]).unwrap();
    let p = Covariance::from_diagonal(&[1e-2; 12]);
    let params = UnscentedParams::default();
    c.bench_function("sigma_points_l12", |b| {
        b.iter(|| generate_sigma_points(black_box(&z), black_box(&p), &params).unwrap())
    });
}

fn ips_steps(c: &mut Criterion) {
    let spec = LinearChainSpec::new(vec![1.0; 3], vec![0.25, 0.5, 0.75], vec![9.0, 11.0, 13.0]);
    let model = build_linear_chain(&spec, ObservationLayout::FULL).unwrap();
    let config = FilterConfig::isotropic(12, 1e-9, 9, 1e-3, 0.01);
    let filter = IpsUkf::new(model, config).unwrap();
    let z0 = AugmentedState::from_parts(&[0.0; 3], &[0.0; 3], &[0.125, 0.25, 0.375, 4.5, 5.5, 6.5])
        .unwrap();
    let mut p0 = vec![1e-2; 6];
    p0.extend([1.0; 6]);
    let u0 = InputFrame::initial(vec![true, true, false], DVector::zeros(3)).unwrap();
    let init = filter
        .initial_state(z0, Covariance::from_diagonal(&p0), u0)
        .unwrap();
    let y = DVector::from_element(9, 0.01);
    c.bench_function("ips_step_linear3dof", |b| {
        b.iter(|| filter.ips_step(black_box(&init), black_box(&y)).unwrap())
    });

    let spec = DuffingChainSpec::new(
        vec![1.0; 2],
        vec![0.5, 0.5],
        vec![3.0, 4.5],
        vec![15.0, 27.0],
    );
    let model = build_duffing_chain(&spec, ObservationLayout::FULL).unwrap();
    let l = model.state_len();
    let filter = IpsUkf::new(model, FilterConfig::isotropic(l, 1e-9, 6, 1e-5, 0.01)).unwrap();
    let measurements = vec![DVector::from_element(6, 0.01); 100];
    let z0 = AugmentedState::from_parts(&[0.0; 2], &[0.0; 2], &[0.25, 0.25, 1.5, 2.25, 7.5, 13.5])
        .unwrap();
    let mut p0 = vec![1e-2; 4];
    p0.extend([1.0; 6]);
    let u0 = InputFrame::initial(vec![true, false], DVector::zeros(2)).unwrap();
    let init = filter
        .initial_state(z0, Covariance::from_diagonal(&p0), u0)
        .unwrap();
    c.bench_function("ips_run_duffing_100_steps", |b| {
        b.iter(|| filter.run(black_box(&measurements), init.clone()).unwrap())
    });
}

criterion_group!(benches, sigma_points, ips_steps);
criterion_main!(benches);
