use ipsukf::analysis::{compute_metrics, ConvergenceThresholds};
use ipsukf::simulator::{rk4_simulate, synthesize_measurements};
use ipsukf::{
    build_duffing_chain, build_linear_chain, AugmentedState, ChainModel, ChainParams, Covariance,
    DuffingChainSpec, Error, ExcitationSpec, FilterConfig, FilterState, InputFrame, IpsUkf,
    LinearChainSpec, NoiseSpec, ObservationLayout, Trajectory,
};
use nalgebra::DVector;

fn pulse_and_noise(dof: usize) -> ExcitationSpec {
    ExcitationSpec::Superposition {
        components: vec![
            ExcitationSpec::Pulse {
                amplitude: 100.0,
                start: 5.0,
                duration: 0.01,
                dof,
            },
            ExcitationSpec::WhiteNoise {
                mean: 0.0,
                variance: 4.0,
                dof,
                seed: 3,
            },
        ],
    }
}

struct Setup {
    filter: IpsUkf<ChainModel>,
    init: FilterState,
    truth: Trajectory,
    measurements: Vec<DVector<f64>>,
    theta: Vec<f64>,
}

fn duffing_setup(ratio: f64, guess: f64, p0_param: f64) -> Setup {
    let spec = DuffingChainSpec::new(
        vec![1.0; 2],
        vec![0.5, 0.5],
        vec![3.0, 4.5],
        vec![15.0, 27.0],
    );
    let model = build_duffing_chain(&spec, ObservationLayout::FULL).unwrap();
    let params = ChainParams::duffing(
        spec.masses.clone(),
        spec.damping.clone(),
        spec.stiffness.clone(),
        spec.cubic.clone(),
    )
    .unwrap();
    let truth = rk4_simulate(
        &params,
        &pulse_and_noise(2),
        &[0.0; 2],
        &[0.0; 2],
        0.01,
        20.0,
    )
    .unwrap();
    let measurements = synthesize_measurements(
        &truth,
        ObservationLayout::FULL,
        &NoiseSpec {
            rms_ratio: ratio,
            seed: 9,
        },
    )
    .unwrap();
    let theta = model.theta_of(&params);
    let filter = IpsUkf::new(model, FilterConfig::isotropic(10, 1e-9, 6, 1e-5, 0.01)).unwrap();
    let guess: Vec<f64> = theta.iter().map(|t| t * guess).collect();
    let mut p0 = vec![1e-2; 4];
    p0.extend(vec![p0_param; 6]);
    let init = filter
        .initial_state(
            AugmentedState::from_parts(&[0.0; 2], &[0.0; 2], &guess).unwrap(),
            Covariance::from_diagonal(&p0),
            InputFrame::initial(vec![true, false], DVector::zeros(2)).unwrap(),
        )
        .unwrap();
    Setup {
        filter,
        init,
        truth,
        measurements,
        theta,
    }
}

#[test]
fn runs_are_deterministic() {
    let a = duffing_setup(0.05, 0.5, 1.0);
    let b = duffing_setup(0.05, 0.5, 1.0);
    assert_eq!(a.measurements, b.measurements);
    let ra = a.filter.run(&a.measurements[1..], a.init).unwrap();
    let rb = b.filter.run(&b.measurements[1..], b.init).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn covariance_stays_healthy_and_known_rows_exact() {
    let s = duffing_setup(0.05, 0.5, 1.0);
    let report = s.filter.run(&s.measurements[1..], s.init).unwrap();
    assert!(!report.diverged, "{:?}", report.failure);
    assert_eq!(report.steps.len(), s.measurements.len() - 1);
    for (j, step) in report.steps.iter().enumerate() {
        assert_eq!(step.step_index, j + 1);
        assert!(step.covariance.is_healthy(), "step {}", step.step_index);
        for frame in [&step.stage1_input, &step.input_estimate] {
            assert_eq!(frame.values()[0].to_bits(), 0.0f64.to_bits());
        }
    }
}

#[test]
fn noise_free_run_from_truth_stays_near_truth() {
    let s = duffing_setup(0.0, 1.0, 1e-6);
    let report = s.filter.run(&s.measurements[1..], s.init).unwrap();
    let metrics = compute_metrics(
        &report,
        &s.truth,
        &s.theta,
        2.0,
        ConvergenceThresholds::default(),
    )
    .unwrap();
    // Stiffness-type parameters: k1, k2, e1, e2.
    for j in 2..6 {
        assert!(
            metrics.param_mean_rel_error[j] < 0.05,
            "{j}: {:?}",
            metrics.param_mean_rel_error
        );
    }
    // The DOF-2 input is recovered closely; DOF 1 is known.
    assert!(metrics.input_rmse[1] < 0.2, "{:?}", metrics.input_rmse);
    assert_eq!(metrics.input_rmse[0], 0.0);
}

#[test]
fn tripped_guard_returns_partial_report() {
    let s = duffing_setup(0.05, 0.5, 1.0);
    // e2 starts at 13.5 and climbs towards 27.
    let filter = s.filter.clone().with_divergence_guard(14.0);
    let report = filter.run(&s.measurements[1..], s.init.clone()).unwrap();
    assert!(report.diverged);
    assert!(matches!(report.failure, Some(Error::Divergence { .. })));
    let completed = report.steps.len();
    assert!(completed > 0 && completed < s.measurements.len() - 1);

    // The partial history is the prefix of the unguarded run.
    let full = s.filter.run(&s.measurements[1..], s.init).unwrap();
    assert_eq!(&full.steps[..completed], &report.steps[..]);

    let metrics = compute_metrics(
        &report,
        &s.truth,
        &s.theta,
        2.0,
        ConvergenceThresholds::default(),
    )
    .unwrap();
    assert!(metrics.diverged && !metrics.converged);
    assert_eq!(metrics.steps_completed, completed);
}

#[test]
fn wrong_measurement_length_is_a_dimension_error() {
    let s = duffing_setup(0.05, 0.5, 1.0);
    let bad = vec![DVector::zeros(5); 3];
    assert!(matches!(
        s.filter.run(&bad, s.init),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn all_known_linear_chain_tracks_the_state() {
    let spec = LinearChainSpec::new(vec![1.0; 3], vec![0.25, 0.5, 0.75], vec![9.0, 11.0, 13.0])
        .all_known();
    let model = build_linear_chain(&spec, ObservationLayout::FULL).unwrap();
    let params = ChainParams::linear(
        spec.masses.clone(),
        spec.damping.clone(),
        spec.stiffness.clone(),
    )
    .unwrap();
    let truth = rk4_simulate(
        &params,
        &pulse_and_noise(3),
        &[0.0; 3],
        &[0.0; 3],
        0.01,
        10.0,
    )
    .unwrap();
    let y = synthesize_measurements(
        &truth,
        ObservationLayout::FULL,
        &NoiseSpec {
            rms_ratio: 0.0,
            seed: 0,
        },
    )
    .unwrap();
    let filter = IpsUkf::new(model, FilterConfig::isotropic(6, 1e-9, 9, 1e-3, 0.01)).unwrap();
    let init = filter
        .initial_state(
            AugmentedState::from_parts(&[0.0; 3], &[0.0; 3], &[]).unwrap(),
            Covariance::from_diagonal(&[1e-2; 6]),
            InputFrame::initial(vec![true, true, false], DVector::zeros(3)).unwrap(),
        )
        .unwrap();
    let report = filter.run(&y[1..], init).unwrap();
    let last = report.last().unwrap();
    let k = last.step_index;
    let err = (last.state.as_vector() - &truth.states[k]).amax();
    assert!(err < 1e-2, "state error {err}");
    // The pulse shows up at the right sample.
    let peak = report
        .steps
        .iter()
        .max_by(|a, b| {
            a.input_estimate.values()[2]
                .abs()
                .total_cmp(&b.input_estimate.values()[2].abs())
        })
        .unwrap();
    assert_eq!(peak.step_index, 500);
}
