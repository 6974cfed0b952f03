use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use nqsmp::ansatz::{grad_log_psi, LogAmplitude, LookupAmplitude, RbmParameters};
use nqsmp::hamiltonians::Model;
use nqsmp::lattice::{enumerate_states, Boundary, LatticeSpec};
use nqsmp::precision::FloatFormat;
use nqsmp::rng::{hash2, unit_open};
use nqsmp::vmc::{
    condition_amplification, enumerated_energy, enumerated_samples, forces, gradient_dynamic_range,
    hermitian_eigenvalues, low_precision_forces, low_precision_local_energy, low_precision_log_derivatives,
    mc_error, s_matrix, sr_step, train, CMatrix, SamplingMode, TrainConfig,
};
use rand::SeedableRng;

fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn tfim(n: usize, h: f64) -> Model {
    Model::tfim(LatticeSpec::chain(n, Boundary::Periodic).unwrap(), 1.0, h).unwrap()
}

fn heisenberg(n: usize) -> Model {
    Model::heisenberg(LatticeSpec::chain(n, Boundary::Periodic).unwrap(), 1.0).unwrap()
}

fn gaussian(seed: u64, k: u64) -> f64 {
    let u1 = unit_open(hash2(seed, 2 * k));
    let u2 = unit_open(hash2(seed, 2 * k + 1));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn rayleigh_quotient(model: &Model, amp: &impl LogAmplitude) -> f64 {
    let h = model.dense_matrix().unwrap();
    let psi: Vec<Complex64> = enumerate_states(model.n_sites())
        .unwrap()
        .into_iter()
        .map(|x| amp.log_psi(x).unwrap().exp())
        .collect();
    let psi = DVector::from_vec(psi);
    let hc = h.map(|v| Complex64::new(v, 0.0));
    let num = psi.dotc(&(&hc * &psi));
    let den = psi.dotc(&psi);
    assert!((num / den).im.abs() < 1e-12);
    (num / den).re
}

fn exact_energy(params: &RbmParameters, model: &Model) -> f64 {
    enumerated_energy(model, params).unwrap().energy.re
}

fn random_unitary(seed: u64, p: usize) -> CMatrix {
    let m = DMatrix::from_fn(p, p, |i, j| {
        let k = (i * p + j) as u64;
        Complex64::new(gaussian(seed, 2 * k), gaussian(seed, 2 * k + 1))
    });
    m.qr().q()
}

fn random_hermitian(seed: u64, p: usize) -> CMatrix {
    let m = DMatrix::from_fn(p, p, |i, j| {
        let k = (i * p + j) as u64;
        Complex64::new(gaussian(seed, 2 * k), gaussian(seed, 2 * k + 1))
    });
    (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn random_vector(seed: u64, p: usize) -> Vec<Complex64> {
    (0..p as u64).map(|k| Complex64::new(gaussian(seed, 2 * k), gaussian(seed, 2 * k + 1))).collect()
}

#[test]
fn enumerated_energy_equals_rayleigh_quotient() {
    for (n, seed) in [(6usize, 1u64), (8, 2)] {
        let params = RbmParameters::random(n, n, 0.3, &mut rng(seed)).unwrap();
        for model in [tfim(n, 0.8), heisenberg(n)] {
            let enumerated = exact_energy(&params, &model);
            let reference = rayleigh_quotient(&model, &params);
            assert!((enumerated - reference).abs() <= 1e-10 * reference.abs().max(1.0), "{enumerated} vs {reference}");
        }
    }
}

#[test]
fn forces_match_finite_differences_of_the_energy() {
    let model = tfim(4, 0.7);
    let params = RbmParameters::random(4, 4, 0.3, &mut rng(5)).unwrap();
    let samples = enumerated_samples(&model, &params, |x| grad_log_psi(&params, x)).unwrap();
    let f = forces(&samples).unwrap();
    let flat = params.to_flat();
    let h = 1e-5;
    let scale = f.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for k in 0..flat.len() {
        let shifted = |dz: Complex64| {
            let mut p = params.clone();
            let mut v = flat.clone();
            v[k] += dz;
            p.set_flat(&v).unwrap();
            exact_energy(&p, &model)
        };
        let dr = (shifted(Complex64::new(h, 0.0)) - shifted(Complex64::new(-h, 0.0))) / (2.0 * h);
        let di = (shifted(Complex64::new(0.0, h)) - shifted(Complex64::new(0.0, -h))) / (2.0 * h);
        let fd = 0.5 * Complex64::new(dr, di);
        assert!((f[k] - fd).norm() <= 1e-6 * scale, "parameter {k}: {} vs {fd}", f[k]);
    }
}

#[test]
fn exact_eigenvector_has_zero_variance() {
    for model in [tfim(8, 1.0), tfim(6, 0.5), heisenberg(6)] {
        let gs = model.exact_ground_state().unwrap();
        let amp = LookupAmplitude::from_real_amplitudes(model.n_sites(), gs.vector.as_slice()).unwrap();
        let e = enumerated_energy(&model, &amp).unwrap();
        assert!(e.variance <= 1e-16, "{}", e.variance);
        assert!((e.energy.re - gs.energy).abs() < 1e-10);
    }
}

#[test]
fn geometric_tensor_is_positive_semidefinite() {
    let model = tfim(6, 1.0);
    let params = RbmParameters::random(6, 6, 0.4, &mut rng(7)).unwrap();
    let samples = enumerated_samples(&model, &params, |x| grad_log_psi(&params, x)).unwrap();
    let s = s_matrix(&samples).unwrap();
    assert!((&s - s.adjoint()).norm() < 1e-14);
    let eig = hermitian_eigenvalues(&s).unwrap();
    let top = *eig.last().unwrap();
    assert!(eig[0] >= -1e-12 * top, "{}", eig[0]);
    let f = forces(&samples).unwrap();
    let update = sr_step(&f, &s, 1e-3, 0.01).unwrap();
    assert!(update.residual < 1e-12, "{}", update.residual);
    assert!((update.kappa - update.max_eigenvalue / update.min_eigenvalue).abs() < 1e-6 * update.kappa);
    assert!(update.min_eigenvalue >= 1e-3 * (1.0 - 1e-9));
}

#[test]
fn exact_mode_training_lowers_the_energy() {
    for (model, seed) in [(tfim(6, 1.0), 3u64), (tfim(8, 0.5), 4), (heisenberg(6), 5)] {
        let mut config = TrainConfig::new(model.clone(), model.n_sites());
        config.sampling = SamplingMode::Exact;
        config.init_scale = 0.05;
        config.n_steps = 200;
        config.lambda = 1e-3;
        config.seed = seed;
        let log = train(config).unwrap();
        let energies: Vec<f64> = log.records.iter().map(|r| r.energy).collect();
        for w in energies.windows(51) {
            assert!(w[50] <= w[0] + 1e-10, "{} then {}", w[0], w[50]);
        }
        let e0 = model.exact_ground_state().unwrap().energy;
        assert!(*energies.last().unwrap() >= e0 - 1e-10);
        assert!(log.records.iter().all(|r| r.mc_error == 0.0 && r.sigma_hat == 0.0));
    }
}

#[test]
fn amplification_inequalities_on_random_systems() {
    let p = 12;
    for trial in 0..100u64 {
        let kappa_target = 10f64.powf(1.0 + 3.0 * trial as f64 / 99.0);
        let u = random_unitary(1000 + trial, p);
        let eig = DMatrix::from_diagonal(&DVector::from_fn(p, |k, _| {
            Complex64::new(kappa_target.powf(k as f64 / (p - 1) as f64), 0.0)
        }));
        let s = &u * eig * u.adjoint();
        let f = random_vector(2000 + trial, p);
        let df: Vec<Complex64> = random_vector(3000 + trial, p).iter().map(|z| z * 1e-3).collect();
        let mut ds = random_hermitian(4000 + trial, p);
        let norm = ds.clone().svd(false, false).singular_values.max();
        ds *= Complex64::new(0.3 / norm, 0.0);
        let report = condition_amplification(&s, &f, &df, &ds, 0.0).unwrap();
        assert!((report.kappa / kappa_target - 1.0).abs() < 1e-6, "{} vs {kappa_target}", report.kappa);
        assert!(report.holds_force && report.holds_matrix, "trial {trial}: {report:?}");
    }
}

#[test]
fn amplification_rejects_large_matrix_perturbations() {
    let s = CMatrix::identity(3, 3) * Complex64::new(2.0, 0.0);
    let f = vec![Complex64::new(1.0, 0.0); 3];
    let ds = CMatrix::identity(3, 3) * Complex64::new(2.5, 0.0);
    assert!(condition_amplification(&s, &f, &f, &ds, 0.0).is_err());
}

#[test]
fn mc_error_of_independent_normals() {
    for seed in 0..10u64 {
        let n = 10_000;
        let x: Vec<f64> = (0..n as u64).map(|k| 3.0 + 2.0 * gaussian(seed, k)).collect();
        let e = mc_error(&x).unwrap();
        assert!((e * (n as f64).sqrt() / 2.0 - 1.0).abs() < 0.05, "{e}");
    }
    assert!(mc_error(&[1.0]).is_err());
    assert!(mc_error(&[1.0, f64::NAN]).is_err());
    assert_eq!(mc_error(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
}

#[test]
fn markov_training_is_deterministic() {
    let mut config = TrainConfig::new(tfim(6, 1.0), 6);
    config.sampling = SamplingMode::markov(256, 6);
    config.n_steps = 15;
    config.seed = 42;
    config.record_forces = true;
    let a = train(config.clone()).unwrap();
    let b = train(config.clone()).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_params, b.final_params);
    assert_eq!(a.force_history.len(), 15);
    config.seed = 43;
    let c = train(config).unwrap();
    assert_ne!(a.final_params, c.final_params);
}

#[test]
fn heisenberg_training_stays_in_the_zero_magnetization_sector() {
    let mut config = TrainConfig::new(heisenberg(6), 6);
    config.sampling = SamplingMode::markov(256, 6);
    config.n_steps = 10;
    let log = train(config).unwrap();
    let e0 = heisenberg(6).exact_ground_state().unwrap().energy;
    assert!(log.records.iter().all(|r| r.energy.is_finite() && r.energy > e0 - 1.0));
}

#[test]
fn low_precision_ingredients_converge_to_double() {
    let model = tfim(6, 1.0);
    let params = RbmParameters::random(6, 6, 0.3, &mut rng(11)).unwrap();
    let samples = enumerated_samples(&model, &params, |x| grad_log_psi(&params, x)).unwrap();
    let reference = forces(&samples).unwrap();
    let scale = reference.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut errors = Vec::new();
    for fmt in [FloatFormat::F64, FloatFormat::F32, FloatFormat::F16, FloatFormat::BF16] {
        let f = low_precision_forces(&samples, fmt).unwrap();
        let err = f.iter().zip(&reference).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
        errors.push(err);
    }
    assert!(errors[0] < 1e-12);
    assert!(errors[0] <= errors[1] && errors[1] < errors[2] && errors[2] < errors[3], "{errors:?}");
    for x in enumerate_states(6).unwrap().into_iter().step_by(7) {
        let exact = nqsmp::vmc::local_energy(&model, &params, x).unwrap();
        let e32 = low_precision_local_energy(&model, &params, x, FloatFormat::F32).unwrap();
        assert!((e32 - exact).norm() < 1e-4 * exact.norm().max(1.0));
        let o = low_precision_log_derivatives(&params, x, FloatFormat::F32);
        let o64 = grad_log_psi(&params, x).unwrap();
        assert!(o.iter().zip(&o64).all(|(a, b)| (a - b).norm() < 1e-5));
    }
}

#[test]
fn dynamic_range_bands() {
    let history = vec![
        vec![Complex64::new(1.0, 0.0), Complex64::new(1e-6, 0.0)],
        vec![Complex64::new(0.0, 0.0), Complex64::new(1e5, 0.0)],
    ];
    let r = gradient_dynamic_range(&history).unwrap();
    assert_eq!(r.per_step[0].normal, 0.5);
    assert_eq!(r.per_step[0].subnormal, 0.5);
    assert_eq!(r.per_step[1].underflow, 0.5);
    assert_eq!(r.per_step[1].overflow, 0.5);
    assert_eq!(r.overall.normal, 0.25);
    assert_eq!(r.zeros, 1);
    assert_eq!(r.log2_histogram, vec![(-20, 1), (0, 1), (16, 1)]);
    assert!(gradient_dynamic_range(&[]).is_err());
}
