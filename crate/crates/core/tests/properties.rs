use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use decopt::algorithms::{self, AlgoParams, AlgorithmKind, Network};
use decopt::analysis::{error_vector, relative_error};
use decopt::block::NodeBlock;
use decopt::config::load_config;
use decopt::datasets::{partition, quadratic_solution, synth_logistic_samples, synth_quadratic, SampleSet, SparseRow};
use decopt::problems::{finite_difference_check, LogisticProblem, Oracle, Regularizer};
use decopt::runner::{self, Termination};
use decopt::topology::{eigenvalues_desc, generate_connected_graph, metropolis_weights};

fn gaussian(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn logistic(reg: Regularizer, seed: u64) -> LogisticProblem {
    let samples = synth_logistic_samples(40, 6, seed);
    LogisticProblem::new(partition(&samples, 4).unwrap(), 6, reg, 0.3).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixing_matrix_is_symmetric_stochastic(n in 2usize..25, density in 0.0f64..=1.0, seed in 0u64..1000) {
        let g = generate_connected_graph(n, density, seed).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let m = w.weights();
        prop_assert!((m - m.transpose()).amax() <= 1e-12);
        let ones = m * DVector::from_element(n, 1.0);
        prop_assert!(ones.iter().all(|r| (r - 1.0).abs() <= 1e-12));
        prop_assert!(w.sigma() < 1.0);
    }

    #[test]
    fn mixing_contracts_towards_the_average(n in 2usize..20, density in 0.0f64..=1.0, seed in 0u64..1000) {
        let g = generate_connected_graph(n, density, seed).unwrap();
        let w = metropolis_weights(&g).unwrap();
        for k in 0..5 {
            let x = NodeBlock::from_matrix(DMatrix::from_vec(3, n, gaussian(seed * 10 + k, 3 * n)));
            let lhs = x.mixed(w.weights()).deviation().norm();
            prop_assert!(lhs <= w.sigma() * x.deviation().norm() + 1e-10);
        }
    }

    #[test]
    fn mixing_spectrum_is_in_unit_interval(n in 2usize..25, density in 0.0f64..=1.0, seed in 0u64..1000) {
        let g = generate_connected_graph(n, density, seed).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let eig = eigenvalues_desc(w.weights()).unwrap();
        prop_assert!((eig[0] - 1.0).abs() <= 1e-10);
        prop_assert!(eig.iter().all(|&l| l > -1.0 - 1e-10 && l <= 1.0 + 1e-10));
    }

    #[test]
    fn gradients_match_finite_differences(seed in 0u64..500, node in 0usize..4) {
        let z = gaussian(seed, 6);
        let quad = synth_quadratic(6, 30.0, 4, seed).unwrap();
        prop_assert!(finite_difference_check(&quad, node, &z, 1e-5) <= 1e-5);
        for reg in [Regularizer::L2, Regularizer::Nonconvex] {
            prop_assert!(finite_difference_check(&logistic(reg, seed), node, &z, 1e-5) <= 1e-5);
        }
    }

    #[test]
    fn strong_convexity_and_lipschitz_witnesses(seed in 0u64..500, node in 0usize..4) {
        let z = gaussian(seed, 6);
        let zt: Vec<f64> = gaussian(seed + 7919, 6).iter().map(|v| 3.0 * v).collect();
        let quad = synth_quadratic(6, 30.0, 4, seed).unwrap();
        let l2 = logistic(Regularizer::L2, seed);
        let ncvx = logistic(Regularizer::Nonconvex, seed);
        for (oracle, convex) in [(&quad as &dyn Oracle, true), (&l2, true), (&ncvx, false)] {
            let c = oracle.smoothness();
            let (g, gt) = (oracle.local_gradient(node, &z), oracle.local_gradient(node, &zt));
            prop_assert!(dist(&g, &gt) <= c.l * dist(&z, &zt) + 1e-9);
            if convex {
                let lin: f64 = g.iter().zip(zt.iter().zip(&z)).map(|(gi, (a, b))| gi * (a - b)).sum();
                let lower = oracle.local_value(node, &z) + lin + 0.5 * c.mu * dist(&z, &zt).powi(2);
                prop_assert!(oracle.local_value(node, &zt) >= lower - 1e-9);
            }
        }
    }

    #[test]
    fn partition_is_an_exact_cover(samples in 1usize..80, nodes in 1usize..12, seed in 0u64..100) {
        prop_assume!(nodes <= samples);
        let set = synth_logistic_samples(samples, 3, seed);
        let parts = partition(&set, nodes).unwrap();
        prop_assert_eq!(parts.len(), nodes);
        prop_assert!(parts.iter().all(|p| !p.is_empty()));
        let rows: Vec<SparseRow> = parts.iter().flat_map(|p| p.rows().to_vec()).collect();
        let labels: Vec<f64> = parts.iter().flat_map(|p| p.labels().to_vec()).collect();
        prop_assert_eq!(SampleSet::new(rows, labels, 3).unwrap(), set);
    }

    #[test]
    fn trackers_preserve_the_gradient_average(seed in 0u64..200, kind_ix in 0usize..4) {
        let kind = [AlgorithmKind::Gt, AlgorithmKind::Abm, AlgorithmKind::Ndcg, AlgorithmKind::Dmbfgs][kind_ix];
        let q = synth_quadratic(5, 10.0, 6, seed).unwrap();
        let g = generate_connected_graph(6, 0.4, seed).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let net = Network::new(&q, w.weights());
        let mut params = AlgoParams::with_alpha(0.1 / q.smoothness().l);
        params.beta_fixed = 0.2;
        let x0 = NodeBlock::from_matrix(DMatrix::from_vec(5, 6, gaussian(seed, 30)));
        let mut s = algorithms::init(kind, x0, &net, &params).unwrap();
        for _ in 0..50 {
            algorithms::step(kind, &mut s, &net, &params).unwrap();
            let mg = s.g.mean();
            prop_assert!((s.v.mean() - &mg).norm() <= 1e-10 * (1.0 + mg.norm()));
        }
    }
}

#[test]
fn synthetic_condition_number_is_realized() {
    let spectrum = |a: &DMatrix<f64>| {
        let e = a.clone().symmetric_eigen().eigenvalues;
        (e.min(), e.max())
    };
    let single = synth_quadratic(12, 250.0, 1, 4).unwrap();
    let (lo, hi) = spectrum(&single.matrices()[0]);
    assert!((hi / lo / 250.0 - 1.0).abs() <= 1e-6);

    let many = synth_quadratic(12, 250.0, 5, 4).unwrap();
    let (lo, hi) = many
        .matrices()
        .iter()
        .map(spectrum)
        .fold((f64::INFINITY, 0.0f64), |(a, b), (l, h)| (a.min(l), b.max(h)));
    assert!(hi / lo >= 250.0 * (1.0 - 1e-6));
}

#[test]
fn global_gradient_matches_averaged_quadratic() {
    let q = synth_quadratic(7, 20.0, 5, 9).unwrap();
    let z = gaussian(1, 7);
    let a_bar = q.matrices().iter().fold(DMatrix::zeros(7, 7), |acc, a| acc + a) / 5.0;
    let b_bar = q.offsets().iter().fold(DVector::zeros(7), |acc, b| acc + b) / 5.0;
    let expected = a_bar * DVector::from_column_slice(&z) + b_bar;
    let got = q.global_gradient(&z);
    assert!(dist(&got, expected.as_slice()) <= 1e-12 * (1.0 + expected.norm()));
}

#[test]
fn error_vector_vanishes_exactly_at_the_minimizer() {
    let q = synth_quadratic(6, 10.0, 4, 2).unwrap();
    let z_star = quadratic_solution(&q).unwrap().z_star;
    let at = NodeBlock::replicate(4, &z_star);
    let v = algorithms::init(AlgorithmKind::Gt, at.clone(), &Network::new(&q, &DMatrix::from_element(4, 4, 0.25)), &AlgoParams::default())
        .unwrap()
        .v;
    assert!(relative_error(&at, &z_star) <= 1e-12);
    assert!(error_vector(&at, &v, &q, &z_star)[1] <= 1e-12);

    let mut off = z_star.clone();
    off[0] += 0.1;
    let shifted = NodeBlock::replicate(4, &off);
    assert!(relative_error(&shifted, &z_star) > 0.0);
    assert!(error_vector(&shifted, &v, &q, &z_star)[1] > 0.0);
}

const DMBFGS: &str = r#"
[algorithm]
name = "dmbfgs"
alpha = 0.05

[problem.synthetic]
p = 20
kappa = 50.0

[network]
n = 8
density = 0.5

[run]
max_iters = 400
seed = 5
check_theory = true
metrics = ["relative_error"]
"#;

#[test]
fn quasi_newton_eigenvalues_stay_in_the_envelope() {
    let config = load_config(DMBFGS).unwrap();
    let result = runner::run(&config).unwrap();
    let env = result.report.unwrap().hessian_envelope.unwrap();
    assert!(env.total > 0);
    assert_eq!(env.satisfied, env.total);
}

#[test]
fn termination_matches_the_trace_tail() {
    let mut config = load_config(DMBFGS).unwrap();
    config.run.check_theory = false;
    config.run.tol_relative = Some(1e-6);
    let r = runner::run(&config).unwrap();
    assert_eq!(r.termination, Termination::Tolerance);
    assert!(r.final_row().relative_error.unwrap() <= 1e-6);
    let rows = &r.trace.rows;
    assert!(rows[..rows.len() - 1].iter().all(|row| row.relative_error.unwrap() > 1e-6));
    assert!(r.iterations <= config.run.max_iters);

    config.run.tol_relative = None;
    config.run.max_iters = 30;
    let r = runner::run(&config).unwrap();
    assert_eq!(r.termination, Termination::Budget);
    assert_eq!(r.iterations, 30);
}
