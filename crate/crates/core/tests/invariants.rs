use mvlab::bismut::bismut_nondegenerate;
use mvlab::coupling::girsanov_logweight;
use mvlab::ergodicity::{lyapunov_rho, sandwich_constant};
use mvlab::linalg::{decompose_noise, gramian, kalman_rank_index, matrix_exp, max_abs, psd_sqrt, SymMatrix};
use mvlab::measure::{
    assignment_cost, gaussian_kl, gaussian_w2sq, solve_assignment, wasserstein_2_modified, wasserstein_2_sq, wasserstein_k,
    EmpiricalMeasure, GaussianLaw,
};
use mvlab::presets::Preset;
use mvlab::rng::{NoisePlan, Stream};
use mvlab::sde::simulate_law_flow_with_tangents;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(n: usize, m: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-scale..scale, n * m).prop_map(move |v| DMatrix::from_vec(n, m, v))
}

fn psd(n: usize) -> impl Strategy<Value = SymMatrix> {
    matrix(n, n, 1.0).prop_map(|b| SymMatrix::symmetrized(&b * b.transpose()))
}

fn cloud(n: usize, dim: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec(-3.0..3.0f64, n * dim).prop_map(move |v| EmpiricalMeasure::uniform(v, dim).unwrap())
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psd_sqrt_of_square((n, r) in (1usize..=8).prop_flat_map(|n| (Just(n), psd(n)))) {
        let sq = SymMatrix::symmetrized(r.matrix() * r.matrix());
        let back = psd_sqrt(&sq).unwrap();
        prop_assert!(max_abs(&(back.matrix() - r.matrix())) <= 1e-9 * (1.0 + max_abs(r.matrix())), "n = {n}");
    }

    #[test]
    fn noise_decomposition_round_trip((b, lambda) in (1usize..=16).prop_flat_map(|n| (psd(n), 0.1..2.0f64))) {
        let n = b.n();
        let a = SymMatrix::symmetrized(b.matrix() + DMatrix::identity(n, n) * (2.0 * lambda * lambda));
        let s = decompose_noise(&a, lambda).unwrap();
        let back = s.matrix() * s.matrix() + DMatrix::identity(n, n) * (lambda * lambda);
        prop_assert!(max_abs(&(back - a.matrix())) <= 1e-9 * (1.0 + max_abs(a.matrix())));
    }

    #[test]
    fn gramian_psd_and_definite_iff_kalman(
        (a, m, t) in (1usize..=3, 1usize..=2).prop_flat_map(|(md, d)| (matrix(md, md, 1.0), matrix(md, d, 1.0), 0.1..2.0f64))
    ) {
        let q = gramian(&a, &m, t).unwrap();
        let qm = q.matrix();
        prop_assert!(max_abs(&(qm - qm.transpose())) == 0.0);
        let lmin = q.min_eigenvalue();
        prop_assert!(lmin >= -1e-10 * (1.0 + max_abs(qm)));
        if kalman_rank_index(&a, &m).is_some() {
            prop_assert!(lmin > 0.0);
        }
    }

    #[test]
    fn gramian_singular_without_rank(a in matrix(2, 2, 1.0), t in 0.1..2.0f64) {
        // M = 0 spans nothing
        let m = DMatrix::zeros(2, 1);
        prop_assert!(kalman_rank_index(&a, &m).is_none());
        prop_assert!(gramian(&a, &m, t).unwrap().min_eigenvalue().abs() <= 1e-12);
    }

    #[test]
    fn exp_group_law((a, s, t) in (1usize..=6).prop_flat_map(|n| (matrix(n, n, 2.0 / n as f64), -1.0..1.0f64, -1.0..1.0f64))) {
        let lhs = matrix_exp(&a, s + t);
        let rhs = matrix_exp(&a, s) * matrix_exp(&a, t);
        prop_assert!(max_abs(&(lhs - rhs)) <= 1e-9);
    }

    #[test]
    fn wasserstein_is_a_metric((x, y, z) in (1usize..=12, 1usize..=3).prop_flat_map(|(n, d)| (cloud(n, d), cloud(n, d), cloud(n, d)))) {
        for k in [1.0, 2.0] {
            let xy = wasserstein_k(&x, &y, k).unwrap();
            prop_assert_eq!(xy, wasserstein_k(&y, &x, k).unwrap());
            let xz = wasserstein_k(&x, &z, k).unwrap();
            let zy = wasserstein_k(&z, &y, k).unwrap();
            prop_assert!(xy <= xz + zy + 1e-9);
            prop_assert!(wasserstein_k(&x, &x, k).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn assignment_matches_brute_force((n, cost) in (1usize..=6).prop_flat_map(|n| (Just(n), prop::collection::vec(0.0..10.0f64, n * n)))) {
        let perm = solve_assignment(&cost, n);
        let best = permutations(n).iter().map(|p| assignment_cost(&cost, n, p)).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(assignment_cost(&cost, n, &perm), best);
    }

    #[test]
    fn modified_distance_sandwich(
        (x, y, t, big_t) in (1usize..=8).prop_flat_map(|n| (cloud(n, 3), cloud(n, 3), 0.05..1.0f64, 1.0..3.0f64))
    ) {
        let t = t * big_t;
        let w2 = wasserstein_2_sq(&x, &y).unwrap();
        let wt = wasserstein_2_modified(&x, &y, t, 1).unwrap().powi(2);
        let tt = big_t.max(1.0).powi(2);
        prop_assert!(w2 / tt <= wt * (1.0 + 1e-12) + 1e-12);
        prop_assert!(wt <= tt / (t * t) * w2 * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn lyapunov_sandwich(x in prop::collection::vec(-5.0..5.0f64, 3), r in 0.5..4.0f64, r0 in 0.05..0.9f64) {
        let m = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c0 = sandwich_constant(r, r0, &m).unwrap();
        let rho = lyapunov_rho(&x, r, r0, &m).unwrap();
        let n2: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!(c0 * n2 <= rho * (1.0 + 1e-12) + 1e-12);
        prop_assert!(rho <= n2 / c0 * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn gaussian_kl_nonnegative((p, q) in (1usize..=4).prop_flat_map(|n| (
        (prop::collection::vec(-2.0..2.0f64, n), psd(n)),
        (prop::collection::vec(-2.0..2.0f64, n), psd(n)),
    ))) {
        let law = |(m, c): (Vec<f64>, SymMatrix)| {
            let n = m.len();
            GaussianLaw::new(DVector::from_vec(m), SymMatrix::symmetrized(c.matrix() + DMatrix::identity(n, n) * 0.1)).unwrap()
        };
        let (p, q) = (law(p), law(q));
        prop_assert!(gaussian_kl(&p, &q).unwrap() >= -1e-12);
        prop_assert!(gaussian_kl(&p, &p).unwrap().abs() <= 1e-10);
        prop_assert!(gaussian_w2sq(&p, &q).unwrap() >= -1e-12);
    }

    #[test]
    fn logweight_is_finite_and_weight_positive(
        eta in prop::collection::vec(-3.0..3.0f64, 20),
        dw in prop::collection::vec(-0.3..0.3f64, 20),
        lambda in 0.2..3.0f64,
    ) {
        let lr = girsanov_logweight(&eta, &dw, lambda, 0.01).unwrap();
        prop_assert!(lr.is_finite());
        prop_assert!(lr.exp() > 0.0);
    }

    #[test]
    fn noise_is_a_pure_function(seed in any::<u64>(), lane in 0u64..1000, step in 0usize..1000) {
        let plan = NoisePlan::new(seed, 0.01);
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        plan.increment(Stream::W, lane, step, &mut a);
        plan.increment(Stream::W, lane, step, &mut b);
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn tangent_flow_is_linear_in_phi(a in -2.0..2.0f64, b in -2.0..2.0f64, seed in any::<u64>()) {
        let preset = Preset::by_name("mean-repelled").unwrap();
        let model = preset.model();
        let mu = GaussianLaw::new(DVector::zeros(2), SymMatrix::identity(2)).unwrap().sample(32, seed, Stream::INITIAL).unwrap();
        let plan = NoisePlan::new(seed, 0.01);
        let p1 = |x: &[f64]| vec![1.0, x[0]];
        let p2 = |x: &[f64]| vec![x[1].sin(), -0.5];
        let comb = move |x: &[f64]| {
            let (u, v) = (p1(x), p2(x));
            vec![a * u[0] + b * v[0], a * u[1] + b * v[1]]
        };
        let (_, t1) = simulate_law_flow_with_tangents(model, &mu, &plan, 20, &p1).unwrap();
        let (_, t2) = simulate_law_flow_with_tangents(model, &mu, &plan, 20, &p2).unwrap();
        let (_, tc) = simulate_law_flow_with_tangents(model, &mu, &plan, 20, &comb).unwrap();
        prop_assert_eq!(tc.tangents[0].clone(), mu.points().chunks(2).flat_map(comb).collect::<Vec<_>>());
        for j in 0..=20 {
            for k in 0..tc.tangents[j].len() {
                let want = a * t1.tangents[j][k] + b * t2.tangents[j][k];
                prop_assert!((tc.tangents[j][k] - want).abs() <= 1e-9 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn bismut_estimate_is_linear_in_phi(a in -3.0..3.0f64, seed in any::<u64>()) {
        let preset = Preset::by_name("linear-ou").unwrap();
        let model = preset.model();
        let mu = GaussianLaw::new(DVector::zeros(2), SymMatrix::identity(2)).unwrap().sample(64, seed, Stream::INITIAL).unwrap();
        let plan = NoisePlan::new(seed, 0.02);
        let phi = |x: &[f64]| vec![1.0, 0.5 * x[0]];
        let scaled = move |x: &[f64]| phi(x).into_iter().map(|v| a * v).collect();
        let f = |x: &[f64]| x[0] + x[1] * x[1];
        let e1 = bismut_nondegenerate(model, &mu, &phi, 0.5, &plan, 64).unwrap().estimate(&f);
        let ea = bismut_nondegenerate(model, &mu, &scaled, 0.5, &plan, 64).unwrap().estimate(&f);
        prop_assert!((ea.value - a * e1.value).abs() <= 1e-9 * (1.0 + e1.value.abs()));
    }
}
