use pdomd::geometry::{
    exponentiated_gradient_step, mirror_step, mix_toward_uniform, numeric_prox_step, pushback_check, Affine,
};
use pdomd::{DecisionSet, Geometry};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 1000, ..ProptestConfig::default() }
}

fn normalize(w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Pairs of strictly positive simplex points of a shared dimension in `2..=10`.
fn simplex_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=10).prop_flat_map(|d| {
        (prop::collection::vec(1e-3..1.0f64, d), prop::collection::vec(1e-3..1.0f64, d))
            .prop_map(|(a, b)| (normalize(a), normalize(b)))
    })
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn l2_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn pinsker((p, q) in simplex_pair()) {
        let kl = Geometry::NegativeEntropy.divergence(&p, &q).unwrap();
        let tv = l1(&p, &q);
        prop_assert!(kl >= 0.5 * tv * tv - 1e-12, "kl {kl} < {}", 0.5 * tv * tv);
    }

    #[test]
    fn entropy_is_strongly_convex_in_l1((p, q) in simplex_pair()) {
        let geom = Geometry::NegativeEntropy;
        let d = geom.divergence(&p, &q).unwrap();
        let n = geom.primal_norm(&p.iter().zip(&q).map(|(a, b)| a - b).collect::<Vec<_>>());
        prop_assert!(d >= geom.modulus() * n * n / 2.0 - 1e-12);
    }

    #[test]
    fn euclidean_is_strongly_convex(
        (x, y) in (1usize..=10).prop_flat_map(|d| {
            (prop::collection::vec(-5.0..5.0f64, d), prop::collection::vec(-5.0..5.0f64, d))
        })
    ) {
        let geom = Geometry::Euclidean;
        let d = geom.divergence(&x, &y).unwrap();
        let n = geom.primal_norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        prop_assert!(d >= geom.modulus() * n * n / 2.0 - 1e-12);
        prop_assert!((d - 0.5 * l2_sq(&x, &y)).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn pushback_on_simplex(
        (y, z, c) in (2usize..=10).prop_flat_map(|d| (
            prop::collection::vec(1e-3..1.0f64, d).prop_map(normalize),
            prop::collection::vec(0.0..1.0f64, d).prop_map(|w| normalize(w.into_iter().map(|v| v + 1e-9).collect())),
            prop::collection::vec(-10.0..10.0f64, d),
        )),
        offset in -5.0..5.0f64,
        alpha in 0.1..100.0f64,
    ) {
        let set = DecisionSet::simplex(y.len()).unwrap();
        let f = Affine { coeffs: c, offset };
        let report = pushback_check(Geometry::NegativeEntropy, &set, &f, &y, alpha, &z).unwrap();
        prop_assert!(report.residual >= -1e-9, "residual {}", report.residual);
        prop_assert!(report.holds);
    }

    #[test]
    fn pushback_on_box(
        (y, z, c) in (1usize..=10).prop_flat_map(|d| (
            prop::collection::vec(-1.0..2.0f64, d),
            prop::collection::vec(-1.0..2.0f64, d),
            prop::collection::vec(-10.0..10.0f64, d),
        )),
        alpha in 0.1..100.0f64,
    ) {
        let set = DecisionSet::uniform_box(y.len(), -1.0, 2.0).unwrap();
        let f = Affine { coeffs: c, offset: 0.0 };
        let report = pushback_check(Geometry::Euclidean, &set, &f, &y, alpha, &z).unwrap();
        prop_assert!(report.holds, "residual {}", report.residual);
    }

    #[test]
    fn mixing_costs_at_most_theta_log_d(
        (m1, m2) in simplex_pair(),
        theta in 1e-6..0.5f64,
    ) {
        let geom = Geometry::NegativeEntropy;
        let d = m1.len() as f64;
        let mixed = mix_toward_uniform(&m2, theta).unwrap();
        let before = geom.divergence(&m1, &m2).unwrap();
        let after = geom.divergence(&m1, &mixed).unwrap();
        prop_assert!(after - before <= theta * d.ln() + 1e-9);
        prop_assert!(after <= (d / theta).ln() + 1e-9);
        prop_assert!(mixed.iter().all(|&v| v >= theta / d * (1.0 - 1e-12)));
    }

    #[test]
    fn mixing_bound_allows_boundary_comparators(
        (d, idx) in (2usize..=10).prop_flat_map(|d| (Just(d), 0..d)),
        m2 in prop::collection::vec(1e-3..1.0f64, 10),
        theta in 1e-6..0.5f64,
    ) {
        let mut vertex = vec![0.0; d];
        vertex[idx] = 1.0;
        let m2 = normalize(m2[..d].to_vec());
        let mixed = mix_toward_uniform(&m2, theta).unwrap();
        let after = Geometry::NegativeEntropy.divergence(&vertex, &mixed).unwrap();
        prop_assert!(after <= (d as f64 / theta).ln() + 1e-9);
    }

    #[test]
    fn entropic_closed_form_matches_numeric(
        (y, p) in (2usize..=10).prop_flat_map(|d| (
            prop::collection::vec(1e-3..1.0f64, d).prop_map(normalize),
            prop::collection::vec(-20.0..20.0f64, d),
        )),
        alpha in 0.5..50.0f64,
    ) {
        let set = DecisionSet::simplex(y.len()).unwrap();
        let scaled: Vec<f64> = p.iter().map(|v| v / alpha).collect();
        let closed = exponentiated_gradient_step(&y, &scaled).unwrap();
        let numeric = numeric_prox_step(Geometry::NegativeEntropy, &set, &y, &p, alpha).unwrap();
        let err = closed.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-8, "ℓ∞ gap {err}");
    }

    #[test]
    fn euclidean_clip_matches_numeric(
        (y, p) in (1usize..=10).prop_flat_map(|d| (
            prop::collection::vec(0.0..1.0f64, d),
            prop::collection::vec(-20.0..20.0f64, d),
        )),
        alpha in 0.5..50.0f64,
    ) {
        let set = DecisionSet::uniform_box(y.len(), 0.0, 1.0).unwrap();
        let closed = mirror_step(Geometry::Euclidean, &set, &y, &p, alpha).unwrap();
        let numeric = numeric_prox_step(Geometry::Euclidean, &set, &y, &p, alpha).unwrap();
        let err = closed.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-8, "ℓ∞ gap {err}");
    }
}
