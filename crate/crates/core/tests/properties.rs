use proptest::prelude::*;
use slowfast::analysis::{ks_statistic, wasserstein1};
use slowfast::switching::{
    aggregated_generator, check_weak_irreducibility, validate_generator, ClassPartition, GeneratorSchedule,
    TwoScaleGenerator,
};
use slowfast::Matrix64;

fn sample(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, n)
}

/// Generator with rates in `[0, 4]` and a positive cycle, so it is
/// irreducible.
fn generator(max_n: usize) -> impl Strategy<Value = Matrix64> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(0.0..4.0f64, n * n).prop_map(move |rates| {
            let mut q = Matrix64::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let floor = if j == (i + 1) % n { 0.1 } else { 0.0 };
                        q[(i, j)] = rates[i * n + j] + floor;
                    }
                }
                let s: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
                q[(i, i)] = -s;
            }
            q
        })
    })
}

proptest! {
    #[test]
    fn w1_is_a_symmetric_metric((a, b, c) in (1usize..40).prop_flat_map(|n| (sample(n), sample(n), sample(n)))) {
        let ab = wasserstein1(&a, &b).unwrap();
        prop_assert!((ab - wasserstein1(&b, &a).unwrap()).abs() <= 1e-9);
        prop_assert!(wasserstein1(&a, &a).unwrap() == 0.0);
        prop_assert!(ab <= wasserstein1(&a, &c).unwrap() + wasserstein1(&c, &b).unwrap() + 1e-9);
    }

    #[test]
    fn w1_is_shift_equivariant(a in sample(25), shift in -10.0..10.0f64) {
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        prop_assert!((wasserstein1(&a, &b).unwrap() - shift.abs()).abs() <= 1e-9);
    }

    #[test]
    fn ks_is_symmetric_and_bounded(a in sample(17), b in sample(23)) {
        let d = ks_statistic(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_statistic(&b, &a).unwrap());
        prop_assert_eq!(ks_statistic(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn stationary_vectors_are_distributions(q in generator(6)) {
        let nu = check_weak_irreducibility(&q).unwrap();
        prop_assert!(nu.iter().all(|&v| v >= 0.0));
        prop_assert!((nu.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let scale = q.max_abs();
        prop_assert!(q.vec_mul(&nu).iter().all(|v| v.abs() <= 1e-10 * scale.max(1.0)));
    }

    #[test]
    fn aggregated_generators_are_generators(a in generator(3), b in generator(3), slow in generator(6)) {
        let (m1, m2) = (a.rows(), b.rows());
        let m = m1 + m2;
        let mut fast = Matrix64::zeros(m, m);
        for i in 0..m1 { for j in 0..m1 { fast[(i, j)] = a[(i, j)]; } }
        for i in 0..m2 { for j in 0..m2 { fast[(m1 + i, m1 + j)] = b[(i, j)]; } }
        let slow = if slow.rows() == m { slow } else { Matrix64::zeros(m, m) };
        let gen = TwoScaleGenerator::new(
            GeneratorSchedule::constant(fast).unwrap(),
            GeneratorSchedule::constant(slow).unwrap(),
            ClassPartition::new(vec![m1, m2]).unwrap(),
        ).unwrap();
        let q_bar = aggregated_generator(&gen, 0.0).unwrap();
        prop_assert_eq!(q_bar.rows(), 2);
        prop_assert!(validate_generator(&q_bar).is_ok());
    }
}
