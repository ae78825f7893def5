use lsvi_core::function_space::{ClassKind, FunctionClass, FunctionHandle, LabeledSet, StateActionSet, WidthMethod};
use lsvi_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

fn unit_features<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
            let scale = rng.gen_range(0.2..1.0) / norm;
            v.iter().map(|x| x * scale).collect()
        })
        .collect()
}

fn random_z<R: Rng>(ns: usize, na: usize, n: usize, rng: &mut R) -> StateActionSet {
    let mut z = StateActionSet::new();
    for _ in 0..n {
        z.insert(rng.gen_range(0..ns), rng.gen_range(0..na), rng.gen_range(1..4));
    }
    z
}

#[test]
fn linear_evaluate_matches_manual_dot_product() {
    let features = vec![vec![0.2, -0.3, 0.5], vec![0.6, 0.0, -0.1]];
    let class = FunctionClass::linear(features, 2, 1, 3).unwrap();
    let f = FunctionHandle {
        class: ClassKind::Linear,
        params: vec![1.5, 2.0, 3.0],
    };
    let manual0 = 1.5 * 0.2 + 2.0 * -0.3 + 3.0 * 0.5;
    let manual1 = 1.5 * 0.6 + 2.0 * 0.0 + 3.0 * -0.1;
    assert!((class.evaluate(&f, 0, 0) - manual0).abs() < 1e-15);
    assert!((class.evaluate(&f, 1, 0) - manual1).abs() < 1e-15);
}

#[test]
fn evaluation_is_clipped_to_range() {
    let class = FunctionClass::linear(vec![vec![1.0], vec![-1.0]], 2, 1, 2).unwrap();
    let f = FunctionHandle {
        class: ClassKind::Linear,
        params: vec![4.0],
    };
    assert_eq!(class.evaluate(&f, 0, 0), 3.0);
    assert_eq!(class.evaluate(&f, 1, 0), 0.0);
}

#[test]
fn linear_erm_recovers_generating_weights() {
    let mut rng = seeded(1);
    let features = unit_features(8, 2, &mut rng);
    let class = FunctionClass::linear(features, 4, 2, 3).unwrap();
    let w_star = FunctionHandle {
        class: ClassKind::Linear,
        params: vec![1.2, -0.7],
    };
    let mut data = LabeledSet::new();
    for i in 0..40 {
        let (s, a) = (i % 4, (i / 4) % 2);
        data.push(s, a, class.raw_value(&w_star, s, a));
    }
    let fit = class.erm_fit(&data).unwrap();
    assert!(fit.objective <= 1e-8);
    for (w, t) in fit.handle.params.iter().zip(&w_star.params) {
        assert!((w - t).abs() < 1e-6);
    }
}

#[test]
fn sparse_erm_matches_support_enumeration() {
    let mut rng = seeded(2);
    let features: Vec<Vec<f64>> = (0..12)
        .map(|_| (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let class = FunctionClass::sparse_linear(features, 6, 2, 2, 2).unwrap();
    let mut w = vec![0.0; 10];
    w[3] = 1.5;
    w[7] = -0.8;
    let w_star = FunctionHandle {
        class: ClassKind::SparseLinear,
        params: w,
    };
    let mut data = LabeledSet::new();
    for s in 0..6 {
        for a in 0..2 {
            for _ in 0..3 {
                data.push(s, a, class.raw_value(&w_star, s, a));
            }
        }
    }
    let exact = class.sparse_erm_by_enumeration(&data).unwrap();
    assert!(exact.objective < 1e-12);
    for (a, b) in exact.handle.params.iter().zip(&w_star.params) {
        assert!((a - b).abs() < 1e-6);
    }
    let iht = class.erm_fit(&data).unwrap();
    assert!((iht.objective - exact.objective).abs() <= 1e-6);
    class.check_member(&iht.handle).unwrap();
}

#[test]
fn erm_beats_random_members() {
    let mut rng = seeded(3);
    let classes = vec![
        FunctionClass::tabular(3, 2, 2),
        FunctionClass::linear(unit_features(6, 3, &mut rng), 3, 2, 2).unwrap(),
        FunctionClass::sparse_linear(unit_features(6, 5, &mut rng), 3, 2, 2, 1).unwrap(),
    ];
    for class in classes {
        let mut data = LabeledSet::new();
        for _ in 0..30 {
            data.push(rng.gen_range(0..3), rng.gen_range(0..2), rng.gen_range(0.0..5.0));
        }
        let fit = class.erm_fit(&data).unwrap();
        class.check_member(&fit.handle).unwrap();
        for _ in 0..100 {
            let g = class.random_member(&mut rng);
            assert!(fit.objective <= class.erm_objective(&g, &data) + 1e-9, "{:?}", class.kind());
        }
    }
}

#[test]
fn erm_is_no_worse_than_generating_function() {
    let mut rng = seeded(4);
    let class = FunctionClass::linear(unit_features(6, 3, &mut rng), 3, 2, 2).unwrap();
    for _ in 0..20 {
        let g = class.random_member(&mut rng);
        let mut data = LabeledSet::new();
        for _ in 0..25 {
            let (s, a) = (rng.gen_range(0..3), rng.gen_range(0..2));
            data.push(s, a, class.raw_value(&g, s, a) + rng.gen_range(-0.3..0.3));
        }
        let fit = class.erm_fit(&data).unwrap();
        assert!(fit.objective <= class.erm_objective(&g, &data) + 1e-9);
    }
}

#[test]
fn dataset_norm_matches_naive_loop() {
    let mut rng = seeded(5);
    let class = FunctionClass::tabular(4, 3, 3);
    for _ in 0..20 {
        let f = class.random_member(&mut rng);
        let g = class.random_member(&mut rng);
        let pairs: Vec<(usize, usize)> = (0..30).map(|_| (rng.gen_range(0..4), rng.gen_range(0..3))).collect();
        let z: StateActionSet = pairs.iter().copied().collect();
        let naive: f64 = pairs
            .iter()
            .map(|&(s, a)| (class.evaluate(&f, s, a) - class.evaluate(&g, s, a)).powi(2))
            .sum();
        assert!((class.dataset_norm(&f, &g, &z).powi(2) - naive).abs() < 1e-9);
    }
}

#[test]
fn tabular_cover_matches_explicit_grid() {
    let class = FunctionClass::tabular(2, 2, 1);
    let formula = class.log_covering_number_f(1.0).unwrap();
    assert!((formula - 4.0 * 3f64.ln()).abs() < 1e-12);
    // {0, 1, 2}^4 covers [0, 2]^4 in sup norm at radius 1 and has 81 points.
    let grid = [0.0, 1.0, 2.0];
    let mut rng = seeded(6);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..=2.0)).collect();
        assert!(x.iter().all(|v| grid.iter().any(|g| (v - g).abs() <= 1.0)));
    }
    assert!((81f64.ln() - formula).abs() < 1e-12);
}

#[test]
fn tabular_cover_at_coarse_resolution_is_positive() {
    let class = FunctionClass::tabular(3, 2, 2);
    let v = class.log_covering_number_f(3.0).unwrap();
    assert!(v > 0.0);
    assert!((v - 6.0 * 2f64.ln()).abs() < 1e-12);
}

#[test]
fn linear_cover_gains_ln2_per_halving() {
    let class = FunctionClass::linear(vec![vec![1.0]], 1, 1, 2).unwrap();
    let a = class.log_covering_number_f(1e-3).unwrap();
    let b = class.log_covering_number_f(5e-4).unwrap();
    assert!(((b - a) - 2f64.ln()).abs() < 1e-4);
}

#[test]
fn state_action_cover_contains_explicit_disc_cover() {
    let class = FunctionClass::linear(vec![vec![1.0, 0.0]], 1, 1, 2).unwrap();
    let eps = 0.5;
    let formula = class.log_covering_number_sa(eps).unwrap();
    assert!((formula - 2.0 * 13f64.ln()).abs() < 1e-12);
    // Square grid with diagonal 2 eps; every disc point lies within eps of a node.
    let step = eps * 2f64.sqrt();
    let n = (1.0 / step).ceil() as i64 + 1;
    let nodes: Vec<(f64, f64)> = (-n..=n)
        .flat_map(|i| (-n..=n).map(move |j| (i as f64 * step, j as f64 * step)))
        .filter(|(x, y)| (x * x + y * y).sqrt() <= 1.0 + eps)
        .collect();
    let mut rng = seeded(7);
    for _ in 0..2000 {
        let r = rng.gen_range(0.0..1.0f64).sqrt();
        let t = rng.gen_range(0.0..std::f64::consts::TAU);
        let (x, y) = (r * t.cos(), r * t.sin());
        assert!(nodes.iter().any(|(a, b)| ((x - a).powi(2) + (y - b).powi(2)).sqrt() <= eps + 1e-12));
    }
    assert!((nodes.len() as f64).ln() <= formula);
}

#[test]
fn covering_rejects_nonpositive_resolution() {
    let class = FunctionClass::tabular(1, 1, 1);
    assert!(class.log_covering_number_f(0.0).is_err());
    assert!(class.log_covering_number_sa(-1.0).is_err());
}

#[test]
fn width_examples() {
    let class = FunctionClass::tabular(2, 1, 2);
    let f = FunctionHandle {
        class: ClassKind::Tabular,
        params: vec![1.5, 1.0],
    };
    let mut z = StateActionSet::new();
    z.insert(0, 0, 4);
    assert!((class.width_at(&f, &z, 1.0, 0, 0).value - 1.0).abs() < 1e-12);
    assert_eq!(class.width_at(&f, &z, 1.0, 1, 0).value, 3.0);
    assert_eq!(class.width_at(&f, &z, 0.0, 0, 0).value, 0.0);
    let bf = class.brute_force_width(&f, &z, 1.0, 0, 0, 1e-3).unwrap();
    assert!((bf - 1.0).abs() <= 2e-3);
    let empty = class.width_at(&f, &StateActionSet::new(), 1.0, 0, 0);
    assert_eq!(empty.value, 3.0);
    assert_eq!(empty.method, WidthMethod::Unconstrained);
}

#[test]
fn brute_force_rejects_large_linear_dimension() {
    let mut rng = seeded(8);
    let class = FunctionClass::linear(unit_features(2, 5, &mut rng), 2, 1, 2).unwrap();
    let f = class.zero();
    assert!(class.brute_force_width(&f, &StateActionSet::new(), 1.0, 0, 0, 0.1).is_err());
}

#[test]
fn width_within_range() {
    let mut rng = seeded(9);
    for _ in 0..100 {
        let class = FunctionClass::linear(unit_features(6, 3, &mut rng), 3, 2, 2).unwrap();
        let f = class.random_member(&mut rng);
        let z = random_z(3, 2, rng.gen_range(0..6), &mut rng);
        let w = class.width_at(&f, &z, rng.gen_range(0.0..5.0), rng.gen_range(0..3), rng.gen_range(0..2));
        assert!(w.value >= 0.0 && w.value <= 2.0 * class.range_high());
    }
}

#[test]
fn linear_width_is_self_consistent() {
    // Unclipped widths satisfy width^2 = 4 r phi^T A^+ phi.
    let features = vec![
        vec![0.5, 0.2, 0.1],
        vec![0.1, 0.6, 0.2],
        vec![0.2, 0.1, 0.7],
        vec![0.4, 0.4, 0.3],
    ];
    let class = FunctionClass::linear(features, 2, 2, 3).unwrap();
    let f = FunctionHandle {
        class: ClassKind::Linear,
        params: vec![2.0, 2.0, 2.0],
    };
    let mut z = StateActionSet::new();
    z.insert(0, 0, 5);
    z.insert(0, 1, 3);
    z.insert(1, 0, 4);
    let r = 0.01;
    let pinv = lsvi_core::linalg::SymEig::new(&class.gram(&z)).pinv();
    for (s, a) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let phi = class.feature(s, a);
        let q = lsvi_core::linalg::quad_form(&pinv, phi);
        let w = class.width_at(&f, &z, r, s, a).value;
        assert!((w * w / q - 4.0 * r).abs() < 1e-9 * 4.0 * r, "({s}, {a})");
    }
}

proptest! {
    #[test]
    fn width_monotone_in_radius_and_data(seed in 0u64..10_000, linear in any::<bool>()) {
        let mut rng = seeded(seed);
        let class = if linear {
            FunctionClass::linear(unit_features(6, 2, &mut rng), 3, 2, 2).unwrap()
        } else {
            FunctionClass::tabular(3, 2, 2)
        };
        let f = class.random_member(&mut rng);
        let z = random_z(3, 2, rng.gen_range(0..5), &mut rng);
        let (s, a) = (rng.gen_range(0..3), rng.gen_range(0..2));
        let r1 = rng.gen_range(0.0..3.0);
        let r2 = r1 + rng.gen_range(0.0..3.0);
        let w1 = class.width_at(&f, &z, r1, s, a).value;
        let w2 = class.width_at(&f, &z, r2, s, a).value;
        prop_assert!(w1 <= w2 + 1e-9);
        let mut bigger = z.clone();
        bigger.insert(rng.gen_range(0..3), rng.gen_range(0..2), rng.gen_range(1..4));
        let w3 = class.width_at(&f, &bigger, r1, s, a).value;
        prop_assert!(w3 <= w1 + 1e-9);
    }

    #[test]
    fn dataset_norm_triangle_inequality(seed in 0u64..10_000) {
        let mut rng = seeded(seed);
        let class = FunctionClass::linear(unit_features(6, 3, &mut rng), 3, 2, 2).unwrap();
        let z = random_z(3, 2, 8, &mut rng);
        let f = class.random_member(&mut rng);
        let g = class.random_member(&mut rng);
        let h = class.random_member(&mut rng);
        let fh = class.dataset_norm(&f, &h, &z);
        let fg = class.dataset_norm(&f, &g, &z);
        let gh = class.dataset_norm(&g, &h, &z);
        prop_assert!(fh <= fg + gh + 1e-9);
        prop_assert_eq!(class.dataset_norm(&f, &f, &z), 0.0);
    }

    #[test]
    fn cover_nonincreasing_in_eps(e1 in 1e-6f64..10.0, factor in 1.0f64..100.0) {
        let mut rng = seeded(11);
        let classes = [
            FunctionClass::tabular(3, 2, 2),
            FunctionClass::linear(unit_features(6, 3, &mut rng), 3, 2, 2).unwrap(),
            FunctionClass::sparse_linear(unit_features(6, 4, &mut rng), 3, 2, 2, 1).unwrap(),
        ];
        for c in &classes {
            prop_assert!(c.log_covering_number_f(e1 * factor).unwrap() <= c.log_covering_number_f(e1).unwrap());
            prop_assert!(c.log_covering_number_sa(e1 * factor).unwrap() <= c.log_covering_number_sa(e1).unwrap());
        }
    }

    #[test]
    fn random_members_evaluate_in_range(seed in 0u64..10_000) {
        let mut rng = seeded(seed);
        let class = FunctionClass::sparse_linear(unit_features(6, 5, &mut rng), 3, 2, 3, 2).unwrap();
        let f = class.random_member(&mut rng);
        prop_assert!(class.check_member(&f).is_ok());
        for s in 0..3 {
            for a in 0..2 {
                let v = class.evaluate(&f, s, a);
                prop_assert!((0.0..=4.0).contains(&v));
            }
        }
    }
}
