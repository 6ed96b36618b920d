use proptest::prelude::*;

use pfedlab::algorithms::soft_sharing_oracle_quadratic;
use pfedlab::instance::{ClientDataset, DataPoint, FederatedDataset};
use pfedlab::linalg::dist2;
use pfedlab::optim::{minibatch_variance_formula, ProjectionDomain};

fn enumerate(xs: &[Vec<f64>], b: usize) -> f64 {
    let n = xs.len();
    let (mut total, mut count) = (0.0, 0.0);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != b {
            continue;
        }
        let mut s = vec![0.0; xs[0].len()];
        for (_, x) in xs.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0) {
            s.iter_mut().zip(x).for_each(|(a, v)| *a += v);
        }
        total += s.iter().map(|v| (v / b as f64).powi(2)).sum::<f64>();
        count += 1.0;
    }
    total / count
}

fn dataset(groups: &[Vec<Vec<f64>>]) -> FederatedDataset {
    let clients = groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            ClientDataset::new(i, g.iter().map(|z| DataPoint::Plain { z: z.clone() }).collect()).unwrap()
        })
        .collect();
    FederatedDataset::new(clients).unwrap()
}

proptest! {
    #[test]
    fn second_moment_formula_matches_enumeration(
        xs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..=7),
        frac in 0.0f64..1.0,
    ) {
        let b = 1 + ((xs.len() - 1) as f64 * frac) as usize;
        let exact = enumerate(&xs, b);
        let formula = minibatch_variance_formula(&xs, b).unwrap();
        prop_assert!((exact - formula).abs() <= 1e-12 * formula.abs().max(1e-12));
    }

    #[test]
    fn soft_sharing_locals_move_toward_the_global_model(
        groups in prop::collection::vec(prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..5), 2..5),
        l1 in 1e-3f64..1e3,
        l2 in 1e-3f64..1e3,
    ) {
        let data = dataset(&groups);
        let domain = ProjectionDomain::centered(2, 10.0).unwrap();
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let (g, a) = soft_sharing_oracle_quadratic(&data, lo, data.weights(), &domain).unwrap();
        let (_, b) = soft_sharing_oracle_quadratic(&data, hi, data.weights(), &domain).unwrap();
        for (wa, wb) in a.iter().zip(&b) {
            prop_assert!(dist2(wb, &g) <= dist2(wa, &g) * (1.0 + 1e-12) + 1e-300);
        }
    }
}
