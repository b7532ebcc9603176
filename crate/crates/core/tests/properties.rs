use std::collections::BTreeMap;

use bprelab::genfun::{compose, psi, EnvSequence, Order};
use bprelab::lab::fmt_f64;
use bprelab::linalg::{l1, Matrix};
use bprelab::matprod::{min_simplex_gain, product_entry_ratio, ScaledProduct};
use bprelab::spectral::{solve_default, SimplexGrid};
use bprelab::tilt::{density, step_distribution};
use bprelab::{EnvAtom, EnvDistribution, OffspringLaw};
use proptest::prelude::*;

fn law_strategy(p: usize) -> impl Strategy<Value = OffspringLaw> {
    prop::collection::vec((prop::collection::vec(0u32..=3, p), 0.05f64..1.0), 1..=5).prop_map(move |pts| {
        let mut merged: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (z, w) in pts {
            *merged.entry(z).or_insert(0.0) += w;
        }
        let total: f64 = merged.values().sum();
        let support = merged.into_iter().map(|(z, w)| (z, w / total)).collect();
        OffspringLaw::new(p, support, "law").unwrap()
    })
}

fn atom_strategy(p: usize) -> impl Strategy<Value = EnvAtom> {
    prop::collection::vec(law_strategy(p), p).prop_map(|laws| EnvAtom::from_laws(laws).unwrap())
}

fn sized_atom() -> impl Strategy<Value = EnvAtom> {
    (1usize..=3).prop_flat_map(atom_strategy)
}

fn env_strategy(p: usize) -> impl Strategy<Value = EnvDistribution> {
    prop::collection::vec((atom_strategy(p), 0.1f64..1.0), 1..=3).prop_map(|atoms| {
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        EnvDistribution::new(atoms.into_iter().map(|(a, w)| (a, w / total)).collect()).unwrap()
    })
}

/// Positive mean matrices, so that the projective action never degenerates.
fn positive_env_strategy(p: usize) -> impl Strategy<Value = EnvDistribution> {
    env_strategy(p).prop_filter("positive means", |env| env.atoms().iter().all(|a| a.mean().is_positive()))
}

fn unit_point(p: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, p)
}

fn direct_pgf(law: &OffspringLaw, s: &[f64]) -> f64 {
    law.support()
        .iter()
        .map(|(z, q)| q * z.iter().zip(s).map(|(&k, &x)| x.powi(k as i32)).product::<f64>())
        .sum()
}

fn shifted(p: usize, moves: &[(usize, f64)]) -> Vec<f64> {
    let mut s = vec![1.0; p];
    for &(j, h) in moves {
        s[j] -= h;
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pgf_is_monotone_and_normalized(atom in sized_atom(), s in unit_point(3), t in unit_point(3)) {
        let p = atom.p();
        let lo: Vec<f64> = s[..p].iter().zip(&t[..p]).map(|(a, b)| a.min(*b)).collect();
        let hi: Vec<f64> = s[..p].iter().zip(&t[..p]).map(|(a, b)| a.max(*b)).collect();
        for law in atom.laws() {
            let (a, b) = (law.pgf(&lo).unwrap(), law.pgf(&hi).unwrap());
            prop_assert!(a <= b + 1e-15);
            prop_assert!((0.0..=1.0 + 1e-15).contains(&a));
            prop_assert!((law.pgf(&vec![1.0; p]).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((direct_pgf(law, &hi) - b).abs() < 1e-13);
        }
    }

    #[test]
    fn complement_matches_direct_evaluation(atom in sized_atom(), s in unit_point(3)) {
        let p = atom.p();
        let s = &s[..p];
        let u: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
        let evals = atom.eval_with_complement(s, &u);
        for (k, e) in evals.iter().enumerate() {
            prop_assert!((e.value + e.complement - 1.0).abs() < 1e-12);
            prop_assert!(e.gap >= 0.0);
            let linear: f64 = atom.mean().row(k).iter().zip(&u).map(|(m, x)| m * x).sum();
            prop_assert!((e.complement + e.gap - linear).abs() < 1e-12);
        }
    }

    #[test]
    fn stored_mean_matches_recomputation(atom in sized_atom()) {
        let p = atom.p();
        for (i, law) in atom.laws().iter().enumerate() {
            for j in 0..p {
                let m: f64 = law.support().iter().map(|(z, q)| q * z[j] as f64).sum();
                prop_assert!((atom.mean()[(i, j)] - m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_differences_reproduce_mean(atom in sized_atom()) {
        let p = atom.p();
        let h = 1e-6;
        for (i, law) in atom.laws().iter().enumerate() {
            for j in 0..p {
                let d = (1.0 - law.pgf(&shifted(p, &[(j, h)])).unwrap()) / h;
                prop_assert!((d - atom.mean()[(i, j)]).abs() < 1e-4, "{} vs {}", d, atom.mean()[(i, j)]);
            }
        }
    }

    #[test]
    fn second_differences_reproduce_hessians(atom in sized_atom()) {
        let p = atom.p();
        for (k, law) in atom.laws().iter().enumerate() {
            let f = |moves: &[(usize, f64)]| direct_pgf(law, &shifted(p, moves));
            for j in 0..p {
                for l in 0..p {
                    // backward second difference with one Richardson step
                    let second = |h: f64| (f(&[]) - f(&[(j, h)]) - f(&[(l, h)]) + f(&[(j, h), (l, h)])) / (h * h);
                    let h = 1e-4;
                    let d = 2.0 * second(h / 2.0) - second(h);
                    let b = atom.hessian(k)[(j, l)];
                    prop_assert!((d - b).abs() <= 1e-3 * b.abs() + 1e-6, "B({})[{},{}]: {} vs {}", k, j, l, d, b);
                }
            }
        }
    }

    #[test]
    fn hessians_are_symmetric_and_t_follows_norms(atom in sized_atom()) {
        let norm = atom.mean().op_norm();
        let mut t = 0.0;
        for b in atom.hessians() {
            prop_assert!(b.max_abs_diff(&b.transpose()) == 0.0);
            prop_assert!(b.is_nonnegative());
            t += b.op_norm();
        }
        if norm > 0.0 {
            prop_assert!((atom.t_value() - t / (norm * norm)).abs() <= 1e-12 * atom.t_value().max(1.0));
        }
    }

    #[test]
    fn extinction_grows_along_nesting(env in (1usize..=3).prop_flat_map(env_strategy), atoms in prop::collection::vec(0usize..3, 0..12)) {
        let p = env.p();
        let seq: Vec<usize> = atoms.into_iter().map(|e| e % env.len()).collect();
        let mut prev = vec![0.0; p];
        for n in 0..=seq.len() {
            let q = compose(&env, &EnvSequence::new(seq[..n].to_vec()), &vec![0.0; p], Order::Forward).unwrap();
            for (a, b) in prev.iter().zip(&q) {
                prop_assert!(*b >= *a - 1e-15);
            }
            prev = q;
        }
    }

    #[test]
    fn psi_is_nonnegative(atom in sized_atom(), s in prop::collection::vec(0.0f64..0.999, 3), a in prop::collection::vec(0.0f64..1.0, 9)) {
        let p = atom.p();
        let rows: Vec<Vec<f64>> = (0..p).map(|i| a[i * p..(i + 1) * p].to_vec()).collect();
        let a = Matrix::from_rows(&rows);
        if let Ok(v) = psi(&atom, &a, &s[..p]) {
            prop_assert!(v >= 0.0);
        }
    }

    #[test]
    fn products_are_associative(env in (1usize..=3).prop_flat_map(env_strategy), atoms in prop::collection::vec(0usize..3, 1..=50)) {
        let seq: Vec<usize> = atoms.into_iter().map(|e| e % env.len()).collect();
        let mut left = ScaledProduct::identity(env.p());
        let mut right = ScaledProduct::identity(env.p());
        for &e in &seq {
            left.push_left(env.atom(e).mean());
        }
        for &e in seq.iter().rev() {
            right.push_right(env.atom(e).mean());
        }
        let (a, b) = (left.to_matrix(), right.to_matrix());
        let scale = a.max_entry().max(b.max_entry());
        if scale > 0.0 && scale.is_finite() {
            prop_assert!(a.max_abs_diff(&b) <= 1e-12 * scale);
        }
    }

    #[test]
    fn h3_consequences_for_positive_products(env in (2usize..=3).prop_flat_map(positive_env_strategy), atoms in prop::collection::vec(0usize..3, 1..=30)) {
        let gamma = env.gamma();
        let p = env.p() as f64;
        for atom in env.atoms() {
            prop_assert!(min_simplex_gain(atom.mean()) >= 1.0 / gamma - 1e-12);
        }
        let mut prod = ScaledProduct::identity(env.p());
        for e in atoms {
            prod.push_left(env.atom(e % env.len()).mean());
        }
        prop_assert!(product_entry_ratio(prod.matrix()) <= gamma * gamma * p * (1.0 + 1e-12));
    }

    #[test]
    fn interpolation_is_a_partition_of_unity(k in 2usize..40, y in prop::collection::vec(0.0f64..1.0, 3)) {
        let grid = SimplexGrid::new(3, k).unwrap();
        let total: f64 = y.iter().sum();
        prop_assume!(total > 0.0);
        let y: Vec<f64> = y.iter().map(|v| v / total).collect();
        let stencil = grid.locate(&y);
        let w: f64 = stencil.iter().map(|(_, w)| w).sum();
        prop_assert!((w - 1.0).abs() < 1e-12);
        prop_assert!(stencil.iter().all(|(_, w)| w >= -1e-12));
        let mut rebuilt = [0.0; 3];
        for (i, w) in stencil.iter() {
            for (r, x) in rebuilt.iter_mut().zip(grid.node(i)) {
                *r += w * x;
            }
        }
        for (a, b) in rebuilt.iter().zip(&y) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn floats_round_trip(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scalar_tilt_is_exactly_normalized(env in env_strategy(1), theta in 0.2f64..3.0) {
        prop_assume!(env.atoms().iter().all(|a| a.mean()[(0, 0)] > 0.0));
        let spec = solve_default(&env, theta, 1).unwrap();
        let q = step_distribution(&[1.0], &env, &spec).unwrap();
        prop_assert!(q.defect() < 1e-12);
    }

    #[test]
    fn density_is_positive_and_finite(env in (2usize..=3).prop_flat_map(positive_env_strategy), atoms in prop::collection::vec(0usize..3, 0..=20)) {
        let grid = if env.p() == 2 { 60 } else { 12 };
        let spec = solve_default(&env, 1.0, grid).unwrap();
        let seq = EnvSequence::new(atoms.into_iter().map(|e| e % env.len()).collect());
        let mut x0 = vec![0.0; env.p()];
        x0[0] = 1.0;
        let d = density(&x0, &env, &seq, &spec).unwrap();
        prop_assert!(d > 0.0 && d.is_finite());
        prop_assert!((l1(&x0) - 1.0).abs() == 0.0);
    }
}
