use betagamma_core::cumulants::{
    bell, enumerate_partitions, joint_cumulant_empirical, CumulantCombination,
};
use betagamma_core::rng::{open_uniform, stream, Role};
use proptest::prelude::*;
use rand::Rng;

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, 0, Role::Aux);
    // Box-Muller
    (0..n)
        .map(|_| {
            let (u, v) = (open_uniform(&mut rng), open_uniform(&mut rng));
            (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
        })
        .collect()
}

fn exponentials(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, 0, Role::Aux);
    (0..n).map(|_| -open_uniform(&mut rng).ln()).collect()
}

fn repeated(col: &[f64], k: usize) -> Vec<Vec<f64>> {
    col.iter().map(|&x| vec![x; k]).collect()
}

#[test]
fn partitions_are_counted_by_bell_numbers() {
    for k in 1..=8 {
        assert_eq!(enumerate_partitions(k).unwrap().len() as u64, bell(k));
    }
    assert_eq!(bell(3), 5);
    assert_eq!(bell(5), 52);
}

#[test]
fn gamma_third_cumulant() {
    let x = exponentials(100_000, 2);
    let est = joint_cumulant_empirical(&repeated(&x, 3)).unwrap();
    assert!((est.value - 2.0).abs() < 4.0 * est.stderr, "{est:?}");
}

#[test]
fn normal_higher_cumulants_vanish() {
    let x = normals(100_000, 3);
    for k in [3, 4] {
        let est = joint_cumulant_empirical(&repeated(&x, k)).unwrap();
        assert!(est.value.abs() < 4.0 * est.stderr, "k={k}: {est:?}");
    }
}

#[test]
fn independent_columns_have_zero_joint_cumulants() {
    let cols: Vec<Vec<f64>> = (0..3).map(|c| exponentials(50_000, 40 + c)).collect();
    let rows: Vec<Vec<f64>> = (0..50_000)
        .map(|t| cols.iter().map(|c| c[t]).collect())
        .collect();
    let est = joint_cumulant_empirical(&rows).unwrap();
    assert!(est.value.abs() < 4.0 * est.stderr, "{est:?}");
}

#[test]
fn constant_columns_are_allowed() {
    let rows: Vec<Vec<f64>> = (0..40).map(|t| vec![1.5, t as f64]).collect();
    assert_eq!(joint_cumulant_empirical(&rows).unwrap().value, 0.0);
    assert!(joint_cumulant_empirical(&rows[..20]).is_err());
}

proptest! {
    #[test]
    fn plug_in_estimator_is_multilinear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = stream(seed, 0, Role::Aux);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(3)).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + x[0]).collect();
        let w: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
        for k in 2..=4 {
            let tail = vec![3; k - 1];
            let data: [&[f64]; 4] = [&x, &y, &w, &z];
            let with = |first: usize| {
                let mut t = vec![first];
                t.extend(&tail);
                CumulantCombination::single(1.0, t).estimate(&data).unwrap().value
            };
            let lhs = with(2);
            let rhs = a * with(0) + b * with(1);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "k={k}: {lhs} vs {rhs}");
        }
    }
}
