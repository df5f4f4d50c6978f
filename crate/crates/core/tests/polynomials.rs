use betagamma_core::polynomials::{
    build_p, generating_check, generating_derivative, mean_zero_check, mean_zero_mc, sample_sums,
    MAX_P_ORDER,
};
use betagamma_core::{KernelKind, MellinFamily};

fn families() -> Vec<(MellinFamily, f64)> {
    vec![
        (MellinFamily::new(KernelKind::ExpDecay, 1.0).unwrap(), 1.5),
        (
            MellinFamily::new(KernelKind::ExpDecayInv, 2.0).unwrap(),
            -1.2,
        ),
        (MellinFamily::new(KernelKind::BetaKernel, 2.0).unwrap(), 1.0),
        (
            MellinFamily::new(KernelKind::BetaInvKernel, 1.5).unwrap(),
            -0.8,
        ),
        (
            MellinFamily::new(KernelKind::BetaPrimeKernel, 3.0).unwrap(),
            -1.0,
        ),
    ]
}

#[test]
fn term_structure_up_to_order_ten() {
    for (f, a) in families() {
        for n in 1..=MAX_P_ORDER {
            let p = build_p(f, n, a, 3).unwrap();
            p.check_structure().unwrap();
            let top = p.terms().iter().map(|t| t.u_power).max().unwrap();
            assert_eq!(top, n as u32);
        }
    }
    assert!(build_p(families()[0].0, MAX_P_ORDER + 1, 1.5, 1).is_err());
}

#[test]
fn mean_zero_by_convolution() {
    let f = MellinFamily::new(KernelKind::ExpDecay, 1.0).unwrap();
    assert!(mean_zero_check(&f, 3, 1.5, 2).unwrap().abs() <= 1e-8);
    for (f, a) in families() {
        assert!(mean_zero_check(&f, 1, a, 1).unwrap().abs() <= 1e-10);
    }
}

#[test]
fn mean_zero_monte_carlo_r8() {
    let f = MellinFamily::new(KernelKind::BetaKernel, 2.0).unwrap();
    let mc = mean_zero_mc(&f, 2, 1.0, 8, 100_000, 4).unwrap();
    assert!(mc.mean.abs() < 4.0 * mc.stderr, "{mc:?}");
}

#[test]
fn p_matches_generating_function_derivatives() {
    for (f, a) in families() {
        for n in 1..=3 {
            let p = build_p(f, n, a, 2).unwrap();
            let s = p.center() + 0.7;
            let fd = generating_derivative(&f, a, 2, s, n).unwrap();
            let exact = p.eval(s);
            assert!(
                (fd - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                "{:?} n={n}: {fd} vs {exact}",
                f.kind
            );
        }
    }
}

#[test]
fn generating_residual_shrinks_with_order() {
    // r = 4 near the beta-prime poles: the K = 6 remainder is of order λ^7 p_7 / 7!
    let f = MellinFamily::new(KernelKind::BetaPrimeKernel, 1.0).unwrap();
    let res = |k| generating_check(&f, -0.35, 4, 1.7, 0.01, k).unwrap();
    assert!(res(7) < 0.1 * res(6));
    assert!(res(8) <= 1e-12, "{}", res(8));
    for (f, a) in families() {
        assert!(
            generating_check(&f, a, 4, 1.7, 0.01, 8).unwrap() <= 1e-12,
            "{:?}",
            f.kind
        );
    }
}

/// L² norm of p_n(S_r) by Monte Carlo.
fn l2_norm(f: &MellinFamily, a: f64, n: usize, r: usize) -> f64 {
    let p = build_p(*f, n, a, r).unwrap();
    let v = sample_sums(f, a, r, 100_000, 10 + r as u64, |s| p.eval(s).powi(2)).unwrap();
    (v.iter().sum::<f64>() / v.len() as f64).sqrt()
}

#[test]
fn norms_grow_like_r_to_the_half_order() {
    let f = MellinFamily::new(KernelKind::ExpDecay, 1.0).unwrap();
    for n in 1..=4 {
        let ratio = l2_norm(&f, 1.5, n, 16) / l2_norm(&f, 1.5, n, 4);
        let per_order = ratio.powf(1.0 / n as f64);
        assert!(
            (1.7..=2.3).contains(&per_order),
            "n={n}: ratio {ratio}, per order {per_order}"
        );
    }
}
