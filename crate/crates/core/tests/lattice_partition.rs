use betagamma_core::exec::Executor;
use betagamma_core::lattice::{
    make_model, perturb_boundary, sample_environment, EnvironmentSampler,
};
use betagamma_core::partition::{
    brute_force_log_z, log_partition, log_partition_value, nsew_decompose, path_log_weights,
};
use betagamma_core::quenched::{exit_distribution, exit_profile, reverse_partition, Axis};
use betagamma_core::stats::{kolmogorov_pvalue, ks_statistic};
use betagamma_core::{ModelKind, ModelSpec};
use proptest::prelude::*;

fn model() -> impl Strategy<Value = ModelKind> {
    prop_oneof![
        Just(ModelKind::IG),
        Just(ModelKind::G),
        Just(ModelKind::B),
        Just(ModelKind::IB)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dp_matches_enumeration(kind in model(), m in 1usize..7, n in 1usize..7, seed in any::<u64>()) {
        prop_assume!(m + n <= 10);
        let env = sample_environment(&ModelSpec::with_defaults(kind), m, n, seed).unwrap();
        let dp = log_partition_value(&env);
        let brute = brute_force_log_z(&env).unwrap();
        prop_assert!((dp - brute).abs() <= 1e-9 * dp.abs().max(1.0), "{dp} vs {brute}");
        prop_assert!((log_partition(&env).log_z() - dp).abs() <= 1e-12 * dp.abs().max(1.0));
    }

    #[test]
    fn nsew_holds_per_sample(kind in model(), m in 1usize..24, n in 1usize..24, seed in any::<u64>()) {
        let env = sample_environment(&ModelSpec::with_defaults(kind), m, n, seed).unwrap();
        let table = log_partition(&env);
        let d = nsew_decompose(&table);
        prop_assert!(d.defect(table.log_z()) <= 1e-9);
    }

    #[test]
    fn exit_laws_match_enumeration(kind in model(), m in 1usize..6, n in 1usize..6, seed in any::<u64>()) {
        let env = sample_environment(&ModelSpec::with_defaults(kind), m, n, seed).unwrap();
        let (fwd, rev) = (log_partition(&env), reverse_partition(&env));
        let south = exit_distribution(&env, &fwd, &rev, Axis::South).unwrap();
        let west = exit_distribution(&env, &fwd, &rev, Axis::West).unwrap();
        let paths = path_log_weights(&env).unwrap();
        let lz = brute_force_log_z(&env).unwrap();
        let mut s = vec![0.0; m + 1];
        let mut w = vec![0.0; n + 1];
        for p in &paths {
            let q = (p.log_weight - lz).exp();
            s[p.t1] += q;
            w[p.t2] += q;
        }
        for (a, b) in south.probs.iter().zip(&s).chain(west.probs.iter().zip(&w)) {
            prop_assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
        prop_assert!((south.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // exactly one of t1, t2 is positive
        prop_assert!((south.probs[0] + west.probs[0] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn parameters_add_up() {
    for kind in ModelKind::ALL {
        for (mu, theta) in [(2.0, 1.0), (3.5, 0.25), (1.2, 0.9)] {
            if let Ok(spec) = make_model(kind, mu, theta, 1.3) {
                assert_eq!(spec.a1 + spec.a2, spec.a3, "{kind:?}");
            }
        }
    }
}

#[test]
fn bulk_pairs_follow_the_model() {
    let g = sample_environment(&ModelSpec::with_defaults(ModelKind::G), 9, 7, 3).unwrap();
    assert!(g.bulk2.iter().all(|&v| v == 0.0));
    let ig = sample_environment(&ModelSpec::with_defaults(ModelKind::IG), 9, 7, 3).unwrap();
    assert_eq!(ig.bulk1, ig.bulk2);
    let b = sample_environment(&ModelSpec::with_defaults(ModelKind::B), 9, 7, 3).unwrap();
    for (l1, l2) in b.bulk1.iter().zip(&b.bulk2) {
        assert!((l1.exp() + l2.exp() - 1.0).abs() < 1e-12);
    }
    let ib = sample_environment(&ModelSpec::with_defaults(ModelKind::IB), 9, 7, 3).unwrap();
    for (l1, l2) in ib.bulk1.iter().zip(&ib.bulk2) {
        assert!((l1.exp() - l2.exp() - 1.0).abs() < 1e-9 * l1.exp());
    }
}

#[test]
fn south_mean_matches_psi0() {
    for kind in ModelKind::ALL {
        let spec = ModelSpec::with_defaults(kind);
        let env = sample_environment(&spec, 100_000, 1, 17).unwrap();
        let n = env.south.len() as f64;
        let mean = env.south.iter().sum::<f64>() / n;
        let var = env.south.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let psi0 = spec.f1.psi(0, spec.a1).unwrap();
        assert!(
            (mean - psi0).abs() < 4.0 * (var / n).sqrt(),
            "{kind:?}: {mean} vs {psi0}"
        );
    }
}

#[test]
fn bulk_marginal_passes_ks() {
    for kind in ModelKind::ALL {
        let spec = ModelSpec::with_defaults(kind);
        let sampler = EnvironmentSampler::new(&spec).unwrap();
        let env = sampler.sample(1, 100_000, 23, 0).unwrap();
        let bulk = sampler.bulk_sampler();
        let u: Vec<f64> = env
            .bulk1
            .iter()
            .map(|ly| bulk.cdf(ly.exp()).unwrap())
            .collect();
        let d = ks_statistic(&u);
        assert!(kolmogorov_pvalue(u.len(), d) > 0.01, "{kind:?}: D = {d}");
    }
}

#[test]
fn perturbation_is_monotone_and_fixed_at_a1() {
    for kind in ModelKind::ALL {
        let spec = ModelSpec::with_defaults(kind);
        let env = sample_environment(&spec, 12, 5, 8).unwrap();
        assert_eq!(perturb_boundary(&env, &spec, spec.a1, 12).unwrap(), env);
        let (_, hi) = spec.f1.domain();
        let up = (spec.a1 + 0.05).min(0.5 * (spec.a1 + hi));
        let moved = perturb_boundary(&env, &spec, up, 7).unwrap();
        assert!(
            moved.south[..7].iter().zip(&env.south).all(|(a, b)| a > b),
            "{kind:?}"
        );
        assert_eq!(moved.south[7..], env.south[7..]);
        assert_eq!(moved.bulk1, env.bulk1);
    }
}

#[test]
fn replicas_do_not_depend_on_workers() {
    let spec = ModelSpec::with_defaults(ModelKind::B);
    let sampler = EnvironmentSampler::new(&spec).unwrap();
    let run = |exec: &Executor| {
        exec.map(24, |t| {
            exit_profile(&sampler.sample(20, 15, 99, t as u64).unwrap()).unwrap()
        })
    };
    let one = run(&Executor::sequential());
    assert_eq!(one, run(&Executor::new(3)));
    assert_eq!(one, run(&Executor::new(2)));
}
