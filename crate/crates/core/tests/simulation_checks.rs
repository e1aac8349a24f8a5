use ifwer_core::simulation::{
    mirror_conservative_check, run_experiment, ExperimentConfig, Generator, GridSpec, Method, ScorerKind, TreeSpec,
};
use ifwer_core::MaskingScheme;

fn null_grid() -> Generator {
    Generator::Grid(GridSpec {
        mu_alt: 0.0,
        ..GridSpec::default()
    })
}

fn config(method: Method, reps: usize) -> ExperimentConfig {
    ExperimentConfig {
        config_id: "null".into(),
        generator: null_grid(),
        method,
        alpha: 0.2,
        reps,
        seed: 3,
    }
}

#[test]
fn baselines_control_fwer_under_the_global_null() {
    for method in [Method::Sidak, Method::Bonferroni, Method::Holm, Method::Fallback { v: 3 }] {
        let s = run_experiment(&config(method.clone(), 1000)).unwrap();
        let se = s.se_fwer.unwrap();
        assert!(s.fwer <= 0.2 + 3.0 * se, "{}: {} (se {se})", s.method, s.fwer);
        assert!(s.power.is_none());
    }
    // Independent nulls make Sidak exact.
    let s = run_experiment(&config(Method::Sidak, 1000)).unwrap();
    assert!((s.fwer - 0.2).abs() <= 3.0 * s.se_fwer.unwrap());
}

#[test]
fn experiments_are_reproducible() {
    let method = Method::Ifwer {
        scheme: MaskingScheme::tent(0.1).unwrap(),
        strategy: None,
        scorer: ScorerKind::NegG,
        k: 1,
        adjusted_start: false,
    };
    let a = run_experiment(&config(method.clone(), 5)).unwrap();
    let b = run_experiment(&config(method, 5)).unwrap();
    assert_eq!(a.csv_row(), b.csv_row());
    assert!(a.csv_row().starts_with("null,ifwer:default:neg_g,0.2,tent(0.1),5,"));
}

#[test]
fn tree_generator_has_seven_nonnulls() {
    let cfg = ExperimentConfig {
        config_id: "tree".into(),
        generator: Generator::Tree(TreeSpec::default()),
        method: Method::Sidak,
        alpha: 0.2,
        reps: 3,
        seed: 1,
    };
    let s = run_experiment(&cfg).unwrap();
    // Power is a multiple of 1/7 in each replication.
    let p = s.power.unwrap() * 3.0 * 7.0;
    assert!((p - p.round()).abs() < 1e-9);
}

#[test]
fn uniform_nulls_pass_the_mirror_check() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(8);
    let u: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
    let r = mirror_conservative_check(&u, 0.2, 10).unwrap();
    assert!(r.flagged.is_empty() && !r.inconclusive);
    // A null that piles up near zero is anti-conservative.
    let skewed: Vec<f64> = u.iter().map(|x| x * x).collect();
    assert!(!mirror_conservative_check(&skewed, 0.2, 10).unwrap().flagged.is_empty());
}
