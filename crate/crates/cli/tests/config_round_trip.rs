use proptest::prelude::*;
use stochvar_cli::config::{Config, EXPERIMENTS, KEYS};

const NUMERIC: [&str; 8] = ["seed", "nu", "dt", "t_final", "replicas", "criticality.sigma", "noether.floor", "spde.min-order"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn text_form_round_trips(
        exp in 0usize..4,
        picks in proptest::collection::vec((0usize..NUMERIC.len(), 0.0f64..1e6), 0..6),
    ) {
        let mut cfg = Config::new();
        cfg.set("experiment", EXPERIMENTS[exp]).unwrap();
        for (i, v) in picks {
            cfg.set(NUMERIC[i], &format!("{v:e}")).unwrap();
        }
        let back = Config::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back.effective(), cfg.effective());
        prop_assert_eq!(back.effective().len(), KEYS.len());
    }

    #[test]
    fn later_settings_win(a in 1u64..1000, b in 1u64..1000) {
        let mut cfg = Config::parse(&format!("seed = {a}\n")).unwrap();
        cfg.set_pair(&format!("seed={b}")).unwrap();
        prop_assert_eq!(cfg.parsed::<u64>("seed").unwrap(), b);
    }
}
