use kerr::config::RunConfig;
use kerr::io::{dataset_csv, parse_dataset_csv};
use kerr_core::measurement::{QDataset, QGrid, QKind};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_survives_serialization(
        seed in any::<u64>(),
        dim in 2usize..60,
        pad in 0usize..60,
        kerr_hz in 1e3f64..1e7,
        p_e in 0.0f64..0.99,
        n_list in prop::collection::vec(0usize..20, 1..9),
        times in prop::collection::vec(0.0f64..1e4, 1..10),
        beta_re in -3.0f64..3.0,
    ) {
        let mut cfg = RunConfig { seed, ..RunConfig::default() };
        cfg.space.dim = dim;
        cfg.space.pad = pad;
        cfg.params.kerr_hz = kerr_hz;
        cfg.params.p_e = p_e;
        cfg.measure.n_list = n_list;
        cfg.simulate.times_ns = times;
        cfg.state.beta_re = beta_re;
        let text = cfg.to_json();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn dataset_csv_is_lossless(
        rows in 1usize..6,
        cols in 2usize..6,
        half in 0.5f64..4.0,
        n_list in prop::collection::btree_set(0usize..12, 1..4),
        values in prop::collection::vec(-1.0f64..1.0, 5 * 6 * 4),
        kind in prop::sample::select(vec![QKind::Ideal, QKind::Signal, QKind::Sampled]),
    ) {
        let grid = QGrid::uniform(rows, cols, (-half, half), (-0.5 * half, half)).unwrap();
        let n_list: Vec<usize> = n_list.into_iter().collect();
        let values = values[..grid.len() * n_list.len()].to_vec();
        let ds = QDataset::new(grid, n_list, values, kind).unwrap();
        let back = parse_dataset_csv(&dataset_csv(&ds).unwrap()).unwrap();
        prop_assert_eq!(&back.values, &ds.values);
        prop_assert_eq!(&back.n_list, &ds.n_list);
        prop_assert_eq!(back.kind, ds.kind);
        prop_assert_eq!(back.grid.len(), ds.grid.len());
        for (a, b) in back.grid.points().iter().zip(ds.grid.points()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }
}
