use proptest::prelude::*;

use hdgc::io::{
    augment_channels, read_series, read_series_from, write_report, write_series, write_series_to,
    AugmentationSpec,
};
use hdgc::pipeline::{analyze, AnalysisReport, PipelineConfig};
use hdgc::simgen::{gen_network, NetworkConfig};
use hdgc::{Error, MultiChannelSeries};

fn finite() -> impl Strategy<Value = f64> + Clone {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        -1e6..1e6f64,
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

fn series_of<S: Strategy<Value = f64> + Clone>(
    values: S,
) -> impl Strategy<Value = MultiChannelSeries> {
    (2usize..30, 1usize..5).prop_flat_map(move |(t, n)| {
        prop::collection::vec(prop::collection::vec(values.clone(), t), n).prop_map(move |cols| {
            MultiChannelSeries::from_columns(cols, (0..n).map(|j| format!("ch{j}")).collect())
                .unwrap()
        })
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(s in series_of(finite())) {
        let mut buf = Vec::new();
        write_series_to(&s, &mut buf).unwrap();
        let back = read_series_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.labels(), s.labels());
        for j in 0..s.n_channels() {
            for (a, b) in s.channel(j).iter().zip(back.channel(j)) {
                prop_assert_eq!(a.to_bits() == b.to_bits() || a == b, true);
            }
        }
    }

    #[test]
    fn augmentation_appends_and_preserves(s in series_of(-1e6..1e6f64), picks in prop::collection::vec((0usize..8, 0usize..8), 0..6)) {
        let n = s.n_channels();
        let labels = s.labels().to_vec();
        let mut spec = AugmentationSpec::default();
        for (k, &(a, b)) in picks.iter().enumerate() {
            let (a, b) = (labels[a % n].clone(), labels[b % n].clone());
            match k % 4 {
                0 => spec.pair_differences.push((a, b)),
                1 => spec.products.push((a, b)),
                2 => spec.regional_averages.push((format!("avg{k}"), vec![a, b])),
                _ => spec.laplacians.push((a, vec![b])),
            }
        }
        match augment_channels(&s, &spec) {
            Ok(out) => {
                prop_assert_eq!(out.n_channels(), n + spec.len());
                for (j, label) in labels.iter().enumerate() {
                    prop_assert_eq!(out.channel(j), s.channel(j));
                    prop_assert_eq!(&out.labels()[j], label);
                }
            }
            // Repeated picks can produce the same derived label twice.
            Err(e) => prop_assert!(matches!(e, Error::InvalidSpec(_))),
        }
    }
}

#[test]
fn files_round_trip_and_report_parses() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = gen_network(&NetworkConfig {
        n: 4,
        n_external: 10,
        t: 300,
        n_influencers: 3,
        seed: 21,
        ..Default::default()
    })
    .unwrap();
    let path = dir.path().join("net.csv");
    write_series(&s, &path).unwrap();
    let back = read_series(&path).unwrap();
    assert_eq!(back.values(), s.values());
    assert_eq!(back.labels(), s.labels());

    let cfg = PipelineConfig {
        coi_labels: s.labels()[..4].to_vec(),
        ..Default::default()
    };
    let a = analyze(&s, &cfg).unwrap();
    let files = write_report(&a.report(&cfg), &a.connectivity, dir.path(), "report").unwrap();
    let back: AnalysisReport =
        serde_json::from_str(&std::fs::read_to_string(&files.json).unwrap()).unwrap();
    assert_eq!(back.tests, a.connectivity.entries);
    assert_eq!(back.config, cfg);
    assert_eq!(back.resolved, a.resolved);
    assert_eq!(back.explained_variance, a.explained_variance);
    let adj = std::fs::read_to_string(&files.adjacency).unwrap();
    assert_eq!(adj.lines().count(), 5);
    let dot = std::fs::read_to_string(&files.dot).unwrap();
    assert!(dot.starts_with("digraph"));
}

#[test]
fn missing_file_is_io_error() {
    let err = read_series(std::path::Path::new("/nonexistent/input.csv")).unwrap_err();
    assert!(err.is_io());
}
