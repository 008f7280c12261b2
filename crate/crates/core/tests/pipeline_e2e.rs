use hdgc::dpca::ComponentRule;
use hdgc::metrics::{confusion, Scope};
use hdgc::pipeline::{analyze, PipelineConfig, Reduction};
use hdgc::simgen::{gen_network, NetworkConfig};
use hdgc::MultiChannelSeries;

fn network(seed: u64) -> (MultiChannelSeries, hdgc::simgen::GroundTruth) {
    gen_network(&NetworkConfig {
        n: 6,
        n_external: 30,
        t: 1000,
        n_influencers: 8,
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn six_channels_give_thirty_tests() {
    let (s, truth) = network(1);
    let cfg = PipelineConfig {
        coi_labels: s.labels()[..6].to_vec(),
        ..Default::default()
    };
    let a = analyze(&s, &cfg).unwrap();
    assert_eq!(a.connectivity.entries.len(), 30);
    assert_eq!(a.resolved.background.len(), 30);
    let c = confusion(&a.connectivity, &truth, Scope::DesignedPairs).unwrap();
    assert_eq!(c.tp, 3, "every planted link is found: {c:?}");
}

#[test]
fn sentinel_coi_values_do_not_reach_the_scores() {
    let (s, _) = network(2);
    let cfg = PipelineConfig {
        coi_labels: s.labels()[..6].to_vec(),
        ..Default::default()
    };
    let base = analyze(&s, &cfg).unwrap();
    let cols: Vec<Vec<f64>> = (0..s.n_channels())
        .map(|j| {
            if j < 6 {
                (0..s.len()).map(|t| 1e9 + (t * (j + 1)) as f64).collect()
            } else {
                s.channel(j).to_vec()
            }
        })
        .collect();
    let poked = MultiChannelSeries::from_columns(cols, s.labels().to_vec()).unwrap();
    let after = analyze(&poked, &cfg).unwrap();
    let (a, b) = (base.scores.unwrap(), after.scores.unwrap());
    assert_eq!(a.k_scores(), b.k_scores());
    for j in 0..a.k_scores() {
        assert_eq!(a.column(j), b.column(j));
    }
}

#[test]
fn explicit_background_and_single_score() {
    let (s, _) = network(3);
    let cfg = PipelineConfig {
        coi_labels: vec!["X1".into(), "Y1".into()],
        background_labels: Some(vec!["Z1".into()]),
        k_scores: ComponentRule::Count(1),
        ..Default::default()
    };
    let a = analyze(&s, &cfg).unwrap();
    assert_eq!(a.resolved.background, ["Z1"]);
    assert_eq!(a.resolved.k_scores, 1);
    assert!(a.connectivity.get("X1", "Y1").unwrap().reject);
}

#[test]
fn reductions_agree_on_a_strong_link() {
    let (s, _) = network(4);
    for reduction in [Reduction::Spectral, Reduction::Static, Reduction::None] {
        let cfg = PipelineConfig {
            coi_labels: vec!["X2".into(), "Y2".into()],
            reduction,
            interactions: reduction == Reduction::Static,
            ..Default::default()
        };
        let a = analyze(&s, &cfg).unwrap();
        assert!(
            a.connectivity.get("X2", "Y2").unwrap().reject,
            "{reduction}"
        );
    }
}
