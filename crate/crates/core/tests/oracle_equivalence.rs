use psdg::inference::{Filter, Observation, RecognizerOptions, ZeroEvidencePolicy};
use psdg::oracle::{reference_reports, DEFAULT_ENTRY_BOUND};
use psdg::synth::{observation_stream, random_grammar, SynthLimits};
use psdg::{Psdg, StateSet, TRAFFIC_PSDG};

fn worst_deviation(psdg: &Psdg, observations: &[Observation]) -> f64 {
    let expected = reference_reports(psdg, observations, DEFAULT_ENTRY_BOUND).unwrap();
    let mut filter = Filter::new(
        psdg,
        RecognizerOptions::default(),
        ZeroEvidencePolicy::Error,
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for (obs, want) in observations.iter().zip(&expected) {
        let got = filter.observe(obs).unwrap();
        assert_eq!(got.t, want.t);
        let d = got.deviation(want);
        assert!(d.max() <= 1e-9, "t={} deviation {d:?}", obs.t);
        worst = worst.max(d.max());
    }
    worst
}

#[test]
fn random_grammars_match_enumeration() {
    let limits = SynthLimits::default();
    for seed in 0..40 {
        let g = random_grammar(seed, &limits);
        for s in 0..3 {
            let obs = observation_stream(&g, seed * 101 + s, 5);
            worst_deviation(&g, &obs);
        }
    }
}

#[test]
fn traffic_matches_enumeration_on_short_streams() {
    let g = Psdg::parse(TRAFFIC_PSDG).unwrap();
    for seed in 0..4 {
        let obs = observation_stream(&g, seed, 3);
        worst_deviation(&g, &obs);
    }
}

#[test]
fn vacuous_stream_matches_enumeration() {
    let g = random_grammar(7, &SynthLimits::default());
    let obs: Vec<Observation> = (0..4).map(|t| Observation::vacuous(&g, t)).collect();
    worst_deviation(&g, &obs);
}

#[test]
fn late_first_observation_matches_enumeration() {
    let g = random_grammar(11, &SynthLimits::default());
    let space = g.space();
    let first = StateSet::singleton(space, &space.point(0));
    let obs = vec![
        Observation {
            t: 2,
            constraint: g.full_set(),
        },
        Observation {
            t: 4,
            constraint: first,
        },
    ];
    let expected = reference_reports(&g, &obs, DEFAULT_ENTRY_BOUND);
    let mut filter =
        Filter::new(&g, RecognizerOptions::default(), ZeroEvidencePolicy::Error).unwrap();
    match expected {
        Ok(expected) => {
            for (o, want) in obs.iter().zip(&expected) {
                let got = filter.observe(o).unwrap();
                assert!(got.deviation(want).max() <= 1e-9);
            }
        }
        Err(_) => {
            filter.observe(&obs[0]).unwrap();
            assert!(filter.observe(&obs[1]).is_err());
        }
    }
}
