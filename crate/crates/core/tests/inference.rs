use psdg::generation::{expansion_terminates, sample_with, ScriptedChooser};
use psdg::inference::{
    Filter, InferenceError, Observation, Recognizer, RecognizerOptions, ZeroEvidencePolicy,
};
use psdg::oracle::{reference_reports, DEFAULT_ENTRY_BOUND};
use psdg::{ProdId, Psdg, StatePoint, StateSet, TRAFFIC_PSDG};

fn traffic() -> Psdg {
    Psdg::parse(TRAFFIC_PSDG).unwrap()
}

fn prod(g: &Psdg, index: u32) -> ProdId {
    g.production_by_index(index).unwrap()
}

fn state(g: &Psdg, lane: &str) -> StatePoint {
    g.state_from_labels([
        ("lane", lane),
        ("gap", "clear"),
        ("aggressive", "no"),
        ("near-exit", "no"),
    ])
    .unwrap()
}

fn lane_observation(g: &Psdg, t: usize, lane: &str) -> Observation {
    Observation::from_json(
        g,
        &format!(r#"{{"t":{t},"observe":{{"lane":["{lane}"]}}}}"#),
    )
    .unwrap()
}

fn filter(g: &Psdg, policy: ZeroEvidencePolicy) -> Filter<'_> {
    Filter::new(g, RecognizerOptions::default(), policy).unwrap()
}

#[test]
fn lane_guards_zero_out_impossible_lane_changes() {
    let g = traffic();
    let cases = [("left-lane", 1), ("right-lane", 2)];
    for (lane, blocked) in cases {
        let mut f = filter(&g, ZeroEvidencePolicy::Error);
        let r0 = f.observe(&lane_observation(&g, 0, lane)).unwrap();
        assert_eq!(r0.predict.production(1, prod(&g, blocked), 1), 0.0);
        assert!(r0.predict.production(1, prod(&g, 0), 1) > 0.0);
        // later fresh expansions see the same guard
        let r1 = f.observe(&lane_observation(&g, 1, lane)).unwrap();
        assert_eq!(r1.predict.production(1, prod(&g, blocked), 1), 0.0);
    }
}

#[test]
fn pass_on_the_left_replay() {
    let g = traffic();
    let states = vec![
        state(&g, "center-lane"),
        state(&g, "left-lane"),
        state(&g, "center-lane"),
    ];
    let mut chooser = ScriptedChooser::new(vec![prod(&g, 3), prod(&g, 5)], states.clone(), 0);
    let traj = sample_with(&g, 2, &mut chooser).unwrap();
    let shape: Vec<(Vec<(u32, usize)>, &str)> = traj
        .steps
        .iter()
        .map(|s| {
            let frames = s
                .stack
                .frames()
                .iter()
                .map(|f| (g.production(f.production).index, f.cursor))
                .collect();
            (frames, g.terminals()[s.terminal.0].as_str())
        })
        .collect();
    assert_eq!(
        shape,
        vec![
            (vec![(3, 1), (5, 1)], "Left"),
            (vec![(3, 1), (5, 2)], "Right")
        ]
    );
    assert!(expansion_terminates(&g, &traj.steps[1].stack, 2));

    let pass = g.nonterminal("Pass").unwrap();
    let mut f = filter(&g, ZeroEvidencePolicy::Error);
    for (t, q) in states.iter().enumerate() {
        let obs = Observation {
            t,
            constraint: StateSet::singleton(g.space(), q),
        };
        let report = f.observe(&obs).unwrap();
        if t >= 1 {
            assert!(report.explain.unwrap().symbol(2, pass) > 0.0, "t={t}");
        }
    }
}

#[test]
fn zero_evidence_is_an_error_by_default() {
    let g = traffic();
    let mut f = filter(&g, ZeroEvidencePolicy::Error);
    f.observe(&lane_observation(&g, 0, "left-lane")).unwrap();
    // nothing moves from the left lane to the right lane in one step
    let err = f
        .observe(&lane_observation(&g, 1, "right-lane"))
        .unwrap_err();
    assert_eq!(err, InferenceError::ZeroEvidence { t: 1 });
    // the filter is still usable afterwards
    assert!(f.observe(&lane_observation(&g, 2, "left-lane")).is_ok());
}

#[test]
fn reinit_restarts_from_the_prior() {
    let g = traffic();
    let mut f = filter(&g, ZeroEvidencePolicy::Reinit);
    f.observe(&lane_observation(&g, 0, "left-lane")).unwrap();
    let r = f.observe(&lane_observation(&g, 1, "right-lane")).unwrap();
    assert!(r.reinitialized);
    assert!(r.explain.is_none());
    assert!((r.evidence - 0.3).abs() < 1e-12);
    let next = f.observe(&lane_observation(&g, 2, "right-lane")).unwrap();
    assert!(!next.reinitialized && next.explain.is_some());
}

#[test]
fn times_must_increase() {
    let g = traffic();
    let mut f = filter(&g, ZeroEvidencePolicy::Error);
    f.observe(&Observation::vacuous(&g, 2)).unwrap();
    let err = f.observe(&Observation::vacuous(&g, 2)).unwrap_err();
    assert_eq!(
        err,
        InferenceError::TimeOrder {
            previous: 2,
            found: 2
        }
    );
}

#[test]
fn observation_json_round_trips_and_rejects_garbage() {
    let g = traffic();
    let o = Observation::from_json(&g, r#"{"t":3,"observe":{"gap":["far","close"]}}"#).unwrap();
    assert_eq!(o.t, 3);
    assert_eq!(o.constraint.len(), 24);
    assert_eq!(Observation::from_json(&g, &o.to_json(&g)).unwrap(), o);
    assert!(Observation::from_json(&g, r#"{"t":0,"observe":{"speed":["x"]}}"#).is_err());
    assert!(Observation::from_json(&g, r#"{"t":0,"observe":{"gap":["x"]}}"#).is_err());
    assert!(Observation::from_json(&g, r#"{"t":0,"observe":{"gap":[]}}"#).is_err());
    assert!(Observation::from_json(&g, r#"{"t":0,"extra":1}"#).is_err());
}

#[test]
fn support_bound_is_enforced() {
    let g = traffic();
    let options = RecognizerOptions {
        support_bound: 10,
        ..RecognizerOptions::default()
    };
    let r = Recognizer::new(&g, options).unwrap();
    assert!(matches!(
        r.init_belief(&g.full_set()),
        Err(InferenceError::SupportTooLarge {
            size: 36,
            bound: 10
        })
    ));
}

#[test]
fn tables_are_consistent_with_the_report() {
    let g = traffic();
    let mut f = filter(&g, ZeroEvidencePolicy::Error);
    f.observe(&lane_observation(&g, 0, "center-lane")).unwrap();
    let report = f.observe(&Observation::vacuous(&g, 1)).unwrap();
    let rec = f.recognizer();
    let belief = f.belief().unwrap();
    let tables = rec.tables(belief);
    let total: f64 = tables.support().iter().map(|&q| tables.b_q(q)).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let drive = g.nonterminal("Drive").unwrap();
    let marginal: f64 = tables
        .support()
        .iter()
        .map(|&q| tables.b_q(q) * tables.b_n(1, drive, q))
        .sum();
    assert!((marginal - report.predict.symbol(1, drive)).abs() < 1e-12);
    assert!(belief.entry_count() >= tables.support().len());
}

#[test]
fn corrupted_update_is_caught_by_the_oracle() {
    let g = traffic();
    let obs: Vec<Observation> = vec![
        lane_observation(&g, 0, "center-lane"),
        Observation::vacuous(&g, 1),
        lane_observation(&g, 2, "left-lane"),
    ];
    let expected = reference_reports(&g, &obs, DEFAULT_ENTRY_BOUND).unwrap();
    let options = RecognizerOptions {
        corrupt_update: true,
        ..RecognizerOptions::default()
    };
    let mut f = Filter::new(&g, options, ZeroEvidencePolicy::Error).unwrap();
    let worst = obs
        .iter()
        .zip(&expected)
        .map(|(o, e)| f.observe(o).unwrap().deviation(e).max())
        .fold(0.0, f64::max);
    assert!(worst > 1e-6, "corruption went unnoticed: {worst}");
}
