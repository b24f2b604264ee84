//! Benchmark fixtures: a warmed-up traffic filter and its observation stream.

use psdg::generation::sample_trajectory;
use psdg::inference::{Filter, Observation, RecognizerOptions, ZeroEvidencePolicy};
use psdg::{Psdg, StateSet, TRAFFIC_PSDG};

pub fn traffic() -> Psdg {
    Psdg::parse(TRAFFIC_PSDG).expect("bundled grammar is valid")
}

/// Observations of lane and gap only, taken from one sampled execution, so
/// each step leaves aggressive and near-exit hidden (|R| = 4).
pub fn partial_stream(psdg: &Psdg, horizon: usize, seed: u64) -> Vec<Observation> {
    let traj = sample_trajectory(psdg, horizon, seed);
    let space = psdg.space();
    (0..=traj.len())
        .map(|t| {
            let mut constraint = StateSet::full(space);
            let truth = traj.state(t);
            for f in 0..2 {
                constraint.restrict(f, &[truth.value(f)]);
            }
            Observation { t, constraint }
        })
        .collect()
}

/// A filter that has consumed `stream[..warmup]`.
pub fn warmed_filter<'g>(psdg: &'g Psdg, stream: &[Observation], warmup: usize) -> Filter<'g> {
    let mut f = Filter::new(
        psdg,
        RecognizerOptions::default(),
        ZeroEvidencePolicy::Error,
    )
    .expect("default options are valid");
    for o in &stream[..warmup] {
        f.observe(o)
            .expect("sampled evidence has positive probability");
    }
    f
}
