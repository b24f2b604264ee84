//! Synthetic grammars for property tests and scaling measurements.
//!
//! [`random_grammar`] draws small finite-state grammars in the `.psdg` text
//! format, [`observation_stream`] widens a sampled execution into product-form
//! observations, and [`spine_grammar`] builds a family whose size parameters
//! can be varied one at a time.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::generation::sample_trajectory;
use crate::grammar::{Psdg, StateSet};
use crate::inference::Observation;

/// Upper limits for [`random_grammar`].
#[derive(Debug, Clone, Copy)]
pub struct SynthLimits {
    pub nonterminals: usize,
    pub states: usize,
    pub productions: usize,
    pub max_len: usize,
    pub terminals: usize,
}

impl Default for SynthLimits {
    fn default() -> Self {
        SynthLimits {
            nonterminals: 4,
            states: 8,
            productions: 8,
            max_len: 3,
            terminals: 3,
        }
    }
}

fn weights(rng: &mut ChaCha8Rng, n: usize, max: u32, force: Option<usize>) -> Vec<f64> {
    let mut w: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=max)).collect();
    if let Some(i) = force {
        w[i] = w[i].max(1);
    }
    if w.iter().all(|&x| x == 0) {
        let i = rng.gen_range(0..n);
        w[i] = 1;
    }
    let total: u32 = w.iter().sum();
    w.iter().map(|&x| f64::from(x) / f64::from(total)).collect()
}

fn list(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Grammar text drawn from `seed`. Every nonterminal has a non-recursive
/// production with positive probability in every state, so every expansion
/// can finish. Nonterminals only reference later ones, plus trailing
/// self-reference, so the depth never exceeds the nonterminal count.
pub fn random_grammar_text(seed: u64, limits: &SynthLimits) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();

    let mut radices = Vec::new();
    let mut size = 1;
    loop {
        let room = limits.states / size;
        if room < 2 || (!radices.is_empty() && rng.gen_bool(0.4)) || radices.len() == 3 {
            break;
        }
        let r = rng.gen_range(2..=room.min(4));
        radices.push(r);
        size *= r;
    }
    if radices.is_empty() {
        radices.push(1);
    }
    let nterm = rng.gen_range(1..=limits.terminals.max(1));
    let terminals: Vec<String> = (0..nterm).map(|i| format!("t{i}")).collect();
    let _ = writeln!(out, "terminals {}\n", terminals.join(", "));

    for (f, &r) in radices.iter().enumerate() {
        let values: Vec<String> = (0..r).map(|v| format!("v{v}")).collect();
        let prior = weights(&mut rng, r, 3, None);
        let _ = writeln!(
            out,
            "feature f{f} {{\n  values: {} ;\n  prior: {} ;",
            values.join(", "),
            list(&prior)
        );
        let mut parents: Vec<usize> = (0..radices.len()).filter(|_| rng.gen_bool(0.5)).collect();
        parents.truncate(2);
        if parents.is_empty() {
            let _ = writeln!(
                out,
                "  cpt: * -> {}\n}}\n",
                list(&weights(&mut rng, r, 3, None))
            );
            continue;
        }
        let names: Vec<String> = parents.iter().map(|p| format!("f{p}")).collect();
        let _ = writeln!(out, "  parents: {} ;", names.join(", "));
        let combos: Vec<Vec<usize>> = parents.iter().fold(vec![Vec::new()], |acc, &p| {
            acc.iter()
                .flat_map(|c| {
                    (0..radices[p]).map(move |v| {
                        let mut c = c.clone();
                        c.push(v);
                        c
                    })
                })
                .collect()
        });
        let mut rows = Vec::new();
        for c in &combos {
            let vals: Vec<String> = c.iter().map(|v| format!("v{v}")).collect();
            if rng.gen_bool(0.3) {
                let t = terminals.choose(&mut rng).expect("nonempty");
                rows.push(format!(
                    "  cpt: {} | {t} -> {}",
                    vals.join(", "),
                    list(&weights(&mut rng, r, 3, None))
                ));
            }
            rows.push(format!(
                "  cpt: {} | * -> {}",
                vals.join(", "),
                list(&weights(&mut rng, r, 3, None))
            ));
        }
        let _ = writeln!(out, "{}\n}}\n", rows.join(" ;\n"));
    }

    let max_nts = limits.nonterminals.min(limits.productions).max(1);
    let n = rng.gen_range(1..=max_nts);
    let mut counts = vec![1usize; n];
    for _ in n..limits.productions {
        if rng.gen_bool(0.6) {
            let i = rng.gen_range(0..n);
            counts[i] += 1;
        }
    }
    let _ = writeln!(out, "start N0\n");
    let mut index = 0;
    for i in 0..n {
        let mut rhss: Vec<Vec<String>> = Vec::new();
        for k in 0..counts[i] {
            let len = rng.gen_range(1..=limits.max_len.max(1));
            let mut rhs: Vec<String> = (0..len)
                .map(|_| {
                    if i + 1 < n && rng.gen_bool(0.35) {
                        format!("N{}", rng.gen_range(i + 1..n))
                    } else {
                        terminals.choose(&mut rng).expect("nonempty").clone()
                    }
                })
                .collect();
            if k == 0 && i + 1 < n {
                let pos = rng.gen_range(0..len);
                rhs[pos] = format!("N{}", i + 1);
            }
            if k > 0 && len >= 2 && rng.gen_bool(0.5) {
                rhs[len - 1] = format!("N{i}");
            }
            rhss.push(rhs);
        }
        let guard = if radices[0] > 1 && rng.gen_bool(0.7) {
            Some(rng.gen_range(0..radices.len()))
        } else {
            None
        };
        let classes = guard.map_or(1, |g| radices[g]);
        let table: Vec<Vec<f64>> = (0..classes)
            .map(|_| weights(&mut rng, rhss.len(), 4, Some(0)))
            .collect();
        for (k, rhs) in rhss.iter().enumerate() {
            let mut block = String::new();
            if let Some(g) = guard {
                for (v, row) in table.iter().enumerate().take(classes - 1) {
                    let _ = write!(block, "rule f{g} in {{v{v}}} : {} ; ", row[k]);
                }
            }
            let _ = write!(block, "default: {}", table[classes - 1][k]);
            let _ = writeln!(out, "prod {index}: N{i} -> {} {{ {block} }}", rhs.join(" "));
            index += 1;
        }
    }
    out
}

pub fn random_grammar(seed: u64, limits: &SynthLimits) -> Psdg {
    let text = random_grammar_text(seed, limits);
    Psdg::parse(&text)
        .unwrap_or_else(|e| panic!("synthetic grammar {seed} is invalid: {e}\n{text}"))
}

/// Up to `max_len` observations at increasing times starting from 0 or 1,
/// each a product-form widening of one sampled execution's true state, so
/// the stream always has positive probability.
pub fn observation_stream(psdg: &Psdg, seed: u64, max_len: usize) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let len = rng.gen_range(1..=max_len.max(1));
    let mut times = Vec::new();
    let mut t = usize::from(rng.gen_bool(0.2));
    while times.len() < len {
        times.push(t);
        t += if rng.gen_bool(0.2) { 2 } else { 1 };
    }
    let horizon = *times.last().expect("nonempty");
    let traj = sample_trajectory(psdg, horizon, rng.gen());
    let space = psdg.space();
    times
        .into_iter()
        .map(|t| {
            // a finished execution keeps its final state
            let truth = traj.state(t.min(traj.len()));
            let masks = (0..space.num_features())
                .map(|f| {
                    let r = space.radix(f);
                    let mode = rng.gen_range(0..3);
                    (0..r)
                        .map(|v| {
                            v == truth.value(f) || mode == 1 || (mode == 2 && rng.gen_bool(0.5))
                        })
                        .collect()
                })
                .collect();
            Observation {
                t,
                constraint: StateSet::from_masks(space, masks).expect("contains the true value"),
            }
        })
        .collect()
}

/// Size parameters of [`spine_grammar`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpineShape {
    /// Number of states (one feature).
    pub states: usize,
    /// Chain length below the root.
    pub depth: usize,
    /// Payload productions of `W` besides the short one.
    pub payloads: usize,
    /// Length of every long payload.
    pub len: usize,
}

impl SpineShape {
    /// `S -> Z1 S`, one production per `Z`, the payloads and `W -> x`.
    pub fn production_count(&self) -> usize {
        2 + self.depth + self.payloads
    }
}

/// A grammar whose reachable stack configurations number about
/// `depth * (payloads * len + 1)`, with uniform state dynamics:
///
/// ```text
/// S  -> Z1 S
/// Zl -> W Z(l+1)     for l < depth
/// Zd -> W
/// W  -> x x .. x     (payloads alternatives of length len)
/// W  -> x
/// ```
///
/// The short alternative desynchronises executions, so after a few cycles
/// every configuration has positive probability at every step.
pub fn spine_grammar(shape: &SpineShape) -> String {
    let SpineShape {
        states,
        depth,
        payloads,
        len,
    } = *shape;
    let mut out = String::from("terminals x\n\n");
    let values: Vec<String> = (0..states).map(|v| format!("s{v}")).collect();
    let uniform = vec![1.0 / states as f64; states];
    let _ = writeln!(
        out,
        "feature s {{\n  values: {} ;\n  prior: {} ;\n  cpt: * -> {}\n}}\n",
        values.join(", "),
        list(&uniform),
        list(&uniform)
    );
    let _ = writeln!(out, "start S\n\nprod 0: S -> Z1 S");
    let mut index = 1;
    for l in 1..=depth {
        if l < depth {
            let _ = writeln!(out, "prod {index}: Z{l} -> W Z{}", l + 1);
        } else {
            let _ = writeln!(out, "prod {index}: Z{l} -> W");
        }
        index += 1;
    }
    let body = vec!["x"; len].join(" ");
    let p = 1.0 / (payloads + 1) as f64;
    for _ in 0..payloads {
        let _ = writeln!(out, "prod {index}: W -> {body} {{ default: {p} }}");
        index += 1;
    }
    let _ = writeln!(out, "prod {index}: W -> x {{ default: {p} }}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_grammars_respect_limits() {
        let limits = SynthLimits::default();
        for seed in 0..200 {
            let g = random_grammar(seed, &limits);
            assert!(g.nonterminals().len() <= 4);
            assert!(g.space().size() <= 8);
            assert!(g.productions().len() <= 8);
            assert!(g.depth() <= 4);
            assert!(g.max_production_len() <= 3);
        }
    }

    #[test]
    fn streams_are_increasing_and_short() {
        let g = random_grammar(3, &SynthLimits::default());
        for seed in 0..50 {
            let obs = observation_stream(&g, seed, 5);
            assert!(!obs.is_empty() && obs.len() <= 5);
            assert!(obs.windows(2).all(|w| w[0].t < w[1].t));
        }
    }

    #[test]
    fn spine_has_expected_shape() {
        let shape = SpineShape {
            states: 3,
            depth: 2,
            payloads: 4,
            len: 2,
        };
        let g = Psdg::parse(&spine_grammar(&shape)).unwrap();
        assert_eq!(g.productions().len(), shape.production_count());
        assert_eq!(g.depth(), 4);
        assert_eq!(g.space().size(), 3);
    }
}
