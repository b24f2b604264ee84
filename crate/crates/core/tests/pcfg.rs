use psdg::oracle::{enumerate_joint, pcfg_tree_probability, to_pcfg, trajectory_tree, OracleError};
use psdg::synth::{random_grammar, SynthLimits};
use psdg::{Psdg, TRAFFIC_PSDG};

const BOUND: usize = 10_000_000;

fn check_trees(g: &Psdg, horizon: usize) -> usize {
    let pcfg = to_pcfg(g, BOUND).unwrap();
    let table = enumerate_joint(g, horizon).unwrap();
    let mut checked = 0;
    for (traj, p) in &table.entries {
        if !traj.completed {
            continue;
        }
        let tree = trajectory_tree(g, traj).unwrap();
        let lp = pcfg_tree_probability(&pcfg, &tree).unwrap();
        let rel = (lp.exp() - p).abs() / p;
        assert!(rel <= 1e-12, "tree {lp} vs joint {}", p.ln());
        checked += 1;
    }
    checked
}

#[test]
fn tree_probabilities_agree_on_random_grammars() {
    let mut with_trees = 0;
    for seed in 0..30 {
        let g = random_grammar(seed, &SynthLimits::default());
        if check_trees(&g, 4) > 0 {
            with_trees += 1;
        }
    }
    assert!(with_trees >= 10);
}

#[test]
fn tree_probabilities_agree_on_traffic() {
    let g = Psdg::parse(TRAFFIC_PSDG).unwrap();
    assert!(check_trees(&g, 3) > 0);
}

#[test]
fn productions_are_normalised_per_tuple() {
    for seed in 0..20 {
        let g = random_grammar(seed, &SynthLimits::default());
        let pcfg = to_pcfg(&g, BOUND).unwrap();
        for (lhs, mass) in pcfg.lhs_mass() {
            if lhs != psdg::oracle::PcfgSymbol::Start {
                assert!((mass - 1.0).abs() < 1e-9, "{lhs:?} has mass {mass}");
            } else {
                assert!(mass <= 1.0 + 1e-9);
            }
        }
    }
}

#[test]
fn explosion_bound_is_enforced() {
    let g = Psdg::parse(TRAFFIC_PSDG).unwrap();
    assert_eq!(
        to_pcfg(&g, 1000).unwrap_err(),
        OracleError::ExplosionBound { bound: 1000 }
    );
}

#[test]
fn unfinished_trajectories_have_no_tree() {
    let g = Psdg::parse(TRAFFIC_PSDG).unwrap();
    let table = enumerate_joint(&g, 1).unwrap();
    let open = table.entries.iter().find(|(t, _)| !t.completed).unwrap();
    assert_eq!(
        trajectory_tree(&g, &open.0).unwrap_err(),
        OracleError::IncompleteTree
    );
}

#[test]
fn text_export_lists_every_production() {
    let g = random_grammar(2, &SynthLimits::default());
    let pcfg = to_pcfg(&g, BOUND).unwrap();
    let text = pcfg.to_text(&g);
    let rules = text.lines().filter(|l| l.contains(" -> ")).count();
    assert_eq!(rules, pcfg.productions().len());
    assert!(text.lines().any(|l| l.starts_with("START -> ")));
}
