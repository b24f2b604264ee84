//! Name resolution and semantic checks turning a [`RawGrammar`] into a [`Psdg`].

use std::collections::{BTreeSet, HashMap};

use super::diagnostics::{Diagnostic, DiagnosticKind as K};
use super::parse::{Pos, RawGrammar};
use super::{
    build_feature, CptRow, Feature, Guard, NontermId, ProbabilityFunction, ProdId, Production,
    Psdg, StatePoint, StateSpace, Symbol, TermId, DEFAULT_STATE_BOUND,
};

const DIST_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    /// Cap on the number of states enumerated per normalisation check.
    pub state_bound: usize,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            state_bound: DEFAULT_STATE_BOUND,
        }
    }
}

fn check_distribution(
    probs: &[f64],
    expected_len: usize,
    what: &str,
    pos: Pos,
    diags: &mut Vec<Diagnostic>,
) -> bool {
    if probs.len() != expected_len {
        diags.push(Diagnostic::new(
            K::BadDistribution,
            pos,
            format!(
                "{what} has {} entries, expected {expected_len}",
                probs.len()
            ),
        ));
        return false;
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        diags.push(Diagnostic::new(
            K::BadDistribution,
            pos,
            format!("{what} has entry {p} outside [0,1]"),
        ));
        return false;
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > DIST_TOL {
        diags.push(Diagnostic::new(
            K::BadDistribution,
            pos,
            format!("{what} sums to {sum}, not 1"),
        ));
        return false;
    }
    true
}

/// Validates a parsed grammar, collecting every problem found.
pub fn validate(raw: &RawGrammar, options: &ValidateOptions) -> Result<Psdg, Vec<Diagnostic>> {
    let mut diags = Vec::new();

    // features: names and domains
    let mut feature_ids: HashMap<&str, usize> = HashMap::new();
    for (i, f) in raw.features.iter().enumerate() {
        if feature_ids.insert(f.name.as_str(), i).is_some() {
            diags.push(Diagnostic::new(
                K::Duplicate,
                f.pos,
                format!("feature `{}` declared twice", f.name),
            ));
        }
        if f.values.is_empty() {
            diags.push(Diagnostic::new(
                K::BadDistribution,
                f.pos,
                format!("feature `{}` has no values", f.name),
            ));
        }
        let mut seen = BTreeSet::new();
        for (v, pos) in &f.values {
            if !seen.insert(v.as_str()) {
                diags.push(Diagnostic::new(
                    K::Duplicate,
                    *pos,
                    format!("value `{v}` repeated in feature `{}`", f.name),
                ));
            }
        }
    }
    let value_of =
        |fi: usize, label: &str| raw.features[fi].values.iter().position(|(v, _)| v == label);

    // symbols
    let mut nonterminals: Vec<String> = Vec::new();
    for p in &raw.productions {
        if !nonterminals.contains(&p.lhs.0) {
            nonterminals.push(p.lhs.0.clone());
        }
    }
    if raw.productions.is_empty() {
        diags.push(Diagnostic::new(
            K::EmptyRhs,
            (1, 1),
            "grammar has no productions",
        ));
    }
    let nt_id = |name: &str| nonterminals.iter().position(|n| n == name);
    let mut terminals: Vec<String> = Vec::new();
    if let Some(decl) = &raw.terminals {
        for (t, pos) in decl {
            if nt_id(t).is_some() {
                diags.push(Diagnostic::new(
                    K::Duplicate,
                    *pos,
                    format!("`{t}` is declared a terminal but has productions"),
                ));
            } else if terminals.contains(t) {
                diags.push(Diagnostic::new(
                    K::Duplicate,
                    *pos,
                    format!("terminal `{t}` declared twice"),
                ));
            } else {
                terminals.push(t.clone());
            }
        }
    }
    for p in &raw.productions {
        for (s, pos) in &p.rhs {
            if nt_id(s).is_some() || terminals.contains(s) {
                continue;
            }
            if raw.terminals.is_some() {
                diags.push(Diagnostic::new(
                    K::UndeclaredSymbol,
                    *pos,
                    format!("symbol `{s}` is neither a terminal nor a nonterminal"),
                ));
            } else {
                terminals.push(s.clone());
            }
        }
    }
    let t_id = |name: &str| terminals.iter().position(|n| n == name);

    let start = match &raw.start {
        Some((s, pos)) => match nt_id(s) {
            Some(i) => Some(NontermId(i)),
            None => {
                diags.push(Diagnostic::new(
                    K::UndeclaredSymbol,
                    *pos,
                    format!("start symbol `{s}` has no productions"),
                ));
                None
            }
        },
        None => {
            diags.push(Diagnostic::new(
                K::UndeclaredSymbol,
                (1, 1),
                "missing start symbol",
            ));
            None
        }
    };

    // priors and transition CPTs
    let mut features: Vec<Feature> = Vec::new();
    for f in &raw.features {
        let n = f.values.len();
        let mut ok = true;
        let prior = match &f.prior {
            Some((probs, pos)) => {
                ok &= check_distribution(
                    probs,
                    n,
                    &format!("prior of `{}`", f.name),
                    *pos,
                    &mut diags,
                );
                probs.clone()
            }
            None => {
                diags.push(Diagnostic::new(
                    K::BadDistribution,
                    f.pos,
                    format!("feature `{}` has no prior", f.name),
                ));
                ok = false;
                Vec::new()
            }
        };
        let mut parents = Vec::new();
        for (p, pos) in &f.parents {
            match feature_ids.get(p.as_str()) {
                Some(&i) => parents.push(i),
                None => {
                    diags.push(Diagnostic::new(
                        K::UndeclaredSymbol,
                        *pos,
                        format!("parent feature `{p}` is not declared"),
                    ));
                    ok = false;
                }
            }
        }
        if f.cpt.is_empty() {
            diags.push(Diagnostic::new(
                K::BadDistribution,
                f.pos,
                format!("feature `{}` has no cpt rows", f.name),
            ));
            ok = false;
        }
        let mut rows = Vec::new();
        for row in &f.cpt {
            let wildcard_only = row.parent_values.iter().all(|(v, _)| v.is_none());
            let parent_values = if row.parent_values.is_empty()
                || (f.parents.is_empty() && wildcard_only)
            {
                vec![None; parents.len()]
            } else if row.parent_values.len() != f.parents.len() {
                diags.push(Diagnostic::new(
                    K::BadDistribution,
                    row.pos,
                    format!(
                        "cpt row names {} parent values, `{}` has {} parents",
                        row.parent_values.len(),
                        f.name,
                        f.parents.len()
                    ),
                ));
                ok = false;
                continue;
            } else {
                let mut vals = Vec::new();
                for (k, (v, pos)) in row.parent_values.iter().enumerate() {
                    match v {
                        None => vals.push(None),
                        Some(label) => match parents.get(k).and_then(|&pf| value_of(pf, label)) {
                            Some(vi) => vals.push(Some(vi)),
                            None => {
                                diags.push(Diagnostic::new(
                                    K::UndeclaredSymbol,
                                    *pos,
                                    format!(
                                        "`{label}` is not a value of parent {}",
                                        f.parents[k].0
                                    ),
                                ));
                                ok = false;
                            }
                        },
                    }
                }
                vals
            };
            let terminal = match &row.terminal.0 {
                None => None,
                Some(t) => match t_id(t) {
                    Some(i) => Some(TermId(i)),
                    None => {
                        diags.push(Diagnostic::new(
                            K::UndeclaredSymbol,
                            row.terminal.1,
                            format!("cpt terminal `{t}` is not a terminal"),
                        ));
                        ok = false;
                        None
                    }
                },
            };
            ok &= check_distribution(
                &row.probs,
                n,
                &format!("cpt row of `{}`", f.name),
                row.pos,
                &mut diags,
            );
            rows.push(CptRow {
                parent_values,
                terminal,
                probs: row.probs.clone(),
            });
        }
        if !ok || n == 0 {
            continue;
        }
        let radices: Vec<usize> = parents
            .iter()
            .map(|&p| raw.features[p].values.len().max(1))
            .collect();
        match build_feature(
            f.name.clone(),
            f.values.iter().map(|(v, _)| v.clone()).collect(),
            prior,
            parents,
            rows,
            radices,
            terminals.len().max(1),
        ) {
            Ok(feat) => features.push(feat),
            Err(missing) => diags.push(Diagnostic::new(
                K::BadDistribution,
                f.pos,
                format!(
                    "cpt of `{}` leaves {} (parent values, terminal) combinations uncovered",
                    f.name,
                    missing.len()
                ),
            )),
        }
    }

    let space = StateSpace::new(raw.features.iter().map(|f| f.values.len().max(1)).collect());
    if space.is_none() {
        diags.push(Diagnostic::new(
            K::StateSpaceTooLarge,
            (1, 1),
            "joint state space overflows the index type",
        ));
    }

    // productions
    let mut indices: HashMap<u32, Pos> = HashMap::new();
    let mut productions: Vec<Production> = Vec::new();
    for p in &raw.productions {
        if let Some(prev) = indices.insert(p.index, p.pos) {
            diags.push(Diagnostic::new(
                K::Duplicate,
                p.pos,
                format!(
                    "production index {} already used at line {}",
                    p.index, prev.0
                ),
            ));
        }
        let lhs = NontermId(nt_id(&p.lhs.0).expect("lhs is a nonterminal"));
        if p.rhs.is_empty() {
            diags.push(Diagnostic::new(
                K::EmptyRhs,
                p.pos,
                format!("production {} has an empty right-hand side", p.index),
            ));
            continue;
        }
        let rhs: Vec<Symbol> = p
            .rhs
            .iter()
            .filter_map(|(s, _)| {
                nt_id(s)
                    .map(|i| Symbol::Nonterminal(NontermId(i)))
                    .or_else(|| t_id(s).map(|i| Symbol::Terminal(TermId(i))))
            })
            .collect();
        if rhs.len() != p.rhs.len() {
            continue;
        }
        if rhs == [Symbol::Nonterminal(lhs)] {
            diags.push(Diagnostic::new(
                K::NonTailRecursion,
                p.pos,
                format!("production {} rewrites `{}` to itself", p.index, p.lhs.0),
            ));
            continue;
        }
        let mut rules = Vec::new();
        let mut ok = true;
        for rule in &p.rules {
            let mut constraints = Vec::new();
            for cond in &rule.conditions {
                let Some(&fi) = feature_ids.get(cond.feature.0.as_str()) else {
                    diags.push(Diagnostic::new(
                        K::UndeclaredSymbol,
                        cond.feature.1,
                        format!("guard feature `{}` is not declared", cond.feature.0),
                    ));
                    ok = false;
                    continue;
                };
                let mut mask = vec![false; raw.features[fi].values.len()];
                for (v, pos) in &cond.values {
                    match value_of(fi, v) {
                        Some(vi) => mask[vi] = true,
                        None => {
                            diags.push(Diagnostic::new(
                                K::UndeclaredSymbol,
                                *pos,
                                format!("`{v}` is not a value of `{}`", cond.feature.0),
                            ));
                            ok = false;
                        }
                    }
                }
                constraints.push((fi, mask));
            }
            if !(0.0..=1.0).contains(&rule.value) {
                diags.push(Diagnostic::new(
                    K::BadDistribution,
                    rule.pos,
                    format!("rule probability {} outside [0,1]", rule.value),
                ));
                ok = false;
            }
            rules.push((Guard { constraints }, rule.value));
        }
        let default = match p.default {
            Some((v, pos)) => {
                if !(0.0..=1.0).contains(&v) {
                    diags.push(Diagnostic::new(
                        K::BadDistribution,
                        pos,
                        format!("default probability {v} outside [0,1]"),
                    ));
                    ok = false;
                }
                v
            }
            None if p.has_block => 0.0,
            None => 1.0,
        };
        if !ok {
            continue;
        }
        let tail_recursive = rhs.len() >= 2 && rhs.last() == Some(&Symbol::Nonterminal(lhs));
        productions.push(Production {
            index: p.index,
            lhs,
            rhs,
            probability: ProbabilityFunction { rules, default },
            tail_recursive,
        });
    }
    productions.sort_by_key(|p| p.index);

    let mut by_lhs = vec![Vec::new(); nonterminals.len()];
    for (i, p) in productions.iter().enumerate() {
        by_lhs[p.lhs.0].push(ProdId(i));
    }

    // level graph: non-tail nonterminal children sit one level lower
    let mut children: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nonterminals.len()];
    for p in &productions {
        for (k, s) in p.rhs.iter().enumerate() {
            if let Symbol::Nonterminal(c) = s {
                let is_tail = p.tail_recursive && k + 1 == p.rhs.len();
                if !is_tail {
                    children[p.lhs.0].insert(c.0);
                }
            }
        }
    }
    if let Some(cycle) = find_cycle(&children) {
        let names: Vec<&str> = cycle.iter().map(|&i| nonterminals[i].as_str()).collect();
        let pos = raw
            .productions
            .iter()
            .find(|p| p.lhs.0 == names[0])
            .map_or((1, 1), |p| p.pos);
        diags.push(Diagnostic::new(
            K::NonTailRecursion,
            pos,
            format!(
                "recursion outside trailing position: {}",
                names.join(" -> ")
            ),
        ));
    }

    if !diags.is_empty() {
        return Err(diags);
    }
    let space = space.expect("checked above");

    // normalisation over guard-distinguishable states
    for (x, prods) in by_lhs.iter().enumerate() {
        if let Err(d) = check_normalization(
            &nonterminals[x],
            prods,
            &productions,
            &features,
            &space,
            options.state_bound,
        ) {
            let pos = raw
                .productions
                .iter()
                .find(|p| p.lhs.0 == nonterminals[x])
                .map_or((1, 1), |p| p.pos);
            diags.push(Diagnostic {
                line: pos.0,
                column: pos.1,
                ..d
            });
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let start = start.expect("checked above");
    let mut levels: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nonterminals.len()];
    assign_levels(start.0, 1, &children, &mut levels);
    let depth = levels
        .iter()
        .flat_map(|l| l.iter().copied())
        .max()
        .unwrap_or(1);
    let max_len = productions.iter().map(|p| p.rhs.len()).max().unwrap_or(1);

    Ok(Psdg {
        features,
        terminals,
        nonterminals,
        start,
        productions,
        by_lhs,
        space,
        levels: levels
            .into_iter()
            .map(|l| l.into_iter().collect())
            .collect(),
        depth,
        max_len,
    })
}

fn assign_levels(
    n: usize,
    level: usize,
    children: &[BTreeSet<usize>],
    levels: &mut [BTreeSet<usize>],
) {
    if !levels[n].insert(level) {
        return;
    }
    for &c in &children[n] {
        assign_levels(c, level + 1, children, levels);
    }
}

fn find_cycle(children: &[BTreeSet<usize>]) -> Option<Vec<usize>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn dfs(
        n: usize,
        children: &[BTreeSet<usize>],
        mark: &mut [u8],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        mark[n] = 1;
        stack.push(n);
        for &c in &children[n] {
            if mark[c] == 1 {
                let from = stack.iter().position(|&s| s == c).expect("on stack");
                let mut cycle = stack[from..].to_vec();
                cycle.push(c);
                return Some(cycle);
            }
            if mark[c] == 0 {
                if let Some(cyc) = dfs(c, children, mark, stack) {
                    return Some(cyc);
                }
            }
        }
        stack.pop();
        mark[n] = 2;
        None
    }
    let mut mark = vec![0u8; children.len()];
    for n in 0..children.len() {
        if mark[n] == 0 {
            if let Some(c) = dfs(n, children, &mut mark, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}

/// Checks `sum_p p(q) = 1` for every state. Only guard features matter, and
/// values a feature's guards never separate behave identically, so one
/// representative per value class is enough.
fn check_normalization(
    name: &str,
    prods: &[ProdId],
    productions: &[Production],
    features: &[Feature],
    space: &StateSpace,
    bound: usize,
) -> Result<(), Diagnostic> {
    let mut scope: Vec<usize> = prods
        .iter()
        .flat_map(|p| productions[p.0].probability.scope())
        .collect();
    scope.sort_unstable();
    scope.dedup();

    let mut classes: Vec<Vec<usize>> = Vec::new();
    for &f in &scope {
        let masks: Vec<&Vec<bool>> = prods
            .iter()
            .flat_map(|p| productions[p.0].probability.rules.iter())
            .flat_map(|(g, _)| g.constraints.iter())
            .filter(|(cf, _)| *cf == f)
            .map(|(_, m)| m)
            .collect();
        let mut reps: Vec<usize> = Vec::new();
        for v in 0..space.radix(f) {
            let same = reps.iter().any(|&r| masks.iter().all(|m| m[r] == m[v]));
            if !same {
                reps.push(v);
            }
        }
        classes.push(reps);
    }
    let count = classes
        .iter()
        .try_fold(1usize, |acc, c| acc.checked_mul(c.len()));
    if count.is_none_or(|c| c > bound) {
        return Err(Diagnostic::new(
            K::StateSpaceTooLarge,
            (1, 1),
            format!("normalisation check for `{name}` exceeds the state bound {bound}"),
        ));
    }

    let mut cursor = vec![0usize; scope.len()];
    loop {
        let mut values = vec![0usize; space.num_features()];
        for (k, &f) in scope.iter().enumerate() {
            values[f] = classes[k][cursor[k]];
        }
        let q = StatePoint(values);
        let sum: f64 = prods
            .iter()
            .map(|p| productions[p.0].probability.eval(&q))
            .sum();
        if (sum - 1.0).abs() > NORM_TOL {
            let label = features
                .iter()
                .zip(q.values())
                .enumerate()
                .map(|(i, (f, &v))| {
                    if scope.contains(&i) {
                        format!("{}={}", f.name, f.values[v])
                    } else {
                        format!("{}=*", f.name)
                    }
                })
                .collect::<Vec<_>>()
                .join(",");
            return Err(Diagnostic::new(
                K::NormalizationViolation,
                (1, 1),
                format!("productions of `{name}` sum to {sum} in state ({label})"),
            ));
        }
        let mut k = scope.len();
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            cursor[k] += 1;
            if cursor[k] < classes[k].len() {
                break;
            }
            cursor[k] = 0;
        }
    }
}
