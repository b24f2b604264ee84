//! State-annotated PCFG equivalent to a finite-state grammar.
//!
//! Nonterminal symbols are tuples `<q_i, X, q_f>`: `X` expanded starting in
//! state `q_i` and leaving the state at `q_f`. Terminals carry the transition
//! they cause, `<q, x, q'>`. With the inside weight
//! `beta(q_i, X, q_f)`, the production `<q_0, X, q_m> -> c_1 .. c_m` built
//! from production `a` gets probability `p_a(q_0) * prod w(c_k) / beta(q_0, X, q_m)`
//! where `w` is `beta` for tuple children and the transition probability for
//! terminal children. Tree probabilities then telescope to the grammar's.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::generation::{fresh_frames, Trajectory};
use crate::grammar::{NontermId, ProdId, Psdg, Symbol, TermId};

use super::OracleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PcfgSymbol {
    Start,
    Tuple {
        from: usize,
        symbol: NontermId,
        to: usize,
    },
    Terminal {
        from: usize,
        terminal: TermId,
        to: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcfgProduction {
    pub lhs: PcfgSymbol,
    /// The grammar production this rule instantiates; `None` for start rules.
    /// Distinct productions may share a right-hand side.
    pub source: Option<ProdId>,
    pub rhs: Vec<PcfgSymbol>,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct Pcfg {
    productions: Vec<PcfgProduction>,
    index: HashMap<(PcfgSymbol, Option<ProdId>, Vec<PcfgSymbol>), usize>,
}

/// A derivation tree. Terminal tuples are leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct PcfgTree {
    pub symbol: PcfgSymbol,
    pub production: Option<ProdId>,
    pub children: Vec<PcfgTree>,
}

impl Pcfg {
    pub fn from_productions(productions: Vec<PcfgProduction>) -> Self {
        let index = productions
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.lhs, p.source, p.rhs.clone()), i))
            .collect();
        Pcfg { productions, index }
    }

    pub fn productions(&self) -> &[PcfgProduction] {
        &self.productions
    }

    pub fn probability_of(
        &self,
        lhs: PcfgSymbol,
        source: Option<ProdId>,
        rhs: &[PcfgSymbol],
    ) -> Option<f64> {
        self.index
            .get(&(lhs, source, rhs.to_vec()))
            .map(|&i| self.productions[i].probability)
    }

    /// Distinct tuple nonterminals on either side of a production.
    pub fn nonterminal_count(&self) -> usize {
        self.symbols(|s| matches!(s, PcfgSymbol::Tuple { .. }))
    }

    pub fn terminal_count(&self) -> usize {
        self.symbols(|s| matches!(s, PcfgSymbol::Terminal { .. }))
    }

    fn symbols(&self, keep: impl Fn(&PcfgSymbol) -> bool) -> usize {
        let mut seen: Vec<PcfgSymbol> = self
            .productions
            .iter()
            .flat_map(|p| std::iter::once(p.lhs).chain(p.rhs.iter().copied()))
            .filter(|s| keep(s))
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Sum of production probabilities per left-hand side.
    pub fn lhs_mass(&self) -> BTreeMap<PcfgSymbol, f64> {
        let mut out = BTreeMap::new();
        for p in &self.productions {
            *out.entry(p.lhs).or_default() += p.probability;
        }
        out
    }

    /// `lhs -> rhs # prob` lines, preceded by a legend of state indices.
    pub fn to_text(&self, psdg: &Psdg) -> String {
        let space = psdg.space();
        let mut out = String::new();
        let mut used: Vec<usize> = self
            .productions
            .iter()
            .flat_map(|p| std::iter::once(p.lhs).chain(p.rhs.iter().copied()))
            .flat_map(|s| match s {
                PcfgSymbol::Start => vec![],
                PcfgSymbol::Tuple { from, to, .. } | PcfgSymbol::Terminal { from, to, .. } => {
                    vec![from, to]
                }
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        for q in used {
            let _ = writeln!(out, "# q{q} = {}", psdg.state_label(&space.point(q)));
        }
        for p in &self.productions {
            let rhs: Vec<String> = p.rhs.iter().map(|s| symbol_text(psdg, s)).collect();
            let from = p
                .source
                .map(|a| format!(" [prod {}]", psdg.production(a).index))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{} -> {} # {}{from}",
                symbol_text(psdg, &p.lhs),
                rhs.join(" "),
                p.probability
            );
        }
        out
    }
}

fn symbol_text(psdg: &Psdg, s: &PcfgSymbol) -> String {
    match *s {
        PcfgSymbol::Start => "START".into(),
        PcfgSymbol::Tuple { from, symbol, to } => {
            format!("<q{from},{},q{to}>", psdg.nonterminals()[symbol.0])
        }
        PcfgSymbol::Terminal { from, terminal, to } => {
            format!("<q{from}:{}:q{to}>", psdg.terminals()[terminal.0])
        }
    }
}

/// Natural log of a tree's probability: the product of its productions.
pub fn pcfg_tree_probability(pcfg: &Pcfg, tree: &PcfgTree) -> Result<f64, OracleError> {
    if tree.children.is_empty() {
        return Ok(0.0);
    }
    let rhs: Vec<PcfgSymbol> = tree.children.iter().map(|c| c.symbol).collect();
    let p = pcfg
        .probability_of(tree.symbol, tree.production, &rhs)
        .ok_or_else(|| OracleError::UnknownProduction(format!("{:?} -> {:?}", tree.symbol, rhs)))?;
    let mut lp = p.ln();
    for c in &tree.children {
        lp += pcfg_tree_probability(pcfg, c)?;
    }
    Ok(lp)
}

type Matrix = Vec<Vec<f64>>;

fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Solves `(I - b) x = a` restricted to rows that can reach a nonzero row of
/// `a`; other rows of the minimal nonnegative solution are zero.
fn solve_fixed_point(b: &Matrix, a: &Matrix) -> Matrix {
    let n = a.len();
    let mut live: Vec<bool> = a.iter().map(|row| row.iter().any(|&v| v > 0.0)).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            if !live[i] && (0..n).any(|k| b[i][k] > 0.0 && live[k]) {
                live[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let idx: Vec<usize> = (0..n).filter(|&i| live[i]).collect();
    let m = idx.len();
    // augmented [I - B | A] over live rows
    let mut aug: Vec<Vec<f64>> = idx
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            let mut row: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(c, &k)| f64::from(u8::from(r == c)) - b[i][k])
                .collect();
            row.extend_from_slice(&a[i]);
            row
        })
        .collect();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .expect("nonempty range");
        aug.swap(col, pivot);
        let d = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for r in 0..m {
            if r != col && aug[r][col] != 0.0 {
                let f = aug[r][col];
                let (src, dst) = if r < col {
                    let (lo, hi) = aug.split_at_mut(col);
                    (&hi[0], &mut lo[r])
                } else {
                    let (lo, hi) = aug.split_at_mut(r);
                    (&lo[col], &mut hi[0])
                };
                for (dv, sv) in dst.iter_mut().zip(src.iter()) {
                    *dv -= f * sv;
                }
            }
        }
    }
    let mut x = vec![vec![0.0; n]; n];
    for (r, &i) in idx.iter().enumerate() {
        for j in 0..n {
            x[i][j] = aug[r][m + j].max(0.0);
        }
    }
    x
}

/// Inside weights `beta[X][q][q']`: probability that `X`, expanded in state
/// `q`, completes leaving the state at `q'`.
fn inside_weights(psdg: &Psdg) -> Vec<Matrix> {
    let n = psdg.space().size();
    let nx = psdg.nonterminals().len();
    let term_mats: Vec<Matrix> = (0..psdg.terminals().len())
        .map(|x| {
            (0..n)
                .map(|q| {
                    (0..n)
                        .map(|r| psdg.transition_probability_at(q, TermId(x), r))
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut beta: Vec<Option<Matrix>> = vec![None; nx];
    // children before parents: deepest levels first
    let mut order: Vec<usize> = (0..nx).collect();
    order.sort_by_key(|&x| {
        std::cmp::Reverse(
            psdg.levels_of(NontermId(x))
                .iter()
                .max()
                .copied()
                .unwrap_or(0),
        )
    });
    let mut pending = order;
    while !pending.is_empty() {
        let mut rest = Vec::new();
        for &x in &pending {
            let ready = psdg.productions_of(NontermId(x)).iter().all(|&a| {
                let p = psdg.production(a);
                p.rhs[..p.effective_len()].iter().all(|s| match s {
                    Symbol::Nonterminal(y) => beta[y.0].is_some(),
                    Symbol::Terminal(_) => true,
                })
            });
            if !ready {
                rest.push(x);
                continue;
            }
            let mut a_mat = vec![vec![0.0; n]; n];
            let mut b_mat = vec![vec![0.0; n]; n];
            for &a in psdg.productions_of(NontermId(x)) {
                let p = psdg.production(a);
                let mut acc: Matrix = (0..n)
                    .map(|q| {
                        (0..n)
                            .map(|r| {
                                if q == r {
                                    psdg.production_probability_at(a, q)
                                } else {
                                    0.0
                                }
                            })
                            .collect()
                    })
                    .collect();
                for s in &p.rhs[..p.effective_len()] {
                    let w = match s {
                        Symbol::Terminal(t) => &term_mats[t.0],
                        Symbol::Nonterminal(y) => beta[y.0].as_ref().expect("ready"),
                    };
                    acc = mat_mul(&acc, w);
                }
                let target = if p.tail_recursive {
                    &mut b_mat
                } else {
                    &mut a_mat
                };
                for (trow, arow) in target.iter_mut().zip(&acc) {
                    for (t, v) in trow.iter_mut().zip(arow) {
                        *t += v;
                    }
                }
            }
            beta[x] = Some(solve_fixed_point(&b_mat, &a_mat));
        }
        assert!(rest.len() < pending.len(), "level graph is acyclic");
        pending = rest;
    }
    beta.into_iter().map(|b| b.expect("all solved")).collect()
}

/// Builds the equivalent PCFG, keeping only symbols reachable from `START`
/// through positive-probability productions. Start mass equals the
/// probability that the root expansion ever finishes.
pub fn to_pcfg(psdg: &Psdg, bound: usize) -> Result<Pcfg, OracleError> {
    let n = psdg.space().size();
    let blowup =
        (psdg.productions().len() as f64) * (n as f64).powi(psdg.max_production_len() as i32 + 1);
    if blowup > bound as f64 {
        return Err(OracleError::ExplosionBound { bound });
    }
    let beta = inside_weights(psdg);
    let mut productions = Vec::new();
    let start = psdg.start();
    let mut queue: Vec<PcfgSymbol> = Vec::new();
    let mut seen: HashMap<PcfgSymbol, ()> = HashMap::new();
    for q in 0..n {
        let p0 = psdg.prior_probability_at(q);
        for r in 0..n {
            let w = p0 * beta[start.0][q][r];
            if w > 0.0 {
                let s = PcfgSymbol::Tuple {
                    from: q,
                    symbol: start,
                    to: r,
                };
                productions.push(PcfgProduction {
                    lhs: PcfgSymbol::Start,
                    source: None,
                    rhs: vec![s],
                    probability: w,
                });
                if seen.insert(s, ()).is_none() {
                    queue.push(s);
                }
            }
        }
    }
    while let Some(sym) = queue.pop() {
        let PcfgSymbol::Tuple { from, symbol, to } = sym else {
            continue;
        };
        let total = beta[symbol.0][from][to];
        for &a in psdg.productions_of(symbol) {
            let pa = psdg.production_probability_at(a, from);
            if pa <= 0.0 {
                continue;
            }
            let rhs = &psdg.production(a).rhs;
            // every state sequence from -> s_1 -> ... -> to
            let mut partial: Vec<(Vec<PcfgSymbol>, usize, f64)> = vec![(Vec::new(), from, pa)];
            for (k, s) in rhs.iter().enumerate() {
                let last = k + 1 == rhs.len();
                let mut next = Vec::new();
                for (syms, cur, w) in &partial {
                    let ends: Vec<usize> = if last { vec![to] } else { (0..n).collect() };
                    for e in ends {
                        let (child, cw) = match *s {
                            Symbol::Terminal(t) => (
                                PcfgSymbol::Terminal {
                                    from: *cur,
                                    terminal: t,
                                    to: e,
                                },
                                psdg.transition_probability_at(*cur, t, e),
                            ),
                            Symbol::Nonterminal(y) => (
                                PcfgSymbol::Tuple {
                                    from: *cur,
                                    symbol: y,
                                    to: e,
                                },
                                beta[y.0][*cur][e],
                            ),
                        };
                        if cw > 0.0 {
                            let mut v = syms.clone();
                            v.push(child);
                            next.push((v, e, w * cw));
                        }
                    }
                }
                partial = next;
            }
            for (rhs_syms, _, w) in partial {
                for c in &rhs_syms {
                    if matches!(c, PcfgSymbol::Tuple { .. }) && seen.insert(*c, ()).is_none() {
                        queue.push(*c);
                    }
                }
                productions.push(PcfgProduction {
                    lhs: sym,
                    source: Some(a),
                    rhs: rhs_syms,
                    probability: w / total,
                });
            }
        }
    }
    productions.sort_by(|x, y| (x.lhs, x.source, &x.rhs).cmp(&(y.lhs, y.source, &y.rhs)));
    Ok(Pcfg::from_productions(productions))
}

/// The PCFG tree of a finished trajectory, rebuilt from its leftmost
/// derivation (the fresh productions in order of appearance).
pub fn trajectory_tree(psdg: &Psdg, traj: &Trajectory) -> Result<PcfgTree, OracleError> {
    if !traj.completed {
        return Err(OracleError::IncompleteTree);
    }
    let mut derivation: Vec<ProdId> = Vec::new();
    let mut prev = None;
    for step in &traj.steps {
        let fresh = fresh_frames(psdg, prev, &step.stack)
            .map_err(|e| OracleError::UnknownProduction(e.to_string()))?;
        derivation.extend(fresh.iter().map(|f| f.production));
        prev = Some(&step.stack);
    }
    let space = psdg.space();
    let state = |t: usize| space.index(traj.state(t));
    let mut next_prod = 0;
    let mut time = 1;
    fn build(
        psdg: &Psdg,
        symbol: NontermId,
        derivation: &[ProdId],
        next_prod: &mut usize,
        time: &mut usize,
        state: &dyn Fn(usize) -> usize,
    ) -> Result<PcfgTree, OracleError> {
        let from = state(*time - 1);
        let a = *derivation
            .get(*next_prod)
            .ok_or(OracleError::IncompleteTree)?;
        *next_prod += 1;
        let p = psdg.production(a);
        if p.lhs != symbol {
            return Err(OracleError::UnknownProduction(format!(
                "derivation order broken at production {}",
                p.index
            )));
        }
        let mut children = Vec::new();
        for &s in &p.rhs {
            match s {
                Symbol::Terminal(x) => {
                    children.push(PcfgTree {
                        symbol: PcfgSymbol::Terminal {
                            from: state(*time - 1),
                            terminal: x,
                            to: state(*time),
                        },
                        production: None,
                        children: Vec::new(),
                    });
                    *time += 1;
                }
                Symbol::Nonterminal(y) => {
                    children.push(build(psdg, y, derivation, next_prod, time, state)?)
                }
            }
        }
        Ok(PcfgTree {
            symbol: PcfgSymbol::Tuple {
                from,
                symbol,
                to: state(*time - 1),
            },
            production: Some(a),
            children,
        })
    }
    let root = build(
        psdg,
        psdg.start(),
        &derivation,
        &mut next_prod,
        &mut time,
        &state,
    )?;
    if next_prod != derivation.len() || time != traj.len() + 1 {
        return Err(OracleError::IncompleteTree);
    }
    Ok(PcfgTree {
        symbol: PcfgSymbol::Start,
        production: None,
        children: vec![root],
    })
}
