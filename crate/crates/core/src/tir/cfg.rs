//! Control-flow analyses: predecessor/successor maps, dominators via
//! iterative dataflow, back edges, natural-loop nesting depth, and critical
//! edges. Needed by the feature extractor, LICM, unrolling, CFG cleanup, and
//! the cycle model.

use super::Program;
use std::collections::{BTreeMap, BTreeSet};

/// A natural loop: all back edges targeting the same header, merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaturalLoop {
    pub header: String,
    /// Blocks in the loop, header included.
    pub body: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfgInfo {
    /// Block labels in layout order.
    pub labels: Vec<String>,
    /// Deduplicated predecessor labels per block, in layout order of the pred.
    pub preds: BTreeMap<String, Vec<String>>,
    /// Deduplicated successor labels per block, in terminator order.
    pub succs: BTreeMap<String, Vec<String>>,
    /// Dominator sets, reachable blocks only. `dom[b]` contains `b`.
    pub dom: BTreeMap<String, BTreeSet<String>>,
    /// Edges `(from, to)` where `to` dominates `from` (reachable blocks only).
    pub back_edges: Vec<(String, String)>,
    /// Natural loops merged by header, outermost inclusion not implied.
    pub loops: Vec<NaturalLoop>,
    /// Number of natural loops containing each block; 0 for unreachable blocks.
    pub loop_depth: BTreeMap<String, u32>,
    /// Edges whose source has >1 successor and target >1 predecessor.
    pub critical_edges: Vec<(String, String)>,
    pub reachable: BTreeSet<String>,
}

impl CfgInfo {
    pub fn depth(&self, label: &str) -> u32 {
        self.loop_depth.get(label).copied().unwrap_or(0)
    }

    /// Whether `a` dominates `b`. Unreachable blocks dominate nothing and are
    /// dominated by nothing under this query.
    pub fn dominates(&self, a: &str, b: &str) -> bool {
        self.dom.get(b).map_or(false, |d| d.contains(a))
    }

    /// All edges `(from, to)` with duplicates removed.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for label in &self.labels {
            for succ in &self.succs[label] {
                out.push((label.clone(), succ.clone()));
            }
        }
        out
    }
}

pub fn analyze_cfg(p: &Program) -> CfgInfo {
    let f = p.main();
    let labels: Vec<String> = f.blocks.iter().map(|b| b.label.clone()).collect();
    let order: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();

    let mut succs: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut preds: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for l in &labels {
        succs.insert(l.clone(), Vec::new());
        preds.insert(l.clone(), Vec::new());
    }
    for b in &f.blocks {
        let ss: Vec<String> = b
            .successor_labels()
            .into_iter()
            .map(str::to_owned)
            .collect();
        succs.insert(b.label.clone(), ss);
    }
    for l in &labels {
        for s in &succs[l] {
            preds.get_mut(s).expect("branch target exists").push(l.clone());
        }
    }
    // Deterministic pred order: layout order of the predecessor block.
    for ps in preds.values_mut() {
        ps.sort_by_key(|l| order[l.as_str()]);
        ps.dedup();
    }

    // Reachability from the entry block.
    let entry = labels[0].clone();
    let mut reachable: BTreeSet<String> = BTreeSet::new();
    let mut stack = vec![entry.clone()];
    while let Some(l) = stack.pop() {
        if reachable.insert(l.clone()) {
            for s in &succs[&l] {
                stack.push(s.clone());
            }
        }
    }

    // Iterative dominator dataflow over reachable blocks, to fixpoint.
    let all_reachable: BTreeSet<String> = reachable.clone();
    let mut dom: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for l in &labels {
        if !reachable.contains(l) {
            continue;
        }
        if *l == entry {
            dom.insert(l.clone(), std::iter::once(entry.clone()).collect());
        } else {
            dom.insert(l.clone(), all_reachable.clone());
        }
    }
    let mut changed = true;
    while changed {
        changed = false;
        for l in &labels {
            if *l == entry || !reachable.contains(l) {
                continue;
            }
            let mut inter: Option<BTreeSet<String>> = None;
            for pd in &preds[l] {
                if !reachable.contains(pd) {
                    continue;
                }
                let pd_dom = &dom[pd];
                inter = Some(match inter {
                    None => pd_dom.clone(),
                    Some(acc) => acc.intersection(pd_dom).cloned().collect(),
                });
            }
            let mut new = inter.unwrap_or_default();
            new.insert(l.clone());
            if new != dom[l] {
                dom.insert(l.clone(), new);
                changed = true;
            }
        }
    }

    // Back edges: u -> v where v dominates u.
    let mut back_edges = Vec::new();
    for l in &labels {
        if !reachable.contains(l) {
            continue;
        }
        for s in &succs[l] {
            if reachable.contains(s) && dom[l].contains(s) {
                back_edges.push((l.clone(), s.clone()));
            }
        }
    }

    // Natural loop of a back edge (u, v): v plus everything reaching u
    // without passing through v. Loops sharing a header are merged.
    let mut loops_by_header: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (u, v) in &back_edges {
        let body = loops_by_header.entry(v.clone()).or_default();
        body.insert(v.clone());
        let mut stack = vec![u.clone()];
        while let Some(n) = stack.pop() {
            if body.insert(n.clone()) {
                for pd in &preds[&n] {
                    if reachable.contains(pd) {
                        stack.push(pd.clone());
                    }
                }
            }
        }
    }
    let loops: Vec<NaturalLoop> = loops_by_header
        .iter()
        .map(|(header, body)| NaturalLoop {
            header: header.clone(),
            body: body.clone(),
        })
        .collect();

    let mut loop_depth: BTreeMap<String, u32> = BTreeMap::new();
    for l in &labels {
        let d = loops.iter().filter(|lp| lp.body.contains(l)).count() as u32;
        loop_depth.insert(l.clone(), d);
    }

    let mut critical_edges = Vec::new();
    for l in &labels {
        if succs[l].len() <= 1 {
            continue;
        }
        for s in &succs[l] {
            if preds[s].len() > 1 {
                critical_edges.push((l.clone(), s.clone()));
            }
        }
    }

    CfgInfo {
        labels,
        preds,
        succs,
        dom,
        back_edges,
        loops,
        loop_depth,
        critical_edges,
        reachable,
    }
}
