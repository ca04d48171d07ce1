//! Reconstructed trees: the genealogy of the sampled extant individuals with
//! every lineage that left no sampled descendant pruned away.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::GenealogyLog;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeNode {
    /// Sampling time for tips, branching time for internal nodes.
    pub time: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Individual id of a tip.
    pub label: Option<usize>,
}

/// A timed, ultrametric tree (or forest, when the sampled individuals
/// descend from several initial individuals).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructedTree {
    pub sample_time: f64,
    /// Individual ids of the tips; tip `i` is `nodes[i]`.
    pub tips: Vec<usize>,
    pub nodes: Vec<TreeNode>,
    pub roots: Vec<usize>,
    /// Internode durations `g_2, …, g_n` of a single-rooted tree with `n ≥ 2`
    /// tips; empty otherwise.
    pub internode: Vec<f64>,
}

impl ReconstructedTree {
    pub fn tip_count(&self) -> usize {
        self.tips.len()
    }

    pub fn is_single_rooted(&self) -> bool {
        self.roots.len() == 1
    }

    /// Branching times, oldest first.
    pub fn node_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.nodes[self.tips.len()..].iter().map(|n| n.time).collect();
        t.sort_by(f64::total_cmp);
        t
    }

    /// Time from the oldest root to the tips.
    pub fn span(&self) -> f64 {
        self.roots
            .iter()
            .map(|&r| self.sample_time - self.nodes[r].time)
            .fold(0.0, f64::max)
    }

    /// Newick text with branch lengths, one `;`-terminated line per root.
    pub fn newick(&self) -> String {
        let mut lines = Vec::with_capacity(self.roots.len());
        for &root in &self.roots {
            let mut out = String::new();
            // (node, next child to visit)
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let nd = &self.nodes[node];
                if *next == 0 && !nd.children.is_empty() {
                    out.push('(');
                }
                if *next < nd.children.len() {
                    if *next > 0 {
                        out.push(',');
                    }
                    let child = nd.children[*next];
                    *next += 1;
                    stack.push((child, 0));
                    continue;
                }
                if nd.children.is_empty() {
                    out.push_str(&nd.label.map_or_else(String::new, |l| format!("t{l}")));
                } else {
                    out.push(')');
                }
                if let Some(p) = nd.parent {
                    out.push_str(&format!(":{}", nd.time - self.nodes[p].time));
                }
                stack.pop();
            }
            out.push(';');
            lines.push(out);
        }
        lines.join("\n")
    }
}

/// Reconstructed tree of the individuals alive at `sample_time` that are
/// detectable. Each individual gets an independent `Exp(λ)` delay (drawn in
/// id order from the `seed` stream) and is detectable once its age exceeds
/// the delay; `λ = ∞` makes every extant individual detectable.
pub fn reconstruct_tree(log: &GenealogyLog, sample_time: f64, lambda: f64, seed: u64) -> Result<ReconstructedTree> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("detectability rate must be > 0, got {lambda}")));
    }
    if sample_time > log.horizon {
        return Err(Error::invalid("sample time beyond the simulated horizon"));
    }
    let mut rng = rng::stream(seed, 0);
    let delay = if lambda.is_finite() {
        Some(Exp::new(lambda).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let mut tips = Vec::new();
    for ind in &log.individuals {
        let d = delay.map_or(0.0, |dist| dist.sample(&mut rng));
        if ind.alive_at(sample_time) && sample_time - ind.birth >= d {
            tips.push(ind.id);
        }
    }
    reconstruct_from_tips(log, sample_time, &tips)
}

/// Reconstructed tree spanned by the given individuals, all alive at
/// `sample_time`.
pub fn reconstruct_from_tips(log: &GenealogyLog, sample_time: f64, tips: &[usize]) -> Result<ReconstructedTree> {
    if tips.is_empty() {
        return Err(Error::EmptyTree);
    }
    let n_ind = log.individuals.len();
    let mut is_tip = vec![false; n_ind];
    for &t in tips {
        if t >= n_ind || !log.individuals[t].alive_at(sample_time) {
            return Err(Error::invalid(format!("individual {t} is not alive at the sample time")));
        }
        is_tip[t] = true;
    }
    // Children with sampled descendants, per parent, in birth order. Ids
    // increase with birth time, so one reverse sweep settles `desc`.
    let mut desc = is_tip.clone();
    let mut kids: Vec<Vec<usize>> = vec![Vec::new(); n_ind];
    for ind in log.individuals.iter().rev() {
        if ind.birth > sample_time || !desc[ind.id] {
            continue;
        }
        if let Some(p) = ind.parent {
            desc[p] = true;
            kids[p].push(ind.id);
        }
    }
    for k in &mut kids {
        k.reverse();
    }
    let mut nodes: Vec<TreeNode> = tips
        .iter()
        .map(|&id| TreeNode {
            time: sample_time,
            parent: None,
            children: Vec::new(),
            label: Some(id),
        })
        .collect();
    // A birth splits the parent's lineage in the reconstructed tree when
    // the parent's own continuation also leads to a sampled individual.
    let mut node_of_birth: Vec<Option<usize>> = vec![None; n_ind];
    let mut branchings: Vec<Vec<usize>> = vec![Vec::new(); n_ind];
    for p in 0..n_ind {
        let k = &kids[p];
        for (idx, &c) in k.iter().enumerate() {
            if idx + 1 < k.len() || is_tip[p] {
                node_of_birth[c] = Some(nodes.len());
                branchings[p].push(c);
                nodes.push(TreeNode {
                    time: log.individuals[c].birth,
                    parent: None,
                    children: Vec::new(),
                    label: None,
                });
            }
        }
    }
    let ancestor = |mut lineage: usize, mut t: f64| -> Option<usize> {
        loop {
            let b = &branchings[lineage];
            let pos = b.partition_point(|&c| log.individuals[c].birth < t);
            if pos > 0 {
                return node_of_birth[b[pos - 1]];
            }
            if let Some(nb) = node_of_birth[lineage] {
                return Some(nb);
            }
            let ind = &log.individuals[lineage];
            lineage = ind.parent?;
            t = ind.birth;
        }
    };
    let mut parents = Vec::with_capacity(nodes.len());
    for (i, &id) in tips.iter().enumerate() {
        parents.push((i, ancestor(id, sample_time)));
    }
    for (c, slot) in node_of_birth.iter().enumerate() {
        if let Some(node) = *slot {
            let ind = &log.individuals[c];
            let p = ind.parent.expect("a branching has a parent");
            parents.push((node, ancestor(p, ind.birth)));
        }
    }
    let mut roots = Vec::new();
    for (node, parent) in parents {
        nodes[node].parent = parent;
        match parent {
            Some(p) => nodes[p].children.push(node),
            None => roots.push(node),
        }
    }
    roots.sort_unstable();
    let mut tree = ReconstructedTree {
        sample_time,
        tips: tips.to_vec(),
        nodes,
        roots,
        internode: Vec::new(),
    };
    if tree.is_single_rooted() && tips.len() >= 2 {
        let t = tree.node_times();
        let mut g: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        g.push(sample_time - t[t.len() - 1]);
        tree.internode = g;
    }
    Ok(tree)
}

/// The γ statistic of internode durations `g = [g_2, …, g_n]`, `n ≥ 3`.
pub fn gamma_statistic(g: &[f64]) -> Result<f64> {
    let n = g.len() + 1;
    if n < 3 {
        return Err(Error::invalid(format!("gamma needs at least 3 tips, got {n}")));
    }
    // weighted[k-2] = k g_k
    let weighted: Vec<f64> = g.iter().enumerate().map(|(i, gk)| (i + 2) as f64 * gk).collect();
    let total: f64 = weighted.iter().sum();
    let mut partial = 0.0;
    let mut nested = 0.0;
    for w in &weighted[..n - 2] {
        partial += w;
        nested += partial;
    }
    let m = (n - 2) as f64;
    let numerator = nested / m - 0.5 * total;
    Ok(numerator / (total * (1.0 / (12.0 * m)).sqrt()))
}

/// Internode durations of a Yule tree with `n` tips and speciation rate
/// `rate`: `g_k ~ Exp(k · rate)`.
pub fn yule_internode<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    (2..=n)
        .map(|k| {
            let e: f64 = rand_distr::Exp1.sample(rng);
            e / (k as f64 * rate)
        })
        .collect()
}
