//! Gradient-boosted regression trees for squared loss.
//!
//! Trees are grown level by level with exact greedy split search over
//! presorted feature columns. With residuals `r = y − F` and a constant
//! Hessian, a leaf holding residual sum `S` over `n` rows takes weight
//! `S/(n+λ)` and a split has gain
//! `½[S_L²/(n_L+λ) + S_R²/(n_R+λ) − S²/(n+λ)]`; splits are kept when the gain
//! exceeds `γ`. A finished tree is added (scaled by `η`) only if it lowers the
//! regularized training objective `½Σ(y−F)² + Σ_m(γT_m + ½λ‖ηω_m‖²)`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::{split, FeatureMatrix};
use crate::seed;

const FORMAT_HEADER: &str = "floodloss-gbt 1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub learning_rate: f64,
    pub colsample: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub max_rounds: usize,
    /// Rounds without validation improvement before stopping.
    pub patience: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            colsample: 1.0,
            max_depth: 6,
            subsample: 1.0,
            gamma: 0.0,
            lambda: 1.0,
            max_rounds: 100,
            patience: 50,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must lie in (0,1], got {v}")))
            }
        };
        unit("learning_rate", self.learning_rate)?;
        unit("colsample", self.colsample)?;
        unit("subsample", self.subsample)?;
        if self.max_depth < 1 {
            return Err(invalid("max_depth must be at least 1"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) || !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("gamma and lambda must be finite and ≥ 0, got {} and {}", self.gamma, self.lambda)));
        }
        if self.max_rounds < 1 {
            return Err(invalid("max_rounds must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize, gain: f64 },
    Leaf { weight: f64 },
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { weight } => return weight,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    pub base: f64,
    pub trees: Vec<Tree>,
    pub params: GbtParams,
    pub feature_names: Vec<String>,
    /// Boosting rounds actually run (including rounds whose tree was rejected).
    pub rounds: usize,
    /// Regularized training objective after the base and after every kept tree.
    pub objective: Vec<f64>,
}

struct BuildNode {
    sum: f64,
    count: usize,
    depth: usize,
    split: Option<(usize, f64, f64, usize, usize)>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    left_sum: f64,
    left_count: usize,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t > a {
        t
    } else {
        b
    }
}

struct Columns {
    /// Column-major copy of the training inputs.
    values: Vec<Vec<f64>>,
    /// Row indices sorted by value, per column.
    order: Vec<Vec<u32>>,
}

impl Columns {
    fn new(x: &FeatureMatrix) -> Self {
        let p = x.n_cols();
        let values: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
        let order = values
            .iter()
            .map(|col| {
                let mut o: Vec<u32> = (0..col.len() as u32).collect();
                o.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                o
            })
            .collect();
        Self { values, order }
    }
}

fn gain(sl: f64, nl: usize, sr: f64, nr: usize, lambda: f64) -> f64 {
    let s = sl + sr;
    let n = nl + nr;
    0.5 * (sl * sl / (nl as f64 + lambda) + sr * sr / (nr as f64 + lambda) - s * s / (n as f64 + lambda))
}

/// Scan one feature across every active node, returning the best split per slot.
fn scan_feature(
    cols: &Columns,
    f: usize,
    residual: &[f64],
    slot_of: &[u32],
    slot_stats: &[(f64, usize)],
    lambda: f64,
) -> Vec<Option<Candidate>> {
    let k = slot_stats.len();
    let mut sum_left = vec![0.0; k];
    let mut n_left = vec![0usize; k];
    let mut last = vec![f64::NEG_INFINITY; k];
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    let col = &cols.values[f];
    for &row in &cols.order[f] {
        let row = row as usize;
        let s = slot_of[row];
        if s == u32::MAX {
            continue;
        }
        let s = s as usize;
        let v = col[row];
        if n_left[s] > 0 && v > last[s] {
            let (tot, cnt) = slot_stats[s];
            let g = gain(sum_left[s], n_left[s], tot - sum_left[s], cnt - n_left[s], lambda);
            if best[s].is_none_or(|b| g > b.gain) {
                best[s] = Some(Candidate {
                    gain: g,
                    feature: f,
                    threshold: midpoint(last[s], v),
                    left_sum: sum_left[s],
                    left_count: n_left[s],
                });
            }
        }
        sum_left[s] += residual[row];
        n_left[s] += 1;
        last[s] = v;
    }
    best
}

fn build_tree(cols: &Columns, residual: &[f64], in_sample: &[bool], features: &[usize], p: &GbtParams) -> Tree {
    let n = residual.len();
    let mut nodes = vec![BuildNode { sum: 0.0, count: 0, depth: 0, split: None }];
    let mut node_of = vec![u32::MAX; n];
    for i in 0..n {
        if in_sample[i] {
            node_of[i] = 0;
            nodes[0].sum += residual[i];
            nodes[0].count += 1;
        }
    }
    let mut active: Vec<usize> = if nodes[0].count >= 2 && p.max_depth > 0 { vec![0] } else { vec![] };
    while !active.is_empty() {
        let mut slot_of_node = vec![u32::MAX; nodes.len()];
        for (s, &id) in active.iter().enumerate() {
            slot_of_node[id] = s as u32;
        }
        let slot_of: Vec<u32> = node_of.iter().map(|&nd| if nd == u32::MAX { u32::MAX } else { slot_of_node[nd as usize] }).collect();
        let stats: Vec<(f64, usize)> = active.iter().map(|&id| (nodes[id].sum, nodes[id].count)).collect();
        let per_feature: Vec<Vec<Option<Candidate>>> = features
            .par_iter()
            .map(|&f| scan_feature(cols, f, residual, &slot_of, &stats, p.lambda))
            .collect();
        let mut next = Vec::new();
        let mut split_slots = Vec::new();
        for (s, &id) in active.iter().enumerate() {
            // Features are visited in ascending order, so ties keep the lowest index.
            let mut best: Option<Candidate> = None;
            for cand in per_feature.iter().filter_map(|v| v[s]) {
                if best.is_none_or(|b| cand.gain > b.gain) {
                    best = Some(cand);
                }
            }
            let Some(b) = best.filter(|b| b.gain > p.gamma) else { continue };
            let depth = nodes[id].depth + 1;
            let l = nodes.len();
            nodes.push(BuildNode { sum: b.left_sum, count: b.left_count, depth, split: None });
            nodes.push(BuildNode { sum: nodes[id].sum - b.left_sum, count: nodes[id].count - b.left_count, depth, split: None });
            nodes[id].split = Some((b.feature, b.threshold, b.gain, l, l + 1));
            split_slots.push(id);
            for c in [l, l + 1] {
                if nodes[c].count >= 2 && depth < p.max_depth {
                    next.push(c);
                }
            }
        }
        if split_slots.is_empty() {
            break;
        }
        for i in 0..n {
            let nd = node_of[i];
            if nd == u32::MAX {
                continue;
            }
            if let Some((f, t, _, l, r)) = nodes[nd as usize].split {
                node_of[i] = if cols.values[f][i] < t { l as u32 } else { r as u32 };
            }
        }
        active = next;
    }
    // Renumber in preorder.
    let mut out = Vec::with_capacity(nodes.len());
    fn emit(nodes: &[BuildNode], id: usize, lambda: f64, out: &mut Vec<Node>) -> usize {
        let me = out.len();
        match nodes[id].split {
            None => out.push(Node::Leaf { weight: nodes[id].sum / (nodes[id].count as f64 + lambda) }),
            Some((feature, threshold, gain, l, r)) => {
                out.push(Node::Leaf { weight: 0.0 });
                let left = emit(nodes, l, lambda, out);
                let right = emit(nodes, r, lambda, out);
                out[me] = Node::Split { feature, threshold, left, right, gain };
            }
        }
        me
    }
    emit(&nodes, 0, p.lambda, &mut out);
    Tree { nodes: out }
}

fn check_y(y: &[f64]) -> Result<()> {
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("training targets must be finite, found {v}")));
    }
    Ok(())
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Train a boosted ensemble on `x` (targets from `x.y()`). When `val` is given,
/// training stops after `patience` rounds without validation improvement and
/// the ensemble is truncated to its best validation round.
pub fn gbt_train(x: &FeatureMatrix, params: &GbtParams, val: Option<&FeatureMatrix>, seed: u64) -> Result<GbtModel> {
    params.validate()?;
    let n = x.n_rows();
    if n < 2 {
        return Err(invalid(format!("need at least 2 training rows, got {n}")));
    }
    check_y(x.y())?;
    let p = x.n_cols();
    if let Some(v) = val {
        check_y(v.y())?;
        if v.n_cols() != p {
            return Err(Error::DimensionMismatch { expected: p, got: v.n_cols() });
        }
    }
    let y = x.y();
    let base = y.iter().sum::<f64>() / n as f64;
    let cols = Columns::new(x);
    let mut f = vec![base; n];
    let mut f_val = val.map(|v| vec![base; v.n_rows()]);
    let mut rng = seed::rng(seed);
    let mut trees: Vec<Tree> = Vec::new();
    let sq = |f: &[f64]| 0.5 * y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let mut objective = vec![sq(&f)];
    let full = params.subsample >= 1.0 && params.colsample >= 1.0;
    let n_rows = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let n_feat = ((params.colsample * p as f64).round() as usize).clamp(1, p.max(1));
    let mut best = val.map(|v| (rmse(v.y(), f_val.as_ref().unwrap()), 0usize));
    let mut since_best = 0;
    let mut rounds = 0;
    let eta = params.learning_rate;
    for _ in 0..params.max_rounds {
        rounds += 1;
        let residual: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
        let mut in_sample = vec![n_rows == n; n];
        if n_rows < n {
            for i in sample(&mut rng, n, n_rows) {
                in_sample[i] = true;
            }
        }
        let mut features: Vec<usize> = if p == 0 { vec![] } else { sample(&mut rng, p, n_feat).into_vec() };
        features.sort_unstable();
        let tree = build_tree(&cols, &residual, &in_sample, &features, params);

        // Objective change from adding η·tree, over all training rows.
        let leaf_of: Vec<usize> = (0..n).map(|i| tree.leaf_index(x.row(i))).collect();
        let mut delta = 0.0;
        for i in 0..n {
            let Node::Leaf { weight } = tree.nodes[leaf_of[i]] else { unreachable!() };
            delta += -eta * weight * residual[i] + 0.5 * eta * eta * weight * weight;
        }
        for node in &tree.nodes {
            if let Node::Leaf { weight } = node {
                delta += params.gamma + 0.5 * params.lambda * (eta * weight).powi(2);
            }
        }
        if delta < 0.0 {
            for i in 0..n {
                let Node::Leaf { weight } = tree.nodes[leaf_of[i]] else { unreachable!() };
                f[i] += eta * weight;
            }
            let last = *objective.last().unwrap();
            objective.push(last + delta);
            if let (Some(v), Some(fv)) = (val, f_val.as_mut()) {
                for (r, fr) in fv.iter_mut().enumerate() {
                    *fr += eta * tree.predict_row(v.row(r));
                }
            }
            trees.push(tree);
        } else if full {
            break;
        }
        if let (Some(v), Some(fv), Some(b)) = (val, f_val.as_ref(), best.as_mut()) {
            let score = rmse(v.y(), fv);
            if score < b.0 {
                *b = (score, trees.len());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= params.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, keep)) = best {
        trees.truncate(keep);
        objective.truncate(keep + 1);
    }
    Ok(GbtModel {
        base,
        trees,
        params: *params,
        feature_names: x.columns().iter().map(|c| c.name.clone()).collect(),
        rounds,
        objective,
    })
}

impl GbtModel {
    fn check_columns(&self, x: &FeatureMatrix) -> Result<()> {
        if x.n_cols() != self.feature_names.len() {
            return Err(Error::DimensionMismatch { expected: self.feature_names.len(), got: x.n_cols() });
        }
        if let Some((a, b)) = x.columns().iter().map(|c| &c.name).zip(&self.feature_names).find(|(a, b)| a != b) {
            return Err(Error::Schema(format!("column `{a}` where the model expects `{b}`")));
        }
        Ok(())
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let eta = self.params.learning_rate;
        let mut v = self.base;
        for t in &self.trees {
            v += eta * t.predict_row(row);
        }
        v
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_columns(x)?;
        Ok((0..x.n_rows()).map(|r| self.predict_row(x.row(r))).collect())
    }

    /// Summed split gain per feature, normalized so the largest is 1, in
    /// descending order (ties by column index). Unused features have gain 0.
    pub fn feature_importance(&self) -> Vec<(usize, String, f64)> {
        let mut g = vec![0.0; self.feature_names.len()];
        for t in &self.trees {
            for node in &t.nodes {
                if let Node::Split { feature, gain, .. } = node {
                    g[*feature] += gain;
                }
            }
        }
        let max = g.iter().copied().fold(0.0, f64::max);
        let mut out: Vec<(usize, String, f64)> = g
            .iter()
            .enumerate()
            .map(|(j, &v)| (j, self.feature_names[j].clone(), if max > 0.0 { v / max } else { 0.0 }))
            .collect();
        out.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        out
    }

    /// Text form: header, params as JSON, base, column names, then each tree's
    /// nodes in preorder (`feature threshold left right weight gain`, with
    /// feature `-1` marking a leaf).
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "{FORMAT_HEADER}").unwrap();
        writeln!(s, "params {}", serde_json::to_string(&self.params)?).unwrap();
        writeln!(s, "base {}", self.base).unwrap();
        writeln!(s, "rounds {}", self.rounds).unwrap();
        writeln!(s, "columns {}", self.feature_names.len()).unwrap();
        for name in &self.feature_names {
            writeln!(s, "{name}").unwrap();
        }
        writeln!(s, "trees {}", self.trees.len()).unwrap();
        for t in &self.trees {
            writeln!(s, "tree {}", t.nodes.len()).unwrap();
            for node in &t.nodes {
                match node {
                    Node::Split { feature, threshold, left, right, gain } => {
                        writeln!(s, "{feature} {threshold} {left} {right} 0 {gain}").unwrap()
                    }
                    Node::Leaf { weight } => writeln!(s, "-1 0 0 0 {weight} 0").unwrap(),
                }
            }
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(u64, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i as u64 + 1, l?)),
                None => Err(Error::Parse { line: 0, msg: format!("unexpected end of model, expected {what}") }),
            }
        };
        let bad = |line: u64, msg: String| Error::Parse { line, msg };
        let (ln, h) = next("header")?;
        if h != FORMAT_HEADER {
            return Err(bad(ln, format!("unsupported model header `{h}`")));
        }
        let field = |line: (u64, String), key: &str| -> Result<String> {
            line.1
                .strip_prefix(key)
                .and_then(|s| s.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| bad(line.0, format!("expected `{key}`")))
        };
        let num = |line: u64, s: &str| s.parse::<f64>().map_err(|_| bad(line, format!("bad number `{s}`")));
        let int = |line: u64, s: &str| s.parse::<usize>().map_err(|_| bad(line, format!("bad count `{s}`")));
        let params: GbtParams = serde_json::from_str(&field(next("params")?, "params")?)?;
        let l = next("base")?;
        let ln = l.0;
        let base = num(ln, &field(l, "base")?)?;
        let l = next("rounds")?;
        let ln = l.0;
        let rounds = int(ln, &field(l, "rounds")?)?;
        let l = next("columns")?;
        let ln = l.0;
        let p = int(ln, &field(l, "columns")?)?;
        let mut feature_names = Vec::with_capacity(p);
        for _ in 0..p {
            feature_names.push(next("column name")?.1);
        }
        let l = next("trees")?;
        let ln = l.0;
        let m = int(ln, &field(l, "trees")?)?;
        let mut trees = Vec::with_capacity(m);
        for _ in 0..m {
            let l = next("tree")?;
            let ln = l.0;
            let k = int(ln, &field(l, "tree")?)?;
            let mut nodes = Vec::with_capacity(k);
            for _ in 0..k {
                let (ln, text) = next("node")?;
                let parts: Vec<&str> = text.split(' ').collect();
                if parts.len() != 6 {
                    return Err(bad(ln, "node lines have 6 fields".into()));
                }
                if parts[0] == "-1" {
                    nodes.push(Node::Leaf { weight: num(ln, parts[4])? });
                } else {
                    let node = Node::Split {
                        feature: int(ln, parts[0])?,
                        threshold: num(ln, parts[1])?,
                        left: int(ln, parts[2])?,
                        right: int(ln, parts[3])?,
                        gain: num(ln, parts[5])?,
                    };
                    if let Node::Split { feature, left, right, .. } = node {
                        if feature >= p || left >= k || right >= k {
                            return Err(bad(ln, "node references out of range".into()));
                        }
                    }
                    nodes.push(node);
                }
            }
            if nodes.is_empty() {
                return Err(bad(ln, "empty tree".into()));
            }
            trees.push(Tree { nodes });
        }
        Ok(GbtModel { base, trees, params, feature_names, rounds, objective: Vec::new() })
    }
}

/// Sampling ranges for [`random_search`]. `lambda` is held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRanges {
    pub learning_rate: (f64, f64),
    pub colsample: (f64, f64),
    pub max_depth: (usize, usize),
    pub subsample: (f64, f64),
    pub gamma: (f64, f64),
    pub lambda: f64,
    /// Round cap for every trial and for the final refit.
    pub rounds: usize,
    pub patience: usize,
    /// Fraction of rows used for learning; the rest validates.
    pub learn_fraction: f64,
}

impl Default for SearchRanges {
    fn default() -> Self {
        Self {
            learning_rate: (1e-4, 1.0),
            colsample: (0.1, 1.0),
            max_depth: (2, 10),
            subsample: (0.1, 1.0),
            gamma: (0.01, 100.0),
            lambda: 1.0,
            rounds: 100,
            patience: 50,
            learn_fraction: 0.7,
        }
    }
}

impl SearchRanges {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GbtParams {
        let u = |rng: &mut R, (a, b): (f64, f64)| if a == b { a } else { rng.random_range(a..b) };
        GbtParams {
            learning_rate: u(rng, self.learning_rate).min(1.0),
            colsample: u(rng, self.colsample),
            max_depth: rng.random_range(self.max_depth.0..=self.max_depth.1),
            subsample: u(rng, self.subsample),
            gamma: u(rng, self.gamma),
            lambda: self.lambda,
            max_rounds: self.rounds,
            patience: self.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: GbtParams,
    pub val_rmse: f64,
}

#[derive(Debug, Clone)]
pub struct HyperSearchResult {
    pub best_params: GbtParams,
    pub best_score: f64,
    pub trials: Vec<Trial>,
    /// Refit on all rows with the best parameters for `ranges.rounds` rounds.
    pub model: GbtModel,
}

/// Uniform random hyperparameter search scored by validation RMSE on a
/// learn/validate split of `x`, followed by a refit on every row.
pub fn random_search(x: &FeatureMatrix, ranges: &SearchRanges, cycles: usize, seed: u64) -> Result<HyperSearchResult> {
    if cycles < 1 {
        return Err(invalid("random search needs at least one cycle"));
    }
    let (learn_rows, val_rows) = split(x.n_rows(), ranges.learn_fraction, seed::derive(seed, &[seed::tag("split")]))?;
    let learn = x.select_rows(&learn_rows);
    let val = x.select_rows(&val_rows);
    let mut rng = seed::rng(seed::derive(seed, &[seed::tag("params")]));
    let sampled: Vec<GbtParams> = (0..cycles).map(|_| ranges.sample(&mut rng)).collect();
    let trials: Vec<Trial> = sampled
        .into_par_iter()
        .enumerate()
        .map(|(t, params)| {
            let m = gbt_train(&learn, &params, Some(&val), seed::derive(seed, &[seed::tag("trial"), t as u64]))?;
            let pred = m.predict(&val)?;
            Ok(Trial { params, val_rmse: rmse(val.y(), &pred) })
        })
        .collect::<Result<_>>()?;
    let (best_i, best) = trials
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.val_rmse.total_cmp(&b.1.val_rmse).then(a.0.cmp(&b.0)))
        .expect("cycles ≥ 1");
    let mut final_params = best.params;
    final_params.max_rounds = ranges.rounds;
    let model = gbt_train(x, &final_params, None, seed::derive(seed, &[seed::tag("final"), best_i as u64]))?;
    Ok(HyperSearchResult { best_params: best.params, best_score: best.val_rmse, trials, model })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact() -> GbtParams {
        GbtParams { learning_rate: 1.0, gamma: 0.0, lambda: 0.0, max_depth: 1, ..Default::default() }
    }

    #[test]
    fn stump() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]], vec![0.0, 10.0]).unwrap();
        let m = gbt_train(&x, &exact(), None, 0).unwrap();
        assert_eq!(m.trees.len(), 1);
        assert_eq!(m.base, 5.0);
        assert_eq!(
            m.trees[0].nodes,
            vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2, gain: 25.0 },
                Node::Leaf { weight: -5.0 },
                Node::Leaf { weight: 5.0 },
            ]
        );
        assert_eq!(m.predict(&x).unwrap(), vec![0.0, 10.0]);
        let imp = m.feature_importance();
        assert_eq!(imp[0].2, 1.0);
    }

    #[test]
    fn constant_target_has_no_trees() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], vec![3.0; 3]).unwrap();
        let m = gbt_train(&x, &GbtParams::default(), None, 1).unwrap();
        assert!(m.trees.is_empty());
        assert_eq!(m.predict(&x).unwrap(), vec![3.0; 3]);
    }

    #[test]
    fn large_gamma_suppresses_splits() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]], vec![0.0, 10.0]).unwrap();
        let m = gbt_train(&x, &GbtParams { gamma: 1e6, ..exact() }, None, 0).unwrap();
        assert!(m.trees.is_empty());
        assert_eq!(m.predict(&x).unwrap(), vec![5.0, 5.0]);
    }

    #[test]
    fn bad_input() {
        let x = FeatureMatrix::from_rows(&[vec![0.0]], vec![1.0]).unwrap();
        assert!(gbt_train(&x, &GbtParams::default(), None, 0).is_err());
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]], vec![1.0, f64::NAN]).unwrap();
        assert!(gbt_train(&x, &GbtParams::default(), None, 0).is_err());
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]], vec![1.0, 2.0]).unwrap();
        assert!(gbt_train(&x, &GbtParams { learning_rate: 0.0, ..Default::default() }, None, 0).is_err());
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = midpoint(a, b);
        assert!(a < t && b >= t);
    }

    #[test]
    fn text_round_trip() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, ((i * 7) % 11) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (r[0] * 0.3).sin() * 10.0 + r[1]).collect();
        let x = FeatureMatrix::from_rows(&rows, y).unwrap();
        let m = gbt_train(&x, &GbtParams { subsample: 0.8, colsample: 0.5, ..Default::default() }, None, 4).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let back = GbtModel::read(buf.as_slice()).unwrap();
        assert_eq!(back.trees, m.trees);
        assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
    }
}
