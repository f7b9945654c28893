use serde::{Deserialize, Serialize};

use super::tree::{Node, Tree};
use super::{schema_hash, sigmoid, EvalMetric, GbdtError, Model, Samples, TrainParams};
use crate::metrics;

/// Fixed-point scale for gradient sums (2^80).
const FIXED_SCALE: f64 = 1_208_925_819_614_629_174_706_176.0;
/// Relative margin a candidate gain must beat the incumbent by.
pub(crate) const GAIN_TIE_TOL: f64 = 1e-12;
const SETTLED: u32 = u32::MAX;

fn to_fixed(x: f64) -> i128 {
    (x * FIXED_SCALE).round() as i128
}

/// Converts through two 64-bit halves; much cheaper than a direct i128
/// cast and still a pure function of the sum.
#[inline]
fn from_fixed(x: i128) -> f64 {
    const TWO_64: f64 = 18_446_744_073_709_551_616.0;
    let hi = (x >> 64) as i64 as f64;
    let lo = x as u64 as f64;
    (hi * TWO_64 + lo) / FIXED_SCALE
}

/// Per-round losses recorded during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Class-weighted training logloss (the objective being minimized).
    pub train_logloss: f64,
    pub eval_logloss: Option<f64>,
    pub eval_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Training {
    pub model: Model,
    pub history: Vec<RoundRecord>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

/// True when `gain` beats `best` by more than the tie tolerance.
pub(crate) fn improves(gain: f64, best: Option<f64>) -> bool {
    match best {
        None => gain > 0.0,
        Some(b) => gain > b + GAIN_TIE_TOL * b.abs().max(gain.abs()),
    }
}

#[cfg(test)]
pub(crate) fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let term = |g: f64, h: f64| if h + lambda > 0.0 { g * g / (h + lambda) } else { 0.0 };
    0.5 * (term(gl, hl) + term(gr, hr) - term(gl + gr, hl + hr)) - gamma
}

/// Same as [`split_gain`] with the parent term precomputed.
#[inline]
fn gain_with_parent(gl: f64, hl: f64, gr: f64, hr: f64, parent: f64, lambda: f64, gamma: f64) -> f64 {
    let term = |g: f64, h: f64| if h + lambda > 0.0 { g * g / (h + lambda) } else { 0.0 };
    0.5 * (term(gl, hl) + term(gr, hr) - parent) - gamma
}

pub(crate) fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    if h + lambda > 0.0 {
        -g / (h + lambda)
    } else {
        0.0
    }
}

/// Threshold separating consecutive distinct values `a < b`.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m > a && m <= b {
        m
    } else {
        b
    }
}

struct Presorted {
    /// Non-missing (value, row) pairs per feature, ascending.
    sorted: Vec<Vec<(f64, u32)>>,
    /// Rows with a missing value per feature.
    missing: Vec<Vec<u32>>,
}

fn presort(rows: &[&[f64]], n_features: usize) -> Presorted {
    let mut sorted = Vec::with_capacity(n_features);
    let mut missing = Vec::with_capacity(n_features);
    for f in 0..n_features {
        let mut s = Vec::with_capacity(rows.len());
        let mut m = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let v = r[f];
            if v.is_nan() {
                m.push(i as u32);
            } else {
                s.push((v, i as u32));
            }
        }
        s.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        sorted.push(s);
        missing.push(m);
    }
    Presorted { sorted, missing }
}

#[derive(Clone, Copy, Default)]
struct ScanState {
    gl: i128,
    hl: i128,
    count: usize,
    last: f64,
}

/// Grows one tree level by level. Returns the tree and each row's leaf.
fn grow_tree(
    rows: &[&[f64]],
    pre: &Presorted,
    g: &[i128],
    h: &[i128],
    params: &TrainParams,
) -> (Tree, Vec<u32>) {
    let n = rows.len();
    let n_features = pre.sorted.len();
    let lambda = params.reg_lambda;
    let min_child = to_fixed(params.min_child_weight);
    let mut nodes: Vec<Node> = vec![Node::Leaf { weight: 0.0 }];
    let mut pos = vec![0u32; n];
    let mut leaf_of = vec![SETTLED; n];
    let mut frontier = vec![0usize];

    for depth in 0..=params.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &node) in frontier.iter().enumerate() {
            slot[node] = s;
        }
        let k = frontier.len();
        let mut tot_g = vec![0i128; k];
        let mut tot_h = vec![0i128; k];
        for i in 0..n {
            if pos[i] != SETTLED {
                let s = slot[pos[i] as usize];
                tot_g[s] += g[i];
                tot_h[s] += h[i];
            }
        }

        let mut best: Vec<Option<Candidate>> = vec![None; k];
        if depth < params.max_depth {
            let tot_gf: Vec<f64> = tot_g.iter().map(|&x| from_fixed(x)).collect();
            let tot_hf: Vec<f64> = tot_h.iter().map(|&x| from_fixed(x)).collect();
            let parent: Vec<f64> = tot_gf
                .iter()
                .zip(&tot_hf)
                .map(|(&g, &h)| if h + lambda > 0.0 { g * g / (h + lambda) } else { 0.0 })
                .collect();
            let mut miss_g = vec![0i128; k];
            let mut miss_h = vec![0i128; k];
            let mut has_miss = vec![false; k];
            let mut state = vec![ScanState::default(); k];
            for f in 0..n_features {
                miss_g.iter_mut().for_each(|x| *x = 0);
                miss_h.iter_mut().for_each(|x| *x = 0);
                has_miss.iter_mut().for_each(|x| *x = false);
                for &r in &pre.missing[f] {
                    let p = pos[r as usize];
                    if p != SETTLED {
                        let s = slot[p as usize];
                        miss_g[s] += g[r as usize];
                        miss_h[s] += h[r as usize];
                        has_miss[s] = true;
                    }
                }
                state.iter_mut().for_each(|st| *st = ScanState::default());
                for &(v, r) in &pre.sorted[f] {
                    let p = pos[r as usize];
                    if p == SETTLED {
                        continue;
                    }
                    let s = slot[p as usize];
                    let st = &mut state[s];
                    let mut consider = |gl: i128, hl: i128, threshold: f64, default_left: bool| {
                        // weight limits compare in fixed point, where they are exact
                        if hl < min_child || tot_h[s] - hl < min_child {
                            return;
                        }
                        let (glf, hlf) = (from_fixed(gl), from_fixed(hl));
                        let (grf, hrf) = (tot_gf[s] - glf, tot_hf[s] - hlf);
                        let gain = gain_with_parent(glf, hlf, grf, hrf, parent[s], lambda, params.gamma);
                        if improves(gain, best[s].map(|c| c.gain)) {
                            best[s] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold,
                                default_left,
                            });
                        }
                    };
                    if st.count == 0 {
                        if has_miss[s] {
                            // missing rows alone on the left, everything else right
                            consider(miss_g[s], miss_h[s], v, true);
                        }
                    } else if v != st.last {
                        let t = midpoint(st.last, v);
                        if has_miss[s] {
                            consider(st.gl + miss_g[s], st.hl + miss_h[s], t, true);
                            consider(st.gl, st.hl, t, false);
                        } else {
                            consider(st.gl, st.hl, t, true);
                        }
                    }
                    st.gl += g[r as usize];
                    st.hl += h[r as usize];
                    st.count += 1;
                    st.last = v;
                }
            }
        }

        let mut next = Vec::new();
        for (s, &node) in frontier.iter().enumerate() {
            match best[s] {
                Some(c) => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { weight: 0.0 });
                    nodes.push(Node::Leaf { weight: 0.0 });
                    nodes[node] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        default_left: c.default_left,
                        left,
                        right: left + 1,
                        gain: c.gain,
                    };
                    next.push(left);
                    next.push(left + 1);
                }
                None => {
                    let w = leaf_weight(from_fixed(tot_g[s]), from_fixed(tot_h[s]), lambda);
                    nodes[node] = Node::Leaf { weight: w };
                }
            }
        }
        for i in 0..n {
            let p = pos[i];
            if p == SETTLED {
                continue;
            }
            match &nodes[p as usize] {
                Node::Leaf { .. } => {
                    leaf_of[i] = p;
                    pos[i] = SETTLED;
                }
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let x = rows[i][*feature];
                    let go_left = if x.is_nan() { *default_left } else { x < *threshold };
                    pos[i] = if go_left { *left as u32 } else { *right as u32 };
                }
            }
        }
        frontier = next;
    }
    (Tree { nodes }, leaf_of)
}

fn weighted_logloss(margin: &[f64], y: &[u8], spw: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&m, &l) in margin.iter().zip(y) {
        let p = sigmoid(m).clamp(metrics::PROB_CLAMP, 1.0 - metrics::PROB_CLAMP);
        if l == 1 {
            num -= spw * p.ln();
            den += spw;
        } else {
            num -= (1.0 - p).ln();
            den += 1.0;
        }
    }
    num / den
}

/// Fits a boosted ensemble. With an evaluation set, per-round eval losses
/// are recorded and `best_round` is the round with the best eval metric
/// (earliest on ties); otherwise `best_round` is the full tree count.
pub fn train(
    columns: &[String],
    data: &Samples,
    params: &TrainParams,
    eval: Option<&Samples>,
) -> Result<Training, GbdtError> {
    params.validate()?;
    if data.is_empty() {
        return Err(GbdtError::Empty);
    }
    let width = columns.len();
    data.check_width(width)?;
    if let Some(e) = eval {
        e.check_width(width).map_err(|_| GbdtError::SchemaMismatch {
            expected: format!("{width} columns"),
            got: "evaluation rows of a different width".into(),
        })?;
    }

    let n = data.len();
    let pre = presort(&data.rows, width);
    let base = params.base_margin();
    let mut margin = vec![base; n];
    let mut eval_margin = eval.map(|e| vec![base; e.len()]).unwrap_or_default();
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut history = Vec::with_capacity(params.n_estimators);
    let mut g = vec![0i128; n];
    let mut h = vec![0i128; n];

    for round in 1..=params.n_estimators {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            let w = if data.labels[i] == 1 { params.scale_pos_weight } else { 1.0 };
            g[i] = to_fixed((p - f64::from(data.labels[i])) * w);
            h[i] = to_fixed(p * (1.0 - p) * w);
        }
        let (tree, leaf_of) = grow_tree(&data.rows, &pre, &g, &h, params);
        for i in 0..n {
            if let Node::Leaf { weight } = tree.nodes[leaf_of[i] as usize] {
                margin[i] += params.eta * weight;
            }
        }
        let mut rec = RoundRecord {
            round,
            train_logloss: weighted_logloss(&margin, &data.labels, params.scale_pos_weight),
            eval_logloss: None,
            eval_auc: None,
        };
        if let Some(e) = eval.filter(|e| !e.is_empty()) {
            for (m, r) in eval_margin.iter_mut().zip(&e.rows) {
                *m += params.eta * tree.leaf_weight(r);
            }
            let p: Vec<f64> = eval_margin.iter().map(|&m| sigmoid(m)).collect();
            rec.eval_logloss = metrics::logloss(&p, &e.labels).ok();
            rec.eval_auc = metrics::auc(&p, &e.labels).ok();
        }
        history.push(rec);
        trees.push(tree);
    }

    let best_round = select_best_round(&history, params.eval_metric).unwrap_or(trees.len());
    Ok(Training {
        model: Model {
            params: params.clone(),
            trees,
            schema_hash: schema_hash(columns),
            n_features: width,
            best_round,
        },
        history,
    })
}

/// Round with the lowest eval logloss (or highest AUC), earliest on ties.
/// `None` when no eval values were recorded.
pub fn select_best_round(history: &[RoundRecord], metric: EvalMetric) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in history {
        let v = match metric {
            EvalMetric::Logloss => r.eval_logloss,
            EvalMetric::Auc => r.eval_auc.map(|a| -a),
        };
        if let Some(v) = v {
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((r.round, v));
            }
        }
    }
    best.map(|(r, _)| r)
}
