//! Training objectives: the bounded lifted metric loss over multi-view
//! batches, batch entropies of the discriminator output, and the composite
//! encoder / discriminator objectives of the adversarial game.
//!
//! Every loss is a pure function and returns analytic gradients alongside the
//! value; unit tests check both against brute-force oracles and central
//! finite differences.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("degenerate batch: no anchor has both a positive and a negative")]
    DegenerateBatch,
}

/// How pairwise similarity is computed inside the metric loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    /// `S_ij = e_i . e_j`; positives attracted via `exp(margin - S)`,
    /// negatives repelled via `exp(S)`, the bound caps positive similarity.
    DotProduct,
    /// `S_ij = |e_i - e_j|^2`; sign conventions flip accordingly. Provided
    /// for comparison only.
    SquaredEuclidean,
}

/// Which entropy terms are active (ablation axes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    Full,
    /// Encoder objective drops its entropy terms; discriminator keeps them.
    NoEncoderEntropy,
    /// All entropy terms removed on both sides.
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Weight of the metric term inside the encoder objective.
    pub alpha: f64,
    /// Weight of the KL regularizer inside the discriminator objective.
    pub beta: f64,
    /// Margin of the metric loss.
    pub lambda_margin: f64,
    /// Similarity bound above which positive pairs are penalized.
    pub xi_sim: f64,
    /// Minimum time gap (frames) for a same-demonstration frame to count as
    /// a temporal negative.
    pub negative_margin: usize,
    pub similarity: SimilarityKind,
    /// With the bound term disabled this is the plain lifted formulation.
    pub bound_positive: bool,
    pub entropy_mode: EntropyMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 1.0,
            lambda_margin: 1.0,
            xi_sim: 10.0,
            negative_margin: 2,
            similarity: SimilarityKind::DotProduct,
            bound_positive: true,
            entropy_mode: EntropyMode::Full,
        }
    }
}

/// Pair structure of a metric batch, as produced by the sampler: two frames
/// are positives iff they share a label; negatives are same-view-pair frames
/// with a different label whose time gap is at least the negative margin.
#[derive(Debug, Clone)]
pub struct PairStructure<'a> {
    pub labels: &'a [usize],
    pub pair_ids: &'a [usize],
    pub time_indices: &'a [usize],
}

/// Bounded lifted metric loss over `M x n` embeddings. Returns the loss and
/// dL/d(embeddings).
pub fn lifted_loss(
    embeddings: &Array2<f64>,
    structure: &PairStructure,
    cfg: &LossConfig,
) -> Result<(f64, Array2<f64>), LossError> {
    let m = embeddings.nrows();
    assert_eq!(structure.labels.len(), m);
    assert_eq!(structure.pair_ids.len(), m);
    assert_eq!(structure.time_indices.len(), m);
    let sim = pairwise_similarity(embeddings, cfg.similarity);
    let mut grad_s = Array2::zeros((m, m));
    let mut total = 0.0;
    let mut any_complete = false;
    for i in 0..m {
        let positives: Vec<usize> = (0..m)
            .filter(|&k| k != i && structure.labels[k] == structure.labels[i])
            .collect();
        let negatives: Vec<usize> = (0..m)
            .filter(|&k| {
                structure.labels[k] != structure.labels[i]
                    && structure.pair_ids[k] == structure.pair_ids[i]
                    && structure.time_indices[k].abs_diff(structure.time_indices[i])
                        >= cfg.negative_margin
            })
            .collect();
        if !positives.is_empty() && !negatives.is_empty() {
            any_complete = true;
        }
        if !positives.is_empty() {
            let (v, g) = positive_term(&sim, i, &positives, cfg);
            total += v;
            for (&k, gv) in positives.iter().zip(g.iter()) {
                grad_s[[i, k]] += gv;
            }
        }
        if !negatives.is_empty() {
            let (v, g) = negative_term(&sim, i, &negatives, cfg);
            total += v;
            for (&k, gv) in negatives.iter().zip(g.iter()) {
                grad_s[[i, k]] += gv;
            }
        }
    }
    if !any_complete {
        return Err(LossError::DegenerateBatch);
    }
    Ok((total, chain_similarity(embeddings, &grad_s, cfg.similarity)))
}

/// `log sum_k (exp(attract_ik) + bound_ik)` with log-sum-exp stabilization,
/// where for dot-product similarity attract = lambda - S and the bound adds
/// `S` whenever `S > xi`.
fn positive_term(
    sim: &Array2<f64>,
    i: usize,
    positives: &[usize],
    cfg: &LossConfig,
) -> (f64, Vec<f64>) {
    let exponents: Vec<f64> = positives
        .iter()
        .map(|&k| match cfg.similarity {
            SimilarityKind::DotProduct => cfg.lambda_margin - sim[[i, k]],
            SimilarityKind::SquaredEuclidean => sim[[i, k]],
        })
        .collect();
    let m = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0; // scaled by exp(-m)
    for &e in &exponents {
        denom += (e - m).exp();
    }
    let mut bound_sum = 0.0;
    if cfg.bound_positive {
        for &k in positives {
            if sim[[i, k]] > cfg.xi_sim {
                bound_sum += sim[[i, k]];
            }
        }
    }
    let scaled = denom + bound_sum * (-m).exp();
    let value = m + scaled.ln();
    let mut grads = Vec::with_capacity(positives.len());
    for (idx, &k) in positives.iter().enumerate() {
        // d/dS of the exponential part
        let d_exp = match cfg.similarity {
            SimilarityKind::DotProduct => -(exponents[idx] - m).exp(),
            SimilarityKind::SquaredEuclidean => (exponents[idx] - m).exp(),
        };
        let d_bound = if cfg.bound_positive && sim[[i, k]] > cfg.xi_sim {
            (-m).exp()
        } else {
            0.0
        };
        grads.push((d_exp + d_bound) / scaled);
    }
    (value, grads)
}

fn negative_term(
    sim: &Array2<f64>,
    i: usize,
    negatives: &[usize],
    cfg: &LossConfig,
) -> (f64, Vec<f64>) {
    let exponents: Vec<f64> = negatives
        .iter()
        .map(|&k| match cfg.similarity {
            SimilarityKind::DotProduct => sim[[i, k]],
            SimilarityKind::SquaredEuclidean => cfg.lambda_margin - sim[[i, k]],
        })
        .collect();
    let m = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = exponents.iter().map(|&e| (e - m).exp()).sum();
    let value = m + denom.ln();
    let grads = exponents
        .iter()
        .map(|&e| {
            let p = (e - m).exp() / denom;
            match cfg.similarity {
                SimilarityKind::DotProduct => p,
                SimilarityKind::SquaredEuclidean => -p,
            }
        })
        .collect();
    (value, grads)
}

fn pairwise_similarity(embeddings: &Array2<f64>, kind: SimilarityKind) -> Array2<f64> {
    let gram = embeddings.dot(&embeddings.t());
    match kind {
        SimilarityKind::DotProduct => gram,
        SimilarityKind::SquaredEuclidean => {
            let m = embeddings.nrows();
            let mut out = Array2::zeros((m, m));
            for i in 0..m {
                for j in 0..m {
                    out[[i, j]] = gram[[i, i] ] + gram[[j, j]] - 2.0 * gram[[i, j]];
                }
            }
            out
        }
    }
}

/// Chains dL/dS into dL/d(embeddings).
fn chain_similarity(
    embeddings: &Array2<f64>,
    grad_s: &Array2<f64>,
    kind: SimilarityKind,
) -> Array2<f64> {
    let m = embeddings.nrows();
    let mut grad = Array2::zeros(embeddings.raw_dim());
    for i in 0..m {
        for k in 0..m {
            let g = grad_s[[i, k]];
            if g == 0.0 {
                continue;
            }
            match kind {
                SimilarityKind::DotProduct => {
                    let (ei, ek) = (embeddings.row(i), embeddings.row(k));
                    for d in 0..embeddings.ncols() {
                        grad[[i, d]] += g * ek[d];
                        grad[[k, d]] += g * ei[d];
                    }
                }
                SimilarityKind::SquaredEuclidean => {
                    for d in 0..embeddings.ncols() {
                        let diff = embeddings[[i, d]] - embeddings[[k, d]];
                        grad[[i, d]] += 2.0 * g * diff;
                        grad[[k, d]] -= 2.0 * g * diff;
                    }
                }
            }
        }
    }
    grad
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Mean Shannon entropy of the rows (natural log).
pub fn conditional_entropy(probs: &Array2<f64>) -> f64 {
    let n = probs.nrows() as f64;
    -probs.iter().map(|&p| xlogx(p)).sum::<f64>() / n
}

/// dH_cond/dprobs.
pub fn conditional_entropy_grad(probs: &Array2<f64>) -> Array2<f64> {
    let n = probs.nrows() as f64;
    probs.mapv(|p| if p > 0.0 { -(p.ln() + 1.0) / n } else { 0.0 })
}

/// Entropy of the row-mean distribution.
pub fn marginal_entropy(probs: &Array2<f64>) -> f64 {
    let mean = probs.mean_axis(ndarray::Axis(0)).unwrap();
    -mean.iter().map(|&p| xlogx(p)).sum::<f64>()
}

/// dH_marg/dprobs.
pub fn marginal_entropy_grad(probs: &Array2<f64>) -> Array2<f64> {
    let n = probs.nrows() as f64;
    let mean = probs.mean_axis(ndarray::Axis(0)).unwrap();
    let row: Array1<f64> = mean.mapv(|p| if p > 0.0 { -(p.ln() + 1.0) / n } else { 0.0 });
    let mut out = Array2::zeros(probs.raw_dim());
    for mut r in out.rows_mut() {
        r.assign(&row);
    }
    out
}

/// Discriminator objective: `-H_marg + H_cond + beta * KL`, minimized by the
/// discriminator optimizer.
pub fn discriminator_loss(probs: &Array2<f64>, kl_value: f64, cfg: &LossConfig) -> f64 {
    debug_assert!(kl_value >= -1e-12);
    let entropy = match cfg.entropy_mode {
        EntropyMode::None => 0.0,
        _ => -marginal_entropy(probs) + conditional_entropy(probs),
    };
    entropy + cfg.beta * kl_value
}

/// d(discriminator entropy terms)/dprobs; the KL part is handled inside the
/// discriminator backward.
pub fn discriminator_loss_grad_probs(probs: &Array2<f64>, cfg: &LossConfig) -> Array2<f64> {
    match cfg.entropy_mode {
        EntropyMode::None => Array2::zeros(probs.raw_dim()),
        _ => conditional_entropy_grad(probs) - marginal_entropy_grad(probs),
    }
}

/// Encoder objective: `H_marg + H_cond - alpha * lifted`, maximized by the
/// encoder (the trainer descends on its negation).
pub fn encoder_loss(probs: &Array2<f64>, lifted_value: f64, cfg: &LossConfig) -> f64 {
    assert!(lifted_value.is_finite());
    let entropy = match cfg.entropy_mode {
        EntropyMode::Full => marginal_entropy(probs) + conditional_entropy(probs),
        _ => 0.0,
    };
    entropy - cfg.alpha * lifted_value
}

/// d(encoder entropy terms)/dprobs.
pub fn encoder_entropy_grad_probs(probs: &Array2<f64>, cfg: &LossConfig) -> Array2<f64> {
    match cfg.entropy_mode {
        EntropyMode::Full => marginal_entropy_grad(probs) + conditional_entropy_grad(probs),
        _ => Array2::zeros(probs.raw_dim()),
    }
}

// ---------------------------------------------------------------------------
// Baseline metric losses (comparison runs only)

/// Triplet loss over all (anchor, positive, negative) combinations implied by
/// the batch structure, squared Euclidean, margin `lambda_margin`.
pub fn triplet_loss(
    embeddings: &Array2<f64>,
    structure: &PairStructure,
    cfg: &LossConfig,
) -> Result<(f64, Array2<f64>), LossError> {
    let m = embeddings.nrows();
    let mut grad = Array2::zeros(embeddings.raw_dim());
    let mut total = 0.0;
    let mut count = 0usize;
    for a in 0..m {
        for p in 0..m {
            if p == a || structure.labels[p] != structure.labels[a] {
                continue;
            }
            for n in 0..m {
                if structure.labels[n] == structure.labels[a]
                    || structure.pair_ids[n] != structure.pair_ids[a]
                    || structure.time_indices[n].abs_diff(structure.time_indices[a])
                        < cfg.negative_margin
                {
                    continue;
                }
                let dp = sq_dist(embeddings, a, p);
                let dn = sq_dist(embeddings, a, n);
                let v = dp - dn + cfg.lambda_margin;
                count += 1;
                if v > 0.0 {
                    total += v;
                    for d in 0..embeddings.ncols() {
                        let ea = embeddings[[a, d]];
                        let ep = embeddings[[p, d]];
                        let en = embeddings[[n, d]];
                        grad[[a, d]] += 2.0 * (en - ep);
                        grad[[p, d]] += 2.0 * (ep - ea);
                        grad[[n, d]] += 2.0 * (ea - en);
                    }
                }
            }
        }
    }
    if count == 0 {
        return Err(LossError::DegenerateBatch);
    }
    let scale = 1.0 / count as f64;
    Ok((total * scale, grad * scale))
}

/// N-pair-style loss: softmax cross-entropy of each anchor's positive against
/// its temporal negatives under dot-product similarity.
pub fn npair_loss(
    embeddings: &Array2<f64>,
    structure: &PairStructure,
    cfg: &LossConfig,
) -> Result<(f64, Array2<f64>), LossError> {
    let m = embeddings.nrows();
    let mut grad_s = Array2::zeros((m, m));
    let mut total = 0.0;
    let mut anchors = 0usize;
    for a in 0..m {
        let pos: Vec<usize> = (0..m)
            .filter(|&k| k != a && structure.labels[k] == structure.labels[a])
            .collect();
        let neg: Vec<usize> = (0..m)
            .filter(|&k| {
                structure.labels[k] != structure.labels[a]
                    && structure.pair_ids[k] == structure.pair_ids[a]
                    && structure.time_indices[k].abs_diff(structure.time_indices[a])
                        >= cfg.negative_margin
            })
            .collect();
        let (Some(&p), false) = (pos.first(), neg.is_empty()) else {
            continue;
        };
        anchors += 1;
        // -log softmax(S_ap over {p} + negatives)
        let sim = |k: usize| embeddings.row(a).dot(&embeddings.row(k));
        let mut keys = vec![p];
        keys.extend_from_slice(&neg);
        let vals: Vec<f64> = keys.iter().map(|&k| sim(k)).collect();
        let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = vals.iter().map(|&v| (v - mx).exp()).sum();
        total += -(vals[0] - mx - denom.ln());
        for (idx, &k) in keys.iter().enumerate() {
            let soft = (vals[idx] - mx).exp() / denom;
            let target = if idx == 0 { 1.0 } else { 0.0 };
            grad_s[[a, k]] += soft - target;
        }
    }
    if anchors == 0 {
        return Err(LossError::DegenerateBatch);
    }
    let scale = 1.0 / anchors as f64;
    let grad = chain_similarity(embeddings, &grad_s, SimilarityKind::DotProduct) * scale;
    Ok((total * scale, grad))
}

fn sq_dist(e: &Array2<f64>, i: usize, j: usize) -> f64 {
    let mut d = 0.0;
    for c in 0..e.ncols() {
        let v = e[[i, c]] - e[[j, c]];
        d += v * v;
    }
    d
}
