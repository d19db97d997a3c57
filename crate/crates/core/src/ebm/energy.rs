use rand::Rng;
use rand_distr::{Distribution, Gumbel};

use super::{EbmError, LagrangeState, ThresholdForm};
use crate::constraint::{ConstraintSet, PhraseConstraint};
use crate::model::{log_sum_exp, squared_distance, DifferentiableModel, EmbeddingTable, Matrix, SoftSequence, TokenId};

/// Nearest embedding-table row to `e` by squared Euclidean distance (lowest
/// id on ties).
pub fn nearest_token(e: &[f64], table: &EmbeddingTable) -> Result<TokenId, EbmError> {
    if e.len() != table.dim() {
        return Err(crate::model::ModelError::DimensionMismatch { expected: table.dim(), actual: e.len() }.into());
    }
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for j in 0..table.vocab_size() {
        let dist = squared_distance(e, table.row(TokenId::from(j)));
        if dist < best_dist {
            best = j;
            best_dist = dist;
        }
    }
    Ok(TokenId::from(best))
}

/// The table row closest to `e`.
pub fn project(e: &[f64], table: &EmbeddingTable) -> Result<Vec<f64>, EbmError> {
    Ok(table.row(nearest_token(e, table)?).to_vec())
}

/// Rowwise projection: the snapped sequence and its token ids.
pub fn project_sequence(soft: &SoftSequence, table: &EmbeddingTable) -> Result<(SoftSequence, Vec<TokenId>), EbmError> {
    let tokens = (0..soft.len())
        .map(|n| nearest_token(soft.row(n), table))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((SoftSequence::from_tokens(table, &tokens), tokens))
}

fn log_likelihood_row(e: &[f64], table: &EmbeddingTable) -> Vec<f64> {
    let neg_dist: Vec<f64> = (0..table.vocab_size())
        .map(|j| -squared_distance(e, table.row(TokenId::from(j))))
        .collect();
    let lse = log_sum_exp(&neg_dist);
    neg_dist.into_iter().map(|x| x - lse).collect()
}

/// `log π_{n,j}` for every output position `n` and token `j`, where
/// `π_n = softmax_j(-‖ẽ_n - e_j‖²)`.
pub fn token_position_log_likelihoods(soft: &SoftSequence, table: &EmbeddingTable) -> Matrix {
    let mut out = Matrix::zeros(soft.len(), table.vocab_size());
    for n in 0..soft.len() {
        out.row_mut(n).copy_from_slice(&log_likelihood_row(soft.row(n), table));
    }
    out
}

/// `π_{n,j}` as an `N × V` matrix of row distributions.
pub fn token_position_likelihoods(soft: &SoftSequence, table: &EmbeddingTable) -> Matrix {
    let mut m = token_position_log_likelihoods(soft, table);
    for x in m.as_mut_slice() {
        *x = x.exp();
    }
    m
}

fn check_length(phrase: &PhraseConstraint, len: usize) -> Result<(), EbmError> {
    let l = phrase.tokens().len();
    if l > len {
        return Err(EbmError::PhraseTooLong { phrase_len: l, output_len: len });
    }
    Ok(())
}

/// Mean phrase log-likelihood `g_n = (1/l) Σ_u log π_{n+u, w_u}` for every
/// start position `n` at which the phrase fits.
pub fn phrase_position_scores(log_pi: &Matrix, phrase: &PhraseConstraint) -> Vec<f64> {
    let w = phrase.tokens();
    let l = w.len();
    if l > log_pi.rows() {
        return Vec::new();
    }
    (0..=log_pi.rows() - l)
        .map(|n| w.iter().enumerate().map(|(u, t)| log_pi.get(n + u, t.index())).sum::<f64>() / l as f64)
        .collect()
}

/// Hard Gumbel-softmax draw over candidate positions: the argmax of
/// `g_n / τ + G_n` with standard Gumbel noise `G_n` (lowest index on ties).
pub fn sample_position<R: Rng + ?Sized>(scores: &[f64], tau: f64, rng: &mut R) -> usize {
    let gumbel = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (n, g) in scores.iter().enumerate() {
        let v = g / tau + gumbel.sample(rng);
        if v > best_val {
            best = n;
            best_val = v;
        }
    }
    best
}

/// Phrase constraint value `f = -g_n` at a fixed start position.
pub fn phrase_value_at(soft: &SoftSequence, table: &EmbeddingTable, phrase: &PhraseConstraint, position: usize) -> Result<f64, EbmError> {
    check_length(phrase, soft.len())?;
    let w = phrase.tokens();
    if position + w.len() > soft.len() {
        return Err(EbmError::PositionOutOfRange { position, output_len: soft.len() });
    }
    let total: f64 = w
        .iter()
        .enumerate()
        .map(|(u, t)| log_likelihood_row(soft.row(position + u), table)[t.index()])
        .sum();
    Ok(-total / w.len() as f64)
}

/// Samples a start position for `phrase` and returns `(f, position)`.
/// Lower `f` means the phrase is better represented in `soft`.
pub fn phrase_constraint_value<R: Rng + ?Sized>(
    soft: &SoftSequence,
    table: &EmbeddingTable,
    phrase: &PhraseConstraint,
    tau: f64,
    rng: &mut R,
) -> Result<(f64, usize), EbmError> {
    check_length(phrase, soft.len())?;
    let scores = phrase_position_scores(&token_position_log_likelihoods(soft, table), phrase);
    let n = sample_position(&scores, tau, rng);
    Ok((-scores[n], n))
}

/// Threshold `ε` for a phrase: its constraint value when the soft rows are
/// exactly the phrase embeddings, plus `delta`. The literal form averages
/// the likelihoods themselves instead of their logs.
pub fn phrase_threshold(phrase: &PhraseConstraint, table: &EmbeddingTable, delta: f64, form: ThresholdForm) -> f64 {
    let w = phrase.tokens();
    let l = w.len() as f64;
    let total: f64 = w
        .iter()
        .map(|&t| {
            let log_pi = log_likelihood_row(table.row(t), table)[t.index()];
            match form {
                ThresholdForm::Log => log_pi,
                ThresholdForm::Literal => log_pi.exp(),
            }
        })
        .sum();
    -total / l + delta
}

/// Constraints in Lagrangian order: positives, then negatives.
pub(crate) fn ordered(constraints: &ConstraintSet) -> impl Iterator<Item = (&PhraseConstraint, bool)> {
    constraints
        .positives()
        .iter()
        .map(|p| (p, true))
        .chain(constraints.negatives().iter().map(|p| (p, false)))
}

/// Draws one start position per constraint.
pub fn sample_positions<R: Rng + ?Sized>(
    soft: &SoftSequence,
    table: &EmbeddingTable,
    constraints: &ConstraintSet,
    tau: f64,
    rng: &mut R,
) -> Result<Vec<usize>, EbmError> {
    let log_pi = token_position_log_likelihoods(soft, table);
    ordered(constraints)
        .map(|(p, _)| {
            check_length(p, soft.len())?;
            Ok(sample_position(&phrase_position_scores(&log_pi, p), tau, rng))
        })
        .collect()
}

/// Constraint values `f_i` at fixed positions, in Lagrangian order.
pub fn constraint_values_at(
    soft: &SoftSequence,
    table: &EmbeddingTable,
    constraints: &ConstraintSet,
    positions: &[usize],
) -> Result<Vec<f64>, EbmError> {
    check_positions(constraints, positions)?;
    ordered(constraints)
        .zip(positions)
        .map(|((p, _), &n)| phrase_value_at(soft, table, p, n))
        .collect()
}

fn check_positions(constraints: &ConstraintSet, positions: &[usize]) -> Result<(), EbmError> {
    if positions.len() != constraints.len() {
        return Err(EbmError::LagrangeMismatch { expected: constraints.len(), actual: positions.len() });
    }
    Ok(())
}

/// Energy with the phrase positions held fixed:
/// `-log P(ẽ|x) - Σ_pos λ(ε - f) - Σ_neg λ(f - ε)`.
/// Terms with `λ = 0` are skipped, so with all multipliers zero the result
/// is exactly the soft negative log-likelihood.
pub fn energy_at<M: DifferentiableModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    soft: &SoftSequence,
    constraints: &ConstraintSet,
    lagrange: &LagrangeState,
    positions: &[usize],
) -> Result<f64, EbmError> {
    lagrange.check(constraints)?;
    check_positions(constraints, positions)?;
    let mut e = -model.soft_forward(prompt, soft)?.log_prob;
    let table = model.embeddings();
    for (i, ((phrase, positive), &n)) in ordered(constraints).zip(positions).enumerate() {
        let lambda = lagrange.lambdas[i];
        if lambda == 0.0 {
            continue;
        }
        let f = phrase_value_at(soft, table, phrase, n)?;
        let eps = lagrange.thresholds[i];
        e -= if positive { lambda * (eps - f) } else { lambda * (f - eps) };
    }
    Ok(e)
}

/// Energy with freshly sampled phrase positions.
pub fn energy<M: DifferentiableModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    soft: &SoftSequence,
    constraints: &ConstraintSet,
    lagrange: &LagrangeState,
    tau: f64,
    rng: &mut R,
) -> Result<f64, EbmError> {
    let positions = sample_positions(soft, model.embeddings(), constraints, tau, rng)?;
    energy_at(model, prompt, soft, constraints, lagrange, &positions)
}

/// Gradient of [`energy_at`] with respect to every soft row.
pub fn energy_gradient_at<M: DifferentiableModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    soft: &SoftSequence,
    constraints: &ConstraintSet,
    lagrange: &LagrangeState,
    positions: &[usize],
) -> Result<Matrix, EbmError> {
    lagrange.check(constraints)?;
    check_positions(constraints, positions)?;
    let mut grad = model.soft_gradient(prompt, soft)?;
    let table = model.embeddings();
    let d = table.dim();
    for (i, ((phrase, positive), &n)) in ordered(constraints).zip(positions).enumerate() {
        let lambda = lagrange.lambdas[i];
        if lambda == 0.0 {
            continue;
        }
        check_length(phrase, soft.len())?;
        let w = phrase.tokens();
        let l = w.len() as f64;
        let sign = if positive { 1.0 } else { -1.0 };
        for (u, t) in w.iter().enumerate() {
            let row = n + u;
            // d log π_{row,t} / dẽ_row = 2 (e_t - Σ_j π_j e_j)
            let pi: Vec<f64> = log_likelihood_row(soft.row(row), table).into_iter().map(f64::exp).collect();
            let expected = table.matrix().mul_vec_transposed(&pi);
            let target = table.row(*t);
            let g = grad.row_mut(row);
            for k in 0..d {
                let d_log_pi = 2.0 * (target[k] - expected[k]);
                g[k] += sign * lambda * (-d_log_pi / l);
            }
        }
    }
    Ok(grad)
}
