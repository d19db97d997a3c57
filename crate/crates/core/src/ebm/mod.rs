//! Energy-based non-autoregressive decoding (MuCoLa with positive and
//! negative phrase constraints).
//!
//! The output is a fixed-length sequence of soft embeddings `ẽ`. Each
//! iteration takes a Langevin step on the energy
//!
//! ```text
//! E(ẽ) = -log P(ẽ|x) - Σ_pos λ_i (ε_i - f_i(ẽ)) - Σ_neg λ_j (f_j(ẽ) - ε_j)
//! ```
//!
//! snaps every row back onto the embedding table, and moves each multiplier
//! by gradient ascent. `f` is the phrase constraint value from
//! [`phrase_constraint_value`]; a constraint holds when `f ≤ ε`.

mod energy;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{satisfied, ConstraintSet};
use crate::model::{DifferentiableModel, ModelError, SoftSequence, TokenId, TokenizeError, Tokenizer};

pub use energy::{
    constraint_values_at, energy, energy_at, energy_gradient_at, nearest_token, phrase_constraint_value,
    phrase_position_scores, phrase_threshold, phrase_value_at, project, project_sequence, sample_position,
    sample_positions, token_position_likelihoods, token_position_log_likelihoods,
};

#[derive(Debug, Error, PartialEq)]
pub enum EbmError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error("phrase of {phrase_len} tokens does not fit in an output of {output_len}")]
    PhraseTooLong { phrase_len: usize, output_len: usize },
    #[error("phrase start {position} does not fit in an output of {output_len}")]
    PositionOutOfRange { position: usize, output_len: usize },
    #[error("expected {expected} constraint entries, got {actual}")]
    LagrangeMismatch { expected: usize, actual: usize },
    #[error("invalid energy decoder configuration: {0}")]
    InvalidConfig(String),
}

/// How the satisfaction threshold `ε` averages the phrase's own
/// likelihoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdForm {
    /// `-(1/l) Σ log π + Δ`, on the same scale as `f`.
    #[default]
    Log,
    /// `-(1/l) Σ π + Δ`.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MucolaConfig {
    /// Starting step size, restored whenever the tokens change.
    pub eta_min: f64,
    /// Step size increment after `stall_window` unchanged iterations.
    pub eta_step: f64,
    /// Multiplier learning rate.
    pub alpha: f64,
    /// Gumbel-softmax temperature for phrase positions.
    pub tau: f64,
    /// Margin `Δ` added to every threshold.
    pub delta_margin: f64,
    pub max_iters: usize,
    /// Initial noise standard deviation, annealed linearly to zero.
    pub noise_scale: f64,
    pub stall_window: usize,
    /// Number of output tokens `N`.
    pub output_len: usize,
    pub threshold_form: ThresholdForm,
    pub rng_seed: u64,
}

impl Default for MucolaConfig {
    fn default() -> Self {
        Self {
            eta_min: 0.03,
            eta_step: 0.01,
            alpha: 10.0,
            tau: 0.01,
            delta_margin: 0.1,
            max_iters: 500,
            noise_scale: 0.1,
            stall_window: 10,
            output_len: 48,
            threshold_form: ThresholdForm::Log,
            rng_seed: 0,
        }
    }
}

impl MucolaConfig {
    pub fn validate(&self) -> Result<(), EbmError> {
        let positive = [
            ("eta_min", self.eta_min),
            ("eta_step", self.eta_step),
            ("alpha", self.alpha),
            ("tau", self.tau),
            ("delta_margin", self.delta_margin),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EbmError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(EbmError::InvalidConfig(format!("noise_scale {} must be >= 0", self.noise_scale)));
        }
        if self.max_iters == 0 || self.stall_window == 0 || self.output_len == 0 {
            return Err(EbmError::InvalidConfig("max_iters, stall_window and output_len must be >= 1".into()));
        }
        Ok(())
    }

    /// Noise standard deviation at iteration `t`.
    pub fn noise_at(&self, t: usize) -> f64 {
        self.noise_scale * (1.0 - t as f64 / self.max_iters as f64)
    }

    pub fn with_seed(&self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self.clone() }
    }
}

/// Multipliers `λ` and thresholds `ε`, positives first then negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeState {
    pub lambdas: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl LagrangeState {
    /// Zero multipliers and thresholds computed from the embedding table.
    pub fn new(constraints: &ConstraintSet, table: &crate::model::EmbeddingTable, config: &MucolaConfig) -> Self {
        let thresholds: Vec<f64> = energy::ordered(constraints)
            .map(|(p, _)| phrase_threshold(p, table, config.delta_margin, config.threshold_form))
            .collect();
        Self { lambdas: vec![0.0; thresholds.len()], thresholds }
    }

    pub(crate) fn check(&self, constraints: &ConstraintSet) -> Result<(), EbmError> {
        let n = constraints.len();
        for len in [self.lambdas.len(), self.thresholds.len()] {
            if len != n {
                return Err(EbmError::LagrangeMismatch { expected: n, actual: len });
            }
        }
        Ok(())
    }

    /// `λ_i ← max(0, λ_i + α ∂E/∂λ_i)` given constraint values `f`.
    pub fn ascend(&self, constraints: &ConstraintSet, values: &[f64], alpha: f64) -> Self {
        let lambdas = energy::ordered(constraints)
            .enumerate()
            .map(|(i, (_, positive))| {
                let slack = values[i] - self.thresholds[i];
                let grad = if positive { slack } else { -slack };
                (self.lambdas[i] + alpha * grad).max(0.0)
            })
            .collect();
        Self { lambdas, thresholds: self.thresholds.clone() }
    }
}

/// Result of one [`langevin_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub soft: SoftSequence,
    pub lagrange: LagrangeState,
    pub tokens: Vec<TokenId>,
    /// Phrase positions used for this step.
    pub positions: Vec<usize>,
    /// Constraint values before the step.
    pub values: Vec<f64>,
}

/// One Langevin update: `ẽ' = Proj(ẽ - η∇E(ẽ) + δ)` with `δ ~ N(0, σ²)`
/// per entry, and a multiplier update from the constraint values at `ẽ`.
#[allow(clippy::too_many_arguments)]
pub fn langevin_step<M: DifferentiableModel + ?Sized, R: rand::Rng + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    soft: &SoftSequence,
    lagrange: &LagrangeState,
    constraints: &ConstraintSet,
    config: &MucolaConfig,
    eta: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<StepOutcome, EbmError> {
    let table = model.embeddings();
    let positions = sample_positions(soft, table, constraints, config.tau, rng)?;
    let values = constraint_values_at(soft, table, constraints, &positions)?;
    let grad = energy_gradient_at(model, prompt, soft, constraints, lagrange, &positions)?;
    let mut moved = soft.clone();
    let noise = if sigma > 0.0 { Some(Normal::new(0.0, sigma).expect("finite sigma")) } else { None };
    for (x, g) in moved.matrix_mut().as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *x -= eta * g;
        if let Some(noise) = &noise {
            *x += noise.sample(rng);
        }
    }
    let (soft, tokens) = project_sequence(&moved, table)?;
    let lagrange = lagrange.ascend(constraints, &values, config.alpha);
    Ok(StepOutcome { soft, lagrange, tokens, positions, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MucolaOutput {
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub satisfied: bool,
    pub iterations_used: usize,
    pub initial_nll: f64,
    pub final_nll: f64,
}

/// Per-iteration record from [`mucola_decode_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub eta: f64,
    pub sigma: f64,
    pub lambdas_before: Vec<f64>,
    pub lambdas_after: Vec<f64>,
    pub values: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub tokens: Vec<TokenId>,
}

/// Decodes `config.output_len` tokens by Langevin dynamics.
///
/// Starts from the greedy decode (with end-of-sequence disallowed) and runs
/// up to `max_iters` steps, stopping early once the text satisfies the
/// constraints and the tokens have been stable for `stall_window` steps.
/// Returns the most likely satisfying state seen, or the last state if none
/// satisfied.
pub fn mucola_decode<M: DifferentiableModel + ?Sized>(
    model: &M,
    tokenizer: &Tokenizer,
    prompt: &[TokenId],
    constraints: &ConstraintSet,
    config: &MucolaConfig,
) -> Result<MucolaOutput, EbmError> {
    decode(model, tokenizer, prompt, constraints, config, None)
}

pub fn mucola_decode_traced<M: DifferentiableModel + ?Sized>(
    model: &M,
    tokenizer: &Tokenizer,
    prompt: &[TokenId],
    constraints: &ConstraintSet,
    config: &MucolaConfig,
) -> Result<(MucolaOutput, Vec<IterationRecord>), EbmError> {
    let mut trace = Vec::new();
    let out = decode(model, tokenizer, prompt, constraints, config, Some(&mut trace))?;
    Ok((out, trace))
}

/// Greedy tokens of length `len` that never emit end-of-sequence.
pub fn greedy_initialization<M: DifferentiableModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    len: usize,
) -> Result<Vec<TokenId>, EbmError> {
    let eos = model.eos();
    let mut context = prompt.to_vec();
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let lp = model.next_log_probs(&context)?;
        let mut best: Option<usize> = None;
        for (t, &v) in lp.iter().enumerate() {
            if Some(TokenId::from(t)) == eos {
                continue;
            }
            if best.is_none_or(|b| v > lp[b]) {
                best = Some(t);
            }
        }
        let t = TokenId::from(best.ok_or(ModelError::InvalidVocabulary("only end-of-sequence".into()))?);
        out.push(t);
        context.push(t);
    }
    Ok(out)
}

fn decode<M: DifferentiableModel + ?Sized>(
    model: &M,
    tokenizer: &Tokenizer,
    prompt: &[TokenId],
    constraints: &ConstraintSet,
    config: &MucolaConfig,
    mut trace: Option<&mut Vec<IterationRecord>>,
) -> Result<MucolaOutput, EbmError> {
    config.validate()?;
    model.check_tokens(prompt)?;
    let table = model.embeddings();
    for phrase in constraints.iter() {
        model.check_tokens(phrase.tokens())?;
        if phrase.tokens().len() > config.output_len {
            return Err(EbmError::PhraseTooLong { phrase_len: phrase.tokens().len(), output_len: config.output_len });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut tokens = greedy_initialization(model, prompt, config.output_len)?;
    let mut soft = SoftSequence::from_tokens(table, &tokens);
    let mut lagrange = LagrangeState::new(constraints, table, config);
    let nll = |s: &SoftSequence| -> Result<f64, EbmError> { Ok(-model.soft_forward(prompt, s)?.log_prob) };
    let check = |t: &[TokenId]| -> Result<(String, bool), EbmError> {
        let text = tokenizer.detokenize(t)?;
        let ok = satisfied(&text, constraints);
        Ok((text, ok))
    };

    let initial_nll = nll(&soft)?;
    let (text, ok) = check(&tokens)?;
    let mut best: Option<(f64, Vec<TokenId>, String)> = ok.then(|| (initial_nll, tokens.clone(), text.clone()));
    let mut last = (initial_nll, tokens.clone(), text);
    let mut eta = config.eta_min;
    let mut unchanged = 0;
    let mut iterations = 0;

    for t in 0..config.max_iters {
        let sigma = config.noise_at(t);
        let step = langevin_step(model, prompt, &soft, &lagrange, constraints, config, eta, sigma, &mut rng)?;
        iterations = t + 1;
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(IterationRecord {
                eta,
                sigma,
                lambdas_before: lagrange.lambdas.clone(),
                lambdas_after: step.lagrange.lambdas.clone(),
                values: step.values.clone(),
                thresholds: lagrange.thresholds.clone(),
                tokens: step.tokens.clone(),
            });
        }
        if step.tokens == tokens {
            unchanged += 1;
            if unchanged % config.stall_window == 0 {
                eta += config.eta_step;
            }
        } else {
            unchanged = 0;
            eta = config.eta_min;
        }
        soft = step.soft;
        lagrange = step.lagrange;
        tokens = step.tokens;

        let (text, ok) = check(&tokens)?;
        let current = nll(&soft)?;
        if ok && best.as_ref().is_none_or(|b| current < b.0) {
            best = Some((current, tokens.clone(), text.clone()));
        }
        last = (current, tokens.clone(), text);
        if ok && unchanged >= config.stall_window {
            break;
        }
    }

    let satisfied = best.is_some();
    let (final_nll, tokens, text) = best.unwrap_or(last);
    Ok(MucolaOutput { tokens, text, satisfied, iterations_used: iterations, initial_nll, final_nll })
}

#[cfg(test)]
mod tests;
