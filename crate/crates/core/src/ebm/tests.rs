use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::constraint::{PhraseConstraint, Polarity};
use crate::model::{EmbeddingLm, EmbeddingTable, Matrix, TokenizerMode, Vocabulary};

fn toy(v: usize, d: usize, seed: u64) -> (Tokenizer, EmbeddingLm) {
    let mut tokens: Vec<String> = (0..v - 1).map(|i| format!(" t{i}")).collect();
    tokens.push("<eos>".into());
    let vocab = Vocabulary::with_eos(tokens, "<eos>").unwrap();
    let tok = Tokenizer::from_vocabulary(vocab, TokenizerMode::Whitespace).unwrap();
    let model = EmbeddingLm::random(v, d, 3, tok.eos(), 1.0, seed);
    (tok, model)
}

fn phrase(tok: &Tokenizer, ids: &[u32], polarity: Polarity) -> PhraseConstraint {
    let ids: Vec<TokenId> = ids.iter().map(|&i| TokenId(i)).collect();
    PhraseConstraint::from_tokens(tok.detokenize(&ids).unwrap(), polarity, ids)
}

fn random_soft(n: usize, d: usize, rng: &mut ChaCha8Rng) -> SoftSequence {
    let data = (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect();
    SoftSequence::new(Matrix::from_flat(n, d, data).unwrap())
}

fn table(rows: &[Vec<f64>]) -> EmbeddingTable {
    EmbeddingTable::new(Matrix::from_rows(rows).unwrap()).unwrap()
}

#[test]
fn defaults() {
    let c = MucolaConfig::default();
    assert_eq!((c.eta_min, c.eta_step, c.alpha, c.tau, c.delta_margin, c.max_iters), (0.03, 0.01, 10.0, 0.01, 0.1, 500));
    c.validate().unwrap();
    assert_eq!(c.noise_at(0), 0.1);
    assert_eq!(c.noise_at(500), 0.0);
}

#[test]
fn projection_rules() {
    let t = table(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 3.0], vec![1.0, 1.0]]);
    assert_eq!(nearest_token(&[1.0, 1.0], &t).unwrap(), TokenId(3));
    assert_eq!(nearest_token(&[1.0, -5.0], &t).unwrap(), TokenId(0));
    assert!(matches!(nearest_token(&[1.0], &t), Err(EbmError::Model(ModelError::DimensionMismatch { .. }))));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let p = project(&x, &t).unwrap();
        assert_eq!(project(&p, &t).unwrap(), p);
    }
}

#[test]
fn likelihood_rows() {
    let t = table(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]);
    let soft = SoftSequence::new(Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap());
    let pi = token_position_likelihoods(&soft, &t);
    for j in 0..4 {
        assert!((pi.get(0, j) - 0.25).abs() < 1e-12);
    }
    let row1 = pi.row(1);
    assert!(row1.iter().all(|&p| p <= row1[2]));
    assert!((row1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn exact_phrase_rows_are_selected() {
    let (tok, m) = toy(12, 4, 3);
    let p = phrase(&tok, &[4, 7], Polarity::Positive);
    let mut ids = vec![TokenId(1); 6];
    ids[3] = TokenId(4);
    ids[4] = TokenId(7);
    let soft = SoftSequence::from_tokens(m.embeddings(), &ids);
    let scores = phrase_position_scores(&token_position_log_likelihoods(&soft, m.embeddings()), &p);
    assert_eq!(scores.len(), 5);
    let best = (0..5).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
    assert_eq!(best, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (f, n) = phrase_constraint_value(&soft, m.embeddings(), &p, 0.01, &mut rng).unwrap();
    assert_eq!(n, 3);
    assert_eq!(f, -scores[3]);

    let short = SoftSequence::from_tokens(m.embeddings(), &ids[3..5]);
    assert_eq!(phrase_constraint_value(&short, m.embeddings(), &p, 0.01, &mut rng).unwrap().1, 0);
    let tiny = SoftSequence::from_tokens(m.embeddings(), &ids[..1]);
    assert_eq!(
        phrase_constraint_value(&tiny, m.embeddings(), &p, 0.01, &mut rng),
        Err(EbmError::PhraseTooLong { phrase_len: 2, output_len: 1 })
    );
}

#[test]
fn thresholds() {
    let far = table(&[vec![0.0, 0.0], vec![100.0, 0.0], vec![0.0, 100.0]]);
    let p = PhraseConstraint::from_tokens("x", Polarity::Positive, vec![TokenId(1)]);
    let eps_far = phrase_threshold(&p, &far, 0.1, ThresholdForm::Log);
    assert!((eps_far - 0.1).abs() < 1e-12);
    let twin = table(&[vec![0.0, 0.0], vec![100.0, 0.0], vec![100.0, 0.0]]);
    let eps_twin = phrase_threshold(&p, &twin, 0.1, ThresholdForm::Log);
    assert!((eps_twin - (2f64.ln() + 0.1)).abs() < 1e-12);
    assert!(eps_twin > eps_far);
    let literal = phrase_threshold(&p, &twin, 0.1, ThresholdForm::Literal);
    assert!((literal - (-0.5 + 0.1)).abs() < 1e-12);
}

#[test]
fn energy_terms() {
    let (tok, m) = toy(10, 3, 5);
    let pos = phrase(&tok, &[2], Polarity::Positive);
    let neg = phrase(&tok, &[5], Polarity::Negative);
    let set = ConstraintSet::new(vec![pos.clone()], vec![neg.clone()]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let soft = random_soft(4, 3, &mut rng);
    let positions = [1, 2];
    let mut lag = LagrangeState::new(&set, m.embeddings(), &MucolaConfig::default());
    let base = energy_at(&m, &[TokenId(0)], &soft, &set, &lag, &positions).unwrap();
    assert_eq!(base.to_bits(), (-m.soft_forward(&[TokenId(0)], &soft).unwrap().log_prob).to_bits());

    let f = constraint_values_at(&soft, m.embeddings(), &set, &positions).unwrap();
    lag.lambdas = vec![2.0, 0.0];
    let with_pos = energy_at(&m, &[TokenId(0)], &soft, &set, &lag, &positions).unwrap();
    assert!((with_pos - (base - 2.0 * (lag.thresholds[0] - f[0]))).abs() < 1e-12);
    lag.lambdas = vec![0.0, 3.0];
    let with_neg = energy_at(&m, &[TokenId(0)], &soft, &set, &lag, &positions).unwrap();
    assert!((with_neg - (base + 3.0 * (lag.thresholds[1] - f[1]))).abs() < 1e-12);

    // swapping polarity negates the contribution
    let flipped = ConstraintSet::new(vec![], vec![PhraseConstraint::from_tokens(pos.text(), Polarity::Negative, pos.tokens().to_vec())]).unwrap();
    let mut lag_f = LagrangeState::new(&flipped, m.embeddings(), &MucolaConfig::default());
    lag_f.lambdas = vec![2.0];
    let e_f = energy_at(&m, &[TokenId(0)], &soft, &flipped, &lag_f, &[1]).unwrap();
    assert!(((e_f - base) + (with_pos - base)).abs() < 1e-12);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..10 {
        let (tok, m) = toy(8, 3, case);
        let set = ConstraintSet::new(
            vec![phrase(&tok, &[1, 2], Polarity::Positive)],
            vec![phrase(&tok, &[3], Polarity::Negative)],
        )
        .unwrap();
        let soft = random_soft(4, 3, &mut rng);
        let mut lag = LagrangeState::new(&set, m.embeddings(), &MucolaConfig::default());
        lag.lambdas = vec![1.5, 0.7];
        let positions = [1, 3];
        let prompt = [TokenId(0), TokenId(4)];
        let grad = energy_gradient_at(&m, &prompt, &soft, &set, &lag, &positions).unwrap();
        let h = 1e-5;
        for idx in 0..soft.len() * soft.dim() {
            let mut plus = soft.clone();
            plus.matrix_mut().as_mut_slice()[idx] += h;
            let mut minus = soft.clone();
            minus.matrix_mut().as_mut_slice()[idx] -= h;
            let fd = (energy_at(&m, &prompt, &plus, &set, &lag, &positions).unwrap()
                - energy_at(&m, &prompt, &minus, &set, &lag, &positions).unwrap())
                / (2.0 * h);
            let g = grad.as_slice()[idx];
            assert!((fd - g).abs() <= 1e-4 * g.abs().max(1.0), "case {case} idx {idx}: {fd} vs {g}");
        }
    }
}

#[test]
fn multiplier_sign() {
    let (tok, _) = toy(6, 2, 1);
    let set = ConstraintSet::new(vec![phrase(&tok, &[1], Polarity::Positive)], vec![phrase(&tok, &[2], Polarity::Negative)]).unwrap();
    let lag = LagrangeState { lambdas: vec![0.5, 0.5], thresholds: vec![1.0, 1.0] };
    let up = lag.ascend(&set, &[1.2, 1.2], 10.0);
    assert!((up.lambdas[0] - 2.5).abs() < 1e-12);
    assert_eq!(up.lambdas[1], 0.0);
    let down = lag.ascend(&set, &[0.9, 0.9], 10.0);
    assert_eq!(down.lambdas[0], 0.0);
    assert!((down.lambdas[1] - 1.5).abs() < 1e-12);
}

#[test]
fn zero_step_is_projection() {
    let (tok, m) = toy(9, 3, 4);
    let set = ConstraintSet::new(vec![phrase(&tok, &[2], Polarity::Positive)], vec![]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let soft = random_soft(5, 3, &mut rng);
    let cfg = MucolaConfig::default();
    let lag = LagrangeState::new(&set, m.embeddings(), &cfg);
    let step = langevin_step(&m, &[], &soft, &lag, &set, &cfg, 0.0, 0.0, &mut rng).unwrap();
    assert_eq!(step.soft, project_sequence(&soft, m.embeddings()).unwrap().0);
    let expected = (cfg.alpha * (step.values[0] - lag.thresholds[0])).max(0.0);
    assert_eq!(step.lagrange.lambdas[0], expected);
}

#[test]
fn gradient_step_descends() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (_, m) = toy(10, 4, 8);
    let set = ConstraintSet::empty();
    let lag = LagrangeState::new(&set, m.embeddings(), &MucolaConfig::default());
    for _ in 0..20 {
        let mut soft = random_soft(5, 4, &mut rng);
        let mut prev = energy_at(&m, &[], &soft, &set, &lag, &[]).unwrap();
        for _ in 0..50 {
            let g = energy_gradient_at(&m, &[], &soft, &set, &lag, &[]).unwrap();
            for (x, gi) in soft.matrix_mut().as_mut_slice().iter_mut().zip(g.as_slice()) {
                *x -= 1e-3 * gi;
            }
            let e = energy_at(&m, &[], &soft, &set, &lag, &[]).unwrap();
            assert!(e <= prev + 1e-12);
            prev = e;
        }
    }
}

#[test]
fn decode_is_reproducible() {
    let (tok, m) = toy(12, 4, 6);
    let set = ConstraintSet::new(vec![phrase(&tok, &[5], Polarity::Positive)], vec![]).unwrap();
    let cfg = MucolaConfig { output_len: 6, max_iters: 60, rng_seed: 3, ..Default::default() };
    let a = mucola_decode(&m, &tok, &[TokenId(0)], &set, &cfg).unwrap();
    assert_eq!(a, mucola_decode(&m, &tok, &[TokenId(0)], &set, &cfg).unwrap());
    assert_eq!(a.tokens.len(), 6);
    assert!(a.tokens.iter().all(|t| t.index() < 12));
}

#[test]
fn unconstrained_decode_keeps_likelihood() {
    let (tok, m) = toy(12, 4, 7);
    let cfg = MucolaConfig { output_len: 6, max_iters: 40, noise_scale: 0.0, ..Default::default() };
    let out = mucola_decode(&m, &tok, &[TokenId(1)], &ConstraintSet::empty(), &cfg).unwrap();
    assert!(out.satisfied);
    assert!(out.final_nll <= out.initial_nll);
}

#[test]
fn multipliers_rise_while_unsatisfied() {
    let (tok, m) = toy(12, 4, 2);
    let set = ConstraintSet::new(vec![phrase(&tok, &[9], Polarity::Positive)], vec![]).unwrap();
    let cfg = MucolaConfig { output_len: 5, max_iters: 80, ..Default::default() };
    let (_, trace) = mucola_decode_traced(&m, &tok, &[], &set, &cfg).unwrap();
    assert!(!trace.is_empty());
    for r in &trace {
        assert!(r.lambdas_after.iter().all(|&l| l >= 0.0));
        if r.values[0] > r.thresholds[0] {
            assert!(r.lambdas_after[0] > r.lambdas_before[0]);
        }
    }
}
