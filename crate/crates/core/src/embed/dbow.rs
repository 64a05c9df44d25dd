//! Paragraph vectors, distributed bag-of-words variant, trained with negative sampling.
//!
//! Each paragraph vector is trained to predict the words of its paragraph
//! against `negatives` noise words drawn from the unigram distribution raised
//! to the 0.75 power. Word output vectors start at zero, paragraph vectors at
//! small uniform noise, and the learning rate decays linearly over all epochs.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EmbeddingVector, ParagraphRef, VectorMap};
use crate::error::{Error, Result};
use crate::textprep::Paragraph;

const NOISE_POWER: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbowConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub seed: u64,
}

impl Default for DbowConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            epochs: 40,
            negatives: 5,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
            seed: 0,
        }
    }
}

/// Vocabulary plus the frozen word output matrix.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    vocab: HashMap<String, usize>,
    words: Vec<String>,
    counts: Vec<u64>,
    /// Word output vectors, single precision like the reference trainer.
    output: Vec<f32>,
    noise: WeightedAliasIndex<f64>,
    config: DbowConfig,
}

#[derive(Debug, Clone)]
pub struct DbowTraining {
    pub model: EmbeddingModel,
    pub vectors: VectorMap,
    /// Mean negative-sampling loss per positive (paragraph, word) pair, one entry per epoch.
    pub epoch_loss: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

const LANES: usize = 8;

/// Dot product over fixed-width chunks with independent accumulators, which
/// lets the compiler vectorize the reduction.
fn fast_dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        let x: &[f32; LANES] = x.try_into().expect("exact chunk");
        let y: &[f32; LANES] = y.try_into().expect("exact chunk");
        for k in 0..LANES {
            acc[k] += x[k] * y[k];
        }
    }
    let s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    f64::from(s + tail)
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

/// `y += g * x`.
fn axpy(y: &mut [f32], g: f32, x: &[f32]) {
    debug_assert_eq!(y.len(), x.len());
    let mut cy = y.chunks_exact_mut(LANES);
    let mut cx = x.chunks_exact(LANES);
    for (yc, xc) in (&mut cy).zip(&mut cx) {
        let yc: &mut [f32; LANES] = yc.try_into().expect("exact chunk");
        let xc: &[f32; LANES] = xc.try_into().expect("exact chunk");
        for k in 0..LANES {
            yc[k] += g * xc[k];
        }
    }
    for (yi, xi) in cy.into_remainder().iter_mut().zip(cx.remainder()) {
        *yi += g * xi;
    }
}

fn init_doc_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim)
        .map(|_| ((rng.random::<f64>() - 0.5) / dim as f64) as f32)
        .collect()
}

impl EmbeddingModel {
    fn build(paragraphs: &[&Paragraph], config: DbowConfig) -> Self {
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        for p in paragraphs {
            for t in &p.tokens {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let words: Vec<String> = ranked.iter().map(|(w, _)| w.to_string()).collect();
        let counts: Vec<u64> = ranked.iter().map(|(_, c)| *c).collect();
        let vocab = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        let noise = WeightedAliasIndex::new(
            counts
                .iter()
                .map(|&c| (c as f64).powf(NOISE_POWER))
                .collect(),
        )
        .expect("vocabulary is nonempty with positive counts");
        Self {
            vocab,
            output: vec![0.0; words.len() * config.dim],
            words,
            counts,
            noise,
            config,
        }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn config(&self) -> &DbowConfig {
        &self.config
    }

    pub fn vocab_len(&self) -> usize {
        self.words.len()
    }

    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.vocab.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn word_count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn output_vector(&self, id: usize) -> &[f32] {
        let d = self.config.dim;
        &self.output[id * d..(id + 1) * d]
    }

    fn sample_noise(&self, rng: &mut ChaCha8Rng) -> usize {
        self.noise.sample(rng)
    }

    /// One positive word plus negatives against `doc`. Returns the pair loss.
    fn train_pair(
        &mut self,
        doc: &mut [f32],
        word: usize,
        lr: f64,
        rng: &mut ChaCha8Rng,
        grad: &mut [f32],
    ) -> f64 {
        let d = self.config.dim;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for s in 0..=self.config.negatives {
            let (target, label) = if s == 0 {
                (word, 1.0)
            } else {
                let t = self.sample_noise(rng);
                if t == word {
                    continue;
                }
                (t, 0.0)
            };
            let out = &mut self.output[target * d..(target + 1) * d];
            let f = fast_dot(out, doc);
            loss += if label > 0.0 {
                softplus(-f)
            } else {
                softplus(f)
            };
            let g = ((label - sigmoid(f)) * lr) as f32;
            axpy(grad, g, out);
            axpy(out, g, doc);
        }
        axpy(doc, 1.0, grad);
        loss
    }

    /// Same update as `train_pair` with the word matrix left untouched.
    fn infer_pair(
        &self,
        doc: &mut [f32],
        word: usize,
        lr: f64,
        rng: &mut ChaCha8Rng,
        grad: &mut [f32],
    ) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for s in 0..=self.config.negatives {
            let (target, label) = if s == 0 {
                (word, 1.0)
            } else {
                let t = self.sample_noise(rng);
                if t == word {
                    continue;
                }
                (t, 0.0)
            };
            let out = self.output_vector(target);
            let g = ((label - sigmoid(fast_dot(out, doc))) * lr) as f32;
            axpy(grad, g, out);
        }
        axpy(doc, 1.0, grad);
    }

    fn known_ids(&self, paragraph: &Paragraph) -> Vec<usize> {
        paragraph
            .tokens
            .iter()
            .filter_map(|t| self.word_id(t))
            .collect()
    }

    /// Fits a fresh paragraph vector with the word matrix frozen.
    pub fn infer_vector(
        &self,
        paragraph: &Paragraph,
        steps: usize,
        seed: u64,
    ) -> Result<EmbeddingVector> {
        let ids = self.known_ids(paragraph);
        let pref = ParagraphRef::new(paragraph.doc_id.clone(), paragraph.index);
        if ids.is_empty() {
            return Err(Error::OutOfVocabulary(pref.to_string()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.config.dim;
        let mut doc = init_doc_vector(&mut rng, d);
        let mut grad = vec![0.0; d];
        let total = (steps * ids.len()).max(1) as f64;
        let mut done = 0usize;
        for _ in 0..steps {
            for &w in &ids {
                let lr = self.learning_rate_at(done as f64 / total);
                self.infer_pair(&mut doc, w, lr, &mut rng, &mut grad);
                done += 1;
            }
        }
        Ok(EmbeddingVector::new(pref, widen(&doc)))
    }

    /// Infers vectors for many paragraphs in parallel; paragraphs with no known
    /// token are returned in the second list instead of failing the batch.
    pub fn infer_many(
        &self,
        paragraphs: &[Paragraph],
        steps: usize,
        seed: u64,
    ) -> (Vec<EmbeddingVector>, Vec<ParagraphRef>) {
        let results: Vec<Result<EmbeddingVector>> = paragraphs
            .par_iter()
            .map(|p| self.infer_vector(p, steps, seed))
            .collect();
        let mut vectors = Vec::with_capacity(results.len());
        let mut skipped = Vec::new();
        for (p, r) in paragraphs.iter().zip(results) {
            match r {
                Ok(v) => vectors.push(v),
                Err(_) => skipped.push(ParagraphRef::new(p.doc_id.clone(), p.index)),
            }
        }
        (vectors, skipped)
    }

    fn learning_rate_at(&self, progress: f64) -> f64 {
        let c = &self.config;
        (c.learning_rate - (c.learning_rate - c.min_learning_rate) * progress)
            .max(c.min_learning_rate)
    }
}

/// Trains paragraph and word output vectors on `paragraphs`.
///
/// Paragraphs are put in canonical `(doc_id, index)` order before the seeded
/// per-epoch shuffle, so the result does not depend on input order.
pub fn train_dbow(paragraphs: &[Paragraph], config: DbowConfig) -> Result<DbowTraining> {
    if config.dim < 2 {
        return Err(Error::DegenerateDimension(config.dim));
    }
    if config.epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    let mut ordered: Vec<&Paragraph> = paragraphs.iter().filter(|p| !p.tokens.is_empty()).collect();
    if ordered.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    ordered.sort_by(|a, b| (&a.doc_id, a.index).cmp(&(&b.doc_id, b.index)));
    if let Some(w) = ordered
        .windows(2)
        .find(|w| w[0].doc_id == w[1].doc_id && w[0].index == w[1].index)
    {
        return Err(Error::DuplicateParagraph(
            ParagraphRef::new(w[0].doc_id.clone(), w[0].index).to_string(),
        ));
    }

    let mut model = EmbeddingModel::build(&ordered, config);
    let d = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut docs: Vec<Vec<f32>> = ordered
        .iter()
        .map(|_| init_doc_vector(&mut rng, d))
        .collect();
    let token_ids: Vec<Vec<usize>> = ordered.iter().map(|p| model.known_ids(p)).collect();
    let words_per_epoch: usize = token_ids.iter().map(Vec::len).sum();
    let total = (words_per_epoch * config.epochs) as f64;

    let mut grad = vec![0.0; d];
    let mut order: Vec<usize> = (0..ordered.len()).collect();
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut done = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        for &p in &order {
            for &w in &token_ids[p] {
                let lr = model.learning_rate_at(done as f64 / total);
                loss += model.train_pair(&mut docs[p], w, lr, &mut rng, &mut grad);
                done += 1;
            }
        }
        epoch_loss.push(loss / words_per_epoch as f64);
    }

    let vectors = ordered
        .iter()
        .zip(docs)
        .map(|(p, v)| {
            let r = ParagraphRef::new(p.doc_id.clone(), p.index);
            (r.clone(), EmbeddingVector::new(r, widen(&v)))
        })
        .collect();
    Ok(DbowTraining {
        model,
        vectors,
        epoch_loss,
    })
}
