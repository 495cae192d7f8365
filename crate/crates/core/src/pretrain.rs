//! Unsupervised encoder fine-tuning on unlabelled documents: dynamic masked
//! language modelling, positional pair classification, and the staged
//! pipeline that feeds the supervised extractor.

use layoutie_nn::{Adam, AdamConfig, Checkpoint, Graph, LrGroups, ParamId, ParamStore};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::docmodel::{reading_order, tokenize, Document, Vocabulary};
use crate::error::{Error, Result};
use crate::extractor::{train_supervised, History, Model, ModelConfig, TrainConfig};
use crate::layoutgraph::{balance_sprc_pairs, extract_sprc_pairs, SprcLabel, SprcPair};
use crate::textencoder::{dynamic_mask, mlm_loss, perplexity, Encoder, EncoderConfig, EncoderInput, MlmHead};
use crate::util::{derive_seed, stable_hash};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub lr: f64,
    pub mask_ratio: f64,
    pub mlm_epochs: usize,
    /// Epochs when SPRC starts from scratch / from an MLM checkpoint.
    pub sprc_epochs: usize,
    pub sprc_epochs_after_mlm: usize,
    /// Sequences per optimiser step.
    pub batch_size: usize,
    pub eps_align: f64,
    /// Fraction of vertical pairs kept; `None` keeps all.
    pub balance_ratio: Option<f64>,
    /// Optional caps on training items visited per epoch (random subset).
    pub max_mlm_windows_per_epoch: Option<usize>,
    pub max_sprc_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            lr: 1e-3,
            mask_ratio: 0.15,
            mlm_epochs: 30,
            sprc_epochs: 15,
            sprc_epochs_after_mlm: 18,
            batch_size: 16,
            eps_align: 1.0,
            balance_ratio: None,
            max_mlm_windows_per_epoch: None,
            max_sprc_per_epoch: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub stage: String,
    pub epochs: usize,
    pub epoch_losses: Vec<f64>,
    pub final_metric_name: String,
    pub final_metric_value: f64,
    /// The same metric before any training.
    pub initial_metric_value: f64,
    pub checkpoint: Option<String>,
}

/// Whether an item lands in the 10% held-out split.
fn held_out(key: &str) -> bool {
    stable_hash(key) % 10 == 0
}

fn adam(store: &ParamStore, lr: f64) -> Adam {
    let cfg = AdamConfig {
        max_grad_norm: Some(5.0),
        ..AdamConfig::default()
    };
    Adam::new(store, cfg, LrGroups::single(lr))
}

fn epoch_order(n: usize, cap: Option<usize>, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3, epoch as u64])));
    if let Some(c) = cap {
        order.truncate(c);
    }
    order
}

/// Fresh store holding an encoder, or a copy of the encoder part of `init`.
fn encoder_store(enc_cfg: &EncoderConfig, init: Option<&ParamStore>, seed: u64) -> Result<(ParamStore, Encoder)> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = Encoder::init(&mut store, enc_cfg, &mut rng)?;
    if let Some(init) = init {
        let mut src = init.clone();
        src.retain(|n| n.starts_with("enc."));
        store.copy_matching_from(&src)?;
    }
    Ok((store, enc))
}

// ---------------------------------------------------------------------------
// Masked language modelling

/// Token-id windows: each page's box tokens concatenated in reading order and
/// cut into pieces that fit between `[CLS]` and `[SEP]`.
pub fn mlm_windows(docs: &[Document], vocab: &Vocabulary, max_tokens: usize) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for d in docs {
        for p in &d.pages {
            let mut ids = Vec::new();
            for i in reading_order(&p.boxes) {
                ids.extend(vocab.encode(&tokenize(&p.boxes[i].text)));
            }
            for (w, chunk) in ids.chunks(max_tokens.max(1)).enumerate() {
                out.push((format!("{}/{}/{w}", d.doc_id, p.page_no), chunk.to_vec()));
            }
        }
    }
    out
}

fn mlm_eval(enc: &Encoder, head: &MlmHead, store: &ParamStore, windows: &[Vec<usize>], cfg: &PretrainConfig) -> Result<f64> {
    let per: Result<Vec<(f64, usize)>> = windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let m = dynamic_mask(w, enc.config.vocab_size, derive_seed(cfg.seed, &[0xe7a1, i as u64]), cfg.mask_ratio);
            if m.positions.is_empty() {
                return Ok((0.0, 0));
            }
            let (inp, _) = EncoderInput::single(&m.masked_ids, enc.config.max_seq_len);
            let mut g = Graph::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let b = enc.forward(&mut g, store, std::slice::from_ref(&inp), false, &mut rng)?;
            let rows: Vec<usize> = m.positions.iter().map(|p| p + 1).collect();
            let l = mlm_loss(&mut g, store, head, b.states, &rows, &m.originals)?.expect("non-empty");
            Ok((g.value(l).item() * rows.len() as f64, rows.len()))
        })
        .collect();
    let (sum, n) = per?.into_iter().fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(perplexity(sum / n.max(1) as f64))
}

/// Trains encoder + MLM head with a fresh mask pattern per (epoch, window);
/// the metric is held-out perplexity.
pub fn run_mlm(
    docs: &[Document],
    vocab: &Vocabulary,
    enc_cfg: &EncoderConfig,
    cfg: &PretrainConfig,
    init: Option<&ParamStore>,
) -> Result<(ParamStore, PretrainReport)> {
    let windows = mlm_windows(docs, vocab, enc_cfg.max_tokens());
    if windows.is_empty() {
        return Err(Error::Empty("MLM corpus"));
    }
    let (train, val): (Vec<_>, Vec<_>) = windows.into_iter().partition(|(k, _)| !held_out(k));
    let train: Vec<Vec<usize>> = train.into_iter().map(|(_, w)| w).collect();
    let val: Vec<Vec<usize>> = val.into_iter().map(|(_, w)| w).collect();
    if train.is_empty() {
        return Err(Error::Empty("MLM training split"));
    }
    let (mut store, enc) = encoder_store(enc_cfg, init, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0x31]));
    let head = MlmHead::init(&mut store, enc_cfg.hidden_dim, enc_cfg.vocab_size, &mut rng)?;
    let val_or_train = if val.is_empty() { &train } else { &val };
    let initial = mlm_eval(&enc, &head, &store, val_or_train, cfg)?;
    let mut opt = adam(&store, cfg.lr);
    let mut losses = Vec::new();
    for epoch in 0..cfg.mlm_epochs {
        let order = epoch_order(train.len(), cfg.max_mlm_windows_per_epoch, cfg.seed, epoch);
        let (mut total, mut steps) = (0.0, 0);
        for (step, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let mut inputs = Vec::new();
            let mut rows = Vec::new();
            let mut originals = Vec::new();
            let mut offset = 0;
            for &i in batch {
                let m = dynamic_mask(&train[i], enc_cfg.vocab_size, derive_seed(cfg.seed, &[0x3a, epoch as u64, i as u64]), cfg.mask_ratio);
                let (inp, _) = EncoderInput::single(&m.masked_ids, enc_cfg.max_seq_len);
                rows.extend(m.positions.iter().map(|p| offset + p + 1));
                originals.extend(m.originals);
                offset += inp.len();
                inputs.push(inp);
            }
            let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0x3b, epoch as u64, step as u64]));
            let grads = {
                let mut g = Graph::new();
                let b = enc.forward(&mut g, &store, &inputs, true, &mut drop_rng)?;
                let Some(l) = mlm_loss(&mut g, &store, &head, b.states, &rows, &originals)? else {
                    continue;
                };
                total += g.value(l).item();
                steps += 1;
                g.backward(l, store.len())?
            };
            store.accumulate(&grads);
            opt.step(&mut store);
        }
        losses.push(total / steps.max(1) as f64);
    }
    let ppl = mlm_eval(&enc, &head, &store, val_or_train, cfg)?;
    Ok((
        store,
        PretrainReport {
            stage: "mlm".into(),
            epochs: cfg.mlm_epochs,
            epoch_losses: losses,
            final_metric_name: "perplexity".into(),
            final_metric_value: ppl,
            initial_metric_value: initial,
            checkpoint: None,
        },
    ))
}

// ---------------------------------------------------------------------------
// Positional relationship classification

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SprcExample {
    pub input: EncoderInput,
    pub label: SprcLabel,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SprcDataset {
    pub train: Vec<SprcExample>,
    pub val: Vec<SprcExample>,
}

impl SprcDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for e in self.train.iter().chain(&self.val) {
            c[e.label.index()] += 1;
        }
        c
    }
}

/// Pairs of strictly adjacent boxes, both orders, optionally thinning the
/// vertical ones (sampled per unordered pair). Both orders of a pair land in
/// the same split.
pub fn build_sprc_dataset(
    docs: &[Document],
    vocab: &Vocabulary,
    max_seq_len: usize,
    eps_align: f64,
    balance_ratio: Option<f64>,
    seed: u64,
) -> Result<SprcDataset> {
    let per_page: Vec<Vec<(bool, SprcExample)>> = docs
        .par_iter()
        .flat_map_iter(|d| d.pages.iter().map(move |p| (d, p)))
        .map(|(d, p)| {
            let ids: std::collections::HashMap<usize, Vec<usize>> = p
                .boxes
                .iter()
                .map(|b| (b.box_id, vocab.encode(&tokenize(&b.text))))
                .collect();
            let all = extract_sprc_pairs(p, eps_align);
            let canonical: Vec<SprcPair> = all.iter().step_by(2).copied().collect();
            let kept = match balance_ratio {
                Some(r) => {
                    let page_seed = derive_seed(seed, &[stable_hash(&d.doc_id), p.page_no as u64]);
                    balance_sprc_pairs(&canonical, r, page_seed)
                }
                None => canonical,
            };
            let mut out = Vec::with_capacity(2 * kept.len());
            for pair in kept {
                let key = format!("{}/{}/{}/{}", d.doc_id, p.page_no, pair.box_a.min(pair.box_b), pair.box_a.max(pair.box_b));
                let val = held_out(&key);
                for (a, b, label) in [(pair.box_a, pair.box_b, pair.label), (pair.box_b, pair.box_a, pair.label.flip())] {
                    out.push((
                        val,
                        SprcExample {
                            input: EncoderInput::pair(&ids[&a], &ids[&b], max_seq_len),
                            label,
                        },
                    ));
                }
            }
            out
        })
        .collect();
    let mut ds = SprcDataset::default();
    for (val, ex) in per_page.into_iter().flatten() {
        if val {
            ds.val.push(ex);
        } else {
            ds.train.push(ex);
        }
    }
    if ds.is_empty() {
        return Err(Error::Empty("SPRC dataset"));
    }
    Ok(ds)
}

/// Linear classifier on `[CLS]` under the `sprc.` prefix.
#[derive(Clone, Debug)]
pub struct SprcHead {
    w: ParamId,
    b: ParamId,
}

impl SprcHead {
    pub fn init(store: &mut ParamStore, d: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let w = store.add_normal("sprc.w", &[d, 4], (1.0 / d as f64).sqrt(), rng)?;
        let b = store.add_constant("sprc.b", &[4], 0.0)?;
        Ok(SprcHead { w, b })
    }
}

/// Four logits per example, one row each.
pub fn sprc_forward<'a>(
    g: &mut Graph<'a>,
    store: &'a ParamStore,
    enc: &Encoder,
    head: &SprcHead,
    examples: &[&SprcExample],
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Result<layoutie_nn::Var> {
    let inputs: Vec<EncoderInput> = examples.iter().map(|e| e.input.clone()).collect();
    let b = enc.forward(g, store, &inputs, train, rng)?;
    let cls = g.gather_rows(b.states, &b.cls_rows)?;
    let w = g.param(store, head.w);
    let bias = g.param(store, head.b);
    Ok(g.linear(cls, w, bias)?)
}

pub fn sprc_accuracy(store: &ParamStore, enc: &Encoder, head: &SprcHead, examples: &[SprcExample]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let hits: Result<Vec<usize>> = examples
        .par_chunks(64)
        .map(|chunk| {
            let refs: Vec<&SprcExample> = chunk.iter().collect();
            let mut g = Graph::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let logits = sprc_forward(&mut g, store, enc, head, &refs, false, &mut rng)?;
            Ok(g.value(logits)
                .argmax_rows()
                .into_iter()
                .zip(chunk)
                .filter(|(p, e)| *p == e.label.index())
                .count())
        })
        .collect();
    Ok(hits?.into_iter().sum::<usize>() as f64 / examples.len() as f64)
}

/// Trains encoder + SPRC head; the metric is held-out accuracy. With an MLM
/// checkpoint the encoder starts from it and runs the longer schedule.
pub fn run_sprc(
    docs: &[Document],
    vocab: &Vocabulary,
    enc_cfg: &EncoderConfig,
    cfg: &PretrainConfig,
    init: Option<&ParamStore>,
) -> Result<(ParamStore, PretrainReport)> {
    let ds = build_sprc_dataset(docs, vocab, enc_cfg.max_seq_len, cfg.eps_align, cfg.balance_ratio, cfg.seed)?;
    if ds.train.is_empty() {
        return Err(Error::Empty("SPRC training split"));
    }
    run_sprc_on(&ds, enc_cfg, cfg, init)
}

pub fn run_sprc_on(ds: &SprcDataset, enc_cfg: &EncoderConfig, cfg: &PretrainConfig, init: Option<&ParamStore>) -> Result<(ParamStore, PretrainReport)> {
    let (mut store, enc) = encoder_store(enc_cfg, init, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0x5c]));
    let head = SprcHead::init(&mut store, enc_cfg.hidden_dim, &mut rng)?;
    let eval_set = if ds.val.is_empty() { &ds.train } else { &ds.val };
    let initial = sprc_accuracy(&store, &enc, &head, eval_set)?;
    let epochs = if init.is_some() { cfg.sprc_epochs_after_mlm } else { cfg.sprc_epochs };
    let mut opt = adam(&store, cfg.lr);
    let mut losses = Vec::new();
    for epoch in 0..epochs {
        let order = epoch_order(ds.train.len(), cfg.max_sprc_per_epoch, cfg.seed ^ 0x5c, epoch);
        let (mut total, mut steps) = (0.0, 0);
        for (step, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let refs: Vec<&SprcExample> = batch.iter().map(|&i| &ds.train[i]).collect();
            let targets: Vec<(usize, usize)> = refs.iter().enumerate().map(|(r, e)| (r, e.label.index())).collect();
            let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0x5d, epoch as u64, step as u64]));
            let grads = {
                let mut g = Graph::new();
                let logits = sprc_forward(&mut g, &store, &enc, &head, &refs, true, &mut drop_rng)?;
                let l = g.cross_entropy(logits, &targets)?;
                total += g.value(l).item();
                steps += 1;
                g.backward(l, store.len())?
            };
            store.accumulate(&grads);
            opt.step(&mut store);
        }
        losses.push(total / steps.max(1) as f64);
    }
    let acc = sprc_accuracy(&store, &enc, &head, eval_set)?;
    Ok((
        store,
        PretrainReport {
            stage: "sprc".into(),
            epochs,
            epoch_losses: losses,
            final_metric_name: "accuracy".into(),
            final_metric_value: acc,
            initial_metric_value: initial,
            checkpoint: None,
        },
    ))
}

// ---------------------------------------------------------------------------
// Staged pipeline

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Mlm,
    Sprc,
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mlm" => Ok(Stage::Mlm),
            "sprc" => Ok(Stage::Sprc),
            other => Err(Error::Config(format!("unknown stage {other:?}"))),
        }
    }
}

/// Stages must be unique and MLM must precede SPRC.
pub fn validate_stages(stages: &[Stage]) -> Result<()> {
    if stages.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("stages must be unique and ordered mlm before sprc".into()));
    }
    Ok(())
}

/// Runs the requested unsupervised stages, each starting from the previous
/// stage's encoder, and returns the final encoder-bearing store (only `enc.`
/// parameters) with one report per stage.
pub fn run_stages(
    stages: &[Stage],
    unlabelled: &[Document],
    vocab: &Vocabulary,
    enc_cfg: &EncoderConfig,
    cfg: &PretrainConfig,
) -> Result<(Option<ParamStore>, Vec<PretrainReport>)> {
    validate_stages(stages)?;
    let mut current: Option<ParamStore> = None;
    let mut reports = Vec::new();
    for stage in stages {
        let (mut store, report) = match stage {
            Stage::Mlm => run_mlm(unlabelled, vocab, enc_cfg, cfg, current.as_ref())?,
            Stage::Sprc => run_sprc(unlabelled, vocab, enc_cfg, cfg, current.as_ref())?,
        };
        store.retain(|n| n.starts_with("enc."));
        current = Some(store);
        reports.push(report);
    }
    Ok((current, reports))
}

/// Unsupervised stages followed by supervised training of a fresh model whose
/// encoder starts from the last stage. No stages is plain supervised training.
#[allow(clippy::too_many_arguments)]
pub fn pipeline(
    stages: &[Stage],
    unlabelled: &[Document],
    train: &[Document],
    val: &[Document],
    vocab: &Vocabulary,
    model_cfg: &ModelConfig,
    pre_cfg: &PretrainConfig,
    train_cfg: &TrainConfig,
) -> Result<(Model, Vec<PretrainReport>, History)> {
    let (encoder, reports) = run_stages(stages, unlabelled, vocab, &model_cfg.encoder, pre_cfg)?;
    let mut model = Model::new(model_cfg.clone(), vocab.clone(), train_cfg.seed)?;
    if let Some(enc) = &encoder {
        model.load_encoder_from(enc)?;
    }
    let history = train_supervised(&mut model, train, val, train_cfg)?;
    Ok((model, reports, history))
}

/// Checkpoint holding a pretrained encoder plus its config and vocabulary.
pub fn encoder_checkpoint(store: &ParamStore, enc_cfg: &EncoderConfig, vocab: &Vocabulary) -> Checkpoint {
    Checkpoint {
        config: serde_json::json!({"kind": "encoder", "encoder": enc_cfg, "vocab": vocab}),
        params: store.clone(),
    }
}
