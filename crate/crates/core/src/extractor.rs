//! The entity extractor: encoder token states joined with GCN node states,
//! a linear BIO tagging head, supervised training and span decoding.

use std::path::Path;

use layoutie_nn::{Adam, AdamConfig, Checkpoint, Graph, LrGroups, ParamId, ParamStore, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::docmodel::{decode_spans, merge_close_boxes, project_labels, tokenize, Document, TagSet, TextBox, TokenSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::evalkit::{score_pages, EvalCounts};
use crate::layoutgcn::{Gcn, GcnConfig};
use crate::layoutgraph::{build_page_graph, chunk_page, rank_fonts, EdgeType, GraphOptions, PageGraph};
use crate::textencoder::{Encoder, EncoderConfig, EncoderInput};
use crate::util::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// `None` is the text-only tagger.
    pub gcn: Option<GcnConfig>,
    pub entity_types: Vec<String>,
    pub eps_align: f64,
    pub merge_eps: f64,
    pub max_nodes: usize,
}

impl ModelConfig {
    /// Small configuration; `graph` adds the two-edge-type GCN.
    pub fn desk(vocab_size: usize, entity_types: &[&str], graph: bool) -> Self {
        ModelConfig {
            encoder: EncoderConfig::desk(vocab_size),
            gcn: graph.then(|| GcnConfig::desk(EdgeType::ALL.to_vec())),
            entity_types: entity_types.iter().map(|s| s.to_string()).collect(),
            eps_align: 1.0,
            merge_eps: 1.0,
            max_nodes: 100,
        }
    }

    pub fn paper(vocab_size: usize, entity_types: &[&str], graph: bool) -> Self {
        ModelConfig {
            encoder: EncoderConfig::paper(vocab_size),
            gcn: graph.then(|| GcnConfig {
                hidden_dim: 512,
                ..GcnConfig::desk(EdgeType::ALL.to_vec())
            }),
            entity_types: entity_types.iter().map(|s| s.to_string()).collect(),
            eps_align: 1.0,
            merge_eps: 1.0,
            max_nodes: 150,
        }
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            eps_align: self.eps_align,
            section_title_edges: self
                .gcn
                .as_ref()
                .is_some_and(|g| g.edge_types.contains(&EdgeType::SectionTitle)),
        }
    }

    pub fn max_ranks(&self) -> usize {
        self.gcn.as_ref().map_or(16, |g| g.max_ranks)
    }
}

/// A page (or node-capped chunk of one) ready for the network.
#[derive(Clone, Debug)]
pub struct PreparedPage {
    pub doc_id: String,
    pub page_no: usize,
    pub boxes: Vec<TextBox>,
    /// Full token sequences; `bio_tags` present for labelled pages.
    pub tokens: Vec<TokenSequence>,
    pub inputs: Vec<EncoderInput>,
    /// Number of leading tokens of each box that fit the encoder.
    pub kept: Vec<usize>,
    pub ranks: Vec<usize>,
    pub graph: PageGraph,
    /// Per configured edge type, neighbourhoods in box order.
    pub hoods: Vec<Vec<Vec<usize>>>,
}

impl PreparedPage {
    pub fn num_kept_tokens(&self) -> usize {
        self.kept.iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub tagset: TagSet,
    pub store: ParamStore,
    encoder: Encoder,
    gcn: Option<Gcn>,
    head: (ParamId, ParamId),
}

/// Output of [`Model::forward_page`].
pub struct PageLogits {
    /// One row per kept token, boxes in page order.
    pub logits: Var,
    /// `(box index, token index)` of every logits row.
    pub rows: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityPrediction {
    pub page_no: usize,
    pub box_id: usize,
    pub entity_type: String,
    pub char_start: usize,
    pub char_end: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocPrediction {
    pub doc_id: String,
    pub entities: Vec<EntityPrediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_encoder: f64,
    pub lr_other: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_encoder: 1e-3,
            lr_other: 1e-3,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            max_grad_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn paper() -> Self {
        TrainConfig {
            lr_encoder: 1e-5,
            lr_other: 5e-5,
            ..Self::default()
        }
    }

    pub fn lr_groups(&self) -> LrGroups {
        LrGroups::single(self.lr_other).with_group("enc.", self.lr_encoder)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        if config.encoder.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "encoder vocab_size {} but vocabulary has {} entries",
                config.encoder.vocab_size,
                vocab.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.encoder.hidden_dim;
        Encoder::init(&mut store, &config.encoder, &mut rng)?;
        let feat = match &config.gcn {
            Some(gc) => {
                Gcn::init(&mut store, gc, d, &mut rng)?;
                d + gc.hidden_dim
            }
            None => d,
        };
        let tagset = TagSet::new(config.entity_types.clone());
        store.add_normal("head.w", &[feat, tagset.num_tags()], (1.0 / feat as f64).sqrt(), &mut rng)?;
        store.add_constant("head.b", &[tagset.num_tags()], 0.0)?;
        Self::from_parts(config, vocab, store)
    }

    pub fn from_parts(config: ModelConfig, vocab: Vocabulary, store: ParamStore) -> Result<Self> {
        let encoder = Encoder::bind(&store, &config.encoder)?;
        let gcn = config.gcn.as_ref().map(|gc| Gcn::bind(&store, gc)).transpose()?;
        let head = (store.id("head.w")?, store.id("head.b")?);
        Ok(Model {
            tagset: TagSet::new(config.entity_types.clone()),
            config,
            vocab,
            store,
            encoder,
            gcn,
            head,
        })
    }

    /// Overwrites encoder weights with those of a pretrained store.
    pub fn load_encoder_from(&mut self, pretrained: &ParamStore) -> Result<usize> {
        let mut enc_only = pretrained.clone();
        enc_only.retain(|n| n.starts_with("enc."));
        Ok(self.store.copy_matching_from(&enc_only)?)
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    // -- preprocessing -------------------------------------------------------

    /// Merge, chunk, tokenise and build graphs for every page of `doc`.
    /// `labelled` projects gold spans onto tokens.
    pub fn prepare(&self, doc: &Document, labelled: bool) -> Result<Vec<PreparedPage>> {
        let merged = Document {
            pages: doc.pages.iter().map(|p| merge_close_boxes(p, self.config.merge_eps)).collect(),
            ..doc.clone()
        };
        let fonts = rank_fonts(&merged, self.config.max_ranks());
        let opts = self.config.graph_options();
        let k = self.config.encoder.max_seq_len;
        let mut out = Vec::new();
        for page in &merged.pages {
            for chunk in chunk_page(page, self.config.max_nodes) {
                let mut tokens = Vec::with_capacity(chunk.boxes.len());
                let mut inputs = Vec::with_capacity(chunk.boxes.len());
                let mut kept = Vec::with_capacity(chunk.boxes.len());
                for b in &chunk.boxes {
                    let mut toks = tokenize(&b.text);
                    if labelled {
                        toks = project_labels(b, &toks, &self.tagset)?;
                    }
                    let ids = self.vocab.encode(&toks);
                    let (inp, _) = EncoderInput::single(&ids, k);
                    kept.push(inp.len() - 2);
                    inputs.push(inp);
                    tokens.push(toks);
                }
                let graph = build_page_graph(&chunk, &opts);
                let box_ids: Vec<usize> = chunk.boxes.iter().map(|b| b.box_id).collect();
                let hoods = self
                    .gcn
                    .as_ref()
                    .map(|g| g.neighbourhoods(&graph, &box_ids))
                    .unwrap_or_default();
                out.push(PreparedPage {
                    doc_id: doc.doc_id.clone(),
                    page_no: chunk.page_no,
                    ranks: chunk.boxes.iter().map(|b| fonts.rank_of(b)).collect(),
                    boxes: chunk.boxes,
                    tokens,
                    inputs,
                    kept,
                    graph,
                    hoods,
                });
            }
        }
        Ok(out)
    }

    pub fn prepare_all(&self, docs: &[Document], labelled: bool) -> Result<Vec<PreparedPage>> {
        let pages: Result<Vec<Vec<PreparedPage>>> = docs.par_iter().map(|d| self.prepare(d, labelled)).collect();
        Ok(pages?.into_iter().flatten().collect())
    }

    // -- network -------------------------------------------------------------

    /// Per-token tag logits for a page. With `zero_graph` the GCN states are
    /// replaced by zeros (diagnostics).
    pub fn forward_page<'a>(&'a self, g: &mut Graph<'a>, page: &PreparedPage, train: bool, rng: &mut impl Rng) -> Result<PageLogits> {
        self.forward_page_with(g, page, train, rng, false)
    }

    pub fn forward_page_with<'a>(
        &'a self,
        g: &mut Graph<'a>,
        page: &PreparedPage,
        train: bool,
        rng: &mut impl Rng,
        zero_graph: bool,
    ) -> Result<PageLogits> {
        let store = &self.store;
        let n = page.boxes.len();
        if page.inputs.len() != n || page.ranks.len() != n {
            return Err(Error::GraphMismatch {
                boxes: n,
                nodes: page.inputs.len(),
            });
        }
        if page.graph.node_ids.len() != n {
            return Err(Error::GraphMismatch {
                boxes: n,
                nodes: page.graph.node_ids.len(),
            });
        }
        let batch = self.encoder.forward(g, store, &page.inputs, train, rng)?;
        let mut tok_rows = Vec::new();
        let mut node_of = Vec::new();
        let mut rows = Vec::new();
        for b in 0..n {
            for (t, r) in batch.token_rows(b).enumerate() {
                tok_rows.push(r);
                node_of.push(b);
                rows.push((b, t));
            }
        }
        let toks = g.gather_rows(batch.states, &tok_rows)?;
        let feat = match &self.gcn {
            Some(gcn) => {
                let cls = g.gather_rows(batch.states, &batch.cls_rows)?;
                let h0 = gcn.node_init(g, store, cls, &page.ranks)?;
                let mut hl = gcn.forward(g, store, &page.hoods, h0)?;
                if zero_graph {
                    hl = g.scale(hl, 0.0);
                }
                let per_tok = g.gather_rows(hl, &node_of)?;
                g.concat_cols(toks, per_tok)?
            }
            None => toks,
        };
        let p = if train { self.config.encoder.dropout } else { 0.0 };
        let feat = g.dropout(feat, p, rng, train);
        let w = g.param(store, self.head.0);
        let b = g.param(store, self.head.1);
        let logits = g.linear(feat, w, b)?;
        Ok(PageLogits { logits, rows })
    }

    /// Mean token cross-entropy; `None` for a page without kept tokens.
    pub fn page_loss<'a>(&'a self, g: &mut Graph<'a>, page: &PreparedPage, train: bool, rng: &mut impl Rng) -> Result<Option<Var>> {
        if page.num_kept_tokens() == 0 {
            return Ok(None);
        }
        let out = self.forward_page(g, page, train, rng)?;
        let mut targets = Vec::with_capacity(out.rows.len());
        for (row, &(b, t)) in out.rows.iter().enumerate() {
            let tags = page.tokens[b]
                .bio_tags
                .as_ref()
                .ok_or_else(|| Error::MissingLabels(page.doc_id.clone()))?;
            targets.push((row, tags[t]));
        }
        Ok(Some(g.cross_entropy(out.logits, &targets)?))
    }

    /// Predicted tags per box over the full token sequence; tokens beyond the
    /// encoder budget are tagged O. BIO repair is applied.
    pub fn predict_tags(&self, page: &PreparedPage) -> Result<Vec<Vec<usize>>> {
        let mut tags: Vec<Vec<usize>> = page.tokens.iter().map(|t| vec![TagSet::O; t.len()]).collect();
        if page.num_kept_tokens() > 0 {
            let mut g = Graph::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let out = self.forward_page(&mut g, page, false, &mut rng)?;
            let pred = g.value(out.logits).argmax_rows();
            for (&(b, t), p) in out.rows.iter().zip(pred) {
                tags[b][t] = p;
            }
        }
        Ok(tags.iter().map(|t| crate::docmodel::repair_bio(t)).collect())
    }

    pub fn predict(&self, doc: &Document) -> Result<DocPrediction> {
        let mut entities = Vec::new();
        for page in self.prepare(doc, false)? {
            let tags = self.predict_tags(&page)?;
            for (b, bx) in page.boxes.iter().enumerate() {
                for (k, s, e) in decode_spans(&page.tokens[b].tokens, &tags[b]) {
                    entities.push(EntityPrediction {
                        page_no: page.page_no,
                        box_id: bx.box_id,
                        entity_type: self.tagset.types()[k].clone(),
                        char_start: s,
                        char_end: e,
                        text: bx.text.chars().skip(s).take(e - s).collect(),
                    });
                }
            }
        }
        Ok(DocPrediction {
            doc_id: doc.doc_id.clone(),
            entities,
        })
    }

    /// Token-level counts against gold labels on prepared pages.
    pub fn evaluate_pages(&self, pages: &[PreparedPage]) -> Result<EvalCounts> {
        let preds: Result<Vec<Vec<Vec<usize>>>> = pages.par_iter().map(|p| self.predict_tags(p)).collect();
        score_pages(&self.tagset, pages, &preds?)
    }

    pub fn evaluate(&self, docs: &[Document]) -> Result<EvalCounts> {
        self.evaluate_pages(&self.prepare_all(docs, true)?)
    }

    // -- persistence ---------------------------------------------------------

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: serde_json::json!({
                "kind": "extractor",
                "model": self.config,
                "vocab": self.vocab,
            }),
            params: self.store.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_value(ck.config["model"].clone())?;
        let vocab: Vocabulary = serde_json::from_value(ck.config["vocab"].clone())?;
        Self::from_parts(config, vocab, ck.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

/// Supervised training with one page per optimiser step, early stopping on
/// validation micro-F1 and restoration of the best weights. Without
/// validation data every epoch is run and the last weights are kept.
pub fn train_supervised(model: &mut Model, train: &[Document], val: &[Document], cfg: &TrainConfig) -> Result<History> {
    let train_pages = model.prepare_all(train, true)?;
    let val_pages = model.prepare_all(val, true)?;
    train_on_pages(model, &train_pages, &val_pages, cfg)
}

pub fn train_on_pages(model: &mut Model, train: &[PreparedPage], val: &[PreparedPage], cfg: &TrainConfig) -> Result<History> {
    if train.iter().all(|p| p.num_kept_tokens() == 0) {
        return Err(Error::Empty("training set"));
    }
    let adam_cfg = AdamConfig {
        max_grad_norm: cfg.max_grad_norm,
        ..AdamConfig::default()
    };
    let mut opt = Adam::new(&model.store, adam_cfg, cfg.lr_groups());
    let mut history = History::default();
    let mut best: Option<ParamStore> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.max_epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, epoch as u64]));
        order.shuffle(&mut shuffle_rng);
        let (mut total, mut count) = (0.0, 0usize);
        for (step, &i) in order.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2, epoch as u64, step as u64]));
            let grads = {
                let mut g = Graph::new();
                let Some(loss) = model.page_loss(&mut g, &train[i], true, &mut rng)? else {
                    continue;
                };
                total += g.value(loss).item();
                count += 1;
                g.backward(loss, model.store.len())?
            };
            model.store.accumulate(&grads);
            opt.step(&mut model.store);
        }
        let train_loss = total / count.max(1) as f64;
        let val_f1 = if val.is_empty() {
            0.0
        } else {
            model.evaluate_pages(val)?.micro().f1
        };
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_f1,
        });
        if val.is_empty() {
            history.best_epoch = epoch;
            continue;
        }
        if best.is_none() || val_f1 > history.best_val_f1 {
            history.best_val_f1 = val_f1;
            history.best_epoch = epoch;
            best = Some(model.store.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    if let Some(b) = best {
        model.store = b;
    }
    Ok(history)
}
