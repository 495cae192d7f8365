//! Token-level precision/recall/F1, per-entity reports, the few-shot sweep
//! and the graph-module ablation runner.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::docmodel::{decode_spans, Document, TagSet, Vocabulary};
use crate::error::{Error, Result};
use crate::extractor::{train_supervised, Model, ModelConfig, PreparedPage, TrainConfig};
use crate::layoutgraph::EdgeType;
use crate::util::derive_seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl Counts {
    pub fn prf(&self) -> Prf {
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f1 = ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_);
        Prf { p, r, f1 }
    }

    pub fn add(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Per-entity-type token counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub types: Vec<String>,
    pub per_type: Vec<Counts>,
}

impl EvalCounts {
    pub fn new(tagset: &TagSet) -> Self {
        EvalCounts {
            types: tagset.types().to_vec(),
            per_type: vec![Counts::default(); tagset.types().len()],
        }
    }

    pub fn micro_counts(&self) -> Counts {
        let mut c = Counts::default();
        for t in &self.per_type {
            c.add(t);
        }
        c
    }

    pub fn micro(&self) -> Prf {
        self.micro_counts().prf()
    }

    pub fn get(&self, entity: &str) -> Option<Counts> {
        self.types.iter().position(|t| t == entity).map(|i| self.per_type[i])
    }

    /// Micro F1 restricted to a subset of entity types.
    pub fn f1_over(&self, entities: &[&str]) -> f64 {
        let mut c = Counts::default();
        for e in entities {
            if let Some(x) = self.get(e) {
                c.add(&x);
            }
        }
        c.prf().f1
    }

    pub fn f1(&self, entity: &str) -> f64 {
        self.f1_over(&[entity])
    }

    pub fn merge(&mut self, other: &EvalCounts) {
        for (a, b) in self.per_type.iter_mut().zip(&other.per_type) {
            a.add(b);
        }
    }

    pub fn per_entity_f1(&self) -> BTreeMap<String, f64> {
        self.types
            .iter()
            .zip(&self.per_type)
            .map(|(t, c)| (t.clone(), c.prf().f1))
            .collect()
    }
}

/// Adds one aligned tag sequence to `counts`. A token whose gold and
/// predicted types agree is a TP of that type; a predicted type that differs
/// from gold is an FP of the prediction and, if gold is an entity, an FN of
/// gold; a missed entity token is an FN.
pub fn score_into(counts: &mut EvalCounts, pred: &[usize], gold: &[usize]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    for (&p, &g) in pred.iter().zip(gold) {
        let (p, g) = (TagSet::type_of(p), TagSet::type_of(g));
        match (p, g) {
            (Some(p), Some(g)) if p == g => counts.per_type[p].tp += 1,
            (Some(p), g) => {
                counts.per_type[p].fp += 1;
                if let Some(g) = g {
                    counts.per_type[g].fn_ += 1;
                }
            }
            (None, Some(g)) => counts.per_type[g].fn_ += 1,
            (None, None) => {}
        }
    }
    Ok(())
}

pub fn score(tagset: &TagSet, pred: &[usize], gold: &[usize]) -> Result<EvalCounts> {
    let mut c = EvalCounts::new(tagset);
    score_into(&mut c, pred, gold)?;
    Ok(c)
}

pub fn score_pages(tagset: &TagSet, pages: &[PreparedPage], preds: &[Vec<Vec<usize>>]) -> Result<EvalCounts> {
    let mut c = EvalCounts::new(tagset);
    for (page, pred) in pages.iter().zip(preds) {
        for (toks, p) in page.tokens.iter().zip(pred) {
            let gold = toks
                .bio_tags
                .as_ref()
                .ok_or_else(|| Error::MissingLabels(page.doc_id.clone()))?;
            score_into(&mut c, p, gold)?;
        }
    }
    Ok(c)
}

/// Stricter diagnostic: an entity counts only when its token span and type
/// match exactly.
pub fn score_spans(tagset: &TagSet, pred: &[usize], gold: &[usize]) -> Result<EvalCounts> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let toks: Vec<crate::docmodel::Token> = (0..pred.len())
        .map(|i| crate::docmodel::Token {
            surface: String::new(),
            char_start: i,
            char_end: i + 1,
        })
        .collect();
    let ps = decode_spans(&toks, pred);
    let gs = decode_spans(&toks, gold);
    let mut c = EvalCounts::new(tagset);
    for s in &ps {
        if gs.contains(s) {
            c.per_type[s.0].tp += 1;
        } else {
            c.per_type[s.0].fp += 1;
        }
    }
    for s in gs.iter().filter(|s| !ps.contains(s)) {
        c.per_type[s.0].fn_ += 1;
    }
    Ok(c)
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

/// Structured metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config: serde_json::Value,
    pub split: String,
    pub per_entity: BTreeMap<String, EntityMetrics>,
    pub micro: Prf,
}

impl MetricsFile {
    pub fn new(config: serde_json::Value, split: &str, counts: &EvalCounts) -> Self {
        let per_entity = counts
            .types
            .iter()
            .zip(&counts.per_type)
            .map(|(t, c)| {
                let prf = c.prf();
                (
                    t.clone(),
                    EntityMetrics {
                        tp: c.tp,
                        fp: c.fp,
                        fn_: c.fn_,
                        p: prf.p,
                        r: prf.r,
                        f1: prf.f1,
                    },
                )
            })
            .collect();
        MetricsFile {
            config,
            split: split.to_string(),
            per_entity,
            micro: counts.micro(),
        }
    }
}

/// Evaluates several models on the same documents.
pub fn report(models: &[(&str, &Model)], docs: &[Document]) -> Result<Vec<(String, EvalCounts)>> {
    models
        .iter()
        .map(|(name, m)| Ok((name.to_string(), m.evaluate(docs)?)))
        .collect()
}

/// Console table: one row per entity type, one F1 column per model, then a
/// micro row.
pub fn render_table(rows: &[(String, EvalCounts)]) -> String {
    let mut out = String::new();
    let Some((_, first)) = rows.first() else {
        return out;
    };
    let _ = write!(out, "{:<18}", "entity");
    for (name, _) in rows {
        let _ = write!(out, " {:>14}", format!("{name} F1"));
    }
    out.push('\n');
    for t in &first.types {
        let _ = write!(out, "{t:<18}");
        for (_, c) in rows {
            let _ = write!(out, " {:>14.2}", 100.0 * c.f1(t));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<18}", "micro");
    for (_, c) in rows {
        let _ = write!(out, " {:>14.2}", 100.0 * c.micro().f1);
    }
    out.push('\n');
    out
}

// ---------------------------------------------------------------------------
// Few-shot sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotSpec {
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub train: TrainConfig,
}

impl Default for FewShotSpec {
    fn default() -> Self {
        FewShotSpec {
            sizes: vec![0, 1, 10, 20, 50, 300, 500],
            seeds: vec![0],
            epochs: 5,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotPoint {
    pub size: usize,
    pub seed: u64,
    pub f1: f64,
    pub per_entity: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FewShotCurve {
    pub points: Vec<FewShotPoint>,
}

impl FewShotCurve {
    /// Seed-averaged `(size, f1)` in increasing size order; `entity` selects a
    /// single type instead of micro F1.
    pub fn mean_by_size(&self, entity: Option<&str>) -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for p in &self.points {
            let v = match entity {
                Some(e) => p.per_entity.get(e).copied().unwrap_or(0.0),
                None => p.f1,
            };
            let a = acc.entry(p.size).or_default();
            a.0 += v;
            a.1 += 1;
        }
        acc.into_iter().map(|(s, (v, n))| (s, v / n as f64)).collect()
    }

    /// Tab-separated `size  mean_f1` rows for plotting.
    pub fn plot_table(&self) -> String {
        let mut s = String::from("size\tmean_f1\n");
        for (size, f1) in self.mean_by_size(None) {
            let _ = writeln!(s, "{size}\t{f1:.6}");
        }
        s
    }
}

/// Fine-tunes a copy of `base` on the first `size` documents of a seeded
/// permutation of `pool` (so smaller sets nest inside larger ones) and scores
/// it on `test`. Size 0 evaluates `base` unchanged.
pub fn fewshot(base: &Model, pool: &[Document], test: &[Document], spec: &FewShotSpec) -> Result<FewShotCurve> {
    let mut sizes = spec.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    if let Some(&max) = sizes.last() {
        if max > pool.len() {
            return Err(Error::Config(format!(
                "few-shot pool has {} documents, largest size is {max}",
                pool.len()
            )));
        }
    }
    let test_pages = base.prepare_all(test, true)?;
    let mut curve = FewShotCurve::default();
    for &seed in &spec.seeds {
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xf5])));
        for &size in &sizes {
            let counts = if size == 0 {
                base.evaluate_pages(&test_pages)?
            } else {
                let subset: Vec<Document> = order[..size].iter().map(|&i| pool[i].clone()).collect();
                let mut m = base.clone();
                let cfg = TrainConfig {
                    max_epochs: spec.epochs,
                    seed: derive_seed(seed, &[size as u64]),
                    ..spec.train.clone()
                };
                train_supervised(&mut m, &subset, &[], &cfg)?;
                m.evaluate_pages(&test_pages)?
            };
            curve.points.push(FewShotPoint {
                size,
                seed,
                f1: counts.micro().f1,
                per_entity: counts.per_entity_f1(),
            });
        }
    }
    Ok(curve)
}

// ---------------------------------------------------------------------------
// Ablation

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Switch {
    SectionTitleEdges,
    FontFeats,
    SkipConnections,
}

impl std::str::FromStr for Switch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "section_title_edges" => Ok(Switch::SectionTitleEdges),
            "font_feats" => Ok(Switch::FontFeats),
            "skip_connections" => Ok(Switch::SkipConnections),
            _ => Err(Error::Config(format!("unknown ablation switch {s:?}"))),
        }
    }
}

impl Switch {
    pub fn name(self) -> &'static str {
        match self {
            Switch::SectionTitleEdges => "section_title_edges",
            Switch::FontFeats => "font_feats",
            Switch::SkipConnections => "skip_connections",
        }
    }
}

/// A set of disabled switches; empty is the full model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub disabled: Vec<Switch>,
}

impl Variant {
    pub fn full() -> Self {
        Variant { disabled: vec![] }
    }

    pub fn without(switches: &[Switch]) -> Self {
        let mut disabled = switches.to_vec();
        disabled.sort();
        disabled.dedup();
        Variant { disabled }
    }

    pub fn name(&self) -> String {
        if self.disabled.is_empty() {
            "full".into()
        } else {
            let parts: Vec<&str> = self.disabled.iter().map(|s| s.name()).collect();
            format!("w/o {}", parts.join(" & "))
        }
    }

    pub fn apply(&self, base: &ModelConfig) -> Result<ModelConfig> {
        let mut cfg = base.clone();
        let gcn = cfg
            .gcn
            .as_mut()
            .ok_or_else(|| Error::Config("ablation needs a GCN model".into()))?;
        for s in &self.disabled {
            match s {
                Switch::SectionTitleEdges => gcn.edge_types.retain(|&t| t != EdgeType::SectionTitle),
                Switch::FontFeats => gcn.font_features = false,
                Switch::SkipConnections => gcn.skip_connections = false,
            }
        }
        gcn.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub f1: f64,
    pub per_entity: BTreeMap<String, f64>,
    pub counts: EvalCounts,
}

/// Data shared by every ablation variant.
pub struct AblationData<'a> {
    pub vocab: &'a Vocabulary,
    pub pretrained: Option<&'a layoutie_nn::ParamStore>,
    pub train: &'a [Document],
    pub val: &'a [Document],
    pub test: &'a [Document],
}

/// Trains and scores each variant from the same initial seed and data.
pub fn ablate(base: &ModelConfig, variants: &[Variant], data: &AblationData<'_>, train_cfg: &TrainConfig) -> Result<Vec<AblationRow>> {
    variants
        .iter()
        .map(|v| {
            let cfg = v.apply(base)?;
            let mut m = Model::new(cfg, data.vocab.clone(), train_cfg.seed)?;
            if let Some(p) = data.pretrained {
                m.load_encoder_from(p)?;
            }
            train_supervised(&mut m, data.train, data.val, train_cfg)?;
            let counts = m.evaluate(data.test)?;
            Ok(AblationRow {
                variant: v.name(),
                f1: counts.micro().f1,
                per_entity: counts.per_entity_f1(),
                counts,
            })
        })
        .collect()
}

pub fn render_ablation(rows: &[AblationRow]) -> String {
    let mut s = format!("{:<48} {:>8}\n", "model", "F1");
    for r in rows {
        let _ = writeln!(s, "{:<48} {:>8.2}", r.variant, 100.0 * r.f1);
    }
    s
}
