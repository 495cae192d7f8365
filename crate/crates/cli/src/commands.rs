use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::Context;
use layoutie::docmodel::{build_vocab, merge_close_boxes, parse_corpus, serialize_corpus, Document, Vocabulary};
use layoutie::evalkit::{ablate, fewshot, render_ablation, render_table, AblationData, FewShotSpec, MetricsFile, Variant};
use layoutie::extractor::{train_supervised, Model};
use layoutie::layoutgraph::{build_page_graph, dump_graph, rank_fonts};
use layoutie::pretrain::{encoder_checkpoint, run_stages};
use layoutie::synthcorpus::{default_unseen_templates, gen_invoices, gen_resumes, split_corpus, strip_labels, GeneratorSpec, SplitFractions};
use layoutie_nn::{write_atomic, Checkpoint, ParamStore};
use serde::{Deserialize, Serialize};

use crate::config::{CorpusKind, RunConfig};
use crate::error::CliError;

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const SPLITS_FILE: &str = "splits.json";
pub const GRAPHS_FILE: &str = "graphs.jsonl";
pub const ENCODER_FILE: &str = "encoder.ckpt";
pub const MODEL_FILE: &str = "model.ckpt";

type Result<T> = std::result::Result<T, CliError>;

/// Split manifest written next to the corpus.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub kind: CorpusKind,
    pub splits: BTreeMap<String, Vec<String>>,
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Ctx {
    fn input(&self, given: &Option<PathBuf>, default: &str) -> Result<PathBuf> {
        let p = given.clone().unwrap_or_else(|| self.out.join(default));
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::MissingInput(p))
        }
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.out.join(name), bytes)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).context("serialising output")?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Config block recorded in metrics files.
    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.cfg).expect("run config serializes")
    }

    fn corpus(&self) -> Result<Corpus> {
        let docs = parse_corpus(&self.input(&self.cfg.corpus, CORPUS_FILE)?)?;
        let splits_path = self.input(&self.cfg.splits, SPLITS_FILE)?;
        let text = std::fs::read_to_string(&splits_path).with_context(|| splits_path.display().to_string())?;
        let manifest: Manifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", splits_path.display()))?;
        if manifest.kind != self.cfg.kind {
            return Err(CliError::Config {
                key: "kind".into(),
                msg: format!("corpus holds {:?} but the config says {:?}", manifest.kind, self.cfg.kind),
            });
        }
        let vocab = build_vocab(&docs, self.cfg.vocab_min_freq);
        Ok(Corpus {
            docs: docs.into_iter().map(|d| (d.doc_id.clone(), d)).collect(),
            manifest,
            vocab,
        })
    }
}

pub struct Corpus {
    docs: HashMap<String, Document>,
    manifest: Manifest,
    pub vocab: Vocabulary,
}

impl Corpus {
    pub fn split(&self, name: &str) -> Result<Vec<Document>> {
        let ids = self.manifest.splits.get(name).ok_or_else(|| CliError::Config {
            key: "split".into(),
            msg: format!(
                "no split {name:?}; the manifest has {:?}",
                self.manifest.splits.keys().collect::<Vec<_>>()
            ),
        })?;
        ids.iter()
            .map(|id| {
                let d = self
                    .docs
                    .get(id)
                    .with_context(|| format!("split {name} names unknown document {id}"))?;
                Ok(if name == "unlabeled" { strip_labels(d) } else { d.clone() })
            })
            .collect()
    }
}

/// Shares of a labelled list used as train / val / test.
fn three_way(ids: &[String], train: f64, val: f64) -> [Vec<String>; 3] {
    let n = ids.len();
    let a = (n as f64 * train).round() as usize;
    let b = (a + (n as f64 * val).round() as usize).min(n);
    [ids[..a].to_vec(), ids[a..b].to_vec(), ids[b..].to_vec()]
}

pub fn gen_corpus(ctx: &Ctx) -> Result<()> {
    let c = &ctx.cfg;
    let n = c.num_docs.unwrap_or(c.kind.default_docs());
    let mut splits = BTreeMap::new();
    let docs = match c.kind {
        CorpusKind::Invoices => {
            let spec = GeneratorSpec {
                identical_candidates: c.identical_candidates,
                ..GeneratorSpec::invoices(n, c.seed)
            };
            let docs = gen_invoices(&spec)?;
            let split = split_corpus(&docs, &default_unseen_templates(), &SplitFractions::default(), c.seed)?;
            splits = split.manifest();
            let [tr, va, te] = three_way(&splits["labeled_seen"], 0.6, 0.2);
            splits.insert("train".into(), tr);
            splits.insert("val".into(), va);
            splits.insert("test".into(), te);
            docs
        }
        CorpusKind::Resumes => {
            let docs = gen_resumes(&GeneratorSpec::resumes(n, c.seed))?;
            let ids: Vec<String> = docs.iter().map(|d| d.doc_id.clone()).collect();
            let [tr, va, te] = three_way(&ids, 0.5, 0.125);
            splits.insert("unlabeled".into(), tr.clone());
            splits.insert("train".into(), tr);
            splits.insert("val".into(), va);
            splits.insert("test".into(), te);
            docs
        }
    };
    ctx.write(CORPUS_FILE, serialize_corpus(&docs).as_bytes())?;
    ctx.write_json(SPLITS_FILE, &Manifest { kind: c.kind, splits: splits.clone() })?;
    let sizes: Vec<String> = splits.iter().map(|(k, v)| format!("{k}={}", v.len())).collect();
    println!("wrote {} documents ({})", docs.len(), sizes.join(", "));
    Ok(())
}

pub fn build_graph(ctx: &Ctx) -> Result<()> {
    let corpus = ctx.corpus()?;
    let docs = corpus.split(&ctx.cfg.split)?;
    let model_cfg = ctx.cfg.model_config(corpus.vocab.len());
    let opts = model_cfg.graph_options();
    let mut out = String::new();
    let mut pages = 0;
    for doc in &docs {
        let fonts = rank_fonts(doc, model_cfg.max_ranks());
        for page in &doc.pages {
            let merged = merge_close_boxes(page, ctx.cfg.merge_eps);
            let graph = build_page_graph(&merged, &opts);
            let line = serde_json::to_string(&dump_graph(doc, &merged, &graph, &fonts)).context("serialising graph")?;
            out.push_str(&line);
            out.push('\n');
            pages += 1;
        }
    }
    ctx.write(GRAPHS_FILE, out.as_bytes())?;
    println!("wrote graphs for {pages} pages of split {}", ctx.cfg.split);
    Ok(())
}

pub fn pretrain(ctx: &Ctx) -> Result<()> {
    let corpus = ctx.corpus()?;
    let unlabeled = corpus.split("unlabeled")?;
    let enc_cfg = ctx.cfg.model_config(corpus.vocab.len()).encoder;
    let stages = ctx.cfg.stage_list()?;
    let (store, mut reports) = run_stages(&stages, &unlabeled, &corpus.vocab, &enc_cfg, &ctx.cfg.pretrain_config())?;
    if let Some(store) = &store {
        ctx.write(ENCODER_FILE, &encoder_checkpoint(store, &enc_cfg, &corpus.vocab).to_bytes())?;
        if let Some(last) = reports.last_mut() {
            last.checkpoint = Some(ENCODER_FILE.into());
        }
    }
    for r in &reports {
        println!("{}: {} epochs, {} {:.4} (before {:.4})", r.stage, r.epochs, r.final_metric_name, r.final_metric_value, r.initial_metric_value);
    }
    ctx.write_json("pretrain_report.json", &reports)
}

/// Pretrained encoder parameters, checked against the vocabulary in use.
fn load_encoder(path: &Path, vocab: &Vocabulary) -> Result<ParamStore> {
    let ck = Checkpoint::load(path)?;
    let ck_vocab: Vocabulary =
        serde_json::from_value(ck.config["vocab"].clone()).with_context(|| format!("{} has no vocabulary", path.display()))?;
    if &ck_vocab != vocab {
        return Err(CliError::Config {
            key: "init".into(),
            msg: format!("{} was pretrained with a different vocabulary", path.display()),
        });
    }
    Ok(ck.params)
}

pub fn train(ctx: &Ctx) -> Result<()> {
    let corpus = ctx.corpus()?;
    let (train, val) = (corpus.split("train")?, corpus.split("val")?);
    let tc = ctx.cfg.train_config();
    let mut model = Model::new(ctx.cfg.model_config(corpus.vocab.len()), corpus.vocab.clone(), tc.seed)?;
    if let Some(init) = &ctx.cfg.init {
        let path = ctx.input(&Some(init.clone()), "")?;
        let copied = model.load_encoder_from(&load_encoder(&path, &corpus.vocab)?)?;
        println!("initialised {copied} encoder tensors from {}", path.display());
    }
    let history = train_supervised(&mut model, &train, &val, &tc)?;
    ctx.write(MODEL_FILE, &model.to_checkpoint().to_bytes())?;
    ctx.write_json("history.json", &history)?;
    println!(
        "trained {} epochs on {} documents; best epoch {} with validation F1 {:.4}",
        history.epochs.len(),
        train.len(),
        history.best_epoch,
        history.best_val_f1
    );
    Ok(())
}

fn load_model(ctx: &Ctx) -> Result<Model> {
    Ok(Model::load(&ctx.input(&ctx.cfg.model, MODEL_FILE)?)?)
}

pub fn eval(ctx: &Ctx) -> Result<()> {
    let corpus = ctx.corpus()?;
    let model = load_model(ctx)?;
    let docs = corpus.split(&ctx.cfg.split)?;
    let counts = model.evaluate(&docs)?;
    let config = serde_json::json!({ "run": ctx.config_json(), "model": model.config });
    ctx.write_json("metrics.json", &MetricsFile::new(config, &ctx.cfg.split, &counts))?;
    print!("{}", render_table(&[(ctx.cfg.split.clone(), counts)]));
    Ok(())
}

#[derive(Serialize)]
struct CurveRow {
    size: usize,
    seed: u64,
    f1: f64,
}

pub fn fewshot_cmd(ctx: &Ctx) -> Result<()> {
    let corpus = ctx.corpus()?;
    let base = load_model(ctx)?;
    let (pool, test) = (corpus.split("few_shot")?, corpus.split("labeled_unseen")?);
    let spec = FewShotSpec {
        sizes: ctx.cfg.sizes.clone(),
        seeds: ctx.cfg.seeds.clone(),
        epochs: ctx.cfg.fewshot_epochs,
        train: ctx.cfg.train_config(),
    };
    let curve = fewshot(&base, &pool, &test, &spec)?;
    let rows: Vec<CurveRow> = curve
        .points
        .iter()
        .map(|p| CurveRow {
            size: p.size,
            seed: p.seed,
            f1: p.f1,
        })
        .collect();
    ctx.write_json("fewshot.json", &rows)?;
    ctx.write_json("fewshot_points.json", &curve)?;
    let table = curve.plot_table();
    ctx.write("fewshot_plot.tsv", table.as_bytes())?;
    print!("{table}");
    Ok(())
}

#[derive(Serialize)]
struct AblationOut {
    seed: u64,
    variant: String,
    f1: f64,
    per_entity: BTreeMap<String, f64>,
}

pub fn ablate_cmd(ctx: &Ctx) -> Result<()> {
    let corpus = ctx.corpus()?;
    let (train, val, test) = (corpus.split("train")?, corpus.split("val")?, corpus.split(&ctx.cfg.split)?);
    let pretrained = match &ctx.cfg.init {
        Some(p) => Some(load_encoder(&ctx.input(&Some(p.clone()), "")?, &corpus.vocab)?),
        None => None,
    };
    let mut variants = vec![Variant::full()];
    variants.extend(ctx.cfg.switch_list()?.iter().map(|s| Variant::without(&[*s])));
    let base = ctx.cfg.model_config(corpus.vocab.len());
    let data = AblationData {
        vocab: &corpus.vocab,
        pretrained: pretrained.as_ref(),
        train: &train,
        val: &val,
        test: &test,
    };
    let mut rows = Vec::new();
    let mut text = String::new();
    for &seed in &ctx.cfg.seeds {
        let tc = layoutie::TrainConfig {
            seed,
            ..ctx.cfg.train_config()
        };
        let result = ablate(&base, &variants, &data, &tc)?;
        text.push_str(&format!("seed {seed}\n{}", render_ablation(&result)));
        rows.extend(result.into_iter().map(|r| AblationOut {
            seed,
            variant: r.variant,
            f1: r.f1,
            per_entity: r.per_entity,
        }));
    }
    ctx.write_json("ablation.json", &rows)?;
    ctx.write("ablation.txt", text.as_bytes())?;
    print!("{text}");
    Ok(())
}
