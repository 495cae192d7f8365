//! Small pre-norm transformer encoder with learned positions, `[CLS]`
//! pooling, a masked-token prediction head and dynamic masking.

use layoutie_nn::{Graph, ParamId, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::docmodel::{CLS, MASK, NUM_RESERVED, SEP};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden_dim: 64,
            num_layers: 2,
            num_heads: 4,
            ffn_dim: 128,
            max_seq_len: 50,
            dropout: 0.1,
        }
    }

    /// BASE-sized configuration; documented, too slow to train here.
    pub fn paper(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden_dim: 768,
            num_layers: 12,
            num_heads: 12,
            ffn_dim: 3072,
            max_seq_len: 50,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.hidden_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if self.max_seq_len < 3 {
            return Err(Error::Config("max_seq_len must be at least 3".into()));
        }
        if self.vocab_size <= NUM_RESERVED {
            return Err(Error::Config("vocabulary has no corpus tokens".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Content tokens that fit next to `[CLS]` and `[SEP]`.
    pub fn max_tokens(&self) -> usize {
        self.max_seq_len - 2
    }
}

/// One framed encoder input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderInput {
    pub ids: Vec<usize>,
    pub segments: Vec<usize>,
}

impl EncoderInput {
    /// `[CLS] tokens [SEP]`, truncated to fit; returns whether tokens were cut.
    pub fn single(tokens: &[usize], max_seq_len: usize) -> (Self, bool) {
        let keep = tokens.len().min(max_seq_len - 2);
        let mut ids = Vec::with_capacity(keep + 2);
        ids.push(CLS);
        ids.extend_from_slice(&tokens[..keep]);
        ids.push(SEP);
        let segments = vec![0; ids.len()];
        (EncoderInput { ids, segments }, keep < tokens.len())
    }

    /// `[CLS] a [SEP] b [SEP]` with segment ids 0/1; each half keeps at most
    /// `(max_seq_len - 3) / 2` tokens.
    pub fn pair(a: &[usize], b: &[usize], max_seq_len: usize) -> Self {
        let half = (max_seq_len - 3) / 2;
        let (a, b) = (&a[..a.len().min(half)], &b[..b.len().min(half)]);
        let mut ids = vec![CLS];
        ids.extend_from_slice(a);
        ids.push(SEP);
        let mut segments = vec![0; ids.len()];
        ids.extend_from_slice(b);
        ids.push(SEP);
        segments.resize(ids.len(), 1);
        EncoderInput { ids, segments }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Debug)]
struct LayerIds {
    ln1: (ParamId, ParamId),
    q: (ParamId, ParamId),
    k: (ParamId, ParamId),
    v: (ParamId, ParamId),
    o: (ParamId, ParamId),
    ln2: (ParamId, ParamId),
    ff1: (ParamId, ParamId),
    ff2: (ParamId, ParamId),
}

/// Parameter handles of an encoder living in a [`ParamStore`] under `enc.`.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    tok: ParamId,
    pos: ParamId,
    seg: ParamId,
    layers: Vec<LayerIds>,
    lnf: (ParamId, ParamId),
}

/// Rows of a batched encoder pass.
#[derive(Clone, Debug)]
pub struct EncodedBatch {
    /// Final hidden states of every framed position, all inputs stacked.
    pub states: Var,
    /// Row of each input's `[CLS]` position.
    pub cls_rows: Vec<usize>,
    /// Rows of each input's positions, framing included.
    pub spans: Vec<(usize, usize)>,
}

impl EncodedBatch {
    /// Rows of the content tokens of a single-text input (framing excluded).
    pub fn token_rows(&self, input: usize) -> std::ops::Range<usize> {
        let (s, l) = self.spans[input];
        s + 1..s + l - 1
    }
}

fn add_linear(store: &mut ParamStore, name: &str, i: usize, o: usize, std: f64, rng: &mut impl Rng) -> Result<(ParamId, ParamId)> {
    let w = store.add_normal(format!("{name}.w"), &[i, o], std, rng)?;
    let b = store.add_constant(format!("{name}.b"), &[o], 0.0)?;
    Ok((w, b))
}

fn add_norm(store: &mut ParamStore, name: &str, d: usize) -> Result<(ParamId, ParamId)> {
    let g = store.add_constant(format!("{name}.g"), &[d], 1.0)?;
    let b = store.add_constant(format!("{name}.b"), &[d], 0.0)?;
    Ok((g, b))
}

impl Encoder {
    pub fn init(store: &mut ParamStore, config: &EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let emb_std = 0.1;
        let std = (1.0 / d as f64).sqrt();
        let out_std = std / (2.0 * config.num_layers as f64).sqrt();
        store.add_normal("enc.tok", &[config.vocab_size, d], emb_std, rng)?;
        store.add_normal("enc.pos", &[config.max_seq_len, d], emb_std, rng)?;
        store.add_normal("enc.seg", &[2, d], emb_std, rng)?;
        for l in 0..config.num_layers {
            let p = format!("enc.l{l}");
            add_norm(store, &format!("{p}.ln1"), d)?;
            for n in ["q", "k", "v"] {
                add_linear(store, &format!("{p}.{n}"), d, d, std, rng)?;
            }
            add_linear(store, &format!("{p}.o"), d, d, out_std, rng)?;
            add_norm(store, &format!("{p}.ln2"), d)?;
            add_linear(store, &format!("{p}.ff1"), d, config.ffn_dim, std, rng)?;
            let ff_std = (1.0 / config.ffn_dim as f64).sqrt() / (2.0 * config.num_layers as f64).sqrt();
            add_linear(store, &format!("{p}.ff2"), config.ffn_dim, d, ff_std, rng)?;
        }
        add_norm(store, "enc.lnf", d)?;
        Self::bind(store, config)
    }

    /// Resolves handles of an already-populated store.
    pub fn bind(store: &ParamStore, config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let pair = |n: &str, a: &str, b: &str| -> Result<(ParamId, ParamId)> {
            Ok((store.id(&format!("{n}.{a}"))?, store.id(&format!("{n}.{b}"))?))
        };
        let layers = (0..config.num_layers)
            .map(|l| {
                let p = format!("enc.l{l}");
                Ok(LayerIds {
                    ln1: pair(&format!("{p}.ln1"), "g", "b")?,
                    q: pair(&format!("{p}.q"), "w", "b")?,
                    k: pair(&format!("{p}.k"), "w", "b")?,
                    v: pair(&format!("{p}.v"), "w", "b")?,
                    o: pair(&format!("{p}.o"), "w", "b")?,
                    ln2: pair(&format!("{p}.ln2"), "g", "b")?,
                    ff1: pair(&format!("{p}.ff1"), "w", "b")?,
                    ff2: pair(&format!("{p}.ff2"), "w", "b")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let tok = store.id("enc.tok")?;
        if store.value(tok).rows() != config.vocab_size {
            return Err(Error::Config(format!(
                "token table has {} rows, config says {}",
                store.value(tok).rows(),
                config.vocab_size
            )));
        }
        Ok(Encoder {
            config: config.clone(),
            tok,
            pos: store.id("enc.pos")?,
            seg: store.id("enc.seg")?,
            layers,
            lnf: pair("enc.lnf", "g", "b")?,
        })
    }

    /// Encodes a batch of independent inputs in one pass; attention never
    /// crosses input boundaries.
    pub fn forward<'a>(
        &self,
        g: &mut Graph<'a>,
        store: &'a ParamStore,
        inputs: &[EncoderInput],
        train: bool,
        rng: &mut impl Rng,
    ) -> Result<EncodedBatch> {
        let p = if train { self.config.dropout } else { 0.0 };
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        let mut segs = Vec::new();
        let mut spans = Vec::with_capacity(inputs.len());
        for inp in inputs {
            if inp.len() > self.config.max_seq_len {
                return Err(Error::Config(format!(
                    "input of {} positions exceeds max_seq_len {}",
                    inp.len(),
                    self.config.max_seq_len
                )));
            }
            if let Some(&bad) = inp.ids.iter().find(|&&i| i >= self.config.vocab_size) {
                return Err(Error::Config(format!("token id {bad} outside vocabulary")));
            }
            spans.push((ids.len(), inp.len()));
            ids.extend_from_slice(&inp.ids);
            positions.extend(0..inp.len());
            segs.extend(inp.segments.iter().map(|&s| s.min(1)));
        }
        let tok = g.param(store, self.tok);
        let pos = g.param(store, self.pos);
        let seg = g.param(store, self.seg);
        let te = g.gather_rows(tok, &ids)?;
        let pe = g.gather_rows(pos, &positions)?;
        let se = g.gather_rows(seg, &segs)?;
        let x = g.add(te, pe)?;
        let x = g.add(x, se)?;
        let mut x = g.dropout(x, p, rng, train);
        let lin = |g: &mut Graph<'a>, x: Var, (w, b): (ParamId, ParamId)| {
            let w = g.param(store, w);
            let b = g.param(store, b);
            g.linear(x, w, b)
        };
        let norm = |g: &mut Graph<'a>, x: Var, (gm, bt): (ParamId, ParamId)| {
            let gm = g.param(store, gm);
            let bt = g.param(store, bt);
            g.layer_norm(x, gm, bt)
        };
        for layer in &self.layers {
            let h = norm(g, x, layer.ln1)?;
            let q = lin(g, h, layer.q)?;
            let k = lin(g, h, layer.k)?;
            let v = lin(g, h, layer.v)?;
            let a = g.segment_attention(q, k, v, &spans, self.config.num_heads)?;
            let o = lin(g, a, layer.o)?;
            let o = g.dropout(o, p, rng, train);
            x = g.add(x, o)?;
            let h = norm(g, x, layer.ln2)?;
            let f = lin(g, h, layer.ff1)?;
            let f = g.gelu(f);
            let f = lin(g, f, layer.ff2)?;
            let f = g.dropout(f, p, rng, train);
            x = g.add(x, f)?;
        }
        let states = norm(g, x, self.lnf)?;
        Ok(EncodedBatch {
            states,
            cls_rows: spans.iter().map(|&(s, _)| s).collect(),
            spans,
        })
    }
}

/// Evaluation-mode output for one token list.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub cls_vector: Vec<f64>,
    /// One row per kept content token.
    pub token_states: Tensor,
    pub truncated: bool,
}

pub fn encode(encoder: &Encoder, store: &ParamStore, token_ids: &[usize]) -> Result<EncoderOutput> {
    let (inp, truncated) = EncoderInput::single(token_ids, encoder.config.max_seq_len);
    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = encoder.forward(&mut g, store, std::slice::from_ref(&inp), false, &mut rng)?;
    let states = g.value(batch.states);
    let rows = batch.token_rows(0);
    let d = states.cols();
    let data = rows.clone().flat_map(|r| states.row(r).to_vec()).collect();
    Ok(EncoderOutput {
        cls_vector: states.row(batch.cls_rows[0]).to_vec(),
        token_states: Tensor::from_vec(&[rows.len(), d], data)?,
        truncated,
    })
}

// ---------------------------------------------------------------------------
// Masked language modelling

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedInput {
    pub masked_ids: Vec<usize>,
    /// Indices into the id list that carry a prediction target.
    pub positions: Vec<usize>,
    pub originals: Vec<usize>,
}

/// Selects each non-reserved position with probability `mask_ratio`, then
/// replaces it by `[MASK]` (80%), a random corpus token (10%) or itself (10%).
pub fn dynamic_mask(token_ids: &[usize], vocab_size: usize, rng_seed: u64, mask_ratio: f64) -> MaskedInput {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let ratio = mask_ratio.clamp(0.0, 1.0);
    let mut out = MaskedInput {
        masked_ids: token_ids.to_vec(),
        positions: Vec::new(),
        originals: Vec::new(),
    };
    for (i, &id) in token_ids.iter().enumerate() {
        if id < NUM_RESERVED || !rng.random_bool(ratio) {
            continue;
        }
        out.positions.push(i);
        out.originals.push(id);
        let r: f64 = rng.random();
        if r < 0.8 {
            out.masked_ids[i] = MASK;
        } else if r < 0.9 && vocab_size > NUM_RESERVED {
            out.masked_ids[i] = rng.random_range(NUM_RESERVED..vocab_size);
        }
    }
    out
}

/// Linear vocabulary projection under the `mlm.` prefix.
#[derive(Clone, Debug)]
pub struct MlmHead {
    w: ParamId,
    b: ParamId,
}

impl MlmHead {
    pub fn init(store: &mut ParamStore, d: usize, vocab_size: usize, rng: &mut impl Rng) -> Result<Self> {
        let (w, b) = add_linear(store, "mlm", d, vocab_size, (1.0 / d as f64).sqrt(), rng)?;
        Ok(MlmHead { w, b })
    }

    pub fn bind(store: &ParamStore) -> Result<Self> {
        Ok(MlmHead {
            w: store.id("mlm.w")?,
            b: store.id("mlm.b")?,
        })
    }

    pub fn logits<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore, states: Var, rows: &[usize]) -> Result<Var> {
        let h = g.gather_rows(states, rows)?;
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        Ok(g.linear(h, w, b)?)
    }
}

/// Mean cross-entropy at the masked rows only; `None` when nothing is masked.
pub fn mlm_loss<'a>(
    g: &mut Graph<'a>,
    store: &'a ParamStore,
    head: &MlmHead,
    states: Var,
    rows: &[usize],
    originals: &[usize],
) -> Result<Option<Var>> {
    if rows.is_empty() {
        return Ok(None);
    }
    let logits = head.logits(g, store, states, rows)?;
    let targets: Vec<(usize, usize)> = originals.iter().enumerate().map(|(i, &c)| (i, c)).collect();
    Ok(Some(g.cross_entropy(logits, &targets)?))
}

pub fn perplexity(mean_loss: f64) -> f64 {
    mean_loss.exp()
}
