//! Independent reference implementations and fixtures shared by the
//! integration suites and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeSet;

pub mod props;

use layoutie::docmodel::{Page, TextBox};
use layoutie::extractor::ModelConfig;
use layoutie::layoutgcn::GcnConfig;
use layoutie::layoutgraph::EdgeType;
use layoutie::textencoder::EncoderConfig;
use rand::Rng;

pub fn tb(id: usize, text: &str, x0: f64, y0: f64, x1: f64, y1: f64, size: f64) -> TextBox {
    TextBox {
        box_id: id,
        text: text.into(),
        x0,
        y0,
        x1,
        y1,
        font_name: "Helvetica".into(),
        font_size: size,
        spans: vec![],
    }
}

fn jitter(rng: &mut impl Rng) -> f64 {
    if rng.random_bool(0.2) {
        0.5
    } else {
        0.0
    }
}

/// Boxes on a coarse grid, so that shared edges are common, with occasional
/// sub-tolerance jitter.
pub fn random_page(rng: &mut impl Rng, max_boxes: usize) -> Page {
    let n = rng.random_range(1..=max_boxes);
    let boxes = (0..n)
        .map(|i| {
            let x0 = 10.0 * rng.random_range(0..8) as f64 + jitter(rng);
            let y0 = 10.0 * rng.random_range(0..8) as f64 + jitter(rng);
            let w = 10.0 * rng.random_range(1..4) as f64;
            let h = 5.0 * rng.random_range(1..3) as f64;
            let size = [8.0, 10.0, 12.0][rng.random_range(0..3)];
            tb(i, &format!("w{i}"), x0, y0, x0 + w, y0 + h, size)
        })
        .collect();
    Page {
        page_no: 0,
        width: 200.0,
        height: 200.0,
        boxes,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefAxis {
    H,
    V,
}

fn centre(b: &TextBox) -> (f64, f64) {
    ((b.x0 + b.x1) / 2.0, (b.y0 + b.y1) / 2.0)
}

/// Axis on which `a` and `b` are strictly aligned; horizontal wins ties and
/// a pair with coincident centres on that axis has no direction.
pub fn ref_axis(a: &TextBox, b: &TextBox, eps: f64) -> Option<RefAxis> {
    let (ac, bc) = (centre(a), centre(b));
    let shares_row = (a.y0 - b.y0).abs() <= eps || (a.y1 - b.y1).abs() <= eps;
    let shares_col = (a.x0 - b.x0).abs() <= eps || (a.x1 - b.x1).abs() <= eps;
    if shares_row && ac.0 != bc.0 {
        Some(RefAxis::H)
    } else if shares_col && ac.1 != bc.1 {
        Some(RefAxis::V)
    } else {
        None
    }
}

fn axis_dist(a: &TextBox, b: &TextBox, axis: RefAxis) -> f64 {
    let (ac, bc) = (centre(a), centre(b));
    match axis {
        RefAxis::H => (ac.0 - bc.0).abs(),
        RefAxis::V => (ac.1 - bc.1).abs(),
    }
}

/// Whether `j` is the closest `axis`-aligned box of `i`: no other aligned box
/// is strictly nearer or equally near with a smaller id.
fn is_closest(page: &Page, i: usize, j: usize, axis: RefAxis, eps: f64) -> bool {
    let (bi, bj) = (&page.boxes[i], &page.boxes[j]);
    if ref_axis(bi, bj, eps) != Some(axis) {
        return false;
    }
    let dj = axis_dist(bi, bj, axis);
    page.boxes.iter().enumerate().all(|(k, bk)| {
        if k == i || k == j || ref_axis(bi, bk, eps) != Some(axis) {
            return true;
        }
        let dk = axis_dist(bi, bk, axis);
        dk > dj || (dk == dj && bk.box_id > bj.box_id)
    })
}

/// Exhaustive pair enumeration of the closest-aligned-neighbour rule; edges
/// as `(min id, max id)`.
pub fn ref_adjacency(page: &Page, eps: f64) -> BTreeSet<(usize, usize)> {
    let n = page.boxes.len();
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if [RefAxis::H, RefAxis::V].iter().any(|&a| is_closest(page, i, j, a, eps)) {
                let (a, b) = (page.boxes[i].box_id, page.boxes[j].box_id);
                out.insert((a.min(b), a.max(b)));
            }
        }
    }
    out
}

/// The section-title predicate: `t` lies entirely above `b` in a larger font.
pub fn above_and_larger(t: &TextBox, b: &TextBox) -> bool {
    t.y1 <= b.y0 && t.font_size > b.font_size
}

/// Exhaustive nearest-title enumeration, edges as `(min id, max id)`.
pub fn ref_section_edges(page: &Page) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for bi in &page.boxes {
        for bj in &page.boxes {
            if bi.box_id == bj.box_id || !above_and_larger(bj, bi) {
                continue;
            }
            let key = |t: &TextBox| (bi.y0 - t.y1, (centre(bi).0 - centre(t).0).abs(), t.box_id);
            let kj = key(bj);
            let best = page
                .boxes
                .iter()
                .filter(|bk| bk.box_id != bi.box_id && above_and_larger(bk, bi))
                .all(|bk| {
                    let kk = key(bk);
                    kk.0 > kj.0 || (kk.0 == kj.0 && (kk.1 > kj.1 || (kk.1 == kj.1 && kk.2 >= kj.2)))
                });
            if best {
                out.insert((bi.box_id.min(bj.box_id), bi.box_id.max(bj.box_id)));
            }
        }
    }
    out
}

/// One GCN layer's parameters in plain nested vectors: `w[t][in][out]`.
pub struct RefLayer {
    pub w: Vec<Vec<Vec<f64>>>,
    pub b: Vec<f64>,
}

fn ref_elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// Straight-line multi-type GCN: per type the mean of `W_t h_j + b` over the
/// node and its neighbours, averaged over types, plus the previous state
/// from the second layer on when `skip`, then eLU. `edges[t]` lists
/// undirected pairs of node indices.
pub fn ref_gcn(h0: &[Vec<f64>], edges: &[Vec<(usize, usize)>], layers: &[RefLayer], skip: bool) -> Vec<Vec<f64>> {
    let n = h0.len();
    let mut h = h0.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        let out_dim = layer.b.len();
        let mut next = vec![vec![0.0; out_dim]; n];
        for i in 0..n {
            let mut acc = vec![0.0; out_dim];
            for (t, es) in edges.iter().enumerate() {
                let mut nb: BTreeSet<usize> = BTreeSet::from([i]);
                for &(a, b) in es {
                    if a == i {
                        nb.insert(b);
                    }
                    if b == i {
                        nb.insert(a);
                    }
                }
                for o in 0..out_dim {
                    let mut s = 0.0;
                    for &j in &nb {
                        let mut m = layer.b[o];
                        for (k, hv) in h[j].iter().enumerate() {
                            m += layer.w[t][k][o] * hv;
                        }
                        s += m;
                    }
                    acc[o] += s / nb.len() as f64;
                }
            }
            for o in 0..out_dim {
                let mut v = acc[o] / edges.len() as f64;
                if skip && l >= 1 && h[i].len() == out_dim {
                    v += h[i][o];
                }
                next[i][o] = ref_elu(v);
            }
        }
        h = next;
    }
    h
}

/// A deliberately small model configuration for gradient checks and quick
/// training tests.
pub fn tiny_config(vocab_size: usize, entity_types: &[&str], graph: bool) -> ModelConfig {
    let mut cfg = ModelConfig::desk(vocab_size, entity_types, graph);
    cfg.encoder = EncoderConfig {
        vocab_size,
        hidden_dim: 16,
        num_layers: 2,
        num_heads: 2,
        ffn_dim: 24,
        max_seq_len: 12,
        dropout: 0.1,
    };
    if graph {
        cfg.gcn = Some(GcnConfig {
            hidden_dim: 12,
            ..GcnConfig::desk(EdgeType::ALL.to_vec())
        });
    }
    cfg
}

/// Hand-worked token scoring cases over the tag set `[A, B]` (O=0, B-A=1,
/// I-A=2, B-B=3, I-B=4): `(pred, gold, counts A, counts B, micro p/r/f1)`.
pub struct MetricFixture {
    pub pred: &'static [usize],
    pub gold: &'static [usize],
    pub a: (u64, u64, u64),
    pub b: (u64, u64, u64),
    pub micro: (f64, f64, f64),
}

pub fn metric_fixtures() -> Vec<MetricFixture> {
    let f = |pred, gold, a, b, micro| MetricFixture { pred, gold, a, b, micro };
    vec![
        f(&[1, 2, 0], &[1, 2, 0], (2, 0, 0), (0, 0, 0), (1.0, 1.0, 1.0)),
        f(&[0, 0, 0], &[1, 2, 0], (0, 0, 2), (0, 0, 0), (0.0, 0.0, 0.0)),
        f(&[1, 0, 0], &[1, 2, 0], (1, 0, 1), (0, 0, 0), (1.0, 1.0 / 2.0, 2.0 / 3.0)),
        f(&[1, 2, 2], &[1, 2, 0], (2, 1, 0), (0, 0, 0), (2.0 / 3.0, 1.0, 4.0 / 5.0)),
        f(&[3, 4], &[1, 2], (0, 0, 2), (0, 2, 0), (0.0, 0.0, 0.0)),
        f(&[1, 3], &[1, 3], (1, 0, 0), (1, 0, 0), (1.0, 1.0, 1.0)),
        f(&[3, 0, 1], &[3, 4, 1], (1, 0, 0), (1, 0, 1), (1.0, 2.0 / 3.0, 4.0 / 5.0)),
        f(&[0], &[0], (0, 0, 0), (0, 0, 0), (0.0, 0.0, 0.0)),
        f(&[1], &[0], (0, 1, 0), (0, 0, 0), (0.0, 0.0, 0.0)),
        f(&[2, 2, 2, 2], &[1, 2, 2, 2], (4, 0, 0), (0, 0, 0), (1.0, 1.0, 1.0)),
        f(&[1, 2, 3, 4], &[1, 2, 1, 2], (2, 0, 2), (0, 2, 0), (0.5, 0.5, 0.5)),
        f(&[0, 1, 0, 3], &[1, 0, 3, 0], (0, 1, 1), (0, 1, 1), (0.0, 0.0, 0.0)),
        f(&[1, 2, 0, 3, 4, 4], &[1, 2, 2, 3, 4, 0], (2, 0, 1), (2, 1, 0), (4.0 / 5.0, 4.0 / 5.0, 4.0 / 5.0)),
        f(&[3, 4, 4], &[1, 2, 2], (0, 0, 3), (0, 3, 0), (0.0, 0.0, 0.0)),
        f(&[1, 2, 3], &[1, 2, 0], (2, 0, 0), (0, 1, 0), (2.0 / 3.0, 1.0, 4.0 / 5.0)),
        f(&[0, 0, 3], &[1, 0, 3], (0, 0, 1), (1, 0, 0), (1.0, 1.0 / 2.0, 2.0 / 3.0)),
        f(&[1, 1, 1, 1, 1], &[1, 0, 0, 0, 0], (1, 4, 0), (0, 0, 0), (1.0 / 5.0, 1.0, 1.0 / 3.0)),
        f(&[1, 0, 0, 0, 0], &[1, 2, 2, 2, 2], (1, 0, 4), (0, 0, 0), (1.0, 1.0 / 5.0, 1.0 / 3.0)),
        f(&[3, 4, 0, 1], &[3, 0, 0, 1], (1, 0, 0), (1, 1, 0), (2.0 / 3.0, 1.0, 4.0 / 5.0)),
        f(&[4, 1, 2, 0, 3], &[3, 1, 0, 2, 3], (1, 1, 1), (2, 0, 0), (3.0 / 4.0, 3.0 / 4.0, 3.0 / 4.0)),
    ]
}

// ---------------------------------------------------------------------------
// GCN oracle cases

use layoutie::docmodel::{build_vocab, Document, Span, Vocabulary};
use layoutie::extractor::{Model, PreparedPage};
use layoutie::layoutgcn::Gcn;
use layoutie::layoutgraph::{Edge, PageGraph};
use layoutie_nn::{grad_check, GradCheckConfig, GradCheckReport, Graph, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn type_tag(t: EdgeType) -> &'static str {
    match t {
        EdgeType::Adjacency => "adj",
        EdgeType::SectionTitle => "sec",
    }
}

/// A random multi-type graph with its GCN parameters and input states.
pub struct GcnCase {
    pub config: GcnConfig,
    pub store: ParamStore,
    pub h0: Tensor,
    pub graph: PageGraph,
}

impl GcnCase {
    pub fn random(rng: &mut impl Rng, max_nodes: usize) -> Self {
        let n = rng.random_range(1..=max_nodes);
        let edge_types = match rng.random_range(0..3) {
            0 => vec![EdgeType::Adjacency],
            1 => vec![EdgeType::SectionTitle],
            _ => EdgeType::ALL.to_vec(),
        };
        let d = rng.random_range(1..=5);
        let config = GcnConfig {
            num_layers: rng.random_range(1..=3),
            hidden_dim: rng.random_range(1..=5),
            edge_types,
            skip_connections: rng.random_bool(0.5),
            font_features: false,
            max_ranks: 4,
        };
        let mut store = ParamStore::new();
        Gcn::init(&mut store, &config, d, rng).unwrap();
        // Non-zero biases so the bias term is exercised.
        for p in store.iter_mut() {
            if p.name.ends_with(".b") {
                for v in p.value.data_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
        }
        let h0 = Tensor::from_vec(&[n, d], (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let mut edges = BTreeSet::new();
        for &t in &config.edge_types {
            for a in 0..n {
                for b in a + 1..n {
                    if rng.random_bool(0.4) {
                        edges.insert(Edge::new(t, a, b));
                    }
                }
            }
        }
        GcnCase {
            config,
            store,
            h0,
            graph: PageGraph {
                node_ids: (0..n).collect(),
                edges,
            },
        }
    }

    pub fn n(&self) -> usize {
        self.h0.rows()
    }

    pub fn forward(&self) -> Tensor {
        let gcn = Gcn::bind(&self.store, &self.config).unwrap();
        let ids: Vec<usize> = (0..self.n()).collect();
        let hoods = gcn.neighbourhoods(&self.graph, &ids);
        let mut g = Graph::new();
        let h0 = g.input(self.h0.clone());
        let out = gcn.forward(&mut g, &self.store, &hoods, h0).unwrap();
        g.value(out).clone()
    }

    /// Weights and edge lists copied into plain vectors for [`ref_gcn`].
    pub fn reference(&self) -> Vec<Vec<f64>> {
        let layers: Vec<RefLayer> = (0..self.config.num_layers)
            .map(|l| {
                let w = self
                    .config
                    .edge_types
                    .iter()
                    .map(|&t| {
                        let m = self.store.value(self.store.id(&format!("gcn.l{l}.w.{}", type_tag(t))).unwrap());
                        (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
                    })
                    .collect();
                let b = self.store.value(self.store.id(&format!("gcn.l{l}.b")).unwrap()).data().to_vec();
                RefLayer { w, b }
            })
            .collect();
        let edges: Vec<Vec<(usize, usize)>> = self
            .config
            .edge_types
            .iter()
            .map(|&t| self.graph.edges.iter().filter(|e| e.kind == t).map(|e| (e.i, e.j)).collect())
            .collect();
        let h0: Vec<Vec<f64>> = (0..self.n()).map(|r| self.h0.row(r).to_vec()).collect();
        ref_gcn(&h0, &edges, &layers, self.config.skip_connections)
    }

    /// Largest absolute deviation between the library forward pass and the
    /// reference.
    pub fn max_abs_error(&self) -> f64 {
        let got = self.forward();
        let want = self.reference();
        let mut worst: f64 = 0.0;
        for (r, row) in want.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                worst = worst.max((got.get(r, c) - v).abs());
            }
        }
        worst
    }

    /// The single-type layer written as one aggregation: `eLU(mean_j (W h_j
    /// + b) [+ h_i])`, composed from the same primitives but without any
    /// multi-type averaging. Only meaningful for one edge type.
    pub fn single_type_chain(&self) -> Tensor {
        assert_eq!(self.config.edge_types.len(), 1);
        let t = self.config.edge_types[0];
        let hood = self.graph.neighbourhoods(t, &(0..self.n()).collect::<Vec<_>>());
        let mut g = Graph::new();
        let mut h = g.input(self.h0.clone());
        for l in 0..self.config.num_layers {
            let w = g.param(&self.store, self.store.id(&format!("gcn.l{l}.w.{}", type_tag(t))).unwrap());
            let b = g.param(&self.store, self.store.id(&format!("gcn.l{l}.b")).unwrap());
            let m = g.matmul(h, w).unwrap();
            let m = g.add_row(m, b).unwrap();
            let mut agg = g.neighbor_mean(m, &hood).unwrap();
            if self.config.skip_connections && l >= 1 {
                agg = g.add(agg, h).unwrap();
            }
            h = g.elu(agg);
        }
        g.value(h).clone()
    }
}

// ---------------------------------------------------------------------------
// End-to-end gradient check

/// A labelled page of `n_boxes` (2..=5): a large-font title over a small
/// grid of body boxes, so both edge types are present.
pub fn grad_check_doc(rng: &mut impl Rng, n_boxes: usize) -> Document {
    let n_boxes = n_boxes.clamp(2, 5);
    let words = ["total", "due", "acme", "ltd", "invoice", "no", "42", "date"];
    let mut boxes = vec![TextBox {
        spans: vec![Span {
            entity_type: "A".into(),
            char_start: 0,
            char_end: 7,
        }],
        font_name: "Helvetica-Bold".into(),
        ..tb(0, "Summary", 10.0, 10.0, 80.0, 24.0, 14.0)
    }];
    for k in 1..n_boxes {
        let (col, row) = ((k - 1) % 2, (k - 1) / 2);
        let x0 = 10.0 + 100.0 * col as f64;
        let y0 = 40.0 + 20.0 * row as f64;
        let a = words[rng.random_range(0..words.len())];
        let b = words[rng.random_range(0..words.len())];
        let text = format!("{a} {b}");
        let span = Span {
            entity_type: if k % 2 == 0 { "A" } else { "B" }.into(),
            char_start: a.len() + 1,
            char_end: text.len(),
        };
        let mut bx = tb(k, &text, x0, y0, x0 + 60.0, y0 + 10.0, 10.0);
        if rng.random_bool(0.7) {
            bx.spans.push(span);
        }
        boxes.push(bx);
    }
    Document {
        doc_id: "grad".into(),
        template_id: "grad".into(),
        pages: vec![Page {
            page_no: 0,
            width: 300.0,
            height: 200.0,
            boxes,
        }],
    }
}

/// Model and its single prepared page for a gradient check.
pub fn grad_check_fixture(seed: u64, n_boxes: usize) -> (Model, PreparedPage) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let doc = grad_check_doc(&mut rng, n_boxes);
    let vocab: Vocabulary = build_vocab(std::slice::from_ref(&doc), 1);
    let cfg = tiny_config(vocab.len(), &["A", "B"], true);
    let model = Model::new(cfg, vocab, seed).unwrap();
    let mut pages = model.prepare(&doc, true).unwrap();
    assert_eq!(pages.len(), 1);
    (model, pages.remove(0))
}

/// Central-difference check of the full tagging loss (encoder, node init
/// with font embeddings, both edge types, skip connections, head).
pub fn model_grad_check(seed: u64, n_boxes: usize) -> GradCheckReport {
    let (model, page) = grad_check_fixture(seed, n_boxes);
    assert!(page.graph.count(EdgeType::Adjacency) > 0);
    assert!(page.graph.count(EdgeType::SectionTitle) > 0);
    let cfg = model.config.clone();
    let vocab = model.vocab.clone();
    let mut store = model.store.clone();
    let check = GradCheckConfig {
        seed,
        ..GradCheckConfig::default()
    };
    grad_check(
        &mut store,
        |s: &ParamStore| {
            let m = Model::from_parts(cfg.clone(), vocab.clone(), s.clone()).unwrap();
            let mut g = Graph::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let loss = m.page_loss(&mut g, &page, false, &mut rng).unwrap().unwrap();
            let value = g.value(loss).item();
            let grads = g.backward(loss, s.len())?;
            Ok((value, grads))
        },
        &check,
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// Metric oracles

use layoutie::docmodel::TagSet;
use layoutie::evalkit::score;

/// Per-type `(tp, fp, fn)` by direct set counting over token indices.
pub fn oracle_counts(pred: &[usize], gold: &[usize], n_types: usize) -> Vec<(u64, u64, u64)> {
    let ty = |t: usize| if t == 0 { None } else { Some((t - 1) / 2) };
    (0..n_types)
        .map(|k| {
            let is = |v: &[usize], i: usize| ty(v[i]) == Some(k);
            let n = pred.len();
            let tp = (0..n).filter(|&i| is(pred, i) && is(gold, i)).count() as u64;
            let fp = (0..n).filter(|&i| is(pred, i) && !is(gold, i)).count() as u64;
            let fn_ = (0..n).filter(|&i| !is(pred, i) && is(gold, i)).count() as u64;
            (tp, fp, fn_)
        })
        .collect()
}

/// Exact comparison against the hand-computed fixtures.
pub fn check_metric_fixtures() -> Result<usize, String> {
    let tagset = TagSet::new(["A", "B"]);
    let fixtures = metric_fixtures();
    for (n, f) in fixtures.iter().enumerate() {
        let c = score(&tagset, f.pred, f.gold).map_err(|e| e.to_string())?;
        let got_a = (c.per_type[0].tp, c.per_type[0].fp, c.per_type[0].fn_);
        let got_b = (c.per_type[1].tp, c.per_type[1].fp, c.per_type[1].fn_);
        let m = c.micro();
        if got_a != f.a || got_b != f.b || (m.p, m.r, m.f1) != f.micro {
            return Err(format!(
                "fixture {n}: got A {got_a:?} B {got_b:?} micro {:?}, want A {:?} B {:?} micro {:?}",
                (m.p, m.r, m.f1),
                f.a,
                f.b,
                f.micro
            ));
        }
    }
    Ok(fixtures.len())
}

/// Fuzzed tag sequences: counts agree with [`oracle_counts`], micro counts
/// are the per-type sums, micro F1 is `2TP/(2TP+FP+FN)` and the harmonic
/// mean of micro P and R, and scoring is additive over any split point.
pub fn fuzz_micro_consistency(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let n_types = rng.random_range(1..=4);
        let types: Vec<String> = (0..n_types).map(|k| format!("T{k}")).collect();
        let tagset = TagSet::new(types);
        let len = rng.random_range(0..40);
        let draw = |r: &mut ChaCha8Rng| -> Vec<usize> { (0..len).map(|_| r.random_range(0..tagset.num_tags())).collect() };
        let (pred, gold) = (draw(&mut rng), draw(&mut rng));
        let err = |msg: String| Err(format!("case {case}: {msg}; pred {pred:?} gold {gold:?}"));
        let c = score(&tagset, &pred, &gold).map_err(|e| e.to_string())?;
        let oracle = oracle_counts(&pred, &gold, n_types);
        let got: Vec<(u64, u64, u64)> = c.per_type.iter().map(|x| (x.tp, x.fp, x.fn_)).collect();
        if got != oracle {
            return err(format!("counts {got:?} vs oracle {oracle:?}"));
        }
        let (tp, fp, fn_) = oracle.iter().fold((0, 0, 0), |a, x| (a.0 + x.0, a.1 + x.1, a.2 + x.2));
        let mc = c.micro_counts();
        if (mc.tp, mc.fp, mc.fn_) != (tp, fp, fn_) {
            return err("micro counts are not the per-type sums".into());
        }
        let m = c.micro();
        let want_f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
        if (m.f1 - want_f1).abs() > 1e-12 {
            return err(format!("micro f1 {} vs {want_f1}", m.f1));
        }
        let hm = if m.p + m.r == 0.0 { 0.0 } else { 2.0 * m.p * m.r / (m.p + m.r) };
        if (m.f1 - hm).abs() > 1e-12 {
            return err(format!("micro f1 {} vs harmonic mean {hm}", m.f1));
        }
        let cut = rng.random_range(0..=len);
        let mut split = score(&tagset, &pred[..cut], &gold[..cut]).map_err(|e| e.to_string())?;
        split.merge(&score(&tagset, &pred[cut..], &gold[cut..]).map_err(|e| e.to_string())?);
        if split != c {
            return err(format!("not additive at split {cut}"));
        }
    }
    Ok(cases)
}
