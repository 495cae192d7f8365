//! Per-page text-box graphs: font ranks, aligned nearest-neighbour edges,
//! section-title edges, node-cap chunking and positional pair extraction.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::docmodel::{reading_order, Document, Page, TextBox};

/// Per-document font ranking by box frequency; rank `max_ranks` is the
/// overflow bucket shared by every rarer font.
#[derive(Clone, Debug, PartialEq)]
pub struct FontRankTable {
    ranks: HashMap<(String, u64), usize>,
    pub max_ranks: usize,
}

impl FontRankTable {
    pub fn rank(&self, font_name: &str, font_size: f64) -> usize {
        self.ranks
            .get(&(font_name.to_string(), font_size.to_bits()))
            .copied()
            .unwrap_or(self.max_ranks)
    }

    pub fn rank_of(&self, b: &TextBox) -> usize {
        self.rank(&b.font_name, b.font_size)
    }

    pub fn num_fonts(&self) -> usize {
        self.ranks.len()
    }
}

pub fn rank_fonts(doc: &Document, max_ranks: usize) -> FontRankTable {
    let max_ranks = max_ranks.max(1);
    let mut counts: HashMap<(String, u64), usize> = HashMap::new();
    for b in doc.boxes() {
        *counts.entry((b.font_name.clone(), b.font_size.to_bits())).or_default() += 1;
    }
    let mut fonts: Vec<((String, u64), usize)> = counts.into_iter().collect();
    fonts.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| a.0 .0.cmp(&b.0 .0))
            .then_with(|| f64::from_bits(a.0 .1).total_cmp(&f64::from_bits(b.0 .1)))
    });
    let ranks = fonts
        .into_iter()
        .enumerate()
        .map(|(i, (key, _))| (key, i.min(max_ranks)))
        .collect();
    FontRankTable { ranks, max_ranks }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    Horizontal,
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SprcLabel {
    LeftRight,
    RightLeft,
    UpDown,
    DownUp,
}

impl SprcLabel {
    pub const ALL: [SprcLabel; 4] = [
        SprcLabel::LeftRight,
        SprcLabel::RightLeft,
        SprcLabel::UpDown,
        SprcLabel::DownUp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn flip(self) -> Self {
        match self {
            SprcLabel::LeftRight => SprcLabel::RightLeft,
            SprcLabel::RightLeft => SprcLabel::LeftRight,
            SprcLabel::UpDown => SprcLabel::DownUp,
            SprcLabel::DownUp => SprcLabel::UpDown,
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            SprcLabel::LeftRight | SprcLabel::RightLeft => Axis::Horizontal,
            _ => Axis::Vertical,
        }
    }
}

/// Strict alignment of two boxes on a shared edge coordinate. Horizontal
/// (shared top or bottom) is tested first; pairs whose centres coincide on
/// the aligned axis have no direction and yield `None`.
pub fn alignment(a: &TextBox, b: &TextBox, eps_align: f64) -> Option<(Axis, SprcLabel)> {
    let (acx, acy) = a.center();
    let (bcx, bcy) = b.center();
    let h = (a.y0 - b.y0).abs() <= eps_align || (a.y1 - b.y1).abs() <= eps_align;
    let v = (a.x0 - b.x0).abs() <= eps_align || (a.x1 - b.x1).abs() <= eps_align;
    if h && acx != bcx {
        let label = if acx < bcx { SprcLabel::LeftRight } else { SprcLabel::RightLeft };
        return Some((Axis::Horizontal, label));
    }
    if v && acy != bcy {
        let label = if acy < bcy { SprcLabel::UpDown } else { SprcLabel::DownUp };
        return Some((Axis::Vertical, label));
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    Adjacency,
    SectionTitle,
}

impl EdgeType {
    pub const ALL: [EdgeType; 2] = [EdgeType::Adjacency, EdgeType::SectionTitle];
}

/// Undirected edge between two box ids, stored with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    #[serde(rename = "type")]
    pub kind: EdgeType,
    pub i: usize,
    pub j: usize,
}

impl Edge {
    pub fn new(kind: EdgeType, a: usize, b: usize) -> Self {
        Edge {
            kind,
            i: a.min(b),
            j: a.max(b),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PageGraph {
    /// Box ids in reading order.
    pub node_ids: Vec<usize>,
    pub edges: BTreeSet<Edge>,
}

impl PageGraph {
    pub fn count(&self, kind: EdgeType) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Neighbourhoods `N_t(i) ∪ {i}` for one edge type, indexed by the
    /// position of each box in `box_ids`.
    pub fn neighbourhoods(&self, kind: EdgeType, box_ids: &[usize]) -> Vec<Vec<usize>> {
        let row: HashMap<usize, usize> = box_ids.iter().enumerate().map(|(r, &b)| (b, r)).collect();
        let mut hoods: Vec<Vec<usize>> = (0..box_ids.len()).map(|r| vec![r]).collect();
        for e in self.edges.iter().filter(|e| e.kind == kind) {
            if let (Some(&a), Some(&b)) = (row.get(&e.i), row.get(&e.j)) {
                hoods[a].push(b);
                hoods[b].push(a);
            }
        }
        for h in &mut hoods {
            h[1..].sort_unstable();
        }
        hoods
    }
}

fn closest(page: &Page, i: usize, axis: Axis, eps_align: f64) -> Option<usize> {
    let bi = &page.boxes[i];
    let (cx, cy) = bi.center();
    let mut best: Option<(f64, usize, usize)> = None;
    for (j, bj) in page.boxes.iter().enumerate() {
        if j == i {
            continue;
        }
        match alignment(bi, bj, eps_align) {
            Some((a, _)) if a == axis => {}
            _ => continue,
        }
        let (jx, jy) = bj.center();
        let d = match axis {
            Axis::Horizontal => (cx - jx).abs(),
            Axis::Vertical => (cy - jy).abs(),
        };
        let better = match best {
            None => true,
            Some((bd, bid, _)) => d < bd || (d == bd && bj.box_id < bid),
        };
        if better {
            best = Some((d, bj.box_id, j));
        }
    }
    best.map(|(_, _, j)| j)
}

/// Links every box to its closest horizontally aligned and closest
/// vertically aligned box (centre distance along the axis).
pub fn build_adjacency_edges(page: &Page, eps_align: f64) -> PageGraph {
    let mut edges = BTreeSet::new();
    for i in 0..page.boxes.len() {
        for axis in [Axis::Horizontal, Axis::Vertical] {
            if let Some(j) = closest(page, i, axis, eps_align) {
                edges.insert(Edge::new(EdgeType::Adjacency, page.boxes[i].box_id, page.boxes[j].box_id));
            }
        }
    }
    PageGraph {
        node_ids: reading_order(&page.boxes).into_iter().map(|i| page.boxes[i].box_id).collect(),
        edges,
    }
}

/// The section title of a box: the nearest box entirely above it with a
/// strictly larger font.
pub fn section_title_of(page: &Page, i: usize) -> Option<usize> {
    let bi = &page.boxes[i];
    let cx = bi.center().0;
    let mut best: Option<(f64, f64, usize, usize)> = None;
    for (j, bj) in page.boxes.iter().enumerate() {
        if j == i || !(bj.y1 <= bi.y0 && bj.font_size > bi.font_size) {
            continue;
        }
        let key = (bi.y0 - bj.y1, (cx - bj.center().0).abs(), bj.box_id);
        let better = match best {
            None => true,
            Some((g, dx, id, _)) => key.0.total_cmp(&g).then(key.1.total_cmp(&dx)).then(key.2.cmp(&id)).is_lt(),
        };
        if better {
            best = Some((key.0, key.1, key.2, j));
        }
    }
    best.map(|b| b.3)
}

pub fn add_section_title_edges(page: &Page, graph: &PageGraph) -> PageGraph {
    let mut g = graph.clone();
    for i in 0..page.boxes.len() {
        if let Some(j) = section_title_of(page, i) {
            g.edges.insert(Edge::new(EdgeType::SectionTitle, page.boxes[i].box_id, page.boxes[j].box_id));
        }
    }
    g
}

/// Splits an over-full page into reading-order chunks of at most `max_nodes`.
pub fn chunk_page(page: &Page, max_nodes: usize) -> Vec<Page> {
    let max_nodes = max_nodes.max(1);
    if page.boxes.len() <= max_nodes {
        return vec![page.clone()];
    }
    let order = reading_order(&page.boxes);
    order
        .chunks(max_nodes)
        .map(|c| Page {
            boxes: c.iter().map(|&i| page.boxes[i].clone()).collect(),
            ..page.clone()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SprcPair {
    pub box_a: usize,
    pub box_b: usize,
    pub label: SprcLabel,
}

/// Both orderings of every adjacency edge, labelled by direction.
pub fn extract_sprc_pairs(page: &Page, eps_align: f64) -> Vec<SprcPair> {
    let by_id: HashMap<usize, &TextBox> = page.boxes.iter().map(|b| (b.box_id, b)).collect();
    let graph = build_adjacency_edges(page, eps_align);
    let mut out = Vec::new();
    for e in &graph.edges {
        if let Some((_, label)) = alignment(by_id[&e.i], by_id[&e.j], eps_align) {
            out.push(SprcPair {
                box_a: e.i,
                box_b: e.j,
                label,
            });
            out.push(SprcPair {
                box_a: e.j,
                box_b: e.i,
                label: label.flip(),
            });
        }
    }
    out
}

/// Keeps every horizontal pair and a uniformly sampled `ratio` of the
/// vertical ones (rounded to nearest), preserving input order.
pub fn balance_sprc_pairs(pairs: &[SprcPair], ratio: f64, rng_seed: u64) -> Vec<SprcPair> {
    let vertical: Vec<usize> = (0..pairs.len())
        .filter(|&i| pairs[i].label.axis() == Axis::Vertical)
        .collect();
    let k = ((vertical.len() as f64) * ratio.clamp(0.0, 1.0)).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let keep: BTreeSet<usize> = sample(&mut rng, vertical.len(), k.min(vertical.len()))
        .into_iter()
        .map(|i| vertical[i])
        .collect();
    pairs
        .iter()
        .enumerate()
        .filter(|(i, p)| p.label.axis() == Axis::Horizontal || keep.contains(i))
        .map(|(_, p)| *p)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphOptions {
    pub eps_align: f64,
    pub section_title_edges: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            eps_align: 1.0,
            section_title_edges: true,
        }
    }
}

pub fn build_page_graph(page: &Page, opts: &GraphOptions) -> PageGraph {
    let g = build_adjacency_edges(page, opts.eps_align);
    if opts.section_title_edges {
        add_section_title_edges(page, &g)
    } else {
        g
    }
}

/// One line of the graph dump file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub doc_id: String,
    pub page_no: usize,
    pub nodes: Vec<usize>,
    pub edges: Vec<Edge>,
    pub font_ranks: BTreeMap<usize, usize>,
}

pub fn dump_graph(doc: &Document, page: &Page, graph: &PageGraph, fonts: &FontRankTable) -> GraphDump {
    GraphDump {
        doc_id: doc.doc_id.clone(),
        page_no: page.page_no,
        nodes: graph.node_ids.clone(),
        edges: graph.edges.iter().copied().collect(),
        font_ranks: page.boxes.iter().map(|b| (b.box_id, fonts.rank_of(b))).collect(),
    }
}
