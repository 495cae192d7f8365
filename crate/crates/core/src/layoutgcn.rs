//! Node initialisation from `[CLS]` vectors and font ranks, and the
//! multi-edge-type graph convolution with skip connections.

use layoutie_nn::{Graph, ParamId, ParamStore, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layoutgraph::{EdgeType, PageGraph};

pub const FONT_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcnConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub edge_types: Vec<EdgeType>,
    pub skip_connections: bool,
    pub font_features: bool,
    /// Font table rows are `max_ranks + 1` (overflow bucket last).
    pub max_ranks: usize,
}

impl GcnConfig {
    pub fn desk(edge_types: Vec<EdgeType>) -> Self {
        GcnConfig {
            num_layers: 2,
            hidden_dim: 64,
            edge_types,
            skip_connections: true,
            font_features: true,
            max_ranks: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("GCN needs at least one layer and one hidden unit".into()));
        }
        if self.edge_types.is_empty() {
            return Err(Error::Config("GCN needs at least one edge type".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self, d: usize) -> usize {
        if self.font_features {
            d + FONT_DIM
        } else {
            d
        }
    }
}

/// Parameter handles under the `gcn.` prefix. Layer 0's per-type weights map
/// the node input to `hidden_dim`; later layers are square.
#[derive(Clone, Debug)]
pub struct Gcn {
    pub config: GcnConfig,
    font: Option<ParamId>,
    /// `weights[l][t]` for edge type `config.edge_types[t]`.
    weights: Vec<Vec<ParamId>>,
    biases: Vec<ParamId>,
}

fn type_name(t: EdgeType) -> &'static str {
    match t {
        EdgeType::Adjacency => "adj",
        EdgeType::SectionTitle => "sec",
    }
}

impl Gcn {
    pub fn init(store: &mut ParamStore, config: &GcnConfig, d: usize, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        if config.font_features {
            store.add_normal("gcn.font", &[config.max_ranks + 1, FONT_DIM], 1.0, rng)?;
        }
        for l in 0..config.num_layers {
            let in_dim = if l == 0 { config.input_dim(d) } else { config.hidden_dim };
            let std = (1.0 / in_dim as f64).sqrt();
            for &t in &config.edge_types {
                store.add_normal(format!("gcn.l{l}.w.{}", type_name(t)), &[in_dim, config.hidden_dim], std, rng)?;
            }
            store.add_constant(format!("gcn.l{l}.b"), &[config.hidden_dim], 0.0)?;
        }
        Self::bind(store, config)
    }

    pub fn bind(store: &ParamStore, config: &GcnConfig) -> Result<Self> {
        config.validate()?;
        let font = if config.font_features {
            Some(store.id("gcn.font")?)
        } else {
            None
        };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..config.num_layers {
            weights.push(
                config
                    .edge_types
                    .iter()
                    .map(|&t| store.id(&format!("gcn.l{l}.w.{}", type_name(t))))
                    .collect::<layoutie_nn::Result<Vec<_>>>()?,
            );
            biases.push(store.id(&format!("gcn.l{l}.b"))?);
        }
        Ok(Gcn {
            config: config.clone(),
            font,
            weights,
            biases,
        })
    }

    /// Neighbourhood lists for every configured edge type, rows ordered like
    /// `box_ids`.
    pub fn neighbourhoods(&self, graph: &PageGraph, box_ids: &[usize]) -> Vec<Vec<Vec<usize>>> {
        self.config
            .edge_types
            .iter()
            .map(|&t| graph.neighbourhoods(t, box_ids))
            .collect()
    }

    /// `h0_i = C_i || e(f_i)`, or just `C_i` when font features are off.
    pub fn node_init<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore, cls: Var, ranks: &[usize]) -> Result<Var> {
        node_init(g, store, cls, ranks, self.font)
    }

    pub fn layer<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore, hoods: &[Vec<Vec<usize>>], h: Var, l: usize) -> Result<Var> {
        let ws: Vec<Var> = self.weights[l].iter().map(|&w| g.param(store, w)).collect();
        let b = g.param(store, self.biases[l]);
        let skip = self.config.skip_connections && l >= 1;
        gcn_layer(g, hoods, h, &ws, b, skip)
    }

    pub fn forward<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore, hoods: &[Vec<Vec<usize>>], h0: Var) -> Result<Var> {
        let mut h = h0;
        for l in 0..self.config.num_layers {
            h = self.layer(g, store, hoods, h, l)?;
        }
        Ok(h)
    }
}

pub fn node_init<'a>(g: &mut Graph<'a>, store: &'a ParamStore, cls: Var, ranks: &[usize], font: Option<ParamId>) -> Result<Var> {
    let Some(font) = font else { return Ok(cls) };
    let rows = store.value(font).rows();
    if let Some(&rank) = ranks.iter().find(|&&r| r >= rows) {
        return Err(Error::RankOutOfRange { rank, rows });
    }
    let table = g.param(store, font);
    let e = g.gather_rows(table, ranks)?;
    Ok(g.concat_cols(cls, e)?)
}

/// One layer: per edge type, mean of `W_t h_j + b` over `N_t(i) ∪ {i}`; the
/// type messages are averaged, the previous state optionally added, then eLU.
pub fn gcn_layer(g: &mut Graph<'_>, hoods: &[Vec<Vec<usize>>], h: Var, weights: &[Var], bias: Var, skip: bool) -> Result<Var> {
    if g.value(h).rows() == 0 || hoods.iter().any(|t| t.is_empty()) {
        return Err(Error::EmptyGraph);
    }
    if hoods.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} edge types but {} weight matrices",
            hoods.len(),
            weights.len()
        )));
    }
    let mut total: Option<Var> = None;
    for (hood, &w) in hoods.iter().zip(weights) {
        if hood.len() != g.value(h).rows() {
            return Err(Error::GraphMismatch {
                boxes: g.value(h).rows(),
                nodes: hood.len(),
            });
        }
        let m = g.matmul(h, w)?;
        let m = g.add_row(m, bias)?;
        let m = g.neighbor_mean(m, hood)?;
        total = Some(match total {
            None => m,
            Some(t) => g.add(t, m)?,
        });
    }
    let mut agg = total.expect("at least one edge type");
    if hoods.len() > 1 {
        agg = g.scale(agg, 1.0 / hoods.len() as f64);
    }
    if skip && g.value(agg).shape() == g.value(h).shape() {
        agg = g.add(agg, h)?;
    }
    Ok(g.elu(agg))
}
