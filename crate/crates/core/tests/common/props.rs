//! Seeded property checks shared by the acceptance runner. Each returns a
//! description of the first violation.

use std::collections::BTreeSet;

use layoutie::docmodel::{is_valid_bio, project_labels, repair_bio, tokenize, Span, TagSet, MASK, NUM_RESERVED};
use layoutie::layoutgraph::{build_page_graph, extract_sprc_pairs, EdgeType, GraphOptions, SprcLabel};
use layoutie::textencoder::{dynamic_mask, Encoder, EncoderConfig, EncoderInput};
use layoutie_nn::{Graph, ParamStore, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{random_page, tb, GcnCase};

pub type Check = Result<(), String>;

fn fail<T>(msg: String) -> Result<T, String> {
    Err(msg)
}

const WORDS: [&str; 10] = ["acme", "Total", "due:", "(net)", "12.50", "Ltd.", "x", "Über", "a-b", "#7"];

/// Box text of random words plus non-overlapping spans on word boundaries.
pub fn random_labelled_text(rng: &mut impl Rng, types: &[&str]) -> (String, Vec<Span>) {
    let n = rng.random_range(1..=6);
    let words: Vec<&str> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
    let mut starts = Vec::new();
    let mut text = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            text.push(' ');
        }
        starts.push(text.chars().count());
        text.push_str(w);
    }
    let mut spans = Vec::new();
    let mut i = 0;
    while i < n {
        if rng.random_bool(0.4) {
            let j = rng.random_range(i..n);
            spans.push(Span {
                entity_type: types[rng.random_range(0..types.len())].into(),
                char_start: starts[i],
                char_end: starts[j] + words[j].chars().count(),
            });
            i = j + 1;
        } else {
            i += 1;
        }
    }
    (text, spans)
}

/// Projected gold labels and repaired arbitrary tag strings are valid BIO.
pub fn bio_validity(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types = ["A", "B", "C"];
    let tagset = TagSet::new(types);
    for _ in 0..20 {
        let (text, spans) = random_labelled_text(&mut rng, &types);
        let b = layoutie::docmodel::TextBox { spans, ..tb(0, &text, 0.0, 0.0, 1.0, 1.0, 10.0) };
        let tags = project_labels(&b, &tokenize(&text), &tagset).map_err(|e| e.to_string())?.bio_tags.unwrap();
        if !is_valid_bio(&tags) {
            return fail(format!("projected tags {tags:?} for {text:?} are not valid BIO"));
        }
        let raw: Vec<usize> = (0..rng.random_range(0..20)).map(|_| rng.random_range(0..tagset.num_tags())).collect();
        if !is_valid_bio(&repair_bio(&raw)) {
            return fail(format!("repair of {raw:?} is not valid BIO"));
        }
    }
    Ok(())
}

/// Edges are stored once with `i < j` between distinct boxes and every
/// neighbourhood relation is mutual.
pub fn edge_undirectedness(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let page = random_page(&mut rng, 10);
    let g = build_page_graph(&page, &GraphOptions::default());
    let ids: Vec<usize> = page.boxes.iter().map(|b| b.box_id).collect();
    for e in &g.edges {
        if e.i >= e.j {
            return fail(format!("edge {e:?} not canonical"));
        }
    }
    for t in EdgeType::ALL {
        let hoods = g.neighbourhoods(t, &ids);
        for (a, h) in hoods.iter().enumerate() {
            if h[0] != a {
                return fail(format!("node {a} missing from its own neighbourhood"));
            }
            for &b in &h[1..] {
                if !hoods[b][1..].contains(&a) {
                    return fail(format!("{t:?}: {b} in N({a}) but not the reverse"));
                }
            }
        }
    }
    Ok(())
}

/// Every SPRC pair appears with its mirror and flipped label.
pub fn sprc_symmetry(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let page = random_page(&mut rng, 10);
    let pairs = extract_sprc_pairs(&page, 1.0);
    let set: BTreeSet<(usize, usize, SprcLabel)> = pairs.iter().map(|p| (p.box_a, p.box_b, p.label)).collect();
    for p in &pairs {
        if !set.contains(&(p.box_b, p.box_a, p.label.flip())) {
            return fail(format!("pair {p:?} has no mirror"));
        }
    }
    let count = |l: SprcLabel| pairs.iter().filter(|p| p.label == l).count();
    if count(SprcLabel::LeftRight) != count(SprcLabel::RightLeft) || count(SprcLabel::UpDown) != count(SprcLabel::DownUp) {
        return fail("label counts are not paired".into());
    }
    Ok(())
}

/// Relabelling nodes permutes the GCN output rows accordingly.
pub fn gcn_permutation_equivariance(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = GcnCase::random(&mut rng, 6);
    let n = c.n();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let d = c.h0.cols();
    let mut h = vec![0.0; n * d];
    for i in 0..n {
        h[perm[i] * d..(perm[i] + 1) * d].copy_from_slice(c.h0.row(i));
    }
    let permuted = GcnCase {
        config: c.config.clone(),
        store: c.store.clone(),
        h0: Tensor::from_vec(&[n, d], h).unwrap(),
        graph: layoutie::layoutgraph::PageGraph {
            node_ids: (0..n).collect(),
            edges: c
                .graph
                .edges
                .iter()
                .map(|e| layoutie::layoutgraph::Edge::new(e.kind, perm[e.i], perm[e.j]))
                .collect(),
        },
    };
    let (a, b) = (c.forward(), permuted.forward());
    for i in 0..n {
        for (x, y) in a.row(i).iter().zip(b.row(perm[i])) {
            if (x - y).abs() > 1e-12 {
                return fail(format!("row {i}: {x} vs {y}"));
            }
        }
    }
    Ok(())
}

/// Evaluation-mode encoding ignores the dropout rate and the rng.
pub fn dropout_eval_identity(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EncoderConfig {
        vocab_size: 40,
        hidden_dim: 8,
        num_layers: 2,
        num_heads: 2,
        ffn_dim: 16,
        max_seq_len: 12,
        dropout: 0.5,
    };
    let mut store = ParamStore::new();
    let enc = Encoder::init(&mut store, &cfg, &mut rng).map_err(|e| e.to_string())?;
    let inputs: Vec<EncoderInput> = (0..3)
        .map(|_| {
            let ids: Vec<usize> = (0..rng.random_range(0..10)).map(|_| rng.random_range(NUM_RESERVED..40)).collect();
            EncoderInput::single(&ids, 12).0
        })
        .collect();
    let run = |enc: &Encoder, rng_seed: u64| -> Vec<f64> {
        let mut g = Graph::new();
        let b = enc.forward(&mut g, &store, &inputs, false, &mut ChaCha8Rng::seed_from_u64(rng_seed)).unwrap();
        g.value(b.states).data().to_vec()
    };
    let base = run(&enc, 1);
    let no_dropout = Encoder::bind(&store, &EncoderConfig { dropout: 0.0, ..cfg }).unwrap();
    if base != run(&enc, 2) || base != run(&no_dropout, 3) {
        return fail("eval-mode output depends on dropout".into());
    }
    let mut g = Graph::new();
    let x = g.input(Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap());
    let y = g.dropout(x, 0.9, &mut rng, false);
    if g.value(x).data() != g.value(y).data() {
        return fail("dropout(train=false) is not the identity".into());
    }
    Ok(())
}

/// Selection rate 15% ± 1% and replacement split 80/10/10 ± 2% over 50,000
/// tokens.
pub fn mask_statistics(seed: u64) -> Check {
    const V: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61736b);
    let ids: Vec<usize> = (0..50_000).map(|_| rng.random_range(NUM_RESERVED..V)).collect();
    let m = dynamic_mask(&ids, V, seed, 0.15);
    let n = m.positions.len() as f64;
    let rate = n / ids.len() as f64;
    if (rate - 0.15).abs() > 0.01 {
        return fail(format!("selection rate {rate}"));
    }
    let (mut masked, mut random, mut kept) = (0.0, 0.0, 0.0);
    for (&p, &orig) in m.positions.iter().zip(&m.originals) {
        match m.masked_ids[p] {
            MASK => masked += 1.0,
            x if x == orig => kept += 1.0,
            _ => random += 1.0,
        }
    }
    for (frac, want, what) in [(masked / n, 0.8, "mask"), (random / n, 0.1, "random"), (kept / n, 0.1, "keep")] {
        if (frac - want).abs() > 0.02 {
            return fail(format!("{what} fraction {frac}"));
        }
    }
    Ok(())
}
