//! Document data model, corpus ingestion, box merging, tokenisation, BIO
//! labels and the word vocabulary.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub entity_type: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextBox {
    pub box_id: usize,
    pub text: String,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub font_name: String,
    pub font_size: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spans: Vec<Span>,
}

impl TextBox {
    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub page_no: usize,
    pub width: f64,
    pub height: f64,
    pub boxes: Vec<TextBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub template_id: String,
    pub pages: Vec<Page>,
}

impl Document {
    pub fn boxes(&self) -> impl Iterator<Item = &TextBox> {
        self.pages.iter().flat_map(|p| p.boxes.iter())
    }

    pub fn has_labels(&self) -> bool {
        self.boxes().any(|b| !b.spans.is_empty())
    }
}

// ---------------------------------------------------------------------------
// Ingestion

/// Clips coordinates to the page and checks every structural invariant.
pub fn validate_document(mut doc: Document) -> Result<Document> {
    let bad_doc = |doc_id: &str, msg: &str| Error::InvalidDocument {
        doc_id: doc_id.to_string(),
        msg: msg.to_string(),
    };
    if doc.doc_id.is_empty() {
        return Err(bad_doc("<empty>", "doc_id is empty"));
    }
    if doc.template_id.is_empty() {
        return Err(bad_doc(&doc.doc_id, "template_id is empty"));
    }
    for page in &mut doc.pages {
        if !(page.width > 0.0 && page.height > 0.0) {
            return Err(bad_doc(&doc.doc_id, "page size must be positive"));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &mut page.boxes {
            let bad = |msg: String| Error::InvalidBox {
                doc_id: doc.doc_id.clone(),
                box_id: b.box_id,
                msg,
            };
            if !seen.insert(b.box_id) {
                return Err(bad("duplicate box_id".into()));
            }
            b.x0 = b.x0.clamp(0.0, page.width);
            b.x1 = b.x1.clamp(0.0, page.width);
            b.y0 = b.y0.clamp(0.0, page.height);
            b.y1 = b.y1.clamp(0.0, page.height);
            if !(b.x0 < b.x1 && b.y0 < b.y1) {
                return Err(bad(format!(
                    "degenerate bbox ({}, {}, {}, {})",
                    b.x0, b.y0, b.x1, b.y1
                )));
            }
            if !(b.font_size > 0.0) {
                return Err(bad("font_size must be positive".into()));
            }
            let n = b.char_len();
            for s in &b.spans {
                if s.char_start >= s.char_end || s.char_end > n {
                    return Err(bad(format!(
                        "span {}..{} out of range for text of {n} chars",
                        s.char_start, s.char_end
                    )));
                }
            }
            if spans_overlap(&b.spans) {
                return Err(bad("overlapping spans".into()));
            }
        }
    }
    Ok(doc)
}

fn spans_overlap(spans: &[Span]) -> bool {
    let mut r: Vec<(usize, usize)> = spans.iter().map(|s| (s.char_start, s.char_end)).collect();
    r.sort_unstable();
    r.windows(2).any(|w| w[1].0 < w[0].1)
}

/// Parses one document per non-blank line.
pub fn parse_corpus_str(input: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        docs.push(validate_document(doc)?);
    }
    Ok(docs)
}

pub fn parse_corpus(path: &Path) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_corpus_str(&text)
}

pub fn serialize_corpus(docs: &[Document]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("documents serialize"));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Reading order and merging

/// Indices of `boxes` in reading order: boxes are grouped into lines (a box
/// joins a line when its vertical centre falls inside the line's first box),
/// lines run top to bottom, boxes within a line left to right.
pub fn reading_order(boxes: &[TextBox]) -> Vec<usize> {
    let mut by_y: Vec<usize> = (0..boxes.len()).collect();
    by_y.sort_by(|&a, &b| {
        let (ba, bb) = (&boxes[a], &boxes[b]);
        ba.y0
            .total_cmp(&bb.y0)
            .then(ba.x0.total_cmp(&bb.x0))
            .then(a.cmp(&b))
    });
    let mut lines: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    for i in by_y {
        let cy = boxes[i].center().1;
        match lines.iter_mut().find(|(y0, y1, _)| cy >= *y0 && cy <= *y1) {
            Some(line) => line.2.push(i),
            None => lines.push((boxes[i].y0, boxes[i].y1, vec![i])),
        }
    }
    let mut order = Vec::with_capacity(boxes.len());
    for (_, _, mut members) in lines {
        members.sort_by(|&a, &b| boxes[a].x0.total_cmp(&boxes[b].x0).then(a.cmp(&b)));
        order.extend(members);
    }
    order
}

fn close(a: &TextBox, b: &TextBox, eps: f64) -> bool {
    let v_overlap = a.y1.min(b.y1) - a.y0.max(b.y0);
    let h_overlap = a.x1.min(b.x1) - a.x0.max(b.x0);
    (v_overlap > 0.0 && -h_overlap <= eps) || (h_overlap > 0.0 && -v_overlap <= eps)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn merge_group(boxes: &[TextBox], members: &[usize], box_id: usize) -> TextBox {
    let sub: Vec<TextBox> = members.iter().map(|&i| boxes[i].clone()).collect();
    let order = reading_order(&sub);
    let mut text = String::new();
    let mut spans = Vec::new();
    let mut offset = 0;
    for (k, &i) in order.iter().enumerate() {
        if k > 0 {
            text.push(' ');
            offset += 1;
        }
        text.push_str(&sub[i].text);
        for s in &sub[i].spans {
            spans.push(Span {
                entity_type: s.entity_type.clone(),
                char_start: s.char_start + offset,
                char_end: s.char_end + offset,
            });
        }
        offset += sub[i].char_len();
    }
    let dominant = order
        .iter()
        .copied()
        .fold(order[0], |best, i| if sub[i].area() > sub[best].area() { i } else { best });
    TextBox {
        box_id,
        text,
        x0: sub.iter().map(|b| b.x0).fold(f64::INFINITY, f64::min),
        y0: sub.iter().map(|b| b.y0).fold(f64::INFINITY, f64::min),
        x1: sub.iter().map(|b| b.x1).fold(f64::NEG_INFINITY, f64::max),
        y1: sub.iter().map(|b| b.y1).fold(f64::NEG_INFINITY, f64::max),
        font_name: sub[dominant].font_name.clone(),
        font_size: sub[dominant].font_size,
        spans,
    }
}

/// Transitively merges boxes that sit on the same line (or column) with a gap
/// of at most `merge_eps`. Repeats until no pair qualifies, so the result is a
/// fixpoint. A page where nothing merges is returned unchanged; otherwise boxes
/// are emitted in reading order with dense ids.
pub fn merge_close_boxes(page: &Page, merge_eps: f64) -> Page {
    let mut boxes = page.boxes.clone();
    let mut changed = false;
    loop {
        let n = boxes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        let mut any = false;
        for i in 0..n {
            for j in i + 1..n {
                if close(&boxes[i], &boxes[j], merge_eps) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                        any = true;
                    }
                }
            }
        }
        if !any {
            break;
        }
        changed = true;
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        boxes = groups.values().map(|m| merge_group(&boxes, m, 0)).collect();
    }
    if !changed {
        return page.clone();
    }
    let order = reading_order(&boxes);
    let boxes = order
        .into_iter()
        .enumerate()
        .map(|(id, i)| TextBox {
            box_id: id,
            ..boxes[i].clone()
        })
        .collect();
    Page { boxes, ..page.clone() }
}

// ---------------------------------------------------------------------------
// Tokens and tags

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    /// Lowercased surface used for vocabulary lookup.
    pub surface: String,
    /// Character offsets into the original text, end exclusive.
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub bio_tags: Option<Vec<usize>>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Whitespace split, then leading and trailing ASCII punctuation characters
/// become single-character tokens.
pub fn tokenize(text: &str) -> TokenSequence {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let push = |s: usize, e: usize, tokens: &mut Vec<Token>| {
        let surface: String = chars[s..e].iter().collect::<String>().to_lowercase();
        tokens.push(Token {
            surface,
            char_start: s,
            char_end: e,
        });
    };
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let (mut s, mut e) = (start, i);
        while s < e && chars[s].is_ascii_punctuation() {
            push(s, s + 1, &mut tokens);
            s += 1;
        }
        let mut trailing = Vec::new();
        while e > s && chars[e - 1].is_ascii_punctuation() {
            trailing.push(e - 1);
            e -= 1;
        }
        if s < e {
            push(s, e, &mut tokens);
        }
        for &t in trailing.iter().rev() {
            push(t, t + 1, &mut tokens);
        }
    }
    TokenSequence {
        tokens,
        bio_tags: None,
    }
}

/// Entity types with tag ids `O = 0`, `B-k = 1 + 2k`, `I-k = 2 + 2k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    types: Vec<String>,
}

impl TagSet {
    pub const O: usize = 0;

    pub fn new<S: Into<String>>(types: impl IntoIterator<Item = S>) -> Self {
        TagSet {
            types: types.into_iter().map(Into::into).collect(),
        }
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn num_tags(&self) -> usize {
        2 * self.types.len() + 1
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t == name)
    }

    pub fn begin(&self, k: usize) -> usize {
        1 + 2 * k
    }

    pub fn inside(&self, k: usize) -> usize {
        2 + 2 * k
    }

    /// Entity type index carried by a tag; `None` for O.
    pub fn type_of(tag: usize) -> Option<usize> {
        (tag > 0).then(|| (tag - 1) / 2)
    }

    pub fn is_begin(tag: usize) -> bool {
        tag > 0 && tag % 2 == 1
    }

    pub fn tag_name(&self, tag: usize) -> String {
        match Self::type_of(tag) {
            None => "O".into(),
            Some(k) if Self::is_begin(tag) => format!("B-{}", self.types[k]),
            Some(k) => format!("I-{}", self.types[k]),
        }
    }

    pub fn parse_tag(&self, name: &str) -> Result<usize> {
        if name == "O" {
            return Ok(Self::O);
        }
        let (prefix, ty) = name
            .split_once('-')
            .ok_or_else(|| Error::UnknownEntity(name.to_string()))?;
        let k = self
            .type_index(ty)
            .ok_or_else(|| Error::UnknownEntity(ty.to_string()))?;
        match prefix {
            "B" => Ok(self.begin(k)),
            "I" => Ok(self.inside(k)),
            _ => Err(Error::UnknownEntity(name.to_string())),
        }
    }
}

/// Tags every token by character overlap with the box's gold spans.
pub fn project_labels(b: &TextBox, toks: &TokenSequence, tagset: &TagSet) -> Result<TokenSequence> {
    if spans_overlap(&b.spans) {
        return Err(Error::OverlappingSpans { box_id: b.box_id });
    }
    let mut tags = vec![TagSet::O; toks.len()];
    for s in &b.spans {
        let k = tagset
            .type_index(&s.entity_type)
            .ok_or_else(|| Error::UnknownEntity(s.entity_type.clone()))?;
        let mut first = true;
        for (t, tok) in toks.tokens.iter().enumerate() {
            if tok.char_start < s.char_end && s.char_start < tok.char_end {
                tags[t] = if first { tagset.begin(k) } else { tagset.inside(k) };
                first = false;
            }
        }
    }
    Ok(TokenSequence {
        tokens: toks.tokens.clone(),
        bio_tags: Some(tags),
    })
}

/// Rewrites every `I-X` not preceded by `B-X` or `I-X` to `B-X`.
pub fn repair_bio(tags: &[usize]) -> Vec<usize> {
    let mut out = tags.to_vec();
    for i in 0..out.len() {
        let t = out[i];
        if t > 0 && !TagSet::is_begin(t) {
            let ok = i > 0 && TagSet::type_of(out[i - 1]) == TagSet::type_of(t);
            if !ok {
                out[i] = t - 1;
            }
        }
    }
    out
}

pub fn is_valid_bio(tags: &[usize]) -> bool {
    tags.iter().enumerate().all(|(i, &t)| {
        t == 0 || TagSet::is_begin(t) || (i > 0 && TagSet::type_of(tags[i - 1]) == TagSet::type_of(t))
    })
}

/// Character spans `(type index, start, end)` decoded from repaired tags.
pub fn decode_spans(tokens: &[Token], tags: &[usize]) -> Vec<(usize, usize, usize)> {
    let tags = repair_bio(tags);
    let mut spans: Vec<(usize, usize, usize)> = Vec::new();
    for (tok, &t) in tokens.iter().zip(&tags) {
        match TagSet::type_of(t) {
            None => {}
            Some(k) if TagSet::is_begin(t) => spans.push((k, tok.char_start, tok.char_end)),
            Some(_) => spans.last_mut().expect("repaired tags start with B").2 = tok.char_end,
        }
    }
    spans
}

// ---------------------------------------------------------------------------
// Vocabulary

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const MASK: usize = 4;
pub const NUM_RESERVED: usize = 5;
const RESERVED: [&str; NUM_RESERVED] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(id_to_token: Vec<String>) -> Self {
        let token_to_id = id_to_token.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            id_to_token,
            token_to_id,
        }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.id_to_token
    }
}

impl Vocabulary {
    pub fn reserved_only() -> Self {
        RESERVED.iter().map(|s| s.to_string()).collect::<Vec<_>>().into()
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    /// Id of a corpus surface; reserved markers are never returned.
    pub fn id(&self, surface: &str) -> usize {
        match self.token_to_id.get(surface) {
            Some(&i) if i >= NUM_RESERVED => i,
            _ => UNK,
        }
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn encode(&self, toks: &TokenSequence) -> Vec<usize> {
        toks.tokens.iter().map(|t| self.id(&t.surface)).collect()
    }
}

/// Ids assigned by descending frequency then ascending surface; tokens rarer
/// than `min_freq` map to UNK.
pub fn build_vocab(corpus: &[Document], min_freq: usize) -> Vocabulary {
    let min_freq = min_freq.max(1);
    let mut counts: HashMap<String, usize> = HashMap::new();
    for b in corpus.iter().flat_map(Document::boxes) {
        for t in tokenize(&b.text).tokens {
            *counts.entry(t.surface).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(kept.into_iter().map(|(s, _)| s));
    tokens.into()
}
