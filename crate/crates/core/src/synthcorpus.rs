//! Deterministic synthetic invoices and resumes whose hard entities can only
//! be resolved from layout, plus the seen/unseen/unlabelled corpus split.
//!
//! Every generated box sits on a 4-unit grid except resume date ranges, which
//! are offset by 2 units so that they are never edge-aligned with anything.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::docmodel::{Document, Page, Span, TextBox};
use crate::error::{Error, Result};
use crate::layoutgraph::{alignment, build_adjacency_edges, Axis, SprcLabel};
use crate::util::derive_seed;

pub const PAGE_WIDTH: f64 = 612.0;
pub const PAGE_HEIGHT: f64 = 792.0;

pub const INVOICE_ENTITIES: [&str; 4] = ["SellerName", "PurchaserName", "InvoiceNo", "Amount"];
pub const RESUME_ENTITIES: [&str; 11] = [
    "Degree",
    "Position",
    "School",
    "Name",
    "CompanyDuration",
    "Email",
    "SchoolDuration",
    "Company",
    "Phone",
    "SectionTitle",
    "Address",
];
pub const DURATION_ENTITIES: [&str; 2] = ["SchoolDuration", "CompanyDuration"];

/// Words that introduce the payable total, in row form (`"Total:"`).
pub const TOTAL_CUES: [&str; 3] = ["Total", "Amount Due", "Total Due"];

// ---------------------------------------------------------------------------
// Lexicons

const BRANDS: &[&str] = &[
    "Apex", "Summit", "Harbor", "Pinnacle", "Crescent", "Redwood", "Granite", "Silverline", "Bluewater", "Northstar",
    "Ironwood", "Maple", "Falcon", "Cobalt", "Evergreen", "Lakeside", "Horizon", "Keystone", "Orion", "Sterling",
    "Atlas", "Beacon", "Cascade", "Cedar", "Ember", "Frontier", "Glacier", "Highland", "Juniper", "Kingsley",
    "Lumen", "Meridian", "Nimbus", "Oakridge", "Pioneer", "Quarry", "Ridgeway", "Sable", "Tidewater", "Vanguard",
    "Westfield", "Zenith", "Alder", "Brightway", "Copperfield", "Driftwood", "Eastgate", "Foxglove", "Goldcrest",
    "Hawthorn", "Ivory", "Jetstream", "Kestrel", "Lodestar", "Mosaic", "Northgate", "Onyx", "Paragon", "Quill",
    "Rockport",
];
const INDUSTRIES: &[&str] = &[
    "Logistics", "Supply", "Electric", "Printing", "Plumbing", "Software", "Consulting", "Textiles", "Foods",
    "Hardware", "Marine", "Freight", "Packaging", "Lighting", "Roofing", "Chemicals",
];
const SUFFIXES: &[&str] = &["LLC", "Inc.", "Co.", "Ltd.", "Corp.", "Group"];
const PLACES: &[&str] = &[
    "Riverside", "Fairview", "Brookfield", "Clearwater", "Greenville", "Hillcrest", "Kingston", "Lincoln", "Madison",
    "Newport", "Ashford", "Bayview", "Claremont", "Dover", "Elmwood", "Franklin", "Georgetown", "Hampton",
    "Irvington", "Jefferson", "Lexington", "Milford", "Norwood", "Oakdale", "Princeton", "Salem", "Trenton",
    "Weston",
];
const INSTITUTIONS: &[&str] = &[
    "Medical Center", "Public Library", "School District", "City Council", "Community College", "Water Authority",
    "Fire Department", "Parks Department", "Regional Hospital", "Housing Authority", "County Clerk",
    "Transit Agency",
];
const STREETS: &[&str] = &[
    "Oak", "Pine", "Elm", "Main", "Lake", "Hill", "Park", "Mill", "Church", "Spring", "Willow", "Chestnut", "Walnut",
    "Sunset", "River",
];
const STREET_KINDS: &[&str] = &["St", "Ave", "Rd", "Blvd", "Lane", "Way"];
const CITIES: &[&str] = &[
    "Springfield, IL", "Portland, OR", "Austin, TX", "Denver, CO", "Columbus, OH", "Raleigh, NC", "Tucson, AZ",
    "Omaha, NE", "Boise, ID", "Tampa, FL", "Albany, NY", "Reno, NV",
];
const ITEMS: &[&str] = &[
    "Office chairs", "Printer toner", "Network cables", "Safety gloves", "Copy paper", "LED panels", "Server rack",
    "Cleaning supplies", "Desk lamps", "Steel brackets", "Paint rollers", "Storage bins", "Label printers",
    "Water filters",
];
const LINE_HEADERS: &[&str] = &["Ext. Price", "Line Price", "Extended"];
const FOOTERS: &[&str] = &[
    "Thank you for your business",
    "Payment due within 30 days",
    "Please include the invoice number with payment",
    "Late payments incur a 2 percent fee",
];

const FIRST_NAMES: &[&str] = &[
    "Jane", "John", "Maria", "Wei", "Aisha", "Carlos", "Emily", "Omar", "Priya", "Lucas", "Sofia", "Daniel", "Hannah",
    "Kenji", "Fatima", "Noah", "Olivia", "Mateo", "Grace", "Ivan",
];
const LAST_NAMES: &[&str] = &[
    "Smith", "Garcia", "Chen", "Patel", "Johnson", "Kim", "Nguyen", "Lopez", "Brown", "Okafor", "Silva", "Novak",
    "Rossi", "Tanaka", "Khan", "Murphy", "Schmidt", "Haddad",
];
const MAIL_DOMAINS: &[&str] = &["gmail.com", "mail.com", "outlook.com", "proton.me"];
const SCHOOL_FORMS: &[&str] = &["University of {}", "{} State University", "{} College", "{} Institute of Technology"];
const DEGREES: &[&str] = &[
    "B.S. in Computer Science", "B.A. in Economics", "M.S. in Statistics", "MBA", "B.A. in History",
    "Ph.D. in Physics", "M.A. in Psychology", "B.S. in Mechanical Engineering", "B.S. in Biology",
    "M.S. in Data Science",
];
const COMPANY_WORDS: &[&str] = &["Systems", "Analytics", "Labs", "Technologies", "Partners", "Solutions", "Dynamics"];
const POSITIONS: &[&str] = &[
    "Software Engineer", "Data Analyst", "Project Manager", "Marketing Associate", "Sales Representative",
    "Product Designer", "Research Assistant", "Operations Lead", "Financial Analyst", "Support Specialist",
];
const BULLETS: &[&str] = &[
    "Led a team of five engineers", "Reduced costs by 12 percent", "Built reporting dashboards",
    "Managed vendor relationships", "Automated weekly data pipelines", "Presented results to leadership",
    "Organized community events", "Wrote technical documentation", "Mentored new team members",
    "Improved onboarding workflow", "Designed customer surveys", "Shipped a mobile application",
];
const SKILLS: &[&str] = &["Python, SQL", "Excel, Tableau", "Spanish, French", "Java, Go", "Figma, Sketch", "R, SAS"];
const MONTHS: &[&str] = &["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];
/// Optional section titles; the same pool supplies the regular-weight
/// sub-headers that imitate them.
const OPTIONAL_SECTIONS: &[&str] = &["PROJECTS", "AWARDS", "CERTIFICATIONS", "LANGUAGES", "VOLUNTEERING", "PUBLICATIONS"];

// ---------------------------------------------------------------------------
// Specs

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueMode {
    /// Cue left of its value on the same line (`Total:  $70.00`).
    Row,
    /// Cue is a column header above its value.
    Column,
}

/// Layout parameters of one invoice template. Coordinates are page units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvoiceTemplate {
    pub id: String,
    pub cue_mode: CueMode,
    pub seller_left: bool,
    /// Invoice number block in the top-right corner rather than below the parties.
    pub meta_top: bool,
    pub table_x: f64,
    pub totals_x: f64,
    /// One of [`TOTAL_CUES`].
    pub total_cue: String,
    pub title: String,
    pub body_font: String,
    pub cue_font: String,
    pub font_size: f64,
}

impl InvoiceTemplate {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("template {}: {m}", self.id)));
        if self.id.is_empty() || self.title.is_empty() || self.body_font.is_empty() || self.cue_font.is_empty() {
            return bad("empty field");
        }
        if self.body_font == self.cue_font {
            return bad("cue font must differ from body font");
        }
        if !TOTAL_CUES.contains(&self.total_cue.as_str()) {
            return bad("unknown total cue");
        }
        if self.font_size != 10.0 {
            return bad("font_size must be 10");
        }
        for (name, v, lo, hi) in [("table_x", self.table_x, 24.0, 72.0), ("totals_x", self.totals_x, 300.0, 380.0)] {
            if !(lo..=hi).contains(&v) || v % 4.0 != 0.0 {
                return Err(Error::Config(format!(
                    "template {}: {name} must be a multiple of 4 in [{lo}, {hi}]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Twelve invoice templates; `T10` and `T11` are the default held-out pair.
pub fn default_invoice_templates() -> Vec<InvoiceTemplate> {
    let fam = [("Helvetica", "Helvetica-Bold"), ("Times-Roman", "Times-Bold"), ("Courier", "Courier-Bold")];
    let rows: [(CueMode, bool, bool, f64, f64, &str, &str, usize); 12] = [
        (CueMode::Row, true, false, 40.0, 340.0, "Total", "INVOICE", 0),
        (CueMode::Column, true, true, 40.0, 320.0, "Total", "INVOICE", 1),
        (CueMode::Row, false, true, 48.0, 360.0, "Amount Due", "Invoice", 2),
        (CueMode::Column, false, false, 56.0, 340.0, "Amount Due", "BILL", 0),
        (CueMode::Row, true, true, 56.0, 320.0, "Total Due", "Tax Invoice", 1),
        (CueMode::Column, true, false, 48.0, 360.0, "Total Due", "INVOICE", 2),
        (CueMode::Row, false, false, 40.0, 320.0, "Total", "Bill", 1),
        (CueMode::Column, false, true, 48.0, 340.0, "Total", "Invoice", 0),
        (CueMode::Row, true, false, 64.0, 360.0, "Amount Due", "INVOICE", 2),
        (CueMode::Column, true, true, 64.0, 360.0, "Amount Due", "Tax Invoice", 1),
        (CueMode::Column, false, true, 32.0, 380.0, "Total Due", "Statement", 2),
        (CueMode::Row, false, false, 32.0, 300.0, "Amount Due", "Statement", 1),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, &(cue_mode, seller_left, meta_top, table_x, totals_x, cue, title, f))| InvoiceTemplate {
            id: format!("T{i}"),
            cue_mode,
            seller_left,
            meta_top,
            table_x,
            totals_x,
            total_cue: cue.into(),
            title: title.into(),
            body_font: fam[f].0.into(),
            cue_font: fam[f].1.into(),
            font_size: 10.0,
        })
        .collect()
}

pub fn default_unseen_templates() -> Vec<String> {
    vec!["T10".into(), "T11".into()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub num_docs: usize,
    pub seed: u64,
    pub templates: Vec<InvoiceTemplate>,
    /// Byte-identical price boxes per invoice, exactly one of them gold (2 or 3).
    pub identical_candidates: usize,
    /// Share of resumes using the two-column layout.
    pub double_column_fraction: f64,
    /// Upper bound on regular-weight sub-headers per resume.
    pub max_distractor_headers: usize,
}

impl GeneratorSpec {
    pub fn invoices(num_docs: usize, seed: u64) -> Self {
        GeneratorSpec {
            num_docs,
            seed,
            templates: default_invoice_templates(),
            identical_candidates: 3,
            double_column_fraction: 0.5,
            max_distractor_headers: 2,
        }
    }

    pub fn resumes(num_docs: usize, seed: u64) -> Self {
        Self::invoices(num_docs, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::Config("generator needs at least one template".into()));
        }
        let mut ids = BTreeSet::new();
        for t in &self.templates {
            t.validate()?;
            if !ids.insert(&t.id) {
                return Err(Error::Config(format!("duplicate template id {}", t.id)));
            }
        }
        if !(2..=3).contains(&self.identical_candidates) {
            return Err(Error::Config("identical_candidates must be 2 or 3".into()));
        }
        if !(0.0..=1.0).contains(&self.double_column_fraction) {
            return Err(Error::Config("double_column_fraction must lie in [0, 1]".into()));
        }
        if self.max_distractor_headers > 3 {
            return Err(Error::Config("max_distractor_headers must be at most 3".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Page builder

fn round4(v: f64) -> f64 {
    ((v / 4.0).round() * 4.0).max(4.0)
}

fn text_width(text: &str, size: f64) -> f64 {
    round4(text.chars().count().max(1) as f64 * size * 0.5)
}

fn text_height(size: f64) -> f64 {
    round4(size * 1.2)
}

#[derive(Default)]
struct Builder {
    boxes: Vec<TextBox>,
}

impl Builder {
    fn put(&mut self, text: &str, x0: f64, y0: f64, font: &str, size: f64, entity: Option<&str>) -> usize {
        let spans = entity
            .map(|e| {
                vec![Span {
                    entity_type: e.to_string(),
                    char_start: 0,
                    char_end: text.chars().count(),
                }]
            })
            .unwrap_or_default();
        let id = self.boxes.len();
        self.boxes.push(TextBox {
            box_id: id,
            text: text.to_string(),
            x0,
            y0,
            x1: x0 + text_width(text, size),
            y1: y0 + text_height(size),
            font_name: font.to_string(),
            font_size: size,
            spans,
        });
        id
    }

    fn page(self) -> Page {
        Page {
            page_no: 0,
            width: PAGE_WIDTH,
            height: PAGE_HEIGHT,
            boxes: self.boxes,
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty lexicon")
}

fn street(rng: &mut ChaCha8Rng) -> String {
    format!("{} {} {}", rng.random_range(10..9999), pick(rng, STREETS), pick(rng, STREET_KINDS))
}

fn city(rng: &mut ChaCha8Rng) -> String {
    format!("{} {:05}", pick(rng, CITIES), rng.random_range(10000..99999))
}

fn money(cents: u64) -> String {
    format!("${}.{:02}", cents / 100, cents % 100)
}

// ---------------------------------------------------------------------------
// Invoices

pub fn seller_name(rng: &mut ChaCha8Rng) -> String {
    format!("{} {} {}", pick(rng, BRANDS), pick(rng, INDUSTRIES), pick(rng, SUFFIXES))
}

pub fn purchaser_name(rng: &mut ChaCha8Rng) -> String {
    format!("{} {}", pick(rng, PLACES), pick(rng, INSTITUTIONS))
}

/// Cue and value position of a key/value field.
fn field(b: &mut Builder, mode: CueMode, cue: &str, value: &str, x: f64, y: f64, value_dx: f64, t: &InvoiceTemplate, entity: Option<&str>) -> (usize, usize) {
    let s = t.font_size;
    match mode {
        CueMode::Row => {
            let c = b.put(&format!("{cue}:"), x, y, &t.cue_font, s, None);
            let v = b.put(value, x + value_dx, y, &t.body_font, s, entity);
            (c, v)
        }
        CueMode::Column => {
            let c = b.put(&cue.to_uppercase(), x, y, &t.cue_font, s, None);
            let v = b.put(value, x, y + 16.0, &t.body_font, s, entity);
            (c, v)
        }
    }
}

fn invoice_page(t: &InvoiceTemplate, candidates: usize, rng: &mut ChaCha8Rng) -> Page {
    let mut b = Builder::default();
    let s = t.font_size;
    let dx = 4.0 * rng.random_range(0..4) as f64;
    let dy = 4.0 * rng.random_range(0..3) as f64;
    let mode = t.cue_mode;

    b.put(&t.title, 40.0 + dx, 40.0 + dy, &t.cue_font, 20.0, None);

    // Parties.
    let (sx, px) = if t.seller_left { (40.0, 324.0) } else { (324.0, 40.0) };
    let y = 88.0 + dy;
    let seller = seller_name(rng);
    let purchaser = purchaser_name(rng);
    let blocks = [
        ("From", seller, sx + dx, "SellerName", true),
        ("Bill To", purchaser, px + dx, "PurchaserName", false),
    ];
    for (cue, name, x, ent, is_seller) in blocks {
        let (vx, vy) = match mode {
            CueMode::Row => (x + 64.0, y),
            CueMode::Column => (x, y + 16.0),
        };
        field(&mut b, mode, cue, &name, x, y, 64.0, t, Some(ent));
        b.put(&street(rng), vx, vy + 16.0, &t.body_font, s, None);
        b.put(&city(rng), vx, vy + 32.0, &t.body_font, s, None);
        if is_seller {
            b.put(&format!("Tel 555-{:04}", rng.random_range(0..10000)), vx, vy + 48.0, &t.body_font, s, None);
        }
    }

    // Invoice number and date.
    let inv = format!("INV {}", rng.random_range(10000..100000));
    let date = format!("{:02}/{:02}/{}", rng.random_range(1..13), rng.random_range(1..29), rng.random_range(2015..2025));
    if t.meta_top {
        let (mx, my) = (384.0, 40.0 + dy);
        match mode {
            CueMode::Row => {
                field(&mut b, mode, "Invoice No", &inv, mx, my - 24.0, 80.0, t, Some("InvoiceNo"));
                field(&mut b, mode, "Date", &date, mx, my - 8.0, 80.0, t, None);
            }
            CueMode::Column => {
                field(&mut b, mode, "Invoice No", &inv, mx, my - 16.0, 0.0, t, Some("InvoiceNo"));
                field(&mut b, mode, "Date", &date, mx + 100.0, my - 16.0, 0.0, t, None);
            }
        }
    } else {
        let my = 180.0 + dy;
        match mode {
            CueMode::Row => {
                field(&mut b, mode, "Invoice No", &inv, 40.0 + dx, my, 80.0, t, Some("InvoiceNo"));
                field(&mut b, mode, "Date", &date, 260.0 + dx, my, 40.0, t, None);
            }
            CueMode::Column => {
                field(&mut b, mode, "Invoice No", &inv, 40.0 + dx, my, 0.0, t, Some("InvoiceNo"));
                field(&mut b, mode, "Date", &date, 200.0 + dx, my, 0.0, t, None);
            }
        }
    }

    // Single-line item table: the line price equals the subtotal and total.
    let ty = 236.0 + dy;
    let tx = t.table_x;
    let qty = rng.random_range(2..10u64);
    let unit = rng.random_range(500..90000u64);
    let line = money(unit * qty);
    for (h, x) in [("Description", tx), ("Qty", tx + 240.0), ("Unit Price", tx + 300.0), (pick(rng, LINE_HEADERS), tx + 388.0)] {
        b.put(h, x, ty, &t.cue_font, s, None);
    }
    let ry = ty + 20.0;
    b.put(pick(rng, ITEMS), tx, ry, &t.body_font, s, None);
    b.put(&qty.to_string(), tx + 240.0, ry, &t.body_font, s, None);
    b.put(&money(unit), tx + 300.0, ry, &t.body_font, s, None);
    b.put(&line, tx + 388.0, ry, &t.body_font, s, None);

    // Totals.
    let sy = ty + 68.0;
    let x = t.totals_x;
    match mode {
        CueMode::Row => {
            let mut yy = sy;
            if candidates >= 3 {
                field(&mut b, mode, "Subtotal", &line, x, yy, 100.0, t, None);
                yy += 20.0;
            }
            field(&mut b, mode, &t.total_cue, &line, x, yy, 100.0, t, Some("Amount"));
        }
        CueMode::Column => {
            if candidates >= 3 {
                field(&mut b, mode, "Subtotal", &line, x, sy, 0.0, t, None);
            }
            field(&mut b, mode, &t.total_cue, &line, x + 112.0, sy, 0.0, t, Some("Amount"));
        }
    }

    let fy = 700.0 + dy;
    let mut footers = FOOTERS.to_vec();
    footers.shuffle(rng);
    for (k, f) in footers.iter().take(2).enumerate() {
        b.put(f, 40.0 + dx, fy + 16.0 * k as f64, &t.body_font, s, None);
    }
    b.page()
}

/// One labelled single-page invoice per document; template `i mod n`.
pub fn gen_invoices(spec: &GeneratorSpec) -> Result<Vec<Document>> {
    spec.validate()?;
    Ok((0..spec.num_docs)
        .into_par_iter()
        .map(|i| {
            let t = &spec.templates[i % spec.templates.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[1, i as u64]));
            Document {
                doc_id: format!("inv-{i:05}"),
                template_id: t.id.clone(),
                pages: vec![invoice_page(t, spec.identical_candidates, &mut rng)],
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Resumes

const NAME_FONT: (&str, f64) = ("Helvetica-Bold", 18.0);
const TITLE_FONT: (&str, f64) = ("Helvetica-Bold", 13.0);
const SUBHEADER_FONT: (&str, f64) = ("Helvetica", 13.0);
const BODY_FONT: (&str, f64) = ("Helvetica", 10.0);
const DATE_FONT: (&str, f64) = ("Helvetica-Oblique", 10.0);

fn date_range(rng: &mut ChaCha8Rng) -> String {
    let y0 = rng.random_range(2000..2021);
    let start = format!("{} {y0}", pick(rng, MONTHS));
    if rng.random_bool(0.2) {
        format!("{start} - Present")
    } else {
        format!("{start} - {} {}", pick(rng, MONTHS), y0 + rng.random_range(1..5))
    }
}

fn school(rng: &mut ChaCha8Rng) -> String {
    pick(rng, SCHOOL_FORMS).replace("{}", pick(rng, PLACES))
}

fn company(rng: &mut ChaCha8Rng) -> String {
    format!("{} {}", pick(rng, BRANDS), pick(rng, COMPANY_WORDS))
}

struct ResumeCursor {
    b: Builder,
    /// Left edge of section titles in the main column.
    x: f64,
    y: f64,
    dates: usize,
}

impl ResumeCursor {
    fn title(&mut self, text: &str, font: (&str, f64), entity: Option<&str>) {
        self.b.put(text, self.x, self.y, font.0, font.1, entity);
        self.y += 24.0;
    }

    fn line(&mut self, text: &str, indent: f64, entity: Option<&str>) {
        self.b.put(text, self.x + indent, self.y, BODY_FONT.0, BODY_FONT.1, entity);
        self.y += 16.0;
    }

    /// Date range on the current line, shifted off the 4-unit grid and to a
    /// distinct column so it shares no edge coordinate with any other box.
    fn date(&mut self, text: &str, entity: &str) {
        let x0 = 446.0 + 8.0 * self.dates as f64;
        self.dates += 1;
        self.b.put(text, x0, self.y + 2.0, DATE_FONT.0, DATE_FONT.1, Some(entity));
    }

    fn bullets(&mut self, n: usize, rng: &mut ChaCha8Rng) {
        let mut pool = BULLETS.to_vec();
        pool.shuffle(rng);
        for t in pool.iter().take(n) {
            self.line(t, 24.0, None);
        }
    }
}

fn resume_page(double: bool, max_distractors: usize, rng: &mut ChaCha8Rng) -> Page {
    let first = pick(rng, FIRST_NAMES);
    let last = pick(rng, LAST_NAMES);
    let email = format!("{}.{}@{}", first.to_lowercase(), last.to_lowercase(), pick(rng, MAIL_DOMAINS));
    let phone = format!("({}) {}-{:04}", rng.random_range(200..1000), rng.random_range(200..1000), rng.random_range(0..10000));
    let address = format!("{} {} {}, {}", rng.random_range(1..999), pick(rng, STREETS), pick(rng, STREET_KINDS), pick(rng, PLACES));

    let mut c = ResumeCursor {
        b: Builder::default(),
        x: if double { 220.0 } else { 48.0 },
        y: 104.0,
        dates: 0,
    };
    c.b.put(&format!("{first} {last}"), 40.0, 40.0, NAME_FONT.0, NAME_FONT.1, Some("Name"));
    if double {
        // Sidebar title shares its top with the first main-column title.
        c.b.put("CONTACT", 40.0, 104.0, TITLE_FONT.0, TITLE_FONT.1, Some("SectionTitle"));
        let mut sy = 128.0;
        for (text, ent) in [(email.as_str(), Some("Email")), (phone.as_str(), Some("Phone")), (address.as_str(), Some("Address"))] {
            c.b.put(text, 40.0, sy, BODY_FONT.0, BODY_FONT.1, ent);
            sy += 16.0;
        }
        let mut skills = SKILLS.to_vec();
        skills.shuffle(rng);
        for s in skills.iter().take(2) {
            c.b.put(s, 40.0, sy, BODY_FONT.0, BODY_FONT.1, None);
            sy += 16.0;
        }
    } else {
        c.b.put(&email, 48.0, 68.0, BODY_FONT.0, BODY_FONT.1, Some("Email"));
        c.b.put(&phone, 300.0, 68.0, BODY_FONT.0, BODY_FONT.1, Some("Phone"));
        c.b.put(&address, 48.0, 84.0, BODY_FONT.0, BODY_FONT.1, Some("Address"));
    }

    let mut optional = OPTIONAL_SECTIONS.to_vec();
    optional.shuffle(rng);
    let n_real = rng.random_range(1..=2);
    let n_fake = if max_distractors == 0 { 0 } else { rng.random_range(1..=max_distractors) };
    let (real, rest) = optional.split_at(n_real);
    let fake = &rest[..n_fake.min(rest.len())];

    let education_first = rng.random_bool(0.5);
    for section in 0..2 {
        let is_edu = (section == 0) == education_first;
        if is_edu {
            c.title("EDUCATION", TITLE_FONT, Some("SectionTitle"));
            for _ in 0..rng.random_range(1..=2) {
                let d = date_range(rng);
                c.date(&d, "SchoolDuration");
                c.line(&school(rng), 12.0, Some("School"));
                c.line(pick(rng, DEGREES), 12.0, Some("Degree"));
                c.y += 4.0;
            }
        } else {
            c.title("WORK EXPERIENCE", TITLE_FONT, Some("SectionTitle"));
            for _ in 0..rng.random_range(2..=3) {
                let d = date_range(rng);
                c.date(&d, "CompanyDuration");
                c.line(&company(rng), 12.0, Some("Company"));
                c.line(pick(rng, POSITIONS), 12.0, Some("Position"));
                c.bullets(1, rng);
                c.y += 4.0;
            }
            // Sub-headers after the last job: same size and text pool as the
            // optional section titles, regular weight, not labelled.
            for f in fake {
                c.title(f, SUBHEADER_FONT, None);
                let n = rng.random_range(1..=2);
                c.bullets(n, rng);
                c.y += 4.0;
            }
        }
        c.y += 8.0;
    }
    for r in real {
        c.title(r, TITLE_FONT, Some("SectionTitle"));
        let n = rng.random_range(1..=2);
        c.bullets(n, rng);
        c.y += 12.0;
    }
    c.b.page()
}

/// Resumes alternate deterministically between layouts by a per-document
/// draw; template ids are `R-single` and `R-double`.
pub fn gen_resumes(spec: &GeneratorSpec) -> Result<Vec<Document>> {
    spec.validate()?;
    Ok((0..spec.num_docs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[2, i as u64]));
            let double = rng.random_bool(spec.double_column_fraction);
            Document {
                doc_id: format!("cv-{i:05}"),
                template_id: if double { "R-double" } else { "R-single" }.into(),
                pages: vec![resume_page(double, spec.max_distractor_headers, &mut rng)],
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Splits

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    /// Of seen-template documents.
    pub labeled: f64,
    pub unlabeled: f64,
    /// Of unseen-template documents, moved to the few-shot pool.
    pub few_shot: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            labeled: 0.2,
            unlabeled: 0.8,
            few_shot: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusSplit {
    pub labeled_seen: Vec<Document>,
    pub labeled_unseen: Vec<Document>,
    /// Labels removed.
    pub unlabeled: Vec<Document>,
    pub few_shot: Vec<Document>,
}

impl CorpusSplit {
    /// `split name -> doc ids`.
    pub fn manifest(&self) -> BTreeMap<String, Vec<String>> {
        let ids = |d: &[Document]| d.iter().map(|d| d.doc_id.clone()).collect::<Vec<_>>();
        BTreeMap::from([
            ("labeled_seen".to_string(), ids(&self.labeled_seen)),
            ("labeled_unseen".to_string(), ids(&self.labeled_unseen)),
            ("unlabeled".to_string(), ids(&self.unlabeled)),
            ("few_shot".to_string(), ids(&self.few_shot)),
        ])
    }
}

pub fn strip_labels(doc: &Document) -> Document {
    let mut d = doc.clone();
    for p in &mut d.pages {
        for b in &mut p.boxes {
            b.spans.clear();
        }
    }
    d
}

/// Unseen-template documents go to the unseen test set or the few-shot pool;
/// seen-template documents are shuffled and cut into labelled and unlabelled
/// shares. Documents beyond both shares are dropped.
pub fn split_corpus(docs: &[Document], unseen: &[String], fractions: &SplitFractions, seed: u64) -> Result<CorpusSplit> {
    let f = fractions;
    if [f.labeled, f.unlabeled, f.few_shot].iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Config("split fractions must lie in [0, 1]".into()));
    }
    if f.labeled + f.unlabeled > 1.0 + 1e-9 {
        return Err(Error::Config(format!(
            "labeled + unlabeled fractions sum to {} > 1",
            f.labeled + f.unlabeled
        )));
    }
    let present: BTreeSet<&str> = docs.iter().map(|d| d.template_id.as_str()).collect();
    if let Some(missing) = unseen.iter().find(|u| !present.contains(u.as_str())) {
        return Err(Error::Config(format!("unseen template {missing} not in corpus")));
    }
    let (mut hidden, mut seen): (Vec<Document>, Vec<Document>) = docs.iter().cloned().partition(|d| unseen.contains(&d.template_id));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5b]));
    hidden.shuffle(&mut rng);
    seen.shuffle(&mut rng);
    let n_few = (f.few_shot * hidden.len() as f64).round() as usize;
    let labeled_unseen = hidden.split_off(n_few);
    let n_lab = (f.labeled * seen.len() as f64).round() as usize;
    let n_unl = ((f.unlabeled * seen.len() as f64).round() as usize).min(seen.len() - n_lab);
    let mut rest = seen.split_off(n_lab);
    rest.truncate(n_unl);
    Ok(CorpusSplit {
        labeled_seen: seen,
        labeled_unseen,
        unlabeled: rest.iter().map(strip_labels).collect(),
        few_shot: hidden,
    })
}

// ---------------------------------------------------------------------------
// Oracles

fn entity_of(b: &TextBox) -> Option<&str> {
    b.spans.first().map(|s| s.entity_type.as_str())
}

/// The gold Amount box of a page and how many boxes share its exact text and
/// font (itself included). A reader of box content alone cannot pick the
/// gold box among them with probability above `1 / count`.
pub fn text_only_amount_candidates(page: &Page) -> Option<(usize, usize)> {
    let gold = page.boxes.iter().find(|b| entity_of(b) == Some("Amount"))?;
    let n = page
        .boxes
        .iter()
        .filter(|b| b.text == gold.text && b.font_name == gold.font_name && b.font_size == gold.font_size)
        .count();
    Some((gold.box_id, n))
}

fn is_total_cue(text: &str) -> Option<CueMode> {
    let t = text.trim();
    if let Some(stem) = t.strip_suffix(':') {
        return TOTAL_CUES.contains(&stem).then_some(CueMode::Row);
    }
    TOTAL_CUES
        .iter()
        .any(|c| c.to_uppercase() == t)
        .then_some(CueMode::Column)
}

/// Rule reader using layout only: the Amount is the adjacency neighbour to
/// the right of a row cue or below a column cue.
pub fn cue_rule_amount(page: &Page, eps_align: f64) -> Option<usize> {
    let graph = build_adjacency_edges(page, eps_align);
    let by_id: BTreeMap<usize, &TextBox> = page.boxes.iter().map(|b| (b.box_id, b)).collect();
    for e in &graph.edges {
        for (c, v) in [(e.i, e.j), (e.j, e.i)] {
            let (cb, vb) = (by_id[&c], by_id[&v]);
            let want = match is_total_cue(&cb.text) {
                Some(CueMode::Row) => (Axis::Horizontal, SprcLabel::LeftRight),
                Some(CueMode::Column) => (Axis::Vertical, SprcLabel::UpDown),
                None => continue,
            };
            if alignment(cb, vb, eps_align) == Some(want) {
                return Some(v);
            }
        }
    }
    None
}
