//! Seeded generators for test corpora.
//!
//! [`random_annotation`] draws arbitrary valid nestings over nonsense words.
//! [`synthetic_corpus`] writes news-style sentences from a small phrase
//! grammar, so words repeat often enough for the builtin backends to learn
//! something.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{Label, LabelSet, NestedAnnotation, Schema, Span};
use crate::seed::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomShape {
    pub max_tokens: usize,
    pub max_depth: usize,
    /// Chance that a free position opens a span.
    pub span_rate: f64,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape {
            max_tokens: 40,
            max_depth: 3,
            span_rate: 0.25,
        }
    }
}

const WORDS: [&str; 12] = ["a", "b", "c", "d", "e", "f", "g", "h", "the", "of", ",", "."];

/// A random valid annotation: 1..=`max_tokens` tokens, spans nested no
/// deeper than `max_depth`, labels from `labels`.
pub fn random_annotation<R: Rng + ?Sized>(
    id: &str,
    labels: &LabelSet,
    shape: &RandomShape,
    schema: &Schema,
    rng: &mut R,
) -> NestedAnnotation {
    let n = rng.gen_range(1..=shape.max_tokens.max(1));
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    let labels: Vec<&Label> = labels.iter().collect();
    let mut spans = Vec::new();
    fill_level(0, n, 0, &labels, shape, rng, &mut spans);
    NestedAnnotation::new(id, &words, spans, schema).expect("generated spans are valid")
}

fn fill_level<R: Rng + ?Sized>(
    lo: usize,
    hi: usize,
    depth: usize,
    labels: &[&Label],
    shape: &RandomShape,
    rng: &mut R,
    out: &mut Vec<Span>,
) {
    if depth >= shape.max_depth || labels.is_empty() {
        return;
    }
    let mut i = lo;
    while i < hi {
        if !rng.gen_bool(shape.span_rate) {
            i += 1;
            continue;
        }
        let end = rng.gen_range(i + 1..=hi.min(i + 8));
        let label = *labels.choose(rng).unwrap();
        let whole = (lo, hi) == (i, end) && depth > 0;
        // a child may share its parent's extent, but not its label
        let clash = whole && out.iter().any(|s| s.start == i && s.end == end && &s.label == label);
        if !clash {
            out.push(Span::new(i, end, label.clone()));
            fill_level(i, end, depth + 1, labels, shape, rng, out);
        }
        i = end;
    }
}

enum Piece {
    Word(&'static str),
    Entity(&'static str, Vec<Piece>),
}

use Piece::{Entity, Word};

fn words(text: &'static str) -> Vec<Piece> {
    text.split(' ').map(Word).collect()
}

fn pick<R: Rng + ?Sized>(rng: &mut R, options: &[&'static str]) -> &'static str {
    options.choose(rng).unwrap()
}

const COUNTRIES: [&str; 10] = [
    "France", "China", "Japan", "Iraq", "Russia", "Egypt", "Brazil", "Canada", "Germany", "India",
];
const ADJECTIVES: [&str; 8] = [
    "French", "Chinese", "Japanese", "Iraqi", "Russian", "Egyptian", "German", "Indian",
];
const CITIES: [&str; 8] = [
    "Paris", "Beijing", "Tokyo", "Baghdad", "Moscow", "Cairo", "Berlin", "Delhi",
];
const NAMES: [&str; 10] = [
    "Smith", "Chen", "Tanaka", "Hassan", "Ivanov", "Silva", "Miller", "Khan", "Dubois", "Weber",
];
const FIRST: [&str; 8] = ["Anna", "John", "Wei", "Omar", "Maria", "Peter", "Yuki", "Ravi"];
const ROLES: [&str; 6] = [
    "president",
    "minister",
    "spokesman",
    "ambassador",
    "general",
    "official",
];
const REGIONS: [&str; 5] = ["Middle East", "Pacific", "Gulf", "Alps", "Sahara"];
const AGENCIES: [&str; 5] = ["Defense", "Foreign Affairs", "Energy", "Trade", "Health"];
const COMPANIES: [&str; 5] = ["Boeing", "Airbus", "Reuters", "Siemens", "Toyota"];
const WEAPONS: [&str; 4] = ["missiles", "rifles", "tanks", "warheads"];
const VEHICLES: [&str; 4] = ["jet", "helicopter", "truck", "ship"];
const VERBS: [&str; 6] = ["met", "criticized", "praised", "visited", "called", "warned"];
const DAYS: [&str; 5] = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"];

fn gpe<R: Rng + ?Sized>(rng: &mut R) -> Piece {
    if rng.gen_bool(0.7) {
        Entity("GPE", vec![Word(pick(rng, &COUNTRIES))])
    } else {
        Entity("GPE", vec![Word(pick(rng, &CITIES))])
    }
}

fn gpe_adj<R: Rng + ?Sized>(rng: &mut R) -> Piece {
    Entity("GPE", vec![Word(pick(rng, &ADJECTIVES))])
}

fn org<R: Rng + ?Sized>(rng: &mut R, depth: usize) -> Piece {
    match rng.gen_range(0..3) {
        0 if depth > 1 => {
            let mut p = words("the Ministry of");
            p.extend(words(pick(rng, &AGENCIES)));
            p.push(Word("of"));
            p.push(gpe(rng));
            Entity("ORG", p)
        }
        1 => Entity("ORG", vec![Word(pick(rng, &COMPANIES))]),
        _ if depth > 1 => Entity("ORG", vec![Word("the"), gpe_adj(rng), Word("army")]),
        _ => Entity("ORG", vec![Word("the"), Word("United"), Word("Nations")]),
    }
}

fn per<R: Rng + ?Sized>(rng: &mut R, depth: usize) -> Piece {
    match rng.gen_range(0..4) {
        0 if depth > 2 => {
            // "the Iraqi army spokesman Omar Khan": depth 3 on "Iraqi"
            let mut p = vec![Word("the"), org(rng, 2), Word(pick(rng, &ROLES))];
            p.push(per(rng, 1));
            Entity("PER", p)
        }
        1 if depth > 1 => Entity("PER", vec![Word("the"), gpe_adj(rng), Word(pick(rng, &ROLES))]),
        2 => Entity("PER", vec![Word(pick(rng, &FIRST)), Word(pick(rng, &NAMES))]),
        _ => Entity("PER", vec![Word(pick(rng, &NAMES))]),
    }
}

fn fac<R: Rng + ?Sized>(rng: &mut R) -> Piece {
    match rng.gen_range(0..3) {
        0 => Entity("FAC", vec![Word("the"), gpe_adj(rng), Word("embassy")]),
        1 => Entity(
            "FAC",
            vec![Entity("GPE", vec![Word(pick(rng, &CITIES))]), Word("airport")],
        ),
        _ => Entity("FAC", words("the White House")),
    }
}

fn loc<R: Rng + ?Sized>(rng: &mut R) -> Piece {
    let mut p = vec![Word("the")];
    p.extend(words(pick(rng, &REGIONS)));
    Entity("LOC", p)
}

fn wea<R: Rng + ?Sized>(rng: &mut R) -> Piece {
    Entity("WEA", vec![gpe_adj(rng), Word(pick(rng, &WEAPONS))])
}

fn veh<R: Rng + ?Sized>(rng: &mut R) -> Piece {
    Entity("VEH", vec![Word("a"), org(rng, 1), Word(pick(rng, &VEHICLES))])
}

fn sentence<R: Rng + ?Sized>(rng: &mut R) -> Vec<Piece> {
    let day = pick(rng, &DAYS);
    match rng.gen_range(0..8) {
        0 => {
            let mut s = vec![per(rng, 3), Word(pick(rng, &VERBS)), per(rng, 2), Word("at"), fac(rng)];
            s.extend(words("on"));
            s.push(Word(day));
            s
        }
        1 => vec![
            org(rng, 2),
            Word("said"),
            Word("it"),
            Word("sent"),
            wea(rng),
            Word("to"),
            loc(rng),
        ],
        2 => {
            let mut s = vec![Word("officials"), Word("in"), gpe(rng), Word("said"), per(rng, 2)];
            s.extend(words("arrived by"));
            s.push(veh(rng));
            s
        }
        3 => vec![
            per(rng, 2),
            Word("told"),
            org(rng, 2),
            Word("that"),
            gpe(rng),
            Word("would"),
            Word("buy"),
            wea(rng),
        ],
        4 => {
            let mut s = words("protesters gathered outside");
            s.push(fac(rng));
            s.extend(words("in"));
            s.push(gpe(rng));
            s.push(Word("on"));
            s.push(Word(day));
            s
        }
        5 => {
            let mut s = words("the talks in");
            s.push(gpe(rng));
            s.extend(words("ended without a deal , the"));
            s.push(Word(pick(rng, &ROLES)));
            s.push(Word("said"));
            s
        }
        6 => vec![
            per(rng, 3),
            Word("flew"),
            Word("to"),
            loc(rng),
            Word("aboard"),
            veh(rng),
        ],
        _ => {
            let mut s = words("talks between");
            s.push(gpe(rng));
            s.push(Word("and"));
            s.push(gpe(rng));
            s.extend(words("will resume in"));
            s.push(Entity("GPE", vec![Word(pick(rng, &CITIES))]));
            s
        }
    }
}

fn flatten(pieces: &[Piece], tokens: &mut Vec<&'static str>, spans: &mut Vec<(usize, usize, &'static str)>) {
    for piece in pieces {
        match piece {
            Word(w) => tokens.push(w),
            Entity(label, inner) => {
                let start = tokens.len();
                flatten(inner, tokens, spans);
                spans.push((start, tokens.len(), label));
            }
        }
    }
}

/// `n` news-style sentences with ids `syn-0000`, `syn-0001`, ... Every
/// `deep_every`-th sentence (if non-zero) is wrapped so some token sits
/// four entities deep.
pub fn synthetic_corpus(n: usize, seed: u64, deep_every: usize) -> Vec<NestedAnnotation> {
    let schema = Schema::default().with_max_depth(None);
    (0..n)
        .map(|i| {
            let id = format!("syn-{i:04}");
            let mut rng = stream_rng(seed, &[&id, "synth"]);
            let mut pieces = sentence(&mut rng);
            if deep_every > 0 && i % deep_every == deep_every - 1 {
                let army = Entity("ORG", vec![Word("the"), gpe_adj(&mut rng), Word("army")]);
                let inner = Entity("PER", vec![Word("the"), army, Word("spokesman"), per(&mut rng, 1)]);
                pieces = vec![
                    Entity("PER", vec![inner, Word("himself")]),
                    Word("said"),
                    Word("nothing"),
                ];
            }
            pieces.push(Word("."));
            let mut tokens = Vec::new();
            let mut spans = Vec::new();
            flatten(&pieces, &mut tokens, &mut spans);
            let spans = spans
                .into_iter()
                .map(|(s, e, l)| Span::new(s, e, schema.label(l).unwrap()))
                .collect();
            NestedAnnotation::new(id, &tokens, spans, &schema).expect("grammar yields valid nestings")
        })
        .collect()
}
