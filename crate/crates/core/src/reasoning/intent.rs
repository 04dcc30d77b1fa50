//! Controlled-grammar intents.
//!
//! ```text
//! intent    := verb entity [scope] clause* [redundancy] ["." | "?"]
//! verb      := "show" | "list"
//! entity    := "racks" | "gpu racks" | "pdus" | "switches" | "servers"
//!            | "pumps" | "gpus" | "loops" | "devices"
//! scope     := "in" ("hall" | "zone") id
//! clause    := "with" cond ("and" cond)*
//! cond      := attr op value [unit]
//! op        := ">" | "<" | ">=" | "<=" | "=" | "!="
//! value     := number | 'quoted' | word
//! unit      := "°F" | "°C" | "F" | "C"          (only after "temperature")
//! redundancy:= "and missing redundant power feed"
//! ```
//!
//! Keywords are case-insensitive. `temperature` maps to `temp_f` when the
//! value carries a Fahrenheit unit and to `temp_c` otherwise. `gpu racks`
//! means racks with `accelerator = 'GPU'`. A missing redundant power feed
//! means exactly one POWERED_BY edge to a PDU.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{
    CmpOp, CountConstraint, EdgeKind, EdgePattern, Hop, NodePattern, PatternQuery, Predicate,
    Scalar,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unexpected `{token}` at position {position}: expected {expected}")]
pub struct IntentError {
    /// Character offset of the first token that could not be parsed.
    pub position: usize,
    pub token: String,
    pub expected: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeKind {
    Hall,
    Zone,
}

impl ScopeKind {
    fn label(self) -> &'static str {
        match self {
            ScopeKind::Hall => "Hall",
            ScopeKind::Zone => "Zone",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scope {
    pub kind: ScopeKind,
    pub id: String,
}

/// The parsed form of an intent, before lowering to a [`PatternQuery`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentQuery {
    pub raw: String,
    /// Node label; `None` for "devices".
    pub label: Option<String>,
    /// Predicates implied by the entity word (e.g. `accelerator = 'GPU'`).
    pub entity_predicates: Vec<Predicate>,
    pub scope: Option<Scope>,
    pub conditions: Vec<Predicate>,
    pub missing_redundant_power: bool,
}

impl IntentQuery {
    pub fn to_pattern(&self) -> PatternQuery {
        let mut node = NodePattern {
            label: self.label.clone(),
            predicates: self.entity_predicates.clone(),
        };
        node.predicates.extend(self.conditions.iter().cloned());
        let hops = self
            .scope
            .iter()
            .map(|s| Hop {
                edge: EdgePattern::new(EdgeKind::LocatedIn),
                neighbor: NodePattern::label(s.kind.label()).with(Predicate::new(
                    "name",
                    CmpOp::Eq,
                    s.id.as_str(),
                )),
            })
            .collect();
        let counts = if self.missing_redundant_power {
            vec![CountConstraint {
                edge: EdgePattern::new(EdgeKind::PoweredBy),
                neighbor: NodePattern::label("PDU"),
                op: CmpOp::Eq,
                count: 1,
            }]
        } else {
            Vec::new()
        };
        PatternQuery { node, hops, counts }
    }
}

/// Entity words: (words, label, implied accelerator).
const ENTITIES: &[(&[&str], Option<&str>, Option<&str>)] = &[
    (&["racks"], Some("Rack"), None),
    (&["gpu", "racks"], Some("Rack"), Some("GPU")),
    (&["pdus"], Some("PDU"), None),
    (&["switches"], Some("Switch"), None),
    (&["servers"], Some("Server"), None),
    (&["pumps"], Some("Pump"), None),
    (&["gpus"], Some("GPU"), None),
    (&["loops"], Some("CoolantLoop"), None),
    (&["devices"], None, None),
];

const RESERVED: &[&str] = &["show", "list", "in", "with", "and", "missing"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Fahrenheit,
    Celsius,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Number(String),
    Quoted(String),
    Op(CmpOp),
    Unit(Unit),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
    text: String,
}

fn lex(text: &str) -> Result<Vec<Token>, IntentError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos: usize, expected: &'static str| {
        let token: String = chars[pos..]
            .iter()
            .take_while(|c| !c.is_whitespace())
            .collect();
        IntentError {
            position: pos,
            token,
            expected,
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '-')
            {
                i += 1;
            }
            Tok::Word(
                chars[start..i]
                    .iter()
                    .collect::<String>()
                    .to_ascii_lowercase(),
            )
        } else if c.is_ascii_digit()
            || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let number: String = chars[start..i].iter().collect();
            out.push(Token {
                tok: Tok::Number(number.clone()),
                pos: start,
                text: number,
            });
            // An attached unit ("80°F", "80F") is lexed as its own token.
            if i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
                && !unit_follows(&chars, i)
            {
                return Err(err(start, "a number"));
            }
            continue;
        } else if c == '°' {
            let unit = match chars.get(i + 1).map(|u| u.to_ascii_uppercase()) {
                Some('F') => Unit::Fahrenheit,
                Some('C') => Unit::Celsius,
                _ => return Err(err(start, "°F or °C")),
            };
            i += 2;
            Tok::Unit(unit)
        } else if c == '\'' || c == '"' {
            let close = chars[i + 1..]
                .iter()
                .position(|&q| q == c)
                .ok_or_else(|| err(start, "a closing quote"))?;
            let inner: String = chars[i + 1..i + 1 + close].iter().collect();
            i += close + 2;
            Tok::Quoted(inner)
        } else if matches!(c, '>' | '<' | '=' | '!') {
            let two = chars.get(i + 1) == Some(&'=');
            let op = match (c, two) {
                ('>', true) => CmpOp::Ge,
                ('<', true) => CmpOp::Le,
                ('!', true) => CmpOp::Ne,
                ('>', false) => CmpOp::Gt,
                ('<', false) => CmpOp::Lt,
                ('=', _) => CmpOp::Eq,
                _ => return Err(err(start, "a comparison operator")),
            };
            i += if two { 2 } else { 1 };
            Tok::Op(op)
        } else if matches!(c, '.' | '?') && chars[i + 1..].iter().all(|c| c.is_whitespace()) {
            break;
        } else {
            return Err(err(start, "a word, number, quoted value or operator"));
        };
        out.push(Token {
            tok,
            pos: start,
            text: chars[start..i].iter().collect(),
        });
    }
    Ok(out)
}

fn unit_follows(chars: &[char], i: usize) -> bool {
    let is_unit = chars
        .get(i)
        .is_some_and(|c| matches!(c.to_ascii_uppercase(), 'F' | 'C'));
    let ends = chars
        .get(i + 1)
        .is_none_or(|c| !(c.is_ascii_alphanumeric() || *c == '_'));
    is_unit && ends
}

struct Parser<'t> {
    tokens: &'t [Token],
    at: usize,
    end: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.at)
    }

    fn peek_word(&self, offset: usize) -> Option<&'t str> {
        match self.tokens.get(self.at + offset) {
            Some(Token {
                tok: Tok::Word(w), ..
            }) => Some(w),
            _ => None,
        }
    }

    fn fail(&self, expected: &'static str) -> IntentError {
        match self.peek() {
            Some(t) => IntentError {
                position: t.pos,
                token: t.text.clone(),
                expected,
            },
            None => IntentError {
                position: self.end,
                token: "<end>".into(),
                expected,
            },
        }
    }

    fn keyword(&mut self, kw: &str, expected: &'static str) -> Result<(), IntentError> {
        if self.peek_word(0) == Some(kw) {
            self.at += 1;
            Ok(())
        } else {
            Err(self.fail(expected))
        }
    }

    fn entity(&mut self) -> Result<(Option<String>, Vec<Predicate>), IntentError> {
        for (words, label, accel) in ENTITIES {
            if words
                .iter()
                .enumerate()
                .all(|(k, w)| self.peek_word(k) == Some(*w))
            {
                self.at += words.len();
                let preds = accel
                    .iter()
                    .map(|a| Predicate::new("accelerator", CmpOp::Eq, *a))
                    .collect();
                return Ok((label.map(str::to_string), preds));
            }
        }
        Err(self.fail("an entity such as `racks`"))
    }

    fn scope(&mut self) -> Result<Option<Scope>, IntentError> {
        if self.peek_word(0) != Some("in") {
            return Ok(None);
        }
        self.at += 1;
        let kind = match self.peek_word(0) {
            Some("hall") => ScopeKind::Hall,
            Some("zone") => ScopeKind::Zone,
            _ => return Err(self.fail("`hall` or `zone`")),
        };
        self.at += 1;
        let id = match self.peek() {
            Some(Token {
                tok: Tok::Word(_) | Tok::Number(_),
                text,
                ..
            }) if !is_reserved(text) => text.clone(),
            _ => return Err(self.fail("a hall or zone id")),
        };
        self.at += 1;
        Ok(Some(Scope { kind, id }))
    }

    fn condition(&mut self) -> Result<Predicate, IntentError> {
        let attr = match self.peek() {
            Some(Token {
                tok: Tok::Word(w), ..
            }) if is_attr_name(w) => w.clone(),
            _ => return Err(self.fail("an attribute name")),
        };
        self.at += 1;
        let op = match self.peek() {
            Some(Token {
                tok: Tok::Op(op), ..
            }) => *op,
            _ => return Err(self.fail("a comparison operator")),
        };
        self.at += 1;
        let value = match self.peek().map(|t| &t.tok) {
            Some(Tok::Number(n)) => parse_number(n),
            Some(Tok::Quoted(s)) => Scalar::Str(s.clone()),
            Some(Tok::Word(w)) if !is_reserved(w) => {
                Scalar::Str(self.peek().expect("peeked").text.clone())
            }
            _ => return Err(self.fail("a value")),
        };
        self.at += 1;
        let unit = match self.peek().map(|t| &t.tok) {
            Some(Tok::Unit(u)) => Some(*u),
            Some(Tok::Word(w)) if w == "f" => Some(Unit::Fahrenheit),
            Some(Tok::Word(w)) if w == "c" => Some(Unit::Celsius),
            _ => None,
        };
        let attr = match (attr.as_str(), unit) {
            ("temperature", Some(Unit::Fahrenheit)) => "temp_f".to_string(),
            ("temperature", _) => "temp_c".to_string(),
            (_, Some(_)) => {
                return Err(
                    self.fail("`and`, `with` or end of input (units only follow `temperature`)")
                )
            }
            _ => attr,
        };
        if unit.is_some() {
            if !matches!(value, Scalar::Int(_) | Scalar::Float(_)) {
                return Err(self.fail("a numeric temperature before the unit"));
            }
            self.at += 1;
        }
        Ok(Predicate { attr, op, value })
    }

    fn redundancy_follows(&self) -> bool {
        self.peek_word(0) == Some("and") && self.peek_word(1) == Some("missing")
    }

    fn redundancy(&mut self) -> Result<(), IntentError> {
        for (kw, expected) in [
            ("and", "`and`"),
            ("missing", "`missing`"),
            ("redundant", "`redundant`"),
            ("power", "`power`"),
            ("feed", "`feed`"),
        ] {
            self.keyword(kw, expected)?;
        }
        Ok(())
    }
}

fn is_reserved(w: &str) -> bool {
    RESERVED.contains(&w.to_ascii_lowercase().as_str())
}

fn is_attr_name(w: &str) -> bool {
    !is_reserved(w)
        && w.chars()
            .next()
            .is_some_and(|c| c.is_ascii_lowercase() || c == '_')
        && w.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn parse_number(n: &str) -> Scalar {
    match n.parse::<i64>() {
        Ok(i) => Scalar::Int(i),
        Err(_) => Scalar::Float(n.parse().expect("lexer only yields decimal numbers")),
    }
}

/// Parse `text` into its structured form, or report the first token the
/// grammar cannot accept.
pub fn parse_intent(text: &str) -> Result<IntentQuery, IntentError> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens: &tokens,
        at: 0,
        end: text.chars().count(),
    };
    match p.peek_word(0) {
        Some("show" | "list") => p.at += 1,
        _ => return Err(p.fail("`show` or `list`")),
    }
    let (label, entity_predicates) = p.entity()?;
    let scope = p.scope()?;
    let mut conditions = Vec::new();
    let mut missing_redundant_power = false;
    while p.peek().is_some() {
        if p.redundancy_follows() {
            p.redundancy()?;
            missing_redundant_power = true;
            break;
        }
        p.keyword(
            "with",
            "`with`, `and missing redundant power feed` or end of input",
        )?;
        conditions.push(p.condition()?);
        while p.peek_word(0) == Some("and") && !p.redundancy_follows() {
            p.at += 1;
            conditions.push(p.condition()?);
        }
    }
    if p.peek().is_some() {
        return Err(p.fail("end of input"));
    }
    Ok(IntentQuery {
        raw: text.to_string(),
        label,
        entity_predicates,
        scope,
        conditions,
        missing_redundant_power,
    })
}

/// Compile a controlled-grammar sentence into a pattern query.
pub fn compile_intent(text: &str) -> Result<PatternQuery, IntentError> {
    parse_intent(text).map(|q| q.to_pattern())
}

fn vary_case<R: Rng>(rng: &mut R, w: &str) -> String {
    match rng.gen_range(0..3) {
        0 => w.to_string(),
        1 => w.to_ascii_uppercase(),
        _ => {
            let mut c = w.chars();
            c.next()
                .map(|f| f.to_ascii_uppercase().to_string() + c.as_str())
                .unwrap_or_default()
        }
    }
}

const GEN_ATTRS: &[&str] = &[
    "power_kw",
    "temp_c",
    "fan_speed",
    "utilization",
    "status",
    "model",
    "row",
];
const GEN_WORDS: &[&str] = &["ok", "H100", "SpineA", "degraded", "GPU", "east-1"];
const GEN_OPS: &[(&str, CmpOp)] = &[
    (">", CmpOp::Gt),
    ("<", CmpOp::Lt),
    (">=", CmpOp::Ge),
    ("<=", CmpOp::Le),
    ("=", CmpOp::Eq),
    ("!=", CmpOp::Ne),
];

/// A random sentence of the grammar together with the structure it must
/// parse to. Used to check that the parser accepts its whole language.
pub fn generate_utterance<R: Rng>(rng: &mut R) -> (String, IntentQuery) {
    let mut parts: Vec<String> = Vec::new();
    let verb = ["show", "list"][rng.gen_range(0..2)];
    parts.push(vary_case(rng, verb));
    let (words, label, accel) = ENTITIES[rng.gen_range(0..ENTITIES.len())];
    parts.extend(words.iter().map(|w| vary_case(rng, w)));
    let entity_predicates = accel
        .iter()
        .map(|a| Predicate::new("accelerator", CmpOp::Eq, *a))
        .collect();

    let scope = rng.gen_bool(0.5).then(|| {
        let kind = if rng.gen_bool(0.5) {
            ScopeKind::Hall
        } else {
            ScopeKind::Zone
        };
        let id = if rng.gen_bool(0.5) {
            rng.gen_range(1..10).to_string()
        } else {
            format!("Z{}", rng.gen_range(1..10))
        };
        parts.push(vary_case(rng, "in"));
        parts.push(vary_case(
            rng,
            if kind == ScopeKind::Hall {
                "hall"
            } else {
                "zone"
            },
        ));
        parts.push(id.clone());
        Scope { kind, id }
    });

    let mut conditions = Vec::new();
    for _ in 0..rng.gen_range(0..3) {
        parts.push(vary_case(rng, "with"));
        for k in 0..rng.gen_range(1..3) {
            if k > 0 {
                parts.push(vary_case(rng, "and"));
            }
            let (op_text, op) = GEN_OPS[rng.gen_range(0..GEN_OPS.len())];
            let spaced = rng.gen_bool(0.5);
            if rng.gen_bool(0.25) {
                let n = rng.gen_range(-20..120i64);
                let (unit, attr) = match rng.gen_range(0..5) {
                    0 => ("°F", "temp_f"),
                    1 => (" F", "temp_f"),
                    2 => ("°C", "temp_c"),
                    3 => (" c", "temp_c"),
                    _ => ("", "temp_c"),
                };
                let sep = if spaced { " " } else { "" };
                let word = vary_case(rng, "temperature");
                parts.push(format!("{word}{sep}{op_text}{sep}{n}{unit}"));
                conditions.push(Predicate::new(attr, op, n));
                continue;
            }
            let attr = GEN_ATTRS[rng.gen_range(0..GEN_ATTRS.len())];
            let (value_text, value) = match rng.gen_range(0..4) {
                0 => {
                    let n = rng.gen_range(-100..1000i64);
                    (n.to_string(), Scalar::Int(n))
                }
                1 => {
                    let text = format!("{}.{}", rng.gen_range(0..100), rng.gen_range(1..10));
                    let v = Scalar::Float(text.parse().expect("generated decimal"));
                    (text, v)
                }
                2 => {
                    let w = GEN_WORDS[rng.gen_range(0..GEN_WORDS.len())];
                    (format!("'{w} x'"), Scalar::Str(format!("{w} x")))
                }
                _ => {
                    let w = GEN_WORDS[rng.gen_range(0..GEN_WORDS.len())];
                    (w.to_string(), Scalar::Str(w.to_string()))
                }
            };
            if spaced {
                parts.push(format!("{attr} {op_text} {value_text}"));
            } else {
                parts.push(format!("{attr}{op_text}{value_text}"));
            }
            conditions.push(Predicate {
                attr: attr.to_string(),
                op,
                value,
            });
        }
    }
    let missing_redundant_power = rng.gen_bool(0.3);
    if missing_redundant_power {
        parts.extend(
            ["and", "missing", "redundant", "power", "feed"]
                .iter()
                .map(|w| vary_case(rng, w)),
        );
    }
    let mut text = parts.join(" ");
    if rng.gen_bool(0.2) {
        text.push('.');
    }
    let q = IntentQuery {
        raw: text.clone(),
        label: label.map(str::to_string),
        entity_predicates,
        scope,
        conditions,
        missing_redundant_power,
    };
    (text, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example() {
        let q = compile_intent(
            "Show racks in Hall 2 with temperature > 80°F and missing redundant power feed.",
        )
        .unwrap();
        assert_eq!(q.node.label.as_deref(), Some("Rack"));
        assert_eq!(
            q.node.predicates,
            vec![Predicate::new("temp_f", CmpOp::Gt, 80i64)]
        );
        assert_eq!(q.hops.len(), 1);
        assert_eq!(q.hops[0].edge.kind, EdgeKind::LocatedIn);
        assert_eq!(
            q.hops[0].neighbor,
            NodePattern::label("Hall").with(Predicate::new("name", CmpOp::Eq, "2"))
        );
        assert_eq!(q.counts.len(), 1);
        assert_eq!(
            (q.counts[0].edge.kind, q.counts[0].op, q.counts[0].count),
            (EdgeKind::PoweredBy, CmpOp::Eq, 1)
        );
    }

    #[test]
    fn list_racks_is_unconstrained() {
        assert_eq!(
            compile_intent("list racks").unwrap(),
            PatternQuery::for_label("Rack")
        );
    }

    #[test]
    fn temperature_units() {
        let c = parse_intent("show racks with temperature > 30").unwrap();
        assert_eq!(c.conditions[0].attr, "temp_c");
        let c = parse_intent("show racks with temperature > 30 C").unwrap();
        assert_eq!(c.conditions[0].attr, "temp_c");
        let f = parse_intent("show racks with temperature>86F").unwrap();
        assert_eq!(f.conditions[0], Predicate::new("temp_f", CmpOp::Gt, 86i64));
        assert!(parse_intent("show racks with power_kw > 30 F").is_err());
    }

    #[test]
    fn gpu_racks_synonym() {
        let q = parse_intent("show GPU racks with power_kw >= 40.5").unwrap();
        assert_eq!(q.label.as_deref(), Some("Rack"));
        assert_eq!(
            q.entity_predicates,
            vec![Predicate::new("accelerator", CmpOp::Eq, "GPU")]
        );
        assert_eq!(
            q.conditions,
            vec![Predicate::new("power_kw", CmpOp::Ge, 40.5)]
        );
    }

    #[test]
    fn errors_report_first_bad_token() {
        let e = parse_intent("show trucks").unwrap_err();
        assert_eq!((e.position, e.token.as_str()), (5, "trucks"));
        let e = parse_intent("show racks in building 2").unwrap_err();
        assert_eq!((e.position, e.token.as_str()), (14, "building"));
        let e = parse_intent("show racks with power_kw").unwrap_err();
        assert_eq!(e.token, "<end>");
        let e = parse_intent("show racks; drop").unwrap_err();
        assert_eq!(e.position, 10);
        let e = parse_intent("show racks and missing redundant feed").unwrap_err();
        assert_eq!(e.token, "feed");
    }

    #[test]
    fn generated_utterances_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let (text, expected) = generate_utterance(&mut rng);
            assert_eq!(parse_intent(&text).as_ref(), Ok(&expected), "{text}");
        }
    }
}
