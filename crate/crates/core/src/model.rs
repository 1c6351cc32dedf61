//! Model formulas: parsing, validation, and canonicalization.
//!
//! The text grammar mirrors the catalog's classification notation:
//! factor letters `A B C U V`, a `~` suffix marking a random factor, infix
//! `x` for crossing, `>` for nesting (left side encloses the right side),
//! and parentheses. Whitespace is ignored. `A` is the fixed factor under
//! test and is always present; `U`/`V` name factors that `A` is nested in,
//! `B`/`C` name factors crossed with or nested under `A`.
//!
//! Examples: `"A > B~ > C~"`, `"(A x C~) > B~"`, `"V~ > A"`, `"(U x V~) > A"`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::error::{Error, Result};

/// The five factor letters. Enum order is the data-layout order: factors
/// enclosing `A` come first, replicates are innermost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FactorName {
    U,
    V,
    A,
    B,
    C,
}

impl FactorName {
    pub const ALL: [FactorName; 5] = [FactorName::U, FactorName::V, FactorName::A, FactorName::B, FactorName::C];

    /// Upper-case letter used in formulas.
    pub fn letter(self) -> char {
        match self {
            FactorName::U => 'U',
            FactorName::V => 'V',
            FactorName::A => 'A',
            FactorName::B => 'B',
            FactorName::C => 'C',
        }
    }

    /// Lower-case letter naming the level count of this factor.
    pub fn level_symbol(self) -> char {
        self.letter().to_ascii_lowercase()
    }

    /// Letter(s) naming this factor's effects in variance-component keys.
    pub fn effect_symbol(self) -> &'static str {
        match self {
            FactorName::A => "a",
            FactorName::B => "b",
            FactorName::C => "g",
            FactorName::U => "xi",
            FactorName::V => "nu",
        }
    }

    fn bit(self) -> u8 {
        match self {
            FactorName::U => 0,
            FactorName::V => 1,
            FactorName::A => 2,
            FactorName::B => 3,
            FactorName::C => 4,
        }
    }

    pub fn from_letter(c: char) -> Option<FactorName> {
        match c {
            'U' => Some(FactorName::U),
            'V' => Some(FactorName::V),
            'A' => Some(FactorName::A),
            'B' => Some(FactorName::B),
            'C' => Some(FactorName::C),
            _ => None,
        }
    }
}

impl fmt::Display for FactorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// A set of factors, packed into a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct FactorSet(u8);

impl FactorSet {
    pub const EMPTY: FactorSet = FactorSet(0);

    pub fn singleton(f: FactorName) -> FactorSet {
        FactorSet(1 << f.bit())
    }

    pub fn from_slice(fs: &[FactorName]) -> FactorSet {
        fs.iter().fold(FactorSet::EMPTY, |s, &f| s.with(f))
    }

    #[must_use]
    pub fn with(self, f: FactorName) -> FactorSet {
        FactorSet(self.0 | 1 << f.bit())
    }

    #[must_use]
    pub fn union(self, other: FactorSet) -> FactorSet {
        FactorSet(self.0 | other.0)
    }

    pub fn contains(self, f: FactorName) -> bool {
        self.0 & (1 << f.bit()) != 0
    }

    pub fn is_subset_of(self, other: FactorSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Members in layout order (U, V, A, B, C).
    pub fn iter(self) -> impl Iterator<Item = FactorName> {
        FactorName::ALL.into_iter().filter(move |f| self.contains(*f))
    }
}

impl fmt::Display for FactorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for name in self.iter() {
            write!(f, "{name}")?;
        }
        Ok(())
    }
}

/// One factor of a parsed model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: FactorName,
    pub random: bool,
    /// Factors this one is nested in (its levels are distinct within each
    /// level combination of the parents).
    pub parents: FactorSet,
}

/// A parsed, validated, canonicalized classification.
///
/// Two formulas that describe the same structure up to the interchangeable
/// letter pairs (`B`/`C`, `U`/`V`) resolve to the same catalog entry; the
/// `ModelSpec` remembers the user's letters so that design parameters and
/// variance components keep their given names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    factors: Vec<Factor>,
    row: usize,
    /// Canonical catalog letter -> user letter.
    to_user: NameMap,
}

/// Letter substitution between the canonical catalog naming and the user's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameMap([Option<FactorName>; 5]);

impl NameMap {
    pub fn identity() -> NameMap {
        NameMap([None; 5])
    }

    pub(crate) fn set(&mut self, canonical: FactorName, user: FactorName) {
        self.0[canonical.bit() as usize] = Some(user);
    }

    /// Applies the substitution to a single factor name.
    pub fn apply(&self, canonical: FactorName) -> FactorName {
        self.0[canonical.bit() as usize].unwrap_or(canonical)
    }

    /// Applies the substitution to every member of a set.
    pub fn apply_set(&self, set: FactorSet) -> FactorSet {
        set.iter().fold(FactorSet::EMPTY, |s, f| s.with(self.apply(f)))
    }
}

impl ModelSpec {
    /// Parses a formula and resolves it against the catalog.
    pub fn parse(formula: &str) -> Result<ModelSpec> {
        let ast = Parser::new(formula)?.parse()?;
        let raw = RawStructure::from_ast(&ast)?;
        raw.validate()?;
        let (row, to_user) = catalog::resolve_structure(&raw)?;
        Ok(ModelSpec { factors: raw.factors, row, to_user })
    }

    /// Factors in layout order (U, V, A, B, C as present).
    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, name: FactorName) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    /// Every factor name present in the model.
    pub fn factor_set(&self) -> FactorSet {
        self.factors.iter().fold(FactorSet::EMPTY, |s, f| s.with(f.name))
    }

    /// Catalog row index.
    pub fn row(&self) -> usize {
        self.row
    }

    pub fn name_map(&self) -> &NameMap {
        &self.to_user
    }

    /// True if at least one factor is random.
    pub fn has_random_factor(&self) -> bool {
        self.factors.iter().any(|f| f.random)
    }

    /// Canonical rendering of the formula in the user's letters.
    pub fn formula(&self) -> String {
        catalog::render_formula(self.row, &self.to_user)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.formula())
    }
}

/// Parsed structure before catalog resolution.
#[derive(Debug)]
pub(crate) struct RawStructure {
    pub factors: Vec<Factor>,
}

impl RawStructure {
    fn from_ast(ast: &Node) -> Result<RawStructure> {
        let mut factors: Vec<Factor> = Vec::new();
        collect_leaves(ast, &mut factors)?;
        apply_nesting(ast, &mut factors)?;
        factors.sort_by_key(|f| f.name);
        Ok(RawStructure { factors })
    }

    fn validate(&self) -> Result<()> {
        let a = self
            .factors
            .iter()
            .find(|f| f.name == FactorName::A)
            .ok_or_else(|| Error::UnsupportedModel("the fixed factor A must be present".into()))?;
        if a.random {
            return Err(Error::UnsupportedModel("the factor A under test must be fixed, not random (A~)".into()));
        }
        if self.factors.len() > 3 {
            return Err(Error::UnsupportedModel(
                "at most three factors are supported (1-, 2-, and 3-way classifications)".into(),
            ));
        }
        let above = a.parents;
        for f in &self.factors {
            if f.name == FactorName::A {
                continue;
            }
            let is_above = above.contains(f.name);
            match f.name {
                FactorName::U | FactorName::V if !is_above => {
                    return Err(Error::UnsupportedModel(format!(
                        "factor {} must enclose A (A nested in it); use B or C for factors crossed with or nested under A",
                        f.name
                    )));
                }
                FactorName::B | FactorName::C if is_above => {
                    return Err(Error::UnsupportedModel(format!(
                        "factor {} encloses A; factors that A is nested in must be named U or V",
                        f.name
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub(crate) fn factor(&self, name: FactorName) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }
}

fn collect_leaves(node: &Node, out: &mut Vec<Factor>) -> Result<()> {
    match node {
        Node::Leaf { name, random, pos } => {
            if out.iter().any(|f| f.name == *name) {
                return Err(Error::Parse {
                    position: *pos,
                    message: format!("factor {name} appears more than once"),
                });
            }
            out.push(Factor { name: *name, random: *random, parents: FactorSet::EMPTY });
            Ok(())
        }
        Node::Cross(children) | Node::Nest(children) => {
            for c in children {
                collect_leaves(c, out)?;
            }
            Ok(())
        }
    }
}

fn node_factors(node: &Node) -> FactorSet {
    match node {
        Node::Leaf { name, .. } => FactorSet::singleton(*name),
        Node::Cross(children) | Node::Nest(children) => {
            children.iter().fold(FactorSet::EMPTY, |s, c| s.union(node_factors(c)))
        }
    }
}

fn apply_nesting(node: &Node, factors: &mut Vec<Factor>) -> Result<()> {
    match node {
        Node::Leaf { .. } => Ok(()),
        Node::Cross(children) => {
            for c in children {
                apply_nesting(c, factors)?;
            }
            Ok(())
        }
        Node::Nest(children) => {
            // Each operand is nested in everything to its left. A crossed
            // group may enclose others but cannot itself be nested.
            let mut enclosing = FactorSet::EMPTY;
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    if matches!(c, Node::Cross(_)) {
                        return Err(Error::UnsupportedModel(
                            "nesting a crossed group inside another factor is not supported".into(),
                        ));
                    }
                    for f in node_factors(c).iter() {
                        let entry = factors.iter_mut().find(|x| x.name == f).expect("collected");
                        entry.parents = entry.parents.union(enclosing);
                    }
                }
                apply_nesting(c, factors)?;
                enclosing = enclosing.union(node_factors(c));
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Lexing and parsing
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum Node {
    Leaf { name: FactorName, random: bool, pos: usize },
    Cross(Vec<Node>),
    Nest(Vec<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Factor(FactorName, bool),
    Cross,
    Nest,
    LParen,
    RParen,
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn new(input: &str) -> Result<Parser> {
        Ok(Parser { tokens: lex(input)?, pos: 0, end: input.len() })
    }

    fn parse(mut self) -> Result<Node> {
        let node = self.expr()?;
        if let Some((_, at)) = self.tokens.get(self.pos) {
            return Err(Error::Parse { position: *at, message: "unexpected trailing input".into() });
        }
        Ok(node)
    }

    fn peek(&self) -> Option<&(Tok, usize)> {
        self.tokens.get(self.pos)
    }

    fn expr(&mut self) -> Result<Node> {
        let first = self.term()?;
        let mut items = vec![first];
        let mut op: Option<Tok> = None;
        while let Some(&(tok, at)) = self.peek() {
            match tok {
                Tok::Cross | Tok::Nest => {
                    match op {
                        None => op = Some(tok),
                        Some(prev) if prev == tok => {}
                        Some(_) => {
                            return Err(Error::Parse {
                                position: at,
                                message: "mixing x and > in one chain is ambiguous; add parentheses".into(),
                            });
                        }
                    }
                    self.pos += 1;
                    items.push(self.term()?);
                }
                _ => break,
            }
        }
        Ok(match op {
            None => items.pop().expect("nonempty"),
            Some(Tok::Cross) => Node::Cross(items),
            Some(Tok::Nest) => Node::Nest(items),
            _ => unreachable!(),
        })
    }

    fn term(&mut self) -> Result<Node> {
        match self.peek().copied() {
            Some((Tok::Factor(name, random), at)) => {
                self.pos += 1;
                Ok(Node::Leaf { name, random, pos: at })
            }
            Some((Tok::LParen, at)) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.peek().copied() {
                    Some((Tok::RParen, _)) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    other => Err(Error::Parse {
                        position: other.map_or(self.end, |(_, p)| p),
                        message: format!("unclosed parenthesis opened at byte {at}"),
                    }),
                }
            }
            Some((tok, at)) => {
                Err(Error::Parse { position: at, message: format!("expected a factor or '(', found {tok:?}") })
            }
            None => Err(Error::Parse { position: self.end, message: "unexpected end of formula".into() }),
        }
    }
}

fn lex(input: &str) -> Result<Vec<(Tok, usize)>> {
    let mut out = Vec::new();
    let bytes = input.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let tok = match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            'x' | 'X' => Tok::Cross,
            '>' => Tok::Nest,
            _ => match FactorName::from_letter(c) {
                Some(f) => {
                    let random = bytes.get(i + 1) == Some(&b'~');
                    Tok::Factor(f, random)
                }
                None => {
                    return Err(Error::Parse {
                        position: i,
                        message: format!("unexpected character {c:?}; expected A, B, C, U, V, '~', 'x', '>', or parentheses"),
                    });
                }
            },
        };
        let advance = if matches!(tok, Tok::Factor(_, true)) { 2 } else { 1 };
        out.push((tok, i));
        i += advance;
    }
    Ok(out)
}
