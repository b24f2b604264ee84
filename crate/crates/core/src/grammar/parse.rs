//! Tokenizer and parser for the line-oriented `.psdg` grammar text format.
//!
//! ```text
//! feature lane { values: left, right ; prior: 0.5, 0.5 ; parents: lane ;
//!                cpt: left | Go -> 0, 1 ; cpt: * | * -> 0.5, 0.5 }
//! start Drive
//! prod 0: Drive -> Go Drive { rule lane in {left} : 0.2 ; default: 0.6 }
//! prod 1: Drive -> Go { rule lane in {left} : 0.8 ; default: 0.4 }
//! ```
//!
//! Parsing only checks shape. Name resolution and probability checks happen
//! in validation, so that all semantic problems are reported together.

use super::diagnostics::{Diagnostic, DiagnosticKind};

pub type Pos = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    LBrace,
    RBrace,
    Semi,
    Colon,
    Comma,
    Bar,
    Amp,
    Star,
    Arrow,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '+' | '\'')
}

fn tokenize(text: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut tokens = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let pos = (li + 1, i + 1);
            let simple = match c {
                '{' => Some(Tok::LBrace),
                '}' => Some(Tok::RBrace),
                ';' => Some(Tok::Semi),
                ':' => Some(Tok::Colon),
                ',' => Some(Tok::Comma),
                '|' => Some(Tok::Bar),
                '&' => Some(Tok::Amp),
                '*' => Some(Tok::Star),
                _ => None,
            };
            if let Some(tok) = simple {
                tokens.push(Token { tok, pos });
                i += 1;
            } else if c == '-' && chars.get(i + 1) == Some(&'>') {
                tokens.push(Token {
                    tok: Tok::Arrow,
                    pos,
                });
                i += 2;
            } else if c.is_whitespace() {
                i += 1;
            } else if is_word_char(c) {
                let start = i;
                while i < chars.len()
                    && is_word_char(chars[i])
                    && !(chars[i] == '-' && chars.get(i + 1) == Some(&'>'))
                {
                    i += 1;
                }
                tokens.push(Token {
                    tok: Tok::Word(chars[start..i].iter().collect()),
                    pos,
                });
            } else {
                return Err(Diagnostic::new(
                    DiagnosticKind::Parse,
                    pos,
                    format!("unexpected character {c:?}"),
                ));
            }
        }
    }
    Ok(tokens)
}

#[derive(Debug, Clone, Default)]
pub struct RawFeature {
    pub name: String,
    pub pos: Pos,
    pub values: Vec<(String, Pos)>,
    pub prior: Option<(Vec<f64>, Pos)>,
    pub parents: Vec<(String, Pos)>,
    pub cpt: Vec<RawCptRow>,
}

#[derive(Debug, Clone)]
pub struct RawCptRow {
    pub pos: Pos,
    /// `None` is the `*` wildcard.
    pub parent_values: Vec<(Option<String>, Pos)>,
    pub terminal: (Option<String>, Pos),
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RawCondition {
    pub feature: (String, Pos),
    pub values: Vec<(String, Pos)>,
}

#[derive(Debug, Clone)]
pub struct RawRule {
    pub pos: Pos,
    pub conditions: Vec<RawCondition>,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct RawProduction {
    pub index: u32,
    pub pos: Pos,
    pub lhs: (String, Pos),
    pub rhs: Vec<(String, Pos)>,
    pub rules: Vec<RawRule>,
    pub default: Option<(f64, Pos)>,
    pub has_block: bool,
}

/// Syntax tree of a grammar file, before name resolution.
#[derive(Debug, Clone, Default)]
pub struct RawGrammar {
    pub features: Vec<RawFeature>,
    pub start: Option<(String, Pos)>,
    pub terminals: Option<Vec<(String, Pos)>>,
    pub productions: Vec<RawProduction>,
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    eof: Pos,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.at).map(|t| &t.tok)
    }

    fn pos(&self) -> Pos {
        self.tokens.get(self.at).map_or(self.eof, |t| t.pos)
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(Diagnostic::new(DiagnosticKind::Parse, self.pos(), msg))
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<Pos> {
        let pos = self.pos();
        if self.eat(&tok) {
            Ok(pos)
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn word(&mut self, what: &str) -> PResult<(String, Pos)> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                let pos = self.pos();
                self.at += 1;
                Ok((w, pos))
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn number(&mut self) -> PResult<(f64, Pos)> {
        let (w, pos) = self.word("a number")?;
        match w.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((v, pos)),
            _ => Err(Diagnostic::new(
                DiagnosticKind::Parse,
                pos,
                format!("`{w}` is not a number"),
            )),
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        match self.peek() {
            Some(Tok::Word(w)) if w == kw => {
                self.at += 1;
                Ok(())
            }
            _ => self.err(format!("expected `{kw}`")),
        }
    }

    fn number_list(&mut self) -> PResult<Vec<f64>> {
        let mut out = vec![self.number()?.0];
        while self.eat(&Tok::Comma) {
            out.push(self.number()?.0);
        }
        Ok(out)
    }

    fn word_list(&mut self, what: &str) -> PResult<Vec<(String, Pos)>> {
        let mut out = vec![self.word(what)?];
        while self.eat(&Tok::Comma) {
            out.push(self.word(what)?);
        }
        Ok(out)
    }

    fn feature(&mut self) -> PResult<RawFeature> {
        let (name, pos) = self.word("a feature name")?;
        let mut feat = RawFeature {
            name,
            pos,
            ..Default::default()
        };
        self.expect(Tok::LBrace, "`{`")?;
        loop {
            if self.eat(&Tok::RBrace) {
                break;
            }
            if self.eat(&Tok::Semi) {
                continue;
            }
            let (item, item_pos) = self.word("`values`, `prior`, `parents` or `cpt`")?;
            self.expect(Tok::Colon, "`:`")?;
            match item.as_str() {
                "values" => feat.values = self.word_list("a value label")?,
                "prior" => feat.prior = Some((self.number_list()?, item_pos)),
                "parents" => {
                    if matches!(self.peek(), Some(Tok::Word(_))) {
                        feat.parents = self.word_list("a feature name")?;
                    }
                }
                "cpt" => feat.cpt.push(self.cpt_row(item_pos)?),
                other => {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Parse,
                        item_pos,
                        format!("unknown feature item `{other}`"),
                    ))
                }
            }
            if !matches!(self.peek(), Some(Tok::Semi | Tok::RBrace)) {
                return self.err("expected `;` or `}`");
            }
        }
        Ok(feat)
    }

    fn cpt_row(&mut self, pos: Pos) -> PResult<RawCptRow> {
        let mut parent_values = Vec::new();
        loop {
            let p = self.pos();
            match self.peek() {
                Some(Tok::Word(w)) => {
                    parent_values.push((Some(w.clone()), p));
                    self.at += 1;
                }
                Some(Tok::Star) => {
                    parent_values.push((None, p));
                    self.at += 1;
                }
                Some(Tok::Comma) => {
                    self.at += 1;
                }
                _ => break,
            }
        }
        let mut terminal = (None, self.pos());
        if self.eat(&Tok::Bar) {
            let p = self.pos();
            terminal = match self.bump().map(|t| t.tok) {
                Some(Tok::Word(w)) => (Some(w), p),
                Some(Tok::Star) => (None, p),
                _ => {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Parse,
                        p,
                        "expected a terminal or `*` after `|`",
                    ))
                }
            };
        }
        self.expect(Tok::Arrow, "`->`")?;
        let probs = self.number_list()?;
        Ok(RawCptRow {
            pos,
            parent_values,
            terminal,
            probs,
        })
    }

    fn production(&mut self) -> PResult<RawProduction> {
        let (idx, pos) = self.word("a production index")?;
        let index = idx.parse::<u32>().map_err(|_| {
            Diagnostic::new(
                DiagnosticKind::Parse,
                pos,
                format!("`{idx}` is not a production index"),
            )
        })?;
        self.expect(Tok::Colon, "`:`")?;
        let lhs = self.word("a left-hand nonterminal")?;
        let arrow = self.expect(Tok::Arrow, "`->`")?;
        let mut rhs = Vec::new();
        while let Some(Token {
            tok: Tok::Word(w),
            pos,
        }) = self.tokens.get(self.at)
        {
            if pos.0 != arrow.0 {
                break;
            }
            rhs.push((w.clone(), *pos));
            self.at += 1;
        }
        let mut prod = RawProduction {
            index,
            pos,
            lhs,
            rhs,
            rules: Vec::new(),
            default: None,
            has_block: false,
        };
        if self.eat(&Tok::LBrace) {
            prod.has_block = true;
            loop {
                if self.eat(&Tok::RBrace) {
                    break;
                }
                if self.eat(&Tok::Semi) {
                    continue;
                }
                let (item, item_pos) = self.word("`rule` or `default`")?;
                match item.as_str() {
                    "rule" => {
                        let mut conditions = vec![self.condition()?];
                        while self.eat(&Tok::Amp) {
                            conditions.push(self.condition()?);
                        }
                        self.expect(Tok::Colon, "`:`")?;
                        let value = self.number()?.0;
                        prod.rules.push(RawRule {
                            pos: item_pos,
                            conditions,
                            value,
                        });
                    }
                    "default" => {
                        self.expect(Tok::Colon, "`:`")?;
                        let (v, p) = self.number()?;
                        prod.default = Some((v, p));
                    }
                    other => {
                        return Err(Diagnostic::new(
                            DiagnosticKind::Parse,
                            item_pos,
                            format!("unknown production item `{other}`"),
                        ))
                    }
                }
                if !matches!(self.peek(), Some(Tok::Semi | Tok::RBrace)) {
                    return self.err("expected `;` or `}`");
                }
            }
        }
        Ok(prod)
    }

    fn condition(&mut self) -> PResult<RawCondition> {
        let feature = self.word("a feature name")?;
        self.keyword("in")?;
        self.expect(Tok::LBrace, "`{`")?;
        let values = self.word_list("a value label")?;
        self.expect(Tok::RBrace, "`}`")?;
        Ok(RawCondition { feature, values })
    }
}

/// Parses grammar text into its syntax tree. Errors carry line and column.
pub fn parse_raw(text: &str) -> Result<RawGrammar, Diagnostic> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(Diagnostic::new(
            DiagnosticKind::Parse,
            (1, 1),
            "empty grammar",
        ));
    }
    let eof = (text.lines().count().max(1), 1);
    let mut p = Parser { tokens, at: 0, eof };
    let mut g = RawGrammar::default();
    while p.peek().is_some() {
        let (kw, pos) = p.word("`feature`, `start`, `terminals` or `prod`")?;
        match kw.as_str() {
            "feature" => g.features.push(p.feature()?),
            "start" => {
                if g.start.is_some() {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Parse,
                        pos,
                        "duplicate `start`",
                    ));
                }
                g.start = Some(p.word("a start nonterminal")?);
            }
            "terminals" => g
                .terminals
                .get_or_insert_with(Vec::new)
                .extend(p.word_list("a terminal")?),
            "prod" => g.productions.push(p.production()?),
            other => {
                return Err(Diagnostic::new(
                    DiagnosticKind::Parse,
                    pos,
                    format!("unknown statement `{other}`"),
                ))
            }
        }
    }
    if g.start.is_none() {
        return Err(Diagnostic::new(
            DiagnosticKind::Parse,
            eof,
            "missing `start` declaration",
        ));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrow_splits_hyphenated_words() {
        let toks = tokenize("left-lane->x").unwrap();
        assert_eq!(toks[0].tok, Tok::Word("left-lane".into()));
        assert_eq!(toks[1].tok, Tok::Arrow);
        assert_eq!(toks[2].tok, Tok::Word("x".into()));
    }

    #[test]
    fn parses_feature_and_productions() {
        let g = parse_raw(
            "# comment\nfeature f { values: a, b ; prior: 0.5, 0.5 ; parents: f ;\n cpt: a | * -> 1, 0 ; cpt: * -> 0.5, 0.5 }\nstart S\nprod 0: S -> x S { rule f in {a} & f in {a,b} : 0.3 ; default: 0.1 }\nprod 1: S -> y\n",
        )
        .unwrap();
        assert_eq!(g.features.len(), 1);
        let f = &g.features[0];
        assert_eq!(f.values.len(), 2);
        assert_eq!(f.cpt.len(), 2);
        assert_eq!(f.cpt[1].parent_values[0].0, None);
        assert_eq!(f.cpt[0].parent_values[0].0.as_deref(), Some("a"));
        assert_eq!(g.productions[0].rhs.len(), 2);
        assert_eq!(g.productions[0].rules[0].conditions.len(), 2);
        assert_eq!(g.productions[0].default.unwrap().0, 0.1);
        assert!(!g.productions[1].has_block);
    }

    #[test]
    fn empty_file_is_line_one_error() {
        let e = parse_raw("").unwrap_err();
        assert_eq!(e.kind, DiagnosticKind::Parse);
        assert_eq!(e.line, 1);
        let e = parse_raw("# only a comment\n").unwrap_err();
        assert_eq!(e.line, 1);
    }

    #[test]
    fn reports_position_of_bad_token() {
        let e = parse_raw("start S\nprod 0 S -> a\n").unwrap_err();
        assert_eq!((e.line, e.column), (2, 8));
        let e = parse_raw("start S\nprod 0: S -> a { rule f in {x} 0.5 }\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn rhs_stops_at_end_of_line() {
        let g = parse_raw("start S\nprod 0: S ->\nprod 1: S -> a\n").unwrap();
        assert!(g.productions[0].rhs.is_empty());
        assert_eq!(g.productions[1].rhs.len(), 1);
    }
}
