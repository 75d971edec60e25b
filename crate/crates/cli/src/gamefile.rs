//! Game files: a small TOML document naming the players and giving either the
//! full value table or a formula.
//!
//! ```toml
//! players = ["a", "b", "c"]
//! normalize = true
//!
//! [values]
//! a = -3.0
//! "a+b" = -3.0
//! # ... every nonempty coalition, grand coalition included
//! ```
//!
//! or, instead of `[values]`, `formula = { type = "symmetric", c = -1.5 }`.

use std::collections::BTreeMap;
use std::fmt;

use cohesion::game::{default_player_name, gen_symmetric};
use cohesion::{Coalition, Game};
use serde::{Deserialize, Serialize};
use toml::Spanned;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Formula {
    Symmetric { c: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Worths {
    /// `v(S)` indexed by `mask - 1`.
    Table(Vec<f64>),
    Formula(Formula),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameFile {
    pub players: Vec<String>,
    pub worths: Worths,
    pub normalize: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    players: Spanned<Vec<Spanned<String>>>,
    #[serde(default)]
    values: Option<Spanned<BTreeMap<Spanned<String>, Spanned<f64>>>>,
    #[serde(default)]
    formula: Option<Spanned<Formula>>,
    #[serde(default = "yes")]
    normalize: bool,
}

fn yes() -> bool {
    true
}

/// 1-based line and column of a byte offset.
fn position(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |nl| offset - nl - 1) + 1;
    (line, column)
}

fn error_at(text: &str, offset: usize, message: impl Into<String>) -> ParseError {
    let (line, column) = position(text, offset);
    ParseError { line, column, message: message.into() }
}

/// Resolves a `+`-joined label against the player list.
pub fn parse_coalition(label: &str, players: &[String]) -> Result<Coalition, String> {
    let n = players.len();
    let mut mask = 0u32;
    for part in label.split('+') {
        let name = part.trim();
        let i = players
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| format!("unknown player {name:?} in coalition {label:?}"))?;
        if mask >> i & 1 == 1 {
            return Err(format!("player {name:?} repeated in coalition {label:?}"));
        }
        mask |= 1 << i;
    }
    Coalition::new(mask, n).map_err(|e| e.to_string())
}

/// Parses a `|`-separated list of coalition labels.
pub fn parse_collection(spec: &str, players: &[String]) -> Result<Vec<Coalition>, String> {
    spec.split('|').filter(|s| !s.trim().is_empty()).map(|s| parse_coalition(s, players)).collect()
}

/// Default names `a, b, c, ...` for `n` players.
pub fn default_players(n: usize) -> Vec<String> {
    (0..n).map(default_player_name).collect()
}

impl GameFile {
    pub fn parse(text: &str) -> Result<GameFile, ParseError> {
        let raw: RawFile = toml::from_str(text).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start);
            error_at(text, offset, e.message().to_string())
        })?;
        let players: Vec<String> = raw.players.get_ref().iter().map(|p| p.get_ref().clone()).collect();
        let n = players.len();
        if !(1..=16).contains(&n) {
            return Err(error_at(text, raw.players.span().start, format!("need 1 to 16 players, got {n}")));
        }
        for (i, p) in raw.players.get_ref().iter().enumerate() {
            let name = p.get_ref();
            if name.is_empty() || name.contains(['+', '|']) || name.trim() != name {
                return Err(error_at(text, p.span().start, format!("invalid player name {name:?}")));
            }
            if players[..i].contains(name) {
                return Err(error_at(text, p.span().start, format!("duplicate player {name:?}")));
            }
        }
        let worths = match (raw.values, raw.formula) {
            (Some(_), Some(f)) => {
                return Err(error_at(text, f.span().start, "give either [values] or formula, not both"));
            }
            (None, None) => return Err(error_at(text, 0, "missing [values] table or formula")),
            (None, Some(f)) => Worths::Formula(f.into_inner()),
            (Some(table), None) => {
                let full = (1usize << n) - 1;
                let mut values: Vec<Option<f64>> = vec![None; full];
                for (key, value) in table.get_ref() {
                    let c = parse_coalition(key.get_ref(), &players).map_err(|m| error_at(text, key.span().start, m))?;
                    let slot = &mut values[c.mask() as usize - 1];
                    if slot.is_some() {
                        return Err(error_at(text, key.span().start, format!("coalition {:?} given twice", key.get_ref())));
                    }
                    let v = *value.get_ref();
                    if !v.is_finite() {
                        return Err(error_at(text, value.span().start, "worth must be finite"));
                    }
                    *slot = Some(v);
                }
                if let Some(missing) = values.iter().position(Option::is_none) {
                    let label = Coalition::new(missing as u32 + 1, n).unwrap().label(Some(&players));
                    return Err(error_at(text, table.span().start, format!("missing worth for coalition {label:?}")));
                }
                Worths::Table(values.into_iter().map(Option::unwrap).collect())
            }
        };
        Ok(GameFile { players, worths, normalize: raw.normalize })
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    /// The game described by the file, normalized when requested.
    pub fn game(&self) -> cohesion::Result<Game> {
        let g = match &self.worths {
            Worths::Table(values) => Game::new(self.n(), values.clone())?,
            Worths::Formula(Formula::Symmetric { c }) => gen_symmetric(self.n(), *c)?,
        };
        let g = if self.normalize { g.normalize() } else { g };
        g.with_names(self.players.clone())
    }

    /// Writes the file back as TOML with values listed by coalition mask.
    pub fn to_toml(&self) -> String {
        let quote = |s: &str| toml::Value::String(s.to_string()).to_string();
        let mut out = String::new();
        let names: Vec<String> = self.players.iter().map(|p| quote(p)).collect();
        out.push_str(&format!("players = [{}]\n", names.join(", ")));
        out.push_str(&format!("normalize = {}\n", self.normalize));
        match &self.worths {
            Worths::Formula(Formula::Symmetric { c }) => {
                out.push_str(&format!("formula = {{ type = \"symmetric\", c = {} }}\n", toml::Value::Float(*c)));
            }
            Worths::Table(values) => {
                out.push_str("\n[values]\n");
                for (k, v) in values.iter().enumerate() {
                    let label = Coalition::new(k as u32 + 1, self.n()).unwrap().label(Some(&self.players));
                    out.push_str(&format!("{} = {}\n", quote(&label), toml::Value::Float(*v)));
                }
            }
        }
        out
    }

    /// A file holding the table of an existing game.
    pub fn from_game(g: &Game) -> GameFile {
        let players = g.names().map(<[String]>::to_vec).unwrap_or_else(|| default_players(g.n()));
        GameFile { players, worths: Worths::Table(g.values().to_vec()), normalize: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
players = ["a", "b", "c"]

[values]
a = -3.0
b = -3.0
c = -3.0
"a+b" = -3.0
"a+c" = -3.0
"b+c" = -3.0
"a+b+c" = 0.0
"#;

    #[test]
    fn table_and_formula_agree() {
        let table = GameFile::parse(EXAMPLE).unwrap().game().unwrap();
        let formula = GameFile::parse("players = [\"a\",\"b\",\"c\"]\nformula = { type = \"symmetric\", c = -1.5 }\n")
            .unwrap()
            .game()
            .unwrap();
        assert_eq!(table.values(), formula.values());
        assert_eq!(table.player_name(2), "c");
    }

    #[test]
    fn labels_are_order_free() {
        let text = EXAMPLE.replace("\"a+b\" = -3.0", "\"b + a\" = -3.0");
        assert_eq!(GameFile::parse(&text).unwrap().game().unwrap().value_of_mask(0b011), -3.0);
    }

    #[test]
    fn normalization_applies_on_load() {
        let text = EXAMPLE.replace("\"a+b+c\" = 0.0", "\"a+b+c\" = 3.0");
        let g = GameFile::parse(&text).unwrap().game().unwrap();
        assert!(g.is_normalized());
        assert_eq!(g.value_of_mask(0b001), -4.0);
        let raw = GameFile::parse(&format!("normalize = false\n{text}")).unwrap().game().unwrap();
        assert!(!raw.is_normalized());
    }

    #[test]
    fn errors_carry_positions() {
        let e = GameFile::parse("players = [\"a\", \"b\"]\n[values]\na = 1.0\nb = \n").unwrap_err();
        assert_eq!(e.line, 4);
        let e = GameFile::parse(&EXAMPLE.replace("\"a+c\"", "\"a+d\"")).unwrap_err();
        assert_eq!((e.line, e.column), (9, 1));
        assert!(e.message.contains("unknown player"));
        let e = GameFile::parse(&EXAMPLE.replace("\"b+c\" = -3.0\n", "")).unwrap_err();
        assert!(e.message.contains("b+c"), "{e}");
        let e = GameFile::parse(&EXAMPLE.replace("\"a+c\"", "\"c+a+c\"")).unwrap_err();
        assert!(e.message.contains("repeated"));
        assert!(GameFile::parse(&format!("{EXAMPLE}\n\"c+a\" = 1.0\n")).is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let g = cohesion::game::gen_random(4, 3, true).unwrap();
        let file = GameFile::from_game(&g);
        let again = GameFile::parse(&file.to_toml()).unwrap();
        assert_eq!(again, file);
        assert_eq!(again.game().unwrap().values(), g.values());
        let formula = GameFile::parse("players = [\"x\",\"y\"]\nformula = { type = \"symmetric\", c = 0.1 }\n").unwrap();
        assert_eq!(GameFile::parse(&formula.to_toml()).unwrap(), formula);
    }

    #[test]
    fn collections_parse() {
        let players = default_players(3);
        let c = parse_collection("a+b|b+c|a+c", &players).unwrap();
        assert_eq!(c.iter().map(|c| c.mask()).collect::<Vec<_>>(), vec![0b011, 0b110, 0b101]);
        assert!(parse_collection("a|z", &players).is_err());
    }
}
