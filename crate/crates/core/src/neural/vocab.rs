use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

pub const UNK: usize = 0;
pub const SEP: usize = 1;
pub const EMPTY: usize = 2;

const RESERVED: [&str; 3] = ["<unk>", "<sep>", "<empty>"];

/// Lowercased token vocabulary with reserved ids for unknown tokens, the
/// segment separator and the empty-history marker.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Reserved ids first, then the distinct lowercased tokens in sorted order.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let distinct: BTreeSet<String> = tokens.into_iter().map(str::to_lowercase).collect();
        let all = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(
                distinct
                    .into_iter()
                    .filter(|t| !RESERVED.contains(&t.as_str())),
            )
            .collect();
        Self::from_tokens(all).expect("reserved tokens are present")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::Invalid(
                "vocabulary must start with the reserved tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Invalid(format!(
                    "vocabulary token `{t}` is empty or has whitespace"
                )));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn id(&self, token: &str) -> usize {
        self.index
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(UNK)
    }

    pub fn ids<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        tokens.into_iter().map(|t| self.id(t)).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Space-separated form used in model files.
    pub fn to_line(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        Self::from_tokens(line.split(' ').map(str::to_string).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_and_unknowns() {
        let v = Vocab::build(["Hello", "world", "hello"]);
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("<sep>"), SEP);
        assert_eq!(v.id("<empty>"), EMPTY);
        assert_eq!(v.id("HELLO"), 3);
        assert_eq!(v.id("missing"), UNK);
    }

    #[test]
    fn line_round_trip() {
        let v = Vocab::build(["b", "a", "c"]);
        assert_eq!(Vocab::from_line(&v.to_line()).unwrap(), v);
        assert!(Vocab::from_line("a b").is_err());
    }
}
