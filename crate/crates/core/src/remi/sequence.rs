use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::vocab::{vocab, Token, VocabError, VOCAB_SIZE};

/// A token stream plus the index of every `Bar` token in it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u16>", into = "Vec<u16>")]
pub struct RemiSequence {
    tokens: Vec<u16>,
    bar_positions: Vec<usize>,
}

impl RemiSequence {
    pub fn from_ids(tokens: Vec<u16>) -> Result<Self, VocabError> {
        if let Some(&bad) = tokens.iter().find(|&&t| usize::from(t) >= VOCAB_SIZE) {
            return Err(VocabError::UnknownId(u32::from(bad)));
        }
        Ok(Self::from_ids_unchecked(tokens))
    }

    pub(crate) fn from_ids_unchecked(tokens: Vec<u16>) -> Self {
        let bar_positions = tokens.iter().enumerate().filter(|(_, &t)| t == Token::Bar.id()).map(|(i, _)| i).collect();
        RemiSequence { tokens, bar_positions }
    }

    pub fn from_tokens(tokens: &[Token]) -> Self {
        Self::from_ids_unchecked(tokens.iter().map(|t| t.id()).collect())
    }

    pub fn ids(&self) -> &[u16] {
        &self.tokens
    }

    pub fn tokens(&self) -> impl ExactSizeIterator<Item = Token> + '_ {
        self.tokens.iter().map(|&id| Token::from_id(id).expect("ids validated on construction"))
    }

    pub fn bar_positions(&self) -> &[usize] {
        &self.bar_positions
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// One token per line in `NAME_VALUE` form.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.tokens.len() * 14);
        for token in self.tokens() {
            out.push_str(&token.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses the line-per-token form; blank lines are ignored.
    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let vocab = vocab();
        let mut ids = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let id = vocab
                .id_of_text(line)
                .ok_or_else(|| VocabError::UnknownText { line: i + 1, text: line.to_string() })?;
            ids.push(id);
        }
        Ok(Self::from_ids_unchecked(ids))
    }

    /// `[{"name": ..., "value": ...}, ...]`
    pub fn to_events_json(&self) -> Value {
        Value::Array(self.tokens().map(|t| json!({ "name": t.family().name(), "value": t.json_value() })).collect())
    }

    pub fn from_events_json(events: &Value) -> Result<Self, VocabError> {
        let vocab = vocab();
        let list = events.as_array().ok_or_else(|| VocabError::Json("expected an array of events".into()))?;
        let mut ids = Vec::with_capacity(list.len());
        for (index, event) in list.iter().enumerate() {
            let name = event
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| VocabError::Json(format!("event {index} has no string \"name\"")))?;
            let value = event.get("value").unwrap_or(&Value::Null);
            let id = vocab.id_of_event(name, value).ok_or_else(|| VocabError::UnknownEvent {
                index,
                name: name.to_string(),
                value: value.to_string(),
            })?;
            ids.push(id);
        }
        Ok(Self::from_ids_unchecked(ids))
    }
}

impl TryFrom<Vec<u16>> for RemiSequence {
    type Error = VocabError;

    fn try_from(ids: Vec<u16>) -> Result<Self, Self::Error> {
        RemiSequence::from_ids(ids)
    }
}

impl From<RemiSequence> for Vec<u16> {
    fn from(seq: RemiSequence) -> Self {
        seq.tokens
    }
}
