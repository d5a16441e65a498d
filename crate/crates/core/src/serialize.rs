//! Text serializations of records.
//!
//! Two formats are produced. The prompt format (`attr:val attr:val`) feeds
//! the LLM labeler. The tagged format (`[COL]attr [VAL]val`, paired with
//! `[CLS]`/`[SEP]`) is the usual input layout for pairwise language-model
//! matchers. Values are never escaped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::Record;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Prompt,
    Ditto,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializedEntity {
    pub text: String,
    pub format: Format,
}

pub const QUESTION_LINE: &str = "Do the two mine descriptions refer to the same real-world mine. \
Answer with 'Yes' if they do and 'No' if they do not.";
pub const CONSTRAINT_LINE: &str = "Answer only in Yes or No.";

fn non_empty(r: &Record) -> Result<()> {
    if r.attributes.is_empty() {
        Err(Error::EmptyRecord(r.uri.clone()))
    } else {
        Ok(())
    }
}

pub fn serialize_prompt_entity(r: &Record) -> Result<SerializedEntity> {
    non_empty(r)?;
    let text = r.attributes.iter().map(|(a, v)| format!("{a}:{v}")).collect::<Vec<_>>().join(" ");
    Ok(SerializedEntity { text, format: Format::Prompt })
}

/// The four-line labeling prompt for a record pair.
pub fn build_pair_prompt(a: &Record, b: &Record) -> Result<String> {
    let a = serialize_prompt_entity(a)?;
    let b = serialize_prompt_entity(b)?;
    Ok(format!("Entity A is {}.\nEntity B is {}.\n{QUESTION_LINE}\n{CONSTRAINT_LINE}", a.text, b.text))
}

pub fn serialize_ditto_entity(r: &Record) -> Result<SerializedEntity> {
    non_empty(r)?;
    let text = r.attributes.iter().map(|(a, v)| format!("[COL]{a} [VAL]{v}")).collect::<Vec<_>>().join(" ");
    Ok(SerializedEntity { text, format: Format::Ditto })
}

pub fn serialize_ditto_pair(a: &Record, b: &Record) -> Result<String> {
    let a = serialize_ditto_entity(a)?;
    let b = serialize_ditto_entity(b)?;
    Ok(format!("[CLS] {} [SEP] {} [SEP]", a.text, b.text))
}
