//! Fenced, schema-tagged TOML blocks: the structured contract between the
//! agents and the model.
//!
//! ````text
//! ```scenario/v1
//! fault_kind = "three_phase"
//! ...
//! ```
//! ````

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub schema: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BlockError {
    #[error("no ```{schema} block found in the response")]
    Missing { schema: String },
    #[error("expected exactly one ```{schema} block, found {count}")]
    Multiple { schema: String, count: usize },
    #[error("unterminated ```{schema} block")]
    Unterminated { schema: String },
    #[error("{schema} block, field `{path}`: {message}")]
    Field { schema: String, path: String, message: String },
}

/// Schema tag from a fence info string such as `scenario/v1` or `toml scenario/v1`.
fn fence_schema(info: &str) -> Option<String> {
    info.split_whitespace().rev().find(|t| t.contains('/')).map(str::to_string)
}

/// All schema-tagged blocks in order of appearance. Untagged fences are skipped.
pub fn extract_blocks(text: &str) -> Result<Vec<Block>, BlockError> {
    let mut out = Vec::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let trimmed = line.trim_start();
        let Some(info) = trimmed.strip_prefix("```") else { continue };
        let schema = fence_schema(info);
        let mut body = Vec::new();
        let mut closed = false;
        for inner in lines.by_ref() {
            if inner.trim() == "```" {
                closed = true;
                break;
            }
            body.push(inner);
        }
        match schema {
            Some(schema) if !closed => return Err(BlockError::Unterminated { schema }),
            Some(schema) => out.push(Block { schema, body: body.join("\n") }),
            None => {}
        }
    }
    Ok(out)
}

pub fn parse_block<T: DeserializeOwned>(block: &Block) -> Result<T, BlockError> {
    let de = toml::Deserializer::parse(&block.body).map_err(|e| BlockError::Field {
        schema: block.schema.clone(),
        path: String::new(),
        message: e.message().to_string(),
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| BlockError::Field {
        schema: block.schema.clone(),
        path: e.path().to_string(),
        message: e.inner().message().to_string(),
    })
}

/// The single block tagged `schema`, decoded.
pub fn parse_single_block<T: DeserializeOwned>(text: &str, schema: &str) -> Result<T, BlockError> {
    let blocks: Vec<Block> = extract_blocks(text)?.into_iter().filter(|b| b.schema == schema).collect();
    match blocks.len() {
        0 => Err(BlockError::Missing { schema: schema.to_string() }),
        1 => parse_block(&blocks[0]),
        n => Err(BlockError::Multiple { schema: schema.to_string(), count: n }),
    }
}

pub fn render_block<T: Serialize>(schema: &str, value: &T) -> String {
    let body = toml::to_string(value).expect("block values serialize to TOML");
    format!("```{schema}\n{}\n```", body.trim_end())
}
