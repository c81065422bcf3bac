//! Network descriptors: the attention-site shapes of a network plus its
//! baseline cost, stored as canonical JSON (`tse-desc/1`).

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA: &str = "tse-desc/1";

/// Input tensor of one attention block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockShape {
    pub name: String,
    pub stage: String,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    /// Native reduction ratio.
    pub r: usize,
    /// Channel count the ratio divides when it differs from `c`. Many SE
    /// implementations size the bottleneck from the residual block's input
    /// width rather than the width the attention actually sees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_base: Option<usize>,
}

impl BlockShape {
    pub fn new(name: impl Into<String>, stage: impl Into<String>, h: usize, w: usize, c: usize, r: usize) -> Self {
        Self {
            name: name.into(),
            stage: stage.into(),
            h,
            w,
            c,
            r,
            ratio_base: None,
        }
    }

    pub fn with_ratio_base(mut self, base: usize) -> Self {
        self.ratio_base = (base != self.c).then_some(base);
        self
    }

    pub fn ratio_base(&self) -> usize {
        self.ratio_base.unwrap_or(self.c)
    }

    pub fn elements(&self) -> usize {
        self.h * self.w * self.c
    }

    fn problems(&self, index: usize, out: &mut Vec<String>) {
        let who = format!("block #{index} `{}`", self.name);
        if self.name.is_empty() {
            out.push(format!("block #{index}: empty name"));
        }
        for (field, v) in [("h", self.h), ("w", self.w), ("c", self.c), ("r", self.r)] {
            if v == 0 {
                out.push(format!("{who}: {field} must be positive"));
            }
        }
        if self.ratio_base == Some(0) {
            out.push(format!("{who}: ratio_base must be positive"));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDescriptor {
    pub schema: String,
    pub name: String,
    /// Input resolution `[h, w]`.
    pub input: [usize; 2],
    pub baseline_flops: u64,
    pub baseline_params: u64,
    pub blocks: Vec<BlockShape>,
}

impl NetworkDescriptor {
    pub fn new(name: impl Into<String>, input: [usize; 2], baseline_flops: u64, baseline_params: u64) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            name: name.into(),
            input,
            baseline_flops,
            baseline_params,
            blocks: Vec::new(),
        }
    }

    /// Returns every invariant violation at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.schema != SCHEMA {
            problems.push(format!("schema `{}` unsupported, expected `{SCHEMA}`", self.schema));
        }
        if self.name.is_empty() {
            problems.push("name must not be empty".to_string());
        }
        if self.input.contains(&0) {
            problems.push(format!("input resolution {:?} must be positive", self.input));
        }
        if self.blocks.is_empty() {
            problems.push("no attention blocks".to_string());
        }
        let mut seen = HashSet::new();
        for (i, b) in self.blocks.iter().enumerate() {
            b.problems(i, &mut problems);
            if !seen.insert(b.name.as_str()) {
                problems.push(format!("block #{i}: duplicate name `{}`", b.name));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Canonical JSON: sorted keys, two-space indent, trailing newline.
    pub fn to_canonical_json(&self) -> Result<String> {
        self.validate()?;
        let value = serde_json::to_value(self).expect("descriptor serialises");
        let mut s = serde_json::to_string_pretty(&value).expect("value serialises");
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let desc: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        desc.validate()?;
        Ok(desc)
    }

    pub fn attention_elements(&self) -> usize {
        self.blocks.iter().map(BlockShape::elements).sum()
    }
}

pub fn load_descriptor(path: impl AsRef<Path>) -> Result<NetworkDescriptor> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    NetworkDescriptor::from_json(&text)
}

pub fn save_descriptor(desc: &NetworkDescriptor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = desc.to_canonical_json()?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetworkDescriptor {
        let mut d = NetworkDescriptor::new("tiny", [32, 32], 1000, 50);
        d.blocks.push(BlockShape::new("a", "s1", 16, 16, 8, 4));
        d.blocks
            .push(BlockShape::new("b", "s2", 8, 8, 16, 4).with_ratio_base(8));
        d
    }

    #[test]
    fn canonical_json_is_sorted_and_stable() {
        let d = tiny();
        let a = d.to_canonical_json().unwrap();
        assert_eq!(a, d.to_canonical_json().unwrap());
        let top: Vec<&str> = a
            .lines()
            .filter_map(|l| l.strip_prefix("  \""))
            .filter_map(|l| l.split('"').next())
            .collect();
        assert_eq!(
            top,
            ["baseline_flops", "baseline_params", "blocks", "input", "name", "schema"]
        );
        assert!(a.ends_with("}\n"));
        assert_eq!(NetworkDescriptor::from_json(&a).unwrap(), d);
    }

    #[test]
    fn zero_height_names_block() {
        let mut d = tiny();
        d.blocks[1].h = 0;
        let err = d.validate().unwrap_err().to_string();
        assert!(err.contains("`b`") && err.contains("h must be positive"), "{err}");
    }

    #[test]
    fn duplicates_and_schema() {
        let mut d = tiny();
        d.blocks[1].name = "a".into();
        d.schema = "tse-desc/2".into();
        let Err(Error::Validation(p)) = d.validate() else {
            panic!("expected validation error")
        };
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn schema_errors_carry_field_path() {
        let text = r#"{"schema":"tse-desc/1","name":"x","input":[1,1],"baseline_flops":0,"baseline_params":0,
            "blocks":[{"name":"a","stage":"s","h":1,"w":1,"c":"wide","r":1}]}"#;
        match NetworkDescriptor::from_json(text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "blocks[0].c"),
            other => panic!("unexpected {other:?}"),
        }
        let text =
            r#"{"schema":"tse-desc/1","name":"x","input":[1,1],"baseline_flops":-1,"baseline_params":0,"blocks":[]}"#;
        assert!(matches!(NetworkDescriptor::from_json(text), Err(Error::Schema { .. })));
    }

    #[test]
    fn save_refuses_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = tiny();
        d.blocks[0].c = 0;
        assert!(matches!(
            save_descriptor(&d, dir.path().join("x.json")),
            Err(Error::Validation(_))
        ));
        assert!(!dir.path().join("x.json").exists());
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_descriptor("/definitely/not/here.json").unwrap_err();
        assert!(err.is_io());
    }
}
