//! JSON instance documents.
//!
//! ```json
//! { "entitlements": ["1/2", 0.5],
//!   "requirements": [[1, "1/5"], ["2/5", 0.8]],
//!   "users": ["a", "b"], "resources": ["cpu", "disk"] }
//! ```
//!
//! Any number may be written as a JSON number or as a `"p/q"` string.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ProblemInstance};
use crate::rational::parse_fraction;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("malformed instance document at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field {field}: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum NumberOrFraction {
    Number(f64),
    Text(String),
}

impl NumberOrFraction {
    fn value(&self, field: impl FnOnce() -> String) -> Result<f64, DocumentError> {
        match self {
            NumberOrFraction::Number(v) => Ok(*v),
            NumberOrFraction::Text(s) => parse_fraction(s).ok_or_else(|| DocumentError::Field {
                field: field(),
                message: format!("cannot parse {s:?} as a number or p/q fraction"),
            }),
        }
    }
}

/// Wire form of a [`ProblemInstance`].
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub entitlements: Vec<NumberOrFraction>,
    pub requirements: Vec<Vec<NumberOrFraction>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resources: Option<Vec<String>>,
}

impl InstanceDocument {
    pub fn into_instance(self) -> Result<ProblemInstance, DocumentError> {
        let entitlements = self
            .entitlements
            .iter()
            .enumerate()
            .map(|(i, v)| v.value(|| format!("entitlements[{}]", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut requirements = Vec::with_capacity(self.requirements.len());
        for (i, row) in self.requirements.iter().enumerate() {
            let row = row
                .iter()
                .enumerate()
                .map(|(j, v)| v.value(|| format!("requirements[{}][{}]", i + 1, j + 1)))
                .collect::<Result<Vec<_>, _>>()?;
            requirements.push(row);
        }
        let mut inst = ProblemInstance::new(entitlements, requirements)?;
        if let Some(users) = self.users {
            inst = inst.with_user_names(users)?;
        }
        if let Some(resources) = self.resources {
            inst = inst.with_resource_names(resources)?;
        }
        Ok(inst)
    }

    pub fn from_instance(inst: &ProblemInstance) -> Self {
        Self {
            entitlements: inst
                .entitlements()
                .iter()
                .map(|&v| NumberOrFraction::Number(v))
                .collect(),
            requirements: inst
                .requirements()
                .iter()
                .map(|row| row.iter().map(|&v| NumberOrFraction::Number(v)).collect())
                .collect(),
            users: inst.user_names().map(<[String]>::to_vec),
            resources: inst.resource_names().map(<[String]>::to_vec),
        }
    }
}

/// Parses an instance document from JSON text.
pub fn parse_instance(text: &str) -> Result<ProblemInstance, DocumentError> {
    let doc: InstanceDocument = serde_json::from_str(text).map_err(|e| DocumentError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    doc.into_instance()
}

pub fn instance_to_json(inst: &ProblemInstance) -> String {
    serde_json::to_string_pretty(&InstanceDocument::from_instance(inst))
        .expect("instance documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mixed_numbers_and_names() {
        let inst = parse_instance(
            r#"{"entitlements": ["1/3", 0.6666666666666666],
                "requirements": [[1, "1/5"], ["2/5", 0.8]],
                "users": ["a", "b"], "resources": ["cpu", "disk"]}"#,
        )
        .unwrap();
        assert_eq!(inst.entitlements()[0], 1.0 / 3.0);
        assert_eq!(inst.requirements()[0][1], 0.2);
        assert_eq!(inst.resource_label(1), "disk");
        assert_eq!(inst.user_label(0), "a");
    }

    #[test]
    fn bad_fraction_names_the_field() {
        let err = parse_instance(r#"{"entitlements": [1], "requirements": [["x/2"]]}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("requirements[1][1]"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_instance("{\n  \"entitlements\": [1,\n}").unwrap_err();
        match err {
            DocumentError::Syntax { line, .. } => assert!(line >= 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn name_count_mismatch_is_rejected() {
        let err = parse_instance(r#"{"entitlements": [1], "requirements": [[1]], "users": ["a", "b"]}"#)
            .unwrap_err();
        assert!(matches!(err, DocumentError::Model(ModelError::DimensionMismatch { .. })));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_instance(r#"{"entitlements": [1], "requirements": [[1]], "extra": 1}"#).is_err());
    }

    #[test]
    fn json_roundtrip_preserves_values() {
        let inst = crate::fixtures::greedy3();
        let back = parse_instance(&instance_to_json(&inst)).unwrap();
        assert_eq!(inst, back);
    }
}
