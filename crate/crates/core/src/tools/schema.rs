//! Closed argument schemas for tool calls.

use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamType {
    Text,
    /// Non-empty list of text.
    TextList,
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamField {
    pub name: &'static str,
    /// Alternative spellings accepted for the same field.
    pub aliases: &'static [&'static str],
    pub ty: ParamType,
    pub required: bool,
}

/// A record schema. Unknown fields are rejected unless `open` is set.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParamSchema {
    pub fields: Vec<ParamField>,
    pub open: bool,
}

impl ParamSchema {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn open() -> Self {
        Self {
            fields: Vec::new(),
            open: true,
        }
    }

    pub fn field(mut self, name: &'static str, ty: ParamType, required: bool) -> Self {
        self.fields.push(ParamField {
            name,
            aliases: &[],
            ty,
            required,
        });
        self
    }

    pub fn field_with_aliases(
        mut self,
        name: &'static str,
        aliases: &'static [&'static str],
        ty: ParamType,
        required: bool,
    ) -> Self {
        self.fields.push(ParamField {
            name,
            aliases,
            ty,
            required,
        });
        self
    }

    /// Checks `args`; the error names the first violation.
    pub fn validate(&self, args: &Map<String, Value>) -> Result<(), String> {
        for key in args.keys() {
            let known = self
                .fields
                .iter()
                .any(|f| f.name == key || f.aliases.contains(&key.as_str()));
            if !known && !self.open {
                return Err(format!("schema mismatch: unexpected argument `{key}`"));
            }
        }
        for field in &self.fields {
            let present: Vec<(&str, &Value)> = std::iter::once(field.name)
                .chain(field.aliases.iter().copied())
                .filter_map(|k| args.get(k).map(|v| (k, v)))
                .collect();
            if present.len() > 1 {
                return Err(format!(
                    "schema mismatch: `{}` given more than once",
                    field.name
                ));
            }
            match present.first() {
                None if field.required => {
                    return Err(format!(
                        "schema mismatch: missing argument `{}`",
                        field.name
                    ));
                }
                None => {}
                Some((key, value)) => check_type(key, field.ty, value)?,
            }
        }
        Ok(())
    }

    /// Text value of a field under its name or any alias.
    pub fn text<'a>(&self, args: &'a Map<String, Value>, name: &str) -> Option<&'a str> {
        let field = self.fields.iter().find(|f| f.name == name)?;
        std::iter::once(field.name)
            .chain(field.aliases.iter().copied())
            .find_map(|k| args.get(k).and_then(Value::as_str))
    }
}

fn check_type(key: &str, ty: ParamType, value: &Value) -> Result<(), String> {
    let ok = match ty {
        ParamType::Any => true,
        ParamType::Text => value.is_string(),
        ParamType::TextList => match value {
            Value::Array(items) => !items.is_empty() && items.iter().all(Value::is_string),
            _ => false,
        },
    };
    if ok {
        Ok(())
    } else {
        let expected = match ty {
            ParamType::Text => "text",
            ParamType::TextList => "a non-empty list of text",
            ParamType::Any => "any value",
        };
        Err(format!("schema mismatch: `{key}` must be {expected}"))
    }
}
