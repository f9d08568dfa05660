//! Versioned text serialization for trained parameters.
//!
//! ```text
//! #claimlens-model-v1
//! section qid.adv
//! meta mode adv_mtl
//! param qid.adv.shared.w 32x32 1.0000000000000000e-1 ...
//! ```
//!
//! Floats carry 17 significant digits, which round-trips every `f64`.

use std::collections::BTreeMap;

use super::store::{Param, ParameterStore};
use crate::error::{Error, Result};

pub const MODEL_HEADER: &str = "#claimlens-model-v1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Section {
    pub name: String,
    pub meta: BTreeMap<String, String>,
    pub params: ParameterStore,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Section {
            name: name.into(),
            ..Section::default()
        }
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Invalid(format!("section `{}` lacks meta `{key}`", self.name)))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse().map_err(|_| {
            Error::Invalid(format!(
                "section `{}`: bad value `{raw}` for `{key}`",
                self.name
            ))
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelFile {
    pub sections: Vec<Section>,
}

impl ModelFile {
    pub fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::MissingSection(name.to_string()))
    }

    pub fn push(&mut self, section: Section) {
        self.sections.retain(|s| s.name != section.name);
        self.sections.push(section);
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(1 << 16);
        out.push_str(MODEL_HEADER);
        out.push('\n');
        for s in &self.sections {
            out.push_str("section ");
            out.push_str(&s.name);
            out.push('\n');
            for (k, v) in &s.meta {
                out.push_str(&format!("meta {k} {v}\n"));
            }
            for (name, p) in s.params.iter() {
                let shape: Vec<String> = p.shape.iter().map(usize::to_string).collect();
                out.push_str(&format!("param {name} {}", shape.join("x")));
                for v in &p.value {
                    out.push_str(&format!(" {v:.16e}"));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == MODEL_HEADER => {}
            Some((_, h)) => {
                return Err(Error::VersionMismatch(format!(
                    "expected model header `{MODEL_HEADER}`, found `{h}`"
                )))
            }
            None => return Err(Error::EmptyInput("model file is empty".into())),
        }
        let mut file = ModelFile::default();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (kind, rest) = line.split_once(' ').unwrap_or((line, ""));
            match kind {
                "section" => file.sections.push(Section::new(rest.trim())),
                "meta" => {
                    let section = current(&mut file, lineno)?;
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    section.meta.insert(k.to_string(), v.to_string());
                }
                "param" => {
                    let section = current(&mut file, lineno)?;
                    let mut parts = rest.split(' ');
                    let name = parts.next().unwrap_or_default();
                    let shape = parts
                        .next()
                        .ok_or_else(|| Error::parse(lineno, "parameter line lacks a shape"))?
                        .split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| Error::parse(lineno, format!("bad shape: {e}")))?;
                    let values = parts
                        .map(|v| v.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| Error::parse(lineno, format!("bad value: {e}")))?;
                    let expected: usize = shape.iter().product();
                    if values.len() != expected {
                        return Err(Error::Shape {
                            name: name.to_string(),
                            expected: shape,
                            found: vec![values.len()],
                        });
                    }
                    let grad = vec![0.0; values.len()];
                    section.params.insert(
                        name,
                        Param {
                            shape,
                            value: values,
                            grad,
                        },
                    )?;
                }
                other => {
                    return Err(Error::parse(
                        lineno,
                        format!("unknown record kind `{other}`"),
                    ))
                }
            }
        }
        Ok(file)
    }
}

fn current(file: &mut ModelFile, line: usize) -> Result<&mut Section> {
    file.sections
        .last_mut()
        .ok_or_else(|| Error::parse(line, "record before any section"))
}
