//! The `[section]` / `key = value` text format shared by run configs,
//! simulation reports and study datasets.
//!
//! `#` starts a comment anywhere on a line. Keys are lower-case
//! identifiers; values run to the end of the line and are trimmed. Sections
//! may repeat; keys may not repeat within one section.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KvError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: `{key}` appears outside any section; add a `[section]` header above it")]
    MissingSection { line: usize, key: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: duplicate key `{key}` in [{section}]")]
    DuplicateKey { line: usize, section: String, key: String },
    #[error("line {line}: section [{section}] may appear only once")]
    DuplicateSection { line: usize, section: String },
    #[error("line {line}: `{key}` expects {expected}, found `{value}`")]
    Type {
        line: usize,
        key: String,
        expected: &'static str,
        value: String,
    },
    #[error("line {line}: `{key}`: {message}")]
    Invalid { line: usize, key: String, message: String },
    #[error("[{section}] (line {line}) is missing required key `{key}`")]
    MissingKey { line: usize, section: String, key: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub sections: Vec<Section>,
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl Document {
    pub fn parse(text: &str) -> Result<Document, KvError> {
        let mut doc = Document::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').map(str::trim).unwrap_or("");
                if !is_ident(name) {
                    return Err(KvError::Syntax {
                        line,
                        message: format!("bad section header `{content}`"),
                    });
                }
                doc.sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(KvError::Syntax {
                    line,
                    message: format!("expected `key = value`, found `{content}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !is_ident(key) {
                return Err(KvError::Syntax {
                    line,
                    message: format!("bad key `{key}`"),
                });
            }
            if value.is_empty() {
                return Err(KvError::Syntax {
                    line,
                    message: format!("`{key}` has no value"),
                });
            }
            let Some(section) = doc.sections.last_mut() else {
                return Err(KvError::MissingSection {
                    line,
                    key: key.to_string(),
                });
            };
            if section.entries.iter().any(|e| e.key == key) {
                return Err(KvError::DuplicateKey {
                    line,
                    section: section.name.clone(),
                    key: key.to_string(),
                });
            }
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.to_string(),
                line,
            });
        }
        Ok(doc)
    }

    /// Rejects sections outside `known` and repeats of any section in `single`.
    pub fn check_sections(&self, known: &[&str], single: &[&str]) -> Result<(), KvError> {
        for (i, s) in self.sections.iter().enumerate() {
            if !known.contains(&s.name.as_str()) {
                return Err(KvError::UnknownSection {
                    line: s.line,
                    section: s.name.clone(),
                });
            }
            if single.contains(&s.name.as_str()) && self.sections[..i].iter().any(|p| p.name == s.name) {
                return Err(KvError::DuplicateSection {
                    line: s.line,
                    section: s.name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn sections_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }
}

/// Reads keys from one section and reports any it did not consume.
pub struct SectionReader<'a> {
    name: &'a str,
    line: usize,
    entries: &'a [Entry],
    used: Vec<bool>,
}

impl<'a> SectionReader<'a> {
    pub fn new(section: &'a Section) -> Self {
        SectionReader {
            name: &section.name,
            line: section.line,
            entries: &section.entries,
            used: vec![false; section.entries.len()],
        }
    }

    /// Reader over an absent section: every key reads as missing.
    pub fn empty(name: &'a str) -> Self {
        SectionReader {
            name,
            line: 0,
            entries: &[],
            used: Vec::new(),
        }
    }

    pub fn of(doc: &'a Document, name: &'a str) -> Self {
        doc.section(name).map_or_else(|| Self::empty(name), Self::new)
    }

    pub fn line(&self) -> usize {
        self.line
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.iter().any(|e| e.key == key)
    }

    pub fn raw(&mut self, key: &str) -> Option<&'a Entry> {
        let i = self.entries.iter().position(|e| e.key == key)?;
        self.used[i] = true;
        Some(&self.entries[i])
    }

    pub fn parsed<T: FromStr>(&mut self, key: &str, expected: &'static str) -> Result<Option<T>, KvError> {
        let Some(e) = self.raw(key) else {
            return Ok(None);
        };
        e.value.parse().map(Some).map_err(|_| KvError::Type {
            line: e.line,
            key: key.to_string(),
            expected,
            value: e.value.clone(),
        })
    }

    pub fn f64(&mut self, key: &str) -> Result<Option<f64>, KvError> {
        let v: Option<f64> = self.parsed(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => {
                let e = self.raw(key).expect("just read");
                Err(KvError::Type {
                    line: e.line,
                    key: key.to_string(),
                    expected: "a finite number",
                    value: e.value.clone(),
                })
            }
            v => Ok(v),
        }
    }

    pub fn u32(&mut self, key: &str) -> Result<Option<u32>, KvError> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn string(&mut self, key: &str) -> Option<String> {
        self.raw(key).map(|e| e.value.clone())
    }

    pub fn require<T>(&self, key: &str, v: Option<T>) -> Result<T, KvError> {
        v.ok_or_else(|| KvError::MissingKey {
            line: self.line,
            section: self.name.to_string(),
            key: key.to_string(),
        })
    }

    pub fn invalid(&self, key: &str, message: impl Into<String>) -> KvError {
        let line = self.entries.iter().find(|e| e.key == key).map_or(self.line, |e| e.line);
        KvError::Invalid {
            line,
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// Fails on the first key that was never read.
    pub fn finish(self) -> Result<(), KvError> {
        match self.used.iter().position(|u| !u) {
            Some(i) => Err(KvError::UnknownKey {
                line: self.entries[i].line,
                section: self.name.to_string(),
                key: self.entries[i].key.clone(),
            }),
            None => Ok(()),
        }
    }
}

/// Accumulates sections in output order.
#[derive(Default)]
pub struct Writer {
    out: String,
}

impl Writer {
    pub fn section(&mut self, name: &str) -> &mut Self {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        let _ = writeln!(self.out, "[{name}]");
        self
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.out, "{key} = {value}");
        self
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        let _ = writeln!(self.out, "# {text}");
        self
    }

    pub fn finish(self) -> String {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let doc = Document::parse("# top\n[a]\nx = 1 # one\n\n[b]\ny=two words\n[a]\nx = 3\n").unwrap();
        assert_eq!(doc.sections.len(), 3);
        assert_eq!(doc.sections[1].entries[0].value, "two words");
        assert_eq!(doc.sections_named("a").count(), 2);
        assert!(matches!(
            doc.check_sections(&["a", "b"], &["a"]),
            Err(KvError::DuplicateSection { line: 7, .. })
        ));
    }

    #[test]
    fn errors_carry_lines() {
        assert_eq!(
            Document::parse("x = 1\n"),
            Err(KvError::MissingSection {
                line: 1,
                key: "x".into()
            })
        );
        assert!(matches!(
            Document::parse("[a]\nnonsense\n"),
            Err(KvError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            Document::parse("[a]\nx = 1\nx = 2\n"),
            Err(KvError::DuplicateKey { line: 3, .. })
        ));
        assert!(matches!(
            Document::parse("[A b]\n"),
            Err(KvError::Syntax { line: 1, .. })
        ));

        let doc = Document::parse("[t]\nrate = sixty\nother = 1\n").unwrap();
        let mut r = SectionReader::of(&doc, "t");
        assert!(matches!(r.f64("rate"), Err(KvError::Type { line: 2, .. })));
        assert!(matches!(r.finish(), Err(KvError::UnknownKey { line: 3, .. })));
    }
}
