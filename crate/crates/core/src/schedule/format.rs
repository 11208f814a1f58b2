//! Line-oriented text encoding of a [`DriveSchedule`].
//!
//! See `docs/schedule-format.md` for the grammar. Floats are written with
//! Rust's shortest round-tripping representation, so parsing and writing
//! again reproduces the input byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use super::{Color, DriveSchedule, PanelRef, SubFrame, TimingConfig};
use crate::geometry::{ElectrodeId, Side};

pub const SCHEDULE_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "DUOGLASS-SCHEDULE";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleParseError {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("schedule format version {found} is not supported (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
}

pub fn serialize_schedule(s: &DriveSchedule) -> String {
    let mut out = String::new();
    let t = &s.timing;
    // writing to a String cannot fail
    let _ = writeln!(out, "{MAGIC} v{}", s.format_version);
    let _ = writeln!(
        out,
        "panel name={} cols={} rows={}",
        s.panel.name, s.panel.cols, s.panel.rows
    );
    let _ = writeln!(
        out,
        "timing frame_rate_hz={} subframes_per_frame={} drive_frequency_hz={} settle_margin={}",
        t.frame_rate_hz, t.subframes_per_frame, t.drive_frequency_hz, t.settle_margin
    );
    for sf in &s.subframes {
        let _ = writeln!(
            out,
            "subframe color={} side={} duration_ms={} half_cycles={}",
            sf.color, sf.side, sf.duration_ms, sf.half_cycles
        );
        out.push_str("amplitudes");
        for (id, v) in &sf.amplitudes {
            let _ = write!(out, " {id}={v}");
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
    len: usize,
}

impl<'a> Line<'a> {
    fn split(number: usize, text: &'a str) -> Result<Self, ScheduleParseError> {
        let mut tokens = Vec::new();
        let mut column = 1;
        for piece in text.split(' ') {
            if piece.is_empty() {
                return Err(syntax(
                    number,
                    column,
                    "empty field (fields are separated by one space)",
                ));
            }
            tokens.push(Token { text: piece, column });
            column += piece.len() + 1;
        }
        Ok(Line {
            number,
            tokens,
            len: text.len(),
        })
    }

    fn keyword(&self, want: &str) -> Result<(), ScheduleParseError> {
        let tok = &self.tokens[0];
        if tok.text != want {
            return Err(syntax(
                self.number,
                1,
                format!("expected `{want}`, found `{}`", tok.text),
            ));
        }
        Ok(())
    }

    /// Field `index` (after the keyword) as `key=value` with the given key.
    fn field<T: FromStr>(&self, index: usize, key: &str) -> Result<(T, usize), ScheduleParseError> {
        let Some(tok) = self.tokens.get(index + 1) else {
            return Err(syntax(self.number, self.len + 1, format!("missing field `{key}`")));
        };
        let value = tok
            .text
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| {
                syntax(
                    self.number,
                    tok.column,
                    format!("expected `{key}=`, found `{}`", tok.text),
                )
            })?;
        let parsed = value.parse().map_err(|_| {
            syntax(
                self.number,
                tok.column + key.len() + 1,
                format!("bad value `{value}` for `{key}`"),
            )
        })?;
        Ok((parsed, tok.column + key.len() + 1))
    }

    fn float(&self, index: usize, key: &str) -> Result<f64, ScheduleParseError> {
        let (v, column): (f64, usize) = self.field(index, key)?;
        if !v.is_finite() {
            return Err(syntax(self.number, column, format!("`{key}` must be finite")));
        }
        Ok(v)
    }

    fn end_after(&self, fields: usize) -> Result<(), ScheduleParseError> {
        match self.tokens.get(fields + 1) {
            Some(tok) => Err(syntax(
                self.number,
                tok.column,
                format!("unexpected field `{}`", tok.text),
            )),
            None => Ok(()),
        }
    }
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ScheduleParseError {
    ScheduleParseError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn parse_header(first: Option<&str>) -> Result<(), ScheduleParseError> {
    let Some(first) = first else {
        return Err(ScheduleParseError::Header("empty input".into()));
    };
    let rest = first
        .strip_prefix(MAGIC)
        .and_then(|r| r.strip_prefix(" v"))
        .ok_or_else(|| ScheduleParseError::Header(format!("expected `{MAGIC} v{SCHEDULE_FORMAT_VERSION}`")))?;
    let found: u32 = rest
        .parse()
        .map_err(|_| ScheduleParseError::Header(format!("bad version `{rest}`")))?;
    if found != SCHEDULE_FORMAT_VERSION {
        return Err(ScheduleParseError::Version {
            found,
            supported: SCHEDULE_FORMAT_VERSION,
        });
    }
    Ok(())
}

pub fn parse_schedule(text: &str) -> Result<DriveSchedule, ScheduleParseError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut lines = body.split('\n').enumerate().map(|(i, l)| (i + 1, l));
    parse_header(
        lines
            .next()
            .map(|(_, l)| l)
            .filter(|l| !text.is_empty() && !l.is_empty()),
    )?;

    let mut next = |what: &str| -> Result<Line<'_>, ScheduleParseError> {
        match lines.next() {
            Some((n, l)) => Line::split(n, l),
            None => Err(syntax(
                body.split('\n').count() + 1,
                1,
                format!("unexpected end of input, expected `{what}`"),
            )),
        }
    };

    let l = next("panel")?;
    l.keyword("panel")?;
    let name: String = l.field(0, "name")?.0;
    if !name.bytes().all(|b| b.is_ascii_alphanumeric() || b"_.-".contains(&b)) {
        return Err(syntax(
            l.number,
            l.tokens[1].column + 5,
            "panel name may contain only [A-Za-z0-9_.-]",
        ));
    }
    let panel = PanelRef {
        name,
        cols: l.field(1, "cols")?.0,
        rows: l.field(2, "rows")?.0,
    };
    l.end_after(3)?;

    let l = next("timing")?;
    l.keyword("timing")?;
    let timing = TimingConfig {
        frame_rate_hz: l.float(0, "frame_rate_hz")?,
        subframes_per_frame: l.field(1, "subframes_per_frame")?.0,
        drive_frequency_hz: l.float(2, "drive_frequency_hz")?,
        settle_margin: l.float(3, "settle_margin")?,
    };
    l.end_after(4)?;

    let mut subframes = Vec::new();
    loop {
        let l = next("subframe` or `end")?;
        if l.tokens[0].text == "end" {
            l.end_after(0)?;
            break;
        }
        l.keyword("subframe")?;
        let (color, column): (String, usize) = l.field(0, "color")?;
        let color = Color::parse(&color).ok_or_else(|| syntax(l.number, column, "color must be R, G or B"))?;
        let (side, column): (String, usize) = l.field(1, "side")?;
        let side = match side.as_str() {
            "A" => Side::A,
            "B" => Side::B,
            _ => return Err(syntax(l.number, column, "side must be A or B")),
        };
        let duration_ms = l.float(2, "duration_ms")?;
        let half_cycles = l.field(3, "half_cycles")?.0;
        l.end_after(4)?;

        let a = next("amplitudes")?;
        a.keyword("amplitudes")?;
        let mut amplitudes = BTreeMap::new();
        let mut last: Option<u32> = None;
        for tok in &a.tokens[1..] {
            let (id, v) = tok.text.split_once('=').ok_or_else(|| {
                syntax(
                    a.number,
                    tok.column,
                    format!("expected `id=volts`, found `{}`", tok.text),
                )
            })?;
            let id: u32 = id
                .parse()
                .map_err(|_| syntax(a.number, tok.column, format!("bad electrode id `{id}`")))?;
            if last.is_some_and(|p| id <= p) {
                return Err(syntax(
                    a.number,
                    tok.column,
                    "electrode ids must be strictly increasing",
                ));
            }
            let vcol = tok.column + tok.text.len() - v.len();
            let volts: f64 = v
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| syntax(a.number, vcol, format!("bad amplitude `{v}`")))?;
            amplitudes.insert(ElectrodeId(id), volts);
            last = Some(id);
        }
        subframes.push(SubFrame {
            color,
            side,
            duration_ms,
            half_cycles,
            amplitudes,
        });
    }
    if let Some((n, l)) = lines.next() {
        return Err(syntax(n, 1, format!("unexpected content after `end`: `{l}`")));
    }
    if !text.ends_with('\n') {
        return Err(syntax(body.split('\n').count(), 4, "missing newline after `end`"));
    }
    Ok(DriveSchedule {
        format_version: SCHEDULE_FORMAT_VERSION,
        panel,
        timing,
        subframes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::electro_optics::MaterialResponse;
    use crate::geometry::PanelSpec;
    use crate::schedule::{compile_schedule, FramePair};

    fn sample() -> DriveSchedule {
        let f = FramePair::uniform(4, 4, [0.25, 0.5, 1.0], [0.0, 0.75, 0.1]);
        compile_schedule(
            &f,
            &PanelSpec::stage2(),
            &MaterialResponse::rm257(),
            &TimingConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let s = sample();
        let text = serialize_schedule(&s);
        assert!(text.starts_with("DUOGLASS-SCHEDULE v1\npanel name=stage2 cols=4 rows=4\n"));
        let back = parse_schedule(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(serialize_schedule(&back), text);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(parse_schedule(""), Err(ScheduleParseError::Header(_))));
        assert!(matches!(parse_schedule("hello\n"), Err(ScheduleParseError::Header(_))));
        let text = serialize_schedule(&sample()).replacen("v1", "v7", 1);
        let e = parse_schedule(&text).unwrap_err();
        assert_eq!(e, ScheduleParseError::Version { found: 7, supported: 1 });
        let msg = e.to_string();
        assert!(msg.contains('7') && msg.contains('1'));
    }

    #[test]
    fn field_errors_carry_position() {
        let text = serialize_schedule(&sample()).replacen("frame_rate_hz=60", "frame_rate_hz=sixty", 1);
        assert_eq!(
            parse_schedule(&text),
            Err(ScheduleParseError::Syntax {
                line: 3,
                column: 22,
                message: "bad value `sixty` for `frame_rate_hz`".into()
            })
        );
        let text = serialize_schedule(&sample()).replacen("side=B", "side=C", 1);
        match parse_schedule(&text) {
            Err(ScheduleParseError::Syntax {
                line: 6, column: 23, ..
            }) => {}
            other => panic!("{other:?}"),
        }
        let text = serialize_schedule(&sample()).replace("end\n", "");
        assert!(matches!(parse_schedule(&text), Err(ScheduleParseError::Syntax { .. })));
    }
}
