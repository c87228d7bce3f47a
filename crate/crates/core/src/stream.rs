//! Item streams and packing traces as text.
//!
//! A stream is one rational size per line. A trace records every placement and every
//! later change the marking step made, so a packing can be replayed and compared.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ParseError;
use crate::item::{Color, Mark};
use crate::packer::{PackOutcome, Placement, Update};
use crate::params::Mode;
use crate::rational::{parse_rational, Rational};

pub const TRACE_HEADER: &str = "# harmonic-trace v1";

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

/// Parse an item stream. Sizes must lie in `(0, 1]`.
pub fn parse_stream(text: &str) -> Result<Vec<Rational>, ParseError> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let size = parse_rational(line).map_err(|e| ParseError::at(k + 1, e.to_string()))?;
        if !size.is_positive() || size > Rational::one() {
            return Err(ParseError::at(k + 1, format!("item size {size} outside (0,1]")));
        }
        out.push(size);
    }
    Ok(out)
}

pub fn format_stream(sizes: &[Rational]) -> String {
    let mut s = String::new();
    for x in sizes {
        let _ = writeln!(s, "{x}");
    }
    s
}

/// `count` sizes drawn uniformly from `{1/grid, 2/grid, ..., 1}`.
pub fn random_stream(seed: u64, count: usize, grid: u64) -> Vec<Rational> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = grid.max(1);
    (0..count).map(|_| Rational::new(rng.gen_range(1..=grid) as i64, grid as i64)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Place(Placement),
    Update(Update),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub digest: String,
    pub mode: Mode,
    pub events: Vec<TraceEvent>,
    pub bins: Option<usize>,
}

impl Trace {
    pub fn new(digest: String, mode: Mode) -> Self {
        Trace { digest, mode, events: Vec::new(), bins: None }
    }

    pub fn record(&mut self, outcome: &PackOutcome) {
        self.events.push(TraceEvent::Place(outcome.placement.clone()));
        self.events.extend(outcome.updates.iter().cloned().map(TraceEvent::Update));
    }

    /// Item sizes in arrival order.
    pub fn sizes(&self) -> Vec<Rational> {
        self.events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Place(p) => Some(p.size.clone()),
                TraceEvent::Update(_) => None,
            })
            .collect()
    }

    pub fn format(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{TRACE_HEADER}");
        let _ = writeln!(s, "params-sha256: {}", self.digest);
        let _ = writeln!(s, "mode: {}", self.mode);
        for e in &self.events {
            let _ = writeln!(s, "{}", format_event(e));
        }
        if let Some(b) = self.bins {
            let _ = writeln!(s, "bins: {b}");
        }
        s
    }
}

/// One trace line. Items, types and bins are numbered from 1.
pub fn format_event(e: &TraceEvent) -> String {
    match e {
        TraceEvent::Place(p) => format!(
            "item={} size={} type={} color={} bin={} bonus={}",
            p.item + 1,
            p.size,
            p.ty + 1,
            p.color,
            p.bin + 1,
            u8::from(p.bonus)
        ),
        TraceEvent::Update(Update::Mark { item, mark, color }) => {
            format!("update item={} mark={} color={}", item + 1, mark, color)
        }
        TraceEvent::Update(Update::Relabel { item, label, color }) => {
            format!("relabel item={} type={} color={}", item + 1, label + 1, color)
        }
    }
}

struct Fields<'a> {
    line: usize,
    toks: std::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn take(&mut self, key: &str) -> Result<&'a str, ParseError> {
        let tok = self.toks.next().ok_or_else(|| ParseError::at(self.line, format!("missing `{key}=`")))?;
        tok.strip_prefix(key)
            .and_then(|t| t.strip_prefix('='))
            .ok_or_else(|| ParseError::at(self.line, format!("expected `{key}=`, found `{tok}`")))
    }

    fn index(&mut self, key: &str) -> Result<usize, ParseError> {
        let tok = self.take(key)?;
        match tok.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v - 1),
            _ => Err(ParseError::at(self.line, format!("bad {key} `{tok}`"))),
        }
    }

    fn color(&mut self) -> Result<Color, ParseError> {
        let tok = self.take("color")?;
        Color::parse(tok).ok_or_else(|| ParseError::at(self.line, format!("bad color `{tok}`")))
    }

    fn done(mut self) -> Result<(), ParseError> {
        match self.toks.next() {
            None => Ok(()),
            Some(t) => Err(ParseError::at(self.line, format!("unexpected `{t}`"))),
        }
    }
}

pub fn parse_trace(text: &str) -> Result<Trace, ParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == TRACE_HEADER => {}
        _ => return Err(ParseError::MissingHeader("# harmonic-trace v1")),
    }
    let mut digest = None;
    let mut mode = None;
    let mut events = Vec::new();
    let mut bins = None;
    for (k, raw) in lines {
        let line_no = k + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        if bins.is_some() {
            return Err(ParseError::at(line_no, "content after `bins:`"));
        }
        if let Some(rest) = line.strip_prefix("params-sha256:") {
            digest = Some(rest.trim().to_string());
            continue;
        }
        if let Some(rest) = line.strip_prefix("mode:") {
            mode = Some(Mode::parse(rest.trim()).ok_or_else(|| ParseError::at(line_no, "unknown mode"))?);
            continue;
        }
        if let Some(rest) = line.strip_prefix("bins:") {
            let v = rest.trim().parse().map_err(|_| ParseError::at(line_no, "bad bin count"))?;
            bins = Some(v);
            continue;
        }
        let mut f = Fields { line: line_no, toks: line.split_whitespace() };
        let event = if line.starts_with("item=") {
            let item = f.index("item")?;
            let size_tok = f.take("size")?;
            let size = parse_rational(size_tok).map_err(|e| ParseError::at(line_no, e.to_string()))?;
            if !size.is_positive() || size > Rational::one() {
                return Err(ParseError::at(line_no, format!("item size {size} outside (0,1]")));
            }
            let ty = f.index("type")?;
            let color = f.color()?;
            let bin = f.index("bin")?;
            let bonus = match f.take("bonus")? {
                "0" => false,
                "1" => true,
                t => return Err(ParseError::at(line_no, format!("bad bonus flag `{t}`"))),
            };
            TraceEvent::Place(Placement { item, size, ty, color, bin, bonus })
        } else if f.toks.clone().next() == Some("update") {
            f.toks.next();
            let item = f.index("item")?;
            let tok = f.take("mark")?;
            let mark = Mark::parse(tok).ok_or_else(|| ParseError::at(line_no, format!("bad mark `{tok}`")))?;
            let color = f.color()?;
            TraceEvent::Update(Update::Mark { item, mark, color })
        } else if f.toks.clone().next() == Some("relabel") {
            f.toks.next();
            let item = f.index("item")?;
            let label = f.index("type")?;
            let color = f.color()?;
            TraceEvent::Update(Update::Relabel { item, label, color })
        } else {
            return Err(ParseError::at(line_no, format!("unrecognised line `{line}`")));
        };
        f.done()?;
        events.push(event);
    }
    Ok(Trace {
        digest: digest.ok_or(ParseError::MissingHeader("params-sha256"))?,
        mode: mode.ok_or(ParseError::MissingHeader("mode"))?,
        events,
        bins,
    })
}
