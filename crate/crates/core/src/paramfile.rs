//! Line-based parameter file format.
//!
//! ```text
//! mode: extreme
//! c: 1583/1000
//! tN: 1/100
//! gamma: 2/7
//! gamma_start: 1/12
//! tsmall: 1/30
//! sizes:
//! 1/2 0          # lower bound of type 1, its redfrac
//! ...
//! 0 0            # sand
//! redspaces:
//! 1/6
//! explicit:
//! 1 0 1 0 0 0    # t redfrac bluefit redfit needs leaves
//! ```

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, ParseError};
use crate::params::{checked, generate_redspaces, DerivedTables, GeneratorConfig, Mode, ParameterSet};
use crate::rational::{parse_rational, Rational};

/// Raw contents of a parameter or generator file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParamFile {
    pub mode: Option<Mode>,
    pub c: Option<Rational>,
    pub t_n: Option<Rational>,
    pub gamma: Option<Rational>,
    pub gamma_start: Option<Rational>,
    pub t_small: Option<Rational>,
    pub margin: Option<Rational>,
    pub sizes: Vec<(Rational, Rational)>,
    pub redspaces: Option<Vec<Rational>>,
    pub explicit: Option<Vec<ExplicitRow>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplicitRow {
    pub t: Rational,
    pub redfrac: Rational,
    pub bluefit: u64,
    pub redfit: u64,
    pub needs: usize,
    pub leaves: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Block {
    None,
    Sizes,
    Redspaces,
    Explicit,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
    .trim()
}

fn int_field<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, ParseError> {
    tok.parse().map_err(|_| ParseError::at(line, format!("bad {what} `{tok}`")))
}

fn rat(tok: &str, line: usize) -> Result<Rational, ParseError> {
    parse_rational(tok).map_err(|e| ParseError::at(line, e.to_string()))
}

/// Parse the textual format without interpreting it.
pub fn parse_param_file(text: &str) -> Result<ParamFile, ParseError> {
    let mut out = ParamFile::default();
    let mut block = Block::None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        if let Some((key, value)) = line.split_once(':') {
            let key = key.trim();
            let value = value.trim();
            block = Block::None;
            if value.is_empty() {
                block = match key {
                    "sizes" => Block::Sizes,
                    "redspaces" => {
                        out.redspaces.get_or_insert_with(Vec::new);
                        Block::Redspaces
                    }
                    "explicit" => {
                        out.explicit.get_or_insert_with(Vec::new);
                        Block::Explicit
                    }
                    _ => return Err(ParseError::at(line_no, format!("unknown block `{key}`"))),
                };
                continue;
            }
            let slot = match key {
                "mode" => {
                    let m = Mode::parse(value)
                        .ok_or_else(|| ParseError::at(line_no, format!("unknown mode `{value}`")))?;
                    if out.mode.replace(m).is_some() {
                        return Err(ParseError::at(line_no, "duplicate `mode`"));
                    }
                    continue;
                }
                "c" => &mut out.c,
                "tN" => &mut out.t_n,
                "gamma" => &mut out.gamma,
                "gamma_start" => &mut out.gamma_start,
                "tsmall" => &mut out.t_small,
                "margin" => &mut out.margin,
                _ => return Err(ParseError::at(line_no, format!("unknown header `{key}`"))),
            };
            if slot.replace(rat(value, line_no)?).is_some() {
                return Err(ParseError::at(line_no, format!("duplicate `{key}`")));
            }
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match block {
            Block::None => return Err(ParseError::at(line_no, "data line outside a block")),
            Block::Sizes => {
                if toks.len() != 2 {
                    return Err(ParseError::at(line_no, "expected `<lower bound> <redfrac>`"));
                }
                out.sizes.push((rat(toks[0], line_no)?, rat(toks[1], line_no)?));
            }
            Block::Redspaces => {
                for t in toks {
                    out.redspaces.as_mut().unwrap().push(rat(t, line_no)?);
                }
            }
            Block::Explicit => {
                if toks.len() != 6 {
                    return Err(ParseError::at(line_no, "expected `t redfrac bluefit redfit needs leaves`"));
                }
                out.explicit.as_mut().unwrap().push(ExplicitRow {
                    t: rat(toks[0], line_no)?,
                    redfrac: rat(toks[1], line_no)?,
                    bluefit: int_field(toks[2], line_no, "bluefit")?,
                    redfit: int_field(toks[3], line_no, "redfit")?,
                    needs: int_field(toks[4], line_no, "needs")?,
                    leaves: int_field(toks[5], line_no, "leaves")?,
                });
            }
        }
    }
    Ok(out)
}

impl ParamFile {
    pub fn generator_config(&self) -> Result<GeneratorConfig, Error> {
        let cfg = GeneratorConfig {
            mode: self.mode.ok_or(ParseError::MissingHeader("mode"))?,
            c: self.c.clone().ok_or(ParseError::MissingHeader("c"))?,
            t_n: self.t_n.clone().ok_or(ParseError::MissingHeader("tN"))?,
            gamma: self.gamma.clone().ok_or(ParseError::MissingHeader("gamma"))?,
            gamma_start: self.gamma_start.clone().ok_or(ParseError::MissingHeader("gamma_start"))?,
            t_small: self.t_small.clone().ok_or(ParseError::MissingHeader("tsmall"))?,
            margin: self.margin.clone().unwrap_or_else(Rational::zero),
            seeds: self.sizes.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Interpret the file as a complete parameter set and validate it.
    pub fn parameter_set(&self) -> Result<ParameterSet, Error> {
        let mode = self.mode.ok_or(ParseError::MissingHeader("mode"))?;
        let c = self.c.clone().ok_or(ParseError::MissingHeader("c"))?;
        let t_n = self.t_n.clone().ok_or(ParseError::MissingHeader("tN"))?;
        let gamma = self.gamma.clone().ok_or(ParseError::MissingHeader("gamma"))?;
        if self.sizes.is_empty() {
            return Err(ParseError::Other("empty `sizes` block".into()).into());
        }
        let mut boundaries = vec![Rational::one()];
        let mut redfrac = Vec::new();
        for (k, (lower, a)) in self.sizes.iter().enumerate() {
            let prev = boundaries.last().unwrap();
            if lower.is_negative() || lower >= prev {
                return Err(ParseError::Other(format!(
                    "size lower bound {lower} (entry {}) not strictly below {prev}",
                    k + 1
                ))
                .into());
            }
            if lower.is_zero() && k + 1 != self.sizes.len() {
                return Err(ParseError::Other("lower bound 0 must be the last entry".into()).into());
            }
            redfrac.push(a.clone());
            if lower.is_positive() {
                boundaries.push(lower.clone());
            }
        }
        if redfrac.len() < boundaries.len() {
            redfrac.push(Rational::zero());
        }
        if *boundaries.last().unwrap() != t_n {
            return Err(Error::Config(format!(
                "tN {t_n} differs from the smallest boundary {}",
                boundaries.last().unwrap()
            )));
        }
        let mut p = ParameterSet {
            mode,
            epsilon: t_n,
            boundaries,
            redfrac,
            redspaces: Vec::new(),
            target: c,
            gamma,
            gamma_start: self.gamma_start.clone().unwrap_or_else(Rational::zero),
            t_small: self.t_small.clone().unwrap_or_else(Rational::zero),
            margin: self.margin.clone().unwrap_or_else(Rational::zero),
            explicit: None,
        };
        p.redspaces = match &self.redspaces {
            Some(r) => r.clone(),
            None => generate_redspaces(&p),
        };
        if let Some(rows) = &self.explicit {
            if rows.len() != p.num_types() {
                return Err(Error::Config(format!(
                    "explicit block has {} rows for {} types",
                    rows.len(),
                    p.num_types()
                )));
            }
            let mut d = DerivedTables { bluefit: vec![], redfit: vec![], needs: vec![], leaves: vec![] };
            for (i, row) in rows.iter().enumerate() {
                if row.t != p.boundaries[i] || row.redfrac != p.redfrac[i] {
                    return Err(Error::Config(format!(
                        "explicit row {} ({} {}) disagrees with sizes ({} {})",
                        i + 1,
                        row.t,
                        row.redfrac,
                        p.boundaries[i],
                        p.redfrac[i]
                    )));
                }
                d.bluefit.push(row.bluefit);
                d.redfit.push(row.redfit);
                d.needs.push(row.needs);
                d.leaves.push(row.leaves);
            }
            p.explicit = Some(d);
        }
        checked(p)
    }
}

pub fn load_params(text: &str) -> Result<ParameterSet, Error> {
    parse_param_file(text)?.parameter_set()
}

/// Canonical text of a parameter set; stable input for digests.
pub fn format_params(p: &ParameterSet) -> String {
    let mut s = String::new();
    writeln!(s, "mode: {}", p.mode).unwrap();
    writeln!(s, "c: {}", p.target).unwrap();
    writeln!(s, "tN: {}", p.epsilon).unwrap();
    writeln!(s, "gamma: {}", p.gamma).unwrap();
    writeln!(s, "gamma_start: {}", p.gamma_start).unwrap();
    writeln!(s, "tsmall: {}", p.t_small).unwrap();
    if !p.margin.is_zero() {
        writeln!(s, "margin: {}", p.margin).unwrap();
    }
    writeln!(s, "sizes:").unwrap();
    for i in 0..p.num_types() {
        writeln!(s, "{} {}", p.lower(i), p.redfrac[i]).unwrap();
    }
    writeln!(s, "redspaces:").unwrap();
    for v in &p.redspaces {
        writeln!(s, "{v}").unwrap();
    }
    if let Some(d) = &p.explicit {
        writeln!(s, "explicit:").unwrap();
        for i in 0..p.num_types() {
            writeln!(
                s,
                "{} {} {} {} {} {}",
                p.boundaries[i], p.redfrac[i], d.bluefit[i], d.redfit[i], d.needs[i], d.leaves[i]
            )
            .unwrap();
        }
    }
    s
}

pub fn params_digest(p: &ParameterSet) -> String {
    hex::encode(Sha256::digest(format_params(p).as_bytes()))
}

/// Bundled parameter sets.
pub mod bundled {
    use super::*;

    pub const EXTREME_1583: &str = include_str!("../data/extreme_1583.params");
    pub const SUPER_15884: &str = include_str!("../data/super_15884.params");
    pub const EXTREME_1583_GENERATOR: &str = include_str!("../data/extreme_1583.gen");

    pub fn extreme_1583() -> ParameterSet {
        load_params(EXTREME_1583).expect("bundled extreme set is valid")
    }

    pub fn super_15884() -> ParameterSet {
        load_params(SUPER_15884).expect("bundled super set is valid")
    }
}
