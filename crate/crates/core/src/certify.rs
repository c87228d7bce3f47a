//! Dual feasibility checks per class, the binary search over the mixing value, and
//! certificates that can be re-checked without any search.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, ParseError};
use crate::item::Mark;
use crate::knapsack::{knapsack_max, KnapItem};
use crate::paramfile::params_digest;
use crate::params::{DerivedTables, Mode, ParameterSet, SizeClass};
use crate::rational::{parse_rational, q, Rational};
use crate::weights::{Duals, WeightContext};

/// Where a knapsack entry comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotKind {
    Type(usize),
    /// Large items with sizes in `(lower, upper]` whose blue bins offer redspace `leaves`.
    Large { upper: Rational, leaves: usize },
}

/// One knapsack entry of a class: a size interval with its two weights and dual bonuses.
#[derive(Debug, Clone)]
pub struct Slot {
    pub kind: SlotKind,
    pub lower: Rational,
    pub w: Rational,
    pub v: Rational,
    pub y1_coef: Rational,
    pub y2_coef: Rational,
}

impl Slot {
    pub fn omega(&self, y: &Duals) -> Rational {
        (Rational::one() - &y.y3) * &self.w + &y.y3 * &self.v + &self.y1_coef * &y.y1 + &self.y2_coef * &y.y2
    }

    pub fn label(&self) -> String {
        match &self.kind {
            SlotKind::Type(i) => format!("type{}", i + 1),
            SlotKind::Large { upper, .. } => format!("large({},{}]", self.lower, upper),
        }
    }
}

/// The critical medium type of a class above 1/3, with the large interval that completes
/// its critical bins.
#[derive(Debug, Clone)]
pub struct Critical {
    pub type_index: usize,
    pub slot: usize,
    pub large_slot: usize,
    pub redfrac: Rational,
    /// Weights of the critical item when it carries mark R.
    pub r_w: Rational,
    pub r_v: Rational,
    /// Weight of the critical bin (large item, unmixed critical item, sand).
    pub critical_weight: Rational,
}

#[derive(Debug, Clone)]
pub struct ClassModel {
    pub mode: Mode,
    pub class: usize,
    pub slots: Vec<Slot>,
    pub sand_rate: Rational,
    pub critical: Option<Critical>,
}

/// Witness pattern over the slots of a class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotPattern {
    pub counts: Vec<u64>,
    /// Critical items counted in `counts` that carry mark R.
    pub r_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMax {
    pub value: Rational,
    pub pattern: SlotPattern,
}

/// Weight of the critical bin: a large item, one unmixed critical item and sand.
pub fn critical_weight(ctx: &WeightContext<'_>) -> Option<Rational> {
    let c = ctx.critical()?;
    let p = ctx.params;
    let residual = p.upper(c) - p.lower(c);
    Some(Rational::one() + ctx.full(c) + ctx.weight_sand(&residual))
}

impl ClassModel {
    pub fn build(p: &ParameterSet, tables: &DerivedTables, class: usize) -> Self {
        let ctx = WeightContext::new(p, tables, class);
        let crit = ctx.critical();
        let k_max = p.k_max();
        let mut slots = Vec::new();
        let zero = Rational::zero;
        let mut large_slot = None;
        let push_large = |slots: &mut Vec<Slot>, lower: Rational, upper: Rational, leaves: usize| {
            let (w, v) = ctx.large_pair(leaves);
            slots.push(Slot { kind: SlotKind::Large { upper, leaves }, lower, w, v, y1_coef: zero(), y2_coef: zero() });
        };
        if p.mode == Mode::Extreme {
            // All items above 1/2 form one type for the algorithm; the analysis splits them by
            // the redspace their bins offer.
            let half = q(1, 2);
            if class == 0 {
                push_large(&mut slots, half, Rational::one(), 0);
            } else if let Some(c) = crit {
                let cut = Rational::one() - p.upper(c);
                large_slot = Some(slots.len());
                push_large(&mut slots, cut.clone(), Rational::one(), 0);
                push_large(&mut slots, half, cut, k_max);
            } else {
                push_large(&mut slots, q(2, 3), Rational::one(), 0);
                push_large(&mut slots, half, q(2, 3), k_max);
            }
        }
        let mut crit_slot = None;
        for i in 0..p.sand() {
            if p.mode == Mode::Extreme && p.size_class(i) == SizeClass::Large {
                continue;
            }
            let (w, v) = ctx.weight_pair(i, Mark::N);
            let y1_coef = if Some(i) == crit { ctx.critical_bonus().unwrap() } else { zero() };
            let y2_coef = if ctx.combines_with_critical(i) { ctx.red_part(i) } else { zero() };
            if Some(i) == crit {
                crit_slot = Some(slots.len());
            }
            slots.push(Slot { kind: SlotKind::Type(i), lower: p.lower(i), w, v, y1_coef, y2_coef });
        }
        let critical = match (p.mode, crit) {
            (Mode::Extreme, Some(c)) => {
                let (r_w, r_v) = ctx.weight_pair(c, Mark::R);
                Some(Critical {
                    type_index: c,
                    slot: crit_slot.unwrap(),
                    large_slot: large_slot.unwrap(),
                    redfrac: p.redfrac[c].clone(),
                    r_w,
                    r_v,
                    critical_weight: critical_weight(&ctx).unwrap(),
                })
            }
            _ => None,
        };
        ClassModel { mode: p.mode, class, slots, sand_rate: ctx.sand_rate().clone(), critical }
    }

    /// Dual values fixed by the ratio: tight critical constraints when the ratio is below the
    /// critical-bin weight, zero otherwise.
    pub fn duals(&self, ratio: &Rational, y3: Rational) -> Duals {
        match &self.critical {
            Some(cr) if *ratio < cr.critical_weight => {
                let gap = &cr.critical_weight - ratio;
                let a = &cr.redfrac;
                let one = Rational::one();
                let y2 = Rational::integer(2) / (&one - a) * (&one + (&one - a) / (&one + a)) * &gap;
                Duals { y1: gap, y2, y3 }
            }
            _ => Duals::mix(y3),
        }
    }

    /// The critical bin with a large item above `1 - t` and one critical item: its pattern
    /// with an N-item is handled by the first two dual constraints, so with positive `y1` only
    /// the R-marked variant is left to the knapsack.
    fn fixed_pattern(&self, cr: &Critical, y: &Duals) -> ClassMax {
        let large = &self.slots[cr.large_slot];
        let item = &self.slots[cr.slot];
        let residual = Rational::one() - &large.lower - &item.lower;
        let sand = &residual * &self.sand_rate;
        let mut counts = vec![0; self.slots.len()];
        counts[cr.large_slot] = 1;
        counts[cr.slot] = 1;
        if y.y1.is_zero() {
            let value = large.omega(y) + item.omega(y) + sand;
            ClassMax { value, pattern: SlotPattern { counts, r_count: 0 } }
        } else {
            let r_omega = (Rational::one() - &y.y3) * &cr.r_w + &y.y3 * &cr.r_v;
            let value = large.omega(y) + r_omega + sand;
            ClassMax { value, pattern: SlotPattern { counts, r_count: 1 } }
        }
    }

    /// Residual space of the critical bin must not fit any non-sand item, otherwise the
    /// critical patterns are not unique.
    pub fn critical_is_unique(&self) -> bool {
        match &self.critical {
            None => true,
            Some(cr) => {
                let residual = Rational::one() - &self.slots[cr.large_slot].lower - &self.slots[cr.slot].lower;
                self.slots.iter().all(|s| s.lower >= residual)
            }
        }
    }

    fn solve_over(&self, y: &Duals, skip: Option<usize>) -> ClassMax {
        let items: Vec<KnapItem> = self
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| KnapItem {
                lower: if Some(i) == skip { Rational::zero() } else { s.lower.clone() },
                value: s.omega(y),
            })
            .collect();
        let res = knapsack_max(&items, &self.sand_rate);
        ClassMax { value: res.value, pattern: SlotPattern { counts: res.counts, r_count: 0 } }
    }

    /// Maximum of the mixed weight over all patterns of the class.
    pub fn max_omega(&self, y: &Duals) -> ClassMax {
        match &self.critical {
            None => self.solve_over(y, None),
            Some(cr) => {
                let mut best = self.solve_over(y, Some(cr.large_slot));
                for cand in [self.solve_over(y, Some(cr.slot)), self.fixed_pattern(cr, y)] {
                    if cand.value > best.value {
                        best = cand;
                    }
                }
                best
            }
        }
    }

    /// `(w(q), v(q))` of a witness pattern.
    pub fn pattern_weights(&self, pat: &SlotPattern) -> (Rational, Rational) {
        let mut used = Rational::zero();
        let mut w = Rational::zero();
        let mut v = Rational::zero();
        for (s, &c) in self.slots.iter().zip(&pat.counts) {
            if c > 0 {
                used += s.lower.scale(c as i64);
                w += s.w.scale(c as i64);
                v += s.v.scale(c as i64);
            }
        }
        if let (Some(cr), true) = (&self.critical, pat.r_count > 0) {
            let r = pat.r_count as i64;
            w += (&cr.r_w - &self.slots[cr.slot].w).scale(r);
            v += (&cr.r_v - &self.slots[cr.slot].v).scale(r);
        }
        let sand = (Rational::one() - used) * &self.sand_rate;
        (w + &sand, v + sand)
    }

    pub fn describe_pattern(&self, pat: &SlotPattern) -> String {
        let mut parts = Vec::new();
        for (s, &c) in self.slots.iter().zip(&pat.counts) {
            if c > 0 {
                parts.push(format!("{}x{}", c, s.label()));
            }
        }
        if pat.r_count > 0 {
            parts.push(format!("R={}", pat.r_count));
        }
        if parts.is_empty() {
            "sand".into()
        } else {
            parts.join(" ")
        }
    }
}

/// Classes that can occur as the class of the smallest unmixed red item, plus class 0.
pub fn classes_to_certify(p: &ParameterSet, tables: &DerivedTables) -> Vec<usize> {
    let mut ks: Vec<usize> =
        (0..p.num_types()).filter(|&i| p.redfrac[i].is_positive()).map(|i| tables.needs[i]).filter(|&k| k > 0).collect();
    ks.push(0);
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Value recorded for one class of a certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntryValue {
    /// Class 0: a single knapsack over blue weights.
    WOnly,
    Mixed(Rational),
    /// No mixing: one of the pure weights (`y3` of 0 or 1) already stays below the ratio.
    Simple,
}

impl EntryValue {
    fn y3(&self) -> Rational {
        match self {
            EntryValue::WOnly | EntryValue::Simple => Rational::zero(),
            EntryValue::Mixed(y) => y.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub y3: Rational,
    pub max: Rational,
    pub pattern: String,
    pub w: Rational,
    pub v: Rational,
}

#[derive(Debug, Clone)]
pub struct ClassOutcome {
    pub class: usize,
    pub entry: Option<EntryValue>,
    pub probes: Vec<Probe>,
    pub critical_weight: Option<Rational>,
}

/// Binary search for a mixing value whose knapsack maximum stays at or below `ratio`.
pub fn dual_feasible(model: &ClassModel, ratio: &Rational, max_iters: usize) -> ClassOutcome {
    let mut probes = Vec::new();
    let cw = model.critical.as_ref().map(|c| c.critical_weight.clone());
    if model.class == 0 {
        let best = model.max_omega(&Duals::mix(Rational::zero()));
        let (w, v) = model.pattern_weights(&best.pattern);
        let ok = best.value <= *ratio;
        probes.push(Probe { y3: Rational::zero(), max: best.value, pattern: model.describe_pattern(&best.pattern), w, v });
        return ClassOutcome { class: 0, entry: ok.then_some(EntryValue::WOnly), probes, critical_weight: cw };
    }
    let mut y3 = q(1, 2);
    let mut step = q(1, 4);
    for _ in 0..max_iters.max(1) {
        let duals = model.duals(ratio, y3.clone());
        let best = model.max_omega(&duals);
        let (w, v) = model.pattern_weights(&best.pattern);
        let ok = best.value <= *ratio;
        let up = w > v;
        probes.push(Probe { y3: y3.clone(), max: best.value, pattern: model.describe_pattern(&best.pattern), w, v });
        if ok {
            return ClassOutcome {
                class: model.class,
                entry: Some(EntryValue::Mixed(y3)),
                probes,
                critical_weight: cw,
            };
        }
        if up {
            y3 += &step;
        } else {
            y3 -= &step;
        }
        step = step.div_int(2);
    }
    ClassOutcome { class: model.class, entry: None, probes, critical_weight: cw }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub digest: String,
    pub mode: Mode,
    pub ratio: Rational,
    pub entries: Vec<(usize, EntryValue)>,
}

pub const CERT_HEADER: &str = "# harmonic-cert v1";

impl Certificate {
    pub fn format(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CERT_HEADER}").unwrap();
        writeln!(s, "params-sha256: {}", self.digest).unwrap();
        writeln!(s, "mode: {}", self.mode).unwrap();
        writeln!(s, "ratio: {}", self.ratio).unwrap();
        for (k, e) in &self.entries {
            match e {
                EntryValue::WOnly => writeln!(s, "k {k} y3 wonly").unwrap(),
                EntryValue::Simple => writeln!(s, "k {k} y3 simple").unwrap(),
                EntryValue::Mixed(y) => writeln!(s, "k {k} y3 {y}").unwrap(),
            }
        }
        s
    }
}

pub fn parse_certificate(text: &str) -> Result<Certificate, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, l)) if l == CERT_HEADER => {}
        _ => return Err(ParseError::MissingHeader("# harmonic-cert v1")),
    }
    let mut digest = None;
    let mut mode = None;
    let mut ratio = None;
    let mut entries: Vec<(usize, EntryValue)> = Vec::new();
    for (n, line) in lines {
        if line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("params-sha256:") {
            let h = rest.trim();
            if h.len() != 64 || !h.chars().all(|c| c.is_ascii_hexdigit()) {
                return Err(ParseError::at(n, format!("bad digest `{h}`")));
            }
            if digest.replace(h.to_ascii_lowercase()).is_some() {
                return Err(ParseError::at(n, "duplicate digest"));
            }
        } else if let Some(rest) = line.strip_prefix("mode:") {
            let m = Mode::parse(rest.trim()).ok_or_else(|| ParseError::at(n, format!("unknown mode `{}`", rest.trim())))?;
            if mode.replace(m).is_some() {
                return Err(ParseError::at(n, "duplicate mode"));
            }
        } else if let Some(rest) = line.strip_prefix("ratio:") {
            let r = parse_rational(rest.trim()).map_err(|e| ParseError::at(n, e.to_string()))?;
            if ratio.replace(r).is_some() {
                return Err(ParseError::at(n, "duplicate ratio"));
            }
        } else {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 || f[0] != "k" || f[2] != "y3" {
                return Err(ParseError::at(n, "expected `k <index> y3 <value>`"));
            }
            let k: usize = f[1].parse().map_err(|_| ParseError::at(n, format!("bad class `{}`", f[1])))?;
            let e = if f[3] == "wonly" {
                EntryValue::WOnly
            } else if f[3] == "simple" {
                EntryValue::Simple
            } else {
                let y = parse_rational(f[3]).map_err(|e| ParseError::at(n, e.to_string()))?;
                if y.is_negative() || y > Rational::one() {
                    return Err(ParseError::at(n, format!("y3 {y} outside [0,1]")));
                }
                EntryValue::Mixed(y)
            };
            if entries.iter().any(|(j, _)| *j == k) {
                return Err(ParseError::at(n, format!("duplicate class {k}")));
            }
            entries.push((k, e));
        }
    }
    Ok(Certificate {
        digest: digest.ok_or(ParseError::MissingHeader("params-sha256"))?,
        mode: mode.ok_or(ParseError::MissingHeader("mode"))?,
        ratio: ratio.ok_or(ParseError::MissingHeader("ratio"))?,
        entries,
    })
}

#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub jobs: usize,
    pub max_iters: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { jobs: 1, max_iters: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct CertifyReport {
    pub ratio: Rational,
    pub classes: Vec<ClassOutcome>,
    pub certificate: Option<Certificate>,
}

impl CertifyReport {
    pub fn first_failure(&self) -> Option<&ClassOutcome> {
        self.classes.iter().find(|c| c.entry.is_none())
    }
}

fn run_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Check every class; on success the certificate lists the mixing value found per class.
pub fn certify(p: &ParameterSet, ratio: &Rational, opts: &CertifyOptions) -> Result<CertifyReport, Error> {
    if *ratio <= Rational::one() {
        return Err(Error::Config(format!("ratio {ratio} must exceed 1")));
    }
    let tables = p.tables();
    let ks = classes_to_certify(p, &tables);
    let models: Vec<ClassModel> = ks.iter().map(|&k| ClassModel::build(p, &tables, k)).collect();
    if let Some(m) = models.iter().find(|m| !m.critical_is_unique()) {
        return Err(Error::Config(format!("class {}: critical bin residual fits a non-sand item", m.class)));
    }
    let classes: Vec<ClassOutcome> =
        run_pool(opts.jobs, || models.par_iter().map(|m| dual_feasible(m, ratio, opts.max_iters)).collect())?;
    let certificate = if classes.iter().all(|c| c.entry.is_some()) {
        Some(Certificate {
            digest: params_digest(p),
            mode: p.mode,
            ratio: ratio.clone(),
            entries: classes.iter().map(|c| (c.class, c.entry.clone().unwrap())).collect(),
        })
    } else {
        None
    };
    Ok(CertifyReport { ratio: ratio.clone(), classes, certificate })
}

#[derive(Debug, Clone)]
pub struct EntryCheck {
    pub class: usize,
    pub value: EntryValue,
    pub max: Rational,
    pub pattern: String,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub accepted: bool,
    pub checks: Vec<EntryCheck>,
    pub problems: Vec<String>,
}

/// Re-check a certificate: one knapsack per recorded class, no search.
pub fn verify_certificate(p: &ParameterSet, cert: &Certificate, jobs: usize) -> Result<Verdict, Error> {
    let mut problems = Vec::new();
    if cert.digest != params_digest(p) {
        problems.push("parameter digest mismatch".to_string());
        return Ok(Verdict { accepted: false, checks: Vec::new(), problems });
    }
    if cert.mode != p.mode {
        problems.push(format!("certificate mode {} differs from parameter mode {}", cert.mode, p.mode));
    }
    let tables = p.tables();
    let needed = classes_to_certify(p, &tables);
    for k in &needed {
        if !cert.entries.iter().any(|(j, _)| j == k) {
            problems.push(format!("class {k} missing"));
        }
    }
    for (k, e) in &cert.entries {
        if !needed.contains(k) {
            problems.push(format!("class {k} does not occur"));
        }
        if (*k == 0) != (*e == EntryValue::WOnly) {
            problems.push(format!("class {k}: `wonly` is reserved for class 0"));
        }
    }
    let todo: Vec<(usize, EntryValue)> = cert.entries.iter().filter(|(k, _)| needed.contains(k)).cloned().collect();
    let ratio = cert.ratio.clone();
    let checks: Vec<EntryCheck> = run_pool(jobs, || {
        todo.par_iter()
            .map(|(k, e)| {
                let model = ClassModel::build(p, &tables, *k);
                let best = model.max_omega(&entry_duals(&model, &ratio, e));
                let unique = model.critical_is_unique();
                EntryCheck {
                    class: *k,
                    value: e.clone(),
                    ok: unique && best.value <= ratio,
                    pattern: model.describe_pattern(&best.pattern),
                    max: best.value,
                }
            })
            .collect()
    })?;
    for c in &checks {
        if !c.ok {
            problems.push(format!("class {}: maximum {} exceeds {}", c.class, c.max.show(), ratio.show()));
        }
    }
    Ok(Verdict { accepted: problems.is_empty(), checks, problems })
}

/// Duals an entry stands for. A simple entry takes whichever pure weight gives the smaller
/// maximum.
fn entry_duals(model: &ClassModel, ratio: &Rational, entry: &EntryValue) -> Duals {
    match entry {
        _ if model.class == 0 => Duals::mix(Rational::zero()),
        EntryValue::Simple => {
            let w = model.duals(ratio, Rational::zero());
            let v = model.duals(ratio, Rational::one());
            if model.max_omega(&w).value <= model.max_omega(&v).value {
                w
            } else {
                v
            }
        }
        _ => model.duals(ratio, entry.y3()),
    }
}

/// Knapsack instance of one class in a plain text form for independent checking.
pub fn format_knapsack(model: &ClassModel, ratio: &Rational, entry: &EntryValue) -> String {
    let duals = entry_duals(model, ratio, entry);
    let mut s = String::new();
    writeln!(s, "class {}", model.class).unwrap();
    writeln!(s, "y1 {}", duals.y1).unwrap();
    writeln!(s, "y2 {}", duals.y2).unwrap();
    match entry {
        EntryValue::WOnly => writeln!(s, "y3 wonly").unwrap(),
        EntryValue::Simple => writeln!(s, "y3 {} simple", duals.y3).unwrap(),
        EntryValue::Mixed(y) => writeln!(s, "y3 {y}").unwrap(),
    }
    writeln!(s, "sand-rate {}", model.sand_rate).unwrap();
    writeln!(s, "capacity 1 strict").unwrap();
    for slot in &model.slots {
        writeln!(s, "item {} lower {} omega {}", slot.label(), slot.lower, slot.omega(&duals)).unwrap();
    }
    if let Some(cr) = &model.critical {
        let fixed = model.fixed_pattern(cr, &duals);
        writeln!(
            s,
            "exclude {} {}",
            model.slots[cr.large_slot].label(),
            model.slots[cr.slot].label()
        )
        .unwrap();
        writeln!(s, "fixed {} value {}", model.describe_pattern(&fixed.pattern), fixed.value).unwrap();
    }
    writeln!(s, "end").unwrap();
    s
}
