//! Parameter sets, derived tables and their structural checks.

use std::fmt;

use crate::error::{Error, Violation};
use crate::rational::{q, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Super,
    Extreme,
}

impl Mode {
    pub fn parse(text: &str) -> Option<Mode> {
        match text {
            "super" => Some(Mode::Super),
            "extreme" => Some(Mode::Extreme),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Super => "super",
            Mode::Extreme => "extreme",
        })
    }
}

/// Size class of a type, decided by its interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeClass {
    Large,
    Medium,
    Small,
}

/// Per-type integer tables. Redspace indices are 1-based; 0 means "none".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedTables {
    pub bluefit: Vec<u64>,
    pub redfit: Vec<u64>,
    pub needs: Vec<usize>,
    pub leaves: Vec<usize>,
}

/// Knobs of the size generator plus the headers shared with complete parameter files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub mode: Mode,
    pub c: Rational,
    pub t_n: Rational,
    /// Red cap for tiny types (extreme) or for every small type (super).
    pub gamma: Rational,
    /// Types with upper bound at most this use `gamma` as red cap.
    pub gamma_start: Rational,
    /// Below this size, consecutive `1/i` types may be merged.
    pub t_small: Rational,
    /// Added to the red fraction whenever the small-type adjustment rule fires.
    pub margin: Rational,
    /// `(lower bound, redfrac)` seeds; the seed applies to the type whose lower bound it names.
    pub seeds: Vec<(Rational, Rational)>,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let third = q(1, 3);
        if !(self.t_n.is_positive()
            && self.t_n < self.t_small
            && self.t_small < self.gamma_start
            && self.gamma_start < third)
        {
            return Err(Error::Config(format!(
                "need 0 < tN < tsmall < gamma_start < 1/3, got tN={} tsmall={} gamma_start={}",
                self.t_n, self.t_small, self.gamma_start
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterSet {
    pub mode: Mode,
    /// `t_1 = 1 > t_2 > ... > t_N`; type `i` (0-based) is `(t[i+1], t[i]]`, the last type is `(0, t_N]`.
    pub boundaries: Vec<Rational>,
    pub redfrac: Vec<Rational>,
    /// Ascending; `redspace(k)` is `redspaces[k-1]`.
    pub redspaces: Vec<Rational>,
    pub epsilon: Rational,
    pub target: Rational,
    pub gamma: Rational,
    pub gamma_start: Rational,
    pub t_small: Rational,
    pub margin: Rational,
    /// Tables loaded verbatim from a file; they take precedence over derivation.
    pub explicit: Option<DerivedTables>,
}

impl ParameterSet {
    pub fn num_types(&self) -> usize {
        self.boundaries.len()
    }

    pub fn sand(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn k_max(&self) -> usize {
        self.redspaces.len()
    }

    pub fn upper(&self, i: usize) -> &Rational {
        &self.boundaries[i]
    }

    pub fn lower(&self, i: usize) -> Rational {
        self.boundaries.get(i + 1).cloned().unwrap_or_else(Rational::zero)
    }

    /// Redspace value for a 1-based index; index 0 maps to zero space.
    pub fn redspace(&self, k: usize) -> Rational {
        if k == 0 {
            Rational::zero()
        } else {
            self.redspaces[k - 1].clone()
        }
    }

    pub fn size_class(&self, i: usize) -> SizeClass {
        let lower = self.lower(i);
        if lower >= q(1, 2) {
            SizeClass::Large
        } else if lower >= q(1, 3) {
            SizeClass::Medium
        } else {
            SizeClass::Small
        }
    }

    pub fn is_medium(&self, i: usize) -> bool {
        self.size_class(i) == SizeClass::Medium
    }

    /// Type index of an item size in `(0, 1]`.
    pub fn classify(&self, size: &Rational) -> Result<usize, Error> {
        if !size.is_positive() || *size > Rational::one() {
            return Err(Error::Input(format!("item size {size} outside (0,1]")));
        }
        // Boundaries descend; find the last boundary that is >= size.
        let pos = self.boundaries.partition_point(|t| t >= size);
        Ok(pos - 1)
    }

    /// The tables in force: explicit ones if loaded, derived otherwise.
    pub fn tables(&self) -> DerivedTables {
        match &self.explicit {
            Some(t) => t.clone(),
            None => derive_tables(self),
        }
    }

    pub fn medium_types(&self) -> Vec<usize> {
        (0..self.num_types()).filter(|&i| self.is_medium(i)).collect()
    }
}

/// Red items per reserved space for one type in super mode.
pub fn superharmonic_redfit(
    t: &Rational,
    redfrac: &Rational,
    redspace_top: &Rational,
    gamma: &Rational,
) -> u64 {
    if redfrac.is_zero() || t > redspace_top {
        return 0;
    }
    let fit = (gamma / t).floor();
    fit.max(1) as u64
}

fn extreme_redfit(p: &ParameterSet, i: usize) -> u64 {
    let t = p.upper(i);
    match p.size_class(i) {
        SizeClass::Large => 0,
        SizeClass::Medium => u64::from(p.redfrac[i].is_positive()),
        SizeClass::Small => {
            if *t <= p.gamma_start {
                (&p.gamma / t).floor().max(1) as u64
            } else {
                // Largest r with r * t strictly below 1/3.
                ((q(1, 3) / t).ceil() - 1).max(1) as u64
            }
        }
    }
}

/// Red fit per type without reference to redspaces (super mode assumes every type fits).
pub fn base_redfit(p: &ParameterSet, i: usize) -> u64 {
    match p.mode {
        Mode::Extreme => extreme_redfit(p, i),
        Mode::Super => {
            if p.is_medium(i) && p.redfrac[i].is_positive() {
                1
            } else {
                superharmonic_redfit(p.upper(i), &p.redfrac[i], &Rational::one(), &p.gamma)
            }
        }
    }
}

fn needs_index(redspaces: &[Rational], demand: &Rational) -> usize {
    redspaces.partition_point(|r| r < demand) + 1
}

fn leaves_index(redspaces: &[Rational], space: &Rational) -> usize {
    redspaces.partition_point(|r| r <= space)
}

/// Compute bluefit, redfit, needs and leaves from boundaries, red fractions and redspaces.
pub fn derive_tables(p: &ParameterSet) -> DerivedTables {
    derive_with(p, &p.redspaces)
}

fn derive_with(p: &ParameterSet, redspaces: &[Rational]) -> DerivedTables {
    let n = p.num_types();
    let top = redspaces.last().cloned().unwrap_or_else(Rational::zero);
    let mut out = DerivedTables {
        bluefit: Vec::with_capacity(n),
        redfit: Vec::with_capacity(n),
        needs: Vec::with_capacity(n),
        leaves: Vec::with_capacity(n),
    };
    for i in 0..n {
        let t = p.upper(i);
        let bluefit = t.recip().floor() as u64;
        let mut redfit = base_redfit(p, i);
        if p.mode == Mode::Super && p.upper(i) > &top && !p.is_medium(i) {
            redfit = 0;
        }
        let needs = if p.redfrac[i].is_positive() && redfit > 0 {
            needs_index(redspaces, &t.scale(redfit as i64))
        } else {
            0
        };
        let leaves = match (p.mode, p.size_class(i)) {
            (Mode::Extreme, SizeClass::Large) => {
                if *t <= q(2, 3) {
                    redspaces.len()
                } else {
                    0
                }
            }
            _ => leaves_index(redspaces, &(Rational::one() - t.scale(bluefit as i64))),
        };
        out.bluefit.push(bluefit);
        out.redfit.push(redfit);
        out.needs.push(needs);
        out.leaves.push(leaves);
    }
    out
}

/// Build the redspace list from the types, then drop unused values at most 1/3.
pub fn generate_redspaces(p: &ParameterSet) -> Vec<Rational> {
    let third = q(1, 3);
    let sixth = q(1, 6);
    let mut cand: Vec<Rational> = Vec::new();
    let in_band = |v: &Rational| *v >= sixth && *v <= third;
    for i in 0..p.num_types() {
        let t = p.upper(i).clone();
        match p.mode {
            Mode::Extreme => {
                let lower = p.lower(i);
                if in_band(&lower) {
                    cand.push(lower.clone());
                }
                let double = lower.scale(2);
                if in_band(&double) {
                    cand.push(double);
                }
                if p.is_medium(i) && t < q(1, 2) {
                    let rest = Rational::one() - t.scale(2);
                    if in_band(&rest) {
                        cand.push(rest);
                    }
                    cand.push(t);
                }
            }
            Mode::Super => {
                let fit = base_redfit(p, i);
                if p.redfrac[i].is_positive() && fit > 0 {
                    cand.push(t.scale(fit as i64));
                }
                if p.is_medium(i) && t < q(1, 2) {
                    cand.push(t);
                }
            }
        }
    }
    cand.sort();
    cand.dedup();
    loop {
        let tables = derive_with(p, &cand);
        let n = p.num_types();
        let keep: Vec<bool> = (1..=cand.len())
            .map(|k| {
                if cand[k - 1] > third {
                    return true;
                }
                let needed = (0..n).any(|i| tables.needs[i] == k);
                let offered = (0..n).any(|j| tables.leaves[j] == k);
                needed && offered
            })
            .collect();
        // Drop one value per round: removing a value can make a neighbour used.
        match keep.iter().position(|&b| !b) {
            None => return cand,
            Some(k) => {
                cand.remove(k);
            }
        }
    }
}

/// Check the structural properties; an empty result means the set is usable.
pub fn validate(p: &ParameterSet, d: &DerivedTables) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |property: &str, i: usize, detail: String| {
        out.push(Violation { property: property.to_string(), type_index: i + 1, detail });
    };
    let n = p.num_types();
    if p.boundaries.first() != Some(&Rational::one()) {
        push("boundaries", 0, "t_1 must be 1".into());
    }
    for i in 1..n {
        if p.boundaries[i] >= p.boundaries[i - 1] || !p.boundaries[i].is_positive() {
            push("boundaries", i, format!("{} not strictly below {}", p.boundaries[i], p.boundaries[i - 1]));
        }
    }
    for half in [q(1, 2), q(1, 3)] {
        if !p.boundaries.contains(&half) {
            push("boundaries", 0, format!("{half} must be a type boundary"));
        }
    }
    if p.redfrac.len() != n {
        push("redfrac", 0, format!("{} red fractions for {} types", p.redfrac.len(), n));
        return out;
    }
    for w in p.redspaces.windows(2) {
        if w[0] >= w[1] {
            push("redspaces", 0, format!("{} not strictly below {}", w[0], w[1]));
        }
    }
    if p.epsilon != *p.upper(n - 1) {
        push("sand", n - 1, format!("epsilon {} differs from t_N {}", p.epsilon, p.upper(n - 1)));
    }
    if !p.redfrac[n - 1].is_zero() {
        push("sand", n - 1, "sand type must have redfrac 0".into());
    }
    let third = q(1, 3);
    let k_max = p.k_max();
    for i in 0..n {
        let a = &p.redfrac[i];
        if a.is_negative() || *a >= third {
            push("redfrac-range", i, format!("redfrac {a} not in [0,1/3)"));
        }
        if p.size_class(i) == SizeClass::Large && !a.is_zero() {
            push("redfrac-range", i, format!("large type has redfrac {a}"));
        }
        if d.needs[i] > k_max || d.leaves[i] > k_max {
            push("tables", i, format!("index out of range (needs {}, leaves {}, K {})", d.needs[i], d.leaves[i], k_max));
            continue;
        }
        if a.is_positive() {
            if d.needs[i] == 0 || d.redfit[i] == 0 {
                push("tables", i, "red type without redspace".into());
                continue;
            }
            if d.leaves[i] >= d.needs[i] {
                push("leaves-below-needs", i, format!("leaves {} >= needs {}", d.leaves[i], d.needs[i]));
            }
            match p.size_class(i) {
                SizeClass::Small => {
                    if p.redspace(d.needs[i]) > third {
                        push("redspace-band", i, format!("small type needs {} > 1/3", p.redspace(d.needs[i])));
                    }
                }
                SizeClass::Medium => {
                    if !(p.redspace(d.leaves[i]) < third && p.redspace(d.needs[i]) > third) {
                        push(
                            "redspace-band",
                            i,
                            format!("medium type leaves {} / needs {}", p.redspace(d.leaves[i]), p.redspace(d.needs[i])),
                        );
                    }
                }
                SizeClass::Large => {}
            }
        }
        let t = p.upper(i);
        if p.is_medium(i) && *t < q(1, 2) && !p.redspaces.contains(t) {
            push("medium-boundary-redspace", i, format!("medium boundary {t} missing from redspaces"));
        }
    }
    out
}

/// Validate and return the set, or the list of violations as an error.
pub fn checked(p: ParameterSet) -> Result<ParameterSet, Error> {
    let d = p.tables();
    let v = validate(&p, &d);
    if v.is_empty() {
        Ok(p)
    } else {
        Err(Error::Invalid(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::r;

    fn toy() -> ParameterSet {
        // (1/2,1] (1/3,1/2] (1/4,1/3] (1/5,1/4] (0,1/5]
        ParameterSet {
            mode: Mode::Extreme,
            boundaries: vec![r("1"), r("1/2"), r("1/3"), r("1/4"), r("1/5")],
            redfrac: vec![r("0"), r("1/10"), r("0"), r("1/10"), r("0")],
            redspaces: vec![r("1/4"), r("1/2")],
            epsilon: r("1/5"),
            target: r("17/10"),
            gamma: r("2/7"),
            gamma_start: r("1/12"),
            t_small: r("1/30"),
            margin: r("0"),
            explicit: None,
        }
    }

    #[test]
    fn classify_uses_half_open_intervals() {
        let p = toy();
        assert_eq!(p.classify(&r("1")).unwrap(), 0);
        assert_eq!(p.classify(&r("1/2")).unwrap(), 1);
        assert_eq!(p.classify(&r("51/100")).unwrap(), 0);
        assert_eq!(p.classify(&r("1/3")).unwrap(), 2);
        assert_eq!(p.classify(&r("1/100000")).unwrap(), 4);
        assert!(p.classify(&r("0")).is_err());
        assert!(p.classify(&r("3/2")).is_err());
    }

    #[test]
    fn super_redfit_rule() {
        let g = r("24/83");
        let top = r("5/12");
        assert_eq!(superharmonic_redfit(&r("12/83"), &r("13/100"), &top, &g), 2);
        assert_eq!(superharmonic_redfit(&r("1/14"), &r("17/2000"), &top, &g), 4);
        assert_eq!(superharmonic_redfit(&r("1/18"), &r("0"), &top, &g), 0);
        assert_eq!(superharmonic_redfit(&r("1/2"), &r("1/10"), &top, &g), 0);
    }

    #[test]
    fn redfrac_bound_is_reported() {
        let mut p = toy();
        p.redfrac[3] = r("2/5");
        let v = validate(&p, &derive_tables(&p));
        assert!(v.iter().any(|v| v.property == "redfrac-range" && v.type_index == 4), "{v:?}");
    }

    #[test]
    fn injected_leaves_equal_needs() {
        let p = toy();
        let mut d = derive_tables(&p);
        d.leaves[3] = d.needs[3];
        let v = validate(&p, &d);
        assert!(v.iter().any(|v| v.property == "leaves-below-needs"), "{v:?}");
    }

    #[test]
    fn missing_medium_boundary() {
        let mut p = toy();
        p.boundaries = vec![r("1"), r("1/2"), r("2/5"), r("1/3"), r("1/4"), r("1/5")];
        p.redfrac = vec![r("0"), r("0"), r("1/10"), r("0"), r("1/10"), r("0")];
        let v = validate(&p, &derive_tables(&p));
        assert!(v.iter().any(|v| v.property == "medium-boundary-redspace" && v.type_index == 3), "{v:?}");
    }

    #[test]
    fn pruning_drops_unused_small_values() {
        // The only small red type needs 1/5 and no blue type leaves exactly 1/6.
        let mut p = toy();
        p.boundaries = ["1", "1/2", "2/5", "1/3", "1/5", "1/6", "1/10"].iter().map(|s| r(s)).collect();
        p.redfrac = ["0", "0", "0", "0", "1/10", "0", "0"].iter().map(|s| r(s)).collect();
        p.epsilon = r("1/10");
        let rs = generate_redspaces(&p);
        assert!(rs.contains(&r("1/5")), "{rs:?}");
        assert!(!rs.contains(&r("1/6")), "{rs:?}");
    }
}
