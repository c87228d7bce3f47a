//! Weighting functions of both frameworks and the mixed weight used by the dual check.

use crate::item::Mark;
use crate::params::{DerivedTables, Mode, ParameterSet};
use crate::rational::{q, Rational};

/// Dual values that shift item weights: `y1` rewards unmixed critical items, `y2` rewards
/// small reds that fit next to the critical type, `y3` mixes the two weight functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Duals {
    pub y1: Rational,
    pub y2: Rational,
    pub y3: Rational,
}

impl Duals {
    pub fn mix(y3: Rational) -> Self {
        Duals { y1: Rational::zero(), y2: Rational::zero(), y3 }
    }
}

/// Item counts of one bin of an optimal packing. `counts[i]` is the number of type-`i`
/// items (the sand entry is ignored; sand fills whatever space remains). `r_count` of the
/// critical-type items carry mark R.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub counts: Vec<u64>,
    pub r_count: u64,
}

impl Pattern {
    pub fn empty(num_types: usize) -> Self {
        Pattern { counts: vec![0; num_types], r_count: 0 }
    }

    /// Space taken by the items at their interval lower bounds.
    pub fn occupied(&self, p: &ParameterSet) -> Rational {
        let sand = p.sand();
        self.counts
            .iter()
            .enumerate()
            .filter(|&(i, &c)| i != sand && c > 0)
            .map(|(i, &c)| p.lower(i).scale(c as i64))
            .sum()
    }

    pub fn is_feasible(&self, p: &ParameterSet) -> bool {
        self.occupied(p) < Rational::one()
    }
}

/// Everything the weights of class `k` depend on.
#[derive(Debug, Clone)]
pub struct WeightContext<'a> {
    pub params: &'a ParameterSet,
    pub tables: &'a DerivedTables,
    pub class: usize,
    critical: Option<usize>,
    sand_rate: Rational,
}

impl<'a> WeightContext<'a> {
    pub fn new(params: &'a ParameterSet, tables: &'a DerivedTables, class: usize) -> Self {
        let critical = if class > 0 && params.redspace(class) > q(1, 3) {
            (0..params.num_types()).find(|&i| params.is_medium(i) && tables.needs[i] == class)
        } else {
            None
        };
        let sand_rate = (Rational::one() - &params.epsilon).recip();
        WeightContext { params, tables, class, critical, sand_rate }
    }

    /// The medium type whose red items need exactly redspace `k`, when that space exceeds 1/3.
    pub fn critical(&self) -> Option<usize> {
        self.critical
    }

    pub fn sand_rate(&self) -> &Rational {
        &self.sand_rate
    }

    /// Bins per item spent on blue items of type `i`.
    pub fn blue_part(&self, i: usize) -> Rational {
        (Rational::one() - &self.params.redfrac[i]).div_int(self.tables.bluefit[i] as i64)
    }

    /// Bins per item spent on red items of type `i`.
    pub fn red_part(&self, i: usize) -> Rational {
        let a = &self.params.redfrac[i];
        if a.is_zero() || self.tables.redfit[i] == 0 {
            Rational::zero()
        } else {
            a.div_int(self.tables.redfit[i] as i64)
        }
    }

    pub fn full(&self, i: usize) -> Rational {
        self.blue_part(i) + self.red_part(i)
    }

    /// `(w_k, v_k)` of a non-sand item of type `i` with the given mark.
    pub fn weight_pair(&self, i: usize, mark: Mark) -> (Rational, Rational) {
        let k = self.class;
        if k == 0 {
            // No unmixed red bin: every bin holds a blue item, so blue space alone is charged.
            let b = self.blue_part(i);
            return (b.clone(), b);
        }
        let needs = self.tables.needs[i];
        let w = match self.params.mode {
            Mode::Super => {
                if needs >= k {
                    self.full(i)
                } else {
                    self.blue_part(i)
                }
            }
            Mode::Extreme => {
                if needs > k {
                    self.full(i)
                } else if needs == k && self.critical.is_some() && mark != Mark::R {
                    self.full(i)
                } else {
                    self.blue_part(i)
                }
            }
        };
        (w, self.v_weight(i))
    }

    fn v_weight(&self, i: usize) -> Rational {
        if self.tables.leaves[i] < self.class {
            self.full(i)
        } else {
            self.red_part(i)
        }
    }

    /// Weights of a large item whose blue bin offers redspace index `leaves`.
    pub fn large_pair(&self, leaves: usize) -> (Rational, Rational) {
        if self.class == 0 || leaves < self.class {
            (Rational::one(), Rational::one())
        } else {
            (Rational::one(), Rational::zero())
        }
    }

    pub fn weight_sand(&self, space: &Rational) -> Rational {
        space * &self.sand_rate
    }

    /// Coefficient of `y1` for an unmixed critical item.
    pub fn critical_bonus(&self) -> Option<Rational> {
        self.critical.map(|c| {
            let a = &self.params.redfrac[c];
            (Rational::one() - a) / (Rational::one() + a)
        })
    }

    /// Whether red items of type `j` fit next to blue critical items.
    pub fn combines_with_critical(&self, j: usize) -> bool {
        match self.critical {
            Some(c) => {
                self.params.redfrac[j].is_positive() && self.tables.needs[j] <= self.tables.leaves[c]
            }
            None => false,
        }
    }

    /// Mixed weight of one item.
    pub fn omega(&self, i: usize, mark: Mark, y: &Duals) -> Rational {
        let (w, v) = self.weight_pair(i, mark);
        let mut out = (Rational::one() - &y.y3) * w + &y.y3 * v;
        if Some(i) == self.critical && mark == Mark::N {
            out += self.critical_bonus().unwrap() * &y.y1;
        }
        if self.combines_with_critical(i) {
            out += self.red_part(i) * &y.y2;
        }
        out
    }

    /// `(w_k(q), v_k(q))` including the sand that fills the rest of the bin.
    /// Critical items outside `r_count` count as N-items.
    pub fn pattern_weight(&self, pat: &Pattern) -> (Rational, Rational) {
        let sand = self.weight_sand(&(Rational::one() - pat.occupied(self.params)));
        let mut w = sand.clone();
        let mut v = sand;
        for (i, &c) in pat.counts.iter().enumerate() {
            if c == 0 || i == self.params.sand() {
                continue;
            }
            if Some(i) == self.critical {
                let r = pat.r_count.min(c);
                let (wn, vn) = self.weight_pair(i, Mark::N);
                let (wr, vr) = self.weight_pair(i, Mark::R);
                w += wn.scale((c - r) as i64) + wr.scale(r as i64);
                v += vn.scale((c - r) as i64) + vr.scale(r as i64);
            } else {
                let (wi, vi) = self.weight_pair(i, Mark::N);
                w += wi.scale(c as i64);
                v += vi.scale(c as i64);
            }
        }
        (w, v)
    }

    /// Component sums of `w_k` and `v_k` over `(type, mark, size)` triples; sand items
    /// contribute their size.
    pub fn total_weight<I>(&self, items: I) -> (Rational, Rational)
    where
        I: IntoIterator<Item = (usize, Mark, Rational)>,
    {
        let mut w = Rational::zero();
        let mut v = Rational::zero();
        for (i, mark, size) in items {
            if i == self.params.sand() {
                let s = self.weight_sand(&size);
                w += &s;
                v += s;
            } else {
                let (a, b) = self.weight_pair(i, mark);
                w += a;
                v += b;
            }
        }
        (w, v)
    }
}
