//! Exact unbounded knapsack over item lower bounds, with sand filling the remainder.
//!
//! A bin holds `counts[i]` items of every entry as long as the lower bounds sum to strictly
//! less than one; the rest of the bin is sand worth `sand_rate` per unit of space. The
//! solver returns the exact maximum of `sum counts[i]*value[i] + sand_rate*(1 - sum counts[i]*lower[i])`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnapItem {
    pub lower: Rational,
    pub value: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnapResult {
    pub value: Rational,
    pub counts: Vec<u64>,
}

/// Scale used to round the integer bound table; only affects pruning strength.
const VALUE_SCALE: i64 = 1_000_000_000_000;

fn lcm_of<'a>(it: impl Iterator<Item = &'a BigInt>) -> BigInt {
    it.fold(BigInt::one(), |acc, d| acc.lcm(d))
}

/// Value of a given count vector, including sand. `None` if the counts do not fit.
pub fn evaluate(items: &[KnapItem], sand_rate: &Rational, counts: &[u64]) -> Option<Rational> {
    let mut used = Rational::zero();
    let mut value = Rational::zero();
    for (it, &c) in items.iter().zip(counts) {
        if c > 0 {
            used += it.lower.scale(c as i64);
            value += it.value.scale(c as i64);
        }
    }
    if used >= Rational::one() {
        return None;
    }
    Some(value + (Rational::one() - used) * sand_rate)
}

pub fn knapsack_max(items: &[KnapItem], sand_rate: &Rational) -> KnapResult {
    let mut counts = vec![0u64; items.len()];
    // Only entries that beat sand per unit of space can help.
    let mut active: Vec<(usize, Rational)> = items
        .iter()
        .enumerate()
        .filter(|(_, it)| it.lower.is_positive())
        .map(|(i, it)| (i, &it.value - &it.lower * sand_rate))
        .filter(|(_, p)| p.is_positive())
        .collect();
    if active.is_empty() {
        return KnapResult { value: sand_rate.clone(), counts };
    }
    active.sort_by(|a, b| items[b.0].lower.cmp(&items[a.0].lower).then(b.1.cmp(&a.1)).then(a.0.cmp(&b.0)));

    let size_den = lcm_of(active.iter().map(|(i, _)| items[*i].lower.denom()));
    let profit_den = lcm_of(active.iter().map(|(_, p)| p.denom()));
    let sizes: Vec<BigInt> =
        active.iter().map(|(i, _)| items[*i].lower.numer() * (&size_den / items[*i].lower.denom())).collect();
    let profits: Vec<BigInt> = active.iter().map(|(_, p)| p.numer() * (&profit_den / p.denom())).collect();

    let min_lower = active.iter().map(|(i, _)| items[*i].lower.clone()).min().unwrap();
    let base = min_lower.recip().ceil().max(1);
    let grid = if base * 64 <= 1 << 16 { base * 64 } else { base.max(1 << 16) };
    let m = active.len();
    let unit: Vec<usize> = active.iter().map(|(i, _)| items[*i].lower.scale(grid).floor() as usize).collect();
    let gain: Vec<i128> = active.iter().map(|(_, p)| p.scale(VALUE_SCALE).ceil() as i128).collect();
    let g = grid as usize;
    // bound[s][c]: best rounded profit from entries s.. within c grid cells (a relaxation).
    let mut bound = vec![vec![0i128; g + 1]; m + 1];
    for s in (0..m).rev() {
        let (head, tail) = bound.split_at_mut(s + 1);
        let row = &mut head[s];
        let next = &tail[0];
        for c in 0..=g {
            let mut best = next[c];
            if c >= unit[s] {
                best = best.max(row[c - unit[s]] + gain[s]);
            }
            row[c] = best;
        }
    }

    let mut search = Search {
        sizes,
        profits,
        size_den: size_den.clone(),
        grid: BigInt::from(grid),
        bound,
        scale_profit: BigInt::from(VALUE_SCALE),
        profit_den: profit_den.clone(),
        incumbent: BigInt::zero(),
        best: vec![0; m],
        current: vec![0; m],
    };
    search.dfs(0, &size_den, &BigInt::zero());
    for (slot, (i, _)) in active.iter().enumerate() {
        counts[*i] = search.best[slot];
    }
    let value = sand_rate + &Rational::from_bigints(search.incumbent, profit_den);
    KnapResult { value, counts }
}

struct Search {
    sizes: Vec<BigInt>,
    profits: Vec<BigInt>,
    size_den: BigInt,
    grid: BigInt,
    bound: Vec<Vec<i128>>,
    scale_profit: BigInt,
    profit_den: BigInt,
    incumbent: BigInt,
    best: Vec<u64>,
    current: Vec<u64>,
}

impl Search {
    fn dfs(&mut self, s: usize, room: &BigInt, acc: &BigInt) {
        if s == self.sizes.len() {
            if *acc > self.incumbent {
                self.incumbent = acc.clone();
                self.best.clone_from(&self.current);
            }
            return;
        }
        let cell = (room * &self.grid / &self.size_den).to_usize().unwrap_or(usize::MAX);
        let cell = cell.min(self.bound[s].len() - 1);
        let ub = BigInt::from(self.bound[s][cell]);
        if (&self.incumbent - acc) * &self.scale_profit >= ub * &self.profit_den {
            return;
        }
        // Items must leave some room: count * size < room.
        let most = if room.is_positive() { (room - 1u32) / &self.sizes[s] } else { BigInt::zero() };
        let most = most.to_u64().expect("count fits");
        for c in (0..=most).rev() {
            self.current[s] = c;
            let used = &self.sizes[s] * c;
            let gain = &self.profits[s] * c;
            self.dfs(s + 1, &(room - used), &(acc + gain));
        }
        self.current[s] = 0;
    }
}
