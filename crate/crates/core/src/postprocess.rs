//! Post-processing of a finished extreme-mode packing.
//!
//! Removes a bounded number of exceptional bins, re-marks items, rewrites bonus and
//! reduced items, and checks the resulting structure. Nothing here is re-packed: the
//! result is a multiset of items with marks and the bins they sit in.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::Violation;
use crate::item::{Color, Mark};
use crate::packer::{BinKind, Item, Packer};
use crate::params::{DerivedTables, Mode, ParameterSet, SizeClass};
use crate::rational::{q, Rational};
use crate::weights::WeightContext;

/// Why bins were dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Provisional,
    PartialPure,
    SingleMarked,
    MixedMarked,
    Rebalance,
    SuperfluousRed,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Provisional => "provisional",
            Stage::PartialPure => "partial-pure",
            Stage::SingleMarked => "single-marked",
            Stage::MixedMarked => "mixed-marked",
            Stage::Rebalance => "rebalance",
            Stage::SuperfluousRed => "superfluous-red",
        }
    }
}

/// Item counts of one medium type, indexed by mark (unmarked, N, B, R).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MarkCensus {
    pub total: [i64; 4],
    pub red: [i64; 4],
}

fn mark_index(m: Mark) -> usize {
    match m {
        Mark::Unmarked => 0,
        Mark::N => 1,
        Mark::B => 2,
        Mark::R => 3,
    }
}

/// Smallest `x >= 0` with `floor(alpha * (n + x + 1)) > red`.
fn gap(alpha: &Rational, n: i64, red: i64) -> i64 {
    (Rational::integer(red + 1) / alpha - Rational::integer(n + 1)).ceil().max(0)
}

fn floor_mul(alpha: &Rational, n: i64) -> i64 {
    alpha.scale(n).floor()
}

/// Bins used against the item weights of the post-processed input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightBound {
    pub class: usize,
    pub w: Rational,
    pub v: Rational,
    pub slack: Rational,
    pub bins_used: usize,
    pub surviving: usize,
}

impl WeightBound {
    /// `bins_used <= min(W, V) + slack`.
    pub fn holds(&self) -> bool {
        Rational::integer(self.bins_used as i64) <= self.w.clone().min(self.v.clone()) + &self.slack
    }
}

#[derive(Debug, Clone)]
pub struct PostState {
    params: ParameterSet,
    tables: DerivedTables,
    pub items: Vec<Item>,
    /// Item ids per bin; grows when reduced items are split.
    pub bin_items: Vec<Vec<usize>>,
    pub removed_bins: BTreeMap<usize, Stage>,
    /// Items dropped individually (leftover bonus and unmarked items, split originals).
    pub dropped: BTreeSet<usize>,
    pub removals: Vec<(Stage, usize)>,
    /// Occupied space of every bin before post-processing.
    pub space_before: Vec<Rational>,
    pub bins_used: usize,
    /// Pure blue bins the packer still had open.
    open_pure: Vec<usize>,
    /// Bonus groups rewritten and reduced items split.
    pub groups_converted: usize,
    pub items_split: usize,
    pub notes: Vec<String>,
}

impl PostState {
    pub fn new(p: &Packer) -> Self {
        let bin_items: Vec<Vec<usize>> = p.bins.iter().map(|b| b.items.clone()).collect();
        let space_before = bin_items
            .iter()
            .map(|list| list.iter().fold(Rational::zero(), |acc, &i| acc + &p.items[i].size))
            .collect();
        PostState {
            params: p.params().clone(),
            tables: p.tables().clone(),
            items: p.items.clone(),
            bins_used: bin_items.len(),
            open_pure: p
                .bins
                .iter()
                .filter(|b| b.kind() == BinKind::PureBlue && b.is_open())
                .map(|b| b.id)
                .collect(),
            bin_items,
            removed_bins: BTreeMap::new(),
            dropped: BTreeSet::new(),
            removals: Vec::new(),
            space_before,
            groups_converted: 0,
            items_split: 0,
            notes: Vec::new(),
        }
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn removed_count(&self) -> usize {
        self.removed_bins.len()
    }

    fn alive(&self, id: usize) -> bool {
        !self.dropped.contains(&id) && !self.removed_bins.contains_key(&self.items[id].bin)
    }

    /// Live items of a bin.
    fn live(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        self.bin_items[b].iter().copied().filter(move |&i| !self.dropped.contains(&i))
    }

    fn live_bins(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.bin_items.len()).filter(move |b| !self.removed_bins.contains_key(b))
    }

    /// Mixed: blue and red items together, or a bonus item beside its large item.
    /// Dropped items still count, since the bin kept its shape in the packing.
    pub fn is_mixed(&self, b: usize) -> bool {
        let (mut blue, mut red) = (false, false);
        for &i in &self.bin_items[b] {
            let it = &self.items[i];
            if it.bonus {
                return true;
            }
            blue |= it.color.is_blueish();
            red |= it.color.is_redish();
        }
        blue && red
    }

    fn remove_bins(&mut self, stage: Stage, bins: impl IntoIterator<Item = usize>) {
        let mut count = 0;
        for b in bins {
            if let std::collections::btree_map::Entry::Vacant(e) = self.removed_bins.entry(b) {
                e.insert(stage);
                count += 1;
            }
        }
        if count == 0 {
            return;
        }
        match self.removals.iter_mut().find(|(s, _)| *s == stage) {
            Some((_, n)) => *n += count,
            None => self.removals.push((stage, count)),
        }
    }

    fn medium_red_types(&self) -> Vec<usize> {
        (0..self.params.num_types())
            .filter(|&i| self.params.is_medium(i) && self.params.redfrac[i].is_positive())
            .collect()
    }

    /// Live, non-bonus items counted as medium type `ty`.
    fn of_type(&self, ty: usize) -> Vec<usize> {
        (0..self.items.len())
            .filter(|&i| {
                let it = &self.items[i];
                it.label == ty && it.ty == ty && !it.bonus && self.alive(i)
            })
            .collect()
    }

    pub fn census(&self, ty: usize) -> MarkCensus {
        let mut c = MarkCensus::default();
        for i in self.of_type(ty) {
            let it = &self.items[i];
            let m = mark_index(it.mark);
            c.total[m] += 1;
            if it.color.is_redish() {
                c.red[m] += 1;
            }
        }
        c
    }

    /// `(n, n_red)` over live items labeled `ty`, bonus items excluded.
    pub fn type_counts(&self, ty: usize) -> (i64, i64) {
        let mut n = 0;
        let mut red = 0;
        for (i, it) in self.items.iter().enumerate() {
            if it.label == ty && !it.bonus && self.alive(i) {
                n += 1;
                if it.color.is_redish() {
                    red += 1;
                }
            }
        }
        (n, red)
    }

    /// Blue items of type `ty` in bin `b`.
    fn blues_in(&self, b: usize, ty: usize) -> Vec<usize> {
        self.live(b)
            .filter(|&i| {
                let it = &self.items[i];
                it.label == ty && it.ty == ty && !it.bonus && it.color.is_blueish()
            })
            .collect()
    }

    /// Bins holding exactly two blue items of type `ty`, both with mark `mark`.
    fn pair_bins(&self, ty: usize, mark: Mark, mixed_only: bool) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .live_bins()
            .filter(|&b| {
                let blues = self.blues_in(b, ty);
                blues.len() == 2
                    && blues.iter().all(|&i| self.items[i].mark == mark)
                    && (!mixed_only || self.is_mixed(b))
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Largest red item of type `ty` with mark `mark`; optionally only in mixed bins.
    fn largest_red(&self, ty: usize, mark: Mark, mixed_only: bool) -> Option<usize> {
        self.of_type(ty)
            .into_iter()
            .filter(|&i| {
                let it = &self.items[i];
                it.mark == mark && it.color.is_redish() && (!mixed_only || self.is_mixed(it.bin))
            })
            .max_by(|&a, &b| self.items[a].size.cmp(&self.items[b].size).then(b.cmp(&a)))
    }

    /// Drop provisional bins, partially filled pure blue bins, and bins whose marked
    /// blue item never got a partner together with everything marked in the same step.
    pub fn remove_exceptional_bins(&mut self) {
        let provisional: Vec<usize> = self
            .live_bins()
            .filter(|&b| self.live(b).any(|i| self.items[i].color.is_provisional()))
            .collect();
        self.remove_bins(Stage::Provisional, provisional);

        let partial = self.open_pure.clone();
        self.remove_bins(Stage::PartialPure, partial);

        let mut batches = BTreeSet::new();
        for ty in self.medium_red_types() {
            for b in self.live_bins().collect::<Vec<_>>() {
                let blues = self.blues_in(b, ty);
                if blues.len() == 1 && matches!(self.items[blues[0]].mark, Mark::N | Mark::R) {
                    if let Some(batch) = self.items[blues[0]].batch {
                        batches.insert(batch);
                    }
                }
            }
        }
        let doomed: BTreeSet<usize> = self
            .items
            .iter()
            .enumerate()
            .filter(|(i, it)| it.batch.is_some_and(|x| batches.contains(&x)) && self.alive(*i))
            .map(|(_, it)| it.bin)
            .collect();
        self.remove_bins(Stage::SingleMarked, doomed);
    }

    fn leaves_of(&self, id: usize) -> usize {
        let it = &self.items[id];
        if self.params.mode == Mode::Extreme && self.params.size_class(it.ty) == SizeClass::Large {
            if it.size <= q(2, 3) {
                self.params.k_max()
            } else {
                0
            }
        } else {
            self.tables.leaves[it.ty]
        }
    }

    fn set_mark(&mut self, ids: &[usize], mark: Mark) {
        for &i in ids {
            self.items[i].mark = mark;
        }
    }

    /// Move marks to R or B where the final packing supports them, then remove mixed
    /// bins holding N-items or red B-items and rebalance every mark to the exact share.
    pub fn final_marking(&mut self) {
        for ty in self.medium_red_types() {
            let alpha = self.params.redfrac[ty].clone();
            let r = mark_index(Mark::R);
            // Red item in a mixed bin plus blue pairs of the same mark move to R.
            for from in [Mark::N, Mark::B, Mark::Unmarked] {
                loop {
                    let c = self.census(ty);
                    let x = gap(&alpha, c.total[r], c.red[r]) as usize;
                    let pairs = self.pair_bins(ty, from, false);
                    let need = x.div_ceil(2);
                    let Some(red) = self.largest_red(ty, from, true) else { break };
                    if pairs.len() < need {
                        break;
                    }
                    let mut moved = vec![red];
                    for &b in &pairs[..need] {
                        moved.extend(self.blues_in(b, ty));
                    }
                    self.set_mark(&moved, Mark::R);
                }
            }
            // N-items whose blue pairs ended up mixed move to B.
            let bs = mark_index(Mark::B);
            loop {
                let c = self.census(ty);
                let x = gap(&alpha, c.total[bs], c.red[bs]) as usize;
                let pairs = self.pair_bins(ty, Mark::N, true);
                let need = x.div_ceil(2);
                let Some(red) = self.largest_red(ty, Mark::N, false) else { break };
                if pairs.len() < need {
                    break;
                }
                let mut moved = vec![red];
                for &b in &pairs[..need] {
                    moved.extend(self.blues_in(b, ty));
                }
                self.set_mark(&moved, Mark::B);
            }
        }
        let mixed_marked: Vec<usize> = self
            .live_bins()
            .filter(|&b| {
                self.is_mixed(b)
                    && self.live(b).any(|i| {
                        let it = &self.items[i];
                        self.params.is_medium(it.ty)
                            && it.label == it.ty
                            && (it.mark == Mark::N || (it.mark == Mark::B && it.color.is_redish()))
                    })
            })
            .collect();
        self.remove_bins(Stage::MixedMarked, mixed_marked);
        self.rebalance();
    }

    /// Remove bins until every mark of every medium type has exactly its red share.
    fn rebalance(&mut self) -> bool {
        let mut changed = false;
        for ty in self.medium_red_types() {
            let alpha = self.params.redfrac[ty].clone();
            for mark in Mark::MARKED {
                let m = mark_index(mark);
                loop {
                    let c = self.census(ty);
                    let want = floor_mul(&alpha, c.total[m]);
                    if c.red[m] == want {
                        break;
                    }
                    let pick_red = c.red[m] > want;
                    let victim = self
                        .of_type(ty)
                        .into_iter()
                        .filter(|&i| self.items[i].mark == mark && self.items[i].color.is_redish() == pick_red)
                        .map(|i| self.items[i].bin)
                        .min();
                    match victim {
                        Some(b) => {
                            self.remove_bins(Stage::Rebalance, [b]);
                            changed = true;
                        }
                        None => break,
                    }
                }
            }
        }
        changed
    }

    /// Rewrite bonus groups as R-items, split reduced items into small reds, drop
    /// leftovers, and remove bins with superfluous small reds.
    pub fn modify_input(&mut self) {
        for ty in self.medium_red_types() {
            let alpha = self.params.redfrac[ty].clone();
            let r = mark_index(Mark::R);
            loop {
                let c = self.census(ty);
                let x = gap(&alpha, c.total[r], c.red[r]) as usize;
                let need = (x + 2).div_ceil(2);
                let group: Vec<usize> = (0..self.items.len())
                    .filter(|&i| self.items[i].bonus && self.items[i].ty == ty && self.alive(i))
                    .take(need)
                    .collect();
                if group.len() < need {
                    break;
                }
                for (k, &medium) in group.iter().enumerate() {
                    let b = self.items[medium].bin;
                    let large = self.live(b).find(|&i| i != medium).expect("bonus item sits beside a large item");
                    let last = k + 1 == group.len();
                    let it = &mut self.items[medium];
                    it.bonus = false;
                    it.label = ty;
                    it.mark = Mark::R;
                    it.color = if last { Color::Red } else { Color::Blue };
                    if !last {
                        let size = self.items[medium].size.clone();
                        let l = &mut self.items[large];
                        l.size = size;
                        l.ty = ty;
                        l.label = ty;
                        l.mark = Mark::R;
                        l.color = Color::Blue;
                    }
                }
                self.groups_converted += 1;
            }
        }
        let reduced: Vec<usize> = (0..self.items.len())
            .filter(|&i| {
                let it = &self.items[i];
                it.label != it.ty && self.alive(i)
            })
            .collect();
        for id in reduced {
            let j = self.items[id].label;
            let fit = self.tables.redfit[j].max(1) as i64;
            let share = self.items[id].size.div_int(fit).min(self.params.upper(j).clone());
            let b = self.items[id].bin;
            self.dropped.insert(id);
            for _ in 0..fit {
                let nid = self.items.len();
                self.items.push(Item {
                    arrival: self.items[id].arrival,
                    size: share.clone(),
                    ty: j,
                    label: j,
                    color: Color::Red,
                    mark: Mark::Unmarked,
                    bonus: false,
                    bin: b,
                    batch: None,
                });
                self.bin_items[b].push(nid);
            }
            self.items_split += 1;
        }
        for ty in self.medium_red_types() {
            let leftovers: Vec<usize> = (0..self.items.len())
                .filter(|&i| {
                    let it = &self.items[i];
                    it.ty == ty && it.label == ty && self.alive(i) && (it.bonus || it.mark == Mark::Unmarked)
                })
                .collect();
            self.dropped.extend(leftovers);
        }
        self.settle();
    }

    /// Alternate small-red trimming and mark rebalancing until both are satisfied.
    fn settle(&mut self) {
        while self.trim_small_reds() | self.rebalance() {}
    }

    /// Remove bins while a small type holds more reds than its share. Prefers a bin with
    /// exactly `redfit` reds beside one large item, then bins without medium items.
    fn trim_small_reds(&mut self) -> bool {
        let mut changed = false;
        for j in 0..self.params.num_types() {
            if self.params.size_class(j) != SizeClass::Small || !self.params.redfrac[j].is_positive() {
                continue;
            }
            let alpha = self.params.redfrac[j].clone();
            let fit = self.tables.redfit[j] as usize;
            loop {
                let (n, red) = self.type_counts(j);
                if red <= floor_mul(&alpha, n) {
                    break;
                }
                let holding: Vec<usize> = self
                    .live_bins()
                    .filter(|&b| self.live(b).any(|i| self.items[i].label == j && self.items[i].color.is_redish()))
                    .collect();
                let rank = |b: usize| {
                    let live: Vec<usize> = self.live(b).collect();
                    let reds = live.iter().filter(|&&i| self.items[i].label == j && self.items[i].color.is_redish()).count();
                    let class = |i: usize| self.params.size_class(self.items[i].ty);
                    let large = live.iter().filter(|&&i| class(i) == SizeClass::Large).count();
                    let medium = live.iter().any(|&i| class(i) == SizeClass::Medium);
                    if reds == fit && large == 1 && live.len() == fit + 1 {
                        0
                    } else if !medium {
                        1
                    } else {
                        2
                    }
                };
                let Some((r, pick)) = holding.iter().map(|&b| (rank(b), b)).min() else { break };
                if r > 0 {
                    self.notes.push(format!("type {}: no bin with {fit} reds beside a large item; removed bin {}", j + 1, pick + 1));
                }
                self.remove_bins(Stage::SuperfluousRed, [pick]);
                changed = true;
            }
        }
        changed
    }

    /// Run all three steps in order.
    pub fn run(p: &Packer) -> PostState {
        let mut s = PostState::new(p);
        s.remove_exceptional_bins();
        s.final_marking();
        s.modify_input();
        s
    }

    /// Smallest red item in an unmixed bin and the redspace index its type needs.
    pub fn smallest_unmixed_red(&self) -> Option<(usize, usize)> {
        self.live_bins()
            .filter(|&b| !self.is_mixed(b))
            .flat_map(|b| self.live(b).collect::<Vec<_>>())
            .filter(|&i| self.items[i].color.is_redish())
            .min_by(|&a, &b| self.items[a].size.cmp(&self.items[b].size).then(a.cmp(&b)))
            .map(|i| (i, self.tables.needs[self.items[i].label]))
    }

    /// The weighting class read off the final state.
    pub fn class(&self) -> usize {
        self.smallest_unmixed_red().map_or(0, |(_, k)| k)
    }

    /// `(W, V)`: summed weights of the surviving items under `class`.
    pub fn total_weight(&self, class: usize) -> (Rational, Rational) {
        let ctx = WeightContext::new(&self.params, &self.tables, class);
        let mut w = Rational::zero();
        let mut v = Rational::zero();
        for (i, it) in self.items.iter().enumerate() {
            if !self.alive(i) {
                continue;
            }
            let (a, b) = if it.label == self.params.sand() {
                let s = ctx.weight_sand(&it.size);
                (s.clone(), s)
            } else if self.params.mode == Mode::Extreme && self.params.size_class(it.ty) == SizeClass::Large {
                ctx.large_pair(self.leaves_of(i))
            } else {
                ctx.weight_pair(it.label, it.mark)
            };
            w += a;
            v += b;
        }
        (w, v)
    }

    /// Additive slack allowed between bins used and the weight bound.
    pub fn slack_constant(&self) -> Rational {
        let mut c = Rational::integer(2 * self.params.num_types() as i64);
        for a in &self.params.redfrac {
            if a.is_positive() {
                c += Rational::integer(12) / a;
            }
        }
        c
    }

    /// Reds labeled `ty` that went away with bins removed for other reasons than
    /// trimming small reds.
    pub fn reds_lost(&self, ty: usize) -> i64 {
        self.removed_bins
            .iter()
            .filter(|(_, &stage)| stage != Stage::SuperfluousRed)
            .flat_map(|(&b, _)| self.bin_items[b].iter())
            .filter(|&&i| {
                let it = &self.items[i];
                it.label == ty && it.color.is_redish() && !it.bonus && !self.dropped.contains(&i)
            })
            .count() as i64
    }

    pub fn weight_bound(&self) -> WeightBound {
        let class = self.class();
        let (w, v) = self.total_weight(class);
        WeightBound {
            class,
            w,
            v,
            slack: self.slack_constant(),
            bins_used: self.bins_used,
            surviving: self.bins_used - self.removed_count(),
        }
    }

    /// Check every post-condition; an empty result means all hold.
    pub fn verify(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |property: &str, ty: usize, detail: String| {
            out.push(Violation { property: property.into(), type_index: ty + 1, detail });
        };
        for (i, it) in self.items.iter().enumerate() {
            if self.alive(i) && it.bonus {
                push("bonus-left", it.ty, format!("item {} is still bonus", i + 1));
            }
        }
        for ty in 0..self.params.num_types() {
            let alpha = &self.params.redfrac[ty];
            if !alpha.is_positive() {
                continue;
            }
            let (n, red) = self.type_counts(ty);
            let want = floor_mul(alpha, n);
            let low = match self.params.size_class(ty) {
                SizeClass::Medium => want - 3,
                _ => want - self.tables.redfit[ty] as i64 - self.reds_lost(ty),
            };
            if red < low || red > want {
                push("red-share", ty, format!("n_red {red} outside [{low}, {want}] for n {n}"));
            }
            if !self.params.is_medium(ty) {
                continue;
            }
            let c = self.census(ty);
            for mark in Mark::MARKED {
                let m = mark_index(mark);
                if c.red[m] != floor_mul(alpha, c.total[m]) {
                    push(
                        "mark-share",
                        ty,
                        format!("mark {mark}: {} red of {}, want {}", c.red[m], c.total[m], floor_mul(alpha, c.total[m])),
                    );
                }
            }
            if c.total[0] > 0 {
                push("unmarked-left", ty, format!("{} unmarked items remain", c.total[0]));
            }
            for i in self.of_type(ty) {
                let it = &self.items[i];
                let b = it.bin;
                if it.color.is_blueish() && self.blues_in(b, ty).len() != 2 {
                    push("blue-pairs", ty, format!("blue {} item {} not paired", it.mark, i + 1));
                }
                if self.is_mixed(b) && (it.mark == Mark::N || (it.mark == Mark::B && it.color.is_redish())) {
                    push("mixed-marked", ty, format!("{} item {} in mixed bin {}", it.mark, i + 1, b + 1));
                }
            }
            // Many N-items are at least as large as the smallest red N-item.
            let n_items: Vec<usize> = self.of_type(ty).into_iter().filter(|&i| self.items[i].mark == Mark::N).collect();
            if let Some(smallest) = n_items
                .iter()
                .filter(|&&i| self.items[i].color.is_redish())
                .map(|&i| self.items[i].size.clone())
                .min()
            {
                let big = n_items.iter().filter(|&&i| self.items[i].size >= smallest).count() as i64;
                let total = Rational::integer(c.total[mark_index(Mark::N)]);
                let bound = (alpha + (Rational::one() - alpha).div_int(2)) * total - Rational::integer(2);
                if Rational::integer(big) < bound {
                    push("large-n-items", ty, format!("{big} N-items at least the smallest red, bound {bound}"));
                }
            }
        }
        // No unmixed blue bin can take the reds of an unmixed red bin.
        let mut min_needs: Option<(usize, usize)> = None;
        let mut max_leaves: Option<(usize, usize)> = None;
        for b in self.live_bins() {
            let live: Vec<usize> = self.live(b).collect();
            if live.is_empty() || self.is_mixed(b) {
                continue;
            }
            let first = &self.items[live[0]];
            if first.color.is_redish() {
                let needs = self.tables.needs[first.label];
                if self.params.mode == Mode::Super || !self.params.is_medium(first.label) {
                    min_needs = Some(min_needs.map_or((needs, b), |m| m.min((needs, b))));
                }
            } else if first.color.is_blueish() {
                let leaves = self.leaves_of(live[0]);
                if leaves > 0 {
                    max_leaves = Some(max_leaves.map_or((leaves, b), |m| m.max((leaves, b))));
                }
            }
        }
        if let (Some((needs, rb)), Some((leaves, bb))) = (min_needs, max_leaves) {
            if leaves >= needs {
                push("unmixed-exclusion", 0, format!("unmixed red bin {} beside unmixed blue bin {}", rb + 1, bb + 1));
            }
        }
        for (b, before) in self.space_before.iter().enumerate() {
            let after = self.live(b).fold(Rational::zero(), |acc, i| acc + &self.items[i].size);
            if &after > before {
                push("space-grew", 0, format!("bin {} holds {after} > {before}", b + 1));
            }
        }
        out
    }

    /// Plain-text summary: removals, census per medium type, and the class.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "bins-used: {}", self.bins_used);
        let _ = writeln!(s, "bins-removed: {}", self.removed_count());
        for (stage, n) in &self.removals {
            let _ = writeln!(s, "  removed {} {}", stage.name(), n);
        }
        let _ = writeln!(s, "items-dropped: {}", self.dropped.len() - self.items_split);
        let _ = writeln!(s, "bonus-groups: {}", self.groups_converted);
        let _ = writeln!(s, "reduced-split: {}", self.items_split);
        for ty in self.medium_red_types() {
            let c = self.census(ty);
            let _ = writeln!(
                s,
                "type {} N {}/{} B {}/{} R {}/{}",
                ty + 1,
                c.red[1],
                c.total[1],
                c.red[2],
                c.total[2],
                c.red[3],
                c.total[3]
            );
        }
        match self.smallest_unmixed_red() {
            Some((i, k)) => {
                let it = &self.items[i];
                let _ = writeln!(s, "smallest-unmixed-red: item {} size {} type {}", it.arrival + 1, it.size, it.label + 1);
                let _ = writeln!(s, "class: {k}");
            }
            None => {
                let _ = writeln!(s, "smallest-unmixed-red: none");
                let _ = writeln!(s, "class: 0");
            }
        }
        let wb = self.weight_bound();
        let _ = writeln!(s, "W: {} ({})", wb.w, wb.w.to_decimal(6));
        let _ = writeln!(s, "V: {} ({})", wb.v, wb.v.to_decimal(6));
        let _ = writeln!(s, "slack: {} ({})", wb.slack, wb.slack.to_decimal(6));
        let _ = writeln!(s, "bound: {}", if wb.holds() { "holds" } else { "fails" });
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramfile::load_params;
    use crate::rational::r;

    const TOY: &str = "mode: extreme\nc: 1583/1000\ntN: 1/20\ngamma: 2/7\ngamma_start: 1/12\ntsmall: 1/20\nsizes:\n1/2 0\n41/100 0\n39/100 1/5\n1/3 1/9\n1/4 0\n1/5 0\n1/6 0\n1/10 1/10\n1/20 0\n0 0\n";

    fn packed(sizes: &[&str]) -> Packer {
        let mut p = Packer::new(load_params(TOY).unwrap());
        for s in sizes {
            p.pack(r(s)).unwrap();
        }
        p
    }

    #[test]
    fn gap_examples() {
        assert_eq!(gap(&r("1/5"), 0, 0), 4);
        assert_eq!(gap(&r("1/5"), 5, 1), 4);
        assert_eq!(gap(&r("1/5"), 9, 1), 0);
        assert_eq!(gap(&r("1/3"), 2, 0), 0);
    }

    #[test]
    fn bonus_groups_become_r_items() {
        let mut sizes = vec!["3/5"; 20];
        sizes.extend(vec!["7/20"; 20]);
        let p = packed(&sizes);
        let ty = p.items[20].ty;
        assert!(p.bonus_items().count() >= 5);
        let s = PostState::run(&p);
        assert!(s.groups_converted >= 1);
        let c = s.census(ty);
        assert!(c.total[3] > 0);
        assert_eq!(c.red[3], floor_mul(&s.params.redfrac[ty], c.total[3]));
        // Shrunk large items now count as type-ty blues in their own bins.
        assert!(s.items.iter().take(20).any(|it| it.ty == ty && it.size == r("7/20")));
        let v = s.verify();
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn provisional_bins_are_removed() {
        let p = packed(&["7/20", "7/20", "7/20"]);
        assert!(p.items.iter().any(|it| it.color.is_provisional()));
        let s = PostState::run(&p);
        assert!(s.removals.iter().any(|(st, n)| *st == Stage::Provisional && *n > 0));
        assert!((0..s.items.len()).all(|i| !s.alive(i) || !s.items[i].color.is_provisional()));
    }

    #[test]
    fn reduced_items_split_into_small_reds() {
        let mut sizes = vec!["11/20", "2/5"];
        sizes.extend(vec!["3/20"; 10]);
        let p = packed(&sizes);
        let j = p.items[2].ty;
        let s = PostState::run(&p);
        assert_eq!(s.items_split, 1);
        assert!(s.dropped.contains(&1));
        let fit = s.tables.redfit[j] as usize;
        let pieces: Vec<&Item> = s.items[p.items.len()..].iter().collect();
        assert_eq!(pieces.len(), fit);
        assert!(pieces.iter().all(|it| it.label == j && it.color == Color::Red && it.size <= *s.params.upper(j)));
        // The bin never holds more than before.
        assert!(s.verify().iter().all(|v| v.property != "space-grew"));
    }

    #[test]
    fn partial_pure_blue_bins_are_removed() {
        let p = packed(&["1/5", "1/5"]);
        let s = PostState::run(&p);
        assert_eq!(s.removed_count(), 1);
        assert_eq!(s.removals, vec![(Stage::PartialPure, 1)]);
        assert_eq!(s.class(), 0);
    }

    #[test]
    fn weight_bound_on_a_tiny_run() {
        let p = packed(&["3/5", "7/20", "3/20", "1/25", "9/10"]);
        let s = PostState::run(&p);
        let wb = s.weight_bound();
        assert!(wb.holds(), "{wb:?}");
        assert_eq!(wb.bins_used, p.bins_used());
        let text = s.summary();
        assert!(text.contains("bins-used: ") && text.contains("class: ") && text.contains("bound: holds"));
    }
}
