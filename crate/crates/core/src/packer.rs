//! Online packing with the super and extreme harmonic algorithms.
//!
//! The packer keeps enough state to replay marking decisions, check the structural
//! invariants after every item, and hand a finished packing to post-processing.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Violation};
use crate::item::{Color, Mark};
use crate::params::{DerivedTables, Mode, ParameterSet, SizeClass};
use crate::rational::{q, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    /// Arrival index, starting at 0.
    pub arrival: usize,
    pub size: Rational,
    pub ty: usize,
    /// Type the item is counted as. Differs from `ty` only for reduced bonus items.
    pub label: usize,
    pub color: Color,
    pub mark: Mark,
    pub bonus: bool,
    pub bin: usize,
    /// Marking step that assigned the current mark.
    pub batch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinKind {
    PureBlue,
    UnmixedBlue,
    UnmixedRed,
    Mixed,
}

/// Which search index a bin currently sits in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    None,
    Blue(usize),
    Large,
    Red(usize),
    MediumRed,
}

#[derive(Debug, Clone)]
pub struct Bin {
    pub id: usize,
    pub items: Vec<usize>,
    /// Redspace index left free by the blue items.
    pub leaves: usize,
    pub pure: bool,
    /// Received a bonus item; such bins are never open.
    pub sealed: bool,
    /// `(type, count)` of blue and red items, provisional ones included.
    pub blue: Option<(usize, usize)>,
    pub red: Option<(usize, usize)>,
    pub provisional: bool,
    /// A provisional item here was made definite by the marking step.
    pub from_marking: bool,
    slot: Slot,
    open_blue: bool,
    open_red: bool,
    /// Total size held; sand bins close once the next sand item would overflow.
    fill: Rational,
    closed: bool,
}

impl Bin {
    pub fn kind(&self) -> BinKind {
        if self.sealed || (self.blue.is_some() && self.red.is_some()) {
            BinKind::Mixed
        } else if self.red.is_some() {
            BinKind::UnmixedRed
        } else if self.pure {
            BinKind::PureBlue
        } else {
            BinKind::UnmixedBlue
        }
    }

    pub fn is_open(&self) -> bool {
        self.open_blue || self.open_red
    }

    /// Group identity: blue type, red type, and whether the bin is pure blue.
    pub fn group(&self) -> (Option<usize>, Option<usize>, bool) {
        (self.blue.map(|b| b.0), self.red.map(|r| r.0), self.pure)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeCounters {
    pub n: i64,
    pub n_red: i64,
    pub n_bonus: i64,
    /// Per mark slot (N, B, R): items and red items assigned.
    pub marked: [i64; 3],
    pub marked_red: [i64; 3],
}

/// Where one arriving item went.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub item: usize,
    pub size: Rational,
    pub ty: usize,
    pub color: Color,
    pub bin: usize,
    pub bonus: bool,
}

/// A later change to an already packed item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Update {
    /// Mark or color changed by the marking step.
    Mark { item: usize, mark: Mark, color: Color },
    /// A bonus item stopped being bonus and is now counted as `label`.
    Relabel { item: usize, label: usize, color: Color },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackOutcome {
    pub placement: Placement,
    pub updates: Vec<Update>,
}

/// Smallest `x >= 0` with `floor(alpha * (n + step*x + 1)) > red`.
fn quota_gap(alpha: &Rational, n: i64, red: i64, step: i64) -> i64 {
    let need = Rational::integer(red + 1) / alpha - Rational::integer(n + 1);
    need.div_int(step).ceil().max(0)
}

/// A red fraction as an exact integer pair, for the per-item quota tests.
#[derive(Debug, Clone, Copy)]
struct Share {
    num: i128,
    den: i128,
}

impl Share {
    fn of(alpha: &Rational) -> Share {
        use num_traits::ToPrimitive;
        let num = alpha.numer().to_i128().expect("red fraction numerator fits i128");
        let den = alpha.denom().to_i128().expect("red fraction denominator fits i128");
        Share { num, den }
    }

    /// `floor(alpha * n)` for `n >= 0`.
    fn floor(self, n: i64) -> i64 {
        (self.num * n as i128).div_euclid(self.den) as i64
    }
}

#[derive(Debug, Clone)]
pub struct Packer {
    params: ParameterSet,
    tables: DerivedTables,
    pub items: Vec<Item>,
    pub bins: Vec<Bin>,
    pub counters: Vec<TypeCounters>,
    by_type: Vec<Vec<usize>>,
    open: BTreeMap<(usize, bool), BTreeSet<usize>>,
    unmixed_blue: BTreeMap<usize, BTreeSet<usize>>,
    unmixed_large: BTreeSet<usize>,
    unmixed_red: BTreeMap<usize, BTreeSet<usize>>,
    unmixed_medium_red: BTreeSet<usize>,
    bonus_items: BTreeSet<usize>,
    provisional: Vec<usize>,
    provisional_items: BTreeSet<usize>,
    shares: Vec<Share>,
    classes: Vec<SizeClass>,
    /// `ceil(5 / alpha)` per type with a positive red fraction.
    provisional_cap: Vec<usize>,
    batches: usize,
    dirty: BTreeSet<usize>,
}

impl Packer {
    pub fn new(params: ParameterSet) -> Self {
        let tables = params.tables();
        let n = params.num_types();
        Packer {
            tables,
            items: Vec::new(),
            bins: Vec::new(),
            counters: vec![TypeCounters::default(); n],
            by_type: vec![Vec::new(); n],
            open: BTreeMap::new(),
            unmixed_blue: BTreeMap::new(),
            unmixed_large: BTreeSet::new(),
            unmixed_red: BTreeMap::new(),
            unmixed_medium_red: BTreeSet::new(),
            bonus_items: BTreeSet::new(),
            provisional: vec![0; n],
            provisional_items: BTreeSet::new(),
            shares: params.redfrac.iter().map(Share::of).collect(),
            classes: (0..n).map(|i| params.size_class(i)).collect(),
            provisional_cap: params
                .redfrac
                .iter()
                .map(|a| if a.is_positive() { (Rational::integer(5) / a).ceil() as usize } else { 0 })
                .collect(),
            batches: 0,
            dirty: BTreeSet::new(),
            params,
        }
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn tables(&self) -> &DerivedTables {
        &self.tables
    }

    pub fn mode(&self) -> Mode {
        self.params.mode
    }

    pub fn bins_used(&self) -> usize {
        self.bins.len()
    }

    /// Number of marking steps executed so far.
    pub fn batches(&self) -> usize {
        self.batches
    }

    fn extreme(&self) -> bool {
        self.params.mode == Mode::Extreme
    }

    fn is_large(&self, ty: usize) -> bool {
        self.classes[ty] == SizeClass::Large
    }

    fn is_medium(&self, ty: usize) -> bool {
        self.classes[ty] == SizeClass::Medium
    }

    /// Redspace index a blue item leaves. Extreme mode decides large items by size.
    pub fn item_leaves(&self, ty: usize, size: &Rational) -> usize {
        if self.extreme() && self.is_large(ty) {
            if *size <= q(2, 3) {
                self.params.k_max()
            } else {
                0
            }
        } else {
            self.tables.leaves[ty]
        }
    }

    /// Pack every size in order.
    pub fn run<'a, I>(params: ParameterSet, sizes: I) -> Result<Packer, Error>
    where
        I: IntoIterator<Item = &'a Rational>,
    {
        let mut p = Packer::new(params);
        for s in sizes {
            p.pack(s.clone())?;
        }
        Ok(p)
    }

    pub fn pack(&mut self, size: Rational) -> Result<PackOutcome, Error> {
        let ty = self.params.classify(&size)?;
        let id = self.items.len();
        self.items.push(Item {
            arrival: id,
            size: size.clone(),
            ty,
            label: ty,
            color: Color::None,
            mark: Mark::Unmarked,
            bonus: false,
            bin: usize::MAX,
            batch: None,
        });
        if self.is_medium(ty) {
            self.by_type[ty].push(id);
        }
        let mut updates = Vec::new();
        let alpha = self.params.redfrac[ty].clone();
        self.counters[ty].n += 1;
        let wants_red = self.counters[ty].n_red < self.shares[ty].floor(self.counters[ty].n);
        let mut bonus = false;
        if !self.extreme() {
            if wants_red {
                self.place(id, true);
                self.counters[ty].n_red += 1;
            } else {
                self.place(id, false);
            }
        } else if wants_red {
            if let Some(other) = self.replaceable_bonus(ty) {
                let label = ty;
                let from = self.items[other].ty;
                self.bonus_items.remove(&other);
                self.counters[from].n_bonus -= 1;
                let fit = self.tables.redfit[label] as i64;
                self.counters[label].n += fit;
                self.counters[label].n_red += fit;
                let it = &mut self.items[other];
                it.bonus = false;
                it.label = label;
                it.color = Color::Red;
                let b = it.bin;
                self.settle(b);
                self.dirty.insert(from);
                updates.push(Update::Relabel { item: other, label, color: Color::Red });
                self.place(id, false);
            } else {
                self.place(id, true);
                self.counters[ty].n_red += 1;
            }
        } else if self.is_medium(ty) && alpha.is_positive() {
            match self.large_fit(&size) {
                Some(b) => {
                    self.counters[ty].n -= 1;
                    self.counters[ty].n_bonus += 1;
                    self.items[id].bonus = true;
                    self.bonus_items.insert(id);
                    self.attach(id, b);
                    self.bins[b].sealed = true;
                    self.settle(b);
                    bonus = true;
                }
                None => self.place(id, false),
            }
        } else {
            self.place(id, false);
        }
        let it = &self.items[id];
        let placement =
            Placement { item: id, size, ty, color: it.color, bin: it.bin, bonus };
        if self.extreme() {
            updates.extend(self.mark_and_color_dirty());
        }
        Ok(PackOutcome { placement, updates })
    }

    /// A bonus item that can absorb a red decision for type `ty`: same type first, then
    /// any bonus item when `ty` is small. Oldest wins.
    fn replaceable_bonus(&self, ty: usize) -> Option<usize> {
        if self.counters[ty].n_bonus > 0 {
            return self.bonus_items.iter().copied().find(|&b| self.items[b].ty == ty);
        }
        if self.classes[ty] == SizeClass::Small {
            return self.bonus_items.iter().next().copied();
        }
        None
    }

    /// Oldest unmixed bin with a blue large item that leaves room for `size`.
    fn large_fit(&self, size: &Rational) -> Option<usize> {
        let room = Rational::one() - size;
        self.unmixed_large.iter().copied().find(|&b| self.items[self.bins[b].items[0]].size <= room)
    }

    fn first_in<'a, I>(sets: I) -> Option<usize>
    where
        I: Iterator<Item = &'a BTreeSet<usize>>,
    {
        sets.filter_map(|s| s.iter().next().copied()).min()
    }

    fn compatible(&self, id: usize, red: bool) -> Option<usize> {
        let it = &self.items[id];
        let ty = it.ty;
        if red {
            let needs = self.tables.needs[ty];
            let mut best = Self::first_in(self.unmixed_blue.range(needs..).map(|(_, s)| s));
            if self.extreme() {
                let large = if self.is_medium(ty) {
                    self.large_fit(&it.size)
                } else {
                    self.unmixed_large.iter().copied().find(|&b| self.bins[b].leaves >= needs)
                };
                best = best.into_iter().chain(large).min();
            }
            best
        } else {
            let leaves = self.item_leaves(ty, &it.size);
            let mut best = Self::first_in(self.unmixed_red.range(..=leaves).map(|(_, s)| s));
            if self.extreme() && self.is_large(ty) {
                let room = Rational::one() - &it.size;
                let medium = self
                    .unmixed_medium_red
                    .iter()
                    .copied()
                    .find(|&b| self.items[self.bins[b].items[0]].size <= room);
                best = best.into_iter().chain(medium).min();
            }
            best
        }
    }

    /// Pack an item with the given color: open bin, compatible bin, new bin.
    fn place(&mut self, id: usize, red: bool) {
        let ty = self.items[id].ty;
        let color = if red { Color::Red } else { Color::Blue };
        if ty == self.params.sand() {
            // Sand goes by Next Fit on size rather than on item count.
            if let Some(b) = self.open.get(&(ty, false)).and_then(|s| s.iter().next().copied()) {
                if &self.bins[b].fill + &self.items[id].size > Rational::one() {
                    self.bins[b].closed = true;
                    self.settle(b);
                }
            }
        }
        if let Some(b) = self.open.get(&(ty, red)).and_then(|s| s.iter().next().copied()) {
            self.items[id].color = color;
            self.attach(id, b);
            self.settle(b);
            return;
        }
        if let Some(b) = self.compatible(id, red) {
            self.items[id].color = color;
            self.attach(id, b);
            // The bin becomes mixed: provisional colors of its items become final.
            let members = self.bins[b].items.clone();
            for m in members {
                let c = self.items[m].color;
                if c.is_provisional() {
                    self.items[m].color = if c.is_blueish() { Color::Blue } else { Color::Red };
                    self.provisional[self.items[m].ty] -= 1;
                    self.provisional_items.remove(&m);
                }
                self.dirty.insert(self.items[m].ty);
            }
            self.settle(b);
            return;
        }
        let provisional = self.extreme() && self.is_medium(ty) && self.params.redfrac[ty].is_positive();
        self.items[id].color = match (provisional, red) {
            (true, true) => Color::ProvisionalRed,
            (true, false) => Color::ProvisionalBlue,
            (false, true) => Color::Red,
            (false, false) => Color::Blue,
        };
        if provisional {
            self.provisional[ty] += 1;
            self.provisional_items.insert(id);
        }
        let leaves = if red { 0 } else { self.item_leaves(ty, &self.items[id].size) };
        let b = self.bins.len();
        self.bins.push(Bin {
            id: b,
            items: Vec::new(),
            leaves,
            pure: !red && leaves == 0,
            sealed: false,
            blue: None,
            red: None,
            provisional: false,
            from_marking: false,
            slot: Slot::None,
            open_blue: false,
            open_red: false,
            fill: Rational::zero(),
            closed: false,
        });
        self.attach(id, b);
        self.settle(b);
    }

    fn attach(&mut self, id: usize, b: usize) {
        self.items[id].bin = b;
        self.bins[b].items.push(id);
        self.bins[b].fill += &self.items[id].size;
        self.dirty.insert(self.items[id].ty);
        if self.bins[b].blue.is_none() && self.items[id].color.is_blueish() {
            let (ty, size) = (self.items[id].ty, self.items[id].size.clone());
            self.bins[b].leaves = self.item_leaves(ty, &size);
        }
    }

    /// Recompute a bin's summary and move it between the search indexes.
    fn settle(&mut self, b: usize) {
        let mut blue: Option<(usize, usize)> = None;
        let mut red: Option<(usize, usize)> = None;
        let mut provisional = false;
        for &m in &self.bins[b].items {
            let it = &self.items[m];
            provisional |= it.color.is_provisional();
            if it.bonus || it.label != it.ty {
                continue;
            }
            let slot = if it.color.is_blueish() {
                &mut blue
            } else if it.color.is_redish() {
                &mut red
            } else {
                continue;
            };
            match slot {
                Some((_, c)) => *c += 1,
                None => *slot = Some((it.ty, 1)),
            }
        }
        let extreme = self.extreme();
        let bin = &self.bins[b];
        let sealed = bin.sealed;
        let sand = self.params.sand();
        let open_blue = !sealed
            && !bin.closed
            && !provisional
            && blue.is_some_and(|(t, c)| t == sand || (c as u64) < self.tables.bluefit[t]);
        let open_red =
            !sealed && !provisional && red.is_some_and(|(t, c)| (c as u64) < self.tables.redfit[t]);
        let slot = if sealed || (blue.is_some() && red.is_some()) {
            Slot::None
        } else if let Some((t, _)) = blue {
            if bin.pure {
                Slot::None
            } else if extreme && self.is_large(t) {
                Slot::Large
            } else {
                Slot::Blue(bin.leaves)
            }
        } else if let Some((t, _)) = red {
            if extreme && self.is_medium(t) {
                Slot::MediumRed
            } else {
                Slot::Red(self.tables.needs[t])
            }
        } else {
            Slot::None
        };
        let (old_slot, old_blue, old_red, old_bt, old_rt) =
            (bin.slot, bin.open_blue, bin.open_red, bin.blue.map(|x| x.0), bin.red.map(|x| x.0));
        if old_blue {
            self.unindex_open(old_bt.unwrap(), false, b);
        }
        if old_red {
            self.unindex_open(old_rt.unwrap(), true, b);
        }
        if old_slot != slot {
            match old_slot {
                Slot::None => {}
                Slot::Blue(l) => remove_keyed(&mut self.unmixed_blue, l, b),
                Slot::Large => {
                    self.unmixed_large.remove(&b);
                }
                Slot::Red(n) => remove_keyed(&mut self.unmixed_red, n, b),
                Slot::MediumRed => {
                    self.unmixed_medium_red.remove(&b);
                }
            }
            match slot {
                Slot::None => {}
                Slot::Blue(l) => {
                    self.unmixed_blue.entry(l).or_default().insert(b);
                }
                Slot::Large => {
                    self.unmixed_large.insert(b);
                }
                Slot::Red(n) => {
                    self.unmixed_red.entry(n).or_default().insert(b);
                }
                Slot::MediumRed => {
                    self.unmixed_medium_red.insert(b);
                }
            }
        }
        if open_blue {
            self.open.entry((blue.unwrap().0, false)).or_default().insert(b);
        }
        if open_red {
            self.open.entry((red.unwrap().0, true)).or_default().insert(b);
        }
        let bin = &mut self.bins[b];
        bin.blue = blue;
        bin.red = red;
        bin.provisional = provisional;
        bin.slot = slot;
        bin.open_blue = open_blue;
        bin.open_red = open_red;
    }

    fn unindex_open(&mut self, ty: usize, red: bool, b: usize) {
        if let Some(s) = self.open.get_mut(&(ty, red)) {
            s.remove(&b);
            if s.is_empty() {
                self.open.remove(&(ty, red));
            }
        }
    }

    fn set_color(&mut self, id: usize, color: Color) {
        let old = self.items[id].color;
        if old == color {
            return;
        }
        let ty = self.items[id].ty;
        if old.is_provisional() {
            self.provisional[ty] -= 1;
            self.provisional_items.remove(&id);
        }
        if color.is_provisional() {
            self.provisional[ty] += 1;
            self.provisional_items.insert(id);
        }
        self.items[id].color = color;
        let b = self.items[id].bin;
        self.settle(b);
    }

    fn mark_and_color_dirty(&mut self) -> Vec<Update> {
        let mut updates = Vec::new();
        let dirty: Vec<usize> = std::mem::take(&mut self.dirty).into_iter().collect();
        let mut again = BTreeSet::new();
        for ty in dirty {
            if !self.is_medium(ty) || !self.params.redfrac[ty].is_positive() {
                continue;
            }
            let before = updates.len();
            self.mark_and_color(ty, &mut updates);
            if updates.len() > before {
                again.insert(ty);
            }
        }
        self.dirty = again;
        updates
    }

    /// Run the marking step for medium type `ty` once.
    pub fn mark_and_color(&mut self, ty: usize, updates: &mut Vec<Update>) {
        let alpha = self.params.redfrac[ty].clone();
        if !alpha.is_positive() {
            return;
        }
        // A second blue item joining a marked one inherits its mark.
        let members = self.by_type[ty].clone();
        for &id in &members {
            let it = &self.items[id];
            if it.label != ty || it.color != Color::Blue || it.mark != Mark::Unmarked {
                continue;
            }
            let mate = self.bins[it.bin].items.iter().copied().find(|&m| {
                let o = &self.items[m];
                m != id && o.ty == ty && o.label == ty && o.color == Color::Blue && o.mark != Mark::Unmarked
            });
            if let Some(m) = mate {
                let (mark, batch) = (self.items[m].mark, self.items[m].batch);
                self.items[id].mark = mark;
                self.items[id].batch = batch;
                self.counters[ty].marked[mark.slot()] += 1;
                updates.push(Update::Mark { item: id, mark, color: Color::Blue });
            }
        }

        let view = self.type_view(ty);
        let c = &self.counters[ty];
        let r = Mark::R.slot();
        let x_r = quota_gap(&alpha, c.marked[r], c.marked_red[r], 2) as usize;
        let red = view.bonus.first().or(view.mixed_red.first()).copied();
        if let (Some(red), true) = (red, view.prov_blue.len() >= x_r) {
            self.batches += 1;
            let batch = self.batches;
            for &id in &view.prov_blue[..x_r] {
                self.set_color(id, Color::Blue);
                self.assign(id, Mark::R, batch, updates);
            }
            if self.items[red].bonus {
                self.bonus_items.remove(&red);
                self.items[red].bonus = false;
                self.set_color(red, Color::Red);
                let c = &mut self.counters[ty];
                c.n_bonus -= 1;
                c.n += 1;
                c.n_red += 1;
            }
            self.assign(red, Mark::R, batch, updates);
            let c = &mut self.counters[ty];
            c.marked[r] += x_r as i64 + 1;
            c.marked_red[r] += 1;
        }

        let view = self.type_view(ty);
        let c = &self.counters[ty];
        let bs = Mark::B.slot();
        let x_b = quota_gap(&alpha, c.marked[bs], c.marked_red[bs], 1) as usize;
        let pairs = x_b.div_ceil(2);
        if let (Some(&red), true) = (view.prov_red.first(), view.blue_pairs.len() >= pairs) {
            self.batches += 1;
            let batch = self.batches;
            for &b in &view.blue_pairs[..pairs] {
                let blues: Vec<usize> = self.bins[b]
                    .items
                    .iter()
                    .copied()
                    .filter(|&m| self.items[m].ty == ty && self.items[m].color == Color::Blue)
                    .collect();
                for id in blues {
                    self.assign(id, Mark::B, batch, updates);
                }
            }
            self.set_color(red, Color::Red);
            self.assign(red, Mark::B, batch, updates);
            let c = &mut self.counters[ty];
            c.marked[bs] += 2 * pairs as i64 + 1;
            c.marked_red[bs] += 1;
        }

        let view = self.type_view(ty);
        let c = &self.counters[ty];
        let ns = Mark::N.slot();
        let x_n = quota_gap(&alpha, c.marked[ns], c.marked_red[ns], 2) as usize;
        if view.prov_blue.len() >= x_n && !view.prov_red.is_empty() {
            let mut pool: Vec<usize> = view.prov_blue.iter().chain(&view.prov_red).copied().collect();
            // Largest first; earlier arrivals count as larger on ties.
            pool.sort_by(|&a, &b| self.items[b].size.cmp(&self.items[a].size).then(a.cmp(&b)));
            let chosen: Vec<usize> = pool[..x_n].to_vec();
            let smallest = *pool.last().unwrap();
            let outside = |p: &Packer, want: Color| {
                pool.iter()
                    .copied()
                    .filter(|&o| o != smallest && !chosen.contains(&o))
                    .find(|&o| p.items[o].color == want)
            };
            for &s in &chosen {
                if self.items[s].color != Color::ProvisionalRed {
                    continue;
                }
                let partner = if self.items[smallest].color == Color::ProvisionalBlue {
                    smallest
                } else {
                    outside(self, Color::ProvisionalBlue).expect("enough provisional blue items")
                };
                self.swap_colors(s, partner, updates);
            }
            if self.items[smallest].color == Color::ProvisionalBlue {
                let partner = outside(self, Color::ProvisionalRed).expect("a provisional red item");
                self.swap_colors(smallest, partner, updates);
            }
            self.batches += 1;
            let batch = self.batches;
            for &s in &chosen {
                self.set_color(s, Color::Blue);
                self.assign(s, Mark::N, batch, updates);
            }
            self.set_color(smallest, Color::Red);
            self.assign(smallest, Mark::N, batch, updates);
            let c = &mut self.counters[ty];
            c.marked[ns] += x_n as i64 + 1;
            c.marked_red[ns] += 1;
        }
    }

    fn swap_colors(&mut self, a: usize, b: usize, updates: &mut Vec<Update>) {
        let (ca, cb) = (self.items[a].color, self.items[b].color);
        self.set_color(a, cb);
        self.set_color(b, ca);
        updates.push(Update::Mark { item: b, mark: self.items[b].mark, color: ca });
    }

    fn assign(&mut self, id: usize, mark: Mark, batch: usize, updates: &mut Vec<Update>) {
        let b = self.items[id].bin;
        if self.bins[b].items.len() == 1 {
            self.bins[b].from_marking = true;
        }
        let it = &mut self.items[id];
        it.mark = mark;
        it.batch = Some(batch);
        updates.push(Update::Mark { item: id, mark, color: it.color });
    }

    fn type_view(&self, ty: usize) -> TypeView {
        let mut v = TypeView::default();
        for &id in &self.by_type[ty] {
            let it = &self.items[id];
            if it.label != ty || it.mark != Mark::Unmarked {
                continue;
            }
            let bin = &self.bins[it.bin];
            let mixed = bin.kind() == BinKind::Mixed;
            if it.bonus {
                v.bonus.push(id);
                continue;
            }
            match it.color {
                Color::ProvisionalBlue => v.prov_blue.push(id),
                Color::ProvisionalRed => v.prov_red.push(id),
                Color::Red if mixed => v.mixed_red.push(id),
                Color::Blue if mixed && !bin.sealed && bin.blue == Some((ty, 2)) => {
                    let unmarked = bin.items.iter().all(|&m| {
                        let o = &self.items[m];
                        o.ty != ty || o.color != Color::Blue || o.mark == Mark::Unmarked
                    });
                    let first = bin.items.iter().copied().find(|&m| self.items[m].ty == ty) == Some(id);
                    if unmarked && first {
                        v.blue_pairs.push(bin.id);
                    }
                }
                _ => {}
            }
        }
        v.blue_pairs.sort_unstable();
        v
    }

    /// Structural checks; an empty result means every invariant holds.
    pub fn check_invariants(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |property: &str, ty: usize, detail: String| {
            out.push(Violation { property: property.into(), type_index: ty + 1, detail });
        };
        // At most two open bins per group among those the packer opened itself. Bins
        // whose item was fixed by marking are capped per type instead.
        let mut per_group: BTreeMap<(Option<usize>, Option<usize>, bool), Vec<usize>> = BTreeMap::new();
        let mut marking_open = vec![0usize; self.counters.len()];
        for set in self.open.values() {
            for &b in set {
                let bin = &self.bins[b];
                if bin.from_marking {
                    if let Some((t, _)) = bin.blue.or(bin.red) {
                        marking_open[t] += 1;
                    }
                } else {
                    per_group.entry(bin.group()).or_default().push(b);
                }
            }
        }
        for (g, mut bins) in per_group {
            bins.sort_unstable();
            bins.dedup();
            if bins.len() > 2 {
                let ty = g.0.or(g.1).unwrap_or(0);
                push("open-bins", ty, format!("group {g:?} has open bins {bins:?}"));
            }
        }
        for (ty, c) in self.counters.iter().enumerate() {
            let quota = self.shares[ty].floor(c.n);
            if c.n_red < quota - 1 {
                push("red-floor", ty, format!("n_red {} below floor {} - 1", c.n_red, quota));
            }
            match self.classes[ty] {
                SizeClass::Large if c.n_red != 0 => {
                    push("large-red", ty, format!("large type has n_red {}", c.n_red))
                }
                SizeClass::Small => {
                    let cap = quota + self.tables.redfit[ty] as i64;
                    if c.n_red > cap {
                        push("red-ceiling", ty, format!("n_red {} above {}", c.n_red, cap));
                    }
                    if c.n_bonus != 0 {
                        push("bonus-type", ty, format!("non-medium type has {} bonus items", c.n_bonus));
                    }
                }
                SizeClass::Large if c.n_bonus != 0 => {
                    push("bonus-type", ty, format!("non-medium type has {} bonus items", c.n_bonus))
                }
                _ => {}
            }
            let cap = self.provisional_cap[ty];
            if cap > 0 {
                if self.provisional[ty] > cap {
                    push("provisional-count", ty, format!("{} provisional items, cap {cap}", self.provisional[ty]));
                }
                if marking_open[ty] > cap {
                    push("open-bins", ty, format!("{} open bins fixed by marking, cap {cap}", marking_open[ty]));
                }
            }
        }
        for &id in &self.provisional_items {
            let it = &self.items[id];
            if self.bins[it.bin].items.len() != 1 {
                push("provisional-alone", it.ty, format!("item {} shares bin {}", id + 1, it.bin + 1));
            }
        }
        // An unmixed red bin excludes compatible unmixed blue bins and compatible bonus items.
        if let Some((&needs, set)) = self.unmixed_red.iter().next() {
            let red_bin = *set.iter().next().unwrap();
            if let Some((&leaves, blues)) = self.unmixed_blue.iter().next_back() {
                if leaves >= needs {
                    let ty = self.bins[red_bin].red.unwrap().0;
                    push(
                        "unmixed-exclusion",
                        ty,
                        format!("unmixed red bin {} and unmixed blue bin {}", red_bin + 1, blues.iter().next().unwrap() + 1),
                    );
                }
            }
            if let Some(&large) = self.unmixed_large.iter().find(|&&b| self.bins[b].leaves >= needs) {
                let ty = self.bins[red_bin].red.unwrap().0;
                push("unmixed-exclusion", ty, format!("unmixed red bin {} and large bin {}", red_bin + 1, large + 1));
            }
            for &q in &self.bonus_items {
                let t = self.items[q].ty;
                if self.tables.leaves[t] >= needs {
                    push("unmixed-exclusion", t, format!("bonus item {} beside unmixed red bin {}", q + 1, red_bin + 1));
                }
            }
        }
        let min_size = |set: &BTreeSet<usize>| set.iter().map(|&b| self.items[self.bins[b].items[0]].size.clone()).min();
        if let Some(m) = min_size(&self.unmixed_medium_red) {
            if self.large_fit(&m).is_some() {
                push("unmixed-exclusion", 0, "an unmixed medium red item fits beside an unmixed large item".into());
            }
        }
        out
    }

    /// Items that are still bonus, oldest first.
    pub fn bonus_items(&self) -> impl Iterator<Item = usize> + '_ {
        self.bonus_items.iter().copied()
    }

    pub fn provisional_count(&self, ty: usize) -> usize {
        self.provisional[ty]
    }

    /// Test hook: open a fresh bin holding a definite item, bypassing the algorithm.
    #[doc(hidden)]
    pub fn inject_bin(&mut self, size: Rational, color: Color) -> Result<usize, Error> {
        let ty = self.params.classify(&size)?;
        let id = self.items.len();
        self.items.push(Item {
            arrival: id,
            size: size.clone(),
            ty,
            label: ty,
            color,
            mark: Mark::Unmarked,
            bonus: false,
            bin: usize::MAX,
            batch: None,
        });
        if self.is_medium(ty) {
            self.by_type[ty].push(id);
        }
        if color.is_provisional() {
            self.provisional[ty] += 1;
            self.provisional_items.insert(id);
        }
        let red = color.is_redish();
        let leaves = if red { 0 } else { self.item_leaves(ty, &size) };
        let b = self.bins.len();
        self.bins.push(Bin {
            id: b,
            items: Vec::new(),
            leaves,
            pure: !red && leaves == 0,
            sealed: false,
            blue: None,
            red: None,
            provisional: false,
            from_marking: false,
            slot: Slot::None,
            open_blue: false,
            open_red: false,
            fill: Rational::zero(),
            closed: false,
        });
        self.attach(id, b);
        self.settle(b);
        Ok(b)
    }
}

#[derive(Default)]
struct TypeView {
    prov_blue: Vec<usize>,
    prov_red: Vec<usize>,
    mixed_red: Vec<usize>,
    bonus: Vec<usize>,
    /// Mixed bins holding two unmarked blue items of the type.
    blue_pairs: Vec<usize>,
}

fn remove_keyed(map: &mut BTreeMap<usize, BTreeSet<usize>>, key: usize, b: usize) {
    if let Some(s) = map.get_mut(&key) {
        s.remove(&b);
        if s.is_empty() {
            map.remove(&key);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramfile::load_params;
    use crate::rational::r;

    pub(crate) const TOY_EXTREME: &str = "mode: extreme\nc: 1583/1000\ntN: 1/20\ngamma: 2/7\ngamma_start: 1/12\ntsmall: 1/20\nsizes:\n1/2 0\n41/100 0\n39/100 1/5\n1/3 1/9\n1/4 0\n1/5 0\n1/6 0\n1/10 1/10\n1/20 0\n0 0\n";

    fn toy(mode: Mode) -> ParameterSet {
        let text = TOY_EXTREME.replace("mode: extreme", &format!("mode: {mode}"));
        load_params(&text).unwrap()
    }

    fn sizes(list: &[&str]) -> Vec<Rational> {
        list.iter().map(|s| r(s)).collect()
    }

    #[test]
    fn large_then_medium_pairs_up_as_bonus() {
        let mut stream = vec!["11/20"; 5];
        stream.extend(["2/5"; 5]);
        let p = Packer::run(toy(Mode::Extreme), &sizes(&stream)).unwrap();
        assert_eq!(p.bins_used(), 5);
        for b in &p.bins {
            assert_eq!(b.items.len(), 2);
            assert_eq!(b.kind(), BinKind::Mixed);
        }
        let v = p.check_invariants();
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn super_mode_keeps_large_and_medium_apart() {
        let mut stream = vec!["11/20"; 5];
        stream.extend(["2/5"; 5]);
        let p = Packer::run(toy(Mode::Super), &sizes(&stream)).unwrap();
        assert_eq!(p.bins_used(), 8);
        let singles = p.bins.iter().filter(|b| b.items.len() == 1).count();
        let pairs = p.bins.iter().filter(|b| b.items.len() == 2).count();
        assert_eq!((singles, pairs), (6, 2));
        let reds: Vec<_> = p.items.iter().filter(|i| i.color == Color::Red).collect();
        assert_eq!(reds.len(), 1);
        assert_eq!(p.bins[reds[0].bin].items.len(), 1);
    }

    #[test]
    fn first_large_item_is_definite_blue() {
        let mut p = Packer::new(toy(Mode::Extreme));
        let out = p.pack(r("3/5")).unwrap();
        assert_eq!(out.placement.color, Color::Blue);
        assert_eq!(p.bins[0].kind(), BinKind::UnmixedBlue);
        assert!(!out.placement.bonus);
    }

    #[test]
    fn classify_examples() {
        let p = crate::paramfile::bundled::extreme_1583();
        let t = p.classify(&r("1/4")).unwrap();
        assert_eq!(*p.upper(t), r("1/4"));
        assert_eq!(p.lower(t), r("8/39"));
        assert_eq!(p.classify(&Rational::one()).unwrap(), 0);
        assert_eq!(p.classify(&r("1/100000")).unwrap(), p.sand());
        assert!(p.classify(&Rational::zero()).is_err());
        assert!(p.classify(&r("11/10")).is_err());
    }

    /// Eight medium items of the 1/9 type, then a ninth that must be red.
    fn ninth_red(extra_large: bool) -> Packer {
        let mut p = Packer::new(toy(Mode::Extreme));
        for k in 0..8 {
            p.pack(r(&format!("{}/1000", 340 + 5 * k))).unwrap();
        }
        if extra_large {
            p.pack(r("11/20")).unwrap();
        }
        p
    }

    #[test]
    fn unmixed_marking_colors_the_smallest_red() {
        let mut p = ninth_red(false);
        assert_eq!(p.provisional_count(3), 8);
        let out = p.pack(r("351/1000")).unwrap();
        assert_eq!(out.placement.color, Color::ProvisionalRed);
        let marked: Vec<&Item> = p.items.iter().filter(|i| i.mark == Mark::N).collect();
        assert_eq!(marked.len(), 5);
        let red: Vec<&Item> = marked.iter().copied().filter(|i| i.color == Color::Red).collect();
        assert_eq!(red.len(), 1);
        let smallest = marked.iter().map(|i| &i.size).min().unwrap();
        assert_eq!(&red[0].size, smallest);
        // The four largest provisional items became blue N-items.
        let mut blue: Vec<Rational> =
            marked.iter().filter(|i| i.color == Color::Blue).map(|i| i.size.clone()).collect();
        blue.sort();
        assert_eq!(blue, sizes(&["360/1000", "365/1000", "370/1000", "375/1000"]));
        assert_eq!(p.counters[3].marked, [5, 0, 0]);
        assert_eq!(p.counters[3].marked_red, [1, 0, 0]);
        assert_eq!(p.counters[3].n_red, 1);
        assert_eq!(p.provisional_count(3), 4);
        let v = p.check_invariants();
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn mixed_red_takes_provisional_blues_to_r() {
        let mut p = ninth_red(true);
        let out = p.pack(r("351/1000")).unwrap();
        assert_eq!(out.placement.color, Color::Red);
        let rs: Vec<&Item> = p.items.iter().filter(|i| i.mark == Mark::R).collect();
        assert_eq!(rs.len(), 5);
        assert_eq!(rs.iter().filter(|i| i.color == Color::Blue).count(), 4);
        assert_eq!(p.counters[3].marked, [0, 0, 5]);
        // The R-items are the four oldest.
        let blue_arrivals: Vec<usize> =
            rs.iter().filter(|i| i.color == Color::Blue).map(|i| i.arrival).collect();
        assert_eq!(blue_arrivals, vec![0, 1, 2, 3]);
        // The next medium blue joins an R-item and inherits the mark.
        p.pack(r("345/1000")).unwrap();
        assert_eq!(p.items[10].mark, Mark::R);
        assert_eq!(p.items[10].bin, p.items[0].bin);
        assert_eq!(p.counters[3].marked, [0, 0, 6]);
        let v = p.check_invariants();
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn no_provisionals_means_no_marking() {
        let mut p = Packer::new(toy(Mode::Extreme));
        let out = p.pack(r("1/7")).unwrap();
        assert!(out.updates.is_empty());
        assert_eq!(p.batches(), 0);
    }

    #[test]
    fn compatibility_examples() {
        let mut p = Packer::new(toy(Mode::Extreme));
        p.pack(r("13/20")).unwrap();
        // 2/5 does not fit beside 13/20, so it cannot become bonus there.
        let out = p.pack(r("2/5")).unwrap();
        assert!(!out.placement.bonus);
        assert_ne!(out.placement.bin, 0);
        p.pack(r("11/20")).unwrap();
        let out = p.pack(r("2/5")).unwrap();
        assert!(out.placement.bonus);
        assert_eq!(out.placement.bin, 2);
    }

    #[test]
    fn needs_above_leaves_blocks_a_mix() {
        // Blue medium items leave too little room for a red item of their own size class.
        let mut p = Packer::new(toy(Mode::Super));
        let t = p.tables().clone();
        let medium = 3;
        assert!(t.leaves[medium] < t.needs[medium]);
        for _ in 0..8 {
            p.pack(r("35/100")).unwrap();
        }
        let out = p.pack(r("35/100")).unwrap();
        assert_eq!(out.placement.color, Color::Red);
        assert_eq!(p.bins[out.placement.bin].items.len(), 1);
    }

    #[test]
    fn three_open_bins_in_a_group_are_reported() {
        let mut p = Packer::new(toy(Mode::Extreme));
        for _ in 0..3 {
            p.inject_bin(r("1/8"), Color::Blue).unwrap();
        }
        let v = p.check_invariants();
        assert!(v.iter().any(|v| v.property == "open-bins"), "{v:?}");
    }

    #[test]
    fn unmixed_red_beside_bonus_is_reported() {
        let mut p = Packer::new(toy(Mode::Extreme));
        p.pack(r("11/20")).unwrap();
        assert!(p.pack(r("2/5")).unwrap().placement.bonus);
        p.inject_bin(r("1/8"), Color::Red).unwrap();
        let v = p.check_invariants();
        assert!(v.iter().any(|v| v.property == "unmixed-exclusion"), "{v:?}");
    }

    #[test]
    fn sand_is_packed_by_size() {
        let mut p = Packer::new(toy(Mode::Extreme));
        for _ in 0..250 {
            p.pack(r("1/100")).unwrap();
        }
        assert_eq!(p.bins_used(), 3);
        assert_eq!(p.bins[0].items.len(), 100);
        assert!(!p.bins[0].is_open() && p.bins[2].is_open());
        assert!(p.check_invariants().is_empty());
    }

    #[test]
    fn small_red_replaces_a_bonus_item() {
        let mut p = Packer::new(toy(Mode::Extreme));
        p.pack(r("11/20")).unwrap();
        assert!(p.pack(r("2/5")).unwrap().placement.bonus);
        // Type (1/10,1/6] has redfrac 1/10: the tenth item is the first red decision.
        let mut relabeled = false;
        for _ in 0..10 {
            let out = p.pack(r("3/20")).unwrap();
            relabeled |= out.updates.iter().any(|u| matches!(u, Update::Relabel { item: 1, .. }));
        }
        assert!(relabeled);
        let ty = p.items[2].ty;
        assert_eq!(p.items[1].label, ty);
        assert_eq!(p.counters[ty].n, 10 + p.tables().redfit[ty] as i64);
        assert_eq!(p.counters[ty].n_red, p.tables().redfit[ty] as i64);
        assert_eq!(p.counters[p.items[1].ty].n_bonus, 0);
        assert!(p.items.iter().skip(2).all(|i| i.color == Color::Blue));
        let v = p.check_invariants();
        assert!(v.is_empty(), "{v:?}");
    }
}
