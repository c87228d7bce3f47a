//! Lower-bound inputs for interval-classification algorithms with fixed red fractions.
//!
//! Three cases, keyed by how many red items of the smallest adversary type share a bin.
//! Each case lists inputs; an input is one or more optimal-bin patterns with a weight
//! (bins the online algorithm must spend per pattern copy) that is affine in the red
//! fractions, and a distribution over the patterns.

use std::fmt;

use rayon::prelude::*;

use crate::error::Error;
use crate::packer::Packer;
use crate::params::{generate_redspaces, Mode, ParameterSet};
use crate::rational::{q, r, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CaseId {
    RedfitOne,
    RedfitTwo,
    RedfitThree,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::RedfitOne, CaseId::RedfitTwo, CaseId::RedfitThree];

    /// Red items of the smallest adversary type per bin.
    pub fn redfit(self) -> u64 {
        match self {
            CaseId::RedfitOne => 1,
            CaseId::RedfitTwo => 2,
            CaseId::RedfitThree => 3,
        }
    }

    pub fn parse(text: &str) -> Option<CaseId> {
        let t = text.trim();
        let digit = t.strip_prefix("redfit4=").or_else(|| t.strip_prefix("redfit")).unwrap_or(t);
        match digit {
            "1" => Some(CaseId::RedfitOne),
            "2" => Some(CaseId::RedfitTwo),
            "3" => Some(CaseId::RedfitThree),
            _ => None,
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "redfit4={}", self.redfit())
    }
}

/// `constant + sum coeffs[i] * alpha[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Affine {
    pub constant: Rational,
    pub coeffs: Vec<Rational>,
}

impl Affine {
    fn new(constant: &str, coeffs: &[&str]) -> Self {
        Affine { constant: r(constant), coeffs: coeffs.iter().map(|c| r(c)).collect() }
    }

    pub fn eval(&self, alpha: &[Rational]) -> Rational {
        let mut v = self.constant.clone();
        for (c, a) in self.coeffs.iter().zip(alpha) {
            if !c.is_zero() {
                v += c * a;
            }
        }
        v
    }

    fn depends_on(&self, i: usize) -> bool {
        self.coeffs.get(i).is_some_and(|c| !c.is_zero())
    }
}

/// Share of a pattern in a mixed input. `a` is the first red fraction (the medium
/// type), `b` the second (the small type of the base pattern).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chi {
    One,
    /// `scale * (1 - a - a*b) / (1 + a)`: blue medium pairs left without a red item.
    Leftover(i64),
    /// `scale * b`: blue medium pairs that took a red small item.
    Red(i64),
}

impl Chi {
    pub fn eval(self, alpha: &[Rational]) -> Rational {
        match self {
            Chi::One => Rational::one(),
            Chi::Leftover(m) => {
                let (a, b) = (&alpha[0], &alpha[1]);
                (Rational::one() - a - a * b).scale(m) / (Rational::one() + a)
            }
            Chi::Red(m) => alpha[1].scale(m),
        }
    }

    fn depends_on(self, i: usize) -> bool {
        match self {
            Chi::One => false,
            Chi::Leftover(_) => i <= 1,
            Chi::Red(_) => i == 1,
        }
    }

    /// Upper bound of `|d chi / d alpha_i|` over `[0, 1/3]^d`.
    fn slope_bound(self, i: usize) -> Rational {
        match (self, i) {
            // |m (2 + b) / (1 + a)^2| <= m (2 + 1/3)
            (Chi::Leftover(m), 0) => q(7 * m, 3),
            // |m a / (1 + a)| <= m/4
            (Chi::Leftover(m), 1) => q(m, 4),
            (Chi::Red(m), 1) => Rational::integer(m),
            _ => Rational::zero(),
        }
    }

    pub fn formula(self) -> String {
        match self {
            Chi::One => "1".into(),
            Chi::Leftover(m) => format!("{m}(1-a1-a1*a2)/(1+a1)"),
            Chi::Red(m) => format!("{m}*a2"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Part {
    /// Items per adversary type in one optimal bin.
    pub pattern: Vec<u32>,
    pub weight: Affine,
    pub formula: &'static str,
    pub chi: Chi,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Input {
    pub parts: Vec<Part>,
}

impl Input {
    fn single(pattern: &[u32], weight: Affine, formula: &'static str) -> Self {
        Input { parts: vec![Part { pattern: pattern.to_vec(), weight, formula, chi: Chi::One }] }
    }

    pub fn is_mixed(&self) -> bool {
        self.parts.len() > 1
    }

    /// `sum chi * w / sum chi`.
    pub fn weight(&self, alpha: &[Rational]) -> Rational {
        let mut num = Rational::zero();
        let mut den = Rational::zero();
        for p in &self.parts {
            let c = p.chi.eval(alpha);
            num += &c * p.weight.eval(alpha);
            den += c;
        }
        num / den
    }

    fn depends_on(&self, i: usize) -> bool {
        self.parts.iter().any(|p| p.weight.depends_on(i) || p.chi.depends_on(i))
    }

    /// Upper bound on the l1 norm of the gradient over `[0, 1/3]^d`.
    ///
    /// For a mixture F = sum chi_j w_j / sum chi_j with chi_0 = 1,
    /// |dF| <= max_j |dw_j| + spread * sum_j |dchi_j|, spread = max |w_j - w_k|.
    pub fn lipschitz(&self, dims: usize) -> Rational {
        let mut total = Rational::zero();
        let spread = self.spread(dims);
        for i in 0..dims {
            let mut dw = Rational::zero();
            let mut dchi = Rational::zero();
            for p in &self.parts {
                let c = p.weight.coeffs.get(i).map(|c| c.abs()).unwrap_or_else(Rational::zero);
                dw = dw.max(c);
                dchi += p.chi.slope_bound(i);
            }
            total += dw + &spread * dchi;
        }
        total
    }

    /// Largest weight difference between two parts, over the corners of `[0, 1/3]^d`.
    fn spread(&self, dims: usize) -> Rational {
        let mut best = Rational::zero();
        for mask in 0..(1u32 << dims) {
            let corner: Vec<Rational> =
                (0..dims).map(|i| if mask >> i & 1 == 1 { q(1, 3) } else { Rational::zero() }).collect();
            let ws: Vec<Rational> = self.parts.iter().map(|p| p.weight.eval(&corner)).collect();
            for a in &ws {
                for b in &ws {
                    best = best.max((a - b).abs());
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowerBoundCase {
    pub id: CaseId,
    /// Lower ends of the adversary types, largest first.
    pub sizes: Vec<Rational>,
    /// Adversary type (index into `sizes`) of each red fraction.
    pub red_types: Vec<usize>,
    /// Red fractions at which the bound is reported.
    pub table_alpha: Vec<Rational>,
    pub claimed: Rational,
    pub inputs: Vec<Input>,
}

impl LowerBoundCase {
    pub fn get(id: CaseId) -> LowerBoundCase {
        let leftover_one = |m: i64, q0: &[u32], w0: Affine, f0: &'static str| Input {
            parts: vec![
                Part { pattern: q0.to_vec(), weight: w0, formula: f0, chi: Chi::One },
                Part {
                    pattern: vec![1, 1, 0, 0][..q0.len()].to_vec(),
                    weight: Affine::new("3/2", &["1/2", "0", "0"][..q0.len() - 1]),
                    formula: "1 + (1-a1)/2 + a1",
                    chi: Chi::Leftover(m),
                },
                Part {
                    pattern: vec![1, 1, 0, 0][..q0.len()].to_vec(),
                    weight: Affine::new("3/2", &["1/2", "0", "0"][..q0.len() - 1]),
                    formula: "1 + (1-a1)/2 + a1",
                    chi: Chi::Red(m),
                },
            ],
        };
        match id {
            CaseId::RedfitTwo => LowerBoundCase {
                id,
                sizes: vec![q(1, 2), q(1, 3), q(1, 4), q(1, 7)],
                red_types: vec![1, 2, 3],
                table_alpha: vec![r("18/100"), r("1276/10000"), r("1428/10000")],
                claimed: r("15762/10000"),
                inputs: vec![
                    Input::single(
                        &[0, 0, 3, 1],
                        Affine::new("107/84", &["0", "2", "1/3"]),
                        "31/28 + 2a2 + (1-a3)/6 + a3/2",
                    ),
                    Input::single(&[1, 1, 0, 0], Affine::new("5/3", &["-1/2", "0", "0"]), "1 + (1-a1)/2 + 1/6"),
                    Input::single(
                        &[1, 1, 0, 1],
                        Affine::new("71/42", &["-1/2", "0", "-1/6"]),
                        "1 + (1-a1)/2 + (1-a3)/6 + 1/42",
                    ),
                    leftover_one(
                        2,
                        &[0, 2, 1, 0],
                        Affine::new("17/12", &["1", "-1/3", "0"]),
                        "2(1+a1)/2 + (1-a2)/3 + 1/12",
                    ),
                ],
            },
            CaseId::RedfitOne => LowerBoundCase {
                id,
                sizes: vec![q(1, 2), q(1, 3), q(1, 7)],
                red_types: vec![1, 2],
                table_alpha: vec![r("19/100"), r("872/10000")],
                claimed: r("15788/10000"),
                inputs: vec![
                    Input::single(
                        &[1, 1, 1],
                        Affine::new("71/42", &["-1/2", "-1/6"]),
                        "1 + (1-a1)/2 + (1-a2)/6 + 1/42",
                    ),
                    Input::single(&[0, 0, 6], Affine::new("8/7", &["0", "5"]), "6(1-a2)/6 + 6a2 + 1/7"),
                    leftover_one(
                        4,
                        &[0, 2, 2],
                        Affine::new("29/21", &["1", "-1/3"]),
                        "2(1+a1)/2 + 2(1-a2)/6 + 1/21",
                    ),
                ],
            },
            CaseId::RedfitThree => LowerBoundCase {
                id,
                sizes: vec![q(1, 2), q(1, 3), q(1, 7)],
                red_types: vec![1, 2],
                table_alpha: vec![r("1690/10000"), r("1122/10000")],
                claimed: r("15872/10000"),
                inputs: vec![
                    Input::single(
                        &[1, 1, 1],
                        Affine::new("71/42", &["-1/2", "-1/6"]),
                        "1 + (1-a1)/2 + (1-a2)/6 + 1/42",
                    ),
                    Input::single(&[0, 2, 2], Affine::new("29/21", &["1", "1/3"]), "2(1+a1)/2 + 2(1+a2)/6 + 1/21"),
                ],
            },
        }
    }

    pub fn dims(&self) -> usize {
        self.table_alpha.len()
    }

    pub fn input_weights(&self, alpha: &[Rational]) -> Vec<Rational> {
        self.inputs.iter().map(|i| i.weight(alpha)).collect()
    }

    /// Largest adversary type index that carries a red fraction and is small.
    fn smallest_red(&self) -> usize {
        *self.red_types.last().expect("cases have red types")
    }
}

fn check_alpha(case: &LowerBoundCase, alpha: &[Rational]) -> Result<(), Error> {
    if alpha.len() != case.dims() {
        return Err(Error::Input(format!("case {} takes {} red fractions, got {}", case.id, case.dims(), alpha.len())));
    }
    for a in alpha {
        if a.is_negative() || *a >= q(1, 3) {
            return Err(Error::Input(format!("red fraction {a} outside [0,1/3)")));
        }
    }
    Ok(())
}

/// Smallest input weight at the given red fractions: every input forces at least this.
pub fn static_lower_bound(case: &LowerBoundCase, alpha: &[Rational]) -> Result<Rational, Error> {
    check_alpha(case, alpha)?;
    Ok(case.input_weights(alpha).into_iter().min().expect("cases have inputs"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridBound {
    /// Minimum over grid points of the largest input weight.
    pub grid_min: Rational,
    pub argmin: Vec<Rational>,
    pub points: usize,
    pub lipschitz: Rational,
    /// `lipschitz * step / 2`; zero for an explicit point grid.
    pub slack: Rational,
}

impl GridBound {
    /// A bound valid for every red-fraction vector in `[0, 1/3)^d`.
    pub fn certified(&self) -> Rational {
        &self.grid_min - &self.slack
    }
}

/// Axis values `0, step, 2 step, ...` below 1/3, closed off with 1/3 itself.
pub fn axis(step: &Rational) -> Vec<Rational> {
    let third = q(1, 3);
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let v = step.scale(k);
        if v >= third {
            break;
        }
        out.push(v);
        k += 1;
    }
    out.push(third);
    out
}

/// Min over the grid of the max over inputs, with the slack that extends it to the
/// whole box.
pub fn grid_min_max(case: &LowerBoundCase, step: &Rational) -> Result<GridBound, Error> {
    if !step.is_positive() || *step > q(1, 200) {
        return Err(Error::Input(format!("grid step {step} must lie in (0, 1/200]")));
    }
    let axes = vec![axis(step); case.dims()];
    let mut out = min_max_over(case, &axes);
    let dims = case.dims();
    out.lipschitz = case.inputs.iter().map(|i| i.lipschitz(dims)).max().expect("cases have inputs");
    out.slack = &out.lipschitz * step.div_int(2);
    Ok(out)
}

/// Min over an explicit product grid of the max over inputs. No slack is attached.
pub fn min_max_over(case: &LowerBoundCase, axes: &[Vec<Rational>]) -> GridBound {
    let dims = case.dims();
    assert_eq!(axes.len(), dims);
    // Each input is evaluated only over the axes it depends on; values are then ranked
    // so the sweep over the full product compares integers.
    let used: Vec<Vec<usize>> =
        case.inputs.iter().map(|inp| (0..dims).filter(|&i| inp.depends_on(i)).collect()).collect();
    let tables: Vec<Vec<Rational>> = case
        .inputs
        .par_iter()
        .zip(&used)
        .map(|(inp, u)| {
            let count: usize = u.iter().map(|&i| axes[i].len()).product();
            (0..count)
                .map(|flat| {
                    let mut alpha = vec![Rational::zero(); dims];
                    let mut rest = flat;
                    for &i in u.iter().rev() {
                        alpha[i] = axes[i][rest % axes[i].len()].clone();
                        rest /= axes[i].len();
                    }
                    inp.weight(&alpha)
                })
                .collect()
        })
        .collect();
    let mut all: Vec<&Rational> = tables.iter().flatten().collect();
    all.sort();
    all.dedup();
    let ranks: Vec<Vec<u32>> = tables
        .iter()
        .map(|t| t.iter().map(|v| all.binary_search(&v).expect("value is ranked") as u32).collect())
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let (best_rank, best_flat) = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut idx = vec![0usize; dims];
            let mut rest = flat;
            for i in (0..dims).rev() {
                idx[i] = rest % axes[i].len();
                rest /= axes[i].len();
            }
            let worst = used
                .iter()
                .zip(&ranks)
                .map(|(u, rk)| {
                    let mut f = 0;
                    for &i in u {
                        f = f * axes[i].len() + idx[i];
                    }
                    rk[f]
                })
                .max()
                .expect("cases have inputs");
            (worst, flat)
        })
        .min()
        .expect("grid is non-empty");
    let mut argmin = vec![Rational::zero(); dims];
    let mut rest = best_flat;
    for i in (0..dims).rev() {
        argmin[i] = axes[i][rest % axes[i].len()].clone();
        rest /= axes[i].len();
    }
    GridBound {
        grid_min: all[best_rank as usize].clone(),
        argmin,
        points: total,
        lipschitz: Rational::zero(),
        slack: Rational::zero(),
    }
}

/// Largest offset that keeps every pattern item inside its type and the bin feasible.
pub fn max_offset(case: &LowerBoundCase, pattern: &[u32]) -> Result<Rational, Error> {
    if pattern.len() != case.sizes.len() {
        return Err(Error::Input(format!("pattern has {} entries, case has {} types", pattern.len(), case.sizes.len())));
    }
    let count: i64 = pattern.iter().map(|&c| i64::from(c)).sum();
    let used = pattern.iter().zip(&case.sizes).fold(Rational::zero(), |acc, (&c, t)| acc + t.scale(i64::from(c)));
    if used >= Rational::one() {
        return Err(Error::Input(format!("pattern {pattern:?} does not fit in a bin")));
    }
    if count == 0 {
        return Ok(Rational::zero());
    }
    Ok((Rational::one() - used) / Rational::integer(2 * count))
}

/// A static pattern input: `copies` copies of each item, smallest first, then sand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternStream {
    pub items: Vec<Rational>,
    /// Sand items per optimal bin and their size.
    pub sand_per_bin: usize,
    pub sand_size: Rational,
    /// Bins of the optimal packing.
    pub opt: usize,
}

/// Build a pattern stream. Items are `size + offset`; sand items have size `sand / 2`.
pub fn pattern_stream(
    case: &LowerBoundCase,
    pattern: &[u32],
    copies: usize,
    offset: &Rational,
    sand: &Rational,
) -> Result<PatternStream, Error> {
    let cap = max_offset(case, pattern)?;
    if offset.is_negative() || (offset.is_zero() && pattern.iter().any(|&c| c > 0)) || *offset > cap {
        return Err(Error::Input(format!("offset {offset} outside (0, {cap}]")));
    }
    if !sand.is_positive() || *sand > q(1, 7) {
        return Err(Error::Input(format!("sand bound {sand} outside (0, 1/7]")));
    }
    let mut items = Vec::new();
    let mut used = Rational::zero();
    for (k, &c) in pattern.iter().enumerate().rev() {
        let size = &case.sizes[k] + offset;
        used += size.scale(i64::from(c));
        for _ in 0..copies * c as usize {
            items.push(size.clone());
        }
    }
    let sand_size = sand.div_int(2);
    let per_bin = ((Rational::one() - used) / &sand_size).floor().max(0) as usize;
    for _ in 0..copies * per_bin {
        items.push(sand_size.clone());
    }
    Ok(PatternStream { items, sand_per_bin: per_bin, sand_size, opt: copies })
}

/// Parameters of an algorithm from the family the bound speaks about: one narrow type
/// `(t, t + width]` per adversary size, filler types with no red items in between.
pub fn simulation_params(
    case: &LowerBoundCase,
    alpha: &[Rational],
    width: &Rational,
    sand: &Rational,
    mode: Mode,
) -> Result<ParameterSet, Error> {
    check_alpha(case, alpha)?;
    let small = case.smallest_red();
    let t_small = &case.sizes[small] + width;
    if !width.is_positive() || width.scale(84) > Rational::one() || *sand >= case.sizes[small] {
        return Err(Error::Config(format!("width {width} or sand {sand} too coarse for the adversary sizes")));
    }
    let mut boundaries = vec![Rational::one()];
    let mut redfrac = Vec::new();
    for (k, t) in case.sizes.iter().enumerate() {
        let a = case.red_types.iter().position(|&j| j == k).map(|p| alpha[p].clone()).unwrap_or_else(Rational::zero);
        let top = t + width;
        // Extreme mode keeps a single large type.
        let large = *t >= q(1, 2);
        if !(mode == Mode::Extreme && large) {
            redfrac.push(Rational::zero());
            boundaries.push(top);
        }
        redfrac.push(a);
        boundaries.push(t.clone());
    }
    redfrac.push(Rational::zero());
    boundaries.push(sand.clone());
    redfrac.push(Rational::zero());
    let fit = case.id.redfit() as i64;
    let mut p = ParameterSet {
        mode,
        boundaries,
        redfrac,
        redspaces: Vec::new(),
        epsilon: sand.clone(),
        target: q(3, 2),
        gamma: t_small.scale(fit),
        gamma_start: t_small.clone(),
        t_small: t_small.clone(),
        margin: Rational::zero(),
        explicit: None,
    };
    p.redspaces = match mode {
        Mode::Super => {
            let mut spaces: Vec<Rational> = Vec::new();
            for (k, t) in case.sizes.iter().enumerate() {
                if case.red_types.contains(&k) {
                    let redfit = if k == small { fit } else { 1 };
                    spaces.push((t + width).scale(redfit));
                }
            }
            spaces.sort();
            spaces.dedup();
            spaces
        }
        Mode::Extreme => generate_redspaces(&p),
    };
    Ok(p)
}

/// Outcome of the adaptive medium-size adversary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaptiveRun {
    pub items: Vec<Rational>,
    /// Size of the last medium item that opened a bin.
    pub last_new: Option<Rational>,
    pub mediums: usize,
    /// Per medium item in arrival order: whether it opened a bin.
    pub medium_opens: Vec<bool>,
    pub large_items: usize,
    /// Blue medium bins that took a red small item, and those that did not.
    pub mixed_bins: usize,
    pub pair_bins: usize,
    pub alg: usize,
    pub opt: usize,
}

impl AdaptiveRun {
    pub fn ratio(&self) -> Rational {
        if self.opt == 0 {
            return Rational::zero();
        }
        q(self.alg as i64, self.opt as i64)
    }
}

/// Run the mixed input of `case` against a live packer.
///
/// Small items of the base pattern arrive first, then medium items in `(1/3, 1/3 + eps]`
/// ordered by the packer's decisions as a bisection adversary would order them, then
/// items of size `1 - x` where `x` is the last medium that opened a bin, and finally
/// sand for the base bins.
pub fn adaptive_medium_stream(
    case: &LowerBoundCase,
    params: ParameterSet,
    copies: usize,
    eps: &Rational,
    sand: &Rational,
) -> Result<AdaptiveRun, Error> {
    let Some(mixed) = case.inputs.iter().find(|i| i.is_mixed()) else {
        return Err(Error::Config(format!("case {} has no mixed input", case.id)));
    };
    let base = &mixed.parts[0].pattern;
    let third = q(1, 3);
    let top = &third + eps;
    if params.classify(&top)? != params.classify(&(&third + eps.div_int(1 << 20)))? || eps.scale(12) > Rational::one() {
        return Err(Error::Config(format!("(1/3, 1/3 + {eps}] is not inside one type of the packer")));
    }
    let medium_ty = params.classify(&top)?;
    let alpha_med = params.redfrac[medium_ty].clone();
    let small_k = base.iter().rposition(|&c| c > 0 && c < 3).filter(|&k| case.sizes[k] < third);
    let small_k = small_k.ok_or_else(|| Error::Config("base pattern has no small item".into()))?;
    let small_size = &case.sizes[small_k] + eps;
    let small_ty = params.classify(&small_size)?;
    let alpha_small = params.redfrac[small_ty].clone();
    let tables = params.tables();
    let per_bin = base[small_k] as i64;
    let smalls = vec![small_size.clone(); copies * base[small_k] as usize];
    // Medium count from the bin algebra: the mediums that open bins fill the base bins.
    let redfit = tables.redfit[small_ty].max(1) as i64;
    let mixed_pred = alpha_small.scale(per_bin * copies as i64).div_int(redfit);
    let mediums = ((Rational::integer(4 * copies as i64) + mixed_pred.scale(2)) / (Rational::one() + &alpha_med)).ceil();
    let mediums = mediums.max(0) as usize;

    // Medium placements depend on the type only, so a probe run with one size learns
    // which mediums open bins. Sizes are then assigned the way bisection would order
    // them: openers shrink from the top, joiners grow from the bottom, and every
    // joiner ends up below every opener. The replay checks the decisions match.
    let mut probe = Packer::new(params.clone());
    for s in &smalls {
        probe.pack(s.clone())?;
    }
    let mut opens = Vec::with_capacity(mediums);
    for _ in 0..mediums {
        let out = probe.pack(top.clone())?;
        opens.push(probe.bins[out.placement.bin].items.len() == 1);
    }
    drop(probe);
    let slots = Rational::integer(mediums as i64 + 1);
    let (mut lo, mut hi) = (0i64, mediums as i64 + 1);
    let medium_sizes: Vec<Rational> = opens
        .iter()
        .map(|&open| {
            let pos = if open {
                hi -= 1;
                hi
            } else {
                lo += 1;
                lo
            };
            &third + eps.scale(pos) / &slots
        })
        .collect();

    let mut packer = Packer::new(params);
    let mut items = smalls;
    for s in &items {
        packer.pack(s.clone())?;
    }
    let mut last_new = None;
    let mut medium_ids = Vec::new();
    for (size, &open) in medium_sizes.into_iter().zip(&opens) {
        let out = packer.pack(size.clone())?;
        medium_ids.push(out.placement.item);
        if (packer.bins[out.placement.bin].items.len() == 1) != open {
            return Err(Error::Config("medium placements depend on the exact size".into()));
        }
        if open {
            last_new = Some(size.clone());
        }
        items.push(size);
    }
    // Classify the bins that hold blue medium items.
    let mut mixed_bins = 0;
    let mut pair_bins = 0;
    let mut seen = std::collections::BTreeSet::new();
    for &m in &medium_ids {
        let b = packer.items[m].bin;
        if !seen.insert(b) {
            continue;
        }
        let bin = &packer.bins[b];
        let blue_med = bin
            .items
            .iter()
            .filter(|&&i| packer.items[i].ty == medium_ty && packer.items[i].color.is_blueish())
            .count();
        let red_small = bin.items.iter().any(|&i| packer.items[i].ty != medium_ty && packer.items[i].color.is_redish());
        if blue_med == 0 {
            continue;
        }
        if red_small {
            mixed_bins += 1;
        } else if blue_med == 2 {
            pair_bins += 1;
        }
    }
    let x = last_new.clone().unwrap_or_else(|| top.clone());
    let fitting = medium_ids.iter().filter(|&&m| packer.items[m].size <= x).count();
    let large_items = (2 * mixed_bins + pair_bins).min(fitting);
    let big = Rational::one() - &x;
    for _ in 0..large_items {
        packer.pack(big.clone())?;
        items.push(big.clone());
    }
    // Sand for the base bins, sized against the largest possible medium.
    let sand_size = sand.div_int(2);
    let base_used = top.scale(2) + small_size.scale(per_bin);
    let sand_per_bin = ((Rational::one() - &base_used) / &sand_size).floor().max(0) as usize;
    for _ in 0..copies * sand_per_bin {
        packer.pack(sand_size.clone())?;
        items.push(sand_size.clone());
    }
    // Optimal packing: each large item with one medium of size at most x, the other
    // mediums two per bin with the small items and sand, leftovers in extra bins.
    let rest = mediums - large_items;
    let base_bins = rest.div_ceil(2);
    let small_total = copies * base[small_k] as usize;
    let small_spare = small_total.saturating_sub(base_bins * base[small_k] as usize);
    let small_per_bin = (Rational::one() / &small_size).floor() as usize;
    let sand_total = copies * sand_per_bin;
    let sand_spare = sand_total.saturating_sub(base_bins * sand_per_bin);
    let sand_per_full = (Rational::one() / &sand_size).floor() as usize;
    let opt = large_items + base_bins + small_spare.div_ceil(small_per_bin) + sand_spare.div_ceil(sand_per_full);
    Ok(AdaptiveRun {
        items,
        last_new,
        mediums,
        medium_opens: opens,
        large_items,
        mixed_bins,
        pair_bins,
        alg: packer.bins_used(),
        opt,
    })
}

/// Bins another packer needs for the exact item sequence of an adaptive run, over the
/// run's optimum. The sequence stays tuned to the packer it was built against.
pub fn replay_ratio(params: ParameterSet, run: &AdaptiveRun) -> Result<Rational, Error> {
    let bins = Packer::run(params, run.items.iter())?.bins_used();
    Ok(q(bins as i64, run.opt.max(1) as i64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_at_table_values() {
        let c = LowerBoundCase::get(CaseId::RedfitTwo);
        let w = c.input_weights(&c.table_alpha);
        // 31/28 + 2(0.1276) + (1-0.1428)/6 + 0.1428/2
        assert_eq!(w[0], r("31/28") + r("2552/10000") + r("8572/60000") + r("714/10000"));
        assert_eq!(w[0].to_decimal(5), "1.57661");
        assert_eq!(w[1], r("5/3") - r("9/100"));
        let lb = static_lower_bound(&c, &c.table_alpha).unwrap();
        assert_eq!(lb, w[3]);
        assert!(lb >= c.claimed);
    }

    #[test]
    fn mixture_matches_hand_algebra() {
        let c = LowerBoundCase::get(CaseId::RedfitTwo);
        let a = [r("1/5"), r("1/10"), r("1/7")];
        let chi1 = r("2") * (Rational::one() - r("1/5") - r("1/50")) / r("6/5");
        let chi2 = r("1/5");
        let w0 = r("6/5") + r("9/30") + r("1/12");
        let w1 = r("3/2") + r("1/10");
        let want = (w0 + &w1 * (&chi1 + &chi2)) / (Rational::one() + chi1 + chi2);
        assert_eq!(c.inputs[3].weight(&a), want);
    }

    #[test]
    fn alpha_out_of_range_is_rejected() {
        let c = LowerBoundCase::get(CaseId::RedfitThree);
        assert!(static_lower_bound(&c, &[r("1/3"), r("0")]).is_err());
        assert!(static_lower_bound(&c, &[r("1/10")]).is_err());
    }

    #[test]
    fn axis_closes_at_a_third() {
        let a = axis(&r("1/10"));
        assert_eq!(a.len(), 5);
        assert_eq!(a[3], r("3/10"));
        assert_eq!(a[4], q(1, 3));
        assert_eq!(axis(&r("1/6")), vec![Rational::zero(), q(1, 6), q(1, 3)]);
    }

    #[test]
    fn singleton_grid_is_the_largest_input() {
        let c = LowerBoundCase::get(CaseId::RedfitOne);
        let axes: Vec<Vec<Rational>> = c.table_alpha.iter().map(|a| vec![a.clone()]).collect();
        let g = min_max_over(&c, &axes);
        let w = c.input_weights(&c.table_alpha);
        assert_eq!(g.grid_min, w.iter().max().unwrap().clone());
        assert_eq!(g.argmin, c.table_alpha);
        assert_eq!(g.points, 1);
    }

    #[test]
    fn grid_min_matches_brute_force_on_a_coarse_grid() {
        for id in CaseId::ALL {
            let c = LowerBoundCase::get(id);
            let ax = axis(&r("1/30"));
            let axes = vec![ax.clone(); c.dims()];
            let g = min_max_over(&c, &axes);
            let mut best: Option<Rational> = None;
            let mut idx = vec![0usize; c.dims()];
            loop {
                let alpha: Vec<Rational> = idx.iter().map(|&i| ax[i].clone()).collect();
                let worst = c.input_weights(&alpha).into_iter().max().unwrap();
                best = Some(best.map_or(worst.clone(), |b| b.min(worst)));
                let mut d = 0;
                loop {
                    if d == idx.len() {
                        break;
                    }
                    idx[d] += 1;
                    if idx[d] < ax.len() {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
                if d == idx.len() {
                    break;
                }
            }
            assert_eq!(g.grid_min, best.unwrap(), "{id}");
        }
    }

    #[test]
    fn lipschitz_of_affine_input_is_coefficient_sum() {
        let c = LowerBoundCase::get(CaseId::RedfitTwo);
        assert_eq!(c.inputs[0].lipschitz(3), r("7/3"));
        assert_eq!(c.inputs[2].lipschitz(3), r("2/3"));
        // Finite differences of the mixture never exceed the bound.
        let l = c.inputs[3].lipschitz(3);
        let h = r("1/1000");
        for base in [[r("0"), r("0"), r("0")], [r("1/5"), r("3/10"), r("1/9")], [r("33/100"), r("1/3"), r("0")]] {
            for i in 0..2 {
                let mut moved = base.clone();
                moved[i] = &moved[i] - &h;
                let diff = (c.inputs[3].weight(&base) - c.inputs[3].weight(&moved)).abs();
                assert!(diff <= &l * &h);
            }
        }
    }

    #[test]
    fn pattern_stream_shapes() {
        let c = LowerBoundCase::get(CaseId::RedfitTwo);
        let off = max_offset(&c, &[1, 1, 0, 0]).unwrap();
        assert_eq!(off, r("1/24"));
        let s = pattern_stream(&c, &[1, 1, 0, 0], 100, &off, &r("1/100")).unwrap();
        assert_eq!(s.opt, 100);
        let non_sand: Vec<&Rational> = s.items.iter().filter(|x| **x > r("1/100")).collect();
        assert_eq!(non_sand.len(), 200);
        // Smallest first.
        assert_eq!(*non_sand[0], r("3/8"));
        assert_eq!(*non_sand[199], r("13/24"));
        // Sand fills each optimal bin up to less than the sand bound.
        let fill = r("3/8") + r("13/24") + s.sand_size.scale(s.sand_per_bin as i64);
        assert!(fill <= Rational::one() && Rational::one() - fill < r("1/100"));

        let empty = pattern_stream(&c, &[0, 0, 0, 0], 10, &Rational::zero(), &r("1/50")).unwrap();
        assert_eq!(empty.items.len(), 10 * 100);
        assert!(pattern_stream(&c, &[1, 1, 0, 0], 1, &(off + r("1/1000")), &r("1/100")).is_err());
        assert!(pattern_stream(&c, &[2, 0, 0, 0], 1, &r("1/1000"), &r("1/100")).is_err());
    }

    #[test]
    fn simulation_types_separate_the_adversary_sizes() {
        let c = LowerBoundCase::get(CaseId::RedfitTwo);
        let p = simulation_params(&c, &c.table_alpha, &r("1/100"), &r("1/500"), Mode::Super).unwrap();
        let b: Vec<String> = p.boundaries.iter().map(|x| x.to_string()).collect();
        assert_eq!(b, ["1", "51/100", "1/2", "103/300", "1/3", "13/50", "1/4", "107/700", "1/7", "1/500"]);
        let t = p.tables();
        let ty = |s: &str| p.classify(&r(s)).unwrap();
        assert_eq!(t.redfit[ty("15/100")], 2);
        assert_eq!(t.redfit[ty("1/4") + 0], 0);
        assert_eq!(t.redfit[ty("26/100")], 1);
        // Red mediums fit beside large items, not beside blue pairs.
        assert!(t.leaves[ty("51/100")] >= t.needs[ty("34/100")]);
        assert!(t.leaves[ty("34/100")] < t.needs[ty("34/100")]);
        // Blue medium pairs take a red of the 1/4 type; blue 1/4 bins take nothing.
        assert!(t.leaves[ty("34/100")] >= t.needs[ty("26/100")]);
        assert!(t.leaves[ty("26/100")] < t.needs[ty("15/100")]);
    }
}
