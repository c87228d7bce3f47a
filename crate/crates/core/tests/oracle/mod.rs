//! Brute-force references for the certifier: random reduced parameter sets, exhaustive
//! pattern enumeration, and the primal programs solved exactly over all patterns.

#![allow(dead_code)]

use harmonic::certify::{ClassModel, SlotPattern};
use harmonic::knapsack::{evaluate, KnapItem};
use harmonic::params::{checked, generate_redspaces};
use harmonic::rational::{q, Rational};
use harmonic::{Mode, ParameterSet};
use rand::seq::SliceRandom;
use rand::Rng;

/// A parameter set with at most eight types and `t_N >= 1/20`, or `None` if the draw is
/// not a valid set. Narrow medium types keep the critical patterns unique.
pub fn random_instance<R: Rng>(rng: &mut R) -> Option<ParameterSet> {
    let mode = if rng.gen_bool(0.7) { Mode::Extreme } else { Mode::Super };
    let d: i64 = rng.gen_range(6..=20);
    let t_n = q(1, d);
    let mut bounds = vec![Rational::one()];
    if rng.gen_bool(0.5) {
        bounds.push([q(3, 5), q(2, 3), q(7, 10)].choose(rng).unwrap().clone());
    }
    bounds.push(q(1, 2));
    if rng.gen_bool(0.5) {
        bounds.push([q(5, 12), q(2, 5)].choose(rng).unwrap().clone());
    }
    // The narrow medium type (1/3, narrow] is narrower than the smallest item.
    let narrow = q(1, 3) + q(rng.gen_range(1..30), 30 * d);
    bounds.push(narrow.clone());
    bounds.push(q(1, 3));
    let mut smalls: Vec<Rational> = [q(3, 10), q(1, 4), q(2, 9), q(1, 5), q(1, 6), q(1, 7), q(1, 8)]
        .into_iter()
        .filter(|s| *s > t_n)
        .collect();
    smalls.shuffle(rng);
    let room = 8usize.saturating_sub(bounds.len() + 1);
    smalls.truncate(rng.gen_range(0..=room.min(3)));
    smalls.sort_by(|a, b| b.cmp(a));
    bounds.extend(smalls);
    bounds.push(t_n.clone());
    let fracs = [q(1, 20), q(1, 10), q(3, 20), q(1, 5), q(1, 4)];
    let redfrac: Vec<Rational> = bounds
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let lower = bounds.get(i + 1).cloned().unwrap_or_else(Rational::zero);
            if lower >= q(1, 2) || i + 1 == bounds.len() {
                Rational::zero()
            } else if lower >= q(1, 3) && mode == Mode::Extreme && *t != narrow {
                Rational::zero()
            } else if rng.gen_bool(0.75) {
                fracs.choose(rng).unwrap().clone()
            } else {
                Rational::zero()
            }
        })
        .collect();
    let mut p = ParameterSet {
        mode,
        boundaries: bounds,
        redfrac,
        redspaces: Vec::new(),
        epsilon: t_n.clone(),
        target: q(8, 5),
        gamma: [q(1, 4), q(2, 7), q(1, 3)].choose(rng).unwrap().clone(),
        gamma_start: q(1, 6),
        t_small: t_n,
        margin: Rational::zero(),
        explicit: None,
    };
    p.redspaces = generate_redspaces(&p);
    checked(p).ok()
}

/// Every count vector over the given sizes whose sum stays strictly below one.
pub fn all_count_vectors(lowers: &[Rational]) -> Vec<Vec<u64>> {
    fn go(lowers: &[Rational], i: usize, used: &Rational, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if i == lowers.len() {
            out.push(cur.clone());
            return;
        }
        let mut used = used.clone();
        loop {
            go(lowers, i + 1, &used, cur, out);
            if !lowers[i].is_positive() {
                break;
            }
            used += &lowers[i];
            if used >= Rational::one() {
                break;
            }
            cur[i] += 1;
        }
        cur[i] = 0;
    }
    let mut out = Vec::new();
    go(lowers, 0, &Rational::zero(), &mut vec![0; lowers.len()], &mut out);
    out
}

/// Exhaustive knapsack maximum.
pub fn brute_knapsack(items: &[KnapItem], sand_rate: &Rational) -> Rational {
    let lowers: Vec<Rational> = items.iter().map(|i| i.lower.clone()).collect();
    all_count_vectors(&lowers)
        .iter()
        .filter_map(|c| evaluate(items, sand_rate, c))
        .max()
        .expect("the empty pattern always fits")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Large item with an N-marked critical item.
    First,
    /// Large item with a B-marked critical item.
    Second,
    Other,
}

/// One pattern of a class with everything the primal programs need.
#[derive(Debug, Clone)]
pub struct Column {
    pub role: Role,
    pub w: Rational,
    pub v: Rational,
    /// N-marked critical items.
    pub n_marked: u64,
    /// Red share of types that fit beside a blue critical item.
    pub red: Rational,
}

/// All patterns of a class. Critical items take mark N or R independently; B-marked ones
/// only matter in the second critical pattern, elsewhere they are dominated by N.
pub fn class_columns(model: &ClassModel) -> Vec<Column> {
    let lowers: Vec<Rational> = model.slots.iter().map(|s| s.lower.clone()).collect();
    let mut out = Vec::new();
    for counts in all_count_vectors(&lowers) {
        let crit_count = model.critical.as_ref().map_or(0, |c| counts[c.slot]);
        let red: Rational = model.slots.iter().zip(&counts).map(|(s, &c)| s.y2_coef.scale(c as i64)).sum();
        let weights = |r: u64| model.pattern_weights(&SlotPattern { counts: counts.clone(), r_count: r });
        if let Some(cr) = model.critical.as_ref().filter(|cr| counts[cr.large_slot] > 0 && crit_count > 0) {
            assert_eq!(counts.iter().sum::<u64>(), 2, "a critical bin holds exactly two items");
            let (w, v) = weights(0);
            assert_eq!((&w, &v), (&cr.critical_weight, &cr.critical_weight));
            out.push(Column { role: Role::First, w: w.clone(), v: v.clone(), n_marked: 1, red: Rational::zero() });
            out.push(Column { role: Role::Second, w, v, n_marked: 0, red: Rational::zero() });
            let (w, v) = weights(1);
            out.push(Column { role: Role::Other, w, v, n_marked: 0, red });
            continue;
        }
        for r in 0..=crit_count {
            let (w, v) = weights(r);
            out.push(Column { role: Role::Other, w, v, n_marked: crit_count - r, red: red.clone() });
        }
    }
    out
}

/// `max c.x` subject to `A x <= b`, `x >= 0`, with `b >= 0`, by exact simplex with Bland's rule.
pub fn simplex_max(a: &[Vec<Rational>], b: &[Rational], c: &[Rational]) -> Rational {
    let m = a.len();
    let n = c.len();
    let width = n + m;
    let mut t: Vec<Vec<Rational>> = (0..m)
        .map(|i| {
            let mut row = a[i].clone();
            row.extend((0..m).map(|j| if i == j { Rational::one() } else { Rational::zero() }));
            row.push(b[i].clone());
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..width).collect();
    let mut obj: Vec<Rational> = c.to_vec();
    obj.extend((0..=m).map(|_| Rational::zero()));
    while let Some(e) = (0..width).find(|&j| obj[j].is_positive()) {
        let mut leave: Option<(usize, Rational)> = None;
        for i in 0..m {
            if t[i][e].is_positive() {
                let ratio = &t[i][width] / &t[i][e];
                let better = match &leave {
                    None => true,
                    Some((l, best)) => ratio < *best || (ratio == *best && basis[i] < basis[*l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (l, _) = leave.expect("bounded by the distribution row");
        let piv = t[l][e].clone();
        for x in t[l].iter_mut() {
            *x = &*x / &piv;
        }
        let prow = t[l].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != l && !row[e].is_zero() {
                let f = row[e].clone();
                for (x, p) in row.iter_mut().zip(&prow) {
                    if !p.is_zero() {
                        *x -= &f * p;
                    }
                }
            }
        }
        let f = obj[e].clone();
        for (x, p) in obj.iter_mut().zip(&prow) {
            if !p.is_zero() {
                *x -= &f * p;
            }
        }
        basis[l] = e;
    }
    -obj[width].clone()
}

/// Same program by enumerating every basis of `[A | I]` and keeping the best feasible vertex.
pub fn vertex_max(a: &[Vec<Rational>], b: &[Rational], c: &[Rational]) -> Rational {
    let m = a.len();
    let n = c.len();
    let col = |j: usize, i: usize| -> Rational {
        if j < n {
            a[i][j].clone()
        } else if j - n == i {
            Rational::one()
        } else {
            Rational::zero()
        }
    };
    let cost = |j: usize| if j < n { c[j].clone() } else { Rational::zero() };
    let mut best = Rational::zero();
    let mut pick = Vec::with_capacity(m);
    fn subsets(start: usize, total: usize, k: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if pick.len() == k {
            f(pick);
            return;
        }
        for j in start..total {
            pick.push(j);
            subsets(j + 1, total, k, pick, f);
            pick.pop();
        }
    }
    subsets(0, n + m, m, &mut pick, &mut |basis: &[usize]| {
        let mut mat: Vec<Vec<Rational>> =
            (0..m).map(|i| basis.iter().map(|&j| col(j, i)).chain([b[i].clone()]).collect()).collect();
        if let Some(x) = solve(&mut mat) {
            if x.iter().all(|v| !v.is_negative()) {
                let val: Rational = basis.iter().zip(&x).map(|(&j, v)| cost(j) * v).sum();
                if val > best {
                    best = val;
                }
            }
        }
    });
    best
}

/// Gauss-Jordan on an augmented square system; `None` if singular.
fn solve(mat: &mut [Vec<Rational>]) -> Option<Vec<Rational>> {
    let m = mat.len();
    for col in 0..m {
        let p = (col..m).find(|&r| !mat[r][col].is_zero())?;
        mat.swap(col, p);
        let piv = mat[col][col].clone();
        for x in mat[col].iter_mut() {
            *x = &*x / &piv;
        }
        let prow = mat[col].clone();
        for (r, row) in mat.iter_mut().enumerate() {
            if r != col && !row[col].is_zero() {
                let f = row[col].clone();
                for (x, p) in row.iter_mut().zip(&prow) {
                    *x -= &f * p;
                }
            }
        }
    }
    Some(mat.iter().map(|row| row[m].clone()).collect())
}

/// Optimum of the primal program of one class: the larger of the programs with objective
/// `w` (subject to `w <= v` on average) and objective `v` (subject to `v <= w`).
pub fn primal_optimum(model: &ClassModel, cols: &[Column]) -> Rational {
    if model.class == 0 {
        return cols.iter().map(|c| c.w.clone()).max().unwrap();
    }
    let mut best = Rational::zero();
    for use_w in [true, false] {
        let f = |c: &Column| if use_w { c.w.clone() } else { c.v.clone() };
        let g = |c: &Column| if use_w { c.v.clone() } else { c.w.clone() };
        let mut rows: Vec<Vec<Rational>> = Vec::new();
        let mut rhs = Vec::new();
        if let Some(cr) = &model.critical {
            let one = Rational::one();
            let ratio = (&one - &cr.redfrac) / (&one + &cr.redfrac);
            let half_blue = (&one - &cr.redfrac).div_int(2);
            rows.push(
                cols.iter()
                    .map(|c| match c.role {
                        Role::First => Rational::one(),
                        _ => -(&ratio * Rational::integer(c.n_marked as i64)),
                    })
                    .collect(),
            );
            rows.push(
                cols.iter()
                    .map(|c| match c.role {
                        Role::Second => half_blue.clone(),
                        Role::First => Rational::zero(),
                        Role::Other => -c.red.clone(),
                    })
                    .collect(),
            );
            rhs.push(Rational::zero());
            rhs.push(Rational::zero());
        }
        rows.push(cols.iter().map(|c| if c.role == Role::Other { f(c) - g(c) } else { Rational::zero() }).collect());
        rhs.push(Rational::zero());
        rows.push(cols.iter().map(|_| Rational::one()).collect());
        rhs.push(Rational::one());
        let obj: Vec<Rational> = cols.iter().map(f).collect();
        let val = if cols.len() <= 12 { vertex_max(&rows, &rhs, &obj) } else { simplex_max(&rows, &rhs, &obj) };
        if val > best {
            best = val;
        }
    }
    best
}

/// Outcome of running the certifier and the references on one reduced instance.
#[derive(Debug, Clone)]
pub struct InstanceCheck {
    pub knapsacks: usize,
    /// Knapsack instances where the solver and enumeration differ.
    pub knapsack_mismatches: Vec<String>,
    /// Largest primal optimum over the classes.
    pub primal: Rational,
    /// Certified and verified at `primal + 1/1000`.
    pub accepted_above: bool,
    /// Some certificate was accepted below the primal optimum.
    pub accepted_below: bool,
}

pub fn check_instance(p: &ParameterSet) -> InstanceCheck {
    use harmonic::certify::{certify, classes_to_certify, verify_certificate, CertifyOptions, Certificate};
    let tables = p.tables();
    let models: Vec<ClassModel> =
        classes_to_certify(p, &tables).into_iter().map(|k| ClassModel::build(p, &tables, k)).collect();
    let mut primal = Rational::zero();
    let mut knapsacks = 0;
    let mut knapsack_mismatches = Vec::new();
    for m in &models {
        let opt = primal_optimum(m, &class_columns(m));
        if opt > primal {
            primal = opt;
        }
    }
    let above = &primal + q(1, 1000);
    let below = &primal - q(1, 1000);
    for m in &models {
        for y3 in [q(0, 1), q(1, 3), q(1, 2), q(1, 1)] {
            for ratio in [&above, &below] {
                let duals = m.duals(ratio, y3.clone());
                let items: Vec<KnapItem> =
                    m.slots.iter().map(|s| KnapItem { lower: s.lower.clone(), value: s.omega(&duals) }).collect();
                let fast = harmonic::knapsack::knapsack_max(&items, &m.sand_rate).value;
                let slow = brute_knapsack(&items, &m.sand_rate);
                knapsacks += 1;
                if fast != slow {
                    knapsack_mismatches.push(format!("class {} y3 {y3}: {fast} vs {slow}", m.class));
                }
            }
        }
    }
    let opts = CertifyOptions { jobs: 1, max_iters: 20 };
    let verified = |c: &Certificate| verify_certificate(p, c, 1).map(|v| v.accepted).unwrap_or(false);
    let hi = certify(p, &above, &opts).expect("instance is certifiable in principle");
    let accepted_above = hi.certificate.as_ref().is_some_and(verified);
    let lo = certify(p, &below, &opts).expect("instance is certifiable in principle");
    let mut accepted_below = lo.certificate.as_ref().is_some_and(verified);
    // The values that work above the optimum must not carry over below it.
    if let Some(c) = &hi.certificate {
        let shifted = Certificate { ratio: below.clone(), ..c.clone() };
        accepted_below |= verified(&shifted);
    }
    InstanceCheck { knapsacks, knapsack_mismatches, primal, accepted_above, accepted_below }
}

/// The first `count` valid reduced instances drawn from `seed`, skipping sets whose
/// critical bins could also hold another item.
pub fn reduced_instances(seed: u64, count: usize) -> Vec<ParameterSet> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        if let Some(p) = random_instance(&mut rng) {
            let tables = p.tables();
            let ks = harmonic::certify::classes_to_certify(&p, &tables);
            if ks.iter().all(|&k| ClassModel::build(&p, &tables, k).critical_is_unique()) {
                out.push(p);
            }
        }
    }
    out
}
