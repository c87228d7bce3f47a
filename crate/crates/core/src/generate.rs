//! Automatic construction of type boundaries and red fractions.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::params::{base_redfit, generate_redspaces, GeneratorConfig, Mode, ParameterSet, SizeClass};
use crate::rational::{q, Rational};

/// Red fraction of a medium type with lower bound `lower` that makes the critical
/// large+medium pattern weigh exactly `c`.
pub fn medium_redfrac(c: &Rational, eps: &Rational, lower: &Rational) -> Rational {
    let sand = (q(1, 2) - lower) / (Rational::one() - eps);
    Rational::one() - (c - Rational::one() - sand).scale(2)
}

/// Largest medium boundary: the lower bound at which the medium red fraction reaches zero.
pub fn medium_root(c: &Rational, eps: &Rational) -> Rational {
    q(1, 2) - (Rational::one() - eps) * (c - q(3, 2))
}

/// Raise red fractions of types in `[tsmall, 1/6]` so that the blue space a bin loses
/// to rounding is paid for by reds.
pub fn adjust_redfrac(mut p: ParameterSet) -> ParameterSet {
    for i in 0..p.num_types() {
        let t = p.upper(i).clone();
        if p.size_class(i) != SizeClass::Small || t < p.t_small || t > q(1, 6) || i == p.sand() {
            continue;
        }
        let bluefit = t.recip().floor();
        let base = Rational::one() - p.lower(i).scale(bluefit);
        if base.is_positive() {
            p.redfrac[i] = base + &p.margin;
        }
    }
    p
}

fn expansion(p: &ParameterSet, i: usize) -> Rational {
    let t = p.upper(i);
    let bluefit = t.recip().floor();
    let redfit = base_redfit(p, i) as i64;
    let a = &p.redfrac[i];
    let blue = (Rational::one() - a).div_int(bluefit);
    let red = if redfit > 0 { a.div_int(redfit) } else { Rational::zero() };
    (blue + red) / p.lower(i)
}

fn shell(cfg: &GeneratorConfig, boundaries: Vec<Rational>, redfrac: Vec<Rational>) -> ParameterSet {
    ParameterSet {
        mode: cfg.mode,
        boundaries,
        redfrac,
        redspaces: Vec::new(),
        epsilon: cfg.t_n.clone(),
        target: cfg.c.clone(),
        gamma: cfg.gamma.clone(),
        gamma_start: cfg.gamma_start.clone(),
        t_small: cfg.t_small.clone(),
        margin: cfg.margin.clone(),
        explicit: None,
    }
}

/// Build a complete extreme-mode parameter set from a generator configuration.
pub fn generate_sizes(cfg: &GeneratorConfig) -> Result<ParameterSet, Error> {
    cfg.validate()?;
    if cfg.mode != Mode::Extreme {
        return Err(Error::Config("size generation is defined for extreme mode".into()));
    }
    if cfg.c <= q(3, 2) {
        return Err(Error::Config(format!("c = {} leaves no room for medium types", cfg.c)));
    }
    let eps = &cfg.t_n;
    let root = medium_root(&cfg.c, eps);
    if root >= q(1, 2) || root <= q(1, 3) {
        return Err(Error::Config(format!("medium root {root} outside (1/3, 1/2)")));
    }
    // boundary -> seeded redfrac of the type having that boundary as its lower bound
    let mut lowers: BTreeMap<Rational, Option<Rational>> = BTreeMap::new();
    lowers.insert(Rational::one(), None);
    let mut i = 2i64;
    while q(1, i) >= cfg.t_small {
        lowers.insert(q(1, i), None);
        i += 1;
    }
    let mut top_seed = q(1, 3);
    for (size, a) in &cfg.seeds {
        if !size.is_positive() || *size >= Rational::one() {
            return Err(Error::Config(format!("seed size {size} outside (0,1)")));
        }
        if *size < cfg.t_small {
            return Err(Error::Config(format!("seed size {size} below tsmall")));
        }
        lowers.insert(size.clone(), Some(a.clone()));
        if *size > q(1, 3) && *size < q(1, 2) {
            top_seed = top_seed.max(size.clone());
        }
    }
    // Medium grid: multiples of tN strictly between the highest medium seed and the root.
    let mut k = (&top_seed / eps).floor() + 1;
    loop {
        let v = eps.scale(k);
        if v >= root {
            break;
        }
        lowers.entry(v).or_insert(None);
        k += 1;
    }
    lowers.insert(root.clone(), None);
    lowers.retain(|v, _| *v <= q(1, 2) || *v == Rational::one());

    let mut boundaries: Vec<Rational> = lowers.keys().rev().cloned().collect();
    let seeds: Vec<Option<Rational>> = lowers.values().rev().cloned().collect();
    // Upper part: every type whose lower bound is at least tsmall.
    let mut redfrac = Vec::new();
    for j in 0..boundaries.len() - 1 {
        let upper = &boundaries[j];
        let lower = &boundaries[j + 1];
        let a = if *lower >= q(1, 2) || *upper == q(1, 2) {
            Rational::zero()
        } else if *lower >= q(1, 3) {
            medium_redfrac(&cfg.c, eps, lower)
        } else {
            seeds[j + 1].clone().unwrap_or_else(Rational::zero)
        };
        redfrac.push(a);
    }
    // Provisional sand type so the set is well formed while adjusting.
    boundaries.push(cfg.t_n.clone());
    redfrac.push(Rational::zero());
    redfrac.push(Rational::zero());
    let p = adjust_redfrac(shell(cfg, boundaries, redfrac));
    let anchor = p.boundaries.iter().position(|b| *b == cfg.t_small).expect("tsmall is a boundary");
    let reference = expansion(&p, anchor - 1);

    // Below tsmall: types 1/j, merging consecutive ones while the merged type's
    // red fraction window stays open.
    let mut bounds: Vec<Rational> = p.boundaries[..=anchor].to_vec();
    let mut fracs: Vec<Rational> = p.redfrac[..anchor].to_vec();
    let mut x = cfg.t_small.clone();
    let mut j = x.recip().floor() + 1;
    let mut pending: Option<(Rational, Rational)> = None;
    let probe = |x: &Rational, s: &Rational| -> (Rational, Rational) {
        let bluefit = x.recip().floor();
        let redfit = if *x <= cfg.gamma_start {
            (&cfg.gamma / x).floor().max(1)
        } else {
            ((q(1, 3) / x).ceil() - 1).max(1)
        };
        let under = Rational::one() - s.scale(bluefit);
        let over = if bluefit > redfit {
            q(bluefit * redfit, bluefit - redfit) * (&reference * s - q(1, bluefit))
        } else {
            Rational::one()
        };
        (under, over)
    };
    loop {
        let s = q(1, j);
        if s <= cfg.t_n {
            let bluefit = x.recip().floor();
            let under = Rational::one() - cfg.t_n.scale(bluefit);
            fracs.push(under.max(Rational::zero()));
            bounds.push(cfg.t_n.clone());
            break;
        }
        let (under, over) = probe(&x, &s);
        if under <= over || pending.is_none() {
            pending = Some((s, under));
            j += 1;
            continue;
        }
        let (s0, a0) = pending.take().unwrap();
        fracs.push(a0);
        bounds.push(s0.clone());
        x = s0;
    }
    fracs.push(Rational::zero());
    let mut p = adjust_redfrac(shell(cfg, bounds, fracs));
    p.redspaces = generate_redspaces(&p);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::r;

    #[test]
    fn medium_formula_values() {
        let c = r("1583/1000");
        let eps = r("1/100");
        assert_eq!(medium_root(&c, &eps), r("41783/100000"));
        assert_eq!(medium_redfrac(&c, &eps, &r("2/5")), r("1783/49500"));
        assert_eq!(medium_redfrac(&c, &eps, &r("41/100")), r("87/5500"));
        assert_eq!(medium_redfrac(&c, &eps, &medium_root(&c, &eps)), Rational::zero());
        // At the root a zero red fraction puts the critical bin exactly at the ratio.
        let sand = (r("1/2") - medium_root(&c, &eps)) / (Rational::one() - &eps);
        assert_eq!(r("3/2") + sand, c);
    }

    #[test]
    fn adjustment_examples() {
        let mut p = crate::paramfile::bundled::extreme_1583();
        p.margin = Rational::zero();
        let idx = |p: &ParameterSet, t: &str| p.boundaries.iter().position(|b| *b == r(t)).unwrap();
        for (t, want) in [("1/12", "1/30"), ("1/9", "1/30")] {
            let i = idx(&p, t);
            p.redfrac[i] = Rational::zero();
            let adj = adjust_redfrac(p.clone());
            assert_eq!(adj.redfrac[i], r(want), "type {t}");
        }
        // With the margin knob the rule adds it on top, as in the bundled rows.
        p.margin = r("1/10000");
        let i = idx(&p, "1/12");
        p.redfrac[i] = Rational::zero();
        assert_eq!(adjust_redfrac(p).redfrac[i], r("1003/30000"));
    }

    #[test]
    fn low_c_is_rejected() {
        let mut cfg = crate::paramfile::parse_param_file(crate::paramfile::bundled::EXTREME_1583_GENERATOR)
            .unwrap()
            .generator_config()
            .unwrap();
        cfg.c = r("3/2");
        assert!(matches!(generate_sizes(&cfg), Err(Error::Config(_))));
    }
}
