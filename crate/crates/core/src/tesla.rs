//! TESLA key-disclosure interval selection and interval arithmetic.

use crate::error::{Error, Result};
use crate::model::{communication_depth, period_gcd, SystemModel};

/// Largest interval `p` with `p * (C + 1) <= T` for every application, `p`
/// dividing the hyperperiod, and `p` either a multiple or a divisor of the
/// gcd of all periods. `apps` holds `(name, period, depth)` triples.
pub fn optimize_p_int(apps: &[(&str, u64, u32)], hyperperiod: u64) -> Result<u64> {
    if apps.is_empty() || hyperperiod == 0 || apps.iter().any(|a| a.1 == 0) {
        return Err(Error::Argument("positive periods and hyperperiod required".into()));
    }
    let periods: Vec<u64> = apps.iter().map(|a| a.1).collect();
    let g = period_gcd(&periods);
    let mut divisors = divisors(hyperperiod);
    divisors.sort_unstable_by(|a, b| b.cmp(a));
    let aligned = |p: u64| p.is_multiple_of(g) || g.is_multiple_of(p);
    if let Some(p) = divisors
        .into_iter()
        .find(|&p| aligned(p) && apps.iter().all(|&(_, t, c)| p * (u64::from(c) + 1) <= t))
    {
        return Ok(p);
    }
    let (name, t, c) = apps
        .iter()
        .copied()
        .min_by_key(|&(_, t, c)| t / (u64::from(c) + 1))
        .expect("non-empty");
    Err(Error::infeasible(
        "key interval",
        format!("application {name} needs {} intervals within period {t}", c + 1),
    ))
}

/// Whether `p` satisfies the interval constraints for the given apps.
pub fn p_int_admissible(apps: &[(&str, u64, u32)], hyperperiod: u64, p: u64) -> bool {
    let periods: Vec<u64> = apps.iter().map(|a| a.1).collect();
    let g = period_gcd(&periods);
    p > 0
        && hyperperiod.is_multiple_of(p)
        && (p.is_multiple_of(g) || g.is_multiple_of(p))
        && apps.iter().all(|&(_, t, c)| p * (u64::from(c) + 1) <= t)
}

fn divisors(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut i = 1;
    while i * i <= n {
        if n.is_multiple_of(i) {
            out.push(i);
            if i * i != n {
                out.push(n / i);
            }
        }
        i += 1;
    }
    out
}

/// Key interval for a model: the optimum over its normal applications, or
/// the hyperperiod when nothing is secure.
pub fn model_p_int(model: &SystemModel) -> Result<u64> {
    let apps: Vec<(&str, u64, u32)> = model
        .normal_apps()
        .map(|a| (model.app(a).name.as_str(), model.app_period(a), communication_depth(model, a)))
        .collect();
    let periods: Vec<u64> = apps.iter().map(|a| a.1).collect();
    let h = crate::model::hyperperiod(&periods)?;
    if !model.streams().iter().any(|s| s.secure) {
        return Ok(h);
    }
    optimize_p_int(&apps, h)
}

/// Earliest interval index in which a frame whose last transmission ends at
/// `arrival_end` can be authenticated.
pub fn auth_interval(arrival_end: u64, p_int: u64) -> u64 {
    arrival_end / p_int + 1
}

/// Earliest time a secure frame may be consumed: the start of interval `phi`
/// plus the end of the key verification inside its interval.
pub fn earliest_auth_time(phi: u64, p_int: u64, key_verify_end: u64) -> u64 {
    phi * p_int + key_verify_end
}
