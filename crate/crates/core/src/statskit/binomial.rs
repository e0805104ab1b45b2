use super::StatsError;

fn check(r: u32, p: f64, x: u32) -> Result<(), StatsError> {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return Err(StatsError::DomainError(format!("p = {p} not in [0, 1]")));
    }
    if x > r {
        return Err(StatsError::DomainError(format!("x = {x} exceeds r = {r}")));
    }
    Ok(())
}

fn choose(r: u32, x: u32) -> f64 {
    let k = x.min(r - x);
    (0..k).fold(1.0, |acc, i| acc * f64::from(r - i) / f64::from(i + 1))
}

fn pmf_unchecked(r: u32, p: f64, x: u32) -> f64 {
    // powi(0) is 1, so the p = 0 and p = 1 corners come out right.
    choose(r, x) * p.powi(x as i32) * (1.0 - p).powi((r - x) as i32)
}

/// `C(r, x) p^x (1-p)^(r-x)`.
pub fn binomial_pmf(r: u32, p: f64, x: u32) -> Result<f64, StatsError> {
    check(r, p, x)?;
    Ok(pmf_unchecked(r, p, x))
}

/// `P(X >= x)` for `X ~ Binomial(r, p)`.
pub fn binomial_tail_ge(r: u32, p: f64, x: u32) -> Result<f64, StatsError> {
    check(r, p, x)?;
    if x == 0 {
        return Ok(1.0);
    }
    // Sum the tail directly rather than 1 - cdf, so small tails keep their
    // relative accuracy.
    Ok((x..=r).rev().map(|k| pmf_unchecked(r, p, k)).sum())
}
