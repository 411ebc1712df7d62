use crate::error::Result;

use super::check_envelope_dims;

/// Free-parameter counts of the full and envelope models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParameterCount {
    pub full: u128,
    pub envelope: u128,
    /// Reduction on the coefficient side, `p (prod r_k - prod u_k)`.
    pub saved: u128,
}

fn sym(d: u128) -> u128 {
    d * (d + 1) / 2
}

pub fn parameter_count(r: &[usize], u: &[usize], p: usize) -> Result<ParameterCount> {
    check_envelope_dims(r, u)?;
    let p = p as u128;
    let prod_r: u128 = r.iter().map(|&v| v as u128).product();
    let prod_u: u128 = u.iter().map(|&v| v as u128).product();
    let full = p * prod_r + r.iter().map(|&v| sym(v as u128)).sum::<u128>();
    let envelope = p * prod_u
        + r.iter()
            .zip(u)
            .map(|(&rk, &uk)| {
                let (rk, uk) = (rk as u128, uk as u128);
                uk * (rk - uk) + sym(uk) + sym(rk - uk)
            })
            .sum::<u128>();
    Ok(ParameterCount {
        full,
        envelope,
        saved: p * (prod_r - prod_u),
    })
}
