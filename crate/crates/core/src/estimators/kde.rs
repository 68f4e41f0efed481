use crate::error::{Error, Result};
use crate::scalar::Real;

/// Bandwidth selection for the density estimate at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth<T> {
    /// `h = 1.06 * sd * m^(-1/5)`
    Silverman,
    Fixed(T),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KdeEstimate<T> {
    pub density: T,
    pub bandwidth: T,
    /// Zero sample spread; `density` is reported as 0.
    pub degenerate: bool,
}

/// Sample standard deviation with the `m - 1` denominator.
pub fn sample_std<T: Real>(values: &[T]) -> T {
    let m = T::from_usize_lossy(values.len());
    let mean = values.iter().copied().sum::<T>() / m;
    let ss = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
    (ss / (m - T::one())).sqrt()
}

/// Gaussian-kernel density estimate of `values` evaluated at 0.
pub fn kde_at_zero<T: Real>(values: &[T], bandwidth: Bandwidth<T>) -> Result<KdeEstimate<T>> {
    if values.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: values.len() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("non-finite value passed to density estimate".into()));
    }
    let sd = sample_std(values);
    let h = match bandwidth {
        Bandwidth::Silverman => {
            if sd == T::zero() {
                return Ok(KdeEstimate { density: T::zero(), bandwidth: T::zero(), degenerate: true });
            }
            T::lit(1.06) * sd * T::from_usize_lossy(values.len()).powf(T::lit(-0.2))
        }
        Bandwidth::Fixed(h) => {
            if !(h > T::zero()) {
                return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {h}")));
            }
            h
        }
    };
    let norm = T::one() / ((T::TAU()).sqrt() * h);
    let half = T::lit(0.5);
    let sum = values
        .iter()
        .map(|&v| {
            let z = v / h;
            (-half * z * z).exp()
        })
        .sum::<T>();
    Ok(KdeEstimate { density: norm * sum / T::from_usize_lossy(values.len()), bandwidth: h, degenerate: false })
}
