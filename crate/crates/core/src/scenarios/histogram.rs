use num_traits::{Float, One, ToPrimitive, Zero};

use crate::ad::{BranchSite, TraceContext};
use crate::error::{Error, Result};
use crate::scalar::{AdScalar, Real};

pub const BINS: usize = 20;

/// Lower clamp applied to raw bin parameters before normalizing.
pub const MIN_BIN_WEIGHT: f64 = 1e-6;

/// Tracked sites of the inverse-transform chain, one per bin.
pub const SITE_COEFFICIENT: BranchSite = BranchSite::tracked(0x4558_0001);

/// Twenty weights on an equally spaced support starting at `lo` with spacing
/// `width`. For input histograms the support points are the coefficient
/// values; for output histograms `lo + k * width` is the left edge of bin `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram20<S: AdScalar> {
    pub weights: [S; BINS],
    pub lo: S::Base,
    pub width: S::Base,
}

impl<S: AdScalar> Histogram20<S> {
    pub fn new(weights: [S; BINS], lo: S::Base, width: S::Base) -> Result<Self> {
        if !(width > S::Base::zero()) || !lo.is_finite() {
            return Err(Error::InvalidDistribution(format!("bad support lo={lo} width={width}")));
        }
        Ok(Histogram20 { weights, lo, width })
    }

    /// Input histogram over the coefficients `0.1 + k * 0.9 / 19`.
    pub fn coefficients(weights: [S; BINS]) -> Self {
        Histogram20 { weights, lo: S::Base::lit(0.1), width: S::Base::lit(0.9 / 19.0) }
    }

    /// Input histogram from raw optimizer parameters, each clamped to at
    /// least [`MIN_BIN_WEIGHT`]. Clamped entries lose their tangent.
    pub fn from_parameters(params: &[S]) -> Result<Self> {
        if params.len() != BINS {
            return Err(Error::LengthMismatch { expected: BINS, got: params.len() });
        }
        let floor = S::Base::lit(MIN_BIN_WEIGHT);
        let weights = std::array::from_fn(|k| if params[k].value() < floor { S::constant(floor) } else { params[k] });
        Ok(Self::coefficients(weights))
    }

    /// Output histogram of twenty bins spanning `[lo, hi]`.
    pub fn over(lo: S::Base, hi: S::Base) -> Result<Self> {
        Self::new([S::zero(); BINS], lo, (hi - lo) / S::Base::lit(BINS as f64))
    }

    pub fn point(&self, k: usize) -> S::Base {
        self.lo + self.width * S::Base::from_usize_lossy(k)
    }

    /// Bin index of `x` on an output support, clamped into the outer bins.
    pub fn bin_of(&self, x: S::Base) -> usize {
        let rel = ((x - self.lo) / self.width).floor();
        if !(rel > S::Base::zero()) {
            0
        } else {
            rel.to_usize().unwrap_or(BINS - 1).min(BINS - 1)
        }
    }

    pub fn total(&self) -> S {
        let mut t = S::zero();
        for w in &self.weights {
            t += *w;
        }
        t
    }

    /// Weights divided by their sum.
    pub fn normalized(&self) -> Result<[S; BINS]> {
        for (k, w) in self.weights.iter().enumerate() {
            let v = w.value();
            if !v.is_finite() || v < S::Base::zero() {
                return Err(Error::InvalidDistribution(format!("bin {k} has weight {v}")));
            }
        }
        let total = self.total();
        if !(total.value() > S::Base::zero()) {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Ok(std::array::from_fn(|k| self.weights[k] / total))
    }

    fn same_support(&self, other: &Self) -> bool {
        let tol = S::Base::lit(1e-12);
        (self.lo - other.lo).abs() <= tol && (self.width - other.width).abs() <= tol
    }
}

/// `width * sum_k |CDF_a(k) - CDF_b(k)|` on the normalized histograms.
pub fn wasserstein_1d<S: AdScalar>(a: &Histogram20<S>, b: &Histogram20<S>) -> Result<S> {
    if !a.same_support(b) {
        return Err(Error::InvalidDistribution("histograms have different supports".into()));
    }
    let (pa, pb) = (a.normalized()?, b.normalized()?);
    let (mut ca, mut cb) = (S::zero(), S::zero());
    let mut sum = S::zero();
    // the last CDF difference is zero for normalized inputs
    for k in 0..BINS - 1 {
        ca += pa[k];
        cb += pb[k];
        sum += (ca - cb).abs();
    }
    Ok(sum * a.width)
}

/// One inverse-transform draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientDraw<S> {
    pub bin: usize,
    /// Support value of `bin`; a constant.
    pub coefficient: S,
}

/// Inverse-transform sampling as a chain of tracked branches
/// `u - cumsum_k < 0`, returning the first bin whose cumulative mass exceeds
/// `u`.
pub fn sample_coefficient<S: AdScalar>(
    ctx: &mut TraceContext<S::Base>,
    u: S::Base,
    bins: &Histogram20<S>,
) -> Result<CoefficientDraw<S>> {
    if !(u >= S::Base::zero() && u < S::Base::one()) {
        return Err(Error::InvalidConfig(format!("uniform variate {u} outside [0, 1)")));
    }
    let p = bins.normalized()?;
    let mut cum = S::zero();
    for (k, pk) in p.iter().enumerate() {
        cum += *pk;
        let condition = S::constant(u) - cum;
        if ctx.traced_less_than(SITE_COEFFICIENT.at(k as u32), condition)? {
            return Ok(CoefficientDraw { bin: k, coefficient: S::constant(bins.point(k)) });
        }
    }
    // cumulative rounding left u just above the total mass
    Ok(CoefficientDraw { bin: BINS - 1, coefficient: S::constant(bins.point(BINS - 1)) })
}
