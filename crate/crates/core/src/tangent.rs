//! Unconstrained tangent portfolio, Sharpe ratio, and the angle between
//! portfolios measured in Cholesky-transformed space.
//!
//! The maximizer of `μᵀw / √(wᵀΣw)` subject to `1ᵀw = 1` is `Σ⁻¹μ` rescaled to
//! unit budget, provided `1ᵀΣ⁻¹μ > 0`. Because the Sharpe ratio is invariant
//! under positive rescaling, the direction `Σ⁻¹μ` itself is kept whenever the
//! budget normalization would have to flip its sign.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::market::MomentEstimate;
use crate::spd::{cholesky, solve_spd, transform_by_lt, CholeskyFactor};

/// Absolute tolerance on `|1ᵀw − 1|` for a normalized portfolio.
pub const BUDGET_TOL: f64 = 1e-10;

/// Variances at or below this are treated as zero risk.
pub const MIN_VARIANCE: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    weights: DVector<f64>,
    normalized: bool,
}

impl Portfolio {
    /// Wraps a weight vector; `normalized` is derived from its sum.
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite);
        }
        if weights.iter().all(|w| *w == 0.0) {
            return Err(Error::NoDirection);
        }
        let normalized = (weights.sum() - 1.0).abs() <= BUDGET_TOL;
        Ok(Self {
            weights,
            normalized,
        })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// True iff the weights sum to one.
    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn into_weights(self) -> DVector<f64> {
        self.weights
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SharpeValue(f64);

impl SharpeValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Tangent portfolio for the full instance.
pub fn solve_tangent(moments: &MomentEstimate) -> Result<Portfolio> {
    let factor = cholesky(moments.sigma())?;
    tangent_with_factor(moments, &factor)
}

/// Tangent portfolio reusing an existing factor of `moments.sigma()`.
pub fn tangent_with_factor(moments: &MomentEstimate, factor: &CholeskyFactor) -> Result<Portfolio> {
    let direction = tangent_direction(moments.mu(), factor)?;
    let budget = direction.sum();
    if budget > 0.0 {
        let weights = direction / budget;
        Ok(Portfolio {
            weights,
            normalized: true,
        })
    } else {
        log::warn!("degenerate budget: 1ᵀΣ⁻¹μ = {budget:e}; keeping the unnormalized direction");
        Ok(Portfolio {
            weights: direction,
            normalized: false,
        })
    }
}

/// `Σ⁻¹μ`.
pub(crate) fn tangent_direction(
    mu: &DVector<f64>,
    factor: &CholeskyFactor,
) -> Result<DVector<f64>> {
    if mu.iter().all(|m| *m == 0.0) {
        return Err(Error::NoDirection);
    }
    solve_spd(factor, mu)
}

/// `μᵀw / √(wᵀΣw)`.
pub fn sharpe(weights: &DVector<f64>, moments: &MomentEstimate) -> Result<SharpeValue> {
    if weights.len() != moments.n() {
        return Err(Error::DimensionMismatch {
            expected: moments.n(),
            got: weights.len(),
        });
    }
    sharpe_raw(moments.mu(), moments.sigma(), weights).map(SharpeValue)
}

pub(crate) fn sharpe_raw(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    weights: &DVector<f64>,
) -> Result<f64> {
    let variance = weights.dot(&(sigma * weights));
    if !(variance > MIN_VARIANCE) {
        return Err(Error::DegenerateRisk { variance });
    }
    let value = mu.dot(weights) / variance.sqrt();
    if !value.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(value)
}

/// The largest attainable Sharpe ratio, `√(μᵀΣ⁻¹μ)`.
pub fn max_sharpe(moments: &MomentEstimate, factor: &CholeskyFactor) -> Result<f64> {
    let x = tangent_direction(moments.mu(), factor)?;
    Ok(moments.mu().dot(&x).max(0.0).sqrt())
}

/// Angle in radians between `Lᵀw` and `Lᵀreference`.
pub fn angle_to(
    weights: &DVector<f64>,
    reference: &DVector<f64>,
    factor: &CholeskyFactor,
) -> Result<f64> {
    let a = transform_by_lt(factor, weights)?;
    let b = transform_by_lt(factor, reference)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateAngle);
    }
    let cos = (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(cos.acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(mu: DVector<f64>, sigma: DMatrix<f64>) -> MomentEstimate {
        MomentEstimate::unnamed(mu, sigma).unwrap()
    }

    #[test]
    fn identity_covariance_tangent() {
        let m = instance(dvector![0.1, 0.2, 0.3], DMatrix::identity(3, 3));
        let p = solve_tangent(&m).unwrap();
        assert!(p.normalized());
        assert_relative_eq!(p.weights()[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(p.weights()[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(p.weights()[2], 0.5, epsilon = 1e-15);
        let sr = sharpe(p.weights(), &m).unwrap().value();
        assert_relative_eq!(sr, 0.14f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(sr, 0.374166, epsilon = 1e-6);
    }

    #[test]
    fn equal_mu_gives_equal_weights() {
        for n in [2, 5, 11] {
            let m = instance(DVector::from_element(n, 0.07), DMatrix::identity(n, n));
            let p = solve_tangent(&m).unwrap();
            for w in p.weights().iter() {
                assert_relative_eq!(*w, 1.0 / n as f64, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn two_by_two_tangent() {
        let m = instance(dvector![0.1, 0.2], dmatrix![4.0, 2.0; 2.0, 3.0]);
        let p = solve_tangent(&m).unwrap();
        // Σ⁻¹ = (1/8)[[3,−2],[−2,4]] so Σ⁻¹μ = (−0.0125, 0.075).
        assert_relative_eq!(p.weights()[0], -0.2, epsilon = 1e-14);
        assert_relative_eq!(p.weights()[1], 1.2, epsilon = 1e-14);
        let quad = 0.1 * -0.0125 + 0.2 * 0.075;
        let sr = sharpe(p.weights(), &m).unwrap().value();
        assert_relative_eq!(sr, f64::sqrt(quad), max_relative = 1e-12);
    }

    #[test]
    fn degenerate_budget_keeps_direction() {
        // Σ⁻¹μ sums to a negative number; the positive-scale direction is kept.
        let m = instance(dvector![0.1, -0.3], DMatrix::identity(2, 2));
        let p = solve_tangent(&m).unwrap();
        assert!(!p.normalized());
        assert_relative_eq!(p.weights()[0], 0.1);
        assert_relative_eq!(p.weights()[1], -0.3);
        let sr = sharpe(p.weights(), &m).unwrap().value();
        assert_relative_eq!(sr, 0.1f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn zero_mu_has_no_direction() {
        let m = instance(DVector::zeros(3), DMatrix::identity(3, 3));
        assert!(matches!(solve_tangent(&m), Err(Error::NoDirection)));
    }

    #[test]
    fn single_asset_sharpe() {
        let m = instance(dvector![0.3, 0.1], DMatrix::identity(2, 2));
        let sr = sharpe(&dvector![1.0, 0.0], &m).unwrap().value();
        assert_eq!(sr, 0.3);
    }

    #[test]
    fn zero_risk_is_error() {
        let m = instance(dvector![0.3, 0.1], DMatrix::identity(2, 2));
        assert!(matches!(
            sharpe(&dvector![0.0, 0.0], &m),
            Err(Error::DegenerateRisk { .. })
        ));
        assert!(matches!(
            sharpe(&dvector![1.0], &m),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tangent_beats_random_portfolios() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let sigma = &a * a.transpose() + DMatrix::identity(5, 5) * 0.1;
        let mu = DVector::from_fn(5, |_, _| rng.random_range(-0.1..0.3));
        let m = instance(mu, sigma);
        let best = sharpe(solve_tangent(&m).unwrap().weights(), &m)
            .unwrap()
            .value();
        for _ in 0..1000 {
            let w = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            assert!(best >= sharpe(&w, &m).unwrap().value() - 1e-9);
        }
    }

    #[test]
    fn angle_basics() {
        let f = CholeskyFactor::identity(2);
        assert_eq!(
            angle_to(&dvector![0.3, 0.7], &dvector![0.3, 0.7], &f).unwrap(),
            0.0
        );
        assert_relative_eq!(
            angle_to(&dvector![1.0, 0.0], &dvector![0.0, 1.0], &f).unwrap(),
            std::f64::consts::FRAC_PI_2
        );
        assert!(matches!(
            angle_to(&dvector![0.0, 0.0], &dvector![0.0, 1.0], &f),
            Err(Error::DegenerateAngle)
        ));
    }

    #[test]
    fn portfolio_constructor() {
        assert!(Portfolio::new(dvector![0.25, 0.75]).unwrap().normalized());
        assert!(!Portfolio::new(dvector![0.25, 0.5]).unwrap().normalized());
        assert!(matches!(
            Portfolio::new(dvector![0.0, 0.0]),
            Err(Error::NoDirection)
        ));
        assert!(matches!(
            Portfolio::new(dvector![f64::NAN, 1.0]),
            Err(Error::NonFinite)
        ));
    }
}
