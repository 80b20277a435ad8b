//! Exact computations on offspring generating functions.
//!
//! Everything here is finite arithmetic on dense polynomial coefficient
//! vectors of length `delta_max + 1`: percolation thinning, extinction
//! probabilities, the backbone/trap dual generating functions, factorial
//! moments, the effective speed of the walk and its near-critical
//! constant `kappa = m1^4 / (3 m2)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for probability vectors summing to one.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Residual tolerance for the extinction-probability fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("offspring mean {mean} is not supercritical (need mean > 1)")]
    NotSupercritical { mean: f64 },
    #[error("percolation parameter {p} must lie in {range}")]
    InvalidPercolation { p: f64, range: &'static str },
    #[error("backbone undefined at criticality: p = {p} <= p_c = {p_c}")]
    SubcriticalProfile { p: f64, p_c: f64 },
    #[error("derivative order {delta} out of range for degree-{degree} generating function")]
    DegreeOutOfRange { delta: usize, degree: usize },
    #[error("second factorial moment is zero; kappa undefined")]
    ZeroSecondMoment,
}

/// A finite-support offspring distribution, stored as the dense
/// coefficient vector of its probability generating function.
///
/// Index `k` holds `P(offspring = k)`; trailing zeros are trimmed so
/// `delta_max()` is the largest index with positive mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OffspringLaw {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for OffspringLaw {
    type Error = AnalyticsError;
    fn try_from(probs: Vec<f64>) -> Result<Self, AnalyticsError> {
        OffspringLaw::new(probs)
    }
}

impl From<OffspringLaw> for Vec<f64> {
    fn from(law: OffspringLaw) -> Vec<f64> {
        law.probs
    }
}

impl OffspringLaw {
    pub fn new(mut probs: Vec<f64>) -> Result<Self, AnalyticsError> {
        if probs.is_empty() {
            return Err(AnalyticsError::InvalidProbabilities("empty vector".into()));
        }
        let mut sum = KahanAcc::default();
        for (k, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(-1e-15..=1.0 + 1e-12).contains(&p) {
                return Err(AnalyticsError::InvalidProbabilities(format!(
                    "entry {k} = {p} outside [0, 1]"
                )));
            }
            sum.add(p);
        }
        if (sum.value() - 1.0).abs() > PROB_SUM_TOL {
            return Err(AnalyticsError::InvalidProbabilities(format!(
                "entries sum to {} (must be 1 within {PROB_SUM_TOL})",
                sum.value()
            )));
        }
        while probs.len() > 1 && *probs.last().unwrap() <= 0.0 {
            probs.pop();
        }
        for p in probs.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        Ok(Self { probs })
    }

    /// Point mass at `k` children.
    pub fn point_mass(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest number of children with positive probability.
    pub fn delta_max(&self) -> usize {
        self.probs.len() - 1
    }

    /// First moment `m1`.
    pub fn mean(&self) -> f64 {
        let mut acc = KahanAcc::default();
        for (k, &p) in self.probs.iter().enumerate() {
            acc.add(k as f64 * p);
        }
        acc.value()
    }

    pub fn is_supercritical(&self) -> bool {
        self.mean() > 1.0
    }

    /// `k`-th factorial moment `E[xi (xi-1) ... (xi-k+1)]`.
    pub fn factorial_moment(&self, order: usize) -> f64 {
        let mut acc = KahanAcc::default();
        for (k, &p) in self.probs.iter().enumerate() {
            if k >= order {
                let mut falling = 1.0;
                for i in 0..order {
                    falling *= (k - i) as f64;
                }
                acc.add(falling * p);
            }
        }
        acc.value()
    }

    /// Evaluate the generating function `f(s)`.
    pub fn pgf(&self, s: f64) -> f64 {
        // Horner evaluation.
        self.probs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    /// Coefficients of the `order`-th derivative of the generating function.
    pub fn derivative_coeffs(&self, order: usize) -> Vec<f64> {
        if order > self.delta_max() {
            return vec![0.0];
        }
        (order..self.probs.len())
            .map(|k| {
                let mut falling = 1.0;
                for i in 0..order {
                    falling *= (k - i) as f64;
                }
                self.probs[k] * falling
            })
            .collect()
    }

    /// Evaluate the `order`-th derivative of the generating function.
    pub fn pgf_derivative(&self, s: f64, order: usize) -> f64 {
        self.derivative_coeffs(order)
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * s + c)
    }
}

/// Law of the number of offspring that survive independent edge
/// percolation with retention probability `p`.
///
/// Conditioned on `k` children before thinning, the survivor count is
/// binomial with `k` trials; the result mixes those binomials. The
/// generating function satisfies `f_p(s) = f(1 - p + p s)`.
pub fn percolate(base: &OffspringLaw, p: f64) -> Result<OffspringLaw, AnalyticsError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(AnalyticsError::InvalidPercolation { p, range: "[0, 1]" });
    }
    let delta = base.delta_max();
    let mut out = vec![0.0; delta + 1];
    // Iteratively convolve a Bin(k, p) row; accumulate base.probs[k] * row.
    let mut row = vec![0.0; delta + 1];
    row[0] = 1.0;
    out[0] += base.probs[0] * row[0];
    for k in 1..=delta {
        for j in (1..=k).rev() {
            row[j] = row[j] * (1.0 - p) + row[j - 1] * p;
        }
        row[0] *= 1.0 - p;
        for j in 0..=k {
            out[j] += base.probs[k] * row[j];
        }
    }
    OffspringLaw::new(out)
}

/// Smallest fixed point of the generating function in `[0, 1]`.
///
/// Returns 1 for (sub)critical laws. For supercritical laws the root is
/// solved in the survival-mass variable `x = 1 - s`, where the trivial
/// fixed point at `s = 1` deflates away and the problem stays well
/// conditioned arbitrarily close to criticality. The result satisfies
/// `|f(q) - q| <= FIXED_POINT_TOL`.
pub fn extinction_probability(law: &OffspringLaw) -> f64 {
    1.0 - survival_probability(law)
}

/// `1 - q`: probability that the tree survives forever.
pub fn survival_probability(law: &OffspringLaw) -> f64 {
    if law.mean() <= 1.0 {
        return 0.0;
    }
    if law.probs[0] <= 0.0 {
        // No leaves: extinction impossible.
        return 1.0;
    }
    let x = solve_survival_mass(law);
    debug_assert!((law.pgf(1.0 - x) - (1.0 - x)).abs() <= FIXED_POINT_TOL);
    x
}

/// Root of `phi(x) = (f(1-x) - (1-x)) / x` on `(0, 1]`.
///
/// `phi(x) = -(m1 - 1) + sum_{j>=2} (-1)^j M_j x^{j-1} / j!` with `M_j`
/// the factorial moments, so the cancellation between `f(1-x)` and
/// `1-x` is carried out symbolically. Bisection brackets the root,
/// Newton polishes it.
fn solve_survival_mass(law: &OffspringLaw) -> f64 {
    let delta = law.delta_max();
    // Coefficients of phi: phi(x) = c0 + c1 x + ... + c_{delta-1} x^{delta-1},
    // c0 = -(m1 - 1), c_{j-1} = (-1)^j M_j / j!.
    let mut coeffs = vec![0.0; delta.max(1)];
    coeffs[0] = -(law.mean() - 1.0);
    let mut fact = 1.0;
    for j in 2..=delta {
        fact *= j as f64;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        coeffs[j - 1] = sign * law.factorial_moment(j) / fact;
    }
    let phi = |x: f64| coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c);
    let dphi = |x: f64| {
        coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (j, &c)| acc * x + j as f64 * c)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    debug_assert!(phi(lo) < 0.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..8 {
        let d = dphi(x);
        if d.abs() < 1e-300 {
            break;
        }
        let step = phi(x) / d;
        let next = x - step;
        if next > 0.0 && next <= 1.0 {
            x = next;
        } else {
            break;
        }
        if step.abs() < 1e-17 {
            break;
        }
    }
    x
}

/// The pair of dual generating-function laws of the survival
/// decomposition: the backbone law (no mass at zero) and the
/// subcritical trap-tree law.
#[derive(Debug, Clone)]
pub struct DualLaws {
    /// Offspring law of the leafless backbone tree.
    pub fhat: OffspringLaw,
    /// Offspring law of the almost-surely-finite trap trees.
    pub fstar: OffspringLaw,
}

/// Per-profile analytic bundle: the percolated law, extinction mass,
/// dual laws, trap-count laws, moments, speed and `kappa`.
#[derive(Debug, Clone)]
pub struct AnalyticProfile {
    pub base: OffspringLaw,
    pub p: f64,
    pub p_c: f64,
    pub percolated: OffspringLaw,
    /// Extinction probability `q` of the percolated tree.
    pub q: f64,
    /// `1 - q`, kept separately so near-critical quantities do not lose
    /// precision to the subtraction.
    pub survival: f64,
    /// Mean offspring of the percolated law, `p * m1 = p / p_c`.
    pub mu_p: f64,
    /// `f_p'(q)`: mean offspring of the trap trees.
    pub mu_star: f64,
    /// Factorial moments of the percolated law, index `k-1` holds `m_{p,k}`.
    pub factorial_moments: Vec<f64>,
    /// Effective speed of the walk.
    pub v: f64,
    /// `m1^4 / (3 m2)` of the unpercolated law.
    pub kappa: f64,
    duals: Option<DualLaws>,
    /// Trap-count laws indexed by backbone child count minus one.
    trap_laws: Vec<OffspringLaw>,
}

impl AnalyticProfile {
    pub fn new(base: OffspringLaw, p: f64) -> Result<Self, AnalyticsError> {
        let m1 = base.mean();
        if m1 <= 1.0 {
            return Err(AnalyticsError::NotSupercritical { mean: m1 });
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(AnalyticsError::InvalidPercolation { p, range: "(0, 1]" });
        }
        let p_c = 1.0 / m1;
        let percolated = percolate(&base, p)?;
        let supercritical = p > p_c;
        let survival = if supercritical {
            survival_probability(&percolated)
        } else {
            0.0
        };
        let q = 1.0 - survival;
        let mu_star = percolated.pgf_derivative(q, 1);
        let factorial_moments = (1..=percolated.delta_max())
            .map(|k| percolated.factorial_moment(k))
            .collect();
        let kappa = kappa(&base)?;
        let mut profile = Self {
            mu_p: p * m1,
            p,
            p_c,
            q,
            survival,
            mu_star,
            factorial_moments,
            v: 0.0,
            kappa,
            duals: None,
            trap_laws: Vec::new(),
            percolated,
            base,
        };
        if supercritical {
            profile.v = lpp_speed(&profile);
            profile.duals = Some(profile.compute_duals()?);
            profile.trap_laws = (1..=profile.percolated.delta_max())
                .map(|delta| trap_count_law(&profile, delta))
                .collect::<Result<_, _>>()?;
        }
        Ok(profile)
    }

    pub fn eps(&self) -> f64 {
        self.p - self.p_c
    }

    pub fn is_supercritical(&self) -> bool {
        self.p > self.p_c
    }

    /// Backbone and trap-tree laws. Fails below criticality.
    pub fn duals(&self) -> Result<&DualLaws, AnalyticsError> {
        self.duals
            .as_ref()
            .ok_or(AnalyticsError::SubcriticalProfile { p: self.p, p_c: self.p_c })
    }

    /// Law of the trap count at a backbone vertex with `delta` backbone
    /// children, precomputed at construction.
    pub fn trap_law(&self, delta: usize) -> Result<&OffspringLaw, AnalyticsError> {
        if delta == 0 || delta > self.trap_laws.len() {
            return Err(AnalyticsError::DegreeOutOfRange {
                delta,
                degree: self.percolated.delta_max(),
            });
        }
        Ok(&self.trap_laws[delta - 1])
    }

    fn compute_duals(&self) -> Result<DualLaws, AnalyticsError> {
        Ok(dual_generating_functions(self)?)
    }

    /// Flat JSON view with documented key names.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "base": self.base.probs(),
            "percolated": self.percolated.probs(),
            "p": self.p,
            "p_c": self.p_c,
            "eps": self.eps(),
            "q": self.q,
            "survival": self.survival,
            "mu_p": self.mu_p,
            "mu_star": self.mu_star,
            "factorial_moments": self.factorial_moments,
            "v": self.v,
            "kappa": self.kappa,
        })
    }
}

/// Dual generating functions of the survival decomposition:
/// `fhat(s) = (f_p((1-q)s + q) - q) / (1-q)` for the backbone and
/// `fstar(s) = f_p(q s) / q` for the traps, both returned as exact
/// coefficient vectors of degree at most `delta_max`.
///
/// At `q = 0` the decomposition degenerates: the backbone is the whole
/// tree and the trap law collapses to a point mass at zero.
pub fn dual_generating_functions(profile: &AnalyticProfile) -> Result<DualLaws, AnalyticsError> {
    if !profile.is_supercritical() {
        return Err(AnalyticsError::SubcriticalProfile {
            p: profile.p,
            p_c: profile.p_c,
        });
    }
    let c = profile.percolated.probs();
    let delta = profile.percolated.delta_max();
    let q = profile.q;
    let x = profile.survival;
    if q <= 0.0 {
        return Ok(DualLaws {
            fhat: profile.percolated.clone(),
            fstar: OffspringLaw::point_mass(0),
        });
    }
    let binom = pascal_rows(delta);
    // fhat_j = (1-q)^{j-1} sum_{k>=j} c_k C(k,j) q^{k-j}, fhat_0 = 0.
    let mut fhat = vec![0.0; delta + 1];
    for j in 1..=delta {
        let mut acc = KahanAcc::default();
        let mut qpow = 1.0;
        for k in j..=delta {
            acc.add(c[k] * binom[k][j] * qpow);
            qpow *= q;
        }
        fhat[j] = x.powi(j as i32 - 1) * acc.value();
    }
    // fstar_j = c_j q^{j-1}.
    let mut fstar = vec![0.0; delta + 1];
    let mut qpow = 1.0 / q;
    for j in 0..=delta {
        fstar[j] = c[j] * qpow;
        qpow *= q;
    }
    Ok(DualLaws {
        fhat: OffspringLaw::new(fhat)?,
        fstar: OffspringLaw::new(fstar)?,
    })
}

/// Law of the number of trap edges attached to a backbone vertex with
/// `delta` backbone children: `E[s^U] = f_p^{(delta)}(q s) / f_p^{(delta)}(q)`.
pub fn trap_count_law(
    profile: &AnalyticProfile,
    delta: usize,
) -> Result<OffspringLaw, AnalyticsError> {
    if !profile.is_supercritical() {
        return Err(AnalyticsError::SubcriticalProfile {
            p: profile.p,
            p_c: profile.p_c,
        });
    }
    let degree = profile.percolated.delta_max();
    if delta == 0 || delta > degree {
        return Err(AnalyticsError::DegreeOutOfRange { delta, degree });
    }
    let q = profile.q;
    if q <= 0.0 {
        return Ok(OffspringLaw::point_mass(0));
    }
    let deriv = profile.percolated.derivative_coeffs(delta);
    let mut weights = vec![0.0; deriv.len()];
    let mut qpow = 1.0;
    let mut total = KahanAcc::default();
    for (j, &d) in deriv.iter().enumerate() {
        weights[j] = d * qpow;
        total.add(weights[j]);
        qpow *= q;
    }
    let total = total.value();
    if total <= 0.0 {
        return Err(AnalyticsError::DegreeOutOfRange { delta, degree });
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    OffspringLaw::new(weights)
}

/// Effective speed of simple random walk on the survival-conditioned
/// percolated tree, from the explicit formula
/// `v = sum_k ((k-1)/(k+1)) p_k(p) (1 - q^{k+1}) / (1 - q^2)`.
///
/// Evaluated in the survival-mass variable `x = 1 - q`: substituting
/// the fixed-point identity for `m1 p - 1` turns the sum into
/// `v = sum_{j>=3} (-1)^{j-1} B_j x^{j-1} / (2 - x)` with
/// `B_j = A_j - m_{p,j}/j!` and `A_j = sum_k p_k (k-1) k! / (j! (k+1-j)!)`,
/// which is free of the cancellation that makes the direct sum lose all
/// precision as `p` approaches `p_c`. Returns 0 at or below criticality.
pub fn lpp_speed(profile: &AnalyticProfile) -> f64 {
    if !profile.is_supercritical() {
        return 0.0;
    }
    let c = profile.percolated.probs();
    let delta = profile.percolated.delta_max();
    let x = profile.survival;
    let binom = pascal_rows(delta + 1);
    let mut fact = 2.0; // j!
    let mut num = KahanAcc::default();
    let mut xpow = x; // x^{j-2} * x = x^{j-1} built up from j=3
    for j in 3..=delta + 1 {
        fact *= j as f64;
        // A_j = sum_k c_k (k-1)/(k+1) C(k+1, j)
        let mut a = KahanAcc::default();
        for k in (j - 1)..=delta {
            a.add(c[k] * (k as f64 - 1.0) / (k as f64 + 1.0) * binom[k + 1][j]);
        }
        let m_pj = if j <= delta {
            profile.percolated.factorial_moment(j)
        } else {
            0.0
        };
        let b = a.value() - m_pj / fact;
        xpow *= x;
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        num.add(sign * b * xpow);
    }
    let v = num.value() / (2.0 - x);
    v.max(0.0)
}

/// `kappa = m1^4 / (3 m2)` of the unpercolated offspring law.
pub fn kappa(law: &OffspringLaw) -> Result<f64, AnalyticsError> {
    let m1 = law.mean();
    if m1 <= 1.0 {
        return Err(AnalyticsError::NotSupercritical { mean: m1 });
    }
    let m2 = law.factorial_moment(2);
    if m2 <= 0.0 {
        return Err(AnalyticsError::ZeroSecondMoment);
    }
    Ok(m1.powi(4) / (3.0 * m2))
}

/// One row of the near-critical asymptotics report.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticRow {
    pub p: f64,
    pub eps: f64,
    pub q: f64,
    /// `(1 - q) / ((2 m1^3 / m2) eps)`.
    pub one_minus_q_ratio: f64,
    /// `(1 - mu_star) / (m1 eps)`.
    pub mu_star_ratio: f64,
    /// `fhat''(0) / (2 m1 eps)`.
    pub fhat2_ratio: f64,
    pub v: f64,
    pub v_over_eps2: f64,
    pub kappa: f64,
}

/// Exact values against their leading-order predictions on a grid of
/// percolation parameters; every ratio tends to 1 as `p` drops to `p_c`.
pub fn asymptotic_report(
    base: &OffspringLaw,
    p_grid: &[f64],
) -> Result<Vec<AsymptoticRow>, AnalyticsError> {
    let m1 = base.mean();
    let m2 = base.factorial_moment(2);
    p_grid
        .iter()
        .map(|&p| {
            let profile = AnalyticProfile::new(base.clone(), p)?;
            if !profile.is_supercritical() {
                return Err(AnalyticsError::SubcriticalProfile { p, p_c: profile.p_c });
            }
            let eps = profile.eps();
            let fhat2_at_0 = profile.survival * profile.percolated.pgf_derivative(profile.q, 2);
            Ok(AsymptoticRow {
                p,
                eps,
                q: profile.q,
                one_minus_q_ratio: profile.survival / (2.0 * m1.powi(3) / m2 * eps),
                mu_star_ratio: (1.0 - profile.mu_star) / (m1 * eps),
                fhat2_ratio: fhat2_at_0 / (2.0 * m1 * eps),
                v: profile.v,
                v_over_eps2: profile.v / (eps * eps),
                kappa: profile.kappa,
            })
        })
        .collect()
}

fn pascal_rows(n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut row = vec![0.0; k + 1];
        row[0] = 1.0;
        row[k] = 1.0;
        for j in 1..k {
            row[j] = rows[k - 1][j - 1] + rows[k - 1][j];
        }
        rows.push(row);
    }
    rows
}

#[derive(Debug, Default, Clone, Copy)]
struct KahanAcc {
    sum: f64,
    c: f64,
}

impl KahanAcc {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn binary() -> OffspringLaw {
        OffspringLaw::point_mass(2)
    }

    pub fn mix13() -> OffspringLaw {
        OffspringLaw::new(vec![0.0, 0.5, 0.0, 0.5]).unwrap()
    }

    fn bin3() -> OffspringLaw {
        // Bin(3, 2/3)
        let p = 2.0 / 3.0;
        let q = 1.0 - p;
        OffspringLaw::new(vec![q * q * q, 3.0 * p * q * q, 3.0 * p * p * q, p * p * p]).unwrap()
    }

    /// Direct evaluation of the speed formula; the implementation uses
    /// the rearranged sum, so this is an independent route.
    fn lpp_speed_direct(profile: &AnalyticProfile) -> f64 {
        let q = profile.q;
        let denom = 1.0 - q * q;
        profile
            .percolated
            .probs()
            .iter()
            .enumerate()
            .map(|(k, &pk)| {
                (k as f64 - 1.0) / (k as f64 + 1.0) * pk * (1.0 - q.powi(k as i32 + 1)) / denom
            })
            .sum()
    }

    #[test]
    fn law_validation() {
        assert!(OffspringLaw::new(vec![]).is_err());
        assert!(OffspringLaw::new(vec![0.5, 0.6]).is_err());
        assert!(OffspringLaw::new(vec![1.1, -0.1]).is_err());
        let law = OffspringLaw::new(vec![0.25, 0.5, 0.25, 0.0, 0.0]).unwrap();
        assert_eq!(law.delta_max(), 2);
        assert!((law.mean() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn percolate_identity_and_zero() {
        let base = binary();
        let same = percolate(&base, 1.0).unwrap();
        assert_eq!(same.probs(), base.probs());
        let dead = percolate(&base, 0.0).unwrap();
        assert_eq!(dead.probs(), &[1.0]);
    }

    #[test]
    fn percolate_binary_hand_values() {
        let law = percolate(&binary(), 0.6).unwrap();
        let expect = [0.16, 0.48, 0.36];
        for (a, b) in law.probs().iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert!((law.mean() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn percolate_mixture_hand_values() {
        let law = percolate(&mix13(), 0.5).unwrap();
        let expect = [0.3125, 0.4375, 0.1875, 0.0625];
        for (a, b) in law.probs().iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn extinction_probability_cases() {
        let thinned = percolate(&binary(), 0.6).unwrap();
        let q = extinction_probability(&thinned);
        assert!((q - 4.0 / 9.0).abs() < 1e-13, "q = {q}");
        assert!((thinned.pgf(q) - q).abs() <= FIXED_POINT_TOL);

        let critical = percolate(&binary(), 0.5).unwrap();
        assert_eq!(extinction_probability(&critical), 1.0);
        let sub = percolate(&binary(), 0.3).unwrap();
        assert_eq!(extinction_probability(&sub), 1.0);

        assert_eq!(extinction_probability(&binary()), 0.0);
    }

    #[test]
    fn extinction_near_critical_is_accurate() {
        // Closed form for the binary base: q = ((1-p)/p)^2, so
        // 1 - q = (2p - 1) / p^2, which evaluates without cancellation.
        for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
            let p = 0.5 + eps;
            let thinned = percolate(&binary(), p).unwrap();
            let x = survival_probability(&thinned);
            let x_exact = (2.0 * p - 1.0) / (p * p);
            assert!(
                ((x - x_exact) / x_exact).abs() < 1e-10,
                "eps={eps}: {x} vs {x_exact}"
            );
        }
    }

    #[test]
    fn profile_invariants_binary() {
        let profile = AnalyticProfile::new(binary(), 0.6).unwrap();
        assert!((profile.mu_p - profile.p / profile.p_c).abs() < 1e-15);
        assert!((profile.mu_star - 0.8).abs() < 1e-12);
        assert!((profile.q - 4.0 / 9.0).abs() < 1e-13);
        // m_{p,k} = p^k m_k
        for (k, &mpk) in profile.factorial_moments.iter().enumerate() {
            let expect = profile.p.powi(k as i32 + 1) * profile.base.factorial_moment(k + 1);
            assert!((mpk - expect).abs() <= 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn duals_binary_hand_values() {
        let profile = AnalyticProfile::new(binary(), 0.6).unwrap();
        let duals = profile.duals().unwrap();
        // fhat = (0, 0.8, 0.2), fstar = (0.36, 0.48, 0.16)
        assert_eq!(duals.fhat.probs()[0], 0.0);
        assert!((duals.fhat.probs()[1] - 0.8).abs() < 1e-12);
        assert!((duals.fhat.probs()[2] - 0.2).abs() < 1e-12);
        for (a, b) in duals.fstar.probs().iter().zip([0.36, 0.48, 0.16]) {
            assert!((a - b).abs() < 1e-12);
        }
        // fhat'(1) = mu_p exactly.
        assert!((duals.fhat.mean() - profile.mu_p).abs() < 1e-12);
        // fhat'(0) = f_p'(q).
        assert!((duals.fhat.probs()[1] - profile.mu_star).abs() < 1e-12);
        assert!((duals.fstar.pgf(1.0) - 1.0).abs() < 1e-12);
        // fstar mean is mu_star.
        assert!((duals.fstar.mean() - profile.mu_star).abs() < 1e-12);
    }

    #[test]
    fn duals_degenerate_at_p_one() {
        let profile = AnalyticProfile::new(binary(), 1.0).unwrap();
        let duals = profile.duals().unwrap();
        assert_eq!(duals.fhat.probs(), profile.percolated.probs());
        assert_eq!(duals.fstar.probs(), &[1.0]);
    }

    #[test]
    fn duals_require_supercritical() {
        assert!(matches!(
            AnalyticProfile::new(binary(), 0.5).unwrap().duals(),
            Err(AnalyticsError::SubcriticalProfile { .. })
        ));
    }

    #[test]
    fn trap_count_law_binary() {
        let profile = AnalyticProfile::new(binary(), 0.6).unwrap();
        let u1 = profile.trap_law(1).unwrap();
        assert!((u1.probs()[1] - 0.4).abs() < 1e-12, "{:?}", u1.probs());
        assert!((u1.probs()[0] - 0.6).abs() < 1e-12);
        let u2 = profile.trap_law(2).unwrap();
        assert_eq!(u2.probs(), &[1.0]);
        assert!(profile.trap_law(3).is_err());
        assert!(profile.trap_law(0).is_err());

        let at_one = AnalyticProfile::new(binary(), 1.0).unwrap();
        assert_eq!(at_one.trap_law(1).unwrap().probs(), &[1.0]);
    }

    #[test]
    fn speed_exact_values() {
        let v1 = AnalyticProfile::new(binary(), 1.0).unwrap().v;
        assert!((v1 - 1.0 / 3.0).abs() < 1e-15, "{v1}");
        let v06 = AnalyticProfile::new(binary(), 0.6).unwrap().v;
        assert!(((v06 - 1.0 / 39.0) / (1.0 / 39.0)).abs() < 1e-12, "{v06}");
        // p = 0.51: exact rational evaluation gives 2/7503.
        let v051 = AnalyticProfile::new(binary(), 0.51).unwrap().v;
        assert!(((v051 - 2.0 / 7503.0) / (2.0 / 7503.0)).abs() < 1e-10, "{v051}");
    }

    #[test]
    fn speed_matches_direct_sum_away_from_criticality() {
        for base in [binary(), mix13(), bin3()] {
            for p in [0.55, 0.6, 0.7, 0.85, 1.0] {
                let profile = AnalyticProfile::new(base.clone(), p).unwrap();
                let direct = lpp_speed_direct(&profile);
                assert!(
                    ((profile.v - direct) / direct).abs() < 1e-11,
                    "p={p}: {} vs {direct}",
                    profile.v
                );
            }
        }
    }

    #[test]
    fn speed_boundary_values() {
        assert_eq!(AnalyticProfile::new(binary(), 0.5).unwrap().v, 0.0);
        assert_eq!(AnalyticProfile::new(binary(), 0.4).unwrap().v, 0.0);
        for p in [0.501, 0.6, 0.9, 1.0] {
            let v = AnalyticProfile::new(binary(), p).unwrap().v;
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn speed_monotone_down_towards_criticality() {
        let mut last = f64::INFINITY;
        for p in [0.9, 0.8, 0.7, 0.6, 0.55, 0.52, 0.51] {
            let v = AnalyticProfile::new(binary(), p).unwrap().v;
            assert!(v < last, "v({p}) = {v} not below {last}");
            last = v;
        }
    }

    #[test]
    fn kappa_values() {
        assert!((kappa(&binary()).unwrap() - 8.0 / 3.0).abs() < 1e-14);
        assert!((kappa(&bin3()).unwrap() - 2.0).abs() < 1e-13);
        assert!((kappa(&mix13()).unwrap() - 16.0 / 9.0).abs() < 1e-14);
        assert!(kappa(&OffspringLaw::point_mass(1)).is_err());
    }

    #[test]
    fn kappa_cauchy_convergence() {
        // v(p_c + 10^-k) / 10^-2k approaches kappa with shrinking steps.
        let kappa = kappa(&binary()).unwrap();
        let mut ratios = Vec::new();
        for k in 1..=6 {
            let eps = 10f64.powi(-k);
            let profile = AnalyticProfile::new(binary(), 0.5 + eps).unwrap();
            ratios.push(profile.v / (eps * eps) / kappa);
        }
        for w in ratios.windows(2) {
            assert!((w[1] - 1.0).abs() < (w[0] - 1.0).abs());
        }
        let last = ratios.last().unwrap();
        assert!((last - 1.0).abs() < 1e-3, "final ratio {last}");
    }

    #[test]
    fn asymptotic_report_binary() {
        let rows = asymptotic_report(&binary(), &[0.51, 0.6]).unwrap();
        // (1-q)/(8 eps) at p = 0.51 is about 0.961.
        assert!((rows[0].one_minus_q_ratio - 0.9612).abs() < 1e-3);
        // Binary case is exact at first order for mu_star and fhat''(0).
        assert!((rows[1].mu_star_ratio - 1.0).abs() < 1e-12);
        assert!((rows[1].fhat2_ratio - 1.0).abs() < 1e-12);
        // v / (kappa eps^2) = 1/(2 p^2 (1+q)) for the binary base.
        let expect = 1.0 / (2.0 * 0.51f64.powi(2) * (1.0 + rows[0].q));
        assert!((rows[0].v_over_eps2 / rows[0].kappa - expect).abs() < 1e-9);
        assert!(asymptotic_report(&binary(), &[]).unwrap().is_empty());
        assert!(asymptotic_report(&binary(), &[0.5]).is_err());
    }

    #[test]
    fn fhat_fstar_are_probability_vectors() {
        for p in [0.51, 0.55, 0.6, 0.75, 0.95] {
            for base in [binary(), mix13(), bin3()] {
                let profile = AnalyticProfile::new(base, p).unwrap();
                let duals = profile.duals().unwrap();
                for law in [&duals.fhat, &duals.fstar] {
                    let sum: f64 = law.probs().iter().sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                    assert!(law.probs().iter().all(|&c| c >= 0.0));
                }
                assert_eq!(duals.fhat.probs()[0], 0.0);
                assert!((duals.fhat.mean() - profile.mu_p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn serde_round_trip() {
        let law = OffspringLaw::new(vec![0.25, 0.5, 0.25]).unwrap();
        let json = serde_json::to_string(&law).unwrap();
        assert_eq!(json, "[0.25,0.5,0.25]");
        let back: OffspringLaw = serde_json::from_str(&json).unwrap();
        assert_eq!(back, law);
        assert!(serde_json::from_str::<OffspringLaw>("[0.5,0.6]").is_err());
    }
}
