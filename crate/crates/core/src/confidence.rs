//! Chi-square thresholds, registration scores and the confidence ladder.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::SimilarityTransform;
use crate::mesh::OrientedPoint;
use crate::noise::{tangent_frame, KentNoise, Mahalanobis, PositionNoise};
use crate::special::{gamma_p, ln_gamma, normal_quantile};

/// Default ladder of probabilities, from most to least confident.
pub const DEFAULT_LADDER: [f64; 4] = [0.95, 0.9975, 0.9999, 0.999999];

/// Chi-square CDF with `k` degrees of freedom.
pub fn chi2_cdf(x: f64, k: usize) -> f64 {
    gamma_p(k as f64 / 2.0, x / 2.0)
}

fn chi2_ln_pdf(x: f64, k: usize) -> f64 {
    let h = k as f64 / 2.0;
    (h - 1.0) * x.ln() - x / 2.0 - h * std::f64::consts::LN_2 - ln_gamma(h)
}

/// Inverse chi-square CDF: the `x` with `CDF_k(x) = p`.
///
/// Safeguarded Newton iteration inside a shrinking bracket, seeded with the
/// Wilson–Hilferty approximation.
pub fn chi2_inv(p: f64, k: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    if k == 0 {
        return Err(invalid("chi-square needs at least one degree of freedom"));
    }
    let kf = k as f64;
    let z = normal_quantile(p);
    let c = 2.0 / (9.0 * kf);
    let v = 1.0 - c + z * c.sqrt();
    let mut x = if v > 0.0 { kf * v * v * v } else { kf * p };

    let mut lo = 0.0f64;
    let mut hi = (kf + 10.0 * (2.0 * kf).sqrt()).max(x * 2.0).max(10.0);
    while chi2_cdf(hi, k) < p {
        lo = hi;
        hi *= 2.0;
    }
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..300 {
        let f = chi2_cdf(x, k) - p;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = f / chi2_ln_pdf(x, k).exp();
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-14 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Graded success classification, best first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceTier {
    VeryConfident,
    Confident,
    SomewhatConfident,
    LowConfidence,
    NoConfidence,
}

impl ConfidenceTier {
    pub const ALL: [ConfidenceTier; 5] = [
        ConfidenceTier::VeryConfident,
        ConfidenceTier::Confident,
        ConfidenceTier::SomewhatConfident,
        ConfidenceTier::LowConfidence,
        ConfidenceTier::NoConfidence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfidenceTier::VeryConfident => "very_confident",
            ConfidenceTier::Confident => "confident",
            ConfidenceTier::SomewhatConfident => "somewhat_confident",
            ConfidenceTier::LowConfidence => "low_confidence",
            ConfidenceTier::NoConfidence => "no_confidence",
        }
    }

    /// Position on the ladder; `NoConfidence` is 4.
    pub fn rank(self) -> usize {
        self as usize
    }

    pub fn from_rank(rank: usize) -> Self {
        Self::ALL[rank.min(4)]
    }
}

impl fmt::Display for ConfidenceTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfidenceTier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown confidence tier '{s}'")))
    }
}

/// Four increasing probabilities, one per success tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ConfidenceLadder([f64; 4]);

impl Default for ConfidenceLadder {
    fn default() -> Self {
        Self(DEFAULT_LADDER)
    }
}

impl ConfidenceLadder {
    pub fn new(levels: &[f64]) -> Result<Self> {
        let levels: [f64; 4] = levels
            .try_into()
            .map_err(|_| invalid(format!("confidence ladder needs 4 levels, got {}", levels.len())))?;
        if levels.iter().any(|p| !(*p > 0.0 && *p < 1.0)) || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!("ladder levels must increase inside (0, 1): {levels:?}")));
        }
        Ok(Self(levels))
    }

    pub fn levels(&self) -> &[f64; 4] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ConfidenceLadder {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(&v)
    }
}

impl From<ConfidenceLadder> for Vec<f64> {
    fn from(l: ConfidenceLadder) -> Self {
        l.0.to_vec()
    }
}

impl FromStr for ConfidenceLadder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let v = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| invalid(format!("bad probability '{p}'"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(&v)
    }
}

/// Tier plus the first ladder probability at which both tests pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub tier: ConfidenceTier,
    pub passing_p: Option<f64>,
}

/// Thresholds of both tests at one probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub p: f64,
    pub position: f64,
    pub orientation: f64,
}

pub fn thresholds(ladder: &ConfidenceLadder, n_data: usize) -> Result<Vec<Thresholds>> {
    ladder
        .levels()
        .iter()
        .map(|&p| {
            Ok(Thresholds {
                p,
                position: chi2_inv(p, 3 * n_data)?,
                orientation: chi2_inv(p, 2 * n_data)?,
            })
        })
        .collect()
}

/// Smallest ladder probability at which `E_p < chi2inv(p, 3n)` and
/// `E_o < chi2inv(p, 2n)` both hold decides the tier.
pub fn classify(e_p: f64, e_o: f64, n_data: usize, ladder: &ConfidenceLadder) -> Confidence {
    let none = Confidence {
        tier: ConfidenceTier::NoConfidence,
        passing_p: None,
    };
    if n_data == 0 || !e_p.is_finite() || !e_o.is_finite() {
        return none;
    }
    for (rank, &p) in ladder.levels().iter().enumerate() {
        let pass_p = chi2_inv(p, 3 * n_data).map(|t| e_p < t).unwrap_or(false);
        let pass_o = chi2_inv(p, 2 * n_data).map(|t| e_o < t).unwrap_or(false);
        if pass_p && pass_o {
            return Confidence {
                tier: ConfidenceTier::from_rank(rank),
                passing_p: Some(p),
            };
        }
    }
    none
}

/// Sum of squared Mahalanobis residuals `y_p - a R x_p - t` over matched pairs.
pub fn position_score(
    data: &[OrientedPoint],
    matched: &[OrientedPoint],
    transform: &SimilarityTransform,
    noise: &PositionNoise,
) -> Result<f64> {
    if data.is_empty() || data.len() != matched.len() {
        return Err(invalid("position score needs equally many (>= 1) data and matched points"));
    }
    let metric = Mahalanobis::new(&noise.combined(&transform.rotation))?;
    Ok(data
        .iter()
        .zip(matched)
        .map(|(x, y)| metric.sq(&(y.position - transform.apply_point(&x.position))))
        .sum())
}

/// Per-point angular error vector `[acos(y.Rx), asin(g1.R^T y), asin(g2.R^T y)]`.
pub fn orientation_angles(x: &OrientedPoint, y: &OrientedPoint, transform: &SimilarityTransform) -> Result<[f64; 3]> {
    let (g1, g2) = tangent_frame(&x.normal)?;
    let u = transform.rotation.transpose() * y.normal;
    Ok([
        x.normal.dot(&u).clamp(-1.0, 1.0).acos(),
        g1.dot(&u).clamp(-1.0, 1.0).asin(),
        g2.dot(&u).clamp(-1.0, 1.0).asin(),
    ])
}

/// Sum over pairs of `v^T diag(kappa, kappa - 2 beta, kappa + 2 beta) v`.
pub fn orientation_score(
    data: &[OrientedPoint],
    matched: &[OrientedPoint],
    transform: &SimilarityTransform,
    kent: &KentNoise,
) -> Result<f64> {
    if data.is_empty() || data.len() != matched.len() {
        return Err(invalid("orientation score needs equally many (>= 1) data and matched points"));
    }
    let w = [kent.kappa, kent.kappa - 2.0 * kent.beta, kent.kappa + 2.0 * kent.beta];
    if w[1] < 0.0 {
        return Err(invalid("orientation score needs kappa - 2 beta >= 0"));
    }
    let mut total = 0.0;
    for (x, y) in data.iter().zip(matched) {
        let v = orientation_angles(x, y, transform)?;
        total += w[0] * v[0] * v[0] + w[1] * v[1] * v[1] + w[2] * v[2] * v[2];
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{exp_so3, Vec3};
    use crate::noise::sample_noise;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn chi2_reference_values() {
        assert_relative_eq!(chi2_inv(0.95, 3).unwrap(), 7.814728, epsilon = 1e-6);
        assert_relative_eq!(chi2_inv(0.95, 2).unwrap(), -2.0 * 0.05f64.ln(), epsilon = 1e-9);
        assert_relative_eq!(chi2_inv(0.95, 2).unwrap(), 5.991465, epsilon = 1e-6);
        assert!(chi2_inv(1e-12, 3).unwrap() < 1e-6);
        assert!(chi2_inv(0.0, 3).is_err());
        assert!(chi2_inv(1.0, 3).is_err());
        assert!(chi2_inv(0.5, 0).is_err());
    }

    #[test]
    fn chi2_large_dof_round_trip() {
        for &k in &[1000usize, 4500, 9000] {
            for &p in &DEFAULT_LADDER {
                let x = chi2_inv(p, k).unwrap();
                assert!((chi2_cdf(x, k) - p).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn chi2_monotone() {
        let mut prev = 0.0;
        for i in 1..50 {
            let x = chi2_inv(i as f64 / 50.0, 7).unwrap();
            assert!(x > prev);
            prev = x;
        }
        let mut prev = 0.0;
        for k in 1..60 {
            let x = chi2_inv(0.9, k).unwrap();
            assert!(x > prev);
            prev = x;
        }
    }

    #[test]
    fn tier_strings_round_trip() {
        for t in ConfidenceTier::ALL {
            assert_eq!(t.as_str().parse::<ConfidenceTier>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.as_str()));
        }
    }

    #[test]
    fn ladder_parsing() {
        let l: ConfidenceLadder = "0.95,0.9975,0.9999,0.999999".parse().unwrap();
        assert_eq!(l, ConfidenceLadder::default());
        assert!("0.9,0.8,0.95,0.99".parse::<ConfidenceLadder>().is_err());
        assert!("0.9,0.95".parse::<ConfidenceLadder>().is_err());
    }

    #[test]
    fn classify_examples() {
        let ladder = ConfidenceLadder::default();
        let n = 100;
        let c = classify(0.0, 0.0, n, &ladder);
        assert_eq!(c.tier, ConfidenceTier::VeryConfident);
        assert_eq!(c.passing_p, Some(0.95));

        let lo = chi2_inv(0.9975, 2 * n).unwrap();
        let hi = chi2_inv(0.9999, 2 * n).unwrap();
        let c = classify(0.0, 0.5 * (lo + hi), n, &ladder);
        assert_eq!(c.tier, ConfidenceTier::SomewhatConfident);

        let gate = chi2_inv(0.999999, 3 * n).unwrap();
        assert_eq!(classify(gate * 1.01, 0.0, n, &ladder).tier, ConfidenceTier::NoConfidence);
    }

    #[test]
    fn classify_is_monotone() {
        let ladder = ConfidenceLadder::default();
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let ep = rng.random_range(100.0..250.0);
            let eo = rng.random_range(60.0..180.0);
            let base = classify(ep, eo, n, &ladder).tier;
            let f = rng.random_range(0.5..1.0);
            assert!(classify(ep * f, eo, n, &ladder).tier <= base);
            assert!(classify(ep, eo * f, n, &ladder).tier <= base);
        }
    }

    fn frame_pairs(rng: &mut ChaCha8Rng, n: usize) -> (Vec<OrientedPoint>, SimilarityTransform) {
        let t = SimilarityTransform::new(1.01, exp_so3(&Vec3::new(0.05, -0.02, 0.1)), Vec3::new(1.0, 2.0, 0.5));
        let data = (0..n)
            .map(|_| {
                OrientedPoint::new(
                    Vec3::from_fn(|_, _| rng.random_range(-10.0..10.0)),
                    Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                )
                .unwrap()
            })
            .collect();
        (data, t)
    }

    #[test]
    fn perfect_registration_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (data, t) = frame_pairs(&mut rng, 20);
        let matched: Vec<_> = data.iter().map(|x| x.transformed(&t)).collect();
        let pos = PositionNoise::from_sds([1.0, 1.0, 2.0]);
        let kent = KentNoise::from_sd(30.0, 0.5).unwrap();
        assert!(position_score(&data, &matched, &t, &pos).unwrap() < 1e-20);
        assert!(orientation_score(&data, &matched, &t, &kent).unwrap() < 1e-12);
    }

    #[test]
    fn position_score_expectation() {
        // Residuals drawn from the assumed model: E_p ~ chi2(3n), mean 3n.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pos = PositionNoise::from_sds([1.0, 1.0, 2.0]);
        let l = pos.sqrt_factor().unwrap();
        let n = 30;
        let reps = 2000;
        let mut mean = 0.0;
        for _ in 0..reps {
            let (data, t) = frame_pairs(&mut rng, n);
            let matched: Vec<_> = data
                .iter()
                .map(|x| {
                    let z = Vec3::from_fn(|_, _| rng.sample(StandardNormal));
                    let mut y = x.transformed(&t);
                    y.position += t.rotation * l * z;
                    y
                })
                .collect();
            mean += position_score(&data, &matched, &t, &pos).unwrap() / reps as f64;
        }
        assert!((mean / (3 * n) as f64 - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn gross_residual_fails_position_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (data, t) = frame_pairs(&mut rng, 10);
        let pos = PositionNoise::from_sds([1.0, 1.0, 1.0]);
        let mut matched: Vec<_> = data.iter().map(|x| x.transformed(&t)).collect();
        for y in matched.iter_mut() {
            y.position += Vec3::new(0.5, -0.3, 0.2);
        }
        matched[3].position += Vec3::new(10.0, 0.0, 0.0);
        let ep = position_score(&data, &matched, &t, &pos).unwrap();
        assert!(ep > chi2_inv(0.95, 30).unwrap());
    }

    #[test]
    fn orientation_score_single_pair() {
        let kent = KentNoise::from_sd(20.0, 0.5).unwrap();
        let x = OrientedPoint::new(Vec3::zeros(), Vec3::z()).unwrap();
        let (g1, _) = tangent_frame(&x.normal).unwrap();
        let theta = 0.2f64;
        let y = OrientedPoint::new(Vec3::zeros(), x.normal * theta.cos() + g1 * theta.sin()).unwrap();
        let eo = orientation_score(&[x], &[y], &SimilarityTransform::identity(), &kent).unwrap();
        let expected = kent.kappa * theta * theta + (kent.kappa - 2.0 * kent.beta) * theta.sin().asin().powi(2);
        assert_relative_eq!(eo, expected, epsilon = 1e-12);
    }

    #[test]
    fn orientation_score_monte_carlo_mean() {
        // With tangent-plane Gaussian errors the three angle terms contribute
        // kappa (1/(k-2b) + 1/(k+2b)), 1 and 1 per point in expectation.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kent = KentNoise::from_sd(3.0, 0.5).unwrap();
        let zero = PositionNoise::from_sds([0.0; 3]);
        let n = 200_000;
        let data: Vec<_> = (0..n)
            .map(|_| OrientedPoint::new(Vec3::zeros(), Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0))).unwrap())
            .collect();
        let matched: Vec<_> = data.iter().map(|x| sample_noise(&mut rng, &zero, &kent, x).unwrap()).collect();
        let eo = orientation_score(&data, &matched, &SimilarityTransform::identity(), &kent).unwrap();
        let per_point = 2.0 + kent.kappa * (1.0 / (kent.kappa - 2.0 * kent.beta) + 1.0 / (kent.kappa + 2.0 * kent.beta));
        assert!((eo / n as f64 / per_point - 1.0).abs() < 0.01, "{}", eo / n as f64);
    }

    #[test]
    fn scores_invariant_under_common_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (data, t) = frame_pairs(&mut rng, 25);
        let pos = PositionNoise::from_sds([0.8, 0.8, 0.8]);
        let kent = KentNoise::from_sd(25.0, 0.0).unwrap();
        let matched: Vec<_> = data
            .iter()
            .map(|x| {
                let mut y = x.transformed(&t);
                y.position += Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                y.normal = (y.normal + Vec3::from_fn(|_, _| rng.random_range(-0.2..0.2))).normalize();
                y
            })
            .collect();
        let q = SimilarityTransform::new(1.0, exp_so3(&Vec3::new(0.4, -1.1, 0.3)), Vec3::new(5.0, -3.0, 2.0));
        let data_q: Vec<_> = data.iter().map(|x| x.transformed(&q)).collect();
        let matched_q: Vec<_> = matched.iter().map(|y| y.transformed(&q)).collect();
        let t_q = q.compose(&t).compose(&q.inverse());
        let ep = position_score(&data, &matched, &t, &pos).unwrap();
        let ep_q = position_score(&data_q, &matched_q, &t_q, &pos).unwrap();
        assert_relative_eq!(ep, ep_q, max_relative = 1e-8);
        // Kent frames are built from global axes, so E_o is only invariant
        // under motions that leave the data normals fixed (translations).
        let shift = SimilarityTransform::new(1.0, crate::geometry::Mat3::identity(), Vec3::new(5.0, -3.0, 2.0));
        let data_s: Vec<_> = data.iter().map(|x| x.transformed(&shift)).collect();
        let matched_s: Vec<_> = matched.iter().map(|y| y.transformed(&shift)).collect();
        let t_s = shift.compose(&t).compose(&shift.inverse());
        let eo = orientation_score(&data, &matched, &t, &kent).unwrap();
        let eo_s = orientation_score(&data_s, &matched_s, &t_s, &kent).unwrap();
        assert_relative_eq!(eo, eo_s, max_relative = 1e-8);
    }
}
