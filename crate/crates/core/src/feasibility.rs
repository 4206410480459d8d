//! How much of a target's audible disk stays usable for ranging when other
//! targets transmit concurrently, and the probability that at least three
//! receivers fall in it.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::geometry::{
    blind_region_contains, estimate_disk_region, sample_in_disk, AcousticParams, AreaEstimate,
    Point2D,
};

/// Default probability of seeing at least three receivers used to derive the
/// scheduler's separation distance.
pub const DEFAULT_TARGET_PROB: f64 = 0.99;

/// Resolution of [`solve_separation_distance`], meters.
pub const SEPARATION_RESOLUTION: f64 = 1e-3;

/// Poisson receiver field and minimum pairwise target separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeploymentModel {
    /// Expected receivers per square meter.
    pub receiver_density: f64,
    /// Minimum pairwise distance between concurrent targets, meters.
    pub min_separation: f64,
}

impl DeploymentModel {
    pub fn new(receiver_density: f64, min_separation: f64) -> Result<Self> {
        ensure_finite(receiver_density, "receiver density")?;
        ensure_finite(min_separation, "minimum separation")?;
        if receiver_density <= 0.0 || min_separation <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "density and separation must be positive, got {receiver_density} and {min_separation}"
            )));
        }
        Ok(Self {
            receiver_density,
            min_separation,
        })
    }
}

/// Disk of radius `d/2` around a target: no concurrent target at distance
/// `>= d` can mask it there.
pub fn tdr_lower_bound_area(d: f64) -> Result<f64> {
    ensure_finite(d, "separation")?;
    if d <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "separation must be positive, got {d}"
        )));
    }
    Ok(PI * (d / 2.0).powi(2))
}

/// `P(N >= 3)` for `N ~ Poisson(mean)`.
pub fn poisson_at_least_three(mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let head = (-mean).exp() * (1.0 + mean + mean * mean / 2.0);
    (1.0 - head).clamp(0.0, 1.0)
}

/// Lower bound on the probability that at least three Poisson receivers lie
/// in a target's detectable region:
/// `1 - exp(-mu) (1 + mu + mu^2 / 2)` with `mu = lambda pi d^2 / 2`.
pub fn prob_three_receivers_lb(model: &DeploymentModel) -> f64 {
    let mu = model.receiver_density * PI * model.min_separation.powi(2) / 2.0;
    poisson_at_least_three(mu)
}

/// Smallest separation (on a 1 mm grid) whose lower bound reaches
/// `target_prob`.
pub fn solve_separation_distance(receiver_density: f64, target_prob: f64) -> Result<f64> {
    ensure_finite(receiver_density, "receiver density")?;
    ensure_finite(target_prob, "target probability")?;
    if receiver_density <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "receiver density must be positive, got {receiver_density}"
        )));
    }
    if target_prob < 0.0 {
        return Err(Error::InvalidInput(format!(
            "target probability must be in [0, 1), got {target_prob}"
        )));
    }
    if target_prob >= 1.0 {
        return Err(Error::Unsatisfiable {
            target_prob,
            best: 1.0,
        });
    }
    let bound = |d: f64| {
        prob_three_receivers_lb(&DeploymentModel {
            receiver_density,
            min_separation: d,
        })
    };
    let mut hi = 1.0;
    while bound(hi) < target_prob {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Unsatisfiable {
                target_prob,
                best: bound(hi),
            });
        }
    }
    Ok(bisect_on_grid(0.0, hi, |d| bound(d) >= target_prob))
}

/// Smallest multiple of [`SEPARATION_RESOLUTION`] in `(lo, hi]` where the
/// monotone predicate holds, given it holds at `hi`.
fn bisect_on_grid<F: FnMut(f64) -> bool>(lo: f64, hi: f64, mut ok: F) -> f64 {
    let mut lo_step = (lo / SEPARATION_RESOLUTION).floor() as u64;
    let mut hi_step = (hi / SEPARATION_RESOLUTION).ceil() as u64;
    if lo_step == 0 && ok(SEPARATION_RESOLUTION) {
        return SEPARATION_RESOLUTION;
    }
    while hi_step - lo_step > 1 {
        let mid = (lo_step + hi_step) / 2;
        if ok(mid as f64 * SEPARATION_RESOLUTION) {
            hi_step = mid;
        } else {
            lo_step = mid;
        }
    }
    hi_step as f64 * SEPARATION_RESOLUTION
}

/// `k - 1` neighbours spaced evenly on the circle of radius `d` around
/// `center`. For `k <= 7` all pairwise distances are at least `d`.
pub fn symmetric_neighbors(center: Point2D, k: usize, d: f64) -> Result<Vec<Point2D>> {
    if !(2..=7).contains(&k) {
        return Err(Error::UnsupportedTargetCount(k));
    }
    let n = k - 1;
    Ok((0..n)
        .map(|j| center.polar_offset(d, 2.0 * PI * j as f64 / n as f64))
        .collect())
}

/// Whether a receiver at `x` is blind to `a` because of any of `others`.
pub fn union_blind_contains(
    x: Point2D,
    a: Point2D,
    others: &[Point2D],
    params: &AcousticParams,
) -> bool {
    others
        .iter()
        .any(|&s| blind_region_contains(x, a, s, params))
}

/// Whether a receiver at `x` can capture `a`'s wavefront.
pub fn tdr_contains(x: Point2D, a: Point2D, others: &[Point2D], params: &AcousticParams) -> bool {
    a.distance(x) <= params.audible_range() && !union_blind_contains(x, a, others, params)
}

/// Monte Carlo area of the union of blind regions of a target with `k - 1`
/// neighbours placed symmetrically at distance `d`.
pub fn symmetric_union_blind_area(
    k: usize,
    d: f64,
    params: &AcousticParams,
    samples: u64,
    seed: u64,
) -> Result<AreaEstimate> {
    ensure_finite(d, "separation")?;
    if d < 0.0 {
        return Err(Error::InvalidInput(format!(
            "separation must be non-negative, got {d}"
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let a = Point2D::ORIGIN;
    let others = symmetric_neighbors(a, k, d)?;
    Ok(estimate_disk_region(
        a,
        params.audible_range(),
        samples,
        seed,
        |x| union_blind_contains(x, a, &others, params),
    ))
}

/// Monte Carlo area of the detectable region of `a` given concurrent `others`.
pub fn monte_carlo_tdr_area(
    a: Point2D,
    others: &[Point2D],
    params: &AcousticParams,
    samples: u64,
    seed: u64,
) -> AreaEstimate {
    estimate_disk_region(a, params.audible_range(), samples, seed, |x| {
        !union_blind_contains(x, a, others, params)
    })
}

/// Empirical frequency of at least three receivers in `a`'s detectable region
/// when receivers form a Poisson field of intensity `receiver_density`.
///
/// Each draw places `Poisson(lambda pi r^2)` receivers uniformly over the
/// audible disk and counts those that can hear `a`.
pub fn empirical_three_receiver_prob(
    receiver_density: f64,
    a: Point2D,
    others: &[Point2D],
    params: &AcousticParams,
    draws: u64,
    seed: u64,
) -> Result<f64> {
    let r = params.audible_range();
    let mean = receiver_density * PI * r * r;
    let poisson = Poisson::new(mean).map_err(|e| {
        Error::InvalidInput(format!("bad receiver density {receiver_density}: {e}"))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0u64;
    for _ in 0..draws {
        let n = poisson.sample(&mut rng) as u64;
        let mut heard = 0;
        for _ in 0..n {
            let x = sample_in_disk(&mut rng, a, r);
            if !union_blind_contains(x, a, others, params) {
                heard += 1;
                if heard >= 3 {
                    break;
                }
            }
        }
        if heard >= 3 {
            successes += 1;
        }
    }
    Ok(successes as f64 / draws as f64)
}

/// Separation policy that accounts for the aftershock: the smallest `d` such
/// that a target surrounded by six concurrent neighbours at distance `d` (the
/// densest admissible arrangement) still sees at least three Poisson receivers
/// with probability `target_prob`.
///
/// The detectable area is estimated with common random numbers so the
/// bisection sees a monotone-enough function.
pub fn solve_separation_distance_worst_case(
    receiver_density: f64,
    target_prob: f64,
    params: &AcousticParams,
    samples: u64,
    seed: u64,
) -> Result<f64> {
    ensure_finite(receiver_density, "receiver density")?;
    ensure_finite(target_prob, "target probability")?;
    if receiver_density <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "receiver density must be positive, got {receiver_density}"
        )));
    }
    if !(0.0..1.0).contains(&target_prob) {
        return Err(Error::Unsatisfiable {
            target_prob,
            best: 1.0,
        });
    }
    let r = params.audible_range();
    let prob_at = |d: f64| -> f64 {
        let a = Point2D::ORIGIN;
        let others = symmetric_neighbors(a, 7, d).expect("k = 7 is supported");
        let tdr = monte_carlo_tdr_area(a, &others, params, samples, seed).area();
        poisson_at_least_three(receiver_density * tdr)
    };
    // Beyond 2r neighbours cannot mask anything.
    let hi = 2.0 * r + SEPARATION_RESOLUTION;
    let best = prob_at(hi);
    if best < target_prob {
        return Err(Error::Unsatisfiable { target_prob, best });
    }
    Ok(bisect_on_grid(0.0, hi, |d| prob_at(d) >= target_prob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::blind_region_area;

    fn cricket() -> AcousticParams {
        AcousticParams::new(3.0, 0.33, 340.0).unwrap()
    }

    /// Independent Poisson tail: sum the pmf from 3 upward.
    fn poisson_tail_from_three(mu: f64) -> f64 {
        let mut term = (-mu).exp() * mu.powi(3) / 6.0;
        let mut sum = 0.0;
        let mut k = 3.0;
        while term > 1e-18 || k < mu {
            sum += term;
            k += 1.0;
            term *= mu / k;
        }
        sum
    }

    #[test]
    fn lower_bound_area_examples() {
        assert!((tdr_lower_bound_area(2.0).unwrap() - PI).abs() < 1e-15);
        assert!((tdr_lower_bound_area(0.33).unwrap() - PI * 0.027225).abs() < 1e-15);
        assert!(tdr_lower_bound_area(1.0).unwrap() < tdr_lower_bound_area(1.1).unwrap());
        assert!(tdr_lower_bound_area(0.0).is_err());
    }

    #[test]
    fn bound_at_reference_point() {
        let m = DeploymentModel::new(0.25, 2.0).unwrap();
        let p = prob_three_receivers_lb(&m);
        assert!((p - 0.209).abs() < 1e-3, "{p}");
        let tiny = DeploymentModel::new(1e-12, 2.0).unwrap();
        assert!(prob_three_receivers_lb(&tiny) < 1e-12);
    }

    #[test]
    fn bound_matches_independent_poisson_tail() {
        for &(lambda, d) in &[(0.25, 2.0), (0.1, 1.0), (1.0, 3.0), (0.5, 0.4), (2.0, 5.0)] {
            let m = DeploymentModel::new(lambda, d).unwrap();
            let mu = lambda * PI * (d / 2.0f64).powi(2) * 2.0;
            assert!((prob_three_receivers_lb(&m) - poisson_tail_from_three(mu)).abs() < 1e-12);
        }
    }

    #[test]
    fn bound_increases_in_density_and_separation() {
        let mut last = 0.0;
        for i in 1..50 {
            let p = prob_three_receivers_lb(&DeploymentModel::new(0.25, i as f64 * 0.1).unwrap());
            assert!(p > last);
            last = p;
        }
        let mut last = 0.0;
        for i in 1..50 {
            let p = prob_three_receivers_lb(&DeploymentModel::new(i as f64 * 0.05, 2.0).unwrap());
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn bound_vs_sampled_poisson_counts() {
        // Disk of area pi d^2 / 2 has exactly the bound's mean.
        let mu = 0.25 * PI * 4.0 / 2.0;
        let poisson = Poisson::new(mu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let hits = (0..n).filter(|_| poisson.sample(&mut rng) >= 3.0).count() as f64 / n as f64;
        let bound = prob_three_receivers_lb(&DeploymentModel::new(0.25, 2.0).unwrap());
        let sigma = (bound * (1.0 - bound) / n as f64).sqrt();
        assert!(hits >= bound - 3.0 * sigma, "{hits} < {bound}");
    }

    #[test]
    fn separation_solver() {
        let d = solve_separation_distance(0.25, 0.209).unwrap();
        assert!((d - 2.0).abs() < 2e-3, "{d}");
        assert_eq!(
            solve_separation_distance(0.25, 0.0).unwrap(),
            SEPARATION_RESOLUTION
        );
        assert!(matches!(
            solve_separation_distance(0.25, 1.0),
            Err(Error::Unsatisfiable { .. })
        ));
        assert!(solve_separation_distance(0.0, 0.5).is_err());
    }

    #[test]
    fn separation_solver_is_tight_on_grid() {
        for &(lambda, p) in &[(0.25, 0.99), (0.1, 0.5), (1.0, 0.9), (0.05, 0.3)] {
            let d = solve_separation_distance(lambda, p).unwrap();
            let at = |d: f64| prob_three_receivers_lb(&DeploymentModel::new(lambda, d).unwrap());
            assert!(at(d) >= p);
            assert!(at(d - SEPARATION_RESOLUTION) < p);
        }
    }

    #[test]
    fn separation_non_increasing_in_density() {
        let mut last = f64::INFINITY;
        for i in 1..40 {
            let d = solve_separation_distance(i as f64 * 0.05, 0.9).unwrap();
            assert!(d <= last);
            last = d;
        }
    }

    #[test]
    fn union_of_one_region_is_the_region() {
        let p = cricket();
        let est = symmetric_union_blind_area(2, 2.0, &p, 2_000_000, 8).unwrap();
        let cf = blind_region_area(2.0, &p).unwrap();
        assert!(
            (est.area() - cf).abs() < 4.0 * est.std_error(),
            "{} vs {cf}",
            est.area()
        );
    }

    #[test]
    fn union_bounds() {
        let p = cricket();
        for &d in &[0.5, 1.5, 2.5, 4.0] {
            let single = blind_region_area(d, &p).unwrap();
            let est = symmetric_union_blind_area(3, d, &p, 500_000, 4).unwrap();
            let slack = 4.0 * est.std_error() + 1e-9;
            assert!(est.area() <= 2.0 * single + slack);
            assert!(est.area() >= single - slack);
        }
    }

    #[test]
    fn union_rejects_unsupported_counts() {
        let p = cricket();
        assert!(matches!(
            symmetric_union_blind_area(1, 2.0, &p, 10, 0),
            Err(Error::UnsupportedTargetCount(1))
        ));
        assert!(matches!(
            symmetric_union_blind_area(8, 2.0, &p, 10, 0),
            Err(Error::UnsupportedTargetCount(8))
        ));
    }

    #[test]
    fn symmetric_neighbors_are_separated() {
        for k in 2..=7 {
            let pts = symmetric_neighbors(Point2D::ORIGIN, k, 1.5).unwrap();
            assert_eq!(pts.len(), k - 1);
            for (i, p) in pts.iter().enumerate() {
                assert!((p.distance(Point2D::ORIGIN) - 1.5).abs() < 1e-12);
                for q in &pts[i + 1..] {
                    assert!(p.distance(*q) >= 1.5 - 1e-9);
                }
            }
        }
    }

    #[test]
    fn worst_case_separation_grows_with_aftershock() {
        let short = solve_separation_distance_worst_case(0.25, 0.9, &cricket(), 20_000, 1).unwrap();
        let long = solve_separation_distance_worst_case(
            0.25,
            0.9,
            &cricket().with_aftershock_distance(3.3).unwrap(),
            20_000,
            1,
        )
        .unwrap();
        assert!(short < long, "{short} vs {long}");
        assert!(solve_separation_distance_worst_case(0.25, 0.999, &cricket(), 20_000, 1).is_err());
    }
}
