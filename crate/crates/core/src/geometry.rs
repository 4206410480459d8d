//! Planar geometry primitives and the blind region of one target caused by a
//! concurrently transmitting neighbour.
//!
//! A receiver at `x` loses the wavefront of target `a` when target `b` is
//! transmitting in the same slot and
//!
//! ```text
//! 0 < d(a, x) - d(b, x) <= omega   and   d(a, x) <= r
//! ```
//!
//! i.e. `b`'s wavefront arrives first and `a`'s lands inside its aftershock.
//! Geometrically that is the circular segment of `a`'s audible disk beyond the
//! perpendicular bisector of `a`-`b`, minus the part that lies inside the
//! hyperbola branch `d(a, x) - d(b, x) = omega` around `b`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// A planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const ORIGIN: Point2D = Point2D { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2D) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn offset(self, dx: f64, dy: f64) -> Point2D {
        Point2D::new(self.x + dx, self.y + dy)
    }

    /// Point at `radius` from `self` in direction `angle` (radians).
    pub fn polar_offset(self, radius: f64, angle: f64) -> Point2D {
        self.offset(radius * angle.cos(), radius * angle.sin())
    }
}

/// Euclidean distance between two points.
pub fn distance(a: Point2D, b: Point2D) -> f64 {
    a.distance(b)
}

/// Physical constants of the ranging channel.
///
/// `aftershock_distance` (omega) is the path-length difference that two
/// successive wavefronts need for both to be detected. It equals the longest
/// aftershock times the speed of sound, so only three of the four quantities
/// are stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AcousticParamsRepr", into = "AcousticParamsRepr")]
pub struct AcousticParams {
    audible_range: f64,
    aftershock_distance: f64,
    sound_speed: f64,
}

#[derive(Serialize, Deserialize)]
struct AcousticParamsRepr {
    audible_range: f64,
    aftershock_distance: f64,
    #[serde(default = "default_sound_speed")]
    sound_speed: f64,
}

fn default_sound_speed() -> f64 {
    AcousticParams::SPEED_OF_SOUND
}

impl TryFrom<AcousticParamsRepr> for AcousticParams {
    type Error = Error;

    fn try_from(repr: AcousticParamsRepr) -> Result<Self> {
        AcousticParams::new(
            repr.audible_range,
            repr.aftershock_distance,
            repr.sound_speed,
        )
    }
}

impl From<AcousticParams> for AcousticParamsRepr {
    fn from(p: AcousticParams) -> Self {
        AcousticParamsRepr {
            audible_range: p.audible_range,
            aftershock_distance: p.aftershock_distance,
            sound_speed: p.sound_speed,
        }
    }
}

impl AcousticParams {
    /// Speed of sound in air, m/s.
    pub const SPEED_OF_SOUND: f64 = 340.0;

    pub fn new(audible_range: f64, aftershock_distance: f64, sound_speed: f64) -> Result<Self> {
        ensure_finite(audible_range, "audible range")?;
        ensure_finite(aftershock_distance, "aftershock distance")?;
        ensure_finite(sound_speed, "sound speed")?;
        if audible_range <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "audible range must be positive, got {audible_range}"
            )));
        }
        if aftershock_distance < 0.0 {
            return Err(Error::InvalidInput(format!(
                "aftershock distance must be non-negative, got {aftershock_distance}"
            )));
        }
        if sound_speed <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "sound speed must be positive, got {sound_speed}"
            )));
        }
        Ok(Self {
            audible_range,
            aftershock_distance,
            sound_speed,
        })
    }

    /// Build from the longest aftershock duration (seconds).
    pub fn from_aftershock(
        audible_range: f64,
        max_aftershock: f64,
        sound_speed: f64,
    ) -> Result<Self> {
        Self::new(audible_range, max_aftershock * sound_speed, sound_speed)
    }

    /// Audible range `r` in meters.
    pub fn audible_range(&self) -> f64 {
        self.audible_range
    }

    /// Confident separation distance `omega` in meters.
    pub fn aftershock_distance(&self) -> f64 {
        self.aftershock_distance
    }

    /// Propagation speed in m/s.
    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    /// Longest aftershock `L_max` in seconds.
    pub fn max_aftershock(&self) -> f64 {
        self.aftershock_distance / self.sound_speed
    }

    pub fn with_aftershock_distance(self, aftershock_distance: f64) -> Result<Self> {
        Self::new(self.audible_range, aftershock_distance, self.sound_speed)
    }
}

impl Default for AcousticParams {
    /// Cricket-like values: 3 m range, 1 ms aftershock.
    fn default() -> Self {
        Self {
            audible_range: 3.0,
            aftershock_distance: 0.33,
            sound_speed: Self::SPEED_OF_SOUND,
        }
    }
}

/// Intermediate quantities of the closed-form blind-region area.
///
/// Frame: origin at the midpoint of `a`-`b`, x-axis pointing from `a` to `b`.
/// The boundary `d(a, x) - d(b, x) = omega` is the right branch of the
/// hyperbola `x^2 / semi_major^2 - y^2 / semi_minor^2 = 1` with foci at
/// `(-focal, 0)` and `(focal, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlindRegionParams {
    /// Half-angle of the chord cut by the bisector from `a`'s audible circle.
    pub theta: f64,
    /// `omega / 2`.
    pub semi_major: f64,
    /// `sqrt(focal^2 - semi_major^2)`, zero when the hyperbola is degenerate.
    pub semi_minor: f64,
    /// `d_ab / 2`.
    pub focal: f64,
    /// y coordinate where the hyperbola meets `a`'s audible circle (zero if
    /// they do not meet).
    pub y_intersect: f64,
    /// Area inside both the audible circle and the hyperbola branch; these
    /// receivers hear `a` far enough behind `b` to resolve it.
    pub resolved_area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlindBranch {
    Disjoint,
    FullSegment,
    SegmentMinusResolved,
}

fn branch(d_ab: f64, params: &AcousticParams) -> BlindBranch {
    let r = params.audible_range;
    let omega = params.aftershock_distance;
    if d_ab > 2.0 * r {
        BlindBranch::Disjoint
    } else if d_ab >= 2.0 * r - omega || d_ab <= omega {
        BlindBranch::FullSegment
    } else {
        BlindBranch::SegmentMinusResolved
    }
}

/// Area of the circular segment of a radius-`r` disk cut at distance `d_ab/2`
/// from its center: `r^2 (theta - sin(theta) cos(theta))`.
pub fn segment_area(d_ab: f64, r: f64) -> f64 {
    if d_ab >= 2.0 * r {
        return 0.0;
    }
    let theta = (d_ab / (2.0 * r)).acos();
    r * r * (theta - theta.sin() * theta.cos())
}

const QUADRATURE_TOL: f64 = 1e-9;

/// Expand the closed-form parameters for a given `d_ab`.
pub fn blind_region_params(d_ab: f64, params: &AcousticParams) -> Result<BlindRegionParams> {
    ensure_finite(d_ab, "target separation")?;
    if d_ab < 0.0 {
        return Err(Error::InvalidInput(format!(
            "target separation must be non-negative, got {d_ab}"
        )));
    }
    let r = params.audible_range;
    let omega = params.aftershock_distance;
    let theta = if d_ab > 2.0 * r {
        0.0
    } else {
        (d_ab / (2.0 * r)).acos()
    };
    let focal = d_ab / 2.0;
    let semi_major = omega / 2.0;
    let semi_minor = (focal * focal - semi_major * semi_major).max(0.0).sqrt();

    let (y_intersect, resolved_area) = match branch(d_ab, params) {
        BlindBranch::SegmentMinusResolved => {
            // Hyperbola meets the circle where d(a,x) = r and d(b,x) = r - omega.
            let near = r - omega;
            let along = (r * r - near * near + d_ab * d_ab) / (2.0 * d_ab);
            let y_beta = (r * r - along * along).max(0.0).sqrt();
            let width = |y: f64| {
                let circle = -focal + (r * r - y * y).max(0.0).sqrt();
                let hyperbola = semi_major * (1.0 + y * y / (semi_minor * semi_minor)).sqrt();
                (circle - hyperbola).max(0.0)
            };
            let half = adaptive_simpson(&width, 0.0, y_beta, QUADRATURE_TOL / 2.0);
            (y_beta, 2.0 * half)
        }
        _ => (0.0, 0.0),
    };

    Ok(BlindRegionParams {
        theta,
        semi_major,
        semi_minor,
        focal,
        y_intersect,
        resolved_area,
    })
}

/// Closed-form area of the blind region of `a` caused by a concurrent target
/// at distance `d_ab`.
///
/// Coincident targets (`d_ab == 0`) return the limit `pi r^2 / 2`.
pub fn blind_region_area(d_ab: f64, params: &AcousticParams) -> Result<f64> {
    let expanded = blind_region_params(d_ab, params)?;
    let r = params.audible_range;
    let area = match branch(d_ab, params) {
        BlindBranch::Disjoint => 0.0,
        BlindBranch::FullSegment => {
            r * r * (expanded.theta - expanded.theta.sin() * expanded.theta.cos())
        }
        BlindBranch::SegmentMinusResolved => {
            r * r * (expanded.theta - expanded.theta.sin() * expanded.theta.cos())
                - expanded.resolved_area
        }
    };
    Ok(area.max(0.0))
}

/// True iff a receiver at `receiver` cannot capture `a`'s wavefront because
/// `b` transmits in the same slot.
pub fn blind_region_contains(
    receiver: Point2D,
    a: Point2D,
    b: Point2D,
    params: &AcousticParams,
) -> bool {
    let d_ax = a.distance(receiver);
    if d_ax > params.audible_range {
        return false;
    }
    let lag = d_ax - b.distance(receiver);
    lag > 0.0 && lag <= params.aftershock_distance
}

/// Result of a rejection-sampling area estimate over a disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaEstimate {
    pub hits: u64,
    pub samples: u64,
    pub disk_area: f64,
}

impl AreaEstimate {
    pub fn fraction(&self) -> f64 {
        self.hits as f64 / self.samples as f64
    }

    pub fn area(&self) -> f64 {
        self.disk_area * self.fraction()
    }

    /// Binomial standard error of [`AreaEstimate::area`].
    pub fn std_error(&self) -> f64 {
        let p = self.fraction();
        self.disk_area * (p * (1.0 - p) / self.samples as f64).sqrt()
    }
}

/// Uniform point in the disk of `radius` about `center`, by rejection from the
/// bounding square.
pub fn sample_in_disk<R: Rng + ?Sized>(rng: &mut R, center: Point2D, radius: f64) -> Point2D {
    loop {
        let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let v: f64 = rng.random::<f64>() * 2.0 - 1.0;
        if u * u + v * v <= 1.0 {
            return center.offset(u * radius, v * radius);
        }
    }
}

/// Estimate the area of `{x in disk(center, radius) : inside(x)}` by uniform
/// sampling. Deterministic for a fixed seed.
pub fn estimate_disk_region<F>(
    center: Point2D,
    radius: f64,
    samples: u64,
    seed: u64,
    inside: F,
) -> AreaEstimate
where
    F: Fn(Point2D) -> bool,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..samples {
        if inside(sample_in_disk(&mut rng, center, radius)) {
            hits += 1;
        }
    }
    AreaEstimate {
        hits,
        samples,
        disk_area: PI * radius * radius,
    }
}

/// Monte Carlo estimate of the blind region of `a` caused by `b`, sampling
/// uniformly over `a`'s audible disk.
pub fn monte_carlo_blind_estimate(
    a: Point2D,
    b: Point2D,
    params: &AcousticParams,
    samples: u64,
    seed: u64,
) -> Result<AreaEstimate> {
    if samples == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidInput(
            "target positions must be finite".into(),
        ));
    }
    Ok(estimate_disk_region(
        a,
        params.audible_range,
        samples,
        seed,
        |x| blind_region_contains(x, a, b, params),
    ))
}

/// Area-only convenience wrapper around [`monte_carlo_blind_estimate`].
pub fn monte_carlo_blind_area(
    a: Point2D,
    b: Point2D,
    params: &AcousticParams,
    samples: u64,
    seed: u64,
) -> Result<f64> {
    monte_carlo_blind_estimate(a, b, params, samples, seed).map(|e| e.area())
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cricket() -> AcousticParams {
        AcousticParams::new(3.0, 0.33, 340.0).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(Point2D::ORIGIN, Point2D::ORIGIN), 0.0);
        assert_eq!(distance(Point2D::ORIGIN, Point2D::new(3.0, 4.0)), 5.0);
        assert_eq!(
            distance(Point2D::new(1.0, 1.0), Point2D::new(4.0, 5.0)),
            5.0
        );
    }

    #[test]
    fn acoustic_params_validation() {
        assert!(AcousticParams::new(0.0, 0.33, 340.0).is_err());
        assert!(AcousticParams::new(3.0, -0.1, 340.0).is_err());
        assert!(AcousticParams::new(3.0, 0.33, 0.0).is_err());
        assert!(AcousticParams::new(f64::NAN, 0.33, 340.0).is_err());
        let p = AcousticParams::from_aftershock(3.0, 1e-3, 340.0).unwrap();
        assert!((p.aftershock_distance() - 0.34).abs() < 1e-12);
        assert!((p.max_aftershock() - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn disjoint_disks_have_no_blind_region() {
        assert_eq!(blind_region_area(7.0, &cricket()).unwrap(), 0.0);
    }

    #[test]
    fn near_boundary_branch_is_full_segment() {
        let theta = (5.9f64 / 6.0).acos();
        let expected = 9.0 * (theta - theta.sin() * theta.cos());
        let got = blind_region_area(5.9, &cricket()).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn coincident_targets_take_half_disk_limit() {
        let got = blind_region_area(0.0, &cricket()).unwrap();
        assert!((got - PI * 9.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_separation() {
        assert!(blind_region_area(-0.1, &cricket()).is_err());
        assert!(blind_region_area(f64::INFINITY, &cricket()).is_err());
    }

    #[test]
    fn branch_boundaries_coincide() {
        let p = cricket();
        let r = p.audible_range();
        let omega = p.aftershock_distance();
        for &d in &[2.0 * r - omega, omega, 2.0 * r] {
            let at = blind_region_area(d, &p).unwrap();
            // The area has a square-root profile just above omega, so the
            // one-sided gap shrinks like sqrt(eps) rather than eps.
            for &(eps, tol) in &[(1e-6, 5e-2), (1e-10, 5e-4), (1e-14, 5e-6)] {
                let below = blind_region_area(d - eps, &p).unwrap();
                let above = blind_region_area(d + eps, &p).unwrap();
                assert!((below - at).abs() < tol, "d={d} eps={eps}: {below} vs {at}");
                assert!((above - at).abs() < tol, "d={d} eps={eps}: {above} vs {at}");
            }
        }
        // Both full-segment branches use the same expression.
        assert_eq!(
            blind_region_area(omega, &p).unwrap(),
            segment_area(omega, r)
        );
        assert_eq!(
            blind_region_area(2.0 * r - omega, &p).unwrap(),
            segment_area(2.0 * r - omega, r)
        );
    }

    #[test]
    fn params_satisfy_hyperbola_identity() {
        let p = cricket();
        let e = blind_region_params(2.0, &p).unwrap();
        assert!((e.focal.powi(2) - e.semi_major.powi(2) - e.semi_minor.powi(2)).abs() < 1e-12);
        assert!((e.theta - (2.0f64 / 6.0).acos()).abs() < 1e-15);
        assert!(e.resolved_area > 0.0);
        assert!(e.y_intersect > 0.0 && e.y_intersect < 3.0);
        // The intersection point lies on both the circle and the hyperbola.
        let x = -e.focal + (9.0 - e.y_intersect.powi(2)).sqrt();
        let a = Point2D::new(-e.focal, 0.0);
        let b = Point2D::new(e.focal, 0.0);
        let q = Point2D::new(x, e.y_intersect);
        assert!((a.distance(q) - 3.0).abs() < 1e-9);
        assert!((a.distance(q) - b.distance(q) - 0.33).abs() < 1e-9);
    }

    /// A step from `lo` to `hi` is continuous if it is small or every finer
    /// sub-step is.
    fn continuous_between(p: &AcousticParams, lo: f64, hi: f64, depth: u32) -> bool {
        let (f_lo, f_hi) = (
            blind_region_area(lo, p).unwrap(),
            blind_region_area(hi, p).unwrap(),
        );
        if (f_lo - f_hi).abs() < 0.02 {
            return true;
        }
        if depth == 0 {
            return false;
        }
        let step = (hi - lo) / 10.0;
        (0..10).all(|i| {
            continuous_between(
                p,
                lo + i as f64 * step,
                lo + (i + 1) as f64 * step,
                depth - 1,
            )
        })
    }

    #[test]
    fn continuous_and_non_increasing_on_dense_grid() {
        for p in [cricket(), AcousticParams::new(2.0, 1.1, 340.0).unwrap()] {
            let mut prev = blind_region_area(0.0, &p).unwrap();
            for step in 1..=6500 {
                let d = step as f64 * 1e-3;
                let cur = blind_region_area(d, &p).unwrap();
                assert!(cur <= prev + 1e-8, "increase at d={d}: {prev} -> {cur}");
                assert!(
                    continuous_between(&p, d - 1e-3, d, 8),
                    "jump near d={d}: {prev} -> {cur}"
                );
                prev = cur;
            }
        }
    }

    #[test]
    fn contains_examples() {
        let p = cricket();
        let a = Point2D::new(0.0, 0.0);
        let b = Point2D::new(2.0, 0.0);
        // Equidistant receiver on the bisector.
        assert!(!blind_region_contains(Point2D::new(1.0, 1.0), a, b, &p));
        // Outside the audible range of a.
        assert!(!blind_region_contains(Point2D::new(4.0, 0.0), a, b, &p));
        // On the a-b axis: d_ax - d_bx = 2*x - 2, pick lag = omega / 2.
        let x = (2.0 + 0.165) / 2.0;
        assert!(blind_region_contains(Point2D::new(x, 0.0), a, b, &p));
    }

    #[test]
    fn contains_reflects_under_swap() {
        let p = cricket();
        let a = Point2D::new(0.3, -0.2);
        let b = Point2D::new(1.9, 0.7);
        let mid = Point2D::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let x = sample_in_disk(&mut rng, mid, 4.0);
            // Point reflection through the midpoint swaps the roles of a and b.
            let mirrored = Point2D::new(2.0 * mid.x - x.x, 2.0 * mid.y - x.y);
            assert_eq!(
                blind_region_contains(x, a, b, &p),
                blind_region_contains(mirrored, b, a, &p)
            );
        }
    }

    #[test]
    fn monte_carlo_zero_for_disjoint_disks() {
        let p = cricket();
        let a = Point2D::ORIGIN;
        let b = Point2D::new(6.5, 0.0);
        for seed in 0..3 {
            assert_eq!(monte_carlo_blind_area(a, b, &p, 10_000, seed).unwrap(), 0.0);
        }
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let p = cricket();
        let a = Point2D::ORIGIN;
        let b = Point2D::new(2.0, 0.0);
        let x = monte_carlo_blind_area(a, b, &p, 50_000, 11).unwrap();
        let y = monte_carlo_blind_area(a, b, &p, 50_000, 11).unwrap();
        assert_eq!(x, y);
        assert!(monte_carlo_blind_area(a, b, &p, 0, 1).is_err());
    }

    #[test]
    fn monte_carlo_seeds_agree_within_three_sigma() {
        let p = cricket();
        let a = Point2D::ORIGIN;
        let b = Point2D::new(2.0, 0.0);
        let e1 = monte_carlo_blind_estimate(a, b, &p, 1_000_000, 1).unwrap();
        let e2 = monte_carlo_blind_estimate(a, b, &p, 1_000_000, 2).unwrap();
        let sigma = (e1.std_error().powi(2) + e2.std_error().powi(2)).sqrt();
        assert!((e1.area() - e2.area()).abs() <= 3.0 * sigma);
    }

    #[test]
    fn closed_form_matches_monte_carlo_at_two_meters() {
        let p = cricket();
        let cf = blind_region_area(2.0, &p).unwrap();
        let mc = monte_carlo_blind_area(
            Point2D::ORIGIN,
            Point2D::new(2.0, 0.0),
            &p,
            10_000_000,
            2024,
        )
        .unwrap();
        assert!(
            (cf - mc).abs() / cf < 0.01,
            "closed form {cf} vs monte carlo {mc}"
        );
    }

    #[test]
    fn adaptive_simpson_integrates_known_functions() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
        let v = adaptive_simpson(&|x: f64| (1.0 - x * x).sqrt(), 0.0, 1.0, 1e-10);
        assert!((v - PI / 4.0).abs() < 1e-7);
    }
}
