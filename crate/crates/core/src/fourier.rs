//! Monte-Carlo Fourier transforms, truncated Sobolev energies, and numerical
//! oracles for the integral inequalities behind the interior criteria.

use crate::error::{CoreError, Result};
use crate::geometry::{IfsInstance, PointCloud};
use crate::linalg::{self, singular_values, MapTuple, Matrix, Word};
use crate::math;
use crate::quad;
use crate::rng;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand_core::RngCore;
use serde::Serialize;

// ---------------------------------------------------------------------------
// Empirical Fourier transform
// ---------------------------------------------------------------------------

/// Empirical characteristic-function value with its standard error.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FourierEstimate {
    pub re: f64,
    pub im: f64,
    pub stderr: f64,
    pub n_points: usize,
}

impl FourierEstimate {
    pub fn modulus(&self) -> f64 {
        math::sqrt(self.re * self.re + self.im * self.im)
    }
}

/// Mean of `exp(-i <xi, x>)` over the cloud. The standard error is at most
/// `1/sqrt(n)` since the terms are unimodular.
pub fn fourier_mc(cloud: &PointCloud, xi: &[f64]) -> Result<FourierEstimate> {
    if cloud.is_empty() {
        return Err(CoreError::EmptyCloud);
    }
    if xi.len() != cloud.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: cloud.dim(),
            got: xi.len(),
        });
    }
    let n = cloud.len();
    let mut sum_c = 0.0;
    let mut sum_s = 0.0;
    let mut sum_c2 = 0.0;
    let mut sum_s2 = 0.0;
    for p in cloud.iter() {
        let phase = linalg::dot(xi, p);
        let c = math::cos(phase);
        let s = math::sin(phase);
        sum_c += c;
        sum_s += s;
        sum_c2 += c * c;
        sum_s2 += s * s;
    }
    let nf = n as f64;
    let re = sum_c / nf;
    let im = -sum_s / nf;
    // Population variance keeps stderr <= 1/sqrt(n) for unimodular terms.
    let var_c = sum_c2 / nf - re * re;
    let var_s = sum_s2 / nf - im * im;
    let stderr = math::sqrt((var_c.max(0.0) + var_s.max(0.0)) / nf);
    Ok(FourierEstimate {
        re,
        im,
        stderr,
        n_points: n,
    })
}

// ---------------------------------------------------------------------------
// Truncated Sobolev energy
// ---------------------------------------------------------------------------

/// Stratified Monte-Carlo estimate of the truncated energy integral
/// `int_{|xi| <= R} |mu-hat(xi)|^2 |xi|^{s-d} d xi`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyEstimate {
    pub s: f64,
    pub r_cutoff: f64,
    pub value: f64,
    pub stderr: f64,
    pub n_freq: usize,
    pub n_points: usize,
}

/// Importance-samples frequencies in dyadic annuli up to `r_cutoff`.
///
/// `|mu-hat|^2` is estimated from two independent half-clouds, which removes
/// the `+1/n` bias of a squared mean. Each annulus draws from its own seeded
/// substream, so estimates at nested cutoffs share their common annuli and
/// the truncated value is monotone in `r_cutoff`.
pub fn truncated_energy(
    cloud: &PointCloud,
    s: f64,
    r_cutoff: f64,
    n_per_annulus: usize,
    seed: u64,
) -> Result<EnergyEstimate> {
    if cloud.len() < 2 {
        return Err(CoreError::EmptyCloud);
    }
    if !(s > 0.0) || !(r_cutoff > 0.0) || n_per_annulus < 2 {
        return Err(CoreError::InvalidArgument(
            "truncated_energy needs s > 0, R > 0 and at least two samples per annulus".into(),
        ));
    }
    let d = cloud.dim();
    if d > 3 {
        return Err(CoreError::InvalidArgument("energy supports d <= 3".into()));
    }
    let half = cloud.len() / 2;
    let ball_volume = match d {
        1 => 2.0,
        2 => math::PI,
        _ => 4.0 * math::PI / 3.0,
    };

    let mut annuli: Vec<(f64, f64)> = Vec::new();
    let mut lo = 0.0;
    let mut hi = 1.0_f64.min(r_cutoff);
    loop {
        annuli.push((lo, hi));
        if hi >= r_cutoff {
            break;
        }
        lo = hi;
        hi = (hi * 2.0).min(r_cutoff);
    }

    let mut value = 0.0;
    let mut variance = 0.0;
    let mut n_freq = 0;
    let mut xi = vec![0.0; d];
    for (k, &(a, b)) in annuli.iter().enumerate() {
        let mut stream = rng::substream(seed, k as u64);
        let volume = ball_volume * (math::powf(b, d as f64) - math::powf(a, d as f64));
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for i in 0..n_per_annulus {
            sample_in_annulus(&mut stream, a, b, &mut xi);
            let r = linalg::norm(&xi);
            let weight = volume * math::powf(r.max(1e-300), s - d as f64);
            let x = weight * split_modulus_sq(cloud, &xi, half);
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        let var = m2 / (n_per_annulus - 1) as f64 / n_per_annulus as f64;
        value += mean;
        variance += var.max(0.0);
        n_freq += n_per_annulus;
    }
    Ok(EnergyEstimate {
        s,
        r_cutoff,
        value: value.max(0.0),
        stderr: math::sqrt(variance),
        n_freq,
        n_points: cloud.len(),
    })
}

fn sample_in_annulus<R: RngCore>(rng: &mut R, a: f64, b: f64, xi: &mut [f64]) {
    let d = xi.len();
    let u = rng::uniform_f64(rng);
    let ad = math::powf(a, d as f64);
    let bd = math::powf(b, d as f64);
    let r = math::powf(ad + u * (bd - ad), 1.0 / d as f64);
    match d {
        1 => {
            xi[0] = if rng.next_u64() & 1 == 0 { r } else { -r };
        }
        2 => {
            let phi = rng::uniform_in(rng, 0.0, math::TAU);
            xi[0] = r * math::cos(phi);
            xi[1] = r * math::sin(phi);
        }
        _ => {
            let z = rng::uniform_in(rng, -1.0, 1.0);
            let phi = rng::uniform_in(rng, 0.0, math::TAU);
            let rho = math::sqrt((1.0 - z * z).max(0.0));
            xi[0] = r * rho * math::cos(phi);
            xi[1] = r * rho * math::sin(phi);
            xi[2] = r * z;
        }
    }
}

/// Unbiased `|mu-hat(xi)|^2` from two disjoint half-clouds.
fn split_modulus_sq(cloud: &PointCloud, xi: &[f64], half: usize) -> f64 {
    let (mut c1, mut s1, mut c2, mut s2) = (0.0, 0.0, 0.0, 0.0);
    for (i, p) in cloud.iter().enumerate() {
        let phase = linalg::dot(xi, p);
        let c = math::cos(phase);
        let s = math::sin(phase);
        if i < half {
            c1 += c;
            s1 += s;
        } else {
            c2 += c;
            s2 += s;
        }
    }
    let n1 = half as f64;
    let n2 = (cloud.len() - half) as f64;
    // Re(z1 * conj(z2)) for the two half-cloud means.
    (c1 * c2 + s1 * s2) / (n1 * n2)
}

// ---------------------------------------------------------------------------
// Smooth bumps
// ---------------------------------------------------------------------------

/// Radial smooth compactly supported bump, optionally with a flat plateau.
#[derive(Clone, Debug)]
pub struct BumpFunction {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Fraction of the radius on which the profile is identically 1.
    plateau_fraction: f64,
}

impl BumpFunction {
    /// `exp(1 - 1/(1 - q^2))` on `q < 1`, zero outside, value 1 at the center.
    pub fn standard(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::with_plateau(center, radius, 0.0)
    }

    /// Identically 1 on `q <= inner_fraction`, smoothly molded to zero at 1.
    pub fn with_plateau(center: Vec<f64>, radius: f64, inner_fraction: f64) -> Result<Self> {
        if !(radius > 0.0) || !(0.0..1.0).contains(&inner_fraction) {
            return Err(CoreError::InvalidArgument(
                "bump needs radius > 0 and plateau fraction in [0, 1)".into(),
            ));
        }
        Ok(Self {
            center,
            radius,
            plateau_fraction: inner_fraction,
        })
    }

    /// Profile as a function of `q = |x - center| / radius`.
    pub fn profile(&self, q: f64) -> f64 {
        let q = math::abs(q);
        if q >= 1.0 {
            return 0.0;
        }
        if self.plateau_fraction == 0.0 {
            let denom = 1.0 - q * q;
            if denom < 1e-12 {
                return 0.0;
            }
            return math::exp(1.0 - 1.0 / denom);
        }
        if q <= self.plateau_fraction {
            return 1.0;
        }
        // Smooth partition step between the plateau and the support edge.
        let w = (q - self.plateau_fraction) / (1.0 - self.plateau_fraction);
        let rise = smooth_exp(1.0 - w);
        let fall = smooth_exp(w);
        rise / (rise + fall)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = linalg::dist(x, &self.center);
        self.profile(r / self.radius)
    }
}

#[inline]
fn smooth_exp(w: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        math::exp(-1.0 / w)
    }
}

// ---------------------------------------------------------------------------
// Gradient lower bound sweep
// ---------------------------------------------------------------------------

/// Outcome of the randomized gradient lower-bound sweep.
#[derive(Clone, Debug, Serialize)]
pub struct GradientBoundReport {
    pub trials: usize,
    pub delta: f64,
    /// `(1 - 2 delta) / (1 - delta)`.
    pub lower_bound: f64,
    /// `2 delta^{depth+1} / (1 - delta)`, subtracted from the bound.
    pub truncation_error: f64,
    pub min_gradient_norm: f64,
    pub failures: usize,
    /// Worst disagreement of one finite-difference cross-check per call.
    pub fd_max_error: f64,
    pub pass: bool,
}

/// For random `(a, v, x, y)` with differing first letters, checks that the
/// gradient of `a -> <v, pi_a(x) - pi_a(y)>` has norm at least
/// `(1 - 2 delta)/(1 - delta)` minus the series truncation error. The
/// gradient rows are the matrices `U_j` built from prefix products of the
/// two words; one instance per call is cross-checked against central finite
/// differences in `a`.
pub fn verify_gradient_bound<R: RngCore>(
    tuple: &MapTuple,
    trials: usize,
    depth: usize,
    rng: &mut R,
) -> Result<GradientBoundReport> {
    let delta = tuple.delta();
    if !(delta < 0.5) {
        return Err(CoreError::InvalidArgument(format!(
            "gradient bound requires max operator norm < 1/2, got {delta}"
        )));
    }
    if trials == 0 || depth == 0 {
        return Err(CoreError::InvalidArgument(
            "need at least one trial and depth >= 1".into(),
        ));
    }
    let d = tuple.dim();
    let m = tuple.len();
    let lower_bound = (1.0 - 2.0 * delta) / (1.0 - delta);
    let truncation_error = 2.0 * math::powi(delta, depth as u32 + 1) / (1.0 - delta);
    let threshold = lower_bound - truncation_error;

    let mut min_norm = f64::INFINITY;
    let mut failures = 0usize;
    let mut fd_max_error = 0.0_f64;
    let mut u_mats: Vec<Matrix> = (0..m).map(|_| Matrix::zeros(d)).collect();
    for trial in 0..trials {
        let (x, y) = random_word_pair(m, depth + 1, rng);
        let v = rng::unit_vector(rng, d);
        gradient_rows(tuple, &x, &y, &mut u_mats);
        let grad_norm = gradient_norm(&u_mats, &v);
        min_norm = min_norm.min(grad_norm);
        if grad_norm < threshold - 1e-12 {
            failures += 1;
        }
        if trial == 0 {
            fd_max_error = finite_difference_check(tuple, &x, &y, &v, &u_mats, rng)?;
        }
    }
    Ok(GradientBoundReport {
        trials,
        delta,
        lower_bound,
        truncation_error,
        min_gradient_norm: min_norm,
        failures,
        fd_max_error,
        pass: failures == 0 && fd_max_error <= 1e-6,
    })
}

fn random_word_pair<R: RngCore>(m: usize, len: usize, rng: &mut R) -> (Word, Word) {
    loop {
        let a: Vec<u8> = (0..len)
            .map(|_| (rng::uniform_index(rng, m) + 1) as u8)
            .collect();
        let b: Vec<u8> = (0..len)
            .map(|_| (rng::uniform_index(rng, m) + 1) as u8)
            .collect();
        if m == 1 {
            // Cannot differ in the first letter; caller gates on m >= 2.
            return (Word::new(a).unwrap(), Word::new(b).unwrap());
        }
        if a[0] != b[0] {
            return (Word::new(a).unwrap(), Word::new(b).unwrap());
        }
    }
}

/// Fills `U_j = [x_1 = j] I - [y_1 = j] I + sum_{x_{k+1} = j} T_{x|k}
/// - sum_{y_{k+1} = j} T_{y|k}`, truncated at the word length.
fn gradient_rows(tuple: &MapTuple, x: &Word, y: &Word, u_mats: &mut [Matrix]) {
    let d = tuple.dim();
    for u in u_mats.iter_mut() {
        *u = Matrix::zeros(d);
    }
    accumulate_word(tuple, x, 1.0, u_mats);
    accumulate_word(tuple, y, -1.0, u_mats);
}

fn accumulate_word(tuple: &MapTuple, word: &Word, sign: f64, u_mats: &mut [Matrix]) {
    let d = tuple.dim();
    let letters = word.letters();
    if letters.is_empty() {
        return;
    }
    let mut prefix = Matrix::identity(d);
    let mut tmp = Matrix::zeros(d);
    // k = 0 term: the identity attached to the first letter.
    add_scaled(&mut u_mats[letters[0] as usize - 1], &prefix, sign);
    for k in 1..letters.len() {
        prefix.mul_into(tuple.map_for(letters[k - 1]), &mut tmp);
        core::mem::swap(&mut prefix, &mut tmp);
        add_scaled(&mut u_mats[letters[k] as usize - 1], &prefix, sign);
    }
}

fn add_scaled(target: &mut Matrix, source: &Matrix, sign: f64) {
    let d = target.dim();
    for i in 0..d {
        for j in 0..d {
            target.set(i, j, target.get(i, j) + sign * source.get(i, j));
        }
    }
}

fn gradient_norm(u_mats: &[Matrix], v: &[f64]) -> f64 {
    let d = v.len();
    let mut acc = 0.0;
    for u in u_mats {
        for col in 0..d {
            let mut entry = 0.0;
            for row in 0..d {
                entry += v[row] * u.get(row, col);
            }
            acc += entry * entry;
        }
    }
    math::sqrt(acc)
}

fn finite_difference_check<R: RngCore>(
    tuple: &MapTuple,
    x: &Word,
    y: &Word,
    v: &[f64],
    u_mats: &[Matrix],
    rng: &mut R,
) -> Result<f64> {
    let d = tuple.dim();
    let m = tuple.len();
    let step = 1e-5;
    let base: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..d).map(|_| rng::uniform_in(rng, -1.0, 1.0)).collect())
        .collect();
    let eval = |translations: Vec<Vec<f64>>| -> Result<f64> {
        let ifs = IfsInstance::new(tuple.clone(), translations)?;
        let px = ifs.code_point(x)?;
        let py = ifs.code_point(y)?;
        let diff: Vec<f64> = px.iter().zip(&py).map(|(a, b)| a - b).collect();
        Ok(linalg::dot(v, &diff))
    };
    let mut worst = 0.0_f64;
    for j in 0..m {
        for c in 0..d {
            let mut plus = base.clone();
            plus[j][c] += step;
            let mut minus = base.clone();
            minus[j][c] -= step;
            let fd = (eval(plus)? - eval(minus)?) / (2.0 * step);
            let mut analytic = 0.0;
            for row in 0..d {
                analytic += v[row] * u_mats[j].get(row, c);
            }
            worst = worst.max(math::abs(fd - analytic));
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Decay integral normalizations
// ---------------------------------------------------------------------------

/// A normalized integral value: `lhs * normalizer` should be bounded across
/// a matrix family when the underlying inequality is two-sided.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RatioReport {
    pub lhs: f64,
    pub normalizer: f64,
    pub normalized: f64,
    pub converged: bool,
}

/// `int (1 + |Tx|)^{-N} |x|^t dx`, normalized by `a_d(T)^t |det T|`.
///
/// Deterministic radial-angular quadrature for d <= 2 (the radial part is a
/// Beta integral after substitution); d = 3 uses seeded Monte Carlo over the
/// sphere with `budget` samples.
pub fn decay_integral_ratio(
    matrix: &Matrix,
    t: f64,
    n_exp: f64,
    budget: u64,
) -> Result<RatioReport> {
    let d = matrix.dim();
    if d > 3 {
        return Err(CoreError::InvalidArgument("supported for d <= 3".into()));
    }
    if !(t >= 0.0) || !(n_exp > t + d as f64) {
        return Err(CoreError::InvalidArgument(format!(
            "requires t >= 0 and N > t + d, got t = {t}, N = {n_exp}, d = {d}"
        )));
    }
    let svals = singular_values(matrix);
    let alpha_d = svals[d - 1];
    if alpha_d <= 0.0 {
        return Err(CoreError::SingularMatrix {
            index: 0,
            det: matrix.det(),
        });
    }
    // In the singular basis: int (1 + |Sz|)^{-N} |z|^t dz with S diagonal.
    let (lhs, converged) = match d {
        1 => {
            let radial = halfline_power_integral(t, n_exp);
            (2.0 * radial.0 / math::powf(svals[0], t + 1.0), radial.1)
        }
        2 => {
            // Radial substitution u = r g(theta) leaves a Beta factor times
            // int g(theta)^{-(t+2)} d theta.
            let b = quad::beta(t + 2.0, n_exp - t - 2.0);
            let (ang, ok) = angular_power_integral_2d(&svals, t + 2.0);
            (b * ang, ok)
        }
        _ => {
            let b = quad::beta(t + 3.0, n_exp - t - 3.0);
            let ang = angular_power_integral_3d(&svals, t + 3.0, budget.max(1000));
            (b * ang, true)
        }
    };
    let normalizer = math::powf(alpha_d, t) * math::abs(matrix.det());
    Ok(RatioReport {
        lhs,
        normalizer,
        normalized: lhs * normalizer,
        converged,
    })
}

/// `int (1 + |Tx|)^{-N} |x|^{t-d} dx`, normalized by `phi^t(T)`;
/// requires non-integer `t` strictly between 0 and `d` and `N > t`.
pub fn singular_integral_ratio(
    matrix: &Matrix,
    t: f64,
    n_exp: f64,
    budget: u64,
) -> Result<RatioReport> {
    let d = matrix.dim();
    if d > 3 {
        return Err(CoreError::InvalidArgument("supported for d <= 3".into()));
    }
    let frac = t - math::floor(t);
    if !(t > 0.0) || t >= d as f64 || !(1e-9..=1.0 - 1e-9).contains(&frac) {
        return Err(CoreError::InvalidArgument(format!(
            "requires non-integer t in (0, d), got t = {t}, d = {d}"
        )));
    }
    if !(n_exp > t) {
        return Err(CoreError::InvalidArgument(format!(
            "requires N > t, got N = {n_exp}, t = {t}"
        )));
    }
    let svals = singular_values(matrix);
    if svals[d - 1] <= 0.0 {
        return Err(CoreError::SingularMatrix {
            index: 0,
            det: matrix.det(),
        });
    }
    let (lhs, converged) = match d {
        1 => {
            let radial = halfline_power_integral(t - 1.0, n_exp);
            (2.0 * radial.0 / math::powf(svals[0], t), radial.1)
        }
        2 => {
            let b = quad::beta(t, n_exp - t);
            let (ang, ok) = angular_power_integral_2d(&svals, t);
            (b * ang, ok)
        }
        _ => {
            let b = quad::beta(t, n_exp - t);
            let ang = angular_power_integral_3d(&svals, t, budget.max(1000));
            (b * ang, true)
        }
    };
    let phi = crate::dimension::phi_s_from_singular_values(&svals, t)?;
    Ok(RatioReport {
        lhs,
        normalizer: phi,
        normalized: lhs * phi,
        converged,
    })
}

/// `int_0^inf (1 + u)^{-N} u^p du` with `p > -1`, `N > p + 1`: adaptive
/// quadrature plus an analytic power tail. A singular endpoint (`p < 0`) is
/// flattened by the substitution `u = w^{1/(1+p)}`.
fn halfline_power_integral(p: f64, n_exp: f64) -> (f64, bool) {
    let mut converged = true;
    let mut total = 0.0;
    if p < 0.0 {
        let q = 1.0 + p;
        let inner = quad::adaptive_simpson(
            &|w: f64| {
                let u = math::powf(w, 1.0 / q);
                math::powf(1.0 + u, -n_exp) / q
            },
            0.0,
            1.0,
            1e-9,
            44,
        );
        converged &= inner.converged;
        total += inner.value;
    } else {
        let inner = quad::adaptive_simpson(
            &|u: f64| math::powf(1.0 + u, -n_exp) * math::powf(u, p),
            0.0,
            1.0,
            1e-9,
            44,
        );
        converged &= inner.converged;
        total += inner.value;
    }
    let cut = math::powf(10.0, (9.0 / (n_exp - p - 1.0)).min(6.0)).max(100.0);
    let outer = quad::adaptive_simpson(
        &|u: f64| math::powf(1.0 + u, -n_exp) * math::powf(u, p),
        1.0,
        cut,
        1e-9,
        48,
    );
    converged &= outer.converged;
    total += outer.value;
    // Tail: (1+u)^{-N} ~ u^{-N} up to relative 1/cut.
    total += math::powf(cut, p + 1.0 - n_exp) / (n_exp - p - 1.0);
    (total, converged)
}

/// `int_0^{2 pi} (a1^2 cos^2 + a2^2 sin^2)^{-p/2} d theta`.
fn angular_power_integral_2d(svals: &[f64], p: f64) -> (f64, bool) {
    let (a1, a2) = (svals[0], svals[1]);
    let quadrant = quad::adaptive_simpson(
        &|theta: f64| {
            let c = math::cos(theta);
            let s = math::sin(theta);
            math::powf(a1 * a1 * c * c + a2 * a2 * s * s, -0.5 * p)
        },
        0.0,
        0.5 * math::PI,
        1e-8,
        48,
    );
    (4.0 * quadrant.value, quadrant.converged)
}

/// Seeded Monte-Carlo `int_{S^2} g(w)^{-p} dw` for `g(w) = |S w|`.
fn angular_power_integral_3d(svals: &[f64], p: f64, samples: u64) -> f64 {
    let mut stream = rng::seeded(0x5eed_0003);
    let mut mean = 0.0;
    for i in 0..samples {
        let z = rng::uniform_in(&mut stream, -1.0, 1.0);
        let phi = rng::uniform_in(&mut stream, 0.0, math::TAU);
        let rho = math::sqrt((1.0 - z * z).max(0.0));
        let w = [rho * math::cos(phi), rho * math::sin(phi), z];
        let (g0, g1, g2v) = (svals[0] * w[0], svals[1] * w[1], svals[2] * w[2]);
        let g2 = g0 * g0 + g1 * g1 + g2v * g2v;
        let x = math::powf(g2, -0.5 * p);
        mean += (x - mean) / (i + 1) as f64;
    }
    4.0 * math::PI * mean
}

// ---------------------------------------------------------------------------
// Slice integral
// ---------------------------------------------------------------------------

/// `int_R dy / (sum |x_i|^s + |y|^s)` against `1 / sum |x_i|^{s-1}`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SliceIntegralReport {
    pub integral: f64,
    /// `sum |x_i|^{s-1}`.
    pub comparison_sum: f64,
    /// `integral * comparison_sum`; bounded over a family when the two-sided
    /// comparison holds.
    pub ratio: f64,
    pub converged: bool,
}

pub fn slice_integral_ratio(x: &[f64], s: f64) -> Result<SliceIntegralReport> {
    if !(s > 1.0) {
        return Err(CoreError::InvalidArgument(format!(
            "slice integral requires s > 1, got {s}"
        )));
    }
    let a: f64 = x.iter().map(|v| math::powf(math::abs(*v), s)).sum();
    if !(a > 0.0) {
        return Err(CoreError::InvalidArgument("x must be non-zero".into()));
    }
    let scale = math::powf(a, 1.0 / s);
    let f = |y: f64| 1.0 / (a + math::powf(y, s));
    let near = quad::adaptive_simpson(&f, 0.0, scale, 1e-9, 48);
    let mid = quad::adaptive_simpson(&f, scale, scale * 1e4, 1e-9, 48);
    // Tail sum of int y^{-s} (1 + A y^{-s})^{-1} expanded geometrically.
    let y0 = scale * 1e4;
    let mut tail = 0.0;
    let mut term_sign = 1.0;
    for k in 0..4 {
        let power = s * (k as f64 + 1.0) - 1.0;
        tail += term_sign * math::powf(a, k as f64) * math::powf(y0, -power) / power;
        term_sign = -term_sign;
    }
    let integral = 2.0 * (near.value + mid.value + tail);
    let comparison_sum: f64 = x.iter().map(|v| math::powf(math::abs(*v), s - 1.0)).sum();
    Ok(SliceIntegralReport {
        integral,
        comparison_sum,
        ratio: integral * comparison_sum,
        converged: near.converged && mid.converged,
    })
}

// ---------------------------------------------------------------------------
// Stationary phase sweep
// ---------------------------------------------------------------------------

/// One frequency of the stationary-phase sweep.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StatPhasePoint {
    pub xi: f64,
    pub integral_modulus: f64,
    /// `|I(xi)| * (1 + |T*_{x and y} xi|)^N`; bounded in `xi` when the decay
    /// estimate holds.
    pub normalized: f64,
}

/// Deterministic quadrature of `int psi(a) exp(-i xi (pi_a(x) - pi_a(y))) da`
/// for scalar systems with up to three maps, over a sweep of frequencies.
///
/// The phase is linear in `a`, so the integral is the 1-D transform of the
/// bump's slab marginal along the phase direction; the marginal is
/// precomputed once and the oscillatory factor integrated on a frequency-
/// scaled Simpson grid.
pub fn stationary_phase_sweep(
    ifs: &IfsInstance,
    bump: &BumpFunction,
    x: &Word,
    y: &Word,
    xis: &[f64],
    n_exp: u32,
) -> Result<Vec<StatPhasePoint>> {
    if ifs.dim() != 1 || ifs.map_count() > 3 {
        return Err(CoreError::InvalidArgument(
            "stationary phase sweep supports d = 1 with at most 3 maps".into(),
        ));
    }
    if x == y {
        return Err(CoreError::InvalidArgument("words must differ".into()));
    }
    let tuple = ifs.tuple();
    let m = tuple.len();
    // Phase coefficients: pi_a(x) - pi_a(y) = sum_j u_j a_j (scalars here).
    let mut u_mats: Vec<Matrix> = (0..m).map(|_| Matrix::zeros(1)).collect();
    gradient_rows(tuple, x, y, &mut u_mats);
    let coeffs: Vec<f64> = u_mats.iter().map(|u| u.get(0, 0)).collect();
    let u_norm = math::sqrt(coeffs.iter().map(|c| c * c).sum::<f64>());
    let lcp = linalg::longest_common_prefix(x, y);
    let prefix_scale = math::abs(linalg::word_product(tuple, &lcp)?.get(0, 0));

    let rho = bump.radius;
    let max_lambda = xis
        .iter()
        .map(|xi| math::abs(*xi) * u_norm)
        .fold(0.0_f64, f64::max);
    // At least 24 nodes per oscillation at the fastest frequency.
    let panels = (((max_lambda * rho / math::PI) * 24.0) as usize)
        .clamp(512, 1 << 18)
        .next_multiple_of(2);
    let nodes = panels + 1;
    let h = 2.0 * rho / panels as f64;
    let marginal: Vec<f64> = (0..nodes)
        .map(|i| slab_marginal(bump, m, -rho + h * i as f64))
        .collect();

    let mut out = Vec::with_capacity(xis.len());
    for &xi in xis {
        let lambda = xi * u_norm;
        // Simpson weights over the cached marginal, complex exponential.
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &g) in marginal.iter().enumerate() {
            let w = if i == 0 || i == nodes - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let z = -rho + h * i as f64;
            let phase = lambda * z;
            re += w * g * math::cos(phase);
            im -= w * g * math::sin(phase);
        }
        re *= h / 3.0;
        im *= h / 3.0;
        let modulus = math::sqrt(re * re + im * im);
        let damping = math::powi(1.0 + math::abs(prefix_scale * xi), n_exp);
        out.push(StatPhasePoint {
            xi,
            integral_modulus: modulus,
            normalized: modulus * damping,
        });
    }
    Ok(out)
}

/// Marginal of the radial bump over the hyperplane at signed distance `z`
/// from the center, for ambient dimension `md` (= m here since d = 1).
fn slab_marginal(bump: &BumpFunction, md: usize, z: f64) -> f64 {
    let rho = bump.radius;
    if math::abs(z) >= rho {
        return 0.0;
    }
    match md {
        1 => bump.profile(z / rho),
        2 => {
            let half_width = math::sqrt(rho * rho - z * z);
            let inner = quad::adaptive_simpson(
                &|w: f64| bump.profile(math::sqrt(z * z + w * w) / rho),
                0.0,
                half_width,
                1e-9,
                36,
            );
            2.0 * inner.value
        }
        _ => {
            let half_width = math::sqrt(rho * rho - z * z);
            let inner = quad::adaptive_simpson(
                &|w: f64| w * bump.profile(math::sqrt(z * z + w * w) / rho),
                0.0,
                half_width,
                1e-9,
                36,
            );
            math::TAU * inner.value
        }
    }
}
