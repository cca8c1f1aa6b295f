//! Singular value function, word weights, and the dimension certificates
//! driving the non-empty-interior criteria.

use crate::error::{CoreError, Result};
use crate::linalg::{
    self, singular_values, smallest_singular_value, walk_product_tree, MapTuple, Matrix, Walk, Word,
};
use crate::math;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::Serialize;

/// Default bisection tolerance in the exponent variable.
pub const BISECT_TOL: f64 = 1e-4;
/// Default node budget for depth sweeps.
pub const DEFAULT_NODE_BUDGET: u64 = 100_000_000;
/// Relative tolerance for the conformality test (`T^T T` proportional to `I`).
pub const CONFORMAL_REL_TOL: f64 = 1e-9;

const LEAF_CACHE_CAP: usize = 4_000_000;

// ---------------------------------------------------------------------------
// Singular value function and word weight
// ---------------------------------------------------------------------------

/// Singular value function `phi^s`.
///
/// For `0 <= s <= d` this is `a_1 ... a_k * a_{k+1}^(s-k)` with `k = floor(s)`
/// (convention `0^0 = 1`); for `s > d` it switches to `|det|^(s/d)`.
pub fn phi_s(m: &Matrix, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "phi^s requires s >= 0, got {s}"
        )));
    }
    let d = m.dim();
    if s > d as f64 {
        return Ok(math::powf(math::abs(m.det()), s / d as f64));
    }
    let svals = singular_values(m);
    phi_s_from_singular_values(&svals, s)
}

/// `phi^s` evaluated on precomputed descending singular values (`s <= d`).
pub fn phi_s_from_singular_values(svals: &[f64], s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "phi^s requires s >= 0, got {s}"
        )));
    }
    let d = svals.len();
    let k = (math::floor(s) as usize).min(d);
    let mut value = 1.0;
    for sv in &svals[..k] {
        value *= sv;
    }
    let frac = s - k as f64;
    if frac > 0.0 {
        value *= math::powf(svals[k], frac);
    }
    Ok(value)
}

/// Word weight `g_t(I) = a_d(T_I)^t |det T_I|`, with `g_t(empty) = 1`.
pub fn g_t(t_val: f64, tuple: &MapTuple, word: &Word) -> Result<f64> {
    if !(t_val >= 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "g_t requires t >= 0, got {t_val}"
        )));
    }
    let product = linalg::word_product(tuple, word)?;
    Ok(g_t_of_product(t_val, &product))
}

/// `g_t` evaluated on an explicit product matrix.
#[inline]
pub fn g_t_of_product(t_val: f64, product: &Matrix) -> f64 {
    let alpha = smallest_singular_value(product);
    math::powf(alpha, t_val) * math::abs(product.det())
}

// ---------------------------------------------------------------------------
// t-value certificate
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum TValueStatus {
    CertifiedAboveD,
    Inconclusive,
}

/// Outcome of the depth sweep for the critical exponent `t(T_1, ..., T_m)`.
///
/// `CertifiedAboveD` means some depth `n` has `sum_{|I| = n} g_d(I) > 1`,
/// which holds iff `t(T_1, ..., T_m) > d`. Only lower bounds are certifiable
/// this way: `g_t` has no submultiplicative upper envelope, so `upper` of the
/// true value is never claimed.
#[derive(Clone, Debug, Serialize)]
pub struct TValueCertificate {
    pub status: TValueStatus,
    /// Depth of the certifying sum (0 when inconclusive).
    pub witness_depth: usize,
    /// `sum_{|I| = witness_depth} g_d(I)`; when inconclusive, the best sum seen.
    pub witness_sum: f64,
    /// False only if the node budget ran out after the partial sum had already
    /// crossed 1 (the partial sum still certifies; terms are positive).
    pub witness_sum_complete: bool,
    /// Certified lower bound for `t(T_1, ..., T_m)` (equals `d` when inconclusive).
    pub lower_bound: f64,
    /// Largest depth sum seen across the sweep, with its depth.
    pub best_sum: f64,
    pub best_depth: usize,
    pub nodes_visited: u64,
    pub budget_exhausted: bool,
}

/// Searches depths `1..=max_depth` for a certificate that `t(T...) > d`.
///
/// On success, bisects at the witness depth for the largest `t` whose depth
/// sum still reaches 1, reported as `lower_bound`.
pub fn certify_t_above_d(
    tuple: &MapTuple,
    max_depth: usize,
    budget: u64,
) -> Result<TValueCertificate> {
    if max_depth == 0 {
        return Err(CoreError::InvalidArgument(
            "certify_t_above_d requires max_depth >= 1".into(),
        ));
    }
    let d = tuple.dim();
    let mut nodes: u64 = 0;
    let mut best_sum = 0.0;
    let mut best_depth = 0;
    let mut cache: Vec<(f64, f64)> = Vec::new();

    for depth in 1..=max_depth {
        let mut sum = 0.0;
        let mut complete = true;
        let mut out_of_budget = false;
        cache.clear();
        let leaf_estimate = (tuple.len() as u64).checked_pow(depth as u32);
        let cache_this_depth = leaf_estimate.is_some_and(|n| n <= LEAF_CACHE_CAP as u64);
        walk_product_tree(tuple, &Word::empty(), depth, &mut |letters, product| {
            nodes += 1;
            if nodes > budget {
                complete = false;
                out_of_budget = true;
                return Walk::Halt;
            }
            if letters.len() == depth {
                let alpha = smallest_singular_value(product);
                let det = math::abs(product.det());
                sum += math::powi(alpha, d as u32) * det;
                if cache_this_depth {
                    cache.push((math::ln(alpha), math::ln(det)));
                }
            }
            Walk::Continue
        })?;
        if sum > best_sum {
            best_sum = sum;
            best_depth = depth;
        }
        if sum > 1.0 {
            // Super-multiplicativity makes deeper sums certify as well; the
            // first witness depth is the cheapest certificate.
            let lower_bound = if complete && cache_this_depth {
                bisect_largest_t(&cache, d as f64)
            } else {
                d as f64
            };
            return Ok(TValueCertificate {
                status: TValueStatus::CertifiedAboveD,
                witness_depth: depth,
                witness_sum: sum,
                witness_sum_complete: complete,
                lower_bound,
                best_sum,
                best_depth,
                nodes_visited: nodes,
                budget_exhausted: out_of_budget,
            });
        }
        if out_of_budget {
            return Ok(TValueCertificate {
                status: TValueStatus::Inconclusive,
                witness_depth: 0,
                witness_sum: best_sum,
                witness_sum_complete: false,
                lower_bound: d as f64,
                best_sum,
                best_depth,
                nodes_visited: nodes,
                budget_exhausted: true,
            });
        }
    }
    Ok(TValueCertificate {
        status: TValueStatus::Inconclusive,
        witness_depth: 0,
        witness_sum: best_sum,
        witness_sum_complete: true,
        lower_bound: d as f64,
        best_sum,
        best_depth,
        nodes_visited: nodes,
        budget_exhausted: false,
    })
}

/// Largest `t` with `sum exp(t ln a + ln det) >= 1` over the cached leaves.
fn bisect_largest_t(leaves: &[(f64, f64)], d: f64) -> f64 {
    let eval = |t: f64| -> f64 {
        leaves
            .iter()
            .map(|&(ln_alpha, ln_det)| math::exp(t * ln_alpha + ln_det))
            .sum()
    };
    let mut lo = d;
    let mut hi = d + 1.0;
    let mut step = 1.0;
    while eval(hi) >= 1.0 {
        lo = hi;
        step *= 2.0;
        hi += step;
        if hi > d + 1e6 {
            return lo;
        }
    }
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if eval(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

// ---------------------------------------------------------------------------
// Affinity dimension bracket
// ---------------------------------------------------------------------------

/// Two-sided enclosure of the affinity dimension.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AffinityBracket {
    pub lower: f64,
    pub upper: f64,
    pub depth: usize,
}

impl AffinityBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Brackets the affinity dimension from depth-`n` pressure sums.
///
/// Upper bounds come from submultiplicativity of `phi^s` (every depth's zero
/// is an upper bound; the minimum over depths is reported). Lower bounds use
/// the supermultiplicative minorant `a_d(T_I)^s` of `phi^s`, whose depth
/// pressures increase to a limit below the true one. When the family is
/// simultaneously diagonalizable (commuting symmetric maps) the limiting
/// pressure reduces exactly to finitely many one-step pressures, and the
/// bracket collapses to bisection tolerance around that value.
pub fn affinity_bracket(tuple: &MapTuple, depth: usize, tol: f64) -> Result<AffinityBracket> {
    if depth == 0 || !(tol > 0.0) {
        return Err(CoreError::InvalidArgument(
            "affinity_bracket requires depth >= 1 and tol > 0".into(),
        ));
    }
    let d = tuple.dim();
    let m = tuple.len();
    let mut total_records: u64 = 0;
    let mut level_count: u64 = 1;
    for _ in 0..depth {
        level_count = level_count.saturating_mul(m as u64);
        total_records = total_records.saturating_add(level_count);
    }
    if total_records > LEAF_CACHE_CAP as u64 {
        return Err(CoreError::InvalidArgument(format!(
            "affinity_bracket: m^depth = {total_records} exceeds the enumeration cap"
        )));
    }

    // Flat per-level storage of descending singular values.
    let mut levels: Vec<Vec<f64>> = vec![Vec::new(); depth + 1];
    walk_product_tree(tuple, &Word::empty(), depth, &mut |letters, product| {
        let svals = singular_values(product);
        levels[letters.len()].extend_from_slice(&svals);
        Walk::Continue
    })?;

    let det_branch = |s: f64| -> f64 {
        let sum: f64 = tuple
            .dets()
            .iter()
            .map(|det| math::powf(math::abs(*det), s / d as f64))
            .sum();
        math::ln(sum)
    };
    let upper_pressure = |n: usize, s: f64| -> f64 {
        if s > d as f64 {
            return det_branch(s);
        }
        let recs = &levels[n];
        let mut sum = 0.0;
        for svals in recs.chunks_exact(d) {
            sum += phi_s_from_singular_values(svals, s).unwrap_or(0.0);
        }
        math::ln(sum) / n as f64
    };
    let lower_pressure = |n: usize, s: f64| -> f64 {
        if s > d as f64 {
            return det_branch(s);
        }
        let recs = &levels[n];
        let mut sum = 0.0;
        for svals in recs.chunks_exact(d) {
            sum += math::powf(svals[d - 1], s);
        }
        math::ln(sum) / n as f64
    };

    let hi_start = upper_root_seed(tuple, d);
    let mut upper = f64::INFINITY;
    let mut lower: f64 = 0.0;
    for n in 1..=depth {
        let (_, hi) = bisect_decreasing(|s| upper_pressure(n, s), hi_start, tol)?;
        upper = upper.min(hi);
        let (lo, _) = bisect_decreasing(|s| lower_pressure(n, s), hi_start, tol)?;
        lower = lower.max(lo);
    }

    if let Some(eigenvalues) = simultaneous_spectrum(tuple) {
        let exact = |s: f64| exact_commuting_pressure(&eigenvalues, tuple, s);
        let (lo, hi) = bisect_decreasing(exact, hi_start, tol.min(1e-6))?;
        lower = lower.max(lo);
        upper = upper.min(hi);
    }

    lower = lower.min(upper);
    Ok(AffinityBracket {
        lower,
        upper,
        depth,
    })
}

fn upper_root_seed(tuple: &MapTuple, d: usize) -> f64 {
    // Pressure <= ln m + s ln delta, so the root is below ln m / ln(1/delta).
    let m = tuple.len() as f64;
    let delta = tuple.delta();
    (math::ln(m) / math::ln(1.0 / delta)).max(d as f64) + 1.0
}

/// Bisects a decreasing function to a `[lo, hi]` enclosure of its zero.
fn bisect_decreasing(f: impl Fn(f64) -> f64, hi_seed: f64, tol: f64) -> Result<(f64, f64)> {
    let mut lo = 0.0;
    if f(lo) <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let mut hi = hi_seed;
    let mut tries = 0;
    while f(hi) > 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(CoreError::FlatPressure { lo, hi });
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let value = f(mid);
        if value > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if !value.is_finite() {
            return Err(CoreError::FlatPressure { lo, hi });
        }
    }
    Ok((lo, hi))
}

/// Joint eigenvalues (per map, per coordinate) when all maps are symmetric
/// and commute, i.e. share an orthogonal eigenbasis. Returns `None` when the
/// structure is absent or the joint diagonalization fails numerically.
fn simultaneous_spectrum(tuple: &MapTuple) -> Option<Vec<Vec<f64>>> {
    let d = tuple.dim();
    if d == 1 {
        return Some(tuple.maps().iter().map(|m| vec![m.get(0, 0)]).collect());
    }
    let scale = tuple
        .maps()
        .iter()
        .map(|m| m.max_abs_entry())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for m in tuple.maps() {
        let asym = m.sub(&m.transpose()).max_abs_entry();
        if asym > 1e-9 * scale {
            return None;
        }
    }
    let (comm, _, _) = tuple.max_commutator();
    if comm > 1e-9 * scale * scale {
        return None;
    }
    // Generic symmetric combination; its eigenbasis diagonalizes every map.
    let mut combo = Matrix::zeros(d);
    for (i, m) in tuple.maps().iter().enumerate() {
        combo = combo.add(&m.scaled(1.0 + 0.618_033_988_749_895 * (i + 1) as f64));
    }
    let (_, basis) = linalg::sym_eigen(&combo);
    let basis_t = basis.transpose();
    let mut spectrum = Vec::with_capacity(tuple.len());
    for m in tuple.maps() {
        let diag = basis_t.mul(m).mul(&basis);
        let mut off: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    off = off.max(math::abs(diag.get(i, j)));
                }
            }
        }
        if off > 1e-8 * scale {
            return None;
        }
        spectrum.push((0..d).map(|i| diag.get(i, i)).collect());
    }
    Some(spectrum)
}

/// Limiting pressure of a simultaneously diagonalizable family.
///
/// On `[k, k+1]` the pressure is the max over coordinate choices (a size-`k`
/// set `S` and an extra coordinate `l`) of the one-step pressure
/// `ln sum_i prod_{j in S} |l_j^(i)| * |l_l^(i)|^(s-k)`; interchanging the
/// Legendre maximum with the coordinate maximum makes this exact.
fn exact_commuting_pressure(spectrum: &[Vec<f64>], tuple: &MapTuple, s: f64) -> f64 {
    let d = spectrum[0].len();
    if s >= d as f64 {
        let sum: f64 = tuple
            .dets()
            .iter()
            .map(|det| math::powf(math::abs(*det), s / d as f64))
            .sum();
        return math::ln(sum);
    }
    let k = math::floor(s) as usize;
    let frac = s - k as f64;
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1u32 << d) {
        if mask.count_ones() as usize != k {
            continue;
        }
        for l in 0..d {
            if mask & (1 << l) != 0 {
                continue;
            }
            let mut sum = 0.0;
            for eig in spectrum {
                let mut term = 1.0;
                for (j, e) in eig.iter().enumerate() {
                    if mask & (1 << j) != 0 {
                        term *= math::abs(*e);
                    }
                }
                term *= math::powf(math::abs(eig[l]), frac);
                sum += term;
            }
            best = best.max(math::ln(sum));
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Hypothesis checkers
// ---------------------------------------------------------------------------

/// Report on the two first-level sufficient conditions: (i) the level-one
/// singular sum exceeds 1, and (ii) all maps are scalar multiples of
/// orthogonal matrices with squared determinant sum exceeding 1.
#[derive(Clone, Debug, Serialize)]
pub struct FirstLevelReport {
    pub maps: usize,
    pub dim: usize,
    pub max_norm: f64,
    pub norm_gate_passed: bool,
    /// `sum_i a_d(T_i)^d |det T_i|` (condition (i) requires > 1).
    pub condition_i_sum: f64,
    pub condition_i_holds: bool,
    pub all_conformal: bool,
    pub max_conformality_residual: f64,
    /// `sum_i |det T_i|^2` (condition (ii) requires conformality and > 1).
    pub condition_ii_sum: f64,
    pub condition_ii_holds: bool,
    pub certified: bool,
    /// `sum_i |det T_i|`, reported for the conjectured weaker condition.
    /// Informational only; never treated as a certificate.
    pub det_sum_informational: f64,
    pub det_sum_exceeds_one: bool,
}

pub fn check_first_level(tuple: &MapTuple) -> FirstLevelReport {
    let d = tuple.dim();
    let max_norm = tuple.norms().iter().fold(0.0_f64, |a, &b| a.max(b));
    let norm_gate_passed = max_norm < 0.5;

    let mut condition_i_sum = 0.0;
    let mut condition_ii_sum = 0.0;
    let mut det_sum = 0.0;
    let mut all_conformal = true;
    let mut max_residual: f64 = 0.0;
    for (m, &det) in tuple.maps().iter().zip(tuple.dets()) {
        let alpha_d = smallest_singular_value(m);
        condition_i_sum += math::powi(alpha_d, d as u32) * math::abs(det);
        condition_ii_sum += det * det;
        det_sum += math::abs(det);

        let gram = m.transpose().mul(m);
        let mut trace = 0.0;
        for i in 0..d {
            trace += gram.get(i, i);
        }
        let c = trace / d as f64;
        let mut residual: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { c } else { 0.0 };
                residual = residual.max(math::abs(gram.get(i, j) - target));
            }
        }
        let rel = residual / c.max(f64::MIN_POSITIVE);
        max_residual = max_residual.max(rel);
        if rel > CONFORMAL_REL_TOL {
            all_conformal = false;
        }
    }

    let condition_i_holds = condition_i_sum > 1.0;
    let condition_ii_holds = all_conformal && condition_ii_sum > 1.0;
    FirstLevelReport {
        maps: tuple.len(),
        dim: d,
        max_norm,
        norm_gate_passed,
        condition_i_sum,
        condition_i_holds,
        all_conformal,
        max_conformality_residual: max_residual,
        condition_ii_sum,
        condition_ii_holds,
        certified: norm_gate_passed && (condition_i_holds || condition_ii_holds),
        det_sum_informational: det_sum,
        det_sum_exceeds_one: det_sum > 1.0,
    }
}

/// Report on the commuting-family condition: pairwise commutation plus a
/// squared determinant sum exceeding 1, behind the same norm gate.
#[derive(Clone, Debug, Serialize)]
pub struct CommutingFamilyReport {
    pub maps: usize,
    pub dim: usize,
    pub max_norm: f64,
    pub norm_gate_passed: bool,
    pub max_commutator_norm: f64,
    /// 1-based indices of the worst pair when commutation fails.
    pub offending_pair: Option<(usize, usize)>,
    pub commuting: bool,
    pub det_sq_sum: f64,
    pub det_sq_exceeds_one: bool,
    pub certified: bool,
}

pub fn check_commuting_family(tuple: &MapTuple, tol: f64) -> Result<CommutingFamilyReport> {
    if !(tol > 0.0) {
        return Err(CoreError::InvalidArgument(
            "check_commuting_family requires tol > 0".into(),
        ));
    }
    let max_norm = tuple.norms().iter().fold(0.0_f64, |a, &b| a.max(b));
    let norm_gate_passed = max_norm < 0.5;
    let (comm_norm, i, j) = tuple.max_commutator();
    let commuting = comm_norm <= tol;
    let det_sq_sum: f64 = tuple.dets().iter().map(|d| d * d).sum();
    let det_sq_exceeds_one = det_sq_sum > 1.0;
    Ok(CommutingFamilyReport {
        maps: tuple.len(),
        dim: tuple.dim(),
        max_norm,
        norm_gate_passed,
        max_commutator_norm: comm_norm,
        offending_pair: if commuting { None } else { Some((i, j)) },
        commuting,
        det_sq_sum,
        det_sq_exceeds_one,
        certified: norm_gate_passed && commuting && det_sq_exceeds_one,
    })
}

/// Default commutator tolerance used by callers that do not pass their own.
pub fn default_commutator_tol(tuple: &MapTuple) -> f64 {
    let max_norm = tuple.norms().iter().fold(0.0_f64, |a, &b| a.max(b));
    1e-10 * max_norm * max_norm
}
