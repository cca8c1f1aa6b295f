//! Commuting-family sumset construction.
//!
//! For a commuting tuple, depth-`N` products depend only on the multidegree
//! `(p_1, ..., p_m)`, so certified block classes are found by searching
//! multidegrees (never the `m^N` words). A certified class `(A, class)` with
//! `#class * |det A|^t > 1` induces two sub-systems whose attractors `E` and
//! `F` satisfy `K contains E + F + v`; the split certificate carries all of
//! the derived data and can be checked by sampling.

use crate::error::{CoreError, Result};
use crate::geometry::{chaos_sample, IfsInstance, PointCloud, SymbolSource};
use crate::linalg::{self, MapTuple, Matrix, Word};
use crate::math;
use crate::rng;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand_core::RngCore;
use serde::Serialize;

const MATRIX_MERGE_TOL: f64 = 1e-12;
const MAX_CLASS_WORDS: u128 = 2_000_000;

// ---------------------------------------------------------------------------
// Block classes
// ---------------------------------------------------------------------------

/// A depth-`N` product class of a commuting family: the matrix
/// `A = T_1^{p_1} ... T_m^{p_m}`, every multidegree realizing it, and the
/// number of words whose product equals `A`.
#[derive(Clone, Debug, Serialize)]
pub struct BlockClass {
    pub n: usize,
    /// All multidegrees merged into this class (equal maps can make distinct
    /// multidegrees produce identical matrices). The first is representative.
    pub multidegrees: Vec<Vec<usize>>,
    #[serde(serialize_with = "serialize_matrix")]
    pub matrix: Matrix,
    /// `#{ I : |I| = N, T_I = matrix }`.
    pub count: u128,
    pub t_val: f64,
    /// `count * |det matrix|^t`; a score above 1 certifies the class.
    pub score: f64,
}

fn serialize_matrix<S: serde::Serializer>(
    m: &Matrix,
    s: S,
) -> core::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeStruct;
    let mut st = s.serialize_struct("Matrix", 2)?;
    st.serialize_field("dim", &m.dim())?;
    st.serialize_field("entries", m.entries())?;
    st.end()
}

fn multinomial(n: usize, degrees: &[usize]) -> Result<u128> {
    let mut result: u128 = 1;
    let mut remaining = n;
    for &p in degrees {
        // result *= C(remaining, p)
        let mut choose: u128 = 1;
        for i in 0..p {
            choose = choose
                .checked_mul((remaining - i) as u128)
                .ok_or_else(|| CoreError::InvalidArgument("multinomial overflow".into()))?;
            choose /= (i + 1) as u128;
        }
        result = result
            .checked_mul(choose)
            .ok_or_else(|| CoreError::InvalidArgument("multinomial overflow".into()))?;
        remaining -= p;
    }
    Ok(result)
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; parts];
    fn rec(total: usize, idx: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if idx + 1 == current.len() {
            current[idx] = total;
            out.push(current.clone());
            return;
        }
        for p in 0..=total {
            current[idx] = p;
            rec(total - p, idx + 1, current, out);
        }
    }
    rec(total, 0, &mut current, &mut out);
    out
}

/// All depth-`n` product classes of a commuting tuple, merged by matrix
/// equality and sorted by descending score.
pub fn enumerate_block_classes(tuple: &MapTuple, n: usize, t_val: f64) -> Result<Vec<BlockClass>> {
    if n == 0 {
        return Err(CoreError::InvalidArgument(
            "block length must be >= 1".into(),
        ));
    }
    let m = tuple.len();
    let d = tuple.dim();
    // Power tables T_i^0..n.
    let mut powers: Vec<Vec<Matrix>> = Vec::with_capacity(m);
    for map in tuple.maps() {
        let mut row = Vec::with_capacity(n + 1);
        row.push(Matrix::identity(d));
        for k in 1..=n {
            row.push(row[k - 1].mul(map));
        }
        powers.push(row);
    }
    let mut classes: Vec<BlockClass> = Vec::new();
    for degrees in compositions(n, m) {
        let mut a = Matrix::identity(d);
        for (i, &p) in degrees.iter().enumerate() {
            if p > 0 {
                a = a.mul(&powers[i][p]);
            }
        }
        let count = multinomial(n, &degrees)?;
        let scale = a.max_abs_entry().max(1.0);
        let existing = classes.iter_mut().find(|c| {
            c.matrix
                .entries()
                .iter()
                .zip(a.entries())
                .all(|(x, y)| math::abs(x - y) <= MATRIX_MERGE_TOL * scale)
        });
        match existing {
            Some(c) => {
                c.count = c
                    .count
                    .checked_add(count)
                    .ok_or_else(|| CoreError::InvalidArgument("class count overflow".into()))?;
                c.multidegrees.push(degrees);
            }
            None => classes.push(BlockClass {
                n,
                multidegrees: vec![degrees],
                matrix: a,
                count,
                t_val,
                score: 0.0,
            }),
        }
    }
    for c in &mut classes {
        c.multidegrees.sort();
        c.score = c.count as f64 * math::powf(math::abs(c.matrix.det()), t_val);
    }
    classes.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    Ok(classes)
}

/// Default exponent grid: 2.50 down to 2.01 in steps of 0.01. The upper end
/// of the range is a tool choice; override with an explicit grid when needed.
pub fn default_t_grid() -> Vec<f64> {
    (0..50).map(|k| 2.50 - 0.01 * k as f64).collect()
}

/// Searches the exponent grid (in the given order) and block lengths
/// `1..=max_n` for a class with score above 1. Multidegree search only;
/// never enumerates the `m^N` words.
pub fn find_certified_block(
    tuple: &MapTuple,
    t_grid: &[f64],
    max_n: usize,
    commutator_tol: f64,
) -> Result<BlockClass> {
    let (comm, i, j) = tuple.max_commutator();
    if comm > commutator_tol {
        return Err(CoreError::NotCommuting {
            i,
            j,
            norm: comm,
            tol: commutator_tol,
        });
    }
    if t_grid.is_empty() || max_n == 0 {
        return Err(CoreError::InvalidArgument(
            "find_certified_block needs a non-empty grid and max_n >= 1".into(),
        ));
    }
    let mut best_score = 0.0_f64;
    for &t_val in t_grid {
        if !(t_val > 2.0) {
            return Err(CoreError::InvalidArgument(format!(
                "split exponent grid must stay above 2, got {t_val}"
            )));
        }
        for n in 1..=max_n {
            let classes = enumerate_block_classes(tuple, n, t_val)?;
            if let Some(best) = classes.first() {
                best_score = best_score.max(best.score);
                if best.score > 1.0 {
                    return Ok(best.clone());
                }
            }
        }
    }
    Err(CoreError::NoCertifiedClass { max_n, best_score })
}

/// All words realizing the class (multiset permutations of its multidegrees),
/// sorted lexicographically.
pub fn class_words(tuple: &MapTuple, class: &BlockClass) -> Result<Vec<Word>> {
    if class.count > MAX_CLASS_WORDS {
        return Err(CoreError::InvalidArgument(format!(
            "class has {} words, beyond the enumeration cap",
            class.count
        )));
    }
    let m = tuple.len();
    let mut words = Vec::with_capacity(class.count as usize);
    for degrees in &class.multidegrees {
        let mut remaining = degrees.clone();
        let mut letters = Vec::with_capacity(class.n);
        fn rec(
            remaining: &mut [usize],
            letters: &mut Vec<u8>,
            n: usize,
            m: usize,
            out: &mut Vec<Word>,
        ) {
            if letters.len() == n {
                out.push(Word::new(letters.clone()).expect("valid letters"));
                return;
            }
            for i in 0..m {
                if remaining[i] > 0 {
                    remaining[i] -= 1;
                    letters.push((i + 1) as u8);
                    rec(remaining, letters, n, m, out);
                    letters.pop();
                    remaining[i] += 1;
                }
            }
        }
        rec(&mut remaining, &mut letters, class.n, m, &mut words);
    }
    words.sort();
    words.dedup();
    Ok(words)
}

// ---------------------------------------------------------------------------
// Split certificate
// ---------------------------------------------------------------------------

/// The data witnessing `K contains E + F + v` for a certified block class.
#[derive(Clone, Debug)]
pub struct SplitCertificate {
    pub block: BlockClass,
    /// The fixed class word `J` (lexicographically smallest by default).
    pub j_word: Word,
    /// Words of the class, sorted; the alphabet of the sub-systems.
    pub class_words: Vec<Word>,
    /// `{ I . J : I in class }`, the block set of the uniform measure.
    pub lambda_words: Vec<Word>,
    /// Attractor system of `E`: maps `x -> A^2 x + (a_I + A a_J)`.
    pub e_ifs: IfsInstance,
    /// Attractor system of `F`: maps `x -> A^2 x + (a_J + A a_I)`.
    pub f_ifs: IfsInstance,
    /// `v = -(I - A)^{-1} a_J`.
    pub v: Vec<f64>,
    /// Block translation `a_J`.
    pub a_j: Vec<f64>,
    /// `A^2`, the contraction of both sub-systems.
    pub square: Matrix,
}

/// Builds the split certificate for a certified class. `j` defaults to the
/// lexicographically smallest class word; an explicit `j` must belong to the
/// class.
pub fn build_split(
    ifs: &IfsInstance,
    class: &BlockClass,
    j: Option<&Word>,
) -> Result<SplitCertificate> {
    let tuple = ifs.tuple();
    let words = class_words(tuple, class)?;
    if words.is_empty() {
        return Err(CoreError::InvalidArgument("empty block class".into()));
    }
    let j_word = match j {
        Some(w) => {
            if w.len() != class.n {
                return Err(CoreError::WordNotInClass);
            }
            let prod = linalg::word_product(tuple, w)?;
            let scale = class.matrix.max_abs_entry().max(1.0);
            let matches = prod
                .entries()
                .iter()
                .zip(class.matrix.entries())
                .all(|(x, y)| math::abs(x - y) <= 1e-10 * scale);
            if !matches {
                return Err(CoreError::WordNotInClass);
            }
            w.clone()
        }
        None => words[0].clone(),
    };

    let d = ifs.dim();
    let a = &class.matrix;
    let square = a.mul(a);
    // Block translations a_I are exactly the finite codings f_I(0).
    let a_j = ifs.code_point(&j_word)?;
    let a_aj = a.apply_vec(&a_j);

    let mut e_translations = Vec::with_capacity(words.len());
    let mut f_translations = Vec::with_capacity(words.len());
    let mut lambda_words = Vec::with_capacity(words.len());
    for w in &words {
        let a_i = ifs.code_point(w)?;
        let a_ai = a.apply_vec(&a_i);
        let mut e_tr = vec![0.0; d];
        let mut f_tr = vec![0.0; d];
        for k in 0..d {
            e_tr[k] = a_i[k] + a_aj[k];
            f_tr[k] = a_j[k] + a_ai[k];
        }
        e_translations.push(e_tr);
        f_translations.push(f_tr);
        lambda_words.push(w.concat(&j_word));
    }
    let sub_tuple = MapTuple::new(vec![square.clone(); words.len()])?;
    let e_ifs = IfsInstance::new(sub_tuple.clone(), e_translations)?;
    let f_ifs = IfsInstance::new(sub_tuple, f_translations)?;

    // v solves (I - A)(-v) = a_J.
    let system = Matrix::identity(d).sub(a);
    let v: Vec<f64> = linalg::solve(&system, &a_j)?
        .into_iter()
        .map(|x| -x)
        .collect();
    let mut residual = 0.0_f64;
    let neg_v: Vec<f64> = v.iter().map(|x| -x).collect();
    let check = system.apply_vec(&neg_v);
    for k in 0..d {
        residual = residual.max(math::abs(check[k] - a_j[k]));
    }
    let scale = linalg::norm(&a_j).max(1.0);
    if residual > 1e-10 * scale {
        return Err(CoreError::InvalidArgument(format!(
            "fixed-vector solve residual {residual:e} too large"
        )));
    }

    Ok(SplitCertificate {
        block: class.clone(),
        j_word,
        class_words: words,
        lambda_words,
        e_ifs,
        f_ifs,
        v,
        a_j,
        square,
    })
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

/// Sampled verification of the split certificate.
#[derive(Clone, Debug, Serialize)]
pub struct SplitReport {
    pub pairs: usize,
    pub epsilon: f64,
    /// Max `|(e + f + v) - pi(interleaved word)|` over sampled pairs: the
    /// decomposition identity at truncation depth.
    pub max_identity_deviation: f64,
    /// Max nearest-neighbor distance of `e + f + v` to the attractor cloud.
    pub max_nn_deviation: f64,
    /// One-sided Hausdorff distances attesting `F = A E + a_J`.
    pub hausdorff_f_to_ae: f64,
    pub hausdorff_ae_to_f: f64,
    pub cloud_size: usize,
    pub pass: bool,
    /// Sum and coded target realizing the worst identity deviation.
    pub worst_sum: Vec<f64>,
    pub worst_target: Vec<f64>,
}

/// Checks sampled sums `e + f + v` against the attractor (both through the
/// symbolic decomposition identity and a nearest-neighbor search in a dense
/// attractor cloud), and the conjugation `F = A E + a_J` by two one-sided
/// Hausdorff distances.
pub fn verify_split<R: RngCore>(
    ifs: &IfsInstance,
    cert: &SplitCertificate,
    pairs: usize,
    eps: f64,
    cloud_size: usize,
    rng: &mut R,
) -> Result<SplitReport> {
    if !(eps > 0.0) || pairs == 0 || cloud_size == 0 {
        return Err(CoreError::InvalidArgument(
            "verify_split needs eps > 0, pairs >= 1 and a positive cloud size".into(),
        ));
    }
    let d = ifs.dim();
    let k = cert.class_words.len();
    let code_eps = eps / 8.0;
    let blocks = cert.e_ifs.truncation_depth(code_eps).max(1);

    // Attractor cloud drawn from the certified sub-system {A x + a_I}: its
    // points lie in the attractor, and its law matches the sampled sums, so
    // nearest-neighbor gaps reflect the containment rather than how thin the
    // full-alphabet measure is near the attractor's extremes.
    let sub_translations: Vec<Vec<f64>> = cert
        .class_words
        .iter()
        .map(|w| ifs.code_point(w))
        .collect::<Result<_>>()?;
    let sub_tuple = MapTuple::new(vec![cert.block.matrix.clone(); k])?;
    let sub_ifs = IfsInstance::new(sub_tuple, sub_translations)?;
    let k_cloud = chaos_sample(
        &sub_ifs,
        SymbolSource::UniformLetters,
        cloud_size,
        code_eps,
        rng,
    )?;
    let k_index = NnIndex::build(&k_cloud, eps)?;

    let mut max_identity = 0.0_f64;
    let mut max_nn = 0.0_f64;
    let mut worst_sum = vec![0.0; d];
    let mut worst_target = vec![0.0; d];
    let mut sum = vec![0.0; d];
    for _ in 0..pairs {
        let e_letters: Vec<u8> = (0..blocks)
            .map(|_| (rng::uniform_index(rng, k) + 1) as u8)
            .collect();
        let f_letters: Vec<u8> = (0..blocks)
            .map(|_| (rng::uniform_index(rng, k) + 1) as u8)
            .collect();
        let e = cert.e_ifs.code_point(&Word::new(e_letters.clone())?)?;
        let f = cert.f_ifs.code_point(&Word::new(f_letters.clone())?)?;
        for i in 0..d {
            sum[i] = e[i] + f[i] + cert.v[i];
        }
        // Interleave: odd blocks from e's letters, even blocks from f's.
        let mut letters = Vec::with_capacity(2 * blocks * cert.block.n);
        for b in 0..blocks {
            letters.extend_from_slice(cert.class_words[e_letters[b] as usize - 1].letters());
            letters.extend_from_slice(cert.class_words[f_letters[b] as usize - 1].letters());
        }
        let target = ifs.code_point(&Word::new(letters)?)?;
        let identity_dev = linalg::dist(&sum, &target);
        if identity_dev > max_identity {
            max_identity = identity_dev;
            worst_sum = sum.clone();
            worst_target = target;
        }
        let (nn, _) = k_index.nearest(&sum);
        max_nn = max_nn.max(nn);
    }

    // F = A E + a_J, both inclusions by sampled one-sided Hausdorff.
    let e_cloud = chaos_sample(
        &cert.e_ifs,
        SymbolSource::UniformLetters,
        cloud_size,
        code_eps,
        rng,
    )?;
    let f_cloud = chaos_sample(
        &cert.f_ifs,
        SymbolSource::UniformLetters,
        cloud_size,
        code_eps,
        rng,
    )?;
    let mut ae_cloud = PointCloud::with_capacity(d, e_cloud.len());
    let a = &cert.block.matrix;
    let mut buf = vec![0.0; d];
    for p in e_cloud.iter() {
        a.apply(p, &mut buf);
        for i in 0..d {
            buf[i] += cert.a_j[i];
        }
        ae_cloud.push(&buf);
    }
    let ae_index = NnIndex::build(&ae_cloud, eps)?;
    let f_index = NnIndex::build(&f_cloud, eps)?;
    let mut h_f_ae = 0.0_f64;
    for p in f_cloud.iter() {
        h_f_ae = h_f_ae.max(ae_index.nearest(p).0);
    }
    let mut h_ae_f = 0.0_f64;
    for p in ae_cloud.iter() {
        h_ae_f = h_ae_f.max(f_index.nearest(p).0);
    }

    let pass = max_identity <= eps && max_nn <= eps && h_f_ae <= eps && h_ae_f <= eps;
    Ok(SplitReport {
        pairs,
        epsilon: eps,
        max_identity_deviation: max_identity,
        max_nn_deviation: max_nn,
        hausdorff_f_to_ae: h_f_ae,
        hausdorff_ae_to_f: h_ae_f,
        cloud_size,
        pass,
        worst_sum,
        worst_target,
    })
}

// ---------------------------------------------------------------------------
// Nearest-neighbor index (uniform grid hash, d <= 3)
// ---------------------------------------------------------------------------

struct NnIndex<'a> {
    cloud: &'a PointCloud,
    cell: f64,
    origin: Vec<f64>,
    extent: Vec<i64>,
    /// (packed cell key, point index), sorted by key.
    entries: Vec<(u64, u32)>,
}

impl<'a> NnIndex<'a> {
    fn build(cloud: &'a PointCloud, cell: f64) -> Result<Self> {
        if cloud.is_empty() {
            return Err(CoreError::EmptyCloud);
        }
        let d = cloud.dim();
        if d > 3 {
            return Err(CoreError::InvalidArgument(
                "NN index supports d <= 3".into(),
            ));
        }
        let mut origin = vec![f64::INFINITY; d];
        let mut top = vec![f64::NEG_INFINITY; d];
        for p in cloud.iter() {
            for i in 0..d {
                origin[i] = origin[i].min(p[i]);
                top[i] = top[i].max(p[i]);
            }
        }
        let mut extent = vec![0i64; d];
        for i in 0..d {
            origin[i] -= cell;
            let cells = ((top[i] - origin[i]) / cell) as i64 + 2;
            if cells >= 1 << 20 {
                return Err(CoreError::InvalidArgument(
                    "NN cell size too small for the cloud extent".into(),
                ));
            }
            extent[i] = cells;
        }
        let index = Self {
            cloud,
            cell,
            origin,
            extent,
            entries: Vec::new(),
        };
        let mut entries: Vec<(u64, u32)> = (0..cloud.len())
            .map(|i| (index.key_of(cloud.point(i)), i as u32))
            .collect();
        entries.sort_unstable();
        Ok(Self { entries, ..index })
    }

    #[inline]
    fn coords_of(&self, p: &[f64]) -> [i64; 3] {
        let mut c = [0i64; 3];
        for i in 0..self.cloud.dim() {
            let raw = ((p[i] - self.origin[i]) / self.cell) as i64;
            c[i] = raw.clamp(0, self.extent[i] - 1);
        }
        c
    }

    #[inline]
    fn key_of(&self, p: &[f64]) -> u64 {
        self.pack(self.coords_of(p))
    }

    #[inline]
    fn pack(&self, c: [i64; 3]) -> u64 {
        ((c[0] as u64) << 40) | ((c[1] as u64) << 20) | c[2] as u64
    }

    /// Exact nearest neighbor by expanding cell shells.
    fn nearest(&self, p: &[f64]) -> (f64, usize) {
        let d = self.cloud.dim();
        let center = self.coords_of(p);
        let mut best = f64::INFINITY;
        let mut best_idx = 0usize;
        let max_extent = self.extent.iter().copied().max().unwrap_or(1);
        for radius in 0..max_extent {
            let mut offsets = [0i64; 3];
            self.scan_shell(
                p,
                &center,
                radius,
                0,
                &mut offsets,
                &mut best,
                &mut best_idx,
                d,
            );
            if best <= radius as f64 * self.cell {
                break;
            }
        }
        (best, best_idx)
    }

    #[allow(clippy::too_many_arguments)]
    fn scan_shell(
        &self,
        p: &[f64],
        center: &[i64; 3],
        radius: i64,
        axis: usize,
        offsets: &mut [i64; 3],
        best: &mut f64,
        best_idx: &mut usize,
        d: usize,
    ) {
        if axis == d {
            if offsets[..d].iter().map(|o| o.abs()).max().unwrap() != radius {
                return;
            }
            let mut cell = [0i64; 3];
            for i in 0..d {
                cell[i] = center[i] + offsets[i];
                if cell[i] < 0 || cell[i] >= self.extent[i] {
                    return;
                }
            }
            let key = self.pack(cell);
            let lo = self.entries.partition_point(|e| e.0 < key);
            let hi = self.entries.partition_point(|e| e.0 <= key);
            for &(_, idx) in &self.entries[lo..hi] {
                let q = self.cloud.point(idx as usize);
                let dist = linalg::dist(p, q);
                if dist < *best {
                    *best = dist;
                    *best_idx = idx as usize;
                }
            }
            return;
        }
        for o in -radius..=radius {
            offsets[axis] = o;
            self.scan_shell(p, center, radius, axis + 1, offsets, best, best_idx, d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{walk_product_tree, Walk};

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn five_map_line() -> IfsInstance {
        let tuple = MapTuple::uniform_scalar(1, 5, 0.45).unwrap();
        IfsInstance::new(
            tuple,
            vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
        )
        .unwrap()
    }

    #[test]
    fn scalar_family_certifies_at_block_one() {
        let t = MapTuple::uniform_scalar(1, 5, 0.45).unwrap();
        let class = find_certified_block(&t, &[2.01], 4, 1e-10).unwrap();
        assert_eq!(class.n, 1);
        assert_eq!(class.count, 5);
        approx(class.score, 5.0 * 0.45f64.powf(2.01), 1e-12);
        assert!(class.score > 1.0);
        // Equal maps merge all five unit multidegrees into one class.
        assert_eq!(class.multidegrees.len(), 5);
    }

    #[test]
    fn default_grid_certifies_scalar_family_at_t_201() {
        let t = MapTuple::uniform_scalar(1, 5, 0.45).unwrap();
        let class = find_certified_block(&t, &default_t_grid(), 3, 1e-10).unwrap();
        approx(class.t_val, 2.01, 1e-12);
        approx(class.score, 1.00445, 1e-4);
    }

    #[test]
    fn small_det_family_never_certifies() {
        let t = MapTuple::new(vec![Matrix::diagonal(&[0.3]), Matrix::diagonal(&[0.4])]).unwrap();
        // det^2 sum = 0.09 + 0.16 = 0.25 < 1: scores stay below (sum |det|^t)^N.
        let err = find_certified_block(&t, &default_t_grid(), 6, 1e-10).unwrap_err();
        match err {
            CoreError::NoCertifiedClass { best_score, .. } => assert!(best_score < 1.0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_commuting_tuple_is_rejected() {
        let t = MapTuple::new(vec![
            Matrix::diagonal(&[0.4, 0.2]),
            Matrix::rotation_scaled(0.7, 0.3),
        ])
        .unwrap();
        assert!(matches!(
            find_certified_block(&t, &[2.1], 3, 1e-10),
            Err(CoreError::NotCommuting { .. })
        ));
    }

    #[test]
    fn class_counts_match_brute_force() {
        // Two commuting diagonal maps, depth up to 6: count words per matrix.
        let t = MapTuple::new(vec![
            Matrix::diagonal(&[0.4, 0.2]),
            Matrix::diagonal(&[0.2, 0.4]),
        ])
        .unwrap();
        for n in 1..=6usize {
            let classes = enumerate_block_classes(&t, n, 2.1).unwrap();
            let total: u128 = classes.iter().map(|c| c.count).sum();
            assert_eq!(total, (2u128).pow(n as u32));
            assert!(classes.len() <= (n + 1).pow(2));
            // Brute force per class.
            for class in &classes {
                let mut brute = 0u128;
                walk_product_tree(&t, &Word::empty(), n, &mut |letters, product| {
                    if letters.len() == n {
                        let scale = class.matrix.max_abs_entry().max(1.0);
                        let eq = product
                            .entries()
                            .iter()
                            .zip(class.matrix.entries())
                            .all(|(x, y)| (x - y).abs() <= 1e-12 * scale);
                        if eq {
                            brute += 1;
                        }
                    }
                    Walk::Continue
                })
                .unwrap();
                assert_eq!(brute, class.count, "class {:?}", class.multidegrees);
            }
        }
    }

    #[test]
    fn build_split_five_map_closed_forms() {
        let ifs = five_map_line();
        let class = find_certified_block(ifs.tuple(), &[2.01], 2, 1e-10).unwrap();
        let cert = build_split(&ifs, &class, None).unwrap();
        // J = "1" (lexicographically smallest), a_J = 0, so v = 0.
        assert_eq!(cert.j_word, Word::parse("1").unwrap());
        approx(cert.v[0], 0.0, 1e-15);
        approx(cert.square.get(0, 0), 0.2025, 1e-15);
        // E maps are 0.2025 x + a_i; F maps are 0.2025 x + 0.45 a_i.
        for (i, tr) in cert.e_ifs.translations().iter().enumerate() {
            approx(tr[0], i as f64, 1e-12);
        }
        for (i, tr) in cert.f_ifs.translations().iter().enumerate() {
            approx(tr[0], 0.45 * i as f64, 1e-12);
        }
        // Every lambda word has product A^2.
        for w in &cert.lambda_words {
            let p = linalg::word_product(ifs.tuple(), w).unwrap();
            approx(p.get(0, 0), 0.2025, 1e-12);
        }
    }

    #[test]
    fn explicit_j_must_belong_to_class() {
        let ifs = five_map_line();
        let class = find_certified_block(ifs.tuple(), &[2.01], 2, 1e-10).unwrap();
        let ok = build_split(&ifs, &class, Some(&Word::parse("3").unwrap()));
        assert!(ok.is_ok());
        let bad = build_split(&ifs, &class, Some(&Word::parse("33").unwrap()));
        assert!(matches!(bad, Err(CoreError::WordNotInClass)));
    }

    #[test]
    fn zero_translations_split_is_trivial() {
        let tuple = MapTuple::uniform_scalar(1, 5, 0.45).unwrap();
        let ifs = IfsInstance::new(tuple, vec![vec![0.0]; 5]).unwrap();
        let class = find_certified_block(ifs.tuple(), &[2.01], 2, 1e-10).unwrap();
        let cert = build_split(&ifs, &class, None).unwrap();
        approx(cert.v[0], 0.0, 0.0);
        let report = verify_split(&ifs, &cert, 50, 1e-6, 1000, &mut rng::seeded(1)).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.max_identity_deviation <= 1e-12);
    }

    #[test]
    fn fixed_vector_identity_on_random_commuting_pairs() {
        let mut rng = rng::seeded(21);
        for _ in 0..20 {
            // Commuting pair: polynomials in one matrix B.
            let b = Matrix::new(
                2,
                (0..4)
                    .map(|_| rng::uniform_in(&mut rng, -0.4, 0.4))
                    .collect(),
            );
            let Ok(b) = b else { continue };
            let t1 = b.scaled(0.5);
            let t2 = b.mul(&b).scaled(0.8).add(&Matrix::identity(2).scaled(0.1));
            let Ok(tuple) = MapTuple::new(vec![t1, t2]) else {
                continue;
            };
            let translations = vec![
                vec![
                    rng::uniform_in(&mut rng, -1.0, 1.0),
                    rng::uniform_in(&mut rng, -1.0, 1.0),
                ],
                vec![
                    rng::uniform_in(&mut rng, -1.0, 1.0),
                    rng::uniform_in(&mut rng, -1.0, 1.0),
                ],
            ];
            let ifs = IfsInstance::new(tuple.clone(), translations).unwrap();
            let classes = enumerate_block_classes(&tuple, 2, 2.1).unwrap();
            let cert = match build_split(&ifs, &classes[0], None) {
                Ok(c) => c,
                Err(_) => continue,
            };
            // (I - A)(-v) = a_J within 1e-10.
            let system = Matrix::identity(2).sub(&cert.block.matrix);
            let neg_v: Vec<f64> = cert.v.iter().map(|x| -x).collect();
            let lhs = system.apply_vec(&neg_v);
            for k in 0..2 {
                approx(lhs[k], cert.a_j[k], 1e-10);
            }
        }
    }

    #[test]
    fn verify_split_passes_and_detects_fault() {
        let ifs = five_map_line();
        let class = find_certified_block(ifs.tuple(), &[2.01], 2, 1e-10).unwrap();
        let cert = build_split(&ifs, &class, None).unwrap();
        let report = verify_split(&ifs, &cert, 300, 3e-3, 300_000, &mut rng::seeded(5)).unwrap();
        assert!(report.pass, "{report:?}");

        let mut corrupted = cert.clone();
        corrupted.v[0] += 0.1;
        let report =
            verify_split(&ifs, &corrupted, 300, 3e-3, 300_000, &mut rng::seeded(5)).unwrap();
        assert!(!report.pass);
        approx(report.max_identity_deviation, 0.1, 1e-3);
    }

    #[test]
    fn nn_index_finds_exact_neighbors() {
        let mut cloud = PointCloud::new(2);
        let mut rng = rng::seeded(33);
        for _ in 0..500 {
            cloud.push(&[
                rng::uniform_in(&mut rng, -1.0, 1.0),
                rng::uniform_in(&mut rng, -1.0, 1.0),
            ]);
        }
        let index = NnIndex::build(&cloud, 0.05).unwrap();
        for _ in 0..100 {
            let q = [
                rng::uniform_in(&mut rng, -1.2, 1.2),
                rng::uniform_in(&mut rng, -1.2, 1.2),
            ];
            let (got, _) = index.nearest(&q);
            let brute = cloud
                .iter()
                .map(|p| linalg::dist(p, &q))
                .fold(f64::INFINITY, f64::min);
            approx(got, brute, 1e-12);
        }
    }
}
