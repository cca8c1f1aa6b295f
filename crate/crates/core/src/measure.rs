//! Block Bernoulli measures on the symbolic space and their cylinder bounds.
//!
//! A measure here is a product measure over blocks of a fixed length `N`:
//! an infinite word is read as a sequence of blocks, each drawn independently
//! with a fixed weight vector. Cylinder masses of words that end inside a
//! block marginalize over the block completions, so arbitrary-depth queries
//! stay consistent with the product structure.

use crate::dimension;
use crate::error::{CoreError, Result};
use crate::linalg::{smallest_singular_value, walk_product_tree, MapTuple, Matrix, Walk, Word};
use crate::math;
use crate::rng;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use rand_core::RngCore;
use serde::Serialize;

const ENUMERATION_CAP: u64 = 4_000_000;
const WEIGHT_SUM_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// BlockBernoulli
// ---------------------------------------------------------------------------

/// Bernoulli product measure over fixed-length blocks of symbols.
#[derive(Clone, Debug)]
pub struct BlockBernoulli {
    tuple: MapTuple,
    block_len: usize,
    /// Lexicographically sorted, deduplicated blocks.
    blocks: Vec<Word>,
    weights: Vec<f64>,
    /// `cum[i] = sum of weights[..i]`; length `blocks.len() + 1`.
    cum: Vec<f64>,
    /// True when `blocks` is exactly the full set `{1..m}^N`, which allows
    /// arithmetic indexing instead of binary search on the hot paths.
    full_alphabet: bool,
    max_weight: f64,
}

impl BlockBernoulli {
    pub fn new(tuple: MapTuple, blocks: Vec<Word>, weights: Vec<f64>) -> Result<Self> {
        if blocks.is_empty() || blocks.len() != weights.len() {
            return Err(CoreError::InvalidArgument(
                "blocks and weights must be non-empty and aligned".into(),
            ));
        }
        let block_len = blocks[0].len();
        if block_len == 0 {
            return Err(CoreError::InvalidArgument(
                "blocks must have positive length".into(),
            ));
        }
        for b in &blocks {
            if b.len() != block_len {
                return Err(CoreError::InvalidArgument(
                    "all blocks must share one length".into(),
                ));
            }
            for &l in b.letters() {
                tuple.check_letter(l)?;
            }
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || math::abs(sum - 1.0) > WEIGHT_SUM_TOL {
            return Err(CoreError::InvalidArgument(format!(
                "weights must be non-negative and sum to 1 (sum = {sum})"
            )));
        }
        let mut pairs: Vec<(Word, f64)> = blocks.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(CoreError::InvalidArgument(format!(
                    "duplicate block {}",
                    w[0].0
                )));
            }
        }
        let (blocks, weights): (Vec<Word>, Vec<f64>) = pairs.into_iter().unzip();
        let mut cum = Vec::with_capacity(weights.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for w in &weights {
            acc += w;
            cum.push(acc);
        }
        let expected_full = (tuple.len() as u64).checked_pow(block_len as u32);
        let full_alphabet = expected_full == Some(blocks.len() as u64);
        let max_weight = weights.iter().fold(0.0_f64, |a, &b| a.max(b));
        Ok(Self {
            tuple,
            block_len,
            blocks,
            weights,
            cum,
            full_alphabet,
            max_weight,
        })
    }

    /// Uniform measure on an explicit set of blocks.
    pub fn uniform_on_blocks(tuple: MapTuple, blocks: Vec<Word>) -> Result<Self> {
        let n = blocks.len();
        if n == 0 {
            return Err(CoreError::InvalidArgument("no blocks given".into()));
        }
        let w = 1.0 / n as f64;
        Self::new(tuple, blocks, vec![w; n])
    }

    #[inline]
    pub fn block_len(&self) -> usize {
        self.block_len
    }

    #[inline]
    pub fn blocks(&self) -> &[Word] {
        &self.blocks
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn tuple(&self) -> &MapTuple {
        &self.tuple
    }

    #[inline]
    pub fn max_weight(&self) -> f64 {
        self.max_weight
    }

    /// Weight of an exact block, or 0 if the word is not a block.
    pub fn block_weight(&self, block: &[u8]) -> f64 {
        debug_assert_eq!(block.len(), self.block_len);
        if self.full_alphabet {
            return self.weights[self.full_index(block)];
        }
        match self.blocks.binary_search_by(|b| b.letters().cmp(block)) {
            Ok(i) => self.weights[i],
            Err(_) => 0.0,
        }
    }

    #[inline]
    fn full_index(&self, block: &[u8]) -> usize {
        let m = self.tuple.len();
        let mut idx = 0usize;
        for &l in block {
            idx = idx * m + (l as usize - 1);
        }
        idx
    }

    /// Index range of blocks extending the partial prefix.
    fn prefix_range(&self, prefix: &[u8]) -> (usize, usize) {
        debug_assert!(prefix.len() <= self.block_len);
        if self.full_alphabet {
            let m = self.tuple.len();
            let mut idx = 0usize;
            for &l in prefix {
                idx = idx * m + (l as usize - 1);
            }
            let span = m.pow((self.block_len - prefix.len()) as u32);
            return (idx * span, (idx + 1) * span);
        }
        let lo = self
            .blocks
            .partition_point(|b| b.letters()[..prefix.len()] < *prefix);
        let hi = self
            .blocks
            .partition_point(|b| b.letters()[..prefix.len()] <= *prefix);
        (lo, hi)
    }

    /// Total weight of blocks extending the partial prefix.
    pub fn prefix_marginal(&self, prefix: &[u8]) -> f64 {
        let (lo, hi) = self.prefix_range(prefix);
        self.cum[hi] - self.cum[lo]
    }

    /// Mass of the cylinder `[I]`: the product of the weights of the full
    /// blocks of `I`, times the marginal of the trailing partial block.
    pub fn cylinder_mass(&self, word: &Word) -> f64 {
        let letters = word.letters();
        let mut mass = 1.0;
        let mut pos = 0;
        while pos + self.block_len <= letters.len() {
            mass *= self.block_weight(&letters[pos..pos + self.block_len]);
            if mass == 0.0 {
                return 0.0;
            }
            pos += self.block_len;
        }
        if pos < letters.len() {
            mass *= self.prefix_marginal(&letters[pos..]);
        }
        mass
    }

    /// Draws one block index by weight.
    pub fn sample_block<R: RngCore>(&self, rng: &mut R) -> usize {
        let u = rng::uniform_f64(rng);
        // cum is non-decreasing with cum[last] == 1.
        let idx = self.cum.partition_point(|&c| c <= u);
        idx.saturating_sub(1).min(self.blocks.len() - 1)
    }

    /// I.i.d. block draws, concatenated and truncated to `length` letters.
    /// Lengths that are not multiples of the block length are rounded up
    /// internally and then truncated.
    pub fn sample_word<R: RngCore>(&self, length: usize, rng: &mut R) -> Word {
        let k = length.div_ceil(self.block_len);
        let mut letters = Vec::with_capacity(k * self.block_len);
        for _ in 0..k {
            let b = self.sample_block(rng);
            letters.extend_from_slice(self.blocks[b].letters());
        }
        letters.truncate(length);
        Word::new(letters).expect("blocks contain valid letters")
    }
}

// ---------------------------------------------------------------------------
// Construction with a decaying cylinder bound
// ---------------------------------------------------------------------------

/// Witness data for the cylinder bound `mu([I]) <= C g_t(I) r^|I|`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CylinderBoundCertificate {
    pub t_val: f64,
    pub c: f64,
    pub r: f64,
    /// Depth-`N` weight sum `lambda = sum_{|I| = N} g_t(I) > 1`.
    pub lambda: f64,
    /// `gamma = max { 1 / g_t(J) : |J| <= N }`.
    pub gamma: f64,
    pub block_len: usize,
}

/// Builds the block Bernoulli measure with weights proportional to `g_t`
/// over the smallest block length whose weight sum exceeds 1, together with
/// the constants `(C, r)` of its cylinder bound.
pub fn build_block_measure(
    tuple: &MapTuple,
    t_val: f64,
    max_block: usize,
) -> Result<(BlockBernoulli, CylinderBoundCertificate)> {
    let d = tuple.dim() as f64;
    if !(t_val > d) {
        return Err(CoreError::InvalidArgument(format!(
            "block measure requires t > d, got t = {t_val}, d = {d}"
        )));
    }
    if max_block == 0 {
        return Err(CoreError::InvalidArgument("max_block must be >= 1".into()));
    }
    let mut best_lambda = 0.0;
    let mut best_n = 0;
    for block_len in 1..=max_block {
        let leaf_count = (tuple.len() as u64)
            .checked_pow(block_len as u32)
            .unwrap_or(u64::MAX);
        if leaf_count > ENUMERATION_CAP {
            break;
        }
        let mut lambda = 0.0;
        let mut min_g = f64::INFINITY;
        let mut blocks: Vec<Word> = Vec::with_capacity(leaf_count as usize);
        let mut raw_weights: Vec<f64> = Vec::with_capacity(leaf_count as usize);
        walk_product_tree(tuple, &Word::empty(), block_len, &mut |letters, product| {
            let g = dimension::g_t_of_product(t_val, product);
            min_g = min_g.min(g);
            if letters.len() == block_len {
                lambda += g;
                blocks.push(Word::new(letters.to_vec()).expect("letters from walker"));
                raw_weights.push(g);
            }
            Walk::Continue
        })?;
        if lambda > best_lambda {
            best_lambda = lambda;
            best_n = block_len;
        }
        if lambda > 1.0 {
            let weights: Vec<f64> = raw_weights.iter().map(|g| g / lambda).collect();
            let measure = BlockBernoulli::new(tuple.clone(), blocks, weights)?;
            let gamma = (1.0 / min_g).max(1.0);
            let cert = CylinderBoundCertificate {
                t_val,
                c: gamma * lambda,
                r: math::powf(lambda, -1.0 / block_len as f64),
                lambda,
                gamma,
                block_len,
            };
            return Ok((measure, cert));
        }
    }
    Err(CoreError::NoExpandingBlock {
        max_block,
        best_lambda,
        best_n,
    })
}

// ---------------------------------------------------------------------------
// Cylinder bound verification
// ---------------------------------------------------------------------------

/// The bound form to check against cylinder masses.
#[derive(Clone, Copy, Debug)]
pub enum CylinderBound {
    /// `mu([I]) <= c * g_t(I) * r^|I|`.
    GtDecay { t_val: f64, c: f64, r: f64 },
    /// `mu([I]) <= c * phi^s(T_I)`.
    PhiPower { s: f64, c: f64 },
}

/// Outcome of an exhaustive (zero-mass-pruned) cylinder-bound sweep.
#[derive(Clone, Debug, Serialize)]
pub struct BoundCheckReport {
    pub depth: usize,
    pub words_checked: u64,
    pub max_ratio: f64,
    pub argmax_word: alloc::string::String,
    pub holds: bool,
}

/// Checks the bound for every positive-mass word up to `depth` whose letters
/// extend `prefix`. Callers may partition the alphabet by prefix and merge
/// reports (the merge is a max, so splits cannot change the result).
pub fn verify_cylinder_bound(
    mu: &BlockBernoulli,
    bound: &CylinderBound,
    depth: usize,
    prefix: &Word,
) -> Result<BoundCheckReport> {
    if depth == 0 {
        // Both sides are 1 up to the constant; report the constant's ratio.
        let c = match bound {
            CylinderBound::GtDecay { c, .. } | CylinderBound::PhiPower { c, .. } => *c,
        };
        return Ok(BoundCheckReport {
            depth,
            words_checked: 1,
            max_ratio: 1.0 / c,
            argmax_word: Word::empty().to_string(),
            holds: c >= 1.0,
        });
    }
    let tuple = mu.tuple().clone();
    let d = tuple.dim();
    let mut checker = BoundChecker {
        mu,
        bound,
        dim: d,
        max_ln_ratio: f64::NEG_INFINITY,
        argmax: Word::empty(),
        checked: 0,
    };

    // Mass state for the prefix itself.
    let mut state = MassState {
        ln_blocks: 0.0,
        zero: false,
    };
    for pos in 0..prefix.len() {
        let boundary = (pos + 1) % mu.block_len() == 0;
        let upto = &prefix.letters()[..pos + 1];
        state = advance_mass(mu, &state, upto, boundary);
        if state.zero {
            return Ok(BoundCheckReport {
                depth,
                words_checked: 0,
                max_ratio: 0.0,
                argmax_word: prefix.to_string(),
                holds: true,
            });
        }
    }

    checker.run(&tuple, prefix, depth, state)?;

    let max_ratio = if checker.checked == 0 {
        0.0
    } else {
        math::exp(checker.max_ln_ratio)
    };
    Ok(BoundCheckReport {
        depth,
        words_checked: checker.checked,
        max_ratio,
        argmax_word: checker.argmax.to_string(),
        holds: max_ratio <= 1.0 + 1e-12,
    })
}

#[derive(Clone, Copy)]
struct MassState {
    /// ln of the product of completed-block weights.
    ln_blocks: f64,
    zero: bool,
}

fn advance_mass(
    mu: &BlockBernoulli,
    state: &MassState,
    letters: &[u8],
    boundary: bool,
) -> MassState {
    if state.zero || !boundary {
        // Partial-block marginals are evaluated (and zero-pruned) at the
        // node itself; only completed blocks change the carried mass.
        return *state;
    }
    let n = mu.block_len();
    let w = mu.block_weight(&letters[letters.len() - n..]);
    if w == 0.0 {
        return MassState {
            ln_blocks: f64::NEG_INFINITY,
            zero: true,
        };
    }
    MassState {
        ln_blocks: state.ln_blocks + math::ln(w),
        zero: false,
    }
}

struct BoundChecker<'a> {
    mu: &'a BlockBernoulli,
    bound: &'a CylinderBound,
    dim: usize,
    max_ln_ratio: f64,
    argmax: Word,
    checked: u64,
}

impl BoundChecker<'_> {
    fn run(
        &mut self,
        tuple: &MapTuple,
        prefix: &Word,
        depth: usize,
        root_state: MassState,
    ) -> Result<()> {
        let n = self.mu.block_len();
        let mut states: Vec<MassState> = vec![root_state; depth + 1];
        let base = prefix.len();
        walk_product_tree(tuple, prefix, depth, &mut |letters, product| {
            let level = letters.len() - base;
            let boundary = letters.len() % n == 0;
            let parent = states[level - 1];
            let state = advance_mass(self.mu, &parent, letters, boundary);
            states[level] = state;
            if state.zero {
                return Walk::Prune;
            }
            let ln_mass = if boundary {
                state.ln_blocks
            } else {
                let marginal = self
                    .mu
                    .prefix_marginal(&letters[letters.len() - letters.len() % n..]);
                if marginal == 0.0 {
                    return Walk::Prune;
                }
                state.ln_blocks + math::ln(marginal)
            };
            self.checked += 1;
            let ln_bound = self.ln_bound(product, letters.len());
            let ln_ratio = ln_mass - ln_bound;
            if ln_ratio > self.max_ln_ratio {
                self.max_ln_ratio = ln_ratio;
                self.argmax = Word::new(letters.to_vec()).expect("letters from walker");
            }
            Walk::Continue
        })?;
        Ok(())
    }

    #[inline]
    fn ln_bound(&self, product: &Matrix, len: usize) -> f64 {
        match *self.bound {
            CylinderBound::GtDecay { t_val, c, r } => {
                let alpha = smallest_singular_value(product);
                let det = math::abs(product.det());
                math::ln(c) + t_val * math::ln(alpha) + math::ln(det) + len as f64 * math::ln(r)
            }
            CylinderBound::PhiPower { s, c } => {
                let d = self.dim as f64;
                let ln_phi = if s > d {
                    (s / d) * math::ln(math::abs(product.det()))
                } else {
                    let svals = crate::linalg::singular_values(product);
                    math::ln(dimension::phi_s_from_singular_values(&svals, s).unwrap_or(0.0))
                };
                math::ln(c) + ln_phi
            }
        }
    }
}
