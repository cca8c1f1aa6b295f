//! Coding maps, attractor sampling, occupancy grids and interior evidence.

use crate::error::{CoreError, Result};
use crate::linalg::{self, largest_singular_value, MapTuple, Matrix, Word};
use crate::math;
use crate::measure::BlockBernoulli;
use crate::rng;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand_core::RngCore;
use serde::Serialize;

/// Points drawn per RNG substream; fixed so serial and prefix-parallel
/// sampling produce identical grids.
pub const SAMPLE_BLOCK: usize = 1 << 16;

// ---------------------------------------------------------------------------
// IfsInstance
// ---------------------------------------------------------------------------

/// A map tuple together with translations: the affine system
/// `f_i(x) = T_i x + a_i` and its coding map.
#[derive(Clone, Debug)]
pub struct IfsInstance {
    tuple: MapTuple,
    translations: Vec<Vec<f64>>,
    bounding_radius: f64,
    max_translation: f64,
}

impl IfsInstance {
    /// Builds the instance; the bounding radius is set to
    /// `max_i |a_i| / (1 - delta)`, making `B(0, R_0)` forward invariant.
    pub fn new(tuple: MapTuple, translations: Vec<Vec<f64>>) -> Result<Self> {
        if translations.len() != tuple.len() {
            return Err(CoreError::DimensionMismatch {
                expected: tuple.len(),
                got: translations.len(),
            });
        }
        let d = tuple.dim();
        let mut max_translation = 0.0_f64;
        for a in &translations {
            if a.len() != d {
                return Err(CoreError::DimensionMismatch {
                    expected: d,
                    got: a.len(),
                });
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(CoreError::NonFiniteEntries);
            }
            max_translation = max_translation.max(linalg::norm(a));
        }
        let bounding_radius = max_translation / (1.0 - tuple.delta());
        Ok(Self {
            tuple,
            translations,
            bounding_radius,
            max_translation,
        })
    }

    /// Overrides the bounding radius with a larger one.
    pub fn with_bounding_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius >= self.bounding_radius) {
            return Err(CoreError::InvalidArgument(format!(
                "radius {radius} is below the forward-invariant radius {}",
                self.bounding_radius
            )));
        }
        self.bounding_radius = radius;
        Ok(self)
    }

    #[inline]
    pub fn tuple(&self) -> &MapTuple {
        &self.tuple
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.tuple.dim()
    }

    #[inline]
    pub fn map_count(&self) -> usize {
        self.tuple.len()
    }

    #[inline]
    pub fn translations(&self) -> &[Vec<f64>] {
        &self.translations
    }

    #[inline]
    pub fn translation_for(&self, letter: u8) -> &[f64] {
        &self.translations[letter as usize - 1]
    }

    #[inline]
    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    #[inline]
    pub fn max_translation(&self) -> f64 {
        self.max_translation
    }

    /// `f_letter(x) = T x + a` into `out`.
    #[inline]
    pub fn apply_map(&self, letter: u8, x: &[f64], out: &mut [f64]) {
        self.tuple.map_for(letter).apply(x, out);
        for (o, a) in out.iter_mut().zip(self.translation_for(letter)) {
            *o += a;
        }
    }

    /// Finite coding map: `f_{x_1} o ... o f_{x_n}(0)`.
    ///
    /// The distance to the coded limit point of any extension is at most
    /// `delta^n * max|a| / (1 - delta)`.
    pub fn code_point(&self, word: &Word) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut p = vec![0.0; d];
        let mut tmp = vec![0.0; d];
        for &letter in word.letters().iter().rev() {
            self.tuple.check_letter(letter)?;
            self.apply_map(letter, &p, &mut tmp);
            core::mem::swap(&mut p, &mut tmp);
        }
        Ok(p)
    }

    /// Smallest truncation depth whose coding error is at most `eps`.
    pub fn truncation_depth(&self, eps: f64) -> usize {
        if self.max_translation == 0.0 {
            return 0;
        }
        let delta = self.tuple.delta();
        let ratio = eps * (1.0 - delta) / self.max_translation;
        if ratio >= 1.0 {
            return 0;
        }
        let n = math::ceil(math::ln(ratio) / math::ln(delta));
        (n as usize).clamp(1, 100_000)
    }

    /// Fixed point of `f_letter`, i.e. `(I - T)^{-1} a`.
    pub fn fixed_point(&self, letter: u8) -> Result<Vec<f64>> {
        self.tuple.check_letter(letter)?;
        let d = self.dim();
        let system = Matrix::identity(d).sub(self.tuple.map_for(letter));
        linalg::solve(&system, self.translation_for(letter))
    }
}

// ---------------------------------------------------------------------------
// Point clouds and sampling
// ---------------------------------------------------------------------------

/// Flat row-major collection of `dim`-dimensional points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, points: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * points),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn push(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.dim);
        self.data.extend_from_slice(p);
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn extend_from(&mut self, other: &PointCloud) {
        debug_assert_eq!(self.dim, other.dim);
        self.data.extend_from_slice(&other.data);
    }
}

/// Where symbol sequences come from when sampling the pushforward.
#[derive(Clone, Copy)]
pub enum SymbolSource<'a> {
    /// I.i.d. uniform letters.
    UniformLetters,
    /// Blocks drawn from a block Bernoulli measure.
    Measure(&'a BlockBernoulli),
}

impl SymbolSource<'_> {
    fn draw_word<R: RngCore>(&self, m: usize, depth: usize, rng: &mut R) -> Word {
        match self {
            SymbolSource::UniformLetters => {
                let letters: Vec<u8> = (0..depth)
                    .map(|_| (rng::uniform_index(rng, m) + 1) as u8)
                    .collect();
                Word::new(letters).expect("letters in range")
            }
            SymbolSource::Measure(mu) => mu.sample_word(depth, rng),
        }
    }
}

/// I.i.d. samples of the pushforward measure, each within `eps` of its coded
/// limit point. Deterministic given the generator state.
pub fn chaos_sample<R: RngCore>(
    ifs: &IfsInstance,
    source: SymbolSource<'_>,
    n_points: usize,
    eps: f64,
    rng: &mut R,
) -> Result<PointCloud> {
    let depth = ifs.truncation_depth(eps);
    let m = ifs.map_count();
    let mut cloud = PointCloud::with_capacity(ifs.dim(), n_points);
    for _ in 0..n_points {
        let word = source.draw_word(m, depth, rng);
        let p = ifs.code_point(&word)?;
        cloud.push(&p);
    }
    Ok(cloud)
}

// ---------------------------------------------------------------------------
// Occupancy grids
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum Provenance {
    PointSampled,
    CylinderCovered,
}

/// Cubical hit-count grid over an axis-aligned box (d <= 3).
#[derive(Clone, Debug)]
pub struct OccupancyGrid {
    dim: usize,
    res: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cells: Vec<u32>,
    provenance: Provenance,
}

impl OccupancyGrid {
    pub fn new(
        dim: usize,
        res: usize,
        lo: Vec<f64>,
        hi: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(CoreError::InvalidArgument(
                "occupancy grids support 1 <= d <= 3".into(),
            ));
        }
        if res == 0 || lo.len() != dim || hi.len() != dim {
            return Err(CoreError::InvalidArgument("bad grid shape".into()));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l < h) {
                return Err(CoreError::InvalidArgument(
                    "grid box must be non-empty".into(),
                ));
            }
        }
        let total = res
            .checked_pow(dim as u32)
            .filter(|&t| t <= 1 << 31)
            .ok_or_else(|| CoreError::InvalidArgument("grid too large".into()))?;
        Ok(Self {
            dim,
            res,
            lo,
            hi,
            cells: vec![0; total],
            provenance,
        })
    }

    /// Grid over the bounding box of the forward-invariant ball.
    pub fn for_instance(ifs: &IfsInstance, res: usize, provenance: Provenance) -> Result<Self> {
        let r = if ifs.bounding_radius() > 0.0 {
            ifs.bounding_radius()
        } else {
            0.5
        };
        let d = ifs.dim();
        Self::new(d, res, vec![-r; d], vec![r; d], provenance)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn res(&self) -> usize {
        self.res
    }

    #[inline]
    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    #[inline]
    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    #[inline]
    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    #[inline]
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    #[inline]
    pub fn cell_width(&self) -> f64 {
        (self.hi[0] - self.lo[0]) / self.res as f64
    }

    pub fn cell_volume(&self) -> f64 {
        let mut v = 1.0;
        for axis in 0..self.dim {
            v *= (self.hi[axis] - self.lo[axis]) / self.res as f64;
        }
        v
    }

    /// Linear index of the cell containing `p`, if inside the box.
    pub fn index_of(&self, p: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for axis in 0..self.dim {
            let w = (self.hi[axis] - self.lo[axis]) / self.res as f64;
            let x = p[axis];
            if x < self.lo[axis] || x > self.hi[axis] {
                return None;
            }
            let i = (((x - self.lo[axis]) / w) as usize).min(self.res - 1);
            idx = idx * self.res + i;
        }
        Some(idx)
    }

    /// Records a point; returns false when it fell outside the box.
    #[inline]
    pub fn record(&mut self, p: &[f64]) -> bool {
        match self.index_of(p) {
            Some(i) => {
                self.cells[i] = self.cells[i].saturating_add(1);
                true
            }
            None => false,
        }
    }

    pub fn count_occupied(&self) -> u64 {
        self.cells.iter().filter(|&&c| c > 0).count() as u64
    }

    pub fn occupied_volume(&self) -> f64 {
        self.count_occupied() as f64 * self.cell_volume()
    }

    /// Cellwise sum; shapes must agree. Summing is commutative, so parallel
    /// workers can merge in any order.
    pub fn merge_from(&mut self, other: &OccupancyGrid) -> Result<()> {
        if self.dim != other.dim || self.res != other.res || self.lo != other.lo {
            return Err(CoreError::InvalidArgument("grid shape mismatch".into()));
        }
        for (c, o) in self.cells.iter_mut().zip(&other.cells) {
            *c = c.saturating_add(*o);
        }
        Ok(())
    }

    /// Marks all cells intersecting the closed ball; returns how many were
    /// newly marked.
    pub fn mark_ball(&mut self, center: &[f64], radius: f64) -> u64 {
        let mut ranges = [(0usize, 0usize); 3];
        for axis in 0..self.dim {
            let w = (self.hi[axis] - self.lo[axis]) / self.res as f64;
            let lo_i = math::floor((center[axis] - radius - self.lo[axis]) / w).max(0.0) as usize;
            let hi_f = math::floor((center[axis] + radius - self.lo[axis]) / w);
            if hi_f < 0.0 {
                return 0;
            }
            let hi_i = (hi_f as usize).min(self.res - 1);
            if lo_i > hi_i {
                return 0;
            }
            ranges[axis] = (lo_i, hi_i);
        }
        let r2 = radius * radius;
        let mut marked = 0;
        let mut coords = [0usize; 3];
        marked += self.mark_ball_rec(center, r2, &ranges, 0, &mut coords);
        marked
    }

    fn mark_ball_rec(
        &mut self,
        center: &[f64],
        r2: f64,
        ranges: &[(usize, usize); 3],
        axis: usize,
        coords: &mut [usize; 3],
    ) -> u64 {
        if axis == self.dim {
            // Distance from the ball center to the cell box.
            let mut dist2 = 0.0;
            for a in 0..self.dim {
                let w = (self.hi[a] - self.lo[a]) / self.res as f64;
                let cell_lo = self.lo[a] + coords[a] as f64 * w;
                let cell_hi = cell_lo + w;
                let c = center[a];
                let gap = if c < cell_lo {
                    cell_lo - c
                } else if c > cell_hi {
                    c - cell_hi
                } else {
                    0.0
                };
                dist2 += gap * gap;
            }
            if dist2 <= r2 {
                let mut idx = 0;
                for a in 0..self.dim {
                    idx = idx * self.res + coords[a];
                }
                if self.cells[idx] == 0 {
                    self.cells[idx] = 1;
                    return 1;
                }
            }
            return 0;
        }
        let mut marked = 0;
        for i in ranges[axis].0..=ranges[axis].1 {
            coords[axis] = i;
            marked += self.mark_ball_rec(center, r2, ranges, axis + 1, coords);
        }
        marked
    }

    /// Squared Euclidean distance (in cell units) from each cell to the
    /// nearest unoccupied cell, by per-axis lower-envelope transforms.
    fn squared_distance_to_unoccupied(&self) -> Vec<f64> {
        let total = self.cells.len();
        let inf = (self.res * self.res * self.dim) as f64 * 4.0 + 1.0;
        let mut dist: Vec<f64> = self
            .cells
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { inf })
            .collect();
        let n = self.res;
        for axis in 0..self.dim {
            // axis 0 is the slowest-varying index.
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let mut f = vec![0.0; n];
            let mut d_out = vec![0.0; n];
            let mut v = vec![0usize; n];
            let mut z = vec![0.0; n + 1];
            for base in 0..total {
                if !(base / stride).is_multiple_of(n) {
                    continue;
                }
                for k in 0..n {
                    f[k] = dist[base + k * stride];
                }
                dt_1d(&f, &mut d_out, &mut v, &mut z);
                for k in 0..n {
                    dist[base + k * stride] = d_out[k];
                }
            }
        }
        dist
    }

    /// Largest disk (in cells) whose cells are all occupied, capped by the
    /// distance to the grid boundary. Returns the center in physical
    /// coordinates, the radius in cells and the radius in physical units.
    pub fn largest_filled_disk(&self) -> FilledDisk {
        let dist = self.squared_distance_to_unoccupied();
        let n = self.res;
        let mut best = 0.0_f64;
        let mut best_idx = 0usize;
        for (idx, &d2) in dist.iter().enumerate() {
            if d2 <= best {
                continue;
            }
            // Cap by the distance to the outside of the grid.
            let mut rem = idx;
            let mut boundary = f64::INFINITY;
            for _ in 0..self.dim {
                let c = rem % n;
                rem /= n;
                boundary = boundary.min((c + 1).min(n - c) as f64);
            }
            let eff = math::sqrt(d2).min(boundary);
            if eff > best {
                best = eff;
                best_idx = idx;
            }
        }
        let mut center = vec![0.0; self.dim];
        let mut rem = best_idx;
        for axis in (0..self.dim).rev() {
            let c = rem % n;
            rem /= n;
            let w = (self.hi[axis] - self.lo[axis]) / n as f64;
            center[axis] = self.lo[axis] + (c as f64 + 0.5) * w;
        }
        let radius_cells = best;
        let radius_physical = (radius_cells - 0.5).max(0.0) * self.cell_width();
        FilledDisk {
            center,
            radius_cells,
            radius_physical,
        }
    }
}

/// One-dimensional squared-distance transform (lower envelope of parabolas).
fn dt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FilledDisk {
    pub center: Vec<f64>,
    pub radius_cells: f64,
    pub radius_physical: f64,
}

// ---------------------------------------------------------------------------
// Cylinder cover rendering
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct CoverRender {
    pub grid: OccupancyGrid,
    pub complete: bool,
    pub nodes_visited: u64,
    pub cells_marked: u64,
}

/// Outer cover of the attractor by the bounding balls of depth-`n` cylinder
/// images. Marked cells are a superset of the cells meeting the attractor;
/// the balls nest with depth, so marked sets shrink as `n` grows.
pub fn render_cylinder_cover(
    ifs: &IfsInstance,
    depth: usize,
    res: usize,
    budget: u64,
) -> Result<CoverRender> {
    let mut grid = OccupancyGrid::for_instance(ifs, res, Provenance::CylinderCovered)?;
    let d = ifs.dim();
    let r0 = ifs.bounding_radius();
    let mut marked = 0u64;
    if depth == 0 {
        marked += grid.mark_ball(&vec![0.0; d], r0.max(f64::MIN_POSITIVE));
        return Ok(CoverRender {
            grid,
            complete: true,
            nodes_visited: 1,
            cells_marked: marked,
        });
    }
    let mut products: Vec<Matrix> = (0..=depth).map(|_| Matrix::zeros(d)).collect();
    products[0] = Matrix::identity(d);
    let mut centers: Vec<Vec<f64>> = vec![vec![0.0; d]; depth + 1];
    let mut nodes = 0u64;
    let mut complete = true;
    render_rec(
        ifs,
        depth,
        budget,
        &mut grid,
        &mut products,
        &mut centers,
        0,
        r0,
        &mut nodes,
        &mut marked,
        &mut complete,
    );
    Ok(CoverRender {
        grid,
        complete,
        nodes_visited: nodes,
        cells_marked: marked,
    })
}

#[allow(clippy::too_many_arguments)]
fn render_rec(
    ifs: &IfsInstance,
    depth: usize,
    budget: u64,
    grid: &mut OccupancyGrid,
    products: &mut [Matrix],
    centers: &mut [Vec<f64>],
    level: usize,
    r0: f64,
    nodes: &mut u64,
    marked: &mut u64,
    complete: &mut bool,
) {
    let d = ifs.dim();
    for letter in 1..=ifs.map_count() as u8 {
        if *nodes >= budget {
            *complete = false;
            return;
        }
        *nodes += 1;
        // center(I.j) = T_I a_j + center(I); product(I.j) = T_I T_j.
        let (head, tail) = products.split_at_mut(level + 1);
        head[level].mul_into(ifs.tuple().map_for(letter), &mut tail[0]);
        let (chead, ctail) = centers.split_at_mut(level + 1);
        head[level].apply(ifs.translation_for(letter), &mut ctail[0]);
        for (c, p) in ctail[0].iter_mut().zip(chead[level].iter()) {
            *c += p;
        }
        let radius = largest_singular_value(&products[level + 1]) * r0;
        // Cull subtrees whose ball misses the grid box entirely.
        let mut gap2 = 0.0;
        for axis in 0..d {
            let c = centers[level + 1][axis];
            let gap = if c < grid.lo()[axis] {
                grid.lo()[axis] - c
            } else if c > grid.hi()[axis] {
                c - grid.hi()[axis]
            } else {
                0.0
            };
            gap2 += gap * gap;
        }
        if gap2 > radius * radius {
            continue;
        }
        if level + 1 == depth {
            let center = centers[level + 1].clone();
            *marked += grid.mark_ball(&center, radius.max(f64::MIN_POSITIVE));
        } else {
            render_rec(
                ifs,
                depth,
                budget,
                grid,
                products,
                centers,
                level + 1,
                r0,
                nodes,
                marked,
                complete,
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Interior evidence and density evidence
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum InteriorVerdict {
    StableDisk,
    NoInteriorEvidence,
}

#[derive(Clone, Debug, Serialize)]
pub struct InteriorLevel {
    pub resolution: usize,
    pub occupied_cells: u64,
    pub occupied_volume: f64,
    pub disk: FilledDisk,
}

#[derive(Clone, Debug, Serialize)]
pub struct InteriorReport {
    pub levels: Vec<InteriorLevel>,
    /// Physical disk radii of consecutive levels, finer / coarser.
    pub radius_ratios: Vec<f64>,
    pub verdict: InteriorVerdict,
    /// Always false: refinement stability is evidence, not a certificate.
    pub certified: bool,
    pub note: String,
    pub truncation_depth: usize,
    pub samples_per_grid: u64,
}

/// Builds one point-sampled grid per resolution using fixed-size seeded
/// sample blocks (substream per block, so parallel and serial fills agree).
pub fn sampled_grids(
    ifs: &IfsInstance,
    source: SymbolSource<'_>,
    resolutions: &[usize],
    samples_per_grid: u64,
    seed: u64,
) -> Result<Vec<OccupancyGrid>> {
    if resolutions.is_empty() {
        return Err(CoreError::InvalidArgument("no resolutions given".into()));
    }
    let finest = *resolutions.iter().max().unwrap();
    let eps = sampling_accuracy(ifs, finest);
    let depth = ifs.truncation_depth(eps);
    let mut grids = Vec::with_capacity(resolutions.len());
    for (level, &res) in resolutions.iter().enumerate() {
        let mut grid = OccupancyGrid::for_instance(ifs, res, Provenance::PointSampled)?;
        let blocks = samples_per_grid.div_ceil(SAMPLE_BLOCK as u64);
        for block in 0..blocks {
            let count = SAMPLE_BLOCK.min((samples_per_grid - block * SAMPLE_BLOCK as u64) as usize);
            fill_grid_block(ifs, source, &mut grid, depth, seed, level, block, count)?;
        }
        grids.push(grid);
    }
    Ok(grids)
}

/// Default sampling accuracy: half the cell diagonal at the finest grid.
pub fn sampling_accuracy(ifs: &IfsInstance, finest_resolution: usize) -> f64 {
    let r = if ifs.bounding_radius() > 0.0 {
        ifs.bounding_radius()
    } else {
        0.5
    };
    let w = 2.0 * r / finest_resolution as f64;
    0.5 * w * math::sqrt(ifs.dim() as f64)
}

/// Fills one seeded sample block into a grid; exposed so callers can run
/// blocks in parallel and merge grids by summation.
#[allow(clippy::too_many_arguments)]
pub fn fill_grid_block(
    ifs: &IfsInstance,
    source: SymbolSource<'_>,
    grid: &mut OccupancyGrid,
    depth: usize,
    seed: u64,
    level: usize,
    block: u64,
    count: usize,
) -> Result<()> {
    let mut rng = rng::substream(seed, ((level as u64) << 32) | block);
    let m = ifs.map_count();
    let mut p;
    for _ in 0..count {
        let word = source.draw_word(m, depth, &mut rng);
        p = ifs.code_point(&word)?;
        grid.record(&p);
    }
    Ok(())
}

/// Heuristic interior detector: the largest fully-hit disk per resolution,
/// with a stability verdict across refinement. Explicitly non-certifying.
pub fn detect_interior(
    ifs: &IfsInstance,
    resolutions: &[usize],
    samples_per_grid: u64,
    seed: u64,
) -> Result<InteriorReport> {
    check_resolutions(resolutions)?;
    let grids = sampled_grids(
        ifs,
        SymbolSource::UniformLetters,
        resolutions,
        samples_per_grid,
        seed,
    )?;
    let finest = *resolutions.iter().max().unwrap();
    let depth = ifs.truncation_depth(sampling_accuracy(ifs, finest));
    Ok(interior_report_from_grids(&grids, depth, samples_per_grid))
}

/// Analysis half of [`detect_interior`], reusable on externally filled grids.
pub fn interior_report_from_grids(
    grids: &[OccupancyGrid],
    truncation_depth: usize,
    samples_per_grid: u64,
) -> InteriorReport {
    let levels: Vec<InteriorLevel> = grids
        .iter()
        .map(|g| InteriorLevel {
            resolution: g.res(),
            occupied_cells: g.count_occupied(),
            occupied_volume: g.occupied_volume(),
            disk: g.largest_filled_disk(),
        })
        .collect();
    let radius_ratios: Vec<f64> = levels
        .windows(2)
        .map(|w| {
            let coarse = w[0].disk.radius_physical;
            let fine = w[1].disk.radius_physical;
            if coarse > 0.0 {
                fine / coarse
            } else {
                0.0
            }
        })
        .collect();
    let finest_cells = levels.last().map(|l| l.disk.radius_cells).unwrap_or(0.0);
    let stable =
        !radius_ratios.is_empty() && radius_ratios.iter().all(|&r| r >= 0.8) && finest_cells >= 2.0;
    InteriorReport {
        levels,
        radius_ratios,
        verdict: if stable {
            InteriorVerdict::StableDisk
        } else {
            InteriorVerdict::NoInteriorEvidence
        },
        certified: false,
        note: "statistical evidence from refinement stability; not a certificate".into(),
        truncation_depth,
        samples_per_grid,
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum DensityVerdict {
    ConsistentWithPositiveMeasure,
    ConsistentWithMeasureZero,
    Indeterminate,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityLevel {
    pub resolution: usize,
    pub occupied_cells: u64,
    pub occupied_volume: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityReport {
    pub levels: Vec<DensityLevel>,
    /// Occupied volume of consecutive levels, finer / coarser.
    pub volume_ratios: Vec<f64>,
    pub verdict: DensityVerdict,
    pub truncation_depth: usize,
    pub samples_per_grid: u64,
}

/// Occupied-volume stability across refinement as evidence for or against
/// absolute continuity of the sampled measure.
pub fn measure_lower_evidence(
    ifs: &IfsInstance,
    source: SymbolSource<'_>,
    resolutions: &[usize],
    samples_per_grid: u64,
    seed: u64,
) -> Result<DensityReport> {
    check_resolutions(resolutions)?;
    let grids = sampled_grids(ifs, source, resolutions, samples_per_grid, seed)?;
    let finest = *resolutions.iter().max().unwrap();
    let depth = ifs.truncation_depth(sampling_accuracy(ifs, finest));
    Ok(density_report_from_grids(&grids, depth, samples_per_grid))
}

/// Analysis half of [`measure_lower_evidence`].
pub fn density_report_from_grids(
    grids: &[OccupancyGrid],
    truncation_depth: usize,
    samples_per_grid: u64,
) -> DensityReport {
    let levels: Vec<DensityLevel> = grids
        .iter()
        .map(|g| DensityLevel {
            resolution: g.res(),
            occupied_cells: g.count_occupied(),
            occupied_volume: g.occupied_volume(),
        })
        .collect();
    let volume_ratios: Vec<f64> = levels
        .windows(2)
        .map(|w| {
            if w[0].occupied_volume > 0.0 {
                w[1].occupied_volume / w[0].occupied_volume
            } else {
                0.0
            }
        })
        .collect();
    let verdict = if volume_ratios.iter().all(|&r| r >= 0.8) && !volume_ratios.is_empty() {
        DensityVerdict::ConsistentWithPositiveMeasure
    } else if volume_ratios.iter().all(|&r| r <= 0.6) {
        DensityVerdict::ConsistentWithMeasureZero
    } else {
        DensityVerdict::Indeterminate
    };
    DensityReport {
        levels,
        volume_ratios,
        verdict,
        truncation_depth,
        samples_per_grid,
    }
}

fn check_resolutions(resolutions: &[usize]) -> Result<()> {
    if resolutions.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "need at least two resolutions, coarser first".into(),
        ));
    }
    if resolutions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CoreError::InvalidArgument(
            "resolutions must be strictly increasing".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Demo systems (shared by tests, the CLI and the acceptance suite)
// ---------------------------------------------------------------------------

/// The unit-square system: four maps of ratio 1/2 with corner translations.
/// Its attractor is `[0,1]^2` and the uniform pushforward is Lebesgue.
pub fn unit_square_system() -> IfsInstance {
    let tuple = MapTuple::uniform_scalar(2, 4, 0.5).unwrap();
    IfsInstance::new(
        tuple,
        vec![
            vec![0.0, 0.0],
            vec![0.5, 0.0],
            vec![0.0, 0.5],
            vec![0.5, 0.5],
        ],
    )
    .unwrap()
}

/// 25 maps of ratio 0.45 with translations on the 5x5 grid over `[0,1]^2`,
/// perturbed by seeded uniform noise of the given size.
pub fn perturbed_grid25_system(noise: f64, seed: u64) -> IfsInstance {
    let tuple = MapTuple::uniform_scalar(2, 25, 0.45).unwrap();
    let mut rng = rng::seeded(seed);
    let mut translations = Vec::with_capacity(25);
    for i in 0..5 {
        for j in 0..5 {
            let dx = rng::uniform_in(&mut rng, -noise, noise);
            let dy = rng::uniform_in(&mut rng, -noise, noise);
            translations.push(vec![i as f64 * 0.25 + dx, j as f64 * 0.25 + dy]);
        }
    }
    IfsInstance::new(tuple, translations).unwrap()
}

/// Two maps of ratio 0.3 on a line segment: a measure-zero control system.
pub fn dust_control_system() -> IfsInstance {
    let tuple = MapTuple::uniform_scalar(2, 2, 0.3).unwrap();
    IfsInstance::new(tuple, vec![vec![0.0, 0.0], vec![0.7, 0.0]]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn zero_translations_code_to_origin() {
        let t = MapTuple::uniform_scalar(2, 3, 0.4).unwrap();
        let ifs = IfsInstance::new(t, vec![vec![0.0, 0.0]; 3]).unwrap();
        let p = ifs.code_point(&Word::parse("12321").unwrap()).unwrap();
        assert_eq!(p, vec![0.0, 0.0]);
        assert_eq!(ifs.truncation_depth(1e-9), 0);
    }

    #[test]
    fn constant_word_approaches_fixed_point() {
        let t = MapTuple::uniform_scalar(1, 1, 0.45).unwrap();
        let ifs = IfsInstance::new(t, vec![vec![1.0]]).unwrap();
        let fp = ifs.fixed_point(1).unwrap();
        approx(fp[0], 1.0 / 0.55, 1e-12);
        let w = Word::new(vec![1; 60]).unwrap();
        let p = ifs.code_point(&w).unwrap();
        approx(p[0], 1.0 / 0.55, 1e-10);
    }

    #[test]
    fn coding_respects_contraction_bound() {
        let ifs = unit_square_system();
        let r0 = ifs.bounding_radius();
        let mut rng = rng::seeded(5);
        for _ in 0..200 {
            let letters_x: Vec<u8> = (0..30)
                .map(|_| (rng::uniform_index(&mut rng, 4) + 1) as u8)
                .collect();
            let mut letters_y = letters_x.clone();
            let cut = rng::uniform_index(&mut rng, 30);
            for l in letters_y.iter_mut().skip(cut) {
                *l = (rng::uniform_index(&mut rng, 4) + 1) as u8;
            }
            let x = Word::new(letters_x).unwrap();
            let y = Word::new(letters_y).unwrap();
            let lcp = linalg::longest_common_prefix(&x, &y).len();
            let px = ifs.code_point(&x).unwrap();
            let py = ifs.code_point(&y).unwrap();
            let bound = ifs.tuple().delta().powi(lcp as i32) * 2.0 * r0 + 1e-12;
            assert!(linalg::dist(&px, &py) <= bound);
        }
    }

    #[test]
    fn samples_satisfy_self_affinity() {
        let ifs = unit_square_system();
        let mut rng = rng::seeded(6);
        for _ in 0..100 {
            let letters: Vec<u8> = (0..20)
                .map(|_| (rng::uniform_index(&mut rng, 4) + 1) as u8)
                .collect();
            let full = Word::new(letters.clone()).unwrap();
            let tail = Word::new(letters[1..].to_vec()).unwrap();
            let p_full = ifs.code_point(&full).unwrap();
            let p_tail = ifs.code_point(&tail).unwrap();
            let mut mapped = vec![0.0; 2];
            ifs.apply_map(letters[0], &p_tail, &mut mapped);
            assert!(linalg::dist(&p_full, &mapped) <= 1e-12);
        }
    }

    #[test]
    fn common_translation_with_equal_maps_hits_affine_fixed_point() {
        // All maps share T and a common translation u: every coded point is
        // (I - T)^{-1} u regardless of the word.
        let t = MapTuple::uniform_scalar(2, 3, 0.4).unwrap();
        let u = vec![0.3, -0.2];
        let ifs = IfsInstance::new(t, vec![u.clone(); 3]).unwrap();
        let expected = linalg::solve(
            &Matrix::identity(2).sub(&Matrix::identity(2).scaled(0.4)),
            &u,
        )
        .unwrap();
        let mut rng = rng::seeded(8);
        for _ in 0..20 {
            let letters: Vec<u8> = (0..60)
                .map(|_| (rng::uniform_index(&mut rng, 3) + 1) as u8)
                .collect();
            let p = ifs.code_point(&Word::new(letters).unwrap()).unwrap();
            assert!(linalg::dist(&p, &expected) <= 1e-10);
        }
    }

    #[test]
    fn unit_square_sample_mean_is_center() {
        let ifs = unit_square_system();
        let n = 10_000;
        let cloud = chaos_sample(
            &ifs,
            SymbolSource::UniformLetters,
            n,
            1e-4,
            &mut rng::seeded(9),
        )
        .unwrap();
        let mut mean = [0.0; 2];
        for p in cloud.iter() {
            mean[0] += p[0];
            mean[1] += p[1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        // Four sigma of the mean of Uniform[0,1].
        let four_sigma = 4.0 * (1.0f64 / 12.0 / n as f64).sqrt();
        assert!((mean[0] - 0.5).abs() < four_sigma, "{mean:?}");
        assert!((mean[1] - 0.5).abs() < four_sigma, "{mean:?}");
    }

    #[test]
    fn chaos_sampling_is_deterministic() {
        let ifs = unit_square_system();
        let a = chaos_sample(
            &ifs,
            SymbolSource::UniformLetters,
            500,
            1e-6,
            &mut rng::seeded(4),
        )
        .unwrap();
        let b = chaos_sample(
            &ifs,
            SymbolSource::UniformLetters,
            500,
            1e-6,
            &mut rng::seeded(4),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_map_samples_sit_at_fixed_point() {
        let t = MapTuple::uniform_scalar(2, 1, 0.3).unwrap();
        let ifs = IfsInstance::new(t, vec![vec![0.7, 0.1]]).unwrap();
        let fp = ifs.fixed_point(1).unwrap();
        let eps = 1e-6;
        let cloud = chaos_sample(
            &ifs,
            SymbolSource::UniformLetters,
            50,
            eps,
            &mut rng::seeded(2),
        )
        .unwrap();
        for p in cloud.iter() {
            assert!(linalg::dist(p, &fp) <= eps);
        }
    }

    #[test]
    fn cover_depth_zero_marks_ball() {
        let ifs = unit_square_system();
        let render = render_cylinder_cover(&ifs, 0, 32, 1 << 20).unwrap();
        assert!(render.complete);
        assert!(render.cells_marked > 0);
        // Center cell must be marked.
        let idx = render.grid.index_of(&[0.0, 0.0]).unwrap();
        assert!(render.grid.cells()[idx] > 0);
    }

    #[test]
    fn cover_counts_shrink_with_depth() {
        let ifs = unit_square_system();
        let c2 = render_cylinder_cover(&ifs, 2, 128, 1 << 24).unwrap();
        let c4 = render_cylinder_cover(&ifs, 4, 128, 1 << 24).unwrap();
        let c6 = render_cylinder_cover(&ifs, 6, 128, 1 << 24).unwrap();
        assert!(c2.complete && c4.complete && c6.complete);
        let n2 = c2.grid.count_occupied();
        let n4 = c4.grid.count_occupied();
        let n6 = c6.grid.count_occupied();
        assert!(n4 <= n2 && n6 <= n4, "{n2} {n4} {n6}");
    }

    #[test]
    fn samples_land_in_cover_cells() {
        let ifs = unit_square_system();
        let depth = 4;
        let render = render_cylinder_cover(&ifs, depth, 64, 1 << 24).unwrap();
        let cloud = chaos_sample(
            &ifs,
            SymbolSource::UniformLetters,
            500,
            1e-9,
            &mut rng::seeded(3),
        )
        .unwrap();
        for p in cloud.iter() {
            let idx = render.grid.index_of(p).unwrap();
            assert!(render.grid.cells()[idx] > 0, "unmarked cell for {p:?}");
        }
    }

    #[test]
    fn single_map_cover_shrinks_to_fixed_point() {
        let t = MapTuple::uniform_scalar(2, 1, 0.3).unwrap();
        let ifs = IfsInstance::new(t, vec![vec![0.7, 0.1]]).unwrap();
        let shallow = render_cylinder_cover(&ifs, 1, 64, 1 << 20).unwrap();
        let deep = render_cylinder_cover(&ifs, 12, 64, 1 << 20).unwrap();
        assert!(deep.grid.count_occupied() < shallow.grid.count_occupied());
        let fp = ifs.fixed_point(1).unwrap();
        let idx = deep.grid.index_of(&fp).unwrap();
        assert!(deep.grid.cells()[idx] > 0);
    }

    #[test]
    fn interior_unit_square_is_stable() {
        let ifs = unit_square_system();
        let report = detect_interior(&ifs, &[64, 128], 400_000, 11).unwrap();
        assert_eq!(report.verdict, InteriorVerdict::StableDisk);
        assert!(!report.certified);
        // The square has inradius 1/2; the disk must sit well inside.
        let finest = report.levels.last().unwrap();
        assert!(finest.disk.radius_physical > 0.3, "{:?}", finest.disk);
    }

    #[test]
    fn interior_dust_has_no_evidence() {
        let ifs = dust_control_system();
        let report = detect_interior(&ifs, &[64, 128], 100_000, 12).unwrap();
        assert_eq!(report.verdict, InteriorVerdict::NoInteriorEvidence);
    }

    #[test]
    fn density_unit_square_volume_near_one() {
        let ifs = unit_square_system();
        let report =
            measure_lower_evidence(&ifs, SymbolSource::UniformLetters, &[128, 256], 400_000, 13)
                .unwrap();
        assert_eq!(
            report.verdict,
            DensityVerdict::ConsistentWithPositiveMeasure
        );
        let finest = report.levels.last().unwrap();
        assert!((finest.occupied_volume - 1.0).abs() < 0.05, "{finest:?}");
    }

    #[test]
    fn density_dust_decays() {
        let ifs = dust_control_system();
        let report = measure_lower_evidence(
            &ifs,
            SymbolSource::UniformLetters,
            &[64, 128, 256],
            200_000,
            14,
        )
        .unwrap();
        assert_eq!(report.verdict, DensityVerdict::ConsistentWithMeasureZero);
        for r in &report.volume_ratios {
            assert!(*r <= 0.5, "ratio {r}");
        }
    }

    #[test]
    fn density_single_map_volume_shrinks() {
        let t = MapTuple::uniform_scalar(2, 1, 0.3).unwrap();
        let ifs = IfsInstance::new(t, vec![vec![0.7, 0.1]]).unwrap();
        let report = measure_lower_evidence(
            &ifs,
            SymbolSource::UniformLetters,
            &[32, 64, 128],
            20_000,
            15,
        )
        .unwrap();
        assert_eq!(report.verdict, DensityVerdict::ConsistentWithMeasureZero);
        assert!(report.levels.last().unwrap().occupied_volume < 1e-2);
    }

    #[test]
    fn filled_disk_on_hand_built_grid() {
        let mut g = OccupancyGrid::new(
            2,
            16,
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            Provenance::PointSampled,
        )
        .unwrap();
        // Occupy a centered 10x10 square of cells.
        for i in 3..13usize {
            for j in 3..13usize {
                let p = [(i as f64 + 0.5) / 16.0, (j as f64 + 0.5) / 16.0];
                g.record(&p);
            }
        }
        let disk = g.largest_filled_disk();
        assert!(
            disk.radius_cells >= 4.9 && disk.radius_cells <= 6.0,
            "{disk:?}"
        );
        approx(disk.center[0], 0.5, 0.07);
        approx(disk.center[1], 0.5, 0.07);
    }
}
