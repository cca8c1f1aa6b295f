//! Worker-count control and deterministic parallel helpers.
//!
//! Parallel and serial paths produce identical artifacts: sampling uses one
//! RNG substream per fixed-size block regardless of which worker runs it,
//! and grid/report merges are commutative.

use affine_interior_core::geometry::{
    fill_grid_block, sampling_accuracy, IfsInstance, OccupancyGrid, Provenance, SymbolSource,
    SAMPLE_BLOCK,
};
use affine_interior_core::measure::BlockBernoulli;
use affine_interior_core::measure::{verify_cylinder_bound, BoundCheckReport, CylinderBound};
use affine_interior_core::Word;
use anyhow::Result;

/// Worker cap from `AFFINE_INTERIOR_THREADS`, defaulting to the machine's
/// available parallelism.
pub fn worker_count() -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var("AFFINE_INTERIOR_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(|n| n.min(64))
            .unwrap_or(available),
        Err(_) => available,
    }
}

/// Point-sampled grids per resolution, identical to the serial core path but
/// with sample blocks distributed over workers.
pub fn sampled_grids_parallel(
    ifs: &IfsInstance,
    resolutions: &[usize],
    samples_per_grid: u64,
    seed: u64,
) -> Result<Vec<OccupancyGrid>> {
    let workers = worker_count();
    let mut grids = Vec::with_capacity(resolutions.len());
    for (level, &res) in resolutions.iter().enumerate() {
        let finest = *resolutions.iter().max().unwrap();
        let eps = sampling_accuracy(ifs, finest);
        let depth = ifs.truncation_depth(eps);
        let blocks = samples_per_grid.div_ceil(SAMPLE_BLOCK as u64);
        let mut grid = OccupancyGrid::for_instance(ifs, res, Provenance::PointSampled)?;
        if workers <= 1 || blocks <= 1 {
            for block in 0..blocks {
                let count =
                    SAMPLE_BLOCK.min((samples_per_grid - block * SAMPLE_BLOCK as u64) as usize);
                fill_grid_block(
                    ifs,
                    SymbolSource::UniformLetters,
                    &mut grid,
                    depth,
                    seed,
                    level,
                    block,
                    count,
                )?;
            }
        } else {
            let partials = std::thread::scope(|scope| -> Result<Vec<OccupancyGrid>> {
                let mut handles = Vec::new();
                for w in 0..workers {
                    let ifs_ref = &*ifs;
                    let handle = scope.spawn(move || -> Result<OccupancyGrid> {
                        let mut local =
                            OccupancyGrid::for_instance(ifs_ref, res, Provenance::PointSampled)?;
                        let mut block = w as u64;
                        while block < blocks {
                            let count = SAMPLE_BLOCK
                                .min((samples_per_grid - block * SAMPLE_BLOCK as u64) as usize);
                            fill_grid_block(
                                ifs_ref,
                                SymbolSource::UniformLetters,
                                &mut local,
                                depth,
                                seed,
                                level,
                                block,
                                count,
                            )?;
                            block += workers as u64;
                        }
                        Ok(local)
                    });
                    handles.push(handle);
                }
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker panicked"))
                    .collect()
            })?;
            for p in &partials {
                grid.merge_from(p)?;
            }
        }
        grids.push(grid);
    }
    Ok(grids)
}

/// Cylinder-bound sweep partitioned over first letters; merging reports is a
/// max, so the partition cannot change the outcome.
pub fn verify_bound_parallel(
    mu: &BlockBernoulli,
    bound: &CylinderBound,
    depth: usize,
) -> Result<BoundCheckReport> {
    let workers = worker_count();
    let m = mu.tuple().len();
    if workers <= 1 || depth <= 1 || m <= 1 {
        return Ok(verify_cylinder_bound(mu, bound, depth, &Word::empty())?);
    }
    // Depth-1 words, then each first-letter subtree.
    let mut merged = verify_cylinder_bound(mu, bound, 1, &Word::empty())?;
    let parts = std::thread::scope(|scope| -> Result<Vec<BoundCheckReport>> {
        let mut handles = Vec::new();
        for chunk in (1..=m as u8)
            .collect::<Vec<_>>()
            .chunks(m.div_ceil(workers))
        {
            let letters = chunk.to_vec();
            let handle = scope.spawn(move || -> Result<Vec<BoundCheckReport>> {
                letters
                    .iter()
                    .map(|&l| {
                        Ok(verify_cylinder_bound(
                            mu,
                            bound,
                            depth,
                            &Word::new(vec![l])?,
                        )?)
                    })
                    .collect()
            });
            handles.push(handle);
        }
        let mut out = Vec::new();
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })?;
    for p in parts {
        merged.words_checked += p.words_checked;
        if p.max_ratio > merged.max_ratio {
            merged.max_ratio = p.max_ratio;
            merged.argmax_word = p.argmax_word;
        }
        merged.holds &= p.holds;
    }
    merged.depth = depth;
    Ok(merged)
}
