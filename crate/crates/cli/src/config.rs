//! Config files: parsing, validation, precomputed gate values and hashing.

use affine_interior_core::dimension;
use affine_interior_core::geometry::IfsInstance;
use affine_interior_core::linalg::{MapTuple, Matrix};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;
use std::path::Path;

/// Parse/validation failures carry a stable code for shell pipelines plus
/// field context.
#[derive(Debug)]
pub struct ConfigError {
    pub code: &'static str,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(code: &'static str, message: String) -> ConfigError {
    ConfigError { code, message }
}

#[derive(Debug, Clone, Deserialize)]
struct RawMap {
    matrix: Vec<f64>,
    translation: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
struct RawConfig {
    d: usize,
    maps: Vec<RawMap>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    labels: Option<Value>,
}

/// Gate quantities attached to every parsed system.
#[derive(Debug, Clone, Serialize)]
pub struct Gates {
    pub delta: f64,
    pub norm_gate_half: bool,
    /// `sum_i a_d(T_i)^d |det T_i|`.
    pub first_level_sum: f64,
    pub det_sq_sum: f64,
    pub det_sum: f64,
    pub max_commutator: f64,
    pub all_conformal: bool,
}

/// A validated system: the affine IFS plus reporting metadata.
pub struct LoadedSystem {
    pub ifs: IfsInstance,
    pub seed: u64,
    pub gates: Gates,
    pub labels: Option<Value>,
    /// Canonical JSON of the resolved config (hash input).
    pub canonical: Value,
}

impl LoadedSystem {
    pub fn dim(&self) -> usize {
        self.ifs.dim()
    }

    pub fn tuple(&self) -> &MapTuple {
        self.ifs.tuple()
    }
}

pub fn parse_config_file(
    path: &Path,
    seed_override: Option<u64>,
) -> Result<LoadedSystem, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| err("E_IO", format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text, seed_override)
}

pub fn parse_config_text(
    text: &str,
    seed_override: Option<u64>,
) -> Result<LoadedSystem, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| {
        err(
            "E_JSON",
            format!(
                "malformed config at line {}, column {}: {e}",
                e.line(),
                e.column()
            ),
        )
    })?;
    if raw.d == 0 {
        return Err(err("E_DIM", "d must be at least 1".into()));
    }
    if raw.maps.is_empty() {
        return Err(err(
            "E_EMPTY",
            "config must contain at least one map".into(),
        ));
    }
    let d = raw.d;
    let mut matrices = Vec::with_capacity(raw.maps.len());
    let mut translations = Vec::with_capacity(raw.maps.len());
    for (i, map) in raw.maps.iter().enumerate() {
        if map.matrix.len() != d * d {
            return Err(err(
                "E_ARITY",
                format!(
                    "map {}: matrix has {} entries, expected {} for d = {d}",
                    i + 1,
                    map.matrix.len(),
                    d * d
                ),
            ));
        }
        if map.translation.len() != d {
            return Err(err(
                "E_ARITY",
                format!(
                    "map {}: translation has {} entries, expected {d}",
                    i + 1,
                    map.translation.len()
                ),
            ));
        }
        if map
            .matrix
            .iter()
            .chain(&map.translation)
            .any(|x| !x.is_finite())
        {
            return Err(err(
                "E_NONFINITE",
                format!("map {}: entries must be finite numbers", i + 1),
            ));
        }
        let matrix = Matrix::new(d, map.matrix.clone())
            .map_err(|e| err("E_MATRIX", format!("map {}: {e}", i + 1)))?;
        matrices.push(matrix);
        translations.push(map.translation.clone());
    }
    let tuple = MapTuple::new(matrices).map_err(|e| {
        let code = match e {
            affine_interior_core::CoreError::SingularMatrix { .. } => "E_SINGULAR",
            affine_interior_core::CoreError::NotContracting { .. } => "E_EXPANDING",
            _ => "E_MATRIX",
        };
        err(code, e.to_string())
    })?;

    let first_level = dimension::check_first_level(&tuple);
    let (max_commutator, _, _) = tuple.max_commutator();
    let gates = Gates {
        delta: tuple.delta(),
        norm_gate_half: tuple.delta() < 0.5,
        first_level_sum: first_level.condition_i_sum,
        det_sq_sum: tuple.dets().iter().map(|x| x * x).sum(),
        det_sum: tuple.dets().iter().map(|x| x.abs()).sum(),
        max_commutator,
        all_conformal: first_level.all_conformal,
    };

    let seed = seed_override.or(raw.seed).unwrap_or(0);
    let canonical = serde_json::json!({
        "d": d,
        "maps": raw
            .maps
            .iter()
            .map(|m| {
                serde_json::json!({
                    "matrix": m.matrix,
                    "translation": m.translation,
                })
            })
            .collect::<Vec<_>>(),
        "seed": seed,
    });

    let ifs = IfsInstance::new(tuple, translations).map_err(|e| err("E_MATRIX", e.to_string()))?;
    Ok(LoadedSystem {
        ifs,
        seed,
        gates,
        labels: raw.labels,
        canonical,
    })
}
