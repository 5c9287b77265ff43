//! Named drift fields and the model description shared by the command
//! line and the study harness.
//!
//! A drift is specified by a short string: the name of a built-in
//! polynomial, a parametric family such as `ou:1.5` or
//! `poly:-0.25,-2,0,-5`, or the path of a CSV file holding one nodal
//! value per mesh node. The benchmark preset `cubic` is
//! `mu(x) = -5x^3 - 2x - 1/4`, whose stationary density for `sigma = 1/2`
//! on `(-1, 1)` is proportional to `exp(-10x^4 - 8x^2 - 2x)`; cubic
//! elements represent every built-in preset exactly.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::fem::DriftField;
use crate::mesh::{FemFunction, Mesh};
use crate::sde::SdeModel;
use crate::{Error, Result};

/// Model description used by configuration files: a drift specification,
/// the diffusion coefficient, the domain, and the estimation mesh size.
/// Fields omitted from a serialized config fall back to the defaults,
/// which describe the benchmark model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Drift specification accepted by [`load_drift`].
    pub drift: String,
    pub sigma: f64,
    /// Interval `(a, b)` on which densities live.
    pub domain: [f64; 2],
    /// Elements of the shared estimation mesh for drift and density.
    pub mesh_elements: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            drift: "cubic".to_string(),
            sigma: 0.5,
            domain: [-1.0, 1.0],
            mesh_elements: 64,
        }
    }
}

impl ModelConfig {
    pub fn mesh(&self) -> Result<Mesh> {
        Mesh::new(self.domain[0], self.domain[1], self.mesh_elements)
    }

    /// The drift named by the config, interpolated on the config mesh.
    pub fn drift_field(&self) -> Result<DriftField> {
        load_drift(&self.drift, self.mesh()?)
    }

    pub fn model(&self) -> Result<SdeModel> {
        SdeModel::new(self.drift_field()?, self.sigma)
    }
}

/// Resolves a drift specification: an existing file is read as a nodal
/// CSV, anything else is parsed as a preset name.
pub fn load_drift(spec: &str, mesh: Mesh) -> Result<DriftField> {
    let path = Path::new(spec);
    if path.is_file() {
        nodal_csv(path, mesh)
    } else {
        preset(spec, mesh)
    }
}

/// Parses a named or parametric drift preset.
///
/// * `cubic`: the benchmark `-5x^3 - 2x - 1/4`.
/// * `zero`: the zero drift.
/// * `linear`: `-x`.
/// * `ou:<theta>`: the Ornstein-Uhlenbeck drift `-theta x`.
/// * `poly:c0,c1,...`: the polynomial `sum_k c_k x^k`.
pub fn preset(name: &str, mesh: Mesh) -> Result<DriftField> {
    if let Some(theta) = name.strip_prefix("ou:") {
        let theta: f64 = theta.trim().parse().map_err(|e| Error::Parse {
            what: format!("mean-reversion rate in preset {name:?}"),
            message: format!("{e}"),
        })?;
        return Ok(DriftField::from_fn(mesh, |x| -theta * x));
    }
    if let Some(list) = name.strip_prefix("poly:") {
        let coeffs = list
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                what: format!("coefficient list in preset {name:?}"),
                message: format!("{e}"),
            })?;
        if coeffs.is_empty() {
            return Err(Error::invalid("poly preset needs at least one coefficient"));
        }
        return Ok(DriftField::from_fn(mesh, move |x| {
            coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
        }));
    }
    match name {
        "cubic" => Ok(DriftField::from_fn(mesh, |x| {
            -5.0 * x.powi(3) - 2.0 * x - 0.25
        })),
        "zero" => Ok(DriftField::zeros(mesh)),
        "linear" => Ok(DriftField::from_fn(mesh, |x| -x)),
        other => Err(Error::invalid(format!(
            "unknown drift preset {other:?}; expected cubic, zero, linear, \
             ou:<theta>, poly:<c0,c1,...>, or the path of a nodal CSV file"
        ))),
    }
}

/// Reads one nodal value per line (header lines are skipped, an optional
/// leading `x` column is ignored) and checks the count against the mesh.
pub fn nodal_csv(path: &Path, mesh: Mesh) -> Result<DriftField> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let last = line.split(',').next_back().expect("split is nonempty");
        match last.trim().parse::<f64>() {
            Ok(v) => values.push(v),
            // The first non-numeric line is a header; later ones are data
            // corruption.
            Err(_) if values.is_empty() => {}
            Err(e) => {
                return Err(Error::Parse {
                    what: format!("nodal value in {}", path.display()),
                    message: format!("{e} in line {line:?}"),
                })
            }
        }
    }
    if values.len() != mesh.n_dofs() {
        return Err(Error::invalid(format!(
            "{} holds {} nodal values but the mesh has {} nodes",
            path.display(),
            values.len(),
            mesh.n_dofs()
        )));
    }
    Ok(DriftField::new(FemFunction::new(
        mesh,
        DVector::from_vec(values),
    )?))
}
