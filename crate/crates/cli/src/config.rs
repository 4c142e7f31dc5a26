//! JSON scenario files.
//!
//! Matrices are arrays of rows. A state-space block may omit `a`, `b` and
//! `c` to describe a static gain `d`.

use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use retrofit_core::grid::config::{template, GridConfig};
use retrofit_core::linalg::Mat;
use retrofit_core::lti::{PartitionedPlant, StateSpace};

use crate::CliError;

type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default)]
    pub a: Rows,
    #[serde(default)]
    pub b: Rows,
    #[serde(default)]
    pub c: Rows,
    pub d: Rows,
}

/// Standard plant `ẋ = A x + B_v v + B_d d + B_u u`, outputs `(w, z, y)`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub a: Rows,
    pub b_v: Rows,
    pub b_d: Rows,
    pub b_u: Rows,
    pub c_w: Rows,
    pub c_z: Rows,
    pub c_y: Rows,
    /// Full feedthrough, outputs `(w, z, y)` by inputs `(v, d, u)`.
    #[serde(default)]
    pub d: Option<Rows>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub plant: PlantSpec,
    /// Internal stabilizer, composed with the output rectifier.
    #[serde(default)]
    pub k_hat: Option<SystemSpec>,
    /// Arbitrary controller acting on `y` or `(y, v)`.
    #[serde(default)]
    pub controller: Option<SystemSpec>,
    /// Youla parameter acting on `y` or `(y, v)`.
    #[serde(default)]
    pub q: Option<SystemSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeConfig {
    pub plant: PlantSpec,
    /// Bound on the interaction gain; defaults to ‖G_wd‖∞.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub alpha_target: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub subsystems: Vec<PlantSpec>,
    pub interaction: SystemSpec,
    pub k_hats: Vec<SystemSpec>,
}

fn matrix(rows: &Rows, nrows: usize, ncols: usize, what: &str) -> Result<Mat, String> {
    if rows.is_empty() && (nrows == 0 || ncols == 0) {
        return Ok(Mat::zeros(nrows, ncols));
    }
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("`{what}` must be {nrows}x{ncols}"));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn width(rows: &Rows) -> usize {
    rows.first().map_or(0, Vec::len)
}

impl SystemSpec {
    pub fn build(&self) -> Result<StateSpace, String> {
        let n = self.a.len();
        let (p, m) = (self.d.len(), width(&self.d));
        let sys = StateSpace::new(
            matrix(&self.a, n, n, "a")?,
            matrix(&self.b, n, m, "b")?,
            matrix(&self.c, p, n, "c")?,
            matrix(&self.d, p, m, "d")?,
        );
        sys.map_err(|e| e.to_string())
    }
}

impl PlantSpec {
    pub fn build(&self) -> Result<PartitionedPlant, String> {
        let n = self.a.len();
        if n == 0 {
            return Err("plant needs at least one state".into());
        }
        let a = matrix(&self.a, n, n, "a")?;
        let (nv, nd, nu) = (width(&self.b_v), width(&self.b_d), width(&self.b_u));
        let (nw, nz, ny) = (self.c_w.len(), self.c_z.len(), self.c_y.len());
        let b = [matrix(&self.b_v, n, nv, "b_v")?, matrix(&self.b_d, n, nd, "b_d")?, matrix(&self.b_u, n, nu, "b_u")?];
        let c = [matrix(&self.c_w, nw, n, "c_w")?, matrix(&self.c_z, nz, n, "c_z")?, matrix(&self.c_y, ny, n, "c_y")?];
        let d = match &self.d {
            Some(rows) => Some(matrix(rows, nw + nz + ny, nv + nd + nu, "d")?),
            None => None,
        };
        PartitionedPlant::from_blocks(a, [&b[0], &b[1], &b[2]], [&c[0], &c[1], &c[2]], d).map_err(|e| e.to_string())
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), message: e.to_string() })
}

/// Grid scenario: a full grid config, or `{"template": <name>}`. Without a
/// path the `desk4` template is used.
pub fn load_grid(path: Option<&Path>) -> Result<GridConfig, CliError> {
    let Some(path) = path else {
        return Ok(retrofit_core::grid::config::desk4());
    };
    let text = read_text(path)?;
    let bad = |message: String| CliError::Config { path: path.to_path_buf(), message };
    let value: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if let Some(name) = value.get("template") {
        let name = name.as_str().ok_or_else(|| bad("`template` must be a string".into()))?;
        return template(name).map_err(|e| bad(e.to_string()));
    }
    GridConfig::from_json(&text).map_err(|e| bad(e.to_string()))
}
