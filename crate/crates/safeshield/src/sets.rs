//! JSON forms of zonotopes and boxes.
//!
//! A zonotope is `{"center": [..], "generators": [[..], ..]}` with one inner array per
//! row of the generator matrix; a box is `{"center": [..], "half_widths": [..]}`.

use std::path::Path;

use safeshield_core::{AxisBox, Matrix, Vector, Zonotope};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZonotopeJson {
    pub center: Vec<f64>,
    pub generators: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxJson {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
}

impl ZonotopeJson {
    pub fn to_zonotope(&self) -> Result<Zonotope> {
        let d = self.center.len();
        if self.generators.len() != d {
            return Err(BenchError::Config(format!(
                "zonotope has {} generator rows for a {d}-dimensional centre",
                self.generators.len()
            )));
        }
        let n = self.generators.first().map_or(0, |r| r.len());
        if self.generators.iter().any(|r| r.len() != n) {
            return Err(BenchError::Config("generator rows differ in length".into()));
        }
        let g = Matrix::from_fn(d, n, |i, j| self.generators[i][j]);
        Ok(Zonotope::new(Vector::from_column_slice(&self.center), g)?)
    }
}

impl From<&Zonotope> for ZonotopeJson {
    fn from(z: &Zonotope) -> Self {
        let g = z.generators();
        ZonotopeJson {
            center: z.center().iter().copied().collect(),
            generators: g.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

impl BoxJson {
    pub fn to_box(&self) -> Result<AxisBox> {
        Ok(AxisBox::new(
            Vector::from_column_slice(&self.center),
            Vector::from_column_slice(&self.half_widths),
        )?)
    }
}

impl From<&AxisBox> for BoxJson {
    fn from(b: &AxisBox) -> Self {
        BoxJson {
            center: b.center().iter().copied().collect(),
            half_widths: b.half_widths().iter().copied().collect(),
        }
    }
}

pub fn read_zonotope(path: &Path) -> Result<Zonotope> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    let dto: ZonotopeJson = serde_json::from_str(&text).map_err(|e| BenchError::format(path, e))?;
    dto.to_zonotope()
}

pub fn write_zonotope(path: &Path, z: &Zonotope) -> Result<()> {
    let text = serde_json::to_string_pretty(&ZonotopeJson::from(z)).expect("plain data serialises");
    std::fs::write(path, text + "\n").map_err(|e| BenchError::io(path, e))
}
