//! Location prior built from training masks.

use serde::{Deserialize, Serialize};

use crate::error::{DiscError, Result};
use crate::grid::{Grid, Mask};

/// Mean ground-truth mask at input resolution, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Grid<f64>", into = "Grid<f64>")]
pub struct SrMap(Grid<f64>);

impl SrMap {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DiscError::InvalidArgument(format!("SR value {v} outside [0, 1]")));
        }
        Ok(SrMap(grid))
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn side(&self) -> usize {
        self.0.height()
    }
}

impl TryFrom<Grid<f64>> for SrMap {
    type Error = DiscError;
    fn try_from(g: Grid<f64>) -> Result<Self> {
        SrMap::new(g)
    }
}

impl From<SrMap> for Grid<f64> {
    fn from(s: SrMap) -> Self {
        s.0
    }
}

/// Bilinear-resizes every mask to `side × side` and averages them.
pub fn build_sr_map<'a>(masks: impl IntoIterator<Item = &'a Mask>, side: usize) -> Result<SrMap> {
    if side == 0 {
        return Err(DiscError::InvalidArgument("SR side must be positive".into()));
    }
    let mut acc = vec![0.0; side * side];
    let mut n = 0usize;
    for m in masks {
        let r = m.to_f64().resize_bilinear(side, side);
        for (a, v) in acc.iter_mut().zip(r.data()) {
            *a += v;
        }
        n += 1;
    }
    if n == 0 {
        return Err(DiscError::InvalidArgument("SR map needs at least one mask".into()));
    }
    let data = acc.into_iter().map(|a| (a / n as f64).clamp(0.0, 1.0)).collect();
    SrMap::new(Grid::new(side, side, data)?)
}
