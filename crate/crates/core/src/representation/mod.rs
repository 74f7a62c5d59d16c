//! Finite-dimensional representations of supply and demand curve pairs.
//!
//! A [`BasisPair`] maps the grid evaluations of a supply curve and a demand
//! curve to one score vector (supply coordinates first) and back.

pub mod fpca;
pub mod pava;
pub mod zst;

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use fpca::{fit_fpca, knee_index, select_num_components, ComponentSelection, FpcaBasis};
pub use pava::{
    enforce_monotonicity, isotonic_decreasing, isotonic_increasing, isotonic_increasing_weighted,
    max_violation,
};
pub use zst::{fit_zst, ZstBasis};

use crate::error::{Error, Result};
use crate::market_data::Side;
use crate::smoothing::EvaluationGrid;

/// Joint score vector `y_{d,h}` of one hour: supply scores, then demand.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub day: NaiveDate,
    pub hour: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CurveBasis {
    Fpca(FpcaBasis),
    Zst(ZstBasis),
}

impl CurveBasis {
    pub fn side(&self) -> Side {
        match self {
            CurveBasis::Fpca(b) => b.side,
            CurveBasis::Zst(b) => b.side,
        }
    }

    pub fn grid(&self) -> &EvaluationGrid {
        match self {
            CurveBasis::Fpca(b) => &b.grid,
            CurveBasis::Zst(b) => &b.grid,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CurveBasis::Fpca(b) => b.dim(),
            CurveBasis::Zst(b) => b.dim(),
        }
    }

    pub fn project(&self, values: &[f64]) -> Result<Vec<f64>> {
        match self {
            CurveBasis::Fpca(b) => b.project(values),
            CurveBasis::Zst(b) => b.project(values),
        }
    }

    pub fn reconstruct(&self, coords: &[f64]) -> Result<Vec<f64>> {
        match self {
            CurveBasis::Fpca(b) => b.reconstruct(coords),
            CurveBasis::Zst(b) => b.reconstruct(coords),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisPair {
    pub supply: CurveBasis,
    pub demand: CurveBasis,
}

impl BasisPair {
    pub fn new(supply: CurveBasis, demand: CurveBasis) -> Result<Self> {
        if supply.side() != Side::Supply || demand.side() != Side::Demand {
            return Err(Error::Parameter(
                "a basis pair needs a supply basis and a demand basis".into(),
            ));
        }
        Ok(Self { supply, demand })
    }

    /// `K = K_s + K_d`.
    pub fn dim(&self) -> usize {
        self.supply.dim() + self.demand.dim()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.supply.dim(), self.demand.dim())
    }

    pub fn project(&self, supply: &[f64], demand: &[f64]) -> Result<Vec<f64>> {
        let mut v = self.supply.project(supply)?;
        v.extend(self.demand.project(demand)?);
        Ok(v)
    }

    /// Splits a joint vector and reconstructs both curves on the grid.
    pub fn reconstruct(&self, scores: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if scores.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: scores.len(),
            });
        }
        let (s, d) = scores.split_at(self.supply.dim());
        Ok((self.supply.reconstruct(s)?, self.demand.reconstruct(d)?))
    }

    /// Writes the pair as a JSON bundle (means, components, eigenvalues or
    /// price grids).
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }
}
