//! Observed outcomes of a two-group, two-period design.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One (group, period) cell. Group 1 in period 1 is the treated cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cell {
    #[serde(rename = "00")]
    C00,
    #[serde(rename = "01")]
    C01,
    #[serde(rename = "10")]
    C10,
    #[serde(rename = "11")]
    C11,
}

impl Cell {
    pub const ALL: [Cell; 4] = [Cell::C00, Cell::C01, Cell::C10, Cell::C11];

    pub fn from_labels(group: u8, period: u8) -> Option<Cell> {
        match (group, period) {
            (0, 0) => Some(Cell::C00),
            (0, 1) => Some(Cell::C01),
            (1, 0) => Some(Cell::C10),
            (1, 1) => Some(Cell::C11),
            _ => None,
        }
    }

    pub fn group(self) -> u8 {
        match self {
            Cell::C00 | Cell::C01 => 0,
            Cell::C10 | Cell::C11 => 1,
        }
    }

    pub fn period(self) -> u8 {
        match self {
            Cell::C00 | Cell::C10 => 0,
            Cell::C01 | Cell::C11 => 1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Cell::C00 => "00",
            Cell::C01 => "01",
            Cell::C10 => "10",
            Cell::C11 => "11",
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Outcomes observed in a single cell. Never empty, every value finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSample {
    cell: Cell,
    outcomes: Vec<f64>,
}

impl CellSample {
    pub fn new(cell: Cell, outcomes: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptyCell.in_cell(cell));
        }
        if let Some(pos) = outcomes.iter().position(|y| !y.is_finite()) {
            return Err(Error::NonFinite(pos).in_cell(cell));
        }
        Ok(Self { cell, outcomes })
    }

    pub fn cell(&self) -> Cell {
        self.cell
    }

    pub fn group(&self) -> u8 {
        self.cell.group()
    }

    pub fn period(&self) -> u8 {
        self.cell.period()
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Element-wise image under `f`, re-validated.
    pub fn try_map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        CellSample::new(self.cell, self.outcomes.iter().map(|&y| f(y)).collect())
    }
}

/// The four cells of the design, indexed by [`Cell`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadData {
    cells: [CellSample; 4],
}

impl QuadData {
    pub fn new(
        cell_00: CellSample,
        cell_01: CellSample,
        cell_10: CellSample,
        cell_11: CellSample,
    ) -> Result<Self> {
        let cells = [cell_00, cell_01, cell_10, cell_11];
        for (expected, sample) in Cell::ALL.into_iter().zip(&cells) {
            if sample.cell() != expected {
                return Err(Error::CellMismatch {
                    expected,
                    found: sample.cell(),
                });
            }
        }
        Ok(Self { cells })
    }

    /// Builds all four cells from raw outcome vectors in `00, 01, 10, 11` order.
    pub fn from_vecs(y00: Vec<f64>, y01: Vec<f64>, y10: Vec<f64>, y11: Vec<f64>) -> Result<Self> {
        Self::new(
            CellSample::new(Cell::C00, y00)?,
            CellSample::new(Cell::C01, y01)?,
            CellSample::new(Cell::C10, y10)?,
            CellSample::new(Cell::C11, y11)?,
        )
    }

    pub fn cell(&self, cell: Cell) -> &CellSample {
        &self.cells[cell.index()]
    }

    pub fn cells(&self) -> &[CellSample; 4] {
        &self.cells
    }

    pub fn sizes(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|i| self.cells[i].len())
    }

    pub fn total_len(&self) -> usize {
        self.sizes().iter().sum()
    }

    /// Applies a fallible per-cell map, keeping the cell labels.
    pub fn try_map_cells(&self, mut f: impl FnMut(&CellSample) -> Result<CellSample>) -> Result<Self> {
        let [a, b, c, d] = &self.cells;
        Self::new(f(a)?, f(b)?, f(c)?, f(d)?)
    }
}
