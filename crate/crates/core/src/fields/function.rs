use crate::error::{Error, Result};

use super::domain::Point;
use super::grid::Grid;

/// Values sampled on grid nodes, optionally for every time level, with one
/// or more components. Layout is level-major, then node, then component.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    nodes: usize,
    levels: usize,
    components: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(nodes: usize, levels: usize, components: usize) -> Self {
        GridFunction {
            nodes,
            levels,
            components,
            values: vec![0.0; nodes * levels * components],
        }
    }

    pub fn from_values(
        nodes: usize,
        levels: usize,
        components: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != nodes * levels * components {
            return Err(Error::Config(format!(
                "grid function expects {} values, got {}",
                nodes * levels * components,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "grid function value {bad} is not finite"
            )));
        }
        Ok(GridFunction {
            nodes,
            levels,
            components,
            values,
        })
    }

    /// Scalar spatial field sampled from a closure over active nodes.
    pub fn spatial(grid: &Grid, f: impl Fn(Point) -> f64) -> Self {
        let mut g = GridFunction::zeros(grid.node_count(), 1, 1);
        for i in grid.active_nodes() {
            g.values[i] = f(grid.coords(i));
        }
        g
    }

    /// Scalar space-time field sampled from a closure over active nodes.
    pub fn spacetime(grid: &Grid, f: impl Fn(Point, f64) -> f64) -> Self {
        let m = grid.node_count();
        let mut g = GridFunction::zeros(m, grid.levels(), 1);
        for n in 0..grid.levels() {
            let t = grid.time(n);
            for i in grid.active_nodes() {
                g.values[n * m + i] = f(grid.coords(i), t);
            }
        }
        g
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, level: usize, node: usize, comp: usize) -> f64 {
        self.values[(level * self.nodes + node) * self.components + comp]
    }

    #[inline]
    pub fn set(&mut self, level: usize, node: usize, comp: usize, v: f64) {
        self.values[(level * self.nodes + node) * self.components + comp] = v;
    }

    /// Values of one level (all components interleaved).
    pub fn level(&self, level: usize) -> &[f64] {
        let w = self.nodes * self.components;
        &self.values[level * w..(level + 1) * w]
    }

    pub fn level_mut(&mut self, level: usize) -> &mut [f64] {
        let w = self.nodes * self.components;
        &mut self.values[level * w..(level + 1) * w]
    }

    /// One component of a multi-component function as a scalar function.
    pub fn component(&self, comp: usize) -> GridFunction {
        let values = self
            .values
            .chunks(self.components)
            .map(|c| c[comp])
            .collect();
        GridFunction {
            nodes: self.nodes,
            levels: self.levels,
            components: 1,
            values,
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        debug_assert_eq!(self.values.len(), other.values.len());
        GridFunction {
            nodes: self.nodes,
            levels: self.levels,
            components: self.components,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}
