use serde::Serialize;

use crate::fields::{CoefficientSet, Grid};

/// Sign of `A . nu` at every boundary entry of the grid and time level.
/// Entries index `Grid::boundary()`.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryPartition {
    levels: usize,
    entries: usize,
    /// `true` on the outflow part, level-major.
    outflow: Vec<bool>,
}

impl BoundaryPartition {
    pub fn is_outflow(&self, level: usize, entry: usize) -> bool {
        self.outflow[level * self.entries + entry]
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn entries(&self) -> usize {
        self.entries
    }

    /// `(level, entry)` pairs on the outflow part.
    pub fn outflow_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.levels).flat_map(move |n| {
            (0..self.entries)
                .filter(move |&e| self.is_outflow(n, e))
                .map(move |e| (n, e))
        })
    }

    pub fn outflow_count(&self) -> usize {
        self.outflow.iter().filter(|&&o| o).count()
    }
}

/// Classifies boundary entries by the sign of `A(x,t) . nu(x)`. Values within
/// `1e-12 |A|` of zero count as inflow.
pub fn partition_boundary(cs: &CoefficientSet, grid: &Grid) -> BoundaryPartition {
    let bnd = grid.boundary();
    let levels = grid.levels();
    let mut outflow = Vec::with_capacity(levels * bnd.len());
    for n in 0..levels {
        let t = grid.time(n);
        for b in bnd {
            let a = cs.a.value(grid.coords(b.node), t);
            let (an, norm) = if grid.dim() == 1 {
                (a[0] * b.normal[0], a[0].abs())
            } else {
                (a[0] * b.normal[0] + a[1] * b.normal[1], a[0].hypot(a[1]))
            };
            outflow.push(an > 1e-12 * norm);
        }
    }
    BoundaryPartition {
        levels,
        entries: bnd.len(),
        outflow,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Facet, ProblemDomain, TimeFactor, VectorField};

    #[test]
    fn constant_field_flows_out_through_right_facet() {
        let g = Grid::new(&ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0), [5, 5], 4).unwrap();
        let cs = CoefficientSet::transport(VectorField::constant([1.0, 0.0]), 1.0);
        let part = partition_boundary(&cs, &g);
        for (e, b) in g.boundary().iter().enumerate() {
            for n in 0..g.levels() {
                assert_eq!(part.is_outflow(n, e), b.facet == Facet::Upper(0));
            }
        }
    }

    #[test]
    fn rotation_on_annulus_has_no_outflow() {
        let g = Grid::new(&ProblemDomain::annulus(1.0, 1.0), [21, 21], 2).unwrap();
        let cs = CoefficientSet::transport(VectorField::rotation(), 0.5);
        assert_eq!(partition_boundary(&cs, &g).outflow_count(), 0);
    }

    #[test]
    fn sign_flip_in_time_swaps_facets() {
        let g = Grid::new(&ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0), [5, 5], 4).unwrap();
        let a = VectorField::constant([1.0, 0.0]).with_time(TimeFactor::Poly { coeffs: vec![1.0, -2.0] });
        let part = partition_boundary(&CoefficientSet::transport(a, 0.0), &g);
        for (e, b) in g.boundary().iter().enumerate() {
            assert_eq!(part.is_outflow(1, e), b.facet == Facet::Upper(0));
            assert!(!part.is_outflow(2, e));
            assert_eq!(part.is_outflow(3, e), b.facet == Facet::Lower(0));
        }
    }
}
