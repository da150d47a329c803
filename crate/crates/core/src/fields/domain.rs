use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial point. One-dimensional problems use the first coordinate only.
pub type Point = [f64; 2];

/// Implicit subdomain of the bounding box: a point is inside iff the level
/// function is negative.
#[derive(Clone, Debug, PartialEq)]
pub enum Mask {
    Disc { center: Point, radius: f64 },
    Annulus { center: Point, inner: f64, outer: f64 },
    /// Level function sampled on a tensor grid, bilinearly interpolated.
    Sampled(Arc<SampledLevel>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledLevel {
    pub lo: Point,
    pub hi: Point,
    pub n: [usize; 2],
    pub values: Vec<f64>,
}

impl SampledLevel {
    fn value(&self, x: Point) -> f64 {
        let mut idx = [0usize; 2];
        let mut frac = [0.0; 2];
        for k in 0..2 {
            let h = (self.hi[k] - self.lo[k]) / (self.n[k] - 1) as f64;
            let s = ((x[k] - self.lo[k]) / h).clamp(0.0, (self.n[k] - 1) as f64);
            let i = (s.floor() as usize).min(self.n[k] - 2);
            idx[k] = i;
            frac[k] = s - i as f64;
        }
        let at = |i: usize, j: usize| self.values[i + self.n[0] * j];
        let (i, j) = (idx[0], idx[1]);
        let (fx, fy) = (frac[0], frac[1]);
        (1.0 - fx) * (1.0 - fy) * at(i, j)
            + fx * (1.0 - fy) * at(i + 1, j)
            + (1.0 - fx) * fy * at(i, j + 1)
            + fx * fy * at(i + 1, j + 1)
    }
}

impl Mask {
    /// Signed level; the catalog masks return the exact signed distance.
    pub fn level(&self, x: Point) -> f64 {
        match self {
            Mask::Disc { center, radius } => dist(x, *center) - radius,
            Mask::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = dist(x, *center);
                (r - outer).max(inner - r)
            }
            Mask::Sampled(s) => s.value(x),
        }
    }

    /// Outward unit normal of the level set through `x`.
    pub fn normal(&self, x: Point) -> Point {
        let g = match self {
            Mask::Disc { center, .. } => [x[0] - center[0], x[1] - center[1]],
            Mask::Annulus {
                center,
                inner,
                outer,
            } => {
                let d = [x[0] - center[0], x[1] - center[1]];
                let r = dist(x, *center);
                if r - outer >= inner - r {
                    d
                } else {
                    [-d[0], -d[1]]
                }
            }
            Mask::Sampled(s) => {
                let eps = 1e-6 * (s.hi[0] - s.lo[0]).max(s.hi[1] - s.lo[1]);
                [
                    s.value([x[0] + eps, x[1]]) - s.value([x[0] - eps, x[1]]),
                    s.value([x[0], x[1] + eps]) - s.value([x[0], x[1] - eps]),
                ]
            }
        };
        normalize(g)
    }

    /// Exact area of the part of the mask inside `bounds`, when it has a
    /// closed form (full, half and quarter discs and annuli).
    pub fn area_within(&self, bounds: &[[f64; 2]; 2]) -> Option<f64> {
        let (center, full) = match self {
            Mask::Disc { center, radius } => (*center, (*radius, PI * radius * radius)),
            Mask::Annulus {
                center,
                inner,
                outer,
            } => (*center, (*outer, PI * (outer * outer - inner * inner))),
            Mask::Sampled(_) => return None,
        };
        let (r, area) = full;
        let mut frac = 1.0;
        for k in 0..2 {
            let [a, b] = bounds[k];
            let (lo, hi) = (center[k] - r, center[k] + r);
            if a <= lo && b >= hi {
                continue;
            }
            if (a == center[k] && b >= hi) || (b == center[k] && a <= lo) {
                frac *= 0.5;
                continue;
            }
            return None;
        }
        Some(frac * area)
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub(crate) fn normalize(v: Point) -> Point {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if n == 0.0 {
        [0.0, 0.0]
    } else {
        [v[0] / n, v[1] / n]
    }
}

/// Boundary facets. Box facets are numbered by axis and side; all curved
/// boundary pieces of a mask share one facet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Facet {
    Lower(usize),
    Upper(usize),
    Mask,
}

impl Facet {
    pub fn id(self) -> &'static str {
        match self {
            Facet::Lower(0) => "x0",
            Facet::Upper(0) => "x1",
            Facet::Lower(_) => "y0",
            Facet::Upper(_) => "y1",
            Facet::Mask => "mask",
        }
    }

    pub fn parse(s: &str) -> Option<Facet> {
        match s {
            "x0" => Some(Facet::Lower(0)),
            "x1" => Some(Facet::Upper(0)),
            "y0" => Some(Facet::Lower(1)),
            "y1" => Some(Facet::Upper(1)),
            "mask" => Some(Facet::Mask),
            _ => None,
        }
    }

    pub fn box_normal(self) -> Point {
        match self {
            Facet::Lower(k) => {
                let mut n = [0.0; 2];
                n[k] = -1.0;
                n
            }
            Facet::Upper(k) => {
                let mut n = [0.0; 2];
                n[k] = 1.0;
                n
            }
            Facet::Mask => [0.0, 0.0],
        }
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Spatial domain (a box, optionally cut by a mask) and time horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemDomain {
    pub dim: usize,
    pub bounds: [[f64; 2]; 2],
    pub mask: Option<Mask>,
    pub horizon: f64,
}

impl ProblemDomain {
    pub fn interval(a: f64, b: f64, horizon: f64) -> Self {
        ProblemDomain {
            dim: 1,
            bounds: [[a, b], [0.0, 0.0]],
            mask: None,
            horizon,
        }
    }

    pub fn rectangle(x: [f64; 2], y: [f64; 2], horizon: f64) -> Self {
        ProblemDomain {
            dim: 2,
            bounds: [x, y],
            mask: None,
            horizon,
        }
    }

    pub fn with_mask(mut self, mask: Mask) -> Self {
        self.mask = Some(mask);
        self
    }

    /// Upper half of the disc `B_r`.
    pub fn half_disc(radius: f64, horizon: f64) -> Self {
        ProblemDomain::rectangle([-radius, radius], [0.0, radius], horizon).with_mask(Mask::Disc {
            center: [0.0, 0.0],
            radius,
        })
    }

    /// `B_r` minus the closed disc of radius `r/2`.
    pub fn annulus(radius: f64, horizon: f64) -> Self {
        ProblemDomain::rectangle([-radius, radius], [-radius, radius], horizon).with_mask(
            Mask::Annulus {
                center: [0.0, 0.0],
                inner: 0.5 * radius,
                outer: radius,
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::Config(format!(
                "spatial dimension must be 1 or 2, got {}",
                self.dim
            )));
        }
        for k in 0..self.dim {
            let [a, b] = self.bounds[k];
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::Config(format!(
                    "box axis {k} must have positive length, got [{a}, {b}]"
                )));
            }
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Config(format!(
                "time horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.mask.is_some() && self.dim == 1 {
            return Err(Error::Config(
                "masks are only supported in two dimensions".into(),
            ));
        }
        Ok(())
    }

    fn box_level(&self, x: Point) -> f64 {
        (0..self.dim)
            .map(|k| (self.bounds[k][0] - x[k]).max(x[k] - self.bounds[k][1]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Signed level of the domain: negative inside, zero on the boundary.
    pub fn level(&self, x: Point) -> f64 {
        let b = self.box_level(x);
        match &self.mask {
            Some(m) => b.max(m.level(x)),
            None => b,
        }
    }

    pub fn contains(&self, x: Point, tol: f64) -> bool {
        self.level(x) <= tol
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim)
            .map(|k| (self.bounds[k][1] - self.bounds[k][0]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Outward unit normal of whichever boundary piece is active at `x`.
    pub fn outward_normal(&self, x: Point) -> Point {
        let mut best = (f64::NEG_INFINITY, Facet::Mask);
        for k in 0..self.dim {
            let lo = self.bounds[k][0] - x[k];
            let hi = x[k] - self.bounds[k][1];
            if lo > best.0 {
                best = (lo, Facet::Lower(k));
            }
            if hi > best.0 {
                best = (hi, Facet::Upper(k));
            }
        }
        if let Some(m) = &self.mask {
            if m.level(x) >= best.0 {
                return m.normal(x);
            }
        }
        best.1.box_normal()
    }

    /// Measure of the domain when it is known in closed form.
    pub fn measure(&self) -> Option<f64> {
        let boxed: f64 = (0..self.dim)
            .map(|k| self.bounds[k][1] - self.bounds[k][0])
            .product();
        match &self.mask {
            None => Some(boxed),
            Some(m) => m.area_within(&self.bounds),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_disc_level_and_area() {
        let d = ProblemDomain::half_disc(1.0, 1.0);
        assert!(d.level([0.0, 0.5]) < 0.0);
        assert!(d.level([0.0, -0.1]) > 0.0);
        assert!(d.level([0.9, 0.9]) > 0.0);
        assert!((d.measure().unwrap() - PI / 2.0).abs() < 1e-15);
        let n = d.outward_normal([0.0, 1.0]);
        assert!((n[1] - 1.0).abs() < 1e-15);
        let n = d.outward_normal([0.2, 0.0]);
        assert_eq!(n, [0.0, -1.0]);
    }

    #[test]
    fn annulus_level_and_normals() {
        let d = ProblemDomain::annulus(1.0, 1.0);
        assert!(d.level([0.75, 0.0]) < 0.0);
        assert!(d.level([0.2, 0.0]) > 0.0);
        assert!((d.measure().unwrap() - 0.75 * PI).abs() < 1e-14);
        assert_eq!(d.outward_normal([0.5, 0.0]), [-1.0, 0.0]);
        assert_eq!(d.outward_normal([1.0, 0.0]), [1.0, 0.0]);
    }

    #[test]
    fn invalid_boxes_are_rejected() {
        assert!(ProblemDomain::interval(1.0, 0.0, 1.0).validate().is_err());
        assert!(ProblemDomain::interval(0.0, 1.0, 0.0).validate().is_err());
        assert!(ProblemDomain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0)
            .validate()
            .is_ok());
    }

    #[test]
    fn facet_ids_round_trip() {
        for f in [
            Facet::Lower(0),
            Facet::Upper(0),
            Facet::Lower(1),
            Facet::Upper(1),
            Facet::Mask,
        ] {
            assert_eq!(Facet::parse(f.id()), Some(f));
        }
    }
}
