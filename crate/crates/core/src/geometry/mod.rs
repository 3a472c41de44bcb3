//! Periodic tessellations of the unit cell `Q_1 = (−1/2, 1/2)²`, layered
//! tessellations, and the symmetric-difference regularity distance.

mod regular;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use regular::{
    ball_points, default_radii, estimate_certificate, interface_centers, regularity_distance, sym_diff_measure,
    CenterRecord, Distance, RegularityCertificate, SymDiff,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("incomparable tessellations: label sets {0:?} and {1:?}")]
    Incomparable(Vec<usize>, Vec<usize>),
    #[error("invalid tessellation: {0}")]
    Invalid(String),
    #[error("invalid mask file: {0}")]
    Mask(String),
}

/// Region predicate of one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Everything not claimed by another phase.
    Background,
    /// Periodic slab `lo < x·e < hi` along a lattice axis.
    Slab { direction: [f64; 2], breakpoints: [f64; 2] },
    Disk { center: [f64; 2], radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
    /// Cells of an `n × n` raster (row-major from the lower-left corner) carrying `value`.
    Mask { n: usize, cells: Vec<usize>, value: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub label: usize,
    pub shape: Shape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Containment {
    Inside,
    Boundary,
    Outside,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tessellation {
    #[serde(default = "two")]
    pub dim: usize,
    pub phases: Vec<Phase>,
}

fn two() -> usize {
    2
}

/// Anything that assigns a phase label to every point of the plane.
pub trait Labeling: Sync {
    fn label_at(&self, x: [f64; 2]) -> usize;
    fn label_set(&self) -> Vec<usize>;
}

/// Periodic representative in `[−1/2, 1/2)²`.
pub fn wrap(x: [f64; 2]) -> [f64; 2] {
    let w = |t: f64| {
        let y = t - (t + 0.5).floor();
        if y >= 0.5 {
            y - 1.0
        } else {
            y
        }
    };
    [w(x[0]), w(x[1])]
}

fn cmp(v: f64, bound: f64) -> Containment {
    if v < bound {
        Containment::Inside
    } else if v == bound {
        Containment::Boundary
    } else {
        Containment::Outside
    }
}

fn merge(a: Containment, b: Containment) -> Containment {
    use Containment::*;
    match (a, b) {
        (Inside, _) | (_, Inside) => Inside,
        (Boundary, _) | (_, Boundary) => Boundary,
        _ => Outside,
    }
}

fn polygon_contains(vs: &[[f64; 2]], y: [f64; 2]) -> Containment {
    let n = vs.len();
    let mut inside = false;
    for i in 0..n {
        let a = vs[i];
        let b = vs[(i + 1) % n];
        let cross = (b[0] - a[0]) * (y[1] - a[1]) - (b[1] - a[1]) * (y[0] - a[0]);
        let within = (y[0] - a[0]) * (y[0] - b[0]) <= 0.0 && (y[1] - a[1]) * (y[1] - b[1]) <= 0.0;
        if cross == 0.0 && within {
            return Containment::Boundary;
        }
        if (a[1] > y[1]) != (b[1] > y[1]) {
            let xs = a[0] + (y[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if y[0] < xs {
                inside = !inside;
            }
        }
    }
    if inside {
        Containment::Inside
    } else {
        Containment::Outside
    }
}

impl Shape {
    fn contains(&self, y: [f64; 2]) -> Containment {
        match self {
            Shape::Background => Containment::Outside,
            Shape::Slab { direction, breakpoints } => {
                let t = y[0] * direction[0] + y[1] * direction[1];
                let one = |t: f64| {
                    if t > breakpoints[0] && t < breakpoints[1] {
                        Containment::Inside
                    } else if t == breakpoints[0] || t == breakpoints[1] {
                        Containment::Boundary
                    } else {
                        Containment::Outside
                    }
                };
                merge(merge(one(t), one(t + 1.0)), one(t - 1.0))
            }
            Shape::Disk { center, radius } => {
                let mut c = Containment::Outside;
                for i in -1..=1 {
                    for j in -1..=1 {
                        let dx = y[0] - center[0] - i as f64;
                        let dy = y[1] - center[1] - j as f64;
                        c = merge(c, cmp(dx * dx + dy * dy, radius * radius));
                    }
                }
                c
            }
            Shape::Polygon { vertices } => {
                let mut c = Containment::Outside;
                for i in -1..=1 {
                    for j in -1..=1 {
                        c = merge(c, polygon_contains(vertices, [y[0] - i as f64, y[1] - j as f64]));
                    }
                }
                c
            }
            Shape::Mask { n, cells, value } => {
                let idx = |t: f64| (((t + 0.5) * *n as f64).floor() as isize).clamp(0, *n as isize - 1) as usize;
                if cells[idx(y[1]) * n + idx(y[0])] == *value {
                    Containment::Inside
                } else {
                    Containment::Outside
                }
            }
        }
    }
}

impl Tessellation {
    pub fn new(phases: Vec<Phase>) -> Result<Self, GeometryError> {
        let t = Self { dim: 2, phases };
        t.check_shapes()?;
        Ok(t)
    }

    /// Equal-volume two-phase laminate normal to `e_2` with breakpoints at `x₂ = 0` and `±1/2`.
    pub fn laminate_e2(lower: usize, upper: usize) -> Self {
        Self::laminate_e2_fraction(0.5, lower, upper)
    }

    /// Two-phase `e_2`-laminate with the lower phase occupying `x₂ ∈ (−1/2, −1/2 + θ)`.
    pub fn laminate_e2_fraction(theta: f64, lower: usize, upper: usize) -> Self {
        let h = -0.5 + theta;
        Self {
            dim: 2,
            phases: vec![
                Phase { label: lower, shape: Shape::Slab { direction: [0.0, 1.0], breakpoints: [-0.5, h] } },
                Phase { label: upper, shape: Shape::Slab { direction: [0.0, 1.0], breakpoints: [h, 0.5] } },
            ],
        }
    }

    /// Single disk inclusion (label 1) in a background matrix (label 0).
    pub fn disk(center: [f64; 2], radius: f64) -> Self {
        Self {
            dim: 2,
            phases: vec![
                Phase { label: 0, shape: Shape::Background },
                Phase { label: 1, shape: Shape::Disk { center, radius } },
            ],
        }
    }

    /// One phase everywhere.
    pub fn homogeneous(label: usize) -> Self {
        Self { dim: 2, phases: vec![Phase { label, shape: Shape::Background }] }
    }

    fn check_shapes(&self) -> Result<(), GeometryError> {
        if self.dim != 2 {
            return Err(GeometryError::Invalid(format!("dimension {} is not supported", self.dim)));
        }
        if self.phases.is_empty() {
            return Err(GeometryError::Invalid("no phases".into()));
        }
        let backgrounds = self.phases.iter().filter(|p| p.shape == Shape::Background).count();
        if backgrounds > 1 {
            return Err(GeometryError::Invalid("more than one background phase".into()));
        }
        for p in &self.phases {
            match &p.shape {
                Shape::Slab { direction, breakpoints } => {
                    let axis = (direction[0].abs() == 1.0 && direction[1] == 0.0)
                        || (direction[1].abs() == 1.0 && direction[0] == 0.0);
                    if !axis {
                        return Err(GeometryError::Invalid("slab direction must be a lattice axis".into()));
                    }
                    if !(breakpoints[0] < breakpoints[1]) || breakpoints[1] - breakpoints[0] > 1.0 {
                        return Err(GeometryError::Invalid("slab breakpoints must increase within one period".into()));
                    }
                }
                Shape::Disk { radius, .. } if !(*radius > 0.0 && *radius <= 0.5) => {
                    return Err(GeometryError::Invalid(format!("disk radius {radius} outside (0, 1/2]")));
                }
                Shape::Polygon { vertices } if vertices.len() < 3 => {
                    return Err(GeometryError::Invalid("polygon needs at least three vertices".into()));
                }
                Shape::Mask { n, cells, .. } if cells.len() != n * n => {
                    return Err(GeometryError::Invalid("mask size does not match n*n".into()));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Distinct labels in increasing order.
    pub fn labels(&self) -> Vec<usize> {
        let mut l: Vec<usize> = self.phases.iter().map(|p| p.label).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    fn background(&self) -> Option<usize> {
        self.phases.iter().find(|p| p.shape == Shape::Background).map(|p| p.label)
    }

    /// Number of shaped phases whose open region contains the periodic representative of `x`.
    fn coverage(&self, x: [f64; 2]) -> usize {
        let y = wrap(x);
        let hits = self.phases.iter().filter(|p| p.shape.contains(y) == Containment::Inside).count();
        if hits == 0 && self.background().is_some() {
            let touching = self.phases.iter().any(|p| p.shape.contains(y) == Containment::Boundary);
            if touching {
                0
            } else {
                1
            }
        } else {
            hits
        }
    }

    pub fn label_at(&self, x: [f64; 2]) -> usize {
        let y = wrap(x);
        let mut inside: Option<usize> = None;
        let mut boundary: Option<usize> = None;
        for p in &self.phases {
            match p.shape.contains(y) {
                Containment::Inside => inside = Some(inside.map_or(p.label, |l| l.min(p.label))),
                Containment::Boundary => boundary = Some(boundary.map_or(p.label, |l| l.min(p.label))),
                Containment::Outside => {}
            }
        }
        if let Some(l) = inside {
            return l;
        }
        match (boundary, self.background()) {
            (Some(b), Some(g)) => b.min(g),
            (Some(b), None) => b,
            (None, Some(g)) => g,
            (None, None) => self.labels()[0],
        }
    }

    /// Checks disjointness and covering on an `m × m` sample and periodic
    /// consistency on boundary-straddling samples.
    pub fn validate(&self, m: usize) -> Result<(), GeometryError> {
        self.check_shapes()?;
        for j in 0..m {
            for i in 0..m {
                let x = [(i as f64 + 0.5) / m as f64 - 0.5, (j as f64 + 0.5) / m as f64 - 0.5];
                let c = self.coverage(x);
                if c != 1 {
                    return Err(GeometryError::Invalid(format!(
                        "sample {x:?} is covered by {c} phases"
                    )));
                }
            }
        }
        for k in 0..m {
            let t = (k as f64 + 0.5) / m as f64 - 0.5;
            for x in [[-0.5 + 1e-9, t], [t, -0.5 + 1e-9], [0.5 - 1e-9, t], [t, 0.5 - 1e-9]] {
                for z in [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]] {
                    if self.label_at(x) != self.label_at([x[0] + z[0], x[1] + z[1]]) {
                        return Err(GeometryError::Invalid(format!("periodicity fails at {x:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// True when every shaped phase is a slab normal to the same axis.
    pub fn as_layered(&self) -> Option<LayeredTessellation> {
        let mut dir: Option<[f64; 2]> = None;
        let mut slabs: Vec<(f64, f64, usize)> = Vec::new();
        for p in &self.phases {
            match &p.shape {
                Shape::Slab { direction, breakpoints } => {
                    let d = [direction[0].abs(), direction[1].abs()];
                    let (lo, hi) = if direction[0] + direction[1] > 0.0 {
                        (breakpoints[0], breakpoints[1])
                    } else {
                        (-breakpoints[1], -breakpoints[0])
                    };
                    if dir.is_some_and(|e| e != d) {
                        return None;
                    }
                    dir = Some(d);
                    slabs.push((lo, hi, p.label));
                }
                _ => return None,
            }
        }
        slabs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let start = slabs.first()?.0;
        let mut breakpoints = Vec::new();
        let mut labels = Vec::new();
        let mut cursor = start;
        for (lo, hi, label) in &slabs {
            if (*lo - cursor).abs() > 1e-12 {
                return None;
            }
            breakpoints.push(*lo);
            labels.push(*label);
            cursor = *hi;
        }
        if (cursor - start - 1.0).abs() > 1e-12 {
            return None;
        }
        LayeredTessellation::periodic(dir?, breakpoints, labels).ok()
    }

    /// Disk inclusions as `(center, radius, label)`.
    pub fn disks(&self) -> Vec<([f64; 2], f64, usize)> {
        self.phases
            .iter()
            .filter_map(|p| match &p.shape {
                Shape::Disk { center, radius } => Some((*center, *radius, p.label)),
                _ => None,
            })
            .collect()
    }

    /// Polygon inclusions as `(vertices, label)`.
    pub fn polygons(&self) -> Vec<(Vec<[f64; 2]>, usize)> {
        self.phases
            .iter()
            .filter_map(|p| match &p.shape {
                Shape::Polygon { vertices } => Some((vertices.clone(), p.label)),
                _ => None,
            })
            .collect()
    }
}

impl Labeling for Tessellation {
    fn label_at(&self, x: [f64; 2]) -> usize {
        Tessellation::label_at(self, x)
    }
    fn label_set(&self) -> Vec<usize> {
        self.labels()
    }
}

/// Per-element labels at element centroids, row-major from the lower-left corner.
pub fn rasterize(tess: &Tessellation, n: usize) -> Result<Vec<usize>, GeometryError> {
    if n < 4 {
        return Err(GeometryError::Invalid(format!("raster resolution {n} < 4")));
    }
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let x = [(i as f64 + 0.5) / n as f64 - 0.5, (j as f64 + 0.5) / n as f64 - 0.5];
            out.push(tess.label_at(x));
        }
    }
    Ok(out)
}

/// Parses a mask grid file: header `dim n labels`, then `n²` integer labels row-major.
pub fn parse_mask(text: &str) -> Result<(usize, Vec<usize>), GeometryError> {
    let mut tokens = text.split_whitespace();
    let mut next = |what: &str| -> Result<usize, GeometryError> {
        tokens
            .next()
            .ok_or_else(|| GeometryError::Mask(format!("missing {what}")))?
            .parse::<usize>()
            .map_err(|e| GeometryError::Mask(format!("{what}: {e}")))
    };
    let dim = next("dim")?;
    if dim != 2 {
        return Err(GeometryError::Mask(format!("dim {dim} is not supported")));
    }
    let n = next("n")?;
    let count = next("labels")?;
    let cells = (0..n * n).map(|_| next("cell label")).collect::<Result<Vec<_>, _>>()?;
    if cells.iter().any(|&c| c >= count) {
        return Err(GeometryError::Mask("cell label exceeds declared label count".into()));
    }
    Ok((n, cells))
}

/// Layered tessellation `{h_ℓ < x·e < h_{ℓ+1}}` in any unit direction.
///
/// Periodic layers repeat with `period`; otherwise the two end slabs extend to infinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayeredTessellation {
    pub direction: [f64; 2],
    pub breakpoints: Vec<f64>,
    pub labels: Vec<usize>,
    pub period: Option<f64>,
}

impl LayeredTessellation {
    pub fn new(direction: [f64; 2], breakpoints: Vec<f64>, labels: Vec<usize>) -> Result<Self, GeometryError> {
        if labels.len() != breakpoints.len() + 1 {
            return Err(GeometryError::Invalid("need one more label than breakpoints".into()));
        }
        Self::checked(direction, breakpoints, labels, None)
    }

    pub fn periodic(direction: [f64; 2], breakpoints: Vec<f64>, labels: Vec<usize>) -> Result<Self, GeometryError> {
        if labels.len() != breakpoints.len() || labels.is_empty() {
            return Err(GeometryError::Invalid("periodic layers need one label per breakpoint".into()));
        }
        Self::checked(direction, breakpoints, labels, Some(1.0))
    }

    /// Single label everywhere.
    pub fn constant(label: usize) -> Self {
        Self { direction: [0.0, 1.0], breakpoints: Vec::new(), labels: vec![label], period: None }
    }

    fn checked(direction: [f64; 2], breakpoints: Vec<f64>, labels: Vec<usize>, period: Option<f64>) -> Result<Self, GeometryError> {
        let n = direction[0].hypot(direction[1]);
        if !(n > 0.0) {
            return Err(GeometryError::Invalid("zero direction".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(GeometryError::Invalid("breakpoints must be strictly increasing".into()));
        }
        if let (Some(p), Some(first), Some(last)) = (period, breakpoints.first(), breakpoints.last()) {
            if last - first >= p {
                return Err(GeometryError::Invalid("breakpoints exceed one period".into()));
            }
        }
        Ok(Self { direction: [direction[0] / n, direction[1] / n], breakpoints, labels, period })
    }
}

impl Labeling for LayeredTessellation {
    fn label_at(&self, x: [f64; 2]) -> usize {
        if self.breakpoints.is_empty() {
            return self.labels[0];
        }
        let mut t = x[0] * self.direction[0] + x[1] * self.direction[1];
        let h = &self.breakpoints;
        match self.period {
            Some(p) => {
                t = h[0] + (t - h[0]).rem_euclid(p);
                let n = h.len();
                if t == h[0] {
                    return self.labels[0].min(self.labels[n - 1]);
                }
                let k = h.partition_point(|&b| b < t);
                // t in (h[k-1], h[k]] or beyond the last breakpoint
                if k < n && h[k] == t {
                    self.labels[k - 1].min(self.labels[k])
                } else {
                    self.labels[k - 1]
                }
            }
            None => {
                let k = h.partition_point(|&b| b < t);
                if k < h.len() && h[k] == t {
                    self.labels[k].min(self.labels[k + 1])
                } else {
                    self.labels[k]
                }
            }
        }
    }

    fn label_set(&self) -> Vec<usize> {
        let mut l = self.labels.clone();
        l.sort_unstable();
        l.dedup();
        l
    }
}
