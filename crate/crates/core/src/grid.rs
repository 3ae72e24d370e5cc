//! Rectangular evaluation grids, CSV export and a topology check on the
//! resulting membership mask.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::SupportEstimate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::argument(format!(
                "grid axis needs at least 2 points, got {count}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::argument(format!(
                "grid axis needs finite lo < hi, got {lo}:{hi}"
            )));
        }
        Ok(Self { lo, hi, count })
    }

    /// Evenly spaced, endpoints included.
    pub fn coordinate(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            return self.hi;
        }
        self.lo + (self.hi - self.lo) * i as f64 / (self.count - 1) as f64
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }
}

/// A product grid written as `"lo:hi:count,lo:hi:count,..."`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GridSpec {
    axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::argument("grid needs at least one axis"));
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    /// All grid points in row-major order (last axis varies fastest).
    pub fn points(&self) -> Array2<f64> {
        let dim = self.dim();
        let mut out = Array2::zeros((self.len(), dim));
        let mut idx = vec![0usize; dim];
        for mut row in out.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = self.axes[k].coordinate(idx[k]);
            }
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < self.axes[k].count {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let axes = s
            .split(',')
            .map(|part| {
                let fields: Vec<&str> = part.trim().split(':').collect();
                let [lo, hi, count] = fields[..] else {
                    return Err(Error::argument(format!("grid axis {part:?} is not lo:hi:count")));
                };
                let num = |t: &str| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::argument(format!("bad number {t:?} in grid axis {part:?}")))
                };
                let count = count
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::argument(format!("bad count {count:?} in grid axis {part:?}")))?;
                GridAxis::new(num(lo)?, num(hi)?, count)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes)
    }
}

impl TryFrom<String> for GridSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GridSpec> for String {
    fn from(g: GridSpec) -> String {
        g.to_string()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.axes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}:{}", format_f64(a.lo), format_f64(a.hi), a.count)?;
        }
        Ok(())
    }
}

/// Shortest representation that reads back to the same bits.
pub fn format_f64(v: f64) -> String {
    ryu::Buffer::new().format(v).to_string()
}

/// Estimate evaluated on every grid point.
#[derive(Debug, Clone)]
pub struct GridEvaluation {
    pub spec: GridSpec,
    pub points: Array2<f64>,
    pub values: Vec<f64>,
    pub members: Vec<bool>,
}

pub fn evaluate_grid(estimate: &SupportEstimate, spec: &GridSpec) -> Result<GridEvaluation> {
    if spec.dim() != estimate.dim() {
        return Err(Error::DimensionMismatch {
            expected: estimate.dim(),
            got: spec.dim(),
        });
    }
    let points = spec.points();
    let values = estimate.values(points.view())?.to_vec();
    let members = values.iter().map(|v| *v <= estimate.threshold()).collect();
    Ok(GridEvaluation {
        spec: spec.clone(),
        points,
        values,
        members,
    })
}

impl GridEvaluation {
    pub fn write_csv<W: Write>(&self, out: &mut W, names: &[String]) -> std::io::Result<()> {
        let mut buf = ryu::Buffer::new();
        writeln!(out, "{},kappa_inv,member", names.join(","))?;
        for (k, row) in self.points.rows().into_iter().enumerate() {
            for v in row {
                write!(out, "{},", buf.format(*v))?;
            }
            writeln!(out, "{},{}", buf.format(self.values[k]), u8::from(self.members[k]))?;
        }
        Ok(())
    }

    /// Topology of a 2-D membership mask.
    pub fn topology(&self) -> Result<MaskTopology> {
        let shape = self.spec.shape();
        let [rows, cols] = shape[..] else {
            return Err(Error::argument("topology analysis needs a 2-D grid"));
        };
        Ok(mask_topology(&self.members, rows, cols))
    }
}

/// Holes in a 2-D membership mask of shape `rows × cols` (row-major).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MaskTopology {
    pub members: usize,
    /// Excluded cells strictly inside the convex hull of the member cells.
    pub excluded_inside_hull: usize,
    /// 4-connected components of those cells.
    pub excluded_regions_inside_hull: usize,
    /// Excluded cells that a 4-connected flood fill from the grid border
    /// through excluded cells cannot reach.
    pub enclosed_cells: usize,
    /// Connected components of the enclosed cells.
    pub enclosed_components: usize,
}

pub fn mask_topology(mask: &[bool], rows: usize, cols: usize) -> MaskTopology {
    assert_eq!(mask.len(), rows * cols, "mask shape");
    let at = |r: usize, c: usize| r * cols + c;

    // Flood the outside through excluded cells.
    let mut outside = vec![false; mask.len()];
    let mut stack = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if (r == 0 || c == 0 || r + 1 == rows || c + 1 == cols) && !mask[at(r, c)] {
                outside[at(r, c)] = true;
                stack.push((r, c));
            }
        }
    }
    flood(&mut stack, &mut outside, mask, rows, cols);
    let enclosed: Vec<bool> = (0..mask.len()).map(|k| !mask[k] && !outside[k]).collect();
    let enclosed_cells = enclosed.iter().filter(|b| **b).count();
    let mut seen = vec![false; mask.len()];
    let mut enclosed_components = 0;
    for k in 0..mask.len() {
        if enclosed[k] && !seen[k] {
            enclosed_components += 1;
            seen[k] = true;
            stack.push((k / cols, k % cols));
            flood(&mut stack, &mut seen, mask, rows, cols);
        }
    }

    let pts: Vec<(i64, i64)> = (0..mask.len())
        .filter(|k| mask[*k])
        .map(|k| ((k / cols) as i64, (k % cols) as i64))
        .collect();
    let hull = convex_hull(pts.clone());
    let inside: Vec<bool> = (0..mask.len())
        .map(|k| !mask[k] && strictly_inside(&hull, ((k / cols) as i64, (k % cols) as i64)))
        .collect();
    let excluded_inside_hull = inside.iter().filter(|b| **b).count();
    let blocked: Vec<bool> = inside.iter().map(|b| !b).collect();
    let mut seen = vec![false; mask.len()];
    let mut excluded_regions_inside_hull = 0;
    for k in 0..mask.len() {
        if inside[k] && !seen[k] {
            excluded_regions_inside_hull += 1;
            seen[k] = true;
            stack.push((k / cols, k % cols));
            flood(&mut stack, &mut seen, &blocked, rows, cols);
        }
    }

    MaskTopology {
        members: pts.len(),
        excluded_inside_hull,
        excluded_regions_inside_hull,
        enclosed_cells,
        enclosed_components,
    }
}

/// 4-connected fill through excluded cells.
fn flood(stack: &mut Vec<(usize, usize)>, seen: &mut [bool], mask: &[bool], rows: usize, cols: usize) {
    while let Some((r, c)) = stack.pop() {
        let mut visit = |r: usize, c: usize| {
            let k = r * cols + c;
            if !mask[k] && !seen[k] {
                seen[k] = true;
                stack.push((r, c));
            }
        };
        if r > 0 {
            visit(r - 1, c);
        }
        if r + 1 < rows {
            visit(r + 1, c);
        }
        if c > 0 {
            visit(r, c - 1);
        }
        if c + 1 < cols {
            visit(r, c + 1);
        }
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise hull without collinear points (monotone chain).
fn convex_hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn strictly_inside(hull: &[(i64, i64)], p: (i64, i64)) -> bool {
    hull.len() >= 3 && (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], p) > 0)
}
