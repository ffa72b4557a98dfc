//! Rectangular cell-centred mesh and the discrete operators built on it.
//!
//! Cells are stored row-major with the x index running fastest:
//! cell `(i, j)` lives at `j * nx + i`. Homogeneous Neumann conditions are
//! realised by mirror ghost cells, which means that every boundary face
//! carries exactly zero flux. All flux-form operators are assembled face by
//! face, so a face flux is added to one cell and subtracted from its
//! neighbour and the cell-volume weighted sum telescopes.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of cells along either axis.
pub const MIN_CELLS: usize = 4;

/// Negative carrier entries above this threshold are treated as rounding noise.
pub const CARRIER_FLOOR: f64 = -1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < MIN_CELLS || ny < MIN_CELLS {
            return Err(Error::Structural(format!(
                "grid needs at least {MIN_CELLS} cells per axis, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(Error::Structural(format!(
                "domain side lengths must be positive and finite, got {lx} x {ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    /// `n x n` cells on the unit square.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn h_min(&self) -> f64 {
        self.hx.min(self.hy)
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_volume(&self) -> f64 {
        self.hx * self.hy
    }

    /// |Ω| = Lx·Ly.
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx
    }

    #[inline]
    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy
    }

    /// Centre coordinates of cell `k`.
    #[inline]
    pub fn center(&self, k: usize) -> (f64, f64) {
        (self.x_center(k % self.nx), self.y_center(k / self.nx))
    }

    /// Samples `f` at every cell centre.
    pub fn sample(&self, mut f: impl FnMut(f64, f64) -> f64) -> Field {
        let mut values = Vec::with_capacity(self.cell_count());
        for j in 0..self.ny {
            let y = self.y_center(j);
            for i in 0..self.nx {
                values.push(f(self.x_center(i), y));
            }
        }
        Field { values }
    }

    pub fn zeros(&self) -> Field {
        Field::constant(self.cell_count(), 0.0)
    }

    pub fn constant(&self, c: f64) -> Field {
        Field::constant(self.cell_count(), c)
    }

    pub fn check(&self, field: &Field, what: &str) -> Result<()> {
        self.check_len(field.len(), what)
    }

    pub(crate) fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.cell_count() {
            return Err(Error::Structural(format!(
                "{what} has {len} values but the grid has {}x{} cells",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    /// Iterates over every interior face, x-faces first.
    pub fn faces(&self) -> Faces<'_> {
        Faces {
            grid: self,
            axis: Axis::X,
            i: 0,
            j: 0,
        }
    }

    /// Number of interior faces.
    pub fn face_count(&self) -> usize {
        (self.nx - 1) * self.ny + self.nx * (self.ny - 1)
    }

    /// The same grid turned by 90°; only meaningful for the rotation symmetry checks.
    pub fn rotated(&self) -> Grid {
        Grid {
            nx: self.ny,
            ny: self.nx,
            lx: self.ly,
            ly: self.lx,
            hx: self.hy,
            hy: self.hx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// An interior face between cell `lo` and cell `hi`, where `hi` is the
/// neighbour in the positive axis direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub axis: Axis,
    pub lo: usize,
    pub hi: usize,
    /// Centre-to-centre distance across the face.
    pub h: f64,
    /// Face centre.
    pub x: f64,
    pub y: f64,
}

impl Face {
    /// Forward difference `(phi[hi] - phi[lo]) / h` across the face.
    #[inline]
    pub fn gradient(&self, phi: &[f64]) -> f64 {
        (phi[self.hi] - phi[self.lo]) / self.h
    }
}

pub struct Faces<'a> {
    grid: &'a Grid,
    axis: Axis,
    i: usize,
    j: usize,
}

impl Iterator for Faces<'_> {
    type Item = Face;

    fn next(&mut self) -> Option<Face> {
        let g = self.grid;
        loop {
            match self.axis {
                Axis::X => {
                    if self.j >= g.ny {
                        self.axis = Axis::Y;
                        self.i = 0;
                        self.j = 0;
                        continue;
                    }
                    if self.i + 1 >= g.nx {
                        self.i = 0;
                        self.j += 1;
                        continue;
                    }
                    let (i, j) = (self.i, self.j);
                    self.i += 1;
                    return Some(Face {
                        axis: Axis::X,
                        lo: g.idx(i, j),
                        hi: g.idx(i + 1, j),
                        h: g.hx,
                        x: (i + 1) as f64 * g.hx,
                        y: g.y_center(j),
                    });
                }
                Axis::Y => {
                    if self.j + 1 >= g.ny {
                        return None;
                    }
                    if self.i >= g.nx {
                        self.i = 0;
                        self.j += 1;
                        continue;
                    }
                    let (i, j) = (self.i, self.j);
                    self.i += 1;
                    return Some(Face {
                        axis: Axis::Y,
                        lo: g.idx(i, j),
                        hi: g.idx(i, j + 1),
                        h: g.hy,
                        x: g.x_center(i),
                        y: (j + 1) as f64 * g.hy,
                    });
                }
            }
        }
    }
}

/// One scalar unknown sampled at cell centres.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(len: usize, c: f64) -> Self {
        Self {
            values: vec![c; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.len(), other.len());
        Field {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Index<usize> for Field {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

impl IndexMut<usize> for Field {
    fn index_mut(&mut self, k: usize) -> &mut f64 {
        &mut self.values[k]
    }
}

impl From<Vec<f64>> for Field {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// How the carrier density is evaluated on a taxis face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaxisFlux {
    /// The upstream cell's value.
    Upwind,
    /// Upstream value plus half a minmod-limited slope of the upstream cell.
    /// Face values stay between neighbouring cell values, so the explicit
    /// update keeps the same positivity time-step restriction as `Upwind`.
    #[default]
    Minmod,
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a > 0.0 {
        a.min(b)
    } else {
        a.max(b)
    }
}

/// Five-point Neumann Laplacian into `out` (overwritten).
pub(crate) fn laplacian_into(grid: &Grid, phi: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let ihx = 1.0 / grid.hx;
    let ihy = 1.0 / grid.hy;
    out.iter_mut().for_each(|o| *o = 0.0);
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx - 1 {
            let a = row + i;
            let flux = (phi[a + 1] - phi[a]) * ihx;
            out[a] += flux * ihx;
            out[a + 1] -= flux * ihx;
        }
    }
    for j in 0..ny - 1 {
        let row = j * nx;
        for i in 0..nx {
            let a = row + i;
            let b = a + nx;
            let flux = (phi[b] - phi[a]) * ihy;
            out[a] += flux * ihy;
            out[b] -= flux * ihy;
        }
    }
}

/// Discrete Neumann Laplacian Δ_h φ.
pub fn laplacian(phi: &Field, grid: &Grid) -> Result<Field> {
    grid.check(phi, "laplacian input")?;
    let mut out = vec![0.0; phi.len()];
    laplacian_into(grid, phi.as_slice(), &mut out);
    Ok(Field::from_vec(out))
}

/// ∇·(carrier ∇potential) with first-order upwinding of the carrier.
pub fn taxis_divergence(carrier: &Field, potential: &Field, grid: &Grid) -> Result<Field> {
    taxis_divergence_with(TaxisFlux::Upwind, carrier, potential, grid)
}

/// ∇·(carrier ∇potential) in conservative face-flux form.
///
/// The carrier is taken from the upstream side of each face, judged by the
/// sign of the potential difference across it. Boundary faces carry no flux.
pub fn taxis_divergence_with(
    scheme: TaxisFlux,
    carrier: &Field,
    potential: &Field,
    grid: &Grid,
) -> Result<Field> {
    grid.check(carrier, "taxis carrier")?;
    grid.check(potential, "taxis potential")?;
    if let Some((k, &c)) = carrier
        .iter()
        .enumerate()
        .find(|(_, &c)| c < CARRIER_FLOOR || c.is_nan())
    {
        return Err(Error::Domain(format!(
            "taxis carrier is negative at cell {k}: {c:e}"
        )));
    }
    let mut out = vec![0.0; carrier.len()];
    taxis_divergence_into(scheme, grid, carrier.as_slice(), potential.as_slice(), &mut out);
    Ok(Field::from_vec(out))
}

pub(crate) fn taxis_divergence_into(
    scheme: TaxisFlux,
    grid: &Grid,
    c: &[f64],
    p: &[f64],
    out: &mut [f64],
) {
    let (nx, ny) = (grid.nx, grid.ny);
    let ihx = 1.0 / grid.hx;
    let ihy = 1.0 / grid.hy;
    out.iter_mut().for_each(|o| *o = 0.0);

    // Carrier value on the face between `a` (index `pos` along the line) and
    // its successor `b`, for a line of `n` cells with the given stride.
    let face_carrier = |a: usize, b: usize, pos: usize, n: usize, stride: usize, grad: f64| -> f64 {
        match scheme {
            TaxisFlux::Upwind => {
                if grad >= 0.0 {
                    c[a]
                } else {
                    c[b]
                }
            }
            TaxisFlux::Minmod => {
                if grad >= 0.0 {
                    let before = if pos == 0 { c[a] } else { c[a - stride] };
                    c[a] + 0.5 * minmod(c[a] - before, c[b] - c[a])
                } else {
                    let after = if pos + 2 >= n { c[b] } else { c[b + stride] };
                    c[b] - 0.5 * minmod(c[b] - c[a], after - c[b])
                }
            }
        }
    };

    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx - 1 {
            let a = row + i;
            let b = a + 1;
            let grad = (p[b] - p[a]) * ihx;
            let flux = face_carrier(a, b, i, nx, 1, grad) * grad;
            out[a] += flux * ihx;
            out[b] -= flux * ihx;
        }
    }
    for j in 0..ny - 1 {
        let row = j * nx;
        for i in 0..nx {
            let a = row + i;
            let b = a + nx;
            let grad = (p[b] - p[a]) * ihy;
            let flux = face_carrier(a, b, j, ny, nx, grad) * grad;
            out[a] += flux * ihy;
            out[b] -= flux * ihy;
        }
    }
}

/// Midpoint rule Σ φ·|cell|.
pub fn integrate(phi: &Field, grid: &Grid) -> Result<f64> {
    grid.check(phi, "integrand")?;
    Ok(integrate_slice(grid, phi.as_slice()))
}

pub(crate) fn integrate_slice(grid: &Grid, phi: &[f64]) -> f64 {
    phi.iter().sum::<f64>() * grid.cell_volume()
}

pub fn norm_lp(phi: &Field, grid: &Grid, p: f64) -> Result<f64> {
    check_exponent(p)?;
    grid.check(phi, "L^p argument")?;
    if p.is_infinite() {
        return Ok(norm_linf(phi));
    }
    let s: f64 = phi.iter().map(|v| v.abs().powf(p)).sum();
    Ok((s * grid.cell_volume()).powf(1.0 / p))
}

pub fn norm_linf(phi: &Field) -> f64 {
    phi.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Discrete W^{2,p} seminorm from all second differences.
///
/// D_xx and D_yy use the three-point stencil, shifted inwards by one cell
/// on the boundary rows; D_xy uses the centred four-point stencil and falls
/// back to one-sided differences on the boundary. Linear fields give zero.
pub fn seminorm_w2p(phi: &Field, grid: &Grid, p: f64) -> Result<f64> {
    check_exponent(p)?;
    grid.check(phi, "W^{2,p} argument")?;
    let (nx, ny) = (grid.nx, grid.ny);
    let v = phi.as_slice();
    let at = |i: usize, j: usize| v[j * nx + i];
    let ihx2 = 1.0 / (grid.hx * grid.hx);
    let ihy2 = 1.0 / (grid.hy * grid.hy);
    let mut acc = 0.0;
    let mut sup = 0.0_f64;
    for j in 0..ny {
        let jc = j.clamp(1, ny - 2);
        let (jm, jp) = (j.saturating_sub(1), (j + 1).min(ny - 1));
        for i in 0..nx {
            let ic = i.clamp(1, nx - 2);
            let (im, ip) = (i.saturating_sub(1), (i + 1).min(nx - 1));
            let dxx = (at(ic + 1, j) - 2.0 * at(ic, j) + at(ic - 1, j)) * ihx2;
            let dyy = (at(i, jc + 1) - 2.0 * at(i, jc) + at(i, jc - 1)) * ihy2;
            let dxy = (at(ip, jp) - at(ip, jm) - at(im, jp) + at(im, jm))
                / ((ip - im) as f64 * grid.hx * (jp - jm) as f64 * grid.hy);
            if p.is_infinite() {
                sup = sup.max(dxx.abs()).max(dyy.abs()).max(dxy.abs());
            } else {
                acc += dxx.abs().powf(p) + dyy.abs().powf(p) + dxy.abs().powf(p);
            }
        }
    }
    if p.is_infinite() {
        return Ok(sup);
    }
    Ok((acc * grid.cell_volume()).powf(1.0 / p))
}

/// Largest |forward difference| over all interior faces.
pub fn max_face_gradient(phi: &Field, grid: &Grid) -> Result<f64> {
    grid.check(phi, "gradient argument")?;
    let v = phi.as_slice();
    Ok(grid
        .faces()
        .fold(0.0_f64, |m, f| m.max(f.gradient(v).abs())))
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("norm exponent must be >= 1, got {p}")));
    }
    Ok(())
}
