//! Domains, sampling lattices and the binary sample container.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, io_err, Error, Result};

/// Raster domain: `cells[r * cols + c]` marks the lattice node at
/// x = c·h, y = r·h as interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    pub h: f64,
    pub cells: Vec<bool>,
}

impl Mask {
    pub fn from_fn(
        rows: usize,
        cols: usize,
        h: f64,
        f: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                cells.push(f(r, c));
            }
        }
        let m = Self {
            rows,
            cols,
            h,
            cells,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.rows < 3 || self.cols < 3 || !(self.h > 0.0) {
            return invalid("mask needs at least 3x3 cells and h > 0");
        }
        if self.cells.len() != self.rows * self.cols {
            return invalid("mask cell count does not match rows*cols");
        }
        for r in 0..self.rows {
            for c in 0..self.cols {
                let edge = r == 0 || c == 0 || r + 1 == self.rows || c + 1 == self.cols;
                if edge && self.cells[r * self.cols + c] {
                    return invalid(format!(
                        "mask cell ({r},{c}) on the bitmap edge is interior"
                    ));
                }
            }
        }
        if self.count() == 0 {
            return invalid("mask has no interior cells");
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    /// Unit-square-like raster: nodes strictly inside (0,a)×(0,b).
    pub fn rectangle(a: f64, b: f64, h: f64) -> Result<Self> {
        let na = steps(a, h)?;
        let nb = steps(b, h)?;
        Self::from_fn(nb + 1, na + 1, h, |r, c| r > 0 && c > 0 && r < nb && c < na)
    }

    /// Unit square minus its upper-right quadrant.
    pub fn l_shape(h: f64) -> Result<Self> {
        let n = steps(1.0, h)?;
        Self::from_fn(n + 1, n + 1, h, |r, c| {
            let inside = r > 0 && c > 0 && r < n && c < n;
            inside && !(2 * r >= n && 2 * c >= n)
        })
    }

    /// Disk of radius `radius` centred in the bitmap; nodes with r < R.
    pub fn disk(radius: f64, h: f64) -> Result<Self> {
        let c = (radius / h).ceil() as usize + 1;
        let n = 2 * c + 1;
        Self::from_fn(n, n, h, |r, col| {
            let x = (col as f64 - c as f64) * h;
            let y = (r as f64 - c as f64) * h;
            (x * x + y * y).sqrt() < radius
        })
    }

    /// Parses "rows cols h" followed by `rows` lines of 0/1 characters.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty mask".into(),
        })?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::Parse {
                line: hl + 1,
                msg: "header must be 'rows cols h'".into(),
            });
        }
        let perr = |msg: &str| Error::Parse {
            line: hl + 1,
            msg: msg.into(),
        };
        let rows: usize = f[0].parse().map_err(|_| perr("bad rows"))?;
        let cols: usize = f[1].parse().map_err(|_| perr("bad cols"))?;
        let h: f64 = f[2].parse().map_err(|_| perr("bad h"))?;
        let mut cells = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, l) = lines.next().ok_or(Error::Parse {
                line: hl + 1,
                msg: format!("expected {rows} bitmap rows"),
            })?;
            let l = l.trim();
            if l.chars().count() != cols {
                return Err(Error::Parse {
                    line: ln + 1,
                    msg: format!("expected {cols} characters"),
                });
            }
            for ch in l.chars() {
                match ch {
                    '0' => cells.push(false),
                    '1' => cells.push(true),
                    _ => {
                        return Err(Error::Parse {
                            line: ln + 1,
                            msg: format!("unexpected character {ch:?}"),
                        })
                    }
                }
            }
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Parse {
                line: ln + 1,
                msg: "trailing data after bitmap".into(),
            });
        }
        let m = Self {
            rows,
            cols,
            h,
            cells,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.rows, self.cols, self.h);
        for r in 0..self.rows {
            for c in 0..self.cols {
                s.push(if self.cells[r * self.cols + c] {
                    '1'
                } else {
                    '0'
                });
            }
            s.push('\n');
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&t)
    }
}

/// Number of h-steps in a side, which must be an integer multiple of h.
pub fn steps(len: f64, h: f64) -> Result<usize> {
    if !(len > 0.0) || !(h > 0.0) {
        return invalid("lengths and spacing must be positive");
    }
    let n = (len / h).round();
    if (n * h - len).abs() > 1e-9 * len || n < 2.0 {
        return invalid(format!(
            "side {len} is not an integer multiple (>= 2) of h = {h}"
        ));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainKind {
    Rectangle { a: f64, b: f64 },
    Disk { radius: f64 },
    Mask(Mask),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    pub measure: f64,
}

impl Domain {
    pub fn rectangle(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return invalid("rectangle sides must be positive");
        }
        Ok(Self {
            kind: DomainKind::Rectangle { a, b },
            measure: a * b,
        })
    }

    pub fn unit_square() -> Self {
        Self {
            kind: DomainKind::Rectangle { a: 1.0, b: 1.0 },
            measure: 1.0,
        }
    }

    pub fn disk(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return invalid("disk radius must be positive");
        }
        Ok(Self {
            kind: DomainKind::Disk { radius },
            measure: PI * radius * radius,
        })
    }

    pub fn mask(mask: Mask) -> Self {
        let measure = mask.h * mask.h * mask.count() as f64;
        Self {
            kind: DomainKind::Mask(mask),
            measure,
        }
    }

    /// Shortest side (rectangle), diameter (disk) or shortest bitmap extent.
    pub fn shortest_extent(&self) -> f64 {
        match &self.kind {
            DomainKind::Rectangle { a, b } => a.min(*b),
            DomainKind::Disk { radius } => 2.0 * radius,
            DomainKind::Mask(m) => m.h * (m.rows.min(m.cols) - 1) as f64,
        }
    }

    pub fn default_h(&self) -> f64 {
        match &self.kind {
            DomainKind::Mask(m) => m.h,
            _ => self.shortest_extent() / 256.0,
        }
    }

    pub fn grid(&self, h: f64) -> Result<Grid> {
        match &self.kind {
            DomainKind::Rectangle { a, b } => Grid::rectangle(*a, *b, h),
            DomainKind::Disk { radius } => Grid::disk(*radius, h),
            DomainKind::Mask(m) => {
                if (m.h - h).abs() > 1e-12 * m.h {
                    return invalid(format!(
                        "mask spacing {} differs from requested h = {h}",
                        m.h
                    ));
                }
                Ok(Grid::mask(m))
            }
        }
    }
}

/// Uniform 2-D lattice; node p = iy·nx + ix sits at origin + h·(ix, iy).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
    pub interior: Vec<bool>,
    /// Quadrature weight per node (zero off the closed domain).
    pub weights: Vec<f64>,
}

impl Grid {
    /// Nodes at x = (ix − 1)h, ix = 0..=na+2, one exterior ring around the
    /// closed rectangle; trapezoid weights on the closed rectangle.
    pub fn rectangle(a: f64, b: f64, h: f64) -> Result<Self> {
        let na = steps(a, h)?;
        let nb = steps(b, h)?;
        let (nx, ny) = (na + 3, nb + 3);
        let mut interior = vec![false; nx * ny];
        let mut weights = vec![0.0; nx * ny];
        let w1 = |i: usize, n: usize| -> f64 {
            if i == 0 || i > n + 1 {
                0.0
            } else if i == 1 || i == n + 1 {
                0.5 * h
            } else {
                h
            }
        };
        for iy in 0..ny {
            for ix in 0..nx {
                let p = iy * nx + ix;
                interior[p] = (2..=na).contains(&ix) && (2..=nb).contains(&iy);
                weights[p] = w1(ix, na) * w1(iy, nb);
            }
        }
        Ok(Self {
            nx,
            ny,
            h,
            origin: [-h, -h],
            interior,
            weights,
        })
    }

    pub fn disk(radius: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || h >= radius {
            return invalid("disk grid needs 0 < h < R");
        }
        let c = (radius / h).ceil() as usize + 1;
        let n = 2 * c + 1;
        let origin = [-(c as f64) * h, -(c as f64) * h];
        let mut interior = vec![false; n * n];
        let mut weights = vec![0.0; n * n];
        for iy in 0..n {
            for ix in 0..n {
                let x = origin[0] + ix as f64 * h;
                let y = origin[1] + iy as f64 * h;
                if (x * x + y * y).sqrt() < radius {
                    interior[iy * n + ix] = true;
                    weights[iy * n + ix] = h * h;
                }
            }
        }
        Ok(Self {
            nx: n,
            ny: n,
            h,
            origin,
            interior,
            weights,
        })
    }

    pub fn mask(m: &Mask) -> Self {
        let w = m.h * m.h;
        Self {
            nx: m.cols,
            ny: m.rows,
            h: m.h,
            origin: [0.0, 0.0],
            interior: m.cells.clone(),
            weights: m.cells.iter().map(|&b| if b { w } else { 0.0 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self, p: usize) -> (f64, f64) {
        let ix = p % self.nx;
        let iy = p / self.nx;
        (
            self.origin[0] + ix as f64 * self.h,
            self.origin[1] + iy as f64 * self.h,
        )
    }

    pub fn x_coords(&self) -> Vec<f64> {
        (0..self.nx)
            .map(|i| self.origin[0] + i as f64 * self.h)
            .collect()
    }

    pub fn y_coords(&self) -> Vec<f64> {
        (0..self.ny)
            .map(|i| self.origin[1] + i as f64 * self.h)
            .collect()
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.interior[p]).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted L² inner product.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u)
            .zip(v)
            .map(|((w, a), b)| w * a * b)
            .sum()
    }

    /// Σ over lattice edges of the squared difference, i.e. ‖∇u‖² for the
    /// forward-difference gradient of u extended by zero.
    pub fn grad_sq(&self, u: &[f64]) -> f64 {
        self.grad_inner(u, u)
    }

    pub fn grad_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let mut s = 0.0;
        for iy in 0..ny {
            for ix in 0..nx {
                let p = iy * nx + ix;
                if ix + 1 < nx {
                    s += (u[p + 1] - u[p]) * (v[p + 1] - v[p]);
                }
                if iy + 1 < ny {
                    s += (u[p + nx] - u[p]) * (v[p + nx] - v[p]);
                }
            }
        }
        s
    }

    /// 5-point Dirichlet Laplacian h⁻²(4u − Σ neighbours) on interior nodes,
    /// zero elsewhere.
    pub fn apply_laplacian(&self, u: &[f64], out: &mut [f64]) {
        let nx = self.nx;
        let s = 1.0 / (self.h * self.h);
        for p in 0..self.len() {
            out[p] = if self.interior[p] {
                s * (4.0 * u[p] - u[p - 1] - u[p + 1] - u[p - nx] - u[p + nx])
            } else {
                0.0
            };
        }
    }
}

pub const CONTAINER_MAGIC: &[u8; 8] = b"MTLBSMP1";

/// Header and payload of the binary sample container.
///
/// Layout (little endian): magic `MTLBSMP1`, tag u8, d u32, N u64,
/// d × u64 grid dims, h f64, N × f64 values, then N × prod(dims) f64
/// samples, member-major and row-major within a member.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub tag: u8,
    pub dims: Vec<usize>,
    pub h: f64,
    pub values: Vec<f64>,
    pub samples: Vec<f64>,
}

pub const TAG_EIGENBASIS: u8 = 0;
pub const TAG_GRADIENT_ORTHONORMAL: u8 = 1;
pub const TAG_OPERATOR_DOMINATED: u8 = 2;

impl Container {
    pub fn write(&self, path: &Path) -> Result<()> {
        let per: usize = self.dims.iter().product();
        if self.samples.len() != per * self.values.len() {
            return Err(Error::DimensionMismatch(
                "container samples vs N·prod(dims)".into(),
            ));
        }
        let mut buf = Vec::with_capacity(32 + 8 * (self.values.len() + self.samples.len()));
        buf.extend_from_slice(CONTAINER_MAGIC);
        buf.push(self.tag);
        buf.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for &d in &self.dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.extend_from_slice(&self.h.to_le_bytes());
        for v in self.values.iter().chain(&self.samples) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
        f.write_all(&buf).map_err(|e| io_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| io_err(path, e))?;
        let bad = |m: &str| Error::InvalidInput(format!("{}: {m}", path.display()));
        if buf.len() < 21 || &buf[..8] != CONTAINER_MAGIC {
            return Err(bad("not a sample container"));
        }
        let tag = buf[8];
        let d = u32::from_le_bytes(buf[9..13].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(buf[13..21].try_into().unwrap()) as usize;
        let mut at = 21;
        let mut take8 = |buf: &[u8]| -> Result<[u8; 8]> {
            let s = buf.get(at..at + 8).ok_or_else(|| bad("truncated"))?;
            at += 8;
            Ok(s.try_into().unwrap())
        };
        let mut dims = Vec::with_capacity(d);
        for _ in 0..d {
            dims.push(u64::from_le_bytes(take8(&buf)?) as usize);
        }
        let h = f64::from_le_bytes(take8(&buf)?);
        let per: usize = dims.iter().product();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f64::from_le_bytes(take8(&buf)?));
        }
        let mut samples = Vec::with_capacity(n * per);
        for _ in 0..n * per {
            samples.push(f64::from_le_bytes(take8(&buf)?));
        }
        if take8(&buf).is_ok() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            tag,
            dims,
            h,
            values,
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_weights_sum_to_area() {
        let g = Grid::rectangle(2.0, 0.5, 1.0 / 64.0).unwrap();
        assert!((g.total_weight() - 1.0).abs() < 1e-14);
        assert_eq!(g.interior_indices().len(), 127 * 31);
        assert!(Grid::rectangle(1.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn mask_text_round_trip() {
        let m = Mask::l_shape(1.0 / 8.0).unwrap();
        let back = Mask::parse(&m.to_text()).unwrap();
        assert_eq!(m, back);
        assert_eq!(m.count(), 49 - 16);
    }

    #[test]
    fn mask_rejects_edge_and_garbage() {
        assert!(Mask::parse("3 3 0.1\n100\n000\n000\n").is_err());
        assert!(Mask::parse("3 3 0.1\n000\n0x0\n000\n").is_err());
        assert!(Mask::parse("3 3 0.1\n000\n010\n").is_err());
        assert!(Mask::parse("3 3 0.1\n000\n010\n000\n").is_ok());
    }

    #[test]
    fn disk_grid_measure_close() {
        let g = Grid::disk(1.0, 1.0 / 128.0).unwrap();
        let perim = 2.0 * PI;
        assert!((g.total_weight() - PI).abs() < 2.0 / 128.0 * perim);
    }

    #[test]
    fn gradient_form_equals_laplacian_pairing() {
        let g = Grid::rectangle(1.0, 1.0, 1.0 / 16.0).unwrap();
        let u: Vec<f64> = (0..g.len())
            .map(|p| {
                if g.interior[p] {
                    ((p * 37) % 11) as f64 - 5.0
                } else {
                    0.0
                }
            })
            .collect();
        let mut lu = vec![0.0; g.len()];
        g.apply_laplacian(&u, &mut lu);
        let pair: f64 = u.iter().zip(&lu).map(|(a, b)| a * b).sum::<f64>() * g.h * g.h;
        assert!((pair - g.grad_sq(&u)).abs() < 1e-10 * pair);
    }

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        let c = Container {
            tag: TAG_EIGENBASIS,
            dims: vec![3, 2],
            h: 0.25,
            values: vec![1.0, 2.0],
            samples: (0..12).map(|i| i as f64 * 0.5).collect(),
        };
        c.write(&p).unwrap();
        assert_eq!(Container::read(&p).unwrap(), c);
    }
}
