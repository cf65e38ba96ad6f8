//! Dense Schrödinger operators L_V = −Δ − V on small grids and the operator
//! inequalities between L_V, L₀ and their inverses.
//!
//! Everything is stored in the orthonormal eigenframe of the discrete
//! Laplacian L₀, where L₀ = diag(d) and L_V = diag(d) − SᵀVS.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, io_err, Error, Result};
use crate::geometry::{Domain, DomainKind, Grid};
use crate::linalg::{self, End};
use crate::report::{Report, Status};
use crate::spectral::stencil_matrix;

/// Largest interior dimension handled by the dense routines (64² grid).
pub const DENSE_CAP: usize = 64 * 64;
/// Relative PSD tolerance.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum OperatorKind {
    Laplacian,
    Fractional { s: f64 },
    Schrodinger { potential: String },
}

/// Orthonormal eigenvectors of L₀ on the interior nodes.
#[derive(Debug)]
enum Frame {
    /// Tensor product of 1-D sine transforms; column c is (j, k) = order[c].
    Separable {
        sx: Mat<f64>,
        sy: Mat<f64>,
        order: Vec<(usize, usize)>,
    },
    Dense(Mat<f64>),
}

impl Frame {
    fn dim(&self) -> usize {
        match self {
            Frame::Separable { order, .. } => order.len(),
            Frame::Dense(s) => s.ncols(),
        }
    }

    /// Coordinates Sᵀu of an interior-node vector.
    fn analyse(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Frame::Separable { sx, sy, order } => {
                let (mx, my) = (sx.nrows(), sy.nrows());
                let um = Mat::from_fn(mx, my, |ix, iy| u[iy * mx + ix]);
                let y = sx.transpose() * &um * sy;
                order.iter().map(|&(j, k)| y[(j, k)]).collect()
            }
            Frame::Dense(s) => (0..s.ncols())
                .map(|c| linalg::dot(s.col_as_slice(c), u))
                .collect(),
        }
    }

    /// Interior-node vector S y.
    fn synthesize(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Frame::Separable { sx, sy, order } => {
                let (mx, my) = (sx.nrows(), sy.nrows());
                let mut ym = Mat::<f64>::zeros(mx, my);
                for (c, &(j, k)) in order.iter().enumerate() {
                    ym[(j, k)] = y[c];
                }
                let um = sx * &ym * sy.transpose();
                let mut u = vec![0.0; mx * my];
                for iy in 0..my {
                    for ix in 0..mx {
                        u[iy * mx + ix] = um[(ix, iy)];
                    }
                }
                u
            }
            Frame::Dense(s) => {
                let mut u = vec![0.0; s.nrows()];
                for (c, &yc) in y.iter().enumerate() {
                    for (ui, si) in u.iter_mut().zip(s.col_as_slice(c)) {
                        *ui += yc * si;
                    }
                }
                u
            }
        }
    }

    fn is_separable(&self) -> bool {
        matches!(self, Frame::Separable { .. })
    }

    /// Sᵀ diag(v) S x through the transforms.
    fn apply_diag(&self, v: &[f64], x: &[f64]) -> Vec<f64> {
        let mut u = self.synthesize(x);
        u.iter_mut().zip(v).for_each(|(a, b)| *a *= b);
        self.analyse(&u)
    }

    /// Sᵀ diag(v) S.
    fn congruence(&self, v: &[f64]) -> Mat<f64> {
        match self {
            Frame::Separable { sx, sy, order } => {
                let (mx, my) = (sx.nrows(), sy.nrows());
                let n = order.len();
                let vm = Mat::from_fn(mx, my, |ix, iy| v[iy * mx + ix]);
                let mut out = Mat::<f64>::zeros(n, n);
                for (c, &(j, k)) in order.iter().enumerate() {
                    let w = Mat::from_fn(mx, my, |ix, iy| vm[(ix, iy)] * sx[(ix, j)] * sy[(iy, k)]);
                    let y = sx.transpose() * &w * sy;
                    let col = out.col_as_slice_mut(c);
                    for (r, &(a, b)) in order.iter().enumerate() {
                        col[r] = y[(a, b)];
                    }
                }
                linalg::symmetrize(&mut out);
                out
            }
            Frame::Dense(s) => {
                let vs = Mat::from_fn(s.nrows(), s.ncols(), |i, j| v[i] * s[(i, j)]);
                let mut out = s.transpose() * &vs;
                linalg::symmetrize(&mut out);
                out
            }
        }
    }
}

fn dst_matrix(n: usize) -> Mat<f64> {
    // orthonormal DST-I on n − 1 interior points
    let c = (2.0 / n as f64).sqrt();
    let pi = std::f64::consts::PI;
    Mat::from_fn(n - 1, n - 1, |i, j| {
        c * (pi * ((i + 1) * (j + 1)) as f64 / n as f64).sin()
    })
}

pub struct SpectralOperator {
    pub kind: OperatorKind,
    pub grid: Grid,
    pub measure: f64,
    /// Grid indices of the interior nodes, in frame row order.
    pub nodes: Vec<usize>,
    /// Eigenvalues of L₀, ascending.
    pub d: Vec<f64>,
    /// Potential at the grid nodes (zero off the interior).
    pub potential: Option<Vec<f64>>,
    /// (p, ‖V‖_p) when a potential is present.
    pub lp_norm: Option<(f64, f64)>,
    frame: Arc<Frame>,
    /// Frame matrix of L_V; None means diag(d).
    matrix: Option<Mat<f64>>,
    /// Potential on the interior nodes, frame row order.
    vi: Option<Vec<f64>>,
    inverse: OnceLock<Option<Mat<f64>>>,
    eta: OnceLock<(f64, Report)>,
    spectrum: Mutex<Option<(Vec<f64>, Vec<Vec<f64>>)>>,
}

impl fmt::Debug for SpectralOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralOperator")
            .field("kind", &self.kind)
            .field("dim", &self.dim())
            .field("lp_norm", &self.lp_norm)
            .finish()
    }
}

impl SpectralOperator {
    /// Dirichlet 5-point Laplacian on the domain's grid.
    pub fn laplacian(domain: &Domain, h: f64) -> Result<Self> {
        let grid = domain.grid(h)?;
        let nodes = grid.interior_indices();
        if nodes.len() > DENSE_CAP {
            return Err(Error::Capacity(format!(
                "{} interior nodes exceed the dense cap {DENSE_CAP}",
                nodes.len()
            )));
        }
        if nodes.is_empty() {
            return invalid("grid has no interior nodes");
        }
        let (frame, d) = match domain.kind {
            DomainKind::Rectangle { .. } => {
                let (mx, my) = (grid.nx - 4, grid.ny - 4);
                let (na, nb) = (mx + 1, my + 1);
                let s2 = 4.0 / (h * h);
                let half = std::f64::consts::PI / 2.0;
                let lx: Vec<f64> = (1..na)
                    .map(|j| s2 * (half * j as f64 / na as f64).sin().powi(2))
                    .collect();
                let ly: Vec<f64> = (1..nb)
                    .map(|k| s2 * (half * k as f64 / nb as f64).sin().powi(2))
                    .collect();
                let mut order: Vec<(usize, usize)> =
                    (0..mx).flat_map(|j| (0..my).map(move |k| (j, k))).collect();
                order.sort_by(|a, b| {
                    (lx[a.0] + ly[a.1])
                        .total_cmp(&(lx[b.0] + ly[b.1]))
                        .then(a.cmp(b))
                });
                let d = order.iter().map(|&(j, k)| lx[j] + ly[k]).collect();
                (
                    Frame::Separable {
                        sx: dst_matrix(na),
                        sy: dst_matrix(nb),
                        order,
                    },
                    d,
                )
            }
            _ => {
                let (a, _) = stencil_matrix(&grid);
                let (w, v) = linalg::sym_eigen(&a.to_dense())?;
                let s = 1.0 / (h * h);
                (Frame::Dense(v), w.into_iter().map(|x| x * s).collect())
            }
        };
        Ok(Self {
            kind: OperatorKind::Laplacian,
            grid,
            measure: domain.measure,
            nodes,
            d,
            potential: None,
            lp_norm: None,
            frame: Arc::new(frame),
            matrix: None,
            vi: None,
            inverse: OnceLock::new(),
            eta: OnceLock::new(),
            spectrum: Mutex::new(None),
        })
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn kind_name(&self) -> String {
        match &self.kind {
            OperatorKind::Laplacian => "laplacian".into(),
            OperatorKind::Fractional { s } => format!("fractional(s={s})"),
            OperatorKind::Schrodinger { potential } => format!("schrodinger({potential})"),
        }
    }

    fn same_frame(&self, other: &SpectralOperator) -> bool {
        Arc::ptr_eq(&self.frame, &other.frame)
    }

    /// Dense frame matrix of the operator.
    pub fn frame_matrix(&self) -> Mat<f64> {
        match &self.matrix {
            Some(m) => m.clone(),
            None => Mat::from_fn(
                self.dim(),
                self.dim(),
                |i, j| if i == j { self.d[i] } else { 0.0 },
            ),
        }
    }

    /// Nodal matrix S·A·Sᵀ on the interior nodes (test use; O(n³)).
    pub fn nodal_matrix(&self) -> Mat<f64> {
        let n = self.dim();
        let a = self.frame_matrix();
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|c| {
                let y: Vec<f64> = (0..n).map(|r| a[(r, c)]).collect();
                self.frame.synthesize(&y)
            })
            .collect();
        // (S A) Sᵀ: row i of S A Sᵀ is S applied to row i of S A
        let sa = Mat::from_fn(n, n, |i, c| cols[c][i]);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let y: Vec<f64> = (0..n).map(|c| sa[(i, c)]).collect();
                self.frame.synthesize(&y)
            })
            .collect();
        Mat::from_fn(n, n, |i, j| rows[i][j])
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match (&self.matrix, &self.vi) {
            (Some(_), Some(v)) if self.frame.is_separable() => {
                let w = self.frame.apply_diag(v, x);
                for (((yi, xi), di), wi) in y.iter_mut().zip(x).zip(&self.d).zip(w) {
                    *yi = di * xi - wi;
                }
            }
            (Some(m), _) => linalg::symv(m, x, y),
            (None, _) => {
                for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.d) {
                    *yi = di * xi;
                }
            }
        }
    }

    /// W x with L_V = L₀ − W.
    fn apply_w(&self, x: &[f64], y: &mut [f64]) {
        match (&self.matrix, &self.vi) {
            (Some(_), Some(v)) if self.frame.is_separable() => {
                y.copy_from_slice(&self.frame.apply_diag(v, x))
            }
            _ => {
                self.apply(x, y);
                for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.d) {
                    *yi = di * xi - *yi;
                }
            }
        }
    }

    /// Dense inverse in the frame, cached; None if not positive definite.
    pub fn inverse(&self) -> Option<&Mat<f64>> {
        self.inverse
            .get_or_init(|| match &self.matrix {
                Some(m) => linalg::spd_inverse(m).ok(),
                None => Some(Mat::from_fn(self.dim(), self.dim(), |i, j| {
                    if i == j {
                        1.0 / self.d[i]
                    } else {
                        0.0
                    }
                })),
            })
            .as_ref()
    }

    pub fn is_positive(&self) -> bool {
        self.inverse().is_some() && self.ground_energy() > 0.0
    }

    /// Lowest eigenvalue E₀.
    pub fn ground_energy(&self) -> f64 {
        if self.matrix.is_none() {
            return self.d[0];
        }
        if let Some(inv) = self.inverse() {
            if let Ok(r) = linalg::lanczos(
                self.dim(),
                |x, y| linalg::symv(inv, x, y),
                1,
                End::Largest,
                1e-13,
                400,
                11,
            ) {
                return 1.0 / r.values[0];
            }
        }
        match linalg::lanczos(
            self.dim(),
            |x, y| self.apply(x, y),
            1,
            End::Smallest,
            1e-12,
            self.dim(),
            11,
        ) {
            Ok(r) => r.values[0],
            Err(_) => f64::NAN,
        }
    }

    /// Samples on the grid of an L²-normalized frame vector.
    pub fn to_grid(&self, y: &[f64]) -> Vec<f64> {
        let u = self.frame.synthesize(y);
        let mut out = vec![0.0; self.grid.len()];
        for (&p, v) in self.nodes.iter().zip(u) {
            out[p] = v / self.grid.h;
        }
        out
    }

    /// Frame coordinates of grid samples (L² isometry on the interior nodes).
    pub fn from_grid(&self, u: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = self.nodes.iter().map(|&p| u[p] * self.grid.h).collect();
        self.frame.analyse(&v)
    }

    /// Lowest `n` eigenpairs (μ_n, ψ_n as grid samples), cached.
    pub fn lowest_eigenpairs(&self, n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if n == 0 || n > self.dim() {
            return invalid(format!(
                "requested {n} eigenpairs of a {}-dimensional operator",
                self.dim()
            ));
        }
        {
            let c = self.spectrum.lock().unwrap_or_else(|e| e.into_inner());
            if let Some((mu, psi)) = c.as_ref() {
                if mu.len() >= n {
                    return Ok((mu[..n].to_vec(), psi[..n].to_vec()));
                }
            }
        }
        let (mu, ys): (Vec<f64>, Vec<Vec<f64>>) = match &self.matrix {
            None => (
                self.d[..n].to_vec(),
                (0..n)
                    .map(|i| {
                        let mut e = vec![0.0; self.dim()];
                        e[i] = 1.0;
                        e
                    })
                    .collect(),
            ),
            Some(_) => {
                let inv = self
                    .inverse()
                    .ok_or_else(|| Error::NotPositive(self.ground_energy()))?;
                let r = linalg::lanczos(
                    self.dim(),
                    |x, y| linalg::symv(inv, x, y),
                    n,
                    End::Largest,
                    1e-12,
                    (4 * n + 200).min(self.dim()),
                    5,
                )?;
                (r.values.iter().map(|t| 1.0 / t).collect(), r.vectors)
            }
        };
        let psi: Vec<Vec<f64>> = ys.iter().map(|y| self.to_grid(y)).collect();
        *self.spectrum.lock().unwrap_or_else(|e| e.into_inner()) = Some((mu.clone(), psi.clone()));
        Ok((mu, psi))
    }

    /// M_nm = ⟨u_n, L u_m⟩ for grid samples u_n.
    pub fn pairing_gram(&self, members: &[Vec<f64>]) -> Result<Mat<f64>> {
        if let Some(u) = members.iter().find(|u| u.len() != self.grid.len()) {
            return Err(Error::DimensionMismatch(format!(
                "member of length {} on a grid of {}",
                u.len(),
                self.grid.len()
            )));
        }
        let ys: Vec<Vec<f64>> = members.iter().map(|u| self.from_grid(u)).collect();
        let mut ay = vec![vec![0.0; self.dim()]; ys.len()];
        for (y, a) in ys.iter().zip(ay.iter_mut()) {
            self.apply(y, a);
        }
        let mut m = Mat::from_fn(ys.len(), ys.len(), |i, j| linalg::dot(&ys[i], &ay[j]));
        linalg::symmetrize(&mut m);
        Ok(m)
    }

    fn require_base(&self, l0: &SpectralOperator) -> Result<()> {
        if !self.same_frame(l0) || l0.matrix.is_some() {
            return Err(Error::DimensionMismatch(
                "operator was not assembled from this Laplacian".into(),
            ));
        }
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "dim": self.dim(),
            "h": self.grid.h,
            "ground_energy": finite_or_null(self.ground_energy()),
            "lp_norm": self.lp_norm.map(|(p, n)| serde_json::json!({"p": p, "norm": n})),
        })
    }
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        x.into()
    } else {
        serde_json::Value::Null
    }
}

/// Potential fixtures selectable by name.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Zero,
    Const(f64),
    /// c·sin(πx/a)·sin(πy/b)
    Bump(f64),
    /// ±c on an 8 × 8 checkerboard of the bounding box
    Checker(f64),
    File(PathBuf),
}

impl FromStr for PotentialSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = || -> Result<f64> {
            arg.ok_or_else(|| Error::InvalidInput(format!("potential '{name}' needs a value")))?
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad potential value in '{s}'")))
        };
        match name {
            "zero" => Ok(Self::Zero),
            "const" => Ok(Self::Const(num()?)),
            "bump" => Ok(Self::Bump(num()?)),
            "checker" => Ok(Self::Checker(num()?)),
            "file" => Ok(Self::File(PathBuf::from(arg.unwrap_or_default()))),
            _ => invalid(format!("unknown potential '{s}'")),
        }
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "zero"),
            Self::Const(c) => write!(f, "const:{c}"),
            Self::Bump(c) => write!(f, "bump:{c}"),
            Self::Checker(c) => write!(f, "checker:{c}"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl PotentialSpec {
    /// Node samples on the grid (zero off the interior).
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        let (xs, ys) = (grid.x_coords(), grid.y_coords());
        let (x0, y0) = (xs[0], ys[0]);
        let (wx, wy) = (xs[xs.len() - 1] - x0, ys[ys.len() - 1] - y0);
        // closed bounding box of the domain excludes the exterior ring
        let (bx0, by0, bw, bh) = (
            x0 + grid.h,
            y0 + grid.h,
            wx - 2.0 * grid.h,
            wy - 2.0 * grid.h,
        );
        let pi = std::f64::consts::PI;
        let f = |x: f64, y: f64| -> f64 {
            let (u, v) = ((x - bx0) / bw, (y - by0) / bh);
            match self {
                Self::Zero => 0.0,
                Self::Const(c) => *c,
                Self::Bump(c) => c * (pi * u).sin() * (pi * v).sin(),
                Self::Checker(c) => {
                    let (i, j) = (
                        ((8.0 * u).floor() as i64).clamp(0, 7),
                        ((8.0 * v).floor() as i64).clamp(0, 7),
                    );
                    if (i + j) % 2 == 0 {
                        *c
                    } else {
                        -c
                    }
                }
                Self::File(_) => 0.0,
            }
        };
        if let Self::File(path) = self {
            let raw = load_potential(path)?;
            if raw.rows != grid.ny || raw.cols != grid.nx || (raw.h - grid.h).abs() > 1e-12 * grid.h
            {
                return Err(Error::DimensionMismatch(format!(
                    "potential grid {}x{} h={} does not match {}x{} h={}",
                    raw.rows, raw.cols, raw.h, grid.ny, grid.nx, grid.h
                )));
            }
            return Ok((0..grid.len())
                .map(|p| if grid.interior[p] { raw.values[p] } else { 0.0 })
                .collect());
        }
        Ok((0..grid.len())
            .map(|p| {
                if grid.interior[p] {
                    let (x, y) = grid.coords(p);
                    f(x, y)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// Real-valued grid file: "rows cols h" followed by rows of values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridValues {
    pub rows: usize,
    pub cols: usize,
    pub h: f64,
    pub values: Vec<f64>,
}

pub fn parse_potential(text: &str) -> Result<GridValues> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty potential file".into(),
    })?;
    let f: Vec<&str> = header.split_whitespace().collect();
    let perr = |msg: &str| Error::Parse {
        line: hl + 1,
        msg: msg.into(),
    };
    if f.len() != 3 {
        return Err(perr("header must be 'rows cols h'"));
    }
    let rows: usize = f[0].parse().map_err(|_| perr("bad rows"))?;
    let cols: usize = f[1].parse().map_err(|_| perr("bad cols"))?;
    let h: f64 = f[2].parse().map_err(|_| perr("bad h"))?;
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (ln, l) = lines.next().ok_or(Error::Parse {
            line: hl + 1,
            msg: format!("expected {rows} rows"),
        })?;
        let row: std::result::Result<Vec<f64>, _> =
            l.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|_| Error::Parse {
            line: ln + 1,
            msg: "bad value".into(),
        })?;
        if row.len() != cols || row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: ln + 1,
                msg: format!("expected {cols} finite values"),
            });
        }
        values.extend(row);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::Parse {
            line: ln + 1,
            msg: "trailing data".into(),
        });
    }
    Ok(GridValues {
        rows,
        cols,
        h,
        values,
    })
}

pub fn load_potential(path: &Path) -> Result<GridValues> {
    let t = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_potential(&t)
}

/// L_V = L₀ − diag(V). `p` selects the recorded norm ‖V‖_p.
pub fn assemble_schrodinger(
    base: &SpectralOperator,
    v: &[f64],
    name: &str,
    p: f64,
) -> Result<SpectralOperator> {
    if base.matrix.is_some() {
        return invalid("base operator must be the Laplacian");
    }
    if v.len() != base.grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "potential of length {} on a grid of {}",
            v.len(),
            base.grid.len()
        )));
    }
    if !(p > 0.0) {
        return invalid("norm exponent p must be positive");
    }
    let vi: Vec<f64> = base.nodes.iter().map(|&q| v[q]).collect();
    if vi.iter().any(|x| !x.is_finite()) {
        return invalid("potential must be finite");
    }
    let lp = base
        .nodes
        .iter()
        .map(|&q| base.grid.weights[q] * v[q].abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p);
    let mut t = base.frame.congruence(&vi);
    for j in 0..t.ncols() {
        for i in 0..t.nrows() {
            t[(i, j)] = if i == j {
                base.d[i] - t[(i, j)]
            } else {
                -t[(i, j)]
            };
        }
    }
    let mut potential = vec![0.0; base.grid.len()];
    for &q in &base.nodes {
        potential[q] = v[q];
    }
    Ok(SpectralOperator {
        kind: OperatorKind::Schrodinger {
            potential: name.to_string(),
        },
        grid: base.grid.clone(),
        measure: base.measure,
        nodes: base.nodes.clone(),
        d: base.d.clone(),
        potential: Some(potential),
        lp_norm: Some((p, lp)),
        frame: base.frame.clone(),
        matrix: Some(t),
        vi: Some(vi),
        inverse: OnceLock::new(),
        eta: OnceLock::new(),
        spectrum: Mutex::new(None),
    })
}

fn operator_norm(l0: &SpectralOperator) -> f64 {
    *l0.d.last().unwrap_or(&0.0)
}

/// η = min eigenvalue of the pencil L_V x = η L₀ x, with a Cholesky
/// certificate that L_V − ηL₀ ⪰ −1e-10·‖L₀‖.
pub fn eta_gap(lv: &SpectralOperator, l0: &SpectralOperator) -> Result<(f64, Report)> {
    lv.require_base(l0)?;
    if let Some(r) = lv.eta.get() {
        return Ok(r.clone());
    }
    let n = lv.dim();
    let t = lv.frame_matrix();
    let s: Vec<f64> = l0.d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let eta = if lv.matrix.is_none() {
        1.0
    } else {
        let r = linalg::lanczos(
            n,
            |x, y| {
                let xs: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a * b).collect();
                lv.apply(&xs, y);
                y.iter_mut().zip(&s).for_each(|(a, b)| *a *= b);
            },
            1,
            End::Smallest,
            1e-13,
            n.min(600),
            3,
        )?;
        r.values[0]
    };
    let e0 = lv.ground_energy();
    if !(eta > 0.0) || !(e0 > 0.0) {
        return Err(Error::NotPositive(e0));
    }
    let tau = PSD_TOL * operator_norm(l0);
    let mut diff = t;
    for i in 0..n {
        diff[(i, i)] -= eta * l0.d[i];
    }
    let ok = linalg::psd_with_shift(&diff, tau);
    let rep = Report::new("eta_gap")
        .param("operator", lv.kind_name())
        .param("dim", n)
        .detail("eta", eta)
        .detail("ground_energy", e0)
        .detail("psd_shift", tau)
        .detail("certificate", ok);
    let mut rep = rep.with_status(if ok { Status::Pass } else { Status::Fail });
    rep.set_values(eta, 1.0, 0.0);
    Ok(lv.eta.get_or_init(|| (eta, rep)).clone())
}

/// η^{-1}L₀^{-1} − L_V^{-1} ⪰ −1e-10·‖L₀^{-1}‖ by Cholesky on the dense
/// difference; also reports η·λmax(L₀^{1/2} L_V^{-1} L₀^{1/2}), which must be ≤ 1.
pub fn check_simple_resolvent(
    lv: &SpectralOperator,
    l0: &SpectralOperator,
    eta: f64,
) -> Result<Report> {
    lv.require_base(l0)?;
    if !(eta > 0.0) {
        return Err(Error::NotPositive(eta));
    }
    let n = lv.dim();
    let inv = lv
        .inverse()
        .ok_or_else(|| Error::NotPositive(lv.ground_energy()))?;
    let tau = PSD_TOL / l0.d[0];
    let mut diff = Mat::from_fn(n, n, |i, j| -inv[(i, j)]);
    for i in 0..n {
        diff[(i, i)] += 1.0 / (eta * l0.d[i]);
    }
    let ok = linalg::psd_with_shift(&diff, tau);
    drop(diff);
    let s: Vec<f64> = l0.d.iter().map(|x| x.sqrt()).collect();
    let top = linalg::lanczos(
        n,
        |x, y| {
            let xs: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a * b).collect();
            linalg::symv(inv, &xs, y);
            y.iter_mut().zip(&s).for_each(|(a, b)| *a *= b);
        },
        1,
        End::Largest,
        1e-13,
        n.min(600),
        4,
    )
    .map(|r| r.values[0])
    .unwrap_or(f64::NAN);
    let ratio = eta * top;
    let pass = ok && ratio <= 1.0 + 1e-9;
    let mut rep = Report::new("simple_resolvent")
        .param("operator", lv.kind_name())
        .param("eta", eta)
        .detail("psd_shift", tau)
        .detail("certificate", ok)
        .with_status(if pass { Status::Pass } else { Status::Fail });
    rep.set_values(ratio, 1.0, 0.0);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventFit {
    pub epsilon: Vec<f64>,
    pub c: Vec<f64>,
    pub q: f64,
    pub eta: f64,
    /// Cholesky certificates: pass at C(1 + 1e-6), fail at C(1 − 1e-3).
    pub bracket_ok: Vec<bool>,
}

/// Search cap on C(ε).
pub const C_CAP: f64 = 1e9;

/// Minimal C(ε) with (1+ε)L₀^{-1} + Cε^{-q}L₀^{-2} − L_V^{-1} ⪰ −1e-10‖L₀^{-1}‖.
///
/// With T = L₀ − W the congruence by L₀ turns the condition into
/// Cε^{-q} ≥ λmax(W + W T^{-1} W − εL₀), solved by Lanczos and then
/// bracketed by two Cholesky certificates on the original form.
pub fn fit_resolvent_expansion(
    lv: &SpectralOperator,
    l0: &SpectralOperator,
    eps: &[f64],
    q: f64,
) -> Result<(ResolventFit, Report)> {
    lv.require_base(l0)?;
    if eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return invalid("epsilon grid must lie in (0, 1)");
    }
    let n = lv.dim();
    let inv = lv
        .inverse()
        .ok_or_else(|| Error::NotPositive(lv.ground_energy()))?;
    let (eta, _) = eta_gap(lv, l0)?;
    let tau = PSD_TOL / l0.d[0];
    let d = &l0.d;
    let w_apply = |x: &[f64], y: &mut [f64]| lv.apply_w(x, y);
    let mut cs = Vec::with_capacity(eps.len());
    let mut brackets = Vec::with_capacity(eps.len());
    let form = |e: f64, cc: f64| {
        let mut m = Mat::from_fn(n, n, |i, j| -inv[(i, j)]);
        for i in 0..n {
            m[(i, i)] += (1.0 + e) / d[i] + cc * e.powf(-q) / (d[i] * d[i]);
        }
        m
    };
    for &e in eps {
        // C = 0 whenever the unperturbed form is already PSD
        let top = if lv.matrix.is_none() {
            -e * d[0]
        } else if linalg::psd_with_shift(&form(e, 0.0), 0.0) {
            0.0
        } else {
            let r = linalg::lanczos(
                n,
                |x, y| {
                    let mut wx = vec![0.0; n];
                    w_apply(x, &mut wx);
                    let mut t = vec![0.0; n];
                    linalg::symv(inv, &wx, &mut t);
                    w_apply(&t, y);
                    for i in 0..n {
                        y[i] += wx[i] - e * d[i] * x[i];
                    }
                },
                1,
                End::Largest,
                1e-11,
                n,
                6,
            )?;
            r.values[0]
        };
        let c = e.powf(q) * top.max(0.0);
        let upper = linalg::psd_with_shift(&form(e, c * (1.0 + 1e-6) + 1e-12), tau);
        let lower = c == 0.0 || !linalg::psd_with_shift(&form(e, c * (1.0 - 1e-3)), tau);
        cs.push(c);
        brackets.push(upper && lower);
    }
    let sup = cs.iter().cloned().fold(0.0f64, f64::max);
    let finite = cs.iter().all(|c| c.is_finite() && *c <= C_CAP);
    let pass = finite && brackets.iter().all(|&b| b);
    let fit = ResolventFit {
        epsilon: eps.to_vec(),
        c: cs.clone(),
        q,
        eta,
        bracket_ok: brackets.clone(),
    };
    let mut rep = Report::new("resolvent_expansion")
        .param("operator", lv.kind_name())
        .param("q", q)
        .param("epsilon", eps.to_vec())
        .detail("c", cs)
        .detail("bracket_ok", brackets)
        .detail("eta", eta)
        .with_status(if pass { Status::Pass } else { Status::Fail });
    rep.set_values(sup, C_CAP, 0.0);
    Ok((fit, rep))
}

/// Minimal c(ε) with |diag V| ⪯ εL₀ + c(ε)I, and the slope of ln c against ln(1/ε).
pub fn check_sobolev_form_bound(l0: &SpectralOperator, v: &[f64], eps: &[f64]) -> Result<Report> {
    if l0.matrix.is_some() {
        return invalid("base operator must be the Laplacian");
    }
    if v.len() != l0.grid.len() {
        return Err(Error::DimensionMismatch(
            "potential does not match the grid".into(),
        ));
    }
    let n = l0.dim();
    let av: Vec<f64> = l0.nodes.iter().map(|&p| v[p].abs()).collect();
    let zero = av.iter().all(|x| *x == 0.0);
    let a = if zero {
        None
    } else {
        Some(l0.frame.congruence(&av))
    };
    let tau = PSD_TOL * operator_norm(l0);
    let mut cs = Vec::new();
    let mut certs = Vec::new();
    for &e in eps {
        let Some(a) = &a else {
            cs.push(0.0);
            certs.push(true);
            continue;
        };
        let r = linalg::lanczos(
            n,
            |x, y| {
                if l0.frame.is_separable() {
                    y.copy_from_slice(&l0.frame.apply_diag(&av, x));
                } else {
                    linalg::symv(a, x, y);
                }
                for i in 0..n {
                    y[i] -= e * l0.d[i] * x[i];
                }
            },
            1,
            End::Largest,
            1e-11,
            n,
            8,
        )?;
        let c = r.values[0].max(0.0);
        let mut m = Mat::from_fn(n, n, |i, j| -a[(i, j)]);
        for i in 0..n {
            m[(i, i)] += e * l0.d[i] + c * (1.0 + 1e-6) + 1e-12;
        }
        certs.push(linalg::psd_with_shift(&m, tau));
        cs.push(c);
    }
    // least squares slope over positive fits
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(&cs)
        .filter(|(_, c)| **c > 0.0)
        .map(|(e, c)| ((1.0 / e).ln(), c.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0, s.1 + p.1));
        let (mx, my) = (sx / m, sy / m);
        let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if den > 0.0 {
            num / den
        } else {
            f64::NAN
        }
    } else {
        f64::NAN
    };
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&i, &j| eps[j].total_cmp(&eps[i]));
    let monotone = order
        .windows(2)
        .all(|w| cs[w[1]] >= cs[w[0]] * (1.0 - 1e-9));
    let finite = cs.iter().all(|c| c.is_finite());
    let pass = finite && monotone && certs.iter().all(|&c| c);
    let mut rep = Report::new("sobolev_form_bound")
        .param("epsilon", eps.to_vec())
        .detail("c", cs.clone())
        .detail("slope", finite_or_null(slope))
        .detail("monotone", monotone)
        .detail("certificate", certs)
        .with_status(if pass { Status::Pass } else { Status::Fail });
    rep.set_values(cs.iter().cloned().fold(0.0, f64::max), f64::INFINITY, 0.0);
    Ok(rep)
}

/// L_V^{-1} ⪯ L_{V₊}^{-1}, certified by Cholesky on the difference.
pub fn check_positive_part_dominance(
    lv: &SpectralOperator,
    l0: &SpectralOperator,
) -> Result<Report> {
    lv.require_base(l0)?;
    let v = lv
        .potential
        .clone()
        .unwrap_or_else(|| vec![0.0; lv.grid.len()]);
    let vp: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    let lp = assemble_schrodinger(l0, &vp, "positive part", 2.0)?;
    let n = lv.dim();
    let a = lv
        .inverse()
        .ok_or_else(|| Error::NotPositive(lv.ground_energy()))?;
    let b = lp
        .inverse()
        .ok_or_else(|| Error::NotPositive(lp.ground_energy()))?;
    let diff = Mat::from_fn(n, n, |i, j| b[(i, j)] - a[(i, j)]);
    let tau = PSD_TOL / l0.d[0];
    let ok = linalg::psd_with_shift(&diff, tau);
    Ok(Report::new("positive_part_dominance")
        .param("operator", lv.kind_name())
        .detail("psd_shift", tau)
        .detail("certificate", ok)
        .with_status(if ok { Status::Pass } else { Status::Fail }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> SpectralOperator {
        SpectralOperator::laplacian(&Domain::unit_square(), 1.0 / n as f64).unwrap()
    }

    #[test]
    fn frame_round_trip_and_nodal_form() {
        let l0 = small(8);
        let g = &l0.grid;
        let v = PotentialSpec::Checker(3.0).sample(g).unwrap();
        let lv = assemble_schrodinger(&l0, &v, "checker", 2.0).unwrap();
        let a = lv.nodal_matrix();
        let (st, idx) = stencil_matrix(g);
        let s = st.to_dense();
        let h2 = 1.0 / (g.h * g.h);
        assert_eq!(idx, l0.nodes);
        for i in 0..l0.dim() {
            for j in 0..l0.dim() {
                let want = s[(i, j)] * h2 - if i == j { v[l0.nodes[i]] } else { 0.0 };
                assert!((a[(i, j)] - want).abs() < 1e-10 * h2, "{i} {j}");
            }
        }
        let u: Vec<f64> = (0..g.len())
            .map(|p| if g.interior[p] { (p as f64).sin() } else { 0.0 })
            .collect();
        let back = l0.to_grid(&l0.from_grid(&u));
        for p in 0..g.len() {
            assert!((back[p] - u[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_shift_spectrum() {
        let l0 = small(16);
        let c = 0.5 * l0.d[0];
        let v = PotentialSpec::Const(c).sample(&l0.grid).unwrap();
        let lv = assemble_schrodinger(&l0, &v, "const", 2.0).unwrap();
        let (mu, _) = lv.lowest_eigenpairs(5).unwrap();
        for i in 0..5 {
            assert!((mu[i] - (l0.d[i] - c)).abs() < 1e-9 * l0.d[i]);
        }
        let (eta, r) = eta_gap(&lv, &l0).unwrap();
        assert!((eta - 0.5).abs() < 1e-9 && r.passed());
        assert!(check_simple_resolvent(&lv, &l0, eta).unwrap().passed());
    }

    #[test]
    fn gap_closed_is_not_positive() {
        let l0 = small(16);
        let v = PotentialSpec::Const(2.0 * std::f64::consts::PI.powi(2))
            .sample(&l0.grid)
            .unwrap();
        let lv = assemble_schrodinger(&l0, &v, "const", 2.0).unwrap();
        assert!(!lv.is_positive());
        assert!(lv.ground_energy() < 0.0);
        assert!(eta_gap(&lv, &l0).is_err());
    }

    #[test]
    fn potential_spec_parse() {
        assert_eq!(
            "const:2.5".parse::<PotentialSpec>().unwrap(),
            PotentialSpec::Const(2.5)
        );
        assert_eq!(
            "zero".parse::<PotentialSpec>().unwrap(),
            PotentialSpec::Zero
        );
        assert!("bump".parse::<PotentialSpec>().is_err());
        assert!("wave:1".parse::<PotentialSpec>().is_err());
        let g = parse_potential("2 3 0.5\n1 2 3\n4 5 6\n").unwrap();
        assert_eq!(g.values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(parse_potential("2 3 0.5\n1 2 3\n").is_err());
    }
}
