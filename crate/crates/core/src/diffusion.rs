//! Finite-difference solver for the diffusion limits of the correlation
//! equations,
//!
//! ```text
//! -∇·(D ∇W) - i (∇·ψ) W = 0,   D = 1/(1 - g),
//! ```
//!
//! on a uniform node grid, with Dirichlet data on the box and zero on excluded
//! regions. The stencil is written in finite-volume form so that reflecting
//! faces keep the system symmetric.

use std::collections::VecDeque;
use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::medium::TransportCoefficients;
use crate::scene::{Domain, Face, Region, Scene, ShiftField, ShiftRegime};

/// Above this many unknowns the Krylov solver replaces the direct one.
pub const DIRECT_SOLVER_LIMIT: usize = 1_000_000;

/// Default relative residual required from a solve.
pub const RESIDUAL_TARGET: f64 = 1e-10;

/// Which correlation the problem describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationField {
    /// `W11` or `W22`.
    Auto,
    /// `W12`.
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    /// Direct factorization below [`DIRECT_SOLVER_LIMIT`] unknowns, Krylov above.
    #[default]
    Auto,
    Direct,
    Krylov,
}

#[derive(Debug, Clone)]
pub struct DiffusionProblem {
    pub domain: Domain,
    pub grid_spacing: f64,
    pub diffusion_scalar: f64,
    /// Shift field whose divergence enters as the complex absorption.
    pub complex_absorption: Option<ShiftField>,
    /// Regions where the unknown is pinned to zero.
    pub excluded_regions: Vec<Region>,
    /// Dirichlet values per face; faces not listed carry 0.
    pub boundary_values: Vec<(Face, f64)>,
    /// Faces with a zero normal-flux condition instead of Dirichlet data.
    pub reflecting_faces: Vec<Face>,
    /// Faces the source has to reach; used only for the disconnection flag.
    pub measured_faces: Vec<Face>,
    pub solver: LinearSolver,
    /// Relative residual the linear solve must reach.
    pub solver_tol: f64,
}

impl DiffusionProblem {
    /// Plain Laplace-type problem on `domain` with no exclusions.
    pub fn new(domain: Domain, grid_spacing: f64, diffusion_scalar: f64) -> Self {
        Self {
            domain,
            grid_spacing,
            diffusion_scalar,
            complex_absorption: None,
            excluded_regions: Vec::new(),
            boundary_values: Vec::new(),
            reflecting_faces: Vec::new(),
            measured_faces: Vec::new(),
            solver: LinearSolver::Auto,
            solver_tol: RESIDUAL_TARGET,
        }
    }

    /// Problem for one correlation of `scene`, with source level `q` on the
    /// illuminated faces.
    ///
    /// Absorbers are excluded for every field. For `W12` the shift support is
    /// excluded as well in the moderate and large regimes, while the small
    /// regime adds the complex absorption term.
    pub fn from_scene(
        scene: &Scene,
        coeffs: &TransportCoefficients,
        field: CorrelationField,
        grid_spacing: f64,
        q: f64,
    ) -> Self {
        let mut p = Self::new(scene.domain, grid_spacing, coeffs.reduced_diffusion());
        p.excluded_regions = scene.absorbers.iter().map(|&d| Region::Disk(d)).collect();
        p.boundary_values = scene.illuminated.iter().map(|&f| (f, q)).collect();
        p.measured_faces = scene.measured.clone();
        if field == CorrelationField::Cross && scene.shift.is_active() {
            match scene.shift.regime {
                ShiftRegime::None => {}
                ShiftRegime::Small => p.complex_absorption = Some(scene.shift.clone()),
                ShiftRegime::Moderate | ShiftRegime::Large => {
                    p.excluded_regions.extend(scene.shift.support.iter().copied())
                }
            }
        }
        p
    }

    fn validate(&self) -> Result<[usize; 3]> {
        let h = self.grid_spacing;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid(format!("grid spacing must be positive, got {h}")));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        if !(self.diffusion_scalar.is_finite() && self.diffusion_scalar > 0.0) {
            return Err(Error::invalid(format!("diffusion scalar must be positive, got {}", self.diffusion_scalar)));
        }
        let mut cells = [0usize; 3];
        for (a, c) in cells.iter_mut().enumerate().take(self.domain.dimension.as_usize()) {
            let ratio = self.domain.extent(a) / h;
            let n = ratio.round();
            if n < 2.0 || (ratio - n).abs() > 1e-9 * n {
                return Err(Error::invalid(format!(
                    "grid spacing {h} does not divide the domain extent {} along axis {a}",
                    self.domain.extent(a)
                )));
            }
            *c = n as usize;
        }
        for &(f, q) in &self.boundary_values {
            if !(q.is_finite() && q >= 0.0) {
                return Err(Error::invalid(format!("boundary value on {} must be non-negative", f.name())));
            }
            if self.reflecting_faces.contains(&f) {
                return Err(Error::invalid(format!("face {} is both reflecting and Dirichlet", f.name())));
            }
        }
        Ok(cells)
    }
}

/// Node grid geometry shared by problems and solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub domain: Domain,
    pub spacing: f64,
    /// Cells per axis (`1` cell and `1` node on unused axes).
    pub cells: [usize; 3],
}

impl Grid {
    pub fn nodes(&self, axis: usize) -> usize {
        if axis < self.domain.dimension.as_usize() {
            self.cells[axis] + 1
        } else {
            1
        }
    }

    pub fn len(&self) -> usize {
        (0..3).map(|a| self.nodes(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.nodes(0) * (ijk[1] + self.nodes(1) * ijk[2])
    }

    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let nx = self.nodes(0);
        let ny = self.nodes(1);
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Node coordinate, interpolated so that grid points that are exact
    /// decimal fractions of the box come out exact.
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        if axis >= self.domain.dimension.as_usize() {
            return 0.0;
        }
        let n = self.cells[axis] as f64;
        let i = i as f64;
        (self.domain.min[axis] * (n - i) + self.domain.max[axis] * i) / n
    }

    pub fn position(&self, ijk: [usize; 3]) -> Vec3 {
        [self.coordinate(0, ijk[0]), self.coordinate(1, ijk[1]), self.coordinate(2, ijk[2])]
    }

    fn on_face(&self, ijk: [usize; 3], face: Face) -> bool {
        let a = face.axis();
        if face.is_upper() {
            ijk[a] == self.cells[a]
        } else {
            ijk[a] == 0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NodeKind {
    Free(usize),
    Fixed(f64),
}

/// Solved field on the node grid.
#[derive(Debug, Clone)]
pub struct FieldGrid {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    pub excluded: Vec<bool>,
    pub residual_norm: f64,
    /// Faces carrying non-zero Dirichlet data.
    pub source_faces: Vec<Face>,
    /// Set when excluded regions cut every path from the source to the
    /// measured faces. The solution is still valid; its measured flux is zero.
    pub disconnected: bool,
}

impl FieldGrid {
    pub fn value_at(&self, ijk: [usize; 3]) -> Complex64 {
        self.values[self.grid.index(ijk)]
    }

    /// Largest `|Im W|`.
    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }

    /// Plain-text dump: the real plane, a blank line, then the imaginary
    /// plane. Each row runs along `x`; rows advance in `y`, then `z`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# nodes {} {} {} spacing {:e}",
            self.grid.nodes(0),
            self.grid.nodes(1),
            self.grid.nodes(2),
            self.grid.spacing
        );
        for part in [|c: Complex64| c.re, |c: Complex64| c.im] {
            for row in self.values.chunks(self.grid.nodes(0)) {
                let line: Vec<String> = row.iter().map(|&v| format!("{:e}", part(v))).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
            s.push('\n');
        }
        s
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl Csr {
    fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yr = acc;
        }
    }

    fn diagonal(&self) -> Vec<Complex64> {
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .find(|&k| self.cols[k] == r)
                    .map_or(Complex64::new(0.0, 0.0), |k| self.vals[k])
            })
            .collect()
    }

    fn is_real(&self) -> bool {
        self.vals.iter().all(|v| v.im == 0.0)
    }

    fn relative_residual(&self, x: &[Complex64], b: &[Complex64]) -> f64 {
        let mut ax = vec![Complex64::new(0.0, 0.0); self.n];
        self.matvec(x, &mut ax);
        let num: f64 = ax.iter().zip(b).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}

struct Assembled {
    grid: Grid,
    kinds: Vec<NodeKind>,
    excluded: Vec<bool>,
    matrix: Csr,
    rhs: Vec<Complex64>,
}

fn assemble(problem: &DiffusionProblem) -> Result<Assembled> {
    let cells = problem.validate()?;
    let grid = Grid { domain: problem.domain, spacing: problem.grid_spacing, cells };
    let dim = problem.domain.dimension.as_usize();
    let faces = Face::all(problem.domain.dimension);
    let n_nodes = grid.len();

    let mut kinds = Vec::with_capacity(n_nodes);
    let mut excluded = vec![false; n_nodes];
    let mut n_free = 0usize;
    for idx in 0..n_nodes {
        let ijk = grid.ijk(idx);
        let on_dirichlet: Vec<Face> = faces
            .iter()
            .copied()
            .filter(|&f| grid.on_face(ijk, f) && !problem.reflecting_faces.contains(&f))
            .collect();
        let kind = if !on_dirichlet.is_empty() {
            let q = problem
                .boundary_values
                .iter()
                .filter(|(f, _)| on_dirichlet.contains(f))
                .fold(0.0, |m: f64, &(_, q)| m.max(q));
            NodeKind::Fixed(q)
        } else if problem.excluded_regions.iter().any(|r| r.contains(grid.position(ijk))) {
            excluded[idx] = true;
            NodeKind::Fixed(0.0)
        } else {
            n_free += 1;
            NodeKind::Free(n_free - 1)
        };
        kinds.push(kind);
    }

    let h = problem.grid_spacing;
    let scale = h * h / problem.diffusion_scalar;
    let reflecting_on = |ijk: [usize; 3], axis: usize| {
        problem.reflecting_faces.iter().any(|&f| f.axis() == axis && grid.on_face(ijk, f))
    };
    let mut row_ptr = Vec::with_capacity(n_free + 1);
    let mut cols = Vec::with_capacity(n_free * (2 * dim + 1));
    let mut vals = Vec::with_capacity(n_free * (2 * dim + 1));
    let mut rhs = vec![Complex64::new(0.0, 0.0); n_free];
    row_ptr.push(0);
    for idx in 0..n_nodes {
        let NodeKind::Free(row) = kinds[idx] else { continue };
        let ijk = grid.ijk(idx);
        // Control-volume fractions: half cells on reflecting faces.
        let half: Vec<f64> = (0..dim).map(|a| if reflecting_on(ijk, a) { 0.5 } else { 1.0 }).collect();
        let volume: f64 = half.iter().product();
        let mut diag = Complex64::new(0.0, 0.0);
        let mut entries: Vec<(usize, Complex64)> = Vec::with_capacity(2 * dim + 1);
        for a in 0..dim {
            let area = volume / half[a];
            for step in [-1isize, 1] {
                let j = ijk[a] as isize + step;
                if j < 0 || j > cells[a] as isize {
                    continue;
                }
                let mut nb = ijk;
                nb[a] = j as usize;
                diag += area;
                match kinds[grid.index(nb)] {
                    NodeKind::Free(col) => entries.push((col, Complex64::new(-area, 0.0))),
                    NodeKind::Fixed(v) => rhs[row] += area * v,
                }
            }
        }
        if let Some(shift) = &problem.complex_absorption {
            let div = shift.divergence(grid.position(ijk), problem.domain.dimension);
            diag -= Complex64::new(0.0, scale * div * volume);
        }
        entries.push((row, diag));
        entries.sort_by_key(|e| e.0);
        for (c, v) in entries {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    let matrix = Csr { n: n_free, row_ptr, cols, vals };
    Ok(Assembled { grid, kinds, excluded, matrix, rhs })
}

fn triplets<T: Copy>(m: &Csr, f: impl Fn(Complex64) -> T) -> Vec<Triplet<usize, usize, T>> {
    let mut out = Vec::with_capacity(m.vals.len());
    for r in 0..m.n {
        for k in m.row_ptr[r]..m.row_ptr[r + 1] {
            out.push(Triplet::new(r, m.cols[k], f(m.vals[k])));
        }
    }
    out
}

fn solve_direct(m: &Csr, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let fail = |e: String| Error::numerical(format!("sparse factorization failed: {e}"), f64::NAN);
    if m.is_real() {
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(m.n, m.n, &triplets(m, |v| v.re))
            .map_err(|e| fail(format!("{e:?}")))?;
        let llt = a.sp_cholesky(Side::Lower).map_err(|e| fail(format!("{e:?}")))?;
        let re = llt.solve(Col::from_fn(m.n, |i| b[i].re));
        let im = if b.iter().any(|v| v.im != 0.0) {
            Some(llt.solve(Col::from_fn(m.n, |i| b[i].im)))
        } else {
            None
        };
        Ok((0..m.n).map(|i| Complex64::new(re[i], im.as_ref().map_or(0.0, |c| c[i]))).collect())
    } else {
        let a = SparseColMat::<usize, faer::c64>::try_new_from_triplets(m.n, m.n, &triplets(m, |v| v))
            .map_err(|e| fail(format!("{e:?}")))?;
        let lu = a.sp_lu().map_err(|e| fail(format!("{e:?}")))?;
        let x = lu.solve(Col::from_fn(m.n, |i| b[i]));
        Ok((0..m.n).map(|i| x[i]).collect())
    }
}

/// Conjugate orthogonal conjugate gradients with a Jacobi preconditioner.
/// For complex symmetric systems; reduces to preconditioned CG when real.
fn solve_cocg(m: &Csr, b: &[Complex64], tol: f64, max_iter: usize) -> Result<Vec<Complex64>> {
    let n = m.n;
    let zero = Complex64::new(0.0, 0.0);
    let inv_diag: Vec<Complex64> = m.diagonal().iter().map(|d| 1.0 / d).collect();
    let b_norm = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let mut x = vec![zero; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<Complex64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut q = vec![zero; n];
    let dotu = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<Complex64>();
    let mut rho = dotu(&r, &z);
    let mut res = 1.0;
    for _ in 0..max_iter {
        m.matvec(&p, &mut q);
        let pq = dotu(&p, &q);
        if pq.norm() == 0.0 {
            break;
        }
        let alpha = rho / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        res = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() / b_norm;
        if res <= tol {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rho_next = dotu(&r, &z);
        let beta = rho_next / rho;
        rho = rho_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::numerical("COCG did not reach the residual target", res))
}

/// Breadth-first search over free nodes from the source to the measured faces.
fn source_reaches_measured(problem: &DiffusionProblem, a: &Assembled) -> bool {
    let grid = &a.grid;
    let dim = problem.domain.dimension.as_usize();
    let faces = Face::all(problem.domain.dimension);
    let neighbours = |idx: usize| {
        let ijk = grid.ijk(idx);
        let mut out = Vec::with_capacity(2 * dim);
        for ax in 0..dim {
            if ijk[ax] > 0 {
                let mut nb = ijk;
                nb[ax] -= 1;
                out.push(grid.index(nb));
            }
            if ijk[ax] < grid.cells[ax] {
                let mut nb = ijk;
                nb[ax] += 1;
                out.push(grid.index(nb));
            }
        }
        out
    };
    let is_source = |idx: usize| matches!(a.kinds[idx], NodeKind::Fixed(v) if v > 0.0 && !a.excluded[idx]);
    let is_measured = |idx: usize| {
        let ijk = grid.ijk(idx);
        faces.iter().any(|&f| problem.measured_faces.contains(&f) && grid.on_face(ijk, f))
    };
    let mut seen = vec![false; grid.len()];
    let mut queue = VecDeque::new();
    for idx in 0..grid.len() {
        if is_source(idx) {
            for nb in neighbours(idx) {
                if matches!(a.kinds[nb], NodeKind::Free(_)) && !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    while let Some(idx) = queue.pop_front() {
        for nb in neighbours(idx) {
            if is_measured(nb) {
                return true;
            }
            if matches!(a.kinds[nb], NodeKind::Free(_)) && !seen[nb] {
                seen[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    false
}

/// Assembles and solves the problem.
pub fn solve_diffusion(problem: &DiffusionProblem) -> Result<FieldGrid> {
    let a = assemble(problem)?;
    let n = a.matrix.n;
    let use_direct = match problem.solver {
        LinearSolver::Direct => true,
        LinearSolver::Krylov => false,
        LinearSolver::Auto => n <= DIRECT_SOLVER_LIMIT,
    };
    let (x, residual) = if n == 0 {
        (Vec::new(), 0.0)
    } else if a.rhs.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
        (vec![Complex64::new(0.0, 0.0); n], 0.0)
    } else {
        let x = if use_direct {
            solve_direct(&a.matrix, &a.rhs)?
        } else {
            solve_cocg(&a.matrix, &a.rhs, problem.solver_tol * 0.1, 20 * n + 1000)?
        };
        let residual = a.matrix.relative_residual(&x, &a.rhs);
        if !(residual <= problem.solver_tol) {
            return Err(Error::numerical("linear solve missed the residual target", residual));
        }
        (x, residual)
    };
    let values = a
        .kinds
        .iter()
        .map(|k| match *k {
            NodeKind::Free(i) => x[i],
            NodeKind::Fixed(v) => Complex64::new(v, 0.0),
        })
        .collect();
    let disconnected = !problem.measured_faces.is_empty() && !source_reaches_measured(problem, &a);
    let source_faces = problem.boundary_values.iter().filter(|(_, q)| *q > 0.0).map(|(f, _)| *f).collect();
    Ok(FieldGrid { grid: a.grid, values, excluded: a.excluded, residual_norm: residual, source_faces, disconnected })
}

/// `∫ ν·∇W` over a face, with a second-order one-sided normal derivative and
/// the trapezoidal rule along the face.
pub fn boundary_flux(field: &FieldGrid, face: Face) -> Result<Complex64> {
    let grid = &field.grid;
    let dim = grid.domain.dimension;
    if !Face::all(dim).contains(&face) {
        return Err(Error::invalid(format!("face {} does not exist in 2D", face.name())));
    }
    if field.source_faces.contains(&face) {
        return Err(Error::invalid(format!("face {} carries the source", face.name())));
    }
    let axis = face.axis();
    if grid.cells[axis] < 2 {
        return Err(Error::invalid("need at least two cells across the face normal"));
    }
    let h = grid.spacing;
    let tangential: Vec<usize> = (0..dim.as_usize()).filter(|&a| a != axis).collect();
    let boundary = if face.is_upper() { grid.cells[axis] } else { 0 };
    let inward = |k: usize| if face.is_upper() { boundary - k } else { boundary + k };
    let n1 = grid.nodes(tangential[0]);
    let n2 = tangential.get(1).map_or(1, |&a| grid.nodes(a));
    let mut total = Complex64::new(0.0, 0.0);
    for j2 in 0..n2 {
        for j1 in 0..n1 {
            let mut ijk = [0usize; 3];
            ijk[tangential[0]] = j1;
            if let Some(&a2) = tangential.get(1) {
                ijk[a2] = j2;
            }
            let w = |k: usize| {
                let mut p = ijk;
                p[axis] = inward(k);
                field.value_at(p)
            };
            let dn = (3.0 * w(0) - 4.0 * w(1) + w(2)) / (2.0 * h);
            let mut weight = h;
            if j1 == 0 || j1 + 1 == n1 {
                weight *= 0.5;
            }
            if tangential.len() > 1 {
                weight *= h;
                if j2 == 0 || j2 + 1 == n2 {
                    weight *= 0.5;
                }
            }
            total += weight * dn;
        }
    }
    Ok(total)
}

/// Sum of [`boundary_flux`] over several faces.
pub fn measured_flux(field: &FieldGrid, faces: &[Face]) -> Result<Complex64> {
    faces.iter().map(|&f| boundary_flux(field, f)).sum()
}
