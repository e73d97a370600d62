//! Uniform node-centred grid on the square (-1/2, 1/2)^2 with homogeneous
//! Neumann boundary handling.
//!
//! Nodes sit at `x_i = -1/2 + i h`, `i = 0..=M`. Boundary stencils use mirror
//! ghost nodes (`f_{-1,j} = f_{1,j}`, `f_{M+1,j} = f_{M-1,j}`), which makes
//! every discrete normal derivative vanish. Quadrature is the tensor
//! trapezoidal rule, so boundary nodes carry weight 1/2 and corners 1/4.

use std::ops::{Deref, Index, IndexMut};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale3(s: f64, a: Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

/// Neumaier-compensated running sum. Used for every grid reduction so that
/// results do not depend on accumulated rounding in long sums.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    m: usize,
    h: f64,
}

impl Grid2D {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGrid(m));
        }
        Ok(Self {
            m,
            h: 1.0 / m as f64,
        })
    }

    /// Cells per axis.
    pub fn cells(&self) -> usize {
        self.m
    }

    /// Nodes per axis (`M + 1`).
    pub fn nodes(&self) -> usize {
        self.m + 1
    }

    pub fn len(&self) -> usize {
        self.nodes() * self.nodes()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 + i as f64 * self.h
    }

    /// Row-major index; `i` runs along x, `j` along y.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nodes() + i
    }

    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        (self.coord(i), self.coord(j))
    }

    /// Trapezoidal weight of node `(i, j)` without the `h^2` factor.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let w = |k: usize| if k == 0 || k == self.m { 0.5 } else { 1.0 };
        w(i) * w(j)
    }

    #[inline]
    fn mirror(&self, k: isize) -> usize {
        if k < 0 {
            (-k) as usize
        } else if k as usize > self.m {
            2 * self.m - k as usize
        } else {
            k as usize
        }
    }

    /// Neighbour indices `(i-1, i+1, j-1, j+1)` after mirroring.
    #[inline]
    fn neighbours(&self, i: usize, j: usize) -> (usize, usize, usize, usize) {
        let (i, j) = (i as isize, j as isize);
        (
            self.mirror(i - 1),
            self.mirror(i + 1),
            self.mirror(j - 1),
            self.mirror(j + 1),
        )
    }

    /// Trapezoidal quadrature of a node-valued scalar.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        let n = self.nodes();
        let mut acc = CompensatedSum::default();
        for j in 0..n {
            for i in 0..n {
                acc.add(self.weight(i, j) * f.values[self.idx(i, j)]);
            }
        }
        acc.value() * self.h * self.h
    }

    /// Discrete `L^p` norm, `p` in `[1, inf]`.
    pub fn lp_norm(&self, f: &ScalarField, p: f64) -> f64 {
        debug_assert!(p >= 1.0);
        if p.is_infinite() {
            return f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        }
        let n = self.nodes();
        let mut acc = CompensatedSum::default();
        for j in 0..n {
            for i in 0..n {
                acc.add(self.weight(i, j) * f.values[self.idx(i, j)].abs().powf(p));
            }
        }
        (acc.value() * self.h * self.h).powf(1.0 / p)
    }

    /// `L^p` norm of the pointwise Euclidean magnitude of a vector field.
    pub fn lp_norm_vec(&self, f: &VecField, p: f64) -> f64 {
        self.lp_norm(&f.magnitude(), p)
    }

    /// Five-point Laplacian with mirror ghosts.
    pub fn laplacian(&self, f: &VecField) -> VecField {
        self.check(f);
        let n = self.nodes();
        let inv_h2 = 1.0 / (self.h * self.h);
        let mut out = VecField::zeros(self);
        for j in 0..n {
            for i in 0..n {
                let (im, ip, jm, jp) = self.neighbours(i, j);
                let c = f.values[self.idx(i, j)];
                let a = f.values[self.idx(im, j)];
                let b = f.values[self.idx(ip, j)];
                let d = f.values[self.idx(i, jm)];
                let e = f.values[self.idx(i, jp)];
                let mut v = [0.0; 3];
                for k in 0..3 {
                    v[k] = (a[k] + b[k] + d[k] + e[k] - 4.0 * c[k]) * inv_h2;
                }
                out.values[self.idx(i, j)] = v;
            }
        }
        out
    }

    /// Centred partial derivatives `(d/dx, d/dy)` of every component.
    pub fn gradient(&self, f: &VecField) -> (VecField, VecField) {
        self.check(f);
        let n = self.nodes();
        let inv_2h = 0.5 / self.h;
        let mut dx = VecField::zeros(self);
        let mut dy = VecField::zeros(self);
        for j in 0..n {
            for i in 0..n {
                let (im, ip, jm, jp) = self.neighbours(i, j);
                let k = self.idx(i, j);
                dx.values[k] = scale3(
                    inv_2h,
                    sub3(f.values[self.idx(ip, j)], f.values[self.idx(im, j)]),
                );
                dy.values[k] = scale3(
                    inv_2h,
                    sub3(f.values[self.idx(i, jp)], f.values[self.idx(i, jm)]),
                );
            }
        }
        (dx, dy)
    }

    /// `|grad f|^2` per node from centred differences, summed over both axes
    /// and all three components.
    pub fn gradient_sq(&self, f: &VecField) -> ScalarField {
        let (dx, dy) = self.gradient(f);
        ScalarField::from_fn(self, |k| {
            dot3(dx.values[k], dx.values[k]) + dot3(dy.values[k], dy.values[k])
        })
    }

    /// Pointwise Frobenius norm of the centred Jacobian.
    pub fn gradient_norm(&self, f: &VecField) -> ScalarField {
        let mut g = self.gradient_sq(f);
        g.values.iter_mut().for_each(|v| *v = v.sqrt());
        g
    }

    /// Edge-based Dirichlet energy density: the mean of the squared
    /// one-sided differences on either side of each node. Its trapezoidal
    /// integral equals `-(Laplacian f, f)`, so it is the quadratic form the
    /// five-point operator conserves.
    pub fn dirichlet_density(&self, f: &VecField) -> ScalarField {
        self.check(f);
        let n = self.nodes();
        let inv_h2 = 1.0 / (self.h * self.h);
        let mut out = ScalarField::zeros(self);
        for j in 0..n {
            for i in 0..n {
                let (im, ip, jm, jp) = self.neighbours(i, j);
                let c = f.values[self.idx(i, j)];
                let mut s = 0.0;
                for nb in [
                    self.idx(im, j),
                    self.idx(ip, j),
                    self.idx(i, jm),
                    self.idx(i, jp),
                ] {
                    let d = sub3(f.values[nb], c);
                    s += dot3(d, d);
                }
                out.values[self.idx(i, j)] = 0.5 * s * inv_h2;
            }
        }
        out
    }

    /// Trapezoidal `L^2` inner product of two vector fields.
    pub fn inner(&self, a: &VecField, b: &VecField) -> f64 {
        self.integrate(&a.dot(b))
    }

    fn check(&self, f: &VecField) {
        assert_eq!(f.cells, self.m, "field shape does not match grid");
    }
}

/// Node-valued scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub(crate) cells: usize,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(g: &Grid2D) -> Self {
        Self {
            cells: g.cells(),
            values: vec![0.0; g.len()],
        }
    }

    pub fn constant(g: &Grid2D, c: f64) -> Self {
        Self {
            cells: g.cells(),
            values: vec![c; g.len()],
        }
    }

    pub fn from_fn(g: &Grid2D, f: impl Fn(usize) -> f64) -> Self {
        Self {
            cells: g.cells(),
            values: (0..g.len()).map(f).collect(),
        }
    }

    pub fn from_xy(g: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = g.nodes();
        let mut values = Vec::with_capacity(g.len());
        for j in 0..n {
            for i in 0..n {
                let (x, y) = g.point(i, j);
                values.push(f(x, y));
            }
        }
        Self {
            cells: g.cells(),
            values,
        }
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            cells: self.cells,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.cells, other.cells);
        Self {
            cells: self.cells,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

impl Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

/// Node-valued field of 3-vectors, row-major over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VecField {
    pub(crate) cells: usize,
    pub values: Vec<Vec3>,
}

impl VecField {
    pub fn zeros(g: &Grid2D) -> Self {
        Self::constant(g, [0.0; 3])
    }

    pub fn constant(g: &Grid2D, c: Vec3) -> Self {
        Self {
            cells: g.cells(),
            values: vec![c; g.len()],
        }
    }

    pub fn from_xy(g: &Grid2D, f: impl Fn(f64, f64) -> Vec3) -> Self {
        let n = g.nodes();
        let mut values = Vec::with_capacity(g.len());
        for j in 0..n {
            for i in 0..n {
                let (x, y) = g.point(i, j);
                values.push(f(x, y));
            }
        }
        Self {
            cells: g.cells(),
            values,
        }
    }

    pub fn from_values(g: &Grid2D, values: Vec<Vec3>) -> Result<Self> {
        if values.len() != g.len() {
            return Err(Error::ShapeMismatch {
                expected: g.len(),
                found: values.len(),
            });
        }
        Ok(Self {
            cells: g.cells(),
            values,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(Vec3) -> Vec3) -> Self {
        Self {
            cells: self.cells,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(Vec3, Vec3) -> Vec3) -> Self {
        assert_eq!(self.cells, other.cells, "field shapes differ");
        Self {
            cells: self.cells,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn cross(&self, other: &Self) -> Self {
        self.zip_with(other, cross3)
    }

    pub fn dot(&self, other: &Self) -> ScalarField {
        assert_eq!(self.cells, other.cells, "field shapes differ");
        ScalarField {
            cells: self.cells,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| dot3(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, add3)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, sub3)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| scale3(s, v))
    }

    /// `self + s * x`
    pub fn axpy(&self, s: f64, x: &Self) -> Self {
        self.zip_with(x, |a, b| {
            [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
        })
    }

    /// Pointwise average `(self + other) / 2`.
    pub fn midpoint(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| scale3(0.5, add3(a, b)))
    }

    pub fn magnitude(&self) -> ScalarField {
        ScalarField {
            cells: self.cells,
            values: self.values.iter().map(|&v| norm3(v)).collect(),
        }
    }

    /// Max over nodes of `|a - b|` (Euclidean per node).
    pub fn max_dist(&self, other: &Self) -> f64 {
        assert_eq!(self.cells, other.cells);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| norm3(sub3(a, b)))
            .fold(0.0, f64::max)
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|&v| norm3(v)).fold(0.0, f64::max)
    }

    /// Max over nodes of `| |f| - 1 |`.
    pub fn max_unit_defect(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (norm3(v) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for VecField {
    type Output = Vec3;
    fn index(&self, k: usize) -> &Vec3 {
        &self.values[k]
    }
}

impl IndexMut<usize> for VecField {
    fn index_mut(&mut self, k: usize) -> &mut Vec3 {
        &mut self.values[k]
    }
}

/// A field of unit vectors: the discrete map into the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereField(VecField);

impl SphereField {
    pub fn new(f: VecField, unit_tol: f64) -> Result<Self> {
        let defect = f.max_unit_defect();
        if defect > unit_tol {
            return Err(Error::ConstraintViolated {
                what: "unit length",
                defect,
            });
        }
        Ok(Self(f))
    }

    /// Wraps without checking; callers guarantee the constraint.
    pub fn new_unchecked(f: VecField) -> Self {
        Self(f)
    }

    /// Normalises every node. Fails on (near-)zero vectors.
    pub fn normalized(f: VecField) -> Result<Self> {
        let mut out = f;
        for v in out.values.iter_mut() {
            let n = norm3(*v);
            if n < 1e-300 {
                return Err(Error::DegenerateNorm { min_norm: n });
            }
            *v = scale3(1.0 / n, *v);
        }
        Ok(Self(out))
    }

    pub fn into_inner(self) -> VecField {
        self.0
    }
}

impl Deref for SphereField {
    type Target = VecField;
    fn deref(&self) -> &VecField {
        &self.0
    }
}

/// Angular momentum: pointwise orthogonal to the paired sphere field.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumField(VecField);

impl MomentumField {
    pub fn new(w: VecField, u: &SphereField, unit_tol: f64) -> Result<Self> {
        let defect = u
            .values
            .iter()
            .zip(&w.values)
            .map(|(&a, &b)| dot3(a, b).abs())
            .fold(0.0, f64::max);
        if defect > unit_tol {
            return Err(Error::ConstraintViolated {
                what: "orthogonality",
                defect,
            });
        }
        Ok(Self(w))
    }

    pub fn new_unchecked(w: VecField) -> Self {
        Self(w)
    }

    pub fn into_inner(self) -> VecField {
        self.0
    }
}

impl Deref for MomentumField {
    type Target = VecField;
    fn deref(&self) -> &VecField {
        &self.0
    }
}

/// Max over nodes of `|u . w|`.
pub fn max_orthogonality_defect(u: &VecField, w: &VecField) -> f64 {
    u.dot(w).values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
