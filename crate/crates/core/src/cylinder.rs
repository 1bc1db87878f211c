//! Truncated-cylinder grids on [-L,L]×T^k, the discrete operators
//! D_e = e ∂_s + D_x and its exact transpose, the Lagrangian energy and its
//! Euler-Lagrange residual, diagnostics, the generator map to physical
//! coordinates, the cell integral identity, and the Birkhoff spot check.
//!
//! Discretization: forward differences in s (one-sided closure at s = L)
//! and forward periodic differences in x. The adjoint is the literal
//! transpose of the forward-difference matrices, so
//! ⟨D_e U, F⟩ = ⟨U, D_e* F⟩ holds to machine precision and the discrete
//! linearized operator is symmetric.

use crate::media::{CoefficientField, Medium};
use crate::{Error, Result};

/// Uniform grid on [-L,L] × T^k.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderGrid {
    /// Truncation half-length.
    pub l: f64,
    /// Number of s nodes (s_i = -L + i·h_s, i = 0..n_s-1).
    pub n_s: usize,
    /// Node counts per periodic coordinate (x_j = j/n, j = 0..n-1).
    pub n_x: Vec<usize>,
}

impl CylinderGrid {
    pub fn new(l: f64, n_s: usize, n_x: Vec<usize>) -> Result<Self> {
        if n_s < 3 || n_x.iter().any(|&n| n < 2) || l <= 0.0 {
            return Err(Error::Validation(format!(
                "bad cylinder grid: L={l}, n_s={n_s}, n_x={n_x:?}"
            )));
        }
        Ok(CylinderGrid { l, n_s, n_x })
    }

    /// Number of periodic coordinates.
    #[inline]
    pub fn k(&self) -> usize {
        self.n_x.len()
    }

    #[inline]
    pub fn h_s(&self) -> f64 {
        2.0 * self.l / (self.n_s - 1) as f64
    }

    #[inline]
    pub fn h_x(&self, c: usize) -> f64 {
        1.0 / self.n_x[c] as f64
    }

    /// Total number of x nodes per s row.
    #[inline]
    pub fn nxt(&self) -> usize {
        self.n_x.iter().product()
    }

    /// Total node count.
    #[inline]
    pub fn nodes(&self) -> usize {
        self.n_s * self.nxt()
    }

    #[inline]
    pub fn s_coord(&self, i: usize) -> f64 {
        -self.l + i as f64 * self.h_s()
    }

    /// x coordinates (k entries) of a flattened x index.
    pub fn x_coord(&self, mut jx: usize) -> Vec<f64> {
        let k = self.k();
        let mut out = vec![0.0; k];
        for c in (0..k).rev() {
            let n = self.n_x[c];
            out[c] = (jx % n) as f64 / n as f64;
            jx /= n;
        }
        out
    }

    /// Trapezoid weight of row i (1/2 at the two boundary rows).
    #[inline]
    pub fn w_s(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_s - 1 {
            0.5
        } else {
            1.0
        }
    }

    /// Cell measure h_s · Π h_x.
    #[inline]
    pub fn measure(&self) -> f64 {
        self.h_s() / self.nxt() as f64
    }

    /// Flat x index of the forward neighbor in coordinate c (periodic).
    #[inline]
    pub fn x_forward(&self, jx: usize, c: usize) -> usize {
        // stride of coordinate c in the flattened x index
        let mut stride = 1usize;
        for cc in (c + 1)..self.k() {
            stride *= self.n_x[cc];
        }
        let n = self.n_x[c];
        let block = stride * n;
        let base = jx / block * block;
        let rem = jx % block;
        let pos = rem / stride;
        let off = rem % stride;
        base + ((pos + 1) % n) * stride + off
    }

    /// Flat x index of the backward neighbor in coordinate c (periodic).
    #[inline]
    pub fn x_backward(&self, jx: usize, c: usize) -> usize {
        let mut stride = 1usize;
        for cc in (c + 1)..self.k() {
            stride *= self.n_x[cc];
        }
        let n = self.n_x[c];
        let block = stride * n;
        let base = jx / block * block;
        let rem = jx % block;
        let pos = rem / stride;
        let off = rem % stride;
        base + ((pos + n - 1) % n) * stride + off
    }
}

/// Scalar field on a cylinder grid, node-major: value(i_s, jx) at
/// index i_s·nxt + jx.
#[derive(Debug, Clone)]
pub struct CylinderField {
    pub grid: CylinderGrid,
    pub values: Vec<f64>,
}

impl CylinderField {
    pub fn zeros(grid: &CylinderGrid) -> Self {
        CylinderField {
            grid: grid.clone(),
            values: vec![0.0; grid.nodes()],
        }
    }

    /// Samples f(s, x) at every node.
    pub fn from_fn(grid: &CylinderGrid, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let nxt = grid.nxt();
        let mut values = vec![0.0; grid.nodes()];
        for i in 0..grid.n_s {
            let s = grid.s_coord(i);
            for jx in 0..nxt {
                values[i * nxt + jx] = f(s, &grid.x_coord(jx));
            }
        }
        CylinderField {
            grid: grid.clone(),
            values,
        }
    }

    /// tanh(s/√2) initial profile (x-independent, admissible).
    pub fn tanh_profile(grid: &CylinderGrid) -> Self {
        let mut f = Self::from_fn(grid, |s, _| (s / std::f64::consts::SQRT_2).tanh());
        f.pin_boundaries();
        f
    }

    /// Pins the rows at s = ∓L to ∓1.
    pub fn pin_boundaries(&mut self) {
        let nxt = self.grid.nxt();
        for jx in 0..nxt {
            self.values[jx] = -1.0;
            self.values[(self.grid.n_s - 1) * nxt + jx] = 1.0;
        }
    }
}

/// Unit direction in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    pub fn new(e: Vec<f64>) -> Result<Self> {
        let n2: f64 = e.iter().map(|v| v * v).sum();
        if (n2.sqrt() - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "direction must be unit length, |e| = {}",
                n2.sqrt()
            )));
        }
        Ok(Direction(e))
    }

    /// Normalizes a nonzero vector.
    pub fn from_vec(v: &[f64]) -> Result<Self> {
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Validation("cannot normalize zero direction".into()));
        }
        Ok(Direction(v.iter().map(|x| x / n).collect()))
    }

    /// (cos θ, sin θ) in d = 2.
    pub fn from_theta(theta: f64) -> Self {
        Direction(vec![theta.cos(), theta.sin()])
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Distance of e to the lamination sphere S^{k-1}×{0}: the norm of the
    /// last d-k components (transversality measure).
    pub fn transversality(&self, k: usize) -> f64 {
        self.0[k..].iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Coefficient field sampled at the cylinder's x nodes (hot-loop cache).
#[derive(Debug, Clone)]
pub struct GridMedium {
    pub d: usize,
    /// nxt × d×d row-major.
    pub a: Vec<f64>,
    /// nxt × d.
    pub div_a: Vec<f64>,
}

/// Samples the coefficient field at every x node of the grid.
pub fn sample_medium(grid: &CylinderGrid, field: &CoefficientField) -> GridMedium {
    assert_eq!(grid.k(), field.k, "grid/medium periodic rank mismatch");
    let d = field.d;
    let nxt = grid.nxt();
    let mut a = vec![0.0; nxt * d * d];
    let mut div_a = vec![0.0; nxt * d];
    for jx in 0..nxt {
        let x = grid.x_coord(jx);
        field.a_at(&x, &mut a[jx * d * d..(jx + 1) * d * d]);
        field.div_at(&x, &mut div_a[jx * d..(jx + 1) * d]);
    }
    GridMedium { d, a, div_a }
}

/// D_e U = e ∂_s U + D_x U into `out` (node-major, d components per node).
/// Forward differences; backward closure at the top row.
pub fn d_e_apply(grid: &CylinderGrid, e: &[f64], u: &[f64], out: &mut [f64]) {
    let d = e.len();
    let k = grid.k();
    let nxt = grid.nxt();
    let hs = grid.h_s();
    debug_assert_eq!(out.len(), u.len() * d);
    for i in 0..grid.n_s {
        for jx in 0..nxt {
            let n = i * nxt + jx;
            let ds = if i + 1 < grid.n_s {
                (u[n + nxt] - u[n]) / hs
            } else {
                (u[n] - u[n - nxt]) / hs
            };
            let base = n * d;
            for c in 0..d {
                out[base + c] = e[c] * ds;
            }
            for c in 0..k {
                let hx = grid.h_x(c);
                let fwd = i * nxt + grid.x_forward(jx, c);
                out[base + c] += (u[fwd] - u[n]) / hx;
            }
        }
    }
}

/// Exact transpose of `d_e_apply`: ⟨D_e u, F⟩ = ⟨u, D_e* F⟩ identically.
pub fn d_e_adjoint(grid: &CylinderGrid, e: &[f64], f: &[f64], out: &mut [f64]) {
    let d = e.len();
    let k = grid.k();
    let nxt = grid.nxt();
    let hs = grid.h_s();
    debug_assert_eq!(f.len(), out.len() * d);
    out.fill(0.0);
    for i in 0..grid.n_s {
        for jx in 0..nxt {
            let n = i * nxt + jx;
            let base = n * d;
            // ⟨e, F⟩ feeds the transpose of the s-difference.
            let mut ef = 0.0;
            for c in 0..d {
                ef += e[c] * f[base + c];
            }
            if i + 1 < grid.n_s {
                // row i of Ds: +1/h at i+1, -1/h at i
                out[n + nxt] += ef / hs;
                out[n] -= ef / hs;
            } else {
                // closure row: +1/h at n_s-1, -1/h at n_s-2
                out[n] += ef / hs;
                out[n - nxt] -= ef / hs;
            }
            // transpose of periodic forward differences
            for c in 0..k {
                let hx = grid.h_x(c);
                let fwd = i * nxt + grid.x_forward(jx, c);
                out[fwd] += f[base + c] / hx;
                out[i * nxt + jx] -= f[base + c] / hx;
            }
        }
    }
}

/// Spec-facing wrapper: D_e U as a flat vector field.
pub fn apply_d_e(u: &CylinderField, e: &Direction) -> Vec<f64> {
    let mut out = vec![0.0; u.values.len() * e.d()];
    d_e_apply(&u.grid, e.as_slice(), &u.values, &mut out);
    out
}

/// Spec-facing wrapper: D_e* F as a cylinder field.
pub fn adjoint_d_e(f: &[f64], grid: &CylinderGrid, e: &Direction) -> CylinderField {
    let mut out = CylinderField::zeros(grid);
    d_e_adjoint(grid, e.as_slice(), f, &mut out.values);
    out
}

/// Multiplies a vector field by a(x) per node: out_c = Σ_b a_cb f_b.
pub fn a_mul(grid: &CylinderGrid, gm: &GridMedium, f: &[f64], out: &mut [f64]) {
    let d = gm.d;
    let nxt = grid.nxt();
    for i in 0..grid.n_s {
        for jx in 0..nxt {
            let n = i * nxt + jx;
            let am = &gm.a[jx * d * d..(jx + 1) * d * d];
            for c in 0..d {
                let mut acc = 0.0;
                for b in 0..d {
                    acc += am[c * d + b] * f[n * d + b];
                }
                out[n * d + c] = acc;
            }
        }
    }
}

/// Discrete Lagrangian: trapezoid in s, rectangle in periodic x, of
/// (1/2)⟨a D_e U, D_e U⟩ + W(U). `delta_reg ≥ 0` adds the elliptic
/// regularization (delta_reg/2)·(∂_s U)².
pub fn energy_with_medium(
    grid: &CylinderGrid,
    gm: &GridMedium,
    pot: &crate::media::Potential,
    e: &[f64],
    u: &[f64],
    delta_reg: f64,
    scratch: &mut Vec<f64>,
) -> f64 {
    let d = gm.d;
    let nxt = grid.nxt();
    let hs = grid.h_s();
    scratch.resize(u.len() * d, 0.0);
    d_e_apply(grid, e, u, scratch);
    let mut total = 0.0;
    for i in 0..grid.n_s {
        let w = grid.w_s(i);
        let mut row = 0.0;
        for jx in 0..nxt {
            let n = i * nxt + jx;
            let am = &gm.a[jx * d * d..(jx + 1) * d * d];
            let g = &scratch[n * d..(n + 1) * d];
            let mut quad = 0.0;
            for c in 0..d {
                for b in 0..d {
                    quad += am[c * d + b] * g[c] * g[b];
                }
            }
            row += 0.5 * quad + pot.eval(u[n]);
            if delta_reg > 0.0 {
                let ds = if i + 1 < grid.n_s {
                    (u[n + nxt] - u[n]) / hs
                } else {
                    (u[n] - u[n - nxt]) / hs
                };
                row += 0.5 * delta_reg * ds * ds;
            }
        }
        total += w * row;
    }
    total * grid.measure()
}

/// Spec-facing energy of an admissible field.
pub fn energy(u: &CylinderField, e: &Direction, m: &Medium) -> Result<f64> {
    let gm = sample_medium(&u.grid, &m.a);
    let mut scratch = Vec::new();
    let val = energy_with_medium(&u.grid, &gm, &m.w, e.as_slice(), &u.values, 0.0, &mut scratch);
    if !val.is_finite() {
        return Err(Error::Numerical("energy is not finite".into()));
    }
    Ok(val)
}

/// Euler-Lagrange residual D_e*(a D_e U) + W'(U), assembled as the exact
/// gradient of the discrete energy divided by the cell measure (trapezoid
/// weights included); at interior rows the weights are 1 so this is the
/// plain PDE residual.
pub fn residual_with_medium(
    grid: &CylinderGrid,
    gm: &GridMedium,
    pot: &crate::media::Potential,
    e: &[f64],
    u: &[f64],
    delta_reg: f64,
    grad_field: &mut Vec<f64>,
    out: &mut [f64],
) {
    let d = gm.d;
    let nxt = grid.nxt();
    let hs = grid.h_s();
    grad_field.resize(u.len() * d, 0.0);
    d_e_apply(grid, e, u, grad_field);
    // weight a·D_eU by the trapezoid row weights, then transpose
    for i in 0..grid.n_s {
        let w = grid.w_s(i);
        for jx in 0..nxt {
            let n = i * nxt + jx;
            let am = &gm.a[jx * d * d..(jx + 1) * d * d];
            let g: Vec<f64> = grad_field[n * d..(n + 1) * d].to_vec();
            for c in 0..d {
                let mut acc = 0.0;
                for b in 0..d {
                    acc += am[c * d + b] * g[b];
                }
                grad_field[n * d + c] = w * acc;
            }
        }
    }
    d_e_adjoint(grid, e, grad_field, out);
    for i in 0..grid.n_s {
        let w = grid.w_s(i);
        for jx in 0..nxt {
            let n = i * nxt + jx;
            out[n] += w * pot.d1(u[n]);
        }
    }
    if delta_reg > 0.0 {
        // transpose of the weighted forward s-difference of U
        for i in 0..grid.n_s {
            let w = grid.w_s(i) * delta_reg;
            for jx in 0..nxt {
                let n = i * nxt + jx;
                if i + 1 < grid.n_s {
                    let ds = w * (u[n + nxt] - u[n]) / hs;
                    out[n + nxt] += ds / hs;
                    out[n] -= ds / hs;
                } else {
                    let ds = w * (u[n] - u[n - nxt]) / hs;
                    out[n] += ds / hs;
                    out[n - nxt] -= ds / hs;
                }
            }
        }
    }
}

/// Spec-facing residual.
pub fn residual(u: &CylinderField, e: &Direction, m: &Medium) -> CylinderField {
    let gm = sample_medium(&u.grid, &m.a);
    let mut out = CylinderField::zeros(&u.grid);
    let mut scratch = Vec::new();
    residual_with_medium(
        &u.grid,
        &gm,
        &m.w,
        e.as_slice(),
        &u.values,
        0.0,
        &mut scratch,
        &mut out.values,
    );
    out
}

/// ψ_U(s): x-average per s row.
pub fn magnetization_profile(u: &CylinderField) -> Vec<f64> {
    let nxt = u.grid.nxt();
    (0..u.grid.n_s)
        .map(|i| u.values[i * nxt..(i + 1) * nxt].iter().sum::<f64>() / nxt as f64)
        .collect()
}

/// Discrete total variation (sum of |forward differences| × cell measure)
/// over the slab s ∈ (s0, s1).
pub fn tv_diagnostic(u: &CylinderField, s0: f64, s1: f64) -> f64 {
    let grid = &u.grid;
    let nxt = grid.nxt();
    let hs = grid.h_s();
    let mut tv = 0.0;
    for i in 0..grid.n_s {
        let s = grid.s_coord(i);
        if s < s0 || s > s1 {
            continue;
        }
        for jx in 0..nxt {
            let n = i * nxt + jx;
            if i + 1 < grid.n_s {
                tv += (u.values[n + nxt] - u.values[n]).abs() / hs;
            }
            for c in 0..grid.k() {
                let fwd = i * nxt + grid.x_forward(jx, c);
                tv += (u.values[fwd] - u.values[n]).abs() / grid.h_x(c);
            }
        }
    }
    tv * grid.measure()
}

/// Rectangle grid in R^2 for physical-coordinate fields.
#[derive(Debug, Clone)]
pub struct BoxGrid {
    pub origin: [f64; 2],
    pub h: f64,
    pub n: [usize; 2],
}

impl BoxGrid {
    pub fn coord(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }
}

/// Scalar field on a box grid, row-major in (i, j).
#[derive(Debug, Clone)]
pub struct BoxField {
    pub grid: BoxGrid,
    pub values: Vec<f64>,
}

/// Evaluates U(s, x1) by bilinear interpolation; s clamps to ±1 outside
/// [-L, L] (consistent with the asymptotics), x1 wraps on T.
pub fn eval_cylinder(u: &CylinderField, s: f64, x1: f64) -> f64 {
    let grid = &u.grid;
    assert_eq!(grid.k(), 1, "physical evaluation implemented for k = 1");
    if s <= -grid.l {
        return -1.0;
    }
    if s >= grid.l {
        return 1.0;
    }
    let nxt = grid.nxt();
    let ts = (s + grid.l) / grid.h_s();
    let is = (ts.floor() as usize).min(grid.n_s - 2);
    let fs = ts - is as f64;
    let n = grid.n_x[0] as f64;
    let tx = x1.rem_euclid(1.0) * n;
    let jx = (tx.floor() as usize).min(grid.n_x[0] - 1);
    let fx = tx - jx as f64;
    let jx1 = (jx + 1) % grid.n_x[0];
    let v00 = u.values[is * nxt + jx];
    let v01 = u.values[is * nxt + jx1];
    let v10 = u.values[(is + 1) * nxt + jx];
    let v11 = u.values[(is + 1) * nxt + jx1];
    (1.0 - fs) * ((1.0 - fx) * v00 + fx * v01) + fs * ((1.0 - fx) * v10 + fx * v11)
}

/// Generator map: u_ζ(x) = U(⟨x,e⟩ - ζ, x) on a box grid (d = 2, k = 1).
pub fn generate_physical(u: &CylinderField, e: &Direction, zeta: f64, bx: &BoxGrid) -> BoxField {
    let ev = e.as_slice();
    let mut values = vec![0.0; bx.n[0] * bx.n[1]];
    for i in 0..bx.n[0] {
        for j in 0..bx.n[1] {
            let x = bx.coord(i, j);
            let s = ev[0] * x[0] + ev[1] * x[1] - zeta;
            values[i * bx.n[1] + j] = eval_cylinder(u, s, x[0]);
        }
    }
    BoxField {
        grid: bx.clone(),
        values,
    }
}

/// Cell integral identity for a rational direction given by a primitive
/// integer representative p (d = 2): compares the cylinder integral of the
/// energy density of U with the ζ- and strip-averaged physical integral.
/// Returns (lhs, rhs, gap).
pub fn verify_cell_identity(
    u: &CylinderField,
    p: &[i64; 2],
    m: &Medium,
    n_zeta: usize,
) -> Result<(f64, f64, f64)> {
    let grid = &u.grid;
    if grid.k() != 1 {
        return Err(Error::Unsupported("cell identity implemented for k = 1".into()));
    }
    if *p == [0, 0] {
        return Err(Error::Unsupported("direction must be a nonzero integer vector".into()));
    }
    let g = gcd(p[0].unsigned_abs(), p[1].unsigned_abs());
    if g != 1 {
        return Err(Error::Validation(format!(
            "integer representative {p:?} is not primitive"
        )));
    }
    let pf = [p[0] as f64, p[1] as f64];
    let pnorm = (pf[0] * pf[0] + pf[1] * pf[1]).sqrt();
    let e = Direction::from_vec(&pf)?;
    // m_e = min positive ⟨k,e⟩ over Z², Q_e spanned by p⊥; for primitive p
    // the pairing values are Z/|p|.
    let m_e = 1.0 / pnorm;
    let h_meas = pnorm;

    // Energy density per node.
    let gm = sample_medium(grid, &m.a);
    let d = e.d();
    let nxt = grid.nxt();
    let mut deu = vec![0.0; u.values.len() * d];
    d_e_apply(grid, e.as_slice(), &u.values, &mut deu);
    let mut dens = CylinderField::zeros(grid);
    for i in 0..grid.n_s {
        for jx in 0..nxt {
            let n = i * nxt + jx;
            let am = &gm.a[jx * d * d..(jx + 1) * d * d];
            let gvec = &deu[n * d..(n + 1) * d];
            let mut quad = 0.0;
            for c in 0..d {
                for b in 0..d {
                    quad += am[c * d + b] * gvec[c] * gvec[b];
                }
            }
            dens.values[n] = 0.5 * quad + m.w.eval(u.values[n]);
        }
    }

    // lhs: plain cylinder quadrature of the density.
    let mut lhs = 0.0;
    for i in 0..grid.n_s {
        let w = grid.w_s(i);
        for jx in 0..nxt {
            lhs += w * dens.values[i * nxt + jx];
        }
    }
    lhs *= grid.measure();

    // rhs: strip parametrized by x = σ p⊥ + τ p (σ ∈ [0,1), Jacobian |p|²),
    // so that s = ⟨x,e⟩ - ζ = τ|p| - ζ and x1 = σ p⊥_1 + τ p_1.
    // τ is sampled so s lands on the s grid; the σ (or ζ) grid is offset so
    // x1 lands on the x grid, making the quadrature exact for grid data.
    let hs = grid.h_s();
    let n1 = grid.n_x[0];
    let hx = 1.0 / n1 as f64;
    let p_perp = [-pf[1], pf[0]];
    let mut rhs = 0.0;
    if p_perp[0] != 0.0 {
        // σ-aligned path
        for q in 0..n_zeta {
            let zeta = (q as f64 + 0.5) / n_zeta as f64 * m_e;
            for i in 0..grid.n_s {
                let s = grid.s_coord(i);
                let tau = (s + zeta) / pnorm;
                let b = tau * pf[0]; // τ p_1 part of x1
                // choose σ offsets so x1 = σ p⊥_1 + b is a grid multiple
                let off = (b / p_perp[0]).rem_euclid(hx / p_perp[0].abs());
                let mut avg = 0.0;
                for r in 0..n1 {
                    let sigma = -off + (r as f64) * hx / p_perp[0].abs();
                    let x1 = sigma * p_perp[0] + b;
                    avg += eval_box_density(&dens, s, x1);
                }
                // σ step = hx/|p⊥_1| covers σ-length n1·hx/|p⊥_1| = 1/|p⊥_1|;
                // the integrand has σ-period 1/|p⊥_1| (x shifts by a lattice
                // vector), so this is a full-period rectangle rule.
                avg /= n1 as f64;
                rhs += grid.w_s(i) * avg * hs / pnorm;
            }
        }
        rhs *= pnorm * pnorm; // Jacobian
        rhs /= n_zeta as f64; // ζ rectangle rule (× m_e) …
        rhs *= m_e;
        rhs /= m_e * h_meas; // … then the 1/m_e · 1/H(Q_e) normalization
    } else {
        // p = (±1, 0): x1 = τ p_1 = ±(s + ζ); σ drops out. Align ζ instead.
        let ratio = hs / hx;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Validation(
                "e1-aligned identity needs h_s commensurate with h_x".into(),
            ));
        }
        let nz = n1; // one ζ sample per x cell over [0, m_e = 1)
        for q in 0..nz {
            let zeta = q as f64 * hx;
            for i in 0..grid.n_s {
                let s = grid.s_coord(i);
                let x1 = (s + zeta) * pf[0];
                rhs += grid.w_s(i) * eval_box_density(&dens, s, x1) * hs;
            }
        }
        rhs /= nz as f64;
    }
    if !rhs.is_finite() || !lhs.is_finite() {
        return Err(Error::Numerical("cell identity produced non-finite values".into()));
    }
    Ok((lhs, rhs, (lhs - rhs).abs()))
}

fn eval_box_density(dens: &CylinderField, s: f64, x1: f64) -> f64 {
    // Outside the truncation the admissible density is ~0 (tails); clamp.
    if s < -dens.grid.l || s > dens.grid.l {
        return 0.0;
    }
    eval_cylinder_raw(dens, s, x1)
}

/// Bilinear interpolation without the ±1 asymptotic clamp (for densities).
fn eval_cylinder_raw(u: &CylinderField, s: f64, x1: f64) -> f64 {
    let grid = &u.grid;
    let nxt = grid.nxt();
    let ts = ((s + grid.l) / grid.h_s()).clamp(0.0, (grid.n_s - 1) as f64);
    let is = (ts.floor() as usize).min(grid.n_s - 2);
    let fs = ts - is as f64;
    let n = grid.n_x[0] as f64;
    let tx = x1.rem_euclid(1.0) * n;
    let jx = (tx.floor() as usize).min(grid.n_x[0] - 1);
    let fx = tx - jx as f64;
    let jx1 = (jx + 1) % grid.n_x[0];
    let v00 = u.values[is * nxt + jx];
    let v01 = u.values[is * nxt + jx1];
    let v10 = u.values[(is + 1) * nxt + jx];
    let v11 = u.values[(is + 1) * nxt + jx1];
    (1.0 - fs) * ((1.0 - fx) * v00 + fx * v01) + fs * ((1.0 - fx) * v10 + fx * v11)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Counts Birkhoff violations: nodes x and integer shifts k with
/// ⟨k,e⟩ ≥ 0, |k|_∞ ≤ lattice_bound, where u(x+k) < u(x) - tol (only pairs
/// with both endpoints on the box grid are tested).
pub fn birkhoff_check(u: &BoxField, e: &Direction, lattice_bound: i64, tol: f64) -> usize {
    let bx = &u.grid;
    let steps = (1.0 / bx.h).round();
    assert!(
        (steps * bx.h - 1.0).abs() < 1e-9,
        "box spacing must divide 1 for lattice shifts"
    );
    let steps = steps as i64;
    let ev = e.as_slice();
    let mut violations = 0usize;
    for k0 in -lattice_bound..=lattice_bound {
        for k1 in -lattice_bound..=lattice_bound {
            if k0 == 0 && k1 == 0 {
                continue;
            }
            if k0 as f64 * ev[0] + k1 as f64 * ev[1] < 0.0 {
                continue;
            }
            let di = k0 * steps;
            let dj = k1 * steps;
            for i in 0..u.grid.n[0] as i64 {
                let ii = i + di;
                if ii < 0 || ii >= u.grid.n[0] as i64 {
                    continue;
                }
                for j in 0..u.grid.n[1] as i64 {
                    let jj = j + dj;
                    if jj < 0 || jj >= u.grid.n[1] as i64 {
                        continue;
                    }
                    let here = u.values[i as usize * u.grid.n[1] + j as usize];
                    let there = u.values[ii as usize * u.grid.n[1] + jj as usize];
                    if there < here - tol {
                        violations += 1;
                    }
                }
            }
        }
    }
    violations
}
