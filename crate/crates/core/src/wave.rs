//! Minimization of the discrete cylinder Lagrangian: projected gradient
//! descent (Barzilai-Borwein trial steps, Armijo backtracking, clamp to
//! [-1,1], pinned rows at s = ±L), optional elliptic regularization
//! (delta_reg/2)·∫(∂_s U)², post-hoc s-translation so the x-average at
//! s = 0 vanishes, and solution diagnostics.

use crate::cylinder::{
    energy_with_medium, residual_with_medium, sample_medium, CylinderField, CylinderGrid,
    Direction, GridMedium,
};
use crate::media::Medium;
use crate::{Error, Result};

/// Solver options.
#[derive(Debug, Clone)]
pub struct WaveOpts {
    /// Interior projected-residual sup-norm target.
    pub tol: f64,
    pub max_iter: usize,
    /// Minimal distance of e to the lamination sphere S^{k-1}×{0}.
    pub transversality_floor: f64,
}

impl Default for WaveOpts {
    fn default() -> Self {
        WaveOpts {
            tol: 1e-8,
            max_iter: 400_000,
            transversality_floor: 0.02,
        }
    }
}

/// Converged minimizer with diagnostics.
#[derive(Debug, Clone)]
pub struct WaveSolution {
    pub u: CylinderField,
    pub e: Direction,
    pub energy: f64,
    /// Applied s-translation (normalization).
    pub shift: f64,
    pub iterations: usize,
    pub residual_norm: f64,
    /// 0 for the unregularized problem.
    pub delta_reg: f64,
}

/// Shared per-solve context: sampled medium plus scratch buffers.
pub(crate) struct SolveCtx {
    pub grid: CylinderGrid,
    pub gm: GridMedium,
    pub pot: crate::media::Potential,
    pub e: Vec<f64>,
    pub delta_reg: f64,
    scratch: Vec<f64>,
}

impl SolveCtx {
    pub fn new(e: &Direction, m: &Medium, grid: &CylinderGrid, delta_reg: f64) -> Self {
        SolveCtx {
            grid: grid.clone(),
            gm: sample_medium(grid, &m.a),
            pot: m.w,
            e: e.as_slice().to_vec(),
            delta_reg,
            scratch: Vec::new(),
        }
    }

    pub fn energy(&mut self, u: &[f64]) -> f64 {
        energy_with_medium(
            &self.grid,
            &self.gm,
            &self.pot,
            &self.e,
            u,
            self.delta_reg,
            &mut self.scratch,
        )
    }

    /// Gradient of the discrete energy / cell measure, zeroed on the pinned
    /// boundary rows.
    pub fn grad(&mut self, u: &[f64], out: &mut [f64]) {
        residual_with_medium(
            &self.grid,
            &self.gm,
            &self.pot,
            &self.e,
            u,
            self.delta_reg,
            &mut self.scratch,
            out,
        );
        let nxt = self.grid.nxt();
        out[..nxt].fill(0.0);
        out[(self.grid.n_s - 1) * nxt..].fill(0.0);
    }

    /// Power-iteration estimate of the Lipschitz constant of the gradient.
    pub fn lipschitz(&mut self) -> f64 {
        let n = self.grid.nodes();
        let nxt = self.grid.nxt();
        // deterministic pseudo-random start vector
        let mut v: Vec<f64> = (0..n)
            .map(|i| (i as f64 * 0.7548776662466927).fract() - 0.5)
            .collect();
        v[..nxt].fill(0.0);
        v[n - nxt..].fill(0.0);
        let mut av = vec![0.0; n];
        let mut ray = 0.0;
        for _ in 0..40 {
            self.quadratic_apply(&v, &mut av);
            let nn: f64 = av.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nn == 0.0 {
                break;
            }
            ray = v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>()
                / v.iter().map(|x| x * x).sum::<f64>();
            for (vi, ai) in v.iter_mut().zip(&av) {
                *vi = ai / nn;
            }
            v[..nxt].fill(0.0);
            v[n - nxt..].fill(0.0);
        }
        ray.abs() * 1.1 + self.pot.d2_max()
    }

    /// The quadratic part D_e*(w·a D_e ·) (+ regularization), interior only.
    pub fn quadratic_apply(&mut self, phi: &[f64], out: &mut [f64]) {
        let grid = &self.grid;
        let d = self.gm.d;
        let nxt = grid.nxt();
        let hs = grid.h_s();
        self.scratch.resize(phi.len() * d, 0.0);
        crate::cylinder::d_e_apply(grid, &self.e, phi, &mut self.scratch);
        for i in 0..grid.n_s {
            let w = grid.w_s(i);
            for jx in 0..nxt {
                let n = i * nxt + jx;
                let am = &self.gm.a[jx * d * d..(jx + 1) * d * d];
                let g: [f64; 3] = {
                    let mut tmp = [0.0; 3];
                    tmp[..d].copy_from_slice(&self.scratch[n * d..(n + 1) * d]);
                    tmp
                };
                for c in 0..d {
                    let mut acc = 0.0;
                    for b in 0..d {
                        acc += am[c * d + b] * g[b];
                    }
                    self.scratch[n * d + c] = w * acc;
                }
            }
        }
        crate::cylinder::d_e_adjoint(grid, &self.e, &self.scratch, out);
        if self.delta_reg > 0.0 {
            for i in 0..grid.n_s {
                let w = grid.w_s(i) * self.delta_reg;
                for jx in 0..nxt {
                    let n = i * nxt + jx;
                    if i + 1 < grid.n_s {
                        let ds = w * (phi[n + nxt] - phi[n]) / hs;
                        out[n + nxt] += ds / hs;
                        out[n] -= ds / hs;
                    } else {
                        let ds = w * (phi[n] - phi[n - nxt]) / hs;
                        out[n] += ds / hs;
                        out[n - nxt] -= ds / hs;
                    }
                }
            }
        }
        out[..nxt].fill(0.0);
        out[(grid.n_s - 1) * nxt..].fill(0.0);
    }
}

/// Sup-norm of the projected (KKT) residual over interior nodes: at the
/// active clamp only the feasible part of the gradient counts.
fn projected_residual_norm(grid: &CylinderGrid, u: &[f64], g: &[f64]) -> f64 {
    let nxt = grid.nxt();
    let mut sup = 0.0f64;
    for n in nxt..(grid.n_s - 1) * nxt {
        let r = if u[n] >= 1.0 - 1e-14 {
            g[n].max(0.0)
        } else if u[n] <= -1.0 + 1e-14 {
            g[n].min(0.0)
        } else {
            g[n]
        };
        sup = sup.max(r.abs());
    }
    sup
}

/// Projected descent from `u` in place. Returns (iterations, residual).
fn descend(ctx: &mut SolveCtx, u: &mut Vec<f64>, tol: f64, max_iter: usize) -> (usize, f64) {
    let n = u.len();
    let t0 = 1.0 / ctx.lipschitz();
    let mut g = vec![0.0; n];
    let mut g_prev = vec![0.0; n];
    let mut u_prev = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut energy = ctx.energy(u);
    ctx.grad(u, &mut g);
    let mut res = projected_residual_norm(&ctx.grid, u, &g);
    let mut have_prev = false;
    let mut iter = 0usize;
    // non-monotone (GLL) Armijo reference: max over a sliding energy window,
    // which preserves the Barzilai-Borwein step's efficiency
    let mut window = std::collections::VecDeque::with_capacity(10);
    window.push_back(energy);
    while res > tol && iter < max_iter {
        let t_bb = if have_prev {
            let mut sy = 0.0;
            let mut ss = 0.0;
            for i in 0..n {
                let du = u[i] - u_prev[i];
                let dg = g[i] - g_prev[i];
                sy += du * dg;
                ss += du * du;
            }
            if sy > 0.0 && ss > 0.0 {
                (ss / sy).clamp(0.05 * t0, 1e8 * t0)
            } else {
                t0
            }
        } else {
            t0
        };
        u_prev.copy_from_slice(u);
        g_prev.copy_from_slice(&g);
        let e_ref = window.iter().cloned().fold(f64::MIN, f64::max);
        let noise = 1e-14 * (energy.abs() + 1.0);
        let mut t = t_bb;
        let mut accepted = false;
        for bt in 0..40 {
            if bt == 39 {
                t = t0; // guaranteed-descent fallback step
            }
            let mut decr_pred = 0.0;
            for i in 0..n {
                let v = (u[i] - t * g[i]).clamp(-1.0, 1.0);
                trial[i] = v;
                let du = v - u[i];
                decr_pred += du * du;
            }
            decr_pred /= t;
            if decr_pred == 0.0 {
                // stationary within the constraint set
                accepted = true;
                break;
            }
            let e_new = ctx.energy(&trial);
            if e_new <= e_ref - 1e-4 * decr_pred * ctx.grid.measure() + noise {
                std::mem::swap(u, &mut trial);
                energy = e_new;
                accepted = true;
                break;
            }
            t *= 0.25;
        }
        if !accepted {
            break; // cannot make progress beyond rounding
        }
        if window.len() == 10 {
            window.pop_front();
        }
        window.push_back(energy);
        ctx.grad(u, &mut g);
        res = projected_residual_norm(&ctx.grid, u, &g);
        have_prev = true;
        iter += 1;
    }
    (iter, res)
}

/// Plain CG for ℒx = b deflated against `v`, used by the Newton polish.
/// Returns None when it fails to reach the relative tolerance.
#[allow(clippy::too_many_arguments)]
fn cg_deflated(
    ctx: &mut SolveCtx,
    w2: &[f64],
    b_in: &[f64],
    v: &[f64],
    tol_rel: f64,
    max_iter: usize,
    nxt: usize,
    n: usize,
) -> Option<Vec<f64>> {
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let deflate = |x: &mut [f64]| {
        if vv > 0.0 {
            let c = x.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / vv;
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi -= c * vi;
            }
        }
    };
    let mut r = b_in.to_vec();
    deflate(&mut r);
    let b_norm2: f64 = r.iter().map(|x| x * x).sum();
    if b_norm2 == 0.0 {
        return Some(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = b_norm2;
    for it in 0..max_iter {
        if rr <= tol_rel * tol_rel * b_norm2 {
            return Some(x);
        }
        ctx.quadratic_apply(&p, &mut ap);
        for node in nxt..n - nxt {
            ap[node] += w2[node] * p[node];
        }
        ap[..nxt].fill(0.0);
        ap[n - nxt..].fill(0.0);
        deflate(&mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return None;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if it % 50 == 49 {
            deflate(&mut r);
        }
        let rr_new: f64 = r.iter().map(|y| y * y).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr <= tol_rel * tol_rel * b_norm2 {
        Some(x)
    } else {
        None
    }
}

/// Residual polish once projected descent is close: alternates (a) a damped
/// Newton step on the Euler-Lagrange system restricted to the complement of
/// the soft translation mode (deflated CG) with (b) a rank-one step along
/// the soft mode itself. The soft direction is the centered ∂_s u refined
/// by inverse iteration, because the raw centered derivative has one-sided
/// closure kinks next to the pinned rows and ℒ applied to it spikes there.
/// The soft step is accepted on decrease of the soft gradient component
/// (the full residual may rise temporarily; the next ⊥ step removes the
/// second-order pollution). Returns the final projected residual.
fn newton_polish(ctx: &mut SolveCtx, u: &mut Vec<f64>, tol: f64) -> f64 {
    let n = u.len();
    let nxt = ctx.grid.nxt();
    let grid = ctx.grid.clone();
    let debug = std::env::var("PULSEWAVE_DEBUG").is_ok();
    let mut g = vec![0.0; n];
    ctx.grad(u, &mut g);
    let mut res = projected_residual_norm(&grid, u, &g);
    let mut best_u = u.clone();
    let mut best_res = res;
    let mut w2 = vec![0.0; n];
    let mut stall = 0usize;
    for outer in 0..40 {
        if res <= tol {
            break;
        }
        // diagonal potential curvature with trapezoid weights
        for i in 0..grid.n_s {
            let w = grid.w_s(i);
            for jx in 0..nxt {
                let node = i * nxt + jx;
                w2[node] = w * ctx.pot.d2(u[node]);
            }
        }
        // refined soft mode (two inverse-iteration passes)
        let mut v = crate::effective::kernel_vector(&grid, u);
        for _pass in 0..2 {
            let vv: f64 = v.iter().map(|x| x * x).sum();
            if vv == 0.0 {
                break;
            }
            let mut z = vec![0.0; n];
            ctx.quadratic_apply(&v, &mut z);
            for node in nxt..n - nxt {
                z[node] += w2[node] * v[node];
            }
            z[..nxt].fill(0.0);
            z[n - nxt..].fill(0.0);
            let c = z.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / vv;
            for (zi, vi) in z.iter_mut().zip(&v) {
                *zi -= c * vi;
            }
            if let Some(w) = cg_deflated(ctx, &w2, &z, &v, 1e-8, 20_000, nxt, n) {
                for (vi, wi) in v.iter_mut().zip(&w) {
                    *vi -= wi;
                }
                v[..nxt].fill(0.0);
                v[n - nxt..].fill(0.0);
            } else {
                break;
            }
        }
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            break;
        }
        let v_max = v.iter().map(|y| y.abs()).fold(0.0f64, f64::max);
        // (a) ⊥ Newton step, damped on the projected residual
        if let Some(x) = cg_deflated(ctx, &w2, &g, &v, 1e-9, 30_000, nxt, n) {
            let mut alpha = 1.0;
            for _ in 0..8 {
                let mut trial = u.clone();
                for node in nxt..n - nxt {
                    trial[node] = (trial[node] - alpha * x[node]).clamp(-1.0, 1.0);
                }
                let mut gt = vec![0.0; n];
                ctx.grad(&trial, &mut gt);
                let res_t = projected_residual_norm(&grid, &trial, &gt);
                if res_t < res {
                    *u = trial;
                    g = gt;
                    res = res_t;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if debug {
            eprintln!("polish[{outer}] after ⊥ step: res {res:.3e}");
        }
        if res < best_res {
            best_res = res;
            best_u.copy_from_slice(u);
            stall = 0;
        }
        if res <= tol {
            break;
        }
        // (b) soft-mode step, accepted on decrease of the soft component
        let mut lv = vec![0.0; n];
        ctx.quadratic_apply(&v, &mut lv);
        for node in nxt..n - nxt {
            lv[node] += w2[node] * v[node];
        }
        lv[..nxt].fill(0.0);
        lv[n - nxt..].fill(0.0);
        let mu = lv.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / vv;
        let gv = g.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / vv;
        if mu > 1e-14 && gv.abs() * v_max > 0.2 * tol {
            // Damped step along v; sub-grid translation is strongly nonlinear
            // (the discrete landscape over translations oscillates on the
            // scale of h), so halve the step until the soft component drops.
            let res_cap = (res * 100.0).max(best_res);
            let mut beta = 1.0;
            for _ in 0..10 {
                let mut sigma = beta * gv / mu;
                if sigma.abs() * v_max > 0.5 {
                    sigma = 0.5 / v_max * sigma.signum();
                }
                let mut trial = u.clone();
                for node in nxt..n - nxt {
                    trial[node] = (trial[node] - sigma * v[node]).clamp(-1.0, 1.0);
                }
                let mut gt = vec![0.0; n];
                ctx.grad(&trial, &mut gt);
                let gv_t = gt.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / vv;
                let res_t = projected_residual_norm(&grid, &trial, &gt);
                if gv_t.abs() < 0.9 * gv.abs() && res_t <= res_cap {
                    if debug {
                        eprintln!(
                            "polish[{outer}] soft step: mu {mu:.3e} gv {gv:.3e} -> {gv_t:.3e} (beta {beta}, res {res_t:.3e})"
                        );
                    }
                    *u = trial;
                    g = gt;
                    res = res_t;
                    break;
                }
                beta *= 0.5;
            }
        }
        if res < best_res {
            best_res = res;
            best_u.copy_from_slice(u);
            stall = 0;
        } else {
            stall += 1;
            if stall > 6 {
                break;
            }
        }
    }
    if best_res < res {
        u.copy_from_slice(&best_u);
        res = best_res;
    }
    res
}

/// x-average of row i.
fn row_avg(grid: &CylinderGrid, u: &[f64], i: usize) -> f64 {
    let nxt = grid.nxt();
    u[i * nxt..(i + 1) * nxt].iter().sum::<f64>() / nxt as f64
}

/// Translates the field by s0 (u_new(s) = u(s + s0)) with linear
/// interpolation in s; rows shifted past the truncation fill with ±1.
fn translate_s(grid: &CylinderGrid, u: &[f64], s0: f64) -> Vec<f64> {
    let nxt = grid.nxt();
    let hs = grid.h_s();
    let mut out = vec![0.0; u.len()];
    for i in 0..grid.n_s {
        let t = i as f64 + s0 / hs;
        if t <= 0.0 {
            out[i * nxt..(i + 1) * nxt].fill(-1.0);
            continue;
        }
        if t >= (grid.n_s - 1) as f64 {
            out[i * nxt..(i + 1) * nxt].fill(1.0);
            continue;
        }
        let i0 = t.floor() as usize;
        let f = t - i0 as f64;
        for jx in 0..nxt {
            out[i * nxt + jx] =
                (1.0 - f) * u[i0 * nxt + jx] + f * u[(i0 + 1) * nxt + jx];
        }
    }
    // re-pin and clamp
    for v in out.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    for jx in 0..nxt {
        out[jx] = -1.0;
        out[(grid.n_s - 1) * nxt + jx] = 1.0;
    }
    out
}

/// Root of the (monotone) magnetization profile by linear interpolation.
fn magnetization_root(grid: &CylinderGrid, u: &[f64]) -> Result<f64> {
    let mut prev = row_avg(grid, u, 0);
    for i in 1..grid.n_s {
        let cur = row_avg(grid, u, i);
        if prev <= 0.0 && cur > 0.0 {
            let f = -prev / (cur - prev);
            return Ok(grid.s_coord(i - 1) + f * grid.h_s());
        }
        prev = cur;
    }
    Err(Error::Numerical(
        "magnetization profile has no zero crossing".into(),
    ))
}

/// Minimizes from a caller-supplied admissible initial field.
pub fn minimize_from(
    init: &CylinderField,
    e: &Direction,
    m: &Medium,
    grid: &CylinderGrid,
    delta_reg: f64,
    opts: &WaveOpts,
) -> Result<WaveSolution> {
    if e.transversality(m.a.effective_k()) < opts.transversality_floor {
        return Err(Error::Domain(format!(
            "direction {:?} too close to the lamination sphere (floor {})",
            e.as_slice(),
            opts.transversality_floor
        )));
    }
    let mut ctx = SolveCtx::new(e, m, grid, delta_reg);
    let mut u = init.values.clone();
    let mut total_iter = 0usize;
    // coarse first-order descent, then Newton polish to the tight tolerance
    let coarse_tol = opts.tol.max(1e-3);
    let (it, mut res) = descend(&mut ctx, &mut u, coarse_tol, opts.max_iter);
    total_iter += it;
    if res > opts.tol {
        res = newton_polish(&mut ctx, &mut u, opts.tol);
    }
    if res > opts.tol {
        let (it2, res2) = descend(&mut ctx, &mut u, opts.tol, opts.max_iter);
        total_iter += it2;
        res = res2;
        if res > opts.tol {
            res = newton_polish(&mut ctx, &mut u, opts.tol);
        }
    }
    if res > opts.tol {
        return Err(Error::IterationLimit {
            iterations: total_iter,
            residual: res,
            last: Box::new(CylinderField {
                grid: grid.clone(),
                values: u,
            }),
        });
    }
    // Normalize: translate so the x-average at s = 0 vanishes, then polish
    // back to tolerance (the energy is translation invariant up to tail
    // terms, so a few extra descent steps suffice).
    let mut shift = 0.0;
    for _pass in 0..10 {
        let i0 = (grid.n_s - 1) / 2;
        debug_assert!(grid.s_coord(i0).abs() < 1e-9);
        let psi0 = row_avg(grid, &u, i0);
        if psi0.abs() <= 1e-9 {
            break;
        }
        let s_root = magnetization_root(grid, &u)?;
        u = translate_s(grid, &u, s_root);
        shift += s_root;
        let (it2, res2) = descend(&mut ctx, &mut u, coarse_tol, opts.max_iter / 4);
        total_iter += it2;
        res = res2;
        if res > opts.tol {
            res = newton_polish(&mut ctx, &mut u, opts.tol);
        }
    }
    if res > opts.tol {
        return Err(Error::IterationLimit {
            iterations: total_iter,
            residual: res,
            last: Box::new(CylinderField {
                grid: grid.clone(),
                values: u,
            }),
        });
    }
    let energy = ctx.energy(&u);
    if !energy.is_finite() {
        return Err(Error::Numerical("non-finite energy after solve".into()));
    }
    Ok(WaveSolution {
        u: CylinderField {
            grid: grid.clone(),
            values: u,
        },
        e: e.clone(),
        energy,
        shift,
        iterations: total_iter,
        residual_norm: res,
        delta_reg,
    })
}

/// Minimizes the cylinder Lagrangian from the tanh initial profile.
pub fn minimize(e: &Direction, m: &Medium, grid: &CylinderGrid, opts: &WaveOpts) -> Result<WaveSolution> {
    let init = CylinderField::tanh_profile(grid);
    minimize_from(&init, e, m, grid, 0.0, opts)
}

/// Minimizes the regularized Lagrangian T + (delta_reg/2)∫(∂_s U)².
pub fn minimize_regularized(
    e: &Direction,
    m: &Medium,
    grid: &CylinderGrid,
    delta_reg: f64,
    opts: &WaveOpts,
) -> Result<WaveSolution> {
    if delta_reg <= 0.0 {
        return Err(Error::Validation("delta_reg must be positive".into()));
    }
    let init = CylinderField::tanh_profile(grid);
    minimize_from(&init, e, m, grid, delta_reg, opts)
}

/// Minimum over nodes of the forward s-slope (≥ -tol for a monotone wave).
pub fn check_monotone(sol: &WaveSolution) -> f64 {
    let grid = &sol.u.grid;
    let nxt = grid.nxt();
    let hs = grid.h_s();
    let mut min = f64::INFINITY;
    for i in 0..grid.n_s - 1 {
        for jx in 0..nxt {
            let n = i * nxt + jx;
            min = min.min((sol.u.values[n + nxt] - sol.u.values[n]) / hs);
        }
    }
    min
}

/// Quadrature of ∂_s U over the cylinder (expected 2 up to truncation).
pub fn mass_identity(sol: &WaveSolution) -> f64 {
    let grid = &sol.u.grid;
    let nxt = grid.nxt();
    let hs = grid.h_s();
    let mut total = 0.0;
    for i in 0..grid.n_s {
        let w = grid.w_s(i);
        for jx in 0..nxt {
            let n = i * nxt + jx;
            let ds = if i + 1 < grid.n_s {
                (sol.u.values[n + nxt] - sol.u.values[n]) / hs
            } else {
                (sol.u.values[n] - sol.u.values[n - nxt]) / hs
            };
            total += w * ds;
        }
    }
    total * grid.measure()
}

/// Least-squares exponential tail rates of 1 ∓ ψ_U on the outer quarters;
/// +∞ when the profile touches ±1 exactly.
pub fn decay_rate(sol: &WaveSolution) -> (f64, f64) {
    let grid = &sol.u.grid;
    let psi = crate::cylinder::magnetization_profile(&sol.u);
    let fit = |pairs: &[(f64, f64)]| -> f64 {
        if pairs.len() < 3 {
            return f64::INFINITY;
        }
        let n = pairs.len() as f64;
        let sx: f64 = pairs.iter().map(|p| p.0).sum();
        let sy: f64 = pairs.iter().map(|p| p.1).sum();
        let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    };
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for i in 0..grid.n_s {
        let s = grid.s_coord(i);
        if s >= grid.l * 0.5 && s <= grid.l * 0.95 {
            let tail = 1.0 - psi[i];
            if tail > 1e-13 {
                plus.push((s, tail.ln()));
            }
        }
        if s <= -grid.l * 0.5 && s >= -grid.l * 0.95 {
            let tail = 1.0 + psi[i];
            if tail > 1e-13 {
                minus.push((s, tail.ln()));
            }
        }
    }
    let nu_plus = -fit(&plus);
    let nu_minus = fit(&minus);
    (nu_plus, nu_minus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cylinder::{magnetization_profile, CylinderGrid};
    use crate::SIGMA0;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(l: f64, n_s: usize, n_x: usize) -> CylinderGrid {
        CylinderGrid::new(l, n_s, vec![n_x]).unwrap()
    }

    #[test]
    fn homogeneous_wave_energy() {
        let g = grid(10.0, 1001, 16);
        let m = Medium::homogeneous(1.0, 2);
        let e = Direction::new(vec![1.0, 0.0]).unwrap();
        let sol = minimize(&e, &m, &g, &WaveOpts::default()).unwrap();
        assert!((sol.energy - SIGMA0).abs() < 2e-3 * SIGMA0, "{}", sol.energy);
        assert!(sol.residual_norm <= 1e-8);
        // row-constant in x
        let nxt = g.nxt();
        for i in 0..g.n_s {
            let row = &sol.u.values[i * nxt..(i + 1) * nxt];
            let avg = row.iter().sum::<f64>() / nxt as f64;
            for v in row {
                assert!((v - avg).abs() < 1e-7);
            }
        }
        // normalization
        let psi = magnetization_profile(&sol.u);
        assert!(psi[(g.n_s - 1) / 2].abs() <= 1e-8);
    }

    #[test]
    fn scaled_medium_energy() {
        let g = grid(10.0, 1001, 8);
        let m = Medium::homogeneous(4.0, 2);
        let e = Direction::from_theta(0.5);
        let sol = minimize(&e, &m, &g, &WaveOpts::default()).unwrap();
        assert!(
            (sol.energy - 2.0 * SIGMA0).abs() < 4e-3,
            "energy {}",
            sol.energy
        );
    }

    #[test]
    fn laminar_decoupled_direction() {
        // e = e2 with a2 ≡ 1: the wave ignores the laminations.
        let g = grid(10.0, 1001, 32);
        let m = Medium::laminar7(0.01, 0.1, 32).unwrap();
        let e = Direction::new(vec![0.0, 1.0]).unwrap();
        let mut opts = WaveOpts::default();
        opts.tol = 1e-6;
        let sol = minimize(&e, &m, &g, &opts).unwrap();
        assert!((sol.energy - SIGMA0).abs() < 2e-3, "energy {}", sol.energy);
    }

    #[test]
    fn regularized_energies_decrease_to_unregularized() {
        let g = grid(10.0, 501, 8);
        let m = Medium::homogeneous(1.0, 2);
        let e = Direction::new(vec![1.0, 0.0]).unwrap();
        let opts = WaveOpts::default();
        let base = minimize(&e, &m, &g, &opts).unwrap();
        let mut prev_energy = f64::INFINITY;
        let mut prev_v2 = 0.0;
        for &dreg in &[0.1, 0.01, 0.001] {
            let sol = minimize_regularized(&e, &m, &g, dreg, &opts).unwrap();
            // regularized total energy decreases toward the base value
            assert!(sol.energy <= prev_energy + 1e-12);
            prev_energy = sol.energy;
            // the penalized quantity ∫(∂_s U^δ)² grows as the penalty fades
            let v2 = crate::effective::mobility(&sol);
            assert!(v2 >= prev_v2 - 1e-9, "v2 {v2} prev {prev_v2}");
            prev_v2 = v2;
            // x-independence is preserved by the regularization
            let nxt = g.nxt();
            for i in (0..g.n_s).step_by(50) {
                let row = &sol.u.values[i * nxt..(i + 1) * nxt];
                for v in row {
                    assert!((v - row[0]).abs() < 1e-6);
                }
            }
        }
        assert!((prev_energy - base.energy).abs() < 1e-3);
    }

    #[test]
    fn monotone_and_mass() {
        let g = grid(10.0, 1001, 8);
        let m = Medium::homogeneous(1.0, 2);
        let e = Direction::from_theta(0.3);
        let sol = minimize(&e, &m, &g, &WaveOpts::default()).unwrap();
        assert!(check_monotone(&sol) >= -1e-10);
        assert!((mass_identity(&sol) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn oscillatory_field_fails_monotone() {
        let g = grid(5.0, 101, 4);
        let mut u = CylinderField::from_fn(&g, |s, _| (s / 2.0).tanh() + 0.2 * (3.0 * s).sin());
        u.pin_boundaries();
        let sol = WaveSolution {
            u,
            e: Direction::new(vec![1.0, 0.0]).unwrap(),
            energy: 0.0,
            shift: 0.0,
            iterations: 0,
            residual_norm: 0.0,
            delta_reg: 0.0,
        };
        assert!(check_monotone(&sol) < 0.0);
    }

    #[test]
    fn decay_rates_homogeneous() {
        let g = grid(10.0, 1001, 8);
        let m = Medium::homogeneous(1.0, 2);
        let e = Direction::new(vec![1.0, 0.0]).unwrap();
        let sol = minimize(&e, &m, &g, &WaveOpts::default()).unwrap();
        let (np, nm) = decay_rate(&sol);
        let nu = f64::sqrt(2.0);
        assert!((np - nu).abs() < 0.05 * nu, "nu_plus {np}");
        assert!((nm - nu).abs() < 0.05 * nu, "nu_minus {nm}");
    }

    #[test]
    fn decay_rates_scaled() {
        let g = grid(14.0, 1401, 4);
        let m = Medium::homogeneous(4.0, 2);
        let e = Direction::new(vec![1.0, 0.0]).unwrap();
        let sol = minimize(&e, &m, &g, &WaveOpts::default()).unwrap();
        let (np, nm) = decay_rate(&sol);
        let nu = f64::sqrt(2.0) / 2.0;
        assert!((np - nu).abs() < 0.05 * nu, "nu_plus {np}");
        assert!((nm - nu).abs() < 0.05 * nu, "nu_minus {nm}");
    }

    #[test]
    fn laminar_transversal_solution() {
        let g = grid(8.0, 401, 32);
        let m = Medium::laminar7(0.25, 0.1, 32).unwrap();
        let theta = std::f64::consts::PI / 4.0;
        let e = Direction::from_theta(theta);
        let mut opts = WaveOpts::default();
        opts.tol = 1e-6;
        let sol = minimize(&e, &m, &g, &opts).unwrap();
        assert!(check_monotone(&sol) >= -1e-6);
        assert!((mass_identity(&sol) - 2.0).abs() < 1e-4);
        let (np, nm) = decay_rate(&sol);
        assert!(np > 0.0 && nm > 0.0);
        // clamp inactive in the interior
        let nxt = g.nxt();
        for n in nxt..(g.n_s - 1) * nxt {
            assert!(sol.u.values[n].abs() < 1.0);
        }
        // Hölder bound on the magnetization with grid slack
        let psi = magnetization_profile(&sol.u);
        let c = f64::sqrt(2.0) / m.a.lambda.sqrt() * sol.energy.sqrt();
        for i in (0..g.n_s).step_by(13) {
            for j in (i + 1..g.n_s).step_by(29) {
                let ds = (g.s_coord(j) - g.s_coord(i)).abs();
                assert!(
                    (psi[j] - psi[i]).abs() <= c * ds.sqrt() + g.h_s(),
                    "Hölder violated at ({i},{j})"
                );
            }
        }
        // TV bound over a slab
        let tv = crate::cylinder::tv_diagnostic(&sol.u, -4.0, 4.0);
        let bound = f64::sqrt(3.0)
            * (2.0 + f64::sqrt(2.0) / m.a.lambda.sqrt() * f64::sqrt(8.0) * sol.energy.sqrt());
        assert!(tv <= bound + 0.1, "tv {tv} bound {bound}");
    }

    #[test]
    fn random_inits_agree() {
        let g = grid(8.0, 321, 16);
        let m = Medium::laminar7(0.25, 0.1, 16).unwrap();
        let e = Direction::from_theta(1.0);
        let mut opts = WaveOpts::default();
        opts.tol = 1e-7;
        let mut sols = Vec::new();
        for seed in [11u64, 99u64] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut init = CylinderField::tanh_profile(&g);
            for v in init.values.iter_mut() {
                *v = (*v + rng.gen_range(-0.2..0.2)).clamp(-1.0, 1.0);
            }
            init.pin_boundaries();
            sols.push(minimize_from(&init, &e, &m, &g, 0.0, &opts).unwrap());
        }
        assert!((sols[0].energy - sols[1].energy).abs() < 1e-6);
        let max_diff = sols[0]
            .u
            .values
            .iter()
            .zip(&sols[1].u.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-4, "fields differ by {max_diff}");
    }

    #[test]
    fn rejects_nontransversal() {
        let g = grid(5.0, 101, 8);
        let m = Medium::laminar7(0.1, 0.1, 8).unwrap();
        let e = Direction::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            minimize(&e, &m, &g, &WaveOpts::default()),
            Err(Error::Domain(_))
        ));
    }
}
