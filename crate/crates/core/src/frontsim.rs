//! Sharp-interface validation: ε-scaled Allen-Cahn evolution in a
//! heterogeneous medium on a horizontally periodic strip, zero-level front
//! extraction as a graph, and the homogenized graph flow
//! h_t = tr(G(Dh) D²h) driven by an effective-coefficient table.

use rayon::prelude::*;

use crate::effective::EffectiveTable;
use crate::error::Error;
use crate::media::Medium;
use crate::Result;

/// Phase field on [0,1) × [y0, y0 + (ny-1)·hy], periodic in x, Dirichlet
/// -1 / +1 at the bottom / top rows ({u > 0} above the front). Node (i, j)
/// at index j·nx + i, y_j = y0 + j·hy.
#[derive(Debug, Clone)]
pub struct PhaseFieldState {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub y0: f64,
    pub u: Vec<f64>,
    pub epsilon: f64,
    pub t: f64,
    /// Dirichlet data at the bottom / top rows.
    pub bc: (f64, f64),
}

impl PhaseFieldState {
    /// tanh((y - U(x))/(√2 ε)) profile around the initial graph.
    pub fn from_graph(
        nx: usize,
        ny: usize,
        y0: f64,
        hy: f64,
        epsilon: f64,
        init: &dyn Fn(f64) -> f64,
    ) -> Self {
        let hx = 1.0 / nx as f64;
        let mut u = vec![0.0; nx * ny];
        for j in 0..ny {
            let y = y0 + j as f64 * hy;
            for i in 0..nx {
                let x = i as f64 * hx;
                let v = ((y - init(x)) / (std::f64::consts::SQRT_2 * epsilon)).tanh();
                u[j * nx + i] = v.clamp(-1.0, 1.0);
            }
        }
        for i in 0..nx {
            u[i] = -1.0;
            u[(ny - 1) * nx + i] = 1.0;
        }
        PhaseFieldState {
            nx,
            ny,
            hx,
            hy,
            y0,
            u,
            epsilon,
            t: 0.0,
            bc: (-1.0, 1.0),
        }
    }

    pub fn y_coord(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.hy
    }
}

/// Largest stable step for the explicit reaction: ε²/(2·max W″).
pub fn dt_max(m: &Medium, epsilon: f64) -> f64 {
    epsilon * epsilon / (2.0 * m.w.d2_max())
}

/// Edge coefficients of the 5-point flux scheme for div(a(x/ε) D·):
/// `ax[j·nx+i]` = a₁₁ at ((i+½)hx, y_j)/ε, `ay[j·nx+i]` = a₂₂ at
/// (i·hx, y_j+½hy)/ε. Off-diagonal entries must vanish (laminar media).
fn edge_coefficients(state: &PhaseFieldState, m: &Medium) -> Result<(Vec<f64>, Vec<f64>)> {
    let (nx, ny) = (state.nx, state.ny);
    let eps = state.epsilon;
    let mut ax = vec![0.0; nx * ny];
    let mut ay = vec![0.0; nx * ny];
    let d = m.a.d;
    if d != 2 {
        return Err(Error::Unsupported(
            "phase-field evolution implemented for d = 2".into(),
        ));
    }
    let mut block = vec![0.0; d * d];
    let sample = |xp: &[f64], block: &mut Vec<f64>| -> Result<(f64, f64)> {
        // the field is periodic in its k lamination coordinates only
        let xk: Vec<f64> = xp[..m.a.k].to_vec();
        m.a.a_at(&xk, block);
        if block[1].abs() > 1e-12 || block[2].abs() > 1e-12 {
            return Err(Error::Unsupported(
                "off-diagonal coefficients are not supported by the 5-point scheme".into(),
            ));
        }
        Ok((block[0], block[3]))
    };
    for j in 0..ny {
        let y = state.y_coord(j);
        for i in 0..nx {
            let x = i as f64 * state.hx;
            let (a11, _) = sample(&[(x + 0.5 * state.hx) / eps, y / eps], &mut block)?;
            ax[j * nx + i] = a11;
            let (_, a22) = sample(&[x / eps, (y + 0.5 * state.hy) / eps], &mut block)?;
            ay[j * nx + i] = a22;
        }
    }
    Ok((ax, ay))
}

/// −div(a D u) on interior rows, Dirichlet rows untouched (set to zero).
fn apply_diffusion(state: &PhaseFieldState, ax: &[f64], ay: &[f64], u: &[f64], out: &mut [f64]) {
    let (nx, ny) = (state.nx, state.ny);
    let ihx2 = 1.0 / (state.hx * state.hx);
    let ihy2 = 1.0 / (state.hy * state.hy);
    out[..nx].fill(0.0);
    out[(ny - 1) * nx..].fill(0.0);
    for j in 1..ny - 1 {
        for i in 0..nx {
            let n = j * nx + i;
            let im = j * nx + (i + nx - 1) % nx;
            let ip = j * nx + (i + 1) % nx;
            let axm = ax[j * nx + (i + nx - 1) % nx];
            let axp = ax[n];
            let aym = ay[(j - 1) * nx + i];
            let ayp = ay[n];
            out[n] = ihx2 * (axm * (u[n] - u[im]) + axp * (u[n] - u[ip]))
                + ihy2 * (aym * (u[n] - u[n - nx]) + ayp * (u[n] - u[n + nx]));
        }
    }
}

/// One semi-implicit step of u_t = div(a(x/ε)Du) − ε⁻²W′(u): reaction
/// explicit, diffusion implicit (CG on the SPD system I + dt·A).
pub fn step_allen_cahn(state: &PhaseFieldState, m: &Medium, dt: f64) -> Result<PhaseFieldState> {
    let (ax, ay) = edge_coefficients(state, m)?;
    step_allen_cahn_with(state, m, &ax, &ay, dt)
}

/// Same as `step_allen_cahn` with precomputed edge coefficients.
pub fn step_allen_cahn_with(
    state: &PhaseFieldState,
    m: &Medium,
    ax: &[f64],
    ay: &[f64],
    dt: f64,
) -> Result<PhaseFieldState> {
    let dtm = dt_max(m, state.epsilon);
    if dt > dtm * (1.0 + 1e-12) {
        return Err(Error::Stability(format!(
            "dt = {dt:.3e} exceeds the reaction bound {dtm:.3e}"
        )));
    }
    let (nx, ny) = (state.nx, state.ny);
    let n = nx * ny;
    let ie2 = 1.0 / (state.epsilon * state.epsilon);
    // explicit reaction + Dirichlet data moved to the right-hand side
    let mut rhs = vec![0.0; n];
    for (i, r) in rhs.iter_mut().enumerate() {
        *r = state.u[i] - dt * ie2 * m.w.d1(state.u[i]);
    }
    for i in 0..nx {
        rhs[i] = state.bc.0;
        rhs[(ny - 1) * nx + i] = state.bc.1;
    }
    // CG for (I + dt A) v = rhs with Dirichlet rows held fixed
    let mut v = state.u.clone();
    let apply = |p: &[f64], out: &mut Vec<f64>| {
        apply_diffusion(state, ax, ay, p, out);
        for i in 0..n {
            out[i] = p[i] + dt * out[i];
        }
        out[..nx].copy_from_slice(&p[..nx]);
        out[(ny - 1) * nx..].copy_from_slice(&p[(ny - 1) * nx..]);
    };
    let mut apv = vec![0.0; n];
    apply(&v, &mut apv);
    let mut r: Vec<f64> = rhs.iter().zip(&apv).map(|(b, a)| b - a).collect();
    r[..nx].fill(0.0);
    r[(ny - 1) * nx..].fill(0.0);
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|x| x * x).sum();
    let b_norm2: f64 = rhs.iter().map(|x| x * x).sum::<f64>().max(1e-300);
    let tol2 = 1e-24 * b_norm2;
    let mut it = 0;
    while rr > tol2 {
        if it > 10_000 {
            return Err(Error::Solver {
                reason: format!("implicit diffusion CG stalled at {:.3e}", rr.sqrt()),
                history: vec![rr.sqrt()],
            });
        }
        apply(&p, &mut apv);
        let pap: f64 = p.iter().zip(&apv).map(|(a, b)| a * b).sum();
        let alpha = rr / pap;
        for i in 0..n {
            v[i] += alpha * p[i];
            r[i] -= alpha * apv[i];
        }
        let rr_new: f64 = r.iter().map(|x| x * x).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        it += 1;
    }
    for x in v.iter_mut() {
        *x = x.clamp(-1.0 - 1e-12, 1.0 + 1e-12);
    }
    for i in 0..nx {
        v[i] = state.bc.0;
        v[(ny - 1) * nx + i] = state.bc.1;
    }
    let mut out = state.clone();
    out.u = v;
    out.t += dt;
    Ok(out)
}

/// Discrete strip energy ∫ ε/2 ⟨aDu,Du⟩ + ε⁻¹ W(u) (edge-flux quadrature).
pub fn strip_energy(state: &PhaseFieldState, m: &Medium) -> Result<f64> {
    let (ax, ay) = edge_coefficients(state, m)?;
    let (nx, ny) = (state.nx, state.ny);
    let eps = state.epsilon;
    let cell = state.hx * state.hy;
    let mut total = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let n = j * nx + i;
            let ip = j * nx + (i + 1) % nx;
            let dux = (state.u[ip] - state.u[n]) / state.hx;
            total += 0.5 * eps * ax[n] * dux * dux * cell;
            if j + 1 < ny {
                let duy = (state.u[n + nx] - state.u[n]) / state.hy;
                total += 0.5 * eps * ay[n] * duy * duy * cell;
            }
            let w = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
            total += w * m.w.eval(state.u[n]) / eps * cell;
        }
    }
    Ok(total)
}

/// Graph front h(x'), periodic on [0,1) with n nodes.
#[derive(Debug, Clone)]
pub struct GraphState {
    pub h: Vec<f64>,
    pub t: f64,
}

/// Per column, the unique zero crossing of u along y by linear
/// interpolation. Multiple crossings or none are front-extraction errors.
pub fn extract_front(state: &PhaseFieldState) -> Result<GraphState> {
    let (nx, ny) = (state.nx, state.ny);
    let mut h = Vec::with_capacity(nx);
    for i in 0..nx {
        let mut crossing: Option<f64> = None;
        for j in 0..ny - 1 {
            let a = state.u[j * nx + i];
            let b = state.u[(j + 1) * nx + i];
            if (a < 0.0 && b >= 0.0) || (a >= 0.0 && b < 0.0) {
                if crossing.is_some() {
                    return Err(Error::FrontExtraction {
                        column: i,
                        reason: "multiple zero crossings".into(),
                    });
                }
                let frac = if b != a { -a / (b - a) } else { 0.5 };
                crossing = Some(state.y_coord(j) + frac * state.hy);
            }
        }
        match crossing {
            Some(y) => h.push(y),
            None => {
                return Err(Error::FrontExtraction {
                    column: i,
                    reason: "no zero crossing".into(),
                })
            }
        }
    }
    Ok(GraphState { h, t: state.t })
}

/// Angle-interpolated effective coefficients for the graph flow (d = 2).
#[derive(Debug, Clone)]
pub struct GtildeTable {
    /// Strictly increasing angles (radians) of the usable rows.
    thetas: Vec<f64>,
    mobility: Vec<f64>,
    /// Row-major 2×2 Hessians.
    hess: Vec<[f64; 4]>,
}

impl GtildeTable {
    pub fn new(table: &EffectiveTable) -> Result<Self> {
        if table.d != 2 {
            return Err(Error::Unsupported(
                "graph-flow coefficients implemented for d = 2".into(),
            ));
        }
        let mut rows: Vec<(f64, f64, [f64; 4])> = table
            .rows
            .iter()
            .filter(|r| !r.flags.starts_with("error"))
            .map(|r| {
                (
                    r.e[1].atan2(r.e[0]),
                    r.mobility,
                    [r.hess[0], r.hess[1], r.hess[2], r.hess[3]],
                )
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.len() < 2 {
            return Err(Error::Validation(
                "need at least two usable table rows".into(),
            ));
        }
        for w in rows.windows(2) {
            if w[1].0 - w[0].0 < 1e-12 {
                return Err(Error::Validation("duplicate table angles".into()));
            }
        }
        Ok(GtildeTable {
            thetas: rows.iter().map(|r| r.0).collect(),
            mobility: rows.iter().map(|r| r.1).collect(),
            hess: rows.iter().map(|r| r.2).collect(),
        })
    }

    /// M̃ and D²φ̃ at angle θ by piecewise-linear interpolation; errors
    /// outside the covered arc.
    fn coefficients(&self, theta: f64) -> Result<(f64, [f64; 4])> {
        let k = self.thetas.len();
        if theta < self.thetas[0] - 1e-12 || theta > self.thetas[k - 1] + 1e-12 {
            return Err(Error::Domain(format!(
                "angle {theta:.4} outside the covered arc [{:.4}, {:.4}]",
                self.thetas[0],
                self.thetas[k - 1]
            )));
        }
        let j = match self
            .thetas
            .binary_search_by(|t| t.total_cmp(&theta))
        {
            Ok(j) => j.min(k - 2),
            Err(j) => j.saturating_sub(1).min(k - 2),
        };
        let t0 = self.thetas[j];
        let t1 = self.thetas[j + 1];
        let w = ((theta - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let mob = (1.0 - w) * self.mobility[j] + w * self.mobility[j + 1];
        let mut hess = [0.0; 4];
        for c in 0..4 {
            hess[c] = (1.0 - w) * self.hess[j][c] + w * self.hess[j + 1][c];
        }
        Ok((mob, hess))
    }

    /// G(q) = M̃(q_g)⁻¹ (π D²φ̃(q_g) π*) with q_g = (-q, 1)/√(1+q²) and π
    /// the coordinate projection onto x': interpolated entrywise, then
    /// re-symmetrized and projected to annihilate q_g.
    pub fn g_tilde(&self, q: f64) -> Result<f64> {
        let s = 1.0 / (1.0 + q * q).sqrt();
        let qg = [-q * s, s];
        let theta = qg[1].atan2(qg[0]);
        let (mob, hess) = self.coefficients(theta)?;
        // symmetrize
        let mut h = hess;
        let off = 0.5 * (h[1] + h[2]);
        h[1] = off;
        h[2] = off;
        // project: (Id - q_g q_gᵀ) H (Id - q_g q_gᵀ)
        let mut hp = [0.0; 4];
        let p = [
            1.0 - qg[0] * qg[0],
            -qg[0] * qg[1],
            -qg[0] * qg[1],
            1.0 - qg[1] * qg[1],
        ];
        let mut tmp = [0.0; 4];
        for r in 0..2 {
            for c in 0..2 {
                tmp[r * 2 + c] = p[r * 2] * h[c] + p[r * 2 + 1] * h[2 + c];
            }
        }
        for r in 0..2 {
            for c in 0..2 {
                hp[r * 2 + c] = tmp[r * 2] * p[c] + tmp[r * 2 + 1] * p[2 + c];
            }
        }
        if mob <= 0.0 {
            return Err(Error::Numerical("non-positive mobility in table".into()));
        }
        // π picks the x' block (the (1,1) entry)
        Ok(hp[0] / mob)
    }

    /// Upper bound on G over the covered arc (CFL constant).
    pub fn lambda_max(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.thetas.len() {
            let bound = self.hess[j].iter().map(|x| x.abs()).fold(0.0f64, f64::max)
                * 2.0
                / self.mobility[j].max(1e-300);
            worst = worst.max(bound);
        }
        worst
    }
}

/// One explicit step of h_t = G(Dh)·D²h (d = 2, centered differences,
/// periodic). CFL: dt ≤ h_x²/(2Λ) with Λ from the table.
pub fn step_graph_flow(gs: &GraphState, table: &GtildeTable, dt: f64) -> Result<GraphState> {
    let n = gs.h.len();
    let hx = 1.0 / n as f64;
    let lam = table.lambda_max().max(1e-300);
    if dt > hx * hx / (2.0 * lam) * (1.0 + 1e-12) {
        return Err(Error::Stability(format!(
            "graph-flow dt = {dt:.3e} violates CFL {:.3e}",
            hx * hx / (2.0 * lam)
        )));
    }
    let mut h = gs.h.clone();
    for i in 0..n {
        let im = (i + n - 1) % n;
        let ip = (i + 1) % n;
        let dh = (gs.h[ip] - gs.h[im]) / (2.0 * hx);
        let d2h = (gs.h[ip] - 2.0 * gs.h[i] + gs.h[im]) / (hx * hx);
        h[i] = gs.h[i] + dt * table.g_tilde(dh)? * d2h;
    }
    Ok(GraphState { h, t: gs.t + dt })
}

/// Evolves the graph flow from `gs` to time `t_final`.
pub fn evolve_graph_flow(gs: &GraphState, table: &GtildeTable, t_final: f64) -> Result<GraphState> {
    let n = gs.h.len();
    let hx = 1.0 / n as f64;
    let dt_cfl = hx * hx / (2.0 * table.lambda_max().max(1e-300));
    let mut state = gs.clone();
    while state.t < t_final - 1e-15 {
        let dt = dt_cfl.min(t_final - state.t);
        state = step_graph_flow(&state, table, dt)?;
    }
    Ok(state)
}

/// Per-ε front-tracking error report.
#[derive(Debug, Clone)]
pub struct SharpInterfaceReport {
    pub epsilon: f64,
    pub sup_error: f64,
    pub l2_error: f64,
    pub runtime_s: f64,
}

/// For each ε: evolve the phase field from the tanh profile around `init`
/// to time `t_final`, extract the front, evolve the graph flow from `init`,
/// and compare. The per-ε runs execute in parallel.
pub fn sharp_interface_compare(
    m: &Medium,
    table: &EffectiveTable,
    eps_list: &[f64],
    t_final: f64,
    init: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<Vec<SharpInterfaceReport>> {
    let gt = GtildeTable::new(table)?;
    eps_list
        .par_iter()
        .map(|&eps| {
            // the splitting bias of the semi-implicit step is O(dt/eps^2);
            // shrink dt faster than eps^2 so the bias vanishes with eps
            let dt_frac = 0.25 * (eps / 0.1).min(1.0);
            sharp_interface_single(m, &gt, eps, t_final, init, 8.0, dt_frac)
        })
        .collect()
}

fn sharp_interface_single(
    m: &Medium,
    gt: &GtildeTable,
    eps: f64,
    t_final: f64,
    init: &(dyn Fn(f64) -> f64 + Sync),
    points_per_eps: f64,
    dt_frac: f64,
) -> Result<SharpInterfaceReport> {
    {
        {
            let start = std::time::Instant::now();
            let nx = ((points_per_eps / eps).ceil() as usize).clamp(64, 1024);
            let hx = 1.0 / nx as f64;
            let sup0 = (0..nx)
                .map(|i| init(i as f64 * hx).abs())
                .fold(0.0f64, f64::max);
            let half = sup0 + (12.0 * eps).max(0.2);
            let ny = (2.0 * half / hx).ceil() as usize + 1;
            let hy = 2.0 * half / (ny - 1) as f64;
            let mut state = PhaseFieldState::from_graph(nx, ny, -half, hy, eps, init);
            let (ax, ay) = edge_coefficients(&state, m)?;
            let dt = dt_frac * dt_max(m, eps) / 0.25;
            while state.t < t_final - 1e-15 {
                let step = dt.min(t_final - state.t);
                state = step_allen_cahn_with(&state, m, &ax, &ay, step)?;
            }
            let eta = extract_front(&state)?;
            let h0 = GraphState {
                h: (0..nx).map(|i| init(i as f64 * hx)).collect(),
                t: 0.0,
            };
            let h = evolve_graph_flow(&h0, &gt, t_final)?;
            let mut sup_error = 0.0f64;
            let mut l2 = 0.0;
            for i in 0..nx {
                let d = (eta.h[i] - h.h[i]).abs();
                sup_error = sup_error.max(d);
                l2 += d * d * hx;
            }
            Ok(SharpInterfaceReport {
                epsilon: eps,
                sup_error,
                l2_error: l2.sqrt(),
                runtime_s: start.elapsed().as_secs_f64(),
            })
        }
    }
}

/// Summary CSV: (epsilon, sup_error, l2_error, runtime_s).
pub fn write_summary_csv<W: std::io::Write>(
    rows: &[SharpInterfaceReport],
    w: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["epsilon", "sup_error", "l2_error", "runtime_s"])
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for r in rows {
        wtr.write_record([
            format!("{:.12e}", r.epsilon),
            format!("{:.12e}", r.sup_error),
            format!("{:.12e}", r.l2_error),
            format!("{:.12e}", r.runtime_s),
        ])
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Front time series CSV: one row per time, columns t then h per node.
pub fn write_series_csv<W: std::io::Write>(series: &[GraphState], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if let Some(first) = series.first() {
        let mut head = vec!["t".to_string()];
        head.extend((0..first.h.len()).map(|i| format!("h_{i}")));
        wtr.write_record(&head)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    for gs in series {
        let mut rec = vec![format!("{:.12e}", gs.t)];
        rec.extend(gs.h.iter().map(|v| format!("{v:.12e}")));
        wtr.write_record(&rec)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    wtr.flush()?;
    Ok(())
}
