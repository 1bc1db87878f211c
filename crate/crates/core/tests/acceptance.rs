//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single PASS/FAIL line (run with --nocapture to see them inline).

use std::f64::consts::PI;

use pulsewave::cylinder::{CylinderField, CylinderGrid, Direction};
use pulsewave::effective::{
    einstein_check, sweep, EffectiveRow, EffectiveTable, LinearizedOperator,
};
use pulsewave::frontsim::{
    evolve_graph_flow, sharp_interface_compare, step_graph_flow, GraphState, GtildeTable,
};
use pulsewave::laminar2d::{
    dtension_branch_limits, gap_scan, mobility_asymptotics, upper_bound_profile,
};
use pulsewave::media::Medium;
use pulsewave::wave::{minimize, WaveOpts};
use pulsewave::SIGMA0;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn report(name: &str, f: impl FnOnce() + std::panic::UnwindSafe) {
    match std::panic::catch_unwind(f) {
        Ok(()) => println!("criterion {name}: PASS"),
        Err(e) => {
            println!("criterion {name}: FAIL");
            std::panic::resume_unwind(e);
        }
    }
}

fn grid(l: f64, n_s: usize, n_x: usize) -> CylinderGrid {
    CylinderGrid::new(l, n_s, vec![n_x]).unwrap()
}

/// Exact homogeneous rows over [30°, 150°]: φ = M̃ = σ₀, D²φ̃ = σ₀(Id−e⊗e).
fn homogeneous_rows(step_deg: f64) -> EffectiveTable {
    let count = ((150.0 - 30.0) / step_deg).round() as usize + 1;
    let rows = (0..count)
        .map(|i| {
            let t = (30.0 + i as f64 * step_deg).to_radians();
            let e = [t.cos(), t.sin()];
            EffectiveRow {
                e: e.to_vec(),
                phi: SIGMA0,
                dphi: e.iter().map(|c| SIGMA0 * c).collect(),
                hess: vec![
                    SIGMA0 * (1.0 - e[0] * e[0]),
                    -SIGMA0 * e[0] * e[1],
                    -SIGMA0 * e[0] * e[1],
                    SIGMA0 * (1.0 - e[1] * e[1]),
                ],
                mobility: SIGMA0,
                flags: "ok".into(),
            }
        })
        .collect();
    EffectiveTable {
        d: 2,
        rows,
        diagnostics: Vec::new(),
    }
}

#[test]
fn criterion_01_homogeneous_recovery() {
    report("1 (homogeneous recovery)", || {
        let g = grid(10.0, 1001, 4);
        let m = Medium::homogeneous(1.0, 2);
        let dirs: Vec<Direction> = (0..8)
            .map(|i| Direction::from_theta((15.0 + 45.0 * i as f64).to_radians()))
            .collect();
        let table = sweep(&m, &g, &dirs, &WaveOpts::default());
        for row in &table.rows {
            assert!(!row.flags.starts_with("error"), "{}", row.flags);
            assert!(
                (row.phi - SIGMA0).abs() <= 2e-3 * SIGMA0,
                "phi {} at e {:?}",
                row.phi,
                row.e
            );
            assert!(
                (row.mobility - SIGMA0).abs() <= 2e-3 * SIGMA0,
                "mobility {}",
                row.mobility
            );
            let mut err2 = 0.0;
            for r in 0..2 {
                for c in 0..2 {
                    let want = SIGMA0 * ((r == c) as usize as f64 - row.e[r] * row.e[c]);
                    err2 += (row.hess[r * 2 + c] - want).powi(2);
                }
            }
            assert!(
                err2.sqrt() <= 1e-2 * SIGMA0,
                "hess error {} at e {:?}",
                err2.sqrt(),
                row.e
            );
        }
    });
}

#[test]
fn criterion_02_scaling_law() {
    report("2 (scaling law)", || {
        let g = grid(10.0, 1001, 4);
        let results: Vec<(f64, f64, f64)> = [0.25, 1.0, 4.0]
            .par_iter()
            .map(|&c| {
                let m = Medium::homogeneous(c, 2);
                let e = Direction::from_theta(0.9);
                let table = sweep(&m, &g, std::slice::from_ref(&e), &WaveOpts::default());
                (c, table.rows[0].phi, table.rows[0].mobility)
            })
            .collect();
        for (c, phi, mob) in results {
            assert!(
                (phi - c.sqrt() * SIGMA0).abs() <= 5e-3 * c.sqrt() * SIGMA0,
                "c={c}: phi {phi}"
            );
            assert!(
                (mob - SIGMA0 / c.sqrt()).abs() <= 5e-3 * SIGMA0 / c.sqrt(),
                "c={c}: mobility {mob}"
            );
        }
    });
}

#[test]
fn criterion_03_einstein_relation() {
    report("3 (Einstein relation)", || {
        let g = grid(8.0, 401, 32);
        let m = Medium::laminar7(0.25, 0.1, 32).unwrap();
        let opts = WaveOpts::default();
        let reports: Vec<(f64, pulsewave::effective::EinsteinReport)> = [30.0, 45.0, 60.0]
            .par_iter()
            .map(|&t| {
                let e = Direction::from_theta((t as f64).to_radians());
                (t, einstein_check(&e, &m, &g, 1e-2, &opts).unwrap())
            })
            .collect();
        let lambda = m.a.big_lambda;
        for (t, rep) in reports {
            assert!(rep.rel_error <= 2e-2, "theta {t}: rel_error {}", rep.rel_error);
            assert!(
                rep.max_mobility_ratio <= lambda + 2e-2,
                "theta {t}: mobility ratio {}",
                rep.max_mobility_ratio
            );
        }
    });
}

#[test]
fn criterion_04_gap_mechanism() {
    report("4 (energy gap mechanism)", || {
        let g = grid(6.0, 301, 64); // unused: zeta_n = 0 skips the 2D solve
        let opts = WaveOpts::default();
        let deltas = [0.1, 0.01, 0.001];
        let mut prev_ratio = 0.0;
        for &delta in &deltas {
            let (rep, _) = gap_scan(delta, 0.1, &g, 0, 0.05, &opts).unwrap();
            assert!(
                rep.ratio > prev_ratio,
                "ratio not increasing at delta {delta}: {} after {prev_ratio}",
                rep.ratio
            );
            if (delta - 0.01).abs() < 1e-12 {
                assert!(rep.ratio > 2.5, "ratio {} at delta 0.01", rep.ratio);
            }
            prev_ratio = rep.ratio;
        }
        // scaled competitor envelope where the sqrt(delta) profile fits the
        // soft slot with scale separation
        for &delta in &[0.01, 0.001] {
            let v = upper_bound_profile(delta, 0.1) / delta.sqrt();
            assert!(v < SIGMA0 * 1.25, "envelope {v} at delta {delta}");
        }
    });
}

#[test]
fn criterion_05_branch_limit_signs() {
    report("5 (branch-limit signs)", || {
        // strong layer contrast: the corner of the surface tension at e1
        // only opens once the pinned/free gap is substantial
        let g = grid(4.0, 801, 48);
        let m = Medium::laminar7(0.01, 0.1, 48).unwrap();
        let mut opts = WaveOpts::default();
        opts.tol = 1e-5;
        let thetas = [-20.0, -10.0, -5.0, 5.0, 10.0, 20.0];
        let rows = dtension_branch_limits(&m, &g, &thetas, 0.005, &opts).unwrap();
        for r in &rows {
            assert!(
                r.dphi_e2 * r.theta_deg > 0.0,
                "sign mismatch at theta {}: dphi_e2 {}",
                r.theta_deg,
                r.dphi_e2
            );
        }
        let at20 = rows
            .iter()
            .find(|r| (r.theta_deg - 20.0).abs() < 1e-9)
            .unwrap()
            .dphi_e2
            .abs();
        let min_pos = rows
            .iter()
            .filter(|r| r.theta_deg > 0.0)
            .map(|r| r.dphi_e2.abs())
            .fold(f64::INFINITY, f64::min);
        assert!(
            min_pos >= 0.5 * at20,
            "branch limit fades: min {min_pos} vs 0.5×{at20}"
        );
    });
}

#[test]
fn criterion_06_mobility_asymptotics() {
    report("6 (mobility asymptotics)", || {
        let g = grid(4.0, 801, 48);
        let mut opts = WaveOpts::default();
        opts.tol = 1e-5;
        let thetas = [5.0, 10.0, 20.0];

        let m = Medium::laminar7(0.01, 0.1, 48).unwrap();
        let rows = mobility_asymptotics(&m, &g, &thetas, 0.005, &opts).unwrap();
        let vals: Vec<f64> = rows.iter().map(|r| r.sin_theta_mobility).collect();
        let (lo, hi) = (
            vals.iter().cloned().fold(f64::INFINITY, f64::min),
            vals.iter().cloned().fold(0.0f64, f64::max),
        );
        assert!(lo > 0.0 && hi / lo <= 2.0, "band [{lo}, {hi}] too wide");

        // negative control: constant medium has M̃ ≡ σ₀, so sinθ·M̃ spreads
        // by sin20°/sin5° ≈ 3.9 and must fail the same plateau test
        let mh = Medium::homogeneous(1.0, 2);
        let rows_h = mobility_asymptotics(&mh, &g, &thetas, 0.005, &opts).unwrap();
        let vals_h: Vec<f64> = rows_h.iter().map(|r| r.sin_theta_mobility).collect();
        let (lo_h, hi_h) = (
            vals_h.iter().cloned().fold(f64::INFINITY, f64::min),
            vals_h.iter().cloned().fold(0.0f64, f64::max),
        );
        assert!(hi_h / lo_h > 2.0, "control band [{lo_h}, {hi_h}] too flat");
    });
}

#[test]
fn criterion_07_operator_suite() {
    report("7 (kernel/operator suite)", || {
        let g = grid(6.0, 301, 32);
        let m = Medium::laminar7(0.25, 0.1, 32).unwrap();
        let e = Direction::from_theta(0.9);
        let sol = minimize(&e, &m, &g, &WaveOpts::default()).unwrap();
        let mut op = LinearizedOperator::new(&sol, &m);
        let kr = op.kernel_residual();
        assert!(kr <= 1e-4, "kernel residual {kr}");

        let n = g.nodes();
        let nxt = g.nxt();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rand_interior = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut v = vec![0.0; n];
            for i in 1..g.n_s - 1 {
                for jx in 0..nxt {
                    v[i * nxt + jx] = rng.gen_range(-1.0..1.0);
                }
            }
            v
        };
        let (mut lu, mut lv) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..5 {
            let u = rand_interior(&mut rng);
            let v = rand_interior(&mut rng);
            op.apply(&u, &mut lu);
            op.apply(&v, &mut lv);
            let a: f64 = lu.iter().zip(&v).map(|(x, y)| x * y).sum();
            let b: f64 = u.iter().zip(&lv).map(|(x, y)| x * y).sum();
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
            let q: f64 = lv.iter().zip(&v).map(|(x, y)| x * y).sum();
            assert!(q >= -1e-8, "negative quadratic form {q}");
        }

        // transpose identity of the cylinder derivative
        let u = CylinderField {
            grid: g.clone(),
            values: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let f: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let du = pulsewave::cylinder::apply_d_e(&u, &e);
        let atf = pulsewave::cylinder::adjoint_d_e(&f, &g, &e);
        let ip1: f64 = du.iter().zip(&f).map(|(x, y)| x * y).sum();
        let ip2: f64 = u.values.iter().zip(&atf.values).map(|(x, y)| x * y).sum();
        assert!((ip1 - ip2).abs() <= 1e-12 * ip1.abs().max(1.0), "{ip1} vs {ip2}");

        // residual is the exact gradient of the discrete energy
        let mut base = CylinderField::from_fn(&g, |s, _| (s / f64::sqrt(2.0)).tanh());
        for v in base.values.iter_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
        base.pin_boundaries();
        let r = pulsewave::cylinder::residual(&base, &e, &m);
        let meas = g.measure();
        for _ in 0..5 {
            let delta = rand_interior(&mut rng);
            let t = 1e-6;
            let mut up = base.clone();
            let mut um = base.clone();
            for i in 0..n {
                up.values[i] += t * delta[i];
                um.values[i] -= t * delta[i];
            }
            let fd = (pulsewave::cylinder::energy(&up, &e, &m).unwrap()
                - pulsewave::cylinder::energy(&um, &e, &m).unwrap())
                / (2.0 * t);
            let ip: f64 =
                r.values.iter().zip(&delta).map(|(x, y)| x * y).sum::<f64>() * meas;
            assert!((fd - ip).abs() <= 1e-6 * fd.abs().max(1.0), "{fd} vs {ip}");
        }
    });
}

#[test]
fn criterion_08_cell_identity() {
    report("8 (cell identity)", || {
        let g = grid(8.0, 1025, 64);
        let u = CylinderField::tanh_profile(&g);
        let m = Medium::laminar7(0.25, 0.1, 64).unwrap();
        let (lhs, rhs, gap) =
            pulsewave::cylinder::verify_cell_identity(&u, &[1, 0], &m, 32).unwrap();
        assert!(gap <= 1e-5, "e1: lhs {lhs} rhs {rhs} gap {gap}");
        let (lhs, rhs, gap) =
            pulsewave::cylinder::verify_cell_identity(&u, &[2, 1], &m, 32).unwrap();
        assert!(gap <= 1e-5, "(2,1): lhs {lhs} rhs {rhs} gap {gap}");
    });
}

#[test]
fn criterion_09_sharp_interface_limit() {
    report("9 (sharp-interface limit)", || {
        let eps = [0.1, 0.05, 0.025];
        let t_final = 0.05;
        let init = |x: f64| 0.1 * (2.0 * PI * x).sin();

        // homogeneous control with the closed-form table
        let mh = Medium::homogeneous(1.0, 2);
        let reports =
            sharp_interface_compare(&mh, &homogeneous_rows(1.0), &eps, t_final, &init).unwrap();
        assert!(
            reports[0].sup_error > reports[1].sup_error
                && reports[1].sup_error > reports[2].sup_error,
            "homogeneous errors not decreasing: {:?}",
            reports.iter().map(|r| r.sup_error).collect::<Vec<_>>()
        );
        let slope = (reports[0].sup_error / reports[2].sup_error).ln()
            / (reports[0].epsilon / reports[2].epsilon).ln();
        assert!(slope >= 0.8, "homogeneous slope {slope}");

        // laminar medium with a computed table around the vertical direction
        let m = Medium::laminar7(0.25, 0.1, 32).unwrap();
        let g = grid(8.0, 401, 32);
        let dirs: Vec<Direction> = (0..9)
            .map(|i| Direction::from_theta((50.0 + 10.0 * i as f64).to_radians()))
            .collect();
        let mut opts = WaveOpts::default();
        opts.tol = 1e-7;
        let table = sweep(&m, &g, &dirs, &opts);
        for row in &table.rows {
            assert!(!row.flags.starts_with("error"), "{}", row.flags);
        }
        let reports = sharp_interface_compare(&m, &table, &eps, t_final, &init).unwrap();
        assert!(
            reports[0].sup_error > reports[1].sup_error
                && reports[1].sup_error > reports[2].sup_error,
            "laminar errors not decreasing: {:?}",
            reports.iter().map(|r| r.sup_error).collect::<Vec<_>>()
        );
    });
}

#[test]
fn criterion_10_graph_flow_correctness() {
    report("10 (graph-flow correctness)", || {
        let gt = GtildeTable::new(&homogeneous_rows(0.25)).unwrap();

        // closed-form coefficient
        for &q in &[0.0, 0.3, -0.6, 0.9] {
            let got = gt.g_tilde(q).unwrap();
            let want = 1.0 / (1.0 + q * q);
            assert!((got - want).abs() <= 1e-2, "q {q}: {got} vs {want}");
        }

        // flat state is an exact fixed point
        let flat = GraphState {
            h: vec![0.3; 64],
            t: 0.0,
        };
        let stepped = step_graph_flow(&flat, &gt, 1e-5).unwrap();
        for &v in &stepped.h {
            assert!((v - 0.3).abs() < 1e-15);
        }

        // grim reaper: G(h_x)·h_xx = π, interior residual O(h_x²)
        let residual = |n: usize| -> f64 {
            let hx = 1.0 / n as f64;
            let h: Vec<f64> = (0..n)
                .map(|i| -(PI * (i as f64 * hx - 0.5)).cos().ln() / PI)
                .collect();
            let mut worst = 0.0f64;
            for i in 0..n {
                let x = i as f64 * hx;
                if !(0.3..=0.7).contains(&x) {
                    continue;
                }
                let dh = (h[(i + 1) % n] - h[(i + n - 1) % n]) / (2.0 * hx);
                let d2h = (h[(i + 1) % n] - 2.0 * h[i] + h[(i + n - 1) % n]) / (hx * hx);
                worst = worst.max((gt.g_tilde(dh).unwrap() * d2h - PI).abs());
            }
            worst
        };
        let r1 = residual(128);
        let r2 = residual(256);
        assert!(r1 < 1e-2, "residual {r1}");
        assert!(r2 < 0.5 * r1, "r(128) {r1}, r(256) {r2}");

        // diffusive decay sanity under the CFL-limited evolution
        let n = 64;
        let wavy = GraphState {
            h: (0..n).map(|i| 0.1 * (2.0 * PI * i as f64 / n as f64).sin()).collect(),
            t: 0.0,
        };
        let evolved = evolve_graph_flow(&wavy, &gt, 0.01).unwrap();
        let amp = evolved.h.iter().cloned().fold(0.0f64, f64::max);
        assert!(amp < 0.1, "amplitude {amp} did not decay");
    });
}

#[test]
fn criterion_11_determinism() {
    report("11 (CSV determinism)", || {
        let bin = env!("CARGO_BIN_EXE_pulsewave");
        let base = std::env::temp_dir().join(format!("pulsewave_det_{}", std::process::id()));
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = base.join(format!("run{run}"));
            let status = std::process::Command::new(bin)
                .args([
                    "laminar2d",
                    "gap",
                    "--delta",
                    "0.01",
                    "--kappa",
                    "0.1",
                    "--out",
                ])
                .arg(&out)
                .status()
                .unwrap();
            assert!(status.success(), "run {run} exited with {status}");
            outputs.push(std::fs::read(out.join("gap.csv")).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "gap.csv differs between runs");
        std::fs::remove_dir_all(&base).ok();
    });
}
