//! Double-well potentials and periodic coefficient fields, including the
//! laminar 2D family with plateau/ramp profile used by the gap experiments.

use crate::{Error, Result};

/// Supported potential families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    /// W(u) = (1-u²)²/4 on [-1,1], extended linearly to [-2,2].
    Quartic,
}

/// Double-well potential W with zeros at ±1, W'' (±1) ≥ alpha, and the
/// linear extension W(u) = |u| - 1 outside [-1,1].
#[derive(Debug, Clone, Copy)]
pub struct Potential {
    pub kind: PotentialKind,
    /// Lower bound on W''(±1).
    pub alpha: f64,
    /// Evaluation domain.
    pub domain: (f64, f64),
}

impl Potential {
    /// W(u).
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self.kind {
            PotentialKind::Quartic => {
                if u > 1.0 {
                    u - 1.0
                } else if u < -1.0 {
                    -u - 1.0
                } else {
                    let q = 1.0 - u * u;
                    0.25 * q * q
                }
            }
        }
    }

    /// W'(u).
    #[inline]
    pub fn d1(&self, u: f64) -> f64 {
        match self.kind {
            PotentialKind::Quartic => {
                if u > 1.0 {
                    1.0
                } else if u < -1.0 {
                    -1.0
                } else {
                    u * (u * u - 1.0)
                }
            }
        }
    }

    /// W''(u) (one-sided constant value on the linear extension).
    #[inline]
    pub fn d2(&self, u: f64) -> f64 {
        match self.kind {
            PotentialKind::Quartic => {
                if u.abs() > 1.0 {
                    0.0
                } else {
                    3.0 * u * u - 1.0
                }
            }
        }
    }

    /// max |W''| over [-1,1]; used for explicit step-size restrictions.
    #[inline]
    pub fn d2_max(&self) -> f64 {
        match self.kind {
            PotentialKind::Quartic => 2.0,
        }
    }
}

/// The quartic double well W(u) = (1-u²)²/4 with alpha = 2.
pub fn make_quartic_potential() -> Potential {
    Potential {
        kind: PotentialKind::Quartic,
        alpha: 2.0,
        domain: (-2.0, 2.0),
    }
}

/// Periodic coefficient field a on T^k ⊂ R^d, sampled on a uniform grid of
/// the first k coordinates (laminar: a depends only on those coordinates).
#[derive(Debug, Clone)]
pub struct CoefficientField {
    /// Number of periodic coordinates the field depends on.
    pub k: usize,
    /// Ambient dimension.
    pub d: usize,
    /// Sample counts per periodic coordinate (k entries).
    pub n_samples: Vec<usize>,
    /// d×d row-major symmetric matrix per sample, flattened sample-major.
    pub samples: Vec<f64>,
    /// Row divergence (Σ_j ∂_j a_ij) per sample, d entries each.
    pub div_a: Vec<f64>,
    /// Ellipticity bounds over the grid.
    pub lambda: f64,
    pub big_lambda: f64,
}

impl CoefficientField {
    fn total_samples(&self) -> usize {
        self.n_samples.iter().product()
    }

    /// Number of coordinates the field actually depends on: 0 for constant
    /// fields, for which every direction counts as transversal.
    pub fn effective_k(&self) -> usize {
        let dd = self.d * self.d;
        let first = &self.samples[..dd];
        let constant = self
            .samples
            .chunks_exact(dd)
            .all(|block| block.iter().zip(first).all(|(a, b)| (a - b).abs() < 1e-15));
        if constant {
            0
        } else {
            self.k
        }
    }

    /// Flattened sample index for integer grid coordinates (wrapped).
    fn sample_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for (c, &i) in idx.iter().enumerate() {
            flat = flat * self.n_samples[c] + (i % self.n_samples[c]);
        }
        flat
    }

    /// a at a point x ∈ [0,1)^k by periodic multilinear interpolation;
    /// writes the d×d row-major matrix into `out`.
    pub fn a_at(&self, x: &[f64], out: &mut [f64]) {
        self.interp(x, true, out)
    }

    /// div a at a point x ∈ [0,1)^k, d entries into `out`.
    pub fn div_at(&self, x: &[f64], out: &mut [f64]) {
        self.interp(x, false, out)
    }

    fn interp(&self, x: &[f64], matrix: bool, out: &mut [f64]) {
        assert_eq!(x.len(), self.k);
        let m = if matrix { self.d * self.d } else { self.d };
        let src: &[f64] = if matrix { &self.samples } else { &self.div_a };
        out[..m].fill(0.0);
        // Corner loop over the 2^k interpolation cell.
        let mut idx = vec![0usize; self.k.max(1)];
        let mut frac = vec![0f64; self.k.max(1)];
        for c in 0..self.k {
            let n = self.n_samples[c] as f64;
            let t = (x[c].rem_euclid(1.0)) * n;
            idx[c] = (t.floor() as usize).min(self.n_samples[c] - 1);
            frac[c] = t - idx[c] as f64;
        }
        let corners = 1usize << self.k;
        for corner in 0..corners {
            let mut w = 1.0;
            let mut at = vec![0usize; self.k];
            for c in 0..self.k {
                if corner >> c & 1 == 1 {
                    w *= frac[c];
                    at[c] = idx[c] + 1;
                } else {
                    w *= 1.0 - frac[c];
                    at[c] = idx[c];
                }
            }
            if w == 0.0 {
                continue;
            }
            let flat = self.sample_index(&at);
            let base = flat * m;
            for j in 0..m {
                out[j] += w * src[base + j];
            }
        }
    }
}

/// Quintic smoothstep: C² monotone ramp with S(0)=0, S(1)=1 and vanishing
/// first and second derivatives at both ends.
fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Analytic plateau/ramp profile: 1 on [κ, 1/2-κ], δ on [1/2+κ, 1-κ],
/// quintic C² ramps in between, symmetric under reflections about 1/4 and
/// 3/4.
pub fn a1_profile_value(delta: f64, kappa: f64, x: f64) -> f64 {
    let x = x.rem_euclid(1.0);
    if (kappa..=0.5 - kappa).contains(&x) {
        1.0
    } else if (0.5 + kappa..=1.0 - kappa).contains(&x) {
        delta
    } else if x > 0.5 - kappa && x < 0.5 + kappa {
        // descending ramp
        1.0 + (delta - 1.0) * smoothstep5((x - (0.5 - kappa)) / (2.0 * kappa))
    } else {
        // ascending ramp on [1-κ, 1+κ], wrapped
        let y = if x < kappa { x + 1.0 } else { x };
        delta + (1.0 - delta) * smoothstep5((y - (1.0 - kappa)) / (2.0 * kappa))
    }
}

/// Samples the plateau/ramp profile at n uniformly spaced points x_j = j/n.
pub fn build_a1_profile(delta: f64, kappa: f64, n_samples: usize) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta <= 0.25) {
        return Err(Error::Validation(format!(
            "delta must lie in (0, 1/4], got {delta}"
        )));
    }
    if !(kappa > 0.0 && kappa < 0.25) {
        return Err(Error::Validation(format!(
            "kappa must lie in (0, 1/4), got {kappa}"
        )));
    }
    if n_samples < 4 {
        return Err(Error::Validation("need at least 4 profile samples".into()));
    }
    Ok((0..n_samples)
        .map(|j| a1_profile_value(delta, kappa, j as f64 / n_samples as f64))
        .collect())
}

/// Builds the diagonal laminar field a(x) = a1(x) e1⊗e1 + a2(x) e2⊗e2
/// (+ identity on any remaining coordinates), k = 1.
pub fn make_laminar_field(a1: &[f64], a2: &[f64], d: usize) -> Result<CoefficientField> {
    if d < 2 {
        return Err(Error::Validation("laminar field needs d >= 2".into()));
    }
    if a1.len() != a2.len() || a1.len() < 4 {
        return Err(Error::Validation(
            "profiles must have equal length >= 4".into(),
        ));
    }
    if a1.iter().chain(a2.iter()).any(|&v| v <= 0.0) {
        return Err(Error::Validation("profiles must be strictly positive".into()));
    }
    let n = a1.len();
    let h = 1.0 / n as f64;
    let mut samples = vec![0.0; n * d * d];
    let mut div_a = vec![0.0; n * d];
    let mut lambda = f64::INFINITY;
    let mut big_lambda = f64::NEG_INFINITY;
    for j in 0..n {
        let base = j * d * d;
        samples[base] = a1[j];
        samples[base + d + 1] = a2[j];
        for c in 2..d {
            samples[base + c * d + c] = 1.0;
        }
        lambda = lambda.min(a1[j].min(a2[j]).min(if d > 2 { 1.0 } else { f64::INFINITY }));
        big_lambda = big_lambda.max(a1[j].max(a2[j]).max(if d > 2 { 1.0 } else { 0.0 }));
        // Only the first column varies (in x1): (div a)_1 = ∂_1 a_11.
        div_a[j * d] = (a1[(j + 1) % n] - a1[(j + n - 1) % n]) / (2.0 * h);
    }
    Ok(CoefficientField {
        k: 1,
        d,
        n_samples: vec![n],
        samples,
        div_a,
        lambda,
        big_lambda,
    })
}

/// Constant isotropic field c·Id as a (degenerate) laminar field.
pub fn make_constant_field(c: f64, d: usize, n_samples: usize) -> Result<CoefficientField> {
    let prof = vec![c; n_samples.max(4)];
    make_laminar_field(&prof, &prof, d)
}

/// A medium = coefficient field + potential.
#[derive(Debug, Clone)]
pub struct Medium {
    pub a: CoefficientField,
    pub w: Potential,
}

impl Medium {
    pub fn new(a: CoefficientField, w: Potential) -> Self {
        Medium { a, w }
    }

    /// Homogeneous quartic medium c·Id.
    pub fn homogeneous(c: f64, d: usize) -> Self {
        Medium {
            a: make_constant_field(c, d, 8).expect("constant field"),
            w: make_quartic_potential(),
        }
    }

    /// The laminar counterexample medium: a1 = plateau/ramp profile,
    /// a2 ≡ 1, d = 2.
    pub fn laminar7(delta: f64, kappa: f64, n_samples: usize) -> Result<Self> {
        let a1 = build_a1_profile(delta, kappa, n_samples)?;
        let a2 = vec![1.0; n_samples];
        Ok(Medium {
            a: make_laminar_field(&a1, &a2, 2)?,
            w: make_quartic_potential(),
        })
    }
}

/// Invariant report: one human-readable line per violation.
pub fn validate(m: &Medium) -> Vec<String> {
    let mut report = Vec::new();
    let a = &m.a;
    let d = a.d;
    let n = a.total_samples();
    for j in 0..n {
        let base = j * d * d;
        let s = &a.samples[base..base + d * d];
        for r in 0..d {
            for c in (r + 1)..d {
                if (s[r * d + c] - s[c * d + r]).abs() > 1e-14 {
                    report.push(format!("sample {j}: a not symmetric at ({r},{c})"));
                }
            }
        }
        let mat = nalgebra::DMatrix::from_row_slice(d, d, s);
        let eig = mat.symmetric_eigenvalues();
        for ev in eig.iter() {
            if *ev < a.lambda - 1e-12 || *ev > a.big_lambda + 1e-12 {
                report.push(format!(
                    "sample {j}: eigenvalue {ev} outside [{}, {}]",
                    a.lambda, a.big_lambda
                ));
            }
        }
    }
    if a.lambda <= 0.0 {
        report.push("field not uniformly elliptic (lambda <= 0)".into());
    }
    let w = &m.w;
    if w.eval(-1.0).abs() > 1e-14 || w.eval(1.0).abs() > 1e-14 {
        report.push("potential does not vanish at ±1".into());
    }
    if w.d2(-1.0) < w.alpha - 1e-12 || w.d2(1.0) < w.alpha - 1e-12 {
        report.push("W''(±1) below alpha".into());
    }
    for i in 0..=200 {
        let u = -1.0 + i as f64 / 100.0;
        if w.eval(u) < -1e-14 {
            report.push(format!("W negative at u={u}"));
            break;
        }
    }
    // Extension continuity at the matching points.
    for s in [-1.0f64, 1.0] {
        let eps = 1e-8;
        let inner = w.eval(s - eps * s.signum());
        let outer = w.eval(s + eps * s.signum());
        if (inner - outer).abs() > 1e-6 {
            report.push(format!("extension discontinuous at u={s}"));
        }
    }
    report
}
