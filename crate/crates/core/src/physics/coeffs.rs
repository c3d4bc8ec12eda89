//! Red-edge/NIR coefficient fitting and the latent-space correlation it drives.
//!
//! The curve is `RE = G * exp(-H * NIR) + K * NIR` evaluated per pixel, fitted
//! by damped Gauss-Newton from several starting decay rates.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::raster::{inner_rectangle, Band, Health, PlotDataset};
use crate::{Error, Result};

/// Fitted curve coefficients plus the latent correlation derived from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub rho: f64,
    pub fit_residual: f64,
    pub converged: bool,
}

impl CoefficientSet {
    /// Coefficients that leave the latent space untouched.
    pub fn neutral() -> Self {
        Self { g: 0.0, h: 0.0, k: 0.0, rho: 0.0, fit_residual: 0.0, converged: true }
    }

    pub fn predict(&self, nir: f64) -> f64 {
        self.g * (-self.h * nir).exp() + self.k * nir
    }
}

/// Covariance check between the data and the fitted curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub cov_data: f64,
    pub cov_model: f64,
    pub cov_gap: f64,
    pub pixel_count: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientFit {
    pub coeffs: CoefficientSet,
    pub diagnostics: FitDiagnostics,
}

pub const START_DECAYS: [f64; 4] = [0.0, 1.0, 3.0, 10.0];
pub const RHO_LIMIT: f64 = 0.99;
const G_TIE: f64 = 1e-9;
/// Crop applied before fitting; matches the metric default.
pub const FIT_MARGIN: f64 = 0.1;

struct Samples {
    nir: Vec<f64>,
    re: Vec<f64>,
}

fn sse(s: &Samples, p: &Vector3<f64>) -> f64 {
    s.nir
        .iter()
        .zip(&s.re)
        .map(|(&x, &y)| {
            let r = p[0] * (-p[1] * x).exp() + p[2] * x - y;
            r * r
        })
        .sum()
}

/// Ordinary least squares for (G, K) with the decay held fixed.
fn linear_start(s: &Samples, h: f64) -> Vector3<f64> {
    let (mut aa, mut ab, mut bb, mut ay, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in s.nir.iter().zip(&s.re) {
        let a = (-h * x).exp();
        aa += a * a;
        ab += a * x;
        bb += x * x;
        ay += a * y;
        by += x * y;
    }
    let det = aa * bb - ab * ab;
    if det.abs() <= 1e-12 * (aa * bb).max(1e-300) {
        // collinear basis: fall back to a pure linear term
        let k = if bb > 0.0 { by / bb } else { 0.0 };
        return Vector3::new(0.0, h, k);
    }
    Vector3::new((ay * bb - by * ab) / det, h, (aa * by - ab * ay) / det)
}

struct Run {
    params: Vector3<f64>,
    sse: f64,
    converged: bool,
    iterations: usize,
    accepted: Vec<f64>,
}

fn gauss_newton(s: &Samples, start: Vector3<f64>, max_iters: usize, tol: f64) -> Run {
    let mut p = start;
    let mut cur = sse(s, &p);
    let mut accepted = vec![cur];
    let mut converged = cur == 0.0;
    let mut iterations = 0;
    while !converged && iterations < max_iters {
        iterations += 1;
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (&x, &y) in s.nir.iter().zip(&s.re) {
            let e = (-p[1] * x).exp();
            let r = p[0] * e + p[2] * x - y;
            let j = Vector3::new(e, -p[0] * x * e, x);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let ridge = 1e-12 * jtj.trace().max(1e-300);
        let system = jtj + Matrix3::identity() * ridge;
        let Some(step) = system.lu().solve(&(-jtr)) else {
            break;
        };
        // step halving; H is kept non-negative by projection
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let mut cand = p + step * scale;
            cand[1] = cand[1].max(0.0);
            let val = sse(s, &cand);
            if val.is_finite() && val <= cur {
                let rel = (cur - val) / cur.max(1e-300);
                let step_norm = (cand - p).norm();
                p = cand;
                cur = val;
                accepted.push(cur);
                moved = true;
                if rel < tol || step_norm < tol * (1.0 + p.norm()) || cur == 0.0 {
                    converged = true;
                }
                break;
            }
            scale *= 0.5;
        }
        if !moved {
            // no descent direction left: at a (projected) stationary point
            converged = jtr.norm() <= tol.sqrt() * (1.0 + cur.sqrt());
            break;
        }
    }
    Run { params: p, sse: cur, converged, iterations, accepted }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n
}

/// Fit the red-edge/NIR curve over the inner rectangles of the non-mild images.
pub fn fit_re_nir_coefficients(dataset: &PlotDataset, max_iters: usize, tol: f64) -> Result<CoefficientFit> {
    fit_with_margin(dataset, max_iters, tol, FIT_MARGIN)
}

pub fn fit_with_margin(dataset: &PlotDataset, max_iters: usize, tol: f64, margin: f64) -> Result<CoefficientFit> {
    if !(tol > 0.0) {
        return Err(Error::validation("tol", "tolerance must be positive"));
    }
    let usable: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i].health != Health::Mild).collect();
    if usable.len() < 2 {
        return Err(Error::Insufficient(format!(
            "coefficient fit needs at least 2 non-mild images, found {}",
            usable.len()
        )));
    }
    let (re_band, nir_band) = (Band::RedEdge.index(), Band::Nir.index());
    let mut samples = Samples { nir: Vec::new(), re: Vec::new() };
    let mut mean_nir = Vec::with_capacity(usable.len());
    let mut mean_re = Vec::with_capacity(usable.len());
    for &i in &usable {
        let crop = inner_rectangle(&dataset.images[i], margin)?;
        let start = samples.nir.len();
        samples.nir.extend(crop.band(nir_band).iter().map(|&v| f64::from(v)));
        samples.re.extend(crop.band(re_band).iter().map(|&v| f64::from(v)));
        let n = (samples.nir.len() - start) as f64;
        mean_nir.push(samples.nir[start..].iter().sum::<f64>() / n);
        mean_re.push(samples.re[start..].iter().sum::<f64>() / n);
    }

    let mut best: Option<Run> = None;
    let mut total_iters = 0;
    for h in START_DECAYS {
        let run = gauss_newton(&samples, linear_start(&samples, h), max_iters, tol);
        total_iters += run.iterations;
        debug_assert!(run.accepted.windows(2).all(|w| w[1] <= w[0]));
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    let (mut g, mut h, k) = (best.params[0], best.params[1], best.params[2]);
    if g.abs() < G_TIE {
        g = 0.0;
        h = 0.0;
    }
    let n = samples.nir.len() as f64;
    let coeffs = CoefficientSet {
        g,
        h,
        k,
        rho: pearson(&mean_nir, &mean_re).clamp(-RHO_LIMIT, RHO_LIMIT),
        fit_residual: (best.sse / n).sqrt(),
        converged: best.converged,
    };
    let modelled: Vec<f64> = samples.nir.iter().map(|&x| coeffs.predict(x)).collect();
    let cov_data = covariance(&samples.nir, &samples.re);
    let cov_model = covariance(&samples.nir, &modelled);
    Ok(CoefficientFit {
        coeffs,
        diagnostics: FitDiagnostics {
            cov_data,
            cov_model,
            cov_gap: (cov_model - cov_data).abs(),
            pixel_count: samples.nir.len(),
            iterations: total_iters,
        },
    })
}

/// Sum of squared residuals after each accepted Gauss-Newton step from one start.
pub fn residual_trace(nir: &[f64], re: &[f64], start_decay: f64, max_iters: usize, tol: f64) -> Vec<f64> {
    let s = Samples { nir: nir.to_vec(), re: re.to_vec() };
    gauss_newton(&s, linear_start(&s, start_decay), max_iters, tol).accepted
}

pub const BLOCKS: usize = 5;

/// Mix the NIR latent block into the red-edge block with correlation `rho`.
///
/// `z` is row-major `count x dim`; block `i` of each row belongs to band `i`.
pub fn manipulate_latent(z: &[f64], dim: usize, coeffs: &CoefficientSet) -> Result<Vec<f64>> {
    if dim == 0 || dim % BLOCKS != 0 {
        return Err(Error::validation("latent_dim", format!("{dim} is not divisible by {BLOCKS}")));
    }
    if z.len() % dim != 0 {
        return Err(Error::Shape(format!("latent batch of {} values is not a multiple of {dim}", z.len())));
    }
    let rho = coeffs.rho.clamp(-RHO_LIMIT, RHO_LIMIT);
    let mut out = z.to_vec();
    if rho == 0.0 {
        return Ok(out);
    }
    let block = dim / BLOCKS;
    let (re, nir) = (Band::RedEdge.index() * block, Band::Nir.index() * block);
    let keep = (1.0 - rho * rho).sqrt();
    for row in out.chunks_exact_mut(dim) {
        for j in 0..block {
            row[re + j] = rho * row[nir + j] + keep * row[re + j];
        }
    }
    Ok(out)
}
