//! Complex coloured Gaussian noise for the stochastic trajectories.
//!
//! Paths are mode sums over a thermally weighted Drude-Lorentz decomposition,
//! `z*_j(t) = sum_l sqrt(w+_l) xi*_l e^{i w_l t} + sqrt(w-_l) eta_l e^{-i w_l t}`,
//! so `E[z*_t z_s] = sum_l w+_l e^{i w_l (t-s)} + w-_l e^{-i w_l (t-s)}` and the
//! pseudo-correlation `E[z_t z_s]` vanishes.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::bath::{spectral_density, BathSpec};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// How noise paths are produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMethod {
    /// Mode sum evaluated with one inverse FFT per site.
    #[default]
    Fft,
    /// Mode sum evaluated term by term.
    Modes,
    /// Circulant embedding of the kernel itself, negative spectral mass clipped.
    Circulant,
}

/// Standard complex Gaussian with `E|x|^2 = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Clone, Debug)]
pub struct ModeEnsemble {
    pub d_omega: f64,
    /// Midpoint frequencies `(l + 1/2) d_omega`.
    pub omega: Vec<f64>,
    /// `w_plus[site][l]`
    pub w_plus: Vec<Vec<f64>>,
    pub w_minus: Vec<Vec<f64>>,
    /// Worst site value of `|sum(w+ + w-) - |alpha(0)|| / |alpha(0)|`.
    pub truncation_error: f64,
}

impl ModeEnsemble {
    /// Weights on an explicit midpoint grid.
    pub fn with_spacing(spec: &BathSpec, d_omega: f64, n_modes: usize) -> Result<Self> {
        if n_modes < 2 {
            return Err(Error::validation(format!("need at least 2 modes, got {n_modes}")));
        }
        if !(d_omega > 0.0) {
            return Err(Error::validation("mode spacing must be > 0"));
        }
        let omega: Vec<f64> = (0..n_modes).map(|l| (l as f64 + 0.5) * d_omega).collect();
        let mut w_plus = Vec::with_capacity(spec.sites());
        let mut w_minus = Vec::with_capacity(spec.sites());
        let mut truncation_error = 0.0_f64;
        for j in 0..spec.sites() {
            let (mut wp, mut wm) = (Vec::with_capacity(n_modes), Vec::with_capacity(n_modes));
            for &w in &omega {
                let jw = spectral_density(w, j, spec);
                let nbar = 1.0 / (spec.beta * w).exp_m1();
                wp.push(jw * (nbar + 1.0) * d_omega / PI);
                wm.push(jw * nbar * d_omega / PI);
            }
            let total: f64 = wp.iter().chain(wm.iter()).sum();
            let target = spec.prefactor(j).norm();
            if target > 0.0 {
                truncation_error = truncation_error.max((total - target).abs() / target);
            }
            w_plus.push(wp);
            w_minus.push(wm);
        }
        Ok(Self { d_omega, omega, w_plus, w_minus, truncation_error })
    }

    pub fn n_modes(&self) -> usize {
        self.omega.len()
    }

    pub fn sites(&self) -> usize {
        self.w_plus.len()
    }

    pub fn omega_max(&self) -> f64 {
        self.d_omega * self.n_modes() as f64
    }

    /// `sum_l w+_l e^{i w_l s} + w-_l e^{-i w_l s}`, the exact covariance of the sampled paths.
    pub fn correlation(&self, site: usize, s: f64) -> Complex64 {
        self.omega
            .iter()
            .zip(self.w_plus[site].iter().zip(&self.w_minus[site]))
            .map(|(&w, (&p, &m))| {
                let (sin, cos) = (w * s).sin_cos();
                Complex64::new((p + m) * cos, (p - m) * sin)
            })
            .sum()
    }

    /// Mode coefficients `(sqrt(w+) xi*, sqrt(w-) eta)` for one site.
    fn draw<R: Rng + ?Sized>(&self, site: usize, rng: &mut R) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.n_modes();
        let (mut plus, mut minus) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for l in 0..n {
            let xi = complex_gaussian(rng);
            let eta = complex_gaussian(rng);
            plus.push(xi.conj() * self.w_plus[site][l].sqrt());
            minus.push(eta * self.w_minus[site][l].sqrt());
        }
        (plus, minus)
    }
}

/// Midpoint grid with `d_omega = omega_max / n_modes`; rejects cutoffs below `5 gamma`.
pub fn discretize_bath(spec: &BathSpec, n_modes: usize, omega_max: f64) -> Result<ModeEnsemble> {
    if !(omega_max >= 5.0 * spec.max_gamma()) {
        return Err(Error::validation(format!(
            "cutoff {omega_max} does not cover the Drude peak (need >= {})",
            5.0 * spec.max_gamma()
        )));
    }
    if n_modes < 2 {
        return Err(Error::validation(format!("need at least 2 modes, got {n_modes}")));
    }
    ModeEnsemble::with_spacing(spec, omega_max / n_modes as f64, n_modes)
}

/// Uniform sampling grid `t_k = k h`, `k = 0..len`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseGrid {
    pub h: f64,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseMeta {
    pub method: NoiseMethod,
    pub seed: u64,
    pub trajectory: u64,
    pub n_modes: usize,
}

/// Per-site samples `z*_j(t_k)`.
#[derive(Clone, Debug)]
pub struct NoisePath {
    pub grid: NoiseGrid,
    pub z: Vec<Vec<Complex64>>,
    pub meta: NoiseMeta,
}

impl NoisePath {
    pub fn zero(sites: usize, grid: NoiseGrid) -> Self {
        Self {
            grid,
            z: vec![vec![Complex64::default(); grid.len]; sites],
            meta: NoiseMeta { method: NoiseMethod::Modes, seed: 0, trajectory: 0, n_modes: 0 },
        }
    }

    pub fn sites(&self) -> usize {
        self.z.len()
    }

    /// Grid index of `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.grid.h;
        let k = x.round();
        if k < 0.0 || (x - k).abs() > 1e-6 || k as usize >= self.grid.len {
            None
        } else {
            Some(k as usize)
        }
    }
}

/// Direct mode sum. Site `j` draws `(xi_l, eta_l)` for `l = 0..n` from the
/// stream `(seed, trajectory, j)`.
pub fn sample_path(modes: &ModeEnsemble, grid: NoiseGrid, seed: u64, trajectory: u64) -> Result<NoisePath> {
    if !(grid.h > 0.0) || grid.len == 0 {
        return Err(Error::validation("noise grid must have a positive step"));
    }
    let mut z = Vec::with_capacity(modes.sites());
    for j in 0..modes.sites() {
        let (plus, minus) = modes.draw(j, &mut stream(seed, Purpose::Noise, trajectory, j as u64));
        let mut path = vec![Complex64::default(); grid.len];
        for (l, &w) in modes.omega.iter().enumerate() {
            if plus[l] == Complex64::default() && minus[l] == Complex64::default() {
                continue;
            }
            let step = Complex64::from_polar(1.0, w * grid.h);
            let mut rot = Complex64::new(1.0, 0.0);
            for (k, zk) in path.iter_mut().enumerate() {
                // reset the rotor periodically so rounding never accumulates
                if k % 256 == 0 {
                    rot = Complex64::from_polar(1.0, w * grid.h * k as f64);
                }
                *zk += plus[l] * rot + minus[l] * rot.conj();
                rot *= step;
            }
        }
        z.push(path);
    }
    Ok(NoisePath {
        grid,
        z,
        meta: NoiseMeta { method: NoiseMethod::Modes, seed, trajectory, n_modes: modes.n_modes() },
    })
}

/// Mode-sum evaluation by inverse FFT.
///
/// The mode spacing is tied to the transform length, `d_omega = 2 pi / (n h)`,
/// so that `e^{i w_l t_k}` factors into a DFT kernel times a common half-bin
/// phase. Positive-frequency coefficients sit in bin `l`, negative ones in bin
/// `n - 1 - l`.
#[derive(Clone)]
pub struct FftNoise {
    pub modes: ModeEnsemble,
    pub grid: NoiseGrid,
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
    half_bin: Vec<Complex64>,
}

impl std::fmt::Debug for FftNoise {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNoise")
            .field("grid", &self.grid)
            .field("n_fft", &self.n_fft)
            .field("n_modes", &self.modes.n_modes())
            .finish()
    }
}

impl FftNoise {
    /// Smallest power-of-two length covering twice the grid and giving at
    /// least `min_modes` modes below `omega_max`.
    pub fn new(spec: &BathSpec, grid: NoiseGrid, min_modes: usize, omega_max: f64) -> Result<Self> {
        if !(omega_max >= 5.0 * spec.max_gamma()) {
            return Err(Error::validation(format!(
                "cutoff {omega_max} does not cover the Drude peak (need >= {})",
                5.0 * spec.max_gamma()
            )));
        }
        let need_modes = (2.0 * PI * min_modes as f64 / (omega_max * grid.h)).ceil() as usize;
        let n_fft = (2 * grid.len).max(need_modes).max(4).next_power_of_two();
        Self::with_size(spec, grid, n_fft, omega_max)
    }

    pub fn with_size(spec: &BathSpec, grid: NoiseGrid, n_fft: usize, omega_max: f64) -> Result<Self> {
        if grid.len > n_fft {
            return Err(Error::validation("transform shorter than the noise grid"));
        }
        if omega_max * grid.h > PI {
            return Err(Error::validation(format!("noise step {} cannot resolve cutoff {omega_max}", grid.h)));
        }
        let d_omega = 2.0 * PI / (n_fft as f64 * grid.h);
        let n_modes = ((omega_max / d_omega).floor() as usize).min(n_fft / 2);
        let modes = ModeEnsemble::with_spacing(spec, d_omega, n_modes)?;
        let fft = FftPlanner::new().plan_fft_inverse(n_fft);
        let half_bin = (0..grid.len).map(|k| Complex64::from_polar(1.0, 0.5 * d_omega * grid.h * k as f64)).collect();
        Ok(Self { modes, grid, n_fft, fft, half_bin })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn sample(&self, seed: u64, trajectory: u64) -> NoisePath {
        let z = (0..self.modes.sites())
            .map(|j| self.sample_site(j, &mut stream(seed, Purpose::Noise, trajectory, j as u64)))
            .collect();
        NoisePath {
            grid: self.grid,
            z,
            meta: NoiseMeta { method: NoiseMethod::Fft, seed, trajectory, n_modes: self.modes.n_modes() },
        }
    }

    /// One site's path from its dedicated stream.
    pub fn sample_site<R: Rng + ?Sized>(&self, site: usize, rng: &mut R) -> Vec<Complex64> {
        let (plus, minus) = self.modes.draw(site, rng);
        let mut buf = vec![Complex64::default(); self.n_fft];
        for l in 0..plus.len() {
            buf[l] += plus[l];
            buf[self.n_fft - 1 - l] += minus[l];
        }
        self.fft.process(&mut buf);
        buf.truncate(self.grid.len);
        for (x, p) in buf.iter_mut().zip(&self.half_bin) {
            *x *= p;
        }
        buf
    }
}

/// Circulant embedding of `alpha(t)` itself.
#[derive(Clone)]
pub struct CirculantNoise {
    pub grid: NoiseGrid,
    n_fft: usize,
    /// `sqrt(max(lambda, 0) / n)` per site.
    amplitude: Vec<Vec<f64>>,
    /// Clipped negative spectral mass over total absolute mass, worst site.
    pub clipped_fraction: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantNoise {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantNoise")
            .field("grid", &self.grid)
            .field("n_fft", &self.n_fft)
            .field("clipped_fraction", &self.clipped_fraction)
            .finish()
    }
}

impl CirculantNoise {
    pub fn new(spec: &BathSpec, grid: NoiseGrid) -> Result<Self> {
        if !(grid.h > 0.0) || grid.len == 0 {
            return Err(Error::validation("noise grid must have a positive step"));
        }
        let n_fft = (2 * grid.len).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_fft);
        let mut amplitude = Vec::with_capacity(spec.sites());
        let mut clipped_fraction = 0.0_f64;
        for j in 0..spec.sites() {
            let mut c: Vec<Complex64> = (0..n_fft)
                .map(|k| {
                    if k <= n_fft / 2 {
                        spec.correlation(k as f64 * grid.h, j)
                    } else {
                        spec.correlation((n_fft - k) as f64 * grid.h, j).conj()
                    }
                })
                .collect();
            // the wrap point must be real for a Hermitian circulant
            c[n_fft / 2].im = 0.0;
            forward.process(&mut c);
            let (mut neg, mut tot) = (0.0, 0.0);
            let amp = c
                .iter()
                .map(|x| {
                    tot += x.re.abs();
                    if x.re < 0.0 {
                        neg += -x.re;
                    }
                    (x.re.max(0.0) / n_fft as f64).sqrt()
                })
                .collect();
            if tot > 0.0 {
                clipped_fraction = clipped_fraction.max(neg / tot);
            }
            amplitude.push(amp);
        }
        let fft = planner.plan_fft_inverse(n_fft);
        Ok(Self { grid, n_fft, amplitude, clipped_fraction, fft })
    }

    pub fn sites(&self) -> usize {
        self.amplitude.len()
    }

    pub fn sample(&self, seed: u64, trajectory: u64) -> NoisePath {
        let z = (0..self.sites())
            .map(|j| self.sample_site(j, &mut stream(seed, Purpose::Noise, trajectory, j as u64)))
            .collect();
        NoisePath {
            grid: self.grid,
            z,
            meta: NoiseMeta { method: NoiseMethod::Circulant, seed, trajectory, n_modes: self.n_fft },
        }
    }

    pub fn sample_site<R: Rng + ?Sized>(&self, site: usize, rng: &mut R) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = self.amplitude[site].iter().map(|&a| complex_gaussian(rng) * a).collect();
        self.fft.process(&mut buf);
        buf.truncate(self.grid.len);
        // the embedding realises E[z_t z*_s] = alpha(t - s); the trajectories take z*
        for x in buf.iter_mut() {
            *x = x.conj();
        }
        buf
    }
}

/// One entry of an empirical two-time estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationEntry {
    pub t: f64,
    pub tau: f64,
    /// Mean of `z*(t) z(tau)` (or of `z*_p(t) z_j(tau)` for cross estimates).
    pub cov: Complex64,
    pub cov_se: Complex64,
    /// Mean of `z(t) z(tau)`.
    pub pseudo: Complex64,
    pub pseudo_se: Complex64,
}

/// Mean of complex samples with per-component standard errors.
fn mean_se(samples: impl Iterator<Item = Complex64>) -> (Complex64, Complex64) {
    let (mut n, mut mean, mut m2r, mut m2i) = (0.0, Complex64::default(), 0.0, 0.0);
    for x in samples {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        let d2 = x - mean;
        m2r += d.re * d2.re;
        m2i += d.im * d2.im;
    }
    let se = Complex64::new((m2r / (n - 1.0) / n).sqrt(), (m2i / (n - 1.0) / n).sqrt());
    (mean, se)
}

/// Estimates on the grid points `0, stride, 2 stride, ...` for every ordered pair.
///
/// `site_a` supplies the conjugated factor and `site_b` the other; pass the same
/// site for an autocorrelation.
pub fn empirical_correlation(
    paths: &[NoisePath],
    site_a: usize,
    site_b: usize,
    stride: usize,
) -> Result<Vec<CorrelationEntry>> {
    if paths.len() < 100 {
        return Err(Error::validation(format!("correlation estimate needs at least 100 paths, got {}", paths.len())));
    }
    let grid = paths[0].grid;
    let stride = stride.max(1);
    let idx: Vec<usize> = (0..grid.len).step_by(stride).collect();
    let mut out = Vec::with_capacity(idx.len() * idx.len());
    for &i in &idx {
        for &k in &idx {
            // paths store z*, so z = conj of the stored value
            let (cov, cov_se) = mean_se(paths.iter().map(|p| p.z[site_a][i] * p.z[site_b][k].conj()));
            let (pseudo, pseudo_se) = mean_se(paths.iter().map(|p| p.z[site_a][i].conj() * p.z[site_b][k].conj()));
            out.push(CorrelationEntry { t: i as f64 * grid.h, tau: k as f64 * grid.h, cov, cov_se, pseudo, pseudo_se });
        }
    }
    Ok(out)
}
