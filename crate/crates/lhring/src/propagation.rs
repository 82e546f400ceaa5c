//! Fixed-step RK4 integration of single trajectories and of the density matrix.
//!
//! Dephasing enters through the local projectors `L_j = |j><j|` on antenna
//! sites. To first order in the memory expansion the delayed coupling is
//! `Obar_j = O0_j L_j - i O1_j [Jt, L_j]`, with `Jt` the off-diagonal hopping.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bath::MemoryKernels;
use crate::error::{Error, Result};
use crate::model::RingModel;
use crate::noise::{NoiseGrid, NoisePath};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Integration grid: `steps` RK4 steps of `dt`, output every `stride` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, t_max: f64, stride: usize) -> Result<Self> {
        if !(dt > 0.0) || !(t_max > 0.0) || !dt.is_finite() || !t_max.is_finite() {
            return Err(Error::validation(format!("need dt > 0 and t_max > 0, got {dt}, {t_max}")));
        }
        let steps = (t_max / dt).round() as usize;
        if steps == 0 || ((steps as f64) * dt - t_max).abs() > 1e-9 * t_max {
            return Err(Error::validation(format!("t_max {t_max} is not a multiple of dt {dt}")));
        }
        if stride == 0 || steps % stride != 0 {
            return Err(Error::validation(format!("output stride {stride} must divide the {steps} steps")));
        }
        Ok(Self { dt, steps, stride })
    }

    pub fn t_max(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn outputs(&self) -> usize {
        self.steps / self.stride + 1
    }

    pub fn output_times(&self) -> Vec<f64> {
        (0..self.outputs()).map(|k| (k * self.stride) as f64 * self.dt).collect()
    }

    /// Noise is sampled on half steps so RK4 midpoints use exact values.
    pub fn noise_grid(&self) -> NoiseGrid {
        NoiseGrid { h: 0.5 * self.dt, len: 2 * self.steps + 1 }
    }

    /// Same outputs with half the step.
    pub fn halved(&self) -> Self {
        Self { dt: 0.5 * self.dt, steps: 2 * self.steps, stride: 2 * self.stride }
    }
}

/// How trajectory ensembles represent the reduced state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unraveling {
    /// Norm-preserving equation with shifted noise; the norm decays only
    /// through the sink.
    #[default]
    Normalized,
    /// Plain linear equation; the density matrix is the mean of `a a^dagger`.
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeState {
    pub a: Vec<Complex64>,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    pub rho: Array2<Complex64>,
    pub t: f64,
}

impl DensityState {
    pub fn pure(a: &[Complex64]) -> Self {
        let n = a.len();
        Self { rho: Array2::from_shape_fn((n, n), |(p, q)| a[p] * a[q].conj()), t: 0.0 }
    }
}

/// Linear trajectory right-hand side with kernels evaluated at `t`.
///
/// Antenna `j`: `-i (H a)_j + z*_j a_j - O0_j a_j - i O1_j (Jt a)_j`; the RC
/// row carries only the Hamiltonian part.
pub fn sse_rhs(
    t: f64,
    state: &AmplitudeState,
    model: &RingModel,
    kernels: &MemoryKernels,
    z: &NoisePath,
) -> Result<Vec<Complex64>> {
    let n = model.dim();
    if state.a.len() != n {
        return Err(Error::validation(format!("{} amplitudes for dimension {n}", state.a.len())));
    }
    let k = z.index_of(t).ok_or_else(|| Error::validation(format!("noise path does not cover t = {t}")))?;
    let h = crate::model::hamiltonian_matrix(model);
    let a = &state.a;
    let mut out: Vec<Complex64> = (0..n).map(|p| -I * (0..n).map(|q| h[[p, q]] * a[q]).sum::<Complex64>()).collect();
    for j in 0..model.m {
        let jt_a: Complex64 = (0..model.m).filter(|&p| p != j).map(|p| a[p] * model.j[[j, p]]).sum();
        out[j] += z.z[j][k] * a[j] - kernels.o0(j, t) * a[j] - I * kernels.o1(j, t) * jt_a;
    }
    Ok(out)
}

/// Kernel values on the half-step grid, `o0[j][k] = O0_j(k dt / 2)`.
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub o0: Vec<Vec<Complex64>>,
    pub o1: Vec<Vec<Complex64>>,
}

impl KernelTable {
    pub fn new(kernels: &MemoryKernels, grid: NoiseGrid) -> Self {
        let tab = |f: &dyn Fn(usize, f64) -> Complex64| {
            (0..kernels.sites()).map(|j| (0..grid.len).map(|k| f(j, k as f64 * grid.h)).collect()).collect()
        };
        Self { o0: tab(&|j, t| kernels.o0(j, t)), o1: tab(&|j, t| kernels.o1(j, t)) }
    }
}

/// Precomputed, shareable trajectory integrator for one model and bath.
#[derive(Clone, Debug)]
pub struct Propagator {
    n: usize,
    m: usize,
    rc: Option<usize>,
    /// Off-diagonal hopping, row-major `m x m`.
    jt: Vec<f64>,
    diag: Vec<f64>,
    gamma_rc: Vec<f64>,
    omega_rc: f64,
    kappa: f64,
    shift_a: Vec<Complex64>,
    shift_gamma: Vec<f64>,
    table: KernelTable,
    pub grid: TimeGrid,
    pub unraveling: Unraveling,
    dephasing: bool,
}

struct Work {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
    ja: Vec<Complex64>,
    jw: Vec<Complex64>,
    w: Vec<Complex64>,
}

impl Propagator {
    pub fn new(model: &RingModel, kernels: &MemoryKernels, grid: TimeGrid, unraveling: Unraveling) -> Result<Self> {
        if kernels.sites() != model.m {
            return Err(Error::validation(format!("bath has {} sites, ring has {}", kernels.sites(), model.m)));
        }
        let m = model.m;
        let jt = model.offdiagonal_hopping().iter().copied().collect();
        let diag = (0..m).map(|p| model.omega[p] + model.j[[p, p]]).collect();
        let dephasing = (0..m).any(|j| kernels.prefactor(j) != ZERO);
        Ok(Self {
            n: model.dim(),
            m,
            rc: model.rc_index(),
            jt,
            diag,
            gamma_rc: model.gamma.clone(),
            omega_rc: model.omega_rc,
            kappa: model.kappa,
            shift_a: (0..m).map(|j| kernels.prefactor(j).conj()).collect(),
            shift_gamma: (0..m).map(|j| kernels.gamma(j)).collect(),
            table: KernelTable::new(kernels, grid.noise_grid()),
            grid,
            unraveling,
            dephasing,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn state_len(&self) -> usize {
        match self.unraveling {
            Unraveling::Normalized => self.n + self.m,
            Unraveling::Linear => self.n,
        }
    }

    fn work(&self) -> Work {
        let len = self.state_len();
        let v = |k| vec![ZERO; k];
        Work { k1: v(len), k2: v(len), k3: v(len), k4: v(len), tmp: v(len), ja: v(self.m), jw: v(self.m), w: v(self.m) }
    }

    #[inline]
    fn hop(jt: &[f64], m: usize, x: &[Complex64], out: &mut [Complex64]) {
        for (p, o) in out.iter_mut().enumerate() {
            let row = &jt[p * m..(p + 1) * m];
            let (mut re, mut im) = (0.0, 0.0);
            for (c, xi) in row.iter().zip(x) {
                re += c * xi.re;
                im += c * xi.im;
            }
            *o = Complex64::new(re, im);
        }
    }

    /// `-i H a` into `out`, given `ja = Jt a`.
    #[inline]
    fn coherent(&self, a: &[Complex64], ja: &[Complex64], out: &mut [Complex64]) {
        let m = self.m;
        match self.rc {
            Some(rc) => {
                let arc = a[rc];
                let mut feed = ZERO;
                for p in 0..m {
                    out[p] = -I * (ja[p] + a[p] * self.diag[p] + arc * self.gamma_rc[p]);
                    feed += a[p] * self.gamma_rc[p];
                }
                out[rc] = -I * (feed + arc * self.omega_rc) - arc * self.kappa;
            }
            None => {
                for p in 0..m {
                    out[p] = -I * (ja[p] + a[p] * self.diag[p]);
                }
            }
        }
    }

    fn rhs(
        &self,
        k: usize,
        y: &[Complex64],
        z: &NoisePath,
        out: &mut [Complex64],
        ja: &mut [Complex64],
        jw: &mut [Complex64],
        w: &mut [Complex64],
    ) {
        let (n, m) = (self.n, self.m);
        let a = &y[..n];
        Self::hop(&self.jt, m, &a[..m], ja);
        self.coherent(a, ja, &mut out[..n]);
        if !self.dephasing {
            if self.unraveling == Unraveling::Normalized {
                out[n..].fill(ZERO);
            }
            return;
        }
        match self.unraveling {
            Unraveling::Linear => {
                for j in 0..m {
                    let (o0, o1) = (self.table.o0[j][k], self.table.o1[j][k]);
                    out[j] += z.z[j][k] * a[j] - o0 * a[j] - I * o1 * ja[j];
                }
            }
            Unraveling::Normalized => {
                let s = &y[n..];
                let norm2: f64 = a.iter().map(|x| x.norm_sqr()).sum();
                if norm2 == 0.0 {
                    out[n..].fill(ZERO);
                    return;
                }
                let inv = 1.0 / norm2;
                let mut zbar = ZERO;
                for j in 0..m {
                    let l = a[j].norm_sqr() * inv;
                    zbar += (z.z[j][k] + s[j]) * l;
                    w[j] = self.table.o1[j][k] * a[j] * l;
                }
                Self::hop(&self.jt, m, w, jw);
                // drift_j = ((L - <L>) Obar a)_j
                let mut mean = ZERO;
                for j in 0..m {
                    let l = a[j].norm_sqr() * inv;
                    let (o0, o1) = (self.table.o0[j][k], self.table.o1[j][k]);
                    let loa = o0 * a[j] + I * o1 * ja[j];
                    let oba = o0 * l * a[j] - I * jw[j] + I * o1 * l * ja[j];
                    let drift = loa - oba;
                    mean += a[j].conj() * drift;
                    out[j] += (z.z[j][k] + s[j] - zbar) * a[j] - drift;
                    out[n + j] = self.shift_a[j] * l - s[j] * self.shift_gamma[j];
                }
                mean *= inv;
                for j in 0..m {
                    out[j] += mean * a[j];
                }
                if let Some(rc) = self.rc {
                    out[rc] += (mean - zbar) * a[rc];
                }
            }
        }
    }

    /// Runs one trajectory and calls `on_output(index, amplitudes)` at each output time.
    pub fn integrate_with<F: FnMut(usize, &[Complex64])>(
        &self,
        a0: &[Complex64],
        z: &NoisePath,
        mut on_output: F,
    ) -> Result<()> {
        if a0.len() != self.n {
            return Err(Error::validation(format!("{} amplitudes for dimension {}", a0.len(), self.n)));
        }
        let ng = self.grid.noise_grid();
        if self.dephasing && (z.grid.len < ng.len || (z.grid.h - ng.h).abs() > 1e-12 * ng.h || z.sites() < self.m) {
            return Err(Error::validation("noise path does not match the integration grid"));
        }
        let mut y = vec![ZERO; self.state_len()];
        y[..self.n].copy_from_slice(a0);
        let mut wk = self.work();
        let dt = self.grid.dt;
        on_output(0, &y[..self.n]);
        for step in 0..self.grid.steps {
            let k = 2 * step;
            let Work { k1, k2, k3, k4, tmp, ja, jw, w } = &mut wk;
            self.rhs(k, &y, z, k1, ja, jw, w);
            for i in 0..y.len() {
                tmp[i] = y[i] + k1[i] * (0.5 * dt);
            }
            self.rhs(k + 1, tmp, z, k2, ja, jw, w);
            for i in 0..y.len() {
                tmp[i] = y[i] + k2[i] * (0.5 * dt);
            }
            self.rhs(k + 1, tmp, z, k3, ja, jw, w);
            for i in 0..y.len() {
                tmp[i] = y[i] + k3[i] * dt;
            }
            self.rhs(k + 2, tmp, z, k4, ja, jw, w);
            for i in 0..y.len() {
                y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
            }
            if (step + 1) % self.grid.stride == 0 {
                if !y.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
                    return Err(Error::numerical(format!("non-finite amplitudes at t = {}", (step + 1) as f64 * dt)));
                }
                on_output((step + 1) / self.grid.stride, &y[..self.n]);
            }
        }
        Ok(())
    }
}

/// Amplitudes at every output time.
pub fn integrate_trajectory(
    a0: &AmplitudeState,
    model: &RingModel,
    kernels: &MemoryKernels,
    z: &NoisePath,
    grid: TimeGrid,
    unraveling: Unraveling,
) -> Result<Vec<AmplitudeState>> {
    let prop = Propagator::new(model, kernels, grid, unraveling)?;
    let mut out = Vec::with_capacity(grid.outputs());
    prop.integrate_with(&a0.a, z, |k, a| {
        out.push(AmplitudeState { a: a.to_vec(), t: a0.t + (k * grid.stride) as f64 * grid.dt })
    })?;
    Ok(out)
}

/// Precomputed master-equation generator.
#[derive(Clone, Debug)]
pub struct MasterEquation {
    n: usize,
    m: usize,
    rc: Option<usize>,
    jt: Vec<f64>,
    diag: Vec<f64>,
    gamma_rc: Vec<f64>,
    omega_rc: f64,
    kappa: f64,
    kernels: MemoryKernels,
    dephasing: bool,
}

struct MasterWork {
    jr: Vec<Complex64>,
    rj: Vec<Complex64>,
    o0: Vec<Complex64>,
    o1: Vec<Complex64>,
}

impl MasterEquation {
    pub fn new(model: &RingModel, kernels: &MemoryKernels) -> Result<Self> {
        if kernels.sites() != model.m {
            return Err(Error::validation(format!("bath has {} sites, ring has {}", kernels.sites(), model.m)));
        }
        let m = model.m;
        Ok(Self {
            n: model.dim(),
            m,
            rc: model.rc_index(),
            jt: model.offdiagonal_hopping().iter().copied().collect(),
            diag: (0..m).map(|p| model.omega[p] + model.j[[p, p]]).collect(),
            gamma_rc: model.gamma.clone(),
            omega_rc: model.omega_rc,
            kappa: model.kappa,
            dephasing: (0..m).any(|j| kernels.prefactor(j) != ZERO),
            kernels: kernels.clone(),
        })
    }

    fn work(&self) -> MasterWork {
        MasterWork {
            jr: vec![ZERO; self.m * self.n],
            rj: vec![ZERO; self.n * self.m],
            o0: vec![ZERO; self.m],
            o1: vec![ZERO; self.m],
        }
    }

    /// `d rho / dt` for a row-major `n x n` matrix.
    fn rhs(&self, t: f64, r: &[Complex64], out: &mut [Complex64], wk: &mut MasterWork) {
        let (n, m) = (self.n, self.m);
        let MasterWork { jr, rj, o0, o1 } = wk;
        // jr = Jt R (antenna rows), rj = R Jt (antenna columns)
        for p in 0..m {
            let row = &self.jt[p * m..(p + 1) * m];
            for q in 0..n {
                let mut acc = ZERO;
                for (k, c) in row.iter().enumerate() {
                    acc += r[k * n + q] * *c;
                }
                jr[p * n + q] = acc;
            }
        }
        for p in 0..n {
            let rrow = &r[p * n..p * n + m];
            for q in 0..m {
                let mut acc = ZERO;
                for (k, x) in rrow.iter().enumerate() {
                    acc += x * self.jt[k * m + q];
                }
                rj[p * m + q] = acc;
            }
        }
        // -i (H R - R H^dagger)
        for p in 0..n {
            for q in 0..n {
                let mut hr = match self.rc {
                    Some(rc) if p == rc => {
                        let mut acc = r[rc * n + q] * self.omega_rc;
                        for k in 0..m {
                            acc += r[k * n + q] * self.gamma_rc[k];
                        }
                        acc
                    }
                    _ => {
                        let mut acc = jr[p * n + q] + r[p * n + q] * self.diag[p];
                        if let Some(rc) = self.rc {
                            acc += r[rc * n + q] * self.gamma_rc[p];
                        }
                        acc
                    }
                };
                let rh = match self.rc {
                    Some(rc) if q == rc => {
                        let mut acc = r[p * n + rc] * self.omega_rc;
                        for k in 0..m {
                            acc += r[p * n + k] * self.gamma_rc[k];
                        }
                        acc
                    }
                    _ => {
                        let mut acc = rj[p * m + q] + r[p * n + q] * self.diag[q];
                        if let Some(rc) = self.rc {
                            acc += r[p * n + rc] * self.gamma_rc[q];
                        }
                        acc
                    }
                };
                hr -= rh;
                out[p * n + q] = -I * hr;
            }
        }
        if let Some(rc) = self.rc {
            for q in 0..n {
                out[rc * n + q] -= r[rc * n + q] * self.kappa;
                out[q * n + rc] -= r[q * n + rc] * self.kappa;
            }
        }
        if !self.dephasing {
            return;
        }
        for j in 0..m {
            o0[j] = self.kernels.o0(j, t);
            o1[j] = self.kernels.o1(j, t);
        }
        // zeroth order: -(O0*_q + O0_p) R_pq off the diagonal, kernels vanish on the RC
        for p in 0..n {
            let op = if p < m { o0[p] } else { ZERO };
            for q in 0..n {
                if p == q {
                    continue;
                }
                let oq = if q < m { o0[q].conj() } else { ZERO };
                out[p * n + q] -= (op + oq) * r[p * n + q];
            }
        }
        // first order: -i sum_j (O1*_j [L_j, R K_j] + O1_j [K_j R, L_j]), K_j = [Jt, L_j]
        for j in 0..m {
            let c = o1[j].conj();
            let c1 = o1[j];
            let rjj = r[j * n + j];
            let row = &self.jt[j * m..(j + 1) * m];
            for q in 0..n {
                let jtq = if q < m { row[q] } else { 0.0 };
                let f = c * (-rjj * jtq) + c1 * jr[j * n + q];
                out[j * n + q] += -I * f;
            }
            let fd = c * rj[j * m + j] - c1 * jr[j * n + j];
            out[j * n + j] += -I * fd;
            for p in 0..n {
                let jtp = if p < m { self.jt[p * m + j] } else { 0.0 };
                let f = -c * rj[p * m + j] + c1 * rjj * jtp;
                out[p * n + j] += -I * f;
            }
        }
    }
}

/// Master-equation time derivative at `t`.
pub fn master_rhs(t: f64, rho: &DensityState, model: &RingModel, kernels: &MemoryKernels) -> Result<Array2<Complex64>> {
    let n = model.dim();
    if rho.rho.dim() != (n, n) {
        return Err(Error::validation(format!("density matrix is {:?}, expected {n}x{n}", rho.rho.dim())));
    }
    let eq = MasterEquation::new(model, kernels)?;
    let r: Vec<Complex64> = rho.rho.iter().copied().collect();
    let mut out = vec![ZERO; n * n];
    eq.rhs(t, &r, &mut out, &mut eq.work());
    Ok(Array2::from_shape_vec((n, n), out).expect("shape"))
}

#[derive(Clone, Debug)]
pub struct MasterRun {
    pub states: Vec<DensityState>,
    /// Largest anti-Hermitian part removed by the per-step symmetrisation.
    pub max_hermiticity_drift: f64,
}

/// RK4 on the master equation, symmetrising `rho <- (rho + rho^dagger) / 2` after every step.
pub fn integrate_master(
    rho0: &DensityState,
    model: &RingModel,
    kernels: &MemoryKernels,
    grid: TimeGrid,
) -> Result<MasterRun> {
    let n = model.dim();
    if rho0.rho.dim() != (n, n) {
        return Err(Error::validation(format!("density matrix is {:?}, expected {n}x{n}", rho0.rho.dim())));
    }
    let eq = MasterEquation::new(model, kernels)?;
    let mut wk = eq.work();
    let mut r: Vec<Complex64> = rho0.rho.iter().copied().collect();
    let len = n * n;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]);
    let dt = grid.dt;
    let mut states = Vec::with_capacity(grid.outputs());
    let to_state =
        |r: &[Complex64], t: f64| DensityState { rho: Array2::from_shape_vec((n, n), r.to_vec()).expect("shape"), t };
    states.push(to_state(&r, rho0.t));
    let mut drift = 0.0_f64;
    for step in 0..grid.steps {
        let t = rho0.t + step as f64 * dt;
        eq.rhs(t, &r, &mut k1, &mut wk);
        for i in 0..len {
            tmp[i] = r[i] + k1[i] * (0.5 * dt);
        }
        eq.rhs(t + 0.5 * dt, &tmp, &mut k2, &mut wk);
        for i in 0..len {
            tmp[i] = r[i] + k2[i] * (0.5 * dt);
        }
        eq.rhs(t + 0.5 * dt, &tmp, &mut k3, &mut wk);
        for i in 0..len {
            tmp[i] = r[i] + k3[i] * dt;
        }
        eq.rhs(t + dt, &tmp, &mut k4, &mut wk);
        for i in 0..len {
            r[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
        for p in 0..n {
            for q in p..n {
                let (x, y) = (r[p * n + q], r[q * n + p]);
                drift = drift.max((x - y.conj()).norm() * 0.5);
                let s = (x + y.conj()) * 0.5;
                r[p * n + q] = s;
                r[q * n + p] = s.conj();
            }
        }
        if (step + 1) % grid.stride == 0 {
            if !r.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
                return Err(Error::numerical(format!("non-finite density matrix at t = {}", t + dt)));
            }
            states.push(to_state(&r, rho0.t + (step + 1) as f64 * dt));
        }
    }
    log::debug!("master equation: max hermiticity drift {drift:.3e}");
    Ok(MasterRun { states, max_hermiticity_drift: drift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{BathSpec, Convention};
    use crate::model::{hamiltonian_matrix, hopping_matrix, Distance};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rabi_dimer() -> RingModel {
        let j = ndarray::array![[0.0, 1.0], [1.0, 0.0]];
        RingModel::new(0.2, vec![0.0; 2], j, vec![0.0; 2], 0.0, 0.0, false).unwrap()
    }

    fn closed_kernels(m: usize) -> MemoryKernels {
        MemoryKernels::new(&BathSpec::uniform(m, 0.0, 10.0, 0.25).unwrap())
    }

    #[test]
    fn rabi_oscillation() {
        let model = rabi_dimer();
        let grid = TimeGrid::new(1e-3, 2.0, 100).unwrap();
        let z = NoisePath::zero(2, grid.noise_grid());
        let a0 = AmplitudeState { a: vec![c(1.0, 0.0), c(0.0, 0.0)], t: 0.0 };
        for unr in [Unraveling::Linear, Unraveling::Normalized] {
            let out = integrate_trajectory(&a0, &model, &closed_kernels(2), &z, grid, unr).unwrap();
            for s in &out {
                assert!((s.a[0].norm_sqr() - s.t.cos().powi(2)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn rhs_examples() {
        let model = rabi_dimer();
        let z = NoisePath::zero(2, NoiseGrid { h: 0.5e-3, len: 10 });
        let k = closed_kernels(2);
        let d = sse_rhs(0.0, &AmplitudeState { a: vec![c(1.0, 0.0), c(0.0, 0.0)], t: 0.0 }, &model, &k, &z).unwrap();
        assert_eq!(d, vec![c(0.0, 0.0), c(0.0, -1.0)]);
        let d = sse_rhs(0.0, &AmplitudeState { a: vec![c(0.0, 0.0); 2], t: 0.0 }, &model, &k, &z).unwrap();
        assert!(d.iter().all(|x| *x == c(0.0, 0.0)));
        assert!(sse_rhs(1.0, &AmplitudeState { a: vec![c(1.0, 0.0); 2], t: 0.0 }, &model, &k, &z).is_err());
    }

    #[test]
    fn single_site_fully_absorbed() {
        let model = RingModel::new(0.2, vec![0.0], ndarray::array![[0.0]], vec![0.5], 0.0, 1.0, true).unwrap();
        let grid = TimeGrid::new(1e-3, 60.0, 1000).unwrap();
        let z = NoisePath::zero(1, grid.noise_grid());
        let a0 = AmplitudeState { a: vec![c(1.0, 0.0), c(0.0, 0.0)], t: 0.0 };
        let out = integrate_trajectory(&a0, &model, &closed_kernels(1), &z, grid, Unraveling::Normalized).unwrap();
        let left: f64 = out.last().unwrap().a.iter().map(|x| x.norm_sqr()).sum();
        assert!(left < 1e-6, "{left}");
    }

    /// Dense operator form of the same generator.
    fn master_dense(model: &RingModel, kern: &MemoryKernels, t: f64, r: &Array2<Complex64>) -> Array2<Complex64> {
        let n = model.dim();
        let h = hamiltonian_matrix(model);
        let hd = h.t().mapv(|x| x.conj());
        let mut d = (h.dot(r) - r.dot(&hd)).mapv(|x| -I * x);
        let jt = model.offdiagonal_hopping().mapv(|x| c(x, 0.0));
        let mut big = Array2::<Complex64>::zeros((n, n));
        big.slice_mut(ndarray::s![..model.m, ..model.m]).assign(&jt);
        for j in 0..model.m {
            let mut p = Array2::<Complex64>::zeros((n, n));
            p[[j, j]] = c(1.0, 0.0);
            let k = big.dot(&p) - p.dot(&big);
            let ob = p.mapv(|x| x * kern.o0(j, t)) - k.mapv(|x| x * I * kern.o1(j, t));
            let obd = ob.t().mapv(|x| x.conj());
            d = d + p.dot(r).dot(&obd) - r.dot(&obd).dot(&p) + ob.dot(r).dot(&p) - p.dot(&ob).dot(r);
        }
        d
    }

    #[test]
    fn sparse_master_matches_operator_form() {
        let m = 5;
        let mut j = hopping_matrix(m, 0.2, Distance::Periodic).unwrap();
        j[[1, 1]] = 0.4;
        let omega = vec![0.1, -0.3, 0.7, 0.0, 0.2];
        let gam = vec![0.5, 0.2, 0.1, 0.3, 0.4];
        let model = RingModel::new(0.2, omega, j, gam, 0.3, 0.8, true).unwrap();
        let bath =
            BathSpec::new(vec![0.2, 0.3, 0.1, 0.4, 0.25], vec![5.0, 7.0, 9.0, 3.0, 4.0], 0.05, Convention::TwoGamma)
                .unwrap();
        let kern = MemoryKernels::new(&bath);
        let n = model.dim();
        let x = Array2::from_shape_fn((n, n), |(p, q)| c(((p * 7 + q * 3) % 5) as f64 - 2.0, ((p + 2 * q) % 3) as f64));
        let r = x.dot(&x.t().mapv(|v| v.conj()));
        let r = r.mapv(|v| v / r.diag().iter().sum::<Complex64>().re);
        let t = 0.17;
        let a = master_dense(&model, &kern, t, &r);
        let b = master_rhs(t, &DensityState { rho: r, t }, &model, &kern).unwrap();
        let err = (&a - &b).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn pure_dephasing_keeps_populations() {
        let m = 3;
        let model =
            RingModel::new(0.2, vec![0.0; m], ndarray::Array2::zeros((m, m)), vec![0.0; m], 0.0, 0.0, false).unwrap();
        let kern = MemoryKernels::new(&BathSpec::uniform(m, 0.4, 10.0, 0.25).unwrap());
        let rho = Array2::from_diag(&ndarray::arr1(&[c(0.5, 0.0), c(0.3, 0.0), c(0.2, 0.0)]));
        let d = master_rhs(0.3, &DensityState { rho, t: 0.3 }, &model, &kern).unwrap();
        assert!(d.iter().all(|x| x.norm() < 1e-15));
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(1e-3, 5.0, 10).is_ok());
        assert!(TimeGrid::new(1e-3, 5.0, 7).is_err());
        assert!(TimeGrid::new(0.0, 5.0, 1).is_err());
        let g = TimeGrid::new(1e-3, 1.0, 10).unwrap();
        assert_eq!(g.outputs(), 101);
        for (a, b) in g.halved().output_times().iter().zip(g.output_times()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
