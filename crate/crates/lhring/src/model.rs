//! Ring Hamiltonian in the single-excitation sector and its momentum picture.
//!
//! Sites `0..m` are antenna molecules at ring coordinate `r_j = d0 * (j + 1)`;
//! index `m` is the reaction centre (RC) when it is enabled.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Which site separation enters the smooth hopping profile.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distance {
    /// `min(|p-j|, M-|p-j|)`
    #[default]
    Periodic,
    /// `|p-j|`
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RingModel {
    pub m: usize,
    pub d0: f64,
    pub omega: Vec<f64>,
    /// Symmetric hopping; diagonal entries shift the site energies.
    pub j: Array2<f64>,
    /// Antenna to RC couplings.
    pub gamma: Vec<f64>,
    pub omega_rc: f64,
    pub kappa: f64,
    pub rc_enabled: bool,
}

impl RingModel {
    pub fn new(
        d0: f64,
        omega: Vec<f64>,
        j: Array2<f64>,
        gamma: Vec<f64>,
        omega_rc: f64,
        kappa: f64,
        rc_enabled: bool,
    ) -> Result<Self> {
        let m = omega.len();
        if m == 0 {
            return Err(Error::validation("ring needs at least one antenna site"));
        }
        if j.dim() != (m, m) {
            return Err(Error::validation(format!("hopping matrix is {:?}, expected {m}x{m}", j.dim())));
        }
        if gamma.len() != m {
            return Err(Error::validation(format!("{} RC couplings for {m} sites", gamma.len())));
        }
        for p in 0..m {
            for q in 0..p {
                if j[[p, q]] != j[[q, p]] {
                    return Err(Error::validation(format!("hopping matrix not symmetric at ({}, {})", p + 1, q + 1)));
                }
            }
        }
        if !(kappa >= 0.0) {
            return Err(Error::validation(format!("sink rate must be >= 0, got {kappa}")));
        }
        if !(d0 > 0.0) {
            return Err(Error::validation(format!("spacing must be > 0, got {d0}")));
        }
        let finite = omega.iter().chain(gamma.iter()).chain(j.iter()).all(|x| x.is_finite())
            && omega_rc.is_finite()
            && kappa.is_finite();
        if !finite {
            return Err(Error::validation("model parameters must be finite"));
        }
        if !rc_enabled && (gamma.iter().any(|&g| g != 0.0) || kappa != 0.0) {
            return Err(Error::validation("RC couplings and sink rate must vanish when the RC is disabled"));
        }
        Ok(Self { m, d0, omega, j, gamma, omega_rc, kappa, rc_enabled })
    }

    /// State-space dimension: `m`, plus one with the RC.
    pub fn dim(&self) -> usize {
        self.m + usize::from(self.rc_enabled)
    }

    pub fn rc_index(&self) -> Option<usize> {
        self.rc_enabled.then_some(self.m)
    }

    /// Hopping with the diagonal removed.
    pub fn offdiagonal_hopping(&self) -> Array2<f64> {
        let mut h = self.j.clone();
        for p in 0..self.m {
            h[[p, p]] = 0.0;
        }
        h
    }

    /// Largest system rate: off-diagonal hopping or energy spread.
    pub fn system_scale(&self) -> f64 {
        let mut s = 0.0_f64;
        for p in 0..self.m {
            for q in 0..self.m {
                if p != q {
                    s = s.max(self.j[[p, q]].abs());
                }
                s = s.max((self.omega[p] - self.omega[q]).abs());
            }
        }
        s
    }

    /// Energy of the uniform superposition over the antenna block.
    pub fn symmetric_mode_energy(&self) -> f64 {
        symmetric_mode_energy(&self.omega, &self.j)
    }

    /// Real (Hermitian) part of the Hamiltonian, row-major.
    pub fn hermitian_part(&self) -> Vec<f64> {
        let n = self.dim();
        let mut h = vec![0.0; n * n];
        for p in 0..self.m {
            for q in 0..self.m {
                h[p * n + q] = self.j[[p, q]];
            }
            h[p * n + p] += self.omega[p];
        }
        if let Some(rc) = self.rc_index() {
            for p in 0..self.m {
                h[p * n + rc] = self.gamma[p];
                h[rc * n + p] = self.gamma[p];
            }
            h[rc * n + rc] = self.omega_rc;
        }
        h
    }
}

pub fn symmetric_mode_energy(omega: &[f64], j: &Array2<f64>) -> f64 {
    let m = omega.len() as f64;
    (omega.iter().sum::<f64>() + j.sum()) / m
}

/// Smooth hopping `J_pj = 1 / (dist(p, j) * d0)` with zero diagonal.
pub fn hopping_matrix(m: usize, d0: f64, distance: Distance) -> Result<Array2<f64>> {
    if m < 2 {
        return Err(Error::validation("hopping profile needs at least two sites"));
    }
    if !(d0 > 0.0) {
        return Err(Error::validation(format!("spacing must be > 0, got {d0}")));
    }
    Ok(Array2::from_shape_fn((m, m), |(p, q)| {
        if p == q {
            return 0.0;
        }
        let diff = p.abs_diff(q);
        let dist = match distance {
            Distance::Periodic => diff.min(m - diff),
            Distance::Linear => diff,
        };
        1.0 / (dist as f64 * d0)
    }))
}

/// Full Hamiltonian; the sink appears as `-i kappa` on the RC diagonal.
pub fn hamiltonian_matrix(model: &RingModel) -> Array2<Complex64> {
    let n = model.dim();
    let re = model.hermitian_part();
    let mut h = Array2::from_shape_fn((n, n), |(p, q)| Complex64::new(re[p * n + q], 0.0));
    if let Some(rc) = model.rc_index() {
        h[[rc, rc]].im = -model.kappa;
    }
    h
}

#[derive(Clone, Debug)]
pub struct MomentumGrid {
    pub m: usize,
    pub d0: f64,
    /// `q[k] = 2 pi (k + 1) / (d0 m)`; the last entry is the q = 0 representative.
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    /// `phase[k * m + j] = exp(-i q_k r_j)`
    phase: Vec<Complex64>,
}

impl MomentumGrid {
    pub fn new(m: usize, d0: f64) -> Self {
        let q: Vec<f64> = (1..=m).map(|k| 2.0 * PI * k as f64 / (d0 * m as f64)).collect();
        let r: Vec<f64> = (1..=m).map(|j| d0 * j as f64).collect();
        let mut phase = Vec::with_capacity(m * m);
        for k in 1..=m {
            for j in 1..=m {
                // exact integer reduction keeps the table periodic to the last bit
                let turns = ((k * j) % m) as f64 / m as f64;
                phase.push(Complex64::from_polar(1.0, -2.0 * PI * turns));
            }
        }
        Self { m, d0, q, r, phase }
    }

    pub fn for_model(model: &RingModel) -> Self {
        Self::new(model.m, model.d0)
    }

    pub fn q0_index(&self) -> usize {
        self.m - 1
    }

    #[inline]
    pub fn phase(&self, k: usize, j: usize) -> Complex64 {
        self.phase[k * self.m + j]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentumSpectrum {
    pub amplitudes: Vec<Complex64>,
    pub populations: Vec<f64>,
}

/// `A_q = M^{-1/2} sum_j exp(-i q r_j) a_j` over the antenna block.
pub fn to_momentum(a: &[Complex64], grid: &MomentumGrid) -> Result<MomentumSpectrum> {
    if a.len() != grid.m {
        return Err(Error::validation(format!("{} amplitudes for a ring of {}", a.len(), grid.m)));
    }
    let norm = 1.0 / (grid.m as f64).sqrt();
    let amplitudes: Vec<Complex64> = (0..grid.m)
        .map(|k| a.iter().enumerate().map(|(j, x)| grid.phase(k, j) * x).sum::<Complex64>() * norm)
        .collect();
    let populations = amplitudes.iter().map(|x| x.norm_sqr()).collect();
    Ok(MomentumSpectrum { amplitudes, populations })
}

pub fn from_momentum(amplitudes: &[Complex64], grid: &MomentumGrid) -> Result<Vec<Complex64>> {
    if amplitudes.len() != grid.m {
        return Err(Error::validation(format!("{} momentum amplitudes for a ring of {}", amplitudes.len(), grid.m)));
    }
    let norm = 1.0 / (grid.m as f64).sqrt();
    Ok((0..grid.m)
        .map(|j| amplitudes.iter().enumerate().map(|(k, x)| grid.phase(k, j).conj() * x).sum::<Complex64>() * norm)
        .collect())
}

/// `Gamma_q = M^{-1} sum_j Gamma_j exp(-i q r_j)`.
pub fn coupling_spectrum(gamma: &[f64], grid: &MomentumGrid) -> Result<Vec<Complex64>> {
    if gamma.len() != grid.m {
        return Err(Error::validation(format!("{} couplings for a ring of {}", gamma.len(), grid.m)));
    }
    let inv = 1.0 / grid.m as f64;
    Ok((0..grid.m)
        .map(|k| gamma.iter().enumerate().map(|(j, &g)| grid.phase(k, j) * g).sum::<Complex64>() * inv)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(m: usize) -> RingModel {
        let j = hopping_matrix(m, 0.2, Distance::Periodic).unwrap();
        RingModel::new(0.2, vec![0.0; m], j, vec![0.5; m], 0.0, 1.0, true).unwrap()
    }

    #[test]
    fn hopping_examples() {
        let h = hopping_matrix(3, 0.2, Distance::Periodic).unwrap();
        for p in 0..3 {
            for q in 0..3 {
                if p != q {
                    assert!((h[[p, q]] - 5.0).abs() < 1e-12);
                }
            }
        }
        let h = hopping_matrix(6, 0.2, Distance::Periodic).unwrap();
        assert!((h[[0, 4]] - 2.5).abs() < 1e-12);
        let h = hopping_matrix(6, 0.2, Distance::Linear).unwrap();
        assert!((h[[0, 4]] - 1.25).abs() < 1e-12);
        assert!(hopping_matrix(4, 0.0, Distance::Periodic).is_err());
        assert!(hopping_matrix(1, 0.2, Distance::Periodic).is_err());
    }

    #[test]
    fn hamiltonian_fill() {
        let j = ndarray::array![[1.5, 1.8], [1.8, 1.0]];
        let m = RingModel::new(0.2, vec![0.0; 2], j, vec![0.0; 2], 0.0, 0.0, false).unwrap();
        let h = hamiltonian_matrix(&m);
        assert_eq!(h.dim(), (2, 2));
        assert_eq!(h[[0, 0]], Complex64::new(1.5, 0.0));
        assert_eq!(h[[0, 1]], Complex64::new(1.8, 0.0));
        assert_eq!(h[[1, 1]], Complex64::new(1.0, 0.0));

        let m = RingModel::new(0.2, vec![0.0], ndarray::array![[0.0]], vec![0.5], 0.0, 1.0, true).unwrap();
        let h = hamiltonian_matrix(&m);
        assert_eq!(h[[0, 1]], Complex64::new(0.5, 0.0));
        assert_eq!(h[[1, 0]], Complex64::new(0.5, 0.0));
        assert_eq!(h[[1, 1]], Complex64::new(0.0, -1.0));
    }

    #[test]
    fn single_site_without_rc() {
        let m = RingModel::new(0.2, vec![0.7], ndarray::array![[0.0]], vec![0.0], 0.0, 0.0, false).unwrap();
        let h = hamiltonian_matrix(&m);
        assert_eq!(h.dim(), (1, 1));
        assert_eq!(h[[0, 0]], Complex64::new(0.7, 0.0));
    }

    #[test]
    fn rejects_bad_models() {
        let j = ndarray::array![[0.0, 1.0], [1.1, 0.0]];
        assert!(RingModel::new(0.2, vec![0.0; 2], j, vec![0.0; 2], 0.0, 0.0, false).is_err());
        let j = ndarray::array![[0.0, 1.0], [1.0, 0.0]];
        assert!(RingModel::new(0.2, vec![0.0; 2], j.clone(), vec![0.0; 2], 0.0, -1.0, true).is_err());
        assert!(RingModel::new(0.2, vec![0.0; 2], j.clone(), vec![0.0; 3], 0.0, 0.0, true).is_err());
        assert!(RingModel::new(0.2, vec![0.0; 2], j, vec![0.1; 2], 0.0, 0.0, false).is_err());
    }

    #[test]
    fn momentum_examples() {
        let g = MomentumGrid::new(8, 0.2);
        let sym = vec![Complex64::new(1.0 / 8f64.sqrt(), 0.0); 8];
        let s = to_momentum(&sym, &g).unwrap();
        assert!((s.populations[g.q0_index()] - 1.0).abs() < 1e-12);
        let mut loc = vec![Complex64::default(); 8];
        loc[0] = Complex64::new(1.0, 0.0);
        let s = to_momentum(&loc, &g).unwrap();
        for p in s.populations {
            assert!((p - 0.125).abs() < 1e-12);
        }
        assert!(to_momentum(&loc[..3], &g).is_err());
    }

    #[test]
    fn uniform_couplings_only_feed_q0() {
        let g = MomentumGrid::new(8, 0.2);
        let s = coupling_spectrum(&[0.5; 8], &g).unwrap();
        for (k, x) in s.iter().enumerate() {
            if k == g.q0_index() {
                assert!((x - Complex64::new(0.5, 0.0)).norm() < 1e-12);
            } else {
                assert!(x.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn ring_scale_and_symmetric_energy() {
        let r = ring(32);
        assert!((r.system_scale() - 5.0).abs() < 1e-12);
        let direct: f64 = (1..32).map(|p| r.j[[0, p]]).sum();
        assert!((r.symmetric_mode_energy() - direct).abs() < 1e-12);
    }
}
