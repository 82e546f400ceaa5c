//! Local Drude-Lorentz environment: correlation function, spectral density,
//! time-integrated memory kernels and the post-Markov validity diagnostic.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign and weight of the imaginary part of the correlation `alpha(t)`.
///
/// `DrudeLorentz` is the high-temperature limit of the Drude-Lorentz spectral
/// density, `g (2/beta - i gamma) e^{-gamma t}`, which is what the sampled
/// noise realises. `TwoGamma` is `g (2/beta + 2 i gamma) e^{-gamma t}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    #[default]
    DrudeLorentz,
    TwoGamma,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BathSpec {
    pub g: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: f64,
    pub local: bool,
    pub convention: Convention,
}

impl BathSpec {
    pub fn new(g: Vec<f64>, gamma: Vec<f64>, beta: f64, convention: Convention) -> Result<Self> {
        if g.len() != gamma.len() || g.is_empty() {
            return Err(Error::validation(format!("bath has {} couplings and {} decay rates", g.len(), gamma.len())));
        }
        if let Some(x) = g.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::validation(format!("bath coupling must be >= 0, got {x}")));
        }
        if let Some(x) = gamma.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
            return Err(Error::validation(format!("bath decay rate must be > 0, got {x}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::validation(format!("inverse temperature must be > 0, got {beta}")));
        }
        Ok(Self { g, gamma, beta, local: true, convention })
    }

    /// Same `g`, `gamma` on every site with `beta = beta_gamma / gamma`.
    pub fn uniform(sites: usize, g: f64, gamma: f64, beta_gamma: f64) -> Result<Self> {
        Self::new(vec![g; sites], vec![gamma; sites], beta_gamma / gamma, Convention::default())
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }

    pub fn sites(&self) -> usize {
        self.g.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.g.iter().all(|&g| g == 0.0)
    }

    pub fn max_gamma(&self) -> f64 {
        self.gamma.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_gamma(&self) -> f64 {
        self.gamma.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Prefactor `A_j` with `alpha_j(t) = A_j e^{-gamma_j t}` in the configured convention.
    pub fn prefactor(&self, site: usize) -> Complex64 {
        let (g, gam) = (self.g[site], self.gamma[site]);
        match self.convention {
            Convention::DrudeLorentz => Complex64::new(2.0 * g / self.beta, -g * gam),
            Convention::TwoGamma => Complex64::new(2.0 * g / self.beta, 2.0 * g * gam),
        }
    }

    /// Kernel `alpha_j(t)` in the configured convention.
    pub fn correlation(&self, t: f64, site: usize) -> Complex64 {
        self.prefactor(site) * (-self.gamma[site] * t).exp()
    }
}

fn check_site(site: usize, spec: &BathSpec) -> Result<()> {
    if site >= spec.sites() {
        return Err(Error::validation(format!("site {site} out of range")));
    }
    Ok(())
}

/// `g (2/beta + 2 i gamma) e^{-gamma t}`, independent of the configured convention.
pub fn alpha_t(t: f64, site: usize, spec: &BathSpec) -> Result<Complex64> {
    if !(t >= 0.0) {
        return Err(Error::validation(format!("time must be >= 0, got {t}")));
    }
    check_site(site, spec)?;
    let (g, gam) = (spec.g[site], spec.gamma[site]);
    Ok(Complex64::new(2.0 * g / spec.beta, 2.0 * g * gam) * (-gam * t).exp())
}

/// Drude-Lorentz `J(w) = 2 g w gamma / (w^2 + gamma^2)`.
pub fn spectral_density(omega: f64, site: usize, spec: &BathSpec) -> f64 {
    let (g, gam) = (spec.g[site], spec.gamma[site]);
    2.0 * g * omega * gam / (omega * omega + gam * gam)
}

/// `1 - e^{-x}`
fn lower1(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// `1 - (1 + x) e^{-x}`, series near zero to avoid cancellation.
fn lower2(x: f64) -> f64 {
    if x < 0.5 {
        let mut term = x * x / 2.0;
        let mut sum = 0.0_f64;
        let mut k = 2.0;
        while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
            sum += (k - 1.0) * term;
            k += 1.0;
            term *= -x / k;
        }
        sum
    } else {
        lower1(x) - x * (-x).exp()
    }
}

/// `O^n(t) = int_0^t s^n alpha(s) ds` in closed form for `n` in {0, 1}.
pub fn memory_kernel(n: u32, t: f64, site: usize, spec: &BathSpec) -> Result<Complex64> {
    if !(t >= 0.0) {
        return Err(Error::validation(format!("time must be >= 0, got {t}")));
    }
    check_site(site, spec)?;
    let a = spec.prefactor(site);
    let gam = spec.gamma[site];
    match n {
        0 => Ok(a * lower1(gam * t) / gam),
        1 => Ok(a * lower2(gam * t) / (gam * gam)),
        _ => Err(Error::validation(format!("memory kernel order must be 0 or 1, got {n}"))),
    }
}

/// Per-site closed-form evaluators for the two memory kernels.
#[derive(Clone, Debug)]
pub struct MemoryKernels {
    a: Vec<Complex64>,
    gamma: Vec<f64>,
}

impl MemoryKernels {
    pub fn new(spec: &BathSpec) -> Self {
        Self { a: (0..spec.sites()).map(|j| spec.prefactor(j)).collect(), gamma: spec.gamma.clone() }
    }

    pub fn sites(&self) -> usize {
        self.a.len()
    }

    pub fn prefactor(&self, site: usize) -> Complex64 {
        self.a[site]
    }

    pub fn gamma(&self, site: usize) -> f64 {
        self.gamma[site]
    }

    #[inline]
    pub fn o0(&self, site: usize, t: f64) -> Complex64 {
        let gam = self.gamma[site];
        self.a[site] * lower1(gam * t) / gam
    }

    #[inline]
    pub fn o1(&self, site: usize, t: f64) -> Complex64 {
        let gam = self.gamma[site];
        self.a[site] * lower2(gam * t) / (gam * gam)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidityReport {
    pub s: f64,
    pub gamma: f64,
    pub ratio: f64,
    pub t_max: f64,
    pub n_max: usize,
    /// `F_n(t_max)` for `n = 0..=n_max`.
    pub f: Vec<f64>,
    pub verdict: bool,
    pub samples: usize,
}

impl ValidityReport {
    /// Plain-text table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "S = {:.6}  gamma = {:.6}  S/gamma = {:.6}  t_max = {}\n{:>4} {:>16} {:>16}\n",
            self.s, self.gamma, self.ratio, self.t_max, "n", "F_n", "F_n+1/F_n"
        );
        for (n, f) in self.f.iter().enumerate() {
            let r = self.f.get(n + 1).map(|x| x / f);
            out += &format!("{:>4} {:>16.8e} {:>16}\n", n, f, r.map(|x| format!("{x:.8e}")).unwrap_or_default());
        }
        out += &format!("verdict: {}\n", if self.verdict { "monotone" } else { "not monotone" });
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,F_n,ratio")?;
        for (n, f) in self.f.iter().enumerate() {
            match self.f.get(n + 1) {
                Some(next) => writeln!(w, "{n},{f:e},{:e}", next / f)?,
                None => writeln!(w, "{n},{f:e},")?,
            }
        }
        Ok(())
    }
}

/// `F_n(t) = (S/gamma)^n (Gamma(1+n) - Gamma(1+n, t gamma)) / gamma`.
pub fn validity_function(n: usize, t: f64, s: f64, gamma: f64) -> Result<f64> {
    let x = t * gamma;
    let lower = if x == 0.0 { 0.0 } else { statrs::function::gamma::gamma_li(n as f64 + 1.0, x) };
    let scale = (s / gamma).powi(n as i32);
    let f = if scale == 0.0 { 0.0 } else { scale * lower / gamma };
    if !f.is_finite() || !lower.is_finite() {
        return Err(Error::Overflow(format!(
            "F_{n} at t gamma = {x} with S/gamma = {} is not representable",
            s / gamma
        )));
    }
    Ok(f)
}

/// Samples `F_n` on `t_k = t_max k / samples` and checks `F_n > F_{n+1}`.
/// Orders that vanish identically (`S = 0`) do not break the verdict.
pub fn post_markov_validity(s: f64, gamma: f64, t_max: f64, n_max: usize) -> Result<ValidityReport> {
    const SAMPLES: usize = 200;
    if !(s >= 0.0) || !(gamma > 0.0) || !(t_max > 0.0) || n_max < 1 {
        return Err(Error::validation(format!(
            "validity needs S >= 0, gamma > 0, t_max > 0, n_max >= 1 (got {s}, {gamma}, {t_max}, {n_max})"
        )));
    }
    let mut verdict = true;
    for k in 1..=SAMPLES {
        let t = t_max * k as f64 / SAMPLES as f64;
        let mut prev = validity_function(0, t, s, gamma)?;
        for n in 1..=n_max {
            let next = validity_function(n, t, s, gamma)?;
            // both zero happens only for S = 0 and counts as decreasing
            if next > prev || (next == prev && prev != 0.0) {
                verdict = false;
            }
            prev = next;
        }
    }
    let f = (0..=n_max).map(|n| validity_function(n, t_max, s, gamma)).collect::<Result<Vec<_>>>()?;
    Ok(ValidityReport { s, gamma, ratio: s / gamma, t_max, n_max, f, verdict, samples: SAMPLES })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(g: f64, gamma: f64, beta: f64) -> BathSpec {
        BathSpec::new(vec![g], vec![gamma], beta, Convention::TwoGamma).unwrap()
    }

    #[test]
    fn alpha_examples() {
        let s = spec(0.4, 100.0, 0.25 / 100.0);
        let a = alpha_t(0.0, 0, &s).unwrap();
        assert!((a - Complex64::new(320.0, 80.0)).norm() < 1e-12);
        assert!(alpha_t(1e3, 0, &s).unwrap().norm() < 1e-300);
        assert_eq!(alpha_t(0.3, 0, &spec(0.0, 10.0, 1.0)).unwrap(), Complex64::default());
        assert!(alpha_t(-1.0, 0, &s).is_err());
    }

    #[test]
    fn spectral_density_examples() {
        let s = spec(0.4, 10.0, 1.0);
        assert!((spectral_density(10.0, 0, &s) - 0.4).abs() < 1e-15);
        assert_eq!(spectral_density(0.0, 0, &s), 0.0);
        assert!((spectral_density(100.0, 0, &s) - 800.0 / 10100.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_limits() {
        let s = spec(0.3, 10.0, 0.025);
        let a = s.prefactor(0);
        assert_eq!(memory_kernel(0, 0.0, 0, &s).unwrap(), Complex64::default());
        assert_eq!(memory_kernel(1, 0.0, 0, &s).unwrap(), Complex64::default());
        assert!((memory_kernel(0, 50.0, 0, &s).unwrap() - a / 10.0).norm() < 1e-12);
        assert!((memory_kernel(1, 50.0, 0, &s).unwrap() - a / 100.0).norm() < 1e-12);
        assert!(memory_kernel(2, 1.0, 0, &s).is_err());
    }

    #[test]
    fn series_and_direct_branches_meet() {
        let x = 0.5;
        let direct = lower1(x) - x * (-x).exp();
        assert!((lower2(x - 1e-12) - direct).abs() < 1e-12);
        assert!((lower2(1e-4) - (0.5e-8 - 1e-12 / 3.0)).abs() < 1e-16);
    }

    #[test]
    fn validity_examples() {
        let r = post_markov_validity(0.0, 10.0, 5.0, 4).unwrap();
        assert!(r.verdict);
        assert!(r.f[0] > 0.0 && r.f[1..].iter().all(|&f| f == 0.0));
        assert!(!post_markov_validity(20.0, 10.0, 10.0, 2).unwrap().verdict);
        assert!(post_markov_validity(1.0, 10.0, 1e3, 9).unwrap().verdict);
        assert!(post_markov_validity(1.0, 0.0, 1.0, 2).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(validity_function(170, 1e4, 1e6, 1.0), Err(Error::Overflow(_))));
    }
}
