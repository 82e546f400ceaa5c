//! Scenario assembly, deterministic trajectory ensembles, convergence scans and sweeps.
//!
//! Ensemble sums use a fixed binary tree over trajectory indices: the range
//! `[lo, hi)` always splits at `lo + (hi - lo) / 2`, whatever the worker count.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::bath::{post_markov_validity, BathSpec, MemoryKernels, ValidityReport};
use crate::config::{Energies, Hopping, InitialKind, Method, ScenarioFile, SweepParam};
use crate::error::{Error, Result};
use crate::model::{hopping_matrix, symmetric_mode_energy, MomentumGrid, RingModel};
use crate::noise::{CirculantNoise, FftNoise, ModeEnsemble, NoiseMethod, NoisePath};
use crate::observables::{
    momentum_populations, momentum_populations_density, site_populations, site_populations_density, Layout, Moments,
    ObservableSeries,
};
use crate::propagation::{integrate_master, DensityState, Propagator, TimeGrid, Unraveling};
use crate::rng::{stream, Purpose};

/// Builds the ring described by a `[model]` table.
pub fn build_ring(f: &crate::config::ModelSection) -> Result<RingModel> {
    let m = f.m;
    if m == 0 {
        return Err(Error::validation("model.m must be >= 1"));
    }
    let omega = match f.energies {
        Energies::Uniform => f.omega.expand(m, "model.omega")?,
        Energies::Disorder => {
            let mut rng = stream(f.disorder_seed, Purpose::Disorder, 0, 0);
            (0..m).map(|_| f.omega0 * rng.random::<f64>()).collect()
        }
    };
    let j = match (&f.j, f.hopping) {
        (Some(rows), _) => {
            if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                return Err(Error::validation(format!("model.j must be {m}x{m}")));
            }
            Array2::from_shape_fn((m, m), |(p, q)| rows[p][q])
        }
        (None, Hopping::None) => Array2::zeros((m, m)),
        (None, Hopping::Nearest) => Array2::from_shape_fn((m, m), |(p, q)| {
            if p != q && ((p + 1) % m == q || (q + 1) % m == p) {
                f.j_nearest
            } else {
                0.0
            }
        }),
        (None, Hopping::Smooth) if m == 1 => Array2::zeros((1, 1)),
        (None, Hopping::Smooth) => hopping_matrix(m, f.d0, f.distance)?,
    };
    let gamma = if f.rc_enabled { f.coupling.expand(m, "model.coupling")? } else { vec![0.0; m] };
    let kappa = if f.rc_enabled { f.kappa } else { 0.0 };
    let omega_rc = f.omega_rc.unwrap_or_else(|| symmetric_mode_energy(&omega, &j));
    RingModel::new(f.d0, omega, j, gamma, omega_rc, kappa, f.rc_enabled)
}

pub fn build_bath(f: &crate::config::BathSection, m: usize) -> Result<BathSpec> {
    let g = f.g.expand(m, "bath.g")?;
    let gamma = f.gamma.expand(m, "bath.gamma")?;
    let beta = match f.beta {
        Some(b) => b,
        None => f.beta_gamma * m as f64 / gamma.iter().sum::<f64>(),
    };
    BathSpec::new(g, gamma, beta, f.convention)
}

fn initial_amplitudes(f: &ScenarioFile, model: &RingModel) -> Result<Vec<Complex64>> {
    let (m, n) = (model.m, model.dim());
    let init = &f.initial;
    let mut a = vec![Complex64::default(); n];
    match init.state {
        InitialKind::Site => {
            if init.site == 0 || init.site > m {
                return Err(Error::validation(format!("initial site {} outside 1..={m}", init.site)));
            }
            a[init.site - 1] = Complex64::new(1.0, 0.0);
        }
        InitialKind::Symmetric => {
            a[..m].fill(Complex64::new(1.0 / (m as f64).sqrt(), 0.0));
        }
        InitialKind::Momentum => {
            let k = init.momentum.unwrap_or(m);
            if k == 0 || k > m {
                return Err(Error::validation(format!("initial momentum index {k} outside 1..={m}")));
            }
            let grid = MomentumGrid::for_model(model);
            for (j, x) in a[..m].iter_mut().enumerate() {
                *x = grid.phase(k - 1, j).conj() / (m as f64).sqrt();
            }
        }
        InitialKind::Explicit => {
            if init.re.len() != n || !(init.im.is_empty() || init.im.len() == n) {
                return Err(Error::validation(format!("explicit initial state needs {n} amplitudes")));
            }
            for (i, x) in a.iter_mut().enumerate() {
                *x = Complex64::new(init.re[i], init.im.get(i).copied().unwrap_or(0.0));
            }
            let norm = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::validation("explicit initial state has zero norm"));
            }
            a.iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(a)
}

/// A fully resolved run description.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub model: RingModel,
    pub bath: BathSpec,
    pub initial: Vec<Complex64>,
    pub grid: TimeGrid,
}

impl Scenario {
    pub fn from_file(file: &ScenarioFile) -> Result<Self> {
        let model = build_ring(&file.model)?;
        let bath = build_bath(&file.bath, model.m)?;
        let initial = initial_amplitudes(file, &model)?;
        let r = &file.run;
        let grid = TimeGrid::new(r.dt, r.t_max, r.output_stride)?;
        if r.nm == 0 {
            return Err(Error::validation("run.nm must be >= 1"));
        }
        Ok(Self { file: file.clone(), model, bath, initial, grid })
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::from_file(&ScenarioFile::preset(name)?)
    }

    pub fn nm(&self) -> usize {
        self.file.run.nm
    }

    pub fn seed(&self) -> u64 {
        self.file.run.seed
    }

    pub fn with_nm(&self, nm: usize) -> Self {
        let mut s = self.clone();
        s.file.run.nm = nm;
        s
    }

    pub fn layout(&self) -> Layout {
        Layout { n: self.model.dim(), m: self.model.m }
    }

    pub fn omega_max(&self) -> f64 {
        self.file.run.omega_max_factor * self.bath.max_gamma()
    }

    pub fn validity(&self) -> Result<ValidityReport> {
        post_markov_validity(
            self.model.system_scale(),
            self.bath.min_gamma(),
            self.grid.t_max(),
            self.file.run.validity_order,
        )
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Worker count; `None` uses the global pool.
    pub threads: Option<usize>,
    pub single_thread: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseSummary {
    pub method: NoiseMethod,
    pub n_modes: usize,
    pub d_omega: f64,
    pub omega_max: f64,
    pub truncation_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clipped_fraction: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepCheck {
    pub dt: f64,
    pub max_deviation: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug)]
pub struct EnsembleStats {
    pub series: ObservableSeries,
    pub nm: usize,
    pub wall_seconds: f64,
    pub per_trajectory_seconds: f64,
    pub validity: ValidityReport,
    pub noise: Option<NoiseSummary>,
    pub step_check: Option<StepCheck>,
}

enum Source {
    Silent,
    Fft(FftNoise),
    Modes(ModeEnsemble),
    Circulant(CirculantNoise),
}

/// Everything a trajectory needs, built once per ensemble and shared read-only.
pub struct Ensemble<'a> {
    pub scenario: &'a Scenario,
    prop: Propagator,
    source: Source,
    mgrid: MomentumGrid,
    layout: Layout,
}

impl<'a> Ensemble<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        Self::with_grid(scenario, scenario.grid, None)
    }

    fn with_grid(scenario: &'a Scenario, grid: TimeGrid, fft_size: Option<usize>) -> Result<Self> {
        let kernels = MemoryKernels::new(&scenario.bath);
        let run = &scenario.file.run;
        let prop = Propagator::new(&scenario.model, &kernels, grid, run.unraveling)?;
        let ng = grid.noise_grid();
        let source = if scenario.bath.is_trivial() {
            Source::Silent
        } else {
            match run.noise {
                NoiseMethod::Fft => Source::Fft(match fft_size {
                    Some(n) => FftNoise::with_size(&scenario.bath, ng, n, scenario.omega_max())?,
                    None => FftNoise::new(&scenario.bath, ng, run.n_modes, scenario.omega_max())?,
                }),
                NoiseMethod::Modes => {
                    Source::Modes(crate::noise::discretize_bath(&scenario.bath, run.n_modes, scenario.omega_max())?)
                }
                NoiseMethod::Circulant => Source::Circulant(CirculantNoise::new(&scenario.bath, ng)?),
            }
        };
        Ok(Self { scenario, prop, source, mgrid: MomentumGrid::for_model(&scenario.model), layout: scenario.layout() })
    }

    pub fn propagator(&self) -> &Propagator {
        &self.prop
    }

    pub fn deterministic(&self) -> bool {
        matches!(self.source, Source::Silent)
    }

    pub fn noise_summary(&self) -> Option<NoiseSummary> {
        let modes = |m: &ModeEnsemble, method| NoiseSummary {
            method,
            n_modes: m.n_modes(),
            d_omega: m.d_omega,
            omega_max: m.omega_max(),
            truncation_error: m.truncation_error,
            clipped_fraction: None,
        };
        match &self.source {
            Source::Silent => None,
            Source::Fft(f) => Some(modes(&f.modes, NoiseMethod::Fft)),
            Source::Modes(m) => Some(modes(m, NoiseMethod::Modes)),
            Source::Circulant(c) => Some(NoiseSummary {
                method: NoiseMethod::Circulant,
                n_modes: 0,
                d_omega: 0.0,
                omega_max: 0.0,
                truncation_error: 0.0,
                clipped_fraction: Some(c.clipped_fraction),
            }),
        }
    }

    pub fn noise_path(&self, trajectory: u64) -> Result<NoisePath> {
        let seed = self.scenario.seed();
        let ng = self.prop.grid.noise_grid();
        Ok(match &self.source {
            Source::Silent => NoisePath::zero(self.scenario.model.m, ng),
            Source::Fft(f) => f.sample(seed, trajectory),
            Source::Modes(m) => crate::noise::sample_path(m, ng, seed, trajectory)?,
            Source::Circulant(c) => c.sample(seed, trajectory),
        })
    }

    /// Observable rows `[time][layout]` of one trajectory, flattened.
    pub fn trajectory(&self, trajectory: u64) -> Result<Vec<f64>> {
        let z = self.noise_path(trajectory)?;
        let w = self.layout.width();
        let mut rows = vec![0.0; self.prop.grid.outputs() * w];
        let q0 = self.mgrid.q0_index();
        self.prop
            .integrate_with(&self.scenario.initial, &z, |k, a| {
                let pops = site_populations(a);
                let pq = momentum_populations(a, &self.mgrid);
                self.layout.fill(&pops, &pq, q0, &mut rows[k * w..(k + 1) * w]);
            })
            .map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("trajectory {trajectory}: {msg}")),
                other => other,
            })?;
        Ok(rows)
    }

    fn reduce(&self, lo: u64, hi: u64, parallel: bool) -> Result<Moments> {
        if hi - lo == 1 {
            return Ok(Moments::single(self.trajectory(lo)?));
        }
        let mid = lo + (hi - lo) / 2;
        let (a, b) = if parallel {
            join(|| self.reduce(lo, mid, true), || self.reduce(mid, hi, true))
        } else {
            (self.reduce(lo, mid, false), self.reduce(mid, hi, false))
        };
        Ok(Moments::merge(a?, b?))
    }

    /// Moments over trajectories `0..nm`.
    pub fn moments(&self, nm: usize, opts: &RunOptions) -> Result<Moments> {
        if nm == 0 {
            return Err(Error::validation("ensemble needs at least one trajectory"));
        }
        if self.deterministic() {
            return Ok(Moments::repeated(self.trajectory(0)?, nm as u64));
        }
        if opts.single_thread || !cfg!(feature = "parallel") {
            return self.reduce(0, nm as u64, false);
        }
        with_pool(opts.threads, || self.reduce(0, nm as u64, true))
    }
}

#[cfg(feature = "parallel")]
fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA,
    B: FnOnce() -> RB,
{
    (a(), b())
}

#[cfg(feature = "parallel")]
fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::validation(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_pool<T>(_threads: Option<usize>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f()
}

/// Re-runs trajectory 0 at half the step and compares every observable.
fn step_halving_check(s: &Scenario, base: &Ensemble<'_>, tolerance: f64) -> Result<Option<StepCheck>> {
    let fine_size = match &base.source {
        Source::Circulant(_) => {
            log::warn!("step-halving check skipped: circulant noise is grid dependent");
            return Ok(None);
        }
        Source::Fft(f) => Some(2 * f.n_fft()),
        _ => None,
    };
    let fine = Ensemble::with_grid(s, s.grid.halved(), fine_size)?;
    let a = base.trajectory(0)?;
    let b = fine.trajectory(0)?;
    let dev = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    log::info!("step-halving check at dt = {}: max deviation {dev:.3e}", s.grid.dt);
    if !(dev <= tolerance) {
        return Err(Error::numerical(format!(
            "step-halving check failed at dt = {}: deviation {dev:.3e} exceeds {tolerance:.1e}",
            s.grid.dt
        )));
    }
    Ok(Some(StepCheck { dt: s.grid.dt, max_deviation: dev, tolerance }))
}

/// Seconds since the call; always zero where the platform has no clock.
#[cfg(not(target_arch = "wasm32"))]
fn stopwatch() -> impl Fn() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}

/// Runs `nm` trajectories and reduces them deterministically.
pub fn run_ensemble(s: &Scenario, opts: &RunOptions) -> Result<EnsembleStats> {
    let elapsed = stopwatch();
    let validity = s.validity()?;
    log::info!("validity: S = {:.4}, gamma = {:.4}, verdict {}", validity.s, validity.gamma, validity.verdict);
    let ens = Ensemble::new(s)?;
    let step_check = if s.file.run.step_check { step_halving_check(s, &ens, s.file.run.step_tolerance)? } else { None };
    let nm = s.nm();
    let mom = ens.moments(nm, opts)?;
    let series = ObservableSeries::from_moments(s.grid.output_times(), s.layout(), &mom);
    let wall = elapsed();
    Ok(EnsembleStats {
        series,
        nm,
        wall_seconds: wall,
        per_trajectory_seconds: wall / nm as f64,
        validity,
        noise: ens.noise_summary(),
        step_check,
    })
}

#[derive(Clone, Debug)]
pub struct MasterStats {
    pub series: ObservableSeries,
    pub states: Vec<DensityState>,
    pub max_hermiticity_drift: f64,
    pub wall_seconds: f64,
    pub validity: ValidityReport,
}

/// Density-matrix counterpart of [`run_ensemble`].
pub fn run_master(s: &Scenario) -> Result<MasterStats> {
    let elapsed = stopwatch();
    let validity = s.validity()?;
    let kernels = MemoryKernels::new(&s.bath);
    let run = integrate_master(&DensityState::pure(&s.initial), &s.model, &kernels, s.grid)?;
    let layout = s.layout();
    let grid = MomentumGrid::for_model(&s.model);
    let w = layout.width();
    let mut rows = vec![0.0; run.states.len() * w];
    for (k, st) in run.states.iter().enumerate() {
        let pops = site_populations_density(&st.rho);
        let pq = momentum_populations_density(&st.rho, &grid);
        layout.fill(&pops, &pq, grid.q0_index(), &mut rows[k * w..(k + 1) * w]);
    }
    let series = ObservableSeries::from_rows(s.grid.output_times(), layout, &rows);
    Ok(MasterStats {
        series,
        states: run.states,
        max_hermiticity_drift: run.max_hermiticity_drift,
        wall_seconds: elapsed(),
        validity,
    })
}

/// Runs whichever method the scenario selects.
pub fn run(s: &Scenario, opts: &RunOptions) -> Result<(ObservableSeries, Option<EnsembleStats>)> {
    match s.file.run.method {
        Method::Sse => {
            let st = run_ensemble(s, opts)?;
            Ok((st.series.clone(), Some(st)))
        }
        Method::Master => Ok((run_master(s)?.series, None)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub nm: usize,
    pub p_t_final: f64,
    pub stderr_final: f64,
    /// `max_t |P_T(nm) - P_T(previous nm)|`
    pub max_deviation: Option<f64>,
}

/// Same seed for every ensemble, so each one extends the previous.
pub fn convergence_scan(s: &Scenario, nm_list: &[usize], opts: &RunOptions) -> Result<Vec<ScanRow>> {
    let mut rows: Vec<ScanRow> = Vec::with_capacity(nm_list.len());
    let mut prev: Option<Vec<f64>> = None;
    for &nm in nm_list {
        let st = run_ensemble(&s.with_nm(nm), opts)?;
        let p = &st.series.p_t;
        let dev = prev.as_ref().map(|q| p.iter().zip(q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        rows.push(ScanRow {
            nm,
            p_t_final: *p.last().expect("series"),
            stderr_final: *st.series.p_t_se.last().expect("series"),
            max_deviation: dev,
        });
        prev = Some(p.clone());
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub p_t: f64,
    pub stderr: f64,
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], param: SweepParam, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# lhring-sweep v1")?;
    writeln!(w, "{param},P_T,P_T_stderr")?;
    for r in rows {
        writeln!(w, "{},{:e},{:e}", r.value, r.p_t, r.stderr)?;
    }
    Ok(())
}

/// One ensemble (or master run) per value, read out at `readout`.
pub fn sweep(
    file: &ScenarioFile,
    param: SweepParam,
    values: &[f64],
    readout: f64,
    opts: &RunOptions,
) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&v| {
            let mut f = file.clone();
            f.set(param, v);
            let s = Scenario::from_file(&f)?;
            let (series, _) = run(&s, opts)?;
            let k = series
                .index_at(readout)
                .filter(|&k| (series.t[k] - readout).abs() <= 0.5 * s.grid.dt)
                .ok_or_else(|| Error::validation(format!("readout time {readout} is not an output time")))?;
            Ok(SweepRow { value: v, p_t: series.p_t[k], stderr: series.p_t_se[k] })
        })
        .collect()
}

/// Deterministic single-trajectory run for noise-free scenarios, irrespective of `nm`.
pub fn closed_series(s: &Scenario) -> Result<ObservableSeries> {
    if !s.bath.is_trivial() {
        return Err(Error::validation("closed run requested with a coupled bath"));
    }
    let mut one = s.with_nm(1);
    one.file.run.unraveling = Unraveling::Linear;
    let ens = Ensemble::new(&one)?;
    let rows = ens.trajectory(0)?;
    Ok(ObservableSeries::from_rows(s.grid.output_times(), s.layout(), &rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build() {
        for name in crate::config::PRESETS {
            let s = Scenario::preset(name).unwrap();
            let norm: f64 = s.initial.iter().map(|x| x.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_rc_resonance_default() {
        let s = Scenario::preset("ring-closed").unwrap();
        let direct: f64 = (1..32).map(|p| s.model.j[[0, p]]).sum();
        assert!((s.model.omega_rc - direct).abs() < 1e-12);
    }

    #[test]
    fn momentum_initial_state_is_a_plane_wave() {
        let mut f = ScenarioFile::preset("ring-closed").unwrap();
        f.initial.state = InitialKind::Momentum;
        f.initial.momentum = Some(3);
        let s = Scenario::from_file(&f).unwrap();
        let pq = momentum_populations(&s.initial, &MomentumGrid::for_model(&s.model));
        assert!((pq[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disorder_is_seeded() {
        let a = Scenario::preset("ring-disorder").unwrap();
        let b = Scenario::preset("ring-disorder").unwrap();
        assert_eq!(a.model.omega, b.model.omega);
        assert!(a.model.omega.iter().all(|&w| (0.0..20.0).contains(&w)));
        let mut f = a.file.clone();
        f.model.disorder_seed = 2;
        assert_ne!(Scenario::from_file(&f).unwrap().model.omega, a.model.omega);
    }

    #[test]
    fn unknown_sweep_parameter() {
        assert!("beta".parse::<SweepParam>().is_err());
        assert_eq!("omega0-disorder".parse::<SweepParam>().unwrap(), SweepParam::Omega0Disorder);
    }
}
