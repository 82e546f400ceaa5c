//! `lhring` command-line front end.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lhring::bath::{alpha_t, ValidityReport};
use lhring::config::{ScenarioFile, SweepParam, Values, PRESETS};
use lhring::engine::{run, run_master, sweep, write_sweep_csv, Ensemble, RunOptions, Scenario};
use lhring::noise::{empirical_correlation, FftNoise, NoiseGrid, NoisePath};
use lhring::observables::ObservableSeries;
use lhring::Complex64;

const OUT_ENV: &str = "LHRING_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "lhring",
    version,
    about = "Excitation transport on a light-harvesting ring with a reaction-centre sink"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write observables, manifest, validity and timing files.
    Run {
        #[command(flatten)]
        src: Source,
        #[command(flatten)]
        over: Overrides,
        #[command(flatten)]
        out: Output,
        /// Also render an SVG of the transport observables.
        #[arg(long)]
        plot: bool,
    },
    /// Compare the trajectory ensemble with the master equation on the dimer.
    DimerCheck {
        #[command(flatten)]
        over: Overrides,
        /// Override the bath coupling of the dimer.
        #[arg(long)]
        g: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Read out P_T at a fixed time across a parameter grid.
    Sweep {
        #[command(flatten)]
        src: Source,
        #[command(flatten)]
        over: Overrides,
        /// g, gamma, kappa or omega0-disorder; defaults to the scenario's [sweep] table.
        #[arg(long)]
        parameter: Option<String>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        readout: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Print the post-Markov validity table for a scenario.
    Validity {
        #[command(flatten)]
        src: Source,
        /// Override the bath decay rate.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        tmax: Option<f64>,
    },
    /// Sample noise paths and compare their statistics with the discrete and closed-form targets.
    NoiseCheck {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value_t = 2000)]
        paths: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render CSV outputs as an SVG figure.
    Plot {
        /// Observable or sweep CSV files.
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = plot::Layout::Auto)]
        layout: plot::Layout,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// List the bundled presets, or print one as TOML.
    Presets { name: Option<String> },
}

#[derive(Args, Debug)]
struct Source {
    /// Scenario file (or a run manifest).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled scenario name.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long)]
    nm: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    /// Worker threads for the ensemble.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    single_thread: bool,
}

#[derive(Args, Debug)]
struct Output {
    #[arg(long, env = OUT_ENV, default_value = "out")]
    out_dir: PathBuf,
    /// Include site and momentum populations in the CSV.
    #[arg(long)]
    full: bool,
}

impl Overrides {
    fn apply(&self, f: &mut ScenarioFile) {
        if let Some(nm) = self.nm {
            f.run.nm = nm;
        }
        if let Some(seed) = self.seed {
            f.run.seed = seed;
        }
        if let Some(dt) = self.dt {
            f.run.dt = dt;
        }
        if let Some(t) = self.tmax {
            f.run.t_max = t;
        }
    }

    fn options(&self) -> RunOptions {
        RunOptions { threads: self.threads, single_thread: self.single_thread }
    }
}

impl Source {
    fn load(&self) -> lhring::Result<ScenarioFile> {
        match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path)?;
                ScenarioFile::parse(&text).map_err(|e| {
                    lhring::Error::Config(format!(
                        "{}: {}",
                        path.display(),
                        e.to_string().trim_start_matches("config: ")
                    ))
                })
            }
            (None, Some(name)) => ScenarioFile::preset(name),
            (None, None) => Err(lhring::Error::validation("either --config or --preset is required")),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<lhring::Error>().map_or(2, |x| x.exit_code());
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::Run { src, over, out, plot } => cmd_run(&src, &over, &out, plot),
        Command::DimerCheck { over, g, out } => cmd_dimer_check(&over, g, &out),
        Command::Sweep { src, over, parameter, values, readout, out } => {
            cmd_sweep(&src, &over, parameter, values, readout, &out)
        }
        Command::Validity { src, gamma, tmax } => cmd_validity(&src, gamma, tmax),
        Command::NoiseCheck { src, paths, seed } => cmd_noise_check(&src, paths, seed),
        Command::Plot { csv, layout, out } => {
            let out = out.unwrap_or_else(|| csv[0].with_extension("svg"));
            plot::render(&csv, layout, &out)?;
            println!("{}", out.display());
            Ok(0)
        }
        Command::Presets { name: None } => {
            for p in PRESETS {
                println!("{p}");
            }
            Ok(0)
        }
        Command::Presets { name: Some(n) } => {
            print!(
                "{}",
                lhring::config::preset_text(&n)
                    .ok_or_else(|| lhring::Error::validation(format!("unknown preset {n:?}")))?
            );
            Ok(0)
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn stem(f: &ScenarioFile) -> String {
    if f.name.is_empty() {
        "run".to_string()
    } else {
        f.name.clone()
    }
}

fn validity_text(v: &ValidityReport) -> String {
    let mut s = format!(
        "S = {:.6}\ngamma = {:.6}\nS/gamma = {:.6}\nt_max = {}\n\n n  F_n(t_max)\n",
        v.s, v.gamma, v.ratio, v.t_max
    );
    for (n, f) in v.f.iter().enumerate() {
        s.push_str(&format!("{n:>2}  {f:.6e}\n"));
    }
    s.push_str(&format!("\nverdict: {}\n", if v.verdict { "expansion valid" } else { "expansion not justified" }));
    s
}

fn write_validity(dir: &Path, v: &ValidityReport) -> anyhow::Result<(PathBuf, PathBuf)> {
    let txt = dir.join("validity.txt");
    fs::write(&txt, validity_text(v))?;
    let csv = dir.join("validity.csv");
    let mut body = String::from("n,F_n\n");
    for (n, f) in v.f.iter().enumerate() {
        body.push_str(&format!("{n},{f:e}\n"));
    }
    fs::write(&csv, body)?;
    Ok((txt, csv))
}

fn manifest(file: &ScenarioFile, command: &str, files: &[&Path], extra: toml::Table) -> anyhow::Result<String> {
    let mut meta = toml::Table::new();
    meta.insert("tool".into(), "lhring".into());
    meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    meta.insert("command".into(), command.into());
    meta.insert("created_unix".into(), toml::Value::Integer(unix_now() as i64));
    meta.insert("seed".into(), toml::Value::Integer(file.run.seed as i64));
    meta.insert("nm".into(), toml::Value::Integer(file.run.nm as i64));
    meta.insert("outputs".into(), toml::Value::Array(files.iter().map(|p| p.display().to_string().into()).collect()));
    meta.extend(extra);
    let mut doc = toml::Table::new();
    doc.insert("meta".into(), toml::Value::Table(meta));
    doc.insert("scenario".into(), toml::Value::try_from(file).context("serialising scenario")?);
    Ok(toml::to_string(&doc)?)
}

fn cmd_run(src: &Source, over: &Overrides, out: &Output, want_plot: bool) -> anyhow::Result<u8> {
    let mut file = src.load()?;
    over.apply(&mut file);
    let s = Scenario::from_file(&file)?;
    let start = Instant::now();
    let (series, stats) = run(&s, &over.options())?;
    let wall = start.elapsed().as_secs_f64();

    fs::create_dir_all(&out.out_dir)?;
    let name = stem(&file);
    let csv = out.out_dir.join(format!("{name}.csv"));
    fs::write(&csv, series.to_csv_string(out.full))?;
    let validity = stats.as_ref().map_or_else(|| s.validity(), |st| Ok(st.validity.clone()))?;
    let (vtxt, vcsv) = write_validity(&out.out_dir, &validity)?;

    let mut timing = toml::Table::new();
    timing.insert("wall_seconds".into(), wall.into());
    let mut extra = toml::Table::new();
    if let Some(st) = &stats {
        timing.insert("per_trajectory_seconds".into(), st.per_trajectory_seconds.into());
        timing.insert("trajectories".into(), toml::Value::Integer(st.nm as i64));
        if let Some(n) = &st.noise {
            extra.insert("noise".into(), toml::Value::try_from(n)?);
        }
        if let Some(c) = &st.step_check {
            extra.insert("step_check".into(), toml::Value::try_from(c)?);
        }
    }
    let timing_path = out.out_dir.join("timing.toml");
    fs::write(&timing_path, toml::to_string(&timing)?)?;
    extra.insert("validity".into(), toml::Value::try_from(&validity)?);
    extra.insert("timing".into(), toml::Value::Table(timing));

    let mut files = vec![csv.as_path(), vtxt.as_path(), vcsv.as_path(), timing_path.as_path()];
    let svg = out.out_dir.join(format!("{name}.svg"));
    if want_plot {
        plot::render(std::slice::from_ref(&csv), plot::Layout::Single, &svg)?;
        files.push(&svg);
    }
    let man = out.out_dir.join("manifest.toml");
    fs::write(&man, manifest(&file, "run", &files, extra)?)?;

    let k = series.len() - 1;
    println!(
        "P_T({}) = {:.6} +- {:.6}   P_q0 = {:.6}   P_NS = {:.6}",
        series.t[k], series.p_t[k], series.p_t_se[k], series.p_q0[k], series.p_ns[k]
    );
    println!("wrote {} and {}", csv.display(), man.display());
    if !validity.verdict {
        log::warn!("post-Markov expansion not justified for this bath (S/gamma = {:.3})", validity.ratio);
    }
    Ok(0)
}

fn cmd_dimer_check(over: &Overrides, g: Option<f64>, out: &Output) -> anyhow::Result<u8> {
    const SIGMA: f64 = 3.0;
    const COVERAGE: f64 = 0.95;
    const DETERMINISTIC_TOL: f64 = 1e-8;
    let mut file = ScenarioFile::preset("dimer-check")?;
    over.apply(&mut file);
    if let Some(g) = g {
        file.bath.g = Values::Scalar(g);
    }
    let s = Scenario::from_file(&file)?;
    let ens = Ensemble::new(&s)?;
    let mom = ens.moments(s.nm(), &over.options())?;
    let layout = s.layout();
    let w = layout.width();
    let sse = ObservableSeries::from_moments(s.grid.output_times(), layout, &mom);
    let master = run_master(&s)?;
    let a = &sse;
    let b = &master.series;
    let (mut inside, mut worst, mut worst_sigma) = (0usize, 0.0_f64, 0.0_f64);
    let total = a.len() - 1;
    for k in 1..a.len() {
        let d = (a.pops[k][0] - b.pops[k][0]).abs();
        // pops start after the three aggregate columns
        let se = mom.stderr(k * w + 3);
        worst = worst.max(d);
        if se > 0.0 {
            worst_sigma = worst_sigma.max(d / se);
        }
        if d <= (SIGMA * se).max(DETERMINISTIC_TOL) {
            inside += 1;
        }
    }
    let frac = inside as f64 / total as f64;
    let pass = frac >= COVERAGE;
    println!("dimer check: NM = {}, g = {}, gamma = {}", s.nm(), file_g(&file), file_gamma(&file));
    println!("  max |P_1(SSE) - P_1(master)| = {worst:.3e} (largest deviation {worst_sigma:.2} sigma)");
    println!(
        "  within {SIGMA} sigma at {inside}/{total} output times ({:.1}%, need {:.0}%)",
        100.0 * frac,
        100.0 * COVERAGE
    );
    println!("{}", if pass { "PASS" } else { "FAIL" });

    fs::create_dir_all(&out.out_dir)?;
    let sse_csv = out.out_dir.join("dimer-sse.csv");
    let master_csv = out.out_dir.join("dimer-master.csv");
    fs::write(&sse_csv, a.to_csv_string(true))?;
    fs::write(&master_csv, b.to_csv_string(true))?;
    let mut extra = toml::Table::new();
    extra.insert("pass".into(), pass.into());
    extra.insert("coverage".into(), frac.into());
    extra.insert("max_deviation".into(), worst.into());
    fs::write(out.out_dir.join("manifest.toml"), manifest(&file, "dimer-check", &[&sse_csv, &master_csv], extra)?)?;
    Ok(if pass { 0 } else { 3 })
}

fn file_g(f: &ScenarioFile) -> String {
    values(&f.bath.g)
}

fn file_gamma(f: &ScenarioFile) -> String {
    values(&f.bath.gamma)
}

fn values(v: &Values) -> String {
    match v {
        Values::Scalar(x) => x.to_string(),
        Values::List(l) => format!("{l:?}"),
    }
}

fn cmd_sweep(
    src: &Source,
    over: &Overrides,
    parameter: Option<String>,
    values: Vec<f64>,
    readout: Option<f64>,
    out: &Output,
) -> anyhow::Result<u8> {
    let mut file = src.load()?;
    over.apply(&mut file);
    let table = file.sweep.clone();
    let param: SweepParam = match (&parameter, &table) {
        (Some(p), _) => p.parse()?,
        (None, Some(t)) => t.parameter,
        (None, None) => return Err(lhring::Error::validation("no --parameter and no [sweep] table").into()),
    };
    let values = if !values.is_empty() {
        values
    } else {
        table
            .as_ref()
            .filter(|t| parameter.is_none() || t.parameter == param)
            .map(|t| t.values.clone())
            .unwrap_or_default()
    };
    if values.is_empty() {
        return Err(lhring::Error::validation("sweep needs at least one value").into());
    }
    let readout = readout.or(table.as_ref().map(|t| t.readout)).unwrap_or(file.run.t_max);
    let series: Vec<(Option<(SweepParam, f64)>, ScenarioFile)> = match &table {
        Some(t) if parameter.is_none() && t.series_parameter.is_some() && !t.series_values.is_empty() => {
            let sp = t.series_parameter.expect("checked");
            t.series_values
                .iter()
                .map(|&v| {
                    let mut f = file.clone();
                    f.set(sp, v);
                    (Some((sp, v)), f)
                })
                .collect()
        }
        _ => vec![(None, file.clone())],
    };

    fs::create_dir_all(&out.out_dir)?;
    let mut written = Vec::new();
    for (tag, f) in &series {
        let rows = sweep(f, param, &values, readout, &over.options())?;
        let name = match tag {
            Some((p, v)) => format!("sweep-{param}-{p}{v}.csv"),
            None => format!("sweep-{param}.csv"),
        };
        let path = out.out_dir.join(name);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, param, &mut buf)?;
        fs::write(&path, buf)?;
        if let Some((p, v)) = tag {
            println!("{p} = {v}");
        }
        for r in &rows {
            println!("  {param} = {:<8} P_T({readout}) = {:.5} +- {:.5}", r.value, r.p_t, r.stderr);
        }
        written.push(path);
    }
    let refs: Vec<&Path> = written.iter().map(|p| p.as_path()).collect();
    let mut extra = toml::Table::new();
    extra.insert("sweep_parameter".into(), param.to_string().into());
    extra.insert("readout".into(), readout.into());
    fs::write(out.out_dir.join("manifest.toml"), manifest(&file, "sweep", &refs, extra)?)?;
    Ok(0)
}

fn cmd_validity(src: &Source, gamma: Option<f64>, tmax: Option<f64>) -> anyhow::Result<u8> {
    let mut file = src.load()?;
    if let Some(g) = gamma {
        file.bath.gamma = Values::Scalar(g);
    }
    if let Some(t) = tmax {
        file.run.t_max = t;
    }
    let s = Scenario::from_file(&file)?;
    print!("{}", validity_text(&s.validity()?));
    Ok(0)
}

fn cmd_noise_check(src: &Source, paths: u64, seed: Option<u64>) -> anyhow::Result<u8> {
    const SIGMA: f64 = 3.0;
    const COVERAGE: f64 = 0.95;
    let file = src.load()?;
    let s = Scenario::from_file(&file)?;
    if s.bath.is_trivial() {
        println!("bath is uncoupled; no noise to check");
        return Ok(0);
    }
    let site = (0..s.bath.sites())
        .max_by(|&a, &b| s.bath.prefactor(a).norm().total_cmp(&s.bath.prefactor(b).norm()).then(b.cmp(&a)))
        .unwrap_or(0);
    let one =
        lhring::bath::BathSpec::new(vec![s.bath.g[site]], vec![s.bath.gamma[site]], s.bath.beta, s.bath.convention)?;
    let gamma = s.bath.gamma[site];
    // five decay times, sampled at twenty lags
    let span = 5.0 / gamma;
    let stride = 50;
    let grid = NoiseGrid { h: span / (20 * stride) as f64, len: 20 * stride + 1 };
    let coarse = NoiseGrid { h: grid.h * stride as f64, len: 21 };
    let fft = FftNoise::new(&one, grid, file.run.n_modes, file.run.omega_max_factor * gamma)?;
    let seed = seed.unwrap_or(file.run.seed);
    let sampled: Vec<NoisePath> = (0..paths)
        .map(|k| {
            let mut p = fft.sample(seed, k);
            p.z = p.z.iter().map(|z| z.iter().step_by(stride).copied().collect()).collect();
            p.grid = coarse;
            p
        })
        .collect();
    let est = empirical_correlation(&sampled, 0, 0, 1)?;
    let within = |d: Complex64, se: Complex64| d.re.abs() <= SIGMA * se.re && d.im.abs() <= SIGMA * se.im;
    let cov_ok = est.iter().filter(|e| within(e.cov - fft.modes.correlation(0, e.t - e.tau), e.cov_se)).count();
    let pseudo_ok = est.iter().filter(|e| within(e.pseudo, e.pseudo_se)).count();
    let mut worst = 0.0_f64;
    for k in 0..=500 {
        let lag = span * k as f64 / 500.0;
        let closed = alpha_t(lag, 0, &one)?;
        worst = worst.max((fft.modes.correlation(0, lag) - closed).norm() / closed.norm());
    }
    let n = est.len() as f64;
    println!(
        "site {} (g = {}, gamma = {gamma}), {} modes, {paths} paths",
        site + 1,
        s.bath.g[site],
        fft.modes.n_modes()
    );
    println!("  covariance vs discrete target within {SIGMA} sigma: {:.1}%", 100.0 * cov_ok as f64 / n);
    println!("  pseudo-covariance E[zz] ~ 0 within {SIGMA} sigma:   {:.1}%", 100.0 * pseudo_ok as f64 / n);
    println!("  discrete target vs closed form, max relative deviation on [0, 5/gamma]: {:.1}%", 100.0 * worst);
    let pass = cov_ok as f64 / n >= COVERAGE && pseudo_ok as f64 / n >= COVERAGE;
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass { 0 } else { 3 })
}
