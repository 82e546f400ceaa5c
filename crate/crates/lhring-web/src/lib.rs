//! Browser bindings: a closed ring with optional static disorder, the dephasing
//! master equation on the same ring, and the post-Markov validity table.
//!
//! Series come back flattened as `[t, P_T, P_q0, P_NS]` per output time.

use lhring::bath::post_markov_validity;
use lhring::config::{Energies, ScenarioFile, Values};
use lhring::engine::{closed_series, run_master, Scenario};
use lhring::observables::ObservableSeries;
use wasm_bindgen::prelude::*;

pub const COLUMNS: usize = 4;

fn flatten(s: &ObservableSeries) -> Vec<f64> {
    let mut out = Vec::with_capacity(COLUMNS * s.len());
    for k in 0..s.len() {
        out.extend([s.t[k], s.p_t[k], s.p_q0[k], s.p_ns[k]]);
    }
    out
}

pub fn closed_ring_series(m: usize, omega0: f64, seed: u64, t_max: f64) -> lhring::Result<Vec<f64>> {
    let mut f = ScenarioFile::preset("ring-closed")?;
    f.model.m = m;
    f.run.t_max = t_max;
    if omega0 > 0.0 {
        f.model.energies = Energies::Disorder;
        f.model.omega0 = omega0;
        f.model.disorder_seed = seed;
    }
    Ok(flatten(&closed_series(&Scenario::from_file(&f)?)?))
}

pub fn dephasing_series(m: usize, g: f64, gamma: f64, t_max: f64) -> lhring::Result<Vec<f64>> {
    let mut f = ScenarioFile::preset("ring-dephasing")?;
    f.model.m = m;
    f.bath.g = Values::Scalar(g);
    f.bath.gamma = Values::Scalar(gamma);
    f.run.t_max = t_max;
    f.run.output_stride = 50;
    Ok(flatten(&run_master(&Scenario::from_file(&f)?)?.series))
}

/// `[verdict, S/gamma, F_0, ..., F_n]`
pub fn validity_table(s: f64, gamma: f64, t_max: f64, n_max: usize) -> lhring::Result<Vec<f64>> {
    let r = post_markov_validity(s, gamma, t_max, n_max)?;
    let mut out = vec![if r.verdict { 1.0 } else { 0.0 }, r.ratio];
    out.extend(r.f);
    Ok(out)
}

fn js(e: lhring::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Closed ring from site 1; `omega0 > 0` draws site energies uniformly in `[0, omega0)`.
#[wasm_bindgen]
pub fn closed_ring(m: usize, omega0: f64, seed: u32, t_max: f64) -> Result<Vec<f64>, JsError> {
    closed_ring_series(m, omega0, seed as u64, t_max).map_err(js)
}

/// Master-equation dynamics of the ring with a dephasing bath on every site.
#[wasm_bindgen]
pub fn dephasing(m: usize, g: f64, gamma: f64, t_max: f64) -> Result<Vec<f64>, JsError> {
    dephasing_series(m, g, gamma, t_max).map_err(js)
}

#[wasm_bindgen]
pub fn validity(s: f64, gamma: f64, t_max: f64, n_max: usize) -> Result<Vec<f64>, JsError> {
    validity_table(s, gamma, t_max, n_max).map_err(js)
}
