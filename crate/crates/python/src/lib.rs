//! Python bindings. Structured values cross the boundary as plain dicts with
//! the same keys as the JSON config, and tag streams as dicts of lists.

use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use snspd_core::analysis::{self as rate, fwhm_fw1m, histogram_of, residuals, Reference};
use snspd_core::detector::{self, WireParams};
use snspd_core::error::Error;
use snspd_core::io::{read_tags as core_read_tags, write_tags as core_write_tags, RunConfig};
use snspd_core::optics::{self, ArrayGeometry, CouplingProfile, GaussianMode};
use snspd_core::sim::{inject_crosstalk, simulate_array, TagRecord, TruthRecord};
use snspd_core::walk::{self, WalkCalibration, WalkConfig};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn to_json(obj: Option<&Bound<'_, PyAny>>) -> PyResult<Value> {
    let Some(obj) = obj else { return Ok(Value::Object(Default::default())) };
    if obj.is_none() {
        return Ok(Value::Object(Default::default()));
    }
    let json = PyModule::import(obj.py(), "json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn from_json<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

/// Deserializes a dict over defaults, rejecting keys the type does not have.
fn parse<T: DeserializeOwned + Serialize + Default>(obj: Option<&Bound<'_, PyAny>>, optional: &[&str]) -> PyResult<T> {
    let v = to_json(obj)?;
    let Value::Object(map) = &v else { return Err(PyValueError::new_err("expected a dict")) };
    let known = serde_json::to_value(T::default()).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let unknown: Vec<&str> = map
        .keys()
        .filter(|k| known.get(k.as_str()).is_none() && !optional.contains(&k.as_str()))
        .map(String::as_str)
        .collect();
    if !unknown.is_empty() {
        return Err(PyKeyError::new_err(format!("unknown keys: {}", unknown.join(", "))));
    }
    serde_json::from_value(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn wire(obj: Option<&Bound<'_, PyAny>>) -> PyResult<WireParams> {
    let p: WireParams = parse(obj, &["tau_rise"])?;
    p.validate().map_err(err)?;
    Ok(p)
}

fn tags_dict<'py>(py: Python<'py>, tags: &[TagRecord]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("channel", tags.iter().map(|t| t.channel).collect::<Vec<_>>())?;
    d.set_item("flags", tags.iter().map(|t| t.flags).collect::<Vec<_>>())?;
    d.set_item("time_ps", tags.iter().map(|t| t.time).collect::<Vec<_>>())?;
    Ok(d)
}

fn tags_from(d: &Bound<'_, PyDict>) -> PyResult<Vec<TagRecord>> {
    let get = |k: &str| d.get_item(k)?.ok_or_else(|| PyKeyError::new_err(k.to_string()));
    let ch: Vec<u16> = get("channel")?.extract()?;
    let time: Vec<u64> = get("time_ps")?.extract()?;
    let flags: Vec<u16> = match d.get_item("flags")? {
        Some(f) => f.extract()?,
        None => vec![0; ch.len()],
    };
    if ch.len() != time.len() || flags.len() != time.len() {
        return Err(PyValueError::new_err("channel, flags and time_ps differ in length"));
    }
    Ok((0..ch.len()).map(|i| TagRecord { channel: ch[i], flags: flags[i], time: time[i] }).collect())
}

fn truth_dict<'py>(py: Python<'py>, truth: &[TruthRecord]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("photon_time_ps", truth.iter().map(|t| t.photon_time).collect::<Vec<_>>())?;
    d.set_item("detection_time_ps", truth.iter().map(|t| t.detection_time).collect::<Vec<_>>())?;
    d.set_item("channel", truth.iter().map(|t| t.channel).collect::<Vec<_>>())?;
    d.set_item("dt_prev_ps", truth.iter().map(|t| t.dt_prev).collect::<Vec<_>>())?;
    d.set_item("dt_prev2_ps", truth.iter().map(|t| t.dt_prev2).collect::<Vec<_>>())?;
    d.set_item("pulse_amplitude_mv", truth.iter().map(|t| t.pulse_amplitude).collect::<Vec<_>>())?;
    Ok(d)
}

/// Reference from either `photon_times` (one per tag, ps) or a sync period.
fn reference_residuals(tags: &[TagRecord], photon_times: Option<Vec<f64>>, sync_period_ps: Option<f64>) -> PyResult<(Vec<TruthRecord>, Option<f64>)> {
    match (photon_times, sync_period_ps) {
        (Some(p), None) => {
            let truth = p
                .into_iter()
                .zip(tags)
                .map(|(t, tag)| TruthRecord {
                    photon_time: t,
                    detection_time: t,
                    channel: tag.channel,
                    dt_prev: f64::INFINITY,
                    dt_prev2: f64::INFINITY,
                    pulse_amplitude: 0.0,
                })
                .collect();
            Ok((truth, None))
        }
        (None, Some(period)) => Ok((Vec::new(), Some(period))),
        _ => Err(PyValueError::new_err("give exactly one of photon_times or sync_period_ps")),
    }
}

#[pyfunction]
fn default_wire_params(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    from_json(py, &WireParams::default())
}

/// Internal detection efficiency at bias `i` (µA).
#[pyfunction]
#[pyo3(signature = (i, params=None))]
fn ide(i: f64, params: Option<&Bound<'_, PyAny>>) -> PyResult<f64> {
    Ok(detector::ide(i, &wire(params)?))
}

#[pyfunction]
#[pyo3(signature = (t_ns, params=None))]
fn recovery_current(t_ns: f64, params: Option<&Bound<'_, PyAny>>) -> PyResult<f64> {
    detector::recovery_current(t_ns, &wire(params)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (params=None))]
fn tau_reset(params: Option<&Bound<'_, PyAny>>) -> PyResult<f64> {
    Ok(wire(params)?.tau_reset())
}

#[pyfunction]
#[pyo3(signature = (params=None, eta_quantile=0.01))]
fn dead_time(params: Option<&Bound<'_, PyAny>>, eta_quantile: f64) -> PyResult<f64> {
    detector::dead_time(&wire(params)?, eta_quantile).map_err(err)
}

/// Fraction of the mode collected by each wire.
#[pyfunction]
#[pyo3(signature = (geometry=None, mode=None, optical_efficiency=1.0))]
fn coupling_profile(geometry: Option<&Bound<'_, PyAny>>, mode: Option<&Bound<'_, PyAny>>, optical_efficiency: f64) -> PyResult<Vec<f64>> {
    let g: ArrayGeometry = parse(geometry, &[])?;
    let m: GaussianMode = parse(mode, &[])?;
    Ok(optics::coupling_profile(&g, &m, optical_efficiency).map_err(err)?.per_wire)
}

#[pyfunction]
#[pyo3(signature = (geometry=None, mode=None, optical_efficiency=1.0, max_offset=1.5))]
fn misalignment_penalty(
    geometry: Option<&Bound<'_, PyAny>>,
    mode: Option<&Bound<'_, PyAny>>,
    optical_efficiency: f64,
    max_offset: f64,
) -> PyResult<f64> {
    let g: ArrayGeometry = parse(geometry, &[])?;
    let m: GaussianMode = parse(mode, &[])?;
    optics::misalignment_penalty(&g, &m, optical_efficiency, max_offset).map_err(err)
}

/// `(incident, measured, relative_efficiency)` per rate for one wire, or for
/// the array when `shares` (per-wire coupled fractions) is given.
#[pyfunction]
#[pyo3(signature = (incident_rates, params=None, shares=None))]
fn efficiency_vs_rate(incident_rates: Vec<f64>, params: Option<&Bound<'_, PyAny>>, shares: Option<Vec<f64>>) -> PyResult<Vec<(f64, f64, f64)>> {
    let p = wire(params)?;
    let curve = match shares {
        None => rate::efficiency_vs_rate(&p, &incident_rates),
        Some(s) => {
            let profile = CouplingProfile::from_fractions(s).map_err(err)?;
            rate::array_efficiency_vs_rate(&vec![p; profile.n_wires()], &profile, &incident_rates)
        }
    }
    .map_err(err)?;
    Ok(curve.points.iter().map(|q| (q.incident_rate, q.measured_rate, q.relative_efficiency)).collect())
}

/// Measured count rate at which the efficiency has fallen by 3 dB.
#[pyfunction]
#[pyo3(signature = (params=None, shares=None, lo=1e5, hi=1e11, n=241))]
fn mcr_3db(params: Option<&Bound<'_, PyAny>>, shares: Option<Vec<f64>>, lo: f64, hi: f64, n: usize) -> PyResult<f64> {
    let p = wire(params)?;
    let rates = rate::log_rates(lo, hi, n);
    let curve = match shares {
        None => rate::efficiency_vs_rate(&p, &rates),
        Some(s) => {
            let profile = CouplingProfile::from_fractions(s).map_err(err)?;
            rate::array_efficiency_vs_rate(&vec![p; profile.n_wires()], &profile, &rates)
        }
    }
    .map_err(err)?;
    rate::mcr_3db(&curve).map_err(err)
}

/// Runs a full config (same schema as the CLI). Returns `{"tags", "truth",
/// "optical_efficiency"}`.
#[pyfunction]
#[pyo3(signature = (config, seed=None))]
fn simulate<'py>(py: Python<'py>, config: &Bound<'py, PyAny>, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RunConfig::from_value(to_json(Some(config))?).map_err(err)?;
    let seed = seed.or(cfg.seed).ok_or_else(|| PyValueError::new_err("seed required"))?;
    let source = cfg.require_source().map_err(err)?.clone();
    let duration = cfg.require_duration().map_err(err)?;
    let r = cfg.resolve().map_err(err)?;
    let (tags, truth) = py
        .detach(|| -> Result<(Vec<TagRecord>, Vec<TruthRecord>), Error> {
            let out = simulate_array(&source, &r.profile, &r.params, &r.discriminators, duration, seed)?;
            if cfg.crosstalk.probability > 0.0 {
                inject_crosstalk(&out.tags, &out.truth, r.profile.n_wires(), cfg.crosstalk.probability, cfg.crosstalk.delay_sigma_ps, seed)
            } else {
                Ok((out.tags, out.truth))
            }
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("tags", tags_dict(py, &tags)?)?;
    d.set_item("truth", truth_dict(py, &truth)?)?;
    d.set_item("optical_efficiency", r.optical_efficiency)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (path, resort=false))]
fn read_tags<'py>(py: Python<'py>, path: &str, resort: bool) -> PyResult<Bound<'py, PyDict>> {
    tags_dict(py, &core_read_tags(path, resort).map_err(err)?)
}

#[pyfunction]
fn write_tags(path: &str, tags: &Bound<'_, PyDict>) -> PyResult<()> {
    core_write_tags(path, &tags_from(tags)?).map_err(err)
}

/// Residuals (ps) of each tag against true photon times or a sync period.
#[pyfunction]
#[pyo3(signature = (tags, photon_times=None, sync_period_ps=None))]
fn timing_residuals(tags: &Bound<'_, PyDict>, photon_times: Option<Vec<f64>>, sync_period_ps: Option<f64>) -> PyResult<Vec<f64>> {
    let tags = tags_from(tags)?;
    let (truth, sync) = reference_residuals(&tags, photon_times, sync_period_ps)?;
    let reference = match sync {
        Some(p) => Reference::sync(p),
        None => Reference::Truth(&truth),
    };
    residuals(&tags, reference).map_err(err)
}

/// `(fwhm, fw1m)` in ps of a residual distribution.
#[pyfunction]
#[pyo3(signature = (residuals_ps, bin_width_ps=1.0, smooth=false))]
fn jitter_widths(residuals_ps: Vec<f64>, bin_width_ps: f64, smooth: bool) -> PyResult<(f64, f64)> {
    let h = histogram_of(&residuals_ps, bin_width_ps).map_err(err)?;
    fwhm_fw1m(&h, smooth).map_err(err)
}

/// Builds a walk calibration dict (the `walk_calibration.json` schema).
#[pyfunction]
#[pyo3(signature = (tags, order, photon_times=None, sync_period_ps=None, params=None))]
fn calibrate_walk<'py>(
    py: Python<'py>,
    tags: &Bound<'py, PyDict>,
    order: u8,
    photon_times: Option<Vec<f64>>,
    sync_period_ps: Option<f64>,
    params: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let tags = tags_from(tags)?;
    let cfg = WalkConfig::for_wire(&wire(params)?).map_err(err)?;
    let (truth, sync) = reference_residuals(&tags, photon_times, sync_period_ps)?;
    let reference = match sync {
        Some(p) => Reference::sync(p),
        None => Reference::Truth(&truth),
    };
    let cal = walk::calibrate(&tags, reference, order, &cfg).map_err(err)?;
    from_json(py, &cal)
}

/// Corrected tags, re-sorted by time.
#[pyfunction]
fn apply_walk<'py>(py: Python<'py>, tags: &Bound<'py, PyDict>, calibration: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyDict>> {
    let cal: WalkCalibration = serde_json::from_value(to_json(Some(calibration))?).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let out = walk::apply(&tags_from(tags)?, &cal).map_err(err)?;
    tags_dict(py, &out)
}

#[pymodule]
fn snspd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(default_wire_params, m)?)?;
    m.add_function(wrap_pyfunction!(ide, m)?)?;
    m.add_function(wrap_pyfunction!(recovery_current, m)?)?;
    m.add_function(wrap_pyfunction!(tau_reset, m)?)?;
    m.add_function(wrap_pyfunction!(dead_time, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_profile, m)?)?;
    m.add_function(wrap_pyfunction!(misalignment_penalty, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency_vs_rate, m)?)?;
    m.add_function(wrap_pyfunction!(mcr_3db, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(read_tags, m)?)?;
    m.add_function(wrap_pyfunction!(write_tags, m)?)?;
    m.add_function(wrap_pyfunction!(timing_residuals, m)?)?;
    m.add_function(wrap_pyfunction!(jitter_widths, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_walk, m)?)?;
    m.add_function(wrap_pyfunction!(apply_walk, m)?)?;
    Ok(())
}
