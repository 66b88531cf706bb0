//! File formats: telemetry CSV, scenario configs and detector params.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::DetectorParams;
use crate::sim::{CellSpec, FaultSpec, InitialTemperature, SimConfig, TelemetryFrame};

/// Radius of the equivalent short sphere when a config leaves it out, m.
pub const DEFAULT_R_EQUIV: f64 = 0.005;

pub fn telemetry_header(n_cells: usize, n_groups: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n_cells).map(|i| format!("T{i:02}")));
    cols.extend((1..=n_groups).map(|i| format!("V{i}")));
    cols.push("I".into());
    cols.push("label".into());
    cols.join(",")
}

/// Writes frames as CSV. Measurements carry 17 significant digits so a
/// read-back is exact.
pub fn write_telemetry<W: Write>(frames: &[TelemetryFrame], out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    let (n, p) = frames
        .first()
        .map_or((0, 0), |f| (f.temperatures.len(), f.voltages.len()));
    writeln!(out, "{}", telemetry_header(n, p))?;
    for f in frames {
        write!(out, "{}", f.t)?;
        for v in f.temperatures.iter().chain(&f.voltages) {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out, ",{:.16e},{}", f.current, f.abnormal as u8)?;
    }
    out.flush()
}

fn header_shape(header: &csv::StringRecord) -> Option<(usize, usize)> {
    let n = header.iter().filter(|h| h.starts_with('T')).count();
    let p = header.iter().filter(|h| h.starts_with('V')).count();
    let expected = telemetry_header(n, p);
    (header.iter().collect::<Vec<_>>().join(",") == expected).then_some((n, p))
}

/// Parses a telemetry CSV. Errors name the 1-based line of the bad row.
pub fn read_telemetry<R: Read>(input: R) -> Result<Vec<TelemetryFrame>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = rdr.headers().map_err(|e| Error::DataRow {
        line: 1,
        reason: e.to_string(),
    })?;
    let (n, p) = header_shape(header).ok_or_else(|| Error::DataRow {
        line: 1,
        reason: "header must be t,T01..TNN,V1..VP,I,label".into(),
    })?;
    let width = n + p + 3;
    let mut frames = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::DataRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |reason: String| Error::DataRow { line, reason };
        if rec.len() != width {
            return Err(bad(format!("expected {width} fields, got {}", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            let s = &rec[i];
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| bad(format!("field {i} `{s}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("field {i} is not finite")))
            }
        };
        let abnormal = match rec[width - 1].trim() {
            "0" => false,
            "1" => true,
            s => return Err(bad(format!("label `{s}` is not 0 or 1"))),
        };
        frames.push(TelemetryFrame {
            t: num(0)?,
            temperatures: (1..=n).map(num).collect::<Result<_>>()?,
            voltages: (n + 1..=n + p).map(num).collect::<Result<_>>()?,
            current: num(n + p + 1)?,
            abnormal,
        });
    }
    Ok(frames)
}

pub fn load_telemetry(path: &Path) -> Result<Vec<TelemetryFrame>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_telemetry(std::io::BufReader::new(file))
}

pub fn save_telemetry(path: &Path, frames: &[TelemetryFrame]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_telemetry(frames, file).map_err(|e| Error::io(path, e))
}

/// One simulation run as described by a flat config file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioConfig {
    /// Scenario number, used for ordering and seeding in the benchmark.
    pub id: Option<u32>,
    pub sim: SimConfig,
    pub cell: CellSpec,
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::key(key, "expected a number")),
    }
}

fn as_u64(key: &str, v: &toml::Value) -> Result<u64> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(Error::key(key, "expected a non-negative integer")),
    }
}

/// Parses a flat `key = value` scenario config. Keys mirror the fields of
/// `SimConfig`, `FaultSpec` and `CellSpec`; the fault block is present iff
/// `fault_cell` is.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
    let mut c = ScenarioConfig::default();
    let mut fault_cell = None;
    let mut r_short = None;
    let mut r_equiv = None;
    let mut onset = None;
    for (key, v) in &table {
        let k = key.as_str();
        let s = &mut c.sim;
        let cell = &mut c.cell;
        match k {
            "scenario" => c.id = Some(as_u64(k, v)? as u32),
            "dt" => s.dt = as_f64(k, v)?,
            "duration" => s.duration = as_f64(k, v)?,
            "sample_interval" => s.sample_interval = as_f64(k, v)?,
            "ambient" => s.ambient = as_f64(k, v)?,
            "airflow_speed" => s.airflow_speed = as_f64(k, v)?,
            "convective_coeff_forced" => s.convective_coeff_forced = as_f64(k, v)?,
            "convective_coeff_natural" => s.convective_coeff_natural = as_f64(k, v)?,
            "temp_noise_std" => s.temp_noise_std = as_f64(k, v)?,
            "voltage_noise_std" => s.voltage_noise_std = as_f64(k, v)?,
            "current_noise_std" => s.current_noise_std = as_f64(k, v)?,
            "rng_seed" => s.rng_seed = as_u64(k, v)?,
            "discharge_rate" => s.discharge_rate = as_f64(k, v)?,
            "initial_soc" => s.initial_soc = as_f64(k, v)?,
            "initial_temperature" => {
                s.initial_temperature = match v.as_str() {
                    Some("steady") => InitialTemperature::Steady,
                    Some("ambient") => InitialTemperature::Ambient,
                    _ => return Err(Error::key(k, "expected \"steady\" or \"ambient\"")),
                }
            }
            "fault_cell" => fault_cell = Some(as_u64(k, v)? as usize),
            "r_short" => r_short = Some(as_f64(k, v)?),
            "r_equiv" => r_equiv = Some(as_f64(k, v)?),
            "onset" => onset = Some(as_f64(k, v)?),
            "diameter" => cell.diameter = as_f64(k, v)?,
            "height" => cell.height = as_f64(k, v)?,
            "nominal_capacity" => cell.nominal_capacity = as_f64(k, v)?,
            "nominal_voltage" => cell.nominal_voltage = as_f64(k, v)?,
            "internal_resistance" => cell.internal_resistance = as_f64(k, v)?,
            "heat_capacity_vol" => cell.heat_capacity_vol = as_f64(k, v)?,
            "kx" => cell.kx = as_f64(k, v)?,
            "ky" => cell.ky = as_f64(k, v)?,
            _ => return Err(Error::key(k, "unknown key")),
        }
    }
    c.sim.fault = match fault_cell {
        Some(fault_cell) => Some(FaultSpec {
            fault_cell,
            r_short: r_short.ok_or_else(|| Error::key("r_short", "required with fault_cell"))?,
            r_equiv: r_equiv.unwrap_or(DEFAULT_R_EQUIV),
            onset: onset.ok_or_else(|| Error::key("onset", "required with fault_cell"))?,
        }),
        None => {
            if let Some(k) = [("r_short", r_short), ("r_equiv", r_equiv), ("onset", onset)]
                .iter()
                .find_map(|(k, v)| v.map(|_| *k))
            {
                return Err(Error::key(k, "given without fault_cell"));
            }
            None
        }
    };
    if !(c.sim.duration > 0.0) {
        return Err(Error::key("duration", "must be > 0"));
    }
    c.cell.validate()?;
    Ok(c)
}

/// Inverse of `parse_scenario`.
pub fn format_scenario(c: &ScenarioConfig) -> String {
    let s = &c.sim;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
    let f = |x: f64| format!("{x:?}");
    if let Some(id) = c.id {
        kv("scenario", id.to_string());
    }
    kv("dt", f(s.dt));
    kv("duration", f(s.duration));
    kv("sample_interval", f(s.sample_interval));
    kv("ambient", f(s.ambient));
    kv("airflow_speed", f(s.airflow_speed));
    kv("convective_coeff_forced", f(s.convective_coeff_forced));
    kv("convective_coeff_natural", f(s.convective_coeff_natural));
    kv("temp_noise_std", f(s.temp_noise_std));
    kv("voltage_noise_std", f(s.voltage_noise_std));
    kv("current_noise_std", f(s.current_noise_std));
    kv("rng_seed", s.rng_seed.to_string());
    kv("discharge_rate", f(s.discharge_rate));
    kv("initial_soc", f(s.initial_soc));
    let init = match s.initial_temperature {
        InitialTemperature::Steady => "steady",
        InitialTemperature::Ambient => "ambient",
    };
    kv("initial_temperature", format!("\"{init}\""));
    if let Some(fs) = &s.fault {
        kv("fault_cell", fs.fault_cell.to_string());
        kv("r_short", f(fs.r_short));
        kv("r_equiv", f(fs.r_equiv));
        kv("onset", f(fs.onset));
    }
    let cell = &c.cell;
    kv("diameter", f(cell.diameter));
    kv("height", f(cell.height));
    kv("nominal_capacity", f(cell.nominal_capacity));
    kv("nominal_voltage", f(cell.nominal_voltage));
    kv("internal_resistance", f(cell.internal_resistance));
    kv("heat_capacity_vol", f(cell.heat_capacity_vol));
    kv("kx", f(cell.kx));
    kv("ky", f(cell.ky));
    out
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

pub fn parse_params(text: &str) -> Result<DetectorParams> {
    let p: DetectorParams = toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => {
            // Name the key on the offending line when toml gives a span.
            let line = text[..span.start].rsplit('\n').next().unwrap_or("");
            let key = line.split('=').next().unwrap_or("").trim();
            if key.is_empty() {
                Error::config(e.message().to_string())
            } else {
                Error::key(key, e.message().to_string())
            }
        }
        None => Error::config(e.message().to_string()),
    })?;
    p.validate()?;
    Ok(p)
}

pub fn format_params(p: &DetectorParams) -> String {
    toml::to_string(p).expect("params serialize to toml")
}

pub fn load_params(path: &Path) -> Result<DetectorParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_params(&text)
}

pub fn save_params(path: &Path, p: &DetectorParams) -> Result<()> {
    fs::write(path, format_params(p)).map_err(|e| Error::io(path, e))
}
