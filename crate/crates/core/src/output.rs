//! Trajectory CSV files, key = value reports and run metadata.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::hilbert::StateVector;

/// Header lines are `# scenario_hash=<hex>` and `# shift=<α>`; then
/// `t,x_1,…,x_n,d_hilbert,spread,gamma` rows in `{:.16e}`.
pub fn trajectory_to_csv(traj: &Trajectory, scenario_hash: &str) -> String {
    let n = traj.n();
    let mut out = String::with_capacity(traj.len() * (n + 4) * 24);
    let _ = writeln!(out, "# scenario_hash={scenario_hash}");
    let _ = writeln!(out, "# shift={:.16e}", traj.shift());
    out.push('t');
    for i in 1..=n {
        let _ = write!(out, ",x_{i}");
    }
    out.push_str(",d_hilbert,spread,gamma\n");
    for ((t, x), d) in traj.times().iter().zip(traj.states()).zip(traj.diagnostics()) {
        let _ = write!(out, "{t:.16e}");
        for v in x.as_slice() {
            let _ = write!(out, ",{v:.16e}");
        }
        let _ = writeln!(out, ",{:.16e},{:.16e},{:.16e}", d.d_hilbert, d.spread, d.gamma);
    }
    out
}

#[derive(Debug, Clone)]
pub struct CsvTrajectory {
    pub trajectory: Trajectory,
    pub scenario_hash: Option<String>,
}

/// Reads a file written by [`trajectory_to_csv`]. Diagnostics are
/// recomputed from the states and the recorded shift.
pub fn trajectory_from_csv(text: &str) -> Result<CsvTrajectory> {
    let mut hash = None;
    let mut shift = 0.0;
    let mut n = None;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let err = |message: String| Error::Parse { line: line_no, message };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            let c = c.trim();
            if let Some(h) = c.strip_prefix("scenario_hash=") {
                hash = Some(h.to_string());
            } else if let Some(s) = c.strip_prefix("shift=") {
                shift = s.parse().map_err(|e| err(format!("bad shift `{s}`: {e}")))?;
            }
            continue;
        }
        if n.is_none() {
            let cols: Vec<&str> = line.split(',').collect();
            let count = cols.iter().filter(|c| c.starts_with("x_")).count();
            if cols.first() != Some(&"t") || count < 2 {
                return Err(err("expected header `t,x_1,...,x_n,...`".into()));
            }
            n = Some(count);
            continue;
        }
        let n = n.expect("header seen");
        let vals = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| err(format!("bad number `{f}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() < n + 1 {
            return Err(err(format!(
                "expected at least {} columns, found {}",
                n + 1,
                vals.len()
            )));
        }
        times.push(vals[0]);
        states.push(StateVector::new(vals[1..=n].to_vec()).map_err(|e| err(e.to_string()))?);
    }
    if times.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: "no data rows".into(),
        });
    }
    Ok(CsvTrajectory {
        trajectory: Trajectory::from_parts(times, states, shift)?,
        scenario_hash: hash,
    })
}

/// Flattens any serialisable value into sorted `key = value` lines with
/// dotted keys. Arrays of scalars stay on one line; longer arrays of
/// records are indexed.
pub fn key_values<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
    let mut out = String::new();
    flatten("", &v, &mut out);
    out
}

fn scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Null => Some("none".into()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        serde_json::Value::Number(x) => Some(x.to_string()),
        serde_json::Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut String) {
    if let Some(s) = scalar(v) {
        let _ = writeln!(out, "{prefix} = {s}");
        return;
    }
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        serde_json::Value::Array(items) if items.iter().all(|i| scalar(i).is_some()) => {
            let parts: Vec<String> = items.iter().filter_map(scalar).collect();
            let _ = writeln!(out, "{prefix} = [{}]", parts.join(", "));
        }
        serde_json::Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), item, out);
            }
        }
        serde_json::Value::Object(map) => {
            for (k, item) in map {
                flatten(&join(k), item, out);
            }
        }
        _ => {}
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))
}

/// `serialize_with` helper for floats that may be infinite: JSON has no
/// infinities, so those are written as the strings `inf`, `-inf`, `nan`.
pub fn lossless_float<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub tool_version: &'static str,
    pub command: String,
    pub wall_clock_seconds: f64,
    /// The scenario with every default filled in.
    pub resolved: Option<serde_json::Value>,
    pub verdict: Option<String>,
}

impl RunMetadata {
    pub fn new(scenario: &str, scenario_hash: &str, seed: u64, command: &str, wall_clock_seconds: f64) -> Self {
        Self {
            scenario: scenario.to_string(),
            scenario_hash: scenario_hash.to_string(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            wall_clock_seconds,
            resolved: None,
            verdict: None,
        }
    }

    pub fn with_resolved<T: Serialize>(mut self, resolved: &T) -> Self {
        self.resolved = serde_json::to_value(resolved).ok();
        self
    }

    pub fn with_verdict(mut self, verdict: impl ToString) -> Self {
        self.verdict = Some(verdict.to_string());
        self
    }
}

/// Adds a `scenario_hash` comment right after the opening `<svg …>` tag.
pub fn tag_svg(svg: &str, scenario_hash: &str) -> String {
    match svg.find('\n') {
        Some(k) => format!("{}\n<!-- scenario_hash={scenario_hash} -->{}", &svg[..k], &svg[k..]),
        None => svg.to_string(),
    }
}

/// Writes `contents` to `dir/name`, creating `dir`.
pub fn write_file(dir: &Path, name: impl AsRef<Path>, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_with, Scheme, SimOptions, SystemModel};
    use crate::graph::MetzlerMatrix;

    fn traj() -> Trajectory {
        let m =
            SystemModel::ltv_constant(MetzlerMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0]]).unwrap()).unwrap();
        let opts = SimOptions {
            anchors: vec![],
            shift: 0.5,
        };
        simulate_with(
            &m,
            &StateVector::new(vec![1.0, 2.0]).unwrap(),
            0.0,
            1.0,
            0.1,
            Scheme::Euler,
            &opts,
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = traj();
        let text = trajectory_to_csv(&t, "abc");
        let back = trajectory_from_csv(&text).unwrap();
        assert_eq!(back.scenario_hash.as_deref(), Some("abc"));
        assert_eq!(back.trajectory.times(), t.times());
        assert_eq!(back.trajectory.states(), t.states());
        assert_eq!(back.trajectory.diagnostics(), t.diagnostics());
    }

    #[test]
    fn csv_errors_name_the_line() {
        let text = "t,x_1,x_2,d_hilbert,spread,gamma\n0,1,2,0,0,0\n0.1,1,oops,0,0,0\n";
        match trajectory_from_csv(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn key_values_flattens() {
        #[derive(Serialize)]
        struct Inner {
            a: f64,
        }
        #[derive(Serialize)]
        struct Outer {
            x: Vec<f64>,
            inner: Inner,
            items: Vec<Inner>,
        }
        let s = key_values(&Outer {
            x: vec![1.0, 2.0],
            inner: Inner { a: 0.5 },
            items: vec![Inner { a: 3.0 }],
        });
        assert!(s.contains("x = [1.0, 2.0]"));
        assert!(s.contains("inner.a = 0.5"));
        assert!(s.contains("items.0.a = 3.0"));
    }
}
