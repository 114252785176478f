//! Event-data ingestion, flat configuration files, and result persistence.
//!
//! CSV schema: optional `# horizon=T` comment, then a `time,mark_1,...,mark_d`
//! header, then one row per event. Numbers are written with 17 significant
//! digits so doubles round-trip exactly. The JSON mirror carries the fields
//! `horizon`, `times`, `marks`.
//!
//! Every CLI output is a [`RunArtifact`]: the payload record plus provenance
//! (effective configuration, seed, tool version). The provenance timestamp is
//! taken from `SOURCE_DATE_EPOCH` when set and omitted otherwise, so repeated
//! runs with the same configuration produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EventStream;

/// Format a double with 17 significant digits (exact round-trip).
pub fn format_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write an event stream as CSV with a `# horizon=` header comment.
pub fn write_events_csv(path: &Path, stream: &EventStream) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# horizon={}\n", format_g17(stream.horizon())));
    out.push_str("time");
    for k in 1..=stream.mark_dim() {
        out.push_str(&format!(",mark_{k}"));
    }
    out.push('\n');
    for (t, mark) in stream.times().iter().zip(stream.marks()) {
        out.push_str(&format_g17(*t));
        for v in mark {
            out.push(',');
            out.push_str(&format_g17(*v));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read an event stream from CSV. `horizon_flag` (from the command line)
/// wins over the `# horizon=` file comment; one of the two must be present.
pub fn read_events_csv(path: &Path, horizon_flag: Option<f64>) -> Result<EventStream> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut file_horizon: Option<f64> = None;
    let mut header: Option<Vec<String>> = None;
    let mut times = Vec::new();
    let mut marks = Vec::new();
    let mut mark_dim = 0usize;
    let mut data_row = 0usize;

    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(value) = comment.strip_prefix("horizon=") {
                file_horizon = Some(value.trim().parse::<f64>().map_err(|_| {
                    Error::Io(format!(
                        "line {}: cannot parse horizon '{value}'",
                        line_no + 1
                    ))
                })?);
            }
            continue;
        }
        if header.is_none() {
            let cols: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
            if cols.first().map(String::as_str) != Some("time") {
                return Err(Error::Io(format!(
                    "line {}: header must start with 'time', got '{line}'",
                    line_no + 1
                )));
            }
            mark_dim = cols.len() - 1;
            header = Some(cols);
            continue;
        }
        data_row += 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != mark_dim + 1 {
            return Err(Error::Io(format!(
                "data row {data_row}: expected {} columns, found {}",
                mark_dim + 1,
                fields.len()
            )));
        }
        let t: f64 = fields[0]
            .parse()
            .map_err(|_| Error::Io(format!("data row {data_row}: bad time '{}'", fields[0])))?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::InvalidStream(format!(
                    "data row {data_row}: time {t} does not increase past {prev}"
                )));
            }
        }
        let mut mark = Vec::with_capacity(mark_dim);
        for f in &fields[1..] {
            mark.push(
                f.parse::<f64>()
                    .map_err(|_| Error::Io(format!("data row {data_row}: bad mark value '{f}'")))?,
            );
        }
        times.push(t);
        marks.push(mark);
    }
    if header.is_none() {
        return Err(Error::Io("event file has no header row".into()));
    }
    let horizon = horizon_flag.or(file_horizon).ok_or_else(|| {
        Error::Config("horizon missing: provide --horizon or a '# horizon=' comment".into())
    })?;
    EventStream::new(horizon, times, marks, mark_dim)
}

/// JSON mirror of the event CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsJson {
    pub horizon: f64,
    pub times: Vec<f64>,
    pub marks: Vec<Vec<f64>>,
}

pub fn write_events_json(path: &Path, stream: &EventStream) -> Result<()> {
    let record = EventsJson {
        horizon: stream.horizon(),
        times: stream.times().to_vec(),
        marks: stream.marks().to_vec(),
    };
    let json = serde_json::to_string_pretty(&record)
        .map_err(|e| Error::Io(format!("serialize events: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn read_events_json(path: &Path, horizon_flag: Option<f64>) -> Result<EventStream> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let record: EventsJson =
        serde_json::from_str(&text).map_err(|e| Error::Io(format!("parse events json: {e}")))?;
    let mark_dim = record.marks.first().map_or(0, Vec::len);
    EventStream::new(
        horizon_flag.unwrap_or(record.horizon),
        record.times,
        record.marks,
        mark_dim,
    )
}

/// Parse a flat `key=value` configuration file; `#` starts a comment.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "config line {}: expected key=value, got '{line}'",
                line_no + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// What a persisted artifact contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArtifactKind {
    SimOutput,
    FitOutput,
    ScoreTestOutput,
    McReportOutput,
}

/// Reproducibility envelope attached to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Subcommand that produced the artifact.
    pub command: String,
    /// Effective configuration after merging flags over the config file.
    pub config: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Unix-epoch seconds from SOURCE_DATE_EPOCH when set; omitted otherwise
    /// so identical runs write identical bytes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl Provenance {
    pub fn new(command: &str, config: BTreeMap<String, String>, seed: Option<u64>) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.parse::<u64>().ok());
        Self {
            tool: "hawkes-score".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            seed,
            timestamp,
        }
    }
}

/// A persisted result: payload plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact<T> {
    pub kind: ArtifactKind,
    pub payload: T,
    pub provenance: Provenance,
}

pub fn write_artifact<T: Serialize>(path: &Path, artifact: &RunArtifact<T>) -> Result<()> {
    let json = serde_json::to_string_pretty(artifact)
        .map_err(|e| Error::Io(format!("serialize artifact: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path) -> Result<RunArtifact<T>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Io(format!("parse artifact: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        let stream = EventStream::new(2.0, vec![0.5, 1.5], vec![vec![1.0], vec![-1.0]], 1).unwrap();
        write_events_csv(&path, &stream).unwrap();
        let back = read_events_csv(&path, None).unwrap();
        assert_eq!(stream, back);
        assert_eq!(back.len(), 2);
        assert_eq!(back.mark_dim(), 1);

        // second write is byte-identical
        let path2 = dir.path().join("events2.csv");
        write_events_csv(&path2, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn csv_seventeen_digit_exactness() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4);
        let times: Vec<f64> = {
            let mut acc = 0.0;
            (0..100)
                .map(|_| {
                    acc += rng.random::<f64>() + 1e-9;
                    acc
                })
                .collect()
        };
        let marks: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.random::<f64>() * 2e3 - 1e3])
            .collect();
        let horizon = times.last().unwrap() + 1.0;
        let stream = EventStream::new(horizon, times, marks, 1).unwrap();
        write_events_csv(&path, &stream).unwrap();
        let back = read_events_csv(&path, None).unwrap();
        for (a, b) in stream.times().iter().zip(back.times()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in stream.marks().iter().zip(back.marks()) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
        }
    }

    #[test]
    fn csv_empty_body_and_horizon_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        fs::write(&path, "# horizon=10\ntime,mark_1\n").unwrap();
        let s = read_events_csv(&path, None).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.horizon(), 10.0);
        assert_eq!(s.mark_dim(), 1);
        // flag wins over the file comment
        let s = read_events_csv(&path, Some(25.0)).unwrap();
        assert_eq!(s.horizon(), 25.0);
    }

    #[test]
    fn csv_missing_horizon_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nohorizon.csv");
        fs::write(&path, "time,mark_1\n0.5,1.0\n").unwrap();
        assert!(matches!(
            read_events_csv(&path, None).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn csv_nonmonotone_names_offending_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "# horizon=5\ntime,mark_1\n1.0,0.0\n1.0,0.0\n").unwrap();
        let err = read_events_csv(&path, None).unwrap_err();
        match err {
            Error::InvalidStream(msg) => assert!(msg.contains("row 2"), "message: {msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn json_mirror_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.json");
        let stream = EventStream::new(
            3.0,
            vec![0.25, 1.0, 2.75],
            vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]],
            2,
        )
        .unwrap();
        write_events_json(&path, &stream).unwrap();
        let back = read_events_json(&path, None).unwrap();
        assert_eq!(stream, back);
    }

    #[test]
    fn config_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(
            &path,
            "# comment\neta = 0.5\nbranch=0.5 # trailing\n\nT=2000\n",
        )
        .unwrap();
        let map = parse_config_file(&path).unwrap();
        assert_eq!(map.get("eta").unwrap(), "0.5");
        assert_eq!(map.get("branch").unwrap(), "0.5");
        assert_eq!(map.get("T").unwrap(), "2000");
        fs::write(&path, "novalue\n").unwrap();
        assert!(parse_config_file(&path).is_err());
    }

    #[test]
    fn artifact_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.json");
        let artifact = RunArtifact {
            kind: ArtifactKind::FitOutput,
            payload: vec![1.0f64, 2.5, -0.75],
            provenance: Provenance::new(
                "fit",
                BTreeMap::from([("eta".into(), "0.5".into())]),
                Some(7),
            ),
        };
        write_artifact(&path, &artifact).unwrap();
        let back: RunArtifact<Vec<f64>> = read_artifact(&path).unwrap();
        assert_eq!(artifact, back);
    }
}
