//! Demonstration datasets as JSON lines: a header object on the first
//! line, then one trajectory record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sagail_core::demogen::{DemoDataset, DemoHeader};
use sagail_core::replay::{Source, Trajectory, TrajectoryRecord};

use crate::{AppError, AppResult};

pub fn write_jsonl<W: Write>(dataset: &DemoDataset, mut out: W) -> AppResult<()> {
    let line = |e: serde_json::Error| AppError::Runtime(format!("serializing dataset: {e}"));
    serde_json::to_writer(&mut out, &dataset.header).map_err(line)?;
    out.write_all(b"\n").map_err(|e| AppError::Runtime(e.to_string()))?;
    for t in &dataset.trajectories {
        serde_json::to_writer(&mut out, &t.to_record()).map_err(line)?;
        out.write_all(b"\n").map_err(|e| AppError::Runtime(e.to_string()))?;
    }
    Ok(())
}

/// Parse and validate a dataset. Errors name the offending line and record.
pub fn read_jsonl<R: BufRead>(input: R) -> AppResult<DemoDataset> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
    let (_, first) = lines.next().ok_or_else(|| AppError::Config("dataset is empty".into()))?;
    let first = first.map_err(|e| AppError::Config(format!("line 1: {e}")))?;
    let header: DemoHeader =
        serde_json::from_str(&first).map_err(|e| AppError::Config(format!("line 1: bad dataset header: {e}")))?;
    let spec = header.check()?;
    let mut trajectories = Vec::new();
    for (record, (lineno, line)) in lines.enumerate() {
        let at = || format!("line {}, record {record}", lineno + 1);
        let line = line.map_err(|e| AppError::Config(format!("{}: {e}", at())))?;
        let rec: TrajectoryRecord = serde_json::from_str(&line).map_err(|e| AppError::Config(format!("{}: {e}", at())))?;
        let t = Trajectory::from_record(&rec, Source::DemoSeed).map_err(|e| AppError::Config(format!("{}: {e}", at())))?;
        t.validate(&spec).map_err(|e| AppError::Config(format!("{}: {e}", at())))?;
        if !t.is_successful() {
            return Err(AppError::Config(format!("{}: trajectory never reaches its goal", at())));
        }
        trajectories.push(t);
    }
    if trajectories.is_empty() {
        return Err(AppError::Config("dataset has a header but no trajectories".into()));
    }
    Ok(DemoDataset { header, trajectories })
}

pub fn save(dataset: &DemoDataset, path: &Path) -> AppResult<()> {
    let file = File::create(path).map_err(AppError::io(path))?;
    let mut w = BufWriter::new(file);
    write_jsonl(dataset, &mut w)?;
    w.flush().map_err(AppError::io(path))
}

pub fn load(path: &Path) -> AppResult<DemoDataset> {
    let file = File::open(path).map_err(AppError::io(path))?;
    read_jsonl(BufReader::new(file)).map_err(|e| match e {
        AppError::Config(m) => AppError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sagail_core::demogen::{generate_demos, DemoProfile};
    use sagail_core::env::EnvConfig;

    fn small() -> DemoDataset {
        generate_demos(&"bitflip4".parse::<EnvConfig>().unwrap(), &DemoProfile::suboptimal(), 5, 3).unwrap()
    }

    #[test]
    fn round_trip() {
        let d = small();
        let mut buf = Vec::new();
        write_jsonl(&d, &mut buf).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn errors_name_the_record() {
        let d = small();
        let mut buf = Vec::new();
        write_jsonl(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = lines[3].replacen("[", "[[", 1);
        let err = read_jsonl(lines.join("\n").as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 4, record 2"), "{err}");

        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut rec: TrajectoryRecord = serde_json::from_str(&lines[2]).unwrap();
        rec.actions[0].push(0.0);
        lines[2] = serde_json::to_string(&rec).unwrap();
        let err = read_jsonl(lines.join("\n").as_bytes()).unwrap_err().to_string();
        assert!(err.contains("record 1"), "{err}");
    }

    #[test]
    fn rejects_wrong_version_and_empty() {
        let mut d = small();
        d.header.format_version = 99;
        let mut buf = Vec::new();
        write_jsonl(&d, &mut buf).unwrap();
        assert!(matches!(read_jsonl(buf.as_slice()), Err(AppError::Config(_))));
        assert!(read_jsonl("".as_bytes()).is_err());
    }
}
