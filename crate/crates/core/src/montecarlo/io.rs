use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, UrnError};
use crate::montecarlo::{BatchResult, BatchSummary, EndpointLabel};

/// `git describe` of the source tree at build time.
pub fn git_describe() -> &'static str {
    env!("URNLAB_GIT_DESCRIBE")
}

/// Writes through a temporary file in the same directory, then renames.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| UrnError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| UrnError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| UrnError::io(path, e))?;
    tmp.persist(path).map_err(|e| UrnError::io(path, e.error))?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct BatchManifest {
    pub spec: BatchSummary,
    pub config_hash: String,
    pub seed: u64,
    pub git_describe: String,
    /// Seconds since the Unix epoch; the only field that changes on reruns.
    pub timestamp: u64,
}

impl BatchManifest {
    pub fn new(spec: BatchSummary, config_hash: String) -> Self {
        let seed = spec.master_seed;
        BatchManifest {
            spec,
            config_hash,
            seed,
            git_describe: git_describe().to_string(),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

fn csv_bytes<F>(fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        fill(&mut w)?;
        w.flush().map_err(|e| UrnError::io("<csv>", e))?;
    }
    Ok(buf)
}

/// `manifest.json`, `finals.csv` and `paths/run_<k>.csv` under `dir`.
pub fn write_batch_dir<M: Serialize>(
    dir: &Path,
    manifest: &M,
    batch: &BatchResult,
    with_paths: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| UrnError::io(dir, e))?;
    atomic_write(
        &dir.join("manifest.json"),
        &serde_json::to_vec_pretty(manifest)?,
    )?;
    let d = batch.runs.first().map_or(0, |t| t.dim());
    let finals = csv_bytes(|w| {
        let mut header = vec!["run".to_string(), "n".to_string()];
        header.extend((1..=d).map(|i| format!("y{i}")));
        header.extend((1..=d).map(|i| format!("ny{i}")));
        w.write_record(&header)?;
        for (k, t) in batch.runs.iter().enumerate() {
            let mut row = vec![k.to_string(), batch.horizon.to_string()];
            row.extend(t.final_y().iter().map(|v| v.to_string()));
            row.extend(t.final_freq().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    atomic_write(&dir.join("finals.csv"), &finals)?;
    if with_paths {
        let paths = dir.join("paths");
        for (k, t) in batch.runs.iter().enumerate() {
            let mut buf = Vec::new();
            t.write_csv(&mut buf)?;
            atomic_write(&paths.join(format!("run_{k}.csv")), &buf)?;
        }
    }
    Ok(())
}

/// `run,endpoint_label,final_y1,…`.
pub fn write_endpoints_csv(path: &Path, labels: &[EndpointLabel]) -> Result<()> {
    let d = labels.first().map_or(0, |l| l.final_y.len());
    let bytes = csv_bytes(|w| {
        let mut header = vec!["run".to_string(), "endpoint_label".to_string()];
        header.extend((1..=d).map(|i| format!("final_y{i}")));
        w.write_record(&header)?;
        for l in labels {
            let mut row = vec![l.run.to_string(), l.label.clone()];
            row.extend(l.final_y.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    atomic_write(path, &bytes)
}
