//! Artifact writers. Files of a failed run are removed again.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};
use crate::pipeline::RunOutcome;

/// Tracks files written by one command; drops them unless `commit` is called.
#[derive(Debug, Default)]
pub struct OutputGuard {
    files: Vec<PathBuf>,
    dir: Option<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    pub fn new(dir: &Path) -> Result<Self> {
        let created = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            files: Vec::new(),
            dir: created.then(|| dir.to_path_buf()),
            committed: false,
        })
    }

    pub fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        self.files.push(path.clone());
        let mut f =
            fs::File::create(&path).map_err(|e| CliError::Output(format!("cannot create {}: {e}", path.display())))?;
        f.write_all(bytes)
            .map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.files)
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if let Some(d) = &self.dir {
            let _ = fs::remove_dir(d);
        }
    }
}

pub fn samples_csv(names: &[String], rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(names).map_err(CliError::output)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))
            .map_err(CliError::output)?;
    }
    w.into_inner().map_err(CliError::output)
}

/// Long format `feature,value,source`, training rows first.
pub fn plot_csv(names: &[String], train: &[Vec<f64>], generated: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["feature", "value", "source"])
        .map_err(CliError::output)?;
    for (rows, source) in [(train, "train"), (generated, "generated")] {
        for r in rows {
            for (name, v) in names.iter().zip(r) {
                w.write_record([name.as_str(), &v.to_string(), source])
                    .map_err(CliError::output)?;
            }
        }
    }
    w.into_inner().map_err(CliError::output)
}

/// Writes samples, report, plot data and manifest into `dir`.
pub fn write_run(outcome: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    let out = &outcome.manifest.output;
    let names = outcome.prepared.raw.feature_names();
    let mut guard = OutputGuard::new(dir)?;
    guard.write(dir.join(&out.samples), &samples_csv(names, &outcome.report.samples)?)?;
    let json = outcome.report.to_json().map_err(CliError::output)?;
    guard.write(dir.join(&out.report), json.as_bytes())?;
    guard.write(
        dir.join(&out.plot),
        &plot_csv(names, &outcome.prepared.raw.features(), &outcome.report.samples)?,
    )?;
    guard.write(dir.join(&out.manifest), outcome.manifest.to_toml_string()?.as_bytes())?;
    Ok(guard.commit())
}
