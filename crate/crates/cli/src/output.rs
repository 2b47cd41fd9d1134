use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// `v` with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// `v` with 15 significant digits.
pub fn fmt15(v: f64) -> String {
    format!("{v:.14e}")
}

/// Write a CSV with a fixed header; every row is pre-formatted.
pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// The named columns of the CSV at `path`, parsed as numbers.
pub fn read_columns(path: &Path, columns: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let headers = r.headers()?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers.iter().position(|h| h.trim() == *c).ok_or_else(|| {
                CliError::Config(format!("{}: missing column {c:?}", path.display()))
            })
        })
        .collect::<Result<_, _>>()?;
    let mut out = vec![Vec::new(); columns.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for (k, &i) in idx.iter().enumerate() {
            let field = rec.get(i).unwrap_or("");
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Config(format!(
                    "{}: row {}: column {:?} is not a number: {field:?}",
                    path.display(),
                    line + 2,
                    columns[k]
                ))
            })?;
            out[k].push(v);
        }
    }
    if out[0].is_empty() {
        return Err(CliError::Config(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Output location of one run: a directory holding the config echo and
/// `report.json`, plus the primary file of the subcommand.
pub struct RunDir {
    pub dir: PathBuf,
    pub primary: PathBuf,
}

impl RunDir {
    /// `out` names either the primary file (when its extension matches
    /// `primary`) or the directory. Without `out` the directory is
    /// `runs/<unix time>-<hash prefix>`.
    pub fn resolve(out: Option<&Path>, primary: &str, hash: &str) -> Result<Self, CliError> {
        let ext = Path::new(primary).extension();
        let (dir, file) = match out {
            Some(p) if ext.is_some() && p.extension() == ext => {
                let dir = match p.parent() {
                    Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                    _ => PathBuf::from("."),
                };
                (dir, p.to_path_buf())
            }
            Some(p) => (p.to_path_buf(), p.join(primary)),
            None => {
                let secs = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs());
                let dir = PathBuf::from("runs").join(format!("{secs}-{}", &hash[..12]));
                let file = dir.join(primary);
                (dir, file)
            }
        };
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir, primary: file })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write the effective configuration and, when given, the source text.
    pub fn echo_config(
        &self,
        cfg: &ExperimentConfig,
        source: Option<&str>,
    ) -> Result<(), CliError> {
        fs::write(self.file("config.toml"), cfg.to_toml())?;
        if let Some(text) = source {
            fs::write(self.file("config.source.toml"), text)?;
        }
        Ok(())
    }
}
