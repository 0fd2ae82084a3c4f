//! Output files: CSV tables with a commented provenance header, and JSON.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Where outputs go and what to stamp on them.
#[derive(Clone, Debug)]
pub struct OutputDir {
    pub dir: PathBuf,
    pub command: &'static str,
    pub digest: String,
    pub seed: u64,
}

impl OutputDir {
    pub fn create(dir: &Path, command: &'static str, digest: &str, seed: u64) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            digest: digest.to_string(),
            seed,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// A CSV writer whose file starts with `# key=value` comment lines.
    pub fn csv(&self, name: &str, header: &[String]) -> CliResult<Table> {
        let path = self.path(name);
        let mut file = File::create(&path).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        writeln!(
            file,
            "# qtraj {}\n# config_digest={}\n# seed={}",
            self.command, self.digest, self.seed
        )?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(Table { writer, path })
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

pub struct Table {
    writer: csv::Writer<File>,
    pub path: PathBuf,
}

impl Table {
    pub fn row(&mut self, values: &[f64]) -> CliResult<()> {
        self.writer.write_record(values.iter().map(|v| num(*v)))?;
        Ok(())
    }

    pub fn fields<I, S>(&mut self, fields: I) -> CliResult<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn header<S: AsRef<str>>(names: &[S]) -> Vec<String> {
    names.iter().map(|s| s.as_ref().to_string()).collect()
}
