//! Output files and provenance headers.
//!
//! Every text artifact starts with comment lines recording the tool version,
//! the command that produced it, and the fully resolved configuration as one
//! JSON object, so a file found on disk months later explains itself. JSON
//! reports carry the same fields as ordinary members instead (comments are
//! not valid JSON), and VTK files are written raw because their first line
//! is a format-mandated magic string.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ecmkit::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

pub struct OutputContext {
    out_dir: PathBuf,
    command: String,
    /// Resolved config (file values + flag overrides), compact JSON.
    config_json: String,
    quiet: bool,
}

impl OutputContext {
    /// Resolves the output directory (flag wins over config, default `.`)
    /// and creates it. `cfg` must already have flag overrides applied.
    pub fn new(
        command: &str,
        seed: u64,
        flag_out: Option<&Path>,
        cfg: &RunConfig,
        quiet: bool,
    ) -> Result<Self> {
        let out_dir = flag_out
            .map(Path::to_path_buf)
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&out_dir)?;
        let config_json = serde_json::to_string(cfg)
            .map_err(|err| Error::Config(format!("config not serializable: {err}")))?;
        Ok(OutputContext {
            out_dir,
            command: format!("{command} --seed {seed}"),
            config_json,
            quiet,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Opens `name` with the standard provenance header already written.
    pub fn create_commented(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.path(name);
        let mut writer = BufWriter::new(File::create(&path)?);
        writeln!(writer, "# ecmkit {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(writer, "# command: {}", self.command)?;
        writeln!(writer, "# config: {}", self.config_json)?;
        Ok((path, writer))
    }

    /// Opens `name` with no header, for formats that own their first bytes.
    pub fn create_raw(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.path(name);
        let writer = BufWriter::new(File::create(&path)?);
        Ok((path, writer))
    }

    /// Writes a pretty-printed JSON report with the provenance fields
    /// (`version`, `command`, `config`) merged into the top-level object.
    pub fn write_json<T: Serialize>(&self, name: &str, report: &T) -> Result<PathBuf> {
        let mut value = serde_json::to_value(report)
            .map_err(|err| Error::Config(format!("report not serializable: {err}")))?;
        let map = value
            .as_object_mut()
            .expect("reports are JSON objects");
        map.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        map.insert("command".into(), json!(self.command));
        map.insert(
            "config".into(),
            serde_json::from_str(&self.config_json)
                .map_err(|err| Error::Config(format!("config not serializable: {err}")))?,
        );
        let path = self.path(name);
        let mut writer = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut writer, &value)
            .map_err(|err| Error::Config(format!("report not serializable: {err}")))?;
        writeln!(writer)?;
        Ok(path)
    }

    /// Progress line on stdout; suppressed by `--quiet`.
    pub fn note(&self, message: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", message.as_ref());
        }
    }
}
