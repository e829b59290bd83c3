use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance block embedded in every artifact.
#[derive(Debug, Serialize)]
pub struct RunInfo<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: &'a C,
}

impl<'a, C: Serialize> RunInfo<'a, C> {
    pub fn new(config: &'a C) -> Self {
        Self {
            tool: "dchi",
            version: VERSION,
            config,
        }
    }
}

/// A file that only appears at its destination once `commit` succeeds;
/// dropping it without committing removes the partial output.
pub struct AtomicFile {
    dest: PathBuf,
    writer: BufWriter<NamedTempFile>,
}

impl AtomicFile {
    pub fn create(dest: &Path) -> Result<Self> {
        let dir = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let tmp = NamedTempFile::new_in(dir)
            .with_context(|| format!("cannot create output in {}", dir.display()))?;
        Ok(Self {
            dest: dest.to_owned(),
            writer: BufWriter::new(tmp),
        })
    }

    pub fn commit(self) -> Result<()> {
        let tmp = self.writer.into_inner().context("flushing output")?;
        tmp.persist(&self.dest)
            .with_context(|| format!("writing {}", self.dest.display()))?;
        Ok(())
    }
}

impl Write for AtomicFile {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.writer.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.writer.flush()
    }
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    run: RunInfo<'a, C>,
    results: &'a R,
}

fn stage_json<C: Serialize, R: Serialize>(dest: &Path, config: &C, results: &R) -> Result<AtomicFile> {
    let mut f = AtomicFile::create(dest)?;
    serde_json::to_writer_pretty(
        &mut f,
        &Envelope {
            run: RunInfo::new(config),
            results,
        },
    )?;
    writeln!(f)?;
    Ok(f)
}

/// Rows preceded by a `# {run info json}` comment line.
fn stage_csv<C: Serialize, R: Serialize>(dest: &Path, config: &C, rows: &[R]) -> Result<AtomicFile> {
    let mut f = AtomicFile::create(dest)?;
    writeln!(f, "# {}", serde_json::to_string(&RunInfo::new(config))?)?;
    {
        let mut w = csv::Writer::from_writer(&mut f);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(f)
}

/// `report.json` -> `report.csv`.
pub fn csv_path(json: &Path) -> PathBuf {
    json.with_extension("csv")
}

/// Write `dest` as a JSON envelope plus the CSV plot data next to it. Both
/// are fully written before either is moved into place.
pub fn write_report<C: Serialize, R: Serialize, W: Serialize>(
    dest: &Path,
    config: &C,
    results: &R,
    rows: &[W],
) -> Result<()> {
    anyhow::ensure!(
        csv_path(dest) != dest,
        "--out {} would collide with its CSV companion",
        dest.display()
    );
    let json = stage_json(dest, config, results)?;
    let csv = stage_csv(&csv_path(dest), config, rows)?;
    json.commit()?;
    csv.commit()
}
