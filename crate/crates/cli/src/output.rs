//! Atomic artifact writing and the one-line machine-readable summaries.

use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;

/// Write atomically: temp file in the target directory, then rename.
pub fn atomic_write(path: &Path, contents: &str) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut temp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    temp.write_all(contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    temp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Stream JSONL rows into the target atomically, one object per line, so
/// large campaigns need bounded memory.
pub fn atomic_write_jsonl<T: serde::Serialize>(
    path: &Path,
    rows: impl Iterator<Item = anyhow::Result<T>>,
) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let temp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    {
        let mut writer = BufWriter::new(temp.as_file());
        for row in rows {
            let row = row?;
            serde_json::to_writer(&mut writer, &row)
                .with_context(|| format!("writing {}", path.display()))?;
            writer
                .write_all(b"\n")
                .with_context(|| format!("writing {}", path.display()))?;
        }
        writer
            .flush()
            .with_context(|| format!("flushing {}", path.display()))?;
    }
    temp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Print the single machine-readable summary line for a command.
pub fn summary(value: serde_json::Value) {
    println!("{value}");
}
