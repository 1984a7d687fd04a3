use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::chem::graph::{LigandGraph, Pose};
use crate::chem::vocab::{AtomVocab, BondVocab};
use crate::error::{Error, Result};

/// Reads one JSON value per non-blank line. Each line's outcome is reported separately
/// so callers can skip bad records; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Vec<Result<T>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                out.push(Err(Error::Io(e)));
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", k + 1))));
    }
    out
}

/// Reads every record, failing on the first bad line.
pub fn read_jsonl_strict<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    read_jsonl(reader).into_iter().collect()
}

pub fn write_jsonl<T: Serialize>(mut writer: impl Write, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes one MDL V2000 record per pose; all records share `title` on their first line.
pub fn write_sdf(mut w: impl Write, title: &str, g: &LigandGraph, poses: &[Pose], vocab: &AtomVocab) -> Result<()> {
    let bonds = g.bond_list();
    if g.n_atoms() > 999 || bonds.len() > 999 {
        return Err(Error::InvalidArgument("V2000 records hold at most 999 atoms and bonds".into()));
    }
    for (k, pose) in poses.iter().enumerate() {
        if pose.len() != g.n_atoms() {
            return Err(Error::SizeMismatch(format!(
                "pose {} has {} rows for {} atoms",
                k + 1,
                pose.len(),
                g.n_atoms()
            )));
        }
        writeln!(w, "{title}")?;
        writeln!(w, "  fuse      3D")?;
        writeln!(w, "pose {}", k + 1)?;
        writeln!(w, "{:>3}{:>3}  0  0  0  0  0  0  0  0999 V2000", g.n_atoms(), bonds.len())?;
        for (p, &a) in pose.0.iter().zip(g.atoms()) {
            writeln!(
                w,
                "{:>10.4}{:>10.4}{:>10.4} {:<3} 0  0  0  0  0  0  0  0  0  0  0  0",
                p[0],
                p[1],
                p[2],
                vocab.file_symbol(a)
            )?;
        }
        for &(i, j, b) in &bonds {
            writeln!(w, "{:>3}{:>3}{:>3}  0", i + 1, j + 1, BondVocab::sdf_code(b))?;
        }
        writeln!(w, "M  END")?;
        writeln!(w, "> <pose_index>\n{}\n", k + 1)?;
        writeln!(w, "$$$$")?;
    }
    Ok(())
}
