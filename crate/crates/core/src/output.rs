//! CSV tables, field dumps with metadata sidecars, and gnuplot `.dat` files.

use crate::error::Result;
use crate::grid::SpinorField;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Write a CSV table to any writer.
pub fn write_csv<W: Write, S: AsRef<str>>(out: W, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|s| s.as_ref()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
    write_csv(std::fs::File::create(path)?, header, rows)
}

/// Whitespace-separated columns under a `# column ...` header.
pub fn write_dat(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# {}", header.join(" "))?;
    for r in rows {
        writeln!(f, "{}", r.join(" "))?;
    }
    f.flush()?;
    Ok(())
}

/// Field dump `ix,iy,iz,x,y,z,re0,im0,...,re3,im3`.
pub fn write_field<W: Write>(out: W, field: &SpinorField) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "ix", "iy", "iz", "x", "y", "z", "re0", "im0", "re1", "im1", "re2", "im2", "re3", "im3",
    ])?;
    for (i, s) in field.values.iter().enumerate() {
        let [ix, iy, iz] = field.grid.unindex(i);
        let x = field.grid.point(i);
        let mut rec = vec![ix.to_string(), iy.to_string(), iz.to_string()];
        rec.extend(x.iter().map(|v| v.to_string()));
        for c in &s.0 {
            rec.push(c.re.to_string());
            rec.push(c.im.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `<path>.meta` next to a field dump.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Field CSV plus a `key=value` sidecar with `L`, `n`, `shape`, `g` and any extra keys.
pub fn write_field_with_meta(
    path: &Path,
    field: &SpinorField,
    shape: &str,
    g: f64,
    extra: &[(&str, String)],
) -> Result<()> {
    write_field(std::fs::File::create(path)?, field)?;
    let mut m = std::fs::File::create(sidecar_path(path))?;
    writeln!(m, "L={}", field.grid.half_width)?;
    writeln!(m, "n={}", field.grid.n)?;
    writeln!(m, "shape={shape}")?;
    writeln!(m, "g={g}")?;
    for (k, v) in extra {
        writeln!(m, "{k}={v}")?;
    }
    Ok(())
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
