//! CSV input and fixed-format CSV output.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Every number written by the CLI uses 9 significant digits.
pub fn num(v: f64) -> String {
    cpsr::report::sig9(v)
}

/// Read `x,y` rows. A non-numeric first row is taken as a header; `#`
/// starts a comment line.
pub fn read_two_columns(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin()
            .read_to_string(&mut text)
            .context("reading standard input")?;
    } else {
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .with_context(|| format!("reading {}", path.display()))?;
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: malformed CSV", path.display()))?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.len() != 2 {
            bail!("{}:{line}: expected 2 columns, found {}", path.display(), record.len());
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        match parsed {
            (Ok(x), Ok(y)) => rows.push((x, y)),
            _ if rows.is_empty() && idx == 0 => continue,
            _ => bail!(
                "{}:{line}: `{}` is not a pair of numbers",
                path.display(),
                record.iter().collect::<Vec<_>>().join(",")
            ),
        }
    }
    Ok(rows)
}

/// Standard output or a file.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_csv(out: &mut dyn Write, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Free text safe to place in one CSV cell.
pub fn cell_text(text: &str) -> String {
    text.replace([',', '\n', '"'], ";")
}
