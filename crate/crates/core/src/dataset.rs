//! CSV ingestion and emission.
//!
//! Inputs need a header row; columns are found by name, so their order is
//! free and extra columns are ignored. Every parse error names the line.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimation::{GammaRatioTable, LifetimeDataset, LifetimeRow, PhaseDataset, PhaseRow};
use crate::units::Energy;

struct Table {
    source: String,
    /// (line number, values for the requested columns)
    rows: Vec<(usize, Vec<Option<f64>>)>,
}

fn dataset_error(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Dataset {
        source_name: source.to_string(),
        line,
        message: message.into(),
    }
}

fn read_table<R: Read>(
    reader: R,
    source: &str,
    required: &[&str],
    optional: &[&str],
) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_error(source, e)),
    };
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(dataset_error(source, 1, "file is empty"));
    }
    let mut columns = Vec::new();
    for name in required {
        match headers.iter().position(|h| h == *name) {
            Some(i) => columns.push(Some(i)),
            None => {
                return Err(dataset_error(
                    source,
                    1,
                    format!(
                        "missing column `{name}` (header: {})",
                        headers.iter().collect::<Vec<_>>().join(",")
                    ),
                ))
            }
        }
    }
    for name in optional {
        columns.push(headers.iter().position(|h| h == *name));
    }

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let mut values = Vec::with_capacity(columns.len());
        for (k, col) in columns.iter().enumerate() {
            let name = if k < required.len() {
                required[k]
            } else {
                optional[k - required.len()]
            };
            let value = match col.and_then(|i| record.get(i)) {
                None | Some("") if k >= required.len() => None,
                None | Some("") => {
                    return Err(dataset_error(
                        source,
                        line,
                        format!("missing value for `{name}`"),
                    ))
                }
                Some(text) => {
                    let v: f64 = text.parse().map_err(|_| {
                        dataset_error(source, line, format!("`{name}` is not a number: {text:?}"))
                    })?;
                    if !v.is_finite() {
                        return Err(dataset_error(
                            source,
                            line,
                            format!("`{name}` is not finite"),
                        ));
                    }
                    Some(v)
                }
            };
            values.push(value);
        }
        rows.push((line, values));
    }
    if rows.is_empty() {
        return Err(dataset_error(source, 2, "no data rows"));
    }
    Ok(Table {
        source: source.to_string(),
        rows,
    })
}

fn csv_error(source: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => dataset_error(source, line, format!("{other:?}")),
    }
}

fn open(path: &Path) -> Result<(File, String)> {
    Ok((File::open(path)?, path.display().to_string()))
}

impl Table {
    fn check_increasing(&self, column: usize) -> Result<()> {
        for pair in self.rows.windows(2) {
            let (a, b) = (pair[0].1[column].unwrap(), pair[1].1[column].unwrap());
            if !(b > a) {
                return Err(dataset_error(
                    &self.source,
                    pair[1].0,
                    "detunings must be strictly increasing",
                ));
            }
        }
        Ok(())
    }
}

/// Phase scan `detuning_ueV,phi_deg[,weight]`; detunings are measured from `origin`.
pub fn parse_phase_csv<R: Read>(reader: R, source: &str, origin: Energy) -> Result<PhaseDataset> {
    let table = read_table(reader, source, &["detuning_ueV", "phi_deg"], &["weight"])?;
    table.check_increasing(0)?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for (line, v) in &table.rows {
        let weight = v[2].unwrap_or(1.0);
        if weight < 0.0 {
            return Err(dataset_error(source, *line, "weight must be >= 0"));
        }
        rows.push(PhaseRow {
            omega: origin + Energy::from_uev(v[0].unwrap()),
            phi: v[1].unwrap().to_radians(),
            weight,
        });
    }
    PhaseDataset::new(rows)
}

pub fn read_phase_csv(path: &Path, origin: Energy) -> Result<PhaseDataset> {
    let (file, source) = open(path)?;
    parse_phase_csv(file, &source, origin)
}

/// Lifetimes `detuning_meV,inverse_t1_per_ns`; detunings are measured from `origin`.
pub fn parse_lifetime_csv<R: Read>(
    reader: R,
    source: &str,
    origin: Energy,
) -> Result<LifetimeDataset> {
    let table = read_table(reader, source, &["detuning_meV", "inverse_t1_per_ns"], &[])?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for (line, v) in &table.rows {
        let inverse_t1 = v[1].unwrap();
        if inverse_t1 <= 0.0 {
            return Err(dataset_error(
                source,
                *line,
                "inverse_t1_per_ns must be > 0",
            ));
        }
        rows.push(LifetimeRow {
            omega: origin + Energy::from_mev(v[0].unwrap()),
            inverse_t1,
        });
    }
    LifetimeDataset::new(rows)
}

pub fn read_lifetime_csv(path: &Path, origin: Energy) -> Result<LifetimeDataset> {
    let (file, source) = open(path)?;
    parse_lifetime_csv(file, &source, origin)
}

/// γ/γ_hom table `detuning_meV,gamma_ratio`, detuning measured from the cavity.
pub fn parse_gamma_table<R: Read>(reader: R, source: &str) -> Result<GammaRatioTable> {
    let table = read_table(reader, source, &["detuning_meV", "gamma_ratio"], &[])?;
    table.check_increasing(0)?;
    for (line, v) in &table.rows {
        if v[1].unwrap() < 0.0 {
            return Err(dataset_error(source, *line, "gamma_ratio must be >= 0"));
        }
    }
    GammaRatioTable::new(
        table
            .rows
            .iter()
            .map(|(_, v)| (v[0].unwrap(), v[1].unwrap()))
            .collect(),
    )
}

pub fn read_gamma_table(path: &Path) -> Result<GammaRatioTable> {
    let (file, source) = open(path)?;
    parse_gamma_table(file, &source)
}

/// Writes a header and rows of already-formatted fields.
pub fn write_csv<W: Write>(writer: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    };
    w.write_record(header).map_err(to_io)?;
    for row in rows {
        w.write_record(row).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest decimal that reads back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn phase_csv_with_optional_weight() {
        let text = "detuning_ueV,phi_deg\n-1.0,0.5\n0.0,1.0\n1.5,-2.0\n";
        let ds = parse_phase_csv(text.as_bytes(), "t", Energy::from_uev(100.0)).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.rows()[2].omega, Energy::from_uev(101.5));
        assert_relative_eq!(ds.rows()[1].phi, 1f64.to_radians());
        assert_eq!(ds.rows()[0].weight, 1.0);

        let weighted = "phi_deg,weight,detuning_ueV\n0.5,2.0,-1.0\n1.0,0.0,1.0\n";
        let ds = parse_phase_csv(weighted.as_bytes(), "t", Energy::ZERO).unwrap();
        assert_eq!(ds.rows()[0].weight, 2.0);
    }

    #[test]
    fn errors_name_the_line() {
        let bad = "detuning_ueV,phi_deg\n-1.0,0.5\n0.0,abc\n";
        match parse_phase_csv(bad.as_bytes(), "t", Energy::ZERO) {
            Err(Error::Dataset { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let unordered = "detuning_ueV,phi_deg\n1.0,0.5\n0.0,0.1\n";
        match parse_phase_csv(unordered.as_bytes(), "t", Energy::ZERO) {
            Err(Error::Dataset { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = "detuning_ueV,phi_deg\n1.0\n";
        assert!(matches!(
            parse_phase_csv(short.as_bytes(), "t", Energy::ZERO),
            Err(Error::Dataset { line: 2, .. })
        ));
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(
            parse_phase_csv(&b""[..], "t", Energy::ZERO),
            Err(Error::Dataset { .. })
        ));
        assert!(matches!(
            parse_phase_csv(&b"detuning_ueV,phi_deg\n"[..], "t", Energy::ZERO),
            Err(Error::Dataset { .. })
        ));
        assert!(matches!(
            parse_phase_csv(&b"x,y\n1,2\n"[..], "t", Energy::ZERO),
            Err(Error::Dataset { line: 1, .. })
        ));
    }

    #[test]
    fn lifetime_and_table() {
        let lt = parse_lifetime_csv(
            &b"detuning_meV,inverse_t1_per_ns\n-2.7,1.215\n"[..],
            "t",
            Energy::from_mev(1388.0),
        )
        .unwrap();
        assert_relative_eq!(lt.rows()[0].omega.mev(), 1385.3, max_relative = 1e-14);
        assert!(parse_lifetime_csv(
            &b"detuning_meV,inverse_t1_per_ns\n0,-1\n"[..],
            "t",
            Energy::ZERO
        )
        .is_err());

        let t = parse_gamma_table(&b"detuning_meV,gamma_ratio\n-1,0.5\n1,1.5\n"[..], "t").unwrap();
        assert_relative_eq!(t.at(0.0).unwrap(), 1.0);
    }

    #[test]
    fn written_numbers_round_trip() {
        let x = 0.1 + 0.2;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        let mut out = Vec::new();
        write_csv(
            &mut out,
            &["a", "b"],
            &[vec![fmt_f64(1.0), fmt_f64(-2.5e-7)]],
        )
        .unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "a,b\n1.0,-2.5e-7\n");
    }
}
