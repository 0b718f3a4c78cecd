//! Headered CSV for observation series: columns `t, x1, ..., xd`.

use super::ObservationSeries;
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use std::io::{Read, Write};

pub fn write_series_csv<W: Write>(series: &ObservationSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=series.dim()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for (t, row) in series.matrix().rows().enumerate() {
        let mut rec = vec![(t + 1).to_string()];
        // 17 significant digits round-trip every f64
        rec.extend(row.iter().map(|v| format!("{v:.16e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv<R: Read>(input: R) -> Result<ObservationSeries> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < 2 || &header[0] != "t" {
        return Err(Error::InvalidInput(
            "expected a header row `t,x1,...,xd` with at least one data column".into(),
        ));
    }
    let d = header.len() - 1;
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row_no = i + 1;
        if rec.len() != d + 1 {
            return Err(Error::InvalidInput(format!(
                "row {row_no}: expected {} fields, found {}",
                d + 1,
                rec.len()
            )));
        }
        for j in 1..=d {
            let v: f64 = rec[j].parse().map_err(|_| {
                Error::InvalidInput(format!("row {row_no}, column {}: cannot parse `{}`", &header[j], &rec[j]))
            })?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "row {row_no}, column {}: value {v} is not strictly positive",
                    &header[j]
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    ObservationSeries::new(RowMatrix::new(rows, d, data)?)
}
