use std::io::{Read, Write};

use super::{FeatureMatrix, RowKey};
use crate::{Error, Result};

/// Writes `asset_id,target_year,target,<feature names...>`.
pub fn write_features_csv<W: Write>(m: &FeatureMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["asset_id".to_string(), "target_year".into(), "target".into()];
    header.extend(m.feature_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..m.n_rows() {
        let mut rec = vec![
            m.keys[i].asset_id.clone(),
            m.keys[i].target_year.to_string(),
            m.targets[i].to_string(),
        ];
        rec.extend(m.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv<R: Read>(input: R, window_years: usize) -> Result<FeatureMatrix> {
    let mut r = csv::Reader::from_reader(input);
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if headers.len() < 3 || headers[..3] != ["asset_id", "target_year", "target"] {
        return Err(Error::Validation(
            "features.csv must start with asset_id,target_year,target".into(),
        ));
    }
    let mut m = FeatureMatrix::empty(headers[3..].to_vec(), window_years);
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, csv::Position::line);
        let num = |c: usize| -> Result<f64> {
            rec[c].parse::<f64>().map_err(|_| Error::Parse {
                file: "features.csv".into(),
                line,
                column: headers[c].clone(),
                message: format!("not a number: `{}`", &rec[c]),
            })
        };
        let year = rec[1].parse::<i64>().map_err(|_| Error::Parse {
            file: "features.csv".into(),
            line,
            column: "target_year".into(),
            message: format!("not an integer: `{}`", &rec[1]),
        })?;
        m.keys.push(RowKey {
            asset_id: rec[0].to_string(),
            target_year: year,
        });
        m.targets.push(num(2)?);
        for c in 3..headers.len() {
            m.x.push(num(c)?);
        }
    }
    Ok(m)
}
