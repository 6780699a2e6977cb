//! CSV reading and writing for the three raw panels.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every value bit for bit.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{FundamentalsPanel, MacroPanel, PricePanel, PriceRow};
use crate::{Error, Result};

const PRICE_HEADER: [&str; 6] = [
    "asset_id",
    "month",
    "price",
    "monthly_return",
    "volume",
    "shares_outstanding",
];

struct Reader {
    path: PathBuf,
    inner: csv::Reader<File>,
    headers: Vec<String>,
}

impl Reader {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let mut inner = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let headers = inner
            .headers()
            .map_err(|e| parse_error(path, 1, "<header>", e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        Ok(Self {
            path: path.to_path_buf(),
            inner,
            headers,
        })
    }

    fn records(&mut self) -> Result<Vec<(u64, csv::StringRecord)>> {
        let mut out = Vec::new();
        for rec in self.inner.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, csv::Position::line);
                parse_error(&self.path, line, "<row>", e.to_string())
            })?;
            let line = rec.position().map_or(0, csv::Position::line);
            if rec.len() != self.headers.len() {
                return Err(parse_error(
                    &self.path,
                    line,
                    "<row>",
                    format!("expected {} fields, found {}", self.headers.len(), rec.len()),
                ));
            }
            out.push((line, rec));
        }
        Ok(out)
    }

    fn f64_at(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<f64> {
        let raw = rec[col].trim();
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_error(&self.path, line, &self.headers[col], format!("not a number: `{raw}`")))
    }

    fn opt_f64_at(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<Option<f64>> {
        if rec[col].trim().is_empty() {
            Ok(None)
        } else {
            self.f64_at(line, rec, col).map(Some)
        }
    }

    fn i64_at(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<i64> {
        let raw = rec[col].trim();
        raw.parse::<i64>()
            .map_err(|_| parse_error(&self.path, line, &self.headers[col], format!("not an integer: `{raw}`")))
    }

    fn expect_prefix(&self, prefix: &[&str]) -> Result<()> {
        let ok = self.headers.len() >= prefix.len() && self.headers.iter().zip(prefix).all(|(h, p)| h == p);
        if ok {
            Ok(())
        } else {
            Err(parse_error(
                &self.path,
                1,
                "<header>",
                format!("expected header starting with `{}`", prefix.join(",")),
            ))
        }
    }
}

fn parse_error(path: &Path, line: u64, column: &str, message: String) -> Error {
    Error::Parse {
        file: path.to_path_buf(),
        line,
        column: column.to_string(),
        message,
    }
}

fn with_file<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> Error + '_ {
    move |e| Error::Validation(format!("{}: {e}", path.display()))
}

pub fn read_prices(path: &Path) -> Result<PricePanel> {
    let mut r = Reader::open(path)?;
    r.expect_prefix(&PRICE_HEADER)?;
    if r.headers.len() != PRICE_HEADER.len() {
        return Err(parse_error(path, 1, "<header>", "unexpected extra columns".into()));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records()? {
        rows.push(PriceRow {
            asset_id: rec[0].trim().to_string(),
            month: r.i64_at(line, &rec, 1)?,
            price: r.f64_at(line, &rec, 2)?,
            monthly_return: r.f64_at(line, &rec, 3)?,
            volume: r.f64_at(line, &rec, 4)?,
            shares_outstanding: r.f64_at(line, &rec, 5)?,
        });
    }
    PricePanel::from_rows(rows).map_err(|e| with_file(path)(e))
}

pub fn read_fundamentals(path: &Path) -> Result<FundamentalsPanel> {
    let mut r = Reader::open(path)?;
    r.expect_prefix(&["asset_id", "fiscal_year"])?;
    let items = r.headers[2..].to_vec();
    let mut rows = Vec::new();
    for (line, rec) in r.records()? {
        let year = r.i64_at(line, &rec, 1)?;
        let values = (2..r.headers.len())
            .map(|c| r.opt_f64_at(line, &rec, c))
            .collect::<Result<Vec<_>>>()?;
        rows.push((rec[0].trim().to_string(), year, values));
    }
    FundamentalsPanel::from_rows(items, rows).map_err(|e| with_file(path)(e))
}

pub fn read_macro(path: &Path) -> Result<MacroPanel> {
    let mut r = Reader::open(path)?;
    r.expect_prefix(&["month"])?;
    let series = r.headers[1..].to_vec();
    let mut rows = Vec::new();
    for (line, rec) in r.records()? {
        let month = r.i64_at(line, &rec, 0)?;
        let values = (1..r.headers.len())
            .map(|c| r.f64_at(line, &rec, c))
            .collect::<Result<Vec<_>>>()?;
        rows.push((month, values));
    }
    MacroPanel::from_rows(series, rows).map_err(|e| with_file(path)(e))
}

/// Loads and validates all three panels, logging row counts.
pub fn load_panels(
    price_path: &Path,
    fundamentals_path: &Path,
    macro_path: &Path,
) -> Result<(PricePanel, FundamentalsPanel, MacroPanel)> {
    let prices = read_prices(price_path)?;
    let fundamentals = read_fundamentals(fundamentals_path)?;
    let macro_panel = read_macro(macro_path)?;
    log::info!(
        "loaded {} price rows ({} assets), {} fundamentals rows, {} macro rows",
        prices.n_rows(),
        prices.n_assets(),
        fundamentals.n_rows(),
        macro_panel.n_rows()
    );
    Ok((prices, fundamentals, macro_panel))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_prices<W: Write>(panel: &PricePanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PRICE_HEADER)?;
    for r in panel.rows() {
        w.write_record([
            r.asset_id,
            r.month.to_string(),
            r.price.to_string(),
            r.monthly_return.to_string(),
            r.volume.to_string(),
            r.shares_outstanding.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fundamentals<W: Write>(panel: &FundamentalsPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["asset_id".to_string(), "fiscal_year".to_string()];
    header.extend(panel.items().iter().cloned());
    w.write_record(&header)?;
    for (asset, year, values) in panel.rows() {
        let mut rec = vec![asset.to_string(), year.to_string()];
        rec.extend(values.iter().map(|v| fmt_opt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_macro<W: Write>(panel: &MacroPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["month".to_string()];
    header.extend(panel.series().iter().cloned());
    w.write_record(&header)?;
    for (month, values) in panel.rows() {
        let mut rec = vec![month.to_string()];
        rec.extend(values.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `prices.csv`, `fundamentals.csv` and `macro.csv` into `dir`.
pub fn write_panels(
    dir: &Path,
    prices: &PricePanel,
    fundamentals: &FundamentalsPanel,
    macro_panel: &MacroPanel,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_prices(prices, std::io::BufWriter::new(File::create(dir.join("prices.csv"))?))?;
    write_fundamentals(
        fundamentals,
        std::io::BufWriter::new(File::create(dir.join("fundamentals.csv"))?),
    )?;
    write_macro(
        macro_panel,
        std::io::BufWriter::new(File::create(dir.join("macro.csv"))?),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn malformed_cell_names_file_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "prices.csv",
            "asset_id,month,price,monthly_return,volume,shares_outstanding\nA,0,10,0,1,1\nA,1,abc,0.1,1,1\n",
        );
        let err = read_prices(&p).unwrap_err();
        match err {
            Error::Parse { file, line, column, .. } => {
                assert_eq!(file, p);
                assert_eq!(line, 3);
                assert_eq!(column, "price");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn two_month_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "prices.csv",
            "asset_id,month,price,monthly_return,volume,shares_outstanding\nA,0,10,0,1,1\nA,1,11,0.1,1,1\n",
        );
        let panel = read_prices(&p).unwrap();
        assert_eq!(panel.n_rows(), 2);
    }

    #[test]
    fn duplicate_is_reported_with_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "prices.csv",
            "asset_id,month,price,monthly_return,volume,shares_outstanding\nA,0,10,0,1,1\nA,0,10,0,1,1\n",
        );
        let msg = read_prices(&p).unwrap_err().to_string();
        assert!(msg.contains("duplicate key (A, 0)"), "{msg}");
        assert!(msg.contains("prices.csv"), "{msg}");
    }

    #[test]
    fn empty_fundamental_cell_is_null() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "f.csv", "asset_id,fiscal_year,revenue,ebit\nA,1,5.5,\n");
        let f = read_fundamentals(&p).unwrap();
        assert_eq!(f.get("A", 1).unwrap(), &[Some(5.5), None]);
    }
}
