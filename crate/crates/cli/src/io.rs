//! CSV and JSON input/output.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use nvhedge::calibration::{OpsSeries, PriceSeries};
use serde::Serialize;

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file))
}

fn check_header(rdr: &mut csv::Reader<fs::File>, expected: &[&str], path: &Path) -> Result<()> {
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        bail!("{}: expected columns {}, found {}", path.display(), expected.join(","), header.join(","));
    }
    Ok(())
}

fn number(field: &str, what: &str, line: u64) -> Result<f64> {
    field.parse().with_context(|| format!("line {line}: invalid {what} {field:?}"))
}

/// Read `date,price` rows with ISO dates.
pub fn read_prices(path: &Path) -> Result<PriceSeries> {
    let mut rdr = reader(path)?;
    check_header(&mut rdr, &["date", "price"], path)?;
    let (mut dates, mut prices) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .with_context(|| format!("line {line}: invalid date {:?}", &rec[0]))?;
        dates.push(date.format("%Y-%m-%d").to_string());
        prices.push(number(&rec[1], "price", line)?);
    }
    Ok(PriceSeries::new(dates, prices)?)
}

/// Read `month,sales,price,x0,xbar` rows.
pub fn read_ops(path: &Path) -> Result<OpsSeries> {
    let mut rdr = reader(path)?;
    check_header(&mut rdr, &["month", "sales", "price", "x0", "xbar"], path)?;
    let mut ops = OpsSeries { months: vec![], sales: vec![], prices: vec![], x0: vec![], xbar: vec![] };
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        ops.months.push(rec[0].to_string());
        ops.sales.push(number(&rec[1], "sales", line)?);
        ops.prices.push(number(&rec[2], "price", line)?);
        ops.x0.push(number(&rec[3], "x0", line)?);
        ops.xbar.push(number(&rec[4], "xbar", line)?);
    }
    ops.validate()?;
    Ok(ops)
}

/// CSV output led by a `# config_hash=... seed=...` comment line.
pub struct CsvOut {
    writer: csv::Writer<Vec<u8>>,
    preamble: String,
}

impl CsvOut {
    pub fn new(hash: &str, seed: u64, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self { writer, preamble: format!("# config_hash={hash} seed={seed}\n") })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn save(self, path: &Path) -> Result<()> {
        let body = self.writer.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
        let mut out = self.preamble.into_bytes();
        out.extend_from_slice(&body);
        write_file(path, &out)
    }
}

/// Shortest round-trip representation of a float.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}
