//! CSV and JSON formats.
//!
//! Input datasets are UTF-8 CSV with a header naming `x1` and `x2`; other
//! columns are ignored with a warning. Sample dumps are written at full
//! precision so that a dump re-read yields the same floats. JSON reports
//! carry 12 significant digits, the sweep table 6.

use std::io::{Read, Write};

use serde::Serialize;
use serde_json::Value;

use crate::error::{Result, RtmError};
use crate::experiments::HeadToHeadReport;
use crate::model::SweepRow;
use crate::simulate::{LatentSample, ObservedSample};

pub const JSON_SIGNIFICANT_DIGITS: usize = 12;
pub const SWEEP_SIGNIFICANT_DIGITS: usize = 6;

pub const SWEEP_HEADER: &str = "beta,noise_ratio,crude_slope,berry_slope,rho";
pub const OBSERVED_HEADER: &str = "x1,x2";
pub const LATENT_HEADER: &str = "X1,X2,x1,x2";
pub const SLOPE_HEADER: &str = "slope";
pub const ADJUSTED_HEADER: &str = "d_adj";
pub const HEAD_TO_HEAD_HEADER: &str = "beta,p_crude_beats_berry,p_crude_beats_blomqvist,n_valid";

fn ingest(msg: impl Into<String>) -> RtmError {
    RtmError::Ingestion(msg.into())
}

/// Reads an observed sample. Returns the sample plus ingestion warnings.
pub fn read_observed_csv<R: Read>(reader: R) -> Result<(ObservedSample, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ingest(format!("cannot read header: {e}")))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        let hits: Vec<usize> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| *h == name)
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [i] => Ok(*i),
            [] => Err(ingest(format!(
                "missing required column `{name}` (header must contain x1,x2)"
            ))),
            _ => Err(ingest(format!("column `{name}` appears more than once"))),
        }
    };
    let (c1, c2) = (find("x1")?, find("x2")?);
    let mut warnings = Vec::new();
    let extra: Vec<&str> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != c1 && *i != c2)
        .map(|(_, h)| h)
        .collect();
    if !extra.is_empty() {
        warnings.push(format!("ignoring extra columns: {}", extra.join(", ")));
    }

    let (mut x1, mut x2) = (Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        // line numbers count the header as line 1
        let line = row + 2;
        let rec = rec.map_err(|e| ingest(format!("line {line}: {e}")))?;
        let cell = |c: usize, name: &str| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            let v: f64 = raw
                .parse()
                .map_err(|_| ingest(format!("line {line}: `{name}` is not a number: {raw:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(ingest(format!("line {line}: `{name}` is not finite")))
            }
        };
        x1.push(cell(c1, "x1")?);
        x2.push(cell(c2, "x2")?);
    }
    let obs = ObservedSample::new(x1, x2)?;
    Ok((obs, warnings))
}

pub fn write_observed_csv<W: Write>(mut w: W, obs: &ObservedSample) -> std::io::Result<()> {
    writeln!(w, "{OBSERVED_HEADER}")?;
    for (a, b) in obs.x1().iter().zip(obs.x2()) {
        writeln!(w, "{a},{b}")?;
    }
    Ok(())
}

pub fn write_latent_csv<W: Write>(
    mut w: W,
    latent: &LatentSample,
    obs: &ObservedSample,
) -> std::io::Result<()> {
    writeln!(w, "{LATENT_HEADER}")?;
    for i in 0..obs.len() {
        writeln!(
            w,
            "{},{},{},{}",
            latent.true_x1()[i],
            latent.true_x2()[i],
            obs.x1()[i],
            obs.x2()[i]
        )?;
    }
    Ok(())
}

/// Single-column CSV, full precision.
pub fn write_column_csv<W: Write>(mut w: W, header: &str, values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "{header}")?;
    for v in values {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    let f = |v: f64| format_significant(v, SWEEP_SIGNIFICANT_DIGITS);
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            f(r.beta),
            f(r.noise_ratio),
            f(r.crude_slope),
            f(r.berry_slope),
            f(r.rho)
        )?;
    }
    Ok(())
}

pub fn write_head_to_head_csv<W: Write>(
    mut w: W,
    report: &HeadToHeadReport,
) -> std::io::Result<()> {
    writeln!(w, "{HEAD_TO_HEAD_HEADER}")?;
    let f = |v: f64| format_significant(v, JSON_SIGNIFICANT_DIGITS);
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{}",
            f(r.beta),
            f(r.p_crude_beats_berry),
            f(r.p_crude_beats_blomqvist),
            r.n_valid
        )?;
    }
    Ok(())
}

/// Decimal rendering with at most `digits` significant digits, in the style
/// of C's `%g`: plain notation unless the exponent is below -5 or at least
/// `digits`, trailing zeros removed.
pub fn format_significant(x: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds to `digits` significant digits.
pub fn round_significant(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits - 1, x)
        .parse()
        .expect("round trip")
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(num) if num.is_f64() => {
            let x = num.as_f64().expect("f64 number");
            if let Some(n) =
                serde_json::Number::from_f64(round_significant(x, JSON_SIGNIFICANT_DIGITS))
            {
                *num = n;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to 12 significant digits.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut v =
        serde_json::to_value(value).map_err(|e| RtmError::Usage(format!("serialization: {e}")))?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)
        .map_err(|e| RtmError::Usage(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}
