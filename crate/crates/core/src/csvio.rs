//! Diagnostics CSV export and the matching reader.
//!
//! Columns, in order: `t, kinetic, potential, heat, total, dissipation_rate,
//! min_theta, max_d_norm_dev`, one `entropy_min_res[alpha]` per exponent, one
//! `local_energy_sup[r]` per radius, then `flags`. Floats are written with 17
//! significant digits, so identical records give identical bytes.

use std::path::Path;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};

const FIXED: [&str; 8] = [
    "t",
    "kinetic",
    "potential",
    "heat",
    "total",
    "dissipation_rate",
    "min_theta",
    "max_d_norm_dev",
];

/// Records with the exponents and radii that label their columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsTable {
    pub alphas: Vec<f64>,
    pub radii: Vec<f64>,
    pub records: Vec<DiagnosticsRecord>,
}

pub fn header(alphas: &[f64], radii: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    h.extend(alphas.iter().map(|a| format!("entropy_min_res[{a}]")));
    h.extend(radii.iter().map(|r| format!("local_energy_sup[{r}]")));
    h.push("flags".into());
    h
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn row(r: &DiagnosticsRecord) -> Vec<String> {
    let mut out: Vec<String> = [
        r.t,
        r.kinetic,
        r.potential,
        r.heat,
        r.total,
        r.dissipation_rate,
        r.min_theta,
        r.max_d_norm_dev,
    ]
    .iter()
    .map(|v| fmt(*v))
    .collect();
    out.extend(r.entropy_min_res.iter().map(|v| fmt(*v)));
    out.extend(r.local_energy_sup.iter().map(|v| fmt(*v)));
    out.push(r.flags.to_string());
    out
}

/// Writes the table to any writer; `label` names the sink in errors.
pub fn write_table<W: std::io::Write>(table: &DiagnosticsTable, sink: W, label: &Path) -> Result<()> {
    let fail = |message: String| Error::Format {
        path: label.to_path_buf(),
        message,
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header(&table.alphas, &table.radii))
        .map_err(|e| fail(e.to_string()))?;
    for r in &table.records {
        if r.entropy_min_res.len() != table.alphas.len() || r.local_energy_sup.len() != table.radii.len() {
            return Err(fail(format!("record at t = {} does not match the column schema", r.t)));
        }
        w.write_record(row(r)).map_err(|e| fail(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(label, e))
}

pub fn write_diagnostics(records: &[DiagnosticsRecord], alphas: &[f64], radii: &[f64], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let table = DiagnosticsTable {
        alphas: alphas.to_vec(),
        radii: radii.to_vec(),
        records: records.to_vec(),
    };
    write_table(&table, std::io::BufWriter::new(file), path)
}

fn bracketed(name: &str, prefix: &str) -> Option<f64> {
    name.strip_prefix(prefix)?
        .strip_prefix('[')?
        .strip_suffix(']')?
        .parse()
        .ok()
}

pub fn read_diagnostics(path: &Path) -> Result<DiagnosticsTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, path)
}

pub fn read_table<R: std::io::Read>(source: R, label: &Path) -> Result<DiagnosticsTable> {
    let fail = |message: String| Error::Format {
        path: label.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_reader(source);
    let head: Vec<String> = r
        .headers()
        .map_err(|e| fail(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if head.len() < FIXED.len() + 1 || head[..FIXED.len()] != FIXED || head.last().map(String::as_str) != Some("flags")
    {
        return Err(fail("not a diagnostics table: unexpected header".into()));
    }
    let middle = &head[FIXED.len()..head.len() - 1];
    let alphas: Vec<f64> = middle.iter().map_while(|h| bracketed(h, "entropy_min_res")).collect();
    let radii: Option<Vec<f64>> = middle[alphas.len()..]
        .iter()
        .map(|h| bracketed(h, "local_energy_sup"))
        .collect();
    let radii = radii.ok_or_else(|| fail("unrecognized column in header".into()))?;
    let mut records = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| fail(e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            rec[k].parse().map_err(|_| {
                fail(format!(
                    "row {}: cannot parse `{}` in column {}",
                    line + 1,
                    &rec[k],
                    head[k]
                ))
            })
        };
        let vals: Vec<f64> = (0..head.len() - 1).map(num).collect::<Result<_>>()?;
        let flags = rec[head.len() - 1]
            .parse()
            .map_err(|_| fail(format!("row {}: bad flags", line + 1)))?;
        let na = alphas.len();
        records.push(DiagnosticsRecord {
            t: vals[0],
            kinetic: vals[1],
            potential: vals[2],
            heat: vals[3],
            total: vals[4],
            dissipation_rate: vals[5],
            min_theta: vals[6],
            max_d_norm_dev: vals[7],
            entropy_min_res: vals[8..8 + na].to_vec(),
            local_energy_sup: vals[8 + na..].to_vec(),
            flags,
        });
    }
    Ok(DiagnosticsTable { alphas, radii, records })
}
