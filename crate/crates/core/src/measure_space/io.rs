//! CSV persistence for collections and flows.
//!
//! Floats are written with 17 significant digits so a read-back is exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::collection::MeasureCollection;
use super::empirical::EmpiricalMeasure;
use super::flow::MeasureFlow;
use super::grid::LabelGrid;
use crate::error::{invalid, Result};

/// Companion JSON header for a collection CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectionHeader {
    pub grid: LabelGrid,
    pub dim: usize,
    pub seed: Option<u64>,
    pub provenance: String,
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn header_row(prefix: &[&str], dim: usize) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    h.extend(["label_index", "atom_index", "weight"].map(String::from));
    h.extend((1..=dim).map(|j| format!("x_{j}")));
    h
}

fn write_rows<W: Write>(
    w: &mut csv::Writer<W>,
    prefix: &[String],
    mu: &MeasureCollection,
) -> Result<()> {
    for (k, m) in mu.per_label().iter().enumerate() {
        for (i, (x, wt)) in m.iter().enumerate() {
            let mut row = prefix.to_vec();
            row.push(k.to_string());
            row.push(i.to_string());
            row.push(fmt_f64(wt));
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            w.write_record(&row)?;
        }
    }
    Ok(())
}

pub fn write_collection_csv<W: Write>(out: W, mu: &MeasureCollection) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header_row(&[], mu.dim()))?;
    write_rows(&mut w, &[], mu)?;
    w.flush()?;
    Ok(())
}

/// Flow CSV: the collection columns prefixed by `time_index,time`.
pub fn write_flow_csv<W: Write>(out: W, flow: &MeasureFlow) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header_row(&["time_index", "time"], flow.initial().dim()))?;
    for (s, (t, mu)) in flow.times().iter().zip(flow.snapshots()).enumerate() {
        write_rows(&mut w, &[s.to_string(), fmt_f64(*t)], mu)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_collection_csv`]; the grid comes from the header.
pub fn read_collection_csv<R: Read>(input: R, header: &CollectionHeader) -> Result<MeasureCollection> {
    let mut r = csv::Reader::from_reader(input);
    let k = header.grid.len();
    let dim = header.dim;
    let mut atoms: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut weights: Vec<Vec<f64>> = vec![Vec::new(); k];
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 + dim {
            return Err(invalid(format!("row has {} fields, expected {}", rec.len(), 3 + dim)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| invalid(format!("bad number {s:?}: {e}")))
        };
        let label: usize = rec[0]
            .parse()
            .map_err(|e| invalid(format!("bad label index: {e}")))?;
        if label >= k {
            return Err(invalid(format!("label index {label} out of range")));
        }
        weights[label].push(parse(&rec[2])?);
        for j in 0..dim {
            atoms[label].push(parse(&rec[3 + j])?);
        }
    }
    let per_label = atoms
        .into_iter()
        .zip(weights)
        .map(|(a, w)| {
            let n = w.len();
            if w.iter().all(|x| *x == 1.0 / n as f64) {
                EmpiricalMeasure::uniform(dim, a)
            } else {
                EmpiricalMeasure::weighted(dim, a, w)
            }
        })
        .collect::<Result<_>>()?;
    MeasureCollection::new(header.grid.clone(), per_label)
}
