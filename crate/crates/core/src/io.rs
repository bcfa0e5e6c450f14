//! Portable dumps: value grids as a JSON header plus CSV body, path
//! ensembles as CSV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::galerkin::HypothesisParams;
use crate::hjb::{gradient, Lattice, SolveDiagnostics, ValueGrid};
use crate::sde::PathEnsemble;

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Everything about a value grid except the nodal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGridHeader {
    pub fingerprint: String,
    pub seed: Option<u64>,
    pub lattice: Lattice,
    pub horizon: f64,
    pub time_slices: usize,
    pub hyp: HypothesisParams,
    pub cost: CostSpec,
    pub diagnostics: SolveDiagnostics,
}

/// Writes `<stem>.json` and `<stem>.csv` into `dir`. CSV columns:
/// `t, i_1..i_m, u, du_1..du_m`.
pub fn write_value_grid(
    dir: &Path,
    stem: &str,
    v: &ValueGrid,
    fingerprint: &str,
    seed: Option<u64>,
    hyp: HypothesisParams,
    cost: &CostSpec,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let header = ValueGridHeader {
        fingerprint: fingerprint.to_string(),
        seed,
        lattice: v.lattice.clone(),
        horizon: v.horizon,
        time_slices: v.times.len() - 1,
        hyp,
        cost: cost.clone(),
        diagnostics: v.diagnostics.clone(),
    };
    let mut hf = BufWriter::new(File::create(dir.join(format!("{stem}.json")))?);
    serde_json::to_writer_pretty(&mut hf, &header)?;
    hf.write_all(b"\n")?;
    hf.flush()?;

    let m = v.m();
    let grads = gradient(v);
    let mut w = csv_writer(BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?));
    let mut head = vec!["t".to_string()];
    head.extend((1..=m).map(|k| format!("i_{k}")));
    head.push("u".into());
    head.extend((1..=m).map(|k| format!("du_{k}")));
    w.write_record(&head)?;
    for (n, t) in v.times.iter().enumerate() {
        for flat in 0..v.lattice.len() {
            let mut rec = vec![t.to_string()];
            rec.extend(v.lattice.multi_index(flat).iter().map(|i| i.to_string()));
            rec.push(v.values[n][flat].to_string());
            rec.extend(grads.grads[n][flat * m..(flat + 1) * m].iter().map(|g| g.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads back a dump written by [`write_value_grid`].
pub fn read_value_grid(dir: &Path, stem: &str) -> Result<(ValueGridHeader, ValueGrid)> {
    let header: ValueGridHeader =
        serde_json::from_reader(BufReader::new(File::open(dir.join(format!("{stem}.json")))?))?;
    let lat = header.lattice.clone();
    let slices = header.time_slices;
    let mut values = vec![vec![f64::NAN; lat.len()]; slices + 1];
    let mut times = vec![f64::NAN; slices + 1];
    let mut r = csv::Reader::from_path(dir.join(format!("{stem}.csv")))?;
    let per_slice = lat.len();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Io(format!("row {row}: missing column {i}")))?
                .parse::<f64>()
                .map_err(|e| Error::Io(format!("row {row}: {e}")))
        };
        let n = row / per_slice;
        let flat = row % per_slice;
        if n > slices {
            return Err(Error::Io(format!("row {row}: more rows than slices")));
        }
        times[n] = parse(0)?;
        values[n][flat] = parse(1 + lat.m)?;
    }
    let v = ValueGrid {
        lattice: lat,
        horizon: header.horizon,
        times,
        values,
        diagnostics: header.diagnostics.clone(),
    };
    Ok((header, v))
}

/// Path dump with columns `path, t, X_1..X_m, z_1..z_m, running_cost`. The
/// control on the last row of each path is empty (no control acts after `T`).
pub fn write_paths_csv<W: Write>(out: W, ens: &PathEnsemble, cost: &CostSpec) -> Result<()> {
    let m = ens.m;
    let mut w = csv_writer(out);
    let mut head = vec!["path".to_string(), "t".to_string()];
    head.extend((1..=m).map(|k| format!("X_{k}")));
    head.extend((1..=m).map(|k| format!("z_{k}")));
    head.push("running_cost".into());
    w.write_record(&head)?;
    for (p, path) in ens.paths.iter().enumerate() {
        let n_states = path.states.len() / m;
        for n in 0..n_states {
            let x = &path.states[n * m..(n + 1) * m];
            let mut rec = vec![p.to_string(), ens.times[n].to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            if (n + 1) * m <= path.controls.len() {
                rec.extend(path.controls[n * m..(n + 1) * m].iter().map(|v| v.to_string()));
            } else {
                rec.extend(std::iter::repeat_n(String::new(), m));
            }
            rec.push(cost.running.eval(x).to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
