//! On-disk formats.
//!
//! * dataset: JSON Lines, a `{"meta": {...}}` header then one experiment per line
//! * aggregate snapshot: JSON with the running sums
//! * grid landscape: CSV, one row per grid point in row-major order
//! * best candidate: JSON with the moments and the estimated null space
//! * convergence study: per-run and per-`Nt` CSVs
//!
//! Reals are written with 17 significant digits so `f64` values round-trip.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::estimator::{Candidate, LandscapePoint, MomentPoint};
use crate::hankel::Layout;
use crate::linalg::SubspaceBasis;
use crate::sim::{Dataset, Experiment};
use crate::stats::SufficientStats;
use crate::validate::{ConvergenceTable, ORTHONORMAL_TOL};
use crate::{Error, Real, Result};

/// Decimal rendering with 17 significant digits.
pub fn format_real(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::NonFinite("serialized value"));
    }
    Ok(format!("{x:.16e}"))
}

fn push_array<T: Real>(out: &mut String, values: impl IntoIterator<Item = T>) -> Result<()> {
    out.push('[');
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format_real(v.as_f64())?);
    }
    out.push(']');
    Ok(())
}

/// `[[row 0], [row 1], ...]`.
fn push_rows<T: Real>(out: &mut String, m: &DMatrix<T>) -> Result<()> {
    out.push('[');
    for r in 0..m.nrows() {
        if r > 0 {
            out.push(',');
        }
        push_array(out, m.row(r).iter().copied())?;
    }
    out.push(']');
    Ok(())
}

fn rows_to_matrix<T: Real>(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<T>> {
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Format(format!(
            "{what}: row {bad} has {} entries, expected {cols}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| T::lit(rows[r][c])))
}

/// Dataset header line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(rename = "Nt")]
    pub nt: usize,
    #[serde(rename = "N")]
    pub samples: usize,
    pub m: usize,
    pub p: usize,
}

#[derive(Deserialize)]
struct HeaderLine {
    meta: DatasetMeta,
}

#[derive(Deserialize)]
struct ExperimentLine {
    i: usize,
    u: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
}

/// Streams a dataset to `w`.
pub fn write_dataset<T: Real, W: Write>(ds: &Dataset<T>, mut w: W) -> Result<()> {
    let meta = DatasetMeta {
        nt: ds.nt(),
        samples: ds.samples(),
        m: ds.m(),
        p: ds.p(),
    };
    writeln!(w, "{{\"meta\":{}}}", serde_json::to_string(&meta)?)?;
    let mut line = String::new();
    for (i, e) in ds.experiments().iter().enumerate() {
        line.clear();
        write!(line, "{{\"i\":{i},\"u\":").expect("write to String");
        push_rows(&mut line, &e.u)?;
        line.push_str(",\"y\":");
        push_rows(&mut line, &e.y)?;
        line.push('}');
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the header and hands each experiment to `f` in file order without
/// keeping it. Returns the header.
pub fn for_each_experiment<T: Real, R: BufRead>(
    r: R,
    mut f: impl FnMut(usize, Experiment<T>) -> Result<()>,
) -> Result<DatasetMeta> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty dataset file".into()))??;
    let meta = serde_json::from_str::<HeaderLine>(&header)
        .map_err(|e| Error::Format(format!("bad dataset header: {e}")))?
        .meta;
    let mut seen = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExperimentLine = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))?;
        if rec.i != seen {
            return Err(Error::Format(format!(
                "line {}: experiment index {} out of sequence (expected {seen})",
                lineno + 2,
                rec.i
            )));
        }
        if rec.u.len() != meta.samples || rec.y.len() != meta.samples {
            return Err(Error::Format(format!(
                "experiment {}: expected {} samples",
                rec.i, meta.samples
            )));
        }
        let u = rows_to_matrix(&rec.u, meta.m, "u")?;
        let y = rows_to_matrix(&rec.y, meta.p, "y")?;
        f(rec.i, Experiment::new(u, y)?)?;
        seen += 1;
    }
    if seen != meta.nt {
        return Err(Error::Format(format!(
            "header announces {} experiments, file holds {seen}",
            meta.nt
        )));
    }
    Ok(meta)
}

pub fn read_dataset<T: Real, R: BufRead>(r: R) -> Result<Dataset<T>> {
    let mut exps = Vec::new();
    for_each_experiment(r, |_, e| {
        exps.push(e);
        Ok(())
    })?;
    Dataset::new(exps)
}

#[derive(Deserialize)]
struct StatsFile {
    d: usize,
    #[serde(rename = "Nc")]
    cols: usize,
    count: u64,
    m: usize,
    p: usize,
    #[serde(rename = "L")]
    depth: usize,
    #[serde(rename = "G")]
    gram: Vec<f64>,
    rowsum: Vec<f64>,
}

/// Snapshot of the running sums; `G` is row-major.
pub fn write_stats<T: Real, W: Write>(st: &SufficientStats<T>, mut w: W) -> Result<()> {
    let layout = st.layout();
    let mut out = String::new();
    write!(
        out,
        "{{\"d\":{},\"Nc\":{},\"count\":{},\"m\":{},\"p\":{},\"L\":{},\"G\":",
        st.d(),
        st.cols(),
        st.count(),
        layout.m,
        layout.p,
        layout.depth
    )
    .expect("write to String");
    push_array(&mut out, st.gram().transpose().iter().copied())?;
    out.push_str(",\"rowsum\":");
    push_array(&mut out, st.rowsum().iter().copied())?;
    out.push('}');
    writeln!(w, "{out}")?;
    w.flush()?;
    Ok(())
}

pub fn read_stats<T: Real, R: std::io::Read>(r: R) -> Result<SufficientStats<T>> {
    let f: StatsFile = serde_json::from_reader(r)?;
    let layout = Layout::new(f.m, f.p, f.depth)?;
    if layout.rows() != f.d {
        return Err(Error::Format(format!(
            "d = {} inconsistent with (m + p) L = {}",
            f.d,
            layout.rows()
        )));
    }
    if f.gram.len() != f.d * f.d {
        return Err(Error::Format(format!("G has {} entries, expected {}", f.gram.len(), f.d * f.d)));
    }
    let gram = DMatrix::from_row_iterator(f.d, f.d, f.gram.into_iter().map(T::lit));
    let rowsum = DVector::from_iterator(f.rowsum.len(), f.rowsum.into_iter().map(T::lit));
    SufficientStats::from_parts(layout, f.cols, f.count, gram, rowsum)
}

fn moment_fields<T: Real>(pt: &MomentPoint<T>, identical: bool) -> Result<Vec<String>> {
    let vals: Vec<T> = if identical {
        vec![pt.m1u, pt.m2u]
    } else {
        vec![pt.m1u, pt.m2u, pt.m1y, pt.m2y]
    };
    vals.into_iter().map(|v| format_real(v.as_f64())).collect()
}

/// Landscape CSV: `m1,m2,sigma_min,numerical_rank,admitted`, or the four
/// moment columns `m1u,m2u,m1y,m2y` when `identical` is false.
pub fn write_landscape<T: Real, W: Write>(
    points: &[LandscapePoint<T>],
    identical: bool,
    w: W,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = if identical {
        vec!["m1", "m2"]
    } else {
        vec!["m1u", "m2u", "m1y", "m2y"]
    };
    header.extend(["sigma_min", "numerical_rank", "admitted"]);
    csv.write_record(&header).map_err(csv_err)?;
    for lp in points {
        let mut rec = moment_fields(&lp.point, identical)?;
        rec.push(format_real(lp.sigma_min.as_f64())?);
        rec.push(lp.rank.to_string());
        rec.push(lp.admitted.to_string());
        csv.write_record(&rec).map_err(csv_err)?;
    }
    csv.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Best-candidate JSON: `{m1, m2, sigma_min, nullspace}` (identical mode) or
/// `{m1u, m2u, m1y, m2y, sigma_min, nullspace}`, plus the full spectrum.
pub fn write_candidate<T: Real, W: Write>(c: &Candidate<T>, identical: bool, mut w: W) -> Result<()> {
    let names: &[&str] = if identical {
        &["m1", "m2"]
    } else {
        &["m1u", "m2u", "m1y", "m2y"]
    };
    let mut out = String::from("{");
    for (name, v) in names.iter().zip(moment_fields(&c.point, identical)?) {
        write!(out, "\"{name}\":{v},").expect("write to String");
    }
    write!(out, "\"sigma_min\":{},\"singular_values\":", format_real(c.sigma_min.as_f64())?)
        .expect("write to String");
    push_array(&mut out, c.singular_values.iter().copied())?;
    out.push_str(",\"nullspace\":");
    push_rows(&mut out, c.nullspace.rows())?;
    out.push('}');
    writeln!(w, "{out}")?;
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct CandidateFile {
    m1: Option<f64>,
    m2: Option<f64>,
    m1u: Option<f64>,
    m2u: Option<f64>,
    m1y: Option<f64>,
    m2y: Option<f64>,
    sigma_min: f64,
    #[serde(default)]
    singular_values: Vec<f64>,
    nullspace: Vec<Vec<f64>>,
}

pub fn read_candidate<T: Real, R: std::io::Read>(r: R) -> Result<Candidate<T>> {
    let f: CandidateFile = serde_json::from_reader(r)?;
    let point = match (f.m1, f.m2, f.m1u, f.m2u, f.m1y, f.m2y) {
        (Some(m1), Some(m2), None, None, None, None) => MomentPoint::identical(T::lit(m1), T::lit(m2)),
        (None, None, Some(a), Some(b), Some(c), Some(d)) => {
            MomentPoint::new(T::lit(a), T::lit(b), T::lit(c), T::lit(d))
        }
        _ => {
            return Err(Error::Format(
                "candidate needs either m1, m2 or m1u, m2u, m1y, m2y".into(),
            ))
        }
    };
    let cols = f.nullspace.first().map_or(0, Vec::len);
    let rows = rows_to_matrix::<T>(&f.nullspace, cols, "nullspace")?;
    Ok(Candidate {
        point,
        sigma_min: T::lit(f.sigma_min),
        singular_values: DVector::from_iterator(
            f.singular_values.len(),
            f.singular_values.into_iter().map(T::lit),
        ),
        nullspace: SubspaceBasis::new(rows, T::lit(ORTHONORMAL_TOL))?,
    })
}

/// `Nt,seed,theta_max,admitted`; `theta_max` is empty for runs without a
/// candidate.
pub fn write_convergence<W: Write>(table: &ConvergenceTable, w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["Nt", "seed", "theta_max", "admitted"]).map_err(csv_err)?;
    for row in &table.rows {
        let theta = match row.theta_max {
            Some(t) => format_real(t)?,
            None => String::new(),
        };
        csv.write_record([row.nt.to_string(), row.seed.to_string(), theta, row.admitted().to_string()])
            .map_err(csv_err)?;
    }
    csv.flush()?;
    Ok(())
}

/// `Nt,median_theta_max`.
pub fn write_convergence_summary<W: Write>(table: &ConvergenceTable, w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["Nt", "median_theta_max"]).map_err(csv_err)?;
    for s in &table.summary {
        csv.write_record([s.nt.to_string(), format_real(s.median_theta_max)?])
            .map_err(csv_err)?;
    }
    csv.flush()?;
    Ok(())
}
