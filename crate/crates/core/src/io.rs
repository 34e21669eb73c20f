//! Tabular export and import of plans, trajectories and certificates.
//!
//! Numbers are written with shortest round-trip formatting, so every value
//! reads back bit-identical.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::hierarchy::{AlphaVector, DesiredPositions};
use crate::qp::{KktResiduals, PlanStep};
use crate::safety::CertificationReport;
use crate::sim::SimLog;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    /// Whitespace-separated columns.
    Text,
}

impl Format {
    fn separator(self) -> &'static str {
        match self {
            Format::Csv => ",",
            Format::Text => " ",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Text => "txt",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "text" => Ok(Format::Text),
            other => Err(Error::Schema(format!("unknown output format {other:?} (expected csv or text)"))),
        }
    }
}

/// Shortest round-trip text for `x`, switching to exponent form for very
/// small or very large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) || !a.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

struct Table<'a, W: Write> {
    out: &'a mut W,
    sep: &'static str,
}

impl<W: Write> Table<'_, W> {
    fn row<I, S>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: std::fmt::Display,
    {
        let mut first = true;
        for c in cells {
            if !first {
                self.out.write_all(self.sep.as_bytes())?;
            }
            write!(self.out, "{c}")?;
            first = false;
        }
        self.out.write_all(b"\n")?;
        Ok(())
    }
}

pub fn plan_header(n_pl: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n_pl).map(|l| format!("alpha_{l}")));
    h.extend(["s_x", "s_y", "s_z", "objective", "kkt"].map(String::from));
    h
}

/// Planner trace: `t,alpha_1..alpha_npl,s_x,s_y,s_z,objective,kkt`, where
/// `kkt` is the largest KKT residual.
pub fn write_plan_trace<W: Write>(out: &mut W, plan: &[PlanStep], n_pl: usize, format: Format) -> Result<()> {
    let mut t = Table { out, sep: format.separator() };
    t.row(plan_header(n_pl))?;
    for step in plan {
        let mut cells = vec![step.t];
        cells.extend_from_slice(step.alpha.as_slice());
        cells.extend([step.s.x, step.s.y, step.s.z, step.objective, step.kkt.max()]);
        t.row(cells.into_iter().map(fmt_f64))?;
    }
    Ok(())
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Reads a planner trace in either format. The single `kkt` column is read
/// back into every residual component.
pub fn read_plan_trace(source: &str) -> Result<Vec<PlanStep>> {
    let mut lines = source.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty plan trace".into() })?;
    let header = split_fields(header);
    let n_pl = header.iter().filter(|h| h.starts_with("alpha_")).count();
    if header != plan_header(n_pl) || n_pl < 2 {
        return Err(Error::Parse { line: 1, message: format!("unexpected plan trace header {:?}", header.join(",")) });
    }
    let mut plan = Vec::new();
    for (i, line) in lines {
        let fields = split_fields(line);
        if fields.len() != header.len() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("{} columns, expected {}", fields.len(), header.len()),
            });
        }
        let v = fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        let kkt = v[n_pl + 5];
        plan.push(PlanStep {
            t: v[0],
            alpha: AlphaVector(v[1..=n_pl].to_vec()),
            s: Vec3::new(v[n_pl + 1], v[n_pl + 2], v[n_pl + 3]),
            objective: v[n_pl + 4],
            kkt: KktResiduals { stationarity: kkt, primal: kkt, complementarity: kkt },
        });
    }
    if plan.is_empty() {
        return Err(Error::Parse { line: 2, message: "plan trace has no samples".into() });
    }
    Ok(plan)
}

/// Desired positions: `t,agent_id,x,y,z`.
pub fn write_desired_trajectory<W: Write>(
    out: &mut W,
    times: &[f64],
    desired: &[DesiredPositions],
    format: Format,
) -> Result<()> {
    let mut t = Table { out, sep: format.separator() };
    t.row(["t", "agent_id", "x", "y", "z"])?;
    for (time, snapshot) in times.iter().zip(desired) {
        for (i, p) in snapshot.iter().enumerate() {
            t.row([fmt_f64(*time), (i + 1).to_string(), fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z)])?;
        }
    }
    Ok(())
}

/// Simulation log: `t,agent_id,x_des,y_des,z_des,x_act,y_act,z_act`.
pub fn write_sim_log<W: Write>(out: &mut W, log: &SimLog, format: Format) -> Result<()> {
    let mut t = Table { out, sep: format.separator() };
    t.row(["t", "agent_id", "x_des", "y_des", "z_des", "x_act", "y_act", "z_act"])?;
    for ((time, des), act) in log.times.iter().zip(&log.desired).zip(&log.actual) {
        for (i, (d, a)) in des.iter().zip(act).enumerate() {
            t.row([
                fmt_f64(*time),
                (i + 1).to_string(),
                fmt_f64(d.x),
                fmt_f64(d.y),
                fmt_f64(d.z),
                fmt_f64(a.x),
                fmt_f64(a.y),
                fmt_f64(a.z),
            ])?;
        }
    }
    Ok(())
}

/// Certificate table: `t,cell_id,lambda1,lambda2,lambda3,bound,margin,safe`.
pub fn write_certification<W: Write>(out: &mut W, report: &CertificationReport, format: Format) -> Result<()> {
    let mut t = Table { out, sep: format.separator() };
    t.row(["t", "cell_id", "lambda1", "lambda2", "lambda3", "bound", "margin", "safe"])?;
    for step in &report.steps {
        for s in &step.spectra {
            let [l1, l2, l3] = s.eigenvalues;
            t.row([
                fmt_f64(step.t),
                s.cell.0.to_string(),
                fmt_f64(l1),
                fmt_f64(l2),
                fmt_f64(l3),
                fmt_f64(s.bound),
                fmt_f64(s.margin),
                s.is_safe().to_string(),
            ])?;
        }
    }
    Ok(())
}
