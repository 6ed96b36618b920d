//! Line-oriented text format for instances and models.
//!
//! Every float is written with 17 significant digits, so reading a file back
//! reproduces the values bit for bit. See the book chapter on the harness for
//! the grammar.

use std::io::{BufRead, Write};

use super::{
    ClientDataset, DataPoint, FeatureDist, FederatedDataset, Label, LossKind, LossModel, ModelVector,
    ProblemInstance,
};
use crate::error::{Error, Result};
use crate::optim::ProjectionDomain;

const INSTANCE_HEADER: &str = "pfedlab-instance 1";
const MODELS_HEADER: &str = "pfedlab-models 1";

fn write_floats<W: Write>(w: &mut W, xs: &[f64]) -> std::io::Result<()> {
    for x in xs {
        write!(w, " {x:.16e}")?;
    }
    Ok(())
}

pub fn write_instance<W: Write>(mut w: W, instance: &ProblemInstance, data: &FederatedDataset) -> Result<()> {
    writeln!(w, "{INSTANCE_HEADER}")?;
    match instance.loss.kind {
        LossKind::Quadratic { rho } => writeln!(w, "family quadratic {rho:.16e}")?,
        LossKind::Logistic { c_x, features } => {
            let f = match features {
                FeatureDist::Uniform => "uniform",
                FeatureDist::Rademacher => "rademacher",
            };
            writeln!(w, "family logistic {c_x:.16e} {f}")?
        }
    }
    writeln!(w, "dim {}", instance.dim())?;
    write!(w, "domain {:.16e}", instance.loss.domain.radius())?;
    write_floats(&mut w, instance.loss.domain.center())?;
    writeln!(w)?;
    writeln!(w, "clients {}", data.num_clients())?;
    for (i, c) in data.clients().iter().enumerate() {
        writeln!(w, "client {} {} {:.16e}", c.client_id, c.len(), data.weights()[i])?;
        write!(w, "optimum")?;
        write_floats(&mut w, &instance.true_optima[i])?;
        writeln!(w)?;
        for p in &c.points {
            match p {
                DataPoint::Plain { z } => {
                    write!(w, "z")?;
                    write_floats(&mut w, z)?;
                }
                DataPoint::Labeled { x, y } => {
                    write!(w, "y {}", if *y == Label::Pos { "+1" } else { "-1" })?;
                    write_floats(&mut w, x)?;
                }
            }
            writeln!(w)?;
        }
    }
    writeln!(w, "end")?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.inner.next() {
                None => return Err(self.err("unexpected end of input")),
                Some(l) => {
                    let l = l?;
                    let t = l.trim();
                    if !t.is_empty() && !t.starts_with('#') {
                        return Ok(t.to_string());
                    }
                }
            }
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line, message: message.into() }
    }

    /// Next line, split into its keyword and remaining fields.
    fn expect(&mut self, keyword: &str) -> Result<Vec<String>> {
        let l = self.next_line()?;
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some(k) if k == keyword => Ok(parts.map(str::to_string).collect()),
            other => Err(self.err(format!("expected `{keyword}`, found `{}`", other.unwrap_or("")))),
        }
    }

    fn float(&self, s: &str) -> Result<f64> {
        s.parse::<f64>().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn int(&self, s: &str) -> Result<usize> {
        s.parse::<usize>().map_err(|_| self.err(format!("bad integer `{s}`")))
    }

    fn floats(&self, fields: &[String], dim: usize) -> Result<Vec<f64>> {
        if fields.len() != dim {
            return Err(self.err(format!("expected {dim} coordinates, found {}", fields.len())));
        }
        fields.iter().map(|f| self.float(f)).collect()
    }
}

pub fn read_instance<R: BufRead>(r: R) -> Result<(ProblemInstance, FederatedDataset)> {
    let mut lines = Lines { inner: r.lines(), line: 0 };
    let header = lines.next_line()?;
    if header != INSTANCE_HEADER {
        return Err(lines.err(format!("unsupported header `{header}`")));
    }
    let fam = lines.expect("family")?;
    let kind = match fam.first().map(String::as_str) {
        Some("quadratic") if fam.len() == 2 => LossKind::Quadratic { rho: lines.float(&fam[1])? },
        Some("logistic") if fam.len() == 3 => {
            let features = match fam[2].as_str() {
                "uniform" => FeatureDist::Uniform,
                "rademacher" => FeatureDist::Rademacher,
                f => return Err(lines.err(format!("unknown feature distribution `{f}`"))),
            };
            LossKind::Logistic { c_x: lines.float(&fam[1])?, features }
        }
        _ => return Err(lines.err("malformed family line")),
    };
    let dim_fields = lines.expect("dim")?;
    let dim = lines.int(dim_fields.first().ok_or_else(|| lines.err("missing dimension"))?)?;
    let dom = lines.expect("domain")?;
    if dom.len() != dim + 1 {
        return Err(lines.err("domain needs a radius and a center"));
    }
    let radius = lines.float(&dom[0])?;
    let center = lines.floats(&dom[1..], dim)?;
    let domain = ProjectionDomain::new(center, radius)?;
    let loss = match kind {
        LossKind::Quadratic { rho } => LossModel::quadratic(rho, domain)?,
        LossKind::Logistic { c_x, features } => LossModel::logistic(c_x, features, domain)?,
    };
    let m_fields = lines.expect("clients")?;
    let m = lines.int(m_fields.first().ok_or_else(|| lines.err("missing client count"))?)?;
    let mut clients = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    let mut optima = Vec::with_capacity(m);
    for _ in 0..m {
        let c = lines.expect("client")?;
        if c.len() != 3 {
            return Err(lines.err("client line needs id, size and weight"));
        }
        let (id, n, p) = (lines.int(&c[0])?, lines.int(&c[1])?, lines.float(&c[2])?);
        weights.push(p);
        let opt = lines.expect("optimum")?;
        optima.push(ModelVector(lines.floats(&opt, dim)?));
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let l = lines.next_line()?;
            let fields: Vec<String> = l.split_whitespace().map(str::to_string).collect();
            let point = match (fields[0].as_str(), &kind) {
                ("z", LossKind::Quadratic { .. }) => DataPoint::Plain { z: lines.floats(&fields[1..], dim)? },
                ("y", LossKind::Logistic { .. }) if fields.len() >= 2 => {
                    let y = match fields[1].as_str() {
                        "+1" => Label::Pos,
                        "-1" => Label::Neg,
                        s => return Err(lines.err(format!("bad label `{s}`"))),
                    };
                    DataPoint::Labeled { x: lines.floats(&fields[2..], dim)?, y }
                }
                (k, _) => return Err(lines.err(format!("unexpected record `{k}`"))),
            };
            points.push(point);
        }
        clients.push(ClientDataset::new(id, points)?);
    }
    lines.expect("end")?;
    let data = FederatedDataset::with_weights(clients, weights.clone())?;
    Ok((ProblemInstance { loss, true_optima: optima, weights }, data))
}

/// Trained models: one per client, plus an optional shared model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub global: Option<ModelVector>,
    pub locals: Vec<ModelVector>,
}

pub fn write_models<W: Write>(mut w: W, models: &ModelSet) -> Result<()> {
    let dim = models.locals.first().map_or(0, |v| v.len());
    writeln!(w, "{MODELS_HEADER}")?;
    writeln!(w, "dim {dim}")?;
    if let Some(g) = &models.global {
        write!(w, "global")?;
        write_floats(&mut w, g)?;
        writeln!(w)?;
    }
    for (i, l) in models.locals.iter().enumerate() {
        write!(w, "local {i}")?;
        write_floats(&mut w, l)?;
        writeln!(w)?;
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn read_models<R: BufRead>(r: R) -> Result<ModelSet> {
    let mut lines = Lines { inner: r.lines(), line: 0 };
    let header = lines.next_line()?;
    if header != MODELS_HEADER {
        return Err(lines.err(format!("unsupported header `{header}`")));
    }
    let dim_fields = lines.expect("dim")?;
    let dim = lines.int(dim_fields.first().ok_or_else(|| lines.err("missing dimension"))?)?;
    let mut out = ModelSet { global: None, locals: Vec::new() };
    loop {
        let l = lines.next_line()?;
        let fields: Vec<String> = l.split_whitespace().map(str::to_string).collect();
        match fields[0].as_str() {
            "end" => return Ok(out),
            "global" => out.global = Some(ModelVector(lines.floats(&fields[1..], dim)?)),
            "local" if fields.len() >= 2 => {
                if lines.int(&fields[1])? != out.locals.len() {
                    return Err(lines.err("local models must be listed in order"));
                }
                out.locals.push(ModelVector(lines.floats(&fields[2..], dim)?));
            }
            k => return Err(lines.err(format!("unexpected record `{k}`"))),
        }
    }
}
