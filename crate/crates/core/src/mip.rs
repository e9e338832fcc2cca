//! Mixed-integer formulations of the design problems and their free-format
//! MPS serialization.
//!
//! Products of weights and indicators are linearized through auxiliary
//! variables `Q` (`Q = W·D` style, bounded by four linear rows), and the
//! fit residuals are carried by free variables `Z`, leaving a diagonal
//! PSD quadratic objective over linear constraints.
//!
//! Naming: `D_i` (binary), `W_i` / `W_i_j` (weights), `Q_i` / `Q_i_j`
//! (linearized products), `Z_t` / `Z_i_t` (residuals), `Y` (ratio bound in
//! the cardinality-free per-unit model). Unit and period indices are
//! 0-based.
//!
//! Dialect: free MPS with `OBJSENSE`, integer markers, `BV`/`FR` bounds,
//! a `QMATRIX` section holding the full symmetric matrix `Q` of the
//! objective term `½ xᵀQx`, and per-row `QCMATRIX` sections holding the
//! full symmetric matrix of a quadratic constraint term `xᵀQx` (no ½).

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::objectives::Variant;
use crate::panel::Panel;
use crate::selector::{Design, DesignProblem};
use crate::weights::{WeightConstraints, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MipVar {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

impl Sense {
    fn code(self) -> &'static str {
        match self {
            Sense::Eq => "E",
            Sense::Le => "L",
            Sense::Ge => "G",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MipRow {
    pub name: String,
    pub sense: Sense,
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
    /// Full symmetric entries of a quadratic term `xᵀQx`, if any.
    pub quad: Vec<(usize, usize, f64)>,
}

/// Formulation families the exporter emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MipFormulation {
    PerUnit,
    TwoWay,
    OneWay,
    /// Per-unit without the cardinality row; minimizes a ratio bound `Y`
    /// with `Y·ΣD ≥ f` as a quadratic constraint. Export only.
    PerUnitCardinalityFree,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MipModel {
    pub name: String,
    pub formulation: MipFormulation,
    pub vars: Vec<MipVar>,
    pub rows: Vec<MipRow>,
    pub objective_linear: Vec<(usize, f64)>,
    /// Full symmetric entries of `Q` in the objective term `½ xᵀQx`.
    pub objective_quad: Vec<(usize, usize, f64)>,
}

impl MipModel {
    fn new(name: &str, formulation: MipFormulation) -> Self {
        MipModel {
            name: name.to_string(),
            formulation,
            vars: Vec::new(),
            rows: Vec::new(),
            objective_linear: Vec::new(),
            objective_quad: Vec::new(),
        }
    }

    fn var(&mut self, name: String, kind: VarKind, lower: f64, upper: f64) -> usize {
        self.vars.push(MipVar { name, kind, lower, upper });
        self.vars.len() - 1
    }

    fn row(&mut self, name: String, sense: Sense, coefs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(MipRow {
            name,
            sense,
            coefs,
            rhs,
            quad: Vec::new(),
        });
    }

    /// Same model with every coefficient list sorted by variable index,
    /// so models that differ only in entry order compare equal.
    pub fn canonical(mut self) -> Self {
        self.objective_linear.sort_by_key(|e| e.0);
        self.objective_quad.sort_by_key(|e| (e.0, e.1));
        for row in &mut self.rows {
            row.coefs.sort_by_key(|e| e.0);
            row.quad.sort_by_key(|e| (e.0, e.1));
        }
        self
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn count(&self, kind: VarKind, prefix: &str) -> usize {
        self.vars
            .iter()
            .filter(|v| v.kind == kind && v.name.starts_with(prefix))
            .count()
    }

    pub fn row_by_name(&self, name: &str) -> Option<&MipRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.objective_linear.iter().map(|&(j, c)| c * x[j]).sum();
        let quad: f64 = self.objective_quad.iter().map(|&(i, j, q)| q * x[i] * x[j]).sum();
        lin + 0.5 * quad
    }

    pub fn row_activity(&self, row: &MipRow, x: &[f64]) -> f64 {
        let lin: f64 = row.coefs.iter().map(|&(j, c)| c * x[j]).sum();
        let quad: f64 = row.quad.iter().map(|&(i, j, q)| q * x[i] * x[j]).sum();
        lin + quad
    }

    /// Largest violation of bounds, integrality and rows at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        if x.len() != self.vars.len() {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for (v, &val) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - val).max(val - v.upper);
            if v.kind == VarKind::Binary {
                worst = worst.max((val - val.round()).abs());
            }
        }
        for row in &self.rows {
            let a = self.row_activity(row, x);
            let v = match row.sense {
                Sense::Eq => (a - row.rhs).abs(),
                Sense::Le => (a - row.rhs).max(0.0),
                Sense::Ge => (row.rhs - a).max(0.0),
            };
            worst = worst.max(v);
        }
        worst
    }
}

fn check_exportable(variant: Variant, cons: &WeightConstraints) -> Result<()> {
    if !cons.nonnegative || !cons.normalize {
        return Err(Error::usage(
            "MIP export supports nonnegative, normalized weights only",
        ));
    }
    if cons.treated_equal && variant != Variant::OneWay {
        return Err(Error::usage(
            "equal treated weights are expressed by the one-way formulation",
        ));
    }
    Ok(())
}

/// Builds the formulation for the problem's variant with `ΣD = K`.
pub fn build_model(panel: &Panel, problem: &DesignProblem) -> Result<MipModel> {
    check_exportable(problem.variant, &problem.constraints)?;
    let n = panel.n_units();
    if problem.k < 1 || problem.k >= n {
        return Err(Error::usage(format!("K = {} outside 1..N−1", problem.k)));
    }
    if !(problem.lambda >= 0.0) {
        return Err(Error::usage("λ must be nonnegative"));
    }
    Ok(match problem.variant {
        Variant::PerUnit => per_unit_model(panel, problem.lambda, Some(problem.k)),
        Variant::TwoWay => global_model(panel, problem.lambda, problem.k, false),
        Variant::OneWay => global_model(panel, problem.lambda, problem.k, true),
    })
}

/// Per-unit formulation without the cardinality row.
pub fn build_cardinality_free_model(panel: &Panel, lambda: f64) -> Result<MipModel> {
    if !(lambda >= 0.0) {
        return Err(Error::usage("λ must be nonnegative"));
    }
    Ok(per_unit_model(panel, lambda, None))
}

fn per_unit_model(panel: &Panel, lambda: f64, k: Option<usize>) -> MipModel {
    let n = panel.n_units();
    let t = panel.t_pre();
    let pre = panel.pre();
    let formulation = if k.is_some() {
        MipFormulation::PerUnit
    } else {
        MipFormulation::PerUnitCardinalityFree
    };
    let mut m = MipModel::new("per_unit", formulation);
    if k.is_none() {
        m.name = "per_unit_cardinality_free".into();
    }

    let d: Vec<usize> = (0..n)
        .map(|i| m.var(format!("D_{i}"), VarKind::Binary, 0.0, 1.0))
        .collect();
    let w: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| m.var(format!("W_{i}_{j}"), VarKind::Continuous, 0.0, f64::INFINITY))
                .collect()
        })
        .collect();
    let q: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| m.var(format!("Q_{i}_{j}"), VarKind::Continuous, 0.0, f64::INFINITY))
                .collect()
        })
        .collect();
    let z: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..t)
                .map(|s| m.var(format!("Z_{i}_{s}"), VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY))
                .collect()
        })
        .collect();

    match k {
        Some(k) => m.row("CARD".into(), Sense::Eq, d.iter().map(|&v| (v, 1.0)).collect(), k as f64),
        None => m.row("ATLEASTONE".into(), Sense::Ge, d.iter().map(|&v| (v, 1.0)).collect(), 1.0),
    }
    for i in 0..n {
        let mut coefs: Vec<(usize, f64)> = (0..n).map(|j| (q[i][j], 1.0)).collect();
        coefs.push((d[i], -1.0));
        m.row(format!("QSUM_{i}"), Sense::Eq, coefs, 0.0);
    }
    for i in 0..n {
        for j in 0..n {
            m.row(format!("QCTL_{i}_{j}"), Sense::Le, vec![(q[i][j], 1.0), (d[j], 1.0)], 1.0);
            m.row(format!("QLEW_{i}_{j}"), Sense::Le, vec![(q[i][j], 1.0), (w[i][j], -1.0)], 0.0);
            m.row(
                format!("QGEW_{i}_{j}"),
                Sense::Ge,
                vec![(q[i][j], 1.0), (w[i][j], -1.0), (d[j], 1.0)],
                0.0,
            );
            m.row(format!("WLED_{i}_{j}"), Sense::Le, vec![(w[i][j], 1.0), (d[i], -1.0)], 0.0);
        }
    }
    for i in 0..n {
        for s in 0..t {
            let mut coefs = vec![(z[i][s], 1.0), (d[i], -pre[(i, s)])];
            for j in 0..n {
                coefs.push((q[i][j], pre[(j, s)]));
            }
            m.row(format!("ZDEF_{i}_{s}"), Sense::Eq, coefs, 0.0);
        }
    }

    let tf = t as f64;
    match k {
        Some(k) => {
            let kf = k as f64;
            for i in 0..n {
                for s in 0..t {
                    m.objective_quad.push((z[i][s], z[i][s], 2.0 / (kf * tf)));
                }
            }
            for i in 0..n {
                for j in 0..n {
                    m.objective_quad.push((w[i][j], w[i][j], 2.0 * lambda / kf));
                }
            }
        }
        None => {
            let y = m.var("Y".into(), VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY);
            m.objective_linear.push((y, 1.0));
            // f − Y·ΣD ≤ 0 with f = (1/T)Σz² + λΣw².
            let mut quad = Vec::new();
            for i in 0..n {
                for s in 0..t {
                    quad.push((z[i][s], z[i][s], 1.0 / tf));
                }
            }
            for i in 0..n {
                for j in 0..n {
                    quad.push((w[i][j], w[i][j], lambda));
                }
            }
            for &di in &d {
                quad.push((y, di, -0.5));
                quad.push((di, y, -0.5));
            }
            m.rows.push(MipRow {
                name: "RATIO".into(),
                sense: Sense::Le,
                coefs: Vec::new(),
                rhs: 0.0,
                quad,
            });
        }
    }
    m
}

fn global_model(panel: &Panel, lambda: f64, k: usize, one_way: bool) -> MipModel {
    let n = panel.n_units();
    let t = panel.t_pre();
    let pre = panel.pre();
    let name = if one_way { "one_way" } else { "two_way" };
    let formulation = if one_way {
        MipFormulation::OneWay
    } else {
        MipFormulation::TwoWay
    };
    let mut m = MipModel::new(name, formulation);
    let d: Vec<usize> = (0..n)
        .map(|i| m.var(format!("D_{i}"), VarKind::Binary, 0.0, 1.0))
        .collect();
    let w: Vec<usize> = (0..n)
        .map(|i| m.var(format!("W_{i}"), VarKind::Continuous, 0.0, f64::INFINITY))
        .collect();
    let q: Vec<usize> = (0..n)
        .map(|i| m.var(format!("Q_{i}"), VarKind::Continuous, 0.0, f64::INFINITY))
        .collect();
    let z: Vec<usize> = (0..t)
        .map(|s| m.var(format!("Z_{s}"), VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY))
        .collect();

    m.row("CARD".into(), Sense::Eq, d.iter().map(|&v| (v, 1.0)).collect(), k as f64);
    m.row("QSUM".into(), Sense::Eq, q.iter().map(|&v| (v, 1.0)).collect(), 1.0);
    m.row("WSUM".into(), Sense::Eq, w.iter().map(|&v| (v, 1.0)).collect(), 2.0);
    for i in 0..n {
        m.row(format!("QLED_{i}"), Sense::Le, vec![(q[i], 1.0), (d[i], -1.0)], 0.0);
        m.row(format!("QLEW_{i}"), Sense::Le, vec![(q[i], 1.0), (w[i], -1.0)], 0.0);
        m.row(
            format!("QGEW_{i}"),
            Sense::Ge,
            vec![(q[i], 1.0), (w[i], -1.0), (d[i], -1.0)],
            -1.0,
        );
    }
    if one_way {
        for i in 0..n {
            m.row(format!("QFIX_{i}"), Sense::Eq, vec![(q[i], 1.0), (d[i], -1.0 / k as f64)], 0.0);
        }
    }
    // Z_t = Σ_i (2 Q_i − W_i) Y_it, the treated-minus-control residual.
    for s in 0..t {
        let mut coefs = vec![(z[s], 1.0)];
        for i in 0..n {
            coefs.push((q[i], -2.0 * pre[(i, s)]));
            coefs.push((w[i], pre[(i, s)]));
        }
        m.row(format!("ZDEF_{s}"), Sense::Eq, coefs, 0.0);
    }
    let tf = t as f64;
    for &zs in &z {
        m.objective_quad.push((zs, zs, 2.0 / tf));
    }
    for &wi in &w {
        m.objective_quad.push((wi, wi, 2.0 * lambda));
    }
    m
}

/// Maps a fitted design onto the model's variables.
pub fn assignment_from_design(model: &MipModel, panel: &Panel, design: &Design) -> Result<Vec<f64>> {
    let n = panel.n_units();
    let t = panel.t_pre();
    let pre = panel.pre();
    if design.n_units() != n {
        return Err(Error::usage("design and panel sizes differ"));
    }
    let weights = design
        .weights
        .as_ref()
        .ok_or_else(|| Error::usage("design carries no weights"))?;
    let mut x = vec![0.0; model.vars.len()];
    let mut set = |name: String, value: f64| -> Result<()> {
        let j = model
            .var_index(&name)
            .ok_or_else(|| Error::usage(format!("model has no variable {name}")))?;
        x[j] = value;
        Ok(())
    };
    let dv = |i: usize| design.d[i] as f64;
    for i in 0..n {
        set(format!("D_{i}"), dv(i))?;
    }
    match (&weights.weights, model.formulation) {
        (Weights::PerUnit { treated, rows }, MipFormulation::PerUnit | MipFormulation::PerUnitCardinalityFree) => {
            let mut full = vec![vec![0.0; n]; n];
            for (row, &i) in rows.iter().zip(treated) {
                full[i] = row.clone();
            }
            for i in 0..n {
                for j in 0..n {
                    set(format!("W_{i}_{j}"), full[i][j])?;
                    set(format!("Q_{i}_{j}"), full[i][j] * (1.0 - dv(j)))?;
                }
                for s in 0..t {
                    let synth: f64 = (0..n).map(|j| full[i][j] * (1.0 - dv(j)) * pre[(j, s)]).sum();
                    set(format!("Z_{i}_{s}"), pre[(i, s)] * dv(i) - synth)?;
                }
            }
            if model.formulation == MipFormulation::PerUnitCardinalityFree {
                let k = design.k() as f64;
                let mut f = 0.0;
                for i in 0..n {
                    let zi: f64 = (0..t)
                        .map(|s| {
                            let synth: f64 = (0..n).map(|j| full[i][j] * (1.0 - dv(j)) * pre[(j, s)]).sum();
                            (pre[(i, s)] * dv(i) - synth).powi(2)
                        })
                        .sum();
                    let wi: f64 = full[i].iter().map(|v| v * v).sum();
                    f += zi / t as f64 + weights_lambda(design)? * wi;
                }
                set("Y".into(), f / k)?;
            }
        }
        (Weights::Global { w }, MipFormulation::TwoWay | MipFormulation::OneWay) => {
            for i in 0..n {
                set(format!("W_{i}"), w[i])?;
                set(format!("Q_{i}"), w[i] * dv(i))?;
            }
            for s in 0..t {
                let r: f64 = (0..n)
                    .map(|i| (2.0 * w[i] * dv(i) - w[i]) * pre[(i, s)])
                    .sum();
                set(format!("Z_{s}"), r)?;
            }
        }
        _ => return Err(Error::usage("weight layout does not match the formulation")),
    }
    Ok(x)
}

fn weights_lambda(design: &Design) -> Result<f64> {
    design
        .lambda
        .ok_or_else(|| Error::usage("design does not record λ"))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Serializes the model as free-format MPS.
pub fn write_mps(model: &MipModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME {}", model.name);
    let _ = writeln!(out, "OBJSENSE\n    MIN");
    let _ = writeln!(out, "ROWS\n N  OBJ");
    for row in &model.rows {
        let _ = writeln!(out, " {}  {}", row.sense.code(), row.name);
    }

    let mut by_var: Vec<Vec<(&str, f64)>> = vec![Vec::new(); model.vars.len()];
    for &(j, c) in &model.objective_linear {
        by_var[j].push(("OBJ", c));
    }
    for row in &model.rows {
        for &(j, c) in &row.coefs {
            by_var[j].push((row.name.as_str(), c));
        }
    }

    let _ = writeln!(out, "COLUMNS");
    let mut in_int = false;
    for (j, var) in model.vars.iter().enumerate() {
        let is_int = var.kind == VarKind::Binary;
        if is_int && !in_int {
            let _ = writeln!(out, "    MARKER  'MARKER'  'INTORG'");
            in_int = true;
        } else if !is_int && in_int {
            let _ = writeln!(out, "    MARKER  'MARKER'  'INTEND'");
            in_int = false;
        }
        if by_var[j].is_empty() {
            let _ = writeln!(out, "    {}  OBJ  0", var.name);
        }
        for (row, c) in &by_var[j] {
            let _ = writeln!(out, "    {}  {}  {}", var.name, row, num(*c));
        }
    }
    if in_int {
        let _ = writeln!(out, "    MARKER  'MARKER'  'INTEND'");
    }

    let _ = writeln!(out, "RHS");
    for row in model.rows.iter().filter(|r| r.rhs != 0.0) {
        let _ = writeln!(out, "    RHS  {}  {}", row.name, num(row.rhs));
    }

    let _ = writeln!(out, "BOUNDS");
    for var in &model.vars {
        match var.kind {
            VarKind::Binary => {
                let _ = writeln!(out, " BV BND  {}", var.name);
            }
            VarKind::Continuous => {
                if var.lower == f64::NEG_INFINITY && var.upper == f64::INFINITY {
                    let _ = writeln!(out, " FR BND  {}", var.name);
                } else {
                    if var.lower != 0.0 {
                        if var.lower == f64::NEG_INFINITY {
                            let _ = writeln!(out, " MI BND  {}", var.name);
                        } else {
                            let _ = writeln!(out, " LO BND  {}  {}", var.name, num(var.lower));
                        }
                    }
                    if var.upper != f64::INFINITY {
                        let _ = writeln!(out, " UP BND  {}  {}", var.name, num(var.upper));
                    }
                }
            }
        }
    }

    if !model.objective_quad.is_empty() {
        let _ = writeln!(out, "QMATRIX");
        for &(i, j, q) in &model.objective_quad {
            let _ = writeln!(out, "    {}  {}  {}", model.vars[i].name, model.vars[j].name, num(q));
        }
    }
    for row in model.rows.iter().filter(|r| !r.quad.is_empty()) {
        let _ = writeln!(out, "QCMATRIX  {}", row.name);
        for &(i, j, q) in &row.quad {
            let _ = writeln!(out, "    {}  {}  {}", model.vars[i].name, model.vars[j].name, num(q));
        }
    }
    let _ = writeln!(out, "ENDATA");
    out
}

/// Exports the problem's formulation as a model plus MPS text.
pub fn export_mip(panel: &Panel, problem: &DesignProblem) -> Result<(MipModel, String)> {
    let model = build_model(panel, problem)?;
    let text = write_mps(&model);
    Ok((model, text))
}

/// Reads back MPS text in the dialect `write_mps` emits.
pub fn read_mps(text: &str) -> Result<MipModel> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Rows,
        Columns,
        Rhs,
        Bounds,
        Qmatrix,
        Qcmatrix(usize),
        Objsense,
    }
    let bad = |line: &str| Error::data(format!("unparseable MPS line: '{line}'"));
    let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::data(format!("bad number '{s}'")));

    let mut model = MipModel::new("", MipFormulation::TwoWay);
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut var_index: HashMap<String, usize> = HashMap::new();
    let mut section = Section::None;
    let mut integer = false;

    for raw in text.lines() {
        let line = raw.trim_end();
        if line.trim().is_empty() || line.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if !line.starts_with(' ') {
            section = match tokens[0] {
                "NAME" => {
                    model.name = tokens.get(1).unwrap_or(&"").to_string();
                    Section::None
                }
                "OBJSENSE" => Section::Objsense,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "QMATRIX" => Section::Qmatrix,
                "QCMATRIX" => {
                    let name = tokens.get(1).ok_or_else(|| bad(line))?;
                    let &r = row_index.get(*name).ok_or_else(|| bad(line))?;
                    Section::Qcmatrix(r)
                }
                "ENDATA" => break,
                _ => return Err(bad(line)),
            };
            continue;
        }
        match section {
            Section::Objsense => {
                if tokens[0] != "MIN" {
                    return Err(Error::data("only minimization models are supported"));
                }
            }
            Section::Rows => {
                let sense = match tokens[0] {
                    "N" => continue,
                    "E" => Sense::Eq,
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    _ => return Err(bad(line)),
                };
                let name = tokens.get(1).ok_or_else(|| bad(line))?.to_string();
                row_index.insert(name.clone(), model.rows.len());
                model.rows.push(MipRow {
                    name,
                    sense,
                    coefs: Vec::new(),
                    rhs: 0.0,
                    quad: Vec::new(),
                });
            }
            Section::Columns => {
                if tokens.len() == 3 && tokens[1] == "'MARKER'" {
                    integer = tokens[2] == "'INTORG'";
                    continue;
                }
                if tokens.len() < 3 || tokens.len() % 2 == 0 {
                    return Err(bad(line));
                }
                let j = *var_index.entry(tokens[0].to_string()).or_insert_with(|| {
                    model.vars.push(MipVar {
                        name: tokens[0].to_string(),
                        kind: if integer { VarKind::Binary } else { VarKind::Continuous },
                        lower: 0.0,
                        upper: if integer { 1.0 } else { f64::INFINITY },
                    });
                    model.vars.len() - 1
                });
                for pair in tokens[1..].chunks(2) {
                    let c = parse(pair[1])?;
                    if pair[0] == "OBJ" {
                        if c != 0.0 {
                            model.objective_linear.push((j, c));
                        }
                    } else {
                        let &r = row_index.get(pair[0]).ok_or_else(|| bad(line))?;
                        model.rows[r].coefs.push((j, c));
                    }
                }
            }
            Section::Rhs => {
                if tokens.len() < 3 {
                    return Err(bad(line));
                }
                for pair in tokens[1..].chunks(2) {
                    let &r = row_index.get(pair[0]).ok_or_else(|| bad(line))?;
                    model.rows[r].rhs = parse(pair[1])?;
                }
            }
            Section::Bounds => {
                let name = tokens.get(2).ok_or_else(|| bad(line))?;
                let &j = var_index.get(*name).ok_or_else(|| bad(line))?;
                let v = &mut model.vars[j];
                match tokens[0] {
                    "BV" => {
                        v.kind = VarKind::Binary;
                        v.lower = 0.0;
                        v.upper = 1.0;
                    }
                    "FR" => {
                        v.lower = f64::NEG_INFINITY;
                        v.upper = f64::INFINITY;
                    }
                    "MI" => v.lower = f64::NEG_INFINITY,
                    "LO" => v.lower = parse(tokens.get(3).ok_or_else(|| bad(line))?)?,
                    "UP" => v.upper = parse(tokens.get(3).ok_or_else(|| bad(line))?)?,
                    _ => return Err(bad(line)),
                }
            }
            Section::Qmatrix | Section::Qcmatrix(_) => {
                if tokens.len() != 3 {
                    return Err(bad(line));
                }
                let &i = var_index.get(tokens[0]).ok_or_else(|| bad(line))?;
                let &j = var_index.get(tokens[1]).ok_or_else(|| bad(line))?;
                let q = parse(tokens[2])?;
                match section {
                    Section::Qmatrix => model.objective_quad.push((i, j, q)),
                    Section::Qcmatrix(r) => model.rows[r].quad.push((i, j, q)),
                    _ => unreachable!(),
                }
            }
            Section::None => return Err(bad(line)),
        }
    }
    model.formulation = match model.name.as_str() {
        "per_unit" => MipFormulation::PerUnit,
        "per_unit_cardinality_free" => MipFormulation::PerUnitCardinalityFree,
        "one_way" => MipFormulation::OneWay,
        _ => MipFormulation::TwoWay,
    };
    Ok(model)
}
