//! MPS export and import.
//!
//! The writer uses the fixed-column layout with generated eight-character names
//! (`R0000001`, `C0000001`). Original names and row tags are kept in comment
//! lines so a file can be read back into an identical [`Model`]. Coefficients
//! are written with 12 significant digits; long values may run past the
//! nominal field width, which every whitespace-tolerant reader accepts.
//! Bilinear row terms are emitted as `QCMATRIX` blocks.

use crate::model::{Model, ObjSense, Row, RowSense, RowTag, VarId, VarKind, Variable};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Mutex;

#[derive(Debug, thiserror::Error)]
pub enum MpsError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn row_code(i: usize) -> String {
    format!("R{:07}", i + 1)
}

fn col_code(j: usize) -> String {
    format!("C{:07}", j + 1)
}

/// Rounds to 12 significant digits and prints the shortest text that reads back
/// to the rounded value.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{:.11e}", v).parse().unwrap();
    let a = rounded.abs();
    if (1e-4..1e12).contains(&a) {
        format!("{}", rounded)
    } else {
        format!("{:e}", rounded)
    }
}

fn canonical_bilinear(r: &Row) -> Vec<(VarId, VarId, f64)> {
    let mut map: BTreeMap<(VarId, VarId), f64> = BTreeMap::new();
    for &(a, b, c) in &r.bilinear {
        let key = if a <= b { (a, b) } else { (b, a) };
        *map.entry(key).or_insert(0.0) += c;
    }
    map.into_iter().filter(|&(_, c)| c != 0.0).map(|((a, b), c)| (a, b, c)).collect()
}

fn escape(s: &str) -> String {
    s.replace(['\n', '\r', '\t'], " ")
}

/// Serializes `model` as MPS text.
pub fn write_mps(model: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "* model {}", escape(&model.name));
    for (j, v) in model.vars.iter().enumerate() {
        let _ = writeln!(out, "* col {} {}", col_code(j), escape(&v.name));
    }
    for (i, r) in model.rows.iter().enumerate() {
        let _ = writeln!(out, "* row {} {} {}", row_code(i), r.tag, escape(&r.name));
    }
    let _ = writeln!(out, "NAME          {}", mps_name(&model.name));
    if model.objective.sense == ObjSense::Maximize {
        out.push_str("OBJSENSE\n    MAX\n");
    }
    out.push_str("ROWS\n N  OBJ\n");
    for (i, r) in model.rows.iter().enumerate() {
        let code = match r.sense {
            RowSense::Le => "L",
            RowSense::Ge => "G",
            RowSense::Eq => "E",
        };
        let _ = writeln!(out, " {}  {}", code, row_code(i));
    }

    let mut cols: Vec<Vec<(String, f64)>> = vec![Vec::new(); model.vars.len()];
    let mut obj = vec![0.0; model.vars.len()];
    for &(v, c) in &model.objective.terms {
        obj[v.0] += c;
    }
    for (j, c) in obj.iter().enumerate() {
        if *c != 0.0 {
            cols[j].push(("OBJ".to_string(), *c));
        }
    }
    for (i, r) in model.rows.iter().enumerate() {
        for &(v, c) in &r.terms {
            cols[v.0].push((row_code(i), c));
        }
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for (j, v) in model.vars.iter().enumerate() {
        let is_int = v.kind != VarKind::Continuous;
        if is_int != in_int {
            let tag = if is_int { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    {:<8}  {:<8}  {}", format!("M{:07}", marker), "'MARKER'", tag);
            marker += 1;
            in_int = is_int;
        }
        if cols[j].is_empty() {
            // keep the column declared even if it appears nowhere
            let _ = writeln!(out, "    {:<8}  {:<8}  {}", col_code(j), "OBJ", "0");
        }
        for (rname, c) in &cols[j] {
            let _ = writeln!(out, "    {:<8}  {:<8}  {}", col_code(j), rname, fmt_num(*c));
        }
    }
    if in_int {
        let _ = writeln!(out, "    {:<8}  {:<8}  {}", format!("M{:07}", marker), "'MARKER'", "'INTEND'");
    }

    out.push_str("RHS\n");
    if model.objective.constant != 0.0 {
        let _ = writeln!(out, "    {:<8}  {:<8}  {}", "RHS", "OBJ", fmt_num(-model.objective.constant));
    }
    for (i, r) in model.rows.iter().enumerate() {
        if r.rhs != 0.0 {
            let _ = writeln!(out, "    {:<8}  {:<8}  {}", "RHS", row_code(i), fmt_num(r.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for (j, v) in model.vars.iter().enumerate() {
        write_bounds(&mut out, &col_code(j), v);
    }

    for (i, r) in model.rows.iter().enumerate() {
        let terms = canonical_bilinear(r);
        if terms.is_empty() {
            continue;
        }
        let _ = writeln!(out, "QCMATRIX   {}", row_code(i));
        for (a, b, c) in terms {
            if a == b {
                let _ = writeln!(out, "    {:<8}  {:<8}  {}", col_code(a.0), col_code(b.0), fmt_num(c));
            } else {
                let h = fmt_num(c / 2.0);
                let _ = writeln!(out, "    {:<8}  {:<8}  {}", col_code(a.0), col_code(b.0), h);
                let _ = writeln!(out, "    {:<8}  {:<8}  {}", col_code(b.0), col_code(a.0), h);
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

fn mps_name(name: &str) -> String {
    let s: String = name.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        "MODEL".into()
    } else {
        s
    }
}

fn write_bounds(out: &mut String, code: &str, v: &Variable) {
    let line = |out: &mut String, kind: &str, val: Option<f64>| {
        match val {
            Some(x) => {
                let _ = writeln!(out, " {:<2} {:<8}  {:<8}  {}", kind, "BND", code, fmt_num(x));
            }
            None => {
                let _ = writeln!(out, " {:<2} {:<8}  {}", kind, "BND", code);
            }
        };
    };
    if v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0 {
        line(out, "BV", None);
        return;
    }
    let (lo, up) = (v.lower, v.upper);
    if lo == up {
        line(out, "FX", Some(lo));
        return;
    }
    if lo == f64::NEG_INFINITY && up == f64::INFINITY {
        line(out, "FR", None);
        return;
    }
    if lo == f64::NEG_INFINITY {
        line(out, "MI", None);
    } else if lo != 0.0 || up < 0.0 || v.kind != VarKind::Continuous {
        line(out, "LO", Some(lo));
    }
    if up.is_finite() {
        line(out, "UP", Some(up));
    } else if v.kind != VarKind::Continuous {
        line(out, "PL", None);
    }
}

static TAGS: Mutex<Vec<&'static str>> = Mutex::new(Vec::new());

fn intern_tag(s: &str) -> RowTag {
    let mut tags = TAGS.lock().unwrap();
    if let Some(t) = tags.iter().find(|t| **t == s) {
        return t;
    }
    let leaked: &'static str = Box::leak(s.to_string().into_boxed_str());
    tags.push(leaked);
    leaked
}

/// Parses MPS text produced by [`write_mps`] (or any file using the same
/// section subset). Names come from the comment header when present.
pub fn read_mps(text: &str) -> Result<Model, MpsError> {
    let mut model_name = String::new();
    let mut col_names: HashMap<String, String> = HashMap::new();
    let mut row_meta: HashMap<String, (String, String)> = HashMap::new();
    let mut sense = ObjSense::Minimize;
    let mut section = String::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Row> = Vec::new();
    let mut obj_row = String::from("OBJ");
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut vars: Vec<Variable> = Vec::new();
    let mut obj_terms: Vec<(VarId, f64)> = Vec::new();
    let mut obj_const = 0.0;
    let mut in_int = false;
    let mut qc_row: Option<usize> = None;

    let perr = |line: usize, msg: &str| MpsError::Parse { line, msg: msg.to_string() };
    let num = |line: usize, s: &str| s.parse::<f64>().map_err(|_| perr(line, &format!("bad number {s}")));

    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        if let Some(rest) = raw.strip_prefix('*') {
            let rest = rest.trim_start();
            if let Some(n) = rest.strip_prefix("model ") {
                model_name = n.to_string();
            } else if let Some(c) = rest.strip_prefix("col ") {
                if let Some((code, name)) = c.split_once(' ') {
                    col_names.insert(code.to_string(), name.to_string());
                }
            } else if let Some(r) = rest.strip_prefix("row ") {
                let mut it = r.splitn(3, ' ');
                if let (Some(code), Some(tag), Some(name)) = (it.next(), it.next(), it.next()) {
                    row_meta.insert(code.to_string(), (tag.to_string(), name.to_string()));
                }
            }
            continue;
        }
        if raw.trim().is_empty() {
            continue;
        }
        if !raw.starts_with(' ') {
            let mut it = raw.split_whitespace();
            let head = it.next().unwrap_or("");
            section = head.to_string();
            if head == "QCMATRIX" {
                let rn = it.next().ok_or_else(|| perr(ln, "QCMATRIX without row"))?;
                qc_row = Some(*row_index.get(rn).ok_or_else(|| perr(ln, "unknown QCMATRIX row"))?);
            } else if head == "NAME" && model_name.is_empty() {
                model_name = it.next().unwrap_or("").to_string();
            } else if head == "OBJSENSE" {
                if let Some(s) = it.next() {
                    if s.starts_with("MAX") {
                        sense = ObjSense::Maximize;
                    }
                }
            }
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        match section.as_str() {
            "OBJSENSE" => {
                if toks[0].starts_with("MAX") {
                    sense = ObjSense::Maximize;
                }
            }
            "ROWS" => {
                if toks.len() < 2 {
                    return Err(perr(ln, "short ROWS entry"));
                }
                let s = match toks[0] {
                    "N" => {
                        obj_row = toks[1].to_string();
                        continue;
                    }
                    "L" => RowSense::Le,
                    "G" => RowSense::Ge,
                    "E" => RowSense::Eq,
                    _ => return Err(perr(ln, "unknown row type")),
                };
                let code = toks[1].to_string();
                let (tag, name) = row_meta.get(&code).cloned().unwrap_or_else(|| ("imported".into(), code.clone()));
                row_index.insert(code, rows.len());
                rows.push(Row { name, terms: Vec::new(), bilinear: Vec::new(), sense: s, rhs: 0.0, tag: intern_tag(&tag) });
            }
            "COLUMNS" => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    in_int = toks[2] == "'INTORG'";
                    continue;
                }
                if toks.len() < 3 || toks.len() % 2 == 0 {
                    return Err(perr(ln, "malformed COLUMNS entry"));
                }
                let code = toks[0];
                let j = match col_index.get(code) {
                    Some(&j) => j,
                    None => {
                        let name = col_names.get(code).cloned().unwrap_or_else(|| code.to_string());
                        vars.push(Variable {
                            name,
                            kind: if in_int { VarKind::Integer } else { VarKind::Continuous },
                            lower: 0.0,
                            upper: f64::INFINITY,
                        });
                        col_index.insert(code.to_string(), vars.len() - 1);
                        vars.len() - 1
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let c = num(ln, pair[1])?;
                    if pair[0] == obj_row {
                        if c != 0.0 {
                            obj_terms.push((VarId(j), c));
                        }
                    } else {
                        let i = *row_index.get(pair[0]).ok_or_else(|| perr(ln, "unknown row in COLUMNS"))?;
                        rows[i].terms.push((VarId(j), c));
                    }
                }
            }
            "RHS" => {
                if toks.len() < 3 {
                    return Err(perr(ln, "short RHS entry"));
                }
                for pair in toks[1..].chunks(2) {
                    if pair.len() < 2 {
                        break;
                    }
                    let v = num(ln, pair[1])?;
                    if pair[0] == obj_row {
                        obj_const = -v;
                    } else {
                        let i = *row_index.get(pair[0]).ok_or_else(|| perr(ln, "unknown row in RHS"))?;
                        rows[i].rhs = v;
                    }
                }
            }
            "BOUNDS" => {
                if toks.len() < 3 {
                    return Err(perr(ln, "short BOUNDS entry"));
                }
                let j = *col_index.get(toks[2]).ok_or_else(|| perr(ln, "unknown column in BOUNDS"))?;
                let val = toks.get(3).map(|s| num(ln, s)).transpose()?;
                let v = &mut vars[j];
                match toks[0] {
                    "UP" => {
                        let u = val.ok_or_else(|| perr(ln, "UP without value"))?;
                        v.upper = u;
                    }
                    "LO" => v.lower = val.ok_or_else(|| perr(ln, "LO without value"))?,
                    "FX" => {
                        let x = val.ok_or_else(|| perr(ln, "FX without value"))?;
                        v.lower = x;
                        v.upper = x;
                    }
                    "FR" => {
                        v.lower = f64::NEG_INFINITY;
                        v.upper = f64::INFINITY;
                    }
                    "MI" => v.lower = f64::NEG_INFINITY,
                    "PL" => v.upper = f64::INFINITY,
                    "BV" => {
                        v.kind = VarKind::Binary;
                        v.lower = 0.0;
                        v.upper = 1.0;
                    }
                    _ => return Err(perr(ln, "unsupported bound type")),
                }
            }
            "QCMATRIX" => {
                let i = qc_row.ok_or_else(|| perr(ln, "QCMATRIX entry outside block"))?;
                if toks.len() < 3 {
                    return Err(perr(ln, "short QCMATRIX entry"));
                }
                let a = *col_index.get(toks[0]).ok_or_else(|| perr(ln, "unknown column in QCMATRIX"))?;
                let b = *col_index.get(toks[1]).ok_or_else(|| perr(ln, "unknown column in QCMATRIX"))?;
                let c = num(ln, toks[2])?;
                rows[i].bilinear.push((VarId(a), VarId(b), c));
            }
            "ENDATA" => break,
            _ => return Err(perr(ln, &format!("entry in unsupported section {section}"))),
        }
    }
    // fold symmetric QCMATRIX halves back into single terms
    for r in rows.iter_mut() {
        if r.bilinear.is_empty() {
            continue;
        }
        let mut map: BTreeMap<(VarId, VarId), f64> = BTreeMap::new();
        for &(a, b, c) in &r.bilinear {
            let key = if a <= b { (a, b) } else { (b, a) };
            *map.entry(key).or_insert(0.0) += c;
        }
        r.bilinear = map.into_iter().map(|((a, b), c)| (a, b, c)).collect();
    }
    let mut m = Model::new(model_name, sense);
    m.vars = vars;
    m.rows = rows;
    m.objective.terms = obj_terms;
    m.objective.constant = obj_const;
    Ok(m)
}

pub fn export_mps(model: &Model, path: &std::path::Path) -> Result<(), MpsError> {
    std::fs::write(path, write_mps(model))?;
    Ok(())
}

pub fn import_mps(path: &std::path::Path) -> Result<Model, MpsError> {
    read_mps(&std::fs::read_to_string(path)?)
}
