//! CSV and JSON writers. Floats are printed with 17 significant digits so
//! a read-back reproduces every double exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hjb::PeriodSolution;
use crate::payment::PaymentLayer;
use crate::simulate::PathRecord;

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn surface_csv(surface: &PeriodSolution) -> String {
    let mut out = String::from("t,y,v,z_star\n");
    for (k, &t) in surface.times.iter().enumerate() {
        for (j, (&v, &z)) in surface.surface[k].iter().zip(&surface.feedback[k]).enumerate() {
            let y = j as f64 * surface.dy;
            let _ = writeln!(out, "{},{},{},{}", fmt_f64(t), fmt_f64(y), fmt_f64(v), fmt_f64(z));
        }
    }
    out
}

/// Header `t,y,v,z_star`; rows by ascending `t`, then ascending `y`.
pub fn emit_grid_csv(surface: &PeriodSolution, path: &Path) -> Result<()> {
    write_text(path, &surface_csv(surface))
}

pub fn payment_csv(layer: &PaymentLayer) -> String {
    let mut out = String::from("y,f,eta_star\n");
    for (j, (&f, &eta)) in layer.f.values.iter().zip(&layer.eta_star.values).enumerate() {
        let y = layer.f.node(j);
        let _ = writeln!(out, "{},{},{}", fmt_f64(y), fmt_f64(f), fmt_f64(eta));
    }
    out
}

pub fn emit_payment_csv(layer: &PaymentLayer, path: &Path) -> Result<()> {
    write_text(path, &payment_csv(layer))
}

pub fn emit_paths_csv(paths: &[PathRecord], path: &Path) -> Result<()> {
    let mut out = String::from("path,payoff,y_terminal,eta_sum\n");
    for p in paths {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.path,
            fmt_f64(p.payoff),
            fmt_f64(p.y_terminal),
            fmt_f64(p.eta_sum)
        );
    }
    write_text(path, &out)
}

/// Pretty JSON with a trailing newline.
pub fn emit_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Generic table writer: a header row and rows of floats.
pub fn emit_table(header: &[&str], rows: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}
