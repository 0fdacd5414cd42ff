//! Report emitters for per-variant bound and decomposition rows.
//!
//! Numeric CSV fields use 17 significant digits so that every f64 survives
//! a text round trip; the table view uses 4 decimals. Column order follows
//! `ρ_T, ρ_P, Ω, δ, γ, B, |ΔR|`, with auxiliary columns after.

use std::io::Write;

use serde::Serialize;

use crate::bound::BoundReport;
use crate::error::{PrismError, Result};
use crate::geometry::ScaleShapeDecomposition;

/// 17 significant digits in scientific notation.
pub fn fmt_exact(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_table(x: f64) -> String {
    format!("{x:.4}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum RowStatus {
    Ok,
    Failed(String),
}

/// One output row: a variant's identity plus its result.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantRow<T> {
    pub variant_id: String,
    pub family: String,
    pub method: String,
    #[serde(flatten)]
    pub status: RowStatus,
    pub result: Option<T>,
}

impl<T> VariantRow<T> {
    pub fn ok(variant_id: &str, family: &str, method: &str, result: T) -> Self {
        Self {
            variant_id: variant_id.to_string(),
            family: family.to_string(),
            method: method.to_string(),
            status: RowStatus::Ok,
            result: Some(result),
        }
    }

    pub fn failed(variant_id: &str, family: &str, method: &str, reason: impl Into<String>) -> Self {
        Self {
            variant_id: variant_id.to_string(),
            family: family.to_string(),
            method: method.to_string(),
            status: RowStatus::Failed(reason.into()),
            result: None,
        }
    }

    fn status_text(&self) -> String {
        match &self.status {
            RowStatus::Ok => "ok".to_string(),
            RowStatus::Failed(reason) => format!("failed: {reason}"),
        }
    }
}

pub const BOUND_COLUMNS: [&str; 18] = [
    "variant_id", "family", "method", "rho_t", "rho_p", "omega", "delta", "gamma", "bound",
    "empirical_gap", "scale_term", "shape_term", "residual", "k_feat", "k_feat_mode", "alignment",
    "head", "status",
];

pub const DECOMPOSITION_COLUMNS: [&str; 11] = [
    "variant_id", "family", "method", "rho_t", "rho_p", "omega", "scale_term", "shape_term",
    "residual", "alignment", "status",
];

fn csv_err(e: csv::Error) -> PrismError {
    PrismError::io("<csv>", std::io::Error::other(e))
}

fn head_marker(r: &BoundReport) -> &'static str {
    if r.frozen_head {
        "frozen-head"
    } else {
        "provided"
    }
}

fn bound_fields(r: &BoundReport, fmt: fn(f64) -> String, missing: &str) -> Vec<String> {
    let d = &r.decomposition;
    vec![
        fmt(d.rho_t),
        fmt(d.rho_p),
        fmt(d.omega),
        fmt(r.delta),
        fmt(r.gamma),
        fmt(r.bound),
        r.empirical_gap.map(fmt).unwrap_or_else(|| missing.to_string()),
        fmt(d.scale_term),
        fmt(d.shape_term),
        fmt(d.residual),
        fmt(r.k_feat),
        r.k_feat_mode.as_str().to_string(),
        r.alignment.as_str().to_string(),
        head_marker(r).to_string(),
    ]
}

fn decomposition_fields(d: &ScaleShapeDecomposition, fmt: fn(f64) -> String) -> Vec<String> {
    vec![
        fmt(d.rho_t),
        fmt(d.rho_p),
        fmt(d.omega),
        fmt(d.scale_term),
        fmt(d.shape_term),
        fmt(d.residual),
        d.alignment.as_str().to_string(),
    ]
}

fn rows_to_cells<T>(
    rows: &[VariantRow<T>],
    width: usize,
    fields: impl Fn(&T) -> Vec<String>,
    missing: &str,
) -> Vec<Vec<String>> {
    rows.iter()
        .map(|row| {
            let mut cells = vec![row.variant_id.clone(), row.family.clone(), row.method.clone()];
            match &row.result {
                Some(r) => cells.extend(fields(r)),
                None => cells.extend(std::iter::repeat_n(missing.to_string(), width - 4)),
            }
            cells.push(row.status_text());
            cells
        })
        .collect()
}

fn write_csv<W: Write>(header: &[&str], cells: Vec<Vec<String>>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in cells {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| PrismError::io("<csv>", e))
}

fn write_table<W: Write>(header: &[&str], cells: Vec<Vec<String>>, mut out: W) -> Result<()> {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let io = |e| PrismError::io("<stdout>", e);
    let line = |cols: Vec<&str>| {
        cols.iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    writeln!(out, "{}", line(header.to_vec())).map_err(io)?;
    for row in &cells {
        writeln!(out, "{}", line(row.iter().map(String::as_str).collect())).map_err(io)?;
    }
    Ok(())
}

fn write_json<W: Write, T: Serialize>(rows: &[VariantRow<T>], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, rows)
        .map_err(|e| PrismError::io("<json>", std::io::Error::other(e)))?;
    writeln!(out).map_err(|e| PrismError::io("<json>", e))
}

pub fn write_bound_rows<W: Write>(rows: &[VariantRow<BoundReport>], format: Format, out: W) -> Result<()> {
    match format {
        Format::Csv => write_csv(
            &BOUND_COLUMNS,
            rows_to_cells(rows, BOUND_COLUMNS.len(), |r| bound_fields(r, fmt_exact, ""), ""),
            out,
        ),
        Format::Table => write_table(
            &BOUND_COLUMNS,
            rows_to_cells(rows, BOUND_COLUMNS.len(), |r| bound_fields(r, fmt_table, "-"), "-"),
            out,
        ),
        Format::Json => write_json(rows, out),
    }
}

pub fn write_decomposition_rows<W: Write>(
    rows: &[VariantRow<ScaleShapeDecomposition>],
    format: Format,
    out: W,
) -> Result<()> {
    match format {
        Format::Csv => write_csv(
            &DECOMPOSITION_COLUMNS,
            rows_to_cells(rows, DECOMPOSITION_COLUMNS.len(), |d| decomposition_fields(d, fmt_exact), ""),
            out,
        ),
        Format::Table => write_table(
            &DECOMPOSITION_COLUMNS,
            rows_to_cells(rows, DECOMPOSITION_COLUMNS.len(), |d| decomposition_fields(d, fmt_table), "-"),
            out,
        ),
        Format::Json => write_json(rows, out),
    }
}
