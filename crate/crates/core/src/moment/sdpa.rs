//! SDPA sparse format (`.dat-s`) export with an affine re-embedding sidecar.
//!
//! Equalities are eliminated by row reduction, `y = y_p + N t` over the free
//! moment variables `t`. The exported primal is
//! `min Σ c_i t_i  s.t.  Σ t_i F_i − F_0 ⪰ 0` with `F_0 = −M(y_p)`,
//! `F_i = M(N e_i)` and `c = Nᵀ c_y`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::linalg::rref_solve;

use super::{eval_form, MomentProblem};

/// Sidecar mapping SDPA variables back to moment labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpaEmbedding {
    pub labels: Vec<String>,
    /// `y_p`.
    pub particular: Vec<f64>,
    /// Column `i` of `N`, i.e. `y = y_p + Σ t_i basis[i]`.
    pub basis: Vec<Vec<f64>>,
    /// Moment variable behind each free variable `t_i`.
    pub free_variables: Vec<usize>,
    /// `c_yᵀ y_p`, to be added to the SDPA objective.
    pub objective_constant: f64,
    pub block_labels: Vec<String>,
}

impl SdpaEmbedding {
    pub fn embed(&self, t: &[f64]) -> Result<Vec<f64>> {
        if t.len() != self.basis.len() {
            return validation(format!("{} values for {} free variables", t.len(), self.basis.len()));
        }
        let mut y = self.particular.clone();
        for (ti, col) in t.iter().zip(&self.basis) {
            for (yv, cv) in y.iter_mut().zip(col) {
                *yv += ti * cv;
            }
        }
        Ok(y)
    }
}

/// Parsed `.dat-s` content.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpaProblem {
    pub m: usize,
    pub block_sizes: Vec<usize>,
    pub c: Vec<f64>,
    /// `mats[k]` holds the upper-triangle entries `(block, i, j, value)` of
    /// `F_k`, 0-based indices.
    pub mats: Vec<Vec<(usize, usize, usize, f64)>>,
}

impl SdpaProblem {
    /// `F(t) = Σ t_i F_i − F_0`, one dense matrix per block.
    pub fn slack(&self, t: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.block_sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
        for (k, entries) in self.mats.iter().enumerate() {
            let coef = if k == 0 { -1.0 } else { t[k - 1] };
            for &(b, i, j, v) in entries {
                out[b][(i, j)] += coef * v;
                if i != j {
                    out[b][(j, i)] += coef * v;
                }
            }
        }
        out
    }

    pub fn objective(&self, t: &[f64]) -> f64 {
        self.c.iter().zip(t).map(|(a, b)| a * b).sum()
    }
}

/// Builds the SDPA text and its sidecar.
pub fn write_sdpa(prob: &MomentProblem) -> Result<(String, SdpaEmbedding)> {
    if prob.blocks.is_empty() {
        return validation("SDPA export needs at least one PSD block");
    }
    let (a, b) = prob.equality_system();
    let aff = rref_solve(&a, &b)?;
    let yp: Vec<f64> = aff.particular.iter().copied().collect();
    let m = aff.basis.ncols();
    let cols: Vec<Vec<f64>> = (0..m).map(|i| aff.basis.column(i).iter().copied().collect()).collect();

    let mut text = String::new();
    writeln!(text, "\"moment relaxation: {} free variables, {} blocks", m, prob.blocks.len()).unwrap();
    writeln!(text, "{m}").unwrap();
    writeln!(text, "{}", prob.blocks.len()).unwrap();
    writeln!(text, "{}", prob.blocks.iter().map(|b| b.size.to_string()).collect::<Vec<_>>().join(" ")).unwrap();
    let c: Vec<String> = cols.iter().map(|col| format!("{:e}", eval_form(&prob.objective, col))).collect();
    writeln!(text, "{}", if c.is_empty() { "0".to_string() } else { c.join(" ") }).unwrap();

    let emit = |matno: usize, y: &[f64], sign: f64, text: &mut String| {
        for (bi, blk) in prob.blocks.iter().enumerate() {
            for i in 0..blk.size {
                for j in i..blk.size {
                    let v = sign * eval_form(&blk.entries[i * blk.size + j], y);
                    if v != 0.0 {
                        writeln!(text, "{matno} {} {} {} {v:e}", bi + 1, i + 1, j + 1).unwrap();
                    }
                }
            }
        }
    };
    emit(0, &yp, -1.0, &mut text);
    for (k, col) in cols.iter().enumerate() {
        emit(k + 1, col, 1.0, &mut text);
    }
    let side = SdpaEmbedding {
        labels: prob.variable_labels(),
        objective_constant: eval_form(&prob.objective, &yp),
        particular: yp,
        basis: cols,
        free_variables: aff.free,
        block_labels: prob.blocks.iter().map(|b| b.label.clone()).collect(),
    };
    Ok((text, side))
}

/// Writes `path` and `path` with extension `.json` (the sidecar).
pub fn export_sdpa(prob: &MomentProblem, path: &Path) -> Result<SdpaEmbedding> {
    let (text, side) = write_sdpa(prob)?;
    fs::write(path, text)?;
    fs::write(path.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
    Ok(side)
}

fn numbers(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || c == ',' || c == '{' || c == '}' || c == '(' || c == ')')
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses SDPA sparse format.
pub fn parse_sdpa(text: &str) -> Result<SdpaProblem> {
    let perr = |m: String| Error::Parse(format!("SDPA: {m}"));
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));
    let mut next = |what: &str| lines.next().ok_or_else(|| perr(format!("missing {what}")));
    let first_num = |l: &str| -> Result<usize> {
        numbers(l).first().and_then(|s| s.parse().ok()).ok_or_else(|| perr(format!("bad header line '{l}'")))
    };
    let m = first_num(next("mDIM")?)?;
    let nblock = first_num(next("nBLOCK")?)?;
    let sizes: Vec<usize> = numbers(next("block structure")?)
        .iter()
        .take(nblock)
        .map(|s| s.parse::<i64>().map(|v| v.unsigned_abs() as usize))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| perr(e.to_string()))?;
    if sizes.len() != nblock {
        return Err(perr("block structure too short".into()));
    }
    let c: Vec<f64> = if m == 0 {
        next("objective")?;
        Vec::new()
    } else {
        numbers(next("objective")?)
            .iter()
            .take(m)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| perr(e.to_string()))?
    };
    if c.len() != m {
        return Err(perr("objective vector too short".into()));
    }
    let mut mats = vec![Vec::new(); m + 1];
    for l in lines {
        let f = numbers(l);
        if f.len() < 5 {
            return Err(perr(format!("bad entry line '{l}'")));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| perr(format!("{e} in '{l}'")));
        let (k, b, i, j) = (int(f[0])?, int(f[1])?, int(f[2])?, int(f[3])?);
        let v: f64 = f[4].parse().map_err(|e| perr(format!("{e} in '{l}'")))?;
        if k > m || b == 0 || b > nblock || i == 0 || j == 0 || i > sizes[b - 1] || j > sizes[b - 1] {
            return Err(perr(format!("entry out of range '{l}'")));
        }
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        mats[k].push((b - 1, i - 1, j - 1, v));
    }
    Ok(SdpaProblem { m, block_sizes: sizes, c, mats })
}
