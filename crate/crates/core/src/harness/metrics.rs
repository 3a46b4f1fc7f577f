//! Per-iteration metrics and their CSV form.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub const COLUMNS: [&str; 8] = [
    "k",
    "dist_sne",
    "step_rel",
    "weight_err",
    "bias_err",
    "residual",
    "min_gram_eig",
    "skips",
];

/// One metrics row. Optional fields are written as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub k: usize,
    pub dist_sne: Option<f64>,
    pub step_rel: f64,
    pub weight_err: Option<f64>,
    pub bias_err: Option<f64>,
    pub residual: f64,
    pub min_gram_eig: Option<f64>,
    pub skips: usize,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// `(1/N) Σ ‖x_i − x_i*‖ / ‖x_i*‖` over per-player blocks (absolute error when
/// the reference block is zero).
pub fn mean_relative(blocks: &[(DVector<f64>, DVector<f64>)]) -> f64 {
    if blocks.is_empty() {
        return 0.0;
    }
    blocks.iter().map(|(x, r)| ratio((x - r).norm(), r.norm())).sum::<f64>() / blocks.len() as f64
}

/// Weight and bias errors of parameter beliefs: the weight part is everything
/// after the leading bias coordinate.
pub fn parameter_errors(w_hat: &[DVector<f64>], truth: &[DVector<f64>]) -> (f64, f64) {
    let n = truth.len().max(1) as f64;
    let mut we = 0.0;
    let mut be = 0.0;
    for (h, t) in w_hat.iter().zip(truth) {
        let k = t.len() - 1;
        let dh = h.rows(1, k) - t.rows(1, k);
        we += ratio(dh.norm(), t.rows(1, k).norm());
        be += ratio((h[0] - t[0]).abs(), t[0].abs());
    }
    (we / n, be / n)
}

/// Mean of `‖ŵ_i − w_i*‖/‖w_i*‖`, the error tracked by the decay diagnostic.
pub fn mean_param_error(w_hat: &[DVector<f64>], truth: &[DVector<f64>]) -> f64 {
    let blocks: Vec<_> = w_hat.iter().cloned().zip(truth.iter().cloned()).collect();
    mean_relative(&blocks)
}

pub fn write_csv<W: Write>(out: W, rows: &[MetricsRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.k.to_string(),
            opt(r.dist_sne),
            r.step_rel.to_string(),
            opt(r.weight_err),
            opt(r.bias_err),
            r.residual.to_string(),
            opt(r.min_gram_eig),
            r.skips.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_fixed() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "k,dist_sne,step_rel,weight_err,bias_err,residual,min_gram_eig,skips\n"
        );
    }

    #[test]
    fn empty_cells_for_missing_values() {
        let row = MetricsRow {
            k: 3,
            dist_sne: None,
            step_rel: 0.5,
            weight_err: None,
            bias_err: None,
            residual: 1.0,
            min_gram_eig: None,
            skips: 0,
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row]).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("3,,0.5,,,1,,0\n"));
    }

    #[test]
    fn zero_bias_uses_absolute_error() {
        let t = vec![DVector::from_row_slice(&[0.0, 2.0])];
        let h = vec![DVector::from_row_slice(&[0.5, 3.0])];
        let (we, be) = parameter_errors(&h, &t);
        assert!((we - 0.5).abs() < 1e-15 && (be - 0.5).abs() < 1e-15);
    }
}
