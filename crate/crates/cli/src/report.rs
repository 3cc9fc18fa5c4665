//! CSV output with a fixed float format, so reruns produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::CliError;

/// Nine significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.8e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Clone, Debug)]
pub struct Csv {
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            columns: header.len(),
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.columns, "csv row width");
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, self.text.as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::usage(format!("cannot create output directory {}: {e}", path.display())))
}

/// Matplotlib script drawing the median curves and quantile bands of
/// `aggregate.csv`, one panel per metric and method.
pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot sweep aggregates: python3 plot_sweep.py [aggregate.csv] [out.png]"""
import csv
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

src = sys.argv[1] if len(sys.argv) > 1 else "aggregate.csv"
dst = sys.argv[2] if len(sys.argv) > 2 else "sweep.png"
rows = defaultdict(list)
with open(src) as f:
    for r in csv.DictReader(f):
        if r["param"]:
            rows[(r["metric"], r["method"])].append(r)

metrics = sorted({m for m, _ in rows})
methods = sorted({m for _, m in rows})
fig, axes = plt.subplots(len(metrics), len(methods), squeeze=False,
                         figsize=(4 * len(methods), 2.5 * len(metrics)))
for i, metric in enumerate(metrics):
    for j, method in enumerate(methods):
        ax = axes[i][j]
        pts = sorted(rows.get((metric, method), []), key=lambda r: float(r["param"]))
        if not pts:
            ax.axis("off")
            continue
        x = [float(r["param"]) for r in pts]
        col = lambda k: [float(r[k]) for r in pts]
        ax.fill_between(x, col("q05"), col("q95"), alpha=0.15)
        ax.fill_between(x, col("q25"), col("q75"), alpha=0.3)
        ax.plot(x, col("median"), lw=2)
        for r in pts:
            if r["star"] == "1":
                ax.plot(float(r["param"]), float(r["median"]), "*", ms=12, color="k")
        if method in ("lrp", "smoothgrad") and min(x) > 0:
            ax.set_xscale("log")
        ax.set_title(f"{method}: {metric}", fontsize=9)
fig.tight_layout()
fig.savefig(dst, dpi=120)
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_f64(1.0), "1.00000000e0");
        assert_eq!(fmt_f64(-0.0123456789), "-1.23456789e-2");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn rows() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(&["1".into(), "x".into()]);
        assert_eq!(c.as_str(), "a,b\n1,x\n");
    }
}
