//! Row-major regression datasets with optional α column and twin responses.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    alpha: Option<Vec<f64>>,
    y_twin: Option<Vec<f64>>,
}

impl Dataset {
    /// `x` is row-major `n × d` with `n = y.len()`.
    pub fn new(d: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if x.len() != n * d {
            return Err(Error::Shape(format!(
                "feature matrix has {} entries, expected {n}×{d}",
                x.len()
            )));
        }
        Ok(Self {
            n,
            d,
            x,
            y,
            alpha: None,
            y_twin: None,
        })
    }

    pub fn with_alpha(mut self, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != self.n {
            return Err(Error::Shape(format!(
                "alpha column has {} rows, dataset has {}",
                alpha.len(),
                self.n
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::Input(format!(
                "alpha column entry {a} outside (0, 1)"
            )));
        }
        self.alpha = Some(alpha);
        Ok(self)
    }

    pub fn with_twin(mut self, y_twin: Vec<f64>) -> Result<Self> {
        if y_twin.len() != self.n {
            return Err(Error::Shape(format!(
                "twin column has {} rows, dataset has {}",
                y_twin.len(),
                self.n
            )));
        }
        self.y_twin = Some(y_twin);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn alpha(&self) -> Option<&[f64]> {
        self.alpha.as_deref()
    }

    pub fn y_twin(&self) -> Option<&[f64]> {
        self.y_twin.as_deref()
    }

    /// The rows `rows`, in that order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut x = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            x.extend_from_slice(self.row(i));
        }
        let pick = |v: &Vec<f64>| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            n: rows.len(),
            d: self.d,
            x,
            y: pick(&self.y),
            alpha: self.alpha.as_ref().map(pick),
            y_twin: self.y_twin.as_ref().map(pick),
        }
    }

    /// CSV with header `x_0..x_{d−1},y[,alpha][,y_twin]`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header: Vec<String> = (0..self.d).map(|j| format!("x_{j}")).collect();
        header.push("y".into());
        if self.alpha.is_some() {
            header.push("alpha".into());
        }
        if self.y_twin.is_some() {
            header.push("y_twin".into());
        }
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for i in 0..self.n {
            line.clear();
            for v in self.row(i) {
                line.push_str(&v.to_string());
                line.push(',');
            }
            line.push_str(&self.y[i].to_string());
            for col in [&self.alpha, &self.y_twin].into_iter().flatten() {
                line.push(',');
                line.push_str(&col[i].to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}
