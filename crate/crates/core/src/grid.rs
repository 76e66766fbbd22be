//! Tensor-product quadrature grids carrying complex samples.
//!
//! Values are stored row-major over `(x_1, ..., x_n)`: the last axis varies
//! fastest. The CSV layout is
//!
//! ```text
//! dim,<n>
//! axis,<k>,<len>        (one block per axis)
//! <node>,<weight>       (len lines)
//! values,<count>
//! <re>,<im>             (count lines)
//! ```

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Axis {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let axis = Axis { nodes, weights };
        axis.check()?;
        Ok(axis)
    }

    /// Composite midpoint rule with `n` equal cells on `[a, b]`.
    pub fn midpoint(a: f64, b: f64, n: usize) -> Self {
        assert!(n > 0 && b > a, "midpoint axis needs n > 0 and a < b");
        let h = (b - a) / n as f64;
        Axis {
            nodes: (0..n).map(|k| a + (k as f64 + 0.5) * h).collect(),
            weights: vec![h; n],
        }
    }

    /// Composite midpoint rule over consecutive `edges`, each interval split
    /// into `cells[k]` equal cells.
    pub fn piecewise_midpoint(edges: &[f64], cells: &[usize]) -> Self {
        assert_eq!(edges.len(), cells.len() + 1);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (k, &m) in cells.iter().enumerate() {
            let (a, b) = (edges[k], edges[k + 1]);
            if m == 0 || !(b > a) {
                continue;
            }
            let h = (b - a) / m as f64;
            for j in 0..m {
                nodes.push(a + (j as f64 + 0.5) * h);
                weights.push(h);
            }
        }
        Axis { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.nodes.len() != self.weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} nodes but {} weights",
                self.nodes.len(),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::ShapeMismatch("weights must be positive".into()));
        }
        if self.nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::ShapeMismatch(
                "nodes must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub axes: Vec<Axis>,
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(axes: Vec<Axis>, values: Vec<Complex64>) -> Result<Self> {
        let g = GridFunction { axes, values };
        g.check()?;
        Ok(g)
    }

    pub fn zeros(axes: Vec<Axis>) -> Self {
        let len = axes.iter().map(Axis::len).product();
        GridFunction {
            axes,
            values: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Samples `f` at every grid node.
    pub fn from_fn<F: Fn(&[f64]) -> Complex64>(axes: Vec<Axis>, f: F) -> Self {
        let shape = shape_of(&axes);
        let len = shape.iter().product();
        let mut x = vec![0.0; axes.len()];
        let values = (0..len)
            .map(|flat| {
                fill_point(&axes, &shape, flat, &mut x);
                f(&x)
            })
            .collect();
        GridFunction { axes, values }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        shape_of(&self.axes)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        for a in &self.axes {
            a.check()?;
        }
        let expect: usize = self.axes.iter().map(Axis::len).product();
        if expect != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "grid has {expect} points but {} values",
                self.values.len()
            )));
        }
        Ok(())
    }

    /// Coordinates of the flat index `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        fill_point(&self.axes, &self.shape(), flat, &mut x);
        x
    }

    /// Product quadrature weight at the flat index.
    pub fn weight(&self, flat: usize) -> f64 {
        let shape = self.shape();
        let mut rem = flat;
        let mut w = 1.0;
        for k in (0..self.dim()).rev() {
            w *= self.axes[k].weights[rem % shape[k]];
            rem /= shape[k];
        }
        w
    }

    pub fn scale(&mut self, c: Complex64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .flexible(true)
            .has_headers(false)
            .from_writer(w);
        out.write_record(["dim".to_string(), self.dim().to_string()])?;
        for (k, a) in self.axes.iter().enumerate() {
            out.write_record(["axis".to_string(), k.to_string(), a.len().to_string()])?;
            for (x, wt) in a.nodes.iter().zip(&a.weights) {
                out.write_record([x.to_string(), wt.to_string()])?;
            }
        }
        out.write_record(["values".to_string(), self.values.len().to_string()])?;
        for v in &self.values {
            out.write_record([v.re.to_string(), v.im.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .has_headers(false)
            .from_reader(r);
        let mut rows = rdr.records();
        let mut next = || -> Result<csv::StringRecord> {
            rows.next()
                .ok_or_else(|| Error::Format("unexpected end of grid file".into()))?
                .map_err(Error::from)
        };
        let tag = |rec: &csv::StringRecord, name: &str| -> Result<()> {
            if rec.get(0) != Some(name) {
                return Err(Error::Format(format!("expected '{name}' record")));
            }
            Ok(())
        };
        let head = next()?;
        tag(&head, "dim")?;
        let dim: usize = parse_field(&head, 1)?;
        let mut axes = Vec::with_capacity(dim);
        for k in 0..dim {
            let rec = next()?;
            tag(&rec, "axis")?;
            if parse_field::<usize>(&rec, 1)? != k {
                return Err(Error::Format(format!("axis {k} out of order")));
            }
            let len: usize = parse_field(&rec, 2)?;
            let mut nodes = Vec::with_capacity(len);
            let mut weights = Vec::with_capacity(len);
            for _ in 0..len {
                let rec = next()?;
                nodes.push(parse_field(&rec, 0)?);
                weights.push(parse_field(&rec, 1)?);
            }
            axes.push(Axis::new(nodes, weights)?);
        }
        let rec = next()?;
        tag(&rec, "values")?;
        let count: usize = parse_field(&rec, 1)?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let rec = next()?;
            values.push(Complex64::new(parse_field(&rec, 0)?, parse_field(&rec, 1)?));
        }
        GridFunction::new(axes, values)
    }
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize) -> Result<T> {
    rec.get(k)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("bad field {k} in record {rec:?}")))
}

pub(crate) fn shape_of(axes: &[Axis]) -> Vec<usize> {
    axes.iter().map(Axis::len).collect()
}

pub(crate) fn fill_point(axes: &[Axis], shape: &[usize], flat: usize, x: &mut [f64]) {
    let mut rem = flat;
    for k in (0..axes.len()).rev() {
        x[k] = axes[k].nodes[rem % shape[k]];
        rem /= shape[k];
    }
}
