//! Multi-indices and sparse multivariate polynomials with real coefficients.

use std::collections::BTreeMap;

pub type MultiIndex = Vec<u32>;

/// All multi-indices in `n` variables of total degree `<= max_degree`,
/// graded by degree and lexicographic within a degree.
pub fn multi_indices(n: usize, max_degree: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for deg in 0..=max_degree {
        let mut cur = vec![0u32; n];
        fill_degree(&mut out, &mut cur, 0, deg);
    }
    out
}

fn fill_degree(out: &mut Vec<MultiIndex>, cur: &mut MultiIndex, k: usize, left: u32) {
    let n = cur.len();
    if k + 1 == n {
        cur[k] = left;
        out.push(cur.clone());
        return;
    }
    for v in (0..=left).rev() {
        cur[k] = v;
        fill_degree(out, cur, k + 1, left - v);
    }
    cur[k] = 0;
}

pub fn degree(alpha: &[u32]) -> u32 {
    alpha.iter().sum()
}

/// `x^alpha`.
pub fn monomial(x: &[f64], alpha: &[u32]) -> f64 {
    x.iter()
        .zip(alpha)
        .map(|(v, &a)| v.powi(a as i32))
        .product()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    n: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Poly {
    pub fn zero(n: usize) -> Self {
        Poly {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(vec![0; n], c);
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (MultiIndex, f64)>>(n: usize, terms: I) -> Self {
        let mut p = Self::zero(n);
        for (a, c) in terms {
            p.add_term(a, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &f64)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, alpha: MultiIndex, c: f64) {
        assert_eq!(alpha.len(), self.n);
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(alpha).or_insert(0.0);
        *e += c;
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|a| degree(a)).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut p = self.clone();
        for (a, &c) in &other.terms {
            p.add_term(a.clone(), c);
        }
        p
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly {
            n: self.n,
            terms: self.terms.iter().map(|(a, c)| (a.clone(), c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut p = Poly::zero(self.n);
        for (a, &c) in &self.terms {
            for (b, &d) in &other.terms {
                let ab = a.iter().zip(b).map(|(x, y)| x + y).collect();
                p.add_term(ab, c * d);
            }
        }
        p
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut p = Poly::constant(self.n, 1.0);
        for _ in 0..k {
            p = p.mul(self);
        }
        p
    }

    /// Substitutes `x_k -> s_k x_k`.
    pub fn scale_vars(&self, s: &[f64]) -> Poly {
        Poly {
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|(a, c)| (a.clone(), c * monomial(s, a)))
                .collect(),
        }
    }

    pub fn derivative(&self, k: usize) -> Poly {
        let mut p = Poly::zero(self.n);
        for (a, &c) in &self.terms {
            if a[k] > 0 {
                let mut b = a.clone();
                b[k] -= 1;
                p.add_term(b, c * a[k] as f64);
            }
        }
        p
    }

    pub fn laplacian(&self) -> Poly {
        let mut p = Poly::zero(self.n);
        for k in 0..self.n {
            p = p.add(&self.derivative(k).derivative(k));
        }
        p
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(a, c)| c * monomial(x, a)).sum()
    }

    /// Quadratic form `xᵀMx` as a polynomial; `m` is row-major `n×n`.
    pub fn quadratic(n: usize, m: &[f64]) -> Poly {
        let mut p = Poly::zero(n);
        for r in 0..n {
            for c in 0..n {
                let mut a = vec![0; n];
                a[r] += 1;
                a[c] += 1;
                p.add_term(a, m[r * n + c]);
            }
        }
        p
    }
}
