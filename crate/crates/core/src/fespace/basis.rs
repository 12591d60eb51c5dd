use super::quadrature::quadrature;
use super::Domain;

/// Orthonormal modal basis on a reference domain, stored as coefficients
/// with respect to monomials centred at the reference barycentre.
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub domain: Domain,
    pub degree: usize,
    exponents: Vec<(i32, i32)>,
    /// Row `i` holds the monomial coefficients of basis function `i`.
    coeffs: Vec<f64>,
}

const TRIANGLE_CENTRE: [f64; 2] = [1.0 / 3.0, 1.0 / 3.0];
const EDGE_CENTRE: f64 = 0.5;

/// Dimension of the degree-`m` polynomial space on `domain`.
pub fn dimension(domain: Domain, m: usize) -> usize {
    match domain {
        Domain::Triangle => (m + 1) * (m + 2) / 2,
        Domain::Edge => m + 1,
    }
}

/// Orthonormal basis of degree `m` on the reference `domain`, built by
/// Gram-Schmidt (applied twice) on the monomials.
pub fn reference_basis(domain: Domain, m: usize) -> BasisSet {
    let exponents: Vec<(i32, i32)> = match domain {
        Domain::Triangle => (0..=m as i32)
            .flat_map(|d| (0..=d).map(move |b| (d - b, b)))
            .collect(),
        Domain::Edge => (0..=m as i32).map(|a| (a, 0)).collect(),
    };
    let dim = exponents.len();
    let rule = quadrature(domain, 2 * m + 2);
    let mut raw = BasisSet {
        domain,
        degree: m,
        exponents,
        coeffs: vec![0.0; dim * dim],
    };
    let monomials: Vec<Vec<f64>> = rule.nodes.iter().map(|&x| raw.monomials(x)).collect();
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        rule.weights
            .iter()
            .enumerate()
            .map(|(q, w)| w * a[q] * b[q])
            .sum()
    };

    // values[i][q] and coeffs[i][j] evolve together.
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut v: Vec<f64> = monomials.iter().map(|m| m[i]).collect();
        let mut c = vec![0.0; dim];
        c[i] = 1.0;
        for _pass in 0..2 {
            for (vj, cj) in values.iter().zip(&coeffs) {
                let r = inner(&v, vj);
                v.iter_mut().zip(vj).for_each(|(a, b)| *a -= r * b);
                c.iter_mut().zip(cj).for_each(|(a, b)| *a -= r * b);
            }
        }
        let norm = inner(&v, &v).sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        c.iter_mut().for_each(|a| *a /= norm);
        values.push(v);
        coeffs.push(c);
    }
    raw.coeffs = coeffs.concat();
    raw
}

impl BasisSet {
    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    fn shifted(&self, x: [f64; 2]) -> [f64; 2] {
        match self.domain {
            Domain::Triangle => [x[0] - TRIANGLE_CENTRE[0], x[1] - TRIANGLE_CENTRE[1]],
            Domain::Edge => [x[0] - EDGE_CENTRE, 0.0],
        }
    }

    fn monomials(&self, x: [f64; 2]) -> Vec<f64> {
        let s = self.shifted(x);
        self.exponents
            .iter()
            .map(|&(a, b)| s[0].powi(a) * s[1].powi(b))
            .collect()
    }

    /// Values of all basis functions at a reference point.
    pub fn eval_into(&self, x: [f64; 2], out: &mut [f64]) {
        let m = self.monomials(x);
        let dim = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(dim) {
            let row = &self.coeffs[i * dim..(i + 1) * dim];
            *o = row.iter().zip(&m).map(|(c, v)| c * v).sum();
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    /// Reference gradients of all basis functions (triangle only; for edges
    /// the second component is zero).
    pub fn eval_grad(&self, x: [f64; 2]) -> Vec<[f64; 2]> {
        let s = self.shifted(x);
        let dm: Vec<[f64; 2]> = self
            .exponents
            .iter()
            .map(|&(a, b)| {
                let dx = if a > 0 {
                    a as f64 * s[0].powi(a - 1) * s[1].powi(b)
                } else {
                    0.0
                };
                let dy = if b > 0 {
                    b as f64 * s[0].powi(a) * s[1].powi(b - 1)
                } else {
                    0.0
                };
                [dx, dy]
            })
            .collect();
        let dim = self.dim();
        (0..dim)
            .map(|i| {
                let row = &self.coeffs[i * dim..(i + 1) * dim];
                row.iter().zip(&dm).fold([0.0, 0.0], |acc, (c, d)| {
                    [acc[0] + c * d[0], acc[1] + c * d[1]]
                })
            })
            .collect()
    }

    /// Table `values[q][i]` at the given reference points.
    pub fn tabulate(&self, points: &[[f64; 2]]) -> Vec<Vec<f64>> {
        points.iter().map(|&x| self.eval(x)).collect()
    }

    pub fn tabulate_grad(&self, points: &[[f64; 2]]) -> Vec<Vec<[f64; 2]>> {
        points.iter().map(|&x| self.eval_grad(x)).collect()
    }
}
