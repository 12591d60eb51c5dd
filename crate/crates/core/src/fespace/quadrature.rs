//! Quadrature on the reference edge `[0, 1]` and the reference triangle
//! `{(0,0), (1,0), (0,1)}`.

use super::Domain;

/// A quadrature rule. Edge rules store the parameter `t` in the first
/// coordinate of each node and zero in the second.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub domain: Domain,
    pub exactness: usize,
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Returns a rule exact for polynomials of total degree `exactness`.
pub fn quadrature(domain: Domain, exactness: usize) -> QuadRule {
    match domain {
        Domain::Edge => {
            let (nodes, weights) = gauss_legendre(exactness / 2 + 1);
            QuadRule {
                domain,
                exactness,
                nodes: nodes.into_iter().map(|t| [t, 0.0]).collect(),
                weights,
            }
        }
        Domain::Triangle => match symmetric_triangle_rule(exactness) {
            Some((nodes, weights)) => QuadRule {
                domain,
                exactness,
                nodes,
                weights,
            },
            None => collapsed_triangle_rule(exactness),
        },
    }
}

/// `n`-point Gauss-Legendre rule on `[0, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 + x);
        nodes[n - 1 - i] = 0.5 * (1.0 - x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=n {
        let j = j as f64;
        let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

type Nodes = (Vec<[f64; 2]>, Vec<f64>);

/// Fully symmetric rules with positive weights for low degrees.
fn symmetric_triangle_rule(exactness: usize) -> Option<Nodes> {
    // (barycentric orbit generator, weight normalised to unit area)
    let orbits: Vec<(Orbit, f64)> = match exactness {
        0 | 1 => vec![(Orbit::Centroid, 1.0)],
        2 => vec![(Orbit::Two(1.0 / 6.0), 1.0 / 3.0)],
        3 | 4 => vec![
            (
                Orbit::Two(0.445_948_490_915_964_886_32),
                0.223_381_589_678_011_465_70,
            ),
            (
                Orbit::Two(0.091_576_213_509_770_743_46),
                0.109_951_743_655_321_867_64,
            ),
        ],
        5 => {
            let r15 = 15f64.sqrt();
            vec![
                (Orbit::Centroid, 0.225),
                (Orbit::Two((6.0 - r15) / 21.0), (155.0 - r15) / 1200.0),
                (Orbit::Two((6.0 + r15) / 21.0), (155.0 + r15) / 1200.0),
            ]
        }
        _ => return None,
    };
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (orbit, w) in orbits {
        match orbit {
            Orbit::Centroid => {
                nodes.push([1.0 / 3.0, 1.0 / 3.0]);
                weights.push(0.5 * w);
            }
            Orbit::Two(a) => {
                let b = 1.0 - 2.0 * a;
                for p in [[a, a], [b, a], [a, b]] {
                    nodes.push(p);
                    weights.push(0.5 * w);
                }
            }
        }
    }
    Some((nodes, weights))
}

enum Orbit {
    Centroid,
    /// Points with barycentric coordinates `(a, a, 1 - 2a)` and permutations.
    Two(f64),
}

/// Collapsed (Duffy) tensor rule: `x = s (1 - t)`, `y = t`.
fn collapsed_triangle_rule(exactness: usize) -> QuadRule {
    let (s_nodes, s_weights) = gauss_legendre(exactness / 2 + 1);
    // The Jacobian (1 - t) raises the degree in t by one.
    let (t_nodes, t_weights) = gauss_legendre((exactness + 1) / 2 + 1);
    let mut nodes = Vec::with_capacity(s_nodes.len() * t_nodes.len());
    let mut weights = Vec::with_capacity(nodes.capacity());
    for (t, wt) in t_nodes.iter().zip(&t_weights) {
        for (s, ws) in s_nodes.iter().zip(&s_weights) {
            nodes.push([s * (1.0 - t), *t]);
            weights.push(ws * wt * (1.0 - t));
        }
    }
    QuadRule {
        domain: Domain::Triangle,
        exactness,
        nodes,
        weights,
    }
}
