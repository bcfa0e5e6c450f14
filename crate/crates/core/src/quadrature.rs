//! Gauss–Hermite rules for expectations over Gaussian laws.

use crate::error::{Error, Result};

/// Nodes and weights integrating against the standard normal density:
/// `E[f(ξ)] ≈ Σ w_i f(x_i)`, exact for polynomials of degree `< 2n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 || order > 200 {
            return Err(Error::InvalidParameter {
                name: "order",
                value: order as f64,
                constraint: "must lie in 1..=200".into(),
            });
        }
        let (t, w) = physicists_rule(order);
        let norm = std::f64::consts::PI.sqrt();
        let nodes = t.iter().map(|t| t * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().map(|w| w / norm).collect();
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `E[f(mean + std ξ)]` for a scalar Gaussian.
    pub fn expect_1d(&self, mean: f64, std: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mean + std * x))
            .sum()
    }

    /// Product rule for a centred Gaussian with independent coordinates:
    /// weights and flattened offset vectors `std ⊙ ξ`. Coordinates with zero
    /// std use a single node.
    pub fn tensor_rule(&self, std: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = std.len();
        let counts: Vec<usize> = std.iter().map(|&s| if s == 0.0 { 1 } else { self.order() }).collect();
        let total: usize = counts.iter().product();
        let mut weights = Vec::with_capacity(total);
        let mut offsets = Vec::with_capacity(total * d);
        for node in 0..total {
            let mut rem = node;
            let mut w = 1.0;
            for k in 0..d {
                let i = rem % counts[k];
                rem /= counts[k];
                if counts[k] == 1 {
                    offsets.push(0.0);
                } else {
                    offsets.push(std[k] * self.nodes[i]);
                    w *= self.weights[i];
                }
            }
            weights.push(w);
        }
        (weights, offsets)
    }

    /// `E[f(mean + std ⊙ ξ)]` by the product rule.
    pub fn expect(&self, mean: &[f64], std: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let d = mean.len();
        let (weights, offsets) = self.tensor_rule(std);
        let mut point = vec![0.0; d];
        let mut total = 0.0;
        for (w, off) in weights.iter().zip(offsets.chunks(d.max(1))) {
            for k in 0..d {
                point[k] = mean[k] + off[k];
            }
            total += w * f(&point);
        }
        total
    }
}

/// Roots and weights for the weight `exp(-t²)` by Newton iteration on the
/// orthonormal Hermite recurrence.
fn physicists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_moments_are_exact() {
        for order in [1, 2, 5, 16, 40] {
            let gh = GaussHermite::new(order).unwrap();
            let w: f64 = gh.weights.iter().sum();
            assert!((w - 1.0).abs() < 1e-13, "order {order}");
            // E ξ^{2j} = (2j-1)!!
            let mut dfact = 1.0;
            for j in 1..order {
                dfact *= (2 * j - 1) as f64;
                let mom = gh.expect_1d(0.0, 1.0, |x| x.powi(2 * j as i32));
                assert!((mom - dfact).abs() <= 1e-11 * dfact, "order {order} j {j}: {mom}");
            }
        }
    }

    #[test]
    fn tensor_rule_factorizes() {
        let gh = GaussHermite::new(8).unwrap();
        let v = gh.expect(&[1.0, -0.5], &[0.3, 2.0], |p| p[0] * p[0] * p[1] * p[1]);
        let expect = (1.0 + 0.09) * (0.25 + 4.0);
        assert!((v - expect).abs() < 1e-12);
        let degenerate = gh.expect(&[1.0, 2.0], &[0.0, 0.0], |p| p[0] + p[1]);
        assert_eq!(degenerate, 3.0);
    }

    #[test]
    fn rejects_zero_order() {
        assert!(GaussHermite::new(0).is_err());
    }
}
