//! Gauss-Hermite quadrature for expectations under a standard normal.

use std::sync::OnceLock;

/// Node count used for the Stein constants.
pub const HERMITE_NODES: usize = 64;

/// Physicists' Gauss-Hermite rule: `∫ f(x) e^{-x²} dx ≈ Σ wᵢ f(xᵢ)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Roots of `H_n` by Newton iteration from the usual asymptotic starting guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0_f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut derivative = 0.0;
            for _ in 0..100 {
                // Orthonormal Hermite recurrence.
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                derivative = (2.0 * nf).sqrt() * p2;
                let step = p1 / derivative;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (derivative * derivative);
            weights[n - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }

    /// `E[f(g)]` for `g ~ N(0, 1)`.
    pub fn expect_standard_normal(&self, f: impl Fn(f64) -> f64) -> f64 {
        let scale = std::f64::consts::SQRT_2;
        let sum: f64 = self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(scale * x)).sum();
        sum / std::f64::consts::PI.sqrt()
    }
}

/// Shared 64-node rule.
pub fn hermite64() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(HERMITE_NODES))
}
