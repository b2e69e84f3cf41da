//! Scenario table shared by the integration suites: the three demo model
//! pairs on [1, 10] with correlations 0.2, 0.5, 0.7, their reference
//! criterion values and reference optimal designs.

use bandopt::catalog;
use bandopt::discrete::Design;
use bandopt::kernel::GroupCovariance;
use bandopt::CompositeModel;

pub const INTERVAL: (f64, f64) = (1.0, 10.0);
pub const RHOS: [f64; 3] = [0.2, 0.5, 0.7];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pair {
    AB,
    AC,
    BC,
}

pub const PAIRS: [Pair; 3] = [Pair::AB, Pair::AC, Pair::BC];

pub struct Scenario {
    pub pair: Pair,
    pub rho: f64,
    /// Reference sup-criterion of the four-point uniform design.
    pub uniform_phi: f64,
    /// Reference sup-criterion of the optimized four-point design.
    pub optimal_phi: f64,
    /// Reference optimized design points.
    pub optimal_points: [f64; 4],
}

/// The nine bundled scenarios with their reference values.
pub fn scenarios() -> Vec<Scenario> {
    let uniform = [
        [141.87, 142.59, 148.74],
        [33.32, 29.10, 25.66],
        [147.27, 127.19, 115.07],
    ];
    let optimal = [
        [14.79, 9.44, 6.09],
        [16.00, 10.00, 6.60],
        [14.71, 9.53, 5.99],
    ];
    let points = [
        [
            [1.0, 1.59, 3.93, 10.0],
            [1.0, 1.62, 3.91, 10.0],
            [1.0, 1.74, 7.99, 10.0],
        ],
        [
            [1.0, 3.46, 9.60, 10.0],
            [1.0, 2.86, 8.83, 10.0],
            [1.0, 2.61, 3.52, 10.0],
        ],
        [
            [1.0, 2.20, 6.25, 10.0],
            [1.0, 1.62, 3.98, 10.0],
            [1.0, 2.85, 6.29, 10.0],
        ],
    ];
    let mut out = Vec::new();
    for (i, &pair) in PAIRS.iter().enumerate() {
        for (k, &rho) in RHOS.iter().enumerate() {
            out.push(Scenario {
                pair,
                rho,
                uniform_phi: uniform[i][k],
                optimal_phi: optimal[i][k],
                optimal_points: points[i][k],
            });
        }
    }
    out
}

pub fn model(pair: Pair) -> CompositeModel {
    let (f1, f2) = match pair {
        Pair::AB => (catalog::basis_a(), catalog::basis_b()),
        Pair::AC => (catalog::basis_a(), catalog::basis_c()),
        Pair::BC => (catalog::basis_b(), catalog::basis_c()),
    };
    CompositeModel::separate(f1, f2, INTERVAL).expect("demo model")
}

pub fn cov(rho: f64) -> GroupCovariance {
    GroupCovariance::new(1.0, 1.0, rho).expect("demo covariance")
}

pub fn design(points: &[f64]) -> Design {
    Design::new(points.to_vec(), INTERVAL).expect("reference design")
}

pub fn pair_name(pair: Pair) -> &'static str {
    match pair {
        Pair::AB => "AB",
        Pair::AC => "AC",
        Pair::BC => "BC",
    }
}

pub fn band_grid(n: usize) -> Vec<f64> {
    let (a, b) = INTERVAL;
    (0..n)
        .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
        .collect()
}
