use serde::{Deserialize, Serialize};

/// Bounded smooth test functions, `|f| <= 1`.
///
/// In `d` dimensions each function is the product of its one-dimensional
/// version over the coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TestFunction {
    Cos,
    Sin,
    Tanh,
    /// `exp(-y^2)`.
    #[serde(rename = "gauss-bump")]
    GaussBump,
    /// `sigmoid(k (y - a)) * sigmoid(k (b - y))` with sharpness `k`.
    #[serde(rename = "indicator-smoothed")]
    SmoothIndicator {
        a: f64,
        b: f64,
        #[serde(default = "default_sharpness")]
        sharpness: f64,
    },
}

fn default_sharpness() -> f64 {
    10.0
}

fn sigmoid(t: f64) -> f64 {
    0.5 * (1.0 + (0.5 * t).tanh())
}

impl TestFunction {
    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::Cos => "cos",
            TestFunction::Sin => "sin",
            TestFunction::Tanh => "tanh",
            TestFunction::GaussBump => "gauss-bump",
            TestFunction::SmoothIndicator { .. } => "indicator-smoothed",
        }
    }

    /// Declared bound on `|f|`.
    pub fn sup_bound(&self) -> f64 {
        1.0
    }

    pub fn eval1(&self, y: f64) -> f64 {
        match *self {
            TestFunction::Cos => y.cos(),
            TestFunction::Sin => y.sin(),
            TestFunction::Tanh => y.tanh(),
            TestFunction::GaussBump => (-y * y).exp(),
            TestFunction::SmoothIndicator { a, b, sharpness } => {
                sigmoid(sharpness * (y - a)) * sigmoid(sharpness * (b - y))
            }
        }
    }

    pub fn derivative1(&self, y: f64) -> f64 {
        match *self {
            TestFunction::Cos => -y.sin(),
            TestFunction::Sin => y.cos(),
            TestFunction::Tanh => 1.0 - y.tanh().powi(2),
            TestFunction::GaussBump => -2.0 * y * (-y * y).exp(),
            TestFunction::SmoothIndicator { a, b, sharpness } => {
                let l = sigmoid(sharpness * (y - a));
                let r = sigmoid(sharpness * (b - y));
                sharpness * (l * (1.0 - l) * r - l * r * (1.0 - r))
            }
        }
    }

    #[inline]
    pub fn eval(&self, y: &[f64]) -> f64 {
        y.iter().map(|&v| self.eval1(v)).product()
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let values: Vec<f64> = y.iter().map(|&v| self.eval1(v)).collect();
        (0..y.len())
            .map(|i| {
                let others: f64 = values
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, v)| v)
                    .product();
                self.derivative1(y[i]) * others
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALL: [TestFunction; 5] = [
        TestFunction::Cos,
        TestFunction::Sin,
        TestFunction::Tanh,
        TestFunction::GaussBump,
        TestFunction::SmoothIndicator {
            a: -0.5,
            b: 1.0,
            sharpness: 10.0,
        },
    ];

    proptest! {
        #[test]
        fn bounded_with_consistent_gradients(y0 in -4.0f64..4.0, y1 in -4.0f64..4.0) {
            let y = [y0, y1];
            for f in ALL {
                prop_assert!(f.eval(&y).abs() <= f.sup_bound());
                let g = f.gradient(&y);
                for i in 0..2 {
                    let h = 1e-6;
                    let mut p = y;
                    let mut m = y;
                    p[i] += h;
                    m[i] -= h;
                    let fd = (f.eval(&p) - f.eval(&m)) / (2.0 * h);
                    prop_assert!((fd - g[i]).abs() < 1e-6, "{} component {}", f.name(), i);
                }
            }
        }
    }

    #[test]
    fn registry_names_parse() {
        let f: TestFunction = serde_json::from_str(r#"{"name":"indicator-smoothed","a":0,"b":1}"#).unwrap();
        assert_eq!(
            f,
            TestFunction::SmoothIndicator {
                a: 0.0,
                b: 1.0,
                sharpness: 10.0
            }
        );
        let g: TestFunction = serde_json::from_str(r#"{"name":"gauss-bump"}"#).unwrap();
        assert_eq!(g, TestFunction::GaussBump);
    }
}
