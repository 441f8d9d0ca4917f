//! Analytic spectra used as oracles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SpectrumError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ClosedFormFamily {
    IntervalDd { length: f64 },
    IntervalNn { length: f64 },
    IntervalDn { length: f64 },
    /// The loop-supported branch `4k²π²/L₁²` of a tadpole.
    TadpoleSkew { loop_length: f64 },
    /// Dirichlet leaves, Kirchhoff center.
    EquilateralStar { edges: usize, length: f64 },
}

/// Distinct eigenvalues with multiplicities covering at least `count`
/// eigenvalues of the family.
pub fn closed_form_spectrum(family: ClosedFormFamily, count: usize) -> Result<Vec<(f64, usize)>, SpectrumError> {
    use ClosedFormFamily::*;
    let sq = |x: f64| x * x;
    let out = match family {
        IntervalDd { length } if length > 0.0 => {
            (1..=count).map(|k| (sq(k as f64 * PI / length), 1)).collect()
        }
        IntervalNn { length } if length > 0.0 => {
            (1..=count).map(|k| (sq((k - 1) as f64 * PI / length), 1)).collect()
        }
        IntervalDn { length } if length > 0.0 => {
            (1..=count).map(|k| (sq((2 * k - 1) as f64 * PI / (2.0 * length)), 1)).collect()
        }
        TadpoleSkew { loop_length } if loop_length > 0.0 => {
            (1..=count).map(|k| (sq(2.0 * k as f64 * PI / loop_length), 1)).collect()
        }
        EquilateralStar { edges, length } if edges >= 2 && length > 0.0 => {
            let mut out = Vec::new();
            let mut total = 0;
            let mut n = 1usize;
            while total < count {
                // odd multiples of π/2 are simple, multiples of π carry N-1
                let z = n as f64 * PI / (2.0 * length);
                let m = if n % 2 == 1 { 1 } else { edges - 1 };
                out.push((z * z, m));
                total += m;
                n += 1;
            }
            out
        }
        _ => return Err(SpectrumError::UnsupportedFamily),
    };
    Ok(out)
}

/// Flatten `(λ, m)` pairs into a list with repetitions, truncated to `count`.
pub fn expand_multiplicities(values: &[(f64, usize)], count: usize) -> Vec<f64> {
    values.iter().flat_map(|&(l, m)| std::iter::repeat(l).take(m)).take(count).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families() {
        let nn = closed_form_spectrum(ClosedFormFamily::IntervalNn { length: 1.0 }, 3).unwrap();
        assert_eq!(nn[0].0, 0.0);
        assert!((nn[2].0 - 4.0 * PI * PI).abs() < 1e-12);
        let dn = closed_form_spectrum(ClosedFormFamily::IntervalDn { length: 2.0 }, 2).unwrap();
        assert!((dn[1].0 - 9.0 * PI * PI / 16.0).abs() < 1e-12);
        let sk = closed_form_spectrum(ClosedFormFamily::TadpoleSkew { loop_length: 2.0 }, 2).unwrap();
        assert!((sk[1].0 - 4.0 * PI * PI).abs() < 1e-12);
        let st = closed_form_spectrum(ClosedFormFamily::EquilateralStar { edges: 3, length: 1.0 }, 4).unwrap();
        assert_eq!(expand_multiplicities(&st, 4).len(), 4);
        assert_eq!(st[1].1, 2);
        assert!(closed_form_spectrum(ClosedFormFamily::EquilateralStar { edges: 1, length: 1.0 }, 4).is_err());
    }
}
