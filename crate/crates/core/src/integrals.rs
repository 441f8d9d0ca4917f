//! Closed-form integrals of polynomial times exponential terms on `[0, L]`.

use num_complex::Complex64;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `∫₀^L p(x) e^{iwx} dx` for a polynomial with ascending coefficients.
pub fn poly_exp_integral(p: &[Complex64], w: f64, len: f64) -> Complex64 {
    if p.is_empty() {
        return Complex64::new(0.0, 0.0);
    }
    let deg = p.len() - 1;
    let theta = w.abs() * len;
    if theta <= (deg.max(1) + 1) as f64 {
        taylor(p, w, len)
    } else {
        by_parts(p, w, len)
    }
}

/// `Σ_n p_n L^{n+1} Σ_m (iwL)^m / (m! (n+m+1))`.
fn taylor(p: &[Complex64], w: f64, len: f64) -> Complex64 {
    let z = I * (w * len);
    let mut total = Complex64::new(0.0, 0.0);
    let mut lpow = len;
    for (n, &c) in p.iter().enumerate() {
        if c != Complex64::new(0.0, 0.0) {
            let mut term = Complex64::new(1.0, 0.0);
            let mut sum = Complex64::new(0.0, 0.0);
            let mut m = 0usize;
            loop {
                let add = term / (n + m + 1) as f64;
                sum += add;
                m += 1;
                if add.norm() < 1e-18 * sum.norm().max(1e-300) && m as f64 > z.norm() {
                    break;
                }
                if m > 200 {
                    break;
                }
                term *= z / m as f64;
            }
            total += c * lpow * sum;
        }
        lpow *= len;
    }
    total
}

/// `[e^{iwx} Σ_m (-1)^m p^{(m)}(x) / (iw)^{m+1}]₀^L`.
fn by_parts(p: &[Complex64], w: f64, len: f64) -> Complex64 {
    let iw = I * w;
    let mut deriv = p.to_vec();
    let mut at_end = Complex64::new(0.0, 0.0);
    let mut at_start = Complex64::new(0.0, 0.0);
    let mut denom = iw;
    let mut sign = 1.0;
    while !deriv.is_empty() {
        at_end += sign * horner(&deriv, len) / denom;
        at_start += sign * deriv[0] / denom;
        deriv = (1..deriv.len()).map(|k| deriv[k] * k as f64).collect();
        denom *= iw;
        sign = -sign;
    }
    Complex64::from_polar(1.0, w * len) * at_end - at_start
}

pub fn horner(p: &[Complex64], x: f64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

pub fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// One term `p(x) e^{i w x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpTerm {
    pub poly: Vec<Complex64>,
    pub freq: f64,
}

/// A function on one edge written as a finite sum of [`ExpTerm`]s.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeFunction {
    pub terms: Vec<ExpTerm>,
}

impl EdgeFunction {
    pub fn polynomial(coeffs: &[f64]) -> Self {
        let poly = coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect();
        Self { terms: vec![ExpTerm { poly, freq: 0.0 }] }
    }

    /// `amp sin(omega x + phase)`.
    pub fn sine(amp: f64, omega: f64, phase: f64) -> Self {
        let c = amp / (2.0 * I);
        Self {
            terms: vec![
                ExpTerm { poly: vec![c * Complex64::from_polar(1.0, phase)], freq: omega },
                ExpTerm { poly: vec![-c * Complex64::from_polar(1.0, -phase)], freq: -omega },
            ],
        }
    }

    /// `a cos(zx) + b sin(zx)`, or `a + b x` when `z == 0`.
    pub fn trig(a: Complex64, b: Complex64, z: f64) -> Self {
        if z == 0.0 {
            return Self { terms: vec![ExpTerm { poly: vec![a, b], freq: 0.0 }] };
        }
        let bi = b / (2.0 * I);
        Self {
            terms: vec![
                ExpTerm { poly: vec![a / 2.0 + bi], freq: z },
                ExpTerm { poly: vec![a / 2.0 - bi], freq: -z },
            ],
        }
    }

    pub fn add(mut self, other: &EdgeFunction) -> Self {
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn conj(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| ExpTerm { poly: t.poly.iter().map(|c| c.conj()).collect(), freq: -t.freq })
                .collect(),
        }
    }

    pub fn mul(&self, other: &EdgeFunction) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(ExpTerm { poly: poly_mul(&a.poly, &b.poly), freq: a.freq + b.freq });
            }
        }
        Self { terms }
    }

    /// `x ↦ f(c x)`.
    pub fn rescale(&self, c: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let mut s = 1.0;
                    let poly = t
                        .poly
                        .iter()
                        .map(|&p| {
                            let v = p * s;
                            s *= c;
                            v
                        })
                        .collect();
                    ExpTerm { poly, freq: t.freq * c }
                })
                .collect(),
        }
    }

    pub fn scale(mut self, s: Complex64) -> Self {
        for t in &mut self.terms {
            for c in &mut t.poly {
                *c *= s;
            }
        }
        self
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.terms.iter().map(|t| horner(&t.poly, x) * Complex64::from_polar(1.0, t.freq * x)).sum()
    }

    pub fn integral(&self, len: f64) -> Complex64 {
        self.terms.iter().map(|t| poly_exp_integral(&t.poly, t.freq, len)).sum()
    }
}
