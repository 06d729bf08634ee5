//! Arbitrary-precision reference evaluator for the geometry formulas, written
//! directly from their textbook forms with no numerical rewriting.

use astro_float::{BigFloat, Consts, Radix, RoundingMode};

const PRECISION: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

pub struct Oracle {
    cc: Consts,
}

impl Default for Oracle {
    fn default() -> Self {
        Self::new()
    }
}

impl Oracle {
    pub fn new() -> Self {
        Self {
            cc: Consts::new().expect("constants cache"),
        }
    }

    fn big(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, PRECISION)
    }

    fn to_f64(&mut self, x: &BigFloat) -> f64 {
        x.format(Radix::Dec, RM, &mut self.cc)
            .expect("formattable")
            .parse()
            .expect("decimal float")
    }

    fn add(a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, PRECISION, RM)
    }

    fn sub(a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, PRECISION, RM)
    }

    fn mul(a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, PRECISION, RM)
    }

    fn div(a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, PRECISION, RM)
    }

    fn sqrt(a: &BigFloat) -> BigFloat {
        a.sqrt(PRECISION, RM)
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> BigFloat {
        a.iter().zip(b).fold(self.big(0.0), |acc, (x, y)| {
            Self::add(&acc, &Self::mul(&self.big(*x), &self.big(*y)))
        })
    }

    /// `sqrt(1/c + ||x||²)`.
    fn time(&self, x: &[f64], c: f64) -> BigFloat {
        let inv_c = Self::div(&self.big(1.0), &self.big(c));
        Self::sqrt(&Self::add(&inv_c, &self.dot(x, x)))
    }

    /// `c·⟨p, q⟩_B` with `⟨p, q⟩_B = ⟨p_s, q_s⟩ − p_t q_t`.
    fn scaled_inner(&self, p: &[f64], q: &[f64], c: f64) -> BigFloat {
        let inner = Self::sub(
            &self.dot(p, q),
            &Self::mul(&self.time(p, c), &self.time(q, c)),
        );
        Self::mul(&self.big(c), &inner)
    }

    /// `acosh(−c⟨p,q⟩_B) / sqrt(c)`.
    pub fn distance(&mut self, p: &[f64], q: &[f64], c: f64) -> f64 {
        let arg = self.scaled_inner(p, q, c).neg();
        let d = Self::div(
            &arg.acosh(PRECISION, RM, &mut self.cc),
            &Self::sqrt(&self.big(c)),
        );
        self.to_f64(&d)
    }

    /// Spatial part of `expm_o(v) = (cosh||v||, sinh(||v||) v/||v||)`.
    pub fn expm_spatial(&mut self, v: &[f64]) -> Vec<f64> {
        let n = Self::sqrt(&self.dot(v, v));
        let factor = Self::div(&n.sinh(PRECISION, RM, &mut self.cc), &n);
        v.iter()
            .map(|x| {
                let y = Self::mul(&factor, &self.big(*x));
                self.to_f64(&y)
            })
            .collect()
    }

    /// `asin(2κ / (sqrt(c)·||p_s||))`, clamped to `π/2`.
    pub fn aperture(&mut self, p: &[f64], kappa: f64, c: f64) -> f64 {
        let n = Self::sqrt(&self.dot(p, p));
        let u = Self::div(
            &self.big(2.0 * kappa),
            &Self::mul(&Self::sqrt(&self.big(c)), &n),
        );
        let one = self.big(1.0);
        let u = if u.cmp(&one).is_some_and(|o| o > 0) {
            one
        } else {
            u
        };
        let a = u.asin(PRECISION, RM, &mut self.cc);
        self.to_f64(&a)
    }

    /// `acos((q_t + p_t·c⟨p,q⟩_B) / (||p_s||·sqrt((c⟨p,q⟩_B)² − 1)))`.
    pub fn exterior_angle(&mut self, p: &[f64], q: &[f64], c: f64) -> f64 {
        let k = self.scaled_inner(p, q, c);
        let numer = Self::add(&self.time(q, c), &Self::mul(&self.time(p, c), &k));
        let denom = Self::mul(
            &Self::sqrt(&self.dot(p, p)),
            &Self::sqrt(&Self::sub(&Self::mul(&k, &k), &self.big(1.0))),
        );
        let ratio = Self::div(&numer, &denom);
        let a = ratio.acos(PRECISION, RM, &mut self.cc);
        self.to_f64(&a)
    }

    /// `log(1 + e^z)`.
    pub fn softplus(&mut self, z: f64) -> f64 {
        let e = self.big(z).exp(PRECISION, RM, &mut self.cc);
        let s = Self::add(&self.big(1.0), &e).ln(PRECISION, RM, &mut self.cc);
        self.to_f64(&s)
    }

    /// Symmetric hyperbolic contrastive loss with logits `−d/τ`, averaged
    /// over the batch.
    pub fn contrastive(
        &mut self,
        images: &[Vec<f64>],
        texts: &[Vec<f64>],
        c: f64,
        tau: f64,
    ) -> f64 {
        let n = images.len();
        let mut logits = vec![vec![self.big(0.0); n]; n];
        for (a, img) in images.iter().enumerate() {
            for (b, txt) in texts.iter().enumerate() {
                let arg = self.scaled_inner(img, txt, c).neg();
                let d = Self::div(
                    &arg.acosh(PRECISION, RM, &mut self.cc),
                    &Self::sqrt(&self.big(c)),
                );
                logits[a][b] = Self::div(&d, &self.big(tau)).neg();
            }
        }
        let mut total = self.big(0.0);
        for j in 0..n {
            let mut row = self.big(0.0);
            let mut col = self.big(0.0);
            for i in 0..n {
                row = Self::add(&row, &logits[j][i].exp(PRECISION, RM, &mut self.cc));
                col = Self::add(&col, &logits[i][j].exp(PRECISION, RM, &mut self.cc));
            }
            let log_pi = Self::sub(&logits[j][j], &row.ln(PRECISION, RM, &mut self.cc));
            let log_pt = Self::sub(&logits[j][j], &col.ln(PRECISION, RM, &mut self.cc));
            total = Self::sub(&total, &Self::add(&log_pi, &log_pt));
        }
        let mean = Self::div(&total, &self.big(2.0 * n as f64));
        self.to_f64(&mean)
    }
}

/// `|a − b| / |b|`, or `|a − b|` when `b` is zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        (a - b).abs()
    } else {
        ((a - b) / b).abs()
    }
}
