//! Gradient ingredients evaluated with every arithmetic result rounded to a
//! reduced format. Used only by the low-precision gradient experiments.

use num_complex::Complex64;

use super::LocalEnergySample;
use crate::ansatz::{LogAmplitude, RbmParameters};
use crate::error::{Error, Result};
use crate::hamiltonians::Model;
use crate::lattice::SpinConfiguration;
use crate::precision::{round_to_format, FloatFormat};

#[derive(Clone, Copy)]
struct Lp(FloatFormat);

impl Lp {
    fn r(self, v: f64) -> f64 {
        round_to_format(v, self.0)
    }

    fn c(self, z: Complex64) -> Complex64 {
        Complex64::new(self.r(z.re), self.r(z.im))
    }

    fn add(self, a: Complex64, b: Complex64) -> Complex64 {
        Complex64::new(self.r(a.re + b.re), self.r(a.im + b.im))
    }

    fn sub(self, a: Complex64, b: Complex64) -> Complex64 {
        Complex64::new(self.r(a.re - b.re), self.r(a.im - b.im))
    }

    fn mul(self, a: Complex64, b: Complex64) -> Complex64 {
        let re = self.r(self.r(a.re * b.re) - self.r(a.im * b.im));
        let im = self.r(self.r(a.re * b.im) + self.r(a.im * b.re));
        Complex64::new(re, im)
    }

    fn scale(self, a: Complex64, s: f64) -> Complex64 {
        Complex64::new(self.r(a.re * s), self.r(a.im * s))
    }

    fn div(self, a: Complex64, b: Complex64) -> Complex64 {
        let d = self.r(self.r(b.re * b.re) + self.r(b.im * b.im));
        let re = self.r(self.r(a.re * b.re) + self.r(a.im * b.im));
        let im = self.r(self.r(a.im * b.re) - self.r(a.re * b.im));
        Complex64::new(self.r(re / d), self.r(im / d))
    }

    fn exp(self, z: Complex64) -> Complex64 {
        let m = self.r(z.re.exp());
        Complex64::new(self.r(m * self.r(z.im.cos())), self.r(m * self.r(z.im.sin())))
    }

    /// `(1 - e^{-2z}) / (1 + e^{-2z})`, mirrored for negative real part.
    fn tanh(self, z: Complex64) -> Complex64 {
        let flip = z.re < 0.0;
        let z = if flip { -z } else { z };
        let e = self.exp(self.scale(z, -2.0));
        let one = Complex64::new(1.0, 0.0);
        let t = self.div(self.sub(one, e), self.add(one, e));
        if flip {
            -t
        } else {
            t
        }
    }
}

/// `O(x)` with the parameters and every operation rounded to `fmt`.
pub fn low_precision_log_derivatives(params: &RbmParameters, x: SpinConfiguration, fmt: FloatFormat) -> Vec<Complex64> {
    let lp = Lp(fmt);
    let n = params.n_visible();
    let bits: Vec<u8> = x.bits().collect();
    let mut out: Vec<Complex64> = bits.iter().map(|&b| Complex64::new(b as f64, 0.0)).collect();
    let t: Vec<Complex64> = (0..params.n_hidden())
        .map(|i| {
            let mut theta = lp.c(params.hidden_bias()[i]);
            for (j, &b) in bits.iter().enumerate() {
                if b == 1 {
                    theta = lp.add(theta, lp.c(params.weight(i, j)));
                }
            }
            lp.tanh(theta)
        })
        .collect();
    out.extend(t.iter().copied());
    for ti in &t {
        out.extend(bits.iter().map(|&b| if b == 1 { *ti } else { Complex64::new(0.0, 0.0) }));
    }
    debug_assert_eq!(out.len(), n + params.n_hidden() * (n + 1));
    out
}

/// Local energy from reduced-precision log-amplitudes with the differences,
/// exponentials and accumulation rounded to `fmt`.
pub fn low_precision_local_energy(
    model: &Model,
    amp: &impl LogAmplitude,
    x: SpinConfiguration,
    fmt: FloatFormat,
) -> Result<Complex64> {
    let lp = Lp(fmt);
    let lx = lp.c(amp.log_psi(x)?);
    let mut acc = Complex64::new(lp.r(model.diagonal(x)), 0.0);
    let mut failure = None;
    model.for_each_offdiagonal(x, |y, h| {
        if failure.is_some() {
            return;
        }
        match amp.log_psi(y) {
            Ok(ly) => {
                let term = lp.scale(lp.exp(lp.sub(lp.c(ly), lx)), h);
                acc = lp.add(acc, term);
                if !acc.re.is_finite() || !acc.im.is_finite() {
                    failure = Some(Error::LocalEnergyOverflow { x, x_prime: y });
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(acc),
    }
}

/// `F = E[O* eps] - E[O*] E[eps]` with inputs, products, means and the final
/// combination rounded to `fmt`. Sums run in a wide accumulator and are
/// rounded once, as reduced-precision reductions are on common hardware.
pub fn low_precision_forces(samples: &[LocalEnergySample], fmt: FloatFormat) -> Result<Vec<Complex64>> {
    let first = samples.first().ok_or_else(|| Error::DegenerateInput("no samples".into()))?;
    let p = first.o_vector.len();
    let total: f64 = samples.iter().map(|s| s.weight).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput("total sample weight is zero".into()));
    }
    let lp = Lp(fmt);
    let zero = Complex64::new(0.0, 0.0);
    let mut e = zero;
    let mut o = vec![zero; p];
    let mut oe = vec![zero; p];
    for s in samples {
        if s.o_vector.len() != p {
            return Err(Error::SizeMismatch { expected: p, found: s.o_vector.len() });
        }
        let w = s.weight / total;
        let eps = lp.c(s.epsilon);
        e += eps * w;
        for k in 0..p {
            let ok = lp.c(s.o_vector[k]).conj();
            o[k] += ok * w;
            oe[k] += lp.mul(ok, eps) * w;
        }
    }
    let e = lp.c(e);
    Ok((0..p).map(|k| lp.sub(lp.c(oe[k]), lp.mul(lp.c(o[k]), e))).collect())
}
