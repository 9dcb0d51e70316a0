use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Swish,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Swish => "swish",
        }
    }

    pub fn apply(self, z: &[f64], out: &mut [f64]) {
        match self {
            Activation::Tanh => {
                for (o, &x) in out.iter_mut().zip(z) {
                    *o = x.tanh();
                }
            }
            Activation::Relu => {
                for (o, &x) in out.iter_mut().zip(z) {
                    *o = if x > 0.0 { x } else { 0.0 };
                }
            }
            Activation::Swish => {
                out.copy_from_slice(z);
                swish_inplace(out);
            }
        }
    }

    pub fn apply_inplace(self, z: &mut [f64]) {
        match self {
            Activation::Tanh => z.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Relu => z.iter_mut().for_each(|x| *x = if *x > 0.0 { *x } else { 0.0 }),
            Activation::Swish => swish_inplace(z),
        }
    }

    /// Multiplies `grad` in place by the derivative at pre-activation `z`
    /// (with `a` the activation output).
    pub fn backprop(self, z: &[f64], a: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Tanh => {
                for (g, &y) in grad.iter_mut().zip(a) {
                    *g *= 1.0 - y * y;
                }
            }
            Activation::Relu => {
                for (g, &x) in grad.iter_mut().zip(z) {
                    if x <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Swish => {
                for (g, &x) in grad.iter_mut().zip(z) {
                    let s = sigmoid(x);
                    *g *= s * (1.0 + x * (1.0 - s));
                }
            }
        }
    }
}

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

/// Branch-free `exp` (Cody-Waite reduction, degree-13 Taylor core) that the
/// compiler can vectorize. Relative error is a few ulp over the clamped range.
/// Relies on hardware FMA (the workspace builds with `target-cpu=native`).
#[inline(always)]
pub fn exp(x: f64) -> f64 {
    let x = x.clamp(-708.0, 709.0);
    let shifted = x.mul_add(LOG2E, ROUND_MAGIC);
    let k = shifted - ROUND_MAGIC;
    let r = (-k).mul_add(LN2_LO, (-k).mul_add(LN2_HI, x));
    let mut p: f64 = 1.0 / 6_227_020_800.0;
    p = p.mul_add(r, 1.0 / 479_001_600.0);
    p = p.mul_add(r, 1.0 / 39_916_800.0);
    p = p.mul_add(r, 1.0 / 3_628_800.0);
    p = p.mul_add(r, 1.0 / 362_880.0);
    p = p.mul_add(r, 1.0 / 40_320.0);
    p = p.mul_add(r, 1.0 / 5_040.0);
    p = p.mul_add(r, 1.0 / 720.0);
    p = p.mul_add(r, 1.0 / 120.0);
    p = p.mul_add(r, 1.0 / 24.0);
    p = p.mul_add(r, 1.0 / 6.0);
    p = p.mul_add(r, 0.5);
    p = p.mul_add(r, 1.0);
    p = p.mul_add(r, 1.0);
    // the low mantissa bits of `shifted` hold k as a two's-complement integer
    let ki = shifted.to_bits().wrapping_sub(ROUND_MAGIC.to_bits());
    let scale = f64::from_bits(ki.wrapping_add(1023) << 52);
    p * scale
}

fn swish_inplace(z: &mut [f64]) {
    let mut done = 0;
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx512f") {
        // SAFETY: the feature was detected at runtime.
        done = unsafe { avx512::swish_prefix(z) };
    }
    z[done..].iter_mut().for_each(|x| *x *= sigmoid(*x));
}

/// Vector form of [`exp`] and swish, performing the same operations in the
/// same order so results match the scalar path bit for bit.
#[cfg(target_arch = "x86_64")]
mod avx512 {
    use super::{LN2_HI, LN2_LO, LOG2E, ROUND_MAGIC};
    use std::arch::x86_64::*;

    const COEFFS: [f64; 12] = [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
    ];

    #[target_feature(enable = "avx512f")]
    unsafe fn exp8(x: __m512d) -> __m512d {
        let x = _mm512_max_pd(_mm512_min_pd(x, _mm512_set1_pd(709.0)), _mm512_set1_pd(-708.0));
        let magic = _mm512_set1_pd(ROUND_MAGIC);
        let shifted = _mm512_fmadd_pd(x, _mm512_set1_pd(LOG2E), magic);
        let k = _mm512_sub_pd(shifted, magic);
        let nk = _mm512_sub_pd(_mm512_setzero_pd(), k);
        let r = _mm512_fmadd_pd(nk, _mm512_set1_pd(LN2_LO), _mm512_fmadd_pd(nk, _mm512_set1_pd(LN2_HI), x));
        let mut p = _mm512_set1_pd(1.0 / 6_227_020_800.0);
        for c in COEFFS {
            p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(c));
        }
        p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0));
        let ki = _mm512_sub_epi64(_mm512_castpd_si512(shifted), _mm512_set1_epi64(ROUND_MAGIC.to_bits() as i64));
        let scale = _mm512_slli_epi64::<52>(_mm512_add_epi64(ki, _mm512_set1_epi64(1023)));
        _mm512_mul_pd(p, _mm512_castsi512_pd(scale))
    }

    /// Applies swish to the longest prefix that is a multiple of 8; returns its length.
    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn swish_prefix(z: &mut [f64]) -> usize {
        let n = z.len() / 8 * 8;
        let one = _mm512_set1_pd(1.0);
        let ptr = z.as_mut_ptr();
        for i in (0..n).step_by(8) {
            let x = _mm512_loadu_pd(ptr.add(i));
            let e = exp8(_mm512_sub_pd(_mm512_setzero_pd(), x));
            let s = _mm512_div_pd(one, _mm512_add_pd(one, e));
            _mm512_storeu_pd(ptr.add(i), _mm512_mul_pd(x, s));
        }
        n
    }
}

#[inline(always)]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
