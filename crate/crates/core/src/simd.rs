//! Eight-lane f64 vector used by the network kernels.
//!
//! Backed by AVX-512 or AVX2+FMA when the build enables them, otherwise by
//! a plain array. Each backend is deterministic; they differ from each
//! other only in whether multiply-add is fused.

#[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
mod imp {
    use core::arch::x86_64::*;

    #[derive(Clone, Copy)]
    pub struct F8(__m512d);

    #[allow(unused_unsafe)]
    impl F8 {
        #[inline(always)]
        pub fn zero() -> Self {
            F8(unsafe { _mm512_setzero_pd() })
        }
        #[inline(always)]
        pub fn splat(v: f64) -> Self {
            F8(unsafe { _mm512_set1_pd(v) })
        }
        #[inline(always)]
        pub fn load(s: &[f64]) -> Self {
            assert!(s.len() >= 8);
            F8(unsafe { _mm512_loadu_pd(s.as_ptr()) })
        }
        #[inline(always)]
        pub fn store(self, s: &mut [f64]) {
            assert!(s.len() >= 8);
            unsafe { _mm512_storeu_pd(s.as_mut_ptr(), self.0) }
        }
        /// `self * b + c`
        #[inline(always)]
        pub fn mul_add(self, b: F8, c: F8) -> Self {
            F8(unsafe { _mm512_fmadd_pd(self.0, b.0, c.0) })
        }
        #[inline(always)]
        pub fn to_array(self) -> [f64; 8] {
            let mut a = [0.0; 8];
            self.store(&mut a);
            a
        }
    }
}

#[cfg(all(target_arch = "x86_64", target_feature = "avx2", target_feature = "fma", not(target_feature = "avx512f")))]
mod imp {
    use core::arch::x86_64::*;

    #[derive(Clone, Copy)]
    pub struct F8(__m256d, __m256d);

    #[allow(unused_unsafe)]
    impl F8 {
        #[inline(always)]
        pub fn zero() -> Self {
            unsafe { F8(_mm256_setzero_pd(), _mm256_setzero_pd()) }
        }
        #[inline(always)]
        pub fn splat(v: f64) -> Self {
            unsafe { F8(_mm256_set1_pd(v), _mm256_set1_pd(v)) }
        }
        #[inline(always)]
        pub fn load(s: &[f64]) -> Self {
            assert!(s.len() >= 8);
            unsafe { F8(_mm256_loadu_pd(s.as_ptr()), _mm256_loadu_pd(s.as_ptr().add(4))) }
        }
        #[inline(always)]
        pub fn store(self, s: &mut [f64]) {
            assert!(s.len() >= 8);
            unsafe {
                _mm256_storeu_pd(s.as_mut_ptr(), self.0);
                _mm256_storeu_pd(s.as_mut_ptr().add(4), self.1);
            }
        }
        #[inline(always)]
        pub fn mul_add(self, b: F8, c: F8) -> Self {
            unsafe { F8(_mm256_fmadd_pd(self.0, b.0, c.0), _mm256_fmadd_pd(self.1, b.1, c.1)) }
        }
        #[inline(always)]
        pub fn to_array(self) -> [f64; 8] {
            let mut a = [0.0; 8];
            self.store(&mut a);
            a
        }
    }
}

#[cfg(not(all(target_arch = "x86_64", any(target_feature = "avx512f", all(target_feature = "avx2", target_feature = "fma")))))]
mod imp {
    #[derive(Clone, Copy)]
    pub struct F8([f64; 8]);

    impl F8 {
        #[inline(always)]
        pub fn zero() -> Self {
            F8([0.0; 8])
        }
        #[inline(always)]
        pub fn splat(v: f64) -> Self {
            F8([v; 8])
        }
        #[inline(always)]
        pub fn load(s: &[f64]) -> Self {
            F8(s[..8].try_into().unwrap())
        }
        #[inline(always)]
        pub fn store(self, s: &mut [f64]) {
            s[..8].copy_from_slice(&self.0);
        }
        #[inline(always)]
        pub fn mul_add(self, b: F8, c: F8) -> Self {
            let mut o = [0.0; 8];
            for i in 0..8 {
                o[i] = self.0[i] * b.0[i] + c.0[i];
            }
            F8(o)
        }
        #[inline(always)]
        pub fn to_array(self) -> [f64; 8] {
            self.0
        }
    }
}

pub use imp::F8;

impl F8 {
    /// Fixed-order horizontal sum.
    #[inline(always)]
    pub fn sum(self) -> f64 {
        let a = self.to_array();
        ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]))
    }
}

const LOG2_E: f64 = core::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
/// `1.5 * 2^52`: adding it rounds to an integer kept in the low mantissa bits.
const SHIFTER: f64 = 6_755_399_441_055_744.0;

/// Branch-free `exp` for `|x| <= 700`, within a few ulp of the correctly
/// rounded result. Written so that loops over it vectorize.
#[inline(always)]
pub fn exp_approx(x: f64) -> f64 {
    let x = x.clamp(-700.0, 700.0);
    let t = x * LOG2_E + SHIFTER;
    let k = t - SHIFTER;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // Taylor polynomial to degree 13 on |r| <= ln2 / 2, Estrin's scheme
    let r2 = r * r;
    let r4 = r2 * r2;
    let r8 = r4 * r4;
    let q0 = 1.0 + r;
    let q1 = 0.5 + r * (1.0 / 6.0);
    let q2 = 1.0 / 24.0 + r * (1.0 / 120.0);
    let q3 = 1.0 / 720.0 + r * (1.0 / 5_040.0);
    let q4 = 1.0 / 40_320.0 + r * (1.0 / 362_880.0);
    let q5 = 1.0 / 3_628_800.0 + r * (1.0 / 39_916_800.0);
    let q6 = 1.0 / 479_001_600.0 + r * (1.0 / 6_227_020_800.0);
    let t0 = (q0 + q1 * r2) + (q2 + q3 * r2) * r4;
    let t1 = (q4 + q5 * r2) + q6 * r4;
    let p = t0 + t1 * r8;
    let scale = f64::from_bits((t.to_bits().wrapping_add(1023)) << 52);
    p * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanes_round_trip() {
        let v: [f64; 8] = core::array::from_fn(|i| i as f64 - 3.5);
        let a = F8::load(&v);
        assert_eq!(a.to_array(), v);
        assert_eq!(a.sum(), v.iter().sum::<f64>());
        let r = F8::splat(2.0).mul_add(a, F8::splat(1.0)).to_array();
        for i in 0..8 {
            assert_eq!(r[i], 2.0 * v[i] + 1.0);
        }
        assert_eq!(F8::zero().sum(), 0.0);
    }

    #[test]
    fn exp_matches_libm() {
        let mut worst = 0.0f64;
        for i in 0..=200_000 {
            let x = -700.0 + 1400.0 * i as f64 / 200_000.0;
            let e = libm::exp(x);
            worst = worst.max(((exp_approx(x) - e) / e).abs());
        }
        assert!(worst < 1e-15, "{worst:e}");
        assert_eq!(exp_approx(0.0), 1.0);
        assert_eq!(exp_approx(-1000.0), exp_approx(-700.0));
    }
}
