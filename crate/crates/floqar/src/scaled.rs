//! Exponent-scaled complex numbers for cyclic products.
//!
//! A product of `p` per-slice factors easily leaves the `f64` range (a decade
//! per slice is nothing unusual for a stiff system, and spurious eigenvalues
//! decay like `ν^p`), so eigenvalues of matrix products are carried as
//! `mantissa * 2^exponent` with the mantissa modulus kept in `[1, 2)`.
//! With an `i64` exponent the representable magnitude range is far wider than
//! the `1e±4000` the solvers need.

use num_complex::Complex64;

/// A complex value `mantissa * 2^exponent` with `|mantissa| ∈ [1, 2)` or
/// `mantissa == 0` (in which case `exponent == 0`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentScaled {
    mantissa: Complex64,
    exponent: i64,
}

impl ExponentScaled {
    pub const ZERO: ExponentScaled = ExponentScaled {
        mantissa: Complex64 { re: 0.0, im: 0.0 },
        exponent: 0,
    };

    pub const ONE: ExponentScaled = ExponentScaled {
        mantissa: Complex64 { re: 1.0, im: 0.0 },
        exponent: 0,
    };

    /// Builds a normalized value from an unnormalized mantissa/exponent pair.
    pub fn new(mantissa: Complex64, exponent: i64) -> Self {
        Self {
            mantissa,
            exponent,
        }
        .normalized()
    }

    pub fn from_complex(z: Complex64) -> Self {
        Self::new(z, 0)
    }

    pub fn from_f64(x: f64) -> Self {
        Self::new(Complex64::new(x, 0.0), 0)
    }

    fn normalized(mut self) -> Self {
        let norm = self.mantissa.norm();
        assert!(norm.is_finite(), "non-finite mantissa in ExponentScaled");
        if norm == 0.0 {
            return Self::ZERO;
        }
        // log2 gets within one of the right exponent; the loops finish the job
        // (they also mop up subnormal mantissas, where log2 is least accurate).
        let shift = norm.log2().floor();
        if shift.abs() > 1.5 {
            self.mantissa *= (-shift).exp2();
            self.exponent += shift as i64;
        }
        while self.mantissa.norm() >= 2.0 {
            self.mantissa *= 0.5;
            self.exponent += 1;
        }
        while self.mantissa.norm() < 1.0 {
            self.mantissa *= 2.0;
            self.exponent -= 1;
        }
        self
    }

    pub fn mantissa(&self) -> Complex64 {
        self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == Complex64::new(0.0, 0.0)
    }

    pub fn mul(self, rhs: Self) -> Self {
        if self.is_zero() || rhs.is_zero() {
            return Self::ZERO;
        }
        Self::new(self.mantissa * rhs.mantissa, self.exponent + rhs.exponent)
    }

    pub fn div(self, rhs: Self) -> Self {
        assert!(!rhs.is_zero(), "division by exponent-scaled zero");
        if self.is_zero() {
            return Self::ZERO;
        }
        Self::new(self.mantissa / rhs.mantissa, self.exponent - rhs.exponent)
    }

    pub fn recip(self) -> Self {
        Self::ONE.div(self)
    }

    pub fn neg(self) -> Self {
        Self {
            mantissa: -self.mantissa,
            exponent: self.exponent,
        }
    }

    pub fn conj(self) -> Self {
        Self {
            mantissa: self.mantissa.conj(),
            exponent: self.exponent,
        }
    }

    /// Addition by exponent alignment. When the exponents differ by more than
    /// the `f64` mantissa width the smaller operand vanishes, which is the
    /// correctly rounded result.
    pub fn add(self, rhs: Self) -> Self {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exponent >= rhs.exponent {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let gap = hi.exponent - lo.exponent;
        if gap > 128 {
            return hi;
        }
        let m = hi.mantissa + lo.mantissa * (-(gap as f64)).exp2();
        Self::new(m, hi.exponent)
    }

    pub fn sub(self, rhs: Self) -> Self {
        self.add(rhs.neg())
    }

    /// Scales by a plain complex factor.
    pub fn scale(self, factor: Complex64) -> Self {
        self.mul(Self::from_complex(factor))
    }

    /// Converts to `f64` range, saturating in magnitude when the exponent
    /// leaves the representable window. The power of two is applied in two
    /// halves because `exp2(1024)` alone already overflows.
    pub fn to_complex(&self) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        if self.exponent > 1024 {
            return self.mantissa / self.mantissa.norm() * f64::MAX;
        }
        if self.exponent < -1140 {
            return Complex64::new(0.0, 0.0);
        }
        let e1 = self.exponent / 2;
        let e2 = self.exponent - e1;
        let v = self.mantissa * (e1 as f64).exp2() * (e2 as f64).exp2();
        if v.re.is_finite() && v.im.is_finite() {
            v
        } else {
            self.mantissa / self.mantissa.norm() * f64::MAX
        }
    }

    pub fn magnitude(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        if self.exponent > 1024 {
            return f64::INFINITY;
        }
        if self.exponent < -1140 {
            return 0.0;
        }
        let e1 = self.exponent / 2;
        let e2 = self.exponent - e1;
        self.mantissa.norm() * (e1 as f64).exp2() * (e2 as f64).exp2()
    }

    /// `log10 |self|`, finite over the whole representable range.
    pub fn log10_magnitude(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.exponent as f64 * std::f64::consts::LOG10_2 + self.mantissa.norm().log10()
    }

    pub fn log2_magnitude(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.exponent as f64 + self.mantissa.norm().log2()
    }

    pub fn arg(&self) -> f64 {
        self.mantissa.arg()
    }

    /// Magnitude comparison; exponents decide except between equal exponents,
    /// where mantissa moduli (both in `[1,2)`) decide.
    pub fn cmp_magnitude(&self, other: &Self) -> std::cmp::Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => std::cmp::Ordering::Equal,
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            (false, false) => self
                .exponent
                .cmp(&other.exponent)
                .then_with(|| self.mantissa.norm().total_cmp(&other.mantissa.norm())),
        }
    }

    /// Principal `p`-th root. Only meaningful information is the magnitude and
    /// the principal argument; both stay comfortably inside `f64` range after
    /// the root.
    pub fn root(&self, p: u32) -> Complex64 {
        assert!(p > 0);
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        let mag = (self.log2_magnitude() / p as f64).exp2();
        let arg = self.arg() / p as f64;
        Complex64::from_polar(mag, arg)
    }

    /// `|self - other| / |other|` without leaving the scaled representation.
    pub fn relative_diff(&self, other: &Self) -> f64 {
        assert!(!other.is_zero());
        self.sub(*other).div(*other).magnitude()
    }

    /// Product of a sequence of plain complex factors.
    pub fn product<I: IntoIterator<Item = Complex64>>(factors: I) -> Self {
        factors
            .into_iter()
            .fold(Self::ONE, |acc, z| acc.mul(Self::from_complex(z)))
    }
}

impl std::fmt::Display for ExponentScaled {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({} + {}i) * 2^{}",
            self.mantissa.re, self.mantissa.im, self.exponent
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normalization_keeps_mantissa_in_band() {
        for &x in &[1e-300, 3.7e-9, 0.5, 1.0, 1.999, 2.0, 1234.5, 8.9e307] {
            let v = ExponentScaled::from_f64(x);
            assert!((1.0..2.0).contains(&v.mantissa().norm()), "x = {x}");
            assert_relative_eq!(v.to_complex().re, x, max_relative = 1e-15);
        }
        assert_eq!(ExponentScaled::from_f64(0.0), ExponentScaled::ZERO);
    }

    #[test]
    fn product_spans_beyond_f64_range() {
        // 2048 factors of 1e-4 and back up again: magnitude 1e-8192 in the
        // middle, exactly 1 at the end (up to rounding).
        let mut acc = ExponentScaled::ONE;
        for _ in 0..2048 {
            acc = acc.mul(ExponentScaled::from_f64(1e-4));
        }
        assert_relative_eq!(acc.log10_magnitude(), -8192.0, max_relative = 1e-12);
        assert_eq!(acc.magnitude(), 0.0); // saturates in f64
        for _ in 0..2048 {
            acc = acc.mul(ExponentScaled::from_f64(1e4));
        }
        assert_relative_eq!(acc.to_complex().re, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn mixed_magnitude_products() {
        // alternating huge/tiny factors around 1e±16, the scale of the
        // heteroclinic-limit multipliers the representation exists for
        let factors = [1e16, 1e-16, -2.5e15, 4e-16, 7.7e16, 1.3e-17];
        let exact: f64 = factors.iter().product();
        let scaled = ExponentScaled::product(factors.iter().map(|&x| Complex64::new(x, 0.0)));
        assert_relative_eq!(scaled.to_complex().re, exact, max_relative = 1e-14);
    }

    #[test]
    fn add_aligns_exponents() {
        let a = ExponentScaled::from_f64(3.0);
        let b = ExponentScaled::from_f64(-2.9999);
        assert_relative_eq!(a.add(b).to_complex().re, 1e-4, max_relative = 1e-10);
        // negligible addend is dropped, not corrupted
        let tiny = ExponentScaled::new(Complex64::new(1.0, 0.0), -4000);
        assert_eq!(a.add(tiny), a);
    }

    #[test]
    fn magnitude_ordering() {
        let mut vals = vec![
            ExponentScaled::from_f64(1e-300).mul(ExponentScaled::from_f64(1e-300)),
            ExponentScaled::from_f64(2.0),
            ExponentScaled::ZERO,
            ExponentScaled::from_f64(-3.0),
            ExponentScaled::from_f64(1e300).mul(ExponentScaled::from_f64(1e300)),
        ];
        vals.sort_by(|a, b| a.cmp_magnitude(b));
        let mags: Vec<f64> = vals.iter().map(|v| v.log10_magnitude()).collect();
        assert!(mags.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(vals[0], ExponentScaled::ZERO);
    }

    #[test]
    fn roots_recover_per_slice_scale() {
        // nu^p for nu = 1/3, p = 700 underflows f64; root(700) must still
        // recover 1/3.
        let mut acc = ExponentScaled::ONE;
        for _ in 0..700 {
            acc = acc.mul(ExponentScaled::from_f64(1.0 / 3.0));
        }
        let nu = acc.root(700);
        assert_relative_eq!(nu.re, 1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(nu.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn relative_diff_of_distant_scales() {
        let a = ExponentScaled::new(Complex64::new(1.5, 0.0), 2000);
        let b = ExponentScaled::new(Complex64::new(1.5000000001, 0.0), 2000);
        assert!(a.relative_diff(&b) < 1e-9);
        assert!(a.relative_diff(&b) > 1e-12);
    }
}
