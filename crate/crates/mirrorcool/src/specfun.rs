//! Special functions and quadrature for the analytic force formulas:
//! sinc, Bessel J₁, Struve H₁ and the oscillation-averaging integral
//! ∫₀^{2π} sin(a + b sin T) cos²T dT.
//!
//! J₁ uses the ascending power series for x ≤ 8 and the standard
//! rational approximation of the asymptotic P/Q amplitude functions beyond
//! (coefficients from the FreeBSD msun `e_j1.c`, Sun Microsystems, freely
//! redistributable). H₁ uses the ascending series with double-double
//! accumulation up to x = 25, and Y₁ plus its asymptotic tail beyond.

use std::f64::consts::PI;

/// sin(x)/x with the removable singularity handled.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let z = x * x;
        1.0 - z / 6.0 + z * z / 120.0
    } else {
        x.sin() / x
    }
}

// ---------------------------------------------------------------------------
// Bessel J1 (and Y1 for the Struve tail)
// ---------------------------------------------------------------------------

const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/* Asymptotic amplitude functions for x >= 8:
 *   j1(x) = sqrt(2/(pi x)) [ pone(x) cos(x - 3pi/4) - qone(x) sin(x - 3pi/4) ]
 *   y1(x) = sqrt(2/(pi x)) [ pone(x) sin(x - 3pi/4) + qone(x) cos(x - 3pi/4) ]
 */
const PR8: [f64; 6] = [
    0.0,
    1.171_874_999_999_886_5e-1,
    1.323_948_065_930_735_8e1,
    4.120_518_543_073_785_6e2,
    3.874_745_389_139_605_3e3,
    7.914_479_540_318_917e3,
];
const PS8: [f64; 5] = [
    1.142_073_703_756_784_1e2,
    3.650_930_834_208_534_6e3,
    3.695_620_602_690_334_7e4,
    9.760_279_359_349_508e4,
    3.080_427_206_278_888e4,
];
const QR8: [f64; 6] = [
    0.0,
    -1.025_390_624_999_927_1e-1,
    -1.627_175_345_445_899e1,
    -7.596_017_225_139_501e2,
    -1.184_980_667_024_295_9e4,
    -4.843_851_242_857_503_5e4,
];
const QS8: [f64; 6] = [
    1.613_953_697_007_229_1e2,
    7.825_385_999_233_484_7e3,
    1.338_753_362_872_495_8e5,
    7.196_577_236_832_409_4e5,
    6.666_012_326_177_764e5,
    -2.944_902_643_038_346_4e5,
];

fn poly5(z: f64, c: &[f64; 6]) -> f64 {
    c[0] + z * (c[1] + z * (c[2] + z * (c[3] + z * (c[4] + z * c[5]))))
}

fn pone(x: f64) -> f64 {
    let z = 1.0 / (x * x);
    let r = poly5(z, &PR8);
    let s = 1.0 + z * (PS8[0] + z * (PS8[1] + z * (PS8[2] + z * (PS8[3] + z * PS8[4]))));
    1.0 + r / s
}

fn qone(x: f64) -> f64 {
    let z = 1.0 / (x * x);
    let r = poly5(z, &QR8);
    let s = 1.0
        + z * (QS8[0] + z * (QS8[1] + z * (QS8[2] + z * (QS8[3] + z * (QS8[4] + z * QS8[5])))));
    (0.375 + r / s) / x
}

/// Ascending series Σ (-1)^k (x/2)^{2k+1} / (k! (k+1)!), adequate for x ≤ 8.
fn j1_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 0.5 * x;
    let mut sum = term;
    for k in 1..60 {
        term *= q / (k as f64 * (k + 1) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1.0) {
            break;
        }
    }
    sum
}

/// Order-1 Bessel function of the first kind; odd extension for x < 0.
pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= 8.0 {
        j1_series(ax)
    } else {
        // cos(x - 3pi/4) = (sin x - cos x)/sqrt(2), sin(x - 3pi/4) = -(sin x + cos x)/sqrt(2)
        let (s, c) = ax.sin_cos();
        let cc = (s - c) / std::f64::consts::SQRT_2;
        let ss = -(s + c) / std::f64::consts::SQRT_2;
        (2.0f64).sqrt() * INV_SQRT_PI * (pone(ax) * cc - qone(ax) * ss) / ax.sqrt()
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

/// First positive zero of J₁.
pub const J1_FIRST_ZERO: f64 = 3.831_705_970_207_512;

/// Y₁ via the asymptotic amplitude functions; only valid for x ≥ 8, which is
/// all the Struve tail needs.
fn y1_large(x: f64) -> f64 {
    debug_assert!(x >= 8.0);
    let (s, c) = x.sin_cos();
    let cc = (s - c) / std::f64::consts::SQRT_2;
    let ss = -(s + c) / std::f64::consts::SQRT_2;
    (2.0f64).sqrt() * INV_SQRT_PI * (pone(x) * ss + qone(x) * cc) / x.sqrt()
}

// ---------------------------------------------------------------------------
// Double-double helpers for the midrange Struve series, where plain f64
// accumulation loses ~6 digits to cancellation.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let v = s - a;
        let e = (a - (s - v)) + (b - v);
        Dd { hi: s, lo: e }
    }

    fn two_prod(a: f64, b: f64) -> Self {
        let p = a * b;
        let e = a.mul_add(b, -p);
        Dd { hi: p, lo: e }
    }

    fn add(self, other: Dd) -> Self {
        let s = Dd::two_sum(self.hi, other.hi);
        let lo = s.lo + self.lo + other.lo;
        let r = Dd::two_sum(s.hi, lo);
        Dd { hi: r.hi, lo: r.lo }
    }

    fn mul(self, other: Dd) -> Self {
        let p = Dd::two_prod(self.hi, other.hi);
        let lo = p.lo + self.hi * other.lo + self.lo * other.hi;
        let r = Dd::two_sum(p.hi, lo);
        Dd { hi: r.hi, lo: r.lo }
    }

    fn div_f64(self, d: f64) -> Self {
        let q0 = self.hi / d;
        let r = self.add(Dd::two_prod(-q0, d));
        let q1 = (r.hi + r.lo) / d;
        let s = Dd::two_sum(q0, q1);
        Dd { hi: s.hi, lo: s.lo }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Ascending series for H₁ in double-double arithmetic:
/// H₁(x) = Σ (-1)^k (x/2)^{2k+2} / (Γ(k+3/2) Γ(k+5/2)).
fn struve_h1_series(x: f64) -> f64 {
    let q = Dd::two_prod(0.5 * x, 0.5 * x); // (x/2)^2, exact product
    // t_0 = (x/2)^2 / (Γ(3/2)Γ(5/2)) = 2x²/(3π)
    let mut term = q.mul(Dd::from(8.0)).div_f64(3.0 * PI);
    let mut sum = term;
    for k in 0..120 {
        let d = (k as f64 + 1.5) * (k as f64 + 2.5); // exact in f64
        term = term.mul(q).div_f64(-d);
        sum = sum.add(term);
        if term.hi.abs() < 1e-20 * sum.hi.abs().max(1.0) {
            break;
        }
    }
    sum.value()
}

/// Asymptotic tail: H₁(x) - Y₁(x) = (1/π) Σ T_k with T₀ = 2 and
/// T_{k+1} = T_k (k+1/2)(1/2-k) (2/x)².
fn struve_h1_asymptotic(x: f64) -> f64 {
    let z = 4.0 / (x * x);
    let mut term = 2.0;
    let mut sum = term;
    for k in 0..40 {
        let next = term * (k as f64 + 0.5) * (0.5 - k as f64) * z;
        if next.abs() >= term.abs() {
            break; // divergent tail reached
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    y1_large(x) + sum / PI
}

/// Order-1 Struve function H₁ for x ≥ 0.
pub fn struve_h1(x: f64) -> f64 {
    assert!(x >= 0.0, "struve_h1 requires x >= 0");
    if x <= 25.0 {
        struve_h1_series(x)
    } else {
        struve_h1_asymptotic(x)
    }
}

// ---------------------------------------------------------------------------
// Oscillation-averaging integral
// ---------------------------------------------------------------------------

/// Fixed-order quadrature description for the averaging-integral oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    pub nodes: usize,
    pub scheme: QuadratureScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureScheme {
    PeriodicTrapezoid,
}

impl QuadratureSpec {
    pub fn periodic_trapezoid(nodes: usize) -> Self {
        assert!(nodes >= 64 && nodes % 2 == 0, "nodes must be >= 64 and even");
        QuadratureSpec {
            nodes,
            scheme: QuadratureScheme::PeriodicTrapezoid,
        }
    }

    /// Integrate a 2π-periodic function over [0, 2π].
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let n = self.nodes;
        let h = 2.0 * PI / n as f64;
        (0..n).map(|i| f(i as f64 * h)).sum::<f64>() * h
    }
}

/// ∫₀^{2π} sin(a + b sin T) cos²T dT via the closed form
/// (2π/b) [sin(a) J₁(b) + cos(a) H₁(b)], with the b → 0 series limit
/// π sin(a) + (4b/3) cos(a).
pub fn spatial_average_integral(a: f64, b: f64) -> f64 {
    assert!(b >= 0.0, "spatial_average_integral requires b >= 0");
    if b < 1e-6 {
        PI * a.sin() + 4.0 * b / 3.0 * a.cos()
    } else {
        2.0 * PI / b * (a.sin() * bessel_j1(b) + a.cos() * struve_h1(b))
    }
}

/// Direct quadrature of the same integral; the independent oracle for the
/// closed form.
///
/// The closed form is the symmetrized (half-period, doubled) average, i.e.
/// the T-integrand carries |sin T| rather than sin T — over a full period the
/// odd part would cancel the Struve term. The substitution
/// T(u) = u - (2/3)sin 2u + (1/12)sin 4u (T'(u) = (8/3)sin⁴u) flattens the
/// |sin| corners at u = 0, π so the equispaced periodic-trapezoid rule keeps
/// spectral accuracy.
pub fn spatial_average_integral_quadrature(a: f64, b: f64, spec: QuadratureSpec) -> f64 {
    spec.integrate(|u| {
        let t = u - 2.0 / 3.0 * (2.0 * u).sin() + (4.0 * u).sin() / 12.0;
        let tp = 1.0 - 4.0 / 3.0 * (2.0 * u).cos() + (4.0 * u).cos() / 3.0;
        let c = t.cos();
        (a + b * t.sin().abs()).sin() * c * c * tp
    })
}
