//! Exponentially scaled modified Bessel functions and adaptive quadrature.

/// Switch from the power series to the large-argument expansion.
const ASYMPTOTIC_FROM: f64 = 20.0;

/// Power series of `I0(x)` and `I1(x)` (unscaled) for moderate `x >= 0`.
fn bessel_series(x: f64) -> (f64, f64) {
    let y = 0.25 * x * x;
    let mut t0 = 1.0;
    let mut t1 = 0.5 * x;
    let (mut s0, mut s1) = (t0, t1);
    for k in 1..500 {
        let kf = k as f64;
        t0 *= y / (kf * kf);
        t1 *= y / (kf * (kf + 1.0));
        s0 += t0;
        s1 += t1;
        if t0 <= 1e-18 * s0 && t1 <= 1e-18 * s1 {
            break;
        }
    }
    (s0, s1)
}

/// Hankel expansion of `e^{-x} I_ν(x) sqrt(2πx)` for ν = 0 and 1, with the
/// termwise difference of the two series.
fn bessel_asymptotic(x: f64) -> (f64, f64, f64) {
    let (mut t0, mut t1) = (1.0f64, 1.0f64);
    let (mut s0, mut s1, mut diff) = (1.0, 1.0, 0.0);
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let r0 = -(0.0 - odd * odd) / (8.0 * k as f64 * x);
        let r1 = -(4.0 - odd * odd) / (8.0 * k as f64 * x);
        let (n0, n1) = (t0 * r0, t1 * r1);
        if n0.abs() > t0.abs() && k > 2 {
            break;
        }
        t0 = n0;
        t1 = n1;
        s0 += t0;
        s1 += t1;
        diff += t0 - t1;
        if t0.abs() < 1e-18 && t1.abs() < 1e-18 {
            break;
        }
    }
    (s0, s1, diff)
}

/// `e^{-|x|} I0(x)`.
pub fn bessel_i0e(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= ASYMPTOTIC_FROM {
        bessel_series(ax).0 * (-ax).exp()
    } else {
        bessel_asymptotic(ax).0 / (2.0 * std::f64::consts::PI * ax).sqrt()
    }
}

/// `e^{-|x|} I1(x)`; odd in `x`.
pub fn bessel_i1e(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= ASYMPTOTIC_FROM {
        bessel_series(ax).1 * (-ax).exp()
    } else {
        bessel_asymptotic(ax).1 / (2.0 * std::f64::consts::PI * ax).sqrt()
    };
    v.copysign(x)
}

/// `e^{-x} (I0(x) - I1(x))` for `x >= 0`, without cancellation at large `x`.
pub fn bessel_i0_minus_i1_scaled(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= ASYMPTOTIC_FROM {
        let (i0, i1) = bessel_series(x);
        (i0 - i1) * (-x).exp()
    } else {
        bessel_asymptotic(x).2 / (2.0 * std::f64::consts::PI * x).sqrt()
    }
}

// Gauss–Kronrod 7/15 nodes and weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

struct Segment<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: f64,
}

fn gk15<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> Segment<N> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    for n in 0..N {
        kron[n] = WGK[7] * fc[n];
        gauss[n] = WG[3] * fc[n];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let (f1, f2) = (f(c - dx), f(c + dx));
        for n in 0..N {
            kron[n] += WGK[j] * (f1[n] + f2[n]);
            if j % 2 == 1 {
                gauss[n] += WG[j / 2] * (f1[n] + f2[n]);
            }
        }
    }
    let mut error: f64 = 0.0;
    let mut value = [0.0; N];
    for n in 0..N {
        value[n] = kron[n] * h;
        error = error.max(((kron[n] - gauss[n]) * h).abs());
    }
    Segment { a, b, value, error }
}

/// Adaptive Gauss–Kronrod integration of a vector-valued integrand over
/// `[a, b]`. Stops when the largest component error estimate falls below
/// `max(abs_tol, rel_tol · |component|)` for every component.
pub fn integrate_vec<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> [f64; N] {
    const MAX_SEGMENTS: usize = 4000;
    // start from a few panels so narrow peaks at the ends are seen
    let panels = 8;
    let mut segs: Vec<Segment<N>> = (0..panels)
        .map(|i| {
            let lo = a + (b - a) * i as f64 / panels as f64;
            let hi = a + (b - a) * (i + 1) as f64 / panels as f64;
            gk15(&f, lo, hi)
        })
        .collect();
    loop {
        let mut total = [0.0; N];
        let mut err = 0.0;
        for s in &segs {
            for n in 0..N {
                total[n] += s.value[n];
            }
            err += s.error;
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let smallest = total.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let target = abs_tol.max(rel_tol * smallest.max(1e-300 * scale));
        if err <= target || segs.len() >= MAX_SEGMENTS {
            return total;
        }
        let worst = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("at least one segment");
        let s = segs.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        segs.push(gk15(&f, s.a, mid));
        segs.push(gk15(&f, mid, s.b));
    }
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    integrate_vec(|x| [f(x)], a, b, abs_tol, rel_tol)[0]
}

/// `ln(exp(a) + exp(b) + ...)` over a slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// I_n(x) = (1/π) ∫_0^π e^{x cos t} cos(nt) dt, scaled by e^{-x}.
    fn bessel_oracle(n: i32, x: f64) -> f64 {
        let steps = 20_000;
        let h = PI / steps as f64;
        let f = |t: f64| (x * (t.cos() - 1.0)).exp() * (n as f64 * t).cos();
        let mut s = f(0.0) + f(PI);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0 / PI
    }

    #[test]
    fn bessel_matches_integral_representation() {
        for &x in &[0.0, 0.1, 1.0, 5.0, 19.9, 20.1, 50.0, 250.0] {
            let i0 = bessel_i0e(x);
            let i1 = bessel_i1e(x);
            let (o0, o1) = (bessel_oracle(0, x), bessel_oracle(1, x));
            assert!((i0 - o0).abs() <= 1e-12 * o0.max(1e-300), "i0e({x}) {i0} vs {o0}");
            assert!((i1 - o1).abs() <= 1e-12 * o1.max(1e-3), "i1e({x}) {i1} vs {o1}");
        }
        assert_eq!(bessel_i0e(0.0), 1.0);
        assert_eq!(bessel_i1e(0.0), 0.0);
        assert_eq!(bessel_i1e(-3.0), -bessel_i1e(3.0));
    }

    #[test]
    fn scaled_difference_is_continuous_across_branch() {
        let below = bessel_i0_minus_i1_scaled(ASYMPTOTIC_FROM);
        let above = bessel_i0_minus_i1_scaled(ASYMPTOTIC_FROM * (1.0 + 1e-12));
        assert!((below - above).abs() < 1e-11 * below, "{below} vs {above}");
        let x = 300.0;
        let direct = bessel_i0e(x) - bessel_i1e(x);
        assert!((bessel_i0_minus_i1_scaled(x) - direct).abs() < 1e-12);
    }

    #[test]
    fn kronrod_weights_integrate_polynomials() {
        let sum: f64 = 2.0 * WGK[..7].iter().sum::<f64>() + WGK[7];
        assert!((sum - 2.0).abs() < 1e-15);
        let v = integrate(|x| x.powi(12) - 3.0 * x.powi(5), -1.0, 2.0, 1e-14, 1e-14);
        let exact = (2f64.powi(13) + 1.0) / 13.0 - 0.5 * (64.0 - 1.0);
        assert!((v - exact).abs() < 1e-10 * exact.abs());
    }

    #[test]
    fn adaptive_handles_narrow_peak() {
        let v = integrate(|x| (-1e4 * x * x).exp(), 0.0, 1.0, 1e-16, 1e-12);
        let exact = 0.5 * (PI / 1e4).sqrt();
        assert!((v - exact).abs() < 1e-11 * exact);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
