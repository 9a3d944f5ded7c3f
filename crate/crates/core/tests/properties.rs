//! Randomized invariants across modules.

use proptest::prelude::{prop_assert, prop_assert_eq, prop_assume, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use orientdist::bingham::{BinghamDist, BinghamMixture};
use orientdist::eval::metrics::{add_error, add_s_error, Pose};
use orientdist::eval::{clipped_log, filter_by_likelihood, RecordEval};
use orientdist::symmetry::{symmetric_angular_error, SymmetrySpec};
use orientdist::UnitQuaternion;

const UNIFORM_LOG_LIKELIHOOD: f64 = -2.2895;

fn quat(seed: u64) -> UnitQuaternion {
    UnitQuaternion::random_uniform(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn bingham(seed: u64, max_conc: f64) -> BinghamDist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = [0.0; 4];
    for zi in z.iter_mut().skip(1) {
        *zi = -rng.random_range(0.0..max_conc);
    }
    BinghamDist::new(
        UnitQuaternion::random_uniform(&mut rng),
        UnitQuaternion::random_uniform(&mut rng),
        UnitQuaternion::IDENTITY,
        z,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bingham_log_pdf_is_antipodal(d in 0u64..10_000, q in 0u64..10_000) {
        let dist = bingham(d, 50.0);
        let q = quat(q);
        prop_assert_eq!(dist.log_pdf(&q), dist.log_pdf(&-q));
    }

    #[test]
    fn isotropic_log_pdf_depends_only_on_angle(
        m in 0u64..10_000,
        lambda in 0.0f64..500.0,
        angle in 0.0f64..3.1,
        a in 0u64..10_000,
        b in 0u64..10_000,
    ) {
        let mode = quat(m);
        let dist = BinghamDist::isotropic(mode, lambda).unwrap();
        let axis = |s: u64| {
            let p = quat(s).to_axis_angle();
            [p.ax, p.ay, p.az]
        };
        let (ax, bx) = (axis(a), axis(b));
        prop_assume!(ax.iter().map(|v| v * v).sum::<f64>() > 1e-6 && bx.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let qa = mode.multiply(&UnitQuaternion::from_axis_angle(ax, angle).unwrap());
        let qb = mode.multiply(&UnitQuaternion::from_axis_angle(bx, angle).unwrap());
        prop_assert!((dist.log_pdf(&qa) - dist.log_pdf(&qb)).abs() <= 1e-9);
    }

    #[test]
    fn symmetric_error_ignores_shared_symmetry(n in 2usize..7, t in 0u64..10_000, e in 0u64..10_000, k in 0usize..7) {
        let sym = SymmetrySpec::cyclic(n, [0.0, 0.6, 0.8]).unwrap();
        let g = sym.elements().unwrap()[k % n];
        let (qt, qe) = (quat(t), quat(e));
        let base = symmetric_angular_error(&qt, &qe, &sym).unwrap();
        let moved = symmetric_angular_error(&qt.multiply(&g), &qe.multiply(&g), &sym).unwrap();
        prop_assert!((base - moved).abs() <= 1e-6, "{} vs {}", base, moved);
        prop_assert_eq!(symmetric_angular_error(&qt, &qe, &SymmetrySpec::None).unwrap(), qt.angle_deg_to(&qe));
    }

    #[test]
    fn add_s_never_exceeds_add(seed in 0u64..10_000, n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-0.1..0.1))).collect();
        let mut pose = || {
            let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            Pose::new(UnitQuaternion::random_uniform(&mut rng), Some(t))
        };
        let (a, b) = (pose(), pose());
        prop_assert!(add_s_error(&points, &a, &b).unwrap() <= add_error(&points, &a, &b).unwrap() + 1e-12);
    }

    #[test]
    fn reject_percentage_is_monotone(seed in 0u64..10_000, n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let evals: Vec<RecordEval> = (0..n)
            .map(|_| RecordEval {
                log_likelihood: 0.0,
                density_at_estimate: rng.random_range(0.0..20.0),
                estimate_angle_deg: rng.random_range(0.0..180.0),
                estimate_add: None,
                mode_angle_deg: None,
                mode_add: None,
            })
            .collect();
        let mut mults: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..150.0)).collect();
        mults.sort_by(f64::total_cmp);
        let rows = filter_by_likelihood(&evals, &mults).unwrap();
        prop_assert!(rows.windows(2).all(|w| w[1].reject_pct >= w[0].reject_pct));
    }
}

/// Averaged over ground truths drawn from the distribution itself, the
/// clipped log likelihood of a normalized density is at least the uniform
/// value (Gibbs' inequality), up to Monte Carlo error.
#[test]
fn self_likelihood_is_at_least_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 20_000;
    for seed in 0..6 {
        let d = bingham(seed, 30.0);
        let ll = d.sample(n, &mut rng).iter().map(|q| clipped_log(d.pdf(q))).sum::<f64>() / n as f64;
        assert!(ll >= UNIFORM_LOG_LIKELIHOOD - 0.05, "bingham {seed}: {ll}");

        let estimates: Vec<(UnitQuaternion, f64)> = (0..3).map(|i| (quat(100 * seed + i), 1.0)).collect();
        let mix = BinghamMixture::isotropic(&estimates, 5.0 + 10.0 * seed as f64).unwrap();
        let samples: Vec<UnitQuaternion> = (0..n)
            .map(|_| {
                let c = &mix.components()[rng.random_range(0..mix.components().len())];
                c.sample(1, &mut rng)[0]
            })
            .collect();
        let ll = samples.iter().map(|q| clipped_log(mix.pdf(q))).sum::<f64>() / n as f64;
        assert!(ll >= UNIFORM_LOG_LIKELIHOOD - 0.05, "mixture {seed}: {ll}");
    }
    // the uniform case sits on the bound
    let u = BinghamDist::isotropic(UnitQuaternion::IDENTITY, 0.0).unwrap();
    assert!((clipped_log(u.pdf(&quat(1))) - UNIFORM_LOG_LIKELIHOOD).abs() < 1e-4);
}
