//! Gridded histogram densities over unique rotations.
//!
//! Values live on the vertices of an [`S3Grid`] and are interpolated by
//! inverse-distance weighting over the `k` nearest vertices. The normalizer
//! `η = (π²/N) Σ fᵢ` makes the density integrate to one over the quotient
//! space (exactly for `k = 1`, to grid accuracy otherwise).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::S3Grid;
use crate::quat::UnitQuaternion;

pub const DEFAULT_K: usize = 4;

/// Below this rotation angle a query counts as sitting on a vertex.
pub const EXACT_HIT_DISTANCE: f64 = 1e-8;

/// Laplace smoothing added to every confusion-matrix cell.
pub const DEFAULT_LAPLACE_EPSILON: f64 = 1e-3;

/// Interpolation stencil of a query: vertex indices and raw weights `1/d`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnWeights {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// The query coincides with `indices[0]`, whose weight is 1.
    pub exact_hit: bool,
}

impl KnnWeights {
    pub fn new(grid: &S3Grid, q: &UnitQuaternion, k: usize) -> Self {
        let nn = grid.nearest(q, k);
        if nn[0].distance < EXACT_HIT_DISTANCE {
            return KnnWeights {
                indices: vec![nn[0].index],
                weights: vec![1.0],
                exact_hit: true,
            };
        }
        KnnWeights {
            indices: nn.iter().map(|n| n.index).collect(),
            weights: nn.iter().map(|n| 1.0 / n.distance).collect(),
            exact_hit: false,
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ fₖ wₖ / Σ wₖ`.
    pub fn interpolate(&self, values: &[f64]) -> f64 {
        let num: f64 = self
            .indices
            .iter()
            .zip(&self.weights)
            .map(|(&i, w)| values[i] * w)
            .sum();
        num / self.weight_sum()
    }
}

#[derive(Clone, Debug)]
pub struct GriddedHistogram {
    grid: Arc<S3Grid>,
    values: Vec<f64>,
    k: usize,
    eta: f64,
}

impl GriddedHistogram {
    pub fn new(grid: Arc<S3Grid>, values: Vec<f64>, k: usize) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidHistogram(format!("value {i} is {v}, must be finite and >= 0")));
        }
        let eta = eta(&values)?;
        Ok(GriddedHistogram { grid, values, k, eta })
    }

    /// Constant histogram; density `1/π²` everywhere.
    pub fn uniform(grid: Arc<S3Grid>, k: usize) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![1.0; n], k)
    }

    pub fn grid(&self) -> &Arc<S3Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn pdf_at(&self, q: &UnitQuaternion) -> f64 {
        self.pdf_with(&KnnWeights::new(&self.grid, q, self.k))
    }

    /// Density for a precomputed stencil (must come from this grid).
    pub fn pdf_with(&self, stencil: &KnnWeights) -> f64 {
        stencil.interpolate(&self.values) / self.eta
    }

    /// Vertex with the largest value (lowest index on ties).
    pub fn mode(&self) -> UnitQuaternion {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        self.grid.vertex(best)
    }

    pub fn to_file(&self) -> HistogramFile {
        HistogramFile {
            grid_level: self.grid.level(),
            k: self.k,
            values: self.values.clone(),
        }
    }

    pub fn from_file(file: HistogramFile, grid: Arc<S3Grid>) -> Result<Self> {
        if file.grid_level != grid.level() {
            return Err(Error::GridMismatch {
                checkpoint: file.grid_level,
                config: grid.level(),
            });
        }
        Self::new(grid, file.values, file.k)
    }
}

/// On-disk histogram: `{grid_level, k, values}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramFile {
    pub grid_level: u32,
    pub k: usize,
    pub values: Vec<f64>,
}

/// `η = (π²/N) Σ fᵢ`.
pub fn eta(values: &[f64]) -> Result<f64> {
    let total: f64 = values.iter().sum();
    if values.is_empty() || !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidHistogram("values must have positive finite total mass".into()));
    }
    Ok(PI * PI / values.len() as f64 * total)
}

/// Interpolated negative log likelihood of `q*` under unnormalized scores,
/// `L = -ln Σₖ p̂ₖ wₖ + ln Σⱼ p̂ⱼ`, and its gradient `∂L/∂p̂ⱼ`.
#[derive(Clone, Debug)]
pub struct NllLoss {
    pub value: f64,
    pub grad: Vec<f64>,
}

pub fn nll_loss(grid: &S3Grid, scores: &[f64], q_star: &UnitQuaternion, k: usize) -> Result<NllLoss> {
    if scores.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: scores.len(),
        });
    }
    nll_loss_with(scores, &KnnWeights::new(grid, q_star, k))
}

/// [`nll_loss`] for a precomputed stencil.
pub fn nll_loss_with(scores: &[f64], stencil: &KnnWeights) -> Result<NllLoss> {
    if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidInput("scores must be finite and >= 0".into()));
    }
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("scores have zero total mass".into()));
    }
    let local: f64 = stencil
        .indices
        .iter()
        .zip(&stencil.weights)
        .map(|(&i, w)| scores[i] * w)
        .sum();
    if !(local > 0.0) {
        // zero mass at the target: the loss is infinite
        return Ok(NllLoss {
            value: f64::INFINITY,
            grad: vec![f64::NAN; scores.len()],
        });
    }
    let mut grad = vec![1.0 / total; scores.len()];
    for (&i, w) in stencil.indices.iter().zip(&stencil.weights) {
        grad[i] -= w / local;
    }
    Ok(NllLoss {
        value: -local.ln() + total.ln(),
        grad,
    })
}

/// Confusion-matrix estimator: row = nearest vertex to the estimate,
/// column = nearest vertex to the ground truth, hard assignment on both.
#[derive(Clone, Debug)]
pub struct ConfusionMatrix {
    grid: Arc<S3Grid>,
    k: usize,
    epsilon: f64,
    rows: BTreeMap<usize, BTreeMap<usize, f64>>,
}

impl ConfusionMatrix {
    pub fn build(
        grid: Arc<S3Grid>,
        pairs: &[(UnitQuaternion, UnitQuaternion)],
        epsilon: f64,
        k: usize,
    ) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("Laplace epsilon must be > 0, got {epsilon}")));
        }
        let mut rows: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
        for (est, truth) in pairs {
            let r = grid.nearest_index(est);
            let c = grid.nearest_index(truth);
            *rows.entry(r).or_default().entry(c).or_insert(0.0) += 1.0;
        }
        Ok(ConfusionMatrix { grid, k, epsilon, rows })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn row_index(&self, estimate: &UnitQuaternion) -> usize {
        self.grid.nearest_index(estimate)
    }

    pub fn row(&self, r: usize) -> Result<GriddedHistogram> {
        let mut values = vec![self.epsilon; self.grid.len()];
        if let Some(row) = self.rows.get(&r) {
            for (&c, n) in row {
                values[c] += n;
            }
        }
        GriddedHistogram::new(self.grid.clone(), values, self.k)
    }

    /// Histogram of the row selected by the estimate.
    pub fn lookup(&self, estimate: &UnitQuaternion) -> Result<GriddedHistogram> {
        self.row(self.row_index(estimate))
    }
}

/// Indices into `poses` such that every occupied bin of `coarse` contributes
/// `per_bin` draws (with replacement inside the bin). `per_bin` defaults to
/// the mean occupancy, rounded up. Output is ordered by bin index.
pub fn resample_uniform<R: Rng + ?Sized>(
    poses: &[UnitQuaternion],
    coarse: &S3Grid,
    per_bin: Option<usize>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if poses.is_empty() {
        return Err(Error::InsufficientData("no poses to resample".into()));
    }
    let mut bins: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, q) in poses.iter().enumerate() {
        bins.entry(coarse.nearest_index(q)).or_default().push(i);
    }
    let per_bin = per_bin.unwrap_or_else(|| poses.len().div_ceil(bins.len()));
    let mut out = Vec::with_capacity(per_bin * bins.len());
    for members in bins.values() {
        for _ in 0..per_bin {
            out.push(members[rng.random_range(0..members.len())]);
        }
    }
    Ok(out)
}

/// Writes `ax,ay,az,density` rows, one per sample, using the axis-angle
/// embedding of each rotation.
pub fn write_heatmap_csv<W: Write>(
    out: &mut W,
    points: impl IntoIterator<Item = (UnitQuaternion, f64)>,
) -> Result<()> {
    writeln!(out, "ax,ay,az,density")?;
    for (q, d) in points {
        let p = q.to_axis_angle();
        writeln!(out, "{:.9},{:.9},{:.9},{:.9e}", p.ax, p.ay, p.az, d)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RESAMPLING_LEVEL;
    use proptest::prelude::{prop_assert, prop_assert_eq, prop_assume, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn level0() -> Arc<S3Grid> {
        static G: OnceLock<Arc<S3Grid>> = OnceLock::new();
        G.get_or_init(|| Arc::new(S3Grid::build(0).unwrap())).clone()
    }

    fn level1() -> Arc<S3Grid> {
        static G: OnceLock<Arc<S3Grid>> = OnceLock::new();
        G.get_or_init(|| Arc::new(S3Grid::build(RESAMPLING_LEVEL).unwrap())).clone()
    }

    fn random_values(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| r.random_range(0.0..1.0)).collect()
    }

    #[test]
    fn eta_and_uniform_density() {
        let g = level1();
        let h = GriddedHistogram::uniform(g.clone(), 4).unwrap();
        assert!((h.eta() - PI * PI).abs() < 1e-12);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let q = UnitQuaternion::random_uniform(&mut r);
            assert!((h.pdf_at(&q) - 1.0 / (PI * PI)).abs() < 1e-15);
        }
        let c = GriddedHistogram::new(g.clone(), vec![3.5; g.len()], 4).unwrap();
        assert!((c.pdf_at(&UnitQuaternion::IDENTITY) - 0.1013).abs() < 5e-5);
        assert!(GriddedHistogram::new(g.clone(), vec![0.0; g.len()], 4).is_err());
        assert!(GriddedHistogram::new(g.clone(), vec![1.0; 3], 4).is_err());
    }

    #[test]
    fn scaling_values_scales_eta_only() {
        let g = level1();
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let v = random_values(g.len(), &mut r);
        let a = GriddedHistogram::new(g.clone(), v.clone(), 4).unwrap();
        let b = GriddedHistogram::new(g.clone(), v.iter().map(|x| 2.0 * x).collect(), 4).unwrap();
        assert!((b.eta() - 2.0 * a.eta()).abs() < 1e-12 * a.eta());
        for _ in 0..20 {
            let q = UnitQuaternion::random_uniform(&mut r);
            assert!((a.pdf_at(&q) - b.pdf_at(&q)).abs() <= 1e-15 * a.pdf_at(&q));
        }
    }

    #[test]
    fn vertex_hit_returns_vertex_value() {
        let g = level0();
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let v = random_values(g.len(), &mut r);
        for k in [1, 4] {
            let h = GriddedHistogram::new(g.clone(), v.clone(), k).unwrap();
            for i in [0, 17, 86] {
                assert_eq!(h.pdf_at(&g.vertex(i)), v[i] / h.eta());
                assert_eq!(h.pdf_at(&-g.vertex(i)), v[i] / h.eta());
            }
        }
    }

    #[test]
    fn monte_carlo_integral_is_one() {
        let g = level1();
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let h = GriddedHistogram::new(g.clone(), random_values(g.len(), &mut r), 4).unwrap();
        let n = 200_000;
        let s: f64 = (0..n).map(|_| h.pdf_at(&UnitQuaternion::random_uniform(&mut r))).sum();
        let total = PI * PI * s / n as f64;
        assert!((total - 1.0).abs() < 0.01, "{total}");
    }

    #[test]
    fn nll_uniform_scores_is_scale_free() {
        let g = level1();
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let q = UnitQuaternion::random_uniform(&mut r);
        let st = KnnWeights::new(&g, &q, 4);
        let expect = -st.weight_sum().ln() + (g.len() as f64).ln();
        for c in [0.01, 1.0, 70.0] {
            let l = nll_loss(&g, &vec![c; g.len()], &q, 4).unwrap();
            assert!((l.value - expect).abs() < 1e-12);
        }
        assert!(nll_loss(&g, &vec![0.0; g.len()], &q, 4).is_err());
    }

    #[test]
    fn nll_one_hot_minimized_at_nearest_vertex() {
        let g = level0();
        let mut r = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let q = UnitQuaternion::random_uniform(&mut r);
            let nearest = g.nearest_index(&q);
            let best = (0..g.len())
                .map(|j| {
                    let mut s = vec![0.0; g.len()];
                    s[j] = 1.0;
                    (nll_loss(&g, &s, &q, 4).unwrap().value, j)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            assert_eq!(best.1, nearest);
        }
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let g = level0();
        let mut r = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let q = UnitQuaternion::random_uniform(&mut r);
            let s: Vec<f64> = (0..g.len()).map(|_| r.random_range(0.1..2.0)).collect();
            let l = nll_loss(&g, &s, &q, 4).unwrap();
            let st = KnnWeights::new(&g, &q, 4);
            let probes: Vec<usize> = st.indices.iter().copied().chain([0, 40, 86]).collect();
            for j in probes {
                let h = 1e-6;
                let (mut a, mut b) = (s.clone(), s.clone());
                a[j] += h;
                b[j] -= h;
                let fd = (nll_loss(&g, &a, &q, 4).unwrap().value - nll_loss(&g, &b, &q, 4).unwrap().value) / (2.0 * h);
                assert!((fd - l.grad[j]).abs() <= 1e-5 * l.grad[j].abs().max(1e-3), "{j}: {fd} vs {}", l.grad[j]);
            }
        }
    }

    #[test]
    fn nll_relates_to_log_pdf() {
        let g = level1();
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let s = random_values(g.len(), &mut r);
        let h = GriddedHistogram::new(g.clone(), s.clone(), 4).unwrap();
        let n = g.len() as f64;
        for _ in 0..20 {
            let q = UnitQuaternion::random_uniform(&mut r);
            let st = KnnWeights::new(&g, &q, 4);
            let l = nll_loss(&g, &s, &q, 4).unwrap().value;
            let rhs = -h.pdf_at(&q).ln() - st.weight_sum().ln() - (PI * PI / n).ln();
            assert!((l - rhs).abs() < 1e-9, "{l} vs {rhs}");
        }
    }

    #[test]
    fn confusion_matrix_rows() {
        let g = level0();
        let empty = ConfusionMatrix::build(g.clone(), &[], DEFAULT_LAPLACE_EPSILON, 4).unwrap();
        let h = empty.lookup(&UnitQuaternion::IDENTITY).unwrap();
        assert!((h.pdf_at(&g.vertex(5)) - 1.0 / (PI * PI)).abs() < 1e-15);

        let pairs: Vec<_> = g.vertices().iter().map(|v| (*v, *v)).collect();
        let cm = ConfusionMatrix::build(g.clone(), &pairs, DEFAULT_LAPLACE_EPSILON, 4).unwrap();
        // equator vertices have antipodal twins; ties go to the lower index
        for i in (0..g.len()).filter(|&i| g.nearest_index(&g.vertex(i)) == i) {
            let row = cm.row(i).unwrap();
            assert_eq!(row.mode(), g.vertex(i));
        }
        let mut r = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let q = UnitQuaternion::random_uniform(&mut r);
            let brute = (0..g.len())
                .min_by(|&a, &b| q.rotation_angle(&g.vertex(a)).total_cmp(&q.rotation_angle(&g.vertex(b))))
                .unwrap();
            assert_eq!(cm.row_index(&q), brute);
            assert_eq!(cm.row_index(&-q), brute);
        }
        assert!(ConfusionMatrix::build(g, &[], 0.0, 4).is_err());
    }

    #[test]
    fn resampling_equalizes_bins() {
        let g = level0();
        let mut r = ChaCha8Rng::seed_from_u64(10);
        let poses: Vec<_> = (0..5000).map(|_| UnitQuaternion::random_uniform(&mut r)).collect();
        let idx = resample_uniform(&poses, &g, None, &mut r).unwrap();
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for i in &idx {
            *counts.entry(g.nearest_index(&poses[*i])).or_default() += 1;
        }
        let owners = (0..g.len()).filter(|&i| g.nearest_index(&g.vertex(i)) == i).count();
        assert_eq!(counts.len(), owners);
        let first = *counts.values().next().unwrap();
        assert!(counts.values().all(|c| *c == first));

        let v = g.vertex(3);
        let clustered: Vec<_> = (0..50).map(|_| v).collect();
        let idx = resample_uniform(&clustered, &g, Some(7), &mut r).unwrap();
        assert_eq!(idx.len(), 7);
        assert!(resample_uniform(&[], &g, None, &mut r).is_err());
    }

    #[test]
    fn histogram_file_round_trip() {
        let g = level0();
        let h = GriddedHistogram::new(g.clone(), (0..g.len()).map(|i| i as f64 + 0.5).collect(), 4).unwrap();
        let s = serde_json::to_string(&h.to_file()).unwrap();
        let back = GriddedHistogram::from_file(serde_json::from_str(&s).unwrap(), g).unwrap();
        assert_eq!(back.values(), h.values());
        let wrong = GriddedHistogram::from_file(serde_json::from_str(&s).unwrap(), level1());
        assert!(matches!(wrong, Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn heatmap_csv_rows() {
        let mut buf = Vec::new();
        write_heatmap_csv(&mut buf, [(UnitQuaternion::IDENTITY, 0.5)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("0.000000000,0.000000000,0.000000000,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn pdf_is_antipodal_and_bounded(seed in 0u64..1000, w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            prop_assume!(w * w + x * x + y * y + z * z > 1e-3);
            let g = level0();
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let h = GriddedHistogram::new(g.clone(), random_values(g.len(), &mut r), 4).unwrap();
            let q = UnitQuaternion::normalize([w, x, y, z]).unwrap();
            let p = h.pdf_at(&q);
            prop_assert_eq!(p, h.pdf_at(&-q));
            let st = KnnWeights::new(&g, &q, 4);
            let vals: Vec<f64> = st.indices.iter().map(|&i| h.values()[i] / h.eta()).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(p >= lo * (1.0 - 1e-12) && p <= hi * (1.0 + 1e-12));
        }
    }
}
