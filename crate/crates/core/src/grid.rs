//! Multiresolution gridding of SO(3) from the 600-cell.
//!
//! The 120 vertices of the 600-cell are embedded in S³ and its 600 cells are
//! recovered as 4-cliques at the minimal edge distance. Cells whose centroid
//! lies in the closed hemisphere `w >= 0` are kept, and each refinement
//! splits every kept tetrahedron into eight through its normalized edge
//! midpoints. Vertices are distinct as points of S³; a band of vertices near
//! `w = 0` also has its antipode present. At level 2 this gives 3885
//! vertices.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::UnitQuaternion;

/// Level used for histogram distributions.
pub const DISTRIBUTION_LEVEL: u32 = 2;

/// Coarse level used to rebalance training data (~26° coverage radius).
pub const RESAMPLING_LEVEL: u32 = 1;

const GRID_FORMAT: &str = "orientdist-grid";
const GRID_VERSION: u32 = 1;

/// Component-wise tolerance under which two vertices count as duplicates.
const DEDUP_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct S3Grid {
    level: u32,
    vertices: Vec<UnitQuaternion>,
    tetra: Vec<[u32; 4]>,
    full_sphere_vertex_count: usize,
}

/// A neighbor returned by [`S3Grid::nearest`]: vertex index and rotation
/// angle (radians) to the query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverageStats {
    pub max_deg: f64,
    pub mean_deg: f64,
}

/// Cell complex counts of the full (unquotiented) subdivision; used only to
/// report the pre-quotient vertex count.
#[derive(Clone, Copy)]
struct FullCounts {
    vertices: usize,
    edges: usize,
    faces: usize,
    cells: usize,
}

impl FullCounts {
    const BASE: FullCounts = FullCounts {
        vertices: 120,
        edges: 720,
        faces: 1200,
        cells: 600,
    };

    fn refine(self) -> FullCounts {
        FullCounts {
            vertices: self.vertices + self.edges,
            edges: 2 * self.edges + 3 * self.faces + self.cells,
            faces: 4 * self.faces + 8 * self.cells,
            cells: 8 * self.cells,
        }
    }

    fn at_level(level: u32) -> FullCounts {
        (0..level).fold(Self::BASE, |c, _| c.refine())
    }
}

/// The 120 vertices of the 600-cell on the unit 3-sphere, sorted.
pub fn cell600_vertices() -> Vec<[f64; 4]> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut out = Vec::with_capacity(120);
    for bits in 0..16u32 {
        let s = |b: u32| if bits & (1 << b) != 0 { -0.5 } else { 0.5 };
        out.push([s(0), s(1), s(2), s(3)]);
    }
    for axis in 0..4 {
        for sign in [1.0, -1.0] {
            let mut v = [0.0; 4];
            v[axis] = sign;
            out.push(v);
        }
    }
    let base = [phi / 2.0, 0.5, 1.0 / (2.0 * phi), 0.0];
    for perm in even_permutations() {
        for bits in 0..8u32 {
            let s = |b: u32| if bits & (1 << b) != 0 { -1.0 } else { 1.0 };
            let vals = [base[0] * s(0), base[1] * s(1), base[2] * s(2), 0.0];
            let mut v = [0.0; 4];
            for k in 0..4 {
                v[perm[k]] = vals[k];
            }
            out.push(v);
        }
    }
    out.sort_by(|a, b| lex_cmp(a, b));
    out
}

fn even_permutations() -> Vec<[usize; 4]> {
    let mut perms = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let distinct = (0..4).all(|i| (i + 1..4).all(|j| p[i] != p[j]));
                    if !distinct {
                        continue;
                    }
                    let inversions = (0..4)
                        .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
                        .filter(|&(i, j)| p[i] > p[j])
                        .count();
                    if inversions % 2 == 0 {
                        perms.push(p);
                    }
                }
            }
        }
    }
    perms
}

fn lex_cmp(a: &[f64; 4], b: &[f64; 4]) -> std::cmp::Ordering {
    for i in 0..4 {
        match a[i].total_cmp(&b[i]) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Edges and tetrahedral cells of the full 600-cell over `vertices`.
fn cell600_complex(vertices: &[[f64; 4]]) -> Result<(Vec<(usize, usize)>, Vec<[usize; 4]>)> {
    let n = vertices.len();
    // neighbours on the 600-cell sit at inner product φ/2 (arc of 36°)
    let edge_dot = (1.0 + 5f64.sqrt()) / 4.0;
    let mut adj = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if (dot4(&vertices[i], &vertices[j]) - edge_dot).abs() < 1e-9 {
                adj[i][j] = true;
                adj[j][i] = true;
                edges.push((i, j));
            }
        }
    }
    let mut cells = Vec::new();
    for &(i, j) in &edges {
        let common: Vec<usize> = (j + 1..n).filter(|&k| adj[i][k] && adj[j][k]).collect();
        for (a, &k) in common.iter().enumerate() {
            for &l in &common[a + 1..] {
                if adj[k][l] {
                    cells.push([i, j, k, l]);
                }
            }
        }
    }
    if n != 120 || edges.len() != 720 || cells.len() != 600 {
        return Err(Error::GridConstruction(format!(
            "600-cell enumeration gave {} vertices, {} edges, {} cells",
            n,
            edges.len(),
            cells.len()
        )));
    }
    Ok((edges, cells))
}

impl S3Grid {
    /// Level-0 grid: the 600-cell restricted to cells with centroid `w >= 0`.
    pub fn base_600_cell() -> Result<Self> {
        let all = cell600_vertices();
        let (_, cells) = cell600_complex(&all)?;
        let kept: Vec<[usize; 4]> = cells
            .into_iter()
            .filter(|c| c.iter().map(|&i| all[i][0]).sum::<f64>() >= -1e-12)
            .collect();
        let mut remap = HashMap::new();
        let mut vertices = Vec::new();
        let mut tetra = Vec::with_capacity(kept.len());
        for cell in kept {
            let mut t = [0u32; 4];
            for (slot, &i) in cell.iter().enumerate() {
                let next = vertices.len();
                let id = *remap.entry(i).or_insert_with(|| {
                    vertices.push(all[i]);
                    next
                });
                t[slot] = id as u32;
            }
            tetra.push(t);
        }
        Self::assemble(0, vertices, tetra, FullCounts::BASE.vertices)
    }

    /// Builds the grid at `level` by repeated subdivision of the base cell.
    pub fn build(level: u32) -> Result<Self> {
        let mut grid = Self::base_600_cell()?;
        for _ in 0..level {
            grid = grid.subdivide();
        }
        Ok(grid)
    }

    /// Splits every tetrahedron into eight through normalized edge midpoints.
    pub fn subdivide(&self) -> Self {
        let mut vertices: Vec<[f64; 4]> = self.vertices.iter().map(|q| q.to_array()).collect();
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<[f64; 4]>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[key.0 as usize], vertices[key.1 as usize]);
                let m = [p[0] + q[0], p[1] + q[1], p[2] + q[2], p[3] + q[3]];
                let n = dot4(&m, &m).sqrt();
                vertices.push([m[0] / n, m[1] / n, m[2] / n, m[3] / n]);
                (vertices.len() - 1) as u32
            })
        };
        let mut tetra = Vec::with_capacity(self.tetra.len() * 8);
        for &[a, b, c, d] in &self.tetra {
            let ab = mid(a, b, &mut vertices);
            let ac = mid(a, c, &mut vertices);
            let ad = mid(a, d, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let bd = mid(b, d, &mut vertices);
            let cd = mid(c, d, &mut vertices);
            tetra.extend_from_slice(&[
                [a, ab, ac, ad],
                [b, ab, bc, bd],
                [c, ac, bc, cd],
                [d, ad, bd, cd],
            ]);
            // the inner octahedron is cut along its ab-cd diagonal
            for (p, q) in [(ac, bc), (bc, bd), (bd, ad), (ad, ac)] {
                tetra.push([ab, cd, p, q]);
            }
        }
        let full = FullCounts::at_level(self.level + 1).vertices;
        Self::assemble(self.level + 1, vertices, tetra, full)
            .expect("subdivision of a valid grid is valid")
    }

    /// Sorts vertices lexicographically, remaps cells and checks invariants.
    fn assemble(
        level: u32,
        vertices: Vec<[f64; 4]>,
        tetra: Vec<[u32; 4]>,
        full_sphere_vertex_count: usize,
    ) -> Result<Self> {
        let mut order: Vec<usize> = (0..vertices.len()).collect();
        order.sort_by(|&a, &b| lex_cmp(&vertices[a], &vertices[b]));
        let mut new_index = vec![0u32; vertices.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new as u32;
        }
        let vertices: Vec<UnitQuaternion> = order
            .iter()
            .map(|&i| UnitQuaternion::from_array_unchecked(vertices[i]))
            .collect();
        let tetra = tetra
            .into_iter()
            .map(|t| t.map(|i| new_index[i as usize]))
            .collect();
        let grid = S3Grid {
            level,
            vertices,
            tetra,
            full_sphere_vertex_count,
        };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<()> {
        for (i, v) in self.vertices.iter().enumerate() {
            if (v.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::GridConstruction(format!(
                    "vertex {i} has norm {}",
                    v.norm()
                )));
            }
        }
        for (i, pair) in self.vertices.windows(2).enumerate() {
            let (a, b) = (pair[0].to_array(), pair[1].to_array());
            if lex_cmp(&a, &b) != std::cmp::Ordering::Less {
                return Err(Error::GridConstruction(format!(
                    "vertices {i} and {} are not in sorted order",
                    i + 1
                )));
            }
        }
        // sorted order puts component-wise duplicates next to each other
        // only approximately, so check every pair sharing a rounded w
        let mut by_w: HashMap<i64, Vec<usize>> = HashMap::new();
        for (i, v) in self.vertices.iter().enumerate() {
            by_w.entry((v.w * 1e6).round() as i64).or_default().push(i);
        }
        for (i, v) in self.vertices.iter().enumerate() {
            let key = (v.w * 1e6).round() as i64;
            for k in [key - 1, key, key + 1] {
                for &j in by_w.get(&k).into_iter().flatten() {
                    if j <= i {
                        continue;
                    }
                    let (a, b) = (v.to_array(), self.vertices[j].to_array());
                    if (0..4).all(|c| (a[c] - b[c]).abs() <= DEDUP_TOLERANCE) {
                        return Err(Error::GridConstruction(format!(
                            "vertices {i} and {j} coincide"
                        )));
                    }
                }
            }
        }
        let n = self.vertices.len() as u32;
        if let Some(t) = self.tetra.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::GridConstruction(format!(
                "tetrahedron {t:?} references a missing vertex"
            )));
        }
        Ok(())
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[UnitQuaternion] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> UnitQuaternion {
        self.vertices[i]
    }

    pub fn tetra(&self) -> &[[u32; 4]] {
        &self.tetra
    }

    pub fn full_sphere_vertex_count(&self) -> usize {
        self.full_sphere_vertex_count
    }

    /// The `k` vertices closest to `q` by rotation angle, ascending, ties
    /// broken by vertex index. Brute-force scan.
    pub fn nearest(&self, q: &UnitQuaternion, k: usize) -> Vec<Neighbor> {
        let k = k.clamp(1, self.vertices.len());
        // rank by |q·v|, which is monotone in the rotation angle
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, v) in self.vertices.iter().enumerate() {
            let c = q.dot(v).abs();
            if best.len() == k && c <= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(bc, _)| bc >= c);
            best.insert(pos, (c, i));
            best.truncate(k);
        }
        let mut out: Vec<Neighbor> = best
            .into_iter()
            .map(|(_, i)| Neighbor {
                index: i,
                distance: q.rotation_angle(&self.vertices[i]),
            })
            .collect();
        out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
        out
    }

    /// Index of the single nearest vertex.
    pub fn nearest_index(&self, q: &UnitQuaternion) -> usize {
        self.nearest(q, 1)[0].index
    }

    /// Max and mean nearest-vertex rotation angle (degrees) over
    /// `n_samples` uniform rotations.
    pub fn coverage_stats<R: Rng + ?Sized>(&self, n_samples: usize, rng: &mut R) -> Result<CoverageStats> {
        if n_samples < 10_000 {
            return Err(Error::InvalidParameter(format!(
                "coverage needs at least 10000 samples, got {n_samples}"
            )));
        }
        let mut max: f64 = 0.0;
        let mut sum = 0.0;
        for _ in 0..n_samples {
            let q = UnitQuaternion::random_uniform(rng);
            let d = self.nearest(&q, 1)[0].distance.to_degrees();
            max = max.max(d);
            sum += d;
        }
        Ok(CoverageStats {
            max_deg: max,
            mean_deg: sum / n_samples as f64,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&GridFile::from(self))?)
    }

    /// Parses a cache file, checking all grid invariants.
    pub fn from_json(s: &str) -> Result<Self> {
        let file: GridFile = serde_json::from_str(s)?;
        if file.format != GRID_FORMAT || file.version != GRID_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported grid file {} v{}",
                file.format, file.version
            )));
        }
        let mut vertices = Vec::with_capacity(file.vertices.len());
        for (i, v) in file.vertices.into_iter().enumerate() {
            let q = UnitQuaternion::from_unit_array(v)
                .map_err(|e| Error::parse(i, "vertices", e.to_string()))?;
            vertices.push(q);
        }
        let grid = S3Grid {
            level: file.level,
            vertices,
            tetra: file.tetra,
            full_sphere_vertex_count: file.full_sphere_vertex_count,
        };
        grid.validate()?;
        if grid.full_sphere_vertex_count != FullCounts::at_level(grid.level).vertices {
            return Err(Error::InvalidInput(format!(
                "grid file level {} does not match its pre-quotient vertex count",
                grid.level
            )));
        }
        Ok(grid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Loads `grid_l{level}.json` from `dir`, building and writing it first
    /// when missing.
    pub fn load_or_build(level: u32, dir: &Path) -> Result<Self> {
        let path = cache_path(dir, level);
        if path.exists() {
            let grid = Self::load(&path)?;
            if grid.level != level {
                return Err(Error::GridMismatch {
                    checkpoint: grid.level,
                    config: level,
                });
            }
            return Ok(grid);
        }
        let grid = Self::build(level)?;
        fs::create_dir_all(dir)?;
        grid.save(&path)?;
        Ok(grid)
    }
}

pub fn cache_path(dir: &Path, level: u32) -> PathBuf {
    dir.join(format!("grid_l{level}.json"))
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    format: String,
    version: u32,
    level: u32,
    full_sphere_vertex_count: usize,
    vertices: Vec<[f64; 4]>,
    tetra: Vec<[u32; 4]>,
}

impl From<&S3Grid> for GridFile {
    fn from(g: &S3Grid) -> Self {
        GridFile {
            format: GRID_FORMAT.to_string(),
            version: GRID_VERSION,
            level: g.level,
            full_sphere_vertex_count: g.full_sphere_vertex_count,
            vertices: g.vertices.iter().map(|q| q.to_array()).collect(),
            tetra: g.tetra.clone(),
        }
    }
}
