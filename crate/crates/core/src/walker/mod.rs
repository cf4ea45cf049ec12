//! Multi-label seeded random walks on the polar pixel lattice.
//!
//! Every node is either marked (a seed with a fixed label) or unmarked. With
//! the combinatorial Laplacian permuted into marked/unmarked blocks
//!
//! ```text
//!     L = | L_M   B  |
//!         | Bᵀ   L_U |
//! ```
//!
//! the probability that a walk started at each unmarked node first reaches a
//! seed of class ω solves `L_U x^ω = −Bᵀ m^ω`, where `m^ω` is the indicator
//! of class-ω seeds. The same Dirichlet machinery computes the ultrasound
//! confidence map with numeric boundary values.

mod topology;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{LabelMap, PolarFrame, Tissue};
use crate::error::{Error, Result};
use crate::seeds::SeedMask;
use crate::sparse::{conjugate_gradient, CgSettings, CsrMatrix};

pub use topology::{enforce_topology, monotone_boundaries};

/// Weighted undirected graph. Parallel edges are allowed and add up.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGraph {
    n_nodes: usize,
    edges: Vec<(usize, usize, f64)>,
    degrees: Vec<f64>,
}

impl LatticeGraph {
    pub fn from_edges(n_nodes: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut degrees = vec![0.0; n_nodes];
        for &(p, q, w) in &edges {
            if p >= n_nodes || q >= n_nodes || p == q {
                return Err(Error::Config(format!("invalid edge ({p}, {q}) in a {n_nodes}-node graph")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Domain(format!("edge weight {w} must be positive and finite")));
            }
            degrees[p] += w;
            degrees[q] += w;
        }
        Ok(LatticeGraph {
            n_nodes,
            edges,
            degrees,
        })
    }

    /// 4-connected lattice over a `rows × cols` grid, node `r * cols + c`.
    ///
    /// Rows are scan lines; with `wrap_rows` the last row also links to the
    /// first. Edge weights come from `weight(g_p, g_q)`.
    pub fn grid(
        guide: ArrayView2<'_, f64>,
        wrap_rows: bool,
        weight: impl Fn(f64, f64, EdgeKind) -> f64,
    ) -> Result<Self> {
        let (rows, cols) = guide.dim();
        let node = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::with_capacity(2 * rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    let w = weight(guide[(r, c)], guide[(r, c + 1)], EdgeKind::Radial);
                    edges.push((node(r, c), node(r, c + 1), w));
                }
                let next = if r + 1 < rows {
                    Some(r + 1)
                } else if wrap_rows && rows > 2 {
                    Some(0)
                } else {
                    None
                };
                if let Some(rn) = next {
                    let w = weight(guide[(r, c)], guide[(rn, c)], EdgeKind::Angular);
                    edges.push((node(r, c), node(rn, c), w));
                }
            }
        }
        LatticeGraph::from_edges(rows * cols, edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// `d_p = Σ_q w_pq`.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Same topology with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        LatticeGraph::from_edges(
            self.n_nodes,
            self.edges.iter().map(|&(p, q, w)| (p, q, w * factor)).collect(),
        )
    }

    /// Combinatorial Laplacian: degrees on the diagonal, `−w_pq` off it.
    pub fn laplacian(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(self.n_nodes + 4 * self.edges.len());
        for (p, &d) in self.degrees.iter().enumerate() {
            triplets.push((p, p, d));
        }
        for &(p, q, w) in &self.edges {
            triplets.push((p, q, -w));
            triplets.push((q, p, -w));
        }
        CsrMatrix::from_triplets(self.n_nodes, self.n_nodes, &triplets)
    }

    /// Connected-component id per node.
    pub fn components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.n_nodes).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(p, q, _) in &self.edges {
            let (a, b) = (find(&mut parent, p), find(&mut parent, q));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        (0..self.n_nodes).map(|x| find(&mut parent, x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Along a scan line (depth neighbours).
    Radial,
    /// Across neighbouring scan lines.
    Angular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerParams {
    /// Gaussian sensitivity to guide differences.
    pub beta: f64,
    /// Weight floor keeping the lattice connected.
    pub epsilon: f64,
    /// Relative residual target of each label solve.
    pub tolerance: f64,
}

impl Default for WalkerParams {
    fn default() -> Self {
        WalkerParams {
            beta: 130.0,
            epsilon: 1e-6,
            tolerance: 1e-10,
        }
    }
}

impl WalkerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!("walker beta {} must be >= 0", self.beta)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!("walker epsilon {} must be > 0", self.epsilon)));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-8) {
            return Err(Error::Config(format!(
                "walker tolerance {} must lie in (0, 1e-8]",
                self.tolerance
            )));
        }
        Ok(())
    }

    pub fn cg_settings(&self) -> CgSettings {
        CgSettings {
            tolerance: self.tolerance,
            max_iterations: None,
        }
    }
}

/// Lattice of a polar frame with `w_pq = exp(−β (g_p − g_q)²) + ε`.
///
/// The guide `g` is the intensity, multiplied by the confidence map when one
/// is given, so that edges in poorly insonified regions carry less contrast.
pub fn build_lattice(
    polar: &PolarFrame,
    confidence: Option<&Array2<f64>>,
    params: &WalkerParams,
) -> Result<LatticeGraph> {
    params.validate()?;
    let guide = match confidence {
        Some(c) => {
            if c.dim() != polar.intensities().dim() {
                return Err(Error::Config("confidence map does not match the frame".into()));
            }
            polar.intensities() * c
        }
        None => polar.intensities().clone(),
    };
    let (beta, eps) = (params.beta, params.epsilon);
    LatticeGraph::grid(guide.view(), true, |a, b, _| (-beta * (a - b) * (a - b)).exp() + eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Marked(usize),
    Unmarked(usize),
}

/// Laplacian with its marked / unmarked block partition.
#[derive(Debug, Clone)]
pub struct SparseLaplacian {
    full: CsrMatrix,
    marked: Vec<usize>,
    unmarked: Vec<usize>,
    slots: Vec<Slot>,
    l_m: CsrMatrix,
    b: CsrMatrix,
    l_u: CsrMatrix,
}

impl SparseLaplacian {
    /// Partitions `graph` by `is_marked`, failing if some component has no marked node.
    pub fn partition(graph: &LatticeGraph, is_marked: &[bool]) -> Result<Self> {
        let n = graph.n_nodes();
        if is_marked.len() != n {
            return Err(Error::Config(format!(
                "seed mask has {} entries for {n} nodes",
                is_marked.len()
            )));
        }
        let components = graph.components();
        let mut size = vec![0usize; n];
        let mut seeded = vec![false; n];
        for (node, &c) in components.iter().enumerate() {
            size[c] += 1;
            seeded[c] |= is_marked[node];
        }
        if let Some(c) = (0..n).find(|&c| size[c] > 0 && !seeded[c]) {
            return Err(Error::Solvability {
                component_size: size[c],
            });
        }

        let mut marked = Vec::new();
        let mut unmarked = Vec::new();
        let slots: Vec<Slot> = is_marked
            .iter()
            .enumerate()
            .map(|(node, &m)| {
                if m {
                    marked.push(node);
                    Slot::Marked(marked.len() - 1)
                } else {
                    unmarked.push(node);
                    Slot::Unmarked(unmarked.len() - 1)
                }
            })
            .collect();

        let full = graph.laplacian();
        let (mut tm, mut tb, mut tu) = (Vec::new(), Vec::new(), Vec::new());
        for p in 0..n {
            for (q, v) in full.row(p) {
                match (slots[p], slots[q]) {
                    (Slot::Marked(i), Slot::Marked(j)) => tm.push((i, j, v)),
                    (Slot::Marked(i), Slot::Unmarked(j)) => tb.push((i, j, v)),
                    (Slot::Unmarked(i), Slot::Unmarked(j)) => tu.push((i, j, v)),
                    (Slot::Unmarked(_), Slot::Marked(_)) => {}
                }
            }
        }
        let (nm, nu) = (marked.len(), unmarked.len());
        Ok(SparseLaplacian {
            l_m: CsrMatrix::from_triplets(nm, nm, &tm),
            b: CsrMatrix::from_triplets(nm, nu, &tb),
            l_u: CsrMatrix::from_triplets(nu, nu, &tu),
            full,
            marked,
            unmarked,
            slots,
        })
    }

    pub fn full(&self) -> &CsrMatrix {
        &self.full
    }

    pub fn l_m(&self) -> &CsrMatrix {
        &self.l_m
    }

    /// Marked-rows × unmarked-columns block.
    pub fn b(&self) -> &CsrMatrix {
        &self.b
    }

    pub fn l_u(&self) -> &CsrMatrix {
        &self.l_u
    }

    pub fn marked(&self) -> &[usize] {
        &self.marked
    }

    pub fn unmarked(&self) -> &[usize] {
        &self.unmarked
    }

    /// `−Bᵀ m` for per-marked-node boundary values `m`.
    fn reduced_rhs(&self, boundary: &[f64]) -> Vec<f64> {
        let mut rhs = vec![0.0; self.unmarked.len()];
        for (i, &m) in boundary.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (j, v) in self.b.row(i) {
                rhs[j] -= v * m;
            }
        }
        rhs
    }

    /// Harmonic extension of marked-node `boundary` values to every node.
    pub fn solve_dirichlet(&self, boundary: &[f64], settings: &CgSettings) -> Result<Vec<f64>> {
        assert_eq!(boundary.len(), self.marked.len());
        let rhs = self.reduced_rhs(boundary);
        let mut interior = vec![0.0; self.unmarked.len()];
        conjugate_gradient(&self.l_u, &rhs, &mut interior, settings)?;
        Ok(self
            .slots
            .iter()
            .map(|slot| match *slot {
                Slot::Marked(i) => boundary[i],
                Slot::Unmarked(j) => interior[j],
            })
            .collect())
    }
}

/// Partitions the lattice by a seed mask, requiring every class to be seeded.
pub fn assemble_laplacian(graph: &LatticeGraph, seeds: &SeedMask) -> Result<SparseLaplacian> {
    if seeds.len() != graph.n_nodes() {
        return Err(Error::Config(format!(
            "seed mask covers {} nodes, lattice has {}",
            seeds.len(),
            graph.n_nodes()
        )));
    }
    for tissue in Tissue::ALL {
        if seeds.count(tissue) == 0 {
            return Err(Error::Seeding(format!("no {tissue} seeds")));
        }
    }
    let marked: Vec<bool> = seeds.iter().map(|s| s.is_some()).collect();
    SparseLaplacian::partition(graph, &marked)
}

/// Per-class posterior fields `x^ω` over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMaps {
    maps: [Array2<f64>; 3],
}

impl ProbabilityMaps {
    pub fn new(maps: [Array2<f64>; 3]) -> Result<Self> {
        if maps[1].dim() != maps[0].dim() || maps[2].dim() != maps[0].dim() {
            return Err(Error::Config("posterior maps differ in shape".into()));
        }
        Ok(ProbabilityMaps { maps })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.maps[0].dim()
    }

    pub fn get(&self, tissue: Tissue) -> &Array2<f64> {
        &self.maps[tissue.index()]
    }

    pub fn at(&self, idx: (usize, usize)) -> [f64; 3] {
        [self.maps[0][idx], self.maps[1][idx], self.maps[2][idx]]
    }

    pub fn maps(&self) -> &[Array2<f64>; 3] {
        &self.maps
    }

    /// Largest `|Σ_ω x^ω − 1|` over the grid.
    pub fn max_simplex_error(&self) -> f64 {
        ndarray::Zip::from(&self.maps[0])
            .and(&self.maps[1])
            .and(&self.maps[2])
            .fold(0.0f64, |acc, a, b, c| acc.max((a + b + c - 1.0).abs()))
    }
}

const CLAMP_LIMIT: f64 = 1e-6;

fn clamp_unit(v: f64) -> Result<f64> {
    if !(-CLAMP_LIMIT..=1.0 + CLAMP_LIMIT).contains(&v) {
        return Err(Error::Numerical {
            reason: format!("posterior {v} outside [0, 1] beyond clamp limit"),
            residual: v,
        });
    }
    Ok(v.clamp(0.0, 1.0))
}

/// Solves for lumen and media posteriors and closes the simplex for externa.
pub fn solve_labels(lap: &SparseLaplacian, seeds: &SeedMask, params: &WalkerParams) -> Result<ProbabilityMaps> {
    let settings = params.cg_settings();
    let indicator = |tissue: Tissue| -> Vec<f64> {
        lap.marked()
            .iter()
            .map(|&node| f64::from(u8::from(seeds.get_flat(node) == Some(tissue))))
            .collect()
    };
    let (lumen, media) = rayon::join(
        || lap.solve_dirichlet(&indicator(Tissue::Lumen), &settings),
        || lap.solve_dirichlet(&indicator(Tissue::Media), &settings),
    );
    let (lumen, media) = (lumen?, media?);

    let dim = seeds.dim();
    let mut maps = [Array2::zeros(dim), Array2::zeros(dim), Array2::zeros(dim)];
    for node in 0..seeds.len() {
        let idx = (node / dim.1, node % dim.1);
        let mut x = match seeds.get_flat(node) {
            Some(t) => {
                let mut x = [0.0; 3];
                x[t.index()] = 1.0;
                x
            }
            None => {
                let (a, b) = (lumen[node], media[node]);
                [clamp_unit(a)?, clamp_unit(b)?, clamp_unit(1.0 - a - b)?]
            }
        };
        let sum: f64 = x.iter().sum();
        if sum != 1.0 {
            x.iter_mut().for_each(|v| *v /= sum);
        }
        for (map, v) in maps.iter_mut().zip(x) {
            map[idx] = v;
        }
    }
    ProbabilityMaps::new(maps)
}

/// Per-pixel argmax; ties resolve to the lowest class index.
pub fn argmax_labels(probs: &ProbabilityMaps) -> LabelMap {
    let [a, b, c] = probs.maps();
    let mut labels = Array2::from_elem(probs.dim(), Tissue::Externa);
    ndarray::Zip::from(&mut labels).and(a).and(b).and(c).for_each(|out, &pa, &pb, &pc| {
        *out = if pa >= pb && pa >= pc {
            Tissue::Lumen
        } else if pb >= pc {
            Tissue::Media
        } else {
            Tissue::Externa
        };
    });
    LabelMap::new(labels)
}

/// `max_p |x_p − Σ_q w_pq x_q / d_p|` over unmarked nodes.
pub fn harmonic_residual(graph: &LatticeGraph, values: &[f64], is_marked: &[bool]) -> f64 {
    let lx = graph.laplacian().mul_vec(values);
    lx.iter()
        .zip(graph.degrees())
        .zip(is_marked)
        .filter(|(_, &m)| !m)
        .map(|((r, d), _)| (r / d).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(weights: &[f64]) -> LatticeGraph {
        let edges = weights.iter().enumerate().map(|(i, &w)| (i, i + 1, w)).collect();
        LatticeGraph::from_edges(weights.len() + 1, edges).unwrap()
    }

    fn seeds_1d(values: &[Option<Tissue>]) -> SeedMask {
        SeedMask::new(Array2::from_shape_vec((1, values.len()), values.to_vec()).unwrap())
    }

    #[test]
    fn path_laplacian_matches_definition() {
        let l = path(&[1.0, 1.0]).laplacian();
        assert_eq!(
            l.to_dense(),
            vec![vec![1.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 1.0]]
        );
    }

    #[test]
    fn blocks_of_path_with_end_seeds() {
        let lap = SparseLaplacian::partition(&path(&[1.0, 1.0]), &[true, false, true]).unwrap();
        assert_eq!(lap.l_u().to_dense(), vec![vec![2.0]]);
        assert_eq!(lap.b().to_dense(), vec![vec![-1.0], vec![-1.0]]);
        assert_eq!(lap.l_m().to_dense(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn symmetric_path_splits_evenly() {
        let lap = SparseLaplacian::partition(&path(&[1.0, 1.0]), &[true, false, true]).unwrap();
        let x = lap.solve_dirichlet(&[1.0, 0.0], &CgSettings::default()).unwrap();
        assert!((x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weighted_path_follows_conductance() {
        // L_U = [3], rhs = 2 · 1 + 1 · 0.
        let lap = SparseLaplacian::partition(&path(&[2.0, 1.0]), &[true, false, true]).unwrap();
        let x = lap.solve_dirichlet(&[1.0, 0.0], &CgSettings::default()).unwrap();
        assert!((x[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unseeded_component_rejected() {
        let graph = LatticeGraph::from_edges(4, vec![(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let err = SparseLaplacian::partition(&graph, &[true, false, false, false]).unwrap_err();
        assert!(matches!(err, Error::Solvability { component_size: 2 }));
    }

    #[test]
    fn nonpositive_weights_rejected() {
        assert!(LatticeGraph::from_edges(2, vec![(0, 1, 0.0)]).is_err());
        assert!(LatticeGraph::from_edges(2, vec![(0, 1, f64::NAN)]).is_err());
        assert!(LatticeGraph::from_edges(2, vec![(0, 0, 1.0)]).is_err());
    }

    #[test]
    fn constant_frame_weights() {
        let polar = PolarFrame::from_grid(Array2::from_elem((8, 16), 0.4)).unwrap();
        let g = build_lattice(&polar, None, &WalkerParams::default()).unwrap();
        assert!(g.edges().iter().all(|&(_, _, w)| w == 1.0 + 1e-6));
    }

    #[test]
    fn weights_floor_at_epsilon() {
        let params = WalkerParams::default();
        let mut grid = Array2::zeros((8, 16));
        grid[(0, 0)] = 1e6;
        let polar = PolarFrame::from_grid(grid).unwrap();
        let g = build_lattice(&polar, None, &params).unwrap();
        let min = g.edges().iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
        assert_eq!(min, params.epsilon);
    }

    #[test]
    fn three_by_three_wrapped_degree() {
        let eps = 1e-6;
        let guide = Array2::from_elem((3, 3), 0.5);
        let g = LatticeGraph::grid(guide.view(), true, |a: f64, b: f64, _| {
            (-130.0 * (a - b).powi(2)).exp() + eps
        })
        .unwrap();
        // Interior depth, any scan line: two radial and two angular neighbours.
        assert!((g.degrees()[4] - 4.0 * (1.0 + eps)).abs() < 1e-15);
        assert!((g.degrees()[1] - 4.0 * (1.0 + eps)).abs() < 1e-15);
        assert!((g.degrees()[0] - 3.0 * (1.0 + eps)).abs() < 1e-15);
    }

    #[test]
    fn two_class_path() {
        let seeds = seeds_1d(&[Some(Tissue::Lumen), None, Some(Tissue::Media), Some(Tissue::Externa)]);
        let graph = LatticeGraph::from_edges(4, vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        let lap = assemble_laplacian(&graph, &seeds).unwrap();
        let probs = solve_labels(&lap, &seeds, &WalkerParams::default()).unwrap();
        assert!((probs.get(Tissue::Lumen)[(0, 1)] - 0.5).abs() < 1e-12);
        assert!((probs.get(Tissue::Media)[(0, 1)] - 0.5).abs() < 1e-12);
        assert!(probs.get(Tissue::Externa)[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn fully_seeded_returns_indicators() {
        let values = [Some(Tissue::Lumen), Some(Tissue::Externa), Some(Tissue::Media)];
        let seeds = seeds_1d(&values);
        let lap = assemble_laplacian(&path(&[1.0, 1.0]), &seeds).unwrap();
        let probs = solve_labels(&lap, &seeds, &WalkerParams::default()).unwrap();
        for (i, v) in values.iter().enumerate() {
            let expected = v.unwrap();
            for t in Tissue::ALL {
                let want = if t == expected { 1.0 } else { 0.0 };
                assert_eq!(probs.get(t)[(0, i)], want);
            }
        }
    }

    #[test]
    fn missing_class_is_a_seeding_error() {
        let seeds = seeds_1d(&[Some(Tissue::Lumen), None, Some(Tissue::Media)]);
        assert!(matches!(assemble_laplacian(&path(&[1.0, 1.0]), &seeds), Err(Error::Seeding(_))));
    }

    #[test]
    fn argmax_rules() {
        let cell = |v: f64| Array2::from_elem((1, 1), v);
        let p = ProbabilityMaps::new([cell(0.5), cell(0.3), cell(0.2)]).unwrap();
        assert_eq!(argmax_labels(&p).labels()[(0, 0)], Tissue::Lumen);
        let tie = ProbabilityMaps::new([cell(0.4), cell(0.4), cell(0.2)]).unwrap();
        assert_eq!(argmax_labels(&tie).labels()[(0, 0)], Tissue::Lumen);
        let tie23 = ProbabilityMaps::new([cell(0.2), cell(0.4), cell(0.4)]).unwrap();
        assert_eq!(argmax_labels(&tie23).labels()[(0, 0)], Tissue::Media);
    }
}
