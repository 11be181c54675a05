//! Interaction graphs and random coupling realizations.
//!
//! The diamond builder tiles a two-site basis over a grid of FCC cells. Cell
//! axes are the primitive vectors `a1 = (0, ½, ½)`, `a2 = (½, 0, ½)` (open,
//! called x and y) and `a1 + a2 + a3 = (1, 1, 1)` (periodic, called z), in
//! units of the cubic lattice constant. Site `(cx, cy, cz, b)` is stored at
//! index `((cx * ny + cy) * nz + cz) * 2 + b`, with `b = 0` the A site at the
//! cell origin and `b = 1` the B site displaced by `(¼, ¼, ¼)`.
//!
//! In these cell coordinates each A site bonds to the B sites of cells
//! `c`, `c - x`, `c - y` and `c + x + y - z`. Because the periodic axis is the
//! body diagonal rather than a bond-carrying primitive vector, a single
//! periodic cell already yields a simple 4-regular bulk.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Open,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeDoc", into = "LatticeDoc")]
pub struct Lattice {
    n_sites: usize,
    edges: Vec<(usize, usize)>,
    geometry_tag: String,
    boundary: Vec<Boundary>,
}

#[derive(Serialize, Deserialize)]
struct LatticeDoc {
    n_sites: usize,
    edges: Vec<(usize, usize)>,
    geometry_tag: String,
    boundary: Vec<Boundary>,
}

impl TryFrom<LatticeDoc> for Lattice {
    type Error = Error;

    fn try_from(doc: LatticeDoc) -> Result<Self> {
        Lattice::new(doc.n_sites, doc.edges, doc.geometry_tag, doc.boundary)
    }
}

impl From<Lattice> for LatticeDoc {
    fn from(l: Lattice) -> Self {
        LatticeDoc {
            n_sites: l.n_sites,
            edges: l.edges,
            geometry_tag: l.geometry_tag,
            boundary: l.boundary,
        }
    }
}

impl Lattice {
    /// Validated constructor. Edge order is preserved.
    pub fn new(
        n_sites: usize,
        edges: Vec<(usize, usize)>,
        geometry_tag: impl Into<String>,
        boundary: Vec<Boundary>,
    ) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::Lattice("lattice needs at least one site".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for &(i, j) in &edges {
            if i >= n_sites || j >= n_sites {
                return Err(Error::Lattice(format!(
                    "edge ({i}, {j}) references a site outside [0, {n_sites})"
                )));
            }
            if i == j {
                return Err(Error::Lattice(format!("self-loop on site {i}")));
            }
            if i > j {
                return Err(Error::Lattice(format!("edge ({i}, {j}) is not ordered i < j")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Lattice(format!("duplicate edge ({i}, {j})")));
            }
        }
        if !is_connected(n_sites, &edges) {
            return Err(Error::Lattice("graph is not connected".into()));
        }
        Ok(Lattice {
            n_sites,
            edges,
            geometry_tag: geometry_tag.into(),
            boundary,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn geometry_tag(&self) -> &str {
        &self.geometry_tag
    }

    pub fn boundary(&self) -> &[Boundary] {
        &self.boundary
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_sites];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Short content hash identifying this graph (sites and edge list).
    pub fn id(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n_sites as u64).to_le_bytes());
        for &(i, j) in &self.edges {
            hasher.update((i as u64).to_le_bytes());
            hasher.update((j as u64).to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut visited = vec![false; n];
    let mut queue = VecDeque::from([0]);
    visited[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !visited[w] {
                visited[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == n
}

/// Diamond lattice with `nx * ny * nz_cells` two-site cells, open along x and
/// y and periodic along z. See the module docs for the cell convention.
pub fn build_diamond_lattice(nx: usize, ny: usize, nz_cells: usize) -> Result<Lattice> {
    if nx == 0 || ny == 0 || nz_cells == 0 {
        return Err(Error::Lattice(format!(
            "diamond dimensions must all be at least 1 (got nx={nx}, ny={ny}, nz_cells={nz_cells})"
        )));
    }
    let index = |cx: usize, cy: usize, cz: usize, b: usize| ((cx * ny + cy) * nz_cells + cz) * 2 + b;
    let mut edges = Vec::with_capacity(4 * nx * ny * nz_cells);
    for cx in 0..nx {
        for cy in 0..ny {
            for cz in 0..nz_cells {
                let a = index(cx, cy, cz, 0);
                edges.push(ordered(a, index(cx, cy, cz, 1)));
                if cx > 0 {
                    edges.push(ordered(a, index(cx - 1, cy, cz, 1)));
                }
                if cy > 0 {
                    edges.push(ordered(a, index(cx, cy - 1, cz, 1)));
                }
                if cx + 1 < nx && cy + 1 < ny {
                    let z = (cz + nz_cells - 1) % nz_cells;
                    edges.push(ordered(a, index(cx + 1, cy + 1, z, 1)));
                }
            }
        }
    }
    edges.sort_unstable();
    let n = 2 * nx * ny * nz_cells;
    Lattice::new(
        n,
        edges,
        format!("diamond(nx={nx},ny={ny},nz_cells={nz_cells})"),
        vec![Boundary::Open, Boundary::Open, Boundary::Periodic],
    )
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Diamond dimensions used for each system size in the test and benchmark
/// series. The periodic axis is held at one cell; from 18 sites up x and y
/// grow together, which gives `N = 2 n^2`. The smaller sizes exist for
/// comparisons against the dense oracle.
pub const DIAMOND_SIZE_SERIES: &[(usize, (usize, usize, usize))] = &[
    (8, (2, 2, 1)),
    (12, (2, 3, 1)),
    (16, (2, 4, 1)),
    (18, (3, 3, 1)),
    (32, (4, 4, 1)),
    (50, (5, 5, 1)),
    (72, (6, 6, 1)),
    (128, (8, 8, 1)),
];

/// Looks up the diamond dimensions for `n` in [`DIAMOND_SIZE_SERIES`].
pub fn diamond_for_size(n: usize) -> Option<(usize, usize, usize)> {
    DIAMOND_SIZE_SERIES
        .iter()
        .find(|(size, _)| *size == n)
        .map(|(_, dims)| *dims)
}

/// Parses the line-oriented edge-list format:
///
/// ```text
/// N=4
/// 0 1
/// 1 2 -0.25
/// ```
///
/// The optional third column carries couplings; it must be present on every
/// edge line or on none. Returns the lattice and the couplings if given.
pub fn load_edge_list(text: &str) -> Result<(Lattice, Option<Vec<f64>>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (header_no, header) = lines.next().ok_or_else(|| Error::EdgeList {
        line: 1,
        message: "empty document, expected header `N=<sites>`".into(),
    })?;
    let header_line = header_no + 1;
    let n_sites: usize = header
        .trim()
        .strip_prefix("N=")
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::EdgeList {
            line: header_line,
            message: format!("expected header `N=<positive integer>`, found `{}`", header.trim()),
        })?;

    let mut edges = Vec::new();
    let mut couplings: Vec<f64> = Vec::new();
    let mut with_couplings: Option<bool> = None;
    let mut seen = HashSet::new();
    for (no, line) in lines {
        let line_no = no + 1;
        let err = |message: String| Error::EdgeList { line: line_no, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(err(format!("expected `i j` or `i j J`, found `{}`", line.trim())));
        }
        let has_j = fields.len() == 3;
        match with_couplings {
            None => with_couplings = Some(has_j),
            Some(w) if w != has_j => {
                return Err(err("couplings must be given on every edge line or on none".into()))
            }
            _ => {}
        }
        let i: usize = fields[0].parse().map_err(|_| err(format!("bad site index `{}`", fields[0])))?;
        let j: usize = fields[1].parse().map_err(|_| err(format!("bad site index `{}`", fields[1])))?;
        if i == j {
            return Err(err(format!("self-loop on site {i}")));
        }
        if i >= n_sites || j >= n_sites {
            return Err(err(format!("site index out of range [0, {n_sites}) in edge ({i}, {j})")));
        }
        if i > j {
            return Err(err(format!("edge ({i}, {j}) must be written with i < j")));
        }
        if !seen.insert((i, j)) {
            return Err(err(format!("duplicate edge ({i}, {j})")));
        }
        if has_j {
            let value: f64 = fields[2].parse().map_err(|_| err(format!("bad coupling `{}`", fields[2])))?;
            if !(value > -1.0 && value < 1.0) {
                return Err(err(format!("coupling {value} outside (-1, 1)")));
            }
            couplings.push(value);
        }
        edges.push((i, j));
    }
    if !is_connected(n_sites, &edges) {
        return Err(Error::EdgeList {
            line: header_line,
            message: format!("graph with N={n_sites} is not connected"),
        });
    }
    let lattice = Lattice::new(n_sites, edges, "edge-list", Vec::new())?;
    let couplings = with_couplings.unwrap_or(false).then_some(couplings);
    Ok((lattice, couplings))
}

/// Writes the edge-list format read by [`load_edge_list`].
pub fn to_edge_list(lattice: &Lattice, couplings: Option<&[f64]>) -> String {
    let mut out = format!("N={}\n", lattice.n_sites);
    for (e, &(i, j)) in lattice.edges.iter().enumerate() {
        match couplings {
            Some(c) => {
                let _ = writeln!(out, "{i} {j} {}", c[e]);
            }
            None => {
                let _ = writeln!(out, "{i} {j}");
            }
        }
    }
    out
}

/// One random draw of all couplings on a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRealization {
    pub lattice_id: String,
    pub couplings: Vec<f64>,
    pub seed: u64,
    pub generator: String,
}

impl CouplingRealization {
    /// Wraps externally supplied couplings (for example from an edge list).
    pub fn from_values(lattice: &Lattice, couplings: Vec<f64>, seed: u64) -> Result<Self> {
        if couplings.len() != lattice.edges.len() {
            return Err(Error::Dimension {
                expected: lattice.edges.len(),
                actual: couplings.len(),
            });
        }
        if let Some(bad) = couplings.iter().find(|j| !(**j > -1.0 && **j < 1.0)) {
            return Err(Error::Invalid(format!("coupling {bad} outside (-1, 1)")));
        }
        Ok(CouplingRealization {
            lattice_id: lattice.id(),
            couplings,
            seed,
            generator: "external".into(),
        })
    }
}

/// Draws `J_ij ~ U(-1, 1)` i.i.d. per edge, in edge order, from a ChaCha8
/// stream keyed by `seed`. Endpoints are excluded.
pub fn sample_couplings(lattice: &Lattice, seed: u64) -> CouplingRealization {
    let mut rng = seeds::rng_from_seed(seed);
    let couplings = lattice
        .edges
        .iter()
        .map(|_| loop {
            let x = 2.0 * rng.random::<f64>() - 1.0;
            if x > -1.0 {
                break x;
            }
        })
        .collect();
    CouplingRealization {
        lattice_id: lattice.id(),
        couplings,
        seed,
        generator: seeds::GENERATOR.into(),
    }
}

/// Self-describing document holding a lattice and (optionally) one
/// realization of its couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub n_sites: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub geometry_tag: String,
    pub boundary: Vec<Boundary>,
}

impl InstanceDocument {
    pub fn new(lattice: &Lattice, realization: Option<&CouplingRealization>) -> Self {
        InstanceDocument {
            n_sites: lattice.n_sites,
            edges: lattice.edges.clone(),
            couplings: realization.map(|r| r.couplings.clone()),
            seed: realization.map(|r| r.seed),
            geometry_tag: lattice.geometry_tag.clone(),
            boundary: lattice.boundary.clone(),
        }
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(
            self.n_sites,
            self.edges.clone(),
            self.geometry_tag.clone(),
            self.boundary.clone(),
        )
    }

    pub fn realization(&self) -> Result<Option<CouplingRealization>> {
        let lattice = self.lattice()?;
        match &self.couplings {
            None => Ok(None),
            Some(c) => {
                let mut r = CouplingRealization::from_values(&lattice, c.clone(), self.seed.unwrap_or(0))?;
                if self.seed.is_some() {
                    r.generator = seeds::GENERATOR.into();
                }
                Ok(Some(r))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Diamond adjacency rebuilt from Cartesian positions: two sites are
    /// bonded when some periodic image lies at the nearest-neighbour
    /// distance sqrt(3)/4.
    fn cartesian_adjacency(nx: usize, ny: usize, nz: usize) -> HashSet<(usize, usize)> {
        let a1 = [0.0, 0.5, 0.5];
        let a2 = [0.5, 0.0, 0.5];
        let a3 = [1.0, 1.0, 1.0];
        let mut pos = Vec::new();
        for cx in 0..nx {
            for cy in 0..ny {
                for cz in 0..nz {
                    for b in 0..2 {
                        let mut p = [0.0; 3];
                        for d in 0..3 {
                            p[d] = cx as f64 * a1[d] + cy as f64 * a2[d] + cz as f64 * a3[d];
                            if b == 1 {
                                p[d] += 0.25;
                            }
                        }
                        pos.push(p);
                    }
                }
            }
        }
        let bond = 3f64.sqrt() / 4.0;
        let mut adj = HashSet::new();
        for i in 0..pos.len() {
            for j in (i + 1)..pos.len() {
                for m in -1i64..=1 {
                    let shift = (m * nz as i64) as f64;
                    let d: f64 = (0..3)
                        .map(|k| (pos[j][k] + shift - pos[i][k]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if (d - bond).abs() < 1e-9 {
                        adj.insert((i, j));
                    }
                }
            }
        }
        adj
    }

    #[test]
    fn diamond_matches_cartesian_construction() {
        for &(nx, ny, nz) in &[(3, 3, 1), (2, 3, 2), (4, 2, 3), (3, 3, 3)] {
            let lattice = build_diamond_lattice(nx, ny, nz).unwrap();
            let built: HashSet<_> = lattice.edges().iter().copied().collect();
            assert_eq!(built, cartesian_adjacency(nx, ny, nz), "dims {nx}x{ny}x{nz}");
        }
    }

    #[test]
    fn diamond_size_series() {
        let small = build_diamond_lattice(3, 3, 1).unwrap();
        assert_eq!(small.n_sites(), 18);
        let big = build_diamond_lattice(8, 8, 1).unwrap();
        assert_eq!(big.n_sites(), 128);
        for &(n, (x, y, z)) in DIAMOND_SIZE_SERIES {
            assert_eq!(build_diamond_lattice(x, y, z).unwrap().n_sites(), n);
        }
    }

    #[test]
    fn diamond_degrees() {
        let lattice = build_diamond_lattice(5, 5, 2).unwrap();
        let deg = lattice.degrees();
        assert!(deg.iter().all(|&d| d <= 4 && d >= 1));
        // interior cells: both sites fully coordinated
        for cx in 1..4 {
            for cy in 1..4 {
                for cz in 0..2 {
                    for b in 0..2 {
                        let idx = ((cx * 5 + cy) * 2 + cz) * 2 + b;
                        assert_eq!(deg[idx], 4, "site {idx}");
                    }
                }
            }
        }
    }

    #[test]
    fn doubling_periodic_axis_doubles_sites() {
        let a = build_diamond_lattice(3, 4, 2).unwrap();
        let b = build_diamond_lattice(3, 4, 4).unwrap();
        assert_eq!(2 * a.n_sites(), b.n_sites());
        assert_eq!(2 * a.edges().len(), b.edges().len());
    }

    #[test]
    fn diamond_rejects_zero_dimension() {
        let err = build_diamond_lattice(3, 0, 1).unwrap_err();
        assert!(err.to_string().contains("at least 1"));
    }

    #[test]
    fn edge_list_two_sites() {
        let (lattice, couplings) = load_edge_list("N=2\n0 1\n").unwrap();
        assert_eq!(lattice.n_sites(), 2);
        assert_eq!(lattice.edges(), &[(0, 1)]);
        assert!(couplings.is_none());
    }

    #[test]
    fn edge_list_errors_carry_line_numbers() {
        let cases = [
            ("N=4\n0 1\n3 3\n", 3, "self-loop"),
            ("N=3\n0 1\n1 5\n", 3, "out of range"),
            ("N=3\n0 1\n0 1\n", 3, "duplicate"),
            ("N=3\n0 1\n2 1\n", 3, "i < j"),
            ("N=4\n0 1\n2 3\n", 1, "not connected"),
            ("M=4\n", 1, "header"),
        ];
        for (doc, line, needle) in cases {
            match load_edge_list(doc) {
                Err(Error::EdgeList { line: l, message }) => {
                    assert_eq!(l, line, "{doc:?}: {message}");
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("expected edge-list error for {doc:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn couplings_are_deterministic_and_in_range() {
        let lattice = build_diamond_lattice(3, 3, 1).unwrap();
        let a = sample_couplings(&lattice, 42);
        let b = sample_couplings(&lattice, 42);
        assert_eq!(a, b);
        assert_eq!(a.couplings.len(), lattice.edges().len());
        assert!(a.couplings.iter().all(|&j| j > -1.0 && j < 1.0));
        assert_ne!(a.couplings, sample_couplings(&lattice, 43).couplings);
    }

    #[test]
    fn coupling_moments() {
        // a long chain gives 10^5 draws in a single realization
        let n = 100_001;
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let lattice = Lattice::new(n, edges, "chain", vec![Boundary::Open]).unwrap();
        let r = sample_couplings(&lattice, 2024);
        let m = r.couplings.len() as f64;
        let mean = r.couplings.iter().sum::<f64>() / m;
        let var = r.couplings.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0 / 3.0).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn instance_document_round_trip() {
        let lattice = build_diamond_lattice(2, 2, 1).unwrap();
        let r = sample_couplings(&lattice, 5);
        let doc = InstanceDocument::new(&lattice, Some(&r));
        let text = serde_json::to_string(&doc).unwrap();
        for key in ["n_sites", "edges", "couplings", "seed", "geometry_tag", "boundary"] {
            assert!(text.contains(key), "missing {key}");
        }
        let back: InstanceDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back.lattice().unwrap(), lattice);
        assert_eq!(back.realization().unwrap().unwrap().couplings, r.couplings);
    }

    proptest! {
        #[test]
        fn edge_list_round_trip(n in 2usize..12, extra in proptest::collection::vec((0usize..12, 0usize..12), 0..20), with_j in any::<bool>(), seed in any::<u64>()) {
            // spanning path plus random chords
            let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
            for (a, b) in extra {
                let (a, b) = (a % n, b % n);
                if a != b {
                    let e = ordered(a, b);
                    if !edges.contains(&e) {
                        edges.push(e);
                    }
                }
            }
            let lattice = Lattice::new(n, edges, "edge-list", Vec::new()).unwrap();
            let couplings = with_j.then(|| sample_couplings(&lattice, seed).couplings);
            let text = to_edge_list(&lattice, couplings.as_deref());
            let (back, back_j) = load_edge_list(&text).unwrap();
            prop_assert_eq!(to_edge_list(&back, back_j.as_deref()), text);
        }
    }
}
