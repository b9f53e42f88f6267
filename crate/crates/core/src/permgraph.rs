//! Colored-graph automorphism groups, canonical forms, and stabilizer chains.
//!
//! The engine is classic individualization–refinement: vertex colors are
//! refined to a stable (equitable) partition by neighbor-color counts, then a
//! target cell is split by individualizing its vertices one at a time, with
//! discovered automorphisms pruning sibling branches. Group orders are exact
//! big integers obtained by orbit–stabilizer recursion, and a deterministic
//! Schreier–Sims stabilizer chain provides an independent order computation
//! and pointwise stabilizers by prescribed base prefix.

use num_bigint::BigInt;
use num_traits::One;
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

/// Errors from graph searches.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermError {
    /// The search exceeded its node budget.
    #[error("search budget of {budget} nodes exceeded")]
    BudgetExceeded {
        /// The configured budget.
        budget: u64,
    },
    /// Malformed graph input.
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    /// A partial map that is not color-preserving / adjacency-consistent.
    #[error("invalid partial map: {0}")]
    InvalidPartial(String),
}

/// Default node budget for all searches.
pub const DEFAULT_BUDGET: u64 = 50_000_000;

/// A finite undirected graph with vertex colors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColoredGraph {
    adj: Vec<Vec<usize>>,
    colors: Vec<u32>,
}

impl ColoredGraph {
    /// Builds a graph on `n` vertices from an edge list and per-vertex colors.
    pub fn new(
        n: usize,
        edges: &[(usize, usize)],
        colors: Vec<u32>,
    ) -> Result<ColoredGraph, PermError> {
        if colors.len() != n {
            return Err(PermError::InvalidGraph(format!(
                "{} colors for {} vertices",
                colors.len(),
                n
            )));
        }
        let mut adj = vec![Vec::new(); n];
        let mut seen: HashSet<(usize, usize)> = HashSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(PermError::InvalidGraph(format!("edge ({a},{b}) out of range")));
            }
            if a == b {
                return Err(PermError::InvalidGraph(format!("loop at {a}")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                continue;
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(ColoredGraph { adj, colors })
    }

    /// Number of vertices.
    pub fn n(&self) -> usize {
        self.adj.len()
    }

    /// The vertex colors.
    pub fn colors(&self) -> &[u32] {
        &self.colors
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// Whether `a` and `b` are adjacent.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Number of edges.
    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|l| l.len()).sum::<usize>() / 2
    }

    /// A copy with each listed vertex given a fresh unique color (in order).
    pub fn with_individualized(&self, vs: &[usize]) -> ColoredGraph {
        let mut colors = self.colors.clone();
        let mut next = colors.iter().copied().max().unwrap_or(0) + 1;
        for &v in vs {
            colors[v] = next;
            next += 1;
        }
        ColoredGraph {
            adj: self.adj.clone(),
            colors,
        }
    }

    /// Whether `perm` (image vector) is a color-preserving automorphism.
    pub fn is_automorphism(&self, perm: &[usize]) -> bool {
        let n = self.n();
        if perm.len() != n {
            return false;
        }
        let mut seen = vec![false; n];
        for &img in perm {
            if img >= n || seen[img] {
                return false;
            }
            seen[img] = true;
        }
        for v in 0..n {
            if self.colors[perm[v]] != self.colors[v] {
                return false;
            }
            for &w in &self.adj[v] {
                if !self.adjacent(perm[v], perm[w]) {
                    return false;
                }
            }
        }
        true
    }

    /// The image graph under a relabeling `perm` (vertex v becomes perm[v]).
    pub fn relabeled(&self, perm: &[usize]) -> ColoredGraph {
        let n = self.n();
        let mut colors = vec![0u32; n];
        let mut edges = Vec::with_capacity(self.edge_count());
        for v in 0..n {
            colors[perm[v]] = self.colors[v];
            for &w in &self.adj[v] {
                if v < w {
                    edges.push((perm[v], perm[w]));
                }
            }
        }
        ColoredGraph::new(n, &edges, colors).expect("relabeling preserves validity")
    }
}

// ---------------------------------------------------------------------------
// Permutation helpers
// ---------------------------------------------------------------------------

/// Identity permutation of the given degree.
pub fn perm_identity(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Composition `p` then `q`: result[v] = q[p[v]].
pub fn perm_compose(p: &[usize], q: &[usize]) -> Vec<usize> {
    p.iter().map(|&x| q[x]).collect()
}

/// Inverse permutation.
pub fn perm_invert(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; p.len()];
    for (v, &img) in p.iter().enumerate() {
        inv[img] = v;
    }
    inv
}

fn perm_is_identity(p: &[usize]) -> bool {
    p.iter().enumerate().all(|(v, &img)| v == img)
}

/// Orbit of `start` under a set of permutations.
pub fn orbit(start: usize, gens: &[Vec<usize>]) -> HashSet<usize> {
    let mut seen: HashSet<usize> = HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        for g in gens {
            let w = g[v];
            if seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen
}

// ---------------------------------------------------------------------------
// Equitable refinement
// ---------------------------------------------------------------------------

/// Jointly refines two colorings (on possibly different graphs) to stability,
/// assigning aligned color ids from the sorted union of split keys. Returns
/// `None` when the color-class statistics diverge (no isomorphism can exist).
fn refine_joint(
    g1: &ColoredGraph,
    c1: &[u32],
    g2: &ColoredGraph,
    c2: &[u32],
) -> Option<(Vec<u32>, Vec<u32>)> {
    fn splitmix64(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^ (x >> 31)
    }
    // Key = hash combining own color, the neighbor color multiset, and the
    // multiset of (color, common-neighbor count) pairs over two-step
    // neighbors. The two-step component is what separates biregular
    // incidence graphs, where plain neighbor counting is equitable
    // immediately and splits nothing. Multisets enter through commutative
    // sums of per-element hashes, so no sorting or per-vertex allocation is
    // needed; a 64-bit collision would only merge cells, which keeps every
    // search correct (just potentially slower), and is vanishingly unlikely.
    fn vertex_keys(g: &ColoredGraph, c: &[u32], cnt: &mut [u32], keys: &mut Vec<u64>) {
        keys.clear();
        let mut touched: Vec<usize> = Vec::new();
        for v in 0..g.n() {
            let mut nb_sum = 0u64;
            for &w in g.neighbors(v) {
                nb_sum = nb_sum.wrapping_add(splitmix64(u64::from(c[w])));
                for &x in g.neighbors(w) {
                    if cnt[x] == 0 {
                        touched.push(x);
                    }
                    cnt[x] += 1;
                }
            }
            let mut d2_sum = 0u64;
            for x in touched.drain(..) {
                d2_sum = d2_sum
                    .wrapping_add(splitmix64((u64::from(c[x]) << 32) | u64::from(cnt[x])));
                cnt[x] = 0;
            }
            keys.push(splitmix64(
                u64::from(c[v]) ^ nb_sum.rotate_left(17) ^ d2_sum.rotate_left(43),
            ));
        }
    }
    let mut a = c1.to_vec();
    let mut b = c2.to_vec();
    let mut cnt1 = vec![0u32; g1.n()];
    let mut cnt2 = vec![0u32; g2.n()];
    let mut keys_a: Vec<u64> = Vec::with_capacity(g1.n());
    let mut keys_b: Vec<u64> = Vec::with_capacity(g2.n());
    let mut distinct = 0usize;
    loop {
        vertex_keys(g1, &a, &mut cnt1, &mut keys_a);
        vertex_keys(g2, &b, &mut cnt2, &mut keys_b);
        let mut table: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
        for &k in &keys_a {
            table.entry(k).or_insert((0, 0)).0 += 1;
        }
        for &k in &keys_b {
            table.entry(k).or_insert((0, 0)).1 += 1;
        }
        if table.values().any(|&(x, y)| x != y) {
            return None;
        }
        for (i, ent) in table.values_mut().enumerate() {
            ent.0 = i;
        }
        for (v, k) in keys_a.iter().enumerate() {
            a[v] = table[k].0 as u32;
        }
        for (v, k) in keys_b.iter().enumerate() {
            b[v] = table[k].0 as u32;
        }
        if table.len() == distinct {
            return Some((a, b));
        }
        distinct = table.len();
    }
}

/// Canonically refines a single coloring to stability.
fn refine(g: &ColoredGraph, c: &[u32]) -> Vec<u32> {
    refine_joint(g, c, g, c)
        .expect("a coloring always matches itself")
        .0
}

/// Cells of a coloring: color id → sorted member list.
fn cells(c: &[u32]) -> BTreeMap<u32, Vec<usize>> {
    let mut m: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (v, &col) in c.iter().enumerate() {
        m.entry(col).or_default().push(v);
    }
    m
}

/// Deterministic target cell: largest non-singleton, ties by lowest color
/// id. Individualizing in the largest cell drives refinement to a discrete
/// partition fastest on the plateau-prone incidence graphs this engine is
/// used for; small-cell targeting stalls there with no splitting progress.
fn target_cell(c: &[u32]) -> Option<(u32, Vec<usize>)> {
    cells(c)
        .into_iter()
        .filter(|(_, vs)| vs.len() > 1)
        .max_by_key(|(col, vs)| (vs.len(), u32::MAX - *col))
}

fn individualize(c: &[u32], v: usize) -> Vec<u32> {
    let mut out = c.to_vec();
    let fresh = c.iter().copied().max().unwrap_or(0) + 1;
    out[v] = fresh;
    out
}

struct Budget {
    limit: u64,
    used: u64,
}

impl Budget {
    fn new(limit: u64) -> Budget {
        Budget { limit, used: 0 }
    }

    fn spend(&mut self) -> Result<(), PermError> {
        self.used += 1;
        if self.used > self.limit {
            Err(PermError::BudgetExceeded { budget: self.limit })
        } else {
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Isomorphism extension search
// ---------------------------------------------------------------------------

/// Searches for an isomorphism g1 → g2 extending the individualized colorings.
fn find_mapping(
    g1: &ColoredGraph,
    c1: &[u32],
    g2: &ColoredGraph,
    c2: &[u32],
    budget: &mut Budget,
) -> Result<Option<Vec<usize>>, PermError> {
    budget.spend()?;
    let Some((a, b)) = refine_joint(g1, c1, g2, c2) else {
        return Ok(None);
    };
    let cells_a = cells(&a);
    if cells_a.values().all(|vs| vs.len() == 1) {
        // Both discrete with matching color statistics: read off the bijection.
        let cells_b = cells(&b);
        let mut perm = vec![usize::MAX; g1.n()];
        for (col, vs) in &cells_a {
            perm[vs[0]] = cells_b[col][0];
        }
        // Refinement is not complete; validate adjacency explicitly.
        for v in 0..g1.n() {
            for &w in g1.neighbors(v) {
                if !g2.adjacent(perm[v], perm[w]) {
                    return Ok(None);
                }
            }
            if g1.neighbors(v).len() != g2.neighbors(perm[v]).len() {
                return Ok(None);
            }
        }
        return Ok(Some(perm));
    }
    let (col, cell_a) = target_cell(&a).expect("non-discrete coloring has a target cell");
    let v = cell_a[0];
    let cell_b = cells(&b).remove(&col).expect("aligned colorings share cells");
    for &w in &cell_b {
        let ca = individualize(&a, v);
        let cb = individualize(&b, w);
        if let Some(p) = find_mapping(g1, &ca, g2, &cb, budget)? {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Automorphism groups
// ---------------------------------------------------------------------------

/// A permutation group given by generators with an exact order, produced by
/// the orbit–stabilizer recursion of the automorphism search.
#[derive(Debug, Clone)]
pub struct PermGroup {
    degree: usize,
    generators: Vec<Vec<usize>>,
    order: BigInt,
    base: Vec<usize>,
    fundamental_orbits: Vec<usize>,
}

impl PermGroup {
    /// The trivial group of the given degree.
    pub fn trivial(degree: usize) -> PermGroup {
        PermGroup {
            degree,
            generators: Vec::new(),
            order: BigInt::one(),
            base: Vec::new(),
            fundamental_orbits: Vec::new(),
        }
    }

    /// Degree of the action.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Generating permutations (image vectors).
    pub fn generators(&self) -> &[Vec<usize>] {
        &self.generators
    }

    /// Exact group order.
    pub fn order(&self) -> &BigInt {
        &self.order
    }

    /// Base points of the orbit–stabilizer recursion.
    pub fn base(&self) -> &[usize] {
        &self.base
    }

    /// Orbit lengths of the base points in the successive stabilizers; their
    /// product is the group order.
    pub fn fundamental_orbits(&self) -> &[usize] {
        &self.fundamental_orbits
    }

    /// Orbit of a point under the whole group.
    pub fn orbit_of(&self, v: usize) -> HashSet<usize> {
        orbit(v, &self.generators)
    }

    /// Generators rendered in disjoint cycle notation (for external checks).
    pub fn generators_cycle_notation(&self) -> Vec<String> {
        self.generators
            .iter()
            .map(|g| {
                let mut seen = vec![false; self.degree];
                let mut out = String::new();
                for start in 0..self.degree {
                    if seen[start] || g[start] == start {
                        seen[start] = true;
                        continue;
                    }
                    out.push('(');
                    let mut v = start;
                    loop {
                        seen[v] = true;
                        out.push_str(&v.to_string());
                        v = g[v];
                        if v == start {
                            break;
                        }
                        out.push(' ');
                    }
                    out.push(')');
                }
                if out.is_empty() {
                    out.push_str("()");
                }
                out
            })
            .collect()
    }
}

/// Color-preserving automorphism group with the default budget.
pub fn automorphism_group(g: &ColoredGraph) -> Result<PermGroup, PermError> {
    automorphism_group_budget(g, DEFAULT_BUDGET)
}

/// Color-preserving automorphism group with an explicit node budget.
pub fn automorphism_group_budget(g: &ColoredGraph, budget: u64) -> Result<PermGroup, PermError> {
    let mut budget = Budget::new(budget);
    let (generators, order, base, fundamental_orbits) =
        aut_search(g, g.colors(), &mut budget)?;
    for p in &generators {
        debug_assert!(g.is_automorphism(p));
    }
    Ok(PermGroup {
        degree: g.n(),
        generators,
        order,
        base,
        fundamental_orbits,
    })
}

/// Orbit–stabilizer recursion: individualize the first vertex of the target
/// cell, compute its stabilizer recursively, then search for coset
/// representatives mapping it to each other cell vertex (orbit-pruned).
fn aut_search(
    g: &ColoredGraph,
    colors: &[u32],
    budget: &mut Budget,
) -> Result<(Vec<Vec<usize>>, BigInt, Vec<usize>, Vec<usize>), PermError> {
    budget.spend()?;
    let c = refine(g, colors);
    let Some((_, cell)) = target_cell(&c) else {
        return Ok((Vec::new(), BigInt::one(), Vec::new(), Vec::new()));
    };
    let v = cell[0];
    let (mut gens, sub_order, mut base, mut orbits) =
        aut_search(g, &individualize(&c, v), budget)?;
    for &w in &cell[1..] {
        if orbit(v, &gens).contains(&w) {
            continue;
        }
        let ca = individualize(&c, v);
        let cb = individualize(&c, w);
        if let Some(p) = find_mapping(g, &ca, g, &cb, budget)? {
            gens.push(p);
        }
    }
    let orbit_len = orbit(v, &gens).len();
    base.insert(0, v);
    orbits.insert(0, orbit_len);
    Ok((gens, sub_order * orbit_len, base, orbits))
}

/// Whether some color-preserving automorphism of `g` extends the partial map
/// (given as `(from, to)` pairs).
pub fn extends_to_automorphism(
    g: &ColoredGraph,
    partial: &[(usize, usize)],
) -> Result<bool, PermError> {
    extends_to_automorphism_budget(g, partial, DEFAULT_BUDGET)
}

/// [`extends_to_automorphism`] with an explicit node budget.
pub fn extends_to_automorphism_budget(
    g: &ColoredGraph,
    partial: &[(usize, usize)],
    budget: u64,
) -> Result<bool, PermError> {
    let n = g.n();
    let mut dom: HashMap<usize, usize> = HashMap::new();
    for &(a, b) in partial {
        if a >= n || b >= n {
            return Err(PermError::InvalidPartial(format!("pair ({a},{b}) out of range")));
        }
        if g.colors()[a] != g.colors()[b] {
            return Err(PermError::InvalidPartial(format!(
                "pair ({a},{b}) mixes colors"
            )));
        }
        if let Some(&prev) = dom.get(&a) {
            if prev != b {
                return Err(PermError::InvalidPartial(format!("vertex {a} mapped twice")));
            }
        }
        dom.insert(a, b);
    }
    // Adjacency consistency on the domain.
    let pairs: Vec<(usize, usize)> = dom.iter().map(|(&a, &b)| (a, b)).collect();
    for &(a, b) in &pairs {
        for &(a2, b2) in &pairs {
            if g.adjacent(a, a2) != g.adjacent(b, b2) {
                return Err(PermError::InvalidPartial(format!(
                    "pairs ({a},{b}) and ({a2},{b2}) break adjacency"
                )));
            }
        }
    }
    let mut sorted = pairs;
    sorted.sort_unstable();
    let froms: Vec<usize> = sorted.iter().map(|&(a, _)| a).collect();
    let tos: Vec<usize> = sorted.iter().map(|&(_, b)| b).collect();
    let ca = g.with_individualized(&froms);
    let cb = g.with_individualized(&tos);
    let mut budget = Budget::new(budget);
    Ok(find_mapping(g, ca.colors(), g, cb.colors(), &mut budget)?.is_some())
}

// ---------------------------------------------------------------------------
// Canonical forms
// ---------------------------------------------------------------------------

/// An isomorphism-invariant certificate: two colored graphs have equal
/// certificates if and only if they are isomorphic by a color-preserving map
/// (colors compared literally).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Certificate(Vec<u64>);

impl Certificate {
    /// The raw encoded form.
    pub fn data(&self) -> &[u64] {
        &self.0
    }
}

/// Canonical form with the default budget.
pub fn canonical_form(g: &ColoredGraph) -> Result<Certificate, PermError> {
    canonical_form_budget(g, DEFAULT_BUDGET)
}

/// Canonical form with an explicit node budget. The automorphism group is
/// computed first; the leaf search then explores exactly one branch per
/// orbit of the current path stabilizer, so symmetric graphs stay cheap.
pub fn canonical_form_budget(g: &ColoredGraph, budget: u64) -> Result<Certificate, PermError> {
    let group = automorphism_group_budget(g, budget)?;
    let mut budget = Budget::new(budget);
    let mut state = CanonState { best: None };
    canon_search(
        g,
        g.colors(),
        group.generators().to_vec(),
        &mut state,
        &mut budget,
    )?;
    Ok(Certificate(state.best.expect("at least one leaf exists")))
}

struct CanonState {
    best: Option<Vec<u64>>,
}

fn canon_search(
    g: &ColoredGraph,
    colors: &[u32],
    stab_gens: Vec<Vec<usize>>,
    state: &mut CanonState,
    budget: &mut Budget,
) -> Result<(), PermError> {
    budget.spend()?;
    let c = refine(g, colors);
    let cell_map = cells(&c);
    if cell_map.values().all(|vs| vs.len() == 1) {
        // Discrete: vertex v gets label = rank of its refined color.
        let mut labeling = vec![0usize; g.n()];
        for (rank, (_, vs)) in cell_map.iter().enumerate() {
            labeling[vs[0]] = rank;
        }
        let cert = encode(g, &labeling);
        if state.best.as_ref().is_none_or(|best| cert < *best) {
            state.best = Some(cert);
        }
        return Ok(());
    }
    let (_, cell) = target_cell(&c).expect("non-discrete");
    // Branches whose individualized vertices lie in one orbit of the
    // stabilizer of the vertices individualized so far produce equal leaf
    // certificates, so one representative per orbit suffices.
    let mut covered: HashSet<usize> = HashSet::new();
    for &w in &cell {
        if covered.contains(&w) {
            continue;
        }
        covered.extend(orbit(w, &stab_gens));
        let child_gens = if stab_gens.is_empty() {
            Vec::new()
        } else {
            StabChain::build(g.n(), &stab_gens, &[w]).stabilizer_generators(1)
        };
        canon_search(g, &individualize(&c, w), child_gens, state, budget)?;
    }
    Ok(())
}

/// Leaf encoding: vertex count, original colors in label order, sorted edges.
fn encode(g: &ColoredGraph, labeling: &[usize]) -> Vec<u64> {
    let n = g.n();
    let mut out = Vec::with_capacity(1 + n + 2 * g.edge_count());
    out.push(n as u64);
    let inv = perm_invert(labeling);
    for &v in &inv {
        out.push(g.colors()[v] as u64);
    }
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(g.edge_count());
    for v in 0..n {
        for &w in g.neighbors(v) {
            let (a, b) = (labeling[v].min(labeling[w]), labeling[v].max(labeling[w]));
            if labeling[v] < labeling[w] {
                edges.push((a, b));
            }
        }
    }
    edges.sort_unstable();
    for (a, b) in edges {
        out.push(a as u64);
        out.push(b as u64);
    }
    out
}

// ---------------------------------------------------------------------------
// Stabilizer chains (deterministic Schreier–Sims)
// ---------------------------------------------------------------------------

/// A stabilizer chain with a prescribed base prefix: level i holds the orbit
/// of its base point under the subgroup fixing the earlier base points.
#[derive(Debug, Clone)]
pub struct StabChain {
    degree: usize,
    base: Vec<usize>,
    strong_gens: Vec<Vec<usize>>,
    /// Per level: orbit in discovery order and a Schreier vector
    /// point → (strong generator index, parent point).
    orbits: Vec<(Vec<usize>, HashMap<usize, (usize, usize)>)>,
}

impl StabChain {
    /// Builds a chain for the group generated by `gens`, with the base forced
    /// to start with `prefix` (in order).
    pub fn build(degree: usize, gens: &[Vec<usize>], prefix: &[usize]) -> StabChain {
        let mut chain = StabChain {
            degree,
            base: prefix.to_vec(),
            strong_gens: Vec::new(),
            orbits: vec![(Vec::new(), HashMap::new()); prefix.len()],
        };
        for g in gens {
            if !perm_is_identity(g) {
                chain.strong_gens.push(g.clone());
            }
        }
        chain.close();
        chain
    }

    /// The base points.
    pub fn base(&self) -> &[usize] {
        &self.base
    }

    /// Exact group order: product of the fundamental orbit lengths.
    pub fn order(&self) -> BigInt {
        let mut o = BigInt::one();
        for (orb, _) in &self.orbits {
            o *= orb.len().max(1);
        }
        o
    }

    /// Order of the stabilizer of the first `k` base points (pointwise).
    pub fn stabilizer_order(&self, k: usize) -> BigInt {
        let mut o = BigInt::one();
        for (orb, _) in self.orbits.iter().skip(k) {
            o *= orb.len().max(1);
        }
        o
    }

    /// Strong generators fixing the first `k` base points.
    pub fn stabilizer_generators(&self, k: usize) -> Vec<Vec<usize>> {
        self.strong_gens
            .iter()
            .filter(|g| self.base[..k.min(self.base.len())].iter().all(|&b| g[b] == b))
            .cloned()
            .collect()
    }

    /// Generators fixing the first `i` base points (the level-i group).
    fn level_gens(&self, i: usize) -> Vec<usize> {
        (0..self.strong_gens.len())
            .filter(|&gi| self.base[..i].iter().all(|&b| self.strong_gens[gi][b] == b))
            .collect()
    }

    fn recompute_orbit(&mut self, i: usize) {
        let gens = self.level_gens(i);
        let point = self.base[i];
        let mut order: Vec<usize> = vec![point];
        let mut sv: HashMap<usize, (usize, usize)> = HashMap::new();
        let mut seen: HashSet<usize> = HashSet::from([point]);
        let mut head = 0;
        while head < order.len() {
            let p = order[head];
            head += 1;
            for &gi in &gens {
                let q = self.strong_gens[gi][p];
                if seen.insert(q) {
                    sv.insert(q, (gi, p));
                    order.push(q);
                }
            }
        }
        self.orbits[i] = (order, sv);
    }

    /// Transversal element u with u[base[i]] = p, from the Schreier vector.
    fn transversal(&self, i: usize, p: usize) -> Vec<usize> {
        let mut path: Vec<usize> = Vec::new();
        let mut cur = p;
        while cur != self.base[i] {
            let &(gi, parent) = self.orbits[i].1.get(&cur).expect("point in orbit");
            path.push(gi);
            cur = parent;
        }
        let mut u = perm_identity(self.degree);
        for &gi in path.iter().rev() {
            u = perm_compose(&u, &self.strong_gens[gi]);
        }
        u
    }

    /// Sifts `g` through levels starting at `start`; returns the residue and
    /// the level where sifting stopped.
    fn strip(&self, mut g: Vec<usize>, start: usize) -> (Vec<usize>, usize) {
        let mut i = start;
        while i < self.base.len() {
            let img = g[self.base[i]];
            if img == self.base[i] {
                i += 1;
                continue;
            }
            if !self.orbits[i].0.contains(&img) {
                return (g, i);
            }
            let u = self.transversal(i, img);
            g = perm_compose(&g, &perm_invert(&u));
            if g[self.base[i]] != self.base[i] {
                // Composition convention check: must now fix the base point.
                unreachable!("transversal must undo the base-point image");
            }
            i += 1;
        }
        (g, self.base.len())
    }

    /// Runs Schreier generator processing to closure.
    fn close(&mut self) {
        // Seed extra base points so every strong generator moves one.
        loop {
            for i in 0..self.base.len() {
                self.recompute_orbit(i);
            }
            let mut changed = false;
            // A generator fixing the whole base would be invisible: extend.
            'seed: for g in &self.strong_gens {
                if self.base.iter().all(|&b| g[b] == b) {
                    for v in 0..self.degree {
                        if g[v] != v {
                            self.base.push(v);
                            self.orbits.push((Vec::new(), HashMap::new()));
                            changed = true;
                            break 'seed;
                        }
                    }
                }
            }
            if changed {
                continue;
            }
            let mut additions: Vec<(usize, Vec<usize>)> = Vec::new();
            'levels: for i in 0..self.base.len() {
                let gens = self.level_gens(i);
                let orbit_pts = self.orbits[i].0.clone();
                for &p in &orbit_pts {
                    let u = self.transversal(i, p);
                    for &gi in &gens {
                        let s = &self.strong_gens[gi];
                        let w = perm_compose(&u, s);
                        let img = w[self.base[i]];
                        let r = self.transversal(i, img);
                        let h = perm_compose(&w, &perm_invert(&r));
                        if perm_is_identity(&h) {
                            continue;
                        }
                        let (res, j) = self.strip(h, i + 1);
                        if !perm_is_identity(&res) {
                            additions.push((j, res));
                            break 'levels;
                        }
                    }
                }
            }
            if additions.is_empty() {
                break;
            }
            for (j, res) in additions {
                if j == self.base.len() {
                    let moved = (0..self.degree).find(|&v| res[v] != v).expect("non-identity");
                    self.base.push(moved);
                    self.orbits.push((Vec::new(), HashMap::new()));
                }
                self.strong_gens.push(res);
                changed = true;
            }
            let _ = changed;
        }
    }
}

/// Pointwise stabilizer of `fixed` by both routes — recoloring the fixed
/// vertices and re-running the search, and a stabilizer chain with the fixed
/// vertices as base prefix — asserting that the two orders agree.
pub fn pointwise_stabilizer(
    g: &ColoredGraph,
    fixed: &[usize],
) -> Result<PermGroup, PermError> {
    let graph_route = pointwise_stabilizer_graph(g, fixed)?;
    let full = automorphism_group(g)?;
    let chain_order = pointwise_stabilizer_chain_order(&full, fixed);
    assert_eq!(
        graph_route.order(),
        &chain_order,
        "stabilizer orders disagree between the recoloring and chain routes"
    );
    Ok(graph_route)
}

/// Pointwise stabilizer by recoloring: each fixed vertex gets a unique color.
pub fn pointwise_stabilizer_graph(
    g: &ColoredGraph,
    fixed: &[usize],
) -> Result<PermGroup, PermError> {
    let recolored = g.with_individualized(fixed);
    automorphism_group(&recolored)
}

/// Pointwise stabilizer order via a Schreier–Sims chain whose base starts with
/// the fixed vertices.
pub fn pointwise_stabilizer_chain_order(group: &PermGroup, fixed: &[usize]) -> BigInt {
    let chain = StabChain::build(group.degree(), group.generators(), fixed);
    chain.stabilizer_order(fixed.len())
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use rand::rngs::StdRng;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    fn cycle_graph(n: usize) -> ColoredGraph {
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        ColoredGraph::new(n, &edges, vec![0; n]).unwrap()
    }

    /// Point i and line j of the plane of a difference set D are incident
    /// when i + j ∈ D (mod δ). Vertices: points 0..δ, lines δ..2δ.
    fn plane_graph(d: &[u64], delta: u64, bipartite_colors: bool) -> ColoredGraph {
        let n = (2 * delta) as usize;
        let mut edges = Vec::new();
        for i in 0..delta {
            for j in 0..delta {
                if d.contains(&((i + j) % delta)) {
                    edges.push((i as usize, (delta + j) as usize));
                }
            }
        }
        let colors: Vec<u32> = (0..n)
            .map(|v| {
                if bipartite_colors && v >= delta as usize {
                    1
                } else {
                    0
                }
            })
            .collect();
        ColoredGraph::new(n, &edges, colors).unwrap()
    }

    #[test]
    fn five_cycle_is_dihedral() {
        let g = cycle_graph(5);
        let grp = automorphism_group(&g).unwrap();
        assert_eq!(grp.order(), &BigInt::from(10));
    }

    #[test]
    fn distinct_colors_force_rigidity() {
        let g = ColoredGraph::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], vec![0, 1, 2, 3]).unwrap();
        let grp = automorphism_group(&g).unwrap();
        assert_eq!(grp.order(), &BigInt::one());
        assert!(grp.generators().is_empty());
    }

    #[test]
    fn fano_plane_collineations() {
        let d = [0u64, 1, 3];
        // Bipartition colored: the collineation group PGL₃(F₂), order 168.
        let g = plane_graph(&d, 7, true);
        let grp = automorphism_group(&g).unwrap();
        assert_eq!(grp.order(), &BigInt::from(168));
        // Colors identified: dualities double the order.
        let g = plane_graph(&d, 7, false);
        let grp = automorphism_group(&g).unwrap();
        assert_eq!(grp.order(), &BigInt::from(336));
    }

    #[test]
    fn brute_force_agreement_on_small_graphs() {
        fn brute_force(g: &ColoredGraph) -> u64 {
            let n = g.n();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut count = 0u64;
            // Heap's algorithm over all permutations.
            fn heap(k: usize, perm: &mut Vec<usize>, g: &ColoredGraph, count: &mut u64) {
                if k == 1 {
                    if g.is_automorphism(perm) {
                        *count += 1;
                    }
                    return;
                }
                for i in 0..k {
                    heap(k - 1, perm, g, count);
                    if k % 2 == 0 {
                        perm.swap(i, k - 1);
                    } else {
                        perm.swap(0, k - 1);
                    }
                }
            }
            heap(n, &mut perm, g, &mut count);
            count
        }

        let mut rng = StdRng::seed_from_u64(42);
        for trial in 0..40 {
            let n = rng.gen_range(1..=7);
            let mut edges = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    if rng.gen_bool(0.4) {
                        edges.push((a, b));
                    }
                }
            }
            let ncolors = rng.gen_range(1..=2);
            let colors: Vec<u32> = (0..n).map(|_| rng.gen_range(0..ncolors)).collect();
            let g = ColoredGraph::new(n, &edges, colors).unwrap();
            let fast = automorphism_group(&g).unwrap();
            let slow = brute_force(&g);
            assert_eq!(fast.order(), &BigInt::from(slow), "trial {trial}: {g:?}");
        }
    }

    #[test]
    fn order_matches_stabilizer_chain() {
        for g in [
            cycle_graph(6),
            plane_graph(&[0, 1, 3], 7, true),
            cycle_graph(9),
        ] {
            let grp = automorphism_group(&g).unwrap();
            let chain = StabChain::build(grp.degree(), grp.generators(), &[]);
            assert_eq!(&chain.order(), grp.order());
            let product: BigInt = grp
                .fundamental_orbits()
                .iter()
                .fold(BigInt::one(), |acc, &x| acc * x);
            assert_eq!(&product, grp.order());
        }
    }

    #[test]
    fn canonical_form_survives_relabeling() {
        let mut rng = StdRng::seed_from_u64(5);
        for g in [
            cycle_graph(8),
            plane_graph(&[0, 1, 3], 7, true),
            ColoredGraph::new(5, &[(0, 1), (1, 2), (0, 2), (3, 4)], vec![0, 0, 1, 0, 0]).unwrap(),
        ] {
            let cert = canonical_form(&g).unwrap();
            for _ in 0..100 {
                let mut perm: Vec<usize> = (0..g.n()).collect();
                perm.shuffle(&mut rng);
                let relabeled = g.relabeled(&perm);
                assert_eq!(canonical_form(&relabeled).unwrap(), cert);
            }
        }
    }

    #[test]
    fn canonical_form_separates_nonisomorphic_graphs() {
        // C₆ vs two disjoint triangles: equal degree sequences.
        let c6 = cycle_graph(6);
        let two_triangles = ColoredGraph::new(
            6,
            &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)],
            vec![0; 6],
        )
        .unwrap();
        assert_ne!(
            canonical_form(&c6).unwrap(),
            canonical_form(&two_triangles).unwrap()
        );
    }

    #[test]
    fn pointwise_stabilizer_extremes() {
        let g = plane_graph(&[0, 1, 3], 7, true);
        let all: Vec<usize> = (0..g.n()).collect();
        let fixed_all = pointwise_stabilizer(&g, &all).unwrap();
        assert_eq!(fixed_all.order(), &BigInt::one());
        let fixed_none = pointwise_stabilizer(&g, &[]).unwrap();
        assert_eq!(fixed_none.order(), &BigInt::from(168));
    }

    #[test]
    fn pointwise_stabilizer_routes_agree_on_random_graphs() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(4..=8);
            let mut edges = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    if rng.gen_bool(0.5) {
                        edges.push((a, b));
                    }
                }
            }
            let g = ColoredGraph::new(n, &edges, vec![0; n]).unwrap();
            let k = rng.gen_range(0..=n.min(3));
            let fixed: Vec<usize> = (0..k).collect();
            // pointwise_stabilizer asserts the two routes agree internally.
            let stab = pointwise_stabilizer(&g, &fixed).unwrap();
            for p in stab.generators() {
                for &f in &fixed {
                    assert_eq!(p[f], f);
                }
            }
        }
    }

    #[test]
    fn fano_stabilizer_of_a_flag() {
        // |PGL₃(F₂)| = 168 acts regularly on incident point-line pairs
        // (21 flags × stabilizer 8).
        let g = plane_graph(&[0, 1, 3], 7, true);
        let point = 0usize;
        let line = g.neighbors(point)[0];
        let stab = pointwise_stabilizer(&g, &[point, line]).unwrap();
        assert_eq!(stab.order(), &BigInt::from(8));
    }

    #[test]
    fn partial_map_extension() {
        let g = cycle_graph(6);
        assert!(extends_to_automorphism(&g, &[(0, 0), (1, 1)]).unwrap());
        assert!(extends_to_automorphism(&g, &[(0, 3)]).unwrap());
        // On C₇, fixing 0 only allows 2 ↦ 2 (identity) or 2 ↦ 5 (reflection).
        let c7 = cycle_graph(7);
        assert!(!extends_to_automorphism(&c7, &[(0, 0), (2, 3)]).unwrap());
        // A path with distinct endpoint degrees.
        let p = ColoredGraph::new(3, &[(0, 1), (1, 2)], vec![0; 3]).unwrap();
        assert!(extends_to_automorphism(&p, &[(0, 2)]).unwrap());
        // Mapping an endpoint to the middle vertex fails on degrees.
        assert!(!extends_to_automorphism(&p, &[(0, 1)]).unwrap());
        // Adjacency-inconsistent pairs are rejected outright.
        assert!(matches!(
            extends_to_automorphism(&p, &[(0, 0), (1, 2)]),
            Err(PermError::InvalidPartial(_))
        ));
    }

    #[test]
    fn budget_is_enforced() {
        let g = plane_graph(&[0, 1, 3], 7, false);
        assert!(matches!(
            automorphism_group_budget(&g, 3),
            Err(PermError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn invalid_graphs_rejected() {
        assert!(ColoredGraph::new(2, &[(0, 0)], vec![0, 0]).is_err());
        assert!(ColoredGraph::new(2, &[(0, 5)], vec![0, 0]).is_err());
        assert!(ColoredGraph::new(3, &[], vec![0, 0]).is_err());
    }
}
