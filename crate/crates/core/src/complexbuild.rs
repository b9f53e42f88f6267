//! Local geometry of the building attached to a difference matrix: geodesic
//! edge paths, Hjelmslev incidence planes of each level, splitting counts for
//! the level-2 → level-1 projection, and radius-r combinatorial balls.
//!
//! Conventions. All constructions are carried out "around a vertex of type
//! `center_type`"; this is implemented by cyclically rotating the columns of
//! the matrix so that the center always has type 0 in the working frame.
//! Vertices near the center are named by edge paths: a path of length k is a
//! sequence of steps, each step moving from a vertex of type t to a neighbor
//! of type t+1 (forward) or t-1 (backward) and carrying an exponent in Z/δZ.
//! A forward-cycling path b⁰b¹…b^{k-1} is geodesic when b^j ∉ D_{j mod 3} for
//! j ≥ 1, a backward-cycling path a⁰a¹…a^{k-1} when -a^j ∉ D_{-j mod 3}; the
//! level-ℓ plane has the endpoints of the forward paths as points and the
//! endpoints of the backward paths as lines.

use crate::diffmats::DiffMatrix;
use crate::permgraph::{ColoredGraph, PermError};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

/// Errors from plane/ball construction.
#[derive(Debug, Error)]
pub enum ComplexError {
    /// Levels start at 1.
    #[error("level must be at least 1, got {0}")]
    InvalidLevel(usize),
    /// Center types are 0, 1, 2.
    #[error("center type must be 0, 1 or 2, got {0}")]
    InvalidCenter(usize),
    /// Radii start at 1 and are capped to keep the path universe enumerable.
    #[error("radius {0} outside the supported range 1..={1}")]
    InvalidRadius(usize, usize),
    /// A path description violates its invariants.
    #[error("invalid path: {0}")]
    InvalidPath(String),
    /// Point/line paths passed to an incidence test must have equal length.
    #[error("point path has length {0} but line path has length {1}")]
    LengthMismatch(usize, usize),
    /// A search exceeded its node budget.
    #[error("search budget of {budget} nodes exceeded")]
    BudgetExceeded {
        /// The budget that was exhausted.
        budget: u64,
    },
    /// The assembled complex violated one of its structural invariants.
    #[error("ball construction inconsistency: {0}")]
    Inconsistent(String),
    /// Graph-engine failure while validating links.
    #[error(transparent)]
    Perm(#[from] PermError),
}

/// Node cap for the splitting counter.
pub const SPLITTING_NODE_CAP: u64 = 1_000_000_000;

/// Largest supported ball radius (the path universe grows like (2δ)^{r+1}).
pub const MAX_RADIUS: usize = 3;

/// Travel direction of an edge path: forward cycles types 0,1,2,0,…;
/// backward cycles 0,2,1,0,….
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathDirection {
    /// Types increase by one per step.
    Forward,
    /// Types decrease by one per step.
    Backward,
}

/// A cycling edge path from the center, described by its exponent sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GeodesicPath {
    /// Cycling direction.
    pub direction: PathDirection,
    /// Exponents e⁰…e^{ℓ-1} in Z/δZ, one per step.
    pub exps: Vec<u64>,
}

/// Working frame: the matrix with columns rotated so the center has type 0.
struct Frame {
    q: u64,
    delta: u64,
    rows: Vec<[u64; 3]>,
    /// `in_col[j][x]` — whether x occurs in column j.
    in_col: [Vec<bool>; 3],
    /// `row_by_col[j][x]` — the unique row whose column-j entry is x.
    row_by_col: [Vec<Option<usize>>; 3],
}

impl Frame {
    fn new(e: &DiffMatrix, center_type: usize) -> Result<Frame, ComplexError> {
        if center_type > 2 {
            return Err(ComplexError::InvalidCenter(center_type));
        }
        let delta = e.delta();
        let rows: Vec<[u64; 3]> = e
            .rows()
            .iter()
            .map(|r| [r[center_type % 3], r[(center_type + 1) % 3], r[(center_type + 2) % 3]])
            .collect();
        let mut in_col = [
            vec![false; delta as usize],
            vec![false; delta as usize],
            vec![false; delta as usize],
        ];
        let mut row_by_col = [
            vec![None; delta as usize],
            vec![None; delta as usize],
            vec![None; delta as usize],
        ];
        for (i, r) in rows.iter().enumerate() {
            for j in 0..3 {
                in_col[j][r[j] as usize] = true;
                row_by_col[j][r[j] as usize] = Some(i);
            }
        }
        Ok(Frame {
            q: e.q(),
            delta,
            rows,
            in_col,
            row_by_col,
        })
    }

    fn sub(&self, a: u64, b: u64) -> u64 {
        (a + self.delta - b % self.delta) % self.delta
    }

    fn neg(&self, a: u64) -> u64 {
        (self.delta - a % self.delta) % self.delta
    }

    /// Allowed step exponents at position k ≥ 1 of a cycling path.
    fn allowed(&self, direction: PathDirection, k: usize) -> Vec<u64> {
        (0..self.delta)
            .filter(|&x| self.step_allowed(direction, k, x))
            .collect()
    }

    fn step_allowed(&self, direction: PathDirection, k: usize, x: u64) -> bool {
        match direction {
            PathDirection::Forward => !self.in_col[k % 3][x as usize],
            PathDirection::Backward => {
                !self.in_col[(3 - (k % 3)) % 3][self.neg(x) as usize]
            }
        }
    }
}

/// Whether `path` satisfies the geodesic step conditions around a center of
/// the given type (the first exponent is always free).
pub fn is_geodesic(
    e: &DiffMatrix,
    center_type: usize,
    path: &GeodesicPath,
) -> Result<bool, ComplexError> {
    let frame = Frame::new(e, center_type)?;
    if path.exps.is_empty() {
        return Err(ComplexError::InvalidPath("empty exponent sequence".into()));
    }
    if path.exps.iter().any(|&x| x >= frame.delta) {
        return Err(ComplexError::InvalidPath("exponent out of range".into()));
    }
    Ok(path
        .exps
        .iter()
        .enumerate()
        .skip(1)
        .all(|(k, &x)| frame.step_allowed(path.direction, k, x)))
}

// ---------------------------------------------------------------------------
// Closed-form incidence for levels 1..=3.
// ---------------------------------------------------------------------------

/// Level ≤ 3 incidence between a forward path `b` and a backward path `a`,
/// via the explicit row conditions: a row e with e₀ = b⁰ - a⁰; rows f, g, h
/// with b¹ - e₁ + f₁ - g₁ = 0 and a¹ + e₂ - f₂ + h₂ = 0; rows k, l, m, n, o
/// with b² - g₂ + k₂ - m₂ = 0, a² + h₁ - l₁ + n₁ = 0 and
/// -f₀ + g₀ + h₀ - k₀ - l₀ + o₀ = 0.
fn incidence_closed(frame: &Frame, b: &[u64], a: &[u64]) -> bool {
    let level = b.len();
    debug_assert!(level >= 1 && level <= 3 && a.len() == level);
    let er = match frame.row_by_col[0][frame.sub(b[0], a[0]) as usize] {
        Some(i) => frame.rows[i],
        None => return false,
    };
    if level == 1 {
        return true;
    }
    for fr in &frame.rows {
        let g1 = frame.sub((b[1] + fr[1]) % frame.delta, er[1]);
        let h2 = frame.sub(fr[2], (a[1] + er[2]) % frame.delta);
        let (gi, hi) = match (
            frame.row_by_col[1][g1 as usize],
            frame.row_by_col[2][h2 as usize],
        ) {
            (Some(g), Some(h)) => (g, h),
            _ => continue,
        };
        if level == 2 {
            return true;
        }
        let gr = frame.rows[gi];
        let hr = frame.rows[hi];
        for kr in &frame.rows {
            let m2 = frame.sub((b[2] + kr[2]) % frame.delta, gr[2]);
            if frame.row_by_col[2][m2 as usize].is_none() {
                continue;
            }
            for lr in &frame.rows {
                let n1 = frame.sub(lr[1], (a[2] + hr[1]) % frame.delta);
                if frame.row_by_col[1][n1 as usize].is_none() {
                    continue;
                }
                let o0 = frame.sub(
                    (fr[0] + kr[0] + lr[0]) % frame.delta,
                    (gr[0] + hr[0]) % frame.delta,
                );
                if frame.row_by_col[0][o0 as usize].is_some() {
                    return true;
                }
            }
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Generic incidence by chamber labeling of the filling triangle.
// ---------------------------------------------------------------------------
//
// The side-ℓ triangle is coordinatized by vertices v(r,s), 0 ≤ s ≤ r ≤ ℓ,
// where v(0,0) is the center, v(r,0) runs along the forward side and v(r,r)
// along the backward side; typ(v(r,s)) = r + s mod 3. Chambers are the
// upward triangles U(r,s) = {v(r,s), v(r+1,s), v(r+1,s+1)} (sign +) and the
// downward triangles D(r,s) = {v(r,s), v(r,s+1), v(r+1,s+1)} (sign -). The
// labeling condition at a vertex v of the triangle with distance < ℓ from
// the center is Σ_{c ∋ v} ε_c λ(c)_{typ(v)} = rhs(v), where rhs is b^r at
// v(r,0) (plus -a⁰ at the center) and -a^r at v(r,r), zero at interior
// vertices: the side edges, oriented away from the center, carry the path
// exponents as labels and count positively exactly when forward-pointing.

#[derive(Clone, Copy)]
enum Rhs {
    Center,
    ForwardSide(usize),
    BackwardSide(usize),
    Zero,
}

struct TriangleSystem {
    /// Chamber ids in assignment order; `true` marks an upward chamber.
    order: Vec<(usize, usize, bool)>,
    /// For each position in `order`: equations that close there, as
    /// (terms over earlier-or-equal chambers, coefficient of the closing
    /// chamber, vertex type, rhs selector).
    closing: Vec<Vec<(Vec<(usize, i64)>, i64, usize, Rhs)>>,
}

fn chamber_position(r: usize, s: usize, up: bool) -> usize {
    // Row r holds chambers U(r,0), D(r,0), U(r,1), D(r,1), …, U(r,r).
    let before: usize = (0..r).map(|i| 2 * i + 1).sum();
    before + 2 * s + usize::from(!up)
}

impl TriangleSystem {
    fn new(level: usize) -> TriangleSystem {
        let mut order = Vec::new();
        for r in 0..level {
            for s in 0..=r {
                order.push((r, s, true));
                if s < r {
                    order.push((r, s, false));
                }
            }
        }
        // Re-sort into the documented order U(r,0), D(r,0), U(r,1), ….
        order.sort_by_key(|&(r, s, up)| chamber_position(r, s, up));
        let mut closing: Vec<Vec<(Vec<(usize, i64)>, i64, usize, Rhs)>> =
            vec![Vec::new(); order.len()];
        for r in 0..level {
            for s in 0..=r {
                // Chambers containing v(r,s) with their checkerboard signs.
                let mut terms: Vec<(usize, usize, bool, i64)> = Vec::new();
                let push = |rr: i64, ss: i64, up: bool, sign: i64, terms: &mut Vec<_>| {
                    if rr < 0 || ss < 0 {
                        return;
                    }
                    let (rr, ss) = (rr as usize, ss as usize);
                    if rr >= level || ss > rr || (!up && ss == rr) {
                        return;
                    }
                    terms.push((rr, ss, up, sign));
                };
                let (ri, si) = (r as i64, s as i64);
                push(ri, si, true, 1, &mut terms);
                push(ri, si, false, -1, &mut terms);
                push(ri, si - 1, false, -1, &mut terms);
                push(ri - 1, si, true, 1, &mut terms);
                push(ri - 1, si - 1, true, 1, &mut terms);
                push(ri - 1, si - 1, false, -1, &mut terms);
                let rhs = if r == 0 {
                    Rhs::Center
                } else if s == 0 {
                    Rhs::ForwardSide(r)
                } else if s == r {
                    Rhs::BackwardSide(r)
                } else {
                    Rhs::Zero
                };
                let positions: Vec<(usize, i64)> = terms
                    .iter()
                    .map(|&(rr, ss, up, sign)| (chamber_position(rr, ss, up), sign))
                    .collect();
                let close_at = positions.iter().map(|&(p, _)| p).max().unwrap();
                let coeff = positions
                    .iter()
                    .find(|&&(p, _)| p == close_at)
                    .unwrap()
                    .1;
                let earlier: Vec<(usize, i64)> = positions
                    .iter()
                    .copied()
                    .filter(|&(p, _)| p != close_at)
                    .collect();
                closing[close_at].push((earlier, coeff, (r + s) % 3, rhs));
            }
        }
        TriangleSystem { order, closing }
    }

    fn rhs_value(&self, frame: &Frame, b: &[u64], a: &[u64], rhs: Rhs) -> u64 {
        match rhs {
            Rhs::Center => frame.sub(b[0], a[0]),
            Rhs::ForwardSide(r) => b[r] % frame.delta,
            Rhs::BackwardSide(r) => frame.neg(a[r]),
            Rhs::Zero => 0,
        }
    }
}

/// Backtracking search for a chamber labeling establishing incidence of the
/// forward path `b` with the backward path `a` (any level ≥ 1).
fn incidence_search(frame: &Frame, sys: &TriangleSystem, b: &[u64], a: &[u64]) -> bool {
    fn eval(
        frame: &Frame,
        assign: &[usize],
        terms: &[(usize, i64)],
        typ: usize,
    ) -> u64 {
        let mut acc: i64 = 0;
        for &(pos, sign) in terms {
            acc += sign * frame.rows[assign[pos]][typ] as i64;
        }
        acc.rem_euclid(frame.delta as i64) as u64
    }

    fn rec(
        frame: &Frame,
        sys: &TriangleSystem,
        b: &[u64],
        a: &[u64],
        pos: usize,
        assign: &mut Vec<usize>,
    ) -> bool {
        if pos == sys.order.len() {
            return true;
        }
        // If an equation closes here, the closing chamber's entry at the
        // vertex type is forced; columns have distinct entries so at most
        // one row fits per equation.
        let mut candidates: Option<Vec<usize>> = None;
        for (earlier, coeff, typ, rhs) in &sys.closing[pos] {
            let partial = eval(frame, assign, earlier, *typ);
            let rhs = sys.rhs_value(frame, b, a, *rhs);
            // coeff * x + partial ≡ rhs, coeff = ±1.
            let want = if *coeff == 1 {
                frame.sub(rhs, partial)
            } else {
                frame.sub(partial, rhs)
            };
            let fits: Vec<usize> = match frame.row_by_col[*typ][want as usize] {
                Some(i) => vec![i],
                None => vec![],
            };
            candidates = Some(match candidates {
                None => fits,
                Some(prev) => prev.into_iter().filter(|i| fits.contains(i)).collect(),
            });
        }
        let cands = candidates.unwrap_or_else(|| (0..frame.rows.len()).collect());
        for c in cands {
            assign.push(c);
            if rec(frame, sys, b, a, pos + 1, assign) {
                assign.pop();
                return true;
            }
            assign.pop();
        }
        false
    }

    let mut assign = Vec::with_capacity(sys.order.len());
    rec(frame, sys, b, a, 0, &mut assign)
}

/// Incidence of a forward point path with a backward line path by the
/// chamber-labeling search (valid at every level; levels ≤ 3 can also use
/// the closed form, and the two must agree).
pub fn incidence_level(
    e: &DiffMatrix,
    center_type: usize,
    point: &GeodesicPath,
    line: &GeodesicPath,
) -> Result<bool, ComplexError> {
    if point.direction != PathDirection::Forward || line.direction != PathDirection::Backward {
        return Err(ComplexError::InvalidPath(
            "incidence expects a forward point path and a backward line path".into(),
        ));
    }
    if point.exps.len() != line.exps.len() {
        return Err(ComplexError::LengthMismatch(
            point.exps.len(),
            line.exps.len(),
        ));
    }
    if point.exps.is_empty() {
        return Err(ComplexError::InvalidLevel(0));
    }
    let frame = Frame::new(e, center_type)?;
    let sys = TriangleSystem::new(point.exps.len());
    Ok(incidence_search(&frame, &sys, &point.exps, &line.exps))
}

/// Level ≤ 3 incidence by the closed-form row conditions.
pub fn incidence_closed_form(
    e: &DiffMatrix,
    center_type: usize,
    point: &GeodesicPath,
    line: &GeodesicPath,
) -> Result<bool, ComplexError> {
    if point.exps.len() != line.exps.len() {
        return Err(ComplexError::LengthMismatch(
            point.exps.len(),
            line.exps.len(),
        ));
    }
    if point.exps.is_empty() || point.exps.len() > 3 {
        return Err(ComplexError::InvalidLevel(point.exps.len()));
    }
    let frame = Frame::new(e, center_type)?;
    Ok(incidence_closed(&frame, &point.exps, &line.exps))
}

// ---------------------------------------------------------------------------
// Hjelmslev planes.
// ---------------------------------------------------------------------------

/// The level-ℓ incidence plane around a vertex: points and lines are the
/// endpoints of cycling geodesic paths of length ℓ, and the neighbor
/// relation is "equal first exponent" (same level-1 image).
pub struct HjelmslevPlane {
    q: u64,
    delta: u64,
    level: usize,
    center_type: usize,
    points: Vec<GeodesicPath>,
    lines: Vec<GeodesicPath>,
    point_index: HashMap<Vec<u64>, usize>,
    line_index: HashMap<Vec<u64>, usize>,
    /// Row-major incidence bitset, stride `words_per_row` per point.
    bits: Vec<u64>,
    words_per_row: usize,
}

impl HjelmslevPlane {
    /// Field parameter.
    pub fn q(&self) -> u64 {
        self.q
    }

    /// Modulus δ = q² + q + 1.
    pub fn delta(&self) -> u64 {
        self.delta
    }

    /// Plane level.
    pub fn level(&self) -> usize {
        self.level
    }

    /// Center vertex type.
    pub fn center_type(&self) -> usize {
        self.center_type
    }

    /// Point paths, in enumeration order.
    pub fn points(&self) -> &[GeodesicPath] {
        &self.points
    }

    /// Line paths, in enumeration order.
    pub fn lines(&self) -> &[GeodesicPath] {
        &self.lines
    }

    /// Incidence of point `i` with line `j`.
    pub fn incident(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words_per_row + j / 64] >> (j % 64) & 1 == 1
    }

    /// Index of a point path.
    pub fn point_id(&self, exps: &[u64]) -> Option<usize> {
        self.point_index.get(exps).copied()
    }

    /// Index of a line path.
    pub fn line_id(&self, exps: &[u64]) -> Option<usize> {
        self.line_index.get(exps).copied()
    }

    /// Level-1 image (neighbor class) of point `i`.
    pub fn point_class(&self, i: usize) -> u64 {
        self.points[i].exps[0]
    }

    /// Level-1 image (neighbor class) of line `j`.
    pub fn line_class(&self, j: usize) -> u64 {
        self.lines[j].exps[0]
    }

    /// Lines incident with point `i`.
    pub fn lines_of_point(&self, i: usize) -> Vec<usize> {
        (0..self.lines.len()).filter(|&j| self.incident(i, j)).collect()
    }

    /// Points incident with line `j`.
    pub fn points_of_line(&self, j: usize) -> Vec<usize> {
        (0..self.points.len()).filter(|&i| self.incident(i, j)).collect()
    }

    /// The bipartite incidence graph; points get color 0, lines color 1,
    /// point `i` is vertex `i` and line `j` is vertex `n_points + j`.
    pub fn incidence_graph(&self) -> ColoredGraph {
        let np = self.points.len();
        let nl = self.lines.len();
        let mut edges = Vec::new();
        for i in 0..np {
            for j in 0..nl {
                if self.incident(i, j) {
                    edges.push((i, np + j));
                }
            }
        }
        let mut colors = vec![0u32; np];
        colors.extend(std::iter::repeat(1u32).take(nl));
        ColoredGraph::new(np + nl, &edges, colors).expect("bipartite incidence graph is valid")
    }
}

fn enumerate_paths(frame: &Frame, direction: PathDirection, level: usize) -> Vec<GeodesicPath> {
    let mut allowed_per_step: Vec<Vec<u64>> = vec![(0..frame.delta).collect()];
    for k in 1..level {
        allowed_per_step.push(frame.allowed(direction, k));
    }
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(level);
    fn rec(
        allowed: &[Vec<u64>],
        k: usize,
        cur: &mut Vec<u64>,
        direction: PathDirection,
        out: &mut Vec<GeodesicPath>,
    ) {
        if k == allowed.len() {
            out.push(GeodesicPath {
                direction,
                exps: cur.clone(),
            });
            return;
        }
        for &x in &allowed[k] {
            cur.push(x);
            rec(allowed, k + 1, cur, direction, out);
            cur.pop();
        }
    }
    rec(&allowed_per_step, 0, &mut cur, direction, &mut out);
    out
}

/// Builds the level-ℓ Hjelmslev plane around a vertex of type `center_type`.
/// Incidence uses the closed form for ℓ ≤ 3 and the chamber-labeling search
/// otherwise.
pub fn hjelmslev_plane(
    e: &DiffMatrix,
    center_type: usize,
    level: usize,
) -> Result<HjelmslevPlane, ComplexError> {
    if level == 0 {
        return Err(ComplexError::InvalidLevel(0));
    }
    let frame = Frame::new(e, center_type)?;
    let points = enumerate_paths(&frame, PathDirection::Forward, level);
    let lines = enumerate_paths(&frame, PathDirection::Backward, level);
    let expected = frame.delta as usize * (frame.q as usize).pow(2 * (level as u32 - 1));
    if points.len() != expected || lines.len() != expected {
        return Err(ComplexError::Inconsistent(format!(
            "expected {expected} points and lines at level {level}, got {} and {}",
            points.len(),
            lines.len()
        )));
    }
    let words = (lines.len() + 63) / 64;
    let mut bits = vec![0u64; points.len() * words];
    let sys = if level > 3 {
        Some(TriangleSystem::new(level))
    } else {
        None
    };
    for (i, p) in points.iter().enumerate() {
        for (j, l) in lines.iter().enumerate() {
            let inc = match &sys {
                None => incidence_closed(&frame, &p.exps, &l.exps),
                Some(sys) => incidence_search(&frame, sys, &p.exps, &l.exps),
            };
            if inc {
                bits[i * words + j / 64] |= 1 << (j % 64);
            }
        }
    }
    let point_index = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.exps.clone(), i))
        .collect();
    let line_index = lines
        .iter()
        .enumerate()
        .map(|(j, l)| (l.exps.clone(), j))
        .collect();
    Ok(HjelmslevPlane {
        q: frame.q,
        delta: frame.delta,
        level,
        center_type,
        points,
        lines,
        point_index,
        line_index,
        bits,
        words_per_row: words,
    })
}

// ---------------------------------------------------------------------------
// Splitting counter for the level-2 → level-1 projection.
// ---------------------------------------------------------------------------

/// Counts sections of the projection from the level-2 plane to the level-1
/// plane: a choice of level-2 lift for each level-1 point and line such that
/// every level-1 incidence lifts. Backtracking with forward checking over
/// the 2δ variables; aborts with `BudgetExceeded` past `node_cap` nodes.
pub fn count_splittings_capped(
    e: &DiffMatrix,
    center_type: usize,
    node_cap: u64,
) -> Result<u64, ComplexError> {
    let frame = Frame::new(e, center_type)?;
    let delta = frame.delta as usize;
    let point_lifts = frame.allowed(PathDirection::Forward, 1);
    let line_lifts = frame.allowed(PathDirection::Backward, 1);
    let ncand = point_lifts.len();
    debug_assert_eq!(ncand, line_lifts.len());
    assert!(ncand <= 64, "candidate sets fit in a u64 mask");
    let full: u64 = if ncand == 64 { !0 } else { (1u64 << ncand) - 1 };

    // pair_ok[e_row][pi][li]: the lifted pair (b⁰b¹, a⁰a¹) with b⁰-a⁰ = e₀
    // is incident at level 2.
    let nrows = frame.rows.len();
    let mut ok = vec![false; nrows * ncand * ncand];
    for (ei, _) in frame.rows.iter().enumerate() {
        for (pi, &b1) in point_lifts.iter().enumerate() {
            for (li, &a1) in line_lifts.iter().enumerate() {
                // Incidence at level 2 given the level-1 row: evaluate the
                // closed form with b⁰ = e₀, a⁰ = 0.
                let b = [frame.rows[ei][0], b1];
                let a = [0, a1];
                ok[(ei * ncand + pi) * ncand + li] = incidence_closed(&frame, &b, &a);
            }
        }
    }
    // Masks for forward checking.
    let mut mask_line = vec![0u64; nrows * ncand]; // given point lift, allowed line lifts
    let mut mask_point = vec![0u64; nrows * ncand]; // given line lift, allowed point lifts
    for ei in 0..nrows {
        for pi in 0..ncand {
            for li in 0..ncand {
                if ok[(ei * ncand + pi) * ncand + li] {
                    mask_line[ei * ncand + pi] |= 1 << li;
                    mask_point[ei * ncand + li] |= 1 << pi;
                }
            }
        }
    }

    // Variables 0..δ are points (level-1 b⁰), δ..2δ lines (level-1 a⁰);
    // constraint between point b0 and line a0 whenever b0 - a0 ∈ D₀,
    // with the unique witnessing row.
    let row_of = |b0: usize, a0: usize| -> Option<usize> {
        frame.row_by_col[0][frame.sub(b0 as u64, a0 as u64) as usize]
    };
    // Breadth-first variable order from point 0 through the incidence graph.
    let mut order = Vec::with_capacity(2 * delta);
    let mut seen = vec![false; 2 * delta];
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(0usize);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        order.push(v);
        let nbrs: Vec<usize> = if v < delta {
            (0..delta)
                .filter(|&a0| row_of(v, a0).is_some())
                .map(|a0| delta + a0)
                .collect()
        } else {
            (0..delta)
                .filter(|&b0| row_of(b0, v - delta).is_some())
                .collect()
        };
        for w in nbrs {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    if order.len() != 2 * delta {
        return Err(ComplexError::Inconsistent(
            "level-1 incidence graph is not connected".into(),
        ));
    }

    struct Ctx<'a> {
        frame: &'a Frame,
        delta: usize,
        order: Vec<usize>,
        mask_line: Vec<u64>,
        mask_point: Vec<u64>,
        ncand: usize,
        nodes: u64,
        cap: u64,
    }
    impl Ctx<'_> {
        fn row_of(&self, b0: usize, a0: usize) -> Option<usize> {
            self.frame.row_by_col[0][self.frame.sub(b0 as u64, a0 as u64) as usize]
        }
        fn rec(&mut self, i: usize, dom: &mut Vec<u64>) -> Result<u64, ComplexError> {
            if i == self.order.len() {
                return Ok(1);
            }
            let v = self.order[i];
            let mut total = 0u64;
            let my = dom[v];
            for c in 0..self.ncand {
                if my >> c & 1 == 0 {
                    continue;
                }
                self.nodes += 1;
                if self.nodes > self.cap {
                    return Err(ComplexError::BudgetExceeded { budget: self.cap });
                }
                // Forward-check incident partners.
                let mut undo: Vec<(usize, u64)> = Vec::new();
                let mut dead = false;
                if v < self.delta {
                    for a0 in 0..self.delta {
                        if let Some(ei) = self.row_of(v, a0) {
                            let w = self.delta + a0;
                            let nd = dom[w] & self.mask_line[ei * self.ncand + c];
                            if nd != dom[w] {
                                undo.push((w, dom[w]));
                                dom[w] = nd;
                                if nd == 0 {
                                    dead = true;
                                    break;
                                }
                            }
                        }
                    }
                } else {
                    for b0 in 0..self.delta {
                        if let Some(ei) = self.row_of(b0, v - self.delta) {
                            let nd = dom[b0] & self.mask_point[ei * self.ncand + c];
                            if nd != dom[b0] {
                                undo.push((b0, dom[b0]));
                                dom[b0] = nd;
                                if nd == 0 {
                                    dead = true;
                                    break;
                                }
                            }
                        }
                    }
                }
                if !dead {
                    let save = dom[v];
                    dom[v] = 1 << c;
                    total += self.rec(i + 1, dom)?;
                    dom[v] = save;
                }
                for (w, old) in undo.into_iter().rev() {
                    dom[w] = old;
                }
            }
            Ok(total)
        }
    }

    let mut ctx = Ctx {
        frame: &frame,
        delta,
        order,
        mask_line,
        mask_point,
        ncand,
        nodes: 0,
        cap: node_cap,
    };
    let mut dom = vec![full; 2 * delta];
    ctx.rec(0, &mut dom)
}

/// [`count_splittings_capped`] with the default node cap.
pub fn count_splittings(e: &DiffMatrix, center_type: usize) -> Result<u64, ComplexError> {
    count_splittings_capped(e, center_type, SPLITTING_NODE_CAP)
}

// ---------------------------------------------------------------------------
// Elementary homotopies.
// ---------------------------------------------------------------------------

/// All substitutions σᵢ^b σᵢ₊₁^x σᵢ^s equal to σᵢ^a σᵢ₊₂^y σᵢ^r: one triple
/// (b, x, s) per pair of rows (e, f) with f_{i+2} - e_{i+2} = y, given by
/// b = a + eᵢ, x = e_{i+1} - f_{i+1}, s = r - fᵢ.
pub fn elementary_homotopy(
    e: &DiffMatrix,
    base_type: usize,
    segment: (u64, u64, u64),
) -> Result<Vec<(u64, u64, u64)>, ComplexError> {
    if base_type > 2 {
        return Err(ComplexError::InvalidCenter(base_type));
    }
    let delta = e.delta();
    let (a, y, r) = segment;
    if a >= delta || y >= delta || r >= delta {
        return Err(ComplexError::InvalidPath("exponent out of range".into()));
    }
    let i = base_type;
    let mut out = Vec::new();
    for er in e.rows() {
        for fr in e.rows() {
            if (fr[(i + 2) % 3] + delta - er[(i + 2) % 3]) % delta != y {
                continue;
            }
            let b = (a + er[i]) % delta;
            let x = (er[(i + 1) % 3] + delta - fr[(i + 1) % 3]) % delta;
            let s = (r + delta - fr[i]) % delta;
            out.push((b, x, s));
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Combinatorial balls.
// ---------------------------------------------------------------------------

/// One vertex of a combinatorial ball.
#[derive(Debug, Clone)]
pub struct BallVertex {
    /// Canonical edge path from the center: (direction, exponent) per step.
    /// Cycling geodesic paths are preferred as representatives, forward
    /// before backward, then the enumeration-first minimal-length path.
    pub steps: Vec<(PathDirection, u64)>,
    /// Graph distance from the center.
    pub distance: usize,
    /// Vertex type in the working frame (center = 0).
    pub vtype: usize,
    /// Whether the representative is a cycling geodesic path (always true
    /// for the center and for distance-1 vertices).
    pub geodesic: bool,
}

/// The combinatorial ball of radius r around a vertex: all vertices at graph
/// distance ≤ r, with the edges and triangles among them.
pub struct BallComplex {
    q: u64,
    delta: u64,
    center_type: usize,
    radius: usize,
    vertices: Vec<BallVertex>,
    edges: Vec<(usize, usize)>,
    triangles: Vec<[usize; 3]>,
    /// Component id per path id, mapped to vertex index (u32::MAX = outside).
    vertex_of_path_id: Vec<u32>,
    width: usize,
    offsets: Vec<usize>,
    max_len: usize,
}

impl BallComplex {
    /// Field parameter.
    pub fn q(&self) -> u64 {
        self.q
    }

    /// Modulus δ.
    pub fn delta(&self) -> u64 {
        self.delta
    }

    /// Center vertex type.
    pub fn center_type(&self) -> usize {
        self.center_type
    }

    /// Ball radius.
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Vertices; index 0 is the center.
    pub fn vertices(&self) -> &[BallVertex] {
        &self.vertices
    }

    /// Undirected edges as sorted index pairs.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Triangles as sorted index triples.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    fn path_id(&self, steps: &[(PathDirection, u64)]) -> Option<usize> {
        if steps.len() > self.max_len {
            return None;
        }
        let mut id = self.offsets[steps.len()];
        let mut mul = 1usize;
        for &(d, m) in steps {
            if m >= self.delta {
                return None;
            }
            let code = match d {
                PathDirection::Forward => m as usize,
                PathDirection::Backward => self.delta as usize + m as usize,
            };
            id += code * mul;
            mul *= self.width;
        }
        Some(id)
    }

    /// The ball vertex named by an edge path from the center, if the path
    /// fits in the enumerated universe and lands inside the ball.
    pub fn vertex_of_path(&self, steps: &[(PathDirection, u64)]) -> Option<usize> {
        let id = self.path_id(steps)?;
        let v = self.vertex_of_path_id[id];
        if v == u32::MAX {
            None
        } else {
            Some(v as usize)
        }
    }

    /// Vertices at a given distance.
    pub fn sphere(&self, d: usize) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| self.vertices[v].distance == d)
            .collect()
    }

    /// The ball as a colored graph: center color 0, other vertices colored
    /// 1 + type. Triangles are exactly the 3-cliques (checked on build).
    pub fn colored_graph(&self) -> ColoredGraph {
        let colors: Vec<u32> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| if i == 0 { 0 } else { 1 + v.vtype as u32 })
            .collect();
        ColoredGraph::new(self.vertices.len(), &self.edges, colors)
            .expect("ball graph is valid")
    }

    /// The permutation of ball vertices induced by the distinguished
    /// generator fixing the center (adds 1 to the first path exponent).
    pub fn singer_permutation(&self) -> Vec<usize> {
        let mut perm = Vec::with_capacity(self.vertices.len());
        for v in &self.vertices {
            if v.steps.is_empty() {
                perm.push(0);
                continue;
            }
            let mut steps = v.steps.clone();
            steps[0].1 = (steps[0].1 + 1) % self.delta;
            perm.push(
                self.vertex_of_path(&steps)
                    .expect("rotated path stays in the ball"),
            );
        }
        perm
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n as u32).collect(),
        }
    }
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let g = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = g;
            x = g;
        }
        x
    }
    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Prefer the smaller id as root so roots are minimal-length
            // representatives (ids are ordered by length first).
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Builds the radius-r combinatorial ball around a vertex of type
/// `center_type`. Vertices are equivalence classes of edge paths of length
/// ≤ r+1 under backtracking cancellation, triangle shortcuts, and
/// out-and-back segment exchanges; edges and triangles are read off from
/// one-step relations; structural invariants (flag condition, link
/// isomorphism, sphere counts, geodesic uniqueness) are all verified.
pub fn ball_complex(
    e: &DiffMatrix,
    center_type: usize,
    radius: usize,
) -> Result<BallComplex, ComplexError> {
    if radius == 0 || radius > MAX_RADIUS {
        return Err(ComplexError::InvalidRadius(radius, MAX_RADIUS));
    }
    let frame = Frame::new(e, center_type)?;
    let delta = frame.delta as usize;
    let width = 2 * delta;
    let max_len = radius + 1;
    let mut offsets = vec![0usize; max_len + 2];
    for len in 0..=max_len {
        offsets[len + 1] = offsets[len] + width.pow(len as u32);
    }
    let total = offsets[max_len + 1];
    let mut uf = UnionFind::new(total);

    // Decode helpers on step codes: code < δ is forward, else backward.
    let dir_of = |code: usize| -> i32 {
        if code < delta {
            1
        } else {
            -1
        }
    };
    let exp_of = |code: usize| -> u64 {
        (code % delta) as u64
    };
    let make_code = |dir: i32, m: u64| -> usize {
        if dir == 1 {
            m as usize
        } else {
            delta + m as usize
        }
    };
    let id_of = |steps: &[usize], offsets: &[usize]| -> usize {
        let mut id = offsets[steps.len()];
        let mut mul = 1usize;
        for &c in steps {
            id += c * mul;
            mul *= width;
        }
        id
    };

    // Apply identification moves to every path.
    let mut steps = Vec::with_capacity(max_len);
    for len in 2..=max_len {
        let base = offsets[len];
        let count = width.pow(len as u32);
        for raw in 0..count {
            steps.clear();
            let mut t = raw;
            for _ in 0..len {
                steps.push(t % width);
                t /= width;
            }
            let id = base + raw;
            // Running types before each step.
            let mut types = Vec::with_capacity(len + 1);
            types.push(0i32);
            for &c in &steps {
                types.push((types.last().unwrap() + dir_of(c)).rem_euclid(3));
            }
            for k in 0..len - 1 {
                let i = types[k] as usize; // base type of the segment
                let d1 = dir_of(steps[k]);
                let d2 = dir_of(steps[k + 1]);
                let m1 = exp_of(steps[k]);
                let m2 = exp_of(steps[k + 1]);
                if d1 != d2 && m2 == 0 {
                    // Backtrack cancellation: σ_t^m σ_{t'}^0 collapses; a
                    // following exponent from type t merges with m.
                    let mut ns: Vec<usize> = Vec::with_capacity(len - 2);
                    ns.extend_from_slice(&steps[..k]);
                    if k + 2 < len {
                        let c = steps[k + 2];
                        ns.push(make_code(dir_of(c), (exp_of(c) + m1) % frame.delta));
                        ns.extend_from_slice(&steps[k + 3..]);
                    }
                    uf.union(id as u32, id_of(&ns, &offsets) as u32);
                }
                if d1 == d2 {
                    // Straight pair crossing one triangle: shorten when the
                    // middle turn matches a row.
                    if d1 == 1 {
                        // σ_i^x σ_{i+1}^y → σ_i^z backward, z = x - fᵢ for
                        // the row f with f_{i+1} = y; following exponent
                        // (from type i+2) decreases by f_{i+2}.
                        if let Some(fi) = frame.row_by_col[(i + 1) % 3][m2 as usize] {
                            let f = frame.rows[fi];
                            let z = frame.sub(m1, f[i]);
                            let mut ns: Vec<usize> = Vec::with_capacity(len - 1);
                            ns.extend_from_slice(&steps[..k]);
                            ns.push(make_code(-1, z));
                            if k + 2 < len {
                                let c = steps[k + 2];
                                ns.push(make_code(
                                    dir_of(c),
                                    frame.sub(exp_of(c), f[(i + 2) % 3]),
                                ));
                                ns.extend_from_slice(&steps[k + 3..]);
                            }
                            uf.union(id as u32, id_of(&ns, &offsets) as u32);
                        }
                    } else {
                        // σ_i^x σ_{i+2}^y → σ_i^z forward, needs the row f
                        // with f_{i+2} = -y; z = x + fᵢ, following exponent
                        // (from type i+1) increases by f_{i+1}.
                        if let Some(fi) =
                            frame.row_by_col[(i + 2) % 3][frame.neg(m2) as usize]
                        {
                            let f = frame.rows[fi];
                            let z = (m1 + f[i]) % frame.delta;
                            let mut ns: Vec<usize> = Vec::with_capacity(len - 1);
                            ns.extend_from_slice(&steps[..k]);
                            ns.push(make_code(1, z));
                            if k + 2 < len {
                                let c = steps[k + 2];
                                ns.push(make_code(
                                    dir_of(c),
                                    (exp_of(c) + f[(i + 1) % 3]) % frame.delta,
                                ));
                                ns.extend_from_slice(&steps[k + 3..]);
                            }
                            uf.union(id as u32, id_of(&ns, &offsets) as u32);
                        }
                    }
                }
                if d1 == 1 && d2 == -1 {
                    // Out-and-back over type i+1 exchanged for out-and-back
                    // over type i+2: σ_i^b σ_{i+1}^x ↦ σ_i^a σ_{i+2}^y with
                    // b - a = eᵢ, x = e_{i+1} - f_{i+1}, y = f_{i+2} - e_{i+2};
                    // a following exponent r from type i becomes r + fᵢ.
                    for er in &frame.rows {
                        let f1 = frame.sub(er[(i + 1) % 3], m2);
                        let fi = match frame.row_by_col[(i + 1) % 3][f1 as usize] {
                            Some(fi) => fi,
                            None => continue,
                        };
                        let f = frame.rows[fi];
                        let a = frame.sub(m1, er[i]);
                        let y = frame.sub(f[(i + 2) % 3], er[(i + 2) % 3]);
                        let mut ns: Vec<usize> = Vec::with_capacity(len);
                        ns.extend_from_slice(&steps[..k]);
                        ns.push(make_code(-1, a));
                        ns.push(make_code(1, y));
                        if k + 2 < len {
                            let c = steps[k + 2];
                            ns.push(make_code(dir_of(c), (exp_of(c) + f[i]) % frame.delta));
                            ns.extend_from_slice(&steps[k + 3..]);
                        }
                        uf.union(id as u32, id_of(&ns, &offsets) as u32);
                    }
                }
                if d1 == -1 && d2 == 1 {
                    // The inverse exchange: σ_i^a σ_{i+2}^y ↦ σ_i^b σ_{i+1}^x;
                    // a following exponent r from type i becomes r - fᵢ.
                    for er in &frame.rows {
                        let f2 = (m2 + er[(i + 2) % 3]) % frame.delta;
                        let fi = match frame.row_by_col[(i + 2) % 3][f2 as usize] {
                            Some(fi) => fi,
                            None => continue,
                        };
                        let f = frame.rows[fi];
                        let b = (m1 + er[i]) % frame.delta;
                        let x = frame.sub(er[(i + 1) % 3], f[(i + 1) % 3]);
                        let mut ns: Vec<usize> = Vec::with_capacity(len);
                        ns.extend_from_slice(&steps[..k]);
                        ns.push(make_code(1, b));
                        ns.push(make_code(-1, x));
                        if k + 2 < len {
                            let c = steps[k + 2];
                            ns.push(make_code(dir_of(c), frame.sub(exp_of(c), f[i])));
                            ns.extend_from_slice(&steps[k + 3..]);
                        }
                        uf.union(id as u32, id_of(&ns, &offsets) as u32);
                    }
                }
            }
        }
    }

    // Components: roots carry the minimal path id, hence minimal length.
    let mut comp_vertex: HashMap<u32, u32> = HashMap::new();
    let mut vertices: Vec<BallVertex> = Vec::new();
    let decode = |id: usize, offsets: &[usize]| -> Vec<usize> {
        let len = (0..=max_len)
            .find(|&l| id >= offsets[l] && id < offsets[l + 1])
            .unwrap();
        let mut raw = id - offsets[len];
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(raw % width);
            raw /= width;
        }
        out
    };
    // First pass: create vertices for components whose minimal length ≤ r.
    for id in 0..offsets[radius + 1] {
        let root = uf.find(id as u32);
        if root as usize != id {
            continue;
        }
        let codes = decode(id, &offsets);
        let len = codes.len();
        let steps: Vec<(PathDirection, u64)> = codes
            .iter()
            .map(|&c| {
                if c < delta {
                    (PathDirection::Forward, c as u64)
                } else {
                    (PathDirection::Backward, (c - delta) as u64)
                }
            })
            .collect();
        let vtype = codes
            .iter()
            .fold(0i32, |t, &c| (t + dir_of(c)).rem_euclid(3)) as usize;
        comp_vertex.insert(root, vertices.len() as u32);
        vertices.push(BallVertex {
            steps,
            distance: len,
            vtype,
            geodesic: false,
        });
    }
    // Prefer cycling geodesic representatives where one exists.
    for id in 0..offsets[radius + 1] {
        let root = uf.find(id as u32);
        let Some(&vi) = comp_vertex.get(&root) else {
            continue;
        };
        let v = &mut vertices[vi as usize];
        let codes = decode(id, &offsets);
        if codes.len() != v.distance || v.geodesic {
            continue;
        }
        let all_forward = codes.iter().all(|&c| c < delta);
        let all_backward = codes.iter().all(|&c| c >= delta);
        let dir = if all_forward {
            PathDirection::Forward
        } else if all_backward {
            PathDirection::Backward
        } else {
            continue;
        };
        let exps: Vec<u64> = codes.iter().map(|&c| (c % delta) as u64).collect();
        let geo = v.distance == 0
            || exps
                .iter()
                .enumerate()
                .skip(1)
                .all(|(k, &x)| frame.step_allowed(dir, k, x));
        if geo {
            v.steps = exps.iter().map(|&m| (dir, m)).collect();
            v.geodesic = true;
        }
    }
    vertices[0].geodesic = true;

    // Path-id → vertex lookup over the whole universe.
    let mut vertex_of_path_id = vec![u32::MAX; total];
    for id in 0..total {
        let root = uf.find(id as u32);
        if let Some(&vi) = comp_vertex.get(&root) {
            vertex_of_path_id[id] = vi;
        }
    }

    // Edges from one-step extensions of the canonical representatives.
    let encode_steps = |steps: &[(PathDirection, u64)]| -> Vec<usize> {
        steps
            .iter()
            .map(|&(d, m)| match d {
                PathDirection::Forward => m as usize,
                PathDirection::Backward => delta + m as usize,
            })
            .collect()
    };
    let mut edge_set: HashSet<(u32, u32)> = HashSet::new();
    for (vi, v) in vertices.iter().enumerate() {
        let mut codes = encode_steps(&v.steps);
        for c in 0..width {
            codes.push(c);
            let nb = vertex_of_path_id[id_of(&codes, &offsets)];
            codes.pop();
            if nb != u32::MAX && nb as usize != vi {
                let (a, b) = (vi.min(nb as usize) as u32, vi.max(nb as usize) as u32);
                edge_set.insert((a, b));
            }
        }
    }
    let mut edges: Vec<(usize, usize)> = edge_set
        .iter()
        .map(|&(a, b)| (a as usize, b as usize))
        .collect();
    edges.sort_unstable();

    // Triangles: at each vertex, forward and backward one-step neighbors
    // with exponent difference in the local column set span a chamber.
    let mut tri_set: HashSet<[u32; 3]> = HashSet::new();
    for (vi, v) in vertices.iter().enumerate() {
        let codes = encode_steps(&v.steps);
        let t = v.vtype;
        for a in 0..frame.delta {
            for row in &frame.rows {
                let m = (a + row[t]) % frame.delta;
                let mut cf = codes.clone();
                cf.push(make_code(1, m));
                let w1 = vertex_of_path_id[id_of(&cf, &offsets)];
                let mut cb = codes.clone();
                cb.push(make_code(-1, a));
                let w2 = vertex_of_path_id[id_of(&cb, &offsets)];
                if w1 == u32::MAX || w2 == u32::MAX {
                    continue;
                }
                let mut tri = [vi as u32, w1, w2];
                tri.sort_unstable();
                tri_set.insert(tri);
            }
        }
    }
    let mut triangles: Vec<[usize; 3]> = tri_set
        .iter()
        .map(|t| [t[0] as usize, t[1] as usize, t[2] as usize])
        .collect();
    triangles.sort_unstable();

    let ball = BallComplex {
        q: frame.q,
        delta: frame.delta,
        center_type,
        radius,
        vertices,
        edges,
        triangles,
        vertex_of_path_id,
        width,
        offsets,
        max_len,
    };
    validate_ball(&frame, &ball)?;
    Ok(ball)
}

/// Structural invariants: distance consistency, sphere counts for cycling
/// geodesics with uniqueness, flag condition, and link isomorphism with the
/// reference plane of the local column.
fn validate_ball(frame: &Frame, ball: &BallComplex) -> Result<(), ComplexError> {
    let q = frame.q;
    let delta = frame.delta;
    // Unique cycling geodesic per straight vertex, correct sphere counts.
    for d in 1..=ball.radius {
        let mut seen: HashMap<usize, Vec<GeodesicPath>> = HashMap::new();
        for dir in [PathDirection::Forward, PathDirection::Backward] {
            for p in enumerate_paths(frame, dir, d) {
                let steps: Vec<(PathDirection, u64)> =
                    p.exps.iter().map(|&m| (dir, m)).collect();
                let v = ball.vertex_of_path(&steps).ok_or_else(|| {
                    ComplexError::Inconsistent(format!(
                        "geodesic path of length {d} left the ball"
                    ))
                })?;
                if ball.vertices[v].distance != d {
                    return Err(ComplexError::Inconsistent(format!(
                        "geodesic path of length {d} reached a vertex at distance {}",
                        ball.vertices[v].distance
                    )));
                }
                seen.entry(v).or_default().push(p);
            }
        }
        let expected = 2 * delta as usize * (q as usize).pow(2 * (d as u32 - 1));
        if seen.len() != expected {
            return Err(ComplexError::Inconsistent(format!(
                "distance-{d} cycling-geodesic vertex count {} != {expected}",
                seen.len()
            )));
        }
        if let Some((v, ps)) = seen.iter().find(|(_, ps)| ps.len() != 1) {
            return Err(ComplexError::Inconsistent(format!(
                "vertex {v} at distance {d} has {} geodesic paths",
                ps.len()
            )));
        }
    }
    // Flag condition: every edge lies in exactly q+1 triangles.
    let mut per_edge: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &ball.triangles {
        for (a, b) in [(t[0], t[1]), (t[0], t[2]), (t[1], t[2])] {
            *per_edge.entry((a, b)).or_insert(0) += 1;
        }
    }
    for &(a, b) in &ball.edges {
        let da = ball.vertices[a].distance;
        let db = ball.vertices[b].distance;
        // Only edges whose full set of triangles is inside the ball are
        // constrained; a triangle over the edge has its third vertex at
        // distance ≤ max(da, db) + 1.
        if da.max(db) + 1 > ball.radius {
            continue;
        }
        let c = per_edge.get(&(a, b)).copied().unwrap_or(0);
        if c != q as usize + 1 {
            return Err(ComplexError::Inconsistent(format!(
                "edge ({a},{b}) at distances ({da},{db}) lies in {c} triangles, expected {}",
                q + 1
            )));
        }
    }
    // Link isomorphism for interior vertices.
    let mut link_adj: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for t in &ball.triangles {
        for (v, a, b) in [
            (t[0], t[1], t[2]),
            (t[1], t[0], t[2]),
            (t[2], t[0], t[1]),
        ] {
            link_adj.entry(v).or_default().push((a, b));
        }
    }
    let mut reference: HashMap<usize, crate::permgraph::Certificate> = HashMap::new();
    for (vi, v) in ball.vertices.iter().enumerate() {
        if v.distance + 1 > ball.radius {
            continue;
        }
        let pairs = link_adj.get(&vi).cloned().unwrap_or_default();
        let mut ids: Vec<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        ids.sort_unstable();
        ids.dedup();
        let index: HashMap<usize, usize> =
            ids.iter().enumerate().map(|(i, &x)| (x, i)).collect();
        let t = v.vtype;
        let colors: Vec<u32> = ids
            .iter()
            .map(|&x| {
                if ball.vertices[x].vtype == (t + 1) % 3 {
                    0
                } else {
                    1
                }
            })
            .collect();
        let edges: Vec<(usize, usize)> =
            pairs.iter().map(|&(a, b)| (index[&a], index[&b])).collect();
        let graph = ColoredGraph::new(ids.len(), &edges, colors)?;
        let cert = crate::permgraph::canonical_form(&graph)?;
        let expected = match reference.get(&t) {
            Some(c) => c.clone(),
            None => {
                let dset: Vec<u64> = (0..delta)
                    .filter(|&x| frame.in_col[t][x as usize])
                    .collect();
                let c = crate::permgraph::canonical_form(&plane_incidence_graph(delta, &dset))?;
                reference.insert(t, c.clone());
                c
            }
        };
        if cert != expected {
            return Err(ComplexError::Inconsistent(format!(
                "link of vertex {vi} (type {t}, distance {}) is not the reference plane",
                v.distance
            )));
        }
    }
    Ok(())
}

/// The bipartite incidence graph of the translation plane of a difference
/// set: vertices 0..δ are points (color 0), δ..2δ lines (color 1), point b
/// adjacent to line a iff b - a lies in the set.
pub fn plane_incidence_graph(delta: u64, dset: &[u64]) -> ColoredGraph {
    let d = delta as usize;
    let mut edges = Vec::new();
    for b in 0..d {
        for &x in dset {
            let a = (b as u64 + delta - x) % delta;
            edges.push((b, d + a as usize));
        }
    }
    let mut colors = vec![0u32; d];
    colors.extend(std::iter::repeat(1u32).take(d));
    ColoredGraph::new(2 * d, &edges, colors).expect("plane incidence graph is valid")
}
