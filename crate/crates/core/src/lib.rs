//! Exact classification toolkit for Singer cyclic lattices acting on triangle
//! buildings (affine buildings of type Ã₂).
//!
//! The pipeline, bottom to top:
//!
//! * [`arith`] — residues mod n and finite fields GF(p^e), including the cubic
//!   extension tower GF(q) ⊂ GF(q³) with trace and discrete logarithm.
//! * [`diffsets`] — planar difference sets mod δ = q²+q+1, the classical Singer
//!   construction, AGL₁ canonicalization and stabilizers, non-cyclic Singer groups.
//! * [`diffmats`] — (q+1)×3 difference matrices, their equivalence classes, the
//!   census of lattices, automorphism groups Aut(E), and counting bounds.
//! * [`presentations`] — group presentations attached to a difference matrix:
//!   abelianization, derived-subgroup homology, vertex-regular presentations,
//!   and triangle presentations for the Bruhat–Tits detection.
//! * [`permgraph`] — colored-graph automorphism groups via refinement and
//!   individualization, canonical forms, and stabilizer chains.
//! * [`complexbuild`] — balls in the building, Hjelmslev incidence planes at
//!   each level, and splitting counts for the level-2 → level-1 quotient.
//! * [`analysis`] — per-class building reports: Moufang flags, stabilizer
//!   subquotients, normalizer lifts, plane isomorphism certificates.
//! * [`locfield`] — truncated power series over GF(q) and the Hensel solver
//!   that embeds a lattice into PGL₃(F_q((t))) or proves local infeasibility.

pub mod analysis;
pub mod arith;
pub mod complexbuild;
pub mod diffmats;
pub mod diffsets;
pub mod locfield;
pub mod permgraph;
pub mod presentations;

pub use arith::{FieldDesc, FieldElem, Residue};
pub use diffmats::DiffMatrix;
pub use diffsets::DiffSet;
