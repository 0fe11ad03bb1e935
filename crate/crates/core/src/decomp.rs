//! Rectangular domain decompositions: validation, facet classification,
//! reference classes and periodic line-ups.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Rect, Rotation, Side};

#[derive(Debug, Error, PartialEq)]
pub enum DecompError {
    #[error("decomposition has no subdomains")]
    Empty,
    #[error("duplicate subdomain id {0}")]
    DuplicateId(u32),
    #[error("subdomain {0} has a degenerate rectangle")]
    Degenerate(u32),
    #[error("subdomain {0} extends outside the bounding box")]
    OutsideBox(u32),
    #[error("subdomains {0} and {1} overlap")]
    Overlap(u32, u32),
    #[error("subdomains cover area {covered} of a bounding box with area {expected}")]
    Gap { covered: f64, expected: f64 },
    #[error("side {side:?} of subdomain {id}: {reason}")]
    IncompatibleFacet { id: u32, side: Side, reason: String },
    #[error("placements of reference {0} are not congruent")]
    IncongruentReference(u32),
}

/// One placed copy of a reference subdomain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdomainSpec {
    pub id: u32,
    pub rect: Rect,
    pub reference: u32,
    #[serde(default)]
    pub rotation: Rotation,
}

impl SubdomainSpec {
    /// Width and height of the reference rectangle before rotation.
    pub fn reference_dims(&self) -> (f64, f64) {
        if self.rotation.quarter_turns() % 2 == 1 {
            (self.rect.height(), self.rect.width())
        } else {
            (self.rect.width(), self.rect.height())
        }
    }
}

/// What lies across one side of a subdomain. Indices refer to
/// `Decomposition::subdomains`; fine partners are ordered by increasing
/// coordinate along the shared line.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FacetKind {
    /// Exactly one equally sized neighbor.
    Match { partner: usize },
    /// Two neighbors, each covering one half.
    SplitsInto { fine: [usize; 2] },
    /// This side is one half (0 = lower coordinate) of a coarse neighbor's side.
    HalfOfSplit { coarse: usize, half: usize },
    /// Part of the bounding box boundary.
    Boundary,
}

impl FacetKind {
    /// Roman numeral style tag, `1..=4`.
    pub fn tag(&self) -> u8 {
        match self {
            FacetKind::Match { .. } => 1,
            FacetKind::SplitsInto { .. } => 2,
            FacetKind::HalfOfSplit { .. } => 3,
            FacetKind::Boundary => 4,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct FacetRecord {
    pub owner: usize,
    pub side: Side,
    pub kind: FacetKind,
}

/// Subdomains sharing one reference shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceClass {
    pub reference: u32,
    pub width: f64,
    pub height: f64,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub bounding_box: Rect,
    pub subdomains: Vec<SubdomainSpec>,
    facets: Vec<[FacetRecord; 4]>,
    tol: f64,
}

/// Serialized form: bounding box and placed subdomains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSpec {
    pub bounding_box: Rect,
    pub subdomains: Vec<SubdomainSpec>,
}

impl DecompositionSpec {
    pub fn build(self) -> Result<Decomposition, DecompError> {
        Decomposition::new(self.bounding_box, self.subdomains)
    }
}

impl Decomposition {
    pub fn new(bounding_box: Rect, subdomains: Vec<SubdomainSpec>) -> Result<Self, DecompError> {
        if subdomains.is_empty() {
            return Err(DecompError::Empty);
        }
        let tol = 1e-12 * bounding_box.diameter().max(1.0);
        check_cover(&bounding_box, &subdomains, tol)?;
        let mut facets = Vec::with_capacity(subdomains.len());
        for (a, sa) in subdomains.iter().enumerate() {
            let mut rec = [FacetRecord { owner: a, side: Side::Top, kind: FacetKind::Boundary }; 4];
            for side in Side::ALL {
                rec[side.index()] = FacetRecord {
                    owner: a,
                    side,
                    kind: classify(&bounding_box, &subdomains, a, side, tol)
                        .map_err(|reason| DecompError::IncompatibleFacet { id: sa.id, side, reason })?,
                };
            }
            facets.push(rec);
        }
        let d = Decomposition { bounding_box, subdomains, facets, tol };
        d.check_reciprocity()?;
        d.check_congruence()?;
        Ok(d)
    }

    pub fn from_json(text: &str) -> Result<Self, crate::Error> {
        let spec: DecompositionSpec = serde_json::from_str(text)?;
        Ok(spec.build()?)
    }

    pub fn spec(&self) -> DecompositionSpec {
        DecompositionSpec { bounding_box: self.bounding_box, subdomains: self.subdomains.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.spec()).expect("decomposition serializes")
    }

    /// Image of the whole decomposition under a rotation about the box center.
    pub fn rotated(&self, rot: Rotation) -> Result<Decomposition, DecompError> {
        let c = self.bounding_box.center();
        let subs = self
            .subdomains
            .iter()
            .map(|s| SubdomainSpec {
                id: s.id,
                rect: s.rect.rotated_about(rot, c),
                reference: s.reference,
                rotation: s.rotation.then(rot),
            })
            .collect();
        Decomposition::new(self.bounding_box.rotated_about(rot, c), subs)
    }

    /// Smallest cell size at resolution `n`.
    pub fn min_cell_size(&self, n: usize) -> f64 {
        self.subdomains
            .iter()
            .map(|s| s.rect.width().min(s.rect.height()))
            .fold(f64::INFINITY, f64::min)
            / n as f64
    }

    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn facet(&self, sub: usize, side: Side) -> &FacetRecord {
        &self.facets[sub][side.index()]
    }

    pub fn facets(&self) -> impl Iterator<Item = &FacetRecord> {
        self.facets.iter().flatten()
    }

    /// Classes ordered by reference id; members in index order.
    pub fn reference_classes(&self) -> Vec<ReferenceClass> {
        let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.subdomains.iter().enumerate() {
            map.entry(s.reference).or_default().push(i);
        }
        map.into_iter()
            .map(|(reference, members)| {
                let (width, height) = self.subdomains[members[0]].reference_dims();
                ReferenceClass { reference, width, height, members }
            })
            .collect()
    }

    /// Groups of at least two equal copies (same reference, rotation and size)
    /// chained by matching facets, where adjacent copies also agree on the
    /// facet kinds transverse to the chain direction.
    pub fn periodic_lineups(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for a in 0..n {
            for side in [Side::Right, Side::Top] {
                let FacetKind::Match { partner: b } = self.facet(a, side).kind else {
                    continue;
                };
                if !self.equal_copies(a, b) {
                    continue;
                }
                let transverse = if side.is_horizontal() {
                    [Side::Left, Side::Right]
                } else {
                    [Side::Top, Side::Bottom]
                };
                let same = transverse
                    .iter()
                    .all(|&t| self.facet(a, t).kind.tag() == self.facet(b, t).kind.tag());
                if same {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().filter(|g| g.len() > 1).collect()
    }

    fn equal_copies(&self, a: usize, b: usize) -> bool {
        let (sa, sb) = (&self.subdomains[a], &self.subdomains[b]);
        sa.reference == sb.reference
            && sa.rotation == sb.rotation
            && (sa.rect.width() - sb.rect.width()).abs() <= self.tol
            && (sa.rect.height() - sb.rect.height()).abs() <= self.tol
    }

    fn check_reciprocity(&self) -> Result<(), DecompError> {
        for f in self.facets() {
            let opp = f.side.opposite();
            let ok = match f.kind {
                FacetKind::Match { partner } => {
                    self.facet(partner, opp).kind == FacetKind::Match { partner: f.owner }
                }
                FacetKind::SplitsInto { fine } => fine.iter().enumerate().all(|(h, &p)| {
                    self.facet(p, opp).kind == FacetKind::HalfOfSplit { coarse: f.owner, half: h }
                }),
                FacetKind::HalfOfSplit { coarse, half } => match self.facet(coarse, opp).kind {
                    FacetKind::SplitsInto { fine } => fine[half] == f.owner,
                    _ => false,
                },
                FacetKind::Boundary => true,
            };
            if !ok {
                return Err(DecompError::IncompatibleFacet {
                    id: self.subdomains[f.owner].id,
                    side: f.side,
                    reason: "facet relation is not reciprocal".into(),
                });
            }
        }
        Ok(())
    }

    fn check_congruence(&self) -> Result<(), DecompError> {
        for class in self.reference_classes() {
            for &m in &class.members {
                let (w, h) = self.subdomains[m].reference_dims();
                if (w - class.width).abs() > self.tol || (h - class.height).abs() > self.tol {
                    return Err(DecompError::IncongruentReference(class.reference));
                }
            }
        }
        Ok(())
    }
}

fn check_cover(bbox: &Rect, subs: &[SubdomainSpec], tol: f64) -> Result<(), DecompError> {
    let mut ids = std::collections::HashSet::new();
    let mut covered = 0.0;
    for s in subs {
        if !ids.insert(s.id) {
            return Err(DecompError::DuplicateId(s.id));
        }
        let r = &s.rect;
        if !(r.width() > tol && r.height() > tol) || !r.area().is_finite() {
            return Err(DecompError::Degenerate(s.id));
        }
        if r.x0 < bbox.x0 - tol || r.x1 > bbox.x1 + tol || r.y0 < bbox.y0 - tol || r.y1 > bbox.y1 + tol
        {
            return Err(DecompError::OutsideBox(s.id));
        }
        covered += r.area();
    }
    for (i, a) in subs.iter().enumerate() {
        for b in &subs[i + 1..] {
            let ox = a.rect.x1.min(b.rect.x1) - a.rect.x0.max(b.rect.x0);
            let oy = a.rect.y1.min(b.rect.y1) - a.rect.y0.max(b.rect.y0);
            if ox > tol && oy > tol {
                return Err(DecompError::Overlap(a.id, b.id));
            }
        }
    }
    let expected = bbox.area();
    if (covered - expected).abs() > 1e-12 * expected.max(1.0) {
        return Err(DecompError::Gap { covered, expected });
    }
    Ok(())
}

fn classify(
    bbox: &Rect,
    subs: &[SubdomainSpec],
    a: usize,
    side: Side,
    tol: f64,
) -> Result<FacetKind, String> {
    let ra = &subs[a].rect;
    let line = ra.side_line(side);
    let (s0, s1) = ra.side_span(side);
    let opp = side.opposite();
    let mut touching: Vec<(f64, f64, usize)> = subs
        .iter()
        .enumerate()
        .filter(|&(b, _)| b != a)
        .filter_map(|(b, sb)| {
            if (sb.rect.side_line(opp) - line).abs() > tol {
                return None;
            }
            let (t0, t1) = sb.rect.side_span(opp);
            (t1.min(s1) - t0.max(s0) > tol).then_some((t0, t1, b))
        })
        .collect();
    touching.sort_by(|x, y| x.0.total_cmp(&y.0));
    let close = |x: f64, y: f64| (x - y).abs() <= tol;
    match touching.as_slice() {
        [] => {
            if close(bbox.side_line(side), line) {
                Ok(FacetKind::Boundary)
            } else {
                Err("no neighbor across an interior side".into())
            }
        }
        [(t0, t1, b)] if close(*t0, s0) && close(*t1, s1) => Ok(FacetKind::Match { partner: *b }),
        [(t0, t1, b)] => {
            let mid = 0.5 * (t0 + t1);
            if close(*t0, s0) && close(mid, s1) {
                Ok(FacetKind::HalfOfSplit { coarse: *b, half: 0 })
            } else if close(mid, s0) && close(*t1, s1) {
                Ok(FacetKind::HalfOfSplit { coarse: *b, half: 1 })
            } else {
                Err("neighbor is neither equal nor twice as long".into())
            }
        }
        [(p0, p1, b0), (q0, q1, b1)] => {
            let mid = 0.5 * (s0 + s1);
            if close(*p0, s0) && close(*p1, mid) && close(*q0, mid) && close(*q1, s1) {
                Ok(FacetKind::SplitsInto { fine: [*b0, *b1] })
            } else {
                Err("two neighbors that do not split the side in halves".into())
            }
        }
        _ => Err(format!("{} neighbors across one side", touching.len())),
    }
}

/// The thirteen-reference branching layout: a 3x3 periodic block on
/// `[0,3]^2` surrounded by rings of unit, half and quarter sized cells,
/// each ring built from one side pattern and its quarter-turn images about
/// the block center.
pub fn branching_layout() -> Decomposition {
    let center = [1.5, 1.5];
    let mut subs = Vec::new();
    let mut next_id = 0u32;
    let mut push = |subs: &mut Vec<SubdomainSpec>, rect: Rect, reference: u32, rotation: Rotation| {
        subs.push(SubdomainSpec { id: next_id, rect, reference, rotation });
        next_id += 1;
    };
    for j in 0..3 {
        for i in 0..3 {
            let (x, y) = (i as f64, j as f64);
            push(&mut subs, Rect::new(x, y, x + 1.0, y + 1.0), 0, Rotation::IDENTITY);
        }
    }
    // Each ring: cell size, top-row y, then (x, reference) for the top row
    // without its right corner. References: corner, left cap, branch, right cap.
    let rings: [(f64, f64, u32); 3] = [(1.0, 3.0, 1), (0.5, 4.0, 5), (0.25, 4.5, 9)];
    for (h, y, base) in rings {
        let x_start = center[0] - (y - center[1]) - h;
        let count = ((2.0 * (y - center[1]) + 2.0 * h) / h).round() as usize;
        for k in 0..4 {
            let rot = Rotation::new(k);
            for p in 0..count - 1 {
                let x = x_start + p as f64 * h;
                let reference = match p {
                    0 => base,
                    1 => base + 1,
                    _ if p == count - 2 => base + 3,
                    _ => base + 2,
                };
                let rect = Rect::new(x, y, x + h, y + h).rotated_about(rot, center);
                push(&mut subs, rect, reference, rot);
            }
        }
    }
    let bbox = Rect::new(-1.75, -1.75, 4.75, 4.75);
    Decomposition::new(bbox, subs).expect("branching layout is valid")
}

/// `nx x ny` grid of unit squares, all copies of one reference.
pub fn uniform_grid(nx: usize, ny: usize) -> Decomposition {
    let mut subs = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            subs.push(SubdomainSpec {
                id: (j * nx + i) as u32,
                rect: Rect::new(i as f64, j as f64, i as f64 + 1.0, j as f64 + 1.0),
                reference: 0,
                rotation: Rotation::IDENTITY,
            });
        }
    }
    Decomposition::new(Rect::new(0.0, 0.0, nx as f64, ny as f64), subs)
        .expect("uniform grid is valid")
}
