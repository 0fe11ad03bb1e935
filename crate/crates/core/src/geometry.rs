//! Rectangles, sides, quarter-turn rotations and reference-grid indexing.

use serde::{Deserialize, Serialize};

/// Side of a rectangle, listed counter-clockwise starting at the top.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Top,
    Left,
    Bottom,
    Right,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Top, Side::Left, Side::Bottom, Side::Right];

    pub fn index(self) -> usize {
        match self {
            Side::Top => 0,
            Side::Left => 1,
            Side::Bottom => 2,
            Side::Right => 3,
        }
    }

    pub fn from_index(i: usize) -> Side {
        Side::ALL[i % 4]
    }

    pub fn opposite(self) -> Side {
        Side::from_index(self.index() + 2)
    }

    /// Top and bottom sides carry horizontal edges.
    pub fn is_horizontal(self) -> bool {
        matches!(self, Side::Top | Side::Bottom)
    }

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
        }
    }

    /// Image of this side under a rotation of its rectangle.
    pub fn rotated(self, rot: Rotation) -> Side {
        Side::from_index(self.index() + rot.quarter_turns() as usize)
    }
}

/// Counter-clockwise rotation by a multiple of a quarter turn.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rotation(u8);

impl Rotation {
    pub const IDENTITY: Rotation = Rotation(0);

    pub fn new(quarter_turns: i64) -> Rotation {
        Rotation(quarter_turns.rem_euclid(4) as u8)
    }

    pub fn quarter_turns(self) -> u8 {
        self.0
    }

    pub fn inverse(self) -> Rotation {
        Rotation::new(-(self.0 as i64))
    }

    pub fn then(self, other: Rotation) -> Rotation {
        Rotation::new(self.0 as i64 + other.0 as i64)
    }

    pub fn matrix(self) -> SignedPerm {
        match self.0 {
            0 => SignedPerm([[1, 0], [0, 1]]),
            1 => SignedPerm([[0, -1], [1, 0]]),
            2 => SignedPerm([[-1, 0], [0, -1]]),
            _ => SignedPerm([[0, 1], [-1, 0]]),
        }
    }

    pub fn apply(self, v: [f64; 2]) -> [f64; 2] {
        self.matrix().apply(v)
    }

    /// Angle in radians.
    pub fn angle(self) -> f64 {
        self.0 as f64 * std::f64::consts::FRAC_PI_2
    }
}

impl Serialize for Rotation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let k = i64::deserialize(d)?;
        if !(0..4).contains(&k) {
            return Err(serde::de::Error::custom(format!(
                "rotation must be 0..=3 quarter turns, got {k}"
            )));
        }
        Ok(Rotation::new(k))
    }
}

/// 2x2 matrix with one entry of +-1 per row and column.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct SignedPerm(pub [[i8; 2]; 2]);

impl SignedPerm {
    pub fn apply(self, v: [f64; 2]) -> [f64; 2] {
        let m = self.0;
        [
            m[0][0] as f64 * v[0] + m[0][1] as f64 * v[1],
            m[1][0] as f64 * v[0] + m[1][1] as f64 * v[1],
        ]
    }

    pub fn scaled(self, s: i8) -> SignedPerm {
        let m = self.0;
        SignedPerm([[s * m[0][0], s * m[0][1]], [s * m[1][0], s * m[1][1]]])
    }

    pub fn transpose(self) -> SignedPerm {
        let m = self.0;
        SignedPerm([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    /// Inverse, equal to the transpose for signed permutations.
    pub fn inverse(self) -> SignedPerm {
        self.transpose()
    }

    pub fn mul(self, o: SignedPerm) -> SignedPerm {
        let (a, b) = (self.0, o.0);
        let mut m = [[0i8; 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, e) in row.iter_mut().enumerate() {
                *e = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        SignedPerm(m)
    }

    /// The single nonzero of row `r` as (column, sign).
    pub fn row_entry(self, r: usize) -> (usize, f64) {
        let row = self.0[r];
        if row[0] != 0 {
            (0, row[0] as f64)
        } else {
            (1, row[1] as f64)
        }
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Coordinate of the line carrying `side`.
    pub fn side_line(&self, side: Side) -> f64 {
        match side {
            Side::Top => self.y1,
            Side::Bottom => self.y0,
            Side::Left => self.x0,
            Side::Right => self.x1,
        }
    }

    /// Extent of `side` along its line, in increasing coordinate.
    pub fn side_span(&self, side: Side) -> (f64, f64) {
        if side.is_horizontal() {
            (self.x0, self.x1)
        } else {
            (self.y0, self.y1)
        }
    }

    /// Image under a rotation about `center`.
    pub fn rotated_about(&self, rot: Rotation, center: [f64; 2]) -> Rect {
        let corners = [[self.x0, self.y0], [self.x1, self.y1]];
        let mut out = [[0.0; 2]; 2];
        for (o, c) in out.iter_mut().zip(corners) {
            let r = rot.apply([c[0] - center[0], c[1] - center[1]]);
            *o = [r[0] + center[0], r[1] + center[1]];
        }
        Rect::new(
            out[0][0].min(out[1][0]),
            out[0][1].min(out[1][1]),
            out[0][0].max(out[1][0]),
            out[0][1].max(out[1][1]),
        )
    }
}

/// Cell and edge numbering of an `n x n` reference grid.
///
/// Vertical edges come first, indexed `j * (n + 1) + i` for the edge at
/// `x = i * hx` spanning row `j`; horizontal edges follow, indexed
/// `n * (n + 1) + j * n + i`. Cells are indexed `j * n + i`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct GridIndex {
    pub n: usize,
}

impl GridIndex {
    pub fn new(n: usize) -> GridIndex {
        GridIndex { n }
    }

    pub fn n_cells(&self) -> usize {
        self.n * self.n
    }

    pub fn n_edges(&self) -> usize {
        2 * self.n * (self.n + 1)
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.n, c / self.n)
    }

    pub fn vertical(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn horizontal(&self, i: usize, j: usize) -> usize {
        self.n * (self.n + 1) + j * self.n + i
    }

    pub fn is_vertical(&self, e: usize) -> bool {
        e < self.n * (self.n + 1)
    }

    /// Edge of cell `c` on `side`.
    pub fn cell_edge(&self, c: usize, side: Side) -> usize {
        let (i, j) = self.cell_ij(c);
        match side {
            Side::Right => self.vertical(i + 1, j),
            Side::Left => self.vertical(i, j),
            Side::Top => self.horizontal(i, j + 1),
            Side::Bottom => self.horizontal(i, j),
        }
    }

    /// Cell touching `side` at position `p`, counted in increasing coordinate.
    pub fn side_cell(&self, side: Side, p: usize) -> usize {
        let n = self.n;
        match side {
            Side::Top => self.cell(p, n - 1),
            Side::Bottom => self.cell(p, 0),
            Side::Left => self.cell(0, p),
            Side::Right => self.cell(n - 1, p),
        }
    }

    pub fn side_edge(&self, side: Side, p: usize) -> usize {
        self.cell_edge(self.side_cell(side, p), side)
    }

    /// Neighbor of cell `c` across `side`, if inside the grid.
    pub fn neighbor(&self, c: usize, side: Side) -> Option<usize> {
        let (i, j) = self.cell_ij(c);
        let n = self.n;
        match side {
            Side::Right if i + 1 < n => Some(self.cell(i + 1, j)),
            Side::Left if i > 0 => Some(self.cell(i - 1, j)),
            Side::Top if j + 1 < n => Some(self.cell(i, j + 1)),
            Side::Bottom if j > 0 => Some(self.cell(i, j - 1)),
            _ => None,
        }
    }

    /// Cell index after rotating the grid by `rot` (both grids `n x n`).
    pub fn rotate_cell(&self, c: usize, rot: Rotation) -> usize {
        let (i, j) = self.cell_ij(c);
        let m = self.n - 1;
        let (gi, gj) = match rot.quarter_turns() {
            0 => (i, j),
            1 => (m - j, i),
            2 => (m - i, m - j),
            _ => (j, m - i),
        };
        self.cell(gi, gj)
    }

    /// Position along `side` of a cell known to touch it.
    pub fn position_on_side(&self, c: usize, side: Side) -> usize {
        let (i, j) = self.cell_ij(c);
        if side.is_horizontal() {
            i
        } else {
            j
        }
    }
}

/// Canonical edge normal: `+x` for vertical edges, `+y` for horizontal ones.
pub fn canonical_normal(vertical: bool) -> [f64; 2] {
    if vertical {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    }
}

/// Map from reference-frame edge force (canonical normal) to the geometric
/// frame for a reference edge of the given orientation under `rot`.
pub fn edge_transfer(rot: Rotation, ref_vertical: bool) -> SignedPerm {
    let n = rot.apply(canonical_normal(ref_vertical));
    let geo_vertical = n[0] != 0.0;
    let can = canonical_normal(geo_vertical);
    let s = if n[0] * can[0] + n[1] * can[1] > 0.0 { 1 } else { -1 };
    rot.matrix().scaled(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn side_rotation_follows_normals() {
        for k in 0..4 {
            let rot = Rotation::new(k);
            for s in Side::ALL {
                let n = rot.apply(s.outward_normal());
                assert_eq!(n, s.rotated(rot).outward_normal());
            }
        }
    }

    #[test]
    fn transfer_signs_match_table() {
        let signs = |vertical| -> Vec<i8> {
            (0..4)
                .map(|k| {
                    let r = Rotation::new(k);
                    let t = edge_transfer(r, vertical);
                    let m = r.matrix();
                    if t == m {
                        1
                    } else {
                        assert_eq!(t, m.scaled(-1));
                        -1
                    }
                })
                .collect()
        };
        assert_eq!(signs(true), vec![1, 1, -1, -1]);
        assert_eq!(signs(false), vec![1, -1, -1, 1]);
    }

    #[test]
    fn grid_counts() {
        let g = GridIndex::new(3);
        assert_eq!(g.n_edges(), 24);
        assert_eq!(g.cell_edge(g.cell(2, 1), Side::Right), g.vertical(3, 1));
        assert_eq!(g.side_edge(Side::Top, 1), g.horizontal(1, 3));
        assert!(g.is_vertical(g.vertical(3, 2)));
        assert!(!g.is_vertical(g.horizontal(0, 0)));
    }

    #[test]
    fn rotated_cell_lands_on_rotated_side() {
        let g = GridIndex::new(5);
        for k in 0..4 {
            let rot = Rotation::new(k);
            for s in Side::ALL {
                for p in 0..5 {
                    let c = g.rotate_cell(g.side_cell(s, p), rot);
                    let gs = s.rotated(rot);
                    assert_eq!(g.side_cell(gs, g.position_on_side(c, gs)), c);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn four_quarter_turns_are_identity(n in 1usize..9, c0 in 0usize..81, k in 0i64..4) {
            let g = GridIndex::new(n);
            let c = c0 % g.n_cells();
            let r = Rotation::new(k);
            let mut x = c;
            for _ in 0..4 { x = g.rotate_cell(x, r); }
            prop_assert_eq!(x, c);
            prop_assert_eq!(g.rotate_cell(g.rotate_cell(c, r), r.inverse()), c);
        }

        #[test]
        fn transfer_is_orthogonal(k in 0i64..4, v in any::<bool>()) {
            let t = edge_transfer(Rotation::new(k), v);
            prop_assert_eq!(t.mul(t.inverse()), SignedPerm([[1, 0], [0, 1]]));
        }

        #[test]
        fn rect_rotation_preserves_area(x in -5.0f64..5.0, y in -5.0f64..5.0,
                                        w in 0.1f64..3.0, h in 0.1f64..3.0, k in 0i64..4) {
            let r = Rect::new(x, y, x + w, y + h);
            let q = r.rotated_about(Rotation::new(k), [0.3, -0.7]);
            prop_assert!((q.area() - r.area()).abs() < 1e-12);
            let back = q.rotated_about(Rotation::new(k).inverse(), [0.3, -0.7]);
            prop_assert!((back.x0 - r.x0).abs() < 1e-12 && (back.y1 - r.y1).abs() < 1e-12);
        }
    }
}
