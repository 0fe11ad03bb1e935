use serde::{Deserialize, Serialize};

use super::AssemblyError;
use crate::geometry::{Rotation, Side};

/// Loaded fractions of every subdomain facet on a side, measured in
/// increasing coordinate along the facet.
pub fn default_intervals() -> Vec<[f64; 2]> {
    vec![[2.0 / 6.0, 3.0 / 6.0], [4.0 / 6.0, 5.0 / 6.0]]
}

const ENDPOINT_SLACK: f64 = 1e-12;

/// Traction `sigma * n_out` applied on the loaded intervals of one side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideLoad {
    pub traction: [f64; 2],
    #[serde(default = "default_intervals")]
    pub intervals: Vec<[f64; 2]>,
}

impl SideLoad {
    pub fn new(traction: [f64; 2], intervals: Vec<[f64; 2]>) -> SideLoad {
        SideLoad { traction, intervals }
    }

    /// Closed-interval test with slack for rounding, so a midpoint sitting on
    /// an endpoint is loaded no matter how the endpoint was computed.
    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|&[a, b]| a - ENDPOINT_SLACK <= t && t <= b + ENDPOINT_SLACK)
    }
}

/// Loads per side of the bounding box. A missing side is traction free and
/// has no loaded intervals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top: Option<SideLoad>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<SideLoad>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bottom: Option<SideLoad>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<SideLoad>,
}

impl LoadSpec {
    pub fn side(&self, side: Side) -> Option<&SideLoad> {
        match side {
            Side::Top => self.top.as_ref(),
            Side::Left => self.left.as_ref(),
            Side::Bottom => self.bottom.as_ref(),
            Side::Right => self.right.as_ref(),
        }
    }

    pub fn side_mut(&mut self, side: Side) -> &mut Option<SideLoad> {
        match side {
            Side::Top => &mut self.top,
            Side::Left => &mut self.left,
            Side::Bottom => &mut self.bottom,
            Side::Right => &mut self.right,
        }
    }

    /// Inward pressure `p` on all four sides.
    pub fn compression(p: f64, intervals: Vec<[f64; 2]>) -> LoadSpec {
        let mut l = LoadSpec::default();
        for s in Side::ALL {
            let n = s.outward_normal();
            *l.side_mut(s) = Some(SideLoad::new([-p * n[0], -p * n[1]], intervals.clone()));
        }
        l
    }

    /// Pure shear of magnitude `tau`: top `+x`, right `+y`, bottom `-x`, left `-y`.
    pub fn shear(tau: f64, intervals: Vec<[f64; 2]>) -> LoadSpec {
        LoadSpec {
            top: Some(SideLoad::new([tau, 0.0], intervals.clone())),
            right: Some(SideLoad::new([0.0, tau], intervals.clone())),
            bottom: Some(SideLoad::new([-tau, 0.0], intervals.clone())),
            left: Some(SideLoad::new([0.0, -tau], intervals)),
        }
    }

    /// Same physical load after rotating the domain by `rot` about its center.
    pub fn rotated(&self, rot: Rotation) -> LoadSpec {
        let mut out = self.clone();
        for _ in 0..rot.quarter_turns() {
            let mut next = LoadSpec::default();
            for s in Side::ALL {
                if let Some(l) = out.side(s) {
                    let traction = Rotation::new(1).apply(l.traction);
                    // Coordinates along vertical sides reverse under a quarter turn.
                    let intervals = if s.is_horizontal() {
                        l.intervals.clone()
                    } else {
                        l.intervals.iter().map(|&[a, b]| [1.0 - b, 1.0 - a]).collect()
                    };
                    *next.side_mut(s.rotated(Rotation::new(1))) = Some(SideLoad { traction, intervals });
                }
            }
            out = next;
        }
        out
    }

    pub fn validate(&self) -> Result<(), AssemblyError> {
        for s in Side::ALL {
            let Some(l) = self.side(s) else { continue };
            if !l.traction.iter().all(|t| t.is_finite()) {
                return Err(AssemblyError::InvalidLoad(format!("non-finite traction on side {s:?}")));
            }
            for &[a, b] in &l.intervals {
                if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b <= 1.0) {
                    return Err(AssemblyError::InvalidLoad(format!(
                        "interval [{a}, {b}] on side {s:?} is not inside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}
