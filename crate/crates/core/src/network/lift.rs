use serde::{Deserialize, Serialize};

use crate::mesh::Point;

/// Value and pure spatial derivatives `[v, ∂x, ∂xx, ∂y, ∂yy]`.
pub type SpaceJet = [f64; 5];

/// Closed-form Dirichlet lift `T = A + B·T̃` with `B = 0` on the
/// prescribed-temperature boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Lift {
    /// `A ≡ 0`, `B ≡ 1`.
    Identity,
    /// `A = θ_L + (θ_R − θ_L)x/L`, `B = x(L − x)`.
    Bar {
        theta_left: f64,
        theta_right: f64,
        length: f64,
    },
    /// `A = θ_b + (θ_t − θ_b)y/H`, `B = y(H − y)`.
    Plate {
        theta_bottom: f64,
        theta_top: f64,
        height: f64,
    },
    /// `A = θ_hole`, `B = √(x² + y²) − R`.
    Hole { theta_hole: f64, radius: f64 },
}

impl Lift {
    pub fn a(&self, x: Point) -> SpaceJet {
        match *self {
            Lift::Identity => [0.0; 5],
            Lift::Bar {
                theta_left,
                theta_right,
                length,
            } => {
                let s = (theta_right - theta_left) / length;
                [theta_left + s * x[0], s, 0.0, 0.0, 0.0]
            }
            Lift::Plate {
                theta_bottom,
                theta_top,
                height,
            } => {
                let s = (theta_top - theta_bottom) / height;
                [theta_bottom + s * x[1], 0.0, 0.0, s, 0.0]
            }
            Lift::Hole { theta_hole, .. } => [theta_hole, 0.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn b(&self, x: Point) -> SpaceJet {
        match *self {
            Lift::Identity => [1.0, 0.0, 0.0, 0.0, 0.0],
            Lift::Bar { length, .. } => [x[0] * (length - x[0]), length - 2.0 * x[0], -2.0, 0.0, 0.0],
            Lift::Plate { height, .. } => [x[1] * (height - x[1]), 0.0, 0.0, height - 2.0 * x[1], -2.0],
            Lift::Hole { radius, .. } => {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let r3 = r * r * r;
                [r - radius, x[0] / r, x[1] * x[1] / r3, x[1] / r, x[0] * x[0] / r3]
            }
        }
    }
}

/// `T = A + B·T̃` at one point.
pub fn dirichlet_lift(raw: f64, x: Point, lift: &Lift) -> f64 {
    lift.a(x)[0] + lift.b(x)[0] * raw
}
