//! Physical constants of the bundled tasks.
//!
//! These follow the public classic-control definitions. `CONSTANTS_VERSION`
//! is written into every run directory; bump it whenever a value changes.

pub const CONSTANTS_VERSION: &str = "classic-control-v1";

pub mod cartpole {
    pub const GRAVITY: f64 = 9.8;
    pub const MASS_CART: f64 = 1.0;
    pub const MASS_POLE: f64 = 0.1;
    pub const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
    /// Half the pole length.
    pub const LENGTH: f64 = 0.5;
    pub const POLE_MASS_LENGTH: f64 = MASS_POLE * LENGTH;
    pub const FORCE_MAG: f64 = 10.0;
    pub const TAU: f64 = 0.02;
    pub const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
    pub const X_THRESHOLD: f64 = 2.4;
    pub const RESET_BOUND: f64 = 0.05;
    pub const MAX_STEPS: u32 = 500;
    /// Noise scale per observed feature: x, ẋ, θ, θ̇.
    pub const FEATURE_HALF_WIDTH: [f64; 4] = [X_THRESHOLD, 3.0, THETA_THRESHOLD, 3.5];
}

pub mod acrobot {
    use std::f64::consts::PI;

    pub const DT: f64 = 0.2;
    pub const LINK_LENGTH_1: f64 = 1.0;
    pub const LINK_MASS_1: f64 = 1.0;
    pub const LINK_MASS_2: f64 = 1.0;
    pub const LINK_COM_POS_1: f64 = 0.5;
    pub const LINK_COM_POS_2: f64 = 0.5;
    pub const LINK_MOI: f64 = 1.0;
    pub const GRAVITY: f64 = 9.8;
    pub const MAX_VEL_1: f64 = 4.0 * PI;
    pub const MAX_VEL_2: f64 = 9.0 * PI;
    pub const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];
    pub const RESET_BOUND: f64 = 0.1;
    pub const MAX_STEPS: u32 = 500;
    /// cos θ₁, sin θ₁, cos θ₂, sin θ₂, θ̇₁, θ̇₂.
    pub const FEATURE_HALF_WIDTH: [f64; 6] = [1.0, 1.0, 1.0, 1.0, MAX_VEL_1, MAX_VEL_2];
}

pub mod mountain_car {
    pub const MIN_POSITION: f64 = -1.2;
    pub const MAX_POSITION: f64 = 0.6;
    pub const MAX_SPEED: f64 = 0.07;
    pub const GOAL_POSITION: f64 = 0.5;
    pub const GOAL_VELOCITY: f64 = 0.0;
    pub const FORCE: f64 = 0.001;
    pub const GRAVITY: f64 = 0.0025;
    pub const RESET_LOW: f64 = -0.6;
    pub const RESET_HIGH: f64 = -0.4;
    pub const MAX_STEPS: u32 = 200;
    pub const FEATURE_HALF_WIDTH: [f64; 2] = [(MAX_POSITION - MIN_POSITION) / 2.0, MAX_SPEED];
}

pub mod pendulum {
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const DT: f64 = 0.05;
    pub const GRAVITY: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const RESET_VELOCITY: f64 = 1.0;
    pub const MAX_STEPS: u32 = 200;
    /// cos θ, sin θ, θ̇.
    pub const FEATURE_HALF_WIDTH: [f64; 3] = [1.0, 1.0, MAX_SPEED];
}
