//! State updates. Each returns `(next features, reward, terminal)`.

use std::f64::consts::PI;

use super::constants;

pub(super) fn cartpole(s: &[f64], action: usize) -> (Vec<f64>, f64, bool) {
    use constants::cartpole::*;
    let (x, x_dot, theta, theta_dot) = (s[0], s[1], s[2], s[3]);
    let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
    let (sin, cos) = theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin - cos * temp) / (LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
    // Explicit Euler, positions first.
    let next = vec![x + TAU * x_dot, x_dot + TAU * x_acc, theta + TAU * theta_dot, theta_dot + TAU * theta_acc];
    let terminal = next[0].abs() > X_THRESHOLD || next[2].abs() > THETA_THRESHOLD;
    (next, 1.0, terminal)
}

/// Time derivative of `[θ₁, θ₂, θ̇₁, θ̇₂]` under torque on the second joint.
pub(super) fn acrobot_derivative(s: &[f64; 4], torque: f64) -> [f64; 4] {
    use constants::acrobot::*;
    let (m1, m2, l1, lc1, lc2, i1, i2, g) =
        (LINK_MASS_1, LINK_MASS_2, LINK_LENGTH_1, LINK_COM_POS_1, LINK_COM_POS_2, LINK_MOI, LINK_MOI, GRAVITY);
    let [theta1, theta2, dtheta1, dtheta2] = *s;
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin() - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

/// One classical fourth-order Runge–Kutta step.
pub(super) fn rk4(s: &[f64; 4], torque: f64, dt: f64) -> [f64; 4] {
    let add = |a: &[f64; 4], k: &[f64; 4], h: f64| std::array::from_fn(|i| a[i] + h * k[i]);
    let k1 = acrobot_derivative(s, torque);
    let k2 = acrobot_derivative(&add(s, &k1, dt / 2.0), torque);
    let k3 = acrobot_derivative(&add(s, &k2, dt / 2.0), torque);
    let k4 = acrobot_derivative(&add(s, &k3, dt), torque);
    std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Total mechanical energy of an acrobot state (kinetic plus potential).
pub fn acrobot_energy(s: &[f64]) -> f64 {
    use constants::acrobot::*;
    let (m1, m2, l1, lc1, lc2, i1, i2, g) =
        (LINK_MASS_1, LINK_MASS_2, LINK_LENGTH_1, LINK_COM_POS_1, LINK_COM_POS_2, LINK_MOI, LINK_MOI, GRAVITY);
    let (theta1, theta2, dtheta1, dtheta2) = (s[0], s[1], s[2], s[3]);
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let d3 = m2 * lc2 * lc2 + i2;
    let kinetic = 0.5 * (d1 * dtheta1 * dtheta1 + 2.0 * d2 * dtheta1 * dtheta2 + d3 * dtheta2 * dtheta2);
    let potential = -(m1 * lc1 + m2 * l1) * g * theta1.cos() - m2 * lc2 * g * (theta1 + theta2).cos();
    kinetic + potential
}

fn wrap_angle(x: f64) -> f64 {
    let period = 2.0 * PI;
    let mut y = x;
    while y > PI {
        y -= period;
    }
    while y < -PI {
        y += period;
    }
    y
}

pub(super) fn acrobot(s: &[f64], action: usize) -> (Vec<f64>, f64, bool) {
    use constants::acrobot::*;
    let state = [s[0], s[1], s[2], s[3]];
    let n = rk4(&state, TORQUES[action], DT);
    let next = vec![
        wrap_angle(n[0]),
        wrap_angle(n[1]),
        n[2].clamp(-MAX_VEL_1, MAX_VEL_1),
        n[3].clamp(-MAX_VEL_2, MAX_VEL_2),
    ];
    let terminal = -next[0].cos() - (next[1] + next[0]).cos() > 1.0;
    (next, if terminal { 0.0 } else { -1.0 }, terminal)
}

pub(super) fn mountain_car(s: &[f64], action: usize) -> (Vec<f64>, f64, bool) {
    use constants::mountain_car::*;
    let (mut position, mut velocity) = (s[0], s[1]);
    velocity += (action as f64 - 1.0) * FORCE + (3.0 * position).cos() * -GRAVITY;
    velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
    position += velocity;
    position = position.clamp(MIN_POSITION, MAX_POSITION);
    if position == MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    let terminal = position >= GOAL_POSITION && velocity >= GOAL_VELOCITY;
    (vec![position, velocity], -1.0, terminal)
}

fn normalize_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

pub(super) fn pendulum(s: &[f64], torque: f64) -> (Vec<f64>, f64, bool) {
    use constants::pendulum::*;
    let (theta, theta_dot) = (s[0], s[1]);
    let cost = normalize_angle(theta).powi(2) + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque;
    let acc = 3.0 * GRAVITY / (2.0 * LENGTH) * theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * torque;
    let new_theta_dot = (theta_dot + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
    let new_theta = theta + new_theta_dot * DT;
    (vec![new_theta, new_theta_dot], -cost, false)
}
