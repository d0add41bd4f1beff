#pragma once

// Strapdown IMU model shared by the invariant filter and smoother.
//
// Error convention: X_hat = Exp(xi) X, b_hat = b + zeta, tangent ordered
// (phi, v, p, d_1..d_k | zeta_gyro, zeta_accel).

#include <qse/types.hpp>

namespace qse::imu {

/// Continuous-time noise densities.
struct NoiseDensities {
  double gyro = 2e-3;        // rad/s/sqrt(Hz)
  double accel = 2e-2;       // m/s^2/sqrt(Hz)
  double gyro_bias = 1e-5;   // rad/s^2/sqrt(Hz)
  double accel_bias = 1e-4;  // m/s^3/sqrt(Hz)
  double contact = 1e-3;     // m/s/sqrt(Hz), contact-point random walk
};

/// How the (w^a dt) entry of the discrete noise vector relates to w^a.
enum class PositionNoise { Correlated, Independent };

/// Bias-corrected inputs held constant over one step.
struct StepInput {
  Vector3d gyro = Vector3d::Zero();
  Vector3d accel = Vector3d::Zero();
  double dt = 0.0;
};

/// Exact discrete integration under zero-order-hold inputs. Contacts are held.
Pose integrate(const Pose& X, const Vector6d& bias, const StepInput& u, const Vector3d& g = kGravity);

/// Continuous error-dynamics matrix A, size (15+3k)^2.
Eigen::MatrixXd error_dynamics(const Pose& X, const Vector3d& g = kGravity);

/// Noise input matrix B = dt * blockdiag(Ad_X, I6).
Eigen::MatrixXd noise_input(const Pose& X, double dt);

/// Covariance of the discrete noise vector (w_gyro, w_accel, w_accel dt, w_d.., w_bg, w_ba).
Eigen::MatrixXd noise_covariance(int contacts, const NoiseDensities& n, double dt,
                                 PositionNoise mode = PositionNoise::Correlated);

/// Exact first-order map of the error across one integration step.
struct Transition {
  Eigen::MatrixXd group;  // d xi_{t+1} / d xi_t, (9+3k)^2
  Eigen::MatrixXd bias;   // d xi_{t+1} / d zeta_t, (9+3k) x 6
};

Transition exact_transition(const Pose& X, const Vector6d& bias, const StepInput& u, const Vector3d& g = kGravity);

}  // namespace qse::imu
