#pragma once

// Cascaded attitude observer (NLO followed by an exogenous KF), leg odometry
// and a linear position/velocity KF.

#include <qse/estimator.hpp>

#include <optional>

namespace qse::muse {

using Matrix6d = Eigen::Matrix<double, 6, 6>;

struct Config {
  // Nonlinear observer.
  double k1 = 1.0;  // gravity direction
  double k2 = 0.5;  // heading reference
  double kb = 0.1;  // bias integration
  double accel_gate = 0.5;  // fraction of g tolerated in | |f| - g |
  Vector3d mag_reference = Vector3d::UnitX();
  bool centripetal_compensation = true;

  // Exogenous KF.
  double xkf_attitude_noise = 5e-3;  // rad/sqrt(s)
  double xkf_bias_noise = 1e-4;      // rad/s/sqrt(s)
  double xkf_accel_noise = 0.05;     // rad, direction noise per sample
  double xkf_heading_noise = 0.1;    // rad
  double xkf_initial_attitude = 0.1;  // rad, 1-sigma
  double xkf_initial_bias = 0.01;     // rad/s, 1-sigma

  // Position/velocity KF.
  double accel_noise = 2e-2;     // m/s^2/sqrt(Hz)
  double odometry_noise = 0.01;  // m/s, 1-sigma
  double initial_position = 1e-3;
  double initial_velocity = 0.1;
};

struct AttitudeState {
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();  // XKF output
  Vector3d bias = Vector3d::Zero();
  Matrix6d P = Matrix6d::Identity();

  Eigen::Quaterniond q_nlo = Eigen::Quaterniond::Identity();
  Vector3d bias_nlo = Vector3d::Zero();
  double heading_innovation = 0.0;  // last heading residual, rad

  static AttitudeState initial(const Matrix3d& R, const Vector3d& bias, const Config& cfg);
  Matrix3d R() const { return q.toRotationMatrix(); }
};

/// One observer step over dt with the sample held constant. `body_velocity`
/// feeds the centripetal correction of the specific force.
AttitudeState attitude_step(const AttitudeState& s, const ImuSample& imu, double dt, const Config& cfg,
                            const Vector3d& body_velocity = Vector3d::Zero());

struct LegOdometryResult {
  Vector3d velocity = Vector3d::Zero();  // body frame
  int stance = 0;
  bool valid = false;
};

LegOdometryResult leg_odometry(const SensorFrame& frame, const Vector3d& omega);

struct FusionState {
  Vector3d p = Vector3d::Zero();
  Vector3d v = Vector3d::Zero();
  Matrix6d P = Matrix6d::Identity();
  Matrix6d Q = Matrix6d::Zero();
  Matrix3d R_meas = Matrix3d::Identity();
};

/// Process noise for white acceleration of the given density.
Matrix6d fusion_process_noise(double accel_noise, double dt);

/// Constant-acceleration prediction with u = R f + g.
FusionState fusion_predict(const FusionState& s, const Matrix3d& R, const ImuSample& imu, double dt,
                           const Vector3d& g = kGravity);

/// Velocity update against z = R v^b; no-op when the odometry is invalid.
FusionState fusion_update(const FusionState& s, const Matrix3d& R, const LegOdometryResult& odo);

FusionState fusion_step(const FusionState& s, const Matrix3d& R, const ImuSample& imu, const LegOdometryResult& odo,
                        double dt, const Vector3d& g = kGravity);

class Muse : public Estimator {
 public:
  Muse(const Config& cfg, const InitialState& init);

  std::string name() const override { return "muse"; }
  const AttitudeState& attitude() const { return att_; }
  const FusionState& fusion() const { return fus_; }

 protected:
  EstimateRecord process(const SensorFrame& frame) override;

 private:
  Config cfg_;
  AttitudeState att_;
  FusionState fus_;
  std::optional<SensorFrame> last_;
  LegOdometryResult last_odo_;
};

}  // namespace qse::muse
