#pragma once

// Contact-aided right-invariant EKF with IMU biases.

#include <qse/estimator.hpp>
#include <qse/imu_model.hpp>

#include <optional>
#include <span>
#include <vector>

namespace qse::iekf {

struct Config {
  imu::NoiseDensities noise;
  imu::PositionNoise position_noise = imu::PositionNoise::Correlated;
  double kinematic_noise = 5e-3;  // m, used when a sample carries no covariance
  double contact_init = 0.03;     // m, inflation on touch-down
  bool gating = true;
  double gate = 16.2662;  // chi2(3) at 0.999

  // Initial 1-sigma values.
  double initial_attitude = 0.1;
  double initial_velocity = 0.1;
  double initial_position = 1e-3;
  double initial_gyro_bias = 0.01;
  double initial_accel_bias = 0.1;
};

struct KinematicMeasurement {
  Foot foot = Foot::LF;
  Vector3d fk = Vector3d::Zero();
  Matrix3d cov = Matrix3d::Identity();  // base frame, m^2
};

struct Belief {
  Pose X;
  Vector6d bias = Vector6d::Zero();  // (gyro, accel)
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(15, 15);
  std::vector<Foot> feet;  // foot of each contact column of X

  static Belief initial(const InitialState& init, const Config& cfg);
  int contacts() const { return X.num_contacts(); }
  std::optional<int> slot(Foot f) const;
};

/// Measurements for every stance foot of a frame.
std::vector<KinematicMeasurement> measurements(const SensorFrame& frame, const Config& cfg);

Belief propagate(const Belief& b, const ImuSample& imu, double dt, const Config& cfg, const Vector3d& g = kGravity);

/// Stacked kinematic update. Feet whose innovation fails the gate are skipped.
Belief update(const Belief& b, std::span<const KinematicMeasurement> meas, const Config& cfg);

/// Removes lifted contacts and augments touched-down ones from their measurement.
Belief manage_contacts(const Belief& b, const ContactState& contacts, std::span<const KinematicMeasurement> meas,
                       const Config& cfg);

class Iekf : public Estimator {
 public:
  Iekf(const Config& cfg, const InitialState& init, const Vector3d& g = kGravity);
  std::string name() const override { return "iekf"; }
  const Belief& belief() const { return belief_; }

 protected:
  EstimateRecord process(const SensorFrame& frame) override;

 private:
  Config cfg_;
  Vector3d g_;
  Belief belief_;
  std::optional<SensorFrame> last_;
};

}  // namespace qse::iekf
