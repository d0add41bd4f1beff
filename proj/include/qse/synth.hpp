#pragma once

// Synthetic ground truth, IMU and leg kinematics with analytic trajectories.

#include <qse/types.hpp>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qse::synth {

enum class ProfileKind { Rest, ConstantVelocity, Circle, FigureEight };

ProfileKind parse_profile(const std::string& name);
std::string profile_name(ProfileKind kind);

struct MotionProfile {
  ProfileKind kind = ProfileKind::Circle;
  double speed = 0.5;     // m/s; for the figure-eight, the speed at the crossing
  double radius = 2.0;    // m; circle radius or lemniscate half-width
  double yaw_rate = 0.0;  // rad/s, body spin for the constant-velocity profile
  double duration = 60.0;
  double rate = 400.0;

  int samples() const;
  double dt() const { return 1.0 / rate; }
};

struct GaitSpec {
  double period = 0.5;
  double duty = 0.6;
  std::array<double, kNumFeet> phase{0.0, 0.5, 0.5, 0.0};  // LF, RF, LH, RH
  std::array<Vector3d, kNumFeet> offsets{Vector3d(0.35, 0.2, -0.45), Vector3d(0.35, -0.2, -0.45),
                                         Vector3d(-0.35, 0.2, -0.45), Vector3d(-0.35, -0.2, -0.45)};
  double step_height = 0.08;

  bool in_stance(int foot, double t) const;
};

struct NoiseSpec {
  double gyro = 0.0;        // rad/s/sqrt(Hz)
  double accel = 0.0;       // m/s^2/sqrt(Hz)
  double gyro_bias = 0.0;   // rad/s^2/sqrt(Hz)
  double accel_bias = 0.0;  // m/s^3/sqrt(Hz)
  double contact = 0.0;     // m/sqrt(s), stance anchor drift
  double kinematics = 0.0;  // m, per-sample foot position noise
  double velocity = 0.0;    // m/s, per-sample v_rel noise
  Vector3d gyro_bias0 = Vector3d::Zero();
  Vector3d accel_bias0 = Vector3d::Zero();
  std::uint64_t seed = 1;

  static NoiseSpec zero() { return {}; }
  static NoiseSpec defaults();
};

struct TruthSample {
  double t = 0.0;
  Matrix3d R = Matrix3d::Identity();
  Vector3d p = Vector3d::Zero();
  Vector3d v = Vector3d::Zero();
  Vector3d omega = Vector3d::Zero();  // body-frame angular rate
  Vector3d accel = Vector3d::Zero();  // world-frame acceleration
};

std::vector<TruthSample> generate_ground_truth(const MotionProfile& profile);

/// Evaluates a profile at an arbitrary time.
TruthSample evaluate(const MotionProfile& profile, double t);

struct ImuSimulation {
  std::vector<ImuSample> imu;
  std::vector<Vector6d> bias;  // true (gyro, accel) bias at each sample
};

/// Sample k carries the constant inputs that carry the truth from t_k to
/// t_{k+1} exactly under zero-order hold.
ImuSimulation simulate_imu(std::span<const TruthSample> gt, const NoiseSpec& noise, const Vector3d& g = kGravity);

struct LegSimulation {
  std::vector<std::vector<FootKinematics>> kinematics;
  std::vector<ContactState> contacts;
  std::vector<std::array<Vector3d, kNumFeet>> feet_world;  // true foot positions
};

LegSimulation simulate_leg_data(std::span<const TruthSample> gt, const GaitSpec& gait, const NoiseSpec& noise);

struct SyntheticDataset {
  std::vector<TruthSample> truth;
  std::vector<GroundTruthRecord> ground_truth;
  std::vector<SensorFrame> frames;
  std::vector<Vector6d> bias;
};

SyntheticDataset generate(const MotionProfile& profile, const GaitSpec& gait, const NoiseSpec& noise);

/// The rest profile stands on all four feet.
GaitSpec default_gait(ProfileKind kind);

std::vector<GroundTruthRecord> to_records(std::span<const TruthSample> gt);

}  // namespace qse::synth
