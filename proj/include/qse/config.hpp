#pragma once

// Run configuration: one YAML file with flat dotted keys (nested maps are
// flattened, so `gen: {profile: rest}` and `gen.profile: rest` are the same).

#include <qse/estimator.hpp>
#include <qse/iekf.hpp>
#include <qse/muse.hpp>
#include <qse/smoother.hpp>
#include <qse/synth.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qse::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EstimatorKind { Muse, Iekf, Smoother };

EstimatorKind parse_estimator(const std::string& name);
std::string estimator_name(EstimatorKind kind);

struct GenConfig {
  synth::MotionProfile profile;
  std::optional<double> gait_period;  // profile default when absent
  std::optional<double> gait_duty;
  bool noisy = true;
  synth::NoiseSpec noise = synth::NoiseSpec::defaults();
};

struct InitConfig {
  bool from_ground_truth = true;  // start at the first ground-truth pose and velocity
  double roll_error_deg = 0.0;    // applied on top as R Exp(roll e_x)

  double attitude_std = 0.1;  // rad
  double velocity_std = 0.1;  // m/s
  double position_std = 1e-3;  // m
  double gyro_bias_std = 0.01;  // rad/s
  double accel_bias_std = 0.1;  // m/s^2
};

struct RunConfig {
  std::vector<EstimatorKind> estimators{EstimatorKind::Muse, EstimatorKind::Iekf, EstimatorKind::Smoother};
  std::uint64_t seed = 1;
  double gravity = kGravityMagnitude;

  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";

  GenConfig gen;
  InitConfig init;

  // Noise model assumed by the estimators.
  imu::NoiseDensities noise;
  double kinematic_noise = 5e-3;  // m, 1-sigma foot position
  double contact_init = 0.03;     // m, new contact point

  imu::PositionNoise iekf_position_noise = imu::PositionNoise::Correlated;
  bool iekf_gating = true;
  double iekf_gate = 16.2662;

  int window = 3;
  int smoother_max_iterations = 5;
  double smoother_tolerance = 1e-6;
  int smoother_max_halvings = 4;
  bool smoother_exact_observation_jacobian = false;
  bool smoother_exact_prior_jacobian = false;

  muse::Config muse;

  Vector3d gravity_vector() const { return Vector3d(0.0, 0.0, -gravity); }
  void validate() const;
};

/// Parses YAML text over the defaults. Unknown keys and malformed values throw ConfigError.
RunConfig parse_config(const std::string& yaml, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Every key with its current value, one `key: value` line each, loadable by parse_config.
std::string dump_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

muse::Config muse_config(const RunConfig& cfg);
iekf::Config iekf_config(const RunConfig& cfg);
smoother::Config smoother_config(const RunConfig& cfg);

synth::SyntheticDataset generate(const RunConfig& cfg);

/// First ground-truth state (when enabled) with the configured roll error applied.
InitialState initial_state(const RunConfig& cfg, const std::vector<GroundTruthRecord>& gt);

std::unique_ptr<Estimator> make_estimator(EstimatorKind kind, const RunConfig& cfg, const InitialState& init);

}  // namespace qse::config
