#pragma once

// Trajectory evaluation: alignment, ATE, RPE, velocity RMSE and timing.

#include <qse/types.hpp>

#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qse::metrics {

struct Trajectory {
  std::vector<double> t;
  std::vector<Vector3d> p;
  std::vector<Eigen::Quaterniond> q;
  std::optional<std::vector<Vector3d>> v;

  std::size_t size() const { return t.size(); }
  bool empty() const { return t.empty(); }
  void push_back(double time, const Vector3d& pos, const Eigen::Quaterniond& rot);
  void push_back(double time, const Vector3d& pos, const Eigen::Quaterniond& rot, const Vector3d& vel);

  /// Throws std::invalid_argument on non-increasing time, non-unit
  /// quaternions or mismatched channel lengths.
  void validate() const;

  static Trajectory from(std::span<const EstimateRecord> records, bool with_velocity = true);
  static Trajectory from(std::span<const GroundTruthRecord> records, bool with_velocity = true);
};

struct PoseSample {
  Vector3d p = Vector3d::Zero();
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  std::optional<Vector3d> v;
};

/// Linear in position and velocity, shortest-arc SLERP in orientation.
PoseSample interpolate_pose(const Trajectory& traj, double t);

/// Estimate samples paired with the reference interpolated at the same
/// timestamps. Estimate samples outside the reference span are dropped.
struct Association {
  Trajectory est;
  Trajectory ref;
};
Association associate(const Trajectory& est, const Trajectory& ref);

/// x -> R x + t
struct RigidTransform {
  Matrix3d R = Matrix3d::Identity();
  Vector3d t = Vector3d::Zero();

  Vector3d operator()(const Vector3d& x) const { return R * x + t; }
  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
};

class DegenerateGeometry : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Least-squares rigid map of `src` onto `dst`, without scale.
RigidTransform umeyama_points(std::span<const Vector3d> src, std::span<const Vector3d> dst);
RigidTransform umeyama_se3(const Trajectory& est, const Trajectory& ref);

double ate(const Trajectory& est, const Trajectory& ref, bool align = true);

enum class Window { Spatial, Temporal };
enum class Mode { Translation, Rotation };

inline constexpr double kSpatialDelta = 1.0;  // m of reference path

/// Index pairs into `ref`: consecutive non-overlapping segments, each ending
/// at the first sample whose accumulated path length reaches `delta`.
std::vector<std::pair<std::size_t, std::size_t>> spatial_segments(std::span<const Vector3d> ref,
                                                                  double delta = kSpatialDelta);

/// Root mean square relative pose error, in m or degrees.
double rpe(const Trajectory& est, const Trajectory& ref, Window window, Mode mode);

double velocity_rmse(const Trajectory& est, const Trajectory& ref);

struct TimingStats {
  double mean = 0.0;
  double median = 0.0;
  double p99 = 0.0;  // nearest rank
};
TimingStats timing_stats(std::span<const double> seconds);
TimingStats timing_stats(std::span<const EstimateRecord> records);

struct MetricReport {
  std::string estimator;
  bool aligned = true;  // false when alignment was skipped or degenerate
  double ate_m = 0.0;
  std::optional<double> ate_vel_mps;
  std::optional<double> rpe_trans_spatial_m;  // absent when the path is shorter than one segment
  double rpe_trans_temporal_m = 0.0;
  std::optional<double> rpe_rot_spatial_deg;
  double rpe_rot_temporal_deg = 0.0;
  std::optional<TimingStats> timing;
};

/// Velocity RMSE is left absent when either side lacks velocities. With
/// `align`, degenerate geometry (a static or straight path) falls back to the
/// unaligned ATE and clears `aligned`.
MetricReport evaluate(const std::string& estimator, const Trajectory& est, const Trajectory& ref, bool align = true);

/// Row labels and values in table order; absent values are nullopt.
std::vector<std::pair<std::string, std::optional<double>>> rows(const MetricReport& r);

std::string to_text(std::span<const MetricReport> reports);
std::string to_json(std::span<const MetricReport> reports);
std::vector<MetricReport> from_json(const std::string& text);
/// Markdown table with one column per estimator.
std::string comparison_table(std::span<const MetricReport> reports);

}  // namespace qse::metrics
