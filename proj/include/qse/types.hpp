#pragma once

#include <qse/liegroups.hpp>

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qse {

/// Standard gravity, world z up.
inline const Vector3d kGravity(0.0, 0.0, -9.80665);
inline constexpr double kGravityMagnitude = 9.80665;

enum class Foot : int { LF = 0, RF = 1, LH = 2, RH = 3 };
inline constexpr int kNumFeet = 4;
inline constexpr std::array<Foot, kNumFeet> kAllFeet{Foot::LF, Foot::RF, Foot::LH, Foot::RH};

inline constexpr int index(Foot f) { return static_cast<int>(f); }
inline constexpr std::string_view foot_name(Foot f) {
  constexpr std::array<std::string_view, kNumFeet> names{"lf", "rf", "lh", "rh"};
  return names[static_cast<std::size_t>(f)];
}

struct ImuSample {
  double t = 0.0;
  Vector3d gyro = Vector3d::Zero();   // rad/s, body
  Vector3d accel = Vector3d::Zero();  // specific force, m/s^2, body
  std::optional<Vector3d> mag;        // unit vector, body
};

struct FootKinematics {
  Foot foot = Foot::LF;
  Vector3d fk = Vector3d::Zero();     // foot position in base frame, m
  Vector3d v_rel = Vector3d::Zero();  // J(q) qdot, base frame, m/s
  // Kinematic noise covariance J_p Cov(w_q) J_p^T. Estimators fall back to
  // their configured isotropic value when absent.
  std::optional<Matrix3d> covariance;
};

using ContactState = std::array<bool, kNumFeet>;

inline int stance_count(const ContactState& c) {
  int n = 0;
  for (bool b : c) n += b ? 1 : 0;
  return n;
}

struct SensorFrame {
  double t = 0.0;
  ImuSample imu;
  std::vector<FootKinematics> feet;
  ContactState contact{};

  const FootKinematics* find(Foot f) const {
    for (const auto& k : feet)
      if (k.foot == f) return &k;
    return nullptr;
  }
};

struct GroundTruthRecord {
  double t = 0.0;
  Vector3d p = Vector3d::Zero();
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Vector3d v = Vector3d::Zero();
};

struct EstimateRecord {
  double t = 0.0;
  Vector3d p = Vector3d::Zero();
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Vector3d v = Vector3d::Zero();
  double iter_time = 0.0;  // wall-clock seconds for this update
};

/// Base class for errors raised on malformed input files.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public InputError {
 public:
  SchemaError(const std::string& file, const std::string& column)
      : InputError(file + ": missing column '" + column + "'"), column_(column) {}
  const std::string& column() const { return column_; }

 private:
  std::string column_;
};

class DataError : public InputError {
 public:
  DataError(const std::string& file, long row, const std::string& column, const std::string& what)
      : InputError(file + ": row " + std::to_string(row) + (column.empty() ? "" : ", column '" + column + "'") +
                   ": " + what),
        row_(row),
        column_(column) {}
  long row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  long row_;
  std::string column_;
};

}  // namespace qse
