#pragma once

#include <qse/types.hpp>

#include <chrono>
#include <string>

namespace qse {

struct InitialState {
  Matrix3d R = Matrix3d::Identity();
  Vector3d v = Vector3d::Zero();
  Vector3d p = Vector3d::Zero();
  Vector3d gyro_bias = Vector3d::Zero();
  Vector3d accel_bias = Vector3d::Zero();
};

/// Sequential frame-by-frame estimator. The first frame fixes the time origin
/// and is not propagated; each later frame propagates with the previous IMU
/// sample held over the interval, then applies its own measurements.
class Estimator {
 public:
  virtual ~Estimator() = default;

  EstimateRecord step(const SensorFrame& frame) {
    const auto start = std::chrono::steady_clock::now();
    EstimateRecord rec = process(frame);
    rec.iter_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
  }

  virtual std::string name() const = 0;

 protected:
  virtual EstimateRecord process(const SensorFrame& frame) = 0;
};

}  // namespace qse
