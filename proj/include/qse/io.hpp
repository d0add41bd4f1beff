#pragma once

// CSV ingestion and export for the benchmark pipeline.
//
//   sensor_data.csv      t,wx,wy,wz,ax,ay,az,[mx,my,mz,]contact_lf,contact_rf,contact_lh,contact_rh
//                        (force_lf..force_rh may replace the contact columns)
//   feet_kinematics.csv  t, then per foot LF,RF,LH,RH: fk_x,fk_y,fk_z,vrel_x,vrel_y,vrel_z
//   groundtruth.csv      t,px,py,pz,qx,qy,qz,qw,vx,vy,vz
//   fused_state.csv      t,px,py,pz,qx,qy,qz,qw,vx,vy,vz,iter_time_s
//
// Header rows are mandatory and column order is fixed. Data rows are numbered
// from 1 in error messages.

#include <qse/types.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace qse::io {

struct LoadOptions {
  bool timestamps_ns = false;     // integer nanoseconds instead of float seconds
  double force_threshold = 30.0;  // N, used only when force columns replace contact flags
};

struct ContactRecord {
  double t = 0.0;
  ContactState contact{};
};

struct KinematicsRecord {
  double t = 0.0;
  std::array<FootKinematics, kNumFeet> feet;
};

struct SensorLog {
  std::vector<ImuSample> imu;
  std::vector<ContactRecord> contacts;
  bool has_mag = false;
};

struct Dataset {
  std::vector<SensorFrame> frames;
  std::vector<GroundTruthRecord> ground_truth;
  std::size_t sensor_rows = 0;
  std::size_t kinematics_rows = 0;
  std::size_t groundtruth_rows = 0;
};

SensorLog read_sensor_csv(const std::filesystem::path& path, const LoadOptions& opt = {});
std::vector<KinematicsRecord> read_kinematics_csv(const std::filesystem::path& path, const LoadOptions& opt = {});
std::vector<GroundTruthRecord> read_groundtruth_csv(const std::filesystem::path& path, const LoadOptions& opt = {});
std::vector<EstimateRecord> read_fused_state_csv(const std::filesystem::path& path);

/// Any CSV starting with t,px,py,pz,qx,qy,qz,qw; velocity and iteration time
/// columns are picked up by name when present.
struct TrajectoryFile {
  std::vector<EstimateRecord> records;
  bool has_velocity = false;
  bool has_timing = false;
};
TrajectoryFile read_trajectory_csv(const std::filesystem::path& path);

/// Loads and synchronizes the three pipeline inputs. An empty groundtruth
/// path skips that file.
Dataset load_dataset(const std::filesystem::path& sensor_path, const std::filesystem::path& kinematics_path,
                     const std::filesystem::path& groundtruth_path, const LoadOptions& opt = {});

/// Frames at IMU timestamps; kinematics and contacts by zero-order hold.
/// IMU samples before the first kinematics (or contact) record are dropped.
std::vector<SensorFrame> synchronize(std::span<const ImuSample> imu, std::span<const KinematicsRecord> kinematics,
                                     std::span<const ContactRecord> contacts);

void write_sensor_csv(const std::filesystem::path& path, std::span<const SensorFrame> frames);
void write_kinematics_csv(const std::filesystem::path& path, std::span<const SensorFrame> frames);
void write_groundtruth_csv(const std::filesystem::path& path, std::span<const GroundTruthRecord> gt);
void write_fused_state_csv(const std::filesystem::path& path, std::span<const EstimateRecord> est);

/// TUM trajectory: `timestamp tx ty tz qx qy qz qw` per line.
void export_tum(const std::filesystem::path& path, std::span<const EstimateRecord> traj);
void export_tum(const std::filesystem::path& path, std::span<const GroundTruthRecord> traj);
std::string tum_line(double t, const Vector3d& p, const Eigen::Quaterniond& q);
std::vector<GroundTruthRecord> read_tum(const std::filesystem::path& path);

}  // namespace qse::io
