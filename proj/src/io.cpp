#include <qse/io.hpp>

#include <fmt/format.h>
#include <fmt/os.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

namespace qse::io {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Reads a whole CSV file. Blank lines are ignored; every other row must have
// the header's column count.
class CsvTable {
 public:
  CsvTable(const std::filesystem::path& path) : file_(path.string()) {
    std::ifstream in(path);
    if (!in) throw InputError(file_ + ": cannot open file");
    std::string line;
    if (!std::getline(in, header_line_)) throw SchemaError(file_, "<header>");
    for (auto h : split(header_line_, ',')) header_.emplace_back(h);
    long row = 0;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      ++row;
      rows_.push_back(line);
    }
  }

  const std::string& file() const { return file_; }
  const std::vector<std::string>& header() const { return header_; }
  std::size_t size() const { return rows_.size(); }

  // Verifies that `expected` appears in order starting at column `at`.
  void require(std::size_t at, std::span<const std::string> expected) const {
    for (std::size_t i = 0; i < expected.size(); ++i)
      if (at + i >= header_.size() || header_[at + i] != expected[i]) throw SchemaError(file_, expected[i]);
  }

  bool has_at(std::size_t at, std::string_view name) const { return at < header_.size() && header_[at] == name; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
      if (header_[i] == name) return i;
    return std::nullopt;
  }

  std::vector<std::string_view> fields(std::size_t row) const {
    auto f = split(rows_[row], ',');
    if (f.size() != header_.size())
      throw DataError(file_, static_cast<long>(row + 1), "",
                      fmt::format("expected {} fields, found {}", header_.size(), f.size()));
    return f;
  }

  double number(const std::vector<std::string_view>& f, std::size_t row, std::size_t col) const {
    double value = 0.0;
    const auto s = f[col];
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value))
      throw DataError(file_, static_cast<long>(row + 1), header_[col], fmt::format("cannot parse number '{}'", s));
    return value;
  }

  double timestamp(const std::vector<std::string_view>& f, std::size_t row, const LoadOptions& opt) const {
    if (!opt.timestamps_ns) return number(f, row, 0);
    long long ns = 0;
    const auto s = f[0];
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), ns);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw DataError(file_, static_cast<long>(row + 1), header_[0], fmt::format("cannot parse integer ns '{}'", s));
    return static_cast<double>(ns) * 1e-9;
  }

  Vector3d vec3(const std::vector<std::string_view>& f, std::size_t row, std::size_t col) const {
    return {number(f, row, col), number(f, row, col + 1), number(f, row, col + 2)};
  }

  void check_monotone(double prev, double t, std::size_t row) const {
    if (row > 0 && !(t > prev))
      throw DataError(file_, static_cast<long>(row + 1), header_[0],
                      fmt::format("timestamp {} not strictly greater than previous {}", t, prev));
  }

 private:
  std::string file_;
  std::string header_line_;
  std::vector<std::string> header_;
  std::vector<std::string> rows_;
};

const std::vector<std::string> kImuCols{"t", "wx", "wy", "wz", "ax", "ay", "az"};
const std::vector<std::string> kMagCols{"mx", "my", "mz"};
const std::vector<std::string> kContactCols{"contact_lf", "contact_rf", "contact_lh", "contact_rh"};
const std::vector<std::string> kForceCols{"force_lf", "force_rf", "force_lh", "force_rh"};
const std::vector<std::string> kPoseCols{"t", "px", "py", "pz", "qx", "qy", "qz", "qw", "vx", "vy", "vz"};

std::vector<std::string> kinematics_columns() {
  std::vector<std::string> cols{"t"};
  for (Foot f : kAllFeet)
    for (const char* q : {"fk_x", "fk_y", "fk_z", "vrel_x", "vrel_y", "vrel_z"})
      cols.push_back(fmt::format("{}_{}", foot_name(f), q));
  return cols;
}

Eigen::Quaterniond parse_quat(const CsvTable& tab, const std::vector<std::string_view>& f, std::size_t row,
                              std::size_t col) {
  const double x = tab.number(f, row, col), y = tab.number(f, row, col + 1), z = tab.number(f, row, col + 2),
               w = tab.number(f, row, col + 3);
  Eigen::Quaterniond q(w, x, y, z);
  const double n = q.norm();
  if (std::abs(n - 1.0) > 1e-6)
    throw DataError(tab.file(), static_cast<long>(row + 1), tab.header()[col],
                    fmt::format("quaternion norm {} is not 1", n));
  q.normalize();
  return q;
}

template <typename... Args> void write_line(fmt::ostream& out, fmt::format_string<Args...> f, Args&&... args) {
  out.print(f, std::forward<Args>(args)...);
}

}  // namespace

SensorLog read_sensor_csv(const std::filesystem::path& path, const LoadOptions& opt) {
  CsvTable tab(path);
  tab.require(0, kImuCols);
  std::size_t col = kImuCols.size();
  SensorLog log;
  if (tab.has_at(col, "mx")) {
    tab.require(col, kMagCols);
    log.has_mag = true;
    col += 3;
  }
  bool force = false;
  if (tab.has_at(col, "force_lf")) {
    tab.require(col, kForceCols);
    force = true;
  } else {
    tab.require(col, kContactCols);
  }

  log.imu.reserve(tab.size());
  log.contacts.reserve(tab.size());
  double prev = 0.0;
  for (std::size_t r = 0; r < tab.size(); ++r) {
    const auto f = tab.fields(r);
    ImuSample s;
    s.t = tab.timestamp(f, r, opt);
    tab.check_monotone(prev, s.t, r);
    prev = s.t;
    s.gyro = tab.vec3(f, r, 1);
    s.accel = tab.vec3(f, r, 4);
    if (log.has_mag) s.mag = tab.vec3(f, r, 7);
    ContactRecord c{s.t, {}};
    for (int i = 0; i < kNumFeet; ++i) {
      const double value = tab.number(f, r, col + i);
      if (force) {
        c.contact[i] = value > opt.force_threshold;
      } else {
        if (value != 0.0 && value != 1.0)
          throw DataError(tab.file(), static_cast<long>(r + 1), tab.header()[col + i], "contact flag must be 0 or 1");
        c.contact[i] = value == 1.0;
      }
    }
    log.imu.push_back(s);
    log.contacts.push_back(c);
  }
  return log;
}

std::vector<KinematicsRecord> read_kinematics_csv(const std::filesystem::path& path, const LoadOptions& opt) {
  CsvTable tab(path);
  tab.require(0, kinematics_columns());
  std::vector<KinematicsRecord> out;
  out.reserve(tab.size());
  double prev = 0.0;
  for (std::size_t r = 0; r < tab.size(); ++r) {
    const auto f = tab.fields(r);
    KinematicsRecord rec;
    rec.t = tab.timestamp(f, r, opt);
    tab.check_monotone(prev, rec.t, r);
    prev = rec.t;
    for (int i = 0; i < kNumFeet; ++i) {
      auto& k = rec.feet[i];
      k.foot = kAllFeet[i];
      k.fk = tab.vec3(f, r, 1 + 6 * i);
      k.v_rel = tab.vec3(f, r, 4 + 6 * i);
    }
    out.push_back(rec);
  }
  return out;
}

std::vector<GroundTruthRecord> read_groundtruth_csv(const std::filesystem::path& path, const LoadOptions& opt) {
  CsvTable tab(path);
  tab.require(0, kPoseCols);
  std::vector<GroundTruthRecord> out;
  out.reserve(tab.size());
  double prev = 0.0;
  for (std::size_t r = 0; r < tab.size(); ++r) {
    const auto f = tab.fields(r);
    GroundTruthRecord g;
    g.t = tab.timestamp(f, r, opt);
    tab.check_monotone(prev, g.t, r);
    prev = g.t;
    g.p = tab.vec3(f, r, 1);
    g.q = parse_quat(tab, f, r, 4);
    g.v = tab.vec3(f, r, 8);
    out.push_back(g);
  }
  return out;
}

std::vector<EstimateRecord> read_fused_state_csv(const std::filesystem::path& path) {
  CsvTable tab(path);
  std::vector<std::string> cols = kPoseCols;
  cols.push_back("iter_time_s");
  tab.require(0, cols);
  std::vector<EstimateRecord> out;
  out.reserve(tab.size());
  double prev = 0.0;
  for (std::size_t r = 0; r < tab.size(); ++r) {
    const auto f = tab.fields(r);
    EstimateRecord e;
    e.t = tab.number(f, r, 0);
    tab.check_monotone(prev, e.t, r);
    prev = e.t;
    e.p = tab.vec3(f, r, 1);
    e.q = parse_quat(tab, f, r, 4);
    e.v = tab.vec3(f, r, 8);
    e.iter_time = tab.number(f, r, 11);
    if (e.iter_time < 0.0) throw DataError(tab.file(), static_cast<long>(r + 1), "iter_time_s", "negative time");
    out.push_back(e);
  }
  return out;
}

TrajectoryFile read_trajectory_csv(const std::filesystem::path& path) {
  CsvTable tab(path);
  tab.require(0, std::span(kPoseCols).first(8));
  const auto vx = tab.find("vx"), iter = tab.find("iter_time_s");
  const bool vel = vx && tab.has_at(*vx + 1, "vy") && tab.has_at(*vx + 2, "vz");
  TrajectoryFile out;
  out.has_velocity = vel;
  out.has_timing = iter.has_value();
  out.records.reserve(tab.size());
  double prev = 0.0;
  for (std::size_t r = 0; r < tab.size(); ++r) {
    const auto f = tab.fields(r);
    EstimateRecord e;
    e.t = tab.number(f, r, 0);
    tab.check_monotone(prev, e.t, r);
    prev = e.t;
    e.p = tab.vec3(f, r, 1);
    e.q = parse_quat(tab, f, r, 4);
    if (vel) e.v = tab.vec3(f, r, *vx);
    if (iter) e.iter_time = tab.number(f, r, *iter);
    out.records.push_back(e);
  }
  return out;
}

std::vector<SensorFrame> synchronize(std::span<const ImuSample> imu, std::span<const KinematicsRecord> kinematics,
                                     std::span<const ContactRecord> contacts) {
  if (imu.empty()) throw std::invalid_argument("synchronize: empty IMU stream");
  std::vector<SensorFrame> frames;
  frames.reserve(imu.size());
  std::size_t ik = 0, ic = 0;
  bool have_k = false, have_c = false;
  for (const auto& s : imu) {
    while (ik < kinematics.size() && kinematics[ik].t <= s.t) {
      ++ik;
      have_k = true;
    }
    while (ic < contacts.size() && contacts[ic].t <= s.t) {
      ++ic;
      have_c = true;
    }
    if (!have_k || !have_c) continue;
    SensorFrame f;
    f.t = s.t;
    f.imu = s;
    const auto& k = kinematics[ik - 1];
    f.feet.assign(k.feet.begin(), k.feet.end());
    f.contact = contacts[ic - 1].contact;
    frames.push_back(std::move(f));
  }
  return frames;
}

Dataset load_dataset(const std::filesystem::path& sensor_path, const std::filesystem::path& kinematics_path,
                     const std::filesystem::path& groundtruth_path, const LoadOptions& opt) {
  Dataset ds;
  const SensorLog log = read_sensor_csv(sensor_path, opt);
  const auto kin = read_kinematics_csv(kinematics_path, opt);
  ds.sensor_rows = log.imu.size();
  ds.kinematics_rows = kin.size();
  if (!log.imu.empty()) ds.frames = synchronize(log.imu, kin, log.contacts);
  if (!groundtruth_path.empty()) {
    ds.ground_truth = read_groundtruth_csv(groundtruth_path, opt);
    ds.groundtruth_rows = ds.ground_truth.size();
  }
  return ds;
}

void write_sensor_csv(const std::filesystem::path& path, std::span<const SensorFrame> frames) {
  const bool mag = !frames.empty() && frames.front().imu.mag.has_value();
  auto out = fmt::output_file(path.string());
  out.print("t,wx,wy,wz,ax,ay,az,{}contact_lf,contact_rf,contact_lh,contact_rh\n", mag ? "mx,my,mz," : "");
  for (const auto& f : frames) {
    const auto& s = f.imu;
    out.print("{:.9f},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},", f.t, s.gyro.x(), s.gyro.y(), s.gyro.z(),
              s.accel.x(), s.accel.y(), s.accel.z());
    if (mag) {
      const Vector3d m = s.mag.value_or(Vector3d::Zero());
      out.print("{:.17g},{:.17g},{:.17g},", m.x(), m.y(), m.z());
    }
    out.print("{:d},{:d},{:d},{:d}\n", int(f.contact[0]), int(f.contact[1]), int(f.contact[2]), int(f.contact[3]));
  }
}

void write_kinematics_csv(const std::filesystem::path& path, std::span<const SensorFrame> frames) {
  auto out = fmt::output_file(path.string());
  const auto cols = kinematics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out.print("{}{}", i ? "," : "", cols[i]);
  out.print("\n");
  for (const auto& f : frames) {
    out.print("{:.9f}", f.t);
    for (Foot foot : kAllFeet) {
      const FootKinematics* k = f.find(foot);
      const Vector3d fk = k ? k->fk : Vector3d::Zero();
      const Vector3d vr = k ? k->v_rel : Vector3d::Zero();
      out.print(",{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}", fk.x(), fk.y(), fk.z(), vr.x(), vr.y(), vr.z());
    }
    out.print("\n");
  }
}

void write_groundtruth_csv(const std::filesystem::path& path, std::span<const GroundTruthRecord> gt) {
  auto out = fmt::output_file(path.string());
  out.print("t,px,py,pz,qx,qy,qz,qw,vx,vy,vz\n");
  for (const auto& g : gt) {
    out.print("{:.9f},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", g.t,
              g.p.x(), g.p.y(), g.p.z(), g.q.x(), g.q.y(), g.q.z(), g.q.w(), g.v.x(), g.v.y(), g.v.z());
  }
}

void write_fused_state_csv(const std::filesystem::path& path, std::span<const EstimateRecord> est) {
  auto out = fmt::output_file(path.string());
  out.print("t,px,py,pz,qx,qy,qz,qw,vx,vy,vz,iter_time_s\n");
  for (const auto& e : est) {
    out.print("{:.9f},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.9g}\n", e.t,
              e.p.x(), e.p.y(), e.p.z(), e.q.x(), e.q.y(), e.q.z(), e.q.w(), e.v.x(), e.v.y(), e.v.z(), e.iter_time);
  }
}

std::string tum_line(double t, const Vector3d& p, const Eigen::Quaterniond& q) {
  return fmt::format("{:.9f} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g}", t, p.x(), p.y(), p.z(), q.x(),
                     q.y(), q.z(), q.w());
}

void export_tum(const std::filesystem::path& path, std::span<const EstimateRecord> traj) {
  auto out = fmt::output_file(path.string());
  for (const auto& e : traj) out.print("{}\n", tum_line(e.t, e.p, e.q));
}

void export_tum(const std::filesystem::path& path, std::span<const GroundTruthRecord> traj) {
  auto out = fmt::output_file(path.string());
  for (const auto& g : traj) out.print("{}\n", tum_line(g.t, g.p, g.q));
}

std::vector<GroundTruthRecord> read_tum(const std::filesystem::path& path) {
  std::ifstream in(path);
  const std::string file = path.string();
  if (!in) throw InputError(file + ": cannot open file");
  std::vector<GroundTruthRecord> out;
  std::string line;
  long row = 0;
  while (std::getline(in, line)) {
    const auto s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    ++row;
    std::istringstream ss{std::string(s)};
    double v[8];
    for (int i = 0; i < 8; ++i)
      if (!(ss >> v[i])) throw DataError(file, row, "", "expected 8 numeric fields");
    GroundTruthRecord g;
    g.t = v[0];
    if (!out.empty() && !(g.t > out.back().t)) throw DataError(file, row, "timestamp", "non-monotone timestamp");
    g.p = Vector3d(v[1], v[2], v[3]);
    g.q = Eigen::Quaterniond(v[7], v[4], v[5], v[6]);
    if (std::abs(g.q.norm() - 1.0) > 1e-6) throw DataError(file, row, "qw", "quaternion is not unit");
    out.push_back(g);
  }
  return out;
}

}  // namespace qse::io
