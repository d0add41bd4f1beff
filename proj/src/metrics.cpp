#include <qse/metrics.hpp>

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace qse::metrics {
namespace {

constexpr double kUnitTol = 1e-6;
constexpr double kSegmentTol = 1e-9;  // relative slack on the spatial window
constexpr double kRankTol = 1e-9;

double rmse(std::span<const double> sq) {
  if (sq.empty()) throw std::invalid_argument("rmse: no samples");
  return std::sqrt(std::accumulate(sq.begin(), sq.end(), 0.0) / static_cast<double>(sq.size()));
}

// Geodesic angle in [0, pi]; atan2 keeps precision near zero.
double angle(const Eigen::Quaterniond& q) { return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w())); }

template <typename Rec> Trajectory from_records(std::span<const Rec> records, bool with_velocity) {
  Trajectory out;
  if (with_velocity) out.v.emplace();
  for (const auto& r : records) {
    if (with_velocity)
      out.push_back(r.t, r.p, r.q, r.v);
    else
      out.push_back(r.t, r.p, r.q);
  }
  out.validate();
  return out;
}

struct Relative {
  Eigen::Quaterniond q;
  Vector3d t;
};

Relative between(const Trajectory& tr, std::size_t i, std::size_t j) {
  const Eigen::Quaterniond qi = tr.q[i].conjugate();
  return {qi * tr.q[j], qi * (tr.p[j] - tr.p[i])};
}

}  // namespace

void Trajectory::push_back(double time, const Vector3d& pos, const Eigen::Quaterniond& rot) {
  t.push_back(time);
  p.push_back(pos);
  q.push_back(rot);
}

void Trajectory::push_back(double time, const Vector3d& pos, const Eigen::Quaterniond& rot, const Vector3d& vel) {
  push_back(time, pos, rot);
  if (!v) v.emplace();
  v->push_back(vel);
}

void Trajectory::validate() const {
  if (p.size() != t.size() || q.size() != t.size() || (v && v->size() != t.size()))
    throw std::invalid_argument("trajectory channels have different lengths");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i > 0 && !(t[i] > t[i - 1]))
      throw std::invalid_argument(fmt::format("trajectory time not strictly increasing at sample {}", i));
    if (std::abs(q[i].norm() - 1.0) > kUnitTol)
      throw std::invalid_argument(fmt::format("trajectory quaternion {} is not unit", i));
  }
}

Trajectory Trajectory::from(std::span<const EstimateRecord> records, bool with_velocity) {
  return from_records(records, with_velocity);
}

Trajectory Trajectory::from(std::span<const GroundTruthRecord> records, bool with_velocity) {
  return from_records(records, with_velocity);
}

PoseSample interpolate_pose(const Trajectory& traj, double t) {
  if (traj.empty() || t < traj.t.front() || t > traj.t.back())
    throw std::out_of_range(fmt::format("interpolate_pose: t = {} outside the trajectory span", t));
  const auto it = std::lower_bound(traj.t.begin(), traj.t.end(), t);
  const auto j = static_cast<std::size_t>(it - traj.t.begin());
  PoseSample s;
  if (*it == t) {
    s.p = traj.p[j];
    s.q = traj.q[j];
    if (traj.v) s.v = (*traj.v)[j];
    return s;
  }
  const std::size_t i = j - 1;
  const double a = (t - traj.t[i]) / (traj.t[j] - traj.t[i]);
  s.p = (1.0 - a) * traj.p[i] + a * traj.p[j];
  s.q = traj.q[i].slerp(a, traj.q[j]).normalized();
  if (traj.v) s.v = (1.0 - a) * (*traj.v)[i] + a * (*traj.v)[j];
  return s;
}

Association associate(const Trajectory& est, const Trajectory& ref) {
  Association out;
  if (ref.empty()) return out;
  const bool vel = est.v && ref.v;
  if (vel) {
    out.est.v.emplace();
    out.ref.v.emplace();
  }
  for (std::size_t k = 0; k < est.size(); ++k) {
    const double t = est.t[k];
    if (t < ref.t.front() || t > ref.t.back()) continue;
    const PoseSample s = interpolate_pose(ref, t);
    if (vel) {
      out.est.push_back(t, est.p[k], est.q[k], (*est.v)[k]);
      out.ref.push_back(t, s.p, s.q, *s.v);
    } else {
      out.est.push_back(t, est.p[k], est.q[k]);
      out.ref.push_back(t, s.p, s.q);
    }
  }
  return out;
}

RigidTransform umeyama_points(std::span<const Vector3d> src, std::span<const Vector3d> dst) {
  if (src.size() != dst.size()) throw std::invalid_argument("umeyama: point sets differ in size");
  const auto n = static_cast<Eigen::Index>(src.size());
  if (n < 3) throw DegenerateGeometry("umeyama: fewer than 3 point pairs");
  Eigen::Matrix3Xd S(3, n), D(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    S.col(i) = src[static_cast<std::size_t>(i)];
    D.col(i) = dst[static_cast<std::size_t>(i)];
  }
  const Eigen::Matrix3Xd centred = S.colwise() - S.rowwise().mean();
  const Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3Xd>(centred).singularValues();
  if (!(sv[1] > kRankTol * std::max(sv[0], 1.0)))
    throw DegenerateGeometry("umeyama: points are coincident or collinear");
  const Eigen::Matrix4d T = Eigen::umeyama(S, D, false);
  return {T.topLeftCorner<3, 3>(), T.topRightCorner<3, 1>()};
}

RigidTransform umeyama_se3(const Trajectory& est, const Trajectory& ref) {
  const Association a = associate(est, ref);
  return umeyama_points(a.est.p, a.ref.p);
}

double ate(const Trajectory& est, const Trajectory& ref, bool align) {
  const Association a = associate(est, ref);
  if (a.est.empty()) throw std::invalid_argument("ate: no associated samples");
  const RigidTransform T = align ? umeyama_points(a.est.p, a.ref.p) : RigidTransform{};
  std::vector<double> sq(a.est.size());
  for (std::size_t k = 0; k < sq.size(); ++k) sq[k] = (T(a.est.p[k]) - a.ref.p[k]).squaredNorm();
  return rmse(sq);
}

std::vector<std::pair<std::size_t, std::size_t>> spatial_segments(std::span<const Vector3d> ref, double delta) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t start = 0;
  double length = 0.0;
  for (std::size_t k = 1; k < ref.size(); ++k) {
    length += (ref[k] - ref[k - 1]).norm();
    if (length >= delta * (1.0 - kSegmentTol)) {
      out.emplace_back(start, k);
      start = k;
      length = 0.0;
    }
  }
  return out;
}

double rpe(const Trajectory& est, const Trajectory& ref, Window window, Mode mode) {
  const Association a = associate(est, ref);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (window == Window::Spatial) {
    pairs = spatial_segments(a.ref.p);
  } else {
    for (std::size_t k = 1; k < a.est.size(); ++k) pairs.emplace_back(k - 1, k);
  }
  if (pairs.empty()) throw std::invalid_argument("rpe: no complete segment");
  std::vector<double> sq;
  sq.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    const Relative Q = between(a.ref, i, j);
    const Relative P = between(a.est, i, j);
    const Eigen::Quaterniond qinv = Q.q.conjugate();
    if (mode == Mode::Translation) {
      sq.push_back((qinv * (P.t - Q.t)).squaredNorm());
    } else {
      const double deg = angle(qinv * P.q) * 180.0 / std::numbers::pi;
      sq.push_back(deg * deg);
    }
  }
  return rmse(sq);
}

double velocity_rmse(const Trajectory& est, const Trajectory& ref) {
  if (!est.v || !ref.v) throw std::invalid_argument("velocity_rmse: velocity channel missing");
  const Association a = associate(est, ref);
  if (a.est.empty()) throw std::invalid_argument("velocity_rmse: no associated samples");
  std::vector<double> sq(a.est.size());
  for (std::size_t k = 0; k < sq.size(); ++k) sq[k] = ((*a.est.v)[k] - (*a.ref.v)[k]).squaredNorm();
  return rmse(sq);
}

TimingStats timing_stats(std::span<const double> seconds) {
  if (seconds.empty()) throw std::invalid_argument("timing_stats: no samples");
  std::vector<double> s(seconds.begin(), seconds.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  TimingStats out;
  // Offsetting by the minimum keeps a constant stream's mean exact.
  double dev = 0.0;
  for (double x : s) dev += x - s.front();
  out.mean = s.front() + dev / static_cast<double>(n);
  out.median = n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  const std::size_t rank = (99 * n + 99) / 100;  // ceil(0.99 n)
  out.p99 = s[rank - 1];
  return out;
}

TimingStats timing_stats(std::span<const EstimateRecord> records) {
  std::vector<double> s;
  s.reserve(records.size());
  for (const auto& r : records) s.push_back(r.iter_time);
  return timing_stats(s);
}

MetricReport evaluate(const std::string& estimator, const Trajectory& est, const Trajectory& ref, bool align) {
  MetricReport r;
  r.estimator = estimator;
  r.aligned = align;
  try {
    r.ate_m = ate(est, ref, align);
  } catch (const DegenerateGeometry&) {
    r.aligned = false;
    r.ate_m = ate(est, ref, false);
  }
  if (est.v && ref.v) r.ate_vel_mps = velocity_rmse(est, ref);
  r.rpe_trans_temporal_m = rpe(est, ref, Window::Temporal, Mode::Translation);
  r.rpe_rot_temporal_deg = rpe(est, ref, Window::Temporal, Mode::Rotation);
  const Association a = associate(est, ref);
  if (!spatial_segments(a.ref.p).empty()) {
    r.rpe_trans_spatial_m = rpe(est, ref, Window::Spatial, Mode::Translation);
    r.rpe_rot_spatial_deg = rpe(est, ref, Window::Spatial, Mode::Rotation);
  }
  return r;
}

std::vector<std::pair<std::string, std::optional<double>>> rows(const MetricReport& r) {
  std::vector<std::pair<std::string, std::optional<double>>> out{
      {"ate_m", r.ate_m},
      {"ate_vel_mps", r.ate_vel_mps},
      {"rpe_trans_1m_m", r.rpe_trans_spatial_m},
      {"rpe_trans_1frame_m", r.rpe_trans_temporal_m},
      {"rpe_rot_1m_deg", r.rpe_rot_spatial_deg},
      {"rpe_rot_1frame_deg", r.rpe_rot_temporal_deg},
  };
  const auto timing = [&](auto field) -> std::optional<double> {
    if (!r.timing) return std::nullopt;
    return (*r.timing).*field;
  };
  out.emplace_back("time_mean_s", timing(&TimingStats::mean));
  out.emplace_back("time_median_s", timing(&TimingStats::median));
  out.emplace_back("time_p99_s", timing(&TimingStats::p99));
  return out;
}

std::string to_text(std::span<const MetricReport> reports) {
  std::string out;
  for (const auto& r : reports) {
    out += fmt::format("{}.aligned = {}\n", r.estimator, r.aligned);
    for (const auto& [key, val] : rows(r))
      out += val ? fmt::format("{}.{} = {}\n", r.estimator, key, *val) : fmt::format("{}.{} = absent\n", r.estimator, key);
  }
  return out;
}

std::string to_json(std::span<const MetricReport> reports) {
  nlohmann::ordered_json doc;
  doc["estimators"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json e;
    e["name"] = r.estimator;
    e["aligned"] = r.aligned;
    for (const auto& [key, val] : rows(r)) e[key] = val ? nlohmann::ordered_json(*val) : nlohmann::ordered_json();
    doc["estimators"].push_back(e);
  }
  return doc.dump(2) + "\n";
}

std::vector<MetricReport> from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  const auto opt = [](const nlohmann::json& e, const char* key) -> std::optional<double> {
    if (!e.contains(key) || e[key].is_null()) return std::nullopt;
    return e[key].get<double>();
  };
  std::vector<MetricReport> out;
  for (const auto& e : doc.at("estimators")) {
    MetricReport r;
    r.estimator = e.at("name").get<std::string>();
    r.aligned = e.at("aligned").get<bool>();
    r.ate_m = e.at("ate_m").get<double>();
    r.ate_vel_mps = opt(e, "ate_vel_mps");
    r.rpe_trans_spatial_m = opt(e, "rpe_trans_1m_m");
    r.rpe_trans_temporal_m = e.at("rpe_trans_1frame_m").get<double>();
    r.rpe_rot_spatial_deg = opt(e, "rpe_rot_1m_deg");
    r.rpe_rot_temporal_deg = e.at("rpe_rot_1frame_deg").get<double>();
    if (const auto m = opt(e, "time_mean_s"))
      r.timing = TimingStats{*m, e.at("time_median_s").get<double>(), e.at("time_p99_s").get<double>()};
    out.push_back(r);
  }
  return out;
}

std::string comparison_table(std::span<const MetricReport> reports) {
  std::string out = "| metric |";
  std::string rule = "|---|";
  for (const auto& r : reports) {
    out += fmt::format(" {} |", r.estimator);
    rule += "---|";
  }
  out += "\n" + rule + "\n";
  if (reports.empty()) return out;
  const auto labels = rows(reports.front());
  std::vector<std::vector<std::pair<std::string, std::optional<double>>>> all;
  for (const auto& r : reports) all.push_back(rows(r));
  for (std::size_t k = 0; k < labels.size(); ++k) {
    out += fmt::format("| {} |", labels[k].first);
    for (const auto& col : all)
      out += col[k].second ? fmt::format(" {:.6g} |", *col[k].second) : std::string(" - |");
    out += "\n";
  }
  return out;
}

}  // namespace qse::metrics
