#include <qse/iekf.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace qse::iekf {
namespace {

void make_psd(Eigen::MatrixXd& P) {
  P = 0.5 * (P + P.transpose()).eval();
  if (P.ldlt().isPositive()) return;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
  P = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
}

// Deletes rows and columns [i, i+n).
Eigen::MatrixXd drop_block(const Eigen::MatrixXd& P, int i, int n) {
  const int m = static_cast<int>(P.rows());
  const int tail = m - i - n;
  Eigen::MatrixXd out(m - n, m - n);
  out.topLeftCorner(i, i) = P.topLeftCorner(i, i);
  out.topRightCorner(i, tail) = P.topRightCorner(i, tail);
  out.bottomLeftCorner(tail, i) = P.bottomLeftCorner(tail, i);
  out.bottomRightCorner(tail, tail) = P.bottomRightCorner(tail, tail);
  return out;
}

}  // namespace

Belief Belief::initial(const InitialState& init, const Config& cfg) {
  Belief b;
  b.X = Pose(init.R, init.v, init.p);
  b.bias << init.gyro_bias, init.accel_bias;
  Eigen::VectorXd sd(15);
  sd << Vector3d::Constant(cfg.initial_attitude), Vector3d::Constant(cfg.initial_velocity),
      Vector3d::Constant(cfg.initial_position), Vector3d::Constant(cfg.initial_gyro_bias),
      Vector3d::Constant(cfg.initial_accel_bias);
  b.P = sd.cwiseAbs2().asDiagonal();
  return b;
}

std::optional<int> Belief::slot(Foot f) const {
  const auto it = std::find(feet.begin(), feet.end(), f);
  if (it == feet.end()) return std::nullopt;
  return static_cast<int>(it - feet.begin());
}

std::vector<KinematicMeasurement> measurements(const SensorFrame& frame, const Config& cfg) {
  std::vector<KinematicMeasurement> out;
  for (Foot f : kAllFeet) {
    if (!frame.contact[index(f)]) continue;
    const FootKinematics* k = frame.find(f);
    if (!k) throw std::invalid_argument("iekf: stance foot " + std::string(foot_name(f)) + " has no kinematics");
    out.push_back({f, k->fk, k->covariance.value_or(cfg.kinematic_noise * cfg.kinematic_noise * Matrix3d::Identity())});
  }
  return out;
}

Belief propagate(const Belief& b, const ImuSample& imu, double dt, const Config& cfg, const Vector3d& g) {
  if (!(dt > 0.0)) throw std::invalid_argument("iekf propagate: dt must be positive");
  const int n = state_dim(b.contacts());
  Belief out = b;
  out.X = imu::integrate(b.X, b.bias, {imu.gyro, imu.accel, dt}, g);
  const Eigen::MatrixXd Phi = Eigen::MatrixXd::Identity(n, n) + imu::error_dynamics(b.X, g) * dt;
  const Eigen::MatrixXd B = imu::noise_input(b.X, dt);
  const Eigen::MatrixXd C = imu::noise_covariance(b.contacts(), cfg.noise, dt, cfg.position_noise);
  out.P = Phi * b.P * Phi.transpose() + B * C * B.transpose();
  make_psd(out.P);
  return out;
}

Belief update(const Belief& b, std::span<const KinematicMeasurement> meas, const Config& cfg) {
  const int k = b.contacts();
  const int n = state_dim(k);
  const Matrix3d& R = b.X.R();

  struct Row {
    int slot;
    Vector3d z;
    Matrix3d N;
  };
  std::vector<Row> rows;
  for (const auto& m : meas) {
    const auto j = b.slot(m.foot);
    if (!j) throw std::invalid_argument("iekf update: foot " + std::string(foot_name(m.foot)) + " is not an active contact");
    Row r{*j, R * m.fk + b.X.p() - b.X.d(*j), R * m.cov * R.transpose()};
    if (cfg.gating) {
      const int ip = 6, id = 9 + 3 * r.slot;
      const Matrix3d S = b.P.block<3, 3>(ip, ip) + b.P.block<3, 3>(id, id) - b.P.block<3, 3>(ip, id) -
                         b.P.block<3, 3>(id, ip) + r.N;
      const Eigen::LLT<Matrix3d> llt(S);
      if (llt.info() == Eigen::Success && r.z.dot(llt.solve(r.z)) > cfg.gate) continue;
    }
    rows.push_back(r);
  }
  if (rows.empty()) return b;

  const int m = 3 * static_cast<int>(rows.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, n);
  Eigen::MatrixXd N = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd z(m);
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    H.block<3, 3>(3 * i, 6) = -Matrix3d::Identity();
    H.block<3, 3>(3 * i, 9 + 3 * rows[i].slot) = Matrix3d::Identity();
    N.block<3, 3>(3 * i, 3 * i) = rows[i].N;
    z.segment<3>(3 * i) = rows[i].z;
  }
  const Eigen::MatrixXd S = H * b.P * H.transpose() + N;
  const Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw std::runtime_error("iekf update: innovation covariance is singular");
  const Eigen::MatrixXd K = llt.solve(H * b.P).transpose();
  const Eigen::VectorXd dx = K * z;

  Belief out = b;
  const int gd = group_dim(k);
  out.X = se_exp<double>(dx.head(gd)) * b.X;
  out.bias = b.bias + dx.tail<6>();
  const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(n, n) - K * H;
  out.P = IKH * b.P * IKH.transpose() + K * N * K.transpose();
  make_psd(out.P);
  return out;
}

Belief manage_contacts(const Belief& b, const ContactState& contacts, std::span<const KinematicMeasurement> meas,
                       const Config& cfg) {
  Belief out = b;
  for (int j = out.contacts() - 1; j >= 0; --j) {
    if (contacts[index(out.feet[j])]) continue;
    std::vector<int> keep;
    for (int i = 0; i < out.contacts(); ++i)
      if (i != j) keep.push_back(i);
    out.X = out.X.select_contacts(keep);
    out.P = drop_block(out.P, 9 + 3 * j, 3);
    out.feet.erase(out.feet.begin() + j);
  }
  for (const auto& m : meas) {
    if (!contacts[index(m.foot)] || out.slot(m.foot)) continue;
    const int k = out.contacts();
    const int gd = group_dim(k);
    const int n = state_dim(k);
    Pose::Columns T(3, 3 + k);
    T.leftCols(2 + k) = out.X.columns();
    T.col(2 + k) = out.X.p() + out.X.R() * m.fk;
    out.X = Pose(out.X.R(), T);
    out.feet.push_back(m.foot);

    // The new contact error equals the position error to first order.
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n + 3, n);
    F.topLeftCorner(gd, gd).setIdentity();
    F.block<3, 3>(gd, 6).setIdentity();
    F.bottomRightCorner<6, 6>().setIdentity();
    Eigen::MatrixXd P = F * out.P * F.transpose();
    P.block<3, 3>(gd, gd) += cfg.contact_init * cfg.contact_init * Matrix3d::Identity();
    out.P = P;
  }
  return out;
}

Iekf::Iekf(const Config& cfg, const InitialState& init, const Vector3d& g)
    : cfg_(cfg), g_(g), belief_(Belief::initial(init, cfg)) {}

EstimateRecord Iekf::process(const SensorFrame& frame) {
  if (last_) belief_ = propagate(belief_, last_->imu, frame.t - last_->t, cfg_, g_);
  const auto meas = measurements(frame, cfg_);
  std::vector<KinematicMeasurement> active;
  for (const auto& m : meas)
    if (belief_.slot(m.foot)) active.push_back(m);
  belief_ = update(belief_, active, cfg_);
  belief_ = manage_contacts(belief_, frame.contact, meas, cfg_);
  last_ = frame;
  return {frame.t, belief_.X.p(), quat_from_rotation<double>(belief_.X.R()), belief_.X.v(), 0.0};
}

}  // namespace qse::iekf
