#include <qse/muse.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>

namespace qse::muse {
namespace {

template <int N> void make_psd(Eigen::Matrix<double, N, N>& P) {
  P = 0.5 * (P + P.transpose()).eval();
  if (P.llt().info() == Eigen::Success) return;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> es(P);
  P = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
}

void require_psd(const Matrix6d& P) {
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if (!P.allFinite() || (P - P.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw std::invalid_argument("fusion_step: covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(P, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-12 * scale)
    throw std::invalid_argument("fusion_step: covariance is not positive semidefinite");
}

Vector3d up_in_body(const Matrix3d& R) { return R.row(2).transpose(); }

}  // namespace

AttitudeState AttitudeState::initial(const Matrix3d& R, const Vector3d& bias, const Config& cfg) {
  AttitudeState s;
  s.q = Eigen::Quaterniond(R).normalized();
  s.q_nlo = s.q;
  s.bias = bias;
  s.bias_nlo = bias;
  s.P.setZero();
  s.P.topLeftCorner<3, 3>() = std::pow(cfg.xkf_initial_attitude, 2) * Matrix3d::Identity();
  s.P.bottomRightCorner<3, 3>() = std::pow(cfg.xkf_initial_bias, 2) * Matrix3d::Identity();
  return s;
}

AttitudeState attitude_step(const AttitudeState& s, const ImuSample& imu, double dt, const Config& cfg,
                            const Vector3d& body_velocity) {
  if (!(dt > 0.0)) throw std::invalid_argument("attitude_step: dt must be positive");
  AttitudeState out = s;

  // Nonlinear observer.
  const Matrix3d Rn = s.q_nlo.toRotationMatrix();
  Vector3d f = imu.accel;
  if (cfg.centripetal_compensation) f -= (imu.gyro - s.bias_nlo).cross(body_velocity);
  const double fn = f.norm();
  const bool use_accel = fn > 0.0 && std::abs(fn - kGravityMagnitude) < cfg.accel_gate * kGravityMagnitude;
  const Vector3d f_hat = use_accel ? Vector3d(f / fn) : Vector3d::Zero();

  const Vector3d m_ref = Rn.transpose() * cfg.mag_reference;
  const Vector3d m_hat = imu.mag ? imu.mag->normalized() : m_ref;
  Vector3d sigma = cfg.k2 * m_hat.cross(m_ref);
  if (use_accel) sigma += cfg.k1 * f_hat.cross(up_in_body(Rn));
  const Vector3d w = imu.gyro - s.bias_nlo + sigma;
  const Matrix3d Rbar = Rn * rot_exp<double>(w * dt);
  out.q_nlo = Eigen::Quaterniond(Rbar).normalized();
  out.bias_nlo = s.bias_nlo - cfg.kb * sigma * dt;

  // Exogenous KF on (delta, bias) with R_x = Rbar Exp(delta).
  const Vector3d wx = imu.gyro - s.bias;
  const Matrix3d Rx = s.q.toRotationMatrix() * rot_exp<double>(wx * dt);
  Matrix6d F = Matrix6d::Identity();
  F.topLeftCorner<3, 3>() = rot_exp<double>(-wx * dt);
  F.topRightCorner<3, 3>() = -so3_right_jacobian<double>(wx * dt) * dt;
  Matrix6d Q = Matrix6d::Zero();
  Q.topLeftCorner<3, 3>() = std::pow(cfg.xkf_attitude_noise, 2) * dt * Matrix3d::Identity();
  Q.bottomRightCorner<3, 3>() = std::pow(cfg.xkf_bias_noise, 2) * dt * Matrix3d::Identity();
  Matrix6d P = F * s.P * F.transpose() + Q;

  Eigen::Matrix<double, 6, 1> x;
  x << rot_log<double>(Rbar.transpose() * Rx), s.bias;

  const int rows = (use_accel ? 3 : 0) + 1;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(rows, 6);
  Eigen::VectorXd nu(rows);
  Eigen::VectorXd noise(rows);
  int r = 0;
  if (use_accel) {
    const Vector3d up = up_in_body(Rbar);
    H.block<3, 3>(0, 0) = skew(up);
    nu.head<3>() = f_hat - up - skew(up) * x.head<3>();
    noise.head<3>().setConstant(std::pow(cfg.xkf_accel_noise, 2));
    r = 3;
  }
  // Heading about world z; the surrogate is built from the prior estimate,
  // so its residual vanishes when no magnetometer is present.
  const Vector3d m_world = Rx * (imu.mag ? imu.mag->normalized() : Vector3d(Rx.transpose() * cfg.mag_reference));
  const Vector3d ref_h(cfg.mag_reference.x(), cfg.mag_reference.y(), 0.0);
  const Vector3d meas_h(m_world.x(), m_world.y(), 0.0);
  const double denom = std::max(ref_h.squaredNorm(), 1e-12);
  out.heading_innovation = meas_h.cross(ref_h).z() / denom;
  H.block<1, 3>(r, 0) = Rbar.row(2);
  nu[r] = out.heading_innovation;
  noise[r] = std::pow(cfg.xkf_heading_noise, 2);

  const Eigen::MatrixXd S = H * P * H.transpose() + Eigen::MatrixXd(noise.asDiagonal());
  const Eigen::MatrixXd K = P * H.transpose() * S.llt().solve(Eigen::MatrixXd::Identity(rows, rows));
  x += K * nu;
  const Matrix6d IKH = Matrix6d::Identity() - K * H;
  P = IKH * P * IKH.transpose() + K * noise.asDiagonal() * K.transpose();
  make_psd(P);

  out.q = Eigen::Quaterniond(Rbar * rot_exp<double>(x.head<3>())).normalized();
  out.bias = x.tail<3>();
  out.P = P;
  return out;
}

LegOdometryResult leg_odometry(const SensorFrame& frame, const Vector3d& omega) {
  LegOdometryResult res;
  for (int j = 0; j < kNumFeet; ++j) {
    if (!frame.contact[j]) continue;
    const FootKinematics* k = frame.find(kAllFeet[j]);
    if (!k)
      throw std::invalid_argument("leg_odometry: stance foot " + std::string(foot_name(kAllFeet[j])) +
                                  " has no kinematics");
    res.velocity -= k->v_rel + omega.cross(k->fk);
    ++res.stance;
  }
  res.valid = res.stance > 0;
  if (res.valid) res.velocity /= res.stance;
  return res;
}

Matrix6d fusion_process_noise(double accel_noise, double dt) {
  const double q = accel_noise * accel_noise;
  Matrix6d Q;
  const Matrix3d I = Matrix3d::Identity();
  Q << q * dt * dt * dt / 4.0 * I, q * dt * dt / 2.0 * I, q * dt * dt / 2.0 * I, q * dt * I;
  return Q;
}

FusionState fusion_predict(const FusionState& s, const Matrix3d& R, const ImuSample& imu, double dt,
                           const Vector3d& g) {
  if (!(dt > 0.0)) throw std::invalid_argument("fusion_step: dt must be positive");
  require_psd(s.P);
  FusionState out = s;
  const Vector3d u = R * imu.accel + g;
  out.p = s.p + s.v * dt + 0.5 * u * dt * dt;
  out.v = s.v + u * dt;
  Matrix6d F = Matrix6d::Identity();
  F.topRightCorner<3, 3>() = dt * Matrix3d::Identity();
  out.P = F * s.P * F.transpose() + s.Q;
  make_psd(out.P);
  return out;
}

FusionState fusion_update(const FusionState& s, const Matrix3d& R, const LegOdometryResult& odo) {
  require_psd(s.P);
  if (!odo.valid) return s;
  FusionState out = s;
  const Vector3d z = R * odo.velocity;
  const Matrix3d S = s.P.bottomRightCorner<3, 3>() + s.R_meas;
  const Eigen::Matrix<double, 6, 3> K = s.P.rightCols<3>() * S.inverse();
  Eigen::Matrix<double, 6, 1> x;
  x << s.p, s.v;
  x += K * (z - s.v);
  Eigen::Matrix<double, 3, 6> H = Eigen::Matrix<double, 3, 6>::Zero();
  H.rightCols<3>().setIdentity();
  const Matrix6d IKH = Matrix6d::Identity() - K * H;
  out.P = IKH * s.P * IKH.transpose() + K * s.R_meas * K.transpose();
  make_psd(out.P);
  out.p = x.head<3>();
  out.v = x.tail<3>();
  return out;
}

FusionState fusion_step(const FusionState& s, const Matrix3d& R, const ImuSample& imu, const LegOdometryResult& odo,
                        double dt, const Vector3d& g) {
  return fusion_update(fusion_predict(s, R, imu, dt, g), R, odo);
}

Muse::Muse(const Config& cfg, const InitialState& init) : cfg_(cfg) {
  att_ = AttitudeState::initial(init.R, init.gyro_bias, cfg);
  fus_.p = init.p;
  fus_.v = init.v;
  fus_.P.setZero();
  fus_.P.topLeftCorner<3, 3>() = std::pow(cfg.initial_position, 2) * Matrix3d::Identity();
  fus_.P.bottomRightCorner<3, 3>() = std::pow(cfg.initial_velocity, 2) * Matrix3d::Identity();
  fus_.R_meas = std::pow(cfg.odometry_noise, 2) * Matrix3d::Identity();
}

EstimateRecord Muse::process(const SensorFrame& frame) {
  if (last_) {
    const double dt = frame.t - last_->t;
    const Matrix3d R_prev = att_.R();
    const Vector3d vb = last_odo_.valid ? last_odo_.velocity : Vector3d(R_prev.transpose() * fus_.v);
    att_ = attitude_step(att_, last_->imu, dt, cfg_, vb);
    fus_.Q = fusion_process_noise(cfg_.accel_noise, dt);
    fus_ = fusion_predict(fus_, R_prev, last_->imu, dt);
  }
  last_odo_ = leg_odometry(frame, frame.imu.gyro - att_.bias);
  fus_ = fusion_update(fus_, att_.R(), last_odo_);
  last_ = frame;
  return {frame.t, fus_.p, att_.q, fus_.v, 0.0};
}

}  // namespace qse::muse
