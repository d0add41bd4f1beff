#include <qse/imu_model.hpp>

namespace qse::imu {

Pose integrate(const Pose& X, const Vector6d& bias, const StepInput& u, const Vector3d& g) {
  if (!(u.dt > 0.0)) throw std::invalid_argument("integrate: dt must be positive");
  const double dt = u.dt;
  const Vector3d w = u.gyro - bias.head<3>();
  const Vector3d a = X.R() * (u.accel - bias.tail<3>()) + g;
  Pose out = X;
  out.R() = X.R() * rot_exp<double>(w * dt);
  out.v() = X.v() + a * dt;
  out.p() = X.p() + X.v() * dt + 0.5 * a * dt * dt;
  return out;
}

Eigen::MatrixXd error_dynamics(const Pose& X, const Vector3d& g) {
  const int k = X.num_contacts();
  const int n = state_dim(k);
  const int b = group_dim(k);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  const Matrix3d& R = X.R();
  A.block<3, 3>(3, 0) = skew(g);
  A.block<3, 3>(6, 3) = Matrix3d::Identity();
  A.block<3, 3>(0, b) = -R;
  A.block<3, 3>(3, b) = -skew<double>(X.v()) * R;
  A.block<3, 3>(6, b) = -skew<double>(X.p()) * R;
  for (int j = 0; j < k; ++j) A.block<3, 3>(9 + 3 * j, b) = -skew<double>(X.d(j)) * R;
  A.block<3, 3>(3, b + 3) = -R;
  return A;
}

Eigen::MatrixXd noise_input(const Pose& X, double dt) {
  const int k = X.num_contacts();
  const int n = state_dim(k);
  const int b = group_dim(k);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  B.topLeftCorner(b, b) = adjoint(X);
  B.bottomRightCorner<6, 6>().setIdentity();
  return dt * B;
}

Eigen::MatrixXd noise_covariance(int contacts, const NoiseDensities& nd, double dt, PositionNoise mode) {
  if (!(dt > 0.0)) throw std::invalid_argument("noise_covariance: dt must be positive");
  const int n = state_dim(contacts);
  const int b = group_dim(contacts);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
  const auto I = Matrix3d::Identity();
  const double sa2 = nd.accel * nd.accel / dt;
  C.block<3, 3>(0, 0) = nd.gyro * nd.gyro / dt * I;
  C.block<3, 3>(3, 3) = sa2 * I;
  C.block<3, 3>(6, 6) = sa2 * dt * dt * I;
  if (mode == PositionNoise::Correlated) {
    C.block<3, 3>(3, 6) = sa2 * dt * I;
    C.block<3, 3>(6, 3) = sa2 * dt * I;
  }
  for (int j = 0; j < contacts; ++j) C.block<3, 3>(9 + 3 * j, 9 + 3 * j) = nd.contact * nd.contact / dt * I;
  C.block<3, 3>(b, b) = nd.gyro_bias * nd.gyro_bias / dt * I;
  C.block<3, 3>(b + 3, b + 3) = nd.accel_bias * nd.accel_bias / dt * I;
  return C;
}

Transition exact_transition(const Pose& X, const Vector6d& bias, const StepInput& u, const Vector3d& g) {
  const int k = X.num_contacts();
  const int n = group_dim(k);
  const double dt = u.dt;
  if (!(dt > 0.0)) throw std::invalid_argument("exact_transition: dt must be positive");

  // f(X) = Gamma * Phi(X) * Upsilon(b); the error maps through Ad_Gamma dPhi
  // and the bias enters through Ad_f Log(Upsilon(b)^-1 Upsilon(b + zeta)).
  Transition tr;
  tr.group = Eigen::MatrixXd::Identity(n, n);
  tr.group.block<3, 3>(3, 0) = skew<double>(g * dt);
  tr.group.block<3, 3>(6, 0) = skew<double>(0.5 * g * dt * dt);
  tr.group.block<3, 3>(6, 3) = dt * Matrix3d::Identity();

  const Vector3d theta = (u.gyro - bias.head<3>()) * dt;
  const Matrix3d G0t = rot_exp(theta).transpose();
  Eigen::MatrixXd Jb = Eigen::MatrixXd::Zero(n, 6);
  Jb.block<3, 3>(0, 0) = -so3_right_jacobian(theta) * dt;
  Jb.block<3, 3>(3, 3) = -G0t * dt;
  Jb.block<3, 3>(6, 3) = -0.5 * G0t * dt * dt;
  tr.bias = adjoint(integrate(X, bias, u, g)) * Jb;
  return tr;
}

}  // namespace qse::imu
