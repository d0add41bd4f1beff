#pragma once

// Matrix Lie-group primitives for SO(3) and SE_k(3) (extended poses with
// velocity, position and k contact points).
//
// Tangent ordering for a state with k contacts is
//   (phi, rho_v, rho_p, rho_d1 .. rho_dk | zeta_gyro, zeta_accel)
// i.e. 9+3k group coordinates followed by 6 bias coordinates.
// Errors are right-invariant: X_hat = Exp(xi) * X.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace qse {

template <typename S> using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S> using Mat3 = Eigen::Matrix<S, 3, 3>;
template <typename S> using Vec6 = Eigen::Matrix<S, 6, 1>;
template <typename S> using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S> using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using Vector3d = Vec3<double>;
using Matrix3d = Mat3<double>;
using Vector6d = Vec6<double>;

inline constexpr int kMaxContacts = 4;
inline constexpr int kBiasDim = 6;

inline constexpr int group_dim(int contacts) { return 9 + 3 * contacts; }
inline constexpr int state_dim(int contacts) { return 15 + 3 * contacts; }
inline constexpr int homogeneous_dim(int contacts) { return 5 + contacts; }

namespace detail {

// Taylor fallbacks below these angles. Exp/Log use the tight threshold; the
// Jacobian coefficients cancel catastrophically much earlier.
template <typename S> inline constexpr S kExpThreshold = S(1e-8);
template <typename S> inline constexpr S kJacThreshold = S(1e-3);
template <typename S> inline constexpr S kQThreshold = S(1e-1);

// (1 - cos t) / t^2
template <typename S> S coeff_b(S t) {
  using std::sin;
  if (t < kJacThreshold<S>) return S(0.5) - t * t / S(24) + t * t * t * t / S(720);
  const S s = sin(t / S(2));
  return S(2) * s * s / (t * t);
}

// (t - sin t) / t^3
template <typename S> S coeff_c(S t) {
  using std::sin;
  if (t < kJacThreshold<S>) return S(1) / S(6) - t * t / S(120) + t * t * t * t / S(5040);
  return (t - sin(t)) / (t * t * t);
}

}  // namespace detail

template <typename S> Mat3<S> skew(const Vec3<S>& w) {
  Mat3<S> W;
  W << S(0), -w.z(), w.y(),
       w.z(), S(0), -w.x(),
       -w.y(), w.x(), S(0);
  return W;
}

template <typename S> Vec3<S> vee(const Mat3<S>& W) {
  return Vec3<S>(W(2, 1), W(0, 2), W(1, 0));
}

/// Rodrigues exponential. Throws std::invalid_argument on non-finite input.
template <typename S> Mat3<S> rot_exp(const Vec3<S>& w) {
  using std::cos;
  using std::sin;
  if (!w.allFinite()) throw std::invalid_argument("rot_exp: non-finite axis-angle vector");
  const S t = w.norm();
  const Mat3<S> W = skew(w);
  if (t < detail::kExpThreshold<S>) {
    return Mat3<S>::Identity() + W + S(0.5) * W * W;
  }
  return Mat3<S>::Identity() + (sin(t) / t) * W + detail::coeff_b(t) * W * W;
}

template <typename S> bool is_rotation(const Mat3<S>& R, S tol) {
  if (!R.allFinite()) return false;
  const S orth = (R.transpose() * R - Mat3<S>::Identity()).cwiseAbs().maxCoeff();
  using std::abs;
  return orth <= tol && abs(R.determinant() - S(1)) <= tol;
}

/// Principal logarithm, angle in [0, pi]. At exactly pi the axis sign is
/// fixed so that its first nonzero component is positive.
template <typename S> Vec3<S> rot_log(const Mat3<S>& R) {
  using std::atan2;
  using std::abs;
  using std::sqrt;
  if (!is_rotation(R, S(1e-6))) throw std::invalid_argument("rot_log: input is not a rotation matrix");

  const Vec3<S> s = S(0.5) * vee<S>(R - R.transpose());  // sin(t) * axis
  S c = S(0.5) * (R.trace() - S(1));
  c = std::clamp(c, S(-1), S(1));
  const S sn = s.norm();
  const S t = atan2(sn, c);

  if (t < detail::kExpThreshold<S>) return s;
  if (t < std::numbers::pi_v<S> - S(1e-3)) return (t / sn) * s;

  // Near pi: axis from the symmetric part, sym = cos(t) I + (1 - cos(t)) a a^T.
  const Mat3<S> aat = (S(0.5) * (R + R.transpose()) - c * Mat3<S>::Identity()) / (S(1) - c);
  int i = 0;
  aat.diagonal().maxCoeff(&i);
  Vec3<S> a = aat.col(i) / sqrt(aat(i, i));
  a.normalize();
  const S d = a.dot(s);
  if (abs(d) > S(1e-14)) {
    if (d < S(0)) a = -a;
  } else {
    for (int j = 0; j < 3; ++j) {
      if (abs(a[j]) > S(1e-12)) {
        if (a[j] < S(0)) a = -a;
        break;
      }
    }
  }
  return t * a;
}

template <typename S> Mat3<S> so3_left_jacobian(const Vec3<S>& w) {
  using std::sin;
  const S t = w.norm();
  const Mat3<S> W = skew(w);
  return Mat3<S>::Identity() + detail::coeff_b(t) * W + detail::coeff_c(t) * W * W;
}

template <typename S> Mat3<S> so3_left_jacobian_inverse(const Vec3<S>& w) {
  using std::tan;
  const S t = w.norm();
  const Mat3<S> W = skew(w);
  S k;
  if (t < detail::kJacThreshold<S>) {
    k = S(1) / S(12) + t * t / S(720) + t * t * t * t / S(30240);
  } else {
    k = S(1) / (t * t) - S(1) / (S(2) * t * tan(t / S(2)));
  }
  return Mat3<S>::Identity() - S(0.5) * W + k * W * W;
}

template <typename S> Mat3<S> so3_right_jacobian(const Vec3<S>& w) { return so3_left_jacobian<S>(-w); }

/// Coupling block of the SE(3) left Jacobian for a translational column rho.
template <typename S> Mat3<S> se3_q_matrix(const Vec3<S>& phi, const Vec3<S>& rho) {
  using std::cos;
  using std::sin;
  const S t = phi.norm();
  const Mat3<S> P = skew(phi);
  const Mat3<S> Rh = skew(rho);
  S c1, c2, c3;
  if (t < detail::kQThreshold<S>) {
    const S t2 = t * t, t4 = t2 * t2;
    c1 = S(1) / S(6) - t2 / S(120) + t4 / S(5040);
    c2 = S(1) / S(24) - t2 / S(720) + t4 / S(40320);
    c3 = S(1) / S(120) - t2 / S(2520) + t4 / S(120960);
  } else {
    const S st = sin(t), ct = cos(t);
    c1 = (t - st) / (t * t * t);
    c2 = (t * t + S(2) * ct - S(2)) / (S(2) * t * t * t * t);
    c3 = (S(2) * t - S(3) * st + t * ct) / (S(2) * t * t * t * t * t);
  }
  const Mat3<S> PR = P * Rh;
  const Mat3<S> RP = Rh * P;
  const Mat3<S> PRP = PR * P;
  return S(0.5) * Rh + c1 * (PR + RP + PRP) + c2 * (P * PR + RP * P - S(3) * PRP) +
         c3 * (PRP * P + P * PRP);
}

template <typename S> Eigen::Quaternion<S> quat_from_rotation(const Mat3<S>& R) {
  Eigen::Quaternion<S> q(R);
  q.normalize();
  return q;
}

template <typename S> Mat3<S> rotation_from_quat(const Eigen::Quaternion<S>& q) {
  return q.normalized().toRotationMatrix();
}

/// Element of SE_k(3): [R v p d_1 .. d_k; 0 I_{2+k}].
/// Translational columns are stored together as T = [v p d_1 .. d_k].
template <typename S> class ExtendedPose {
 public:
  using Columns = Eigen::Matrix<S, 3, Eigen::Dynamic, Eigen::ColMajor, 3, 2 + kMaxContacts>;

  ExtendedPose() : R_(Mat3<S>::Identity()), T_(Columns::Zero(3, 2)) {}

  ExtendedPose(const Mat3<S>& R, const Vec3<S>& v, const Vec3<S>& p) : R_(R), T_(3, 2) {
    T_.col(0) = v;
    T_.col(1) = p;
  }

  ExtendedPose(const Mat3<S>& R, const Columns& T) : R_(R), T_(T) {
    if (T.cols() < 2 || T.cols() > 2 + kMaxContacts)
      throw std::invalid_argument("ExtendedPose: contact count out of range");
  }

  static ExtendedPose Identity(int contacts = 0) {
    check_contacts(contacts);
    return ExtendedPose(Mat3<S>::Identity(), Columns::Zero(3, 2 + contacts));
  }

  static ExtendedPose from_matrix(const MatX<S>& M) {
    const int n = static_cast<int>(M.rows());
    if (M.cols() != n || n < 5 || n > 5 + kMaxContacts)
      throw std::invalid_argument("ExtendedPose::from_matrix: bad shape");
    return ExtendedPose(M.template topLeftCorner<3, 3>(), M.block(0, 3, 3, n - 3));
  }

  int num_contacts() const { return static_cast<int>(T_.cols()) - 2; }
  int dim() const { return group_dim(num_contacts()); }

  const Mat3<S>& R() const { return R_; }
  Mat3<S>& R() { return R_; }
  auto v() const { return T_.col(0); }
  auto v() { return T_.col(0); }
  auto p() const { return T_.col(1); }
  auto p() { return T_.col(1); }
  auto d(int j) const { return T_.col(2 + j); }
  auto d(int j) { return T_.col(2 + j); }
  const Columns& columns() const { return T_; }
  Columns& columns() { return T_; }

  MatX<S> matrix() const {
    const int n = homogeneous_dim(num_contacts());
    MatX<S> M = MatX<S>::Identity(n, n);
    M.template topLeftCorner<3, 3>() = R_;
    M.block(0, 3, 3, n - 3) = T_;
    return M;
  }

  ExtendedPose operator*(const ExtendedPose& o) const {
    if (o.num_contacts() != num_contacts())
      throw std::invalid_argument("ExtendedPose: contact count mismatch in product");
    Columns T = R_ * o.T_;
    for (int i = 0; i < T.cols(); ++i) T.col(i) += T_.col(i);
    return ExtendedPose(R_ * o.R_, T);
  }

  ExtendedPose inverse() const {
    const Mat3<S> Rt = R_.transpose();
    return ExtendedPose(Rt, Columns(-Rt * T_));
  }

  /// X * b for a homogeneous vector b of length 5+k.
  VecX<S> act(const VecX<S>& b) const {
    const int n = homogeneous_dim(num_contacts());
    if (b.size() != n) throw std::invalid_argument("ExtendedPose::act: dimension mismatch");
    VecX<S> out = b;
    out.template head<3>() = R_ * b.template head<3>() + T_ * b.tail(n - 3);
    return out;
  }

  /// Keeps only the listed contact columns, in the given order.
  template <typename Range> ExtendedPose select_contacts(const Range& idx) const {
    Columns T(3, 2 + static_cast<int>(std::size(idx)));
    T.col(0) = v();
    T.col(1) = p();
    int c = 2;
    for (int j : idx) T.col(c++) = d(j);
    return ExtendedPose(R_, T);
  }

  template <typename T2> ExtendedPose<T2> cast() const {
    return ExtendedPose<T2>(R_.template cast<T2>(),
                            typename ExtendedPose<T2>::Columns(T_.template cast<T2>()));
  }

 private:
  static void check_contacts(int k) {
    if (k < 0 || k > kMaxContacts) throw std::invalid_argument("ExtendedPose: contact count out of range");
  }

  Mat3<S> R_;
  Columns T_;
};

/// Lie-algebra matrix of a group tangent vector (size 9+3k).
template <typename S> MatX<S> hat(const VecX<S>& xi) {
  const int k = (static_cast<int>(xi.size()) - 9) / 3;
  if (xi.size() != group_dim(k) || k < 0) throw std::invalid_argument("hat: bad tangent dimension");
  const int n = homogeneous_dim(k);
  MatX<S> M = MatX<S>::Zero(n, n);
  M.template topLeftCorner<3, 3>() = skew<S>(xi.template head<3>());
  for (int i = 0; i < 2 + k; ++i) M.template block<3, 1>(0, 3 + i) = xi.template segment<3>(3 + 3 * i);
  return M;
}

/// SE_k(3) exponential of a group tangent vector (size 9+3k).
template <typename S> ExtendedPose<S> se_exp(const VecX<S>& xi) {
  const int k = (static_cast<int>(xi.size()) - 9) / 3;
  if (xi.size() != group_dim(k) || k < 0 || k > kMaxContacts)
    throw std::invalid_argument("se_exp: bad tangent dimension");
  if (!xi.allFinite()) throw std::invalid_argument("se_exp: non-finite tangent");
  const Vec3<S> phi = xi.template head<3>();
  const Mat3<S> J = so3_left_jacobian(phi);
  typename ExtendedPose<S>::Columns T(3, 2 + k);
  for (int i = 0; i < 2 + k; ++i) T.col(i) = J * xi.template segment<3>(3 + 3 * i);
  return ExtendedPose<S>(rot_exp(phi), T);
}

template <typename S> VecX<S> se_log(const ExtendedPose<S>& X) {
  const int k = X.num_contacts();
  VecX<S> xi(group_dim(k));
  const Vec3<S> phi = rot_log(X.R());
  xi.template head<3>() = phi;
  const Mat3<S> Jinv = so3_left_jacobian_inverse(phi);
  for (int i = 0; i < 2 + k; ++i) xi.template segment<3>(3 + 3 * i) = Jinv * X.columns().col(i);
  return xi;
}

/// Full state exponential: group part on SE_k(3), bias part additive.
template <typename S> std::pair<ExtendedPose<S>, Vec6<S>> state_exp(const VecX<S>& xz, int contacts) {
  if (contacts < 0 || contacts > kMaxContacts || xz.size() != state_dim(contacts))
    throw std::invalid_argument("state_exp: dimension mismatch");
  return {se_exp<S>(xz.head(group_dim(contacts))), xz.template tail<6>()};
}

template <typename S> VecX<S> state_log(const ExtendedPose<S>& X, const Vec6<S>& bias) {
  const int k = X.num_contacts();
  VecX<S> out(state_dim(k));
  out.head(group_dim(k)) = se_log(X);
  out.template tail<6>() = bias;
  return out;
}

/// Ad_X with X Exp(xi) X^-1 = Exp(Ad_X xi).
template <typename S> MatX<S> adjoint(const ExtendedPose<S>& X) {
  const int k = X.num_contacts();
  const int n = group_dim(k);
  MatX<S> Ad = MatX<S>::Zero(n, n);
  for (int i = 0; i < 3 + k; ++i) Ad.template block<3, 3>(3 * i, 3 * i) = X.R();
  for (int i = 0; i < 2 + k; ++i)
    Ad.template block<3, 3>(3 + 3 * i, 0) = skew<S>(X.columns().col(i)) * X.R();
  return Ad;
}

/// Left Jacobian of SE_k(3): Exp(xi + d) ~= Exp(J_l(xi) d) Exp(xi).
template <typename S> MatX<S> se_left_jacobian(const VecX<S>& xi) {
  const int n = static_cast<int>(xi.size());
  const int cols = (n - 3) / 3;
  const Vec3<S> phi = xi.template head<3>();
  const Mat3<S> J = so3_left_jacobian(phi);
  MatX<S> out = MatX<S>::Zero(n, n);
  for (int i = 0; i < 1 + cols; ++i) out.template block<3, 3>(3 * i, 3 * i) = J;
  for (int i = 0; i < cols; ++i)
    out.template block<3, 3>(3 + 3 * i, 0) = se3_q_matrix<S>(phi, xi.template segment<3>(3 + 3 * i));
  return out;
}

template <typename S> MatX<S> se_left_jacobian_inverse(const VecX<S>& xi) {
  const int n = static_cast<int>(xi.size());
  const int cols = (n - 3) / 3;
  const Vec3<S> phi = xi.template head<3>();
  const Mat3<S> Jinv = so3_left_jacobian_inverse(phi);
  MatX<S> out = MatX<S>::Zero(n, n);
  for (int i = 0; i < 1 + cols; ++i) out.template block<3, 3>(3 * i, 3 * i) = Jinv;
  for (int i = 0; i < cols; ++i)
    out.template block<3, 3>(3 + 3 * i, 0) =
        -Jinv * se3_q_matrix<S>(phi, xi.template segment<3>(3 + 3 * i)) * Jinv;
  return out;
}

template <typename S> MatX<S> se_right_jacobian_inverse(const VecX<S>& xi) {
  return se_left_jacobian_inverse<S>(-xi);
}

/// Matrix of the linear map xi -> hat(xi) * b for a homogeneous vector b,
/// shape (5+k) x (9+3k).
template <typename S> MatX<S> odot(const VecX<S>& b) {
  const int n = static_cast<int>(b.size());
  const int k = n - 5;
  if (k < 0 || k > kMaxContacts) throw std::invalid_argument("odot: bad homogeneous dimension");
  MatX<S> out = MatX<S>::Zero(n, group_dim(k));
  out.template block<3, 3>(0, 0) = -skew<S>(b.template head<3>());
  for (int i = 0; i < 2 + k; ++i) out.template block<3, 3>(0, 3 + 3 * i) = b[3 + i] * Mat3<S>::Identity();
  return out;
}

/// Homogeneous kinematic vector (pos, 0, 1, ..) with -1 in the slot of contact j.
template <typename S> VecX<S> kinematic_vector(const Vec3<S>& pos, int contacts, int j) {
  VecX<S> b = VecX<S>::Zero(homogeneous_dim(contacts));
  b.template head<3>() = pos;
  b[4] = S(1);
  b[5 + j] = S(-1);
  return b;
}

using Pose = ExtendedPose<double>;

}  // namespace qse
