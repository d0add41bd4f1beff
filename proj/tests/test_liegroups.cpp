#include <gtest/gtest.h>

#include <qse/liegroups.hpp>

#include <cmath>
#include <limits>
#include <numbers>

#include "test_util.hpp"

using namespace qse;
using qse::testing::Gen;
using qse::testing::max_abs;

constexpr double kPi = std::numbers::pi;

TEST(RotExp, ZeroIsIdentity) {
  EXPECT_EQ(rot_exp<double>(Vector3d::Zero()), Matrix3d::Identity());
}

TEST(RotExp, HalfTurnAboutX) {
  const Matrix3d R = rot_exp<double>(Vector3d(kPi, 0, 0));
  EXPECT_LT(max_abs(R - Eigen::Vector3d(1, -1, -1).asDiagonal().toDenseMatrix()), 1e-15);
}

TEST(RotExp, QuarterTurnAboutZ) {
  const Vector3d y = rot_exp<double>(Vector3d(0, 0, kPi / 2)) * Vector3d::UnitX();
  EXPECT_LT((y - Vector3d::UnitY()).norm(), 1e-15);
}

TEST(RotExp, NonFiniteThrows) {
  EXPECT_THROW(rot_exp<double>(Vector3d(std::numeric_limits<double>::quiet_NaN(), 0, 0)),
               std::invalid_argument);
  EXPECT_THROW(rot_exp<double>(Vector3d(std::numeric_limits<double>::infinity(), 0, 0)),
               std::invalid_argument);
}

TEST(RotLog, Identity) { EXPECT_EQ(rot_log<double>(Matrix3d::Identity()), Vector3d::Zero()); }

TEST(RotLog, HalfTurnUsesPositiveAxisConvention) {
  const Matrix3d R = Eigen::Vector3d(1, -1, -1).asDiagonal();
  EXPECT_LT((rot_log<double>(R) - Vector3d(kPi, 0, 0)).norm(), 1e-12);
  const Matrix3d Ry = Eigen::Vector3d(-1, 1, -1).asDiagonal();
  EXPECT_LT((rot_log<double>(Ry) - Vector3d(0, kPi, 0)).norm(), 1e-12);
}

TEST(RotLog, RejectsNonRotation) {
  Matrix3d R = Matrix3d::Identity();
  R(0, 1) = 1e-3;
  EXPECT_THROW(rot_log<double>(R), std::invalid_argument);
  EXPECT_THROW(rot_log<double>(Matrix3d(-Matrix3d::Identity())), std::invalid_argument);
}

TEST(RotLog, InvertsExpOnPrincipalDomain) {
  Gen g(1);
  for (int i = 0; i < 2000; ++i) {
    Vector3d axis = g.vec3(1.0).normalized();
    // Cover tiny, moderate and near-pi angles.
    double angle;
    switch (i % 4) {
      case 0: angle = g.uniform(0.0, 1e-7); break;
      case 1: angle = g.uniform(0.0, 1.0); break;
      case 2: angle = g.uniform(1.0, kPi - 1e-3); break;
      default: angle = kPi - 1e-3 - g.uniform(0.0, 1e-4); break;
    }
    const Vector3d w = angle * axis;
    EXPECT_LT((rot_log<double>(rot_exp<double>(w)) - w).norm(), 1e-9) << "angle " << angle;
  }
}

TEST(RotLog, NearPiKeepsAxisSign) {
  const Vector3d axis = Vector3d(0.3, -0.5, 0.2).normalized();
  for (double eps : {1e-4, 1e-6, 1e-9}) {
    const Vector3d w = (kPi - eps) * axis;
    EXPECT_LT((rot_log<double>(rot_exp<double>(w)) - w).norm(), 1e-6) << eps;
  }
}

TEST(Quaternion, RoundTripPreservesMatrix) {
  Gen g(2);
  for (int i = 0; i < 200; ++i) {
    const Matrix3d R = g.rotation();
    const Eigen::Quaterniond q = quat_from_rotation(R);
    EXPECT_NEAR(q.norm(), 1.0, 1e-12);
    EXPECT_LT(max_abs(rotation_from_quat(q) - R), 1e-9);
    Eigen::Quaterniond neg(-q.w(), -q.x(), -q.y(), -q.z());
    EXPECT_LT(max_abs(rotation_from_quat(neg) - R), 1e-9);
  }
}

TEST(ExtendedPose, GroupAxioms) {
  Gen g(3);
  for (int i = 0; i < 200; ++i) {
    const int k = g.integer(0, kMaxContacts);
    const Pose X = g.pose(k), Y = g.pose(k), Z = g.pose(k);
    EXPECT_LT(max_abs(((X * Y) * Z).matrix() - (X * (Y * Z)).matrix()), 1e-10);
    EXPECT_LT(max_abs((X * X.inverse()).matrix() - Eigen::MatrixXd::Identity(5 + k, 5 + k)), 1e-10);
    EXPECT_LT(max_abs((X * Y).matrix() - X.matrix() * Y.matrix()), 1e-12);
  }
}

TEST(ExtendedPose, ContactMismatchThrows) {
  EXPECT_THROW(Pose::Identity(1) * Pose::Identity(2), std::invalid_argument);
  EXPECT_THROW(Pose::Identity(5), std::invalid_argument);
}

TEST(StateExp, ZeroIsIdentity) {
  for (int k = 0; k <= kMaxContacts; ++k) {
    const auto [X, b] = state_exp<double>(Eigen::VectorXd::Zero(state_dim(k)), k);
    EXPECT_EQ(X.matrix(), Eigen::MatrixXd::Identity(5 + k, 5 + k));
    EXPECT_EQ(b, Vector6d::Zero());
  }
}

TEST(StateExp, PureTranslation) {
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(state_dim(1));
  xi.segment<3>(6) = Vector3d(1, 2, 3);
  const auto [X, b] = state_exp<double>(xi, 1);
  EXPECT_EQ(X.p(), Vector3d(1, 2, 3));
  EXPECT_EQ(X.R(), Matrix3d::Identity());
  EXPECT_EQ(X.v(), Vector3d::Zero());
  EXPECT_EQ(X.d(0), Vector3d::Zero());
  EXPECT_EQ(b, Vector6d::Zero());
}

TEST(StateExp, DimensionMismatchThrows) {
  EXPECT_THROW(state_exp<double>(Eigen::VectorXd::Zero(16), 0), std::invalid_argument);
  EXPECT_THROW(state_exp<double>(Eigen::VectorXd::Zero(18), 2), std::invalid_argument);
}

TEST(StateExp, LogInvertsExp) {
  Gen g(4);
  for (int i = 0; i < 500; ++i) {
    const int k = g.integer(0, kMaxContacts);
    Eigen::VectorXd xi = g.vector(state_dim(k), 3.0);
    const double angle = g.uniform(0.0, kPi - 1e-3);
    xi.head<3>() = xi.head<3>().normalized() * angle;
    const auto [X, b] = state_exp<double>(xi, k);
    EXPECT_LT((state_log(X, b) - xi).norm(), 1e-9) << "k=" << k << " angle=" << angle;
  }
}

TEST(StateExp, MatchesMatrixExponentialSeries) {
  Gen g(5);
  for (int i = 0; i < 50; ++i) {
    const int k = g.integer(0, kMaxContacts);
    const Eigen::VectorXd xi = g.vector(group_dim(k), 1.0);
    const Eigen::MatrixXd A = hat<double>(xi);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(A.rows(), A.cols());
    Eigen::MatrixXd sum = term;
    for (int n = 1; n < 40; ++n) {
      term = term * A / n;
      sum += term;
    }
    EXPECT_LT(max_abs(se_exp<double>(xi).matrix() - sum), 1e-12);
  }
}

TEST(Adjoint, IdentityPose) {
  for (int k = 0; k <= kMaxContacts; ++k)
    EXPECT_EQ(adjoint(Pose::Identity(k)), Eigen::MatrixXd::Identity(group_dim(k), group_dim(k)));
}

TEST(Adjoint, DefiningIdentity) {
  Gen g(6);
  for (int i = 0; i < 100; ++i) {
    const int k = g.integer(0, kMaxContacts);
    const Pose X = g.pose(k, 1.0);
    const Eigen::VectorXd xi = g.vector(group_dim(k), 0.3);
    const Eigen::MatrixXd lhs = se_exp<double>(Eigen::VectorXd(adjoint(X) * xi)).matrix();
    const Eigen::MatrixXd rhs = (X * se_exp<double>(xi) * X.inverse()).matrix();
    EXPECT_LT(max_abs(lhs - rhs), 1e-8);
  }
}

TEST(Adjoint, IsHomomorphism) {
  Gen g(7);
  for (int i = 0; i < 100; ++i) {
    const int k = g.integer(0, kMaxContacts);
    const Pose X = g.pose(k), Y = g.pose(k);
    EXPECT_LT(max_abs(adjoint(X * Y) - adjoint(X) * adjoint(Y)), 1e-8);
  }
}

TEST(Adjoint, ContactRowBlock) {
  Pose X = Pose::Identity(1);
  X.d(0) = Vector3d(1, 0, 0);
  const Eigen::MatrixXd Ad = adjoint(X);
  EXPECT_EQ(Eigen::Matrix3d(Ad.block<3, 3>(9, 0)), skew<double>(Vector3d(1, 0, 0)));
}

TEST(Odot, ZeroVectorGivesZeroMatrix) {
  for (int k = 0; k <= kMaxContacts; ++k) {
    const Eigen::MatrixXd M = odot<double>(Eigen::VectorXd::Zero(5 + k));
    EXPECT_EQ(M.rows(), 5 + k);
    EXPECT_EQ(M.cols(), group_dim(k));
    EXPECT_EQ(max_abs(M), 0.0);
  }
}

TEST(Odot, KinematicVectorPattern) {
  // b = (0,0,0, 0, 1, -1): hat(xi) b picks up +xi_p - xi_d. The measurement
  // Jacobian H = [0 0 -I I] is the negative of this block.
  const Eigen::VectorXd b = kinematic_vector<double>(Vector3d::Zero(), 1, 0);
  Gen g(8);
  const Eigen::VectorXd xi = g.vector(group_dim(1), 1.0);
  const Eigen::VectorXd out = odot<double>(b) * xi;
  EXPECT_LT((out.head<3>() - (xi.segment<3>(6) - xi.segment<3>(9))).norm(), 1e-15);
  EXPECT_EQ(out.tail(3).norm(), 0.0);

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3, group_dim(1));
  H.block<3, 3>(0, 6) = -Matrix3d::Identity();
  H.block<3, 3>(0, 9) = Matrix3d::Identity();
  EXPECT_EQ(Eigen::MatrixXd(-odot<double>(b).topRows(3)), H);
}

TEST(Odot, MatchesHatAction) {
  Gen g(9);
  for (int i = 0; i < 100; ++i) {
    const int k = g.integer(0, kMaxContacts);
    const Eigen::VectorXd b = g.vector(5 + k, 2.0);
    const Eigen::VectorXd xi = g.vector(group_dim(k), 1.0);
    EXPECT_LT((hat<double>(xi) * b - odot<double>(b) * xi).norm(), 1e-12);
  }
}

TEST(Odot, FiniteDifferenceConvergesLinearly) {
  Gen g(10);
  const int k = 2;
  const Eigen::VectorXd b = g.vector(5 + k, 2.0);
  const Eigen::VectorXd xi = g.vector(group_dim(k), 1.0);
  const Eigen::VectorXd expected = odot<double>(b) * xi;
  double prev = 0.0;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const Eigen::VectorXd fd = (se_exp<double>(Eigen::VectorXd(eps * xi)).act(b) - b) / eps;
    const double rel = (fd - expected).norm() / expected.norm();
    EXPECT_LT(rel, 10 * eps);
    if (prev > 0.0) EXPECT_LT(rel, 0.2 * prev);
    prev = rel;
  }
}

TEST(Jacobians, LeftJacobianFirstOrder) {
  Gen g(11);
  for (int i = 0; i < 100; ++i) {
    const int k = g.integer(0, kMaxContacts);
    Eigen::VectorXd xi = g.vector(group_dim(k), 1.0);
    if (i % 3 == 0) xi.head<3>() *= 1e-3;  // series branch of the coupling block
    const Eigen::VectorXd d = g.vector(group_dim(k), 1.0);
    const double h = 1e-6;
    // Log(Exp(xi + h d) Exp(xi)^-1) / h -> J_l(xi) d
    const Eigen::VectorXd lhs =
        (se_log(se_exp<double>(Eigen::VectorXd(xi + h * d)) * se_exp<double>(xi).inverse()) -
         se_log(se_exp<double>(Eigen::VectorXd(xi - h * d)) * se_exp<double>(xi).inverse())) /
        (2 * h);
    EXPECT_LT((lhs - se_left_jacobian<double>(xi) * d).norm(), 1e-7 * (1 + d.norm()));
    EXPECT_LT(max_abs(se_left_jacobian<double>(xi) * se_left_jacobian_inverse<double>(xi) -
                      Eigen::MatrixXd::Identity(xi.size(), xi.size())),
              1e-10);
  }
}

TEST(Jacobians, SeriesAndClosedFormAgreeAtThreshold) {
  const Vector3d axis = Vector3d(0.2, -0.7, 0.4).normalized();
  const Vector3d rho(0.5, 1.5, -2.0);
  for (double t : {1e-3, 1e-1}) {
    const Matrix3d a = se3_q_matrix<double>(axis * (t * (1 - 1e-9)), rho);
    const Matrix3d b = se3_q_matrix<double>(axis * (t * (1 + 1e-9)), rho);
    EXPECT_LT(max_abs(a - b), 1e-9);
    const Matrix3d c = so3_left_jacobian_inverse<double>(axis * (t * (1 - 1e-9)));
    const Matrix3d d = so3_left_jacobian_inverse<double>(axis * (t * (1 + 1e-9)));
    EXPECT_LT(max_abs(c - d), 1e-9);
  }
}
