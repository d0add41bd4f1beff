#include <qse/iekf.hpp>
#include <qse/synth.hpp>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace qse;
using namespace qse::iekf;
using qse::testing::Gen;
using qse::testing::max_abs;

namespace {

Belief random_belief(Gen& gen, int contacts) {
  Belief b;
  b.X = gen.pose(contacts);
  b.bias = gen.vector(6, 0.05);
  b.P = gen.spd(state_dim(contacts), 0.01);
  b.P = (0.5 * (b.P + b.P.transpose())).eval();
  for (int j = 0; j < contacts; ++j) b.feet.push_back(kAllFeet[j]);
  return b;
}

KinematicMeasurement consistent(const Belief& b, int j, const Matrix3d& cov) {
  return {b.feet[j], b.X.R().transpose() * (b.X.d(j) - b.X.p()), cov};
}

bool is_psd(const Eigen::MatrixXd& P, double tol = 1e-12) {
  if (max_abs(P - P.transpose()) > 0.0) return false;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P).eigenvalues().minCoeff() >= -tol * std::max(1.0, max_abs(P));
}

Eigen::VectorXd right_error(const Pose& est, const Pose& truth) { return se_log<double>(est * truth.inverse()); }

}  // namespace

TEST(Propagate, UprightRestIsEquilibrium) {
  Belief b;
  b.X.p() = Vector3d(1, 2, 0.5);
  ImuSample imu;
  imu.accel = Vector3d(0, 0, kGravityMagnitude);
  const auto out = propagate(b, imu, 0.0025, Config{});
  EXPECT_LT((out.X.R() - Matrix3d::Identity()).norm(), 1e-15);
  EXPECT_LT(out.X.v().norm(), 1e-15);
  EXPECT_LT((out.X.p() - b.X.p()).norm(), 1e-15);
}

TEST(Propagate, FreeFallGainsGravity) {
  Belief b;
  b.X.v() = Vector3d(0.3, 0.0, -1.0);
  const double dt = 0.01;
  const auto out = propagate(b, ImuSample{}, dt, Config{});
  EXPECT_LT((out.X.v() - (b.X.v() + kGravity * dt)).norm(), 1e-15);
  EXPECT_LT((out.X.p() - (b.X.v() * dt + 0.5 * kGravity * dt * dt)).norm(), 1e-15);
}

TEST(Propagate, RejectsNonPositiveDt) {
  EXPECT_THROW(propagate(Belief{}, ImuSample{}, 0.0, Config{}), std::invalid_argument);
  EXPECT_THROW(propagate(Belief{}, ImuSample{}, -0.1, Config{}), std::invalid_argument);
}

TEST(Propagate, ContactsHeldAndCovarianceGrows) {
  Gen gen(3);
  auto b = random_belief(gen, 2);
  ImuSample imu{0.0, gen.vec3(1.0), gen.vec3(5.0), std::nullopt};
  const auto out = propagate(b, imu, 0.0025, Config{});
  EXPECT_EQ(out.X.d(0), b.X.d(0));
  EXPECT_EQ(out.X.d(1), b.X.d(1));
  EXPECT_EQ(out.bias, b.bias);
  EXPECT_TRUE(is_psd(out.P));
}

// The nonlinear error after one step matches the exact discrete linear map up
// to second order: halving the initial error quarters the discrepancy.
TEST(Propagate, LogLinearTwoScale) {
  Gen gen(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = gen.integer(0, 4);
    const Pose X = gen.pose(k);
    const Vector6d bias = gen.vector(6, 0.1);
    const imu::StepInput u{gen.vec3(2.0), gen.vec3(8.0), 0.5};
    const Eigen::VectorXd xi0 = gen.vector(state_dim(k), 1.0).normalized() * 0.05;
    const auto tr = imu::exact_transition(X, bias, u);
    const Pose Xn = imu::integrate(X, bias, u);
    auto discrepancy = [&](double s) {
      const Eigen::VectorXd e = s * xi0;
      const Pose Xh = se_exp<double>(e.head(group_dim(k))) * X;
      const Vector6d bh = bias + e.tail<6>();
      const Eigen::VectorXd nonlinear = right_error(imu::integrate(Xh, bh, u), Xn);
      const Eigen::VectorXd linear = tr.group * e.head(group_dim(k)) + tr.bias * e.tail<6>();
      return (nonlinear - linear).norm();
    };
    const double r = discrepancy(1.0) / discrepancy(0.5);
    EXPECT_GT(r, 3.5) << "trial " << trial;
    EXPECT_LT(r, 4.5) << "trial " << trial;
  }
}

// Without bias error the log-linear map is exact for any error size.
TEST(Propagate, LogLinearExactWithoutBiasError) {
  Gen gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = gen.integer(0, 4);
    const Pose X = gen.pose(k);
    const Vector6d bias = gen.vector(6, 0.1);
    const imu::StepInput u{gen.vec3(2.0), gen.vec3(8.0), 0.1};
    const Eigen::VectorXd xi = gen.vector(group_dim(k), 0.5);
    const Pose Xn = imu::integrate(X, bias, u);
    const Eigen::VectorXd nonlinear = right_error(imu::integrate(se_exp<double>(xi) * X, bias, u), Xn);
    EXPECT_LT((nonlinear - imu::exact_transition(X, bias, u).group * xi).norm(), 1e-10);
  }
}

// I + A dt is the first-order expansion of the exact discrete transition.
TEST(Propagate, FirstOrderTransitionConverges) {
  Gen gen(6);
  for (int trial = 0; trial < 10; ++trial) {
    const int k = gen.integer(0, 4);
    const Pose X = gen.pose(k);
    const Vector6d bias = gen.vector(6, 0.1);
    const Vector3d w = gen.vec3(2.0), a = gen.vec3(8.0);
    const int n = state_dim(k), gd = group_dim(k);
    auto gap = [&](double dt) {
      const auto tr = imu::exact_transition(X, bias, {w, a, dt});
      Eigen::MatrixXd Phi = Eigen::MatrixXd::Identity(n, n) + imu::error_dynamics(X) * dt;
      return std::max(max_abs(Phi.topLeftCorner(gd, gd) - tr.group), max_abs(Phi.topRightCorner(gd, 6) - tr.bias));
    };
    const double r = gap(0.01) / gap(0.005);
    EXPECT_GT(r, 3.5);
    EXPECT_LT(r, 4.5);
  }
}

TEST(Propagate, GroupBlockOfAIsStateIndependent) {
  Gen gen(7);
  for (int k = 0; k <= 4; ++k) {
    const int gd = group_dim(k);
    const Eigen::MatrixXd A0 = imu::error_dynamics(Pose::Identity(k)).topLeftCorner(gd, gd);
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::MatrixXd A = imu::error_dynamics(gen.pose(k, 10.0));
      EXPECT_EQ(A.topLeftCorner(gd, gd), A0);
      EXPECT_EQ(A.bottomRows(6), Eigen::MatrixXd::Zero(6, state_dim(k)));
    }
  }
}

TEST(Propagate, ErrorEvolutionIsTrajectoryIndependent) {
  Gen gen(8);
  const Vector6d zero = Vector6d::Zero();
  for (int trial = 0; trial < 20; ++trial) {
    const int k = gen.integer(0, 4);
    const Pose eta = se_exp<double>(gen.vector(group_dim(k), 0.5));
    const imu::StepInput u{gen.vec3(2.0), gen.vec3(8.0), 0.05};

    // Right translation of one estimate/truth pair with identical inputs.
    const Pose X1 = gen.pose(k), G = gen.pose(k);
    const Pose X2 = X1 * G;
    const auto e1 = right_error(imu::integrate(eta * X1, zero, u), imu::integrate(X1, zero, u));
    const auto e2 = right_error(imu::integrate(eta * X2, zero, u), imu::integrate(X2, zero, u));
    EXPECT_LT((e1 - e2).norm(), 1e-10);

    // Unrelated trajectory and inputs.
    const Pose X3 = gen.pose(k);
    const imu::StepInput u3{gen.vec3(2.0), gen.vec3(8.0), 0.05};
    const auto e3 = right_error(imu::integrate(eta * X3, zero, u3), imu::integrate(X3, zero, u3));
    EXPECT_LT((e1 - e3).norm(), 1e-10);
  }
}

TEST(Update, ConsistentMeasurementLeavesStateButShrinksCovariance) {
  Gen gen(9);
  const auto b = random_belief(gen, 1);
  const std::vector meas{consistent(b, 0, 1e-4 * Matrix3d::Identity())};
  const auto out = update(b, meas, Config{});
  EXPECT_LT(max_abs(out.X.matrix() - b.X.matrix()), 1e-14);
  EXPECT_LT((out.bias - b.bias).norm(), 1e-15);
  EXPECT_GT(max_abs(out.P - b.P), 1e-6);
  EXPECT_LT(out.P.trace(), b.P.trace());
  EXPECT_TRUE(is_psd(out.P));
}

TEST(Update, TwoConsistentContactsLeaveState) {
  Gen gen(10);
  const auto b = random_belief(gen, 3);
  const std::vector meas{consistent(b, 0, 1e-4 * Matrix3d::Identity()), consistent(b, 2, 1e-4 * Matrix3d::Identity())};
  const auto out = update(b, meas, Config{});
  EXPECT_LT(max_abs(out.X.matrix() - b.X.matrix()), 1e-14);
  EXPECT_LT((out.bias - b.bias).norm(), 1e-15);
  EXPECT_LT(out.P.trace(), b.P.trace());
}

TEST(Update, PositionContactTraceNeverIncreases) {
  Gen gen(11);
  Config cfg;
  cfg.gating = false;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = gen.integer(1, 4);
    auto b = random_belief(gen, k);
    const int j = gen.integer(0, k - 1);
    KinematicMeasurement m{b.feet[j], gen.vec3(0.5), gen.spd(3, gen.uniform(1e-6, 1.0), 0.0)};
    const Matrix3d R = b.X.R();
    m.cov = R.transpose() * m.cov * R;
    const auto out = update(b, std::vector{m}, cfg);
    auto block_trace = [&](const Eigen::MatrixXd& P) {
      const int d = 9 + 3 * j;
      return P.block<3, 3>(6, 6).trace() + P.block<3, 3>(d, d).trace();
    };
    EXPECT_LE(block_trace(out.P), block_trace(b.P) * (1.0 + 1e-12));
  }
}

// Independent oracle: with zero rotation and position errors, the update is a
// linear KF on the stacked tangent vector.
TEST(Update, MatchesLinearKalmanGain) {
  Gen gen(12);
  Config cfg;
  cfg.gating = false;
  auto b = random_belief(gen, 2);
  b.X.R() = Matrix3d::Identity();
  const Vector3d fk = b.X.d(1) - b.X.p() + gen.vec3(1e-3);
  const Matrix3d N = 1e-4 * Matrix3d::Identity();
  const auto out = update(b, std::vector<KinematicMeasurement>{{b.feet[1], fk, N}}, cfg);

  const int n = state_dim(2);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3, n);
  H.block<3, 3>(0, 6) = -Matrix3d::Identity();
  H.block<3, 3>(0, 12) = Matrix3d::Identity();
  const Eigen::MatrixXd S = H * b.P * H.transpose() + N;
  const Eigen::MatrixXd K = b.P * H.transpose() * S.inverse();
  const Eigen::MatrixXd Pk = (Eigen::MatrixXd::Identity(n, n) - K * H) * b.P;
  EXPECT_LT(max_abs(out.P - Pk), 1e-12);
  const Eigen::VectorXd dx = K * (fk + b.X.p() - b.X.d(1));
  EXPECT_LT(max_abs(out.X.matrix() - (se_exp<double>(dx.head(group_dim(2))) * b.X).matrix()), 1e-14);
  EXPECT_LT((out.bias - b.bias - dx.tail<6>()).norm(), 1e-15);
}

TEST(Update, InactiveContactIsError) {
  Gen gen(13);
  const auto b = random_belief(gen, 1);
  EXPECT_THROW(update(b, std::vector<KinematicMeasurement>{{Foot::RH, Vector3d::Zero(), Matrix3d::Identity()}}, Config{}),
               std::invalid_argument);
}

TEST(Update, SingularInnovationIsError) {
  Belief b;
  b.X = Pose::Identity(1);
  b.feet = {Foot::LF};
  b.P = Eigen::MatrixXd::Zero(18, 18);
  Config cfg;
  cfg.gating = false;
  EXPECT_THROW(update(b, std::vector<KinematicMeasurement>{{Foot::LF, Vector3d(0, 0, 1), Matrix3d::Zero()}}, cfg),
               std::runtime_error);
}

TEST(Update, GateRejectsOutlier) {
  Gen gen(14);
  const auto b = random_belief(gen, 2);
  auto slip = consistent(b, 1, 1e-6 * Matrix3d::Identity());
  slip.fk += Vector3d(5.0, 0, 0);
  const auto out = update(b, std::vector{slip}, Config{});
  EXPECT_EQ(out.P, b.P);
  Config off;
  off.gating = false;
  EXPECT_GT(max_abs(update(b, std::vector{slip}, off).X.matrix() - b.X.matrix()), 1e-3);
}

TEST(ManageContacts, AugmentThenRemoveRestoresCovariance) {
  Gen gen(15);
  for (int k = 0; k < 4; ++k) {
    const auto b = random_belief(gen, k);
    ContactState c{};
    for (int j = 0; j < k; ++j) c[j] = true;
    c[k] = true;
    const std::vector<KinematicMeasurement> meas{{kAllFeet[k], gen.vec3(0.5), Matrix3d::Identity()}};
    const auto aug = manage_contacts(b, c, meas, Config{});
    ASSERT_EQ(aug.contacts(), k + 1);
    c[k] = false;
    const auto back = manage_contacts(aug, c, {}, Config{});
    EXPECT_EQ(back.P, b.P);
    EXPECT_EQ(back.X.matrix(), b.X.matrix());
    EXPECT_EQ(back.feet, b.feet);
  }
}

TEST(ManageContacts, ZeroCovarianceGivesZeroBlock) {
  Belief b;
  b.P = Eigen::MatrixXd::Zero(15, 15);
  Config cfg;
  cfg.contact_init = 0.0;
  const auto out = manage_contacts(b, {true, false, false, false},
                                   std::vector<KinematicMeasurement>{{Foot::LF, Vector3d(0.3, 0.2, -0.4), Matrix3d::Identity()}}, cfg);
  EXPECT_EQ(out.P, Eigen::MatrixXd::Zero(18, 18));
}

TEST(ManageContacts, NewContactSatisfiesKinematics) {
  Gen gen(16);
  for (int trial = 0; trial < 20; ++trial) {
    const auto b = random_belief(gen, 1);
    const Vector3d fk = gen.vec3(0.5);
    const auto out = manage_contacts(b, {true, false, true, false},
                                     std::vector<KinematicMeasurement>{{Foot::LH, fk, Matrix3d::Identity()}}, Config{});
    ASSERT_EQ(out.slot(Foot::LH), 1);
    EXPECT_LT((out.X.R().transpose() * (out.X.d(1) - out.X.p()) - fk).norm(), 1e-12);
    EXPECT_TRUE(is_psd(out.P));
    // New block is the position block plus inflation; cross terms copy the position row.
    EXPECT_LT(max_abs(out.P.block<3, 3>(12, 12) - b.P.block<3, 3>(6, 6) - 9e-4 * Matrix3d::Identity()), 1e-15);
    EXPECT_LT(max_abs(out.P.block<3, 9>(12, 0) - b.P.block<3, 9>(6, 0)), 1e-15);
    EXPECT_LT(max_abs(out.P.block<3, 6>(12, 15) - b.P.block<3, 6>(6, 12)), 1e-15);
  }
}

TEST(ManageContacts, LiftOffRemovesOnlyThatContact) {
  Gen gen(17);
  const auto b = random_belief(gen, 3);
  const auto out = manage_contacts(b, {true, false, true, false}, {}, Config{});
  ASSERT_EQ(out.contacts(), 2);
  EXPECT_EQ(out.feet, (std::vector<Foot>{Foot::LF, Foot::LH}));
  EXPECT_EQ(out.X.d(0), b.X.d(0));
  EXPECT_EQ(out.X.d(1), b.X.d(2));
  EXPECT_EQ((out.P.block<3, 3>(12, 12)), (b.P.block<3, 3>(15, 15)));
  EXPECT_EQ((out.P.block<3, 3>(9, 12)), (b.P.block<3, 3>(9, 15)));
}

namespace {

void run_noiseless(synth::ProfileKind kind) {
  synth::MotionProfile pr;
  pr.kind = kind;
  const auto ds = synth::generate(pr, synth::default_gait(kind), synth::NoiseSpec::zero());
  InitialState init;
  init.R = ds.truth[0].R;
  init.v = ds.truth[0].v;
  init.p = ds.truth[0].p;
  Iekf f(Config{}, init);
  double worst_p = 0.0, ss_v = 0.0;
  for (std::size_t k = 0; k < ds.frames.size(); ++k) {
    const auto r = f.step(ds.frames[k]);
    worst_p = std::max(worst_p, (r.p - ds.truth[k].p).norm());
    ss_v += (r.v - ds.truth[k].v).squaredNorm();
  }
  EXPECT_LT(worst_p, 1e-3) << synth::profile_name(kind);
  EXPECT_LT(std::sqrt(ss_v / ds.frames.size()), 1e-3) << synth::profile_name(kind);
}

}  // namespace

TEST(IekfStep, NoiselessRest) { run_noiseless(synth::ProfileKind::Rest); }
TEST(IekfStep, NoiselessLine) { run_noiseless(synth::ProfileKind::ConstantVelocity); }
TEST(IekfStep, NoiselessCircle) { run_noiseless(synth::ProfileKind::Circle); }

TEST(IekfStep, CovariancePsdOnNoisyTrot) {
  synth::MotionProfile pr;
  pr.kind = synth::ProfileKind::FigureEight;
  pr.duration = 10.0;
  const auto ds = synth::generate(pr, synth::default_gait(pr.kind), synth::NoiseSpec::defaults());
  InitialState init;
  init.R = ds.truth[0].R;
  init.v = ds.truth[0].v;
  Iekf f(Config{}, init);
  for (const auto& fr : ds.frames) {
    f.step(fr);
    const auto& b = f.belief();
    ASSERT_EQ(b.P.rows(), state_dim(b.contacts()));
    ASSERT_EQ(b.contacts(), stance_count(fr.contact));
    ASSERT_TRUE(is_psd(b.P, 1e-10));
  }
  EXPECT_LT((f.belief().X.p() - ds.truth.back().p).norm(), 0.2);
}
