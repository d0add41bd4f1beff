#pragma once

// Fixed-lag invariant smoother: prior, IMU propagation and kinematic
// observation factors over a sliding window, solved by Gauss-Newton.

#include <qse/estimator.hpp>
#include <qse/iekf.hpp>
#include <qse/imu_model.hpp>
#include <qse/smoother_linear.hpp>

#include <deque>
#include <optional>
#include <vector>

namespace qse::smoother {

struct Config {
  int window = 3;
  int max_iterations = 5;
  double tolerance = 1e-6;  // increment norm
  int max_halvings = 4;

  imu::NoiseDensities noise;
  double kinematic_noise = 5e-3;
  double contact_init = 0.03;
  // Linearize observations at X_bar Y instead of the invariant b^kin; the two
  // agree when the measurement is consistent.
  bool exact_observation_jacobian = false;
  // Prior Jacobian J_l^-1(Log(X X_anchor^-1)) instead of the identity.
  bool exact_prior_jacobian = false;

  double initial_attitude = 0.1;
  double initial_velocity = 0.1;
  double initial_position = 1e-3;
  double initial_gyro_bias = 0.01;
  double initial_accel_bias = 0.1;
};

struct Node {
  double t = 0.0;
  Pose X;
  Vector6d bias = Vector6d::Zero();
  std::vector<Foot> feet;  // one per contact column, sorted by foot id
  std::vector<iekf::KinematicMeasurement> meas;
  std::vector<Foot> fresh;  // contacts that touched down at this node

  // Input held until the next node.
  ImuSample imu;
  double dt = 0.0;

  int dim() const { return state_dim(X.num_contacts()); }
  std::optional<int> slot(Foot f) const;
};

/// Residual r with Jacobians J such that r(e) ~= r - J e for the perturbation
/// X = Exp(e) X_bar, b = b_bar + zeta.
struct Residual {
  Eigen::VectorXd r;
  Eigen::MatrixXd J_t;
  Eigen::MatrixXd J_next;  // empty for unary factors
  Eigen::MatrixXd cov;
  Eigen::MatrixXd info;  // inverse of cov
};

/// Gaussian on a node's tangent space anchored at a fixed operating point.
struct PriorFactor {
  Pose anchor;
  Vector6d bias_anchor = Vector6d::Zero();
  std::vector<Foot> feet;
  Marginal belief;
  Eigen::VectorXd mean;

  /// Diagonal prior centred on the node; contact positions carry no information.
  static PriorFactor initial(const Node& n, const Config& cfg);
  static PriorFactor from_marginal(const Node& n, const Marginal& m);
  Eigen::MatrixXd covariance() const { return belief.covariance(); }
};

/// Log(f(X_t) X_{t+1}^-1) and the bias difference over the contacts both nodes share.
Residual propagation_residual(const Node& a, const Node& b, const Config& cfg, const Vector3d& g = kGravity,
                              bool jacobians = true);

/// Position rows of X Y - b for one contact.
Residual observation_residual(const Node& n, const iekf::KinematicMeasurement& m, const Config& cfg,
                              bool jacobians = true);

/// Factor form of the prior at the node's current operating point.
LinearFactor prior_factor(const PriorFactor& prior, const Node& n, bool exact_jacobian = false);

class Window {
 public:
  Window(const Config& cfg, const Vector3d& g = kGravity) : cfg_(cfg), g_(g) {}

  void reset(const Node& first, const PriorFactor& prior);
  void push(const Node& n);
  std::size_t size() const { return nodes_.size(); }
  const std::deque<Node>& nodes() const { return nodes_; }
  std::deque<Node>& nodes() { return nodes_; }
  const PriorFactor& prior() const { return prior_; }

  /// Linearized factors at the current operating points; with `oldest_only`
  /// just those touching the first node.
  std::vector<LinearFactor> linearize(bool oldest_only = false) const;
  double cost() const;

  /// Returns the number of iterations run.
  int gauss_newton();
  const std::vector<double>& costs() const { return costs_; }

  /// Moves information about the oldest node into a prior on the next one.
  void marginalize_oldest();

  void retract(std::span<const Eigen::VectorXd> e, double scale);

 private:
  Config cfg_;
  Vector3d g_;
  std::deque<Node> nodes_;
  PriorFactor prior_;
  std::vector<double> costs_;
};

class Smoother : public Estimator {
 public:
  Smoother(const Config& cfg, const InitialState& init, const Vector3d& g = kGravity);
  std::string name() const override { return "smoother"; }
  const Window& window() const { return window_; }

 protected:
  EstimateRecord process(const SensorFrame& frame) override;

 private:
  Config cfg_;
  Vector3d g_;
  InitialState init_;
  Window window_;
  std::optional<SensorFrame> last_;
};

}  // namespace qse::smoother
