#pragma once

// Linear least-squares layer of the fixed-lag smoother. Nodes form a chain;
// every factor touches one node or two consecutive nodes.

#include <Eigen/Dense>

#include <span>
#include <stdexcept>
#include <vector>

namespace qse::smoother {

/// Cost (r - sum_i J_i e_i)^T W (r - sum_i J_i e_i) over nodes first, first+1, ...
struct LinearFactor {
  int first = 0;
  std::vector<Eigen::MatrixXd> J;
  Eigen::VectorXd r;
  Eigen::MatrixXd W;  // information (inverse covariance)

  int last() const { return first + static_cast<int>(J.size()) - 1; }
  double cost() const { return r.dot(W * r); }
  double cost(std::span<const Eigen::VectorXd> e) const;
};

/// Converts a covariance to a weight; throws if it is not positive definite.
Eigen::MatrixXd information(const Eigen::MatrixXd& cov);

class SingularSystem : public std::runtime_error {
 public:
  SingularSystem(const std::string& what, double condition)
      : std::runtime_error(what + " (condition estimate " + std::to_string(condition) + ")"), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

/// Symmetric block-tridiagonal system: D on the diagonal, U[i] coupling i and i+1.
struct BlockTridiagonal {
  std::vector<Eigen::MatrixXd> D;
  std::vector<Eigen::MatrixXd> U;
  std::vector<Eigen::VectorXd> b;

  Eigen::MatrixXd dense() const;
  Eigen::VectorXd dense_rhs() const;
};

BlockTridiagonal normal_equations(std::span<const int> dims, std::span<const LinearFactor> factors);

/// Block Cholesky forward/backward sweep. Throws SingularSystem.
std::vector<Eigen::VectorXd> solve(const BlockTridiagonal& sys);

double total_cost(std::span<const LinearFactor> factors, std::span<const Eigen::VectorXd> e);

/// Information form of a Gaussian; the mean may be undetermined along null directions.
struct Marginal {
  Eigen::MatrixXd info;
  Eigen::VectorXd vec;  // info * mean

  Eigen::VectorXd mean() const;
  Eigen::MatrixXd covariance() const;  // throws SingularSystem when info is singular
};

/// Eliminates node 0 from the factors touching it (nodes 0 and 1 only) and
/// returns the induced Gaussian on node 1.
Marginal marginalize_first(int dim0, int dim1, std::span<const LinearFactor> factors);

}  // namespace qse::smoother
