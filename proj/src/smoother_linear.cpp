#include <qse/smoother_linear.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numeric>

namespace qse::smoother {
namespace {

double condition(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M, Eigen::EigenvaluesOnly).eigenvalues();
  const double lo = ev.minCoeff(), hi = ev.cwiseAbs().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& M, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) throw SingularSystem(what, condition(M));
  return llt;
}

}  // namespace

double LinearFactor::cost(std::span<const Eigen::VectorXd> e) const {
  Eigen::VectorXd res = r;
  for (std::size_t i = 0; i < J.size(); ++i) res -= J[i] * e[first + i];
  return res.dot(W * res);
}

Eigen::MatrixXd information(const Eigen::MatrixXd& cov) {
  const auto llt = factor(cov, "factor covariance is not positive definite");
  Eigen::MatrixXd W = llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
  return 0.5 * (W + W.transpose());
}

Eigen::MatrixXd BlockTridiagonal::dense() const {
  std::vector<int> off(D.size() + 1, 0);
  for (std::size_t i = 0; i < D.size(); ++i) off[i + 1] = off[i] + static_cast<int>(D[i].rows());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(off.back(), off.back());
  for (std::size_t i = 0; i < D.size(); ++i) {
    H.block(off[i], off[i], D[i].rows(), D[i].cols()) = D[i];
    if (i + 1 < D.size()) {
      H.block(off[i], off[i + 1], U[i].rows(), U[i].cols()) = U[i];
      H.block(off[i + 1], off[i], U[i].cols(), U[i].rows()) = U[i].transpose();
    }
  }
  return H;
}

Eigen::VectorXd BlockTridiagonal::dense_rhs() const {
  Eigen::VectorXd out(std::accumulate(b.begin(), b.end(), Eigen::Index{0},
                                      [](Eigen::Index s, const Eigen::VectorXd& v) { return s + v.size(); }));
  Eigen::Index o = 0;
  for (const auto& v : b) {
    out.segment(o, v.size()) = v;
    o += v.size();
  }
  return out;
}

BlockTridiagonal normal_equations(std::span<const int> dims, std::span<const LinearFactor> factors) {
  const std::size_t n = dims.size();
  BlockTridiagonal sys;
  for (std::size_t i = 0; i < n; ++i) {
    sys.D.push_back(Eigen::MatrixXd::Zero(dims[i], dims[i]));
    sys.b.push_back(Eigen::VectorXd::Zero(dims[i]));
    if (i + 1 < n) sys.U.push_back(Eigen::MatrixXd::Zero(dims[i], dims[i + 1]));
  }
  for (const auto& f : factors) {
    if (f.J.empty() || f.J.size() > 2 || f.first < 0 || f.last() >= static_cast<int>(n))
      throw std::invalid_argument("normal_equations: factor does not fit the chain");
    std::vector<Eigen::MatrixXd> WJ;
    for (std::size_t a = 0; a < f.J.size(); ++a) {
      if (f.J[a].cols() != dims[f.first + a] || f.J[a].rows() != f.r.size())
        throw std::invalid_argument("normal_equations: Jacobian block has the wrong shape");
      WJ.push_back(f.W * f.J[a]);
    }
    for (std::size_t a = 0; a < f.J.size(); ++a) {
      const int i = f.first + static_cast<int>(a);
      sys.D[i].noalias() += f.J[a].transpose() * WJ[a];
      sys.b[i].noalias() += WJ[a].transpose() * f.r;
    }
    if (f.J.size() == 2) sys.U[f.first].noalias() += f.J[0].transpose() * WJ[1];
  }
  return sys;
}

std::vector<Eigen::VectorXd> solve(const BlockTridiagonal& sys) {
  const std::size_t n = sys.D.size();
  std::vector<Eigen::LLT<Eigen::MatrixXd>> S;
  std::vector<Eigen::VectorXd> y(n);
  S.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::MatrixXd Si = sys.D[i];
    y[i] = sys.b[i];
    if (i > 0) {
      const Eigen::MatrixXd G = S[i - 1].solve(sys.U[i - 1]);
      Si.noalias() -= sys.U[i - 1].transpose() * G;
      y[i].noalias() -= G.transpose() * y[i - 1];
    }
    S.push_back(factor(Si, ("normal matrix is singular at node " + std::to_string(i)).c_str()));
  }
  std::vector<Eigen::VectorXd> x(n);
  for (std::size_t i = n; i-- > 0;) {
    Eigen::VectorXd rhs = y[i];
    if (i + 1 < n) rhs.noalias() -= sys.U[i] * x[i + 1];
    x[i] = S[i].solve(rhs);
  }
  return x;
}

double total_cost(std::span<const LinearFactor> factors, std::span<const Eigen::VectorXd> e) {
  double c = 0.0;
  for (const auto& f : factors) c += f.cost(e);
  return c;
}

Eigen::VectorXd Marginal::mean() const {
  return info.completeOrthogonalDecomposition().solve(vec);
}

Eigen::MatrixXd Marginal::covariance() const {
  const auto llt = factor(info, "marginal information is singular");
  return llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
}

Marginal marginalize_first(int dim0, int dim1, std::span<const LinearFactor> factors) {
  const std::array<int, 2> dims{dim0, dim1};
  for (const auto& f : factors)
    if (f.first != 0 || f.last() > 1) throw std::invalid_argument("marginalize_first: factor does not touch node 0");
  const auto sys = normal_equations(dims, factors);
  const auto A = factor(sys.D[0], "marginal block of the oldest node is singular");
  const Eigen::MatrixXd G = A.solve(sys.U[0]);
  Marginal m;
  m.info = sys.D[1] - sys.U[0].transpose() * G;
  m.info = 0.5 * (m.info + m.info.transpose()).eval();
  m.vec = sys.b[1] - G.transpose() * sys.b[0];
  return m;
}

}  // namespace qse::smoother
