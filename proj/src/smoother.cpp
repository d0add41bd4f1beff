#include <qse/smoother.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace qse::smoother {
namespace {

// Places the columns of a Jacobian over the shared contacts into the full node tangent.
Eigen::MatrixXd scatter(const Eigen::MatrixXd& Jc, int k_full, const std::vector<int>& slots) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(Jc.rows(), state_dim(k_full));
  J.leftCols<9>() = Jc.leftCols<9>();
  for (std::size_t c = 0; c < slots.size(); ++c) J.middleCols<3>(9 + 3 * slots[c]) = Jc.middleCols<3>(9 + 3 * c);
  J.rightCols<6>() = Jc.rightCols<6>();
  return J;
}

iekf::Config measurement_config(const Config& cfg) {
  iekf::Config c;
  c.kinematic_noise = cfg.kinematic_noise;
  return c;
}

}  // namespace

std::optional<int> Node::slot(Foot f) const {
  const auto it = std::find(feet.begin(), feet.end(), f);
  if (it == feet.end()) return std::nullopt;
  return static_cast<int>(it - feet.begin());
}

PriorFactor PriorFactor::initial(const Node& n, const Config& cfg) {
  Eigen::VectorXd info = Eigen::VectorXd::Zero(n.dim());
  const int gd = group_dim(n.X.num_contacts());
  info.segment<3>(0).setConstant(1.0 / (cfg.initial_attitude * cfg.initial_attitude));
  info.segment<3>(3).setConstant(1.0 / (cfg.initial_velocity * cfg.initial_velocity));
  info.segment<3>(6).setConstant(1.0 / (cfg.initial_position * cfg.initial_position));
  info.segment<3>(gd).setConstant(1.0 / (cfg.initial_gyro_bias * cfg.initial_gyro_bias));
  info.segment<3>(gd + 3).setConstant(1.0 / (cfg.initial_accel_bias * cfg.initial_accel_bias));
  Marginal m;
  m.info = info.asDiagonal();
  m.vec = Eigen::VectorXd::Zero(n.dim());
  return from_marginal(n, m);
}

PriorFactor PriorFactor::from_marginal(const Node& n, const Marginal& m) {
  PriorFactor p;
  p.anchor = n.X;
  p.bias_anchor = n.bias;
  p.feet = n.feet;
  p.belief = m;
  p.mean = m.mean();
  return p;
}

Residual propagation_residual(const Node& a, const Node& b, const Config& cfg, const Vector3d& g, bool jacobians) {
  if (!(a.dt > 0.0)) throw std::invalid_argument("propagation_residual: dt must be positive");
  std::vector<int> sa, sb;
  for (std::size_t i = 0; i < a.feet.size(); ++i)
    if (const auto j = b.slot(a.feet[i])) {
      sa.push_back(static_cast<int>(i));
      sb.push_back(*j);
    }
  const int kc = static_cast<int>(sa.size());
  const int gd = group_dim(kc);
  const int n = state_dim(kc);
  const double dt = a.dt;

  const Pose Xa = a.X.select_contacts(sa), Xb = b.X.select_contacts(sb);
  const imu::StepInput u{a.imu.gyro, a.imu.accel, dt};
  const Eigen::VectorXd rg = se_log<double>(imu::integrate(Xa, a.bias, u, g) * Xb.inverse());

  Residual res;
  res.r.resize(n);
  res.r << rg, a.bias - b.bias;

  // B Cov B^T with B = dt blockdiag(Ad, I) and block-diagonal Cov, and its inverse through Ad^-1.
  const Eigen::VectorXd c = imu::noise_covariance(kc, cfg.noise, dt, imu::PositionNoise::Independent).diagonal();
  if (!(c.minCoeff() > 0.0))
    throw SingularSystem("propagation covariance is singular; every noise density must be positive",
                         std::numeric_limits<double>::infinity());
  const Eigen::MatrixXd Ad = adjoint(Xa), Adi = adjoint(Xa.inverse());
  res.cov = Eigen::MatrixXd::Zero(n, n);
  res.info = Eigen::MatrixXd::Zero(n, n);
  res.cov.topLeftCorner(gd, gd) = dt * dt * Ad * c.head(gd).asDiagonal() * Ad.transpose();
  res.info.topLeftCorner(gd, gd) = Adi.transpose() * c.head(gd).cwiseInverse().asDiagonal() * Adi / (dt * dt);
  res.cov.bottomRightCorner<6, 6>() = dt * dt * c.tail<6>().asDiagonal();
  res.info.bottomRightCorner<6, 6>() = c.tail<6>().cwiseInverse().asDiagonal();
  res.info.bottomRightCorner<6, 6>() /= dt * dt;
  res.cov = 0.5 * (res.cov + res.cov.transpose()).eval();
  res.info = 0.5 * (res.info + res.info.transpose()).eval();
  if (!jacobians) return res;

  const auto tr = imu::exact_transition(Xa, a.bias, u, g);
  const Eigen::MatrixXd Jl = se_left_jacobian_inverse<double>(rg);
  Eigen::MatrixXd Jt = Eigen::MatrixXd::Zero(n, n), Jn = Eigen::MatrixXd::Zero(n, n);
  Jt.topLeftCorner(gd, gd).noalias() = -Jl * tr.group;
  Jt.topRightCorner(gd, 6).noalias() = -Jl * tr.bias;
  Jt.bottomRightCorner<6, 6>() = -Eigen::Matrix<double, 6, 6>::Identity();
  Jn.topLeftCorner(gd, gd) = se_right_jacobian_inverse<double>(rg);
  Jn.bottomRightCorner<6, 6>().setIdentity();
  res.J_t = scatter(Jt, a.X.num_contacts(), sa);
  res.J_next = scatter(Jn, b.X.num_contacts(), sb);
  return res;
}

Residual observation_residual(const Node& n, const iekf::KinematicMeasurement& m, const Config& cfg, bool jacobians) {
  const auto j = n.slot(m.foot);
  if (!j) throw std::invalid_argument("observation_residual: foot " + std::string(foot_name(m.foot)) + " is not in contact");
  const int k = n.X.num_contacts();
  const Matrix3d& R = n.X.R();
  Residual res;
  res.r = R * m.fk + n.X.p() - n.X.d(*j);
  const bool fresh = std::find(n.fresh.begin(), n.fresh.end(), m.foot) != n.fresh.end();
  const double s2 = cfg.contact_init * cfg.contact_init;
  res.cov = fresh ? Matrix3d(s2 * Matrix3d::Identity()) : Matrix3d(R * m.cov * R.transpose());
  res.info = fresh ? Matrix3d(Matrix3d::Identity() / s2) : Matrix3d(R * m.cov.inverse() * R.transpose());
  if (!res.cov.allFinite() || !res.info.allFinite() || Eigen::LLT<Matrix3d>(Matrix3d(res.cov)).info() != Eigen::Success)
    throw SingularSystem("observation covariance is not positive definite", std::numeric_limits<double>::infinity());
  if (!jacobians) return res;
  Eigen::VectorXd XY = n.X.act(kinematic_vector<double>(m.fk, k, *j));
  if (!cfg.exact_observation_jacobian) XY.head<3>().setZero();  // b^kin
  res.J_t = Eigen::MatrixXd::Zero(3, state_dim(k));
  res.J_t.leftCols(group_dim(k)) = -odot<double>(XY).topRows<3>();
  return res;
}

LinearFactor prior_factor(const PriorFactor& prior, const Node& n, bool exact_jacobian) {
  if (prior.feet != n.feet) throw std::invalid_argument("prior_factor: contact set differs from the anchor");
  const int gd = group_dim(n.X.num_contacts());
  const Eigen::VectorXd rho = se_log<double>(n.X * prior.anchor.inverse());
  LinearFactor f;
  f.first = 0;
  Eigen::VectorXd at(n.dim());
  at << rho, n.bias - prior.bias_anchor;
  f.r = prior.mean - at;
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n.dim(), n.dim());
  if (exact_jacobian) J.topLeftCorner(gd, gd) = se_left_jacobian_inverse<double>(rho);
  f.J = {J};
  f.W = prior.belief.info;
  return f;
}

void Window::reset(const Node& first, const PriorFactor& prior) {
  nodes_.assign(1, first);
  prior_ = prior;
  costs_.clear();
}

void Window::push(const Node& n) {
  if (!nodes_.empty() && !(n.t > nodes_.back().t)) throw std::invalid_argument("Window::push: timestamps must increase");
  nodes_.push_back(n);
}

std::vector<LinearFactor> Window::linearize(bool oldest_only) const {
  std::vector<LinearFactor> out;
  if (nodes_.empty()) return out;
  out.push_back(prior_factor(prior_, nodes_.front(), cfg_.exact_prior_jacobian));
  const int n = oldest_only ? std::min<int>(1, static_cast<int>(nodes_.size())) : static_cast<int>(nodes_.size());
  for (int i = 0; i < n; ++i) {
    for (const auto& m : nodes_[i].meas) {
      auto res = observation_residual(nodes_[i], m, cfg_);
      out.push_back({i, {std::move(res.J_t)}, std::move(res.r), std::move(res.info)});
    }
    if (i + 1 < static_cast<int>(nodes_.size())) {
      auto res = propagation_residual(nodes_[i], nodes_[i + 1], cfg_, g_);
      out.push_back({i, {std::move(res.J_t), std::move(res.J_next)}, std::move(res.r), std::move(res.info)});
    }
  }
  return out;
}

double Window::cost() const {
  if (nodes_.empty()) return 0.0;
  double c = prior_factor(prior_, nodes_.front(), cfg_.exact_prior_jacobian).cost();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (const auto& m : nodes_[i].meas) {
      const auto res = observation_residual(nodes_[i], m, cfg_, false);
      c += res.r.dot(res.info * res.r);
    }
    if (i + 1 < nodes_.size()) {
      const auto res = propagation_residual(nodes_[i], nodes_[i + 1], cfg_, g_, false);
      c += res.r.dot(res.info * res.r);
    }
  }
  return c;
}

void Window::retract(std::span<const Eigen::VectorXd> e, double scale) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    const int gd = group_dim(n.X.num_contacts());
    n.X = se_exp<double>(scale * e[i].head(gd)) * n.X;
    n.bias += scale * e[i].tail<6>();
  }
}

int Window::gauss_newton() {
  costs_.clear();
  if (nodes_.empty()) return 0;
  std::vector<int> dims;
  for (const auto& n : nodes_) dims.push_back(n.dim());

  auto factors = linearize();
  double c = 0.0;
  for (const auto& f : factors) c += f.cost();
  costs_.push_back(c);


  int it = 0;
  while (it < cfg_.max_iterations) {
    ++it;
    const auto e = solve(normal_equations(dims, factors));
    double norm2 = 0.0;
    for (const auto& v : e) norm2 += v.squaredNorm();

    const auto saved = nodes_;
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= cfg_.max_halvings; ++h, scale *= 0.5) {
      retract(e, scale);
      const double ct = cost();
      if (ct <= c) {
        c = ct;
        accepted = true;
        break;
      }
      nodes_ = saved;
    }
    if (!accepted) break;
    costs_.push_back(c);
    if (scale * std::sqrt(norm2) < cfg_.tolerance) break;
    if (it < cfg_.max_iterations) factors = linearize();
  }
  return it;
}

void Window::marginalize_oldest() {
  if (nodes_.size() < 2) throw std::logic_error("marginalize_oldest: window needs two nodes");
  std::vector<LinearFactor> touching;
  for (auto& f : linearize(true))
    if (f.first == 0) touching.push_back(std::move(f));
  const Marginal m = marginalize_first(nodes_[0].dim(), nodes_[1].dim(), touching);
  prior_ = PriorFactor::from_marginal(nodes_[1], m);
  nodes_.pop_front();
}

Smoother::Smoother(const Config& cfg, const InitialState& init, const Vector3d& g)
    : cfg_(cfg), g_(g), init_(init), window_(cfg, g) {
  if (cfg.window < 1) throw std::invalid_argument("smoother: window size must be at least 1");
}

EstimateRecord Smoother::process(const SensorFrame& frame) {
  const auto meas = iekf::measurements(frame, measurement_config(cfg_));
  Node n;
  n.t = frame.t;
  n.meas = meas;
  Pose base;
  if (!last_) {
    base = Pose(init_.R, init_.v, init_.p);
    n.bias << init_.gyro_bias, init_.accel_bias;
  } else {
    Node& prev = window_.nodes().back();
    prev.imu = last_->imu;
    prev.dt = frame.t - last_->t;
    base = imu::integrate(prev.X, prev.bias, {prev.imu.gyro, prev.imu.accel, prev.dt}, g_);
    n.bias = prev.bias;
  }
  Pose::Columns T(3, 2 + static_cast<int>(meas.size()));
  T.col(0) = base.v();
  T.col(1) = base.p();
  for (std::size_t c = 0; c < meas.size(); ++c) {
    const Foot f = meas[c].foot;
    n.feet.push_back(f);
    const Node* prev = last_ ? &window_.nodes().back() : nullptr;
    const auto j = prev ? prev->slot(f) : std::nullopt;
    if (j) {
      T.col(2 + c) = base.d(*j);
    } else {
      T.col(2 + c) = base.p() + base.R() * meas[c].fk;
      n.fresh.push_back(f);
    }
  }
  n.X = Pose(base.R(), T);

  if (!last_)
    window_.reset(n, PriorFactor::initial(n, cfg_));
  else
    window_.push(n);
  window_.gauss_newton();
  while (static_cast<int>(window_.size()) > cfg_.window) window_.marginalize_oldest();
  last_ = frame;

  const Node& head = window_.nodes().back();
  return {frame.t, head.X.p(), quat_from_rotation<double>(head.X.R()), head.X.v(), 0.0};
}

}  // namespace qse::smoother
