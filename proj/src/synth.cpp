#include <qse/synth.hpp>

#include <cmath>
#include <numbers>
#include <random>

namespace qse::synth {
namespace {

Matrix3d yaw_rotation(double psi) { return rot_exp<double>(Vector3d(0.0, 0.0, psi)); }

double fract(double x) { return x - std::floor(x); }

// Minimum-jerk blend and its derivative on [0, 1].
double blend(double s) { return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s); }
double blend_rate(double s) { return 30.0 * s * s * (1.0 - s) * (1.0 - s); }

std::size_t nearest_index(double t, double t0, double dt, std::size_t n) {
  const double k = std::round((t - t0) / dt);
  if (k < 0.0) return 0;
  return std::min(static_cast<std::size_t>(k), n - 1);
}

}  // namespace

ProfileKind parse_profile(const std::string& name) {
  if (name == "rest") return ProfileKind::Rest;
  if (name == "line" || name == "constant-velocity") return ProfileKind::ConstantVelocity;
  if (name == "circle") return ProfileKind::Circle;
  if (name == "figure-eight" || name == "figure8") return ProfileKind::FigureEight;
  throw std::invalid_argument("unknown motion profile '" + name + "'");
}

std::string profile_name(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::Rest: return "rest";
    case ProfileKind::ConstantVelocity: return "line";
    case ProfileKind::Circle: return "circle";
    case ProfileKind::FigureEight: return "figure-eight";
  }
  return "unknown";
}

int MotionProfile::samples() const {
  if (!(rate > 0.0) || !(duration > 0.0)) throw std::invalid_argument("MotionProfile: rate and duration must be positive");
  return static_cast<int>(std::floor(duration * rate + 1e-9));
}

bool GaitSpec::in_stance(int foot, double t) const {
  if (duty >= 1.0) return true;
  return fract(t / period - phase[foot]) < duty;
}

NoiseSpec NoiseSpec::defaults() {
  NoiseSpec n;
  n.gyro = 2e-3;
  n.accel = 2e-2;
  n.gyro_bias = 1e-5;
  n.accel_bias = 1e-4;
  n.kinematics = 5e-3;
  n.velocity = 2e-2;
  n.gyro_bias0 = Vector3d(0.002, -0.001, 0.0005);
  n.accel_bias0 = Vector3d(0.03, -0.02, 0.02);
  return n;
}

GaitSpec default_gait(ProfileKind kind) {
  GaitSpec g;
  if (kind == ProfileKind::Rest) g.duty = 1.0;
  return g;
}

TruthSample evaluate(const MotionProfile& pr, double t) {
  TruthSample s;
  s.t = t;
  switch (pr.kind) {
    case ProfileKind::Rest: break;
    case ProfileKind::ConstantVelocity: {
      s.v = Vector3d(pr.speed, 0.0, 0.0);
      s.p = s.v * t;
      s.R = yaw_rotation(pr.yaw_rate * t);
      s.omega = Vector3d(0.0, 0.0, pr.yaw_rate);
      break;
    }
    case ProfileKind::Circle: {
      const double w = pr.speed / pr.radius;
      const double c = std::cos(w * t), sn = std::sin(w * t);
      s.p = Vector3d(pr.radius * sn, pr.radius * (1.0 - c), 0.0);
      s.v = Vector3d(pr.speed * c, pr.speed * sn, 0.0);
      s.accel = Vector3d(-pr.speed * w * sn, pr.speed * w * c, 0.0);
      s.R = yaw_rotation(w * t);
      s.omega = Vector3d(0.0, 0.0, w);
      break;
    }
    case ProfileKind::FigureEight: {
      // Lemniscate of Gerono, heading along the path tangent.
      const double a = pr.radius;
      const double W = pr.speed / (std::numbers::sqrt2 * a);
      const double u = W * t;
      const double xd = a * W * std::cos(u), yd = a * W * std::cos(2.0 * u);
      const double xdd = -a * W * W * std::sin(u), ydd = -2.0 * a * W * W * std::sin(2.0 * u);
      s.p = Vector3d(a * std::sin(u), 0.5 * a * std::sin(2.0 * u), 0.0);
      s.v = Vector3d(xd, yd, 0.0);
      s.accel = Vector3d(xdd, ydd, 0.0);
      s.R = yaw_rotation(std::atan2(yd, xd));
      s.omega = Vector3d(0.0, 0.0, (xd * ydd - yd * xdd) / (xd * xd + yd * yd));
      break;
    }
  }
  return s;
}

std::vector<TruthSample> generate_ground_truth(const MotionProfile& profile) {
  const int n = profile.samples();
  std::vector<TruthSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(evaluate(profile, i / profile.rate));
  return out;
}

ImuSimulation simulate_imu(std::span<const TruthSample> gt, const NoiseSpec& noise, const Vector3d& g) {
  ImuSimulation sim;
  const std::size_t n = gt.size();
  sim.imu.reserve(n);
  sim.bias.reserve(n);
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> N(0.0, 1.0);
  auto draw = [&]() { return Vector3d(N(rng), N(rng), N(rng)); };

  Vector3d bg = noise.gyro_bias0, ba = noise.accel_bias0;
  for (std::size_t k = 0; k < n; ++k) {
    Vector3d w, f;
    double dt;
    if (k + 1 < n) {
      dt = gt[k + 1].t - gt[k].t;
      w = rot_log<double>(gt[k].R.transpose() * gt[k + 1].R) / dt;
      f = gt[k].R.transpose() * ((gt[k + 1].v - gt[k].v) / dt - g);
    } else {
      dt = k > 0 ? gt[k].t - gt[k - 1].t : 1.0;
      w = gt[k].omega;
      f = gt[k].R.transpose() * (gt[k].accel - g);
    }
    ImuSample s;
    s.t = gt[k].t;
    s.gyro = w + bg + noise.gyro / std::sqrt(dt) * draw();
    s.accel = f + ba + noise.accel / std::sqrt(dt) * draw();
    sim.imu.push_back(s);
    Vector6d b;
    b << bg, ba;
    sim.bias.push_back(b);
    bg += noise.gyro_bias * std::sqrt(dt) * draw();
    ba += noise.accel_bias * std::sqrt(dt) * draw();
  }
  return sim;
}

LegSimulation simulate_leg_data(std::span<const TruthSample> gt, const GaitSpec& gait, const NoiseSpec& noise) {
  LegSimulation sim;
  const std::size_t n = gt.size();
  if (n == 0) return sim;
  sim.kinematics.reserve(n);
  sim.contacts.reserve(n);
  sim.feet_world.reserve(n);
  std::mt19937_64 rng(noise.seed ^ 0x5deece66dULL);
  std::normal_distribution<double> N(0.0, 1.0);
  auto draw = [&]() { return Vector3d(N(rng), N(rng), N(rng)); };

  const double t0 = gt.front().t;
  const double dt = n > 1 ? gt[1].t - gt[0].t : 1.0;
  auto anchor = [&](int foot, double t_mid) {
    const auto& s = gt[nearest_index(t_mid, t0, dt, n)];
    Vector3d d = s.p + s.R * gait.offsets[foot];
    d.z() = gait.offsets[foot].z();
    return d;
  };

  std::array<Vector3d, kNumFeet> drift;
  drift.fill(Vector3d::Zero());
  std::array<bool, kNumFeet> was_stance{};

  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = gt[k];
    const double t = s.t;
    const Vector3d vb = s.R.transpose() * s.v;
    std::vector<FootKinematics> feet;
    ContactState contact{};
    std::array<Vector3d, kNumFeet> world;
    for (int j = 0; j < kNumFeet; ++j) {
      FootKinematics fkj;
      fkj.foot = kAllFeet[j];
      Vector3d f, fdot = Vector3d::Zero();
      const bool stance = gait.in_stance(j, t);
      if (gait.duty >= 1.0) {
        f = anchor(j, t0);
      } else {
        const double cyc = std::floor(t / gait.period - gait.phase[j]);
        const double ts = (cyc + gait.phase[j]) * gait.period;
        const double te = ts + gait.duty * gait.period;
        if (stance) {
          f = anchor(j, ts + 0.5 * gait.duty * gait.period);
        } else {
          const double swing = (1.0 - gait.duty) * gait.period;
          const Vector3d a0 = anchor(j, ts + 0.5 * gait.duty * gait.period);
          const Vector3d a1 = anchor(j, ts + gait.period + 0.5 * gait.duty * gait.period);
          const double tau = (t - te) / swing;
          const double lift = std::pow(4.0 * tau * (1.0 - tau), 3);
          const double lift_rate = 192.0 * std::pow(tau * (1.0 - tau), 2) * (1.0 - 2.0 * tau);
          f = a0 + (a1 - a0) * blend(tau) + Vector3d(0.0, 0.0, gait.step_height * lift);
          fdot = ((a1 - a0) * blend_rate(tau) + Vector3d(0.0, 0.0, gait.step_height * lift_rate)) / swing;
        }
      }
      if (stance) {
        if (!was_stance[j]) drift[j].setZero();
        if (noise.contact > 0.0 && was_stance[j]) drift[j] += noise.contact * std::sqrt(dt) * draw();
        f += drift[j];
      }
      was_stance[j] = stance;
      contact[j] = stance;
      world[j] = f;

      const Vector3d fk = s.R.transpose() * (f - s.p);
      fkj.fk = fk + noise.kinematics * draw();
      fkj.v_rel = s.R.transpose() * fdot - vb - s.omega.cross(fk) + noise.velocity * draw();
      feet.push_back(fkj);
    }
    sim.kinematics.push_back(std::move(feet));
    sim.contacts.push_back(contact);
    sim.feet_world.push_back(world);
  }
  return sim;
}

std::vector<GroundTruthRecord> to_records(std::span<const TruthSample> gt) {
  std::vector<GroundTruthRecord> out;
  out.reserve(gt.size());
  for (const auto& s : gt) out.push_back({s.t, s.p, quat_from_rotation<double>(s.R), s.v});
  return out;
}

SyntheticDataset generate(const MotionProfile& profile, const GaitSpec& gait, const NoiseSpec& noise) {
  SyntheticDataset ds;
  ds.truth = generate_ground_truth(profile);
  const auto imu = simulate_imu(ds.truth, noise);
  const auto legs = simulate_leg_data(ds.truth, gait, noise);
  ds.ground_truth = to_records(ds.truth);
  ds.bias = imu.bias;
  ds.frames.reserve(ds.truth.size());
  for (std::size_t k = 0; k < ds.truth.size(); ++k) {
    SensorFrame f;
    f.t = ds.truth[k].t;
    f.imu = imu.imu[k];
    f.feet = legs.kinematics[k];
    f.contact = legs.contacts[k];
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

}  // namespace qse::synth
