#include <qse/config.hpp>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

namespace qse::config {
namespace {

struct Field {
  std::string key;
  std::function<void(const YAML::Node&)> set;
  std::function<std::string()> get;
};

std::string show(double v) { return fmt::format("{}", v); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const Vector3d& v) { return fmt::format("[{}, {}, {}]", v.x(), v.y(), v.z()); }

template <typename T> T scalar(const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) throw ConfigError(fmt::format("{}: expected a scalar", key));
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(fmt::format("{}: cannot parse '{}'", key, n.Scalar()));
  }
}

std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  auto real = [&f](const std::string& key, double& x) {
    f.push_back({key, [&x, key](const YAML::Node& n) { x = scalar<double>(n, key); }, [&x] { return show(x); }});
  };
  auto integer = [&f](const std::string& key, int& x) {
    f.push_back({key, [&x, key](const YAML::Node& n) { x = scalar<int>(n, key); }, [&x] { return std::to_string(x); }});
  };
  auto flag = [&f](const std::string& key, bool& x) {
    f.push_back({key, [&x, key](const YAML::Node& n) { x = scalar<bool>(n, key); }, [&x] { return show(x); }});
  };
  auto vec = [&f](const std::string& key, Vector3d& x) {
    f.push_back({key,
                 [&x, key](const YAML::Node& n) {
                   if (!n.IsSequence() || n.size() != 3) throw ConfigError(key + ": expected [x, y, z]");
                   for (int i = 0; i < 3; ++i) x[i] = scalar<double>(n[i], key);
                 },
                 [&x] { return show(x); }});
  };
  auto optional_real = [&f](const std::string& key, std::optional<double>& x) {
    f.push_back({key,
                 [&x, key](const YAML::Node& n) {
                   if (n.IsScalar() && n.Scalar() == "auto")
                     x.reset();
                   else
                     x = scalar<double>(n, key);
                 },
                 [&x] { return x ? show(*x) : std::string("auto"); }});
  };

  f.push_back({"estimators",
               [&c](const YAML::Node& n) {
                 std::vector<std::string> names;
                 if (n.IsSequence()) {
                   for (const auto& e : n) names.push_back(scalar<std::string>(e, "estimators"));
                 } else {
                   std::stringstream ss(scalar<std::string>(n, "estimators"));
                   for (std::string s; std::getline(ss, s, ',');) names.push_back(s);
                 }
                 c.estimators.clear();
                 for (auto& s : names) {
                   s.erase(0, s.find_first_not_of(' '));
                   s.erase(s.find_last_not_of(' ') + 1);
                   c.estimators.push_back(parse_estimator(s));
                 }
               },
               [&c] {
                 std::string s = "[";
                 for (std::size_t i = 0; i < c.estimators.size(); ++i)
                   s += (i ? ", " : "") + estimator_name(c.estimators[i]);
                 return s + "]";
               }});
  f.push_back({"seed", [&c](const YAML::Node& n) { c.seed = scalar<std::uint64_t>(n, "seed"); },
               [&c] { return std::to_string(c.seed); }});
  real("gravity", c.gravity);
  f.push_back({"paths.data", [&c](const YAML::Node& n) { c.data_dir = scalar<std::string>(n, "paths.data"); },
               [&c] { return c.data_dir.string(); }});
  f.push_back({"paths.out", [&c](const YAML::Node& n) { c.out_dir = scalar<std::string>(n, "paths.out"); },
               [&c] { return c.out_dir.string(); }});

  f.push_back({"gen.profile",
               [&c](const YAML::Node& n) {
                 try {
                   c.gen.profile.kind = synth::parse_profile(scalar<std::string>(n, "gen.profile"));
                 } catch (const std::invalid_argument& e) {
                   throw ConfigError(std::string("gen.profile: ") + e.what());
                 }
               },
               [&c] { return synth::profile_name(c.gen.profile.kind); }});
  real("gen.duration", c.gen.profile.duration);
  real("gen.rate", c.gen.profile.rate);
  real("gen.speed", c.gen.profile.speed);
  real("gen.radius", c.gen.profile.radius);
  real("gen.yaw_rate", c.gen.profile.yaw_rate);
  optional_real("gen.gait.period", c.gen.gait_period);
  optional_real("gen.gait.duty", c.gen.gait_duty);
  flag("gen.noise.enabled", c.gen.noisy);
  real("gen.noise.gyro", c.gen.noise.gyro);
  real("gen.noise.accel", c.gen.noise.accel);
  real("gen.noise.gyro_bias", c.gen.noise.gyro_bias);
  real("gen.noise.accel_bias", c.gen.noise.accel_bias);
  real("gen.noise.contact", c.gen.noise.contact);
  real("gen.noise.kinematics", c.gen.noise.kinematics);
  real("gen.noise.velocity", c.gen.noise.velocity);
  vec("gen.noise.gyro_bias0", c.gen.noise.gyro_bias0);
  vec("gen.noise.accel_bias0", c.gen.noise.accel_bias0);

  flag("init.from_ground_truth", c.init.from_ground_truth);
  real("init.roll_error_deg", c.init.roll_error_deg);
  real("init.attitude_std", c.init.attitude_std);
  real("init.velocity_std", c.init.velocity_std);
  real("init.position_std", c.init.position_std);
  real("init.gyro_bias_std", c.init.gyro_bias_std);
  real("init.accel_bias_std", c.init.accel_bias_std);

  real("noise.gyro", c.noise.gyro);
  real("noise.accel", c.noise.accel);
  real("noise.gyro_bias", c.noise.gyro_bias);
  real("noise.accel_bias", c.noise.accel_bias);
  real("noise.contact", c.noise.contact);
  real("noise.kinematics", c.kinematic_noise);
  real("noise.contact_init", c.contact_init);

  f.push_back({"iekf.position_noise",
               [&c](const YAML::Node& n) {
                 const auto s = scalar<std::string>(n, "iekf.position_noise");
                 if (s == "correlated")
                   c.iekf_position_noise = imu::PositionNoise::Correlated;
                 else if (s == "independent")
                   c.iekf_position_noise = imu::PositionNoise::Independent;
                 else
                   throw ConfigError("iekf.position_noise: expected correlated or independent, got '" + s + "'");
               },
               [&c] {
                 return std::string(c.iekf_position_noise == imu::PositionNoise::Correlated ? "correlated"
                                                                                             : "independent");
               }});
  flag("iekf.gating", c.iekf_gating);
  real("iekf.gate", c.iekf_gate);

  integer("smoother.window", c.window);
  integer("smoother.max_iterations", c.smoother_max_iterations);
  real("smoother.tolerance", c.smoother_tolerance);
  integer("smoother.max_halvings", c.smoother_max_halvings);
  flag("smoother.exact_observation_jacobian", c.smoother_exact_observation_jacobian);
  flag("smoother.exact_prior_jacobian", c.smoother_exact_prior_jacobian);

  real("muse.k1", c.muse.k1);
  real("muse.k2", c.muse.k2);
  real("muse.kb", c.muse.kb);
  real("muse.accel_gate", c.muse.accel_gate);
  vec("muse.mag_reference", c.muse.mag_reference);
  flag("muse.centripetal_compensation", c.muse.centripetal_compensation);
  real("muse.xkf.attitude_noise", c.muse.xkf_attitude_noise);
  real("muse.xkf.bias_noise", c.muse.xkf_bias_noise);
  real("muse.xkf.accel_noise", c.muse.xkf_accel_noise);
  real("muse.xkf.heading_noise", c.muse.xkf_heading_noise);
  real("muse.odometry_noise", c.muse.odometry_noise);
  return f;
}

void flatten(const YAML::Node& n, const std::string& prefix, std::vector<std::pair<std::string, YAML::Node>>& out) {
  if (n.IsMap()) {
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      flatten(kv.second, prefix.empty() ? key : prefix + "." + key, out);
    }
  } else if (!n.IsNull() || !prefix.empty()) {
    out.emplace_back(prefix, n);
  }
}

}  // namespace

EstimatorKind parse_estimator(const std::string& name) {
  if (name == "muse") return EstimatorKind::Muse;
  if (name == "iekf") return EstimatorKind::Iekf;
  if (name == "smoother" || name == "is") return EstimatorKind::Smoother;
  throw ConfigError("unknown estimator '" + name + "' (expected muse, iekf or smoother)");
}

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Muse: return "muse";
    case EstimatorKind::Iekf: return "iekf";
    case EstimatorKind::Smoother: return "smoother";
  }
  return "unknown";
}

void RunConfig::validate() const {
  if (estimators.empty()) throw ConfigError("estimators: at least one estimator is required");
  if (window < 1) throw ConfigError("smoother.window: must be at least 1");
  if (smoother_max_iterations < 1) throw ConfigError("smoother.max_iterations: must be at least 1");
  if (smoother_max_halvings < 0) throw ConfigError("smoother.max_halvings: must be non-negative");
  if (!(gravity > 0.0)) throw ConfigError("gravity: must be positive");
  if (!(gen.profile.duration > 0.0) || !(gen.profile.rate > 0.0))
    throw ConfigError("gen.duration and gen.rate must be positive");
  if (gen.gait_duty && !(*gen.gait_duty > 0.0 && *gen.gait_duty <= 1.0))
    throw ConfigError("gen.gait.duty: must lie in (0, 1]");
  if (gen.gait_period && !(*gen.gait_period > 0.0)) throw ConfigError("gen.gait.period: must be positive");
  for (double s : {init.attitude_std, init.velocity_std, init.position_std, init.gyro_bias_std, init.accel_bias_std})
    if (!(s > 0.0)) throw ConfigError("init.*_std: standard deviations must be positive");
  for (double s : {noise.gyro, noise.accel, noise.gyro_bias, noise.accel_bias, noise.contact, kinematic_noise})
    if (!(s >= 0.0)) throw ConfigError("noise.*: densities must be non-negative");
}

RunConfig parse_config(const std::string& yaml, RunConfig base) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root.IsNull() && !root.IsMap()) throw ConfigError("config must be a mapping of keys to values");
  std::vector<std::pair<std::string, YAML::Node>> entries;
  flatten(root, "", entries);
  auto table = fields(base);
  for (const auto& [key, node] : entries) {
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(node);
  }
  base.validate();
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string dump_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out;
  for (const auto& f : fields(copy)) out += f.key + ": " + f.get() + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  RunConfig c;
  std::vector<std::string> keys;
  for (const auto& f : fields(c)) keys.push_back(f.key);
  return keys;
}

muse::Config muse_config(const RunConfig& cfg) {
  muse::Config m = cfg.muse;
  m.accel_noise = cfg.noise.accel;
  m.xkf_initial_attitude = cfg.init.attitude_std;
  m.xkf_initial_bias = cfg.init.gyro_bias_std;
  m.initial_position = cfg.init.position_std;
  m.initial_velocity = cfg.init.velocity_std;
  return m;
}

iekf::Config iekf_config(const RunConfig& cfg) {
  iekf::Config c;
  c.noise = cfg.noise;
  c.position_noise = cfg.iekf_position_noise;
  c.kinematic_noise = cfg.kinematic_noise;
  c.contact_init = cfg.contact_init;
  c.gating = cfg.iekf_gating;
  c.gate = cfg.iekf_gate;
  c.initial_attitude = cfg.init.attitude_std;
  c.initial_velocity = cfg.init.velocity_std;
  c.initial_position = cfg.init.position_std;
  c.initial_gyro_bias = cfg.init.gyro_bias_std;
  c.initial_accel_bias = cfg.init.accel_bias_std;
  return c;
}

smoother::Config smoother_config(const RunConfig& cfg) {
  smoother::Config c;
  c.window = cfg.window;
  c.max_iterations = cfg.smoother_max_iterations;
  c.tolerance = cfg.smoother_tolerance;
  c.max_halvings = cfg.smoother_max_halvings;
  c.exact_observation_jacobian = cfg.smoother_exact_observation_jacobian;
  c.exact_prior_jacobian = cfg.smoother_exact_prior_jacobian;
  c.noise = cfg.noise;
  c.kinematic_noise = cfg.kinematic_noise;
  c.contact_init = cfg.contact_init;
  c.initial_attitude = cfg.init.attitude_std;
  c.initial_velocity = cfg.init.velocity_std;
  c.initial_position = cfg.init.position_std;
  c.initial_gyro_bias = cfg.init.gyro_bias_std;
  c.initial_accel_bias = cfg.init.accel_bias_std;
  return c;
}

synth::SyntheticDataset generate(const RunConfig& cfg) {
  synth::GaitSpec gait = synth::default_gait(cfg.gen.profile.kind);
  if (cfg.gen.gait_period) gait.period = *cfg.gen.gait_period;
  if (cfg.gen.gait_duty) gait.duty = *cfg.gen.gait_duty;
  synth::NoiseSpec noise = cfg.gen.noisy ? cfg.gen.noise : synth::NoiseSpec::zero();
  noise.seed = cfg.seed;
  return synth::generate(cfg.gen.profile, gait, noise);
}

InitialState initial_state(const RunConfig& cfg, const std::vector<GroundTruthRecord>& gt) {
  InitialState init;
  if (cfg.init.from_ground_truth) {
    if (gt.empty()) throw ConfigError("init.from_ground_truth is set but no ground truth is available");
    init.R = gt.front().q.toRotationMatrix();
    init.p = gt.front().p;
    init.v = gt.front().v;
  }
  const double roll = cfg.init.roll_error_deg * std::numbers::pi / 180.0;
  init.R = init.R * rot_exp<double>(Vector3d(roll, 0.0, 0.0));
  return init;
}

std::unique_ptr<Estimator> make_estimator(EstimatorKind kind, const RunConfig& cfg, const InitialState& init) {
  switch (kind) {
    case EstimatorKind::Muse: return std::make_unique<muse::Muse>(muse_config(cfg), init);
    case EstimatorKind::Iekf: return std::make_unique<iekf::Iekf>(iekf_config(cfg), init, cfg.gravity_vector());
    case EstimatorKind::Smoother:
      return std::make_unique<smoother::Smoother>(smoother_config(cfg), init, cfg.gravity_vector());
  }
  throw ConfigError("unknown estimator kind");
}

}  // namespace qse::config
