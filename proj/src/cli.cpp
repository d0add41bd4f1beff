#include <qse/cli.hpp>

#include <qse/config.hpp>
#include <qse/io.hpp>
#include <qse/metrics.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace qse::cli {
namespace fs = std::filesystem;
namespace {

constexpr const char* kSensorFile = "sensor_data.csv";
constexpr const char* kKinematicsFile = "feet_kinematics.csv";
constexpr const char* kGroundTruthFile = "groundtruth.csv";
constexpr const char* kFusedFile = "fused_state.csv";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_path;
  std::vector<std::string> estimators;
  std::optional<int> window;
  std::optional<std::uint64_t> seed;
  std::optional<double> roll_error_deg;
  bool dump = false;
  bool timestamps_ns = false;

  std::string data_dir;
  std::string out_dir;
  std::string gt_path;
  std::vector<std::string> inputs;
  bool no_align = false;
  std::string convert_in, convert_out;
  std::optional<double> duration;
  std::string profile;
};

config::RunConfig effective_config(const Options& o) {
  config::RunConfig cfg;
  if (!o.config_path.empty()) cfg = config::load_config(o.config_path);
  if (!o.estimators.empty()) {
    cfg.estimators.clear();
    for (const auto& e : o.estimators) {
      if (e == "all") {
        cfg.estimators = {config::EstimatorKind::Muse, config::EstimatorKind::Iekf, config::EstimatorKind::Smoother};
        break;
      }
      cfg.estimators.push_back(config::parse_estimator(e));
    }
  }
  if (o.window) cfg.window = *o.window;
  if (o.seed) cfg.seed = *o.seed;
  if (o.roll_error_deg) {
    // A large roll error comes with a matching attitude prior for every estimator.
    cfg.init.roll_error_deg = *o.roll_error_deg;
    cfg.init.attitude_std = std::max(cfg.init.attitude_std, std::abs(*o.roll_error_deg) * std::numbers::pi / 180.0);
  }
  if (!o.profile.empty()) {
    try {
      cfg.gen.profile.kind = synth::parse_profile(o.profile);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (o.duration) cfg.gen.profile.duration = *o.duration;
  if (!o.data_dir.empty()) cfg.data_dir = o.data_dir;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error(dir.string() + ": cannot create directory");
}

int cmd_gen(const config::RunConfig& cfg, std::ostream& out) {
  const auto data = config::generate(cfg);
  ensure_dir(cfg.data_dir);
  io::write_sensor_csv(cfg.data_dir / kSensorFile, data.frames);
  io::write_kinematics_csv(cfg.data_dir / kKinematicsFile, data.frames);
  io::write_groundtruth_csv(cfg.data_dir / kGroundTruthFile, data.ground_truth);

  const auto gait = [&] {
    auto g = synth::default_gait(cfg.gen.profile.kind);
    if (cfg.gen.gait_period) g.period = *cfg.gen.gait_period;
    if (cfg.gen.gait_duty) g.duty = *cfg.gen.gait_duty;
    return g;
  }();
  std::ofstream m(cfg.data_dir / "manifest.yaml");
  m << "# qse_bench gen\n";
  m << "gait.period: " << fmt::format("{}", gait.period) << "\n";
  m << "gait.duty: " << fmt::format("{}", gait.duty) << "\n";
  m << "rows: " << data.frames.size() << "\n";
  for (const auto& line : {std::string("seed"), std::string("gen.")}) {
    std::istringstream dump(config::dump_config(cfg));
    for (std::string l; std::getline(dump, l);)
      if (l.rfind(line, 0) == 0) m << l << "\n";
  }
  if (!m) throw std::runtime_error((cfg.data_dir / "manifest.yaml").string() + ": write failed");

  out << fmt::format("generated {} frames ({} profile, {} s at {} Hz) in {}\n", data.frames.size(),
                     synth::profile_name(cfg.gen.profile.kind), cfg.gen.profile.duration, cfg.gen.profile.rate,
                     cfg.data_dir.string());
  return 0;
}

io::Dataset load_data(const config::RunConfig& cfg, bool timestamps_ns, bool need_gt) {
  for (const char* f : {kSensorFile, kKinematicsFile})
    if (!fs::exists(cfg.data_dir / f)) throw std::runtime_error((cfg.data_dir / f).string() + ": no such file");
  const auto gt = cfg.data_dir / kGroundTruthFile;
  if (need_gt && !fs::exists(gt)) throw std::runtime_error(gt.string() + ": no such file");
  io::LoadOptions opt;
  opt.timestamps_ns = timestamps_ns;
  return io::load_dataset(cfg.data_dir / kSensorFile, cfg.data_dir / kKinematicsFile, fs::exists(gt) ? gt : fs::path{},
                          opt);
}

int cmd_run(const config::RunConfig& cfg, bool timestamps_ns, std::ostream& out) {
  const auto data = load_data(cfg, timestamps_ns, cfg.init.from_ground_truth);
  if (data.frames.empty()) throw std::runtime_error(cfg.data_dir.string() + ": no synchronized frames");
  const auto init = config::initial_state(cfg, data.ground_truth);

  for (auto kind : cfg.estimators) {
    const auto name = config::estimator_name(kind);
    auto est = config::make_estimator(kind, cfg, init);
    std::vector<EstimateRecord> records;
    records.reserve(data.frames.size());
    for (std::size_t i = 0; i < data.frames.size(); ++i) {
      try {
        records.push_back(est->step(data.frames[i]));
      } catch (const std::exception& e) {
        throw std::runtime_error(fmt::format("{}: frame {} (t = {:.6f} s): {}", name, i, data.frames[i].t, e.what()));
      }
    }
    const auto dir = cfg.out_dir / name;
    ensure_dir(dir);
    io::write_fused_state_csv(dir / kFusedFile, records);
    const auto timing = metrics::timing_stats(std::span<const EstimateRecord>(records));
    out << fmt::format("{}: {} frames, mean iteration {:.3f} us -> {}\n", name, records.size(), timing.mean * 1e6,
                       (dir / kFusedFile).string());
  }
  return 0;
}

std::string estimate_name(const fs::path& p) {
  if (p.filename() == kFusedFile && p.has_parent_path() && !p.parent_path().filename().empty())
    return p.parent_path().filename().string();
  return p.stem().string();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
  if (!f) throw std::runtime_error(path.string() + ": write failed");
}

int cmd_eval(const config::RunConfig& cfg, const Options& o, std::ostream& out, std::ostream& err) {
  const auto gt_file = io::read_trajectory_csv(o.gt_path);
  const auto ref = metrics::Trajectory::from(std::span<const EstimateRecord>(gt_file.records), gt_file.has_velocity);
  if (ref.empty()) throw std::runtime_error(o.gt_path + ": empty reference trajectory");

  std::vector<metrics::MetricReport> reports;
  for (const auto& path : o.inputs) {
    const auto file = io::read_trajectory_csv(path);
    const auto est = metrics::Trajectory::from(std::span<const EstimateRecord>(file.records), file.has_velocity);
    if (est.empty() || est.t.back() < ref.t.front() || est.t.front() > ref.t.back())
      throw std::runtime_error(fmt::format("{}: time span [{}, {}] does not overlap the reference [{}, {}]", path,
                                           est.empty() ? 0.0 : est.t.front(), est.empty() ? 0.0 : est.t.back(),
                                           ref.t.front(), ref.t.back()));
    auto report = metrics::evaluate(estimate_name(path), est, ref, !o.no_align);
    if (file.has_timing) report.timing = metrics::timing_stats(std::span<const EstimateRecord>(file.records));
    if (!report.ate_vel_mps) err << path << ": no velocity columns, velocity RMSE marked absent\n";
    if (!o.no_align && !report.aligned) err << path << ": degenerate geometry, ATE reported without alignment\n";
    reports.push_back(std::move(report));
  }

  ensure_dir(cfg.out_dir);
  write_file(cfg.out_dir / "report.txt", metrics::to_text(reports));
  write_file(cfg.out_dir / "report.json", metrics::to_json(reports));
  const auto table = metrics::comparison_table(reports);
  write_file(cfg.out_dir / "report.md", table);
  out << table;
  return 0;
}

int cmd_convert(const Options& o, std::ostream& out) {
  const auto file = io::read_trajectory_csv(o.convert_in);
  io::export_tum(o.convert_out, file.records);
  out << fmt::format("wrote {} poses to {}\n", file.records.size(), o.convert_out);
  return 0;
}

int cmd_inspect(const config::RunConfig& cfg, bool timestamps_ns, std::ostream& out) {
  const auto data = load_data(cfg, timestamps_ns, false);
  out << fmt::format("sensor rows: {}\nkinematics rows: {}\nground truth rows: {}\nframes: {}\n", data.sensor_rows,
                     data.kinematics_rows, data.groundtruth_rows, data.frames.size());
  if (data.frames.size() < 2) return 0;
  const double span = data.frames.back().t - data.frames.front().t;
  out << fmt::format("span: {:.6f} s ({:.6f} .. {:.6f})\nrate: {:.3f} Hz\n", span, data.frames.front().t,
                     data.frames.back().t, (data.frames.size() - 1) / span);
  std::array<std::size_t, kNumFeet> stance{};
  for (const auto& f : data.frames)
    for (int i = 0; i < kNumFeet; ++i) stance[i] += f.contact[i] ? 1 : 0;
  for (auto foot : kAllFeet)
    out << fmt::format("stance {}: {:.1f}%\n", foot_name(foot), 100.0 * stance[index(foot)] / data.frames.size());
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quadruped proprioceptive state-estimation benchmark", "qse_bench"};
  app.require_subcommand(0, 1);
  Options o;

  app.add_option("--config", o.config_path, "YAML run configuration")->check(CLI::ExistingFile);
  app.add_option("--estimator", o.estimators, "muse, iekf, smoother or all (repeatable, comma separated)")
      ->delimiter(',');
  app.add_option("--window-size", o.window, "smoother window size");
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--init-roll-error", o.roll_error_deg, "initial roll error in degrees");
  app.add_flag("--dump-config", o.dump, "print the effective configuration and exit");
  app.add_flag("--timestamps-ns", o.timestamps_ns, "input timestamps are integer nanoseconds");

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset")->fallthrough();
  gen->add_option("--out,--data", o.data_dir, "dataset directory");
  gen->add_option("--profile", o.profile, "rest, line, circle or figure-eight");
  gen->add_option("--duration", o.duration, "seconds");

  auto* run = app.add_subcommand("run", "run estimators on a dataset")->fallthrough();
  run->add_option("--data", o.data_dir, "dataset directory");
  run->add_option("--out", o.out_dir, "output directory");

  auto* eval = app.add_subcommand("eval", "evaluate trajectories against ground truth")->fallthrough();
  eval->add_option("estimates", o.inputs, "trajectory CSV files")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", o.gt_path, "ground truth CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", o.out_dir, "report directory");
  eval->add_flag("--no-align", o.no_align, "skip SE(3) alignment");

  auto* convert = app.add_subcommand("convert", "convert a trajectory CSV to TUM")->fallthrough();
  convert->add_option("input", o.convert_in, "trajectory CSV")->required()->check(CLI::ExistingFile);
  convert->add_option("output", o.convert_out, "TUM file")->required();

  auto* inspect = app.add_subcommand("inspect", "summarize a dataset")->fallthrough();
  inspect->add_option("--data", o.data_dir, "dataset directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto cfg = effective_config(o);
    if (o.dump) {
      out << config::dump_config(cfg);
      return 0;
    }
    if (gen->parsed()) return cmd_gen(cfg, out);
    if (run->parsed()) return cmd_run(cfg, o.timestamps_ns, out);
    if (eval->parsed()) return cmd_eval(cfg, o, out, err);
    if (convert->parsed()) return cmd_convert(o, out);
    if (inspect->parsed()) return cmd_inspect(cfg, o.timestamps_ns, out);
    err << app.help();
    return 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const config::ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace qse::cli
