// stewartkin: dataset generation, training, solving and benchmarking for
// the two-stage Gough-Stewart forward-kinematics pipeline.
//
// Exit codes: 0 success, 2 usage error, 3 training failure, 4 solver
// singularity.

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stewart/datagen.hpp"
#include "stewart/evalbench.hpp"
#include "stewart/gnn.hpp"
#include "stewart/liegroup.hpp"
#include "stewart/nrsolver.hpp"
#include "stewart/platform.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitTraining = 3;
constexpr int kExitSingular = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string version_string() {
#ifdef STEWARTFK_VERSION
  return STEWARTFK_VERSION;
#else
  return "unknown";
#endif
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

// STEWART_KIN_SEED overrides every seed-valued flag.
std::optional<std::uint64_t> env_seed() {
  const char* env = std::getenv("STEWART_KIN_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  return std::strtoull(env, nullptr, 10);
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    const json& inputs, const json& seeds,
                    const json& outputs) {
  json m;
  m["subcommand"] = subcommand;
  m["version"] = version_string();
  m["timestamp_utc"] = utc_timestamp();
  m["inputs"] = inputs;
  m["seeds"] = seeds;
  m["outputs"] = outputs;
  std::ofstream f(out_dir / ("manifest_" + subcommand + ".json"));
  f << m.dump(2) << "\n";
}

stewart::PlatformConfig resolve_config(const std::string& path) {
  if (path.empty()) return stewart::default_config();
  return stewart::load_config(path);
}

void check_config_hash(const stewart::PlatformConfig& cfg,
                       const stewart::Dataset& ds) {
  if (ds.meta.config_hash != stewart::config_hash(cfg)) {
    throw UsageError(
        "platform config does not match the one this dataset was generated "
        "with (config hash mismatch)");
  }
}

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    std::size_t pos = 0;
    out.push_back(std::stod(cell, &pos));
  }
  return out;
}

stewart::Vec6 parse_vec6(const std::string& csv, const std::string& what) {
  const std::vector<double> v = parse_doubles(csv);
  if (v.size() != 6) {
    throw UsageError(what + " needs exactly 6 comma-separated values");
  }
  stewart::Vec6 out;
  for (int i = 0; i < 6; ++i) out[i] = v[i];
  return out;
}

void print_pose(const stewart::Pose& pose) {
  const stewart::Mat4 m = pose.matrix();
  char buf[64];
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      std::snprintf(buf, sizeof buf, "% .12e", m(r, c));
      std::cout << buf << (c < 3 ? " " : "\n");
    }
  }
}

// ---------------------------------------------------------------------------

int cmd_gen(const std::string& config_path, const fs::path& out_dir,
            std::uint64_t count, std::uint64_t seed, double lmin, double lmax,
            double tmin_deg, double tmax_deg, const std::string& mode,
            double ratio, bool csv, int jobs) {
  if (!(lmin < lmax)) throw UsageError("--lmin must be below --lmax");
  if (!(tmin_deg < tmax_deg)) throw UsageError("--tmin must be below --tmax");
  if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("--ratio must be in (0,1)");

  const stewart::PlatformConfig cfg = resolve_config(config_path);
  stewart::DatasetMeta meta;
  meta.count = count;
  meta.seed = seed;
  meta.l_min = lmin;
  meta.l_max = lmax;
  meta.theta_min = tmin_deg * EIGEN_PI / 180.0;
  meta.theta_max = tmax_deg * EIGEN_PI / 180.0;
  meta.split_ratio = ratio;
  meta.rotation_mode = mode == "euler" ? stewart::RotationMode::kEuler
                                       : stewart::RotationMode::kQuaternion;

  fs::create_directories(out_dir);
  const stewart::Dataset ds = stewart::generate(cfg, meta, jobs);
  const fs::path bin_path = out_dir / "dataset.gsfk";
  stewart::save_dataset(ds, bin_path.string());
  stewart::save_config(cfg, (out_dir / "platform.json").string());
  json outputs = {{"dataset", bin_path.string()},
                  {"platform_config", (out_dir / "platform.json").string()}};
  if (csv) {
    const fs::path csv_path = out_dir / "dataset.csv";
    stewart::export_csv(ds, csv_path.string());
    outputs["csv"] = csv_path.string();
  }
  write_manifest(out_dir, "gen",
                 {{"platform_config",
                   config_path.empty() ? "<default>" : config_path}},
                 {{"seed", seed}}, outputs);
  std::cout << "wrote " << ds.records.size() << " records to "
            << bin_path.string() << "\n";
  return 0;
}

int cmd_train(const std::string& dataset_path, const std::string& config_path,
              const fs::path& out_dir, const std::string& arch_name,
              stewart::TrainConfig tc, stewart::NetDims dims) {
  const stewart::PlatformConfig cfg = resolve_config(config_path);
  const stewart::Dataset ds = stewart::load_dataset(dataset_path);
  check_config_hash(cfg, ds);
  const stewart::Arch arch = arch_name == "plain-mlp"
                                 ? stewart::Arch::kPlainMlp
                                 : stewart::Arch::kDisGNet;

  fs::create_directories(out_dir);
  stewart::TrainResult result;
  try {
    result = stewart::train(ds, cfg, tc, arch, dims);
  } catch (const stewart::NonFiniteLossError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kExitTraining;
  }

  const fs::path ckpt = out_dir / "checkpoint.gsnn";
  const fs::path log_path = out_dir / "train_log.tsv";
  stewart::save_checkpoint(result.params, ckpt.string());
  stewart::write_train_log(result.log, log_path.string());
  write_manifest(out_dir, "train",
                 {{"dataset", dataset_path},
                  {"platform_config",
                   config_path.empty() ? "<default>" : config_path},
                  {"arch", arch_name}},
                 {{"seed", tc.seed}},
                 {{"checkpoint", ckpt.string()}, {"log", log_path.string()}});
  if (!result.log.empty()) {
    const stewart::EpochLog& last = result.log.back();
    std::cout << "final epoch " << last.epoch << ": loss " << last.mean_loss
              << ", val E-trans " << last.val_e_trans << " mm, val E-rot "
              << last.val_e_rot_deg << " deg\n";
  }
  std::cout << "checkpoint written to " << ckpt.string() << "\n";
  return 0;
}

int cmd_solve(const std::string& config_path, const std::string& los_csv,
              const std::string& batch_path, const std::string& init_spec,
              const std::string& checkpoint_path, double gamma, int z_max,
              int f_max, int jobs, const fs::path& out_dir) {
  const stewart::PlatformConfig cfg = resolve_config(config_path);
  if (los_csv.empty() == batch_path.empty()) {
    throw UsageError("pass exactly one of --los or --batch");
  }
  if (init_spec.empty() && checkpoint_path.empty()) {
    throw UsageError("pass --init or --checkpoint");
  }
  if (!init_spec.empty() && !checkpoint_path.empty()) {
    throw UsageError("--init and --checkpoint are mutually exclusive");
  }
  if (gamma <= 0.0) throw UsageError("--gamma must be positive");

  std::vector<stewart::Vec6> los_list;
  if (!los_csv.empty()) {
    los_list.push_back(parse_vec6(los_csv, "--los"));
  } else {
    std::ifstream f(batch_path);
    if (!f) throw UsageError("cannot open displacement file: " + batch_path);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::stringstream ss(line);
      stewart::Vec6 los;
      for (int k = 0; k < 6; ++k) {
        if (!(ss >> los[k])) {
          throw UsageError("displacement file needs 6 values per line");
        }
      }
      los_list.push_back(los);
    }
    if (los_list.empty()) throw UsageError("displacement file is empty");
  }

  std::optional<stewart::NetParams> net;
  if (!checkpoint_path.empty()) {
    net = stewart::load_checkpoint(checkpoint_path);
  }

  std::vector<stewart::FkObjective> objectives(los_list.size());
  std::vector<stewart::Twist> inits(los_list.size());
  for (std::size_t i = 0; i < los_list.size(); ++i) {
    objectives[i].cfg = cfg;
    objectives[i].target_los = los_list[i];
    if (net.has_value()) {
      const stewart::Vec6 lbar = cfg.initial_leg_lengths + los_list[i];
      const stewart::DistanceGraph graph =
          stewart::build_distance_graph(cfg, lbar);
      const stewart::Prediction pred =
          net->arch == stewart::Arch::kPlainMlp
              ? stewart::predict_plain_mlp(los_list[i], *net)
              : stewart::predict(graph, *net);
      inits[i] = stewart::se3_log(pred.pose);
    } else if (init_spec == "zero") {
      inits[i] = stewart::Twist();
    } else {
      inits[i] = stewart::Twist(parse_vec6(init_spec, "--init"));
    }
  }

  const std::vector<stewart::SolveReport> reports =
      stewart::refine_batch(objectives, inits, gamma, z_max, f_max, jobs);

  std::optional<fs::path> results_path;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    results_path = out_dir / "solve_results.tsv";
    std::ofstream f(*results_path, std::ios::trunc);
    f << "index\tconverged\tsingular\touter_iterations\tfinal_step_norm"
         "\ttx\tty\ttz\tqw\tqx\tqy\tqz\n";
    char buf[64];
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const stewart::Pose pose = stewart::se3_exp(reports[i].xi_final);
      const stewart::Vec4 q = stewart::rotation_to_quaternion(pose.r);
      f << i << "\t" << (reports[i].converged ? 1 : 0) << "\t"
        << (reports[i].singular_flag ? 1 : 0) << "\t"
        << reports[i].outer_iterations;
      std::snprintf(buf, sizeof buf, "\t%.17g", reports[i].final_step_norm);
      f << buf;
      for (int k = 0; k < 3; ++k) {
        std::snprintf(buf, sizeof buf, "\t%.17g", pose.t[k]);
        f << buf;
      }
      for (int k = 0; k < 4; ++k) {
        std::snprintf(buf, sizeof buf, "\t%.17g", q[k]);
        f << buf;
      }
      f << "\n";
    }
    write_manifest(out_dir, "solve",
                   {{"platform_config",
                     config_path.empty() ? "<default>" : config_path},
                    {"checkpoint",
                     checkpoint_path.empty() ? "<none>" : checkpoint_path},
                    {"gamma", gamma}},
                   json::object(), {{"results", results_path->string()}});
  }

  int exit_code = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const stewart::SolveReport& rep = reports[i];
    if (rep.singular_flag) {
      std::cerr << "singular Jacobian at sample " << i << "\n";
      exit_code = kExitSingular;
    }
  }
  if (los_list.size() == 1 && exit_code == 0) {
    print_pose(stewart::se3_exp(reports[0].xi_final));
    std::cout << "converged\t" << (reports[0].converged ? 1 : 0) << "\n"
              << "outer_iterations\t" << reports[0].outer_iterations << "\n"
              << "final_step_norm\t" << reports[0].final_step_norm << "\n";
  } else if (results_path.has_value()) {
    std::cout << "results written to " << results_path->string() << "\n";
  }
  return exit_code;
}

int cmd_eval(const std::string& dataset_path, const std::string& config_path,
             const std::string& checkpoint_path, const fs::path& out_dir,
             const std::string& thresholds_csv, double ratio,
             std::uint64_t split_seed) {
  const stewart::PlatformConfig cfg = resolve_config(config_path);
  const stewart::Dataset ds = stewart::load_dataset(dataset_path);
  check_config_hash(cfg, ds);
  const stewart::NetParams net = stewart::load_checkpoint(checkpoint_path);

  const double r = ratio > 0.0 ? ratio : ds.meta.split_ratio;
  auto [train_set, test_set] = stewart::split(ds, r, split_seed);
  const stewart::Dataset& eval_set =
      test_set.records.empty() ? ds : test_set;

  std::vector<stewart::Pose> preds, gts;
  std::vector<stewart::Vec6> target_los;
  for (const stewart::SampleRecord& rec : eval_set.records) {
    preds.push_back(stewart::predict_sample(rec, cfg, net).pose);
    gts.push_back(rec.pose());
    target_los.push_back(rec.lbar - cfg.initial_leg_lengths);
  }
  std::vector<double> thresholds = stewart::default_thresholds();
  if (!thresholds_csv.empty()) thresholds = parse_doubles(thresholds_csv);

  const stewart::EvalSummary summary =
      stewart::summarize(cfg, preds, gts, target_los, thresholds);

  fs::create_directories(out_dir);
  const fs::path report_path = out_dir / "eval_report.txt";
  const fs::path errors_path = out_dir / "per_sample_errors.tsv";
  stewart::write_eval_report(summary, report_path.string());
  stewart::write_per_sample_errors(summary, errors_path.string());
  write_manifest(out_dir, "eval",
                 {{"dataset", dataset_path},
                  {"checkpoint", checkpoint_path},
                  {"platform_config",
                   config_path.empty() ? "<default>" : config_path}},
                 {{"split_seed", split_seed}},
                 {{"report", report_path.string()},
                  {"per_sample_errors", errors_path.string()}});
  std::cout << "E-trans " << summary.e_trans << " mm, E-rot "
            << summary.e_rot_deg << " deg, E-ik " << summary.e_ik
            << " mm over " << summary.count << " samples\n";
  return 0;
}

int cmd_bench(const std::string& dataset_path, const std::string& config_path,
              const std::string& checkpoint_path, const fs::path& out_dir,
              double gamma, int z_max, int f_max, int jobs, double ratio,
              std::uint64_t split_seed) {
  if (gamma <= 0.0) throw UsageError("--gamma must be positive");
  const stewart::PlatformConfig cfg = resolve_config(config_path);
  const stewart::Dataset ds = stewart::load_dataset(dataset_path);
  check_config_hash(cfg, ds);
  const stewart::NetParams net = stewart::load_checkpoint(checkpoint_path);

  const double r = ratio > 0.0 ? ratio : ds.meta.split_ratio;
  auto [train_set, test_set] = stewart::split(ds, r, split_seed);
  const stewart::Dataset& bench_set =
      test_set.records.empty() ? ds : test_set;

  const stewart::BenchResult result =
      stewart::run_benchmark(bench_set, cfg, net, gamma, z_max, f_max, jobs);

  fs::create_directories(out_dir);
  const fs::path bench_path = out_dir / "bench_report.txt";
  const fs::path eval_path = out_dir / "eval_report.txt";
  const fs::path errors_path = out_dir / "per_sample_errors.tsv";
  const fs::path failures_path = out_dir / "failed_samples.tsv";
  stewart::write_bench_report(result.report, bench_path.string());
  stewart::write_eval_report(result.summary, eval_path.string());
  stewart::write_per_sample_errors(result.summary, errors_path.string());
  stewart::write_failed_samples(result, bench_set, failures_path.string());
  write_manifest(out_dir, "bench",
                 {{"dataset", dataset_path},
                  {"checkpoint", checkpoint_path},
                  {"platform_config",
                   config_path.empty() ? "<default>" : config_path},
                  {"gamma", gamma}},
                 {{"split_seed", split_seed}},
                 {{"bench_report", bench_path.string()},
                  {"eval_report", eval_path.string()},
                  {"per_sample_errors", errors_path.string()},
                  {"failed_samples", failures_path.string()}});
  std::cout << "success rate " << result.report.success_rate_percent
            << "% (N1=" << result.report.n_singular
            << ", N2=" << result.report.n_below_precision << ", W="
            << result.report.total << "), average time "
            << result.report.average_time_s * 1000.0 << " ms\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage forward-kinematics toolkit for the 6-6 "
               "Gough-Stewart platform"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  std::string config_path, dataset_path, checkpoint_path, out_dir = ".";
  std::string arch_name = "disgnet";
  std::string los_csv, batch_path, init_spec, rotation_mode = "quat";
  std::string thresholds_csv;
  std::uint64_t count = 1000, seed = 0, split_seed = 0;
  double lmin = -50.0, lmax = 50.0, tmin_deg = -30.0, tmax_deg = 30.0;
  double ratio = 0.8, eval_ratio = 0.0;
  double gamma = 1e-4;
  int z_max = 100, f_max = 20, jobs = 0;
  bool csv = false;

  stewart::TrainConfig tc;
  tc.batch_size = 256;
  tc.epochs = 200;
  stewart::NetDims dims;

  CLI::App* gen = app.add_subcommand("gen", "Generate a dataset");
  gen->add_option("--config", config_path, "Platform config JSON");
  gen->add_option("--out", out_dir, "Output directory");
  gen->add_option("--count", count, "Number of samples");
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--lmin", lmin, "Lower translation bound (mm)");
  gen->add_option("--lmax", lmax, "Upper translation bound (mm)");
  gen->add_option("--tmin", tmin_deg, "Lower Euler-angle bound (deg)");
  gen->add_option("--tmax", tmax_deg, "Upper Euler-angle bound (deg)");
  gen->add_option("--rotation-mode", rotation_mode, "quat or euler")
      ->check(CLI::IsMember({"quat", "euler"}));
  gen->add_option("--ratio", ratio, "Train/test split ratio stored in meta");
  gen->add_flag("--csv", csv, "Also export CSV");
  gen->add_option("--jobs", jobs, "Worker threads (0 = hardware)");

  CLI::App* train = app.add_subcommand("train", "Train an initializer");
  train->add_option("--dataset", dataset_path, "Dataset file")->required();
  train->add_option("--config", config_path, "Platform config JSON");
  train->add_option("--out", out_dir, "Output directory");
  train->add_option("--arch", arch_name, "disgnet or plain-mlp")
      ->check(CLI::IsMember({"disgnet", "plain-mlp"}));
  train->add_option("--epochs", tc.epochs, "Training epochs");
  train->add_option("--batch", tc.batch_size, "Mini-batch size");
  train->add_option("--lr", tc.learning_rate, "Adam learning rate");
  train->add_option("--beta", tc.loss_beta, "Rotation loss weight");
  train->add_option("--seed", tc.seed, "Training seed");
  train->add_option("--h", dims.feature, "Feature width H");
  train->add_option("--hd", dims.node_embed, "Node embedding width");
  train->add_option("--he", dims.rbf, "RBF width");
  train->add_option("--rounds", dims.rounds, "Message-passing rounds");

  CLI::App* solve = app.add_subcommand("solve", "Solve forward kinematics");
  solve->add_option("--config", config_path, "Platform config JSON");
  solve->add_option("--los", los_csv, "6 leg displacements (mm), comma-sep");
  solve->add_option("--batch", batch_path, "Displacement file, 6 per line");
  solve->add_option("--init", init_spec, "zero or 6 twist coordinates");
  solve->add_option("--checkpoint", checkpoint_path, "Network initializer");
  solve->add_option("--gamma", gamma, "Twist-step precision level");
  solve->add_option("--zmax", z_max, "Outer iteration cap");
  solve->add_option("--fmax", f_max, "Pseudoinverse iterations");
  solve->add_option("--jobs", jobs, "Worker threads (0 = hardware)");
  solve->add_option("--out", out_dir, "Output directory for batch results");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--dataset", dataset_path, "Dataset file")->required();
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint")->required();
  eval->add_option("--config", config_path, "Platform config JSON");
  eval->add_option("--out", out_dir, "Output directory");
  eval->add_option("--thresholds", thresholds_csv,
                   "Accuracy thresholds, comma-sep (mm and deg)");
  eval->add_option("--ratio", eval_ratio,
                   "Split ratio (default: dataset meta)");
  eval->add_option("--split-seed", split_seed,
                   "Split seed (must match training)");

  CLI::App* bench = app.add_subcommand("bench", "Two-stage benchmark");
  bench->add_option("--dataset", dataset_path, "Dataset file")->required();
  bench->add_option("--checkpoint", checkpoint_path, "Checkpoint")->required();
  bench->add_option("--config", config_path, "Platform config JSON");
  bench->add_option("--out", out_dir, "Output directory");
  bench->add_option("--gamma", gamma, "Twist-step precision level");
  bench->add_option("--zmax", z_max, "Outer iteration cap");
  bench->add_option("--fmax", f_max, "Pseudoinverse iterations");
  bench->add_option("--jobs", jobs, "Worker threads (0 = hardware)");
  bench->add_option("--ratio", eval_ratio,
                    "Split ratio (default: dataset meta)");
  bench->add_option("--split-seed", split_seed,
                    "Split seed (must match training)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  if (const auto s = env_seed(); s.has_value()) {
    seed = *s;
    tc.seed = *s;
    split_seed = *s;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen(config_path, out_dir, count, seed, lmin, lmax, tmin_deg,
                     tmax_deg, rotation_mode, ratio, csv, jobs);
    }
    if (train->parsed()) {
      return cmd_train(dataset_path, config_path, out_dir, arch_name, tc,
                       dims);
    }
    if (solve->parsed()) {
      return cmd_solve(config_path, los_csv, batch_path, init_spec,
                       checkpoint_path, gamma, z_max, f_max, jobs,
                       solve->count("--out") > 0 ? fs::path(out_dir)
                                                 : fs::path());
    }
    if (eval->parsed()) {
      return cmd_eval(dataset_path, config_path, checkpoint_path, out_dir,
                      thresholds_csv, eval_ratio, split_seed);
    }
    if (bench->parsed()) {
      return cmd_bench(dataset_path, config_path, checkpoint_path, out_dir,
                       gamma, z_max, f_max, jobs, eval_ratio, split_seed);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
