// End-to-end checks of the stewartkin binary: exit codes, determinism,
// file outputs. Invoked as: cli_tests <path-to-stewartkin>.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "stewart/datagen.hpp"
#include "stewart/platform.hpp"

namespace fs = std::filesystem;

namespace {

int failures = 0;

#define CHECK_MSG(cond, msg)                                             \
  do {                                                                   \
    if (!(cond)) {                                                       \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << msg \
                << "\n";                                                 \
      ++failures;                                                        \
    }                                                                    \
  } while (0)

std::string binary;
fs::path work;

int run(const std::string& args, const std::string& log_name = "") {
  std::string cmd = binary + " " + args;
  if (!log_name.empty()) {
    cmd += " > " + (work / log_name).string() + " 2>&1";
  } else {
    cmd += " > /dev/null 2>&1";
  }
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WEXITSTATUS(rc);
}

int run_env(const std::string& env, const std::string& args) {
  const std::string cmd =
      env + " " + binary + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WEXITSTATUS(rc);
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void test_gen_determinism_and_defaults() {
  CHECK_MSG(run("gen --count 50 --seed 7 --out " + (work / "g1").string()) ==
                0,
            "gen exit code");
  CHECK_MSG(run("gen --count 50 --seed 7 --out " + (work / "g2").string()) ==
                0,
            "gen rerun exit code");
  CHECK_MSG(read_bytes(work / "g1" / "dataset.gsfk") ==
                read_bytes(work / "g2" / "dataset.gsfk"),
            "identical seeds must give identical dataset bytes");

  const stewart::Dataset ds =
      stewart::load_dataset((work / "g1" / "dataset.gsfk").string());
  CHECK_MSG(ds.meta.l_min == -50.0 && ds.meta.l_max == 50.0,
            "default translation bounds are +-50 mm");
  CHECK_MSG(std::abs(ds.meta.theta_min + EIGEN_PI / 6.0) < 1e-15 &&
                std::abs(ds.meta.theta_max - EIGEN_PI / 6.0) < 1e-15,
            "default rotation bounds are +-30 deg");
  CHECK_MSG(fs::exists(work / "g1" / "manifest_gen.json"),
            "gen writes a manifest");

  // Environment seed override beats the flag.
  CHECK_MSG(run_env("STEWART_KIN_SEED=7",
                    "gen --count 50 --seed 99 --out " +
                        (work / "g3").string()) == 0,
            "gen with env seed");
  CHECK_MSG(read_bytes(work / "g1" / "dataset.gsfk") ==
                read_bytes(work / "g3" / "dataset.gsfk"),
            "STEWART_KIN_SEED overrides --seed");
}

void test_usage_errors() {
  CHECK_MSG(run("gen --lmin 50 --lmax -50 --out " + (work / "bad").string()) ==
                2,
            "inverted bounds are a usage error (exit 2)");
  CHECK_MSG(run("train --dataset " + (work / "missing.gsfk").string() +
                " --out " + (work / "bad_train").string()) == 2,
            "missing dataset is a usage error (exit 2)");
  CHECK_MSG(run("definitely-not-a-command") == 2, "unknown subcommand");
}

void test_train_solve_eval_bench() {
  const std::string data_dir = (work / "data").string();
  CHECK_MSG(run("gen --count 400 --seed 11 --out " + data_dir) == 0,
            "gen for training");
  const std::string dataset = data_dir + "/dataset.gsfk";

  const std::string t1 = (work / "t1").string();
  const std::string t2 = (work / "t2").string();
  const std::string train_flags =
      " --epochs 5 --batch 32 --h 8 --hd 4 --he 8 --seed 3 --arch disgnet";
  CHECK_MSG(run("train --dataset " + dataset + " --out " + t1 + train_flags) ==
                0,
            "train exit code");
  CHECK_MSG(run("train --dataset " + dataset + " --out " + t2 + train_flags) ==
                0,
            "train rerun exit code");
  CHECK_MSG(read_bytes(work / "t1" / "checkpoint.gsnn") ==
                read_bytes(work / "t2" / "checkpoint.gsnn"),
            "identical seeds must give identical checkpoint bytes");
  CHECK_MSG(read_bytes(work / "t1" / "train_log.tsv") ==
                read_bytes(work / "t2" / "train_log.tsv"),
            "identical seeds must give identical training logs");

  // Solver-only mode from the assembly pose.
  CHECK_MSG(run("solve --los 0,0,0,0,0,0 --init zero", "solve_zero.txt") == 0,
            "solve at assembly");
  const std::string solve_out = read_text(work / "solve_zero.txt");
  CHECK_MSG(solve_out.find("converged\t1") != std::string::npos,
            "assembly solve converges");

  // Round-trip: solve a generated sample from the zero initializer.
  const stewart::Dataset ds = stewart::load_dataset(dataset);
  const stewart::PlatformConfig cfg = stewart::default_config();
  const stewart::SampleRecord& rec = ds.records.front();
  const stewart::Vec6 los = rec.lbar - cfg.initial_leg_lengths;
  std::ostringstream los_flag;
  los_flag.precision(17);
  for (int k = 0; k < 6; ++k) los_flag << (k ? "," : "") << los[k];
  const std::string batch_file = (work / "batch.tsv").string();
  {
    std::ofstream f(batch_file);
    f.precision(17);
    for (int k = 0; k < 6; ++k) f << los[k] << (k < 5 ? " " : "\n");
  }
  const std::string solve_dir = (work / "solve").string();
  CHECK_MSG(run("solve --batch " + batch_file +
                " --init zero --gamma 0.0001 --out " + solve_dir) == 0,
            "batch solve exit code");
  {
    std::ifstream f(work / "solve" / "solve_results.tsv");
    std::string header, line;
    std::getline(f, header);
    std::getline(f, line);
    std::stringstream ss(line);
    int index, converged, singular, iters;
    double step, tx, ty, tz, qw, qx, qy, qz;
    ss >> index >> converged >> singular >> iters >> step >> tx >> ty >>
        tz >> qw >> qx >> qy >> qz;
    CHECK_MSG(converged == 1, "round-trip solve converges");
    const stewart::Vec3 t(tx, ty, tz);
    CHECK_MSG((t - rec.x).norm() < 1e-3,
              "recovered translation matches the generated pose");
    const stewart::Vec4 q(qw, qx, qy, qz);
    CHECK_MSG((q - rec.q4d).cwiseAbs().maxCoeff() < 1e-5,
              "recovered quaternion matches the generated pose");
  }

  // Singular geometry exits with code 4.
  stewart::PlatformConfig singular = stewart::default_config();
  const stewart::Vec3 direction =
      (singular.platform_hinges[0] - singular.base_hinges[0]).normalized();
  singular.base_hinges[1] = singular.base_hinges[0] + 40.0 * direction;
  singular.platform_hinges[1] =
      singular.platform_hinges[0] - 40.0 * direction;
  for (int s = 0; s < 6; ++s) {
    singular.initial_leg_lengths[s] =
        (singular.leg_platform(s) - singular.leg_base(s)).norm();
  }
  const std::string singular_path = (work / "singular.json").string();
  stewart::save_config(singular, singular_path);
  CHECK_MSG(run("solve --config " + singular_path +
                " --los 0,0,0,0,0,0 --init zero") == 4,
            "singular geometry exits with code 4");

  // Evaluation and benchmark against the trained checkpoint.
  const std::string ckpt = t1 + "/checkpoint.gsnn";
  const std::string e1 = (work / "e1").string();
  const std::string e2 = (work / "e2").string();
  CHECK_MSG(run("eval --dataset " + dataset + " --checkpoint " + ckpt +
                " --split-seed 3 --out " + e1) == 0,
            "eval exit code");
  CHECK_MSG(run("eval --dataset " + dataset + " --checkpoint " + ckpt +
                " --split-seed 3 --out " + e2) == 0,
            "eval rerun exit code");
  CHECK_MSG(read_bytes(work / "e1" / "eval_report.txt") ==
                read_bytes(work / "e2" / "eval_report.txt"),
            "eval reruns are bit-identical");
  const std::string eval_report = read_text(work / "e1" / "eval_report.txt");
  for (const char* key :
       {"e_trans_mm", "e_rot_deg", "e_ik_mm", "acc_trans_0.5mm",
        "acc_trans_3mm", "acc_rot_1deg"}) {
    CHECK_MSG(eval_report.find(key) != std::string::npos,
              std::string("eval report field ") + key);
  }

  const std::string b1 = (work / "b1").string();
  CHECK_MSG(run("bench --dataset " + dataset + " --checkpoint " + ckpt +
                " --split-seed 3 --gamma 0.0001 --out " + b1) == 0,
            "bench exit code");
  const std::string bench_report = read_text(work / "b1" / "bench_report.txt");
  for (const char* key : {"w\t", "n_singular", "n_below_precision",
                          "success_rate_percent", "average_time_s"}) {
    CHECK_MSG(bench_report.find(key) != std::string::npos,
              std::string("bench report field ") + key);
  }
  CHECK_MSG(fs::exists(work / "b1" / "failed_samples.tsv"),
            "bench writes the failure dump");

  // A mismatched platform config is rejected.
  CHECK_MSG(run("eval --dataset " + dataset + " --checkpoint " + ckpt +
                " --config " + singular_path + " --out " +
                (work / "e3").string()) == 2,
            "config hash mismatch is a usage error");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: cli_tests <path-to-stewartkin>\n";
    return 2;
  }
  binary = argv[1];
  work = fs::temp_directory_path() /
         ("stewartkin_cli_" + std::to_string(::getpid()));
  fs::create_directories(work);

  test_gen_determinism_and_defaults();
  test_usage_errors();
  test_train_solve_eval_bench();

  fs::remove_all(work);
  if (failures == 0) {
    std::cout << "cli_tests: all checks passed\n";
    return 0;
  }
  std::cerr << "cli_tests: " << failures << " checks failed\n";
  return 1;
}
