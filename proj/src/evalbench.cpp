#include "stewart/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

namespace stewart {

namespace {

double median_lower(std::vector<double> values) {
  if (values.empty()) throw EmptySetError();
  const std::size_t mid = (values.size() - 1) / 2;  // lower of two middles
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  return values[mid];
}

void write_kv(std::ofstream& f, const std::string& key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  f << key << "\t" << buf << "\n";
}

std::string threshold_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

}  // namespace

double e_trans(const std::vector<Vec3>& preds, const std::vector<Vec3>& gts) {
  if (preds.empty() || preds.size() != gts.size()) throw EmptySetError();
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    sum += (preds[i] - gts[i]).norm();
  }
  return sum / static_cast<double>(preds.size());
}

double e_rot(const std::vector<Rotation>& preds,
             const std::vector<Rotation>& gts) {
  if (preds.empty() || preds.size() != gts.size()) throw EmptySetError();
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    sum += geodesic_distance(preds[i], gts[i]);
  }
  return sum / static_cast<double>(preds.size());
}

double e_ik(const PlatformConfig& cfg, const std::vector<Pose>& preds,
            const std::vector<Vec6>& target_los) {
  if (preds.empty() || preds.size() != target_los.size()) throw EmptySetError();
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    sum += (inverse_kinematics(cfg, preds[i]).los - target_los[i]).norm();
  }
  return sum / static_cast<double>(preds.size());
}

std::vector<double> accuracy_buckets(const std::vector<double>& errors,
                                     const std::vector<double>& thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw std::invalid_argument("thresholds must be sorted ascending");
  }
  std::vector<double> out;
  out.reserve(thresholds.size());
  const double w = static_cast<double>(errors.size());
  for (double t : thresholds) {
    std::size_t below = 0;
    for (double e : errors) {
      if (e < t) ++below;  // strictly below
    }
    out.push_back(w > 0 ? 100.0 * static_cast<double>(below) / w : 0.0);
  }
  return out;
}

std::vector<double> default_thresholds() { return {0.5, 1.0, 1.5, 2.0, 3.0}; }

EvalSummary summarize(const PlatformConfig& cfg,
                      const std::vector<Pose>& preds,
                      const std::vector<Pose>& gts,
                      const std::vector<Vec6>& target_los,
                      const std::vector<double>& thresholds) {
  if (preds.empty() || preds.size() != gts.size() ||
      preds.size() != target_los.size()) {
    throw EmptySetError();
  }
  EvalSummary s;
  s.count = preds.size();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    s.per_sample_trans.push_back((preds[i].t - gts[i].t).norm());
    s.per_sample_rot_deg.push_back(
        geodesic_to_degrees(geodesic_distance(preds[i].r, gts[i].r)));
    s.per_sample_ik.push_back(
        (inverse_kinematics(cfg, preds[i]).los - target_los[i]).norm());
  }

  const double w = static_cast<double>(s.count);
  s.trans_mean = 0.0;
  s.rot_mean_deg = 0.0;
  s.e_ik = 0.0;
  for (std::size_t i = 0; i < s.count; ++i) {
    s.trans_mean += s.per_sample_trans[i];
    s.rot_mean_deg += s.per_sample_rot_deg[i];
    s.e_ik += s.per_sample_ik[i];
  }
  s.trans_mean /= w;
  s.rot_mean_deg /= w;
  s.e_ik /= w;
  s.e_trans = s.trans_mean;
  s.e_rot_deg = s.rot_mean_deg;
  s.e_rot = s.rot_mean_deg * EIGEN_PI / 180.0 * std::sqrt(2.0);
  s.trans_median = median_lower(s.per_sample_trans);
  s.rot_median_deg = median_lower(s.per_sample_rot_deg);

  s.trans_thresholds = thresholds;
  s.rot_thresholds = thresholds;
  s.trans_accuracy = accuracy_buckets(s.per_sample_trans, thresholds);
  s.rot_accuracy = accuracy_buckets(s.per_sample_rot_deg, thresholds);
  return s;
}

BenchResult run_benchmark(const Dataset& test_set, const PlatformConfig& cfg,
                          const NetParams& params, double gamma, int z_max,
                          int f_max, int jobs) {
  if (test_set.records.empty()) throw EmptySetError();
  const std::size_t w = test_set.records.size();

  BenchResult result;
  std::vector<FkObjective> objectives(w);
  std::vector<Twist> initial(w);
  std::vector<bool> init_failed(w, false);

  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < w; ++i) {
    objectives[i].cfg = cfg;
    objectives[i].target_los =
        test_set.records[i].lbar - cfg.initial_leg_lengths;
    const Prediction pred = predict_sample(test_set.records[i], cfg, params);
    try {
      initial[i] = se3_log(pred.pose);
    } catch (const NearPiSingularity&) {
      // An initializer outside the log-map domain cannot seed the solver;
      // the sample is scored as below precision.
      init_failed[i] = true;
      initial[i] = Twist();
    }
  }
  result.solves = refine_batch(objectives, initial, gamma, z_max, f_max, jobs);
  const auto t1 = std::chrono::steady_clock::now();

  result.report.total = w;
  result.report.total_time_s =
      std::chrono::duration<double>(t1 - t0).count();
  result.report.average_time_s = average_time(result.report.total_time_s, w);

  std::vector<Pose> refined(w);
  std::vector<Pose> gts(w);
  std::vector<Vec6> target_los(w);
  for (std::size_t i = 0; i < w; ++i) {
    if (init_failed[i]) {
      result.solves[i].converged = false;
    }
    refined[i] = se3_exp(result.solves[i].xi_final);
    gts[i] = test_set.records[i].pose();
    target_los[i] = objectives[i].target_los;
    if (result.solves[i].singular_flag) {
      ++result.report.n_singular;
      result.failed_indices.push_back(i);
    } else if (!result.solves[i].converged) {
      ++result.report.n_below_precision;
      result.failed_indices.push_back(i);
    }
  }
  result.report.success_rate_percent = success_rate(
      w, result.report.n_singular, result.report.n_below_precision);
  result.summary =
      summarize(cfg, refined, gts, target_los, default_thresholds());
  return result;
}

void write_eval_report(const EvalSummary& s, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write eval report: " + path);
  write_kv(f, "count", static_cast<double>(s.count));
  write_kv(f, "e_trans_mm", s.e_trans);
  write_kv(f, "e_rot", s.e_rot);
  write_kv(f, "e_rot_deg", s.e_rot_deg);
  write_kv(f, "e_ik_mm", s.e_ik);
  write_kv(f, "trans_median_mm", s.trans_median);
  write_kv(f, "trans_mean_mm", s.trans_mean);
  write_kv(f, "rot_median_deg", s.rot_median_deg);
  write_kv(f, "rot_mean_deg", s.rot_mean_deg);
  for (std::size_t i = 0; i < s.trans_thresholds.size(); ++i) {
    write_kv(f, "acc_trans_" + threshold_label(s.trans_thresholds[i]) + "mm",
             s.trans_accuracy[i]);
  }
  for (std::size_t i = 0; i < s.rot_thresholds.size(); ++i) {
    write_kv(f, "acc_rot_" + threshold_label(s.rot_thresholds[i]) + "deg",
             s.rot_accuracy[i]);
  }
}

void write_bench_report(const BenchReport& r, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write bench report: " + path);
  write_kv(f, "w", static_cast<double>(r.total));
  write_kv(f, "total_time_s", r.total_time_s);
  write_kv(f, "average_time_s", r.average_time_s);
  write_kv(f, "average_time_ms", r.average_time_s * 1000.0);
  write_kv(f, "n_singular", static_cast<double>(r.n_singular));
  write_kv(f, "n_below_precision", static_cast<double>(r.n_below_precision));
  write_kv(f, "success_rate_percent", r.success_rate_percent);
}

void write_per_sample_errors(const EvalSummary& s, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write per-sample errors: " + path);
  f << "index\ttrans_err_mm\trot_err_deg\tik_err_mm\n";
  char buf[128];
  for (std::size_t i = 0; i < s.count; ++i) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%.17g\n", i,
                  s.per_sample_trans[i], s.per_sample_rot_deg[i],
                  s.per_sample_ik[i]);
    f << buf;
  }
}

void write_failed_samples(const BenchResult& result, const Dataset& test_set,
                          const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write failure dump: " + path);
  f << "index\tsingular\tconverged\touter_iterations\tfinal_step_norm"
       "\tlbar0\tlbar1\tlbar2\tlbar3\tlbar4\tlbar5\n";
  char buf[64];
  for (std::size_t idx : result.failed_indices) {
    const SolveReport& rep = result.solves[idx];
    f << idx << "\t" << (rep.singular_flag ? 1 : 0) << "\t"
      << (rep.converged ? 1 : 0) << "\t" << rep.outer_iterations << "\t";
    std::snprintf(buf, sizeof buf, "%.17g", rep.final_step_norm);
    f << buf;
    const SampleRecord& rec = test_set.records[idx];
    for (int k = 0; k < 6; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", rec.lbar[k]);
      f << "\t" << buf;
    }
    f << "\n";
  }
}

}  // namespace stewart
