#pragma once

#include <string>
#include <vector>

#include "stewart/datagen.hpp"
#include "stewart/gnn.hpp"
#include "stewart/nrsolver.hpp"

namespace stewart {

class EmptySetError : public std::invalid_argument {
 public:
  EmptySetError() : std::invalid_argument("metric over an empty sample set") {}
};

/// Mean Euclidean translation error (mm).
double e_trans(const std::vector<Vec3>& preds, const std::vector<Vec3>& gts);

/// Mean |log(R R_gt^T)|_F. Reports render the degree view, angle in
/// degrees = value / sqrt(2) * 180 / pi.
double e_rot(const std::vector<Rotation>& preds,
             const std::vector<Rotation>& gts);

/// Mean |IK(T) - l_os| (mm): leg-space error of the predicted poses.
double e_ik(const PlatformConfig& cfg, const std::vector<Pose>& preds,
            const std::vector<Vec6>& target_los);

/// Percentage of samples with error strictly below each threshold;
/// thresholds must be sorted ascending.
std::vector<double> accuracy_buckets(const std::vector<double>& errors,
                                     const std::vector<double>& thresholds);

inline double success_rate(std::size_t w, std::size_t n1, std::size_t n2) {
  return (1.0 - static_cast<double>(n1 + n2) / static_cast<double>(w)) * 100.0;
}

inline double average_time(double total_seconds, std::size_t w) {
  return total_seconds / static_cast<double>(w);
}

struct EvalSummary {
  std::size_t count = 0;
  double e_trans = 0.0;    // mm
  double e_rot = 0.0;      // Frobenius-geodesic value
  double e_rot_deg = 0.0;  // degree view of e_rot
  double e_ik = 0.0;       // mm
  double trans_median = 0.0, trans_mean = 0.0;    // mm
  double rot_median_deg = 0.0, rot_mean_deg = 0.0;
  std::vector<double> trans_thresholds;  // mm
  std::vector<double> trans_accuracy;    // percent
  std::vector<double> rot_thresholds;    // deg
  std::vector<double> rot_accuracy;      // percent
  std::vector<double> per_sample_trans;    // mm
  std::vector<double> per_sample_rot_deg;  // deg
  std::vector<double> per_sample_ik;       // mm
};

/// Default accuracy thresholds, shared by the mm and deg views.
std::vector<double> default_thresholds();

/// Error statistics of predicted poses against ground truth. The median
/// convention is the lower of the two middle values at even counts.
EvalSummary summarize(const PlatformConfig& cfg,
                      const std::vector<Pose>& preds,
                      const std::vector<Pose>& gts,
                      const std::vector<Vec6>& target_los,
                      const std::vector<double>& thresholds);

struct BenchReport {
  std::size_t total = 0;             // W
  double total_time_s = 0.0;         // T, one wall-clock span per batch
  double average_time_s = 0.0;       // T / W
  std::size_t n_singular = 0;        // N1
  std::size_t n_below_precision = 0; // N2
  double success_rate_percent = 0.0;
};

struct BenchResult {
  BenchReport report;
  EvalSummary summary;                 // of the refined poses
  std::vector<SolveReport> solves;
  std::vector<std::size_t> failed_indices;
};

/// Two-stage benchmark: the network initializes, the solver refines.
/// The timed span covers prediction and refinement of the whole batch.
BenchResult run_benchmark(const Dataset& test_set, const PlatformConfig& cfg,
                          const NetParams& params, double gamma,
                          int z_max = 100, int f_max = 20, int jobs = 0);

/// Key-value report files plus a tab-separated per-sample error table
/// (formats in docs/formats.md).
void write_eval_report(const EvalSummary& summary, const std::string& path);
void write_bench_report(const BenchReport& report, const std::string& path);
void write_per_sample_errors(const EvalSummary& summary,
                             const std::string& path);
void write_failed_samples(const BenchResult& result, const Dataset& test_set,
                          const std::string& path);

}  // namespace stewart
