#include "stewart/nrsolver.hpp"

#include <atomic>
#include <stdexcept>
#include <thread>

namespace stewart {

Vec6 residual(const FkObjective& obj, const Twist& xi) {
  const Pose T = se3_exp(xi);
  return inverse_kinematics(obj.cfg, T).los - obj.target_los;
}

Mat6 jacobian(const FkObjective& obj, const Twist& xi, double h) {
  if (h <= 0.0) {
    throw std::invalid_argument("finite-difference step must be positive");
  }
  Mat6 j;
  for (int col = 0; col < 6; ++col) {
    Twist plus = xi;
    Twist minus = xi;
    plus.xi[col] += h;
    minus.xi[col] -= h;
    j.col(col) = (residual(obj, plus) - residual(obj, minus)) / (2.0 * h);
  }
  return j;
}

SolveReport refine(const FkObjective& obj, const Twist& xi0, double gamma,
                   int z_max, int f_max) {
  if (gamma <= 0.0) {
    throw std::invalid_argument("gamma must be positive");
  }
  SolveReport report;
  report.xi_final = xi0;

  for (int z = 0; z < z_max; ++z) {
    const Mat6 j = jacobian(obj, report.xi_final);
    const PinvState pinv = pseudoinverse(j, f_max);
    if (pinv.diverged) {
      report.singular_flag = true;
      return report;
    }
    const Vec6 step = pinv.z * residual(obj, report.xi_final);
    report.xi_final.xi -= step;
    report.outer_iterations = z + 1;
    report.final_step_norm = step.lpNorm<1>();
    if (report.final_step_norm < gamma) {
      report.converged = true;
      return report;
    }
  }
  return report;
}

std::vector<SolveReport> refine_batch(const std::vector<FkObjective>& objs,
                                      const std::vector<Twist>& xi0s,
                                      double gamma, int z_max, int f_max,
                                      int jobs) {
  if (objs.size() != xi0s.size()) {
    throw std::invalid_argument("objective and initializer counts differ");
  }
  const std::size_t count = objs.size();
  std::vector<SolveReport> reports(count);
  if (count == 0) return reports;

  unsigned workers = jobs > 0 ? static_cast<unsigned>(jobs)
                              : std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  workers = std::min<unsigned>(workers, static_cast<unsigned>(count));

  std::atomic<std::size_t> next{0};
  auto run = [&]() {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      reports[i] = refine(objs[i], xi0s[i], gamma, z_max, f_max);
    }
  };

  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  return reports;
}

}  // namespace stewart
