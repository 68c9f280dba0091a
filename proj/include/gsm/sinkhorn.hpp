#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "gsm/error.hpp"
#include "gsm/similarity.hpp"

namespace gsm {

struct SinkhornParams {
  double epsilon = 0.001;
  std::size_t max_iters = 100;
  double tol = 1e-6;
};

// Entropic transport plan between uniform marginals (row sums 1, column sums
// m/n), stored as log P so that small epsilon cannot underflow.
struct SinkhornPlan {
  ScoreMatrix log_plan;
  std::size_t iterations = 0;
  double violation = 0.0;  // max |row sum - 1| after the last column update
  bool converged = false;
};

namespace sinkhorn_detail {

// exp(x) for x <= 0, flushing arguments whose result is below 1e-304 to zero.
// Every sum below contains a term equal to 1, so the flushed terms cannot
// change it, and skipping them avoids the slow underflow path of exp().
inline double exp_nonpositive(double x) { return x > -700.0 ? std::exp(x) : 0.0; }

}  // namespace sinkhorn_detail

inline SinkhornPlan sinkhorn_plan(const ScoreMatrix& s, const SinkhornParams& params = {}) {
  using sinkhorn_detail::exp_nonpositive;
  if (!(params.epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  if (s.size() == 0) throw Error(ErrorCode::EmptyInput, "empty score matrix");
  const auto m = static_cast<std::size_t>(s.rows());
  const auto n = static_cast<std::size_t>(s.cols());
  const double log_col_mass = std::log(static_cast<double>(m) / static_cast<double>(n));
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  // Kernel in log space; subtracting the global max keeps exp() in range.
  const double top = s.maxCoeff();
  const ScoreMatrix kernel = (s.array() - top) / params.epsilon;
  const double* k = kernel.data();
  std::vector<double> f(m, 0.0), g(n, 0.0), lse(m);
  std::vector<double> col_max(n), col_acc(n);

  // lse[i] = log sum_j exp(K_ij + g_j). With the current f, row i of the plan
  // sums to exp(f_i + lse_i), so one pass yields both the next row update and
  // the marginal violation left by the previous column update.
  auto row_lse = [&] {
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = k + i * n;
      double hi = kNegInf;
      for (std::size_t j = 0; j < n; ++j) hi = std::max(hi, row[j] + g[j]);
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += exp_nonpositive(row[j] + g[j] - hi);
      lse[i] = hi + std::log(acc);
    }
  };

  SinkhornPlan plan;
  const std::size_t iters = std::max<std::size_t>(params.max_iters, 1);
  row_lse();
  for (std::size_t it = 1; it <= iters; ++it) {
    for (std::size_t i = 0; i < m; ++i) f[i] = -lse[i];
    std::fill(col_max.begin(), col_max.end(), kNegInf);
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = k + i * n;
      for (std::size_t j = 0; j < n; ++j) col_max[j] = std::max(col_max[j], row[j] + f[i]);
    }
    std::fill(col_acc.begin(), col_acc.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = k + i * n;
      for (std::size_t j = 0; j < n; ++j) col_acc[j] += exp_nonpositive(row[j] + f[i] - col_max[j]);
    }
    for (std::size_t j = 0; j < n; ++j) g[j] = log_col_mass - (col_max[j] + std::log(col_acc[j]));

    row_lse();
    double violation = 0.0;
    for (std::size_t i = 0; i < m; ++i) violation = std::max(violation, std::abs(std::exp(f[i] + lse[i]) - 1.0));
    plan.iterations = it;
    plan.violation = violation;
    if (violation < params.tol) {
      plan.converged = true;
      break;
    }
  }

  plan.log_plan.resize(s.rows(), s.cols());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      plan.log_plan(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = k[i * n + j] + f[i] + g[j];
  return plan;
}

}  // namespace gsm
