#include <algorithm>
#include <cmath>
#include <numeric>

#include "hydra/decompose.hpp"

namespace hydra::decompose {

SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> start,
                          std::vector<double> step, int max_evaluations, double tolerance) {
  const std::size_t dim = start.size();
  if (step.size() != dim || dim == 0) throw Error(ErrorCode::InvalidArgument, "simplex start/step size mismatch");

  SimplexResult best;
  int evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    const double v = f(x);
    ++evals;
    if (best.x.empty() || v < best.value) {
      best.x = x;
      best.value = v;
    }
    return v;
  };

  std::vector<std::vector<double>> pts(dim + 1, start);
  std::vector<double> vals(dim + 1);
  vals[0] = eval(pts[0]);
  for (std::size_t i = 0; i < dim && evals < max_evaluations; ++i) {
    pts[i + 1][i] += step[i];
    vals[i + 1] = eval(pts[i + 1]);
  }

  std::vector<std::size_t> order(dim + 1);
  while (evals < max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t lo = order.front();
    const std::size_t hi = order.back();
    const std::size_t second = order[dim - 1];
    if (std::isfinite(vals[hi]) && std::abs(vals[hi] - vals[lo]) <= tolerance * (std::abs(vals[lo]) + tolerance)) {
      break;
    }

    std::vector<double> centroid(dim, 0.0);
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == hi) continue;
      for (std::size_t j = 0; j < dim; ++j) centroid[j] += pts[i][j] / static_cast<double>(dim);
    }
    auto along = [&](double coef) {
      std::vector<double> x(dim);
      for (std::size_t j = 0; j < dim; ++j) x[j] = centroid[j] + coef * (pts[hi][j] - centroid[j]);
      return x;
    };

    auto reflected = along(-1.0);
    const double fr = eval(reflected);
    if (fr < vals[lo]) {
      if (evals >= max_evaluations) break;
      auto expanded = along(-2.0);
      const double fe = eval(expanded);
      if (fe < fr) {
        pts[hi] = std::move(expanded);
        vals[hi] = fe;
      } else {
        pts[hi] = std::move(reflected);
        vals[hi] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[hi] = std::move(reflected);
      vals[hi] = fr;
      continue;
    }
    if (evals >= max_evaluations) break;
    const bool outside = fr < vals[hi];
    auto contracted = along(outside ? -0.5 : 0.5);
    const double fc = eval(contracted);
    if (fc < (outside ? fr : vals[hi])) {
      pts[hi] = std::move(contracted);
      vals[hi] = fc;
      continue;
    }
    // Shrink toward the best vertex.
    for (std::size_t i = 0; i <= dim && evals < max_evaluations; ++i) {
      if (i == lo) continue;
      for (std::size_t j = 0; j < dim; ++j) pts[i][j] = pts[lo][j] + 0.5 * (pts[i][j] - pts[lo][j]);
      vals[i] = eval(pts[i]);
    }
  }
  best.evaluations = evals;
  return best;
}

}  // namespace hydra::decompose
