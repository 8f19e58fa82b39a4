#include "waitlist/direct_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace waitlist {

namespace {

struct Budget {
  const std::function<double(const Eigen::VectorXd&)>& f;
  SearchResult& out;
  int limit;

  bool spent() const { return out.evals >= limit; }

  double operator()(const Eigen::VectorXd& x) {
    double v = f(x);
    if (!std::isfinite(v)) v = std::numeric_limits<double>::max();
    ++out.evals;
    if (out.trajectory.empty() || v < out.value) {
      out.value = v;
      out.x = x;
    }
    out.trajectory.push_back(out.value);
    return v;
  }
};

/// One Nelder-Mead run. Returns true when the simplex collapsed within
/// tolerance before the budget ran out.
bool run(Budget& eval, const Eigen::VectorXd& start, double step, double tolerance) {
  const auto n = start.size();
  std::vector<Eigen::VectorXd> pts;
  std::vector<double> vals;
  pts.push_back(start);
  vals.push_back(eval(start));
  for (Eigen::Index i = 0; i < n && !eval.spent(); ++i) {
    Eigen::VectorXd p = start;
    p(i) += step;
    pts.push_back(p);
    vals.push_back(eval(p));
  }
  if (static_cast<Eigen::Index>(pts.size()) < n + 1) return false;

  std::vector<std::size_t> order(pts.size());
  while (!eval.spent()) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];
    if (vals[worst] - vals[best] <= tolerance) return true;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k + 1 < order.size(); ++k) centroid += pts[order[k]];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + (centroid - pts[worst]);
    const double fr = eval(reflected);
    if (fr < vals[best]) {
      if (eval.spent()) {
        pts[worst] = reflected;
        vals[worst] = fr;
        break;
      }
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(expanded);
      if (fe < fr) {
        pts[worst] = expanded;
        vals[worst] = fe;
      } else {
        pts[worst] = reflected;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = reflected;
      vals[worst] = fr;
      continue;
    }
    if (eval.spent()) break;
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(contracted);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = contracted;
      vals[worst] = fc;
      continue;
    }
    // Shrink toward the best vertex.
    for (std::size_t k = 1; k < order.size() && !eval.spent(); ++k) {
      const std::size_t i = order[k];
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      vals[i] = eval(pts[i]);
    }
  }
  return false;
}

}  // namespace

SearchResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                         const Eigen::VectorXd& start, const SearchOptions& options) {
  SearchResult out;
  out.x = start;
  if (options.max_evals <= 0) {
    out.value = f(start);
    out.evals = 1;
    out.trajectory.push_back(out.value);
    out.budget_exhausted = true;
    return out;
  }
  if (start.size() == 0) {
    out.value = f(start);
    out.evals = 1;
    out.trajectory.push_back(out.value);
    out.converged = true;
    return out;
  }
  Budget eval{f, out, options.max_evals};
  double step = options.initial_step;
  for (int attempt = 0; attempt <= options.max_restarts; ++attempt) {
    const double before = out.trajectory.empty() ? std::numeric_limits<double>::infinity() : out.value;
    const Eigen::VectorXd from = out.x;
    out.converged = run(eval, from, step, options.tolerance);
    if (!out.converged) break;
    // A restart that found nothing better ends the search.
    if (attempt > 0 && !(out.value < before)) break;
    step *= 0.5;
  }
  out.budget_exhausted = !out.converged && eval.spent();
  return out;
}

}  // namespace waitlist
