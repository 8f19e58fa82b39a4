#pragma once

// Derivative-free minimization (Nelder-Mead with restarts). The simulated
// objectives here are piecewise constant in the parameters, so gradients are
// of no use.

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace waitlist {

struct SearchOptions {
  int max_evals = 400;
  double initial_step = 0.5;
  /// Stop a run when the simplex values spread by at most this much.
  double tolerance = 1e-10;
  /// Restart from the best point with a halved step after each converged run.
  int max_restarts = 3;
};

struct SearchResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evals = 0;
  bool converged = false;
  bool budget_exhausted = false;
  std::vector<double> trajectory;  // best value after every evaluation
};

/// With max_evals == 0 the start point is returned, evaluated once, and
/// flagged as budget-exhausted.
SearchResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                         const Eigen::VectorXd& start, const SearchOptions& options = {});

}  // namespace waitlist
