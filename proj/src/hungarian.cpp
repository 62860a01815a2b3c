#include "fruit4d/hungarian.hpp"

#include <limits>

#include "fruit4d/error.hpp"

namespace fruit4d {

AssignmentProblem AssignmentProblem::Augment(const Eigen::MatrixXd& pair_cost,
                                             double unmatched_cost) {
  const int m = static_cast<int>(pair_cost.rows());
  const int n = static_cast<int>(pair_cost.cols());
  AssignmentProblem p;
  p.real_cols = n;
  p.cost.resize(m, n + m);
  p.cost.leftCols(n) = pair_cost;
  p.cost.rightCols(m).setConstant(unmatched_cost);
  return p;
}

std::vector<int> SolveAssignment(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (rows == 0) return {};
  if (rows > cols) ThrowInvalidInput("assignment: more rows than columns");
  if (!cost.allFinite()) ThrowInvalidInput("assignment: non-finite cost");

  const double kInf = std::numeric_limits<double>::infinity();
  // 1-based arrays; match[j] is the row currently assigned to column j.
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<int> match(cols + 1, 0), way(cols + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(cols + 1, kInf);
    std::vector<char> used(cols + 1, false);
    do {
      used[j0] = true;
      const int i0 = match[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> assignment(rows, kUnmatched);
  for (int j = 1; j <= cols; ++j) {
    if (match[j] > 0) assignment[match[j] - 1] = j - 1;
  }
  return assignment;
}

std::vector<int> SolveWithUnmatched(const AssignmentProblem& problem) {
  std::vector<int> raw = SolveAssignment(problem.cost);
  for (int& col : raw) {
    if (col >= problem.real_cols) col = kUnmatched;
  }
  return raw;
}

}  // namespace fruit4d
