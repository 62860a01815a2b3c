#pragma once

#include <vector>

#include <Eigen/Core>

namespace fruit4d {

inline constexpr int kUnmatched = -1;

// Augmented assignment problem: an m x n block of pairwise costs plus an
// m x m block of constant unmatched costs, so every row can always be
// assigned somewhere.
struct AssignmentProblem {
  Eigen::MatrixXd cost;  // m x (n + m)
  int real_cols = 0;     // n

  int Rows() const { return static_cast<int>(cost.rows()); }

  // C_iou entries in [0,1]; augmented block filled with `unmatched_cost`.
  static AssignmentProblem Augment(const Eigen::MatrixXd& pair_cost,
                                   double unmatched_cost);
};

// Minimum-total-cost injective row -> column assignment, rows() <= cols().
// Shortest augmenting path with potentials, O(r^2 c); deterministic.
std::vector<int> SolveAssignment(const Eigen::MatrixXd& cost);

// Assignment for an augmented problem; rows landing in the augmented block
// report kUnmatched.
std::vector<int> SolveWithUnmatched(const AssignmentProblem& problem);

}  // namespace fruit4d
