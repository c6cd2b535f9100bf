#pragma once

#include <string>
#include <vector>

#include "marlab/tensor.hpp"

namespace marlab {

// Reward function r(a^1, ..., a^n) of a stateless cooperative game, stored
// row-major over joint actions. Actions are 0-based throughout the code.
class PayoffTensor {
 public:
  PayoffTensor() = default;
  PayoffTensor(std::vector<int> dims, std::vector<double> entries);

  int n_agents() const { return static_cast<int>(dims_.size()); }
  const std::vector<int>& dims() const { return dims_; }
  int joint_count() const { return static_cast<int>(entries_.size()); }

  double at(const std::vector<int>& joint_action) const;
  double flat(int idx) const { return entries_[static_cast<std::size_t>(idx)]; }
  const std::vector<double>& entries() const { return entries_; }

  int flat_index(const std::vector<int>& joint_action) const;
  std::vector<int> unflatten(int idx) const;

  // CSV with a leading dims header, then entries row-major (one row of the
  // last axis per line).
  std::string to_csv() const;
  static PayoffTensor from_csv(const std::string& text);

 private:
  std::vector<int> dims_;
  std::vector<double> entries_;
};

struct MatrixGameSpec {
  int n_agents = 2;
  int n_actions = 2;
  PayoffTensor payoff;
};

// Table 1: both agents rewarded iff they pick different actions.
PayoffTensor xor_payoff();
MatrixGameSpec xor_game();

// 1 iff the joint action is a permutation of 0..n-1. Out-of-range actions
// are an error.
double permutation_reward(int n, const std::vector<int>& joint_action);
MatrixGameSpec permutation_game(int n);

}  // namespace marlab
