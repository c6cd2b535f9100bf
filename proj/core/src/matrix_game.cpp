#include "marlab/matrix_game.hpp"

#include <sstream>
#include <stdexcept>

namespace marlab {

PayoffTensor::PayoffTensor(std::vector<int> dims, std::vector<double> entries)
    : dims_(std::move(dims)), entries_(std::move(entries)) {
  int n = 1;
  for (int d : dims_) {
    if (d <= 0) throw std::runtime_error("payoff dims must be positive");
    n *= d;
  }
  if (n != static_cast<int>(entries_.size())) {
    throw std::runtime_error("payoff entry count does not match dims");
  }
  for (double v : entries_) {
    if (!(v == v) || v > 1e300 || v < -1e300) throw std::runtime_error("payoff entries must be finite");
  }
}

int PayoffTensor::flat_index(const std::vector<int>& joint_action) const {
  if (joint_action.size() != dims_.size()) throw std::runtime_error("joint action arity mismatch");
  int idx = 0;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    int a = joint_action[i];
    if (a < 0 || a >= dims_[i]) {
      throw std::runtime_error("action " + std::to_string(a) + " out of range for agent " + std::to_string(i));
    }
    idx = idx * dims_[i] + a;
  }
  return idx;
}

std::vector<int> PayoffTensor::unflatten(int idx) const {
  std::vector<int> joint(dims_.size());
  for (int i = static_cast<int>(dims_.size()) - 1; i >= 0; --i) {
    joint[static_cast<std::size_t>(i)] = idx % dims_[static_cast<std::size_t>(i)];
    idx /= dims_[static_cast<std::size_t>(i)];
  }
  return joint;
}

double PayoffTensor::at(const std::vector<int>& joint_action) const {
  return entries_[static_cast<std::size_t>(flat_index(joint_action))];
}

std::string PayoffTensor::to_csv() const {
  std::ostringstream os;
  os << "dims";
  for (int d : dims_) os << "," << d;
  os << "\n";
  int last = dims_.back();
  for (int i = 0; i < joint_count(); i += last) {
    for (int j = 0; j < last; ++j) {
      if (j) os << ",";
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", entries_[static_cast<std::size_t>(i + j)]);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

PayoffTensor PayoffTensor::from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("payoff csv: empty input");
  std::istringstream header(line);
  std::string tok;
  if (!std::getline(header, tok, ',') || tok != "dims") {
    throw std::runtime_error("payoff csv: expected 'dims' header, got '" + tok + "'");
  }
  std::vector<int> dims;
  while (std::getline(header, tok, ',')) dims.push_back(std::stoi(tok));
  if (dims.empty()) throw std::runtime_error("payoff csv: no dims in header");
  std::vector<double> entries;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    while (std::getline(row, tok, ',')) entries.push_back(std::stod(tok));
  }
  return PayoffTensor(std::move(dims), std::move(entries));
}

PayoffTensor xor_payoff() { return PayoffTensor({2, 2}, {0.0, 1.0, 1.0, 0.0}); }

MatrixGameSpec xor_game() { return MatrixGameSpec{2, 2, xor_payoff()}; }

double permutation_reward(int n, const std::vector<int>& joint_action) {
  if (static_cast<int>(joint_action.size()) != n) throw std::runtime_error("joint action arity mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (int a : joint_action) {
    if (a < 0 || a >= n) throw std::runtime_error("action " + std::to_string(a) + " out of range 0.." + std::to_string(n - 1));
    if (seen[static_cast<std::size_t>(a)]) return 0.0;
    seen[static_cast<std::size_t>(a)] = true;
  }
  return 1.0;
}

MatrixGameSpec permutation_game(int n) {
  if (n < 2) throw std::runtime_error("permutation game needs n >= 2");
  int total = 1;
  for (int i = 0; i < n; ++i) total *= n;
  std::vector<int> dims(static_cast<std::size_t>(n), n);
  std::vector<double> entries(static_cast<std::size_t>(total), 0.0);
  PayoffTensor proto(dims, entries);
  for (int idx = 0; idx < total; ++idx) {
    entries[static_cast<std::size_t>(idx)] = permutation_reward(n, proto.unflatten(idx));
  }
  return MatrixGameSpec{n, n, PayoffTensor(std::move(dims), std::move(entries))};
}

}  // namespace marlab
