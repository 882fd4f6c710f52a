#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "voldev/error.hpp"

namespace voldev {

class TimeGrid {
 public:
  TimeGrid() = default;

  static TimeGrid uniform(double horizon, std::size_t n_steps) {
    check(horizon, n_steps);
    TimeGrid g;
    g.nodes_.resize(n_steps + 1);
    const double dt = horizon / static_cast<double>(n_steps);
    for (std::size_t i = 0; i < n_steps; ++i) g.nodes_[i] = static_cast<double>(i) * dt;
    g.nodes_[n_steps] = horizon;
    g.uniform_ = true;
    return g;
  }

  // t_i = T (1 - (1 - i/n)^q), clustered at the horizon when q > 1.
  static TimeGrid graded_to_horizon(double horizon, std::size_t n_steps, double exponent) {
    if (exponent == 1.0) return uniform(horizon, n_steps);
    check(horizon, n_steps);
    if (!(exponent >= 1.0)) throw Error(ErrorCode::domain_error, "grading exponent must be >= 1");
    TimeGrid g;
    g.nodes_.resize(n_steps + 1);
    const double n = static_cast<double>(n_steps);
    for (std::size_t i = 0; i <= n_steps; ++i)
      g.nodes_[i] = horizon * (1.0 - std::pow(1.0 - static_cast<double>(i) / n, exponent));
    g.nodes_[n_steps] = horizon;
    g.uniform_ = false;
    return g;
  }

  static TimeGrid from_nodes(std::vector<double> nodes) {
    if (nodes.size() < 2 || nodes.front() != 0.0)
      throw Error(ErrorCode::domain_error, "grid must start at 0 and have at least one step");
    for (std::size_t i = 1; i < nodes.size(); ++i)
      if (!(nodes[i] > nodes[i - 1])) throw Error(ErrorCode::domain_error, "grid nodes must increase");
    TimeGrid g;
    g.nodes_ = std::move(nodes);
    const double dt = g.nodes_.back() / static_cast<double>(g.nodes_.size() - 1);
    g.uniform_ = true;
    for (std::size_t i = 0; i < g.nodes_.size(); ++i)
      if (std::abs(g.nodes_[i] - static_cast<double>(i) * dt) > 1e-12 * g.nodes_.back()) g.uniform_ = false;
    return g;
  }

  double horizon() const { return nodes_.back(); }
  std::size_t n_steps() const { return nodes_.size() - 1; }
  std::size_t size() const { return nodes_.size(); }
  double operator[](std::size_t i) const { return nodes_[i]; }
  double step(std::size_t i) const { return nodes_[i + 1] - nodes_[i]; }
  bool is_uniform() const { return uniform_; }
  double dt() const { return horizon() / static_cast<double>(n_steps()); }
  std::span<const double> nodes() const { return nodes_; }

  std::size_t nearest_node(double t) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t);
    if (it == nodes_.end()) return nodes_.size() - 1;
    std::size_t i = static_cast<std::size_t>(it - nodes_.begin());
    if (i > 0 && t - nodes_[i - 1] < nodes_[i] - t) --i;
    return i;
  }

  // Midpoint refinement, used by the defect certificate and grid-convergence tests.
  TimeGrid refined() const {
    std::vector<double> n;
    n.reserve(2 * nodes_.size() - 1);
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
      n.push_back(nodes_[i]);
      n.push_back(0.5 * (nodes_[i] + nodes_[i + 1]));
    }
    n.push_back(nodes_.back());
    TimeGrid g;
    g.nodes_ = std::move(n);
    g.uniform_ = uniform_;
    return g;
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) { return a.nodes_ == b.nodes_; }

 private:
  static void check(double horizon, std::size_t n_steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw Error(ErrorCode::domain_error, "horizon must be positive");
    if (n_steps == 0) throw Error(ErrorCode::domain_error, "need at least one step");
  }

  std::vector<double> nodes_{0.0, 1.0};
  bool uniform_ = true;
};

// Values of a dim-valued function on the nodes of a grid, stored node-major.
class GridFunction {
 public:
  GridFunction() = default;
  explicit GridFunction(TimeGrid grid, std::size_t dim = 1)
      : grid_(std::move(grid)), dim_(dim), values_(grid_.size() * dim, 0.0) {}
  GridFunction(TimeGrid grid, std::vector<double> values, std::size_t dim = 1)
      : grid_(std::move(grid)), dim_(dim), values_(std::move(values)) {
    if (values_.size() != grid_.size() * dim_)
      throw Error(ErrorCode::domain_error, "grid function size does not match grid");
  }

  static GridFunction from_function(const TimeGrid& grid, const std::function<double(double)>& f) {
    GridFunction g(grid, 1);
    for (std::size_t i = 0; i < grid.size(); ++i) g(i) = f(grid[i]);
    return g;
  }

  const TimeGrid& grid() const { return grid_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return grid_.size(); }

  double& operator()(std::size_t i, std::size_t c = 0) { return values_[i * dim_ + c]; }
  double operator()(std::size_t i, std::size_t c = 0) const { return values_[i * dim_ + c]; }
  std::span<const double> node(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  std::span<double> node(std::size_t i) { return {values_.data() + i * dim_, dim_}; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  GridFunction component(std::size_t c) const {
    GridFunction out(grid_, 1);
    for (std::size_t i = 0; i < size(); ++i) out(i) = (*this)(i, c);
    return out;
  }

  static GridFunction stack(const std::vector<GridFunction>& parts) {
    if (parts.empty()) throw Error(ErrorCode::domain_error, "nothing to stack");
    std::size_t dim = 0;
    for (const auto& p : parts) {
      if (!(p.grid() == parts[0].grid())) throw Error(ErrorCode::domain_error, "grids differ");
      dim += p.dim();
    }
    GridFunction out(parts[0].grid(), dim);
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::size_t c = 0;
      for (const auto& p : parts)
        for (std::size_t k = 0; k < p.dim(); ++k) out(i, c++) = p(i, k);
    }
    return out;
  }

 private:
  TimeGrid grid_;
  std::size_t dim_ = 1;
  std::vector<double> values_ = std::vector<double>(2, 0.0);
};

using Control = GridFunction;

}  // namespace voldev
