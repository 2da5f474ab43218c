#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rpd/nn/matrix.hpp"

namespace rpd {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;  // same shape as value
};

// Flat list of named parameters with one gradient slot each. The set of
// parameters is fixed once freeze() has been called.
class ParamStore {
 public:
  std::size_t add(std::string name, Matrix init) {
    if (frozen_) throw UsageError("ParamStore: cannot add '" + name + "' after construction");
    Matrix grad(init.rows(), init.cols());
    params_.push_back({std::move(name), std::move(init), std::move(grad)});
    return params_.size() - 1;
  }
  void freeze() { frozen_ = true; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Parameter& find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return p;
    throw ConfigError("ParamStore: no parameter named '" + name + "'");
  }

  // Number of scalar entries across all parameters.
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
  }

  std::vector<double> flat_values() const {
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& p : params_) out.insert(out.end(), p.value.values().begin(), p.value.values().end());
    return out;
  }
  std::vector<double> flat_grads() const {
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& p : params_) out.insert(out.end(), p.grad.values().begin(), p.grad.values().end());
    return out;
  }
  void assign_flat(const std::vector<double>& flat) {
    if (flat.size() != scalar_count()) throw ConfigError("ParamStore: flat size mismatch");
    std::size_t off = 0;
    for (auto& p : params_) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                flat.begin() + static_cast<std::ptrdiff_t>(off + p.value.size()), p.value.data());
      off += p.value.size();
    }
  }

  // Entry i of the flattened parameter vector.
  double& scalar(std::size_t i) {
    for (auto& p : params_) {
      if (i < p.value.size()) return p.value[i];
      i -= p.value.size();
    }
    throw ConfigError("ParamStore: scalar index out of range");
  }

 private:
  std::vector<Parameter> params_;
  bool frozen_ = false;
};

}  // namespace rpd
