#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dfs/nn/autograd.hpp"

namespace dfs::nn {

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

// Owner of a flat, ordered list of named parameters.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;

  // Checkpoint identity: network kind and a key=value echo of its spec.
  virtual std::string kind() const = 0;
  virtual std::string spec_echo() const = 0;

  const std::vector<NamedParam<T>>& parameters() const { return params_; }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.value().numel();
    return n;
  }

  // Frozen parameters never receive gradient.
  void set_trainable(bool on) {
    for (auto& p : params_) p.var.set_requires_grad(on);
  }
  bool trainable() const { return !params_.empty() && params_.front().var.requires_grad(); }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  // Raw parameter bytes in registration order, for freeze checks.
  std::vector<std::uint8_t> parameter_bytes() const {
    std::vector<std::uint8_t> out;
    for (const auto& p : params_) {
      auto v = p.var.value().values();
      auto* b = reinterpret_cast<const std::uint8_t*>(v.data());
      out.insert(out.end(), b, b + v.size_bytes());
    }
    return out;
  }

 protected:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  Var<T> add_param(std::string name, Shape shape, T fill) {
    Var<T> v(Tensor<T>(shape, fill), true);
    params_.push_back({std::move(name), v});
    return v;
  }

  Var<T> add_normal(std::string name, Shape shape, double stddev, std::mt19937_64& rng) {
    Tensor<T> t(shape);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& x : t.values()) x = static_cast<T>(dist(rng));
    Var<T> v(std::move(t), true);
    params_.push_back({std::move(name), v});
    return v;
  }

 private:
  std::vector<NamedParam<T>> params_;
};

}  // namespace dfs::nn
