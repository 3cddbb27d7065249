#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "dfs/image.hpp"
#include "dfs/metrics.hpp"
#include "dfs/nn/autograd.hpp"
#include "dfs/nn/module.hpp"
#include "dfs/nn/ops.hpp"

namespace dfs::testing {

inline Image random_image(int h, int w, int c, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(h, w, c);
  for (double& v : img.values()) v = u(rng);
  return img;
}

inline SegLabelMap random_labels(int h, int w, int n_classes, std::mt19937_64& rng,
                                 double ignore_fraction = 0.0) {
  std::uniform_int_distribution<int> cls(0, n_classes - 1);
  std::uniform_real_distribution<double> u(0, 1);
  SegLabelMap m(h, w);
  for (auto& v : m.values())
    v = u(rng) < ignore_fraction ? kIgnoreLabel : static_cast<std::uint8_t>(cls(rng));
  return m;
}

template <typename T>
nn::Tensor<T> random_tensor(nn::Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Random scenes with rectangular instances, ignore pixels and noisy predictions.
struct SegFixture {
  SegLabelMap gt, pred;
  InstanceMap inst;
};

inline SegFixture random_scene(const metrics::Taxonomy& tax, std::mt19937_64& rng) {
  SegFixture f{SegLabelMap(16, 16, 0), SegLabelMap(16, 16, 0), InstanceMap(16, 16, 0)};
  std::uniform_int_distribution<int> pos(0, 13), len(1, 6), cls(1, tax.n_classes() - 1), n(1, 5);
  const int count = n(rng);
  for (int k = 1; k <= count; ++k) {
    const int y0 = pos(rng), x0 = pos(rng), h = len(rng), w = len(rng), c = cls(rng);
    for (int y = y0; y < std::min(16, y0 + h); ++y)
      for (int x = x0; x < std::min(16, x0 + w); ++x) {
        f.gt.at(y, x) = static_cast<std::uint8_t>(c);
        f.inst.at(y, x) = static_cast<std::uint16_t>(k);
      }
  }
  // an instance id must stay within one class: relabel overlaps
  std::map<std::uint16_t, std::uint8_t> cls_of;
  for (std::size_t i = 0; i < f.gt.size(); ++i) {
    const auto id = f.inst.values()[i];
    if (id == 0) continue;
    auto [it, fresh] = cls_of.emplace(id, f.gt.values()[i]);
    f.gt.values()[i] = it->second;
  }
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> any(0, tax.n_classes() - 1);
  for (std::size_t i = 0; i < f.gt.size(); ++i) {
    f.pred.values()[i] = u(rng) < 0.3 ? static_cast<std::uint8_t>(any(rng)) : f.gt.values()[i];
    if (u(rng) < 0.05) {
      f.gt.values()[i] = kIgnoreLabel;
      f.inst.values()[i] = 0;
    }
  }
  return f;
}

struct GradSample {
  double analytic = 0;
  double numeric = 0;
  bool kink_crossed = false;  // the +h and -h evaluations took different branches
};

// Central differences of `loss` w.r.t. the listed entries of `param`,
// compared with the gradient already accumulated in it.
template <typename T>
std::vector<GradSample> finite_difference(nn::Var<T> param, const std::vector<std::size_t>& indices,
                                          double h, const std::function<double()>& loss) {
  std::vector<GradSample> out;
  for (std::size_t i : indices) {
    T& slot = param.mutable_value()[i];
    const T saved = slot;
    const T plus = static_cast<T>(saved + h), minus = static_cast<T>(saved - h);
    auto eval = [&](T value, std::uint64_t& fingerprint) {
      slot = value;
      nn::KinkProbe probe;
      const double l = loss();
      fingerprint = probe.fingerprint();
      return l;
    };
    std::uint64_t f_up = 0, f_down = 0, f_mid = 0;
    const double up = eval(plus, f_up);
    const double down = eval(minus, f_down);
    eval(saved, f_mid);
    slot = saved;
    const double g = param.grad().empty() ? 0.0 : static_cast<double>(param.grad()[i]);
    // divide by the step actually representable in T
    out.push_back({g, (up - down) / (static_cast<double>(plus) - static_cast<double>(minus)),
                   f_up != f_mid || f_down != f_mid});
  }
  return out;
}

}  // namespace dfs::testing
