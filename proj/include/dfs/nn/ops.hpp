#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dfs/nn/autograd.hpp"

namespace dfs::nn {

// Fingerprint of the branch taken at every kink of a piecewise op (ReLU
// sign, |a - b| sign, max-pool winner) evaluated on this thread while the
// probe is alive. Two evaluations with equal fingerprints lie on the same
// smooth piece, which is what finite-difference checks need to know.
class KinkProbe {
 public:
  KinkProbe();
  ~KinkProbe();
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  void mix(std::uint64_t v) { hash_ = (hash_ ^ v) * 1099511628211ull; }

  // Innermost live probe of this thread, or null.
  static KinkProbe* active();

 private:
  std::uint64_t hash_ = 1469598103934665603ull;
  KinkProbe* previous_;
};

// Cross-correlation with zero padding. weight is {Cout, Cin, k, k}; bias is
// {1, Cout, 1, 1} or an undefined Var.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad);

// Mirror padding without repeating the edge sample (numpy "reflect").
template <typename T>
Var<T> reflect_pad(const Var<T>& x, int pad);

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x);

template <typename T>
Var<T> max_pool2x2(const Var<T>& x);

// Per-sample, per-channel normalization with optional affine {1,C,1,1}.
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

// Normalization with batch statistics, used identically in training and inference.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);

template <typename T>
Var<T> tanh(const Var<T>& x);

// y = scale * x + shift with constant scalars.
template <typename T>
Var<T> affine(const Var<T>& x, T scale, T shift);

// y[:,c] = scale[c] * x[:,c] + shift[c] with constant per-channel coefficients.
template <typename T>
Var<T> channel_affine(const Var<T>& x, std::span<const T> scale, std::span<const T> shift);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> softmax_channels(const Var<T>& x);

// ---- scalar-valued reductions ({1,1,1,1} results) ----

// mean over elements of BCE(sigmoid(s), target) computed stably from logits.
template <typename T>
Var<T> bce_with_logits(const Var<T>& scores, T target);

// mean over elements of (s - target)^2.
template <typename T>
Var<T> mean_square_to(const Var<T>& scores, T target);

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mean_square_diff(const Var<T>& a, const Var<T>& b);

// Mean over non-ignored pixels of (1/K) * sum_k (probs_k - onehot_k)^2.
// labels holds N*H*W entries; kIgnore pixels are skipped. Returns 0 when
// every pixel is ignored.
template <typename T>
Var<T> masked_onehot_mse(const Var<T>& probs, std::span<const std::uint8_t> labels);

// Mean over non-ignored pixels of -log softmax(logits)[label].
template <typename T>
Var<T> masked_cross_entropy(const Var<T>& logits, std::span<const std::uint8_t> labels);

// sum_i weights[i] * terms[i] over scalar terms.
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights);

}  // namespace dfs::nn
