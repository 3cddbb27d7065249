#pragma once

// Straight scalar-loop reference implementations used to cross-check the
// library metrics. Nothing here shares code with src/.

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "dfs/image.hpp"

namespace dfs::oracle {

inline double mse(const Image& a, const Image& b) {
  double s = 0;
  int n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      for (int c = 0; c < a.channels(); ++c) {
        const double d = a.at(y, x, c) - b.at(y, x, c);
        s += d * d;
        ++n;
      }
  return s / n;
}

inline double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  return m == 0 ? 99.0 : 10.0 * std::log10(1.0 / m);
}

inline double luma(const Image& img, int y, int x) {
  if (img.channels() == 1) return img.at(y, x, 0);
  return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

// Windowed SSIM with explicit per-window loops. `weights` is a k x k kernel
// summing to one; statistics are weighted population moments.
inline double ssim_windowed(const Image& a, const Image& b, const std::vector<double>& weights, int k) {
  const double c1 = 0.0001, c2 = 0.0009;
  double total = 0;
  int windows = 0;
  for (int y0 = 0; y0 + k <= a.height(); ++y0)
    for (int x0 = 0; x0 + k <= a.width(); ++x0) {
      double ma = 0, mb = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          ma += weights[i * k + j] * luma(a, y0 + i, x0 + j);
          mb += weights[i * k + j] * luma(b, y0 + i, x0 + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double da = luma(a, y0 + i, x0 + j) - ma, db = luma(b, y0 + i, x0 + j) - mb;
          va += weights[i * k + j] * da * da;
          vb += weights[i * k + j] * db * db;
          cov += weights[i * k + j] * da * db;
        }
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  return total / windows;
}

inline double ssim_uniform8(const Image& a, const Image& b) {
  return ssim_windowed(a, b, std::vector<double>(64, 1.0 / 64), 8);
}

inline double ssim_gaussian11(const Image& a, const Image& b) {
  std::vector<double> w(121);
  double sum = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      const double dy = i - 5, dx = j - 5;
      w[i * 11 + j] = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
      sum += w[i * 11 + j];
    }
  for (double& v : w) v /= sum;
  return ssim_windowed(a, b, w, 11);
}

// Exact fraction over 128-bit integers.
class Rational {
 public:
  Rational(__int128 num = 0, __int128 den = 1) : num_(num), den_(den) {
    if (den_ == 0) throw std::domain_error("zero denominator");
    normalize();
  }
  Rational operator+(const Rational& o) const { return {num_ * o.den_ + o.num_ * den_, den_ * o.den_}; }
  Rational operator*(const Rational& o) const { return {num_ * o.num_, den_ * o.den_}; }
  Rational operator/(const Rational& o) const { return {num_ * o.den_, den_ * o.num_}; }
  bool operator==(const Rational& o) const { return num_ == o.num_ && den_ == o.den_; }
  bool is_zero() const { return num_ == 0; }
  // Correctly rounded when both parts fit in 53 bits.
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

 private:
  static __int128 gcd(__int128 a, __int128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    return a;
  }
  void normalize() {
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const __int128 g = gcd(num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }
  __int128 num_, den_;
};

// IoU / iIoU from raw pixel arrays with exact arithmetic. `group_of` maps a
// class to its group (identity for class-level scores); `instance_group`
// marks groups that take part in iIoU.
struct SegOracle {
  std::vector<int> group_of;
  std::vector<bool> instance_group;
  std::uint8_t ignore = 255;

  Rational iou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt) const {
    const int groups = static_cast<int>(instance_group.size());
    std::vector<long long> tp(groups), fp(groups), fn(groups);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == ignore) continue;
      const int g = group_of[gt[i]], p = group_of[pred[i]];
      if (g == p) {
        ++tp[g];
      } else {
        ++fn[g];
        ++fp[p];
      }
    }
    Rational sum;
    int used = 0;
    for (int g = 0; g < groups; ++g) {
      if (tp[g] + fp[g] + fn[g] == 0) continue;
      sum = sum + Rational(tp[g], tp[g] + fp[g] + fn[g]);
      ++used;
    }
    return sum / Rational(used);
  }

  // Instance sizes and their group means come from the same image.
  Rational iiou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt,
                const std::vector<std::uint16_t>& inst) const {
    const int groups = static_cast<int>(instance_group.size());
    std::map<std::uint16_t, long long> size;
    std::map<std::uint16_t, int> group;
    for (std::size_t i = 0; i < gt.size(); ++i)
      if (inst[i] != 0 && gt[i] != ignore) {
        ++size[inst[i]];
        group[inst[i]] = group_of[gt[i]];
      }
    std::vector<long long> total(groups), count(groups);
    for (const auto& [id, s] : size) {
      total[group[id]] += s;
      ++count[group[id]];
    }
    std::vector<Rational> wtp(groups), wfn(groups);
    std::vector<long long> fp(groups);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == ignore) continue;
      const int g = group_of[gt[i]], p = group_of[pred[i]];
      if (g != p && instance_group[p]) ++fp[p];
      if (!instance_group[g] || inst[i] == 0) continue;
      // (total / count) / size
      const Rational w(total[g], count[g] * size[inst[i]]);
      if (g == p)
        wtp[g] = wtp[g] + w;
      else
        wfn[g] = wfn[g] + w;
    }
    Rational sum;
    int used = 0;
    for (int g = 0; g < groups; ++g) {
      if (!instance_group[g]) continue;
      const Rational denom = wtp[g] + Rational(fp[g]) + wfn[g];
      if (denom.is_zero()) continue;
      sum = sum + wtp[g] / denom;
      ++used;
    }
    return sum / Rational(used);
  }
};

}  // namespace dfs::oracle
