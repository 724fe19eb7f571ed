#pragma once

// Independent reference computations used by the tests. Each one is written
// straight from the textbook formula, without sharing code with the library.

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

// Centered two-pass population variance of per-device values, per column.
inline Vec two_pass_variance(const std::vector<Vec>& devices) {
  const std::size_t k = devices.size();
  const std::size_t n = devices.front().size();
  Vec out(n);
  for (std::size_t j = 0; j < n; ++j) {
    double mean = 0.0;
    for (std::size_t d = 0; d < k; ++d) mean += devices[d][j];
    mean /= static_cast<double>(k);
    double ss = 0.0;
    for (std::size_t d = 0; d < k; ++d) {
      const double c = devices[d][j] - mean;
      ss += c * c;
    }
    out[j] = ss / static_cast<double>(k);
  }
  return out;
}

inline Vec column_mean(const std::vector<Vec>& devices) {
  Vec out(devices.front().size(), 0.0);
  for (const auto& d : devices) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += d[j];
  }
  for (double& x : out) x /= static_cast<double>(devices.size());
  return out;
}

struct Layer {
  std::size_t offset;
  std::size_t length;
};

inline double norm(const Vec& v, Layer l) {
  double s = 0.0;
  for (std::size_t j = l.offset; j < l.offset + l.length; ++j) s += v[j] * v[j];
  return std::sqrt(s);
}

// Adam with the textbook (1 - beta^t) bias correction.
struct Adam {
  double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Vec m, v;
  int t = 0;

  Vec direction(const Vec& g) {
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    ++t;
    Vec out(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = b1 * m[j] + (1 - b1) * g[j];
      v[j] = b2 * v[j] + (1 - b2) * g[j] * g[j];
      const double mh = m[j] / (1 - std::pow(b1, t));
      const double vh = v[j] / (1 - std::pow(b2, t));
      out[j] = mh / (std::sqrt(vh) + eps);
    }
    return out;
  }

  void step(Vec& theta, const Vec& g, double lr) {
    const Vec d = direction(g);
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= lr * d[j];
  }
};

struct Lamb {
  Adam adam;
  double trust_eps = 1e-9;

  void step(Vec& theta, const Vec& g, double lr, const std::vector<Layer>& layers) {
    const Vec d = adam.direction(g);
    for (const auto& l : layers) {
      const double tn = norm(theta, l);
      const double ratio = tn == 0.0 ? 1.0 : tn / (norm(d, l) + trust_eps);
      for (std::size_t j = l.offset; j < l.offset + l.length; ++j) {
        theta[j] -= lr * ratio * d[j];
      }
    }
  }
};

struct Lars {
  double coef = 0.9;
  double trust_eps = 1e-9;
  Vec u;

  void step(Vec& theta, const Vec& g, double lr, const std::vector<Layer>& layers) {
    if (u.empty()) u.assign(g.size(), 0.0);
    for (const auto& l : layers) {
      const double tn = norm(theta, l);
      const double local = tn == 0.0 ? 1.0 : tn / (norm(g, l) + trust_eps);
      for (std::size_t j = l.offset; j < l.offset + l.length; ++j) {
        u[j] = coef * u[j] + local * g[j];
        theta[j] -= lr * u[j];
      }
    }
  }
};

// Central finite difference of f at x along coordinate j.
inline double central_difference(const std::function<double(const Vec&)>& f,
                                  Vec x, std::size_t j, double h) {
  const double x0 = x[j];
  x[j] = x0 + h;
  const double up = f(x);
  x[j] = x0 - h;
  const double down = f(x);
  return (up - down) / (2 * h);
}

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

inline Vec random_vec(std::mt19937_64& rng, std::size_t n, double lo = -1.0,
                      double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace oracle
