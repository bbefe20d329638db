// Test-only reference implementations, kept independent of the library paths
// they cross-check.
#pragma once

#include <cmath>
#include <vector>

#include "gpig/linalg.hpp"

namespace gpig_test {

// Plain trapezoid over x = k/n, written without reusing the library helper.
inline double reference_trapezoid(const std::vector<int>& ks,
                                  const gpig::Vec& values, int n) {
  double area = 0.0;
  for (size_t i = 1; i < ks.size(); ++i) {
    const double x0 = static_cast<double>(ks[i - 1]) / n;
    const double x1 = static_cast<double>(ks[i]) / n;
    area += (x1 - x0) * 0.5 * (values[i - 1] + values[i]);
  }
  return area;
}

// Cyclic Jacobi eigenvalues for symmetric matrices; plenty for n <= 64.
inline gpig::Vec jacobi_eigenvalues(gpig::Matrix a, int sweeps = 60) {
  const int n = a.rows();
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-18) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  gpig::Vec eig(n);
  for (int i = 0; i < n; ++i) eig[i] = a(i, i);
  return eig;
}

inline double spectral_radius(const gpig::Matrix& symmetric) {
  double r = 0.0;
  for (double e : jacobi_eigenvalues(symmetric)) r = std::max(r, std::abs(e));
  return r;
}

}  // namespace gpig_test
