// phmm/stats.cc

// Copyright 2026  The phmm Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "phmm/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "phmm/error.hpp"

namespace phmm {

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

constexpr double kQuadTol = 1e-11;
constexpr unsigned kQuadDepth = 20;

// P(range of k iid standard normals <= w).
double normal_range_cdf(double w, int k) {
  if (w <= 0.0) return 0.0;
  auto f = [&](double z) {
    const double inner = std_normal_cdf(z) - std_normal_cdf(z - w);
    return std_normal_pdf(z) * std::pow(std::max(inner, 0.0), k - 1);
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  // The integrand vanishes outside [-9, 9 + w] to double precision; split at
  // the kinks of Phi(z) - Phi(z - w).
  double total = GK::integrate(f, -9.0, w / 2.0, kQuadDepth, kQuadTol) +
                 GK::integrate(f, w / 2.0, 9.0 + w, kQuadDepth, kQuadTol);
  return std::clamp(k * total, 0.0, 1.0);
}

}  // namespace

std::size_t GroupSamples::total() const {
  std::size_t n = 0;
  for (const auto& g : values) n += g.size();
  return n;
}

void GroupSamples::validate() const {
  if (values.size() < 2) throw ValidationError("need at least two groups");
  if (names.size() != values.size()) throw ValidationError("group names and values differ in count");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].empty()) throw ValidationError("group '" + names[i] + "' is empty");
    for (double v : values[i]) {
      if (!std::isfinite(v)) throw ValidationError("group '" + names[i] + "' has a non-finite value");
    }
  }
}

AnovaResult one_way_anova(const GroupSamples& groups) {
  groups.validate();
  const std::size_t k = groups.values.size();
  const std::size_t n = groups.total();
  if (n <= k) throw ValidationError("ANOVA needs more observations than groups");
  double grand = 0.0;
  for (const auto& g : groups.values) grand += std::accumulate(g.begin(), g.end(), 0.0);
  grand /= static_cast<double>(n);

  AnovaResult r;
  r.df_between = static_cast<int>(k - 1);
  r.df_within = static_cast<int>(n - k);
  for (const auto& g : groups.values) {
    const double m = mean_of(g);
    r.ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) r.ss_within += (v - m) * (v - m);
  }
  const double ms_between = r.ss_between / r.df_between;
  const double ms_within = r.ss_within / r.df_within;
  // Rounding leaves tiny nonzero sums when all means agree.
  const double scale = std::max(1.0, grand * grand) * static_cast<double>(n);
  const bool between_zero = r.ss_between <= 1e-24 * scale;
  const bool within_zero = r.ss_within <= 1e-24 * scale;
  if (between_zero) {
    r.f = 0.0;
    r.p = 1.0;
    return r;
  }
  if (within_zero) {
    r.f = std::numeric_limits<double>::infinity();
    r.p = 0.0;
    r.zero_within = true;
    return r;
  }
  r.f = ms_between / ms_within;
  const boost::math::fisher_f dist(r.df_between, r.df_within);
  r.p = boost::math::cdf(boost::math::complement(dist, r.f));
  return r;
}

double studentized_range_cdf(double q, int k, double df) {
  if (k < 2) throw ValidationError("studentized range needs k >= 2");
  if (!(df > 0.0)) throw ValidationError("studentized range needs df > 0");
  if (q <= 0.0) return 0.0;
  if (!std::isfinite(q)) return 1.0;
  if (df > 1e5) return normal_range_cdf(q, k);
  // s = chi_df / sqrt(df): density df^(df/2) s^(df-1) exp(-df s^2/2) /
  // (Gamma(df/2) 2^(df/2-1)), evaluated in logs.
  const double log_norm = 0.5 * df * std::log(df) - std::lgamma(0.5 * df) -
                          (0.5 * df - 1.0) * std::log(2.0);
  auto f = [&](double s) {
    if (s <= 0.0) return 0.0;
    const double log_density = log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s;
    return std::exp(log_density) * normal_range_cdf(q * s, k);
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double spread = 1.0 / std::sqrt(2.0 * df);
  const double lo = std::max(0.0, 1.0 - 40.0 * spread);
  const double hi = 1.0 + 40.0 * spread + 10.0 / std::sqrt(df);
  const double mid = 1.0;
  const double total = (lo < mid ? GK::integrate(f, lo, mid, kQuadDepth, kQuadTol) : 0.0) +
                       GK::integrate(f, mid, hi, kQuadDepth, kQuadTol);
  return std::clamp(total, 0.0, 1.0);
}

double studentized_range_sf(double q, int k, double df) {
  return 1.0 - studentized_range_cdf(q, k, df);
}

std::vector<TukeyPair> tukey_hsd(const GroupSamples& groups, double alpha) {
  const AnovaResult anova = one_way_anova(groups);
  const int k = static_cast<int>(groups.values.size());
  const double ms_within = anova.ss_within / anova.df_within;
  std::vector<double> means;
  for (const auto& g : groups.values) means.push_back(mean_of(g));
  std::vector<TukeyPair> out;
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      TukeyPair pr;
      pr.a = a;
      pr.b = b;
      pr.difference = means[b] - means[a];
      const double na = static_cast<double>(groups.values[a].size());
      const double nb = static_cast<double>(groups.values[b].size());
      const double se = std::sqrt(0.5 * ms_within * (1.0 / na + 1.0 / nb));
      if (std::abs(pr.difference) == 0.0) {
        pr.q = 0.0;
        pr.p = 1.0;
      } else if (se == 0.0) {
        pr.q = std::numeric_limits<double>::infinity();
        pr.p = 0.0;
      } else {
        pr.q = std::abs(pr.difference) / se;
        pr.p = std::clamp(studentized_range_sf(pr.q, k, anova.df_within), 0.0, 1.0);
      }
      pr.significant = pr.p < alpha;
      out.push_back(pr);
    }
  }
  return out;
}

MeanCi mean_ci(const std::vector<double>& values, double level) {
  if (values.size() < 2) throw ValidationError("mean_ci needs at least two values");
  if (!(level >= 0.0 && level < 1.0)) throw ValidationError("mean_ci level must be in [0, 1)");
  const double n = static_cast<double>(values.size());
  const double m = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  const double s = std::sqrt(ss / (n - 1.0));
  double z = 0.0;
  if (level > 0.0) {
    z = boost::math::quantile(boost::math::normal(), 0.5 + 0.5 * level);
  }
  const double half = z * s / std::sqrt(n);
  return {m, m - half, m + half};
}

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

Correlation spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("spearman: length mismatch");
  if (x.size() < 2) throw ValidationError("spearman: need at least two points");
  const std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  Correlation c;
  if (sxx == 0.0 || syy == 0.0) {
    c.degenerate = true;
    return c;
  }
  c.rho = sxy / std::sqrt(sxx * syy);
  return c;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

}  // namespace phmm
