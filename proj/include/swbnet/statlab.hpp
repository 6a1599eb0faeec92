#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "swbnet/error.hpp"
#include "swbnet/random.hpp"

namespace swbnet::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw UndefinedInput("mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Unbiased sample variance.
inline double variance(std::span<const double> x) {
  if (x.size() < 2) throw UndefinedInput("variance needs at least two values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw UndefinedInput("quantile of an empty sample");
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline double normal_two_sided_p(double z) {
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

// ---------------------------------------------------------------------------
// Permutation test on cluster-level values.

// Two-sided permutation p-value for mean(a) - mean(b): cluster labels are
// shuffled `iterations` times and p = (1 + #{|T_perm| >= |T_obs|}) / (1 + iterations).
// Ties are judged with a tolerance scaled to the pooled range so the result
// is invariant to common affine transforms of both samples.
inline double permutation_test(std::span<const double> a, std::span<const double> b, int iterations, Rng& rng) {
  if (a.size() < 2 || b.size() < 2) throw UndefinedInput("permutation test needs at least two clusters per condition");
  if (iterations < 1000) throw InvalidArgument("permutation test needs at least 1000 iterations");

  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto [lo, hi] = std::minmax_element(pooled.begin(), pooled.end());
  const double eps = 1e-9 * (*hi - *lo);
  const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
  const std::size_t na = a.size();
  const double nad = static_cast<double>(na), nbd = static_cast<double>(b.size());

  auto statistic = [&](std::span<const double> first) {
    const double sa = std::accumulate(first.begin(), first.end(), 0.0);
    return sa / nad - (total - sa) / nbd;
  };
  const double observed = std::abs(statistic(a));
  long extreme = 0;
  for (int it = 0; it < iterations; ++it) {
    rng.shuffle(pooled.begin(), pooled.end());
    if (std::abs(statistic(std::span<const double>(pooled.data(), na))) >= observed - eps) ++extreme;
  }
  return static_cast<double>(1 + extreme) / static_cast<double>(1 + iterations);
}

// ---------------------------------------------------------------------------
// Welch's unequal-variance t test.

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  double diff = 0.0;
  double se = 0.0;
};

inline TTest welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw UndefinedInput("welch_t needs at least two values per group");
  const double va = variance(a) / static_cast<double>(a.size());
  const double vb = variance(b) / static_cast<double>(b.size());
  if (va + vb == 0.0) throw UndefinedInput("welch_t: both groups have zero variance");
  TTest r;
  r.diff = mean(a) - mean(b);
  r.se = std::sqrt(va + vb);
  r.t = r.diff / r.se;
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  boost::math::students_t dist(r.df);
  r.p = r.t == 0.0 ? 1.0 : 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

// ---------------------------------------------------------------------------
// Logistic regression by iteratively reweighted least squares.

struct LogisticFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  std::vector<double> z;
  std::vector<double> p_values;
  std::vector<double> log_likelihood_trace;  // one entry per accepted iterate
  int iterations = 0;
  double log_likelihood() const { return log_likelihood_trace.back(); }
};

namespace detail {

inline double logistic_log_likelihood(const Eigen::VectorXd& eta, std::span<const int> y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = eta[i];
    // log(1 + exp(e)) computed stably
    const double log1pexp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    ll += (y[static_cast<std::size_t>(i)] ? e : 0.0) - log1pexp;
  }
  return ll;
}

}  // namespace detail

// Maximum-likelihood logit. Converges when the largest coefficient change is
// below 1e-10 or after 100 iterations; step-halving keeps the log-likelihood
// non-decreasing. Standard errors come from the inverse observed information.
inline LogisticFit logistic_fit(std::span<const int> outcome, const Eigen::MatrixXd& design,
                                std::span<const std::string> names = {}) {
  const Eigen::Index n = design.rows(), p = design.cols();
  if (static_cast<Eigen::Index>(outcome.size()) != n) throw InvalidArgument("outcome and design row counts differ");
  if (n == 0 || p == 0) throw UndefinedInput("logistic_fit on an empty design");
  auto name_of = [&](Eigen::Index j) {
    return j < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(j)] : "x" + std::to_string(j);
  };
  long ones = 0;
  for (int y : outcome) {
    if (y != 0 && y != 1) throw InvalidArgument("logistic outcome must be 0 or 1");
    ones += y;
  }
  if (ones == 0 || ones == n) throw UndefinedInput("logistic_fit needs observations in both outcome classes");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < p) throw UndefinedInput("logistic_fit: design matrix is rank deficient");

  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv[i] = outcome[static_cast<std::size_t>(i)];

  LogisticFit fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = design * beta;
  double ll = detail::logistic_log_likelihood(eta, outcome);
  fit.log_likelihood_trace.push_back(ll);

  constexpr double kDivergence = 30.0;
  auto diverged = [&](const Eigen::VectorXd& b) {
    Eigen::Index worst = 0;
    b.cwiseAbs().maxCoeff(&worst);
    return DivergenceError("logistic_fit diverged (perfect or quasi-perfect separation); offending covariate: " +
                           name_of(worst));
  };

  bool converged = false;
  for (int it = 1; it <= 100 && !converged; ++it) {
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = 1.0 / (1.0 + std::exp(-eta[i]));
      w[i] = mu[i] * (1.0 - mu[i]);
    }
    const Eigen::MatrixXd info = design.transpose() * w.asDiagonal() * design;
    const Eigen::VectorXd score = design.transpose() * (yv - mu);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw diverged(beta);
    Eigen::VectorXd step = ldlt.solve(score);

    double scale = 1.0;
    Eigen::VectorXd candidate;
    double ll_new = ll;
    for (int h = 0; h < 40; ++h) {
      candidate = beta + scale * step;
      ll_new = detail::logistic_log_likelihood(design * candidate, outcome);
      if (ll_new >= ll - 1e-12 * std::abs(ll)) break;
      scale *= 0.5;
    }
    if (ll_new < ll) {
      candidate = beta;
      ll_new = ll;
    }
    const double change = (candidate - beta).cwiseAbs().maxCoeff();
    beta = candidate;
    eta = design * beta;
    ll = ll_new;
    fit.log_likelihood_trace.push_back(ll);
    fit.iterations = it;
    if (beta.cwiseAbs().maxCoeff() > kDivergence) throw diverged(beta);
    converged = change < 1e-10;
  }

  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = 1.0 / (1.0 + std::exp(-eta[i]));
    w[i] = mu * (1.0 - mu);
  }
  const Eigen::MatrixXd info = design.transpose() * w.asDiagonal() * design;
  const Eigen::MatrixXd cov = info.inverse();
  fit.coefficients = beta;
  fit.standard_errors = cov.diagonal().cwiseSqrt();
  for (Eigen::Index j = 0; j < p; ++j) {
    const double z = beta[j] / fit.standard_errors[j];
    fit.z.push_back(z);
    fit.p_values.push_back(normal_two_sided_p(z));
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Mediation x -> z -> y with a nonparametric cluster bootstrap.

struct MediationResult {
  double a = 0.0;         // z on x
  double b = 0.0;         // y on z, adjusting for x
  double total = 0.0;     // c: y on x
  double direct = 0.0;    // c': y on x, adjusting for z
  double indirect = 0.0;  // a * b
  double proportion = 0.0;
  bool proportion_unstable = false;  // |total| < 1e-6
  double ci_low = 0.0;   // 2.5% percentile of bootstrap indirect effects
  double ci_high = 0.0;  // 97.5%
  double p_value = 1.0;  // bootstrap two-sided p for the indirect effect
  int bootstrap = 0;
};

namespace detail {

struct PathFit {
  double a, b, c, c_prime;
};

// Returns false when the sample is degenerate for the three regressions.
inline bool fit_paths(std::span<const double> x, std::span<const double> z, std::span<const double> y,
                      std::span<const std::size_t> rows, PathFit& out, std::string* why = nullptr) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X1(n, 2), X2(n, 3);
  Eigen::VectorXd zv(n), yv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t r = rows[static_cast<std::size_t>(i)];
    X1(i, 0) = X2(i, 0) = 1.0;
    X1(i, 1) = X2(i, 1) = x[r];
    X2(i, 2) = z[r];
    zv[i] = z[r];
    yv[i] = y[r];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> q1(X1);
  q1.setThreshold(1e-10);
  if (q1.rank() < 2) {
    if (why) *why = "treatment x has zero variance";
    return false;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> q2(X2);
  q2.setThreshold(1e-10);
  if (q2.rank() < 3) {
    if (why) *why = "mediator is constant or collinear with the treatment";
    return false;
  }
  const Eigen::VectorXd az = q1.solve(zv);
  const Eigen::VectorXd cy = q1.solve(yv);
  const Eigen::VectorXd by = q2.solve(yv);
  const Eigen::VectorXd resid = yv - X2 * by;
  const double yscale = std::max(1.0, yv.cwiseAbs().maxCoeff());
  if (resid.cwiseAbs().maxCoeff() <= 1e-10 * yscale) {
    if (why) *why = "outcome is an exact linear function of treatment and mediator";
    return false;
  }
  out = {az[1], by[2], cy[1], by[1]};
  return true;
}

}  // namespace detail

inline MediationResult mediate(std::span<const double> x, std::span<const double> z, std::span<const double> y,
                               int bootstrap, Rng& rng) {
  const std::size_t n = x.size();
  if (z.size() != n || y.size() != n) throw InvalidArgument("mediate: x, z, y lengths differ");
  if (n < 10) throw UndefinedInput("mediate needs at least 10 clusters");
  if (bootstrap < 1000) throw InvalidArgument("mediate needs at least 1000 bootstrap resamples");

  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  detail::PathFit f{};
  std::string why;
  if (!detail::fit_paths(x, z, y, rows, f, &why)) throw UndefinedInput("mediate: " + why);

  MediationResult r;
  r.a = f.a;
  r.b = f.b;
  r.total = f.c;
  r.direct = f.c_prime;
  r.indirect = f.a * f.b;
  r.proportion_unstable = std::abs(r.total) < 1e-6;
  r.proportion = r.indirect / r.total;
  r.bootstrap = bootstrap;

  std::vector<double> draws;
  draws.reserve(static_cast<std::size_t>(bootstrap));
  std::vector<std::size_t> sample(n);
  int attempts = 0;
  while (static_cast<int>(draws.size()) < bootstrap) {
    if (++attempts > 100 * bootstrap) throw UndefinedInput("mediate: bootstrap resamples are persistently degenerate");
    for (auto& s : sample) s = static_cast<std::size_t>(rng.index(n));
    detail::PathFit bf{};
    if (!detail::fit_paths(x, z, y, sample, bf)) continue;
    draws.push_back(bf.a * bf.b);
  }
  r.ci_low = quantile(draws, 0.025);
  r.ci_high = quantile(draws, 0.975);
  const auto below = std::count_if(draws.begin(), draws.end(), [](double d) { return d <= 0.0; });
  const auto above = std::count_if(draws.begin(), draws.end(), [](double d) { return d >= 0.0; });
  // Add-one form so a resample set that never crosses zero reports p = 2/(B+1), not 0.
  r.p_value = std::min(1.0, 2.0 * static_cast<double>(1 + std::min(below, above)) / static_cast<double>(1 + bootstrap));
  return r;
}

}  // namespace swbnet::stats
