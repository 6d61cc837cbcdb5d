#include "fovea/dirichlet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "fovea/error.hpp"

namespace fovea {

namespace {

using boost::math::digamma;
using boost::math::trigamma;

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidInput(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                       std::to_string(b) + ")");
  }
}

}  // namespace

DirichletParams::DirichletParams(std::vector<double> concentration) : alpha_(std::move(concentration)) {
  if (alpha_.size() < 2) {
    throw InvalidInput("DirichletParams: need at least two components");
  }
  for (double a : alpha_) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw InvalidInput("DirichletParams: concentration must be finite and > 0");
    }
  }
}

DirichletParams DirichletParams::uniform(std::size_t size, double value) {
  return DirichletParams(std::vector<double>(size, value));
}

double DirichletParams::sum() const { return std::accumulate(alpha_.begin(), alpha_.end(), 0.0); }

ScoreVector::ScoreVector(std::vector<double> scores) : scores_(std::move(scores)) {
  if (scores_.size() < 2) {
    throw InvalidInput("ScoreVector: need at least two components");
  }
  double total = 0.0;
  for (double s : scores_) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw InvalidInput("ScoreVector: components must be finite and >= 0");
    }
    total += s;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    throw InvalidInput("ScoreVector: components sum to " + std::to_string(total) + ", expected 1");
  }
}

ScoreVector ScoreVector::normalized(std::vector<double> raw) {
  double total = 0.0;
  for (double s : raw) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw InvalidInput("ScoreVector: components must be finite and >= 0");
    }
    total += s;
  }
  if (!(total > 0.0)) {
    throw InvalidInput("ScoreVector: cannot normalize a vector with zero sum");
  }
  for (double& s : raw) s /= total;
  return ScoreVector(std::move(raw));
}

std::vector<double> clamp_to_interior(std::span<const double> scores) {
  std::vector<double> out(scores.begin(), scores.end());
  double total = 0.0;
  for (double& s : out) {
    s = std::max(s, kScoreFloor);
    total += s;
  }
  for (double& s : out) s /= total;
  return out;
}

double log_pdf(std::span<const double> s, const DirichletParams& a) {
  require_same_size(s.size(), a.size(), "log_pdf");
  const auto x = clamp_to_interior(s);
  double result = std::lgamma(a.sum());
  for (std::size_t k = 0; k < a.size(); ++k) {
    result += (a[k] - 1.0) * std::log(x[k]) - std::lgamma(a[k]);
  }
  return result;
}

double log_pdf(const ScoreVector& s, const DirichletParams& a) { return log_pdf(s.values(), a); }

ScoreVector mean(const DirichletParams& a) {
  const double total = a.sum();
  std::vector<double> p(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) p[k] = a[k] / total;
  return ScoreVector::normalized(std::move(p));
}

Eigen::MatrixXd categorical_covariance(const DirichletParams& a) {
  const auto p = mean(a);
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      cov(i, j) = i == j ? p[i] * (1.0 - p[i]) : -p[i] * p[j];
    }
  }
  return cov;
}

double kl_divergence(const DirichletParams& a, const DirichletParams& b) {
  require_same_size(a.size(), b.size(), "kl_divergence");
  const double a0 = a.sum();
  const double b0 = b.sum();
  // Differences are formed pairwise so that identical inputs cancel exactly.
  double result = std::lgamma(a0) - std::lgamma(b0);
  const double psi_a0 = digamma(a0);
  for (std::size_t k = 0; k < a.size(); ++k) {
    result += std::lgamma(b[k]) - std::lgamma(a[k]);
    result += (a[k] - b[k]) * (digamma(a[k]) - psi_a0);
  }
  return std::max(result, 0.0);
}

ScoreVector sample(const DirichletParams& a, Rng& rng) {
  std::vector<double> draws(a.size());
  double total = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    std::gamma_distribution<double> gamma(a[k], 1.0);
    draws[k] = gamma(rng);
    total += draws[k];
  }
  if (!(total > 0.0)) {
    // Every variate underflowed (only possible for tiny concentrations).
    std::fill(draws.begin(), draws.end(), 0.0);
    draws[static_cast<std::size_t>(std::max_element(a.values().begin(), a.values().end()) -
                                   a.values().begin())] = 1.0;
    return ScoreVector(std::move(draws));
  }
  return ScoreVector::normalized(std::move(draws));
}

DirichletStats::DirichletStats(std::size_t dim) : sum(dim, 0.0), sum_sq(dim, 0.0), sum_log(dim, 0.0) {
  if (dim < 2) throw InvalidInput("DirichletStats: need at least two components");
}

void DirichletStats::add(std::span<const double> scores) {
  require_same_size(scores.size(), dim(), "DirichletStats::add");
  const auto x = clamp_to_interior(scores);
  for (std::size_t k = 0; k < x.size(); ++k) {
    sum[k] += x[k];
    sum_sq[k] += x[k] * x[k];
    sum_log[k] += std::log(x[k]);
  }
  ++count;
}

double mean_log_likelihood(const DirichletParams& a, const DirichletStats& stats) {
  require_same_size(a.size(), stats.dim(), "mean_log_likelihood");
  const double n = static_cast<double>(stats.count);
  double ll = std::lgamma(a.sum());
  for (std::size_t k = 0; k < a.size(); ++k) {
    ll += -std::lgamma(a[k]) + (a[k] - 1.0) * stats.sum_log[k] / n;
  }
  return ll;
}

double inverse_digamma(double y) {
  // Minka's initialization followed by Newton steps.
  double x = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y - digamma(1.0));
  for (int i = 0; i < 8; ++i) {
    x -= (digamma(x) - y) / trigamma(x);
  }
  return x;
}

namespace {

// Moment matching: precision estimated from each component's first two
// moments, averaged over components.
std::vector<double> moment_match(const DirichletStats& stats) {
  const double n = static_cast<double>(stats.count);
  const std::size_t dim = stats.dim();
  double precision_sum = 0.0;
  int used = 0;
  for (std::size_t k = 0; k < dim; ++k) {
    const double m1 = stats.sum[k] / n;
    const double m2 = stats.sum_sq[k] / n;
    const double var = m2 - m1 * m1;
    if (var > 0.0) {
      const double s = (m1 - m2) / var;
      if (s > 0.0 && std::isfinite(s)) {
        precision_sum += s;
        ++used;
      }
    }
  }
  const double precision = used > 0 ? precision_sum / used : static_cast<double>(dim);
  std::vector<double> alpha(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    alpha[k] = std::max(precision * stats.sum[k] / n, 1e-3);
  }
  return alpha;
}

}  // namespace

FitResult fit_mle(const DirichletStats& stats, const FitOptions& options) {
  if (stats.count < 2) {
    throw InvalidInput("fit_mle: need at least two samples");
  }
  const std::size_t dim = stats.dim();
  const double n = static_cast<double>(stats.count);
  std::vector<double> mean_log(dim);
  for (std::size_t k = 0; k < dim; ++k) mean_log[k] = stats.sum_log[k] / n;

  std::vector<double> alpha = moment_match(stats);
  FitResult result{DirichletParams(alpha), false, 0, {}};
  result.log_likelihood.push_back(mean_log_likelihood(result.params, stats));

  std::vector<double> next(dim);
  for (int it = 1; it <= options.max_iterations; ++it) {
    const double psi_total = digamma(std::accumulate(alpha.begin(), alpha.end(), 0.0));
    double max_rel_change = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      next[k] = inverse_digamma(psi_total + mean_log[k]);
      max_rel_change = std::max(max_rel_change, std::abs(next[k] - alpha[k]) / alpha[k]);
    }
    alpha.swap(next);
    result.params = DirichletParams(alpha);
    result.iterations = it;
    result.log_likelihood.push_back(mean_log_likelihood(result.params, stats));
    if (max_rel_change < options.tolerance) {
      result.converged = true;
      break;
    }
  }
  return result;
}

FitResult fit_mle(std::span<const ScoreVector> samples, const FitOptions& options) {
  if (samples.size() < 2) {
    throw InvalidInput("fit_mle: need at least two samples");
  }
  DirichletStats stats(samples.front().size());
  for (const auto& s : samples) stats.add(s.values());
  return fit_mle(stats, options);
}

}  // namespace fovea
