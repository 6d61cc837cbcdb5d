#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace fovea {

/// Floor applied to score components before any logarithm is taken.
inline constexpr double kScoreFloor = 1e-6;

/// Tolerance on the unit-sum invariant of a ScoreVector.
inline constexpr double kSimplexTolerance = 1e-9;

/// Concentration parameters of a Dirichlet distribution over K+1 classes.
///
/// Holds both the per-cell map state and the per-(class, distance) likelihood
/// models. Every component is strictly positive and there are at least two.
class DirichletParams {
public:
  explicit DirichletParams(std::vector<double> concentration);
  DirichletParams(std::initializer_list<double> concentration)
      : DirichletParams(std::vector<double>(concentration)) {}

  /// [value]*size, e.g. the non-informative map prior.
  static DirichletParams uniform(std::size_t size, double value);

  std::size_t size() const { return alpha_.size(); }
  double operator[](std::size_t k) const { return alpha_[k]; }
  std::span<const double> values() const { return alpha_; }
  double sum() const;

  bool operator==(const DirichletParams&) const = default;

private:
  std::vector<double> alpha_;
};

/// Normalized categorical confidence over K+1 classes (class 0 = background).
class ScoreVector {
public:
  /// Validates nonnegativity and unit sum (within kSimplexTolerance).
  explicit ScoreVector(std::vector<double> scores);
  ScoreVector(std::initializer_list<double> scores) : ScoreVector(std::vector<double>(scores)) {}

  /// Divides by the component sum; throws if the sum is not positive or any
  /// component is negative or non-finite.
  static ScoreVector normalized(std::vector<double> raw);

  std::size_t size() const { return scores_.size(); }
  double operator[](std::size_t k) const { return scores_[k]; }
  std::span<const double> values() const { return scores_; }

  bool operator==(const ScoreVector&) const = default;

private:
  std::vector<double> scores_;
};

/// Floors every component at kScoreFloor and renormalizes.
std::vector<double> clamp_to_interior(std::span<const double> scores);

/// Log Dirichlet density at s. Scores are clamped to the simplex interior first.
double log_pdf(const ScoreVector& s, const DirichletParams& a);
double log_pdf(std::span<const double> s, const DirichletParams& a);

ScoreVector mean(const DirichletParams& a);

/// Covariance of the class indicators under a single categorical draw at the
/// mean: off-diagonal -p_i p_j, diagonal p_i (1 - p_i). Rows sum to zero.
Eigen::MatrixXd categorical_covariance(const DirichletParams& a);

/// KL(Dir(a) || Dir(b)), closed form.
double kl_divergence(const DirichletParams& a, const DirichletParams& b);

using Rng = std::mt19937_64;

/// One draw via normalized independent Gamma(a_k, 1) variates.
ScoreVector sample(const DirichletParams& a, Rng& rng);

/// Sufficient statistics of a score sample, accumulated on clamped scores.
struct DirichletStats {
  explicit DirichletStats(std::size_t dim);

  void add(std::span<const double> scores);

  std::size_t dim() const { return sum_log.size(); }
  std::size_t count = 0;
  std::vector<double> sum;
  std::vector<double> sum_sq;
  std::vector<double> sum_log;
};

struct FitOptions {
  double tolerance = 1e-7;
  int max_iterations = 1000;
};

struct FitResult {
  DirichletParams params;
  bool converged = false;
  int iterations = 0;
  /// Mean per-sample log-likelihood, starting with the initial guess.
  std::vector<double> log_likelihood;
};

/// Maximum-likelihood fit by Minka's fixed-point iteration, warm-started by
/// moment matching. Requires at least two samples.
FitResult fit_mle(std::span<const ScoreVector> samples, const FitOptions& options = {});
FitResult fit_mle(const DirichletStats& stats, const FitOptions& options = {});

/// Mean per-sample log-likelihood of params given the statistics.
double mean_log_likelihood(const DirichletParams& a, const DirichletStats& stats);

/// Inverse of the digamma function, solved by Newton's method.
double inverse_digamma(double y);

}  // namespace fovea
