#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gvgap/common/error.hpp"

namespace gvgap::stats {

/// Offsets (weeks) with their own indicator; 0 is the baseline.
inline constexpr std::array<int, 6> kOffsets{-5, -3, -1, 1, 3, 5};

enum class NoiseMethod { random_noise, ranked_noise };

std::string to_string(NoiseMethod m);
NoiseMethod noise_method_from(const std::string& s);

/// One Billboard verification outcome: did the model reject the corrupted
/// statement.
struct BillboardOutcome {
  int year = 0;
  NoiseMethod method = NoiseMethod::random_noise;
  int offset = 0;
  bool rejected = false;
};

struct Design {
  std::vector<std::string> names;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

/// Columns: intercept, year (raw), ranked, then one indicator per kOffsets
/// entry. Offsets outside kOffsets and 0 throw PreconditionError.
Design build_design_matrix(const std::vector<BillboardOutcome>& outcomes);

enum class FitStatus { converged, max_iterations, separation, singular };
std::string to_string(FitStatus s);

struct FitOptions {
  double tolerance = 1e-10;
  int max_iter = 100;
  /// Use the OpenMP information kernel (the serial one otherwise).
  bool parallel = true;
};

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::VectorXd se;  // inverse observed information
  Eigen::VectorXd z;
  Eigen::VectorXd p;
  double loglik = 0.0;
  double loglik_null = 0.0;
  double pseudo_r2 = 0.0;  // McFadden
  FitStatus status = FitStatus::converged;
  int iterations = 0;
  std::size_t n = 0;
  std::string diagnostics;
  bool ok() const { return status == FitStatus::converged; }
};

/// Bernoulli maximum likelihood by iteratively reweighted least squares
/// with step halving. Non-intercept columns are centered on a working scale
/// when an all-ones column exists; estimates and covariance are mapped back
/// before returning.
FitResult fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> names = {},
                       const FitOptions& options = {});
FitResult fit_logistic(const Design& d, const FitOptions& options = {});

/// X'WX and X'Wz accumulated over rows.
void accumulate_information(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, const Eigen::VectorXd& z,
                            Eigen::MatrixXd& xtwx, Eigen::VectorXd& xtwz);
/// Single-threaded reference for accumulate_information.
void accumulate_information_serial(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, const Eigen::VectorXd& z,
                                   Eigen::MatrixXd& xtwx, Eigen::VectorXd& xtwz);

/// Two-sided Fisher exact test on [[a, b], [c, d]]: total probability of the
/// tables with the observed margins that are no more likely than the
/// observed one. Throws PreconditionError when a margin is zero.
double fisher_exact(long a, long b, long c, long d);

struct Table2x2 {
  long a = 0, b = 0, c = 0, d = 0;
};

/// nullopt where a margin is zero.
std::vector<std::optional<double>> fisher_exact_batch(const std::vector<Table2x2>& tables);
std::vector<std::optional<double>> fisher_exact_batch_serial(const std::vector<Table2x2>& tables);

/// "***" p<0.001, "**" p<0.01, "*" p<0.05.
std::string stars(double p);

/// Coefficient (SE) per predictor with stars, then Observations and
/// McFadden pseudo R-squared, one column per labelled fit.
std::string render_regression_table(const std::vector<std::pair<std::string, FitResult>>& fits);

}  // namespace gvgap::stats
