#include "gvgap/stats/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

namespace gvgap::stats {

std::string to_string(NoiseMethod m) { return m == NoiseMethod::ranked_noise ? "ranked_noise" : "random_noise"; }

NoiseMethod noise_method_from(const std::string& s) {
  if (s == "ranked_noise") return NoiseMethod::ranked_noise;
  if (s == "random_noise") return NoiseMethod::random_noise;
  throw ParseError("unknown noise method '" + s + "'");
}

std::string to_string(FitStatus s) {
  switch (s) {
    case FitStatus::converged: return "converged";
    case FitStatus::max_iterations: return "max_iterations";
    case FitStatus::separation: return "separation";
    case FitStatus::singular: return "singular";
  }
  return "?";
}

Design build_design_matrix(const std::vector<BillboardOutcome>& outcomes) {
  Design d;
  d.names = {"intercept", "year", "ranked"};
  for (int k : kOffsets) d.names.push_back(std::string("offset_") + (k > 0 ? "+" : "") + std::to_string(k));
  const auto n = static_cast<Eigen::Index>(outcomes.size());
  d.x = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(d.names.size()));
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = outcomes[static_cast<std::size_t>(i)];
    d.x(i, 0) = 1.0;
    d.x(i, 1) = o.year;
    d.x(i, 2) = o.method == NoiseMethod::ranked_noise ? 1.0 : 0.0;
    if (o.offset != 0) {
      const auto it = std::find(kOffsets.begin(), kOffsets.end(), o.offset);
      if (it == kOffsets.end()) {
        throw PreconditionError("offset " + std::to_string(o.offset) + " is not one of 0, +-1, +-3, +-5");
      }
      d.x(i, 3 + (it - kOffsets.begin())) = 1.0;
    }
    d.y(i) = o.rejected ? 1.0 : 0.0;
  }
  return d;
}

// ------------------------------------------------------------- kernels

void accumulate_information_serial(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, const Eigen::VectorXd& z,
                                   Eigen::MatrixXd& xtwx, Eigen::VectorXd& xtwz) {
  const auto p = x.cols();
  xtwx = Eigen::MatrixXd::Zero(p, p);
  xtwz = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index a = 0; a < p; ++a) {
      const double wa = w(i) * x(i, a);
      xtwz(a) += wa * z(i);
      for (Eigen::Index b = 0; b <= a; ++b) xtwx(a, b) += wa * x(i, b);
    }
  }
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = a + 1; b < p; ++b) xtwx(a, b) = xtwx(b, a);
  }
}

void accumulate_information(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, const Eigen::VectorXd& z,
                            Eigen::MatrixXd& xtwx, Eigen::VectorXd& xtwz) {
  const auto p = x.cols();
  const auto n = x.rows();
  xtwx = Eigen::MatrixXd::Zero(p, p);
  xtwz = Eigen::VectorXd::Zero(p);
#pragma omp parallel
  {
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd local_z = Eigen::VectorXd::Zero(p);
#pragma omp for schedule(static) nowait
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index a = 0; a < p; ++a) {
        const double wa = w(i) * x(i, a);
        local_z(a) += wa * z(i);
        for (Eigen::Index b = 0; b <= a; ++b) local(a, b) += wa * x(i, b);
      }
    }
#pragma omp critical(gvgap_information)
    {
      xtwx += local;
      xtwz += local_z;
    }
  }
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = a + 1; b < p; ++b) xtwx(a, b) = xtwx(b, a);
  }
}

// ----------------------------------------------------------------- IRLS

namespace {

double log1pexp(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - log1pexp(eta(i));
  return ll;
}

double sigmoid(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

std::optional<Eigen::Index> intercept_column(const Eigen::MatrixXd& x) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if ((x.col(j).array() == 1.0).all()) return j;
  }
  return std::nullopt;
}

}  // namespace

FitResult fit_logistic(const Design& d, const FitOptions& options) { return fit_logistic(d.x, d.y, d.names, options); }

FitResult fit_logistic(const Eigen::MatrixXd& x_raw, const Eigen::VectorXd& y, std::vector<std::string> names,
                       const FitOptions& options) {
  const auto n = x_raw.rows();
  const auto p = x_raw.cols();
  if (p == 0) throw PreconditionError("logistic fit needs at least one predictor column");
  if (y.size() != n) throw PreconditionError("outcome length does not match the design rows");
  if (n < p) throw PreconditionError("logistic fit needs rows >= columns");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw PreconditionError("outcomes must be 0 or 1");
  }
  if (names.empty()) {
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  }
  if (static_cast<Eigen::Index>(names.size()) != p) throw PreconditionError("one name per column required");

  FitResult r;
  r.names = names;
  r.n = static_cast<std::size_t>(n);
  const double ybar = y.mean();
  r.loglik_null = (ybar <= 0.0 || ybar >= 1.0)
                      ? 0.0
                      : static_cast<double>(n) * (ybar * std::log(ybar) + (1 - ybar) * std::log(1 - ybar));

  // Working scale: center non-intercept columns; beta_raw = A * beta_c.
  Eigen::MatrixXd x = x_raw;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(p, p);
  if (const auto ic = intercept_column(x_raw)) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (j == *ic) continue;
      const double m = x_raw.col(j).mean();
      x.col(j).array() -= m;
      a(*ic, j) = -m;
    }
  }

  auto info = [&](const Eigen::VectorXd& w, const Eigen::VectorXd& z, Eigen::MatrixXd& h, Eigen::VectorXd& g) {
    if (options.parallel) {
      accumulate_information(x, w, z, h, g);
    } else {
      accumulate_information_serial(x, w, z, h, g);
    }
  };

  // Rank check on the unweighted cross-product.
  {
    Eigen::MatrixXd h;
    Eigen::VectorXd g;
    info(Eigen::VectorXd::Ones(n), Eigen::VectorXd::Zero(n), h, g);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    const double hi = es.eigenvalues().maxCoeff(), lo = es.eigenvalues().minCoeff();
    if (!(hi > 0) || lo <= hi * 1e-13) {
      r.status = FitStatus::singular;
      r.diagnostics = "design matrix is rank deficient (eigenvalue ratio " + std::to_string(lo / hi) + ")";
      r.beta = r.se = r.z = r.p = Eigen::VectorXd::Constant(p, std::nan(""));
      return r;
    }
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = x * beta;
  double ll = loglik(eta, y);
  Eigen::MatrixXd h;
  bool converged = false;
  int it = 0;
  for (; it < options.max_iter && !converged; ++it) {
    Eigen::VectorXd w(n), resid(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = sigmoid(eta(i));
      w(i) = std::max(mu * (1.0 - mu), 1e-300);
      resid(i) = (y(i) - mu) / w(i);
    }
    // Newton step solves (X'WX) delta = X'W (y - mu)/w.
    Eigen::VectorXd g;
    info(w, resid, h, g);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    Eigen::VectorXd step = ldlt.solve(g);
    if (!step.allFinite()) break;
    // Step halving keeps the likelihood monotone.
    double t = 1.0;
    Eigen::VectorXd next, next_eta;
    double next_ll = -INFINITY;
    for (int half = 0; half < 30; ++half) {
      next = beta + t * step;
      next_eta = x * next;
      next_ll = loglik(next_eta, y);
      if (next_ll >= ll - 1e-12 * std::abs(ll)) break;
      t *= 0.5;
    }
    converged = (next - beta).cwiseAbs().maxCoeff() < options.tolerance;
    beta = next;
    eta = next_eta;
    ll = next_ll;
  }
  r.iterations = it;
  r.loglik = ll;

  // Observed information at the estimate.
  Eigen::VectorXd w(n);
  std::size_t extreme = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = sigmoid(eta(i));
    w(i) = mu * (1.0 - mu);
    if (mu < 1e-8 || mu > 1.0 - 1e-8) ++extreme;
  }
  Eigen::VectorXd g;
  info(w, Eigen::VectorXd::Zero(n), h, g);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  const bool invertible = ldlt.info() == Eigen::Success && ldlt.isPositive() &&
                          ldlt.vectorD().minCoeff() > 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff());

  const bool separated = extreme > 0 && (!converged || !invertible || beta.cwiseAbs().maxCoeff() > 15.0);
  if (separated) {
    r.status = FitStatus::separation;
    r.diagnostics = std::to_string(extreme) + " of " + std::to_string(n) +
                    " fitted probabilities are numerically 0 or 1; the likelihood has no finite maximum";
  } else if (!converged) {
    r.status = invertible ? FitStatus::max_iterations : FitStatus::singular;
    r.diagnostics = invertible ? "no convergence within " + std::to_string(options.max_iter) + " iterations"
                               : "information matrix became singular";
  } else if (!invertible) {
    r.status = FitStatus::singular;
    r.diagnostics = "information matrix is singular at the estimate";
  }

  r.beta = a * beta;
  if (invertible) {
    const Eigen::MatrixXd cov_c = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd cov = a * cov_c * a.transpose();
    r.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  } else {
    r.se = Eigen::VectorXd::Constant(p, std::nan(""));
  }
  r.z = r.beta.cwiseQuotient(r.se);
  r.p.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) r.p(j) = boost::math::erfc(std::abs(r.z(j)) / std::sqrt(2.0));
  r.pseudo_r2 = r.loglik_null < 0.0 ? 1.0 - r.loglik / r.loglik_null : 0.0;
  return r;
}

// --------------------------------------------------------------- Fisher

double fisher_exact(long a, long b, long c, long d) {
  if (a < 0 || b < 0 || c < 0 || d < 0) throw PreconditionError("Fisher test cells must be non-negative");
  const long r1 = a + b, r2 = c + d, c1 = a + c, c2 = b + d;
  if (r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0) {
    throw PreconditionError("Fisher test undefined: a row or column margin is zero");
  }
  const long n = r1 + r2;
  const double base = std::lgamma(r1 + 1.0) + std::lgamma(r2 + 1.0) + std::lgamma(c1 + 1.0) + std::lgamma(c2 + 1.0) -
                      std::lgamma(n + 1.0);
  auto logp = [&](long x) {
    return base - std::lgamma(x + 1.0) - std::lgamma(r1 - x + 1.0) - std::lgamma(c1 - x + 1.0) -
           std::lgamma(r2 - c1 + x + 1.0);
  };
  const long lo = std::max(0L, c1 - r2), hi = std::min(r1, c1);
  const double observed = logp(a);
  // Relative slack so that mathematically tied tables count despite rounding.
  const double threshold = observed + 1e-7;
  double p = 0.0;
  for (long x = lo; x <= hi; ++x) {
    const double lp = logp(x);
    if (lp <= threshold) p += std::exp(lp);
  }
  return std::min(1.0, p);
}

std::vector<std::optional<double>> fisher_exact_batch_serial(const std::vector<Table2x2>& tables) {
  std::vector<std::optional<double>> out(tables.size());
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto& t = tables[i];
    if (t.a + t.b == 0 || t.c + t.d == 0 || t.a + t.c == 0 || t.b + t.d == 0) continue;
    out[i] = fisher_exact(t.a, t.b, t.c, t.d);
  }
  return out;
}

std::vector<std::optional<double>> fisher_exact_batch(const std::vector<Table2x2>& tables) {
  std::vector<std::optional<double>> out(tables.size());
  const auto n = static_cast<std::ptrdiff_t>(tables.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& t = tables[static_cast<std::size_t>(i)];
    if (t.a + t.b == 0 || t.c + t.d == 0 || t.a + t.c == 0 || t.b + t.d == 0) continue;
    out[static_cast<std::size_t>(i)] = fisher_exact(t.a, t.b, t.c, t.d);
  }
  return out;
}

// --------------------------------------------------------------- output

std::string stars(double p) {
  if (!(p == p)) return "";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

namespace {

std::string label_for(const std::string& name) {
  if (name == "intercept") return "Intercept";
  if (name == "year") return "Fact Year";
  if (name == "ranked") return "Ranked Noise";
  if (name.rfind("offset_", 0) == 0) return "Offset " + name.substr(7);
  return name;
}

std::string coef_cell(double b, double se, double p) {
  char buf[96];
  // Small coefficients (the year slope) need more digits than the rest.
  const bool small = std::abs(b) < 0.1 && std::abs(b) > 0;
  std::snprintf(buf, sizeof buf, small ? "%.3f%-3s (%.4f)" : "%.2f%-3s (%.2f)", b, stars(p).c_str(), se);
  return buf;
}

}  // namespace

std::string render_regression_table(const std::vector<std::pair<std::string, FitResult>>& fits) {
  if (fits.empty()) return {};
  const auto& names = fits.front().second.names;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"Predictor"};
  for (const auto& [label, _] : fits) head.push_back(label + " Coef. (SE)");
  rows.push_back(head);
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::vector<std::string> row{label_for(names[j])};
    for (const auto& [_, f] : fits) {
      const auto jj = static_cast<Eigen::Index>(j);
      row.push_back(j < f.names.size() ? coef_cell(f.beta(jj), f.se(jj), f.p(jj)) : "");
    }
    rows.push_back(row);
  }
  std::vector<std::string> obs{"Observations"}, r2{"Pseudo R2 (McFadden)"}, status{"Status"};
  for (const auto& [_, f] : fits) {
    obs.push_back(std::to_string(f.n));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", f.pseudo_r2);
    r2.push_back(buf);
    status.push_back(to_string(f.status));
  }
  rows.push_back(obs);
  rows.push_back(r2);
  rows.push_back(status);

  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "  " : "") << row[i] << std::string(width[i] - row[i].size(), ' ');
    }
    out << '\n';
  }
  out << "* p<0.05, ** p<0.01, *** p<0.001; SEs from the observed information\n";
  return out.str();
}

}  // namespace gvgap::stats
