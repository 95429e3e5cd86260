#include "reltransport/glm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/QR>

#include "reltransport/error.hpp"

namespace reltransport::glm {

namespace {

constexpr const char* kModule = "glm";
constexpr int kMaxHalvings = 20;

[[noreturn]] void fail(ErrorCode code, const std::string& message) {
  throw Error(code, kModule, message);
}

double link_fn(Link link, double mu) {
  switch (link) {
    case Link::identity: return mu;
    case Link::logit: return std::log(mu / (1.0 - mu));
    case Link::log: return std::log(mu);
  }
  return mu;
}

double dmu_deta(Link link, double mu) {
  switch (link) {
    case Link::identity: return 1.0;
    case Link::logit: return mu * (1.0 - mu);
    case Link::log: return mu;
  }
  return 1.0;
}

double variance(Family family, double mu) {
  switch (family) {
    case Family::gaussian: return 1.0;
    case Family::bernoulli: return mu * (1.0 - mu);
    case Family::poisson: return mu;
  }
  return 1.0;
}

bool valid_mean(Family family, double mu) {
  if (!std::isfinite(mu)) return false;
  switch (family) {
    case Family::gaussian: return true;
    case Family::bernoulli: return mu > 0.0 && mu < 1.0;
    case Family::poisson: return mu > 0.0;
  }
  return false;
}

bool near_boundary(Family family, double mu) {
  switch (family) {
    case Family::gaussian: return false;
    case Family::bernoulli: return mu < 1e-10 || mu > 1.0 - 1e-10;
    case Family::poisson: return mu < 1e-10;
  }
  return false;
}

double loglik_term(Family family, double y, double mu) {
  switch (family) {
    case Family::gaussian: return -0.5 * (y - mu) * (y - mu);
    case Family::bernoulli:
      return (y > 0.0 ? y * std::log(mu) : 0.0) +
             (y < 1.0 ? (1.0 - y) * std::log1p(-mu) : 0.0);
    case Family::poisson:
      return (y > 0.0 ? y * std::log(mu) : 0.0) - mu - std::lgamma(y + 1.0);
  }
  return 0.0;
}

Eigen::MatrixXd design(const ModelSpec& spec, const Eigen::MatrixXd& covariates) {
  if (!spec.include_intercept) return covariates;
  Eigen::MatrixXd x(covariates.rows(), covariates.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(covariates.cols()) = covariates;
  return x;
}

Eigen::VectorXd weights_of(const GlmData& data) {
  if (data.weights.size() == 0) return Eigen::VectorXd::Ones(data.response.size());
  return data.weights;
}

void check_inputs(const ModelSpec& spec, const GlmData& data, const Eigen::VectorXd& w) {
  spec.validate();
  const auto n = data.response.size();
  if (data.covariates.rows() != n || w.size() != n)
    fail(ErrorCode::dimension_mismatch, "covariate, response and weight lengths differ");
  if (data.covariates.cols() != static_cast<Eigen::Index>(spec.covariate_names.size()))
    fail(ErrorCode::dimension_mismatch,
         "design has " + std::to_string(data.covariates.cols()) + " columns, spec names " +
             std::to_string(spec.covariate_names.size()));
  bool any_positive = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(w[i]) || w[i] < 0.0)
      fail(ErrorCode::invalid_argument, "weights must be finite and nonnegative");
    if (w[i] > 0.0) any_positive = true;
    const double y = data.response[i];
    if (!std::isfinite(y)) fail(ErrorCode::invalid_outcome, "non-finite response");
    if (spec.family == Family::bernoulli && y != 0.0 && y != 1.0)
      fail(ErrorCode::invalid_outcome, "bernoulli response outside {0,1}");
    if (spec.family == Family::poisson && y < 0.0)
      fail(ErrorCode::invalid_outcome, "poisson response is negative");
  }
  if (!any_positive) fail(ErrorCode::empty_stratum, "no rows with positive weight");
  if (!data.covariates.allFinite()) fail(ErrorCode::invalid_argument, "non-finite covariate");
}

void check_rank(const Eigen::MatrixXd& x, const Eigen::VectorXd& w) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] > 0.0) keep.push_back(i);
  if (static_cast<Eigen::Index>(keep.size()) < x.cols())
    fail(ErrorCode::singular_design, "singular design: fewer positive-weight rows (" +
                                         std::to_string(keep.size()) + ") than coefficients (" +
                                         std::to_string(x.cols()) + ")");
  if (x.cols() == 0) return;
  Eigen::MatrixXd sub = x(keep, Eigen::all);
  for (Eigen::Index j = 0; j < sub.cols(); ++j) {
    const double norm = sub.col(j).norm();
    if (norm == 0.0) fail(ErrorCode::singular_design, "singular design: all-zero column");
    sub.col(j) /= norm;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
  qr.setThreshold(1e-10);
  if (qr.rank() < sub.cols())
    fail(ErrorCode::singular_design, "singular design: rank " + std::to_string(qr.rank()) +
                                         " < " + std::to_string(sub.cols()) + " columns");
}

struct State {
  Eigen::VectorXd beta;
  Eigen::VectorXd eta;
  Eigen::VectorXd mu;
  double loglik = 0.0;
  bool valid = false;
};

State evaluate(const ModelSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               const Eigen::VectorXd& w, Eigen::VectorXd beta) {
  State st;
  st.beta = std::move(beta);
  st.eta = x * st.beta;
  st.mu.resize(st.eta.size());
  st.valid = true;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < st.eta.size(); ++i) {
    st.mu[i] = inverse_link(spec.link, st.eta[i]);
    if (w[i] == 0.0) continue;
    if (!valid_mean(spec.family, st.mu[i])) {
      st.valid = false;
      return st;
    }
    ll += w[i] * loglik_term(spec.family, y[i], st.mu[i]);
  }
  st.loglik = ll;
  st.valid = std::isfinite(ll);
  return st;
}

Eigen::VectorXd weighted_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& working_w,
                               const Eigen::VectorXd& z) {
  const Eigen::VectorXd root = working_w.cwiseSqrt();
  Eigen::MatrixXd xw = root.asDiagonal() * x;
  Eigen::VectorXd zw = root.cwiseProduct(z);
  return xw.colPivHouseholderQr().solve(zw);
}

Eigen::VectorXd starting_values(const ModelSpec& spec, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const double ybar = w.dot(y) / w.sum();
  if ((spec.family == Family::bernoulli && (ybar <= 0.0 || ybar >= 1.0)) ||
      (spec.family == Family::poisson && ybar <= 0.0))
    throw NonConvergenceError(true, Eigen::VectorXd::Zero(x.cols()), 0,
                              "boundary non-convergence: degenerate outcome (weighted mean " +
                                  std::to_string(ybar) + ")");
  if (spec.include_intercept) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
    if (spec.link != Link::identity && ybar <= 0.0)
      throw NonConvergenceError(true, beta, 0,
                                "boundary non-convergence: log link with nonpositive mean outcome");
    beta[0] = link_fn(spec.link, ybar);
    return beta;
  }
  // Without an intercept, regress link(mustart) on the design once.
  Eigen::VectorXd eta0(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double mu = y[i];
    if (spec.family == Family::bernoulli) mu = (y[i] + 0.5) / 2.0;
    if (spec.family == Family::poisson) mu = y[i] + 0.1;
    if (spec.link != Link::identity && mu <= 0.0) mu = std::max(ybar, 0.1);
    eta0[i] = link_fn(spec.link, mu);
  }
  return weighted_solve(x, w, eta0);
}

}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::gaussian: return "gaussian";
    case Family::bernoulli: return "bernoulli";
    case Family::poisson: return "poisson";
  }
  return "gaussian";
}

std::string_view to_string(Link link) {
  switch (link) {
    case Link::identity: return "identity";
    case Link::logit: return "logit";
    case Link::log: return "log";
  }
  return "identity";
}

Family parse_family(std::string_view text) {
  if (text == "gaussian") return Family::gaussian;
  if (text == "bernoulli" || text == "binomial") return Family::bernoulli;
  if (text == "poisson") return Family::poisson;
  fail(ErrorCode::invalid_argument, "unknown family '" + std::string(text) + "'");
}

Link parse_link(std::string_view text) {
  if (text == "identity") return Link::identity;
  if (text == "logit") return Link::logit;
  if (text == "log") return Link::log;
  fail(ErrorCode::invalid_argument, "unknown link '" + std::string(text) + "'");
}

Link canonical_link(Family family) {
  switch (family) {
    case Family::gaussian: return Link::identity;
    case Family::bernoulli: return Link::logit;
    case Family::poisson: return Link::log;
  }
  return Link::identity;
}

void ModelSpec::validate() const {
  if (family == Family::bernoulli && link == Link::identity)
    fail(ErrorCode::invalid_argument, "bernoulli family with identity link is not supported");
  if (link == Link::logit && family != Family::bernoulli)
    fail(ErrorCode::invalid_argument, "logit link requires the bernoulli family");
  if (max_iter < 1) fail(ErrorCode::invalid_argument, "max_iter must be positive");
  if (!(tol > 0.0)) fail(ErrorCode::invalid_argument, "tol must be positive");
  std::set<std::string> seen;
  for (const auto& name : covariate_names) {
    if (name.empty()) fail(ErrorCode::invalid_argument, "empty covariate name");
    if (name == kInterceptName)
      fail(ErrorCode::invalid_argument, "covariate name collides with the intercept");
    if (!seen.insert(name).second)
      fail(ErrorCode::invalid_argument, "duplicate covariate name '" + name + "'");
  }
  if (width() == 0) fail(ErrorCode::invalid_argument, "model has no coefficients");
}

double inverse_link(Link link, double eta) {
  switch (link) {
    case Link::identity: return eta;
    case Link::logit:
      if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
      else {
        const double e = std::exp(eta);
        return e / (1.0 + e);
      }
    case Link::log: return std::exp(eta);
  }
  return eta;
}

std::vector<std::string> FittedModel::coefficient_names() const {
  std::vector<std::string> names;
  if (spec.include_intercept) names.emplace_back(kInterceptName);
  names.insert(names.end(), spec.covariate_names.begin(), spec.covariate_names.end());
  return names;
}

double FittedModel::linear_predictor(std::span<const double> covariates) const {
  if (covariates.size() != spec.covariate_names.size())
    fail(ErrorCode::dimension_mismatch,
         "expected " + std::to_string(spec.covariate_names.size()) + " covariates, got " +
             std::to_string(covariates.size()));
  Eigen::Index k = 0;
  double eta = spec.include_intercept ? coefficients[k++] : 0.0;
  for (double v : covariates) eta += coefficients[k++] * v;
  return eta;
}

double FittedModel::predict_mean(std::span<const double> covariates) const {
  const double mu = inverse_link(spec.link, linear_predictor(covariates));
  if (!std::isfinite(mu)) fail(ErrorCode::invalid_argument, "non-finite predicted mean");
  return mu;
}

Eigen::VectorXd FittedModel::predict_means(const Eigen::MatrixXd& covariates) const {
  if (covariates.cols() != static_cast<Eigen::Index>(spec.covariate_names.size()))
    fail(ErrorCode::dimension_mismatch,
         "expected " + std::to_string(spec.covariate_names.size()) + " covariate columns, got " +
             std::to_string(covariates.cols()));
  Eigen::VectorXd eta = covariates * coefficients.tail(covariates.cols());
  if (spec.include_intercept) eta.array() += coefficients[0];
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    mu[i] = inverse_link(spec.link, eta[i]);
    if (!std::isfinite(mu[i])) fail(ErrorCode::invalid_argument, "non-finite predicted mean");
  }
  return mu;
}

FittedModel fit_glm(const ModelSpec& spec, const GlmData& data) {
  const Eigen::VectorXd w = weights_of(data);
  check_inputs(spec, data, w);
  const Eigen::MatrixXd x = design(spec, data.covariates);
  const Eigen::VectorXd& y = data.response;
  check_rank(x, w);

  State st = evaluate(spec, x, y, w, starting_values(spec, x, y, w));
  if (!st.valid)
    throw NonConvergenceError(true, st.beta, 0,
                              "boundary non-convergence: starting values give invalid means");

  FittedModel fit;
  fit.spec = spec;
  fit.n_obs = static_cast<std::size_t>((w.array() > 0.0).count());

  Eigen::VectorXd working_w(y.size());
  Eigen::VectorXd z(y.size());
  for (int iter = 1; iter <= spec.max_iter; ++iter) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double mu = st.mu[i];
      const double d = dmu_deta(spec.link, mu);
      if (w[i] == 0.0 || d == 0.0) {
        working_w[i] = 0.0;
        z[i] = 0.0;
        continue;
      }
      working_w[i] = w[i] * d * d / variance(spec.family, mu);
      z[i] = (y[i] - mu) / d;
    }
    // Solve for the increment on the working residuals rather than for the
    // new coefficients, so an exact fit yields an exactly zero step.
    const Eigen::VectorXd delta = weighted_solve(x, working_w, z);
    if (!delta.allFinite())
      throw NonConvergenceError(true, st.beta, iter,
                                "boundary non-convergence: non-finite IRLS step");

    double step = 1.0;
    bool accepted = false;
    State candidate;
    const double slack = 1e-10 * (1.0 + std::abs(st.loglik));
    for (int h = 0; h <= kMaxHalvings; ++h, step *= 0.5) {
      candidate = evaluate(spec, x, y, w, st.beta + step * delta);
      if (candidate.valid && candidate.loglik >= st.loglik - slack) {
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw NonConvergenceError(
          true, st.beta, iter,
          "boundary non-convergence: step-halving exhausted after " +
              std::to_string(kMaxHalvings) + " halvings at iteration " + std::to_string(iter) +
              (spec.link == Link::log && spec.family == Family::bernoulli
                   ? "; consider the arm-specific ratio method"
                   : ""));

    const double change = (candidate.beta - st.beta).cwiseAbs().maxCoeff();
    st = std::move(candidate);
    fit.iterations = iter;
    if (step == 1.0 && change <= spec.tol) {
      fit.converged = true;
      break;
    }
  }

  if (!fit.converged) {
    bool boundary = false;
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (w[i] > 0.0 && near_boundary(spec.family, st.mu[i])) boundary = true;
    throw NonConvergenceError(boundary, st.beta, fit.iterations,
                              std::string(boundary ? "boundary " : "") +
                                  "non-convergence after " + std::to_string(spec.max_iter) +
                                  " iterations");
  }
  fit.coefficients = st.beta;
  return fit;
}

double log_likelihood(const ModelSpec& spec, const GlmData& data, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd w = weights_of(data);
  const Eigen::MatrixXd x = design(spec, data.covariates);
  const Eigen::VectorXd eta = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    ll += w[i] * loglik_term(spec.family, data.response[i], inverse_link(spec.link, eta[i]));
  return ll;
}

Eigen::VectorXd score(const ModelSpec& spec, const GlmData& data, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd w = weights_of(data);
  const Eigen::MatrixXd x = design(spec, data.covariates);
  const Eigen::VectorXd eta = x * beta;
  Eigen::VectorXd u(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double mu = inverse_link(spec.link, eta[i]);
    u[i] = w[i] * (data.response[i] - mu) / variance(spec.family, mu) * dmu_deta(spec.link, mu);
  }
  return x.transpose() * u;
}

nlohmann::json model_document(const FittedModel& model) {
  nlohmann::json doc;
  doc["family"] = std::string(to_string(model.spec.family));
  doc["link"] = std::string(to_string(model.spec.link));
  doc["intercept"] = model.spec.include_intercept;
  auto coefs = nlohmann::json::array();
  const auto names = model.coefficient_names();
  for (std::size_t k = 0; k < names.size(); ++k)
    coefs.push_back({{"name", names[k]}, {"value", model.coefficients[static_cast<Eigen::Index>(k)]}});
  doc["coefficients"] = std::move(coefs);
  doc["converged"] = model.converged;
  doc["iterations"] = model.iterations;
  if (model.n_obs) doc["n_obs"] = *model.n_obs;
  return doc;
}

FittedModel model_from_document(const nlohmann::json& doc) {
  auto bad = [](const std::string& why) {
    throw Error(ErrorCode::model_document, kModule, "malformed model document: " + why);
  };
  if (!doc.is_object()) bad("expected an object");
  if (!doc.contains("family") || !doc["family"].is_string()) bad("missing family");
  if (!doc.contains("link") || !doc["link"].is_string()) bad("missing link");
  if (!doc.contains("coefficients") || !doc["coefficients"].is_array() ||
      doc["coefficients"].empty())
    bad("missing coefficients");

  FittedModel model;
  try {
    model.spec.family = parse_family(doc["family"].get<std::string>());
    model.spec.link = parse_link(doc["link"].get<std::string>());
  } catch (const Error& e) {
    throw Error(ErrorCode::model_document, kModule, e.what());
  }
  const auto& coefs = doc["coefficients"];
  std::vector<double> values;
  for (std::size_t k = 0; k < coefs.size(); ++k) {
    const auto& c = coefs[k];
    if (!c.is_object() || !c.contains("name") || !c["name"].is_string() || !c.contains("value") ||
        !c["value"].is_number())
      bad("coefficient entries need a name and a numeric value");
    const auto name = c["name"].get<std::string>();
    if (name.empty()) bad("empty coefficient name");
    if (name == kInterceptName) {
      if (k != 0) bad("intercept must be the first coefficient");
      model.spec.include_intercept = true;
    } else {
      if (k == 0) model.spec.include_intercept = false;
      model.spec.covariate_names.push_back(name);
    }
    values.push_back(c["value"].get<double>());
  }
  if (doc.contains("intercept") && doc["intercept"].is_boolean() &&
      doc["intercept"].get<bool>() != model.spec.include_intercept)
    bad("intercept flag disagrees with the coefficient list");
  try {
    model.spec.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::model_document, kModule, e.what());
  }
  model.coefficients = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                         static_cast<Eigen::Index>(values.size()));
  model.converged = true;
  model.external = true;
  return model;
}

}  // namespace reltransport::glm
