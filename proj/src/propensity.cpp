#include "pdwols/propensity.hpp"

#include "pdwols/errors.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace pdwols {

namespace {

constexpr double kProbClip = 1e-6;
constexpr double kCoefTol = 1e-8;
constexpr int kMaxIter = 50;
constexpr double kSeparationBound = 30.0;  // |coefficient| past this means divergence

double bernoulli_loglik(const Eigen::VectorXd& a, const Eigen::VectorXd& eta) {
    // log L = sum a*eta - log(1+exp(eta)), with the stable log1p form
    double ll = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double e = eta(i);
        ll += a(i) * e - (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e)));
    }
    return ll;
}

Eigen::MatrixXd design_with_intercept(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                                      const std::vector<Term>& terms) {
    Eigen::MatrixXd Z(X.rows(), static_cast<Eigen::Index>(terms.size()) + 1);
    Z.col(0).setOnes();
    if (!terms.empty()) Z.rightCols(static_cast<Eigen::Index>(terms.size())) = term_matrix(terms, X, names);
    return Z;
}

}  // namespace

PropensityModel fit_logistic(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                             const Eigen::VectorXd& a, const std::vector<Term>& terms) {
    const Eigen::Index n = a.size();
    double amin = a.minCoeff(), amax = a.maxCoeff();
    if (amin == amax) throw ConfigError("fit_logistic: treatment is constant, no model fittable");
    Eigen::MatrixXd Z = design_with_intercept(X, names, terms);
    if (n < Z.cols() + 1)
        throw ConfigError("fit_logistic: " + std::to_string(n) + " rows for " +
                          std::to_string(Z.cols()) + " coefficients");

    PropensityModel model;
    model.terms = terms;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(Z.cols());
    Eigen::VectorXd eta = Z * beta;
    double ll = bernoulli_loglik(a, eta);

    int iter = 0;
    for (; iter < kMaxIter; ++iter) {
        Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
        Eigen::VectorXd s = (mu.array() * (1.0 - mu.array())).cwiseMax(1e-10);
        Eigen::MatrixXd G = Z.transpose() * s.asDiagonal() * Z;
        Eigen::VectorXd g = Z.transpose() * (a - mu);
        Eigen::VectorXd step = G.ldlt().solve(g);
        if (!step.allFinite()) break;

        // step halving keeps the log-likelihood non-decreasing
        double scale = 1.0;
        Eigen::VectorXd beta_new, eta_new;
        double ll_new = ll;
        for (int halving = 0; halving < 30; ++halving) {
            beta_new = beta + scale * step;
            eta_new = Z * beta_new;
            ll_new = bernoulli_loglik(a, eta_new);
            if (ll_new >= ll - 1e-12) break;
            scale *= 0.5;
        }
        double max_change = (scale * step).cwiseAbs().maxCoeff();
        beta = beta_new;
        eta = eta_new;
        ll = ll_new;
        model.loglik_trace.push_back(ll);
        if (beta.cwiseAbs().maxCoeff() > kSeparationBound) {
            model.separation = true;
            ++iter;
            break;
        }
        if (max_change < kCoefTol) {
            model.converged = true;
            ++iter;
            break;
        }
    }
    // non-convergence with runaway coefficients is the divergence signature
    if (!model.converged && !model.separation && beta.cwiseAbs().maxCoeff() > 10.0)
        model.separation = true;
    model.coefficients = beta;
    model.iterations = iter;
    model.log_likelihood = ll;
    return model;
}

Eigen::VectorXd predict_propensity(const PropensityModel& model, const Eigen::MatrixXd& X,
                                   const std::vector<std::string>& names) {
    Eigen::MatrixXd Z = design_with_intercept(X, names, model.terms);
    if (Z.cols() != model.coefficients.size())
        throw ConfigError("predict_propensity: design has " + std::to_string(Z.cols()) +
                          " columns, model has " + std::to_string(model.coefficients.size()));
    Eigen::VectorXd eta = Z * model.coefficients;
    return eta.unaryExpr([](double e) {
        double p = expit(e);
        return std::min(1.0 - kProbClip, std::max(kProbClip, p));
    });
}

WeightVector dwols_weights(const Eigen::VectorXd& a, const Eigen::VectorXd& pi) {
    if (a.size() != pi.size()) throw ConfigError("dwols_weights: length mismatch");
    if ((pi.array() <= 0).any() || (pi.array() >= 1).any())
        throw ConfigError("dwols_weights: propensity outside (0,1)");
    WeightVector wv;
    wv.w = (a - pi).cwiseAbs();
    wv.source = WeightSource::estimated;
    return wv;
}

WeightVector null_weights(Eigen::Index n) {
    if (n < 1) throw ConfigError("null_weights: n must be at least 1");
    WeightVector wv;
    wv.w = Eigen::VectorXd::Ones(n);
    wv.source = WeightSource::all_ones;
    return wv;
}

const char* weight_source_name(WeightSource source) {
    switch (source) {
        case WeightSource::estimated: return "estimated";
        case WeightSource::null_model: return "null_model";
        case WeightSource::user_supplied: return "user_supplied";
        case WeightSource::all_ones: return "all_ones";
    }
    return "unknown";
}

}  // namespace pdwols
