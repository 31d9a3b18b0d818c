#pragma once

#include "pdwols/expr.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace pdwols {

struct PropensityModel {
    Eigen::VectorXd coefficients;  // intercept first, then one per term
    std::vector<Term> terms;
    bool converged = false;
    bool separation = false;
    int iterations = 0;
    double log_likelihood = 0.0;
    std::vector<double> loglik_trace;  // per accepted IRLS step
};

enum class WeightSource { estimated, null_model, user_supplied, all_ones };

struct WeightVector {
    Eigen::VectorXd w;
    WeightSource source = WeightSource::all_ones;
};

// Bernoulli likelihood maximized by iteratively reweighted least squares with
// step halving; converged when the largest coefficient change is below 1e-8,
// capped at 50 iterations. Perfect separation is reported, not fatal: the
// model is returned with clipped probabilities.
PropensityModel fit_logistic(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                             const Eigen::VectorXd& a, const std::vector<Term>& terms);

// expit of the linear predictor, clipped to [1e-6, 1-1e-6].
Eigen::VectorXd predict_propensity(const PropensityModel& model, const Eigen::MatrixXd& X,
                                   const std::vector<std::string>& names);

// 'absolute value' balancing weights w_i = |a_i - pi_i|.
WeightVector dwols_weights(const Eigen::VectorXd& a, const Eigen::VectorXd& pi);

WeightVector null_weights(Eigen::Index n);

const char* weight_source_name(WeightSource source);

}  // namespace pdwols
