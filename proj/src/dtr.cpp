#include "pdwols/dtr.hpp"

#include "pdwols/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pdwols {

Eigen::VectorXd BlipModel::contrast(const Eigen::MatrixXd& X,
                                    const std::vector<std::string>& names) const {
    Eigen::VectorXd c = Eigen::VectorXd::Constant(X.rows(), psi0);
    if (!terms.empty()) c.noalias() += term_matrix(terms, X, names) * psi;
    return c;
}

Eigen::VectorXd TreatmentFreeModel::eval(const Eigen::MatrixXd& X,
                                         const std::vector<std::string>& names) const {
    Eigen::VectorXd f = Eigen::VectorXd::Constant(X.rows(), intercept);
    if (!terms.empty()) f.noalias() += term_matrix(terms, X, names) * beta;
    return f;
}

double blip_value(const BlipModel& model, const Eigen::RowVectorXd& h,
                  const std::vector<std::string>& names, int a) {
    if (a == 0) return 0.0;
    Eigen::MatrixXd X = h;
    return model.contrast(X, names)(0);
}

int optimal_action(const BlipModel& model, const Eigen::RowVectorXd& h,
                   const std::vector<std::string>& names) {
    Eigen::MatrixXd X = h;
    return model.contrast(X, names)(0) > 0.0 ? 1 : 0;
}

double regret(const BlipModel& model, const Eigen::RowVectorXd& h,
              const std::vector<std::string>& names, int a) {
    Eigen::MatrixXd X = h;
    double c = model.contrast(X, names)(0);
    double opt_blip = c > 0.0 ? c : 0.0;       // gamma at the optimal action
    double act_blip = a == 1 ? c : 0.0;
    return opt_blip - act_blip;
}

PseudoOutcome pseudo_outcome(const Eigen::VectorXd& y_next, const BlipModel& model,
                             const Eigen::MatrixXd& H, const std::vector<std::string>& names,
                             const Eigen::VectorXd& a, int stage) {
    if (y_next.size() != H.rows() || a.size() != H.rows())
        throw ConfigError("pseudo_outcome: length mismatch");
    Eigen::VectorXd c = model.contrast(H, names);
    PseudoOutcome out;
    out.stage = stage;
    out.values.resize(y_next.size());
    for (Eigen::Index i = 0; i < y_next.size(); ++i) {
        double opt_blip = c(i) > 0.0 ? c(i) : 0.0;
        double act_blip = a(i) == 1.0 ? c(i) : 0.0;
        out.values(i) = y_next(i) + (opt_blip - act_blip);  // zero regret adds exactly zero
    }
    return out;
}

Eigen::VectorXd pseudo_outcome_q(const TreatmentFreeModel& tf, const BlipModel& model,
                                 const Eigen::MatrixXd& H, const std::vector<std::string>& names) {
    Eigen::VectorXd f = tf.eval(H, names);
    Eigen::VectorXd c = model.contrast(H, names);
    return f + c.cwiseMax(0.0);
}

Eigen::VectorXd recommended_actions(const BlipModel& model, const Eigen::MatrixXd& X,
                                    const std::vector<std::string>& names) {
    Eigen::VectorXd c = model.contrast(X, names);
    return (c.array() > 0.0).cast<double>();
}

namespace {

WeightVector stage_weights(const StageDataset& data, const FitOptions& opts,
                           std::optional<PropensityModel>& prop_out) {
    WeightChoice choice = opts.method == Method::qlasso ? WeightChoice::all_ones : opts.weights;
    switch (choice) {
        case WeightChoice::all_ones:
            return null_weights(data.n());
        case WeightChoice::user_supplied: {
            if (opts.user_weights.size() != data.n())
                throw ConfigError("fit_stage: user weights have wrong length");
            if ((opts.user_weights.array() < 0).any() || opts.user_weights.sum() <= 0)
                throw ConfigError("fit_stage: user weights must be nonnegative with positive sum");
            WeightVector wv;
            wv.w = opts.user_weights;
            wv.source = WeightSource::user_supplied;
            return wv;
        }
        case WeightChoice::null_model: {
            PropensityModel model = fit_logistic(data.X, data.column_names, data.a, {});
            prop_out = model;
            Eigen::VectorXd pi = predict_propensity(model, data.X, data.column_names);
            WeightVector wv = dwols_weights(data.a, pi);
            wv.source = WeightSource::null_model;
            return wv;
        }
        case WeightChoice::estimate: {
            std::vector<Term> terms = opts.propensity_terms;
            if (terms.empty()) {
                std::vector<std::string> labels(data.column_names.begin(), data.column_names.end());
                terms = parse_terms(labels);
            }
            PropensityModel model = fit_logistic(data.X, data.column_names, data.a, terms);
            prop_out = model;
            Eigen::VectorXd pi = predict_propensity(model, data.X, data.column_names);
            return dwols_weights(data.a, pi);
        }
    }
    throw ConfigError("fit_stage: unknown weight choice");
}

BlipModel blip_from(const LinearModelCoefs& coefs, const ModelSpec& spec) {
    BlipModel blip;
    blip.psi0 = coefs.psi0;
    blip.terms = spec.blip_terms;
    blip.psi = coefs.psi;
    return blip;
}

TreatmentFreeModel tf_from(const LinearModelCoefs& coefs, const ModelSpec& spec) {
    TreatmentFreeModel tf;
    tf.intercept = coefs.intercept;
    tf.terms = spec.treatment_free_terms;
    tf.beta = coefs.beta;
    return tf;
}

}  // namespace

StageFit fit_stage(const StageDataset& data, const ModelSpec& spec, const FitOptions& opts) {
    if (data.y.size() != data.n()) throw ConfigError("fit_stage: stage has no outcome");

    StageFit result;
    std::optional<PropensityModel> prop;
    result.weights = stage_weights(data, opts, prop);
    result.propensity = prop;
    const Eigen::VectorXd& w = result.weights.w;

    DesignBlocks raw = build_design(data, spec);
    auto [centered, yc] = weighted_center(raw, data.y, w);
    DesignBlocks solver_blocks = standardize(centered, w, opts.standardize);

    PenaltyMode mode = opts.method == Method::pdwols ? PenaltyMode::heredity : PenaltyMode::plain;
    if (opts.adaptive) {
        bool need_ridge = solver_blocks.n() <= 1 + solver_blocks.n_main() + solver_blocks.n_inter();
        AdaptiveFactors af = adaptive_factors(solver_blocks, yc, w,
                                              need_ridge ? PilotKind::ridge : PilotKind::wls);
        result.factors = af.as_penalty_factors(spec.penalize_psi0);
    } else {
        result.factors = PenaltyFactors::uniform(raw.n_main(), raw.n_inter(), spec.penalize_psi0);
    }

    if (opts.lambda) {
        // fixed lambda: warm-started chain from lambda_max stabilizes the
        // nonconvex heredity fit
        result.lambda = *opts.lambda;
        double lmax = lambda_max(solver_blocks, yc, w, opts.alpha, result.factors).value;
        if (lmax > result.lambda && result.lambda > 0) {
            int steps = std::max(2, static_cast<int>(std::ceil(
                            10.0 * std::log10(lmax / result.lambda))));
            steps = std::min(steps, opts.n_lambda);
            Eigen::VectorXd lambdas(steps);
            for (int i = 0; i < steps; ++i)
                lambdas(i) = lmax * std::pow(result.lambda / lmax, static_cast<double>(i) / (steps - 1));
            auto fits = fit_lambda_sequence(solver_blocks, yc, w, opts.alpha, result.factors, mode,
                                            lambdas, opts.cd);
            result.fit = fits.back();
        } else {
            PenaltySpec pspec{result.lambda, opts.alpha, result.factors, mode};
            result.fit = cd_fit(solver_blocks, yc, w, pspec, std::nullopt, opts.cd);
        }
    } else {
        CvOptions cv_opts;
        cv_opts.k = opts.cv_folds;
        cv_opts.seed = opts.seed;
        cv_opts.n_lambda = opts.n_lambda;
        cv_opts.min_ratio = opts.min_ratio;
        cv_opts.one_se = opts.one_se;
        cv_opts.standardize = opts.standardize;
        cv_opts.cd = opts.cd;
        result.cv = kfold_cv(raw, data.y, w, opts.alpha, result.factors, mode, cv_opts);
        result.lambda = result.cv->lambda_min;
        // the reported fit is the full-data path fit at the selected lambda
        Eigen::VectorXd chain = result.cv->lambdas.head(result.cv->lambda_min_index + 1);
        auto fits = fit_lambda_sequence(solver_blocks, yc, w, opts.alpha, result.factors, mode,
                                        chain, opts.cd);
        result.fit = fits.back();
    }

    result.penalized = to_original_scale(result.fit);
    result.support = support_of(result.penalized, result.factors);
    if (opts.refit) {
        RefitResult rr = refit(raw, data.y, w, result.support);
        result.reported = rr.coefs;
        result.refit_dropped = rr.dropped;
        result.refitted = true;
    } else {
        result.reported = result.penalized;
    }
    result.model.blip = blip_from(result.reported, spec);
    result.model.tf = tf_from(result.reported, spec);
    return result;
}

BackwardFitResult backward_fit(const TrialData& trial, const std::vector<ModelSpec>& specs,
                               const FitOptions& opts) {
    trial.validate();
    const int K = trial.n_stages();
    if (static_cast<int>(specs.size()) != K)
        throw ConfigError("backward_fit: need one model spec per stage");

    BackwardFitResult result;
    result.stage_fits.resize(static_cast<std::size_t>(K));
    result.regime.stages.resize(static_cast<std::size_t>(K));

    Eigen::VectorXd y_current = trial.stages.back().y;
    for (int k = K; k >= 1; --k) {
        StageDataset stage = trial.stages[static_cast<std::size_t>(k - 1)];
        stage.y = y_current;
        FitOptions stage_opts = opts;
        // offset 0 at the final stage so K = 1 matches fit_stage bit for bit
        stage_opts.seed = opts.seed + static_cast<std::uint64_t>(K - k);
        StageFit sf = fit_stage(stage, specs[static_cast<std::size_t>(k - 1)], stage_opts);
        result.regime.stages[static_cast<std::size_t>(k - 1)] = sf.model;

        if (k > 1) {
            if (opts.method == Method::pdwols) {
                PseudoOutcome po = pseudo_outcome(y_current, sf.model.blip, stage.X,
                                                  stage.column_names, stage.a, k - 1);
                y_current = po.values;
                result.pseudo.push_back(std::move(po));
            } else {
                PseudoOutcome po;
                po.stage = k - 1;
                po.values = pseudo_outcome_q(sf.model.tf, sf.model.blip, stage.X, stage.column_names);
                y_current = po.values;
                result.pseudo.push_back(std::move(po));
            }
        }
        result.stage_fits[static_cast<std::size_t>(k - 1)] = std::move(sf);
    }

    result.regime.estimator_tag.method = opts.method == Method::pdwols ? "pdwols" : "qlasso";
    result.regime.estimator_tag.refit = opts.refit;
    result.regime.estimator_tag.adaptive = opts.adaptive;
    result.regime.estimator_tag.alpha = opts.alpha;
    for (int k = 0; k < K; ++k)
        result.regime.estimator_tag.stage_lambdas.push_back(
            result.stage_fits[static_cast<std::size_t>(k)].lambda);
    return result;
}

}  // namespace pdwols
