#include "pdwols/simulate.hpp"

#include "pdwols/errors.hpp"
#include "pdwols/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

namespace pdwols {

std::string MethodVariant::label() const {
    std::string base = method == Method::pdwols ? "pdwols" : "qlasso";
    return refit ? base + "+refit" : base;
}

MethodVariant method_variant_from_label(const std::string& label) {
    MethodVariant v;
    std::string base = label;
    auto plus = label.find('+');
    if (plus != std::string::npos) {
        base = label.substr(0, plus);
        std::string suffix = label.substr(plus + 1);
        if (suffix != "refit") throw ConfigError("unknown method variant '" + label + "'");
        v.refit = true;
    }
    if (base == "pdwols") v.method = Method::pdwols;
    else if (base == "qlasso") v.method = Method::qlasso;
    else throw ConfigError("unknown method '" + base + "'");
    return v;
}

const char* generator_name(GeneratorKind kind) {
    switch (kind) {
        case GeneratorKind::one_stage: return "one_stage";
        case GeneratorKind::high_dim: return "high_dim";
        case GeneratorKind::two_stage_s1: return "two_stage_s1";
    }
    return "unknown";
}

GeneratorKind generator_from_name(const std::string& name) {
    if (name == "one_stage") return GeneratorKind::one_stage;
    if (name == "high_dim") return GeneratorKind::high_dim;
    if (name == "two_stage_s1") return GeneratorKind::two_stage_s1;
    throw ConfigError("unknown generator '" + name + "'");
}

void ScenarioConfig::validate() const {
    if (generator == GeneratorKind::one_stage && (scenario < 1 || scenario > 4))
        throw ConfigError("scenario must lie in 1..4");
    if (n < 1 || reps < 1 || n_test < 1) throw ConfigError("n, reps and n_test must be positive");
    if (p < 2) throw ConfigError("p must be at least 2");
    if (methods.empty()) throw ConfigError("no methods configured");
    if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha must lie in (0,1)");
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
}

namespace {

// one-stage truth
double tf_one_stage(double x1, double x2) { return 0.5 - 0.6 * std::exp(x1) - 2.0 * x1 - 2.0 * x2; }
double blip_one_stage(double x1) { return 1.0 - 1.5 * x1; }

// two-stage truth
double blip_two_stage_1(double x11) { return 0.8 - 2.0 * x11; }
double blip_two_stage_2(double x12) { return 1.0 - 1.5 * x12; }

std::vector<std::string> column_labels(int p) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(p));
    for (int j = 1; j <= p; ++j) names.push_back("x" + std::to_string(j));
    return names;
}

// AR(1) draw with Corr(Xj, Xk) = 0.25^|j-k| and unit marginals
using StridedRow = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;
void draw_ar1_row(Rng& rng, StridedRow row) {
    constexpr double rho = 0.25;
    const double spread = std::sqrt(1.0 - rho * rho);
    row(0) = rng.normal();
    for (Eigen::Index j = 1; j < row.size(); ++j) row(j) = rho * row(j - 1) + spread * rng.normal();
}

}  // namespace

GeneratedStage gen_one_stage(int n, std::uint64_t seed, int p) {
    if (n < 1 || p < 2) throw ConfigError("gen_one_stage: need n >= 1 and p >= 2");
    Rng rng(seed);
    GeneratedStage out;
    out.data.X.resize(n, p);
    out.data.a.resize(n);
    out.data.y.resize(n);
    out.data.column_names = column_labels(p);
    out.truth.optimal_action.resize(n);
    out.truth.treatment_free.resize(n);
    out.truth.propensity.resize(n);
    for (int i = 0; i < n; ++i) {
        draw_ar1_row(rng, out.data.X.row(i));
        double x1 = out.data.X(i, 0), x2 = out.data.X(i, 1);
        double pi = expit(1.0 + x1 + x2);
        int a = rng.bernoulli(pi);
        double f = tf_one_stage(x1, x2);
        double blip = blip_one_stage(x1);
        out.data.a(i) = a;
        out.data.y(i) = f + a * blip + rng.normal();
        out.truth.optimal_action(i) = blip > 0 ? 1.0 : 0.0;
        out.truth.treatment_free(i) = f;
        out.truth.propensity(i) = pi;
    }
    return out;
}

GeneratedStage gen_high_dim(int n, int p, std::uint64_t seed) {
    if (n < 1 || p < 2) throw ConfigError("gen_high_dim: need n >= 1 and p >= 2");
    Rng rng(seed);
    GeneratedStage out;
    out.data.X.resize(n, p);
    out.data.a.resize(n);
    out.data.y.resize(n);
    out.data.column_names = column_labels(p);
    out.truth.optimal_action.resize(n);
    out.truth.treatment_free.resize(n);
    out.truth.propensity = Eigen::VectorXd::Constant(n, 0.5);
    for (int i = 0; i < n; ++i) {
        draw_ar1_row(rng, out.data.X.row(i));
        double x1 = out.data.X(i, 0), x2 = out.data.X(i, 1);
        int a = rng.bernoulli(0.5);
        double f = tf_one_stage(x1, x2);
        double blip = blip_one_stage(x1);
        out.data.a(i) = a;
        out.data.y(i) = f + a * blip + rng.normal();
        out.truth.optimal_action(i) = blip > 0 ? 1.0 : 0.0;
        out.truth.treatment_free(i) = f;
    }
    return out;
}

GeneratedTrial gen_two_stage_s1(int n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("gen_two_stage_s1: need n >= 1");
    constexpr int p = 10;
    Rng rng(seed);
    GeneratedTrial out;
    StageDataset s1, s2;
    s1.X.resize(n, p);
    s1.a.resize(n);
    s1.column_names = column_labels(p);
    s2.X.resize(n, p);
    s2.a.resize(n);
    s2.y.resize(n);
    s2.column_names = column_labels(p);
    out.truth.opt1.resize(n);
    out.truth.opt2.resize(n);
    out.truth.regret1.resize(n);
    out.truth.regret2.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) s1.X(i, j) = rng.normal();
        double a1 = rng.bernoulli(expit(s1.X(i, 0) - s1.X(i, 1)));
        s1.a(i) = a1;
        // the optimal outcome is built on the action-free part of x12, so the
        // stated blips are the true blips and E[yopt] = 0.5
        double x12_free = rng.normal(0.8 * s1.X(i, 0), 1.0);
        s2.X(i, 0) = x12_free + 0.5 * a1;
        for (int j = 1; j < p; ++j) s2.X(i, j) = rng.normal(0.8 * s1.X(i, j), 1.0);
        double a2 = rng.bernoulli(expit(s2.X(i, 0) - s2.X(i, 1)));
        s2.a(i) = a2;

        double b1 = blip_two_stage_1(s1.X(i, 0));
        double b2 = blip_two_stage_2(s2.X(i, 0));
        double mu1 = std::max(0.0, b1) - a1 * b1;
        double mu2 = std::max(0.0, b2) - a2 * b2;
        double y_opt = 0.5 + 2.0 * s1.X(i, 0) + 2.0 * x12_free;
        s2.y(i) = y_opt - mu1 - mu2 + rng.normal();
        out.truth.opt1(i) = b1 > 0 ? 1.0 : 0.0;
        out.truth.opt2(i) = b2 > 0 ? 1.0 : 0.0;
        out.truth.regret1(i) = mu1;
        out.truth.regret2(i) = mu2;
    }
    out.trial.stages = {std::move(s1), std::move(s2)};
    return out;
}

TrialData augment_noise(const TrialData& trial, int d, std::uint64_t seed) {
    if (d < 1) throw ConfigError("augment_noise: d must be positive");
    trial.validate();
    Rng rng(seed);
    TrialData out = trial;
    const Eigen::Index n = trial.stages[0].n();
    Eigen::MatrixXd prev(n, d);
    for (std::size_t k = 0; k < out.stages.size(); ++k) {
        StageDataset& stage = out.stages[k];
        Eigen::MatrixXd extra(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                extra(i, j) = k == 0 ? rng.normal()
                                     : rng.normal(std::log(std::abs(prev(i, j))), 1.0);
        Eigen::MatrixXd X(n, stage.X.cols() + d);
        X << stage.X, extra;
        stage.X = std::move(X);
        for (int j = 1; j <= d; ++j) stage.column_names.push_back("noise" + std::to_string(j));
        prev = extra;
    }
    return out;
}

namespace {

int stage_count(GeneratorKind kind) { return kind == GeneratorKind::two_stage_s1 ? 2 : 1; }

RegimeEvaluation evaluate_one_stage_family(const Regime& regime, GeneratorKind kind, int p,
                                           int n_test, std::uint64_t seed) {
    Rng rng(seed);
    const StageModel& stage = regime.stages.at(0);
    std::vector<std::string> names = column_labels(p);
    Eigen::MatrixXd X(n_test, p);
    for (int i = 0; i < n_test; ++i) draw_ar1_row(rng, X.row(i));
    Eigen::VectorXd ahat = recommended_actions(stage.blip, X, names);
    RegimeEvaluation eval;
    eval.stage_error.assign(1, 0.0);
    double value = 0.0;
    (void)kind;  // treatment is forced by the regime, so both generators share this law
    for (int i = 0; i < n_test; ++i) {
        double x1 = X(i, 0), x2 = X(i, 1);
        double blip = blip_one_stage(x1);
        int opt = blip > 0 ? 1 : 0;
        value += tf_one_stage(x1, x2) + ahat(i) * blip + rng.normal();
        if (static_cast<int>(ahat(i)) != opt) eval.stage_error[0] += 1.0;
    }
    eval.stage_error[0] /= n_test;
    eval.total_error = eval.stage_error[0];
    eval.value = value / n_test;
    return eval;
}

RegimeEvaluation evaluate_two_stage(const Regime& regime, int n_test, std::uint64_t seed) {
    constexpr int p = 10;
    Rng rng(seed);
    std::vector<std::string> names = column_labels(p);
    const StageModel& st1 = regime.stages.at(0);
    const StageModel& st2 = regime.stages.at(1);
    RegimeEvaluation eval;
    eval.stage_error.assign(2, 0.0);
    double value = 0.0;
    Eigen::RowVectorXd x1row(p), x2row(p);
    for (int i = 0; i < n_test; ++i) {
        for (int j = 0; j < p; ++j) x1row(j) = rng.normal();
        int a1 = optimal_action(st1.blip, x1row, names);
        double x12_free = rng.normal(0.8 * x1row(0), 1.0);
        x2row(0) = x12_free + 0.5 * a1;
        for (int j = 1; j < p; ++j) x2row(j) = rng.normal(0.8 * x1row(j), 1.0);
        int a2 = optimal_action(st2.blip, x2row, names);

        double b1 = blip_two_stage_1(x1row(0));
        double b2 = blip_two_stage_2(x2row(0));
        double mu1 = std::max(0.0, b1) - a1 * b1;
        double mu2 = std::max(0.0, b2) - a2 * b2;
        double y_opt = 0.5 + 2.0 * x1row(0) + 2.0 * x12_free;
        value += y_opt - mu1 - mu2 + rng.normal();
        int opt1 = b1 > 0 ? 1 : 0;
        int opt2 = b2 > 0 ? 1 : 0;
        bool err1 = a1 != opt1, err2 = a2 != opt2;
        if (err1) eval.stage_error[0] += 1.0;
        if (err2) eval.stage_error[1] += 1.0;
        if (err1 || err2) eval.total_error += 1.0;
    }
    for (double& e : eval.stage_error) e /= n_test;
    eval.total_error /= n_test;
    eval.value = value / n_test;
    return eval;
}

}  // namespace

RegimeEvaluation evaluate_regime(const Regime& regime, GeneratorKind kind, int p, int n_test,
                                 std::uint64_t seed) {
    if (static_cast<int>(regime.stages.size()) != stage_count(kind))
        throw ConfigError("evaluate_regime: regime has wrong stage count for the generator");
    if (kind == GeneratorKind::two_stage_s1) return evaluate_two_stage(regime, n_test, seed);
    return evaluate_one_stage_family(regime, kind, p, n_test, seed);
}

double value_estimate(const Regime& regime, GeneratorKind kind, int p, int n_test,
                      std::uint64_t seed) {
    return evaluate_regime(regime, kind, p, n_test, seed).value;
}

double error_rate(const Regime& regime, const StageDataset& test,
                  const Eigen::VectorXd& oracle_actions) {
    if (regime.stages.empty()) throw ConfigError("error_rate: empty regime");
    Eigen::VectorXd ahat = recommended_actions(regime.stages[0].blip, test.X, test.column_names);
    if (ahat.size() != oracle_actions.size()) throw ConfigError("error_rate: length mismatch");
    double err = 0.0;
    for (Eigen::Index i = 0; i < ahat.size(); ++i)
        if (ahat(i) != oracle_actions(i)) err += 1.0;
    return err / static_cast<double>(ahat.size());
}

RegimeEvaluation error_rate(const Regime& regime, GeneratorKind kind, int p, int n_test,
                            std::uint64_t seed) {
    return evaluate_regime(regime, kind, p, n_test, seed);
}

ScenarioPipeline scenario_pipeline(const ScenarioConfig& config) {
    ScenarioPipeline pipe;
    std::vector<std::string> xs = column_labels(config.p);
    pipe.true_interactions = {"A:x1"};

    switch (config.generator) {
        case GeneratorKind::one_stage: {
            std::vector<std::string> terms = xs;
            if (config.scenario == 3 || config.scenario == 4)
                terms.insert(terms.begin(), "exp(x1)");
            ModelSpec spec;
            spec.treatment_free_terms = parse_terms(terms);
            spec.blip_terms = parse_terms(terms);
            pipe.specs = {spec};
            pipe.weights = (config.scenario == 2 || config.scenario == 4) ? WeightChoice::estimate
                                                                          : WeightChoice::all_ones;
            pipe.propensity_terms = parse_terms({"x1", "x2"});
            break;
        }
        case GeneratorKind::high_dim: {
            ModelSpec spec;
            spec.treatment_free_terms = parse_terms(xs);
            spec.blip_terms = parse_terms(xs);
            pipe.specs = {spec};
            pipe.weights = WeightChoice::null_model;  // P(A=1) constant by design
            break;
        }
        case GeneratorKind::two_stage_s1: {
            ModelSpec spec;
            std::vector<std::string> ten = column_labels(10);
            spec.treatment_free_terms = parse_terms(ten);
            spec.blip_terms = parse_terms(ten);
            pipe.specs = {spec, spec};
            pipe.weights = WeightChoice::estimate;
            pipe.propensity_terms = parse_terms(ten);
            break;
        }
    }
    return pipe;
}

namespace {

ReplicateRecord run_replicate(const ScenarioConfig& config, const ScenarioPipeline& pipe,
                              const MethodVariant& variant, int rep) {
    ReplicateRecord rec;
    rec.rep = rep;
    rec.seed = config.base_seed + static_cast<std::uint64_t>(rep);
    std::uint64_t test_seed = config.base_seed + 1000000007ULL + static_cast<std::uint64_t>(rep);
    auto started = std::chrono::steady_clock::now();
    try {
        TrialData trial;
        switch (config.generator) {
            case GeneratorKind::one_stage:
                trial.stages = {gen_one_stage(config.n, rec.seed, config.p).data};
                break;
            case GeneratorKind::high_dim:
                trial.stages = {gen_high_dim(config.n, config.p, rec.seed).data};
                break;
            case GeneratorKind::two_stage_s1:
                trial = gen_two_stage_s1(config.n, rec.seed).trial;
                break;
        }

        FitOptions opts;
        opts.method = variant.method;
        opts.refit = variant.refit;
        opts.adaptive = config.adaptive;
        opts.alpha = config.alpha;
        opts.cv_folds = config.cv_folds;
        opts.n_lambda = config.n_lambda;
        opts.seed = rec.seed;
        opts.weights = pipe.weights;
        opts.propensity_terms = pipe.propensity_terms;

        BackwardFitResult fit = backward_fit(trial, pipe.specs, opts);
        RegimeEvaluation eval =
            evaluate_regime(fit.regime, config.generator, config.p, config.n_test, test_seed);
        rec.stage_error = eval.stage_error;
        rec.total_error = eval.total_error;
        rec.value = eval.value;
        for (const StageFit& sf : fit.stage_fits) {
            rec.psi0.push_back(sf.reported.psi0);
            std::vector<double> psi(sf.reported.psi.data(),
                                    sf.reported.psi.data() + sf.reported.psi.size());
            rec.psi.push_back(std::move(psi));
            std::vector<int> sel(static_cast<std::size_t>(sf.reported.psi.size()), 0);
            for (int l : sf.support.inter) sel[static_cast<std::size_t>(l)] = 1;
            rec.selected.push_back(std::move(sel));
        }
        rec.ok = true;
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return rec;
}

}  // namespace

MetricsReport run_experiment(const ScenarioConfig& config) {
    config.validate();
    ScenarioPipeline pipe = scenario_pipeline(config);
    const int K = stage_count(config.generator);

    MetricsReport report;
    report.config = config;
    report.methods.resize(config.methods.size());

    std::vector<std::vector<std::string>> stage_terms(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
        for (const Term& t : pipe.specs[static_cast<std::size_t>(k)].blip_terms)
            stage_terms[static_cast<std::size_t>(k)].push_back("A:" + t.label());

    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        report.methods[m].label = config.methods[m].label();
        report.methods[m].blip_terms = stage_terms;
        report.methods[m].reps.resize(static_cast<std::size_t>(config.reps));
    }

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int r = next.fetch_add(1); r < config.reps; r = next.fetch_add(1))
            for (std::size_t m = 0; m < config.methods.size(); ++m)
                report.methods[m].reps[static_cast<std::size_t>(r)] =
                    run_replicate(config, pipe, config.methods[m], r);
    };
    int jobs = std::max(1, std::min(config.jobs, config.reps));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(jobs));
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // fixed-order aggregation over replicate index
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        MethodReport& mr = report.methods[m];
        mr.selection_rate.resize(static_cast<std::size_t>(K));
        mr.stage_error_rate.assign(static_cast<std::size_t>(K), 0.0);
        int ok = 0;
        std::vector<std::vector<double>> sel_sums(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k)
            sel_sums[static_cast<std::size_t>(k)].assign(stage_terms[static_cast<std::size_t>(k)].size(), 0.0);
        double fp_sum = 0.0, fn_sum = 0.0, fp_count = 0.0, fn_count = 0.0;
        for (const ReplicateRecord& rec : mr.reps) {
            if (!rec.ok) {
                ++mr.n_failed;
                continue;
            }
            ++ok;
            mr.total_error_rate += rec.total_error;
            mr.value += rec.value;
            for (int k = 0; k < K; ++k) {
                mr.stage_error_rate[static_cast<std::size_t>(k)] += rec.stage_error[static_cast<std::size_t>(k)];
                const auto& labels = stage_terms[static_cast<std::size_t>(k)];
                for (std::size_t t = 0; t < labels.size(); ++t) {
                    int selected = rec.selected[static_cast<std::size_t>(k)][t];
                    sel_sums[static_cast<std::size_t>(k)][t] += selected;
                    bool is_true = std::find(pipe.true_interactions.begin(), pipe.true_interactions.end(),
                                             labels[t]) != pipe.true_interactions.end();
                    if (is_true) {
                        fn_sum += selected ? 0.0 : 1.0;
                        fn_count += 1.0;
                    } else {
                        fp_sum += selected ? 1.0 : 0.0;
                        fp_count += 1.0;
                    }
                }
            }
        }
        if (ok > 0) {
            mr.total_error_rate /= ok;
            mr.value /= ok;
            for (int k = 0; k < K; ++k) {
                mr.stage_error_rate[static_cast<std::size_t>(k)] /= ok;
                const auto& labels = stage_terms[static_cast<std::size_t>(k)];
                for (std::size_t t = 0; t < labels.size(); ++t)
                    mr.selection_rate[static_cast<std::size_t>(k)][labels[t]] =
                        sel_sums[static_cast<std::size_t>(k)][t] / ok;
            }
        }
        mr.fp_rate = fp_count > 0 ? fp_sum / fp_count : 0.0;
        mr.fn_rate = fn_count > 0 ? fn_sum / fn_count : 0.0;
    }
    return report;
}

}  // namespace pdwols
