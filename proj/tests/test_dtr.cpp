#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pdwols/dtr.hpp"
#include "pdwols/errors.hpp"
#include "pdwols/rng.hpp"
#include "pdwols/simulate.hpp"

#include <cmath>

using namespace pdwols;

namespace {

// psi0 = 1, psi1 = -1.5: the tailoring rule of the one-stage generator
BlipModel reference_blip() {
    BlipModel m;
    m.psi0 = 1.0;
    m.terms = parse_terms({"x1"});
    m.psi.resize(1);
    m.psi << -1.5;
    return m;
}

const std::vector<std::string> names1 = {"x1"};

Eigen::RowVectorXd row1(double x) {
    Eigen::RowVectorXd r(1);
    r << x;
    return r;
}

}  // namespace

TEST_CASE("blip at the reference treatment is zero") {
    BlipModel m = reference_blip();
    CHECK(blip_value(m, row1(0.7), names1, 0) == 0.0);
    CHECK(blip_value(m, row1(-3.2), names1, 0) == 0.0);
}

TEST_CASE("blip values at the paper coefficients") {
    BlipModel m = reference_blip();
    CHECK(blip_value(m, row1(1.0), names1, 1) == doctest::Approx(-0.5));
    CHECK(blip_value(m, row1(2.0 / 3.0), names1, 1) == doctest::Approx(0.0));
}

TEST_CASE("optimal action is the strict-inequality indicator") {
    BlipModel m = reference_blip();
    CHECK(optimal_action(m, row1(1.0), names1) == 0);
    CHECK(optimal_action(m, row1(0.0), names1) == 1);
    CHECK(optimal_action(m, row1(2.0 / 3.0), names1) == 0);  // boundary -> reference
}

TEST_CASE("regret is nonnegative and zero at the optimum") {
    BlipModel m = reference_blip();
    CHECK(regret(m, row1(1.0), names1, 0) == 0.0);          // 0 is optimal there
    CHECK(regret(m, row1(1.0), names1, 1) == doctest::Approx(0.5));
    CHECK(regret(m, row1(0.0), names1, 1) == 0.0);
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        double x = rng.normal();
        int a = rng.bernoulli(0.5);
        CHECK(regret(m, row1(x), names1, a) >= 0.0);
        CHECK(regret(m, row1(x), names1, optimal_action(m, row1(x), names1)) == 0.0);
        // regret(1) + regret(0) = |psi0 + psi' x| for a binary treatment
        double total = regret(m, row1(x), names1, 0) + regret(m, row1(x), names1, 1);
        CHECK(total == doctest::Approx(std::abs(1.0 - 1.5 * x)));
    }
}

TEST_CASE("rescaling the blip never changes the decision") {
    BlipModel m = reference_blip();
    BlipModel scaled = m;
    scaled.psi0 *= 37.0;
    scaled.psi *= 37.0;
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        double x = rng.normal();
        CHECK(optimal_action(m, row1(x), names1) == optimal_action(scaled, row1(x), names1));
    }
}

TEST_CASE("pseudo-outcome adds the regret") {
    BlipModel m = reference_blip();
    Eigen::MatrixXd H(2, 1);
    H << 1.0, 0.0;  // blips -0.5 and 1.0
    Eigen::VectorXd y(2), a(2);
    y << 2.0, 2.0;
    a << 1, 0;
    PseudoOutcome po = pseudo_outcome(y, m, H, names1, a);
    CHECK(po.values(0) == doctest::Approx(2.5));  // acted a=1, optimal 0: regret 0.5
    CHECK(po.values(1) == doctest::Approx(3.0));  // acted a=0, optimal 1: regret 1.0
    CHECK((po.values.array() >= y.array()).all());
}

TEST_CASE("pseudo-outcome formula example") {
    // gamma(h, a_opt) = 0.5 and gamma(h, a) = -0.25 turn y = 2 into 2.75
    BlipModel m;
    m.psi0 = 0.5;
    m.terms = parse_terms({"x1"});
    m.psi.resize(1);
    m.psi << -0.75;
    Eigen::MatrixXd H(1, 1);
    H << 1.0;  // contrast -0.25, optimal action 0
    Eigen::VectorXd y(1), a(1);
    y << 2.0;
    a << 1;  // received a = 1, blip -0.25
    PseudoOutcome po = pseudo_outcome(y, m, H, names1, a);
    CHECK(po.values(0) == doctest::Approx(2.25));
    // with a = 0 instead, no regret accrues
    a << 0;
    CHECK(pseudo_outcome(y, m, H, names1, a).values(0) == doctest::Approx(2.0));
}

TEST_CASE("patients at their estimated optimum keep their outcome") {
    BlipModel m = reference_blip();
    Rng rng(17);
    const int n = 100;
    Eigen::MatrixXd H(n, 1);
    Eigen::VectorXd y(n), a(n);
    for (int i = 0; i < n; ++i) {
        H(i, 0) = rng.normal();
        a(i) = optimal_action(m, H.row(i), names1);
        y(i) = rng.normal();
    }
    PseudoOutcome po = pseudo_outcome(y, m, H, names1, a);
    CHECK((po.values - y).cwiseAbs().maxCoeff() == 0.0);
}

// with the true stage-2 blip plugged in, y + mu2 = yopt - mu1 + noise
TEST_CASE("pseudo-outcome recovers the stage-1 target distribution") {
    const int n = 100000;
    GeneratedTrial g = gen_two_stage_s1(n, 20240812);
    BlipModel truth2;
    truth2.psi0 = 1.0;
    truth2.terms = parse_terms({"x1"});
    truth2.psi.resize(1);
    truth2.psi << -1.5;
    // stage-2 design: x1 is the stage-2 tailoring covariate
    PseudoOutcome po = pseudo_outcome(g.trial.stages[1].y, truth2, g.trial.stages[1].X,
                                      g.trial.stages[1].column_names, g.trial.stages[1].a);
    Eigen::VectorXd target(n);
    for (int i = 0; i < n; ++i) {
        double x12_free = g.trial.stages[1].X(i, 0) - 0.5 * g.trial.stages[0].a(i);
        double y_opt = 0.5 + 2.0 * g.trial.stages[0].X(i, 0) + 2.0 * x12_free;
        target(i) = y_opt - g.truth.regret1(i);
    }
    Eigen::VectorXd eps = po.values - target;
    CHECK(std::abs(eps.mean()) < 0.02);
    double var = (eps.array() - eps.mean()).square().sum() / (n - 1);
    CHECK(var == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("backward_fit with one stage is bit-identical to fit_stage") {
    GeneratedStage g = gen_one_stage(300, 555);
    ModelSpec spec;
    spec.treatment_free_terms = parse_terms(g.data.column_names);
    spec.blip_terms = parse_terms(g.data.column_names);
    FitOptions opts;
    opts.weights = WeightChoice::estimate;
    opts.propensity_terms = parse_terms({"x1", "x2"});
    opts.n_lambda = 40;
    opts.seed = 9;

    StageFit direct = fit_stage(g.data, spec, opts);
    TrialData trial;
    trial.stages = {g.data};
    BackwardFitResult rec = backward_fit(trial, {spec}, opts);
    CHECK(rec.stage_fits[0].lambda == direct.lambda);
    CHECK(rec.stage_fits[0].reported.psi0 == direct.reported.psi0);
    CHECK(rec.stage_fits[0].reported.beta == direct.reported.beta);
    CHECK(rec.stage_fits[0].reported.psi == direct.reported.psi);
    CHECK(rec.regime.stages[0].blip.psi0 == direct.model.blip.psi0);
}

TEST_CASE("two-stage pipeline recovers the tailoring variable at both stages") {
    const int reps = 5;
    int stage1_hits = 0, stage2_hits = 0;
    double pd_er1 = 0.0, ql_er1 = 0.0;
    for (int r = 0; r < reps; ++r) {
        GeneratedTrial g = gen_two_stage_s1(1000, 7100 + static_cast<std::uint64_t>(r));
        ModelSpec spec;
        spec.treatment_free_terms = parse_terms(g.trial.stages[0].column_names);
        spec.blip_terms = parse_terms(g.trial.stages[0].column_names);
        FitOptions opts;
        opts.weights = WeightChoice::estimate;
        opts.seed = static_cast<std::uint64_t>(r);
        opts.refit = true;
        BackwardFitResult pd = backward_fit(g.trial, {spec, spec}, opts);
        auto selected = [](const StageFit& sf, int l) {
            return std::find(sf.support.inter.begin(), sf.support.inter.end(), l) !=
                   sf.support.inter.end();
        };
        if (selected(pd.stage_fits[0], 0)) ++stage1_hits;
        if (selected(pd.stage_fits[1], 0)) ++stage2_hits;

        FitOptions ql_opts = opts;
        ql_opts.method = Method::qlasso;
        BackwardFitResult ql = backward_fit(g.trial, {spec, spec}, ql_opts);
        RegimeEvaluation pd_eval = evaluate_regime(pd.regime, GeneratorKind::two_stage_s1, 10,
                                                   4000, 999 + static_cast<std::uint64_t>(r));
        RegimeEvaluation ql_eval = evaluate_regime(ql.regime, GeneratorKind::two_stage_s1, 10,
                                                   4000, 999 + static_cast<std::uint64_t>(r));
        pd_er1 += pd_eval.stage_error[0];
        ql_er1 += ql_eval.stage_error[0];
    }
    CHECK(stage1_hits == reps);
    CHECK(stage2_hits == reps);
    // the misspecified treatment-free model sinks the q-learning stage-1 rule
    CHECK(ql_er1 / reps > pd_er1 / reps + 0.2);
}

TEST_CASE("stage count and spec count must agree") {
    GeneratedTrial g = gen_two_stage_s1(50, 1);
    ModelSpec spec;
    spec.treatment_free_terms = parse_terms(g.trial.stages[0].column_names);
    spec.blip_terms = parse_terms(g.trial.stages[0].column_names);
    CHECK_THROWS_AS(backward_fit(g.trial, {spec}, FitOptions{}), ConfigError);
}

TEST_CASE("constant-treatment stage is rejected") {
    GeneratedStage g = gen_one_stage(60, 3);
    g.data.a.setOnes();
    ModelSpec spec;
    spec.treatment_free_terms = parse_terms(g.data.column_names);
    spec.blip_terms = parse_terms(g.data.column_names);
    FitOptions opts;
    opts.weights = WeightChoice::estimate;
    CHECK_THROWS_AS(fit_stage(g.data, spec, opts), ConfigError);
}
