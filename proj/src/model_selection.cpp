#include "pdwols/model_selection.hpp"

#include "pdwols/errors.hpp"
#include "pdwols/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pdwols {

namespace {

constexpr double kFactorCap = 1e8;
constexpr double kSelectTol = 1e-10;

Eigen::MatrixXd stack_columns(const DesignBlocks& blocks) {
    Eigen::MatrixXd C(blocks.n(), 1 + blocks.n_main() + blocks.n_inter());
    C.col(0) = blocks.Avec;
    if (blocks.n_main() > 0) C.middleCols(1, blocks.n_main()) = blocks.Xmain;
    if (blocks.n_inter() > 0) C.rightCols(blocks.n_inter()) = blocks.XA;
    return C;
}

std::vector<int> make_folds(Eigen::Index n, int k, std::uint64_t seed) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(perm);
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < perm.size(); ++i)
        fold[static_cast<std::size_t>(perm[i])] = static_cast<int>(i % static_cast<std::size_t>(k));
    return fold;
}

// a training complement with a constant treatment column cannot support the
// treatment blocks of the model
bool folds_valid(const std::vector<int>& fold, const Eigen::VectorXd& a_raw, int k) {
    for (int f = 0; f < k; ++f) {
        bool has0 = false, has1 = false;
        for (std::size_t i = 0; i < fold.size(); ++i) {
            if (fold[i] == f) continue;
            (a_raw(static_cast<Eigen::Index>(i)) == 1.0 ? has1 : has0) = true;
            if (has0 && has1) break;
        }
        if (!(has0 && has1)) return false;
    }
    return true;
}

}  // namespace

CvResult kfold_cv(const DesignBlocks& raw_blocks, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& w, double alpha, const PenaltyFactors& factors,
                  PenaltyMode mode, const CvOptions& opts) {
    if (raw_blocks.centered) throw ConfigError("kfold_cv: expects the raw (uncentered) design");
    const Eigen::Index n = raw_blocks.n();
    if (opts.k < 2) throw ConfigError("kfold_cv: k must be at least 2");
    if (n < opts.k) throw ConfigError("kfold_cv: more folds than rows");  // k = n is leave-one-out

    // lambda grid fixed on the full data
    auto [full_centered, yc] = weighted_center(raw_blocks, y, w);
    DesignBlocks full_std = standardize(full_centered, w, opts.standardize);
    double lmax = lambda_max(full_std, yc, w, alpha, factors).value;
    if (lmax <= 0) throw NumericError("kfold_cv: lambda_max is zero on the full data");
    double min_ratio = opts.min_ratio > 0
                           ? opts.min_ratio
                           : path_min_ratio_default(n, 1 + raw_blocks.n_main() + raw_blocks.n_inter());
    Eigen::VectorXd lambdas(opts.n_lambda);
    for (int i = 0; i < opts.n_lambda; ++i)
        lambdas(i) = lmax * std::pow(min_ratio, static_cast<double>(i) / (opts.n_lambda - 1));

    CvResult result;
    result.lambdas = lambdas;
    if (opts.folds) {
        if (static_cast<Eigen::Index>(opts.folds->size()) != n)
            throw ConfigError("kfold_cv: explicit fold assignment has wrong length");
        result.fold_assignments = *opts.folds;
        if (!folds_valid(result.fold_assignments, raw_blocks.Avec, opts.k))
            throw ConfigError("kfold_cv: a training complement has constant treatment");
    } else {
        result.fold_assignments = make_folds(n, opts.k, opts.seed);
        if (!folds_valid(result.fold_assignments, raw_blocks.Avec, opts.k)) {
            result.fold_assignments = make_folds(n, opts.k, opts.seed + 1);
            if (!folds_valid(result.fold_assignments, raw_blocks.Avec, opts.k))
                throw ConfigError("kfold_cv: a training complement has constant treatment "
                                  "after one redraw");
        }
    }

    Eigen::MatrixXd fold_scores(opts.k, opts.n_lambda);
    std::vector<bool> fold_used(static_cast<std::size_t>(opts.k), true);
    for (int f = 0; f < opts.k; ++f) {
        std::vector<int> train, held;
        for (Eigen::Index i = 0; i < n; ++i)
            (result.fold_assignments[static_cast<std::size_t>(i)] == f ? held : train)
                .push_back(static_cast<int>(i));
        DesignBlocks train_raw = subset_rows(raw_blocks, train);
        Eigen::VectorXd y_train = subset(y, train);
        Eigen::VectorXd w_train = subset(w, train);
        auto [train_centered, yc_train] = weighted_center(train_raw, y_train, w_train);
        DesignBlocks train_std = standardize(train_centered, w_train, opts.standardize);
        auto fits = fit_lambda_sequence(train_std, yc_train, w_train, alpha, factors, mode,
                                        lambdas, opts.cd);

        DesignBlocks held_raw = subset_rows(raw_blocks, held);
        Eigen::VectorXd y_held = subset(y, held);
        Eigen::VectorXd w_held = subset(w, held);
        double sw_held = w_held.sum();
        if (sw_held <= 0) {  // zero-weight fold carries no information
            fold_used[static_cast<std::size_t>(f)] = false;
            fold_scores.row(f).setZero();
            continue;
        }
        for (int i = 0; i < opts.n_lambda; ++i) {
            Eigen::VectorXd yhat = predict(to_original_scale(fits[static_cast<std::size_t>(i)]), held_raw);
            fold_scores(f, i) = ((y_held - yhat).array().square() * w_held.array()).sum() / sw_held;
        }
    }

    int k_used = static_cast<int>(std::count(fold_used.begin(), fold_used.end(), true));
    if (k_used < 2) throw NumericError("kfold_cv: fewer than two folds carry weight");
    result.cv_mean.resize(opts.n_lambda);
    result.cv_se.resize(opts.n_lambda);
    for (int i = 0; i < opts.n_lambda; ++i) {
        double mean = 0.0;
        for (int f = 0; f < opts.k; ++f)
            if (fold_used[static_cast<std::size_t>(f)]) mean += fold_scores(f, i);
        mean /= k_used;
        double var = 0.0;
        for (int f = 0; f < opts.k; ++f)
            if (fold_used[static_cast<std::size_t>(f)]) {
                double d = fold_scores(f, i) - mean;
                var += d * d;
            }
        var /= (k_used - 1);
        result.cv_mean(i) = mean;
        result.cv_se(i) = std::sqrt(var / k_used);
    }

    int best = 0;
    for (int i = 1; i < opts.n_lambda; ++i)
        if (result.cv_mean(i) < result.cv_mean(best)) best = i;  // ties keep the larger lambda
    if (opts.one_se) {
        double bound = result.cv_mean(best) + result.cv_se(best);
        for (int i = 0; i <= best; ++i)
            if (result.cv_mean(i) <= bound) { best = i; break; }
    }
    result.lambda_min_index = best;
    result.lambda_min = lambdas(best);
    return result;
}

PenaltyFactors AdaptiveFactors::as_penalty_factors(bool penalize_psi0) const {
    PenaltyFactors f;
    f.psi0 = penalize_psi0 ? w0 : 0.0;
    f.main = wj;
    f.interaction = tau_j;
    return f;
}

Eigen::VectorXd solve_wls(const DesignBlocks& blocks, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, double ridge) {
    Eigen::MatrixXd C = stack_columns(blocks);
    Eigen::MatrixXd G = C.transpose() * w.asDiagonal() * C;
    if (ridge > 0) G.diagonal().array() += ridge * w.sum();
    Eigen::VectorXd rhs = C.transpose() * (w.asDiagonal() * y);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    if (ldlt.info() != Eigen::Success) throw NumericError("solve_wls: decomposition failed");
    return ldlt.solve(rhs);
}

AdaptiveFactors adaptive_factors(const DesignBlocks& blocks, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& w, PilotKind pilot, double ridge_penalty) {
    if (!blocks.centered) throw ConfigError("adaptive_factors: blocks must be centered");
    const Eigen::Index m = blocks.n_main();
    const Eigen::Index b = blocks.n_inter();
    Eigen::MatrixXd C = stack_columns(blocks);

    AdaptiveFactors out;
    out.pilot = pilot;
    Eigen::VectorXd theta;
    if (pilot == PilotKind::wls) {
        Eigen::MatrixXd G = C.transpose() * w.asDiagonal() * C;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
        if (!lu.isInvertible())
            throw NumericError("adaptive_factors: design is rank deficient; use the ridge pilot");
        theta = lu.solve(C.transpose() * (w.asDiagonal() * y));
    } else {
        double kappa = ridge_penalty;
        if (kappa < 0) {
            double max_cor = 0.0;
            double sw = w.sum();
            for (Eigen::Index j = 0; j < C.cols(); ++j)
                max_cor = std::max(max_cor,
                                   std::abs((C.col(j).array() * w.array() * y.array()).sum()) / sw);
            kappa = 1e-2 * max_cor;
        }
        out.pilot_penalty = kappa;
        theta = solve_wls(blocks, y, w, kappa);
    }

    auto capped_inverse = [](double v) {
        double a = std::abs(v);
        if (a < 1.0 / kFactorCap) return kFactorCap;
        return 1.0 / a;
    };
    double psi0_hat = theta(0);
    out.w0 = capped_inverse(psi0_hat);
    out.wj.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) out.wj(j) = capped_inverse(theta(1 + j));
    out.tau_j.resize(b);
    for (Eigen::Index l = 0; l < b; ++l) {
        double psi_hat = theta(1 + m + l);
        int j = blocks.inter_main_index[static_cast<std::size_t>(l)];
        double beta_hat = j >= 0 ? theta(1 + j) : 0.0;
        double num = std::abs(beta_hat * psi0_hat);
        double factor = num < 1.0 / kFactorCap ? kFactorCap  // pilot-zero main effects
                                               : num * capped_inverse(psi_hat);
        if (!std::isfinite(factor)) factor = kFactorCap;
        out.tau_j(l) = std::min(factor, kFactorCap);
    }
    return out;
}

Support support_of(const LinearModelCoefs& coefs, const PenaltyFactors& factors) {
    Support s;
    s.psi0 = std::abs(coefs.psi0) > kSelectTol || factors.psi0 == 0.0;
    for (Eigen::Index j = 0; j < coefs.beta.size(); ++j)
        if (std::abs(coefs.beta(j)) > kSelectTol || factors.main(j) == 0.0)
            s.main.push_back(static_cast<int>(j));
    for (Eigen::Index l = 0; l < coefs.psi.size(); ++l)
        if (std::abs(coefs.psi(l)) > kSelectTol) s.inter.push_back(static_cast<int>(l));
    return s;
}

RefitResult refit(const DesignBlocks& raw_blocks, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& w, const Support& support, CenterDenominator denom) {
    if (raw_blocks.centered) throw ConfigError("refit: expects the raw (uncentered) design");
    auto [centered, yc] = weighted_center(raw_blocks, y, w, denom);

    struct Col { int kind; int index; std::string name; };  // kind: 0=A, 1=main, 2=inter
    std::vector<Col> cols;
    if (support.psi0) cols.push_back({0, 0, "A"});
    for (int j : support.main) cols.push_back({1, j, raw_blocks.main_names[static_cast<std::size_t>(j)]});
    for (int l : support.inter) cols.push_back({2, l, raw_blocks.inter_names[static_cast<std::size_t>(l)]});

    RefitResult result;
    result.coefs.beta = Eigen::VectorXd::Zero(raw_blocks.n_main());
    result.coefs.psi = Eigen::VectorXd::Zero(raw_blocks.n_inter());
    result.coefs.intercept = centered.y_mean;
    if (cols.empty()) return result;

    Eigen::MatrixXd C(centered.n(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k].kind == 0) C.col(static_cast<Eigen::Index>(k)) = centered.Avec;
        else if (cols[k].kind == 1) C.col(static_cast<Eigen::Index>(k)) = centered.Xmain.col(cols[k].index);
        else C.col(static_cast<Eigen::Index>(k)) = centered.XA.col(cols[k].index);
    }

    // rank-revealing pass in scan order: a column whose residual against the
    // previous kept columns is numerically zero gets dropped
    Eigen::VectorXd sqrtw = w.cwiseSqrt();
    Eigen::MatrixXd Q(centered.n(), static_cast<Eigen::Index>(cols.size()));
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < cols.size(); ++k) {
        Eigen::VectorXd v = C.col(static_cast<Eigen::Index>(k)).cwiseProduct(sqrtw);
        double orig = v.squaredNorm();
        for (std::size_t q = 0; q < kept.size(); ++q)
            v.noalias() -= Q.col(static_cast<Eigen::Index>(q)).dot(v) * Q.col(static_cast<Eigen::Index>(q));
        if (v.squaredNorm() <= std::max(orig, 1.0) * 1e-18) {
            result.dropped.push_back(cols[k].name);
            continue;
        }
        Q.col(static_cast<Eigen::Index>(kept.size())) = v / v.norm();
        kept.push_back(k);
    }

    Eigen::MatrixXd Ck(centered.n(), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t q = 0; q < kept.size(); ++q)
        Ck.col(static_cast<Eigen::Index>(q)) = C.col(static_cast<Eigen::Index>(kept[q]));
    Eigen::MatrixXd G = Ck.transpose() * w.asDiagonal() * Ck;
    Eigen::VectorXd rhs = Ck.transpose() * (w.asDiagonal() * yc);
    Eigen::VectorXd theta = G.ldlt().solve(rhs);
    if (!theta.allFinite()) throw NumericError("refit: singular system after column drops");

    for (std::size_t q = 0; q < kept.size(); ++q) {
        const Col& c = cols[kept[q]];
        double value = theta(static_cast<Eigen::Index>(q));
        if (c.kind == 0) result.coefs.psi0 = value;
        else if (c.kind == 1) result.coefs.beta(c.index) = value;
        else result.coefs.psi(c.index) = value;
    }
    // back out the intercept from the centering record
    result.coefs.intercept = centered.y_mean - result.coefs.psi0 * centered.a_mean -
                             result.coefs.beta.dot(centered.main_means) -
                             result.coefs.psi.dot(centered.inter_means);
    return result;
}

}  // namespace pdwols
