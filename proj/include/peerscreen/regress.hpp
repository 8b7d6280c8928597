#pragma once

// Design-matrix construction and OLS with heteroskedasticity-robust (HC1) or
// cluster-robust standard errors. Point estimation is QR-based; the sandwich
// estimators are assembled explicitly so their finite-sample scalings are
// visible and testable.

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "peerscreen/corpus.hpp"
#include "peerscreen/mathx.hpp"

namespace peerscreen {

struct RankDeficiencyError : std::runtime_error {
    std::vector<std::string> offending_columns;
    explicit RankDeficiencyError(std::vector<std::string> cols)
        : std::runtime_error(describe(cols)), offending_columns(std::move(cols)) {}
    static std::string describe(const std::vector<std::string>& cols) {
        std::string msg = "design matrix is rank deficient; offending columns:";
        for (const auto& c : cols) msg += " " + c;
        return msg;
    }
};

enum class VcovType { hc1, cluster_paper };

inline std::string to_string(VcovType v) {
    return v == VcovType::hc1 ? "HC1" : "cluster(paper_id)";
}

/// One analysis observation: a paper (or paper variant) with its mean score.
struct ObsRow {
    std::string paper_id;
    double y = 0.0;
    Source source = Source::ranked;
    std::optional<int> ordinal_rank;
    std::size_t word_count = 0;
    FieldTag field = FieldTag::applied_micro;
    std::optional<std::string> generator_model;
    std::string condition = "blind";          // audit author condition
    std::optional<std::string> institution;   // audit institution condition
    std::map<std::string, double> domain_scores;
};

struct RegressionSpec {
    bool rank_quartiles = false;     // reference: 1st-25th ranked
    bool unranked_dummy = false;
    bool ai_dummy = false;
    bool expand_ai_by_generator = false;  // one dummy per generator model
    bool author_conditions = false;  // audit name/institution dummies, reference: blind
    bool length_terms = false;       // length/100 and (length/100)^2/100
    bool field_dummies = false;      // reference: applied_micro
    std::vector<std::string> domain_regressors;  // e.g. originality, rigor, scope, impact
    VcovType vcov = VcovType::hc1;
};

struct DesignMatrix {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<std::string> names;
    std::vector<std::string> cluster_ids;  // per-row paper_id
};

namespace detail {

inline const std::vector<std::string>& known_conditions() {
    static const std::vector<std::string> v = {"top_male", "top_female",
                                               "random_male", "random_female"};
    return v;
}

} // namespace detail

/// Encodes the regressor groups of `spec` against `rows`. Categorical groups
/// omit exactly the stated reference level; quartile dummies are zero for
/// unranked and AI papers.
inline DesignMatrix build_design(const RegressionSpec& spec, const std::vector<ObsRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("build_design: empty dataset");

    std::vector<std::string> names{"intercept"};
    if (spec.author_conditions) {
        for (const auto& c : detail::known_conditions()) names.push_back(c);
        std::set<std::string> insts;
        for (const auto& r : rows)
            if (r.institution) insts.insert(*r.institution);
        for (const auto& inst : insts) names.push_back("inst:" + inst);
    }
    if (spec.rank_quartiles) {
        names.push_back("rank:26-50");
        names.push_back("rank:51-75");
        names.push_back("rank:76-100");
    }
    if (spec.unranked_dummy) names.push_back("unranked");
    if (spec.ai_dummy) {
        if (spec.expand_ai_by_generator) {
            std::set<std::string> gens;
            for (const auto& r : rows)
                if (r.source == Source::ai_generated && r.generator_model)
                    gens.insert(*r.generator_model);
            for (const auto& g : gens) names.push_back("ai:" + g);
        } else {
            names.push_back("ai");
        }
    }
    if (spec.length_terms) {
        names.push_back("length_100");
        names.push_back("length_100_sq_100");
    }
    if (spec.field_dummies) {
        for (FieldTag f : all_fields())
            if (f != FieldTag::applied_micro) names.push_back("field:" + to_string(f));
    }
    for (const auto& d : spec.domain_regressors) names.push_back(d);

    std::map<std::string, int> col;
    for (std::size_t j = 0; j < names.size(); ++j) col[names[j]] = static_cast<int>(j);

    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto k = static_cast<Eigen::Index>(names.size());
    DesignMatrix d;
    d.X = Eigen::MatrixXd::Zero(n, k);
    d.y.resize(n);
    d.names = names;
    d.cluster_ids.reserve(rows.size());

    for (Eigen::Index i = 0; i < n; ++i) {
        const ObsRow& r = rows[static_cast<std::size_t>(i)];
        d.y(i) = r.y;
        d.cluster_ids.push_back(r.paper_id);
        d.X(i, 0) = 1.0;

        if (spec.author_conditions) {
            if (r.condition != "blind") {
                auto it = col.find(r.condition);
                if (it == col.end())
                    throw std::invalid_argument("unknown author condition: " + r.condition);
                d.X(i, it->second) = 1.0;
            }
            if (r.institution) d.X(i, col.at("inst:" + *r.institution)) = 1.0;
        }
        if (spec.rank_quartiles && r.source == Source::ranked) {
            if (!r.ordinal_rank)
                throw std::invalid_argument("ranked paper missing ordinal_rank: " + r.paper_id);
            int rank = *r.ordinal_rank;
            if (rank > 25 && rank <= 50) d.X(i, col.at("rank:26-50")) = 1.0;
            else if (rank > 50 && rank <= 75) d.X(i, col.at("rank:51-75")) = 1.0;
            else if (rank > 75) d.X(i, col.at("rank:76-100")) = 1.0;
            // ranks 1-25 form the omitted reference quartile
        }
        if (spec.unranked_dummy && r.source == Source::unranked)
            d.X(i, col.at("unranked")) = 1.0;
        if (spec.ai_dummy && r.source == Source::ai_generated) {
            if (spec.expand_ai_by_generator) {
                if (!r.generator_model)
                    throw std::invalid_argument("AI paper missing generator_model: " + r.paper_id);
                d.X(i, col.at("ai:" + *r.generator_model)) = 1.0;
            } else {
                d.X(i, col.at("ai")) = 1.0;
            }
        }
        if (spec.length_terms) {
            double len100 = static_cast<double>(r.word_count) / 100.0;
            d.X(i, col.at("length_100")) = len100;
            d.X(i, col.at("length_100_sq_100")) = len100 * len100 / 100.0;
        }
        if (spec.field_dummies && r.field != FieldTag::applied_micro)
            d.X(i, col.at("field:" + to_string(r.field))) = 1.0;
        for (const auto& dom : spec.domain_regressors) {
            auto it = r.domain_scores.find(dom);
            if (it == r.domain_scores.end())
                throw std::invalid_argument("missing domain score '" + dom +
                                            "' for paper " + r.paper_id);
            d.X(i, col.at(dom)) = it->second;
        }
    }
    return d;
}

struct RegressionResult {
    std::vector<std::string> names;
    Eigen::VectorXd coef;
    Eigen::VectorXd se;
    Eigen::VectorXd tstat;
    Eigen::VectorXd pval;
    Eigen::MatrixXd vcov;
    Eigen::VectorXd residuals;
    double r2 = 0.0;
    std::size_t n = 0;
    std::size_t n_clusters = 0;
    VcovType vcov_type = VcovType::hc1;

    double coef_of(const std::string& name) const { return at(name, coef); }
    double se_of(const std::string& name) const { return at(name, se); }

    std::string stars(std::size_t j) const {
        double p = pval(static_cast<Eigen::Index>(j));
        if (p < 0.01) return "***";
        if (p < 0.05) return "**";
        if (p < 0.1) return "*";
        return "";
    }

private:
    double at(const std::string& name, const Eigen::VectorXd& v) const {
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == name) return v(static_cast<Eigen::Index>(j));
        throw std::invalid_argument("no coefficient named " + name);
    }
};

/// Least-squares point estimates via column-pivoted QR. Rank deficiency is an
/// error naming the dependent columns; nothing is silently dropped.
inline RegressionResult ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            std::vector<std::string> names = {}) {
    if (X.rows() != y.size()) throw std::invalid_argument("ols: X/y row mismatch");
    if (X.rows() < X.cols()) throw std::invalid_argument("ols: more columns than rows");
    if (names.empty())
        for (Eigen::Index j = 0; j < X.cols(); ++j) names.push_back("x" + std::to_string(j));

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) {
        std::vector<std::string> offending;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index j = qr.rank(); j < X.cols(); ++j)
            offending.push_back(names[static_cast<std::size_t>(perm(j))]);
        throw RankDeficiencyError(offending);
    }

    RegressionResult res;
    res.names = std::move(names);
    res.coef = qr.solve(y);
    res.residuals = y - X * res.coef;
    res.n = static_cast<std::size_t>(X.rows());

    double rss = res.residuals.squaredNorm();
    double tss = (y.array() - y.mean()).matrix().squaredNorm();
    if (tss <= 1e-300) res.r2 = rss <= 1e-300 ? 1.0 : 0.0;
    else res.r2 = std::max(0.0, std::min(1.0, 1.0 - rss / tss));
    return res;
}

/// Sandwich covariance. HC1 applies n/(n-k); the clustered form sums
/// within-cluster score outer products with G/(G-1) * (n-1)/(n-k). With every
/// observation its own cluster the two coincide exactly.
inline Eigen::MatrixXd robust_vcov(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                                   VcovType type,
                                   const std::vector<std::string>& cluster_ids = {}) {
    const auto n = X.rows();
    const auto k = X.cols();
    if (residuals.size() != n) throw std::invalid_argument("robust_vcov: residual length mismatch");
    if (n <= k) throw std::invalid_argument("robust_vcov: no residual degrees of freedom");

    Eigen::MatrixXd xtx_inv = (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(k, k));

    if (type == VcovType::hc1) {
        Eigen::MatrixXd meat = X.transpose() *
                               residuals.array().square().matrix().asDiagonal() * X;
        double scale = static_cast<double>(n) / static_cast<double>(n - k);
        return scale * xtx_inv * meat * xtx_inv;
    }

    if (cluster_ids.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("robust_vcov: cluster ids required for clustered errors");
    std::map<std::string, Eigen::VectorXd> scores;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto [it, inserted] = scores.try_emplace(cluster_ids[static_cast<std::size_t>(i)],
                                                 Eigen::VectorXd::Zero(k));
        it->second += residuals(i) * X.row(i).transpose();
    }
    const auto g = static_cast<double>(scores.size());
    if (scores.size() < 2) throw std::invalid_argument("robust_vcov: fewer than 2 clusters");
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (const auto& [_, s] : scores) meat += s * s.transpose();
    double scale = g / (g - 1.0) * static_cast<double>(n - 1) / static_cast<double>(n - k);
    return scale * xtx_inv * meat * xtx_inv;
}

inline std::size_t count_clusters(const std::vector<std::string>& cluster_ids) {
    return std::set<std::string>(cluster_ids.begin(), cluster_ids.end()).size();
}

/// build_design + ols + robust_vcov, with p-values from the normal reference
/// for HC1 and t(G-1) for clustered errors.
inline RegressionResult fit_regression(const RegressionSpec& spec,
                                       const std::vector<ObsRow>& rows) {
    DesignMatrix d = build_design(spec, rows);
    RegressionResult res = ols(d.X, d.y, d.names);
    res.vcov_type = spec.vcov;
    res.vcov = robust_vcov(d.X, res.residuals, spec.vcov,
                           spec.vcov == VcovType::cluster_paper ? d.cluster_ids
                                                                : std::vector<std::string>{});
    res.n_clusters = spec.vcov == VcovType::cluster_paper ? count_clusters(d.cluster_ids) : res.n;

    const auto k = res.coef.size();
    res.se.resize(k);
    res.tstat.resize(k);
    res.pval.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        res.se(j) = std::sqrt(std::max(0.0, res.vcov(j, j)));
        res.tstat(j) = res.se(j) > 0 ? res.coef(j) / res.se(j)
                                     : std::numeric_limits<double>::infinity();
        double at = std::abs(res.tstat(j));
        if (spec.vcov == VcovType::cluster_paper) {
            double df = static_cast<double>(res.n_clusters) - 1.0;
            res.pval(j) = 2.0 * (1.0 - student_t_cdf(at, df));
        } else {
            res.pval(j) = 2.0 * (1.0 - norm_cdf(at));
        }
    }
    return res;
}

/// Top-5 mean score on the four domain means (intercept included).
inline RegressionResult domain_regression(const std::vector<ObsRow>& rows,
                                          const std::string& /*model_id label*/ = "") {
    RegressionSpec spec;
    spec.domain_regressors = {"originality", "rigor", "scope", "impact"};
    spec.vcov = VcovType::hc1;
    return fit_regression(spec, rows);
}

// ---------------------------------------------------------------------------
// Reporting

inline std::string format_table(const RegressionResult& r, const std::string& title = "") {
    std::ostringstream os;
    if (!title.empty()) os << title << "\n";
    os << "----------------------------------------------------------\n";
    for (std::size_t j = 0; j < r.names.size(); ++j) {
        auto idx = static_cast<Eigen::Index>(j);
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-24s %10.3f%-3s (%.3f)\n", r.names[j].c_str(),
                      r.coef(idx), r.stars(j).c_str(), r.se(idx));
        os << buf;
    }
    os << "----------------------------------------------------------\n";
    os << "Observations " << r.n << "   R2 " << r.r2 << "   SE: " << to_string(r.vcov_type);
    if (r.vcov_type == VcovType::cluster_paper) os << " [G=" << r.n_clusters << "]";
    os << "\n*** p<0.01, ** p<0.05, * p<0.1\n";
    return os.str();
}

inline nlohmann::json result_to_json(const RegressionResult& r) {
    nlohmann::json coefs = nlohmann::json::array();
    for (std::size_t j = 0; j < r.names.size(); ++j) {
        auto idx = static_cast<Eigen::Index>(j);
        coefs.push_back({{"name", r.names[j]},
                         {"estimate", r.coef(idx)},
                         {"se", r.se(idx)},
                         {"t", r.tstat(idx)},
                         {"p", r.pval(idx)},
                         {"stars", r.stars(j)}});
    }
    return {{"coefficients", coefs},
            {"n", r.n},
            {"r2", r.r2},
            {"vcov", to_string(r.vcov_type)},
            {"n_clusters", r.n_clusters}};
}

} // namespace peerscreen
