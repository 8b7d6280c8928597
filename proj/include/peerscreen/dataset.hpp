#pragma once

// Joins the ratings cache with the paper store into analysis-ready arrays:
// per-paper mean scores, the running variable (journal rank), and the
// standard adjustment set (length/100, (length/100)^2/100, field dummies).

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "peerscreen/corpus.hpp"
#include "peerscreen/evalharness.hpp"
#include "peerscreen/regress.hpp"

namespace peerscreen {

enum class RankAxis { ordinal, actual };

/// Per-paper mean score for one (model, metric) across repetitions; failed
/// evaluations are excluded, papers with no usable record are dropped.
inline std::map<std::string, double> mean_scores(const std::vector<EvaluationRecord>& records,
                                                 const std::string& model_id, Metric metric,
                                                 const std::string& variant_id = "") {
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& r : records) {
        if (r.key.model_id != model_id || r.key.metric != metric) continue;
        if (r.key.variant_id != variant_id) continue;
        if (r.failed || !r.score) continue;
        auto& [sum, n] = acc[r.key.paper_id];
        sum += *r.score;
        ++n;
    }
    std::map<std::string, double> out;
    for (const auto& [id, sn] : acc) out[id] = sn.first / sn.second;
    return out;
}

struct AnalysisArrays {
    std::vector<double> y;
    std::vector<double> x;                 // journal rank
    Eigen::MatrixXd covariates;            // n x k (possibly 0 columns)
    std::vector<std::string> covariate_names;
    std::vector<std::string> paper_ids;
};

/// Ranked-paper y-on-rank arrays for binscatter. With `adjust` the Eq.-2
/// covariates are attached: length/100, its square/100, and field dummies
/// (reference applied_micro, only levels present in the sample).
inline AnalysisArrays rank_arrays(const std::vector<Paper>& papers,
                                  const std::map<std::string, double>& score_by_paper,
                                  RankAxis axis, bool adjust) {
    AnalysisArrays a;
    std::vector<const Paper*> used;
    for (const auto& p : papers) {
        if (p.source != Source::ranked) continue;
        auto it = score_by_paper.find(p.id);
        if (it == score_by_paper.end()) continue;
        int rank = axis == RankAxis::ordinal ? p.ordinal_rank.value() : p.actual_rank.value();
        a.y.push_back(it->second);
        a.x.push_back(static_cast<double>(rank));
        a.paper_ids.push_back(p.id);
        used.push_back(&p);
    }
    if (a.y.empty()) throw std::invalid_argument("rank_arrays: no ranked papers with scores");

    if (!adjust) {
        a.covariates.resize(static_cast<Eigen::Index>(a.y.size()), 0);
        return a;
    }
    std::vector<FieldTag> present;
    for (FieldTag f : all_fields()) {
        if (f == FieldTag::applied_micro) continue;
        for (const Paper* p : used)
            if (p->field == f) {
                present.push_back(f);
                break;
            }
    }
    const auto n = static_cast<Eigen::Index>(a.y.size());
    a.covariates.resize(n, 2 + static_cast<Eigen::Index>(present.size()));
    a.covariate_names = {"length_100", "length_100_sq_100"};
    for (FieldTag f : present) a.covariate_names.push_back("field:" + to_string(f));
    for (Eigen::Index i = 0; i < n; ++i) {
        const Paper& p = *used[static_cast<std::size_t>(i)];
        double len100 = static_cast<double>(p.word_count) / 100.0;
        a.covariates(i, 0) = len100;
        a.covariates(i, 1) = len100 * len100 / 100.0;
        for (std::size_t k = 0; k < present.size(); ++k)
            a.covariates(i, 2 + static_cast<Eigen::Index>(k)) =
                p.field == present[k] ? 1.0 : 0.0;
    }
    return a;
}

/// Rows for the quartile OLS: every paper with a score, sources mixed.
inline std::vector<ObsRow> quartile_rows(const std::vector<Paper>& papers,
                                         const std::map<std::string, double>& score_by_paper) {
    std::vector<ObsRow> rows;
    for (const auto& p : papers) {
        auto it = score_by_paper.find(p.id);
        if (it == score_by_paper.end()) continue;
        ObsRow r;
        r.paper_id = p.id;
        r.y = it->second;
        r.source = p.source;
        r.ordinal_rank = p.ordinal_rank;
        r.word_count = p.word_count;
        r.field = p.field;
        r.generator_model = p.generator_model;
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw std::invalid_argument("quartile_rows: no scored papers");
    return rows;
}

/// Rows for the domain regression: top-5 mean against the four domain means.
inline std::vector<ObsRow> domain_rows(const std::vector<Paper>& papers,
                                       const std::vector<EvaluationRecord>& records,
                                       const std::string& model_id) {
    auto top5 = mean_scores(records, model_id, Metric::top5);
    std::map<std::string, std::map<std::string, double>> domains;
    for (Metric m : {Metric::originality, Metric::rigor, Metric::scope, Metric::impact}) {
        for (const auto& [id, v] : mean_scores(records, model_id, m))
            domains[id][to_string(m)] = v;
    }
    std::vector<ObsRow> rows;
    for (const auto& p : papers) {
        auto ity = top5.find(p.id);
        auto itd = domains.find(p.id);
        if (ity == top5.end() || itd == domains.end()) continue;
        if (itd->second.size() != 4) continue;
        ObsRow r;
        r.paper_id = p.id;
        r.y = ity->second;
        r.source = p.source;
        r.ordinal_rank = p.ordinal_rank;
        r.word_count = p.word_count;
        r.field = p.field;
        r.domain_scores = itd->second;
        rows.push_back(std::move(r));
    }
    if (rows.empty())
        throw std::invalid_argument("domain_rows: no papers with all four domain scores");
    return rows;
}

} // namespace peerscreen
