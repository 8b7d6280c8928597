#pragma once

// Single-blind bias audit: author/institution variant generation, evaluation
// scheduling, and the clustered regression analysis of the results. Author
// identity is injected as a prompt header, never into the manuscript body, so
// every variant of a paper shares the blind body byte for byte.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "peerscreen/corpus.hpp"
#include "peerscreen/csv.hpp"
#include "peerscreen/evalharness.hpp"
#include "peerscreen/regress.hpp"

namespace peerscreen {

inline const std::vector<std::string>& default_institutions() {
    static const std::vector<std::string> v = {
        "MIT", "Harvard", "LSE", "University of Cape Town",
        "Nanyang Technological University", "Chulalongkorn University"};
    return v;
}

/// Name rosters are configuration, not code: five names per condition plus
/// six institutions.
struct AuthorRosters {
    std::vector<std::string> top_male;
    std::vector<std::string> top_female;
    std::vector<std::string> random_male;
    std::vector<std::string> random_female;
    std::vector<std::string> institutions = default_institutions();

    void validate() const {
        auto need = [](const std::vector<std::string>& v, std::size_t n, const char* what) {
            if (v.size() != n)
                throw std::invalid_argument(std::string("roster '") + what + "' must have " +
                                            std::to_string(n) + " entries, got " +
                                            std::to_string(v.size()));
            for (const auto& s : v)
                if (s.empty()) throw std::invalid_argument(std::string("empty entry in ") + what);
        };
        need(top_male, 5, "top_male");
        need(top_female, 5, "top_female");
        need(random_male, 5, "random_male");
        need(random_female, 5, "random_female");
        need(institutions, 6, "institutions");
    }

    static AuthorRosters from_json(const nlohmann::json& j) {
        AuthorRosters r;
        r.top_male = j.at("top_male").get<std::vector<std::string>>();
        r.top_female = j.at("top_female").get<std::vector<std::string>>();
        r.random_male = j.at("random_male").get<std::vector<std::string>>();
        r.random_female = j.at("random_female").get<std::vector<std::string>>();
        if (j.contains("institutions"))
            r.institutions = j["institutions"].get<std::vector<std::string>>();
        r.validate();
        return r;
    }
};

struct AuthorVariant {
    std::string variant_id;
    std::string condition;  // blind | top_male | top_female | random_male | random_female | institution
    std::vector<std::string> display_names;
    std::optional<std::string> institution;
    std::optional<std::string> gender;

    /// Byline header for render_prompt; absent for the blind baseline.
    std::optional<std::string> author_block() const {
        if (condition == "blind") return std::nullopt;
        if (condition == "institution")
            return "Author affiliation: " + *institution;
        return "Author: " + display_names.front();
    }

    void validate() const {
        if (condition == "blind") {
            if (!display_names.empty() || institution)
                throw std::invalid_argument("blind variant carries no names or institution");
        } else if (condition == "institution") {
            if (!institution || !display_names.empty())
                throw std::invalid_argument("institution variant needs an institution, no names");
        } else {
            if (display_names.size() != 1 || institution)
                throw std::invalid_argument("name variant needs exactly one name, no institution");
        }
    }
};

/// The 27 audit conditions: 1 blind + 20 single-name + 6 institutions, in a
/// deterministic order with deterministic variant ids.
inline std::vector<AuthorVariant> make_variants(const AuthorRosters& rosters) {
    rosters.validate();
    std::vector<AuthorVariant> out;
    out.push_back({"blind", "blind", {}, std::nullopt, std::nullopt});
    auto add_names = [&](const std::vector<std::string>& names, const std::string& condition,
                         const std::string& gender) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            AuthorVariant v;
            v.variant_id = condition + ":" + std::to_string(i + 1);
            v.condition = condition;
            v.display_names = {names[i]};
            v.gender = gender;
            out.push_back(std::move(v));
        }
    };
    add_names(rosters.top_male, "top_male", "male");
    add_names(rosters.top_female, "top_female", "female");
    add_names(rosters.random_male, "random_male", "male");
    add_names(rosters.random_female, "random_female", "female");
    for (const auto& inst : rosters.institutions) {
        AuthorVariant v;
        v.variant_id = "inst:" + inst;
        v.condition = "institution";
        v.institution = inst;
        out.push_back(std::move(v));
    }
    for (const auto& v : out) v.validate();
    return out;
}

/// Spec-shaped convenience: the variants applied to one paper. The paper
/// body is shared untouched across all 27.
inline std::vector<AuthorVariant> make_variants(const Paper&, const AuthorRosters& rosters) {
    return make_variants(rosters);
}

/// Parses a variant id back into (condition, institution) for analysis.
inline std::pair<std::string, std::optional<std::string>> parse_variant_id(
    const std::string& variant_id) {
    if (variant_id == "blind" || variant_id.empty()) return {"blind", std::nullopt};
    auto colon = variant_id.find(':');
    if (colon == std::string::npos)
        throw std::invalid_argument("malformed variant id: " + variant_id);
    std::string head = variant_id.substr(0, colon);
    if (head == "inst") return {"blind", variant_id.substr(colon + 1)};
    return {head, std::nullopt};
}

/// One evaluation per (paper, variant) on the top-5 metric, skipping anything
/// already cached, so re-running a finished audit schedules zero requests.
inline std::vector<EvalJob> schedule_audit(const std::vector<Paper>& papers,
                                           const std::vector<AuthorVariant>& variants,
                                           const std::string& model_id,
                                           const RatingsCache& cache) {
    std::vector<EvalJob> plan;
    for (const auto& p : papers) {
        for (const auto& v : variants) {
            EvalJob job{&p, v.variant_id, v.author_block(), Metric::top5, 1};
            if (!cache.contains(job.key(model_id))) plan.push_back(std::move(job));
        }
    }
    return plan;
}

/// Audit analysis rows: one per evaluation, joined with paper metadata.
inline std::vector<ObsRow> audit_rows(const std::vector<EvaluationRecord>& records,
                                      const std::vector<Paper>& papers,
                                      const std::string& model_id) {
    std::map<std::string, const Paper*> by_id;
    for (const auto& p : papers) by_id[p.id] = &p;
    std::vector<ObsRow> rows;
    for (const auto& rec : records) {
        if (rec.key.model_id != model_id || rec.key.metric != Metric::top5) continue;
        if (rec.failed || !rec.score) continue;  // attrition drops listwise
        auto it = by_id.find(rec.key.paper_id);
        if (it == by_id.end())
            throw std::invalid_argument("audit record for unknown paper " + rec.key.paper_id);
        const Paper& p = *it->second;
        ObsRow row;
        row.paper_id = p.id;
        row.y = static_cast<double>(*rec.score);
        row.source = p.source;
        row.ordinal_rank = p.ordinal_rank;
        row.word_count = p.word_count;
        row.field = p.field;
        row.generator_model = p.generator_model;
        std::tie(row.condition, row.institution) = parse_variant_id(rec.key.variant_id);
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Table-1-style regression: author-condition and institution dummies against
/// the blind reference, rank quartiles, unranked dummy, length terms and
/// field dummies, with cluster-robust errors at the paper id.
inline RegressionResult analyze_audit(const std::vector<EvaluationRecord>& records,
                                      const std::vector<Paper>& papers,
                                      const std::string& model_id) {
    RegressionSpec spec;
    spec.author_conditions = true;
    spec.rank_quartiles = true;
    spec.unranked_dummy = true;
    spec.length_terms = true;
    spec.field_dummies = true;
    spec.vcov = VcovType::cluster_paper;
    auto rows = audit_rows(records, papers, model_id);
    if (rows.empty())
        throw std::invalid_argument("analyze_audit: no usable records for model " + model_id);
    bool any_ai = false;
    for (const auto& r : rows) any_ai |= r.source == Source::ai_generated;
    spec.ai_dummy = any_ai;
    return fit_regression(spec, rows);
}

/// Audit export: paper_id,variant_id,condition,institution,model_id,score.
inline void export_audit_csv(const std::vector<EvaluationRecord>& records, csv::Writer& w) {
    w.row({"paper_id", "variant_id", "condition", "institution", "model_id", "score"});
    for (const auto& r : records) {
        if (r.failed || !r.score || r.key.metric != Metric::top5) continue;
        auto [condition, institution] = parse_variant_id(r.key.variant_id);
        w.row({r.key.paper_id, r.key.variant_id, condition, institution.value_or(""),
               r.key.model_id, std::to_string(*r.score)});
    }
}

// ---------------------------------------------------------------------------
// AI-generated papers

inline FieldTag field_from_label(const std::string& label) {
    if (label == "Macroeconomics") return FieldTag::macro;
    if (label == "Microeconomics") return FieldTag::micro;
    if (label == "Applied Microeconomics") return FieldTag::applied_micro;
    if (label == "Finance") return FieldTag::finance;
    throw std::invalid_argument("unknown generation field: " + label +
                                " (expected Macroeconomics, Microeconomics, "
                                "Applied Microeconomics or Finance)");
}

/// Asks a backend to write a paper and stores the result tagged as
/// AI-generated by that backend's model. The generation prompt is supplied by
/// the caller.
inline Paper generate_fake(Backend& backend, const std::string& field_label,
                           const std::string& generation_prompt, const std::string& id,
                           int retry_limit = 2) {
    if (generation_prompt.empty())
        throw std::invalid_argument("generate_fake: generation prompt required");
    FieldTag field = field_from_label(field_label);
    EvalKey key{id, "generate", backend.model_id(), Metric::top5, 1};
    std::string text;
    for (int attempt = 0;; ++attempt) {
        try {
            text = backend.complete(generation_prompt, key).text;
            break;
        } catch (const BackendError&) {
            if (attempt >= retry_limit) throw;
        }
    }
    PaperMeta meta;
    meta.id = id;
    meta.source = Source::ai_generated;
    meta.field = field;
    meta.generator_model = backend.model_id();
    return ingest_paper(text, meta);
}

} // namespace peerscreen
