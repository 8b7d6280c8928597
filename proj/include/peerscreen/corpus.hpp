#pragma once

// Manuscript corpus: ingestion, redaction, truncation, word statistics and
// the line-delimited JSON paper store (one object per line, UTF-8).

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "peerscreen/csv.hpp"
#include "peerscreen/mathx.hpp"

namespace peerscreen {

enum class Source { ranked, unranked, ai_generated };
enum class FieldTag { applied_micro, micro, macro, general, finance, others };

inline std::string to_string(Source s) {
    switch (s) {
        case Source::ranked: return "ranked";
        case Source::unranked: return "unranked";
        case Source::ai_generated: return "ai_generated";
    }
    throw std::logic_error("bad Source");
}

inline Source source_from_string(const std::string& s) {
    if (s == "ranked") return Source::ranked;
    if (s == "unranked") return Source::unranked;
    if (s == "ai_generated") return Source::ai_generated;
    throw std::invalid_argument("unknown source: " + s);
}

inline std::string to_string(FieldTag f) {
    switch (f) {
        case FieldTag::applied_micro: return "applied_micro";
        case FieldTag::micro: return "micro";
        case FieldTag::macro: return "macro";
        case FieldTag::general: return "general";
        case FieldTag::finance: return "finance";
        case FieldTag::others: return "others";
    }
    throw std::logic_error("bad FieldTag");
}

inline FieldTag field_from_string(const std::string& s) {
    if (s == "applied_micro") return FieldTag::applied_micro;
    if (s == "micro") return FieldTag::micro;
    if (s == "macro") return FieldTag::macro;
    if (s == "general") return FieldTag::general;
    if (s == "finance") return FieldTag::finance;
    if (s == "others") return FieldTag::others;
    throw std::invalid_argument("unknown field: " + s);
}

inline const std::vector<FieldTag>& all_fields() {
    static const std::vector<FieldTag> v = {
        FieldTag::applied_micro, FieldTag::micro, FieldTag::macro,
        FieldTag::general, FieldTag::finance, FieldTag::others};
    return v;
}

/// Whitespace-delimited token count. This is the word counter used
/// everywhere; word_count fields are always recomputed with it.
inline std::size_t count_words(const std::string& text) {
    std::size_t n = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++n;
        }
    }
    return n;
}

struct Paper {
    std::string id;
    std::string text;
    std::size_t word_count = 0;
    Source source = Source::ranked;
    std::optional<std::string> generator_model;
    FieldTag field = FieldTag::general;
    std::optional<int> ordinal_rank;
    std::optional<int> actual_rank;
    std::optional<std::string> journal_id;  // stored, never shown to evaluators

    void validate() const {
        if (id.empty()) throw std::invalid_argument("paper id is empty");
        if (word_count != count_words(text))
            throw std::invalid_argument("word_count out of sync for paper " + id);
        if (source == Source::ranked) {
            if (!ordinal_rank || !actual_rank)
                throw std::invalid_argument("ranked paper " + id + " missing ranks");
        } else {
            if (ordinal_rank || actual_rank)
                throw std::invalid_argument("rank given for " + to_string(source) +
                                            " paper " + id);
        }
        if ((source == Source::ai_generated) != generator_model.has_value())
            throw std::invalid_argument(
                "generator_model must be present exactly when source=ai_generated (" + id + ")");
        if (ordinal_rank && *ordinal_rank < 1)
            throw std::invalid_argument("ordinal_rank must be >= 1");
        if (actual_rank && *actual_rank < 1)
            throw std::invalid_argument("actual_rank must be >= 1");
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"id", id},
                         {"text", text},
                         {"word_count", word_count},
                         {"source", to_string(source)},
                         {"field", to_string(field)}};
        if (generator_model) j["generator_model"] = *generator_model;
        if (ordinal_rank) j["ordinal_rank"] = *ordinal_rank;
        if (actual_rank) j["actual_rank"] = *actual_rank;
        if (journal_id) j["journal_id"] = *journal_id;
        return j;
    }

    static Paper from_json(const nlohmann::json& j) {
        Paper p;
        p.id = j.at("id").get<std::string>();
        p.text = j.at("text").get<std::string>();
        p.word_count = j.at("word_count").get<std::size_t>();
        p.source = source_from_string(j.at("source").get<std::string>());
        p.field = field_from_string(j.at("field").get<std::string>());
        if (j.contains("generator_model")) p.generator_model = j["generator_model"].get<std::string>();
        if (j.contains("ordinal_rank")) p.ordinal_rank = j["ordinal_rank"].get<int>();
        if (j.contains("actual_rank")) p.actual_rank = j["actual_rank"].get<int>();
        if (j.contains("journal_id")) p.journal_id = j["journal_id"].get<std::string>();
        return p;
    }
};

struct PaperMeta {
    std::string id;
    Source source = Source::ranked;
    FieldTag field = FieldTag::general;
    std::optional<std::string> generator_model;
    std::optional<int> ordinal_rank;
    std::optional<int> actual_rank;
    std::optional<std::string> journal_id;
};

inline Paper ingest_paper(const std::string& raw_text, const PaperMeta& meta) {
    if (count_words(raw_text) == 0)
        throw std::invalid_argument("ingest: empty text for paper " + meta.id);
    Paper p;
    p.id = meta.id;
    p.text = raw_text;
    p.word_count = count_words(raw_text);
    p.source = meta.source;
    p.field = meta.field;
    p.generator_model = meta.generator_model;
    p.ordinal_rank = meta.ordinal_rank;
    p.actual_rank = meta.actual_rank;
    p.journal_id = meta.journal_id;
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Redaction

struct RedactionRules {
    std::vector<std::string> name_patterns;
    std::vector<std::string> affiliation_patterns;
    std::vector<std::string> journal_patterns;
    std::vector<std::string> injection_patterns;
    std::string placeholder = "[REDACTED]";
    bool strict = false;

    std::vector<std::string> all_patterns() const {
        std::vector<std::string> v;
        for (const auto* list : {&name_patterns, &affiliation_patterns,
                                 &journal_patterns, &injection_patterns})
            v.insert(v.end(), list->begin(), list->end());
        return v;
    }

    void validate() const {
        if (strict) {
            if (name_patterns.empty() || affiliation_patterns.empty() ||
                journal_patterns.empty() || injection_patterns.empty())
                throw std::invalid_argument("strict redaction requires all pattern lists nonempty");
        }
        for (const auto& pat : all_patterns()) {
            if (pat.empty())
                throw std::invalid_argument("redaction pattern must be nonempty");
            if (contains_ci(placeholder, pat))
                throw std::invalid_argument("placeholder contains pattern '" + pat + "'");
        }
    }

    // ASCII case-insensitive substring check.
    static bool contains_ci(const std::string& hay, const std::string& needle) {
        return find_ci(hay, needle, 0) != std::string::npos;
    }

    static std::size_t find_ci(const std::string& hay, const std::string& needle,
                               std::size_t from) {
        if (needle.empty() || needle.size() > hay.size()) return std::string::npos;
        auto lower = [](unsigned char c) { return std::tolower(c); };
        for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
            std::size_t k = 0;
            while (k < needle.size() &&
                   lower(static_cast<unsigned char>(hay[i + k])) ==
                       lower(static_cast<unsigned char>(needle[k])))
                ++k;
            if (k == needle.size()) return i;
        }
        return std::string::npos;
    }
};

struct RemovalEntry {
    std::string pattern;
    std::size_t count = 0;
};

struct RedactionResult {
    Paper paper;
    std::vector<RemovalEntry> removals;  // one entry per pattern that matched

    std::size_t total_removed() const {
        std::size_t n = 0;
        for (const auto& r : removals) n += r.count;
        return n;
    }
};

/// Case-insensitive literal redaction. Passes repeat until no pattern occurs
/// anywhere in the text, so the result is a fixpoint: redacting twice equals
/// redacting once, and the output provably contains zero pattern occurrences.
inline RedactionResult redact(const Paper& p, const RedactionRules& rules) {
    rules.validate();
    std::vector<std::string> patterns = rules.all_patterns();
    // Longest pattern first so overlapping rules resolve deterministically.
    std::stable_sort(patterns.begin(), patterns.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });

    std::vector<std::size_t> counts(patterns.size(), 0);
    std::string text = p.text;
    const int max_passes = 100;
    bool changed = true;
    int pass = 0;
    while (changed) {
        if (++pass > max_passes)
            throw std::runtime_error("redaction did not reach a fixpoint");
        changed = false;
        std::string out;
        out.reserve(text.size());
        std::size_t i = 0;
        while (i < text.size()) {
            bool matched = false;
            for (std::size_t k = 0; k < patterns.size(); ++k) {
                const std::string& pat = patterns[k];
                if (pat.size() > text.size() - i) continue;
                std::size_t m = 0;
                while (m < pat.size() &&
                       std::tolower(static_cast<unsigned char>(text[i + m])) ==
                           std::tolower(static_cast<unsigned char>(pat[m])))
                    ++m;
                if (m == pat.size()) {
                    out += rules.placeholder;
                    i += pat.size();
                    ++counts[k];
                    matched = true;
                    changed = true;
                    break;
                }
            }
            if (!matched) out += text[i++];
        }
        text = std::move(out);
    }

    RedactionResult res;
    res.paper = p;
    res.paper.text = text;
    res.paper.word_count = count_words(text);
    for (std::size_t k = 0; k < patterns.size(); ++k)
        if (counts[k] > 0) res.removals.push_back({patterns[k], counts[k]});
    return res;
}

/// Redaction report rows: paper_id,pattern,count.
inline void write_redaction_report(csv::Writer& w, const std::string& paper_id,
                                   const std::vector<RemovalEntry>& removals) {
    for (const auto& r : removals)
        w.row({paper_id, r.pattern, std::to_string(r.count)});
}

// ---------------------------------------------------------------------------
// Truncation

/// Keeps the first ceil(fraction * word_count) whitespace tokens, cutting the
/// original bytes at the end of the last kept token so internal whitespace is
/// preserved. fraction = 1 returns the paper unchanged.
inline Paper truncate_text(const Paper& p, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("truncate: fraction must be in (0,1]");
    std::size_t keep = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(p.word_count)));
    if (keep >= p.word_count) return p;

    std::size_t seen = 0, end = 0;
    bool in_token = false;
    for (std::size_t i = 0; i < p.text.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(p.text[i]);
        if (std::isspace(c)) {
            in_token = false;
        } else {
            if (!in_token) {
                in_token = true;
                ++seen;
            }
            if (seen == keep) end = i + 1;
        }
        if (seen > keep) break;
    }
    Paper out = p;
    out.text = p.text.substr(0, end);
    out.word_count = count_words(out.text);
    return out;
}

// ---------------------------------------------------------------------------
// Word statistics

struct WordStats {
    double mean = 0, median = 0, sd = 0;
    std::size_t min = 0, max = 0, n = 0;
};

inline WordStats word_stats(const std::vector<Paper>& papers) {
    if (papers.empty()) throw std::invalid_argument("word_stats: empty corpus");
    std::vector<double> counts;
    counts.reserve(papers.size());
    for (const auto& p : papers) counts.push_back(static_cast<double>(p.word_count));
    std::sort(counts.begin(), counts.end());
    WordStats s;
    s.n = papers.size();
    s.mean = mean(counts);
    s.median = median_of_sorted(counts);
    s.sd = std::sqrt(sample_variance(counts));
    s.min = static_cast<std::size_t>(counts.front());
    s.max = static_cast<std::size_t>(counts.back());
    return s;
}

// ---------------------------------------------------------------------------
// Store: append-only JSONL, single writer (lock file), snapshot readers.

class LockFile {
public:
    explicit LockFile(std::string path) : path_(std::move(path)) {
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f)
            throw std::runtime_error("store is locked by another process: " + path_);
        std::fclose(f);
    }
    ~LockFile() { std::remove(path_.c_str()); }
    LockFile(const LockFile&) = delete;
    LockFile& operator=(const LockFile&) = delete;

private:
    std::string path_;
};

class PaperStore {
public:
    /// Immutable snapshot of the store contents.
    static std::vector<Paper> load(const std::string& path) {
        std::vector<Paper> papers;
        std::ifstream in(path);
        if (!in) return papers;  // absent store reads as empty
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                papers.push_back(Paper::from_json(nlohmann::json::parse(line)));
            } catch (const std::exception& e) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": bad store record: " + e.what());
            }
        }
        return papers;
    }

    static std::optional<Paper> find(const std::vector<Paper>& papers, const std::string& id) {
        for (const auto& p : papers)
            if (p.id == id) return p;
        return std::nullopt;
    }
};

class PaperStoreWriter {
public:
    explicit PaperStoreWriter(const std::string& path)
        : lock_(path + ".lock"), path_(path) {
        for (const auto& p : PaperStore::load(path)) ids_.push_back(p.id);
        out_.open(path, std::ios::app);
        if (!out_) throw std::runtime_error("cannot open store for append: " + path);
    }

    void append(const Paper& p) {
        p.validate();
        if (std::find(ids_.begin(), ids_.end(), p.id) != ids_.end())
            throw std::invalid_argument("duplicate paper id: " + p.id);
        out_ << p.to_json().dump() << '\n';
        out_.flush();
        ids_.push_back(p.id);
    }

    std::size_t size() const { return ids_.size(); }

private:
    LockFile lock_;
    std::string path_;
    std::ofstream out_;
    std::vector<std::string> ids_;
};

} // namespace peerscreen
