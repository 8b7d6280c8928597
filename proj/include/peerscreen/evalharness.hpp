#pragma once

// LLM evaluation harness: backends, score parsing, repetition, caching and
// aggregation. Backends satisfy a one-method interface so the whole pipeline
// runs offline against deterministic mocks.

#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "peerscreen/corpus.hpp"
#include "peerscreen/csv.hpp"
#include "peerscreen/prompts.hpp"
#include "peerscreen/rng.hpp"

namespace peerscreen {

struct EvalKey {
    std::string paper_id;
    std::string variant_id;  // blank for the anonymized main study
    std::string model_id;
    Metric metric = Metric::top5;
    int repetition_index = 1;

    std::string cache_key() const {
        return paper_id + '\x1f' + variant_id + '\x1f' + model_id + '\x1f' +
               to_string(metric) + '\x1f' + std::to_string(repetition_index);
    }
    bool same_series(const EvalKey& o) const {
        return paper_id == o.paper_id && variant_id == o.variant_id &&
               model_id == o.model_id && metric == o.metric;
    }
};

struct EvaluationRecord {
    EvalKey key;
    std::string raw_response;
    std::optional<int> score;  // absent when failed
    bool failed = false;
    std::string timestamp;

    nlohmann::json to_json() const {
        nlohmann::json j{{"paper_id", key.paper_id},
                         {"variant_id", key.variant_id},
                         {"model_id", key.model_id},
                         {"metric", to_string(key.metric)},
                         {"repetition_index", key.repetition_index},
                         {"raw_response", raw_response},
                         {"failed", failed},
                         {"timestamp", timestamp}};
        if (score) j["score"] = *score;
        else j["score"] = nullptr;
        return j;
    }

    static EvaluationRecord from_json(const nlohmann::json& j) {
        EvaluationRecord r;
        r.key.paper_id = j.at("paper_id").get<std::string>();
        r.key.variant_id = j.at("variant_id").get<std::string>();
        r.key.model_id = j.at("model_id").get<std::string>();
        r.key.metric = metric_from_string(j.at("metric").get<std::string>());
        r.key.repetition_index = j.at("repetition_index").get<int>();
        r.raw_response = j.at("raw_response").get<std::string>();
        r.failed = j.at("failed").get<bool>();
        r.timestamp = j.at("timestamp").get<std::string>();
        if (!j.at("score").is_null()) r.score = j["score"].get<int>();
        return r;
    }
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

struct IntToken {
    long long value;
    std::size_t begin;
};

// Standalone integer tokens, skipping digit runs glued to identifiers
// ("GPT-4o", "top-5") and decimal numbers ("3.5").
inline std::vector<IntToken> integer_tokens(const std::string& s) {
    std::vector<IntToken> out;
    auto is_alnum = [&](std::size_t i) {
        return std::isalnum(static_cast<unsigned char>(s[i])) != 0;
    };
    std::size_t i = 0;
    while (i < s.size()) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) { ++i; continue; }
        std::size_t j = i;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        bool ok = true;
        if (i > 0) {
            if (is_alnum(i - 1)) ok = false;
            else if (s[i - 1] == '.' && i >= 2 && std::isdigit(static_cast<unsigned char>(s[i - 2])))
                ok = false;  // fraction digits of a decimal
            else if (s[i - 1] == '-' && i >= 2 && is_alnum(i - 2))
                ok = false;  // hyphenated token like "top-5"
        }
        if (j < s.size()) {
            if (is_alnum(j)) ok = false;
            else if (s[j] == '.' && j + 1 < s.size() &&
                     std::isdigit(static_cast<unsigned char>(s[j + 1])))
                ok = false;  // integer part of a decimal
        }
        if (ok) {
            long long v = 0;
            bool overflow = j - i > 12;
            if (!overflow) v = std::stoll(s.substr(i, j - i));
            if (!overflow) out.push_back({v, i});
        }
        i = j;
    }
    return out;
}

inline bool rating_context(const std::string& s, std::size_t token_begin) {
    std::size_t from = token_begin > 24 ? token_begin - 24 : 0;
    std::string window = s.substr(from, token_begin - from);
    for (auto& c : window) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return window.find("rating") != std::string::npos ||
           window.find("score") != std::string::npos ||
           window.find("rate") != std::string::npos;
}

} // namespace detail

/// Extracts the numeric rating from a free-text response: the first integer
/// token inside the metric scale wins. Out-of-scale integers may be skipped
/// only when a later in-scale integer sits in an explicit rating/score
/// context; otherwise the response is unparseable.
inline int parse_score(const std::string& response, Metric metric) {
    if (response.empty()) throw ParseError("empty response");
    const MetricScale scale = metric_scale(metric);
    const auto tokens = detail::integer_tokens(response);
    std::size_t first_in_scale = tokens.size();
    for (std::size_t k = 0; k < tokens.size(); ++k) {
        if (scale.contains(tokens[k].value)) { first_in_scale = k; break; }
    }
    if (first_in_scale == tokens.size())
        throw ParseError("no integer within [" + std::to_string(scale.lo) + "," +
                         std::to_string(scale.hi) + "] in response");
    if (first_in_scale == 0) return static_cast<int>(tokens[0].value);
    for (std::size_t k = first_in_scale; k < tokens.size(); ++k) {
        if (scale.contains(tokens[k].value) &&
            detail::rating_context(response, tokens[k].begin))
            return static_cast<int>(tokens[k].value);
    }
    throw ParseError("leading integers out of scale and no in-scale integer in a rating/score context");
}

// ---------------------------------------------------------------------------
// Backends

struct BackendResponse {
    std::string text;
    std::string timestamp;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string model_id() const = 0;
    virtual BackendResponse complete(const std::string& prompt, const EvalKey& key) = 0;
};

struct BackendConfig {
    std::string model_id;
    std::string endpoint;        // chat-completion URL
    std::string credential_env;  // env var holding the API key; never a literal key
    int max_in_flight = 1;
    int retry_limit = 2;
    std::string api_style = "openai";  // request/response field mapping: openai | anthropic
    // Temperature is intentionally never sent; providers use their defaults.

    void validate() const {
        if (model_id.empty()) throw std::invalid_argument("backend: model_id required");
        if (max_in_flight < 1) throw std::invalid_argument("backend: max_in_flight must be >= 1");
        if (retry_limit < 0) throw std::invalid_argument("backend: retry_limit must be >= 0");
    }
};

/// Deterministic test double. Scores are clamp(round(latent + gaussian noise))
/// with the noise stream derived from (seed, evaluation key), so identical
/// seeds reproduce identical record sets byte for byte.
class MockBackend : public Backend {
public:
    using LatentFn = std::function<double(const Paper&, const EvalKey&)>;

    MockBackend(std::string model_id, std::vector<Paper> papers, LatentFn latent,
                double noise_sd, std::uint64_t seed)
        : model_id_(std::move(model_id)),
          latent_(std::move(latent)),
          noise_sd_(noise_sd),
          seed_(seed) {
        if (noise_sd < 0) throw std::invalid_argument("mock: noise_sd must be >= 0");
        for (auto& p : papers) papers_.emplace(p.id, std::move(p));
    }

    MockBackend(std::string model_id, std::vector<Paper> papers,
                std::function<double(const Paper&)> latent, double noise_sd,
                std::uint64_t seed)
        : MockBackend(std::move(model_id), std::move(papers),
                      [fn = std::move(latent)](const Paper& p, const EvalKey&) { return fn(p); },
                      noise_sd, seed) {}

    std::string model_id() const override { return model_id_; }

    BackendResponse complete(const std::string&, const EvalKey& key) override {
        ++requests_;
        auto it = papers_.find(key.paper_id);
        if (it == papers_.end())
            throw BackendError("mock backend has no paper " + key.paper_id);
        double latent = latent_(it->second, key);
        if (noise_sd_ > 0) {
            Rng rng = Rng::stream(seed_, std::hash<std::string>{}(key.cache_key()));
            latent += rng.normal(0.0, noise_sd_);
        }
        const MetricScale scale = metric_scale(key.metric);
        long long v = std::llround(latent);
        v = std::max<long long>(scale.lo, std::min<long long>(scale.hi, v));
        return {"Rating: " + std::to_string(v), "1970-01-01T00:00:00Z"};
    }

    /// Total completions served; lets tests prove cache hits issue none.
    std::int64_t request_count() const { return requests_; }

private:
    std::string model_id_;
    std::unordered_map<std::string, Paper> papers_;
    LatentFn latent_;
    double noise_sd_;
    std::uint64_t seed_;
    std::atomic<std::int64_t> requests_{0};
};

inline std::unique_ptr<MockBackend> mock_backend(std::string model_id,
                                                 std::vector<Paper> papers,
                                                 std::function<double(const Paper&)> quality_fn,
                                                 double noise_sd, std::uint64_t seed) {
    return std::make_unique<MockBackend>(std::move(model_id), std::move(papers),
                                         std::move(quality_fn), noise_sd, seed);
}

// ---------------------------------------------------------------------------
// Ratings cache: line-delimited JSON, duplicate keys rejected.

class RatingsCache {
public:
    /// In-memory cache; give a path to persist appends.
    explicit RatingsCache(std::string path = "") : path_(std::move(path)) {
        if (path_.empty()) return;
        std::ifstream in(path_);
        if (!in) return;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto rec = EvaluationRecord::from_json(nlohmann::json::parse(line));
            records_.emplace(rec.key.cache_key(), std::move(rec));
        }
    }

    bool contains(const EvalKey& key) const {
        std::lock_guard lock(mu_);
        return records_.count(key.cache_key()) > 0;
    }

    std::optional<EvaluationRecord> get(const EvalKey& key) const {
        std::lock_guard lock(mu_);
        auto it = records_.find(key.cache_key());
        if (it == records_.end()) return std::nullopt;
        return it->second;
    }

    void put(const EvaluationRecord& rec) {
        if (rec.score && !metric_scale(rec.key.metric).contains(*rec.score))
            throw std::invalid_argument("score outside metric scale for " +
                                        rec.key.cache_key());
        std::lock_guard lock(mu_);
        auto [it, inserted] = records_.emplace(rec.key.cache_key(), rec);
        if (!inserted)
            throw std::invalid_argument("duplicate evaluation key: " + rec.key.cache_key());
        if (!path_.empty()) {
            std::ofstream out(path_, std::ios::app);
            out << rec.to_json().dump() << '\n';
        }
    }

    std::vector<EvaluationRecord> all() const {
        std::lock_guard lock(mu_);
        std::vector<EvaluationRecord> v;
        v.reserve(records_.size());
        for (const auto& [_, r] : records_) v.push_back(r);
        return v;
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return records_.size();
    }

private:
    std::string path_;
    mutable std::mutex mu_;
    std::map<std::string, EvaluationRecord> records_;  // ordered for stable export
};

// ---------------------------------------------------------------------------
// Evaluation driver

struct EvalJob {
    const Paper* paper = nullptr;
    std::string variant_id;
    std::optional<std::string> author_block;
    Metric metric = Metric::top5;
    int repetition_index = 1;

    EvalKey key(const std::string& model_id) const {
        return {paper->id, variant_id, model_id, metric, repetition_index};
    }
};

namespace detail {

inline EvaluationRecord execute_job(const EvalJob& job, Backend& backend, int retry_limit) {
    EvalKey key = job.key(backend.model_id());
    std::string prompt = render_prompt(job.metric, job.paper->text, job.author_block);
    EvaluationRecord rec;
    rec.key = key;
    for (int attempt = 0; attempt <= retry_limit; ++attempt) {
        try {
            BackendResponse resp = backend.complete(prompt, key);
            rec.raw_response = resp.text;
            rec.timestamp = resp.timestamp;
            rec.score = parse_score(resp.text, job.metric);
            rec.failed = false;
            return rec;
        } catch (const ParseError&) {
            rec.failed = true;  // re-ask
        } catch (const BackendError& e) {
            rec.failed = true;
            rec.raw_response = e.what();
        }
    }
    rec.score.reset();
    return rec;  // marked failed; the run continues
}

} // namespace detail

/// Runs all jobs not already cached, up to `max_in_flight` concurrently.
/// Returns the records for every requested job, cache hits included. Cached
/// keys issue zero backend requests, so re-running a plan is a no-op.
inline std::vector<EvaluationRecord> run_jobs(const std::vector<EvalJob>& jobs,
                                              Backend& backend, RatingsCache& cache,
                                              int max_in_flight = 1, int retry_limit = 2) {
    if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < jobs.size(); ++i)
        if (!cache.contains(jobs[i].key(backend.model_id()))) pending.push_back(i);

    if (max_in_flight == 1 || pending.size() <= 1) {
        for (std::size_t i : pending)
            cache.put(detail::execute_job(jobs[i], backend, retry_limit));
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        std::size_t nworkers = std::min<std::size_t>(max_in_flight, pending.size());
        std::mutex err_mu;
        std::vector<std::string> errors;
        for (std::size_t w = 0; w < nworkers; ++w) {
            workers.emplace_back([&] {
                for (;;) {
                    std::size_t k = next.fetch_add(1);
                    if (k >= pending.size()) return;
                    try {
                        cache.put(detail::execute_job(jobs[pending[k]], backend, retry_limit));
                    } catch (const std::exception& e) {
                        std::lock_guard lock(err_mu);
                        errors.emplace_back(e.what());
                    }
                }
            });
        }
        for (auto& t : workers) t.join();
        if (!errors.empty()) throw std::runtime_error("evaluation worker failed: " + errors.front());
    }

    std::vector<EvaluationRecord> out;
    out.reserve(jobs.size());
    for (const auto& job : jobs) {
        auto rec = cache.get(job.key(backend.model_id()));
        if (!rec) throw std::logic_error("job missing from cache after run");
        out.push_back(std::move(*rec));
    }
    return out;
}

/// Repeated evaluation of one paper on one metric (the main-study protocol).
inline std::vector<EvaluationRecord> evaluate(const Paper& p, Backend& backend,
                                              Metric metric, int repetitions,
                                              RatingsCache& cache, int max_in_flight = 1,
                                              int retry_limit = 2) {
    if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
    std::vector<EvalJob> jobs;
    for (int r = 1; r <= repetitions; ++r)
        jobs.push_back({&p, "", std::nullopt, metric, r});
    return run_jobs(jobs, backend, cache, max_in_flight, retry_limit);
}

/// Arithmetic mean of the scores in one (paper, variant, model, metric)
/// series. Failed records are excluded; an all-failed series is an error.
inline double aggregate(const std::vector<EvaluationRecord>& records) {
    if (records.empty()) throw std::invalid_argument("aggregate: no records");
    for (const auto& r : records)
        if (!r.key.same_series(records.front().key))
            throw std::invalid_argument("aggregate: mixed evaluation series");
    double sum = 0;
    std::size_t n = 0;
    for (const auto& r : records) {
        if (r.failed || !r.score) continue;
        sum += *r.score;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("aggregate: all records failed");
    return sum / static_cast<double>(n);
}

/// Ratings export: paper_id,variant_id,model_id,metric,rep,score. Failed
/// records stay in the JSONL cache but are omitted here.
inline void export_ratings_csv(const std::vector<EvaluationRecord>& records, csv::Writer& w) {
    w.row({"paper_id", "variant_id", "model_id", "metric", "rep", "score"});
    for (const auto& r : records) {
        if (r.failed || !r.score) continue;
        w.row({r.key.paper_id, r.key.variant_id, r.key.model_id,
               to_string(r.key.metric), std::to_string(r.key.repetition_index),
               std::to_string(*r.score)});
    }
}

} // namespace peerscreen
