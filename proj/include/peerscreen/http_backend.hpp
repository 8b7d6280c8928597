#pragma once

// Chat-completion HTTP backend. One POST per evaluation with a per-style
// request/response field mapping; credentials come from the environment
// variable named in the config, never from config values.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <stdexcept>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "peerscreen/evalharness.hpp"

namespace peerscreen {

namespace detail {

inline std::string utc_now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

inline SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("backend endpoint must be a full URL: " + url);
    auto path_begin = url.find('/', scheme_end + 3);
    if (path_begin == std::string::npos) return {url, "/"};
    return {url.substr(0, path_begin), url.substr(path_begin)};
}

} // namespace detail

class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendConfig config) : config_(std::move(config)) {
        config_.validate();
        if (config_.endpoint.empty())
            throw std::invalid_argument("http backend requires an endpoint URL");
        if (config_.api_style != "openai" && config_.api_style != "anthropic")
            throw std::invalid_argument("unknown api_style: " + config_.api_style);
    }

    std::string model_id() const override { return config_.model_id; }

    BackendResponse complete(const std::string& prompt, const EvalKey&) override {
        auto [origin, path] = detail::split_url(config_.endpoint);
        httplib::Client client(origin);
        client.set_read_timeout(300, 0);
        client.set_connection_timeout(30, 0);

        nlohmann::json body{
            {"model", config_.model_id},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
        httplib::Headers headers{{"Content-Type", "application/json"}};
        const char* key = config_.credential_env.empty()
                              ? nullptr
                              : std::getenv(config_.credential_env.c_str());
        if (!config_.credential_env.empty() && !key)
            throw BackendError("credential env var not set: " + config_.credential_env);
        if (config_.api_style == "anthropic") {
            body["max_tokens"] = 4096;
            if (key) headers.emplace("x-api-key", key);
            headers.emplace("anthropic-version", "2023-06-01");
        } else if (key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res)
            throw BackendError("transport error talking to " + config_.endpoint + ": " +
                               httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300)
            throw BackendError("backend " + config_.model_id + " returned HTTP " +
                               std::to_string(res->status) + ": " + res->body);
        return {extract_text(res->body), detail::utc_now_iso8601()};
    }

private:
    std::string extract_text(const std::string& body) const {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const std::exception& e) {
            throw BackendError(std::string("unparseable backend response: ") + e.what());
        }
        try {
            if (config_.api_style == "anthropic")
                return j.at("content").at(0).at("text").get<std::string>();
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception&) {
            throw BackendError("backend response missing completion text field");
        }
    }

    BackendConfig config_;
};

} // namespace peerscreen
