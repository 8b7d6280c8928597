#pragma once

// Decision-theoretic desk screening under Gaussian score signals: expected
// loss, the closed-form optimal threshold, separation measures, regime
// comparison, and a seeded Monte Carlo simulator of editorial desk decisions
// in the heuristic (pre) and LLM-assisted (post) regimes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "peerscreen/csv.hpp"
#include "peerscreen/mathx.hpp"
#include "peerscreen/rng.hpp"

namespace peerscreen {

enum class Regime { pre, post };

inline std::string to_string(Regime r) { return r == Regime::pre ? "pre" : "post"; }

inline Regime regime_from_string(const std::string& s) {
    if (s == "pre") return Regime::pre;
    if (s == "post") return Regime::post;
    throw std::invalid_argument("unknown regime: " + s);
}

/// Gaussian signal-regime parameters: score | good ~ N(mu_h, sigma),
/// score | bad ~ N(mu_l, sigma), shared within-class sigma.
struct ScreeningParams {
    double pi = 0.5;     // P(q = 1)
    double c1 = 1.0;     // cost of rejecting a good paper
    double c2 = 1.0;     // cost of accepting a bad paper
    double mu_h = 1.0;
    double mu_l = 0.0;
    double sigma = 1.0;
    Regime regime = Regime::pre;

    void validate() const {
        if (!(pi > 0.0 && pi < 1.0)) throw std::invalid_argument("pi must be in (0,1)");
        if (!(c1 > 0.0)) throw std::invalid_argument("c1 must be > 0");
        if (!(c2 > 0.0)) throw std::invalid_argument("c2 must be > 0");
        if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
    }

    nlohmann::json to_json() const {
        return {{"pi", pi},   {"c1", c1},       {"c2", c2},
                {"mu_h", mu_h}, {"mu_l", mu_l}, {"sigma", sigma},
                {"regime", to_string(regime)}};
    }
    static ScreeningParams from_json(const nlohmann::json& j) {
        ScreeningParams p;
        p.pi = j.at("pi").get<double>();
        p.c1 = j.at("c1").get<double>();
        p.c2 = j.at("c2").get<double>();
        p.mu_h = j.at("mu_h").get<double>();
        p.mu_l = j.at("mu_l").get<double>();
        p.sigma = j.at("sigma").get<double>();
        if (j.contains("regime")) p.regime = regime_from_string(j["regime"].get<std::string>());
        p.validate();
        return p;
    }
};

/// L(delta) = c1 pi Phi((delta-mu_h)/sigma) + c2 (1-pi) (1 - Phi((delta-mu_l)/sigma)):
/// expected cost of false rejections plus false acceptances at threshold delta.
inline double expected_loss(const ScreeningParams& p, double delta) {
    p.validate();
    return p.c1 * p.pi * norm_cdf((delta - p.mu_h) / p.sigma) +
           p.c2 * (1.0 - p.pi) * (1.0 - norm_cdf((delta - p.mu_l) / p.sigma));
}

/// Closed-form minimizer of the expected loss,
///   delta* = (mu_h+mu_l)/2 + sigma^2 ln(c2(1-pi)/(c1 pi)) / (mu_h-mu_l),
/// from the first-order condition. A coarse bracketing grid double-checks
/// global optimality on every call.
inline double optimal_threshold(const ScreeningParams& p) {
    p.validate();
    if (!(p.mu_h > p.mu_l))
        throw std::invalid_argument("optimal_threshold: requires mu_h > mu_l");
    double ratio = p.c2 * (1.0 - p.pi) / (p.c1 * p.pi);
    double delta = 0.5 * (p.mu_h + p.mu_l) +
                   p.sigma * p.sigma * std::log(ratio) / (p.mu_h - p.mu_l);

    double span = 6.0 * p.sigma + (p.mu_h - p.mu_l);
    double best = expected_loss(p, delta);
    for (int i = 0; i <= 200; ++i) {
        double d = delta - span + (2.0 * span) * i / 200.0;
        if (expected_loss(p, d) < best - 1e-9 * (1.0 + best))
            throw std::logic_error("optimal_threshold: closed form beaten by grid probe");
    }
    return delta;
}

/// Signal separation Delta = (mu_h - mu_l) / sigma.
inline double separation(const ScreeningParams& p) {
    p.validate();
    return (p.mu_h - p.mu_l) / p.sigma;
}

struct RegimeComparison {
    double separation_pre = 0.0, separation_post = 0.0;
    double threshold_pre = 0.0, threshold_post = 0.0;
    double loss_pre = 0.0, loss_post = 0.0;
    bool separation_improved = false;
    bool loss_improved = false;

    nlohmann::json to_json() const {
        return {{"separation_pre", separation_pre},
                {"separation_post", separation_post},
                {"threshold_pre", threshold_pre},
                {"threshold_post", threshold_post},
                {"loss_pre", loss_pre},
                {"loss_post", loss_post},
                {"separation_improved", separation_improved},
                {"loss_improved", loss_improved}};
    }
};

/// Minimized losses of two regimes sharing (pi, c1, c2).
inline RegimeComparison compare_regimes(const ScreeningParams& pre, const ScreeningParams& post) {
    pre.validate();
    post.validate();
    if (pre.pi != post.pi || pre.c1 != post.c1 || pre.c2 != post.c2)
        throw std::invalid_argument("compare_regimes: regimes must share (pi, c1, c2)");
    RegimeComparison r;
    r.separation_pre = separation(pre);
    r.separation_post = separation(post);
    r.threshold_pre = optimal_threshold(pre);
    r.threshold_post = optimal_threshold(post);
    r.loss_pre = expected_loss(pre, r.threshold_pre);
    r.loss_post = expected_loss(post, r.threshold_post);
    r.separation_improved = r.separation_post > r.separation_pre;
    r.loss_improved = r.loss_post < r.loss_pre;
    return r;
}

/// Loss-curve samples (delta, L(delta)) for plotting.
inline void write_loss_curve(csv::Writer& w, const ScreeningParams& p, double lo, double hi,
                             int steps) {
    if (steps < 2) throw std::invalid_argument("write_loss_curve: need >= 2 steps");
    w.row({"delta", "loss"});
    for (int i = 0; i < steps; ++i) {
        double d = lo + (hi - lo) * i / (steps - 1.0);
        w.row({csv::fmt(d), csv::fmt(expected_loss(p, d))});
    }
}

// ---------------------------------------------------------------------------
// Signal model and desk simulator

struct AuthorProfile {
    double psi = 0.0;     // prestige score
    double weight = 1.0;  // population share (normalized internally)
};

/// Generative model of editorial signals.
///   pre:  h = gamma_q q~ + gamma_a psi(A) + v,    reject if h < delta0
///   post: s = omega_q (alpha_q q + eta) + omega_f (alpha_f genuine + zeta),
///         reject if s + gamma_a psi(A) < delta
/// The merit impression is q~ = rho q + sqrt(1-rho^2) xi with xi ~ N(0,1), so
/// rho = 1 reproduces q exactly. Fraudulent papers have genuine = 0; good
/// papers are always genuine, bad ones are fraudulent with fraud_rate.
struct SignalModel {
    double gamma_q = 1.0;
    double gamma_a = 0.0;
    std::vector<AuthorProfile> profiles{{0.0, 1.0}};
    double merit_corr = 1.0;  // rho
    double sd_v = 0.0;
    double sd_eta = 0.0;
    double sd_zeta = 0.0;
    double omega_q = 1.0;
    double omega_f = 0.0;
    double alpha_q = 1.0;
    double alpha_f = 1.0;
    double fraud_rate = 0.0;

    void validate() const {
        if (gamma_q < 0 || gamma_a < 0) throw std::invalid_argument("weights must be >= 0");
        if (omega_q < 0 || omega_f < 0) throw std::invalid_argument("weights must be >= 0");
        if (sd_v < 0 || sd_eta < 0 || sd_zeta < 0)
            throw std::invalid_argument("noise sds must be >= 0");
        if (!(merit_corr >= -1.0 && merit_corr <= 1.0))
            throw std::invalid_argument("merit_corr must be in [-1,1]");
        if (!(fraud_rate >= 0.0 && fraud_rate <= 1.0))
            throw std::invalid_argument("fraud_rate must be in [0,1]");
        if (profiles.empty()) throw std::invalid_argument("need at least one author profile");
        double total = 0;
        for (const auto& pr : profiles) {
            if (pr.weight < 0) throw std::invalid_argument("profile weights must be >= 0");
            total += pr.weight;
        }
        if (total <= 0) throw std::invalid_argument("profile weights sum to zero");
    }

    /// The (mu_h, mu_l, sigma) of the regime's decision statistic, for
    /// checking the simulator against the analytic loss. Only defined when
    /// that statistic is exactly two-component Gaussian: author prestige must
    /// be degenerate (single profile or gamma_a = 0) and, for the post
    /// regime, genuineness deterministic given quality (fraud_rate 0 or 1).
    ScreeningParams implied_params(double pi, double c1, double c2, Regime regime) const {
        validate();
        bool psi_degenerate = gamma_a == 0.0;
        if (!psi_degenerate) {
            psi_degenerate = true;
            for (const auto& pr : profiles)
                if (pr.psi != profiles.front().psi) psi_degenerate = false;
        }
        if (!psi_degenerate)
            throw std::invalid_argument(
                "implied_params: prestige mixture; use a single profile or gamma_a = 0");
        double psi_shift = gamma_a == 0.0 ? 0.0 : gamma_a * profiles.front().psi;

        ScreeningParams p;
        p.pi = pi;
        p.c1 = c1;
        p.c2 = c2;
        p.regime = regime;
        if (regime == Regime::pre) {
            p.mu_h = gamma_q * merit_corr + psi_shift;
            p.mu_l = psi_shift;
            p.sigma = std::sqrt(gamma_q * gamma_q * (1.0 - merit_corr * merit_corr) +
                                sd_v * sd_v);
        } else {
            if (fraud_rate != 0.0 && fraud_rate != 1.0)
                throw std::invalid_argument(
                    "implied_params: genuineness mixture; fraud_rate must be 0 or 1");
            double genuine_l = fraud_rate == 1.0 ? 0.0 : 1.0;
            p.mu_h = omega_q * alpha_q + omega_f * alpha_f + psi_shift;
            p.mu_l = omega_f * alpha_f * genuine_l + psi_shift;
            p.sigma = std::sqrt(omega_q * omega_q * sd_eta * sd_eta +
                                omega_f * omega_f * sd_zeta * sd_zeta);
        }
        if (p.sigma <= 0.0)
            throw std::invalid_argument("implied_params: degenerate (zero) signal variance");
        return p;
    }

    nlohmann::json to_json() const {
        nlohmann::json profs = nlohmann::json::array();
        for (const auto& pr : profiles)
            profs.push_back({{"psi", pr.psi}, {"weight", pr.weight}});
        return {{"gamma_q", gamma_q},   {"gamma_a", gamma_a},   {"profiles", profs},
                {"merit_corr", merit_corr}, {"sd_v", sd_v},     {"sd_eta", sd_eta},
                {"sd_zeta", sd_zeta},   {"omega_q", omega_q},   {"omega_f", omega_f},
                {"alpha_q", alpha_q},   {"alpha_f", alpha_f},   {"fraud_rate", fraud_rate}};
    }
    static SignalModel from_json(const nlohmann::json& j) {
        SignalModel m;
        m.gamma_q = j.value("gamma_q", m.gamma_q);
        m.gamma_a = j.value("gamma_a", m.gamma_a);
        if (j.contains("profiles")) {
            m.profiles.clear();
            for (const auto& pj : j["profiles"])
                m.profiles.push_back({pj.at("psi").get<double>(), pj.at("weight").get<double>()});
        }
        m.merit_corr = j.value("merit_corr", m.merit_corr);
        m.sd_v = j.value("sd_v", m.sd_v);
        m.sd_eta = j.value("sd_eta", m.sd_eta);
        m.sd_zeta = j.value("sd_zeta", m.sd_zeta);
        m.omega_q = j.value("omega_q", m.omega_q);
        m.omega_f = j.value("omega_f", m.omega_f);
        m.alpha_q = j.value("alpha_q", m.alpha_q);
        m.alpha_f = j.value("alpha_f", m.alpha_f);
        m.fraud_rate = j.value("fraud_rate", m.fraud_rate);
        m.validate();
        return m;
    }
};

struct DeskOutcome {
    std::size_t n_papers = 0;
    double threshold = 0.0;
    Regime regime = Regime::pre;
    double false_reject_rate = 0.0;  // P(reject | good)
    double false_accept_rate = 0.0;  // P(accept | bad)
    double realized_loss = 0.0;
    double loss_se = 0.0;            // Monte Carlo SE of realized_loss
    double prestige_gap = 0.0;       // rejection-rate gap, high-psi minus low-psi, among good papers
    std::size_t n_good = 0, n_bad = 0;

    nlohmann::json to_json() const {
        return {{"n_papers", n_papers},
                {"threshold", threshold},
                {"regime", to_string(regime)},
                {"false_reject_rate", false_reject_rate},
                {"false_accept_rate", false_accept_rate},
                {"realized_loss", realized_loss},
                {"loss_se", loss_se},
                {"prestige_gap", prestige_gap},
                {"n_good", n_good},
                {"n_bad", n_bad}};
    }
};

/// Simulates n_papers desk decisions under the regime in params.regime at the
/// given threshold. Per-paper streams derive from (seed, paper index), so the
/// result is independent of evaluation order.
inline DeskOutcome simulate_desk(const SignalModel& model, const ScreeningParams& params,
                                 double threshold, std::size_t n_papers, std::uint64_t seed) {
    model.validate();
    params.validate();
    if (n_papers < 1) throw std::invalid_argument("simulate_desk: n_papers must be >= 1");

    double weight_total = 0;
    for (const auto& pr : model.profiles) weight_total += pr.weight;
    double psi_hi = model.profiles.front().psi, psi_lo = model.profiles.front().psi;
    for (const auto& pr : model.profiles) {
        psi_hi = std::max(psi_hi, pr.psi);
        psi_lo = std::min(psi_lo, pr.psi);
    }

    std::size_t n_good = 0, n_bad = 0, good_rejects = 0, bad_accepts = 0;
    std::size_t hi_good = 0, hi_good_rejects = 0, lo_good = 0, lo_good_rejects = 0;
    double loss_sum = 0.0, loss_sq_sum = 0.0;

    for (std::size_t i = 0; i < n_papers; ++i) {
        Rng rng = Rng::stream(seed, i);
        bool good = rng.bernoulli(params.pi);

        double u = rng.uniform() * weight_total;
        double psi = model.profiles.back().psi;
        double acc = 0;
        for (const auto& pr : model.profiles) {
            acc += pr.weight;
            if (u <= acc) { psi = pr.psi; break; }
        }

        bool reject;
        if (params.regime == Regime::pre) {
            double q = good ? 1.0 : 0.0;
            double merit_noise = std::sqrt(std::max(0.0, 1.0 - model.merit_corr * model.merit_corr));
            double q_tilde = model.merit_corr * q + merit_noise * rng.normal();
            double h = model.gamma_q * q_tilde + model.gamma_a * psi +
                       rng.normal(0.0, model.sd_v);
            reject = h < threshold;
        } else {
            double q = good ? 1.0 : 0.0;
            bool genuine = good ? true : !rng.bernoulli(model.fraud_rate);
            double s = model.omega_q * (model.alpha_q * q + rng.normal(0.0, model.sd_eta)) +
                       model.omega_f * (model.alpha_f * (genuine ? 1.0 : 0.0) +
                                        rng.normal(0.0, model.sd_zeta));
            reject = s + model.gamma_a * psi < threshold;
        }

        double loss = 0.0;
        if (good) {
            ++n_good;
            if (reject) { ++good_rejects; loss = params.c1; }
            if (psi == psi_hi) { ++hi_good; hi_good_rejects += reject; }
            if (psi == psi_lo) { ++lo_good; lo_good_rejects += reject; }
        } else {
            ++n_bad;
            if (!reject) { ++bad_accepts; loss = params.c2; }
        }
        loss_sum += loss;
        loss_sq_sum += loss * loss;
    }

    DeskOutcome out;
    out.n_papers = n_papers;
    out.threshold = threshold;
    out.regime = params.regime;
    out.n_good = n_good;
    out.n_bad = n_bad;
    out.false_reject_rate = n_good ? static_cast<double>(good_rejects) / n_good : 0.0;
    out.false_accept_rate = n_bad ? static_cast<double>(bad_accepts) / n_bad : 0.0;
    out.realized_loss = loss_sum / static_cast<double>(n_papers);
    double var = loss_sq_sum / static_cast<double>(n_papers) -
                 out.realized_loss * out.realized_loss;
    out.loss_se = std::sqrt(std::max(0.0, var) / static_cast<double>(n_papers));
    double hi_rate = hi_good ? static_cast<double>(hi_good_rejects) / hi_good : 0.0;
    double lo_rate = lo_good ? static_cast<double>(lo_good_rejects) / lo_good : 0.0;
    out.prestige_gap = psi_hi == psi_lo ? 0.0 : hi_rate - lo_rate;
    return out;
}

} // namespace peerscreen
