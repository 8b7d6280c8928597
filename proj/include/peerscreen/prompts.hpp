#pragma once

// Review prompt templates and rating scales. The template strings are fixed
// verbatim; tests assert their anchor phrases, so any edit here is a
// deliberate protocol change.

#include <optional>
#include <stdexcept>
#include <string>

namespace peerscreen {

enum class Metric { top5, originality, rigor, scope, impact, written_by_ai };

struct MetricScale {
    int lo = 0;
    int hi = 10;
    bool contains(long long v) const { return v >= lo && v <= hi; }
};

inline MetricScale metric_scale(Metric m) {
    return m == Metric::top5 ? MetricScale{1, 6} : MetricScale{0, 10};
}

inline std::string to_string(Metric m) {
    switch (m) {
        case Metric::top5: return "top5";
        case Metric::originality: return "originality";
        case Metric::rigor: return "rigor";
        case Metric::scope: return "scope";
        case Metric::impact: return "impact";
        case Metric::written_by_ai: return "written_by_ai";
    }
    throw std::logic_error("bad Metric");
}

inline Metric metric_from_string(const std::string& s) {
    if (s == "top5") return Metric::top5;
    if (s == "originality") return Metric::originality;
    if (s == "rigor") return Metric::rigor;
    if (s == "scope") return Metric::scope;
    if (s == "impact") return Metric::impact;
    if (s == "written_by_ai") return Metric::written_by_ai;
    throw std::invalid_argument("unknown metric: " + s);
}

inline const std::string& prompt_template(Metric m) {
    static const std::string top5 =
        "In your capacity as a reviewer for one of the most prestigious and highly "
        "selective top-5 economics journals (such as Econometrica, Journal of Political "
        "Economy, or The Quarterly Journal of Economics), please determine whether you "
        "would recommend this submission for publication using the following 6-point "
        "scale: 1 = Definite Reject: Fatal flaws in theory/methodology, insufficient "
        "contribution, or serious validity concerns that make the paper unsuitable for "
        "the journal, 2 = Reject with Option to Resubmit: Significant issues with "
        "theory, methodology, or contribution, but potentially salvageable with major "
        "revisions and fresh review, 3 = Major Revision: Substantial changes needed to "
        "theory, empirics, or exposition, but the core contribution is promising enough "
        "to warrant another round, 4 = Minor Revision: Generally strong paper with few "
        "small changes needed in exposition, robustness checks, or literature "
        "discussion, 5 = Very Minor Revision: Excellent contribution needing only "
        "technical corrections or minor clarifications, 6 = Accept As Is: Exceptional "
        "contribution ready for immediate publication";
    static const std::string originality =
        "In your capacity as an editorial board/reviewer for this paper, please rate "
        "this paper's originality (0 = Completely unoriginal, ..., 10 = Completely "
        "original)";
    static const std::string rigor =
        "In your capacity as an editorial board/reviewer for this paper, please rate "
        "this paper's rigor (0 = Not at all rigorous, ..., 10 = Extremely rigorous)";
    static const std::string scope =
        "In your capacity as an editorial board/reviewer for this paper, please rate "
        "this paper's scope (0 = Narrowest, ..., 10 = Widest)";
    static const std::string impact =
        "In your capacity as an editorial board/reviewer for this paper, please rate "
        "this paper's originality (0 = Minimal impact, ..., 10 = Maximum impact)";
    static const std::string written_by_ai =
        "Please determine whether this paper was written by AI (0 = Definitely "
        "human-written, ..., 10 = Definitely AI-generated)";
    switch (m) {
        case Metric::top5: return top5;
        case Metric::originality: return originality;
        case Metric::rigor: return rigor;
        case Metric::scope: return scope;
        case Metric::impact: return impact;
        case Metric::written_by_ai: return written_by_ai;
    }
    throw std::logic_error("bad Metric");
}

/// Template followed by the manuscript body. In audit mode `author_block`
/// is prepended as a byline header before the body; the body bytes are never
/// touched, so blind and named variants differ only in that header.
inline std::string render_prompt(Metric metric, const std::string& paper_text,
                                 const std::optional<std::string>& author_block = std::nullopt) {
    if (paper_text.empty()) throw std::invalid_argument("render_prompt: empty paper text");
    std::string out = prompt_template(metric);
    out += "\n\n";
    if (author_block && !author_block->empty()) {
        out += *author_block;
        out += "\n\n";
    }
    out += paper_text;
    return out;
}

} // namespace peerscreen
