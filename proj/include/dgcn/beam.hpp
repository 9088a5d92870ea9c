#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgcn {

struct BeamConfig {
    std::size_t beam_width = 3;
    std::size_t max_len = 16;       // generated tokens, end marker included
    double length_alpha = 0.0;      // 0 keeps raw log probability
};

// A candidate caption: generated tokens (no start marker; the end marker, when
// reached, is not stored in tokens), the log probability of each generation
// step (the end-marker step included), and the accumulated total.
struct BeamHypothesis {
    std::vector<int> tokens;
    std::vector<double> step_log_probs;
    double log_prob = 0.0;
    bool ended_by_eos = false;
};

namespace detail {

inline double beam_score(const BeamHypothesis& h, double alpha) {
    if (alpha == 0.0) return h.log_prob;
    const double len = static_cast<double>(std::max<std::size_t>(h.tokens.size(), 1));
    return h.log_prob / std::pow(len, alpha);
}

inline bool beam_better(const BeamHypothesis& a, const BeamHypothesis& b,
                        double alpha) {
    const double sa = beam_score(a, alpha), sb = beam_score(b, alpha);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;  // deterministic tie break
}

}  // namespace detail

// Width-limited best-first search over token sequences. step(prefix) must
// return log probabilities over the vocabulary for the next token given the
// generated prefix (start marker handling is the step function's business).
// Each round expands every live prefix by every token, ranks all candidates
// together, and keeps the top beam_width: kept candidates that emitted eos or
// hit max_len retire to the running best, the rest stay live. Width 1 is
// therefore exactly greedy argmax decoding, and a width of at least
// vocab^(max_len - 1) never prunes a live prefix before the final round, which
// makes the search exhaustive.
template <typename StepFn>
BeamHypothesis beam_search(StepFn&& step, int eos, std::size_t vocab_size,
                           const BeamConfig& cfg) {
    if (cfg.beam_width == 0)
        throw std::invalid_argument("beam_search: width must be positive");
    if (cfg.max_len == 0)
        throw std::invalid_argument("beam_search: max_len must be positive");
    if (eos < 0 || static_cast<std::size_t>(eos) >= vocab_size)
        throw std::invalid_argument("beam_search: eos outside vocabulary");

    std::vector<BeamHypothesis> alive(1);  // the empty prefix with log-prob zero
    bool have_best = false;
    BeamHypothesis best;

    auto offer_finished = [&](BeamHypothesis h) {
        if (!have_best || detail::beam_better(h, best, cfg.length_alpha)) {
            best = std::move(h);
            have_best = true;
        }
    };

    for (std::size_t depth = 0; depth < cfg.max_len && !alive.empty(); ++depth) {
        std::vector<BeamHypothesis> expansions;
        expansions.reserve(alive.size() * vocab_size);
        for (const auto& h : alive) {
            const std::vector<double> logp = step(h.tokens);
            if (logp.size() != vocab_size)
                throw std::invalid_argument(
                    "beam_search: step returned " + std::to_string(logp.size()) +
                    " scores for vocabulary of " + std::to_string(vocab_size));
            for (std::size_t tok = 0; tok < vocab_size; ++tok) {
                BeamHypothesis ext = h;
                ext.log_prob += logp[tok];
                ext.step_log_probs.push_back(logp[tok]);
                if (static_cast<int>(tok) == eos)
                    ext.ended_by_eos = true;  // eos itself is not stored
                else
                    ext.tokens.push_back(static_cast<int>(tok));
                expansions.push_back(std::move(ext));
            }
        }
        const std::size_t keep = std::min(cfg.beam_width, expansions.size());
        std::partial_sort(expansions.begin(), expansions.begin() + keep,
                          expansions.end(),
                          [&](const BeamHypothesis& a, const BeamHypothesis& b) {
                              return detail::beam_better(a, b, cfg.length_alpha);
                          });
        expansions.resize(keep);
        std::vector<BeamHypothesis> next;
        next.reserve(keep);
        for (auto& cand : expansions) {
            if (cand.ended_by_eos || depth + 1 == cfg.max_len)
                offer_finished(std::move(cand));
            else
                next.push_back(std::move(cand));
        }
        alive = std::move(next);
    }
    return best;
}

}  // namespace dgcn
