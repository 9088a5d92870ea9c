#include "dgcn/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <unordered_map>

namespace dgcn {

namespace {

constexpr int kCiderMaxOrder = 4;
constexpr double kCiderSigma = 6.0;

// n-grams are keyed by their tokens joined with an unlikely separator byte
std::string ngram_key(const Tokens& toks, std::size_t start, std::size_t n) {
    std::string key;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) key.push_back('\x1f');
        key += toks[start + i];
    }
    return key;
}

using NgramCounts = std::unordered_map<std::string, int>;

NgramCounts count_ngrams(const Tokens& toks, std::size_t n) {
    NgramCounts counts;
    if (toks.size() >= n)
        for (std::size_t i = 0; i + n <= toks.size(); ++i)
            ++counts[ngram_key(toks, i, n)];
    return counts;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    const std::size_t m = a.size(), n = b.size();
    std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

}  // namespace

// ==== tokenization ====

Tokens tokenize(const std::string& text) {
    Tokens out;
    std::string word;
    for (char ch : text) {
        const auto uc = static_cast<unsigned char>(ch);
        if (std::isspace(uc)) {
            if (!word.empty()) {
                out.push_back(word);
                word.clear();
            }
        } else if (!std::ispunct(uc)) {
            word.push_back(static_cast<char>(std::tolower(uc)));
        }
    }
    if (!word.empty()) out.push_back(word);
    return out;
}

// ==== BLEU ====

double bleu_n(const Tokens& candidate, const std::vector<Tokens>& references,
              int n, bool smooth) {
    if (n < 1 || n > 4)
        throw std::invalid_argument("bleu_n: order must be in 1..4");
    if (references.empty())
        throw std::invalid_argument("bleu_n: need at least one reference");
    const std::size_t c = candidate.size();
    if (c == 0) return 0.0;

    // closest reference length; ties go to the shorter reference
    std::size_t r = references[0].size();
    for (const auto& ref : references) {
        const auto d_new = std::llabs(static_cast<long long>(ref.size()) -
                                      static_cast<long long>(c));
        const auto d_old = std::llabs(static_cast<long long>(r) -
                                      static_cast<long long>(c));
        if (d_new < d_old || (d_new == d_old && ref.size() < r)) r = ref.size();
    }

    double log_sum = 0.0;
    for (int k = 1; k <= n; ++k) {
        const auto cand_counts = count_ngrams(candidate, static_cast<std::size_t>(k));
        std::size_t total = 0, clipped = 0;
        for (const auto& [gram, count] : cand_counts) total += count;
        if (total == 0) return 0.0;  // candidate too short to have k-grams
        NgramCounts best_ref;
        for (const auto& ref : references)
            for (const auto& [gram, count] : count_ngrams(ref, static_cast<std::size_t>(k)))
                best_ref[gram] = std::max(best_ref[gram], count);
        for (const auto& [gram, count] : cand_counts) {
            const auto it = best_ref.find(gram);
            const int limit = it == best_ref.end() ? 0 : it->second;
            clipped += static_cast<std::size_t>(std::min(count, limit));
        }
        double precision;
        if (smooth)
            precision = (static_cast<double>(clipped) + 1.0) /
                        (static_cast<double>(total) + 1.0);
        else if (clipped == 0)
            return 0.0;
        else
            precision = static_cast<double>(clipped) / static_cast<double>(total);
        log_sum += std::log(precision);
    }
    const double geo_mean = std::exp(log_sum / n);
    const double bp =
        c >= r ? 1.0
               : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
    return bp * geo_mean;
}

// ==== ROUGE-L ====

double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references,
               double beta) {
    if (references.empty())
        throw std::invalid_argument("rouge_l: need at least one reference");
    if (candidate.empty()) return 0.0;
    const double b2 = beta * beta;
    double best = 0.0;
    for (const auto& ref : references) {
        if (ref.empty()) continue;
        const auto lcs = static_cast<double>(lcs_length(candidate, ref));
        if (lcs == 0.0) continue;
        const double p = lcs / static_cast<double>(candidate.size());
        const double r = lcs / static_cast<double>(ref.size());
        best = std::max(best, (1.0 + b2) * p * r / (r + b2 * p));
    }
    return best;
}

// ==== CIDEr ====

namespace {

struct TfIdfVector {
    // one map per n-gram order, holding tf * idf weights
    std::vector<std::unordered_map<std::string, double>> weights;
    std::vector<double> norms;
};

TfIdfVector tf_idf(const Tokens& toks, const NgramCounts& df, double corpus_size) {
    TfIdfVector v;
    v.weights.resize(kCiderMaxOrder);
    v.norms.assign(kCiderMaxOrder, 0.0);
    for (int k = 1; k <= kCiderMaxOrder; ++k) {
        for (const auto& [gram, count] : count_ngrams(toks, static_cast<std::size_t>(k))) {
            const auto it = df.find(gram);
            const double seen = it == df.end() ? 1.0 : static_cast<double>(it->second);
            const double w = count * std::log(corpus_size / seen);
            v.weights[k - 1][gram] = w;
            v.norms[k - 1] += w * w;
        }
        v.norms[k - 1] = std::sqrt(v.norms[k - 1]);
    }
    return v;
}

double clipped_similarity(const TfIdfVector& cand, const TfIdfVector& ref,
                          double length_penalty) {
    double total = 0.0;
    for (int k = 0; k < kCiderMaxOrder; ++k) {
        double dot = 0.0;
        for (const auto& [gram, wc] : cand.weights[k]) {
            const auto it = ref.weights[k].find(gram);
            if (it != ref.weights[k].end())
                dot += std::min(wc, it->second) * it->second;
        }
        if (cand.norms[k] > 0.0 && ref.norms[k] > 0.0)
            total += length_penalty * dot / (cand.norms[k] * ref.norms[k]);
    }
    return total / kCiderMaxOrder;
}

}  // namespace

CiderResult cider(const std::vector<Tokens>& candidates,
                  const std::vector<std::vector<Tokens>>& references) {
    const std::size_t n_images = candidates.size();
    if (references.size() != n_images)
        throw std::invalid_argument("cider: candidate/reference count mismatch");
    if (n_images < 2)
        throw std::invalid_argument(
            "cider: needs a corpus of at least two images; use bleu for single "
            "images");
    for (const auto& refs : references)
        if (refs.empty())
            throw std::invalid_argument("cider: every image needs a reference");

    // document frequency: number of images whose reference set holds the gram
    NgramCounts df;
    for (const auto& refs : references) {
        NgramCounts image_grams;
        for (const auto& ref : refs)
            for (int k = 1; k <= kCiderMaxOrder; ++k)
                for (const auto& [gram, count] : count_ngrams(ref, static_cast<std::size_t>(k)))
                    image_grams[gram] = 1;
        for (const auto& [gram, one] : image_grams) df[gram] += one;
    }

    const auto corpus_size = static_cast<double>(n_images);
    CiderResult result;
    result.per_image.reserve(n_images);
    double sum = 0.0;
    for (std::size_t i = 0; i < n_images; ++i) {
        const auto cand_vec = tf_idf(candidates[i], df, corpus_size);
        double image_score = 0.0;
        for (const auto& ref : references[i]) {
            const auto ref_vec = tf_idf(ref, df, corpus_size);
            const double delta = static_cast<double>(candidates[i].size()) -
                                 static_cast<double>(ref.size());
            const double penalty =
                std::exp(-delta * delta / (2.0 * kCiderSigma * kCiderSigma));
            image_score += clipped_similarity(cand_vec, ref_vec, penalty);
        }
        image_score = 10.0 * image_score / static_cast<double>(references[i].size());
        result.per_image.push_back(image_score);
        sum += image_score;
    }
    result.mean = sum / corpus_size;
    return result;
}

// ==== difficulty ====

const char* difficulty_spec_name(DifficultySpec spec) {
    switch (spec) {
        case DifficultySpec::bleu1: return "bleu1";
        case DifficultySpec::bleu4: return "bleu4";
        case DifficultySpec::mean_bleu1_bleu4: return "mean_bleu1_bleu4";
    }
    throw std::invalid_argument("difficulty_spec_name: unknown spec");
}

DifficultySpec difficulty_spec_from_name(const std::string& name) {
    if (name == "bleu1") return DifficultySpec::bleu1;
    if (name == "bleu4") return DifficultySpec::bleu4;
    if (name == "mean_bleu1_bleu4") return DifficultySpec::mean_bleu1_bleu4;
    throw std::invalid_argument("unknown difficulty metric: " + name);
}

double difficulty_metric(const Tokens& candidate,
                         const std::vector<Tokens>& references,
                         DifficultySpec spec) {
    switch (spec) {
        case DifficultySpec::bleu1: return bleu_n(candidate, references, 1);
        case DifficultySpec::bleu4: return bleu_n(candidate, references, 4);
        case DifficultySpec::mean_bleu1_bleu4:
            return 0.5 * (bleu_n(candidate, references, 1) +
                          bleu_n(candidate, references, 4));
    }
    throw std::invalid_argument("difficulty_metric: unknown spec");
}

}  // namespace dgcn
