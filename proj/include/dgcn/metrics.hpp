#pragma once

// Caption quality metrics: BLEU-n, ROUGE-L, and corpus-level CIDEr, plus the
// scalar difficulty score built from them. All scoring is pure and safe to
// call from any thread.

#include <string>
#include <vector>

namespace dgcn {

using Tokens = std::vector<std::string>;

// Lowercases, removes punctuation characters, and splits on whitespace.
Tokens tokenize(const std::string& text);

// Sentence BLEU-n: geometric mean of clipped k-gram precisions for k = 1..n,
// times the brevity penalty min(1, e^{1 - r/c}) where r is the reference
// length closest to the candidate length (ties resolved toward the shorter
// reference). A zero precision at any order makes the score 0 unless
// `smooth` turns on add-one smoothing of the k-gram counts. A candidate
// shorter than k tokens scores 0 regardless of smoothing.
double bleu_n(const Tokens& candidate, const std::vector<Tokens>& references,
              int n, bool smooth = false);

// ROUGE-L: longest-common-subsequence F-score, maximized over references.
// F = (1 + beta^2) P R / (R + beta^2 P) with P = LCS/|candidate| and
// R = LCS/|reference|.
double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references,
               double beta = 1.2);

// Corpus CIDEr. For n = 1..4 each sentence becomes a tf-idf vector over its
// n-grams with idf = log(corpus_size / df), df counted as the number of
// images whose reference set contains the n-gram (clipped to 1 for unseen
// n-grams). The per-reference similarity is the clipped product
// sum(min(g_c, g_r) * g_r) / (|g_c| |g_r|), scaled by the Gaussian length
// penalty exp(-(l_c - l_r)^2 / (2 * 6^2)); scores average over references,
// then over n, then scale by 10.
struct CiderResult {
    std::vector<double> per_image;
    double mean = 0.0;
};
CiderResult cider(const std::vector<Tokens>& candidates,
                  const std::vector<std::vector<Tokens>>& references);

// ==== difficulty scoring ====

// Which metric grades a generated caption when estimating sample difficulty.
enum class DifficultySpec {
    bleu1,
    bleu4,
    mean_bleu1_bleu4,
};

const char* difficulty_spec_name(DifficultySpec spec);
DifficultySpec difficulty_spec_from_name(const std::string& name);

// The configured metric value in [0, 1]; higher means the caption matches the
// references better (callers invert it into a difficulty as needed).
double difficulty_metric(const Tokens& candidate,
                         const std::vector<Tokens>& references,
                         DifficultySpec spec = DifficultySpec::mean_bleu1_bleu4);

}  // namespace dgcn
