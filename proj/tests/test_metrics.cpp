#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dgcn/common.hpp"
#include "dgcn/metrics.hpp"

using namespace dgcn;

// ==== brute-force oracles (independent representations on purpose) ====

namespace {

using Gram = std::vector<std::string>;

std::map<Gram, int> o_ngrams(const Tokens& t, std::size_t k) {
    std::map<Gram, int> out;
    for (std::size_t i = 0; i + k <= t.size(); ++i)
        ++out[Gram(t.begin() + i, t.begin() + i + k)];
    return out;
}

double o_bleu(const Tokens& cand, const std::vector<Tokens>& refs, int n) {
    if (cand.empty()) return 0.0;
    double product = 1.0;
    for (int k = 1; k <= n; ++k) {
        const auto cg = o_ngrams(cand, k);
        long total = 0, hit = 0;
        for (const auto& [g, c] : cg) total += c;
        if (total == 0) return 0.0;
        for (const auto& [g, c] : cg) {
            int best = 0;
            for (const auto& ref : refs) {
                const auto rg = o_ngrams(ref, k);
                const auto it = rg.find(g);
                if (it != rg.end()) best = std::max(best, it->second);
            }
            hit += std::min(c, best);
        }
        if (hit == 0) return 0.0;
        product *= static_cast<double>(hit) / static_cast<double>(total);
    }
    std::size_t r = refs.front().size();
    for (const auto& ref : refs) {
        const auto da = ref.size() > cand.size() ? ref.size() - cand.size()
                                                 : cand.size() - ref.size();
        const auto db =
            r > cand.size() ? r - cand.size() : cand.size() - r;
        if (da < db || (da == db && ref.size() < r)) r = ref.size();
    }
    const double bp = cand.size() >= r
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(r) /
                                               static_cast<double>(cand.size()));
    return bp * std::pow(product, 1.0 / n);
}

std::size_t o_lcs(const Tokens& a, const Tokens& b, std::size_t i, std::size_t j,
                  std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
    if (i == a.size() || j == b.size()) return 0;
    const auto key = std::make_pair(i, j);
    const auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    std::size_t best;
    if (a[i] == b[j])
        best = 1 + o_lcs(a, b, i + 1, j + 1, memo);
    else
        best = std::max(o_lcs(a, b, i + 1, j, memo), o_lcs(a, b, i, j + 1, memo));
    memo[key] = best;
    return best;
}

double o_rouge(const Tokens& cand, const std::vector<Tokens>& refs) {
    if (cand.empty()) return 0.0;
    const double b2 = 1.2 * 1.2;
    double best = 0.0;
    for (const auto& ref : refs) {
        if (ref.empty()) continue;
        std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
        const auto l = static_cast<double>(o_lcs(cand, ref, 0, 0, memo));
        if (l == 0.0) continue;
        const double p = l / cand.size(), r = l / ref.size();
        best = std::max(best, (1.0 + b2) * p * r / (r + b2 * p));
    }
    return best;
}

std::vector<double> o_cider(const std::vector<Tokens>& cands,
                            const std::vector<std::vector<Tokens>>& refs) {
    const double n_images = static_cast<double>(cands.size());
    // document frequency over images
    std::map<Gram, double> df;
    for (const auto& image_refs : refs) {
        std::set<Gram> seen;
        for (const auto& ref : image_refs)
            for (std::size_t k = 1; k <= 4; ++k)
                for (const auto& [g, c] : o_ngrams(ref, k)) seen.insert(g);
        for (const auto& g : seen) df[g] += 1.0;
    }
    auto weigh = [&](const Tokens& t, std::size_t k) {
        std::map<Gram, double> w;
        for (const auto& [g, c] : o_ngrams(t, k)) {
            const auto it = df.find(g);
            const double d = it == df.end() ? 1.0 : it->second;
            w[g] = c * std::log(n_images / d);
        }
        return w;
    };
    std::vector<double> scores;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        double image_total = 0.0;
        for (const auto& ref : refs[i]) {
            const double delta =
                static_cast<double>(cands[i].size()) - static_cast<double>(ref.size());
            const double penalty = std::exp(-delta * delta / 72.0);
            double mean_over_n = 0.0;
            for (std::size_t k = 1; k <= 4; ++k) {
                const auto wc = weigh(cands[i], k);
                const auto wr = weigh(ref, k);
                double dot = 0.0, nc = 0.0, nr = 0.0;
                for (const auto& [g, w] : wc) {
                    nc += w * w;
                    const auto it = wr.find(g);
                    if (it != wr.end()) dot += std::min(w, it->second) * it->second;
                }
                for (const auto& [g, w] : wr) nr += w * w;
                if (nc > 0.0 && nr > 0.0)
                    mean_over_n += penalty * dot / (std::sqrt(nc) * std::sqrt(nr));
            }
            image_total += mean_over_n / 4.0;
        }
        scores.push_back(10.0 * image_total / static_cast<double>(refs[i].size()));
    }
    return scores;
}

Tokens random_sentence(Rng& rng, int max_len, int vocab) {
    const int len = rng.uniform_int(1, max_len);
    Tokens out;
    for (int i = 0; i < len; ++i)
        out.push_back("w" + std::to_string(rng.uniform_int(0, vocab - 1)));
    return out;
}

}  // namespace

// ==== tokenization ====

TEST_CASE("tokenize lowercases, strips punctuation, splits on whitespace") {
    CHECK(tokenize("The CAT, sat!") == Tokens{"the", "cat", "sat"});
    CHECK(tokenize("  a  \t b \n") == Tokens{"a", "b"});
    CHECK(tokenize("don't stop") == Tokens{"dont", "stop"});
    CHECK(tokenize("...") == Tokens{});
    CHECK(tokenize("") == Tokens{});
    CHECK(tokenize("Room 101.") == Tokens{"room", "101"});
}

// ==== BLEU ====

TEST_CASE("bleu hand cases") {
    const Tokens ref = tokenize("the cat is on the mat");
    SUBCASE("perfect match is 1") {
        for (int n = 1; n <= 4; ++n)
            CHECK(bleu_n(ref, {ref}, n) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("clipping caps repeated words at the reference count") {
        const Tokens cand = tokenize("the the the the the the the");
        CHECK(bleu_n(cand, {ref}, 1) == doctest::Approx(2.0 / 7.0).epsilon(1e-12));
    }
    SUBCASE("empty candidate scores 0") {
        CHECK(bleu_n({}, {ref}, 1) == 0.0);
        CHECK(bleu_n({}, {ref}, 4) == 0.0);
    }
    SUBCASE("brevity penalty uses the closest reference length") {
        const Tokens cand = tokenize("the cat");
        const Tokens longer = tokenize("the cat is here");
        // c=2, r=4, both orders perfect: score = e^{1-2} at n=2
        CHECK(bleu_n(cand, {longer}, 2) ==
              doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
        // tie between lengths 2 and 4 resolves to the shorter, so no penalty
        const Tokens c3 = tokenize("a b c");
        CHECK(bleu_n(c3, {tokenize("a b"), tokenize("a b c e")}, 1) ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("a zero precision floors the score unless smoothing is on") {
        const Tokens cand = tokenize("a b");
        const Tokens r2 = tokenize("a c");
        CHECK(bleu_n(cand, {r2}, 2) == 0.0);
        // smoothed: p1=(1+1)/(2+1), p2=(0+1)/(1+1)
        CHECK(bleu_n(cand, {r2}, 2, true) ==
              doctest::Approx(std::sqrt(2.0 / 3.0 * 0.5)).epsilon(1e-12));
    }
    SUBCASE("candidates shorter than the order score 0 even smoothed") {
        CHECK(bleu_n(tokenize("a b"), {ref}, 3) == 0.0);
        CHECK(bleu_n(tokenize("a b"), {ref}, 3, true) == 0.0);
    }
    SUBCASE("argument validation") {
        CHECK_THROWS_AS(bleu_n(ref, {ref}, 0), std::invalid_argument);
        CHECK_THROWS_AS(bleu_n(ref, {ref}, 5), std::invalid_argument);
        CHECK_THROWS_AS(bleu_n(ref, {}, 1), std::invalid_argument);
    }
}

TEST_CASE("bleu matches the brute-force oracle and its invariances") {
    Rng rng(100);
    int nonzero = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto cand = random_sentence(rng, 12, 8);
        std::vector<Tokens> refs;
        const int n_refs = rng.uniform_int(1, 3);
        for (int i = 0; i < n_refs; ++i) refs.push_back(random_sentence(rng, 12, 8));
        for (int n = 1; n <= 4; ++n) {
            const double got = bleu_n(cand, refs, n);
            const double want = o_bleu(cand, refs, n);
            CHECK(got == doctest::Approx(want).epsilon(1e-9));
            CHECK(got >= 0.0);
            CHECK(got <= 1.0);
            if (got > 0.0) ++nonzero;
        }
        // reordering references changes nothing
        if (refs.size() > 1) {
            std::vector<Tokens> rev(refs.rbegin(), refs.rend());
            CHECK(bleu_n(cand, refs, 2) == doctest::Approx(bleu_n(cand, rev, 2)));
        }
    }
    CHECK(nonzero > 10);  // the sample actually exercised the formulas
}

TEST_CASE("bleu order is monotone non-increasing on sampled pairs") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        // overlapping vocabulary so higher orders sometimes fire
        const auto cand = random_sentence(rng, 12, 5);
        const auto ref = random_sentence(rng, 12, 5);
        double prev = 2.0;
        for (int n = 1; n <= 4; ++n) {
            const double s = bleu_n(cand, {ref}, n);
            CHECK(s <= prev + 1e-12);
            prev = s;
        }
    }
}

// ==== ROUGE-L ====

TEST_CASE("rouge hand cases") {
    CHECK(rouge_l(tokenize("a b c d"), {tokenize("a b c d")}) ==
          doctest::Approx(1.0));
    // LCS of "a b c d" and "a c b d" is 3, P=R=0.75 so F=0.75
    CHECK(rouge_l(tokenize("a b c d"), {tokenize("a c b d")}) ==
          doctest::Approx(0.75).epsilon(1e-12));
    CHECK(rouge_l(tokenize("a b"), {tokenize("c d")}) == 0.0);
    CHECK(rouge_l({}, {tokenize("a b")}) == 0.0);
    CHECK_THROWS_AS(rouge_l(tokenize("a"), {}), std::invalid_argument);
    // max over references picks the better one
    const double multi =
        rouge_l(tokenize("a b c"), {tokenize("x y"), tokenize("a b c")});
    CHECK(multi == doctest::Approx(1.0));
}

TEST_CASE("rouge matches the brute-force oracle") {
    Rng rng(102);
    for (int trial = 0; trial < 50; ++trial) {
        const auto cand = random_sentence(rng, 12, 6);
        std::vector<Tokens> refs;
        const int n_refs = rng.uniform_int(1, 3);
        for (int i = 0; i < n_refs; ++i) refs.push_back(random_sentence(rng, 12, 6));
        const double got = rouge_l(cand, refs);
        CHECK(got == doctest::Approx(o_rouge(cand, refs)).epsilon(1e-9));
        CHECK(got >= 0.0);
        CHECK(got <= 1.0);
    }
}

// ==== CIDEr ====

TEST_CASE("cider hand cases") {
    SUBCASE("echoing the reference in a disjoint two-image corpus scores 10") {
        const Tokens r0 = tokenize("a red square sits left of a blue circle");
        const Tokens r1 = tokenize("two green triangles touch the top border");
        const auto out = cider({r0, tokenize("nothing here matches")}, {{r0}, {r1}});
        CHECK(out.per_image[0] == doctest::Approx(10.0).epsilon(1e-9));
        CHECK(out.per_image[1] == 0.0);
        CHECK(out.mean == doctest::Approx(5.0).epsilon(1e-9));
    }
    SUBCASE("no shared n-grams scores 0") {
        const auto out = cider({tokenize("p q r s"), tokenize("w x y z")},
                               {{tokenize("a b c d")}, {tokenize("e f g h")}});
        CHECK(out.per_image[0] == 0.0);
        CHECK(out.per_image[1] == 0.0);
    }
    SUBCASE("empty candidate scores 0") {
        const auto out = cider({{}, tokenize("e f")},
                               {{tokenize("a b c d")}, {tokenize("e f")}});
        CHECK(out.per_image[0] == 0.0);
    }
    SUBCASE("single-image corpora are rejected") {
        CHECK_THROWS_WITH_AS(cider({tokenize("a")}, {{tokenize("a")}}),
                             doctest::Contains("bleu"), std::invalid_argument);
    }
    SUBCASE("shape validation") {
        CHECK_THROWS_AS(cider({tokenize("a")}, {{tokenize("a")}, {tokenize("b")}}),
                        std::invalid_argument);
        CHECK_THROWS_AS(cider({tokenize("a"), tokenize("b")},
                              {{tokenize("a")}, {}}),
                        std::invalid_argument);
    }
}

TEST_CASE("cider matches the brute-force oracle on random corpora") {
    Rng rng(103);
    for (int trial = 0; trial < 10; ++trial) {
        const int n_images = 5;
        std::vector<Tokens> cands;
        std::vector<std::vector<Tokens>> refs;
        for (int i = 0; i < n_images; ++i) {
            cands.push_back(random_sentence(rng, 12, 10));
            std::vector<Tokens> image_refs;
            const int n_refs = rng.uniform_int(1, 3);
            for (int j = 0; j < n_refs; ++j)
                image_refs.push_back(random_sentence(rng, 12, 10));
            refs.push_back(image_refs);
        }
        const auto got = cider(cands, refs);
        const auto want = o_cider(cands, refs);
        double mean = 0.0;
        for (int i = 0; i < n_images; ++i) {
            CHECK(got.per_image[i] == doctest::Approx(want[i]).epsilon(1e-9));
            CHECK(got.per_image[i] >= 0.0);
            CHECK(got.per_image[i] <= 10.0);
            mean += want[i];
        }
        CHECK(got.mean == doctest::Approx(mean / n_images).epsilon(1e-9));
    }
}

// ==== difficulty ====

TEST_CASE("difficulty metric blends the configured scores") {
    const Tokens ref = tokenize("a red square sits beside a blue circle");
    SUBCASE("perfect caption scores 1 under every spec") {
        CHECK(difficulty_metric(ref, {ref}, DifficultySpec::bleu1) ==
              doctest::Approx(1.0));
        CHECK(difficulty_metric(ref, {ref}, DifficultySpec::bleu4) ==
              doctest::Approx(1.0));
        CHECK(difficulty_metric(ref, {ref}) == doctest::Approx(1.0));
    }
    SUBCASE("the default is the average of order one and order four") {
        const Tokens cand = tokenize("a red square sits beside the green circle");
        const double b1 = bleu_n(cand, {ref}, 1);
        const double b4 = bleu_n(cand, {ref}, 4);
        CHECK(difficulty_metric(cand, {ref}) ==
              doctest::Approx(0.5 * (b1 + b4)).epsilon(1e-12));
        CHECK(difficulty_metric(cand, {ref}, DifficultySpec::bleu1) ==
              doctest::Approx(b1));
        CHECK(difficulty_metric(cand, {ref}, DifficultySpec::bleu4) ==
              doctest::Approx(b4));
    }
    SUBCASE("empty candidate scores 0") { CHECK(difficulty_metric({}, {ref}) == 0.0); }
    SUBCASE("names round-trip and unknown names are rejected") {
        for (auto spec : {DifficultySpec::bleu1, DifficultySpec::bleu4,
                          DifficultySpec::mean_bleu1_bleu4})
            CHECK(difficulty_spec_from_name(difficulty_spec_name(spec)) == spec);
        CHECK_THROWS_AS(difficulty_spec_from_name("meteor"), std::invalid_argument);
    }
}
