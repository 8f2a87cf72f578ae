#include "delt/error.hpp"
#include "delt/ngram.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace delt;

TEST_CASE("hand counts for a bigram model")
{
    const auto m = fit_ngram(testing::make_corpus({"AB"}), 2, 0.1);
    CHECK(m.count({Tokenizer::bos}, 65) == 1);
    CHECK(m.count({65}, 66) == 1);
    CHECK(m.count({66}, 65) == 0);
    CHECK(m.counts.size() == 2);
}

TEST_CASE("fitting is deterministic and order-invariant")
{
    const auto a = testing::make_corpus({"the cat", "a dog", "the dog"});
    const auto b = testing::make_corpus({"the dog", "the cat", "a dog"});
    CHECK(fit_ngram(a) == fit_ngram(a));
    CHECK(fit_ngram(a) == fit_ngram(b));
}

TEST_CASE("empty model is uniform")
{
    NgramModel m;
    CHECK(perplexity(m, Tokenizer::tokenize("anything at all")) == doctest::Approx(257.0).epsilon(1e-12));
}

TEST_CASE("near-zero smoothing on the only training text")
{
    std::vector<std::string> texts(20, "repeat me exactly");
    for (std::size_t i = 0; i < texts.size(); ++i)
        texts[i] += "";
    const auto c = testing::make_corpus(texts);
    const auto m = fit_ngram(c, 3, 1e-6);
    CHECK(perplexity(m, c[0].tokens) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("pencil-and-paper perplexity")
{
    // contexts: [BOS] -> a x3; [a] -> b x2, c x1
    const auto m = fit_ngram(testing::make_corpus({"ab", "ab", "ac"}), 2, 0.5);
    const double p1 = 3.5 / 131.5;  // (3 + 0.5) / (3 + 0.5 * 257)
    const double p2 = 2.5 / 131.5;
    const double expected = std::exp(-(std::log(p1) + std::log(p2)) / 2.0);
    CHECK(perplexity(m, Tokenizer::tokenize("ab")) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(131.5 / std::sqrt(3.5 * 2.5)).epsilon(1e-12));
}

TEST_CASE("probabilities sum to one in every context")
{
    std::mt19937_64 rng(4);
    std::vector<std::string> texts;
    for (int i = 0; i < 20; ++i)
        texts.push_back(testing::random_text(rng, 1, 15));
    for (double k : {1e-3, 0.1, 2.0}) {
        const auto m = fit_ngram(testing::make_corpus(texts), 3, k);
        auto check_ctx = [&](const std::vector<TokenId>& ctx) {
            double s = 0.0;
            for (TokenId t = 0; t < m.vocab_size; ++t)
                s += m.probability(ctx, t);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        };
        for (const auto& [ctx, _] : m.counts)
            check_ctx(ctx);
        check_ctx({7, 9});
    }
}

TEST_CASE("perplexity errors and bounds")
{
    const auto m = fit_ngram(testing::make_corpus({"abc"}));
    try {
        perplexity(m, TokenSeq{Tokenizer::bos});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::degenerate_sample);
    }
    CHECK(perplexity(m, Tokenizer::tokenize("zzz")) >= 1.0);
}

TEST_CASE("kenlm scores")
{
    const auto train = testing::make_corpus({"the quick brown fox", "the lazy dog", "the quick brown fox"});
    const auto m = fit_ngram(train);
    const auto s = kenlm_score(train, m).aligned(train);
    CHECK(s[0] == s[2]);
    for (std::size_t i = 0; i < train.size(); ++i)
        CHECK(s[i] == doctest::Approx(-perplexity(m, train[i].tokens)));

    const auto probe = testing::make_corpus({"the quick brown fox", "#q$9!Lz@x&(wP~r^"});
    const auto ps = kenlm_score(probe, m).aligned(probe);
    CHECK(ps[0] > ps[1]);

    const auto one = testing::make_corpus({"solo"});
    CHECK(kenlm_score(one, m).size() == 1);

    // ids do not matter
    const auto relabeled = testing::make_corpus({"the quick brown fox", "the lazy dog", "the quick brown fox"}, "other");
    CHECK(kenlm_score(relabeled, m).aligned(relabeled) == s);
}

TEST_CASE("kenlm errors carry the sample id")
{
    std::vector<Sample> samples{{"good", "ab", Tokenizer::tokenize("ab")}, {"bad", "", {Tokenizer::bos}}};
    const Corpus c(std::move(samples), "test");
    try {
        kenlm_score(c, NgramModel{});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::degenerate_sample);
        CHECK(std::string(e.what()).find("bad") != std::string::npos);
    }
}

TEST_CASE("count table file round trip")
{
    std::mt19937_64 rng(8);
    std::vector<std::string> texts;
    for (int i = 0; i < 10; ++i)
        texts.push_back(testing::random_text(rng, 1, 10) + ",-\t");
    for (int order : {1, 2, 4}) {
        const auto m = fit_ngram(testing::make_corpus(texts), order, 0.25);
        auto dir = testing::scratch_dir("ngram");
        save_ngram(m, dir / "m.txt");
        CHECK(load_ngram(dir / "m.txt") == m);
    }
}
