#include "delt/corpus.hpp"
#include "delt/error.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <set>

using namespace delt;

namespace {

void write_file(const std::filesystem::path& p, const std::string& content)
{
    std::ofstream(p, std::ios::binary) << content;
}

ErrorKind kind_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::domain;
}

}  // namespace

TEST_CASE("tokenize: empty text is just BOS")
{
    CHECK(Tokenizer::tokenize("") == TokenSeq{Tokenizer::bos});
}

TEST_CASE("tokenize: ASCII bytes map to their values")
{
    CHECK(Tokenizer::tokenize("AB") == TokenSeq{Tokenizer::bos, 65, 66});
}

TEST_CASE("tokenize round-trips arbitrary bytes")
{
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> byte(0, 255);
    for (int trial = 0; trial < 200; ++trial) {
        std::string s(100, '\0');
        for (char& c : s)
            c = static_cast<char>(byte(rng));
        const auto toks = Tokenizer::tokenize(s);
        REQUIRE(toks.size() == 101);
        CHECK(toks[0] == Tokenizer::bos);
        CHECK(Tokenizer::detokenize(toks) == s);
    }
}

TEST_CASE("tokenize is injective on distinct texts")
{
    std::mt19937_64 rng(3);
    std::set<std::string> texts;
    std::set<TokenSeq> seqs;
    for (int i = 0; i < 500; ++i) {
        auto t = testing::random_text(rng, 0, 6);
        if (texts.insert(t).second)
            CHECK(seqs.insert(Tokenizer::tokenize(t)).second);
    }
}

TEST_CASE("load_jsonl keeps file order")
{
    auto dir = testing::scratch_dir("corpus_order");
    write_file(dir / "c.jsonl", "{\"id\":\"z\",\"text\":\"one\"}\n{\"id\":\"a\",\"text\":\"two\",\"extra\":1}\n"
                                "{\"id\":\"m\",\"text\":\"three\"}\n");
    const auto c = load_jsonl(dir / "c.jsonl");
    REQUIRE(c.size() == 3);
    CHECK(c[0].id == "z");
    CHECK(c[1].id == "a");
    CHECK(c[2].id == "m");
    CHECK(c[2].tokens == Tokenizer::tokenize("three"));
}

TEST_CASE("load_jsonl errors")
{
    SUBCASE("duplicate id")
    {
        CHECK(kind_of([] { parse_jsonl("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n", "mem"); }) ==
              ErrorKind::duplicate_id);
    }
    SUBCASE("missing text names the line")
    {
        try {
            parse_jsonl("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\"}\n", "mem");
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::ingestion);
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SUBCASE("malformed JSON")
    {
        CHECK(kind_of([] { parse_jsonl("{\"id\":\"a\",\"text\":\"x\"}\n{oops\n", "mem"); }) == ErrorKind::ingestion);
    }
    SUBCASE("empty texts are listed together")
    {
        try {
            parse_jsonl("{\"id\":\"a\",\"text\":\"\"}\n{\"id\":\"b\",\"text\":\"ok\"}\n{\"id\":\"c\",\"text\":\"\"}\n",
                        "mem");
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::rejected_sample);
            const std::string msg = e.what();
            CHECK(msg.find("a") != std::string::npos);
            CHECK(msg.find("c") != std::string::npos);
        }
    }
    SUBCASE("missing file")
    {
        CHECK(kind_of([] { load_jsonl("/nonexistent/delt.jsonl"); }) == ErrorKind::io);
    }
}

TEST_CASE("truncation is recorded in provenance")
{
    LoadOptions opt;
    opt.max_tokens = 5;
    const auto c = parse_jsonl("{\"id\":\"a\",\"text\":\"abcdefgh\"}\n{\"id\":\"b\",\"text\":\"ab\"}\n", "mem", opt);
    CHECK(c[0].tokens.size() == 5);
    CHECK(c[1].tokens.size() == 3);
    CHECK(c.provenance().find("truncated") != std::string::npos);
}

TEST_CASE("write then load is the identity on (id, text) and order")
{
    std::mt19937_64 rng(11);
    std::vector<std::string> texts;
    for (int i = 0; i < 30; ++i)
        texts.push_back(testing::random_text(rng, 1, 40) + "\t\"quoted\" \xc3\xa9");
    const auto c = testing::make_corpus(texts);
    auto dir = testing::scratch_dir("corpus_roundtrip");
    write_corpus_jsonl(c, dir / "c.jsonl");
    const auto back = load_jsonl(dir / "c.jsonl");
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(back[i].id == c[i].id);
        CHECK(back[i].text == c[i].text);
        CHECK(back[i].tokens == c[i].tokens);
    }
}

TEST_CASE("write_scores writes corpus order and round-trips exactly")
{
    const auto c = testing::make_corpus({"alpha", "beta"}, "");
    ScoreVector s{{{"1", -1.0}, {"0", 0.5}}};
    auto dir = testing::scratch_dir("scores");
    write_scores(c, s, dir / "s.jsonl");
    std::ifstream in(dir / "s.jsonl");
    std::string l1, l2, l3;
    std::getline(in, l1);
    std::getline(in, l2);
    CHECK(l1.find("\"0\"") != std::string::npos);
    CHECK(l2.find("\"1\"") != std::string::npos);
    CHECK_FALSE(std::getline(in, l3));

    std::mt19937_64 rng(5);
    const auto vals = testing::random_vector(rng, 2, 1e3);
    const auto r = ScoreVector::from_values(c, vals);
    write_scores(c, r, dir / "r.jsonl");
    CHECK(read_scores(dir / "r.jsonl").aligned(c) == vals);
}

TEST_CASE("score coverage")
{
    const auto c = testing::make_corpus({"a", "b"}, "");
    ScoreVector missing{{{"0", 0.5}}};
    CHECK(kind_of([&] { missing.aligned(c); }) == ErrorKind::score_coverage);
    auto dir = testing::scratch_dir("coverage");
    CHECK(kind_of([&] { write_scores(c, missing, dir / "s.jsonl"); }) == ErrorKind::score_coverage);
    ScoreVector extra{{{"0", 0.5}, {"1", 1.0}, {"2", 3.0}}};
    CHECK(kind_of([&] { extra.aligned(c); }) == ErrorKind::score_coverage);
    ScoreVector nan{{{"0", 0.5}, {"1", std::nan("")}}};
    CHECK_THROWS_AS(nan.aligned(c), Error);
}

TEST_CASE("corpus invariants")
{
    CHECK(kind_of([] { Corpus({}, "none"); }) == ErrorKind::ingestion);
    const auto c = testing::make_corpus({"a", "b", "c"});
    const std::vector<std::size_t> idx{2, 0};
    const auto r = c.reordered(idx, "pick");
    CHECK(r.size() == 2);
    CHECK(r[0].id == "x2");
    CHECK(r.provenance() == "test | pick");
}
