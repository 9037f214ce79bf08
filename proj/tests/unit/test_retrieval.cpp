#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "casejudge/errors.hpp"
#include "casejudge/retrieval.hpp"
#include "support/oracles.hpp"

using namespace casejudge;


TEST_CASE("whitespace tokenizer")
{
    CHECK(tokenize_whitespace("  a bb\tc　d ") == TokenStream{"a", "bb", "c", "d"});
    CHECK(tokenize_whitespace("").empty());
}

TEST_CASE("cjk bigram tokenizer")
{
    CHECK(tokenize_cjk_bigram("盗窃罪") == TokenStream{"盗窃", "窃罪"});
    CHECK(tokenize_cjk_bigram("盗") == TokenStream{"盗"});
    CHECK(tokenize_cjk_bigram("abc中文def") == TokenStream{"abc", "中文", "def"});
    CHECK(tokenize_cjk_bigram("x中y") == TokenStream{"x", "中", "y"});
    CHECK(tokenize_cjk_bigram("中文 英文") == TokenStream{"中文", "英文"});
    CHECK(tokenize_cjk_bigram("").empty());
}

TEST_CASE("tokenizer modes parse")
{
    CHECK(parse_tokenizer_mode("whitespace") == TokenizerMode::whitespace);
    CHECK(parse_tokenizer_mode("cjk_bigram") == TokenizerMode::cjk_bigram);
    CHECK(parse_tokenizer_mode("external") == TokenizerMode::external);
    CHECK_THROWS(parse_tokenizer_mode("jieba"));
}

TEST_CASE("external tokenizer")
{
    using namespace std::chrono_literals;
    CHECK(tokenize_external("a,b,c", "tr ',' ' '", 5s) == TokenStream{"a", "b", "c"});
    CHECK_THROWS_AS(tokenize_external("x", "exit 3", 5s), ExternalTokenizerError);
    CHECK_THROWS_AS(tokenize_external("x", "sleep 5", 200ms), ExternalTokenizerError);
    Tokenizer tok(TokenizerMode::external, "cat", 5s);
    CHECK(tok("p q") == TokenStream{"p", "q"});
}

TEST_CASE("index construction errors")
{
    CHECK_THROWS_AS(Bm25Index(std::vector<std::pair<std::string, TokenStream>>{}), IntegrityError);
    CHECK_THROWS_AS(Bm25Index({{"a", {"x"}}, {"a", {"y"}}}), IntegrityError);
    Bm25Index ix(std::vector<std::pair<std::string, TokenStream>>{{"a", {"x"}}});
    CHECK_THROWS_AS(bm25_score(ix, {"x"}, "zz"), UnknownDocError);
}

TEST_CASE("idf is positive even for terms in every document")
{
    Bm25Index ix({{"a", {"x"}}, {"b", {"x"}}});
    CHECK(ix.idf(2) > 0);
    CHECK(ix.idf(2) == doctest::Approx(std::log(1.0 + 0.5 / 2.5)));
}

TEST_CASE("empty documents only: average length falls back to one")
{
    Bm25Index ix({{"a", {}}, {"b", {}}});
    CHECK(ix.avg_doc_len() == 1.0);
    CHECK(bm25_score(ix, {"x"}, "a") == 0.0);
    auto r = top_k_rank(ix, {"x"}, 5);
    REQUIRE(r.size() == 2);
    CHECK(r[0].doc_id == "a");
}

TEST_CASE("round_sig12")
{
    CHECK(round_sig12(1.0000000000001) == 1.0);
    CHECK(round_sig12(0.0) == 0.0);
    CHECK(round_sig12(123456.7890123456) == 123456.789012);
}

TEST_CASE("bm25 and top_k_rank agree with the brute-force oracle")
{
    std::mt19937_64 rng(42);
    const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 20;
        std::vector<std::pair<std::string, TokenStream>> docs;
        std::vector<TokenStream> plain;
        for (std::size_t d = 0; d < n; ++d) {
            TokenStream toks;
            const auto len = rng() % 12;
            for (std::size_t i = 0; i < len; ++i) toks.push_back(vocab[rng() % vocab.size()]);
            docs.emplace_back("d" + std::to_string(rng() % 1000) + "_" + std::to_string(d), toks);
            plain.push_back(toks);
        }
        TokenStream query;
        for (std::size_t i = 0, len = 1 + rng() % 5; i < len; ++i) query.push_back(vocab[rng() % vocab.size()]);
        Bm25Index ix(docs);
        std::vector<std::pair<double, std::string>> expect;
        for (std::size_t d = 0; d < n; ++d) {
            const double s = oracle::bm25(plain, query, d);
            CHECK(bm25_score(ix, query, docs[d].first) == doctest::Approx(s).epsilon(1e-12));
            expect.emplace_back(s, docs[d].first);
        }
        std::sort(expect.begin(), expect.end(), [](const auto& x, const auto& y) {
            const double rx = round_sig12(x.first), ry = round_sig12(y.first);
            if (rx != ry) return rx > ry;
            return x.second < y.second;
        });
        const std::size_t k = 1 + rng() % (n + 2);
        auto got = top_k_rank(ix, query, k);
        REQUIRE(got.size() == std::min(k, n));
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].doc_id == expect[i].second);
    }
}

TEST_CASE("repeated query tokens count every occurrence")
{
    Bm25Index ix({{"a", {"x", "y"}}, {"b", {"y"}}});
    CHECK(bm25_score(ix, {"x", "x"}, "a") == doctest::Approx(2 * bm25_score(ix, {"x"}, "a")));
}
