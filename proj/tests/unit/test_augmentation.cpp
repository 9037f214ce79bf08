#include <doctest.h>

#include <fstream>
#include <set>

#include "casejudge/augmentation.hpp"
#include "casejudge/errors.hpp"
#include "casejudge/io.hpp"
#include "casejudge/text.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace casejudge;

namespace {

CaseStore numbered_cases(std::size_t n)
{
    CaseStore s;
    for (std::size_t i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "k%03zu", i);
        s.add({id, "case text " + std::to_string(i), {}, std::nullopt});
    }
    return s;
}

AnnotatedPair synthetic(std::size_t i, int label)
{
    char a[16], b[16];
    std::snprintf(a, sizeof a, "a%04zu", i);
    std::snprintf(b, sizeof b, "b%04zu", i);
    AnnotatedPair p;
    p.pair = CasePair::of(a, b);
    p.record.query_id = p.pair.left_id;
    p.record.candidate_id = p.pair.right_id;
    p.record.run_id = "augment";
    p.record.mf_verdict = {FactType::MF, (label & 1) != 0, "mf why", "", {}};
    p.record.lf_verdict = {FactType::LF, (label & 2) != 0, "lf why", "", {}};
    p.record.label = label;
    p.record.config_fingerprint = "fp";
    return p;
}

std::vector<AnnotatedPair> synthetic_pool(std::map<int, std::size_t> per_label)
{
    std::vector<AnnotatedPair> out;
    std::size_t i = 0;
    for (auto [label, n] : per_label) {
        for (std::size_t k = 0; k < n; ++k) out.push_back(synthetic(i++, label));
    }
    return out;
}

class TableScorer : public PairScorer {
public:
    std::map<CasePair, double> table;
    double score(const CasePair& p) const override
    {
        auto it = table.find(p);
        if (it == table.end()) throw DomainError("no score");
        return it->second;
    }
};

}  // namespace

TEST_CASE("CasePair is canonical")
{
    auto p = CasePair::of("z", "a");
    CHECK(p.left_id == "a");
    CHECK(p.right_id == "z");
    CHECK(p == CasePair::of("a", "z"));
    CHECK_THROWS_AS(CasePair::of("a", "a"), DomainError);
}

TEST_CASE("sample_pairs draws distinct canonical pairs")
{
    auto cases = numbered_cases(20);
    auto pairs = sample_pairs(cases, 190, 1);
    CHECK(pairs.size() == 190);
    CHECK(std::set<CasePair>(pairs.begin(), pairs.end()).size() == 190);
    CHECK(std::is_sorted(pairs.begin(), pairs.end()));
    for (const auto& p : pairs) CHECK(p.left_id < p.right_id);
    CHECK(sample_pairs(cases, 30, 7) == sample_pairs(cases, 30, 7));
    CHECK(sample_pairs(cases, 30, 7) != sample_pairs(cases, 30, 8));
    CHECK_THROWS_AS(sample_pairs(cases, 191, 1), ExhaustedError);
    CHECK_THROWS_AS(sample_pairs(numbered_cases(1), 1, 1), PreconditionError);
}

TEST_CASE("sample_pairs is roughly uniform over the pair universe")
{
    auto cases = numbered_cases(5);
    std::map<CasePair, int> hits;
    const int trials = 5000;
    for (int s = 0; s < trials; ++s) {
        for (const auto& p : sample_pairs(cases, 3, static_cast<std::uint64_t>(s))) ++hits[p];
    }
    REQUIRE(hits.size() == 10);
    for (const auto& [p, n] : hits) CHECK(std::abs(n - trials * 3 / 10) < 150);
}

TEST_CASE("prerank orders by score then key")
{
    TableScorer s;
    auto ab = CasePair::of("a", "b"), ac = CasePair::of("a", "c"), bc = CasePair::of("b", "c");
    s.table = {{ab, 1.0}, {ac, 2.0}, {bc, 2.0 + 1e-15}};
    CHECK(prerank_pairs({bc, ab, ac}, s, 10) == std::vector<CasePair>{ac, bc, ab});
    CHECK(prerank_pairs({bc, ab, ac}, s, 1) == std::vector<CasePair>{ac});
    CHECK_THROWS_AS(prerank_pairs({ab, CasePair::of("x", "y")}, s, 10), ScorerError);
}

TEST_CASE("Bm25PairScorer matches the oracle on a one-document index")
{
    auto toy = testing::load_toy();
    Bm25PairScorer scorer(toy.cases);
    Tokenizer tok;
    auto p = CasePair::of("q01", "q01c01");
    const auto left = tok(toy.cases.at(p.left_id).fact_text);
    const auto right = tok(toy.cases.at(p.right_id).fact_text);
    CHECK(scorer.score(p) == doctest::Approx(oracle::bm25({right}, left, 0)).epsilon(1e-12));
}

TEST_CASE("annotated json round trip and integrity")
{
    auto a = synthetic(3, 2);
    CHECK(annotated_from_json(nlohmann::json::parse(annotated_to_json(a).dump())) == a);
    auto items = std::vector<AnnotatedPair>{synthetic(1, 0), synthetic(2, 3)};
    CHECK(parse_annotated_jsonl(annotated_to_jsonl(items)) == items);
    auto j = nlohmann::json::parse(annotated_to_json(a).dump());
    j["left_id"] = "other";
    CHECK_THROWS_AS(annotated_from_json(j), IntegrityError);
}

TEST_CASE("annotate resumes from a checkpoint")
{
    auto toy = testing::load_toy();
    auto demos = testing::toy_demos();
    auto mock = testing::toy_mock(toy);
    testing::RecordingJudge rec(mock);
    JudgeEngine engine(rec, demos, TemplateSet::builtin());
    auto pairs = sample_pairs(toy.cases, 12, 5);
    testing::TempDir dir;

    std::stop_source stop;
    AnnotateOptions opt;
    opt.checkpoint = dir / "ck.jsonl";
    opt.stop = stop.get_token();
    std::size_t done = 0;
    opt.on_done = [&](const AnnotatedPair&) {
        if (++done == 5) stop.request_stop();
    };
    auto first = annotate_pairs(engine, toy.cases, pairs, {}, opt);
    CHECK(first.interrupted);
    CHECK(first.judged == 5);
    CHECK(rec.count() == 30);

    AnnotateOptions opt2;
    opt2.checkpoint = opt.checkpoint;
    auto second = annotate_pairs(engine, toy.cases, pairs, {}, opt2);
    CHECK_FALSE(second.interrupted);
    CHECK(second.resumed == 5);
    CHECK(second.judged == 7);
    CHECK(rec.count() == 72);

    testing::TempDir other;
    AnnotateOptions opt3;
    opt3.checkpoint = other / "ck.jsonl";
    auto fresh = annotate_pairs(engine, toy.cases, pairs, {}, opt3);
    CHECK(fresh.annotated == second.annotated);
}

TEST_CASE("annotate tolerates a torn checkpoint tail and isolates failures")
{
    auto toy = testing::load_toy();
    auto demos = testing::toy_demos();
    auto mock = testing::toy_mock(toy);
    auto pairs = sample_pairs(toy.cases, 6, 11);
    const auto victim = pairs[2].right_id;
    testing::FaultyJudge faulty(mock, [&](const JudgeRequest& r) {
        return r.user_text.find(toy.cases.at(victim).fact_text) != std::string::npos;
    });
    JudgeEngine engine(faulty, demos, TemplateSet::builtin());
    testing::TempDir dir;
    AnnotateOptions opt;
    opt.checkpoint = dir / "ck.jsonl";
    opt.parallelism = 3;
    auto r = annotate_pairs(engine, toy.cases, pairs, {}, opt);
    CHECK(r.failed >= 1);
    CHECK_FALSE(r.annotated[2].record.ok());
    CHECK(parse_annotated_jsonl(io::read_file(opt.checkpoint)).size() == r.judged - r.failed);

    {
        std::ofstream f(opt.checkpoint, std::ios::app);
        f << "{\"left_id\": \"tor";
    }
    auto again = annotate_pairs(engine, toy.cases, pairs, {}, opt);
    CHECK(again.resumed == r.judged - r.failed);
    CHECK_THROWS_AS(annotate_pairs(engine, toy.cases, {CasePair::of("nope", "q01")}, {}, {}), IntegrityError);
}

TEST_CASE("dataset spec validation and json")
{
    DatasetSpec s;
    s.size = 10;
    s.mode = DatasetMode::distribution_matched;
    CHECK_THROWS_AS(s.validate(), PreconditionError);
    s.target_distribution = std::map<int, double>{{0, 0.5}, {1, 0.6}};
    CHECK_THROWS_AS(s.validate(), PreconditionError);
    s.target_distribution = std::map<int, double>{{0, 0.5}, {4, 0.5}};
    CHECK_THROWS_AS(s.validate(), PreconditionError);
    s.target_distribution = std::map<int, double>{{0, 0.5}, {3, 0.5}};
    CHECK_NOTHROW(s.validate());
    auto back = dataset_spec_from_json(nlohmann::json::parse(dataset_spec_to_json(s).dump()));
    CHECK(back.size == s.size);
    CHECK(back.mode == s.mode);
    CHECK(back.target_distribution == s.target_distribution);
    s.size = 0;
    CHECK_THROWS_AS(s.validate(), PreconditionError);
}

TEST_CASE("label quotas use largest remainders")
{
    CHECK(label_quotas(200, {{0, .5}, {1, .2}, {2, .1}, {3, .2}}) ==
          std::map<int, std::size_t>{{0, 100}, {1, 40}, {2, 20}, {3, 40}});
    CHECK(label_quotas(10, {{0, 1.0 / 3}, {1, 1.0 / 3}, {2, 1.0 / 3}}) ==
          std::map<int, std::size_t>{{0, 4}, {1, 3}, {2, 3}});
    CHECK(label_quotas(7, {{0, .25}, {3, .75}}) == std::map<int, std::size_t>{{0, 2}, {3, 5}});
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        std::map<int, double> d;
        double total = 0;
        for (int l = 0; l < 4; ++l) total += d[l] = static_cast<double>(rng() % 100 + 1);
        for (auto& [l, f] : d) f /= total;
        const std::size_t size = 1 + rng() % 500;
        auto q = label_quotas(size, d);
        std::size_t sum = 0;
        for (auto [l, n] : q) {
            sum += n;
            CHECK(std::abs(static_cast<double>(n) - d[l] * static_cast<double>(size)) < 1.0);
        }
        CHECK(sum == size);
    }
}

TEST_CASE("build_dataset matches quotas and is order independent")
{
    auto pool = synthetic_pool({{0, 150}, {1, 60}, {2, 30}, {3, 60}});
    DatasetSpec spec;
    spec.size = 200;
    spec.mode = DatasetMode::distribution_matched;
    spec.target_distribution = std::map<int, double>{{0, .5}, {1, .2}, {2, .1}, {3, .2}};
    spec.seed = 42;
    auto ds = build_dataset(pool, spec);
    std::map<int, std::size_t> hist;
    for (const auto& a : ds) ++hist[a.record.label];
    CHECK(hist == std::map<int, std::size_t>{{0, 100}, {1, 40}, {2, 20}, {3, 40}});
    CHECK(std::is_sorted(ds.begin(), ds.end(), [](auto& a, auto& b) { return a.pair < b.pair; }));

    auto reversed = pool;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(build_dataset(reversed, spec) == ds);
    spec.seed = 43;
    CHECK(build_dataset(pool, spec) != ds);

    spec.target_distribution = std::map<int, double>{{0, .2}, {2, .8}};
    try {
        build_dataset(pool, spec);
        FAIL("expected InsufficientLabelError");
    } catch (const InsufficientLabelError& e) {
        CHECK(e.label() == 2);
        CHECK(e.shortfall() == 130);
    }

    DatasetSpec rnd;
    rnd.size = 300;
    CHECK(build_dataset(pool, rnd).size() == 300);
    rnd.size = 301;
    CHECK_THROWS_AS(build_dataset(pool, rnd), ExhaustedError);
}

TEST_CASE("export is byte-identical across runs and records a manifest")
{
    auto toy = testing::load_toy();
    std::vector<AnnotatedPair> pool;
    std::size_t i = 0;
    for (const auto& c : toy.cases.cases()) {
        if (c.id.size() <= 3) continue;
        auto a = synthetic(i, static_cast<int>(i % 4));
        a.pair = CasePair::of(c.id.substr(0, 3), c.id);
        a.record.query_id = a.pair.left_id;
        a.record.candidate_id = a.pair.right_id;
        pool.push_back(a);
        ++i;
    }
    DatasetSpec spec;
    spec.size = 40;
    spec.seed = 9;
    auto ds = build_dataset(pool, spec);
    testing::TempDir dir;
    for (auto fmt : {ExportFormat::label_only, ExportFormat::rationale}) {
        auto m1 = export_dataset(ds, toy.cases, fmt, dir / "a.jsonl", spec, "sys", dir / "a.manifest.json");
        auto m2 = export_dataset(build_dataset(pool, spec), toy.cases, fmt, dir / "b.jsonl", spec, "sys",
                                 dir / "b.manifest.json");
        CHECK(io::read_file(dir / "a.jsonl") == io::read_file(dir / "b.jsonl"));
        CHECK(m1.sha256 == m2.sha256);
        CHECK(m1.sha256 == text::sha256_hex(io::read_file(dir / "a.jsonl")));
        CHECK(m1.size == 40);
        CHECK(m1.histogram.size() == 4);
        CHECK(m1.config_fingerprint == "fp");
        auto lines = io::split_lines(io::read_file(dir / "a.jsonl"));
        REQUIRE(lines.size() == 40);
        auto first = nlohmann::json::parse(lines[0]);
        if (fmt == ExportFormat::label_only) {
            CHECK(first.contains("cand_text"));
            CHECK(first["label"] == ds[0].record.label);
        } else {
            REQUIRE(first["messages"].size() == 3);
            CHECK(first["messages"][0]["content"] == "sys");
            const std::string assistant = first["messages"][2]["content"];
            CHECK(assistant.find("Relevance label: " + std::to_string(ds[0].record.label)) != std::string::npos);
        }
    }
    auto m = export_dataset(ds, toy.cases, ExportFormat::label_only, dir / "c.jsonl", spec, "sys",
                            dir / "c.manifest.json", std::make_pair(std::string("other"), std::vector<CasePair>{ds[0].pair}));
    REQUIRE(m.overlap);
    CHECK(m.overlap->second == 1);
    auto mj = nlohmann::json::parse(io::read_file(dir / "c.manifest.json"));
    CHECK(mj["sha256"] == m.sha256);
}
