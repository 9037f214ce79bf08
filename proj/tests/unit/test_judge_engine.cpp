#include <doctest.h>

#include "casejudge/errors.hpp"
#include "casejudge/judge_engine.hpp"
#include "casejudge/parallel.hpp"
#include "support/fixtures.hpp"

using namespace casejudge;
using testing::RecordingJudge;

namespace {

struct Env {
    testing::Toy toy = testing::load_toy();
    DemoLibrary demos = testing::toy_demos();
    MockJudge mock = testing::toy_mock(toy);
};

Case make_case(std::string id, std::string text) { return {std::move(id), std::move(text), {}, std::nullopt}; }

std::string target_of(const JudgeRequest& r)
{
    return protocol::read_block(r.user_text, protocol::target_begin, protocol::target_end).value_or("");
}

}  // namespace

TEST_CASE("aggregate_label is 1*MF + 2*LF")
{
    for (bool mf : {false, true}) {
        for (bool lf : {false, true}) {
            FactVerdict a{FactType::MF, mf, "", "", {}};
            FactVerdict b{FactType::LF, lf, "", "", {}};
            const int label = aggregate_label(a, b);
            CHECK(label == (mf ? 1 : 0) + (lf ? 2 : 0));
            CHECK(gold_fact_flags(label) == FactFlags{mf, lf});
        }
    }
}

TEST_CASE("judge_pair runs the six steps in order and chains LF onto MF")
{
    Env env;
    RecordingJudge rec(env.mock);
    JudgeEngine engine(rec, env.demos, TemplateSet::builtin());
    const auto& q = env.toy.cases.at("q01");
    const auto& c = env.toy.cases.at("q01c01");
    auto r = engine.judge_pair(q, c, {}, "r");
    REQUIRE(r.ok());
    using P = std::pair<Stage, FactType>;
    CHECK(rec.calls() == std::vector<P>{{Stage::FE, FactType::MF}, {Stage::FE, FactType::MF},
                                        {Stage::FE, FactType::LF}, {Stage::FE, FactType::LF},
                                        {Stage::FA, FactType::MF}, {Stage::FA, FactType::LF}});
    auto reqs = rec.requests();
    CHECK(target_of(reqs[0]) == q.fact_text);
    CHECK(target_of(reqs[1]) == c.fact_text);
    CHECK(target_of(reqs[2]) == r.mf_extractions[0].text);
    CHECK(target_of(reqs[3]) == r.mf_extractions[1].text);
    CHECK(r.mf_extractions[0].demo_ids.size() == 2);
    CHECK(r.mf_verdict.demo_ids.size() == 4);
    CHECK(r.label == *env.toy.qrels.get("q01", "q01c01"));
    CHECK(reqs[0].temperature == doctest::Approx(0.4));
}

TEST_CASE("labels on hand-made pairs")
{
    MockJudgeConfig cfg;
    cfg.lexicon = {"盗窃", "抢劫"};
    MockJudge mock(cfg);
    auto demos = testing::toy_demos();
    JudgeEngine engine(mock, demos, TemplateSet::builtin());
    auto a = make_case("a", "被告人深夜入户盗窃现金");
    CHECK(engine.judge_pair(a, make_case("b", "被告人深夜入户盗窃现金"), {}, "r").label == 3);
    CHECK(engine.judge_pair(a, make_case("c", "被告人深夜入户抢劫现金"), {}, "r").label == 1);
    CHECK(engine.judge_pair(a, make_case("d", "路边发生交通事故"), {}, "r").label == 0);
    CHECK(engine.judge_pair(a, make_case("e", "白天在商场盗窃手机"), {}, "r").label == 2);
}

TEST_CASE("disable_fe skips extraction calls")
{
    Env env;
    RecordingJudge rec(env.mock);
    JudgeEngine engine(rec, env.demos, TemplateSet::builtin());
    AblationFlags flags;
    flags.disable_fe = true;
    const auto& q = env.toy.cases.at("q02");
    const auto& c = env.toy.cases.at("q02c03");
    auto r = engine.judge_pair(q, c, flags, "r");
    REQUIRE(r.ok());
    CHECK(rec.count(Stage::FE) == 0);
    CHECK(rec.count(Stage::FA) == 2);
    CHECK(r.mf_extractions[0].text == q.fact_text);
    CHECK(r.lf_extractions[1].text == c.fact_text);
}

TEST_CASE("disable_fa_demos sends FA prompts without examples")
{
    Env env;
    RecordingJudge rec(env.mock);
    JudgeEngine engine(rec, env.demos, TemplateSet::builtin());
    AblationFlags flags;
    flags.disable_fa_demos = true;
    auto r = engine.judge_pair(env.toy.cases.at("q01"), env.toy.cases.at("q01c02"), flags, "r");
    CHECK(r.mf_verdict.demo_ids.empty());
    for (const auto& req : rec.requests()) {
        if (protocol::read_stage_marker(req.user_text).first == Stage::FA) {
            CHECK(req.user_text.find("Example 1") == std::string::npos);
        }
    }
}

TEST_CASE("disable_adm swaps BM25 matching for seeded sampling")
{
    std::vector<Demonstration> demos;
    for (int i = 0; i < 8; ++i) {
        demos.push_back({"fe" + std::to_string(i), Stage::FE, FactType::MF, i < 2 ? "入户盗窃现金" : "交通事故" + std::to_string(i),
                         "===FACTS===\nx\n===END===", std::nullopt});
        demos.push_back({"lf" + std::to_string(i), Stage::FE, FactType::LF, "事实" + std::to_string(i),
                         "===FACTS===\nx\n===END===", std::nullopt});
    }
    for (auto f : {FactType::MF, FactType::LF}) {
        demos.push_back({"r" + std::string(to_string(f)), Stage::FA, f, "甲", "VERDICT: RELEVANT", Polarity::relevant});
        demos.push_back({"i" + std::string(to_string(f)), Stage::FA, f, "乙", "VERDICT: IRRELEVANT", Polarity::irrelevant});
    }
    DemoLibrary lib(demos);
    MockJudge mock({});
    JudgeEngine engine(mock, lib, TemplateSet::builtin());
    auto c = make_case("x", "入户盗窃现金");
    auto adm = engine.extract_fact(c, FactType::MF, nullptr, {});
    CHECK(adm.demo_ids == std::vector<std::string>{"fe0", "fe1"});
    AblationFlags flags;
    flags.disable_adm = true;
    auto rnd = engine.extract_fact(c, FactType::MF, nullptr, flags);
    CHECK(rnd.demo_ids.size() == 2);
    CHECK(rnd.demo_ids != adm.demo_ids);
    CHECK(engine.extract_fact(c, FactType::MF, nullptr, flags).demo_ids == rnd.demo_ids);
}

TEST_CASE("LF extraction needs the MF extraction")
{
    Env env;
    JudgeEngine engine(env.mock, env.demos, TemplateSet::builtin());
    const auto& q = env.toy.cases.at("q01");
    CHECK_THROWS_AS(engine.extract_fact(q, FactType::LF, nullptr, {}), PreconditionError);
    auto other = engine.extract_fact(env.toy.cases.at("q02"), FactType::MF, nullptr, {});
    CHECK_THROWS_AS(engine.extract_fact(q, FactType::LF, &other, {}), PreconditionError);
}

TEST_CASE("unparseable responses are retried with a reminder")
{
    auto demos = testing::toy_demos();
    testing::ScriptedJudge judge({"garbage", "===FACTS===\n甲乙\n===END==="});
    JudgeEngine engine(judge, demos, TemplateSet::builtin());
    auto e = engine.extract_fact(make_case("a", "甲乙"), FactType::MF, nullptr, {});
    CHECK(e.text == "甲乙");
    REQUIRE(judge.seen_.size() == 2);
    CHECK(judge.seen_[1].find("Reminder") != std::string::npos);

    testing::ScriptedJudge stubborn({"no", "no", "no"});
    JudgeEngine engine2(stubborn, demos, TemplateSet::builtin());
    CHECK_THROWS_AS(engine2.extract_fact(make_case("a", "甲乙"), FactType::MF, nullptr, {}), JudgeResponseUnparseable);
    CHECK(stubborn.seen_.size() == 3);
}

TEST_CASE("stage failures name the step")
{
    auto demos = testing::toy_demos();
    testing::ScriptedJudge judge({"===FACTS===\n甲\n===END==="});
    JudgeEngine engine(judge, demos, TemplateSet::builtin());
    try {
        engine.judge_pair(make_case("a", "甲"), make_case("b", "乙"), {}, "r");
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(std::string(e.what()).find("FE/MF candidate b") != std::string::npos);
    }
}

TEST_CASE("judge_query isolates a failing pair")
{
    Env env;
    const auto& pool = env.toy.pools[0];
    const auto& victim = env.toy.cases.at(pool.candidate_ids[3]).fact_text;
    testing::FaultyJudge faulty(env.mock, [&](const JudgeRequest& r) {
        return protocol::read_stage_marker(r.user_text) == std::pair{Stage::FE, FactType::MF} && target_of(r) == victim;
    });
    EngineOptions opts;
    opts.parallelism = 4;
    JudgeEngine engine(faulty, env.demos, TemplateSet::builtin(), opts);
    auto recs = engine.judge_query(env.toy.cases.at(pool.query_id), pool, env.toy.cases, 30, {}, "run1");
    REQUIRE(recs.size() == pool.candidate_ids.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(recs[i].candidate_id == pool.candidate_ids[i]);
        CHECK(recs[i].ok() == (i != 3));
    }
    CHECK(recs[3].error.find("FE/MF candidate") != std::string::npos);
    CHECK(recs[3].error.find("injected failure") != std::string::npos);
    CHECK(engine.judge_query(env.toy.cases.at(pool.query_id), pool, env.toy.cases, 3, {}, "run1").size() == 3);
}

TEST_CASE("judge_query calls FE on the query once per fact type")
{
    Env env;
    RecordingJudge rec(env.mock);
    JudgeEngine engine(rec, env.demos, TemplateSet::builtin());
    const auto& pool = env.toy.pools[1];
    const auto n = pool.candidate_ids.size();
    auto recs = engine.judge_query(env.toy.cases.at(pool.query_id), pool, env.toy.cases, 30, {}, "run1");
    CHECK(rec.count(Stage::FE) == 2 + 2 * n);
    CHECK(rec.count(Stage::FA) == 2 * n);
}

TEST_CASE("parallel judge_query equals serial")
{
    Env env;
    EngineOptions serial_opts;
    EngineOptions par_opts;
    par_opts.parallelism = 8;
    JudgeEngine serial(env.mock, env.demos, TemplateSet::builtin(), serial_opts);
    JudgeEngine parallel(env.mock, env.demos, TemplateSet::builtin(), par_opts);
    for (const auto& pool : env.toy.pools) {
        const auto& q = env.toy.cases.at(pool.query_id);
        CHECK(serial.judge_query(q, pool, env.toy.cases, 30, {}, "r") ==
              parallel.judge_query(q, pool, env.toy.cases, 30, {}, "r"));
    }
}

TEST_CASE("records round trip through JSON and are deterministic")
{
    Env env;
    JudgeEngine engine(env.mock, env.demos, TemplateSet::builtin());
    auto r1 = engine.judge_pair(env.toy.cases.at("q03"), env.toy.cases.at("q03c02"), {}, "run1");
    auto r2 = engine.judge_pair(env.toy.cases.at("q03"), env.toy.cases.at("q03c02"), {}, "run1");
    CHECK(record_to_json(r1).dump() == record_to_json(r2).dump());
    CHECK(record_from_json(nlohmann::json::parse(record_to_json(r1).dump())) == r1);

    auto bad = nlohmann::json::parse(record_to_json(r1).dump());
    bad["label"] = (r1.label + 1) % 4;
    CHECK_THROWS_AS(record_from_json(bad), IntegrityError);

    auto f = failed_record("q", "c", "run1", "fp", "boom");
    auto fj = record_to_json(f);
    CHECK(fj["status"] == "failed");
    CHECK(fj["label"].is_null());
    CHECK(record_from_json(nlohmann::json::parse(fj.dump())) == f);
    auto both = parse_records_jsonl(records_to_jsonl({r1, f}));
    REQUIRE(both.size() == 2);
    CHECK(both[0] == r1);
    CHECK_THROWS_AS(parse_records_jsonl("{\n"), ParseError);
}

TEST_CASE("config fingerprint tracks settings")
{
    Env env;
    JudgeEngine a(env.mock, env.demos, TemplateSet::builtin());
    EngineOptions hot;
    hot.temperature = 0.9;
    JudgeEngine b(env.mock, env.demos, TemplateSet::builtin(), hot);
    AblationFlags no_fe;
    no_fe.disable_fe = true;
    CHECK(a.config_fingerprint({}) == a.config_fingerprint({}));
    CHECK(a.config_fingerprint({}) != b.config_fingerprint({}));
    CHECK(a.config_fingerprint({}) != a.config_fingerprint(no_fe));
}

TEST_CASE("FeCache computes each key once under contention")
{
    FeCache cache;
    std::atomic<int> computed{0};
    parallel_for(64, 8, [&](std::size_t i) {
        cache.get_or_compute("q" + std::to_string(i % 2), FactType::MF, [&] {
            ++computed;
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            return FactExtraction{};
        });
    });
    CHECK(computed == 2);
    CHECK(cache.size() == 2);
}
