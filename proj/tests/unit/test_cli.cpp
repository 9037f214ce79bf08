#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "casejudge/cli.hpp"
#include "casejudge/io.hpp"
#include "support/fixtures.hpp"

using namespace casejudge;
using nlohmann::json;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int code = cli::run_command(args, out, err);
    return {code, out.str(), err.str()};
}

std::string toy(const char* name) { return (testing::toy_dir() / name).string(); }

std::vector<std::string> mock_args()
{
    return {"--mock", "--demos", toy("demos.json"), "--lexicon", toy("lexicon.txt")};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b)
{
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TEST_CASE("usage errors exit 2")
{
    CHECK(run({}).code == 2);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"judge", "--cases", "x"}).code == 2);
    CHECK(run({"ndcg", "--run", "r", "--qrels", "q", "--k", "0"}).code == 2);
}

TEST_CASE("data errors exit 1")
{
    testing::TempDir dir;
    auto r = run({"ingest", "--cases", (dir / "missing.jsonl").string(), "--pools", toy("pools.json")});
    CHECK(r.code == 1);
    CHECK_FALSE(r.err.empty());
    CHECK(run({"config", "--set", "judge.runs=0"}).code == 1);
}

TEST_CASE("ingest and demos validate summarize")
{
    auto r = run({"ingest", "--cases", toy("cases.jsonl"), "--pools", toy("pools.json"), "--qrels", toy("qrels.json")});
    REQUIRE(r.code == 0);
    auto j = json::parse(r.out);
    CHECK(j["cases"] == 132);
    auto d = run({"demos", "validate", "--demos", toy("demos.json")});
    CHECK(d.code == 0);
}

TEST_CASE("config prints the effective configuration")
{
    auto r = run({"config", "--set", "judge.runs=5"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["judge.runs"] == 5);
}

TEST_CASE("judge, evaluate, ndcg and heatmap end to end")
{
    testing::TempDir dir;
    const auto records = (dir / "records.jsonl").string();
    auto j = run(concat({"judge", "--queries", toy("cases.jsonl"), "--pools", toy("pools.json"), "--out", records,
                         "--runs", "2", "--top-n", "5"},
                        mock_args()));
    REQUIRE_MESSAGE(j.code == 0, j.err);
    CHECK(io::split_lines(io::read_file(records)).size() == 12 * 5 * 2);

    auto rel = run({"evaluate", "reliability", "--in", records, "--report-dir", (dir / "rel").string()});
    REQUIRE_MESSAGE(rel.code == 0, rel.err);
    CHECK(json::parse(rel.out)["mean_pairwise_kappa"] == 1.0);
    CHECK(std::filesystem::exists(dir / "rel" / "report.json"));

    auto val = run({"evaluate", "validity", "--in", records, "--qrels", toy("qrels.json")});
    REQUIRE_MESSAGE(val.code == 0, val.err);
    CHECK(json::parse(val.out)["mean"]["kappa_4level"] == 1.0);

    auto heat = run({"report", "heatmap", "--in", records, "--qrels", toy("qrels.json"), "--out-dir",
                     (dir / "heat").string()});
    REQUIRE_MESSAGE(heat.code == 0, heat.err);
    CHECK(std::filesystem::exists(dir / "heat" / "heatmap_4x4.csv"));
    CHECK(std::filesystem::exists(dir / "heat" / "heatmap_mf.csv"));

    io::write_file_atomic(dir / "run.trec", "q01 Q0 q01c01 1 2 t\nq01 Q0 q01c07 2 1 t\n");
    auto nd = run({"ndcg", "--run", (dir / "run.trec").string(), "--qrels", toy("qrels.json"), "--k", "30"});
    REQUIRE_MESSAGE(nd.code == 0, nd.err);
    const double m = json::parse(nd.out)["mean"];
    CHECK(m > 0.0);
    CHECK(m < 1.0);
}

TEST_CASE("augment pipeline through export")
{
    testing::TempDir dir;
    auto p = [&](const char* n) { return (dir / n).string(); };
    auto s = run({"augment", "sample", "--cases", toy("cases.jsonl"), "--n", "60", "--seed", "3", "--out", p("pairs.jsonl")});
    REQUIRE_MESSAGE(s.code == 0, s.err);
    auto pr = run({"augment", "prerank", "--cases", toy("cases.jsonl"), "--pairs", p("pairs.jsonl"), "--top", "30",
                   "--out", p("top.jsonl")});
    REQUIRE_MESSAGE(pr.code == 0, pr.err);
    CHECK(io::split_lines(io::read_file(dir / "top.jsonl")).size() == 30);
    auto an = run(concat({"augment", "annotate", "--cases", toy("cases.jsonl"), "--pairs", p("top.jsonl"), "--out",
                          p("ann.jsonl")},
                         mock_args()));
    REQUIRE_MESSAGE(an.code == 0, an.err);
    CHECK_FALSE(std::filesystem::exists(p("ann.jsonl.partial")));
    auto b = run({"augment", "build", "--in", p("ann.jsonl"), "--size", "10", "--seed", "1", "--out", p("ds.jsonl")});
    REQUIRE_MESSAGE(b.code == 0, b.err);
    auto e1 = run({"augment", "export", "--in", p("ds.jsonl"), "--cases", toy("cases.jsonl"), "--format", "rationale",
                   "--out", p("x.jsonl"), "--manifest", p("x.manifest.json")});
    auto e2 = run({"augment", "export", "--in", p("ds.jsonl"), "--cases", toy("cases.jsonl"), "--format", "rationale",
                   "--out", p("y.jsonl")});
    REQUIRE_MESSAGE(e1.code == 0, e1.err);
    REQUIRE_MESSAGE(e2.code == 0, e2.err);
    CHECK(io::read_file(dir / "x.jsonl") == io::read_file(dir / "y.jsonl"));
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    CHECK(json::parse(e1.out)["sha256"] == json::parse(e2.out)["sha256"]);
    CHECK(run({"augment", "build", "--in", p("ann.jsonl"), "--size", "1000", "--out", p("big.jsonl")}).code == 1);
}
