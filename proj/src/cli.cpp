#include "casejudge/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "casejudge/augmentation.hpp"
#include "casejudge/config.hpp"
#include "casejudge/corpus.hpp"
#include "casejudge/demo_store.hpp"
#include "casejudge/errors.hpp"
#include "casejudge/evaluation.hpp"
#include "casejudge/io.hpp"
#include "casejudge/judge_engine.hpp"
#include "casejudge/llm_gateway.hpp"
#include "casejudge/prompt.hpp"
#include "casejudge/text.hpp"

namespace casejudge::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;

extern "C" void on_sigint(int) { g_interrupted = 1; }

// Turns SIGINT into a stop request for as long as it lives.
class InterruptGuard {
public:
    InterruptGuard()
    {
        g_interrupted = 0;
        previous_ = std::signal(SIGINT, on_sigint);
        watcher_ = std::jthread([this](std::stop_token st) {
            while (!st.stop_requested()) {
                if (g_interrupted) {
                    source_.request_stop();
                    return;
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
            }
        });
    }
    InterruptGuard(const InterruptGuard&) = delete;
    InterruptGuard& operator=(const InterruptGuard&) = delete;
    ~InterruptGuard()
    {
        watcher_.request_stop();
        watcher_.join();
        std::signal(SIGINT, previous_);
    }
    std::stop_token token() const { return source_.get_token(); }

private:
    std::stop_source source_;
    std::jthread watcher_;
    void (*previous_)(int) = nullptr;
};

struct ConfigArgs {
    std::string path;
    std::vector<std::string> sets;

    void attach(CLI::App* cmd)
    {
        cmd->add_option("--config", path, "JSON configuration file");
        cmd->add_option("--set", sets, "Override a configuration key (key=value), repeatable");
    }
    Config load() const
    {
        std::optional<fs::path> p;
        if (!path.empty()) p = path;
        return load_config(p, sets);
    }
};

struct JudgeArgs {
    bool mock = false;
    std::string demos;
    std::string lexicon;

    void attach(CLI::App* cmd)
    {
        cmd->add_flag("--mock", mock, "Use the deterministic mock judge instead of the remote API");
        cmd->add_option("--demos", demos, "Demonstration library (overrides demos.path)");
        cmd->add_option("--lexicon", lexicon, "Mock judge lexicon (overrides mock.lexicon_path)");
    }
};

// Everything a command needs to run the staged workflow.
struct Workbench {
    Config config;
    std::unique_ptr<DemoLibrary> demos;
    std::unique_ptr<Judge> judge;
    TemplateSet templates = TemplateSet::builtin();

    JudgeEngine engine(bool augment, std::uint64_t seed_offset = 0) const
    {
        auto options = config.engine_options(augment);
        options.seed += seed_offset;
        return JudgeEngine(*judge, *demos, templates, options);
    }
};

Workbench make_workbench(const Config& config, const JudgeArgs& args)
{
    Workbench wb;
    wb.config = config;
    const std::string demos_path = args.demos.empty() ? config.demos_path : args.demos;
    if (demos_path.empty()) throw ConfigError("demos.path", "a demonstration library is required (--demos)");
    wb.demos = std::make_unique<DemoLibrary>(load_demo_library(demos_path, config.tokenizer(), config.bm25));
    if (!config.judge.templates_dir.empty()) wb.templates = TemplateSet::load(config.judge.templates_dir);
    if (args.mock) {
        MockJudgeConfig mc;
        mc.mf_jaccard_threshold = config.mock_mf_jaccard_threshold;
        const std::string lex = args.lexicon.empty() ? config.mock_lexicon_path : args.lexicon;
        if (!lex.empty()) mc.lexicon = load_lexicon(lex);
        wb.judge = std::make_unique<MockJudge>(mc, config.tokenizer());
    } else {
        RemoteJudgeOptions ro;
        ro.api_key = api_key_from_env(config.api.key_env);
        ro.max_retries = config.api.max_retries;
        ro.backoff_base = std::chrono::milliseconds(config.api.backoff_ms);
        ro.requests_per_minute = config.api.rpm;
        ro.cache_enabled = config.cache_enabled;
        ro.cache_dir = config.cache_dir;
        ro.transcript_path = config.api.transcript;
        auto transport = std::make_shared<HttplibTransport>(config.api.base_url, std::chrono::seconds(config.api.timeout_s));
        wb.judge = std::make_unique<RemoteJudge>(std::move(transport), ro);
    }
    return wb;
}

CaseStore read_cases(const std::string& path) { return parse_cases_jsonl(io::read_file(path)); }

std::vector<CasePair> read_pairs(const std::string& path)
{
    std::vector<CasePair> pairs;
    std::size_t line_no = 0;
    for (const auto& line : io::split_lines(io::read_file(path))) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            pairs.push_back(CasePair::of(j.at("left_id").get<std::string>(), j.at("right_id").get<std::string>()));
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed pair: ") + e.what(), line_no);
        }
    }
    return pairs;
}

std::string pairs_to_jsonl(const std::vector<CasePair>& pairs)
{
    std::string out;
    for (const auto& p : pairs) {
        ordered_json j;
        j["left_id"] = p.left_id;
        j["right_id"] = p.right_id;
        out += j.dump() + "\n";
    }
    return out;
}

// "0:0.5,1:0.2,..." -> {0: 0.5, 1: 0.2, ...}
std::map<int, double> parse_distribution(const std::string& s)
{
    std::map<int, double> d;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto end = s.find(',', start);
        if (end == std::string::npos) end = s.size();
        const auto item = s.substr(start, end - start);
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw PreconditionError("distribution entry '" + item + "' is not label:fraction");
        try {
            d[std::stoi(item.substr(0, colon))] = std::stod(item.substr(colon + 1));
        } catch (const std::logic_error&) {
            throw PreconditionError("distribution entry '" + item + "' is not label:fraction");
        }
        start = end + 1;
    }
    return d;
}

void write_json(const fs::path& path, const ordered_json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

std::map<std::string, std::vector<JudgmentRecord>> group_by_run(const std::vector<JudgmentRecord>& records)
{
    std::map<std::string, std::vector<JudgmentRecord>> runs;
    for (const auto& r : records) runs[r.run_id].push_back(r);
    return runs;
}

// Successful records of each run, restricted to pairs every run judged.
std::map<std::string, std::vector<JudgmentRecord>> common_successes(
    const std::map<std::string, std::vector<JudgmentRecord>>& runs, std::size_t& excluded)
{
    std::map<PairId, std::size_t> seen;
    for (const auto& [id, recs] : runs) {
        for (const auto& r : recs) {
            if (r.ok()) ++seen[{r.query_id, r.candidate_id}];
        }
    }
    std::map<std::string, std::vector<JudgmentRecord>> out;
    excluded = 0;
    for (const auto& [id, recs] : runs) {
        auto& kept = out[id];
        for (const auto& r : recs) {
            if (r.ok() && seen[{r.query_id, r.candidate_id}] == runs.size()) {
                kept.push_back(r);
            } else {
                ++excluded;
            }
        }
        std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
            return std::tie(a.query_id, a.candidate_id) < std::tie(b.query_id, b.candidate_id);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------

void cmd_ingest(const std::string& cases, const std::string& pools, const std::string& qrels, const std::string& out_dir,
                std::ostream& out)
{
    std::optional<fs::path> q;
    if (!qrels.empty()) q = qrels;
    auto bundle = ingest_corpus(cases, pools, q);
    ordered_json summary;
    summary["cases"] = bundle.cases.size();
    summary["pools"] = bundle.pools.size();
    std::size_t candidates = 0;
    for (const auto& p : bundle.pools) candidates += p.candidate_ids.size();
    summary["pool_entries"] = candidates;
    summary["qrels_pairs"] = bundle.qrels ? bundle.qrels->pair_count() : 0;
    summary["warnings"] = bundle.warnings;
    if (!out_dir.empty()) {
        std::string lines;
        for (const auto& c : bundle.cases.cases()) lines += case_to_json(c).dump() + "\n";
        io::write_file_atomic(fs::path(out_dir) / "cases.jsonl", lines);
        ordered_json pj = ordered_json::array();
        for (const auto& p : bundle.pools) pj.push_back({{"query_id", p.query_id}, {"candidate_ids", p.candidate_ids}});
        write_json(fs::path(out_dir) / "pools.json", pj);
        if (bundle.qrels) write_json(fs::path(out_dir) / "qrels.json", qrels_to_json(*bundle.qrels));
    }
    out << summary.dump(2) << "\n";
}

// LeCaRD layout: a JSONL query file with "ridx", a directory holding one
// sub-directory of candidate JSON files per query, and optional labels as
// {query: {candidate: label}}.
void cmd_ingest_lecard(const std::string& queries, const std::string& candidates_dir, const std::string& labels,
                       const std::string& out_dir, std::ostream& out)
{
    if (out_dir.empty()) throw PreconditionError("--out is required for LeCaRD conversion");
    CaseStore store;
    std::vector<CandidatePool> pools;
    std::size_t line_no = 0;
    for (const auto& line : io::split_lines(io::read_file(queries))) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.contains("ridx")) throw ParseError("malformed LeCaRD query", line_no);
        const auto qid = rec["ridx"].is_string() ? rec["ridx"].get<std::string>() : rec["ridx"].dump();
        store.add(case_from_lecard(rec, qid));
        CandidatePool pool{qid, {}};
        const auto dir = fs::path(candidates_dir) / qid;
        if (fs::is_directory(dir)) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(dir)) {
                if (e.path().extension() == ".json") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                const auto cid = f.stem().string();
                if (!store.contains(cid)) {
                    json doc = json::parse(io::read_file(f), nullptr, false);
                    if (doc.is_discarded()) throw ParseError("malformed LeCaRD candidate " + f.string());
                    store.add(case_from_lecard(doc, cid));
                }
                pool.candidate_ids.push_back(cid);
            }
        }
        pools.push_back(std::move(pool));
    }
    std::optional<Qrels> qrels;
    if (!labels.empty()) {
        json lj = json::parse(io::read_file(labels), nullptr, false);
        if (lj.is_discarded() || !lj.is_object()) throw ParseError("LeCaRD labels must be a JSON object");
        qrels.emplace();
        for (const auto& [qid, row] : lj.items()) {
            for (const auto& [cid, label] : row.items()) qrels->set(qid, cid, label.get<int>());
        }
    }
    auto warnings = check_integrity(store, pools, qrels ? &*qrels : nullptr);
    std::string lines;
    for (const auto& c : store.cases()) lines += case_to_json(c).dump() + "\n";
    io::write_file_atomic(fs::path(out_dir) / "cases.jsonl", lines);
    ordered_json pj = ordered_json::array();
    for (const auto& p : pools) pj.push_back({{"query_id", p.query_id}, {"candidate_ids", p.candidate_ids}});
    write_json(fs::path(out_dir) / "pools.json", pj);
    if (qrels) write_json(fs::path(out_dir) / "qrels.json", qrels_to_json(*qrels));
    ordered_json summary;
    summary["cases"] = store.size();
    summary["pools"] = pools.size();
    summary["qrels_pairs"] = qrels ? qrels->pair_count() : 0;
    summary["warnings"] = warnings;
    out << summary.dump(2) << "\n";
}

void cmd_demos_validate(const Config& config, const std::string& path, std::ostream& out)
{
    auto lib = load_demo_library(path.empty() ? config.demos_path : path, config.tokenizer(), config.bm25);
    ordered_json j;
    j["demonstrations"] = lib.size();
    for (auto stage : {Stage::FE, Stage::FA}) {
        for (auto ft : {FactType::MF, FactType::LF}) {
            const auto& set = lib.set(stage, ft);
            const auto key = std::string(to_string(stage)) + "_" + std::string(to_string(ft));
            if (stage == Stage::FE) {
                j["sets"][key] = set.size();
            } else {
                std::size_t rel = 0;
                for (const auto& d : set) rel += d.polarity == Polarity::relevant;
                j["sets"][key] = {{"relevant", rel}, {"irrelevant", set.size() - rel}};
            }
        }
    }
    j["fingerprint"] = lib.fingerprint();
    out << j.dump(2) << "\n";
}

void cmd_judge(const Config& config, const JudgeArgs& jargs, const std::string& cases_path, const std::string& pools_path,
               const std::string& out_path, std::optional<std::size_t> runs_opt, std::optional<std::size_t> top_n_opt,
               std::ostream& out, std::ostream& err)
{
    auto cases = read_cases(cases_path);
    auto pools = parse_pools_json(io::read_file(pools_path));
    check_integrity(cases, pools, nullptr);
    auto wb = make_workbench(config, jargs);
    const auto runs = runs_opt.value_or(config.judge.runs);
    const auto top_n = top_n_opt.value_or(config.judge.top_n_candidates);
    if (runs == 0) throw PreconditionError("--runs must be >= 1");
    std::vector<JudgmentRecord> all;
    std::size_t failed = 0;
    for (std::size_t r = 1; r <= runs; ++r) {
        auto engine = wb.engine(false, r - 1);
        const auto run_id = "run" + std::to_string(r);
        for (const auto& pool : pools) {
            auto recs = engine.judge_query(cases.at(pool.query_id), pool, cases, top_n, config.ablation, run_id);
            for (auto& rec : recs) {
                if (!rec.ok()) {
                    ++failed;
                    err << "warning: " << run_id << " " << rec.query_id << "/" << rec.candidate_id << ": " << rec.error
                        << "\n";
                }
                all.push_back(std::move(rec));
            }
        }
    }
    io::write_file_atomic(out_path, records_to_jsonl(all));
    ordered_json summary;
    summary["records"] = all.size();
    summary["failed"] = failed;
    summary["runs"] = runs;
    summary["out"] = out_path;
    out << summary.dump(2) << "\n";
}

void cmd_reliability(const std::string& in, const std::string& report_dir, std::ostream& out)
{
    auto runs = group_by_run(parse_records_jsonl(io::read_file(in)));
    if (runs.size() < 2) throw PreconditionError("reliability needs at least two runs in the input");
    std::size_t excluded = 0;
    auto common = common_successes(runs, excluded);
    std::vector<LabelSeries> series;
    std::vector<std::string> names;
    for (const auto& [id, recs] : common) {
        names.push_back(id);
        series.push_back(label_series(recs));
    }
    auto rel = reliability_kappa(series);
    ordered_json j;
    j["metric"] = "reliability";
    j["runs"] = names;
    j["pairs"] = series.front().size();
    j["excluded_records"] = excluded;
    j["mean_pairwise_kappa"] = rel.mean_pairwise_kappa;
    j["per_pair"] = ordered_json::array();
    for (const auto& p : rel.per_pair) {
        j["per_pair"].push_back({{"run_a", names[p.run_a]}, {"run_b", names[p.run_b]}, {"kappa", p.kappa}});
    }
    if (!report_dir.empty()) write_json(fs::path(report_dir) / "report.json", j);
    out << j.dump(2) << "\n";
}

void cmd_validity(const std::string& in, const std::string& qrels_path, const std::string& report_dir, std::ostream& out)
{
    auto runs = group_by_run(parse_records_jsonl(io::read_file(in)));
    if (runs.empty()) throw PreconditionError("no judgment records in " + in);
    auto qrels = parse_qrels_json(io::read_file(qrels_path));
    ordered_json j;
    j["metric"] = "validity";
    j["per_run"] = ordered_json::object();
    double mf = 0, lf = 0, four = 0;
    std::vector<std::string> warnings;
    for (const auto& [id, recs] : runs) {
        auto v = validity_kappa(recs, qrels);
        j["per_run"][id] = {{"kappa_mf", v.kappa_mf},
                            {"kappa_lf", v.kappa_lf},
                            {"kappa_4level", v.kappa_4level},
                            {"pairs", v.pairs},
                            {"failed_excluded", v.failed_excluded}};
        mf += v.kappa_mf;
        lf += v.kappa_lf;
        four += v.kappa_4level;
        for (auto& w : v.warnings) warnings.push_back(id + ": " + w);
    }
    const auto n = static_cast<double>(runs.size());
    j["mean"] = {{"kappa_mf", mf / n}, {"kappa_lf", lf / n}, {"kappa_4level", four / n}};
    j["warnings"] = warnings;
    if (!report_dir.empty()) write_json(fs::path(report_dir) / "report.json", j);
    out << j.dump(2) << "\n";
}

void cmd_ndcg(const std::string& run_path, const std::string& qrels_path, std::size_t k, std::ostream& out)
{
    auto run = parse_trec_run(io::read_file(run_path));
    auto qrels = parse_qrels_json(io::read_file(qrels_path));
    auto r = ndcg_at_k(run, qrels, k);
    ordered_json j;
    j["k"] = k;
    j["mean"] = r.mean;
    j["per_query"] = r.per_query;
    j["skipped"] = r.skipped;
    out << j.dump(2) << "\n";
}

void cmd_heatmap(const std::string& in, const std::string& qrels_path, const std::string& run_id,
                 const std::string& out_dir, std::ostream& out)
{
    auto runs = group_by_run(parse_records_jsonl(io::read_file(in)));
    if (runs.empty()) throw PreconditionError("no judgment records in " + in);
    auto it = run_id.empty() ? runs.begin() : runs.find(run_id);
    if (it == runs.end()) throw PreconditionError("run '" + run_id + "' not found in " + in);
    auto qrels = parse_qrels_json(io::read_file(qrels_path));
    const auto& recs = it->second;
    auto pred = label_series(recs);
    auto pred_mf = mf_series(recs);
    auto pred_lf = lf_series(recs);
    auto gold = gold_series(pred, qrels);
    auto gold_mf = gold_series(pred_mf, qrels, [](int l) { return gold_fact_flags(l).mf_relevant ? 1 : 0; });
    auto gold_lf = gold_series(pred_lf, qrels, [](int l) { return gold_fact_flags(l).lf_relevant ? 1 : 0; });
    const fs::path dir(out_dir);
    auto m4 = confusion_matrix(pred, gold, {0, 1, 2, 3});
    io::write_file_atomic(dir / "heatmap_4x4.csv", confusion_to_csv(m4));
    io::write_file_atomic(dir / "heatmap_mf.csv", confusion_to_csv(confusion_matrix(pred_mf, gold_mf, {0, 1})));
    io::write_file_atomic(dir / "heatmap_lf.csv", confusion_to_csv(confusion_matrix(pred_lf, gold_lf, {0, 1})));
    ordered_json j;
    j["run_id"] = it->first;
    j["pairs"] = m4.total();
    j["files"] = {(dir / "heatmap_4x4.csv").string(), (dir / "heatmap_mf.csv").string(),
                  (dir / "heatmap_lf.csv").string()};
    out << j.dump(2) << "\n";
}

int cmd_annotate(const Config& config, const JudgeArgs& jargs, const std::string& cases_path,
                 const std::string& pairs_path, const std::string& out_path, std::ostream& out, std::ostream& err)
{
    auto cases = read_cases(cases_path);
    auto pairs = read_pairs(pairs_path);
    auto wb = make_workbench(config, jargs);
    auto engine = wb.engine(true);
    InterruptGuard guard;
    AnnotateOptions opts;
    opts.checkpoint = out_path + ".partial";
    opts.parallelism = config.parallelism;
    opts.stop = guard.token();
    auto result = annotate_pairs(engine, cases, pairs, config.ablation, opts);
    ordered_json summary;
    summary["pairs"] = pairs.size();
    summary["resumed"] = result.resumed;
    summary["judged"] = result.judged;
    summary["failed"] = result.failed;
    summary["interrupted"] = result.interrupted;
    out << summary.dump(2) << "\n";
    if (result.interrupted) {
        err << "interrupted; rerun the same command to resume from " << opts.checkpoint.string() << "\n";
        return interrupted;
    }
    io::write_file_atomic(out_path, annotated_to_jsonl(result.annotated));
    std::error_code ec;
    fs::remove(opts.checkpoint, ec);
    return ok;
}

fs::path spec_sidecar(const std::string& dataset_path) { return dataset_path + ".spec.json"; }

void cmd_build(const std::string& in, std::size_t size, const std::string& mode, const std::string& dist,
               std::uint64_t seed, const std::string& name, const std::string& out_path, std::ostream& out)
{
    DatasetSpec spec;
    spec.name = name;
    spec.size = size;
    spec.mode = parse_dataset_mode(mode);
    spec.seed = seed;
    if (!dist.empty()) spec.target_distribution = parse_distribution(dist);
    auto annotated = parse_annotated_jsonl(io::read_file(in));
    auto ds = build_dataset(annotated, spec);
    io::write_file_atomic(out_path, annotated_to_jsonl(ds));
    write_json(spec_sidecar(out_path), dataset_spec_to_json(spec));
    ordered_json j;
    j["name"] = spec.name;
    j["size"] = ds.size();
    std::map<std::string, std::size_t> hist{{"0", 0}, {"1", 0}, {"2", 0}, {"3", 0}};
    for (const auto& a : ds) ++hist[std::to_string(a.record.label)];
    j["histogram"] = hist;
    out << j.dump(2) << "\n";
}

void cmd_export(const Config& config, const std::string& in, const std::string& cases_path, const std::string& format,
                const std::string& out_path, std::string manifest, const std::string& compare, std::ostream& out)
{
    auto ds = parse_annotated_jsonl(io::read_file(in));
    auto cases = read_cases(cases_path);
    DatasetSpec spec;
    if (fs::exists(spec_sidecar(in))) {
        spec = dataset_spec_from_json(json::parse(io::read_file(spec_sidecar(in))));
    } else {
        spec.name = fs::path(in).stem().string();
        spec.size = ds.size();
    }
    if (manifest.empty()) manifest = (fs::path(out_path).parent_path() / "manifest.json").string();
    std::optional<std::pair<std::string, std::vector<CasePair>>> other;
    if (!compare.empty()) {
        std::vector<CasePair> pairs;
        for (const auto& a : parse_annotated_jsonl(io::read_file(compare))) pairs.push_back(a.pair);
        std::string other_name = fs::path(compare).stem().string();
        if (fs::exists(spec_sidecar(compare))) {
            other_name = dataset_spec_from_json(json::parse(io::read_file(spec_sidecar(compare)))).name;
        }
        other = std::make_pair(other_name, std::move(pairs));
    }
    auto templates = config.judge.templates_dir.empty() ? TemplateSet::builtin() : TemplateSet::load(config.judge.templates_dir);
    auto m = export_dataset(ds, cases, parse_export_format(format), out_path, spec, templates.system_text(), manifest, other);
    out << m.to_json().dump(2) << "\n";
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Legal case relevance judgment pipeline", "casejudge"};
    app.require_subcommand(1);
    std::function<int()> action;

    // ingest
    std::string cases, pools, qrels, out_path, lecard_queries, lecard_candidates, lecard_labels;
    auto* ingest = app.add_subcommand("ingest", "Validate a corpus, or convert LeCaRD files into one");
    ingest->add_option("--cases", cases, "Cases JSONL");
    ingest->add_option("--pools", pools, "Candidate pools JSON");
    ingest->add_option("--qrels", qrels, "Gold labels JSON");
    ingest->add_option("--out", out_path, "Directory for normalized corpus files");
    ingest->add_option("--lecard-queries", lecard_queries, "LeCaRD query JSONL");
    ingest->add_option("--lecard-candidates", lecard_candidates, "LeCaRD candidate directory");
    ingest->add_option("--lecard-labels", lecard_labels, "LeCaRD label JSON");
    ingest->callback([&] {
        action = [&] {
            if (!lecard_queries.empty()) {
                cmd_ingest_lecard(lecard_queries, lecard_candidates, lecard_labels, out_path, out);
            } else {
                if (cases.empty() || pools.empty()) throw CLI::ValidationError("ingest", "--cases and --pools are required");
                cmd_ingest(cases, pools, qrels, out_path, out);
            }
            return static_cast<int>(ok);
        };
    });

    // demos validate
    ConfigArgs demos_cfg;
    std::string demos_path;
    auto* demos = app.add_subcommand("demos", "Demonstration library tools");
    demos->require_subcommand(1);
    auto* demos_validate = demos->add_subcommand("validate", "Check a demonstration library and summarize it");
    demos_validate->add_option("--demos", demos_path, "Demonstration library JSON");
    demos_cfg.attach(demos_validate);
    demos_validate->callback([&] {
        action = [&] {
            cmd_demos_validate(demos_cfg.load(), demos_path, out);
            return static_cast<int>(ok);
        };
    });

    // judge
    ConfigArgs judge_cfg;
    JudgeArgs judge_args;
    std::string judge_cases, judge_pools, judge_out;
    std::optional<std::size_t> judge_runs, judge_top_n;
    auto* judge = app.add_subcommand("judge", "Judge query/candidate pairs with the staged workflow");
    judge->add_option("--cases,--queries", judge_cases, "Cases JSONL holding queries and candidates")->required();
    judge->add_option("--pools", judge_pools, "Candidate pools JSON")->required();
    judge->add_option("--out", judge_out, "Judgment records JSONL")->required();
    judge->add_option("--runs", judge_runs, "Independent runs (default judge.runs)");
    judge->add_option("--top-n", judge_top_n, "Candidates per query (default judge.top_n_candidates)");
    judge_args.attach(judge);
    judge_cfg.attach(judge);
    judge->callback([&] {
        action = [&] {
            cmd_judge(judge_cfg.load(), judge_args, judge_cases, judge_pools, judge_out, judge_runs, judge_top_n, out, err);
            return static_cast<int>(ok);
        };
    });

    // evaluate
    std::string eval_in, eval_qrels, eval_report;
    auto* evaluate = app.add_subcommand("evaluate", "Agreement metrics over judgment records");
    evaluate->require_subcommand(1);
    auto* reliability = evaluate->add_subcommand("reliability", "Mean pairwise kappa between runs");
    reliability->add_option("--in", eval_in, "Judgment records JSONL")->required();
    reliability->add_option("--report-dir", eval_report, "Directory for report.json");
    reliability->callback([&] {
        action = [&] {
            cmd_reliability(eval_in, eval_report, out);
            return static_cast<int>(ok);
        };
    });
    auto* validity = evaluate->add_subcommand("validity", "Kappa against gold labels");
    validity->add_option("--in", eval_in, "Judgment records JSONL")->required();
    validity->add_option("--qrels", eval_qrels, "Gold labels JSON")->required();
    validity->add_option("--report-dir", eval_report, "Directory for report.json");
    validity->callback([&] {
        action = [&] {
            cmd_validity(eval_in, eval_qrels, eval_report, out);
            return static_cast<int>(ok);
        };
    });

    // ndcg
    std::string ndcg_run, ndcg_qrels;
    std::size_t ndcg_k = 30;
    auto* ndcg = app.add_subcommand("ndcg", "NDCG@k of a TREC run against gold labels");
    ndcg->add_option("--run", ndcg_run, "TREC run file")->required();
    ndcg->add_option("--qrels", ndcg_qrels, "Gold labels JSON")->required();
    ndcg->add_option("--k", ndcg_k, "Cutoff")->check(CLI::PositiveNumber);
    ndcg->callback([&] {
        action = [&] {
            cmd_ndcg(ndcg_run, ndcg_qrels, ndcg_k, out);
            return static_cast<int>(ok);
        };
    });

    // augment
    auto* augment = app.add_subcommand("augment", "Build training data from annotated case pairs");
    augment->require_subcommand(1);
    ConfigArgs aug_cfg;
    JudgeArgs aug_judge;
    std::string aug_cases, aug_pairs, aug_out, aug_in;
    std::optional<std::size_t> aug_n, aug_top;
    std::optional<std::uint64_t> aug_seed;

    auto* sample = augment->add_subcommand("sample", "Sample distinct case pairs");
    sample->add_option("--cases", aug_cases, "Cases JSONL")->required();
    sample->add_option("--n", aug_n, "Number of pairs (default augment.pairs)");
    sample->add_option("--seed", aug_seed, "Seed (default augment.seed)");
    sample->add_option("--out", aug_out, "Pairs JSONL")->required();
    aug_cfg.attach(sample);
    sample->callback([&] {
        action = [&] {
            auto cfg = aug_cfg.load();
            auto store = read_cases(aug_cases);
            auto pairs = sample_pairs(store, aug_n.value_or(cfg.augment.pairs), aug_seed.value_or(cfg.augment.seed));
            io::write_file_atomic(aug_out, pairs_to_jsonl(pairs));
            out << ordered_json{{"pairs", pairs.size()}, {"out", aug_out}}.dump(2) << "\n";
            return static_cast<int>(ok);
        };
    });

    auto* prerank = augment->add_subcommand("prerank", "Keep the top pairs by BM25 similarity");
    prerank->add_option("--cases", aug_cases, "Cases JSONL")->required();
    prerank->add_option("--pairs", aug_pairs, "Pairs JSONL")->required();
    prerank->add_option("--top", aug_top, "Pairs to keep (default augment.prerank_top)");
    prerank->add_option("--out", aug_out, "Pairs JSONL")->required();
    aug_cfg.attach(prerank);
    prerank->callback([&] {
        action = [&] {
            auto cfg = aug_cfg.load();
            auto store = read_cases(aug_cases);
            Bm25PairScorer scorer(store, cfg.tokenizer(), cfg.bm25);
            auto kept = prerank_pairs(read_pairs(aug_pairs), scorer, aug_top.value_or(cfg.augment.prerank_top));
            io::write_file_atomic(aug_out, pairs_to_jsonl(kept));
            out << ordered_json{{"pairs", kept.size()}, {"out", aug_out}}.dump(2) << "\n";
            return static_cast<int>(ok);
        };
    });

    auto* annotate = augment->add_subcommand("annotate", "Judge pairs; resumable after interruption");
    annotate->add_option("--cases", aug_cases, "Cases JSONL")->required();
    annotate->add_option("--pairs", aug_pairs, "Pairs JSONL")->required();
    annotate->add_option("--out", aug_out, "Annotated pairs JSONL")->required();
    aug_judge.attach(annotate);
    aug_cfg.attach(annotate);
    annotate->callback([&] {
        action = [&] { return cmd_annotate(aug_cfg.load(), aug_judge, aug_cases, aug_pairs, aug_out, out, err); };
    });

    std::size_t build_size = 0;
    std::string build_mode = "random", build_dist, build_name = "dataset";
    std::uint64_t build_seed = 0;
    auto* build = augment->add_subcommand("build", "Sample a dataset from annotated pairs");
    build->add_option("--in", aug_in, "Annotated pairs JSONL")->required();
    build->add_option("--size", build_size, "Dataset size")->required();
    build->add_option("--mode", build_mode, "random or distribution_matched");
    build->add_option("--dist", build_dist, "Target label distribution, e.g. 0:0.4,1:0.2,2:0.1,3:0.3");
    build->add_option("--seed", build_seed, "Seed");
    build->add_option("--name", build_name, "Dataset name");
    build->add_option("--out", aug_out, "Dataset JSONL")->required();
    build->callback([&] {
        action = [&] {
            cmd_build(aug_in, build_size, build_mode, build_dist, build_seed, build_name, aug_out, out);
            return static_cast<int>(ok);
        };
    });

    std::string export_format = "label_only", export_manifest, export_compare;
    auto* exp = augment->add_subcommand("export", "Write a dataset for fine-tuning, with a manifest");
    exp->add_option("--in", aug_in, "Dataset JSONL")->required();
    exp->add_option("--cases", aug_cases, "Cases JSONL")->required();
    exp->add_option("--format", export_format, "label_only or rationale");
    exp->add_option("--out", aug_out, "Output JSONL")->required();
    exp->add_option("--manifest", export_manifest, "Manifest path (default: manifest.json beside --out)");
    exp->add_option("--compare", export_compare, "Another dataset to report pair overlap with");
    aug_cfg.attach(exp);
    exp->callback([&] {
        action = [&] {
            cmd_export(aug_cfg.load(), aug_in, aug_cases, export_format, aug_out, export_manifest, export_compare, out);
            return static_cast<int>(ok);
        };
    });

    // report heatmap
    std::string heat_in, heat_qrels, heat_out, heat_run;
    auto* report = app.add_subcommand("report", "Reports over judgment records");
    report->require_subcommand(1);
    auto* heatmap = report->add_subcommand("heatmap", "Confusion matrices of predicted vs gold labels as CSV");
    heatmap->add_option("--in", heat_in, "Judgment records JSONL")->required();
    heatmap->add_option("--qrels", heat_qrels, "Gold labels JSON")->required();
    heatmap->add_option("--out-dir", heat_out, "Output directory")->required();
    heatmap->add_option("--run-id", heat_run, "Run to report (default: the first)");
    heatmap->callback([&] {
        action = [&] {
            cmd_heatmap(heat_in, heat_qrels, heat_run, heat_out, out);
            return static_cast<int>(ok);
        };
    });

    // config
    ConfigArgs show_cfg;
    auto* config = app.add_subcommand("config", "Print the effective configuration");
    show_cfg.attach(config);
    config->callback([&] {
        action = [&] {
            out << config_to_json(show_cfg.load()).dump(2) << "\n";
            return static_cast<int>(ok);
        };
    });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return usage_error;
    }
    if (!action) return usage_error;
    try {
        return action();
    } catch (const CLI::ValidationError& e) {
        err << "usage error: " << e.what() << "\n";
        return usage_error;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return data_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return data_error;
    }
}

}  // namespace casejudge::cli
