#include "casejudge/judge_engine.hpp"

#include <cstdio>

#include "casejudge/errors.hpp"
#include "casejudge/io.hpp"
#include "casejudge/parallel.hpp"
#include "casejudge/text.hpp"

namespace casejudge {

using nlohmann::json;
using nlohmann::ordered_json;

int aggregate_label(const FactVerdict& mf, const FactVerdict& lf)
{
    return label_of({mf.relevant, lf.relevant});
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

ordered_json extraction_to_json(const FactExtraction& e)
{
    ordered_json j;
    j["case_id"] = e.case_id;
    j["fact_type"] = to_string(e.fact_type);
    j["text"] = e.text;
    j["demo_ids"] = e.demo_ids;
    j["raw_response"] = e.raw_response;
    return j;
}

ordered_json verdict_to_json(const FactVerdict& v)
{
    ordered_json j;
    j["fact_type"] = to_string(v.fact_type);
    j["relevant"] = v.relevant;
    j["reasoning"] = v.reasoning;
    j["demo_ids"] = v.demo_ids;
    j["raw_response"] = v.raw_response;
    return j;
}

FactExtraction extraction_from_json(const json& j)
{
    FactExtraction e;
    e.case_id = j.at("case_id").get<std::string>();
    e.fact_type = parse_fact_type(j.at("fact_type").get<std::string>());
    e.text = j.at("text").get<std::string>();
    e.demo_ids = j.value("demo_ids", std::vector<std::string>{});
    e.raw_response = j.value("raw_response", std::string{});
    return e;
}

FactVerdict verdict_from_json(const json& j)
{
    FactVerdict v;
    v.fact_type = parse_fact_type(j.at("fact_type").get<std::string>());
    v.relevant = j.at("relevant").get<bool>();
    v.reasoning = j.value("reasoning", std::string{});
    v.demo_ids = j.value("demo_ids", std::vector<std::string>{});
    v.raw_response = j.value("raw_response", std::string{});
    return v;
}

}  // namespace

ordered_json record_to_json(const JudgmentRecord& r)
{
    ordered_json j;
    j["query_id"] = r.query_id;
    j["candidate_id"] = r.candidate_id;
    j["run_id"] = r.run_id;
    j["status"] = r.ok() ? "ok" : "failed";
    if (r.ok()) {
        j["label"] = r.label;
        j["mf_extractions"] = {extraction_to_json(r.mf_extractions[0]), extraction_to_json(r.mf_extractions[1])};
        j["lf_extractions"] = {extraction_to_json(r.lf_extractions[0]), extraction_to_json(r.lf_extractions[1])};
        j["mf_verdict"] = verdict_to_json(r.mf_verdict);
        j["lf_verdict"] = verdict_to_json(r.lf_verdict);
    } else {
        j["label"] = nullptr;
        j["error"] = r.error;
    }
    j["config_fingerprint"] = r.config_fingerprint;
    return j;
}

JudgmentRecord record_from_json(const json& j)
{
    try {
        JudgmentRecord r;
        r.query_id = j.at("query_id").get<std::string>();
        r.candidate_id = j.at("candidate_id").get<std::string>();
        r.run_id = j.value("run_id", std::string{});
        r.config_fingerprint = j.value("config_fingerprint", std::string{});
        if (j.value("status", std::string("ok")) != "ok") {
            r.error = j.value("error", std::string("failed"));
            if (r.error.empty()) r.error = "failed";
            return r;
        }
        const auto& mf = j.at("mf_extractions");
        const auto& lf = j.at("lf_extractions");
        r.mf_extractions = {extraction_from_json(mf.at(0)), extraction_from_json(mf.at(1))};
        r.lf_extractions = {extraction_from_json(lf.at(0)), extraction_from_json(lf.at(1))};
        r.mf_verdict = verdict_from_json(j.at("mf_verdict"));
        r.lf_verdict = verdict_from_json(j.at("lf_verdict"));
        r.label = j.at("label").get<int>();
        if (r.label != aggregate_label(r.mf_verdict, r.lf_verdict)) {
            throw IntegrityError("record (" + r.query_id + ", " + r.candidate_id + ") label disagrees with its verdicts");
        }
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed judgment record: ") + e.what());
    }
}

std::string records_to_jsonl(const std::vector<JudgmentRecord>& records)
{
    std::string out;
    for (const auto& r : records) {
        out += record_to_json(r).dump();
        out += '\n';
    }
    return out;
}

std::vector<JudgmentRecord> parse_records_jsonl(std::string_view content)
{
    std::vector<JudgmentRecord> out;
    std::size_t line_no = 0;
    for (const auto& line : io::split_lines(content)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed judgment line: ") + e.what(), line_no);
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

JudgmentRecord failed_record(const std::string& query_id, const std::string& candidate_id, const std::string& run_id,
                             const std::string& fingerprint, const std::string& error)
{
    JudgmentRecord r;
    r.query_id = query_id;
    r.candidate_id = candidate_id;
    r.run_id = run_id;
    r.config_fingerprint = fingerprint;
    r.error = error.empty() ? "failed" : error;
    return r;
}

// ---------------------------------------------------------------------------

FactExtraction FeCache::get_or_compute(const std::string& case_id, FactType fact_type,
                                       const std::function<FactExtraction()>& compute)
{
    std::unique_lock lock(mu_);
    auto key = std::make_pair(case_id, fact_type);
    if (auto it = entries_.find(key); it != entries_.end()) {
        auto future = it->second;
        lock.unlock();
        return future.get();
    }
    std::promise<FactExtraction> promise;
    auto future = promise.get_future().share();
    entries_.emplace(std::move(key), future);
    lock.unlock();
    try {
        promise.set_value(compute());
    } catch (...) {
        promise.set_exception(std::current_exception());
    }
    return future.get();
}

std::size_t FeCache::size() const
{
    std::lock_guard lock(mu_);
    return entries_.size();
}

// ---------------------------------------------------------------------------

JudgeEngine::JudgeEngine(Judge& judge, const DemoLibrary& demos, TemplateSet templates, EngineOptions options)
    : judge_(judge), demos_(demos), templates_(std::move(templates)), options_(std::move(options))
{
    if (options_.top_k_demos == 0) throw PreconditionError("top_k_demos must be >= 1");
    if (options_.fa_demos_per_polarity == 0) throw PreconditionError("fa_demos_per_polarity must be >= 1");
    if (options_.retry < 0) throw PreconditionError("retry must be >= 0");
    if (options_.parallelism == 0) throw PreconditionError("parallelism must be >= 1");
}

std::vector<Demonstration> JudgeEngine::select_demos(std::string_view x, Stage stage, FactType fact_type, std::size_t k,
                                                     const AblationFlags& flags,
                                                     std::optional<Polarity> polarity) const
{
    if (flags.disable_adm) return demos_.random_select(x, stage, fact_type, k, options_.seed, polarity);
    return demos_.adm_select(x, stage, fact_type, k, polarity);
}

std::pair<ParsedResponse, std::string> JudgeEngine::call(Stage stage, FactType fact_type, const PromptText& prompt) const
{
    JudgeRequest req;
    req.system_text = prompt.system;
    req.model = options_.model;
    req.temperature = options_.temperature;
    req.max_tokens = options_.max_tokens;
    std::string last_error;
    for (int attempt = 0; attempt <= options_.retry; ++attempt) {
        req.user_text = attempt == 0 ? prompt.user : prompt.user + format_reminder(stage);
        auto response = judge_.complete(req);
        try {
            return {parse_judge_response(stage, response.text), std::move(response.text)};
        } catch (const JudgeResponseUnparseable& e) {
            last_error = e.what();
        }
    }
    throw JudgeResponseUnparseable(std::string(to_string(stage)) + "/" + std::string(to_string(fact_type)) +
                                   " response unparseable after " + std::to_string(options_.retry + 1) +
                                   " attempts: " + last_error);
}

namespace {

std::vector<std::string> ids_of(const std::vector<Demonstration>& demos)
{
    std::vector<std::string> ids;
    ids.reserve(demos.size());
    for (const auto& d : demos) ids.push_back(d.id);
    return ids;
}

}  // namespace

FactExtraction JudgeEngine::extract_fact(const Case& c, FactType fact_type, const FactExtraction* prior_mf,
                                         const AblationFlags& flags) const
{
    FactExtraction out;
    out.case_id = c.id;
    out.fact_type = fact_type;
    if (flags.disable_fe) {
        out.text = c.fact_text;
        return out;
    }
    std::string_view input = c.fact_text;
    if (fact_type == FactType::LF) {
        if (!prior_mf) throw PreconditionError("LF extraction for case '" + c.id + "' needs the MF extraction");
        if (prior_mf->fact_type != FactType::MF || prior_mf->case_id != c.id) {
            throw PreconditionError("LF extraction for case '" + c.id + "' was given a mismatched prior extraction");
        }
        input = prior_mf->text;
    }
    auto demos = select_demos(input, Stage::FE, fact_type, options_.top_k_demos, flags);
    auto prompt = assemble_prompt(templates_, Stage::FE, fact_type, demos, fe_target(input));
    auto [parsed, raw] = call(Stage::FE, fact_type, prompt);
    out.text = std::move(parsed.facts);
    out.raw_response = std::move(raw);
    out.demo_ids = ids_of(demos);
    return out;
}

FactVerdict JudgeEngine::judge_fact_pair(const FactExtraction& a, const FactExtraction& b, FactType fact_type,
                                         const AblationFlags& flags, const std::optional<std::string>& adm_query) const
{
    if (a.fact_type != fact_type || b.fact_type != fact_type) {
        throw PreconditionError("fact annotation for " + std::string(to_string(fact_type)) +
                                " received extractions of another fact type");
    }
    std::vector<Demonstration> demos;
    if (!flags.disable_fa_demos) {
        const std::string x = adm_query ? *adm_query : a.text + "\n" + b.text;
        for (Polarity p : {Polarity::relevant, Polarity::irrelevant}) {
            auto sel = select_demos(x, Stage::FA, fact_type, options_.fa_demos_per_polarity, flags, p);
            demos.insert(demos.end(), sel.begin(), sel.end());
        }
    }
    auto prompt = assemble_prompt(templates_, Stage::FA, fact_type, demos, fa_target(a.text, b.text));
    auto [parsed, raw] = call(Stage::FA, fact_type, prompt);
    FactVerdict v;
    v.fact_type = fact_type;
    v.relevant = parsed.relevant;
    v.reasoning = std::move(parsed.reasoning);
    v.raw_response = std::move(raw);
    v.demo_ids = ids_of(demos);
    return v;
}

JudgmentRecord JudgeEngine::judge_pair(const Case& query, const Case& candidate, const AblationFlags& flags,
                                       const std::string& run_id, FeCache* cache) const
{
    auto step = [](const std::string& name, auto&& fn) {
        try {
            return fn();
        } catch (const StageError&) {
            throw;
        } catch (const Error& e) {
            throw StageError(name, e.what());
        }
    };
    auto extract_query = [&](FactType f, const FactExtraction* prior) {
        auto compute = [&] { return extract_fact(query, f, prior, flags); };
        if (!cache) return compute();
        return cache->get_or_compute(query.id, f, compute);
    };

    JudgmentRecord r;
    r.query_id = query.id;
    r.candidate_id = candidate.id;
    r.run_id = run_id;
    r.config_fingerprint = config_fingerprint(flags);

    r.mf_extractions[0] = step("FE/MF query " + query.id, [&] { return extract_query(FactType::MF, nullptr); });
    r.mf_extractions[1] = step("FE/MF candidate " + candidate.id,
                               [&] { return extract_fact(candidate, FactType::MF, nullptr, flags); });
    r.lf_extractions[0] = step("FE/LF query " + query.id,
                               [&] { return extract_query(FactType::LF, &r.mf_extractions[0]); });
    r.lf_extractions[1] = step("FE/LF candidate " + candidate.id,
                               [&] { return extract_fact(candidate, FactType::LF, &r.mf_extractions[1], flags); });

    auto raw_query = [&]() -> std::optional<std::string> {
        if (options_.fa_adm_query == FaAdmQuery::raw) return query.fact_text + "\n" + candidate.fact_text;
        return std::nullopt;
    };
    r.mf_verdict = step("FA/MF", [&] {
        return judge_fact_pair(r.mf_extractions[0], r.mf_extractions[1], FactType::MF, flags, raw_query());
    });
    r.lf_verdict = step("FA/LF", [&] {
        return judge_fact_pair(r.lf_extractions[0], r.lf_extractions[1], FactType::LF, flags, raw_query());
    });
    r.label = aggregate_label(r.mf_verdict, r.lf_verdict);
    return r;
}

std::vector<JudgmentRecord> JudgeEngine::judge_query(const Case& query, const CandidatePool& pool,
                                                     const CaseStore& cases, std::size_t top_n,
                                                     const AblationFlags& flags, const std::string& run_id) const
{
    if (top_n == 0) throw PreconditionError("top_n must be >= 1");
    if (pool.query_id != query.id) {
        throw PreconditionError("pool belongs to '" + pool.query_id + "', not '" + query.id + "'");
    }
    const auto n = std::min(top_n, pool.candidate_ids.size());
    const auto fingerprint = config_fingerprint(flags);
    std::vector<JudgmentRecord> out(n);
    FeCache cache;
    parallel_for(n, options_.parallelism, [&](std::size_t i) {
        const auto& cid = pool.candidate_ids[i];
        try {
            out[i] = judge_pair(query, cases.at(cid), flags, run_id, &cache);
        } catch (const Error& e) {
            out[i] = failed_record(query.id, cid, run_id, fingerprint, e.what());
        }
    });
    return out;
}

std::string JudgeEngine::config_fingerprint(const AblationFlags& flags) const
{
    ordered_json j;
    j["judge"] = judge_.fingerprint();
    j["model"] = options_.model;
    char temp[32];
    std::snprintf(temp, sizeof temp, "%.17g", options_.temperature);
    j["temperature"] = temp;
    j["max_tokens"] = options_.max_tokens;
    j["top_k_demos"] = options_.top_k_demos;
    j["fa_demos_per_polarity"] = options_.fa_demos_per_polarity;
    j["fa_adm_query"] = options_.fa_adm_query == FaAdmQuery::extracted ? "extracted" : "raw";
    j["retry"] = options_.retry;
    j["seed"] = options_.seed;
    j["disable_adm"] = flags.disable_adm;
    j["disable_fe"] = flags.disable_fe;
    j["disable_fa_demos"] = flags.disable_fa_demos;
    j["tokenizer"] = to_string(demos_.tokenizer().mode());
    j["templates"] = templates_.fingerprint();
    j["demos"] = demos_.fingerprint();
    return text::sha256_hex(j.dump());
}

}  // namespace casejudge
