#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "casejudge/corpus.hpp"
#include "casejudge/demo_store.hpp"
#include "casejudge/llm_gateway.hpp"
#include "casejudge/prompt.hpp"

namespace casejudge {

/// Workflow switches for ablation runs.
struct AblationFlags {
    /// Sample demonstrations at random instead of BM25 matching.
    bool disable_adm = false;
    /// Skip guided extraction; the raw fact text stands in for both facts.
    bool disable_fe = false;
    /// Annotate without relevant/irrelevant demonstrations.
    bool disable_fa_demos = false;

    bool operator==(const AblationFlags&) const = default;
};

struct FactExtraction {
    std::string case_id;
    FactType fact_type = FactType::MF;
    std::string text;
    std::string raw_response;
    std::vector<std::string> demo_ids;

    bool operator==(const FactExtraction&) const = default;
};

struct FactVerdict {
    FactType fact_type = FactType::MF;
    bool relevant = false;
    std::string reasoning;
    std::string raw_response;
    std::vector<std::string> demo_ids;

    bool operator==(const FactVerdict&) const = default;
};

struct JudgmentRecord {
    std::string query_id;
    std::string candidate_id;
    std::string run_id;
    /// Empty on success; otherwise the failing step and its message.
    std::string error;
    /// {query, candidate}.
    std::array<FactExtraction, 2> mf_extractions;
    std::array<FactExtraction, 2> lf_extractions;
    FactVerdict mf_verdict;
    FactVerdict lf_verdict;
    int label = 0;
    std::string config_fingerprint;

    bool ok() const noexcept { return error.empty(); }
    bool operator==(const JudgmentRecord&) const = default;
};

/// 1 for MF relevance plus 2 for LF relevance.
int aggregate_label(const FactVerdict& mf, const FactVerdict& lf);

nlohmann::ordered_json record_to_json(const JudgmentRecord& record);
JudgmentRecord record_from_json(const nlohmann::json& j);
std::string records_to_jsonl(const std::vector<JudgmentRecord>& records);
std::vector<JudgmentRecord> parse_records_jsonl(std::string_view content);

/// Where FA's demonstration matching draws its query text from.
enum class FaAdmQuery { extracted, raw };

struct EngineOptions {
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.4;
    int max_tokens = 1024;
    std::size_t top_k_demos = 2;
    std::size_t fa_demos_per_polarity = 2;
    /// Extra attempts after an unparseable response.
    int retry = 2;
    /// Seeds random demonstration sampling when ADM is disabled.
    std::uint64_t seed = 0;
    FaAdmQuery fa_adm_query = FaAdmQuery::extracted;
    std::size_t parallelism = 1;
};

/// Fact extractions shared across pairs, computed at most once per
/// (case, fact type) even under concurrent lookups. Failures are cached too.
class FeCache {
public:
    FactExtraction get_or_compute(const std::string& case_id, FactType fact_type,
                                  const std::function<FactExtraction()>& compute);
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::map<std::pair<std::string, FactType>, std::shared_future<FactExtraction>> entries_;
};

/// Runs the staged workflow for case pairs: fact extraction (MF, then LF
/// from the extracted MF) for both cases, fact annotation for MF and LF, and
/// aggregation to a 0-3 label.
class JudgeEngine {
public:
    JudgeEngine(Judge& judge, const DemoLibrary& demos, TemplateSet templates, EngineOptions options = {});

    /// MF reads the case's fact text; LF reads `prior_mf`, which is required
    /// unless FE is disabled, in which case the fact text is passed through.
    FactExtraction extract_fact(const Case& c, FactType fact_type, const FactExtraction* prior_mf,
                                const AblationFlags& flags) const;

    /// `adm_query` overrides the ADM query text (default: both facts joined).
    FactVerdict judge_fact_pair(const FactExtraction& a, const FactExtraction& b, FactType fact_type,
                                const AblationFlags& flags,
                                const std::optional<std::string>& adm_query = std::nullopt) const;

    /// FE-MF(query), FE-MF(candidate), FE-LF(query), FE-LF(candidate),
    /// FA-MF, FA-LF. Errors are rethrown as StageError naming the step. With
    /// `cache`, the query's extractions are shared across calls.
    JudgmentRecord judge_pair(const Case& query, const Case& candidate, const AblationFlags& flags,
                              const std::string& run_id, FeCache* cache = nullptr) const;

    /// Judges the first min(top_n, pool size) candidates in pool order.
    /// Failed pairs come back as records with `error` set.
    std::vector<JudgmentRecord> judge_query(const Case& query, const CandidatePool& pool, const CaseStore& cases,
                                            std::size_t top_n, const AblationFlags& flags,
                                            const std::string& run_id) const;

    std::string config_fingerprint(const AblationFlags& flags) const;

    const EngineOptions& options() const noexcept { return options_; }
    const TemplateSet& templates() const noexcept { return templates_; }

private:
    std::vector<Demonstration> select_demos(std::string_view x, Stage stage, FactType fact_type, std::size_t k,
                                            const AblationFlags& flags,
                                            std::optional<Polarity> polarity = std::nullopt) const;
    std::pair<ParsedResponse, std::string> call(Stage stage, FactType fact_type, const PromptText& prompt) const;

    Judge& judge_;
    const DemoLibrary& demos_;
    TemplateSet templates_;
    EngineOptions options_;
};

/// A record carrying only ids and the error.
JudgmentRecord failed_record(const std::string& query_id, const std::string& candidate_id, const std::string& run_id,
                             const std::string& fingerprint, const std::string& error);

}  // namespace casejudge
