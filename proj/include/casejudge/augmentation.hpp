#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include <json.hpp>

#include "casejudge/corpus.hpp"
#include "casejudge/judge_engine.hpp"
#include "casejudge/retrieval.hpp"

namespace casejudge {

/// Unordered pair of distinct cases, stored with left_id < right_id.
struct CasePair {
    std::string left_id;
    std::string right_id;

    /// Throws DomainError when a == b.
    static CasePair of(std::string a, std::string b);
    std::string key() const { return left_id + '\t' + right_id; }
    auto operator<=>(const CasePair&) const = default;
};

/// n distinct pairs drawn uniformly without replacement from all C(N, 2)
/// pairs, returned in canonical order. Throws ExhaustedError when n exceeds
/// the pair universe.
std::vector<CasePair> sample_pairs(const CaseStore& corpus, std::size_t n, std::uint64_t seed);

class PairScorer {
public:
    virtual ~PairScorer() = default;
    virtual double score(const CasePair& pair) const = 0;
};

/// BM25 of the left case's fact text against a one-document index built
/// from the right case's fact text.
class Bm25PairScorer : public PairScorer {
public:
    Bm25PairScorer(const CaseStore& cases, Tokenizer tokenizer = Tokenizer{}, Bm25Params params = {});
    double score(const CasePair& pair) const override;

private:
    const CaseStore& cases_;
    Tokenizer tokenizer_;
    Bm25Params params_;
};

/// Pairs by descending score (12-significant-digit comparison), ties by
/// canonical key; the first min(top_n, size) are kept. Scorer failures are
/// rethrown as ScorerError naming the pair.
std::vector<CasePair> prerank_pairs(const std::vector<CasePair>& pairs, const PairScorer& scorer, std::size_t top_n);

struct AnnotatedPair {
    CasePair pair;
    JudgmentRecord record;

    bool operator==(const AnnotatedPair&) const = default;
};

nlohmann::ordered_json annotated_to_json(const AnnotatedPair& a);
AnnotatedPair annotated_from_json(const nlohmann::json& j);
std::string annotated_to_jsonl(const std::vector<AnnotatedPair>& items);
std::vector<AnnotatedPair> parse_annotated_jsonl(std::string_view content);

struct AnnotateOptions {
    std::string run_id = "augment";
    /// Successful pairs are appended here as they finish and skipped when
    /// found on a later call. Empty disables checkpointing.
    std::filesystem::path checkpoint;
    std::size_t parallelism = 1;
    /// Checked before each pair; pairs not started are left out.
    std::stop_token stop;
    /// Called after each newly judged pair (from worker threads, serialized).
    std::function<void(const AnnotatedPair&)> on_done;
};

struct AnnotateResult {
    /// Input order; failed pairs included with their error.
    std::vector<AnnotatedPair> annotated;
    std::size_t resumed = 0;
    std::size_t judged = 0;
    std::size_t failed = 0;
    bool interrupted = false;
};

AnnotateResult annotate_pairs(const JudgeEngine& engine, const CaseStore& cases, const std::vector<CasePair>& pairs,
                              const AblationFlags& flags, const AnnotateOptions& options = {});

enum class DatasetMode { distribution_matched, random };

std::string_view to_string(DatasetMode mode);
DatasetMode parse_dataset_mode(std::string_view s);

struct DatasetSpec {
    std::string name = "dataset";
    std::size_t size = 1;
    DatasetMode mode = DatasetMode::random;
    /// label -> fraction; required iff distribution_matched.
    std::optional<std::map<int, double>> target_distribution;
    std::uint64_t seed = 0;

    /// Throws PreconditionError.
    void validate() const;
};

nlohmann::ordered_json dataset_spec_to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

/// Largest-remainder quotas: floor(size * fraction) per label, leftover
/// units to the largest fractional parts (ties to the smaller label).
std::map<int, std::size_t> label_quotas(std::size_t size, const std::map<int, double>& distribution);

/// Samples a dataset from successful annotations, deterministic in the
/// seed and independent of input order; output in canonical pair order.
/// Throws InsufficientLabelError when a label's pool is below its quota and
/// ExhaustedError when a random build asks for more than the pool holds.
std::vector<AnnotatedPair> build_dataset(const std::vector<AnnotatedPair>& annotated, const DatasetSpec& spec);

enum class ExportFormat { label_only, rationale };

std::string_view to_string(ExportFormat f);
ExportFormat parse_export_format(std::string_view s);

struct Manifest {
    std::string name;
    std::size_t size = 0;
    std::string mode;
    std::uint64_t seed = 0;
    std::string format;
    std::map<int, std::size_t> histogram;
    std::string config_fingerprint;
    std::string sha256;
    /// Pairs shared with another dataset, when one was given.
    std::optional<std::pair<std::string, std::size_t>> overlap;

    nlohmann::ordered_json to_json() const;
};

/// One JSONL line per pair. label_only: query/candidate ids and texts plus
/// the label. rationale: a chat transcript whose assistant turn holds the
/// extracted facts, both analyses with their verdict lines, and the label.
std::string render_dataset(const std::vector<AnnotatedPair>& ds, const CaseStore& cases, ExportFormat format,
                           std::string_view system_text);

/// Writes the dataset and its manifest atomically.
Manifest export_dataset(const std::vector<AnnotatedPair>& ds, const CaseStore& cases, ExportFormat format,
                        const std::filesystem::path& out, const DatasetSpec& spec, std::string_view system_text,
                        const std::filesystem::path& manifest_path,
                        const std::optional<std::pair<std::string, std::vector<CasePair>>>& compare_with = std::nullopt);

}  // namespace casejudge
