#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "casejudge/corpus.hpp"
#include "casejudge/judge_engine.hpp"

namespace casejudge {

using PairId = std::pair<std::string, std::string>;

/// Labels for (query, candidate) pairs, in a fixed order.
struct LabelSeries {
    std::vector<PairId> ids;
    std::vector<int> labels;

    void add(std::string query_id, std::string candidate_id, int label);
    std::size_t size() const noexcept { return labels.size(); }
};

struct KappaResult {
    double kappa = 0.0;
    double p_observed = 0.0;
    double p_expected = 0.0;
    std::size_t n = 0;
    /// Both raters constant and different; kappa is reported as 0.
    bool degenerate = false;
};

/// Cohen's kappa over the union of observed classes. `b` is aligned to the
/// order of `a` by id. When both raters give one identical label throughout,
/// kappa is 1. Throws AlignmentError on differing id sets or duplicate ids,
/// PreconditionError on empty input.
KappaResult cohens_kappa_detail(const LabelSeries& a, const LabelSeries& b);
double cohens_kappa(const LabelSeries& a, const LabelSeries& b);

struct PairKappa {
    std::size_t run_a;
    std::size_t run_b;
    double kappa;
};

struct ReliabilityResult {
    double mean_pairwise_kappa = 0.0;
    std::vector<PairKappa> per_pair;
};

/// Kappa for every unordered pair of runs and their mean. Needs >= 2 runs.
ReliabilityResult reliability_kappa(const std::vector<LabelSeries>& runs);

struct ValidityResult {
    double kappa_mf = 0.0;
    double kappa_lf = 0.0;
    double kappa_4level = 0.0;
    std::size_t pairs = 0;
    /// Records with an error, left out of every series.
    std::size_t failed_excluded = 0;
    std::vector<std::string> warnings;
};

/// Kappa against gold for the MF flag, the LF flag and the 4-level label.
/// Throws MissingGoldError when a judged pair has no gold label.
ValidityResult validity_kappa(const std::vector<JudgmentRecord>& judged, const Qrels& qrels);

/// Series views of judged records; failed records are skipped.
LabelSeries label_series(const std::vector<JudgmentRecord>& judged);
LabelSeries mf_series(const std::vector<JudgmentRecord>& judged);
LabelSeries lf_series(const std::vector<JudgmentRecord>& judged);
/// Gold labels for the ids of `like` (mapped through `project`, if given).
LabelSeries gold_series(const LabelSeries& like, const Qrels& qrels, int (*project)(int) = nullptr);

struct ConfusionMatrix {
    std::vector<int> classes;
    /// counts[i][j]: pairs with a == classes[i] (predicted) and b == classes[j] (gold).
    std::vector<std::vector<std::int64_t>> counts;

    std::int64_t total() const;
    bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws DomainError for labels outside `classes`.
ConfusionMatrix confusion_matrix(const LabelSeries& predicted, const LabelSeries& gold, const std::vector<int>& classes);
/// Header row and column carry the class labels.
std::string confusion_to_csv(const ConfusionMatrix& m);

struct RunEntry {
    std::string candidate_id;
    double score = 0.0;
    int rank = 0;

    bool operator==(const RunEntry&) const = default;
};

/// Per query, entries in rank order: ranks 1, 2, ... strictly increasing and
/// scores non-increasing.
struct RunFile {
    std::map<std::string, std::vector<RunEntry>> queries;

    bool operator==(const RunFile&) const = default;
};

/// Reads `query_id Q0 candidate_id rank score tag` lines. Throws ParseError
/// on malformed lines or when a query violates the rank/score invariants.
RunFile parse_trec_run(std::string_view content);
std::string format_trec_run(const RunFile& run, std::string_view tag = "casejudge");
/// Ranks by descending score, ties by ascending candidate id.
RunFile run_from_scores(const std::map<std::string, std::vector<std::pair<std::string, double>>>& scores);

struct NdcgResult {
    double mean = 0.0;
    std::map<std::string, double> per_query;
    /// Queries with IDCG = 0 (no positive gold label).
    std::vector<std::string> skipped;
};

/// DCG@k = sum over ranks i <= k of (2^rel - 1) / log2(i + 1). IDCG takes the
/// query's gold labels in descending order. Candidates absent from qrels
/// count as 0. Throws EmptyRunError for a run without queries.
NdcgResult ndcg_at_k(const RunFile& run, const Qrels& qrels, std::size_t k);

}  // namespace casejudge
