#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace casejudge {

/// One legal case. Only `fact_text` is ever shown to a judge; `full_text` is
/// kept for audit.
struct Case {
    std::string id;
    std::string fact_text;
    std::vector<std::string> crime_tags;
    std::optional<std::string> full_text;

    bool operator==(const Case&) const = default;
};

struct Violation {
    std::string field;
    std::string rule;

    bool operator==(const Violation&) const = default;
};

/// Empty iff the case is well formed.
std::vector<Violation> validate_case(const Case& c);

class CaseStore {
public:
    /// Throws IntegrityError on an invalid case or a duplicate id.
    void add(Case c);

    const Case& at(const std::string& id) const;
    const Case* find(const std::string& id) const;
    bool contains(const std::string& id) const { return index_.count(id) != 0; }
    std::size_t size() const noexcept { return cases_.size(); }

    /// Cases in insertion order.
    const std::vector<Case>& cases() const noexcept { return cases_; }

    bool operator==(const CaseStore& other) const { return cases_ == other.cases_; }

private:
    std::vector<Case> cases_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct CandidatePool {
    std::string query_id;
    std::vector<std::string> candidate_ids;

    bool operator==(const CandidatePool&) const = default;
};

/// query id -> candidate id -> label in {0,1,2,3}.
class Qrels {
public:
    using Row = std::map<std::string, int>;

    /// Throws IntegrityError for labels outside {0,1,2,3}.
    void set(const std::string& query_id, const std::string& candidate_id, int label);
    std::optional<int> get(const std::string& query_id, const std::string& candidate_id) const;
    const Row* row(const std::string& query_id) const;

    const std::map<std::string, Row>& entries() const noexcept { return entries_; }
    std::size_t pair_count() const;

    bool operator==(const Qrels&) const = default;

private:
    std::map<std::string, Row> entries_;
};

struct FactFlags {
    bool mf_relevant = false;
    bool lf_relevant = false;

    bool operator==(const FactFlags&) const = default;
};

/// 0 -> neither, 1 -> MF only, 2 -> LF only, 3 -> both. Throws DomainError.
FactFlags gold_fact_flags(int label);
/// 1*mf + 2*lf.
int label_of(FactFlags flags);

struct CorpusBundle {
    CaseStore cases;
    std::vector<CandidatePool> pools;
    std::optional<Qrels> qrels;
    /// Qrels entries outside their query's pool. Not fatal.
    std::vector<std::string> warnings;

    bool operator==(const CorpusBundle&) const = default;
};

Case case_from_json(const nlohmann::json& j);
nlohmann::ordered_json case_to_json(const Case& c);

/// Text is NFC-normalized; lines are numbered from 1 in errors.
CaseStore parse_cases_jsonl(std::string_view content);
std::vector<CandidatePool> parse_pools_json(std::string_view content);
Qrels parse_qrels_json(std::string_view content);
nlohmann::ordered_json qrels_to_json(const Qrels& qrels);

/// Checks pools and qrels against the store. Throws IntegrityError on
/// dangling references; returns warnings for qrels outside pools.
std::vector<std::string> check_integrity(const CaseStore& cases,
                                         const std::vector<CandidatePool>& pools,
                                         const Qrels* qrels);

CorpusBundle ingest_corpus(const std::filesystem::path& cases_path,
                           const std::filesystem::path& pools_path,
                           const std::optional<std::filesystem::path>& qrels_path = std::nullopt);

/// Maps a LeCaRD record onto a Case: query files carry the fact paragraph in
/// "q" and candidate documents in "ajjbqk"; "qw" is the full judgment and
/// "crime" the charge list.
Case case_from_lecard(const nlohmann::json& record, std::string id);

}  // namespace casejudge
