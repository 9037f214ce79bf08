#include "casejudge/corpus.hpp"

#include <set>

#include "casejudge/errors.hpp"
#include "casejudge/io.hpp"
#include "casejudge/text.hpp"

namespace casejudge {

using nlohmann::json;

std::vector<Violation> validate_case(const Case& c)
{
    std::vector<Violation> out;
    if (c.id.empty()) out.push_back({"id", "must be nonempty"});
    if (text::trim(c.fact_text).empty()) out.push_back({"fact_text", "must be nonempty after trimming whitespace"});
    for (std::size_t i = 0; i < c.crime_tags.size(); ++i) {
        if (c.crime_tags[i].empty()) out.push_back({"crime_tags[" + std::to_string(i) + "]", "must be nonempty"});
    }
    return out;
}

void CaseStore::add(Case c)
{
    auto violations = validate_case(c);
    if (!violations.empty()) {
        throw IntegrityError("case '" + c.id + "': " + violations.front().field + " " + violations.front().rule);
    }
    if (index_.count(c.id)) throw IntegrityError("duplicate case id '" + c.id + "'");
    index_.emplace(c.id, cases_.size());
    cases_.push_back(std::move(c));
}

const Case& CaseStore::at(const std::string& id) const
{
    auto it = index_.find(id);
    if (it == index_.end()) throw IntegrityError("unknown case id '" + id + "'");
    return cases_[it->second];
}

const Case* CaseStore::find(const std::string& id) const
{
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &cases_[it->second];
}

void Qrels::set(const std::string& query_id, const std::string& candidate_id, int label)
{
    if (label < 0 || label > 3) {
        throw IntegrityError("qrels label " + std::to_string(label) + " out of range for pair (" + query_id +
                             ", " + candidate_id + ")");
    }
    entries_[query_id][candidate_id] = label;
}

std::optional<int> Qrels::get(const std::string& query_id, const std::string& candidate_id) const
{
    auto q = entries_.find(query_id);
    if (q == entries_.end()) return std::nullopt;
    auto c = q->second.find(candidate_id);
    if (c == q->second.end()) return std::nullopt;
    return c->second;
}

const Qrels::Row* Qrels::row(const std::string& query_id) const
{
    auto q = entries_.find(query_id);
    return q == entries_.end() ? nullptr : &q->second;
}

std::size_t Qrels::pair_count() const
{
    std::size_t n = 0;
    for (const auto& [q, row] : entries_) n += row.size();
    return n;
}

FactFlags gold_fact_flags(int label)
{
    if (label < 0 || label > 3) throw DomainError("relevance label " + std::to_string(label) + " not in {0,1,2,3}");
    return {(label & 1) != 0, (label & 2) != 0};
}

int label_of(FactFlags flags) { return (flags.mf_relevant ? 1 : 0) + (flags.lf_relevant ? 2 : 0); }

namespace {

std::string required_string(const json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw ParseError(std::string("field '") + key + "' must be a string");
    return text::nfc(it->get<std::string>());
}

json parse_json(std::string_view content, const char* what)
{
    try {
        return json::parse(content);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

Case case_from_json(const json& j)
{
    if (!j.is_object()) throw ParseError("case record must be an object");
    Case c;
    c.id = required_string(j, "id");
    c.fact_text = required_string(j, "fact_text");
    if (auto it = j.find("crime_tags"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw ParseError("field 'crime_tags' must be an array");
        for (const auto& t : *it) {
            if (!t.is_string()) throw ParseError("crime_tags entries must be strings");
            c.crime_tags.push_back(text::nfc(t.get<std::string>()));
        }
    }
    if (auto it = j.find("full_text"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw ParseError("field 'full_text' must be a string or null");
        c.full_text = text::nfc(it->get<std::string>());
    }
    return c;
}

nlohmann::ordered_json case_to_json(const Case& c)
{
    nlohmann::ordered_json j;
    j["id"] = c.id;
    j["fact_text"] = c.fact_text;
    j["crime_tags"] = c.crime_tags;
    j["full_text"] = c.full_text ? nlohmann::ordered_json(*c.full_text) : nlohmann::ordered_json(nullptr);
    return j;
}

CaseStore parse_cases_jsonl(std::string_view content)
{
    CaseStore store;
    std::size_t line_no = 0;
    for (const auto& line : io::split_lines(content)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        Case c;
        try {
            c = case_from_json(json::parse(line));
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed case record: ") + e.what(), line_no);
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
        }
        try {
            store.add(std::move(c));
        } catch (const IntegrityError& e) {
            throw IntegrityError(std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
        }
    }
    return store;
}

std::vector<CandidatePool> parse_pools_json(std::string_view content)
{
    auto j = parse_json(content, "pools");
    if (!j.is_array()) throw ParseError("pools file must be a JSON array");
    std::vector<CandidatePool> pools;
    std::set<std::string> seen_queries;
    for (const auto& entry : j) {
        if (!entry.is_object()) throw ParseError("pool entries must be objects");
        CandidatePool pool;
        pool.query_id = required_string(entry, "query_id");
        auto it = entry.find("candidate_ids");
        if (it == entry.end() || !it->is_array()) throw ParseError("pool '" + pool.query_id + "': candidate_ids must be an array");
        std::set<std::string> seen;
        for (const auto& c : *it) {
            if (!c.is_string()) throw ParseError("pool '" + pool.query_id + "': candidate ids must be strings");
            auto id = text::nfc(c.get<std::string>());
            if (!seen.insert(id).second) throw IntegrityError("pool '" + pool.query_id + "' lists candidate '" + id + "' twice");
            pool.candidate_ids.push_back(std::move(id));
        }
        if (!seen_queries.insert(pool.query_id).second) throw IntegrityError("duplicate pool for query '" + pool.query_id + "'");
        pools.push_back(std::move(pool));
    }
    return pools;
}

Qrels parse_qrels_json(std::string_view content)
{
    auto j = parse_json(content, "qrels");
    if (!j.is_object()) throw ParseError("qrels file must be a JSON object");
    Qrels qrels;
    for (const auto& [qid, row] : j.items()) {
        if (!row.is_object()) throw ParseError("qrels entry for '" + qid + "' must be an object");
        for (const auto& [cid, label] : row.items()) {
            if (!label.is_number_integer()) throw ParseError("qrels label for (" + qid + ", " + cid + ") must be an integer");
            qrels.set(text::nfc(qid), text::nfc(cid), label.get<int>());
        }
    }
    return qrels;
}

nlohmann::ordered_json qrels_to_json(const Qrels& qrels)
{
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [qid, row] : qrels.entries()) {
        auto& r = j[qid];
        r = nlohmann::ordered_json::object();
        for (const auto& [cid, label] : row) r[cid] = label;
    }
    return j;
}

std::vector<std::string> check_integrity(const CaseStore& cases, const std::vector<CandidatePool>& pools,
                                         const Qrels* qrels)
{
    std::map<std::string, std::set<std::string>> pool_members;
    for (const auto& pool : pools) {
        if (!cases.contains(pool.query_id)) throw IntegrityError("pool references unknown query case '" + pool.query_id + "'");
        auto& members = pool_members[pool.query_id];
        for (const auto& cid : pool.candidate_ids) {
            if (!cases.contains(cid)) {
                throw IntegrityError("pool '" + pool.query_id + "' references unknown candidate case '" + cid + "'");
            }
            members.insert(cid);
        }
    }
    std::vector<std::string> warnings;
    if (!qrels) return warnings;
    for (const auto& [qid, row] : qrels->entries()) {
        if (!cases.contains(qid)) throw IntegrityError("qrels reference unknown query case '" + qid + "'");
        auto members = pool_members.find(qid);
        for (const auto& [cid, label] : row) {
            if (!cases.contains(cid)) {
                throw IntegrityError("qrels pair (" + qid + ", " + cid + ") references unknown candidate case");
            }
            if (members == pool_members.end() || !members->second.count(cid)) {
                warnings.push_back("qrels pair (" + qid + ", " + cid + ") lies outside the query's candidate pool");
            }
        }
    }
    return warnings;
}

CorpusBundle ingest_corpus(const std::filesystem::path& cases_path, const std::filesystem::path& pools_path,
                           const std::optional<std::filesystem::path>& qrels_path)
{
    CorpusBundle bundle;
    bundle.cases = parse_cases_jsonl(io::read_file(cases_path));
    bundle.pools = parse_pools_json(io::read_file(pools_path));
    if (qrels_path) bundle.qrels = parse_qrels_json(io::read_file(*qrels_path));
    bundle.warnings = check_integrity(bundle.cases, bundle.pools, bundle.qrels ? &*bundle.qrels : nullptr);
    return bundle;
}

Case case_from_lecard(const json& record, std::string id)
{
    if (!record.is_object()) throw ParseError("LeCaRD record must be an object");
    Case c;
    c.id = text::nfc(id);
    for (const char* key : {"q", "ajjbqk", "fact"}) {
        if (auto it = record.find(key); it != record.end() && it->is_string()) {
            c.fact_text = text::nfc(it->get<std::string>());
            break;
        }
    }
    if (c.fact_text.empty()) throw ParseError("LeCaRD record '" + id + "' has no fact paragraph (q/ajjbqk)");
    if (auto it = record.find("qw"); it != record.end() && it->is_string()) c.full_text = text::nfc(it->get<std::string>());
    if (auto it = record.find("crime"); it != record.end() && it->is_array()) {
        for (const auto& t : *it) {
            if (t.is_string()) c.crime_tags.push_back(text::nfc(t.get<std::string>()));
        }
    }
    return c;
}

}  // namespace casejudge
