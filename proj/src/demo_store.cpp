#include "casejudge/demo_store.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "casejudge/errors.hpp"
#include "casejudge/io.hpp"
#include "casejudge/random.hpp"
#include "casejudge/text.hpp"

namespace casejudge {

using nlohmann::json;

std::string_view to_string(Stage s) { return s == Stage::FE ? "FE" : "FA"; }
std::string_view to_string(FactType f) { return f == FactType::MF ? "MF" : "LF"; }
std::string_view to_string(Polarity p) { return p == Polarity::relevant ? "relevant" : "irrelevant"; }

Stage parse_stage(std::string_view s)
{
    if (s == "FE") return Stage::FE;
    if (s == "FA") return Stage::FA;
    throw ParseError("unknown stage '" + std::string(s) + "'");
}

FactType parse_fact_type(std::string_view s)
{
    if (s == "MF") return FactType::MF;
    if (s == "LF") return FactType::LF;
    throw ParseError("unknown fact type '" + std::string(s) + "'");
}

Polarity parse_polarity(std::string_view s)
{
    if (s == "relevant") return Polarity::relevant;
    if (s == "irrelevant") return Polarity::irrelevant;
    throw ParseError("unknown polarity '" + std::string(s) + "'");
}

Demonstration demonstration_from_json(const json& j)
{
    if (!j.is_object()) throw ParseError("demonstration must be an object");
    auto str = [&](const char* key) {
        auto it = j.find(key);
        if (it == j.end() || !it->is_string()) throw ParseError(std::string("demonstration field '") + key + "' must be a string");
        return text::nfc(it->get<std::string>());
    };
    Demonstration d;
    d.id = str("id");
    d.stage = parse_stage(str("stage"));
    d.fact_type = parse_fact_type(str("fact_type"));
    d.input_text = str("input_text");
    d.exemplar_output = str("exemplar_output");
    if (auto it = j.find("polarity"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw ParseError("demonstration field 'polarity' must be a string or null");
        d.polarity = parse_polarity(it->get<std::string>());
    }
    return d;
}

namespace {

std::size_t slot_of(Stage stage, FactType fact_type)
{
    return (stage == Stage::FE ? 0 : 2) + (fact_type == FactType::MF ? 0 : 1);
}

}  // namespace

DemoLibrary::DemoLibrary(std::vector<Demonstration> demos, Tokenizer tokenizer, Bm25Params params)
    : tokenizer_(std::move(tokenizer))
{
    std::set<std::string> ids;
    std::string digest_input;
    for (auto& d : demos) {
        if (d.id.empty()) throw IntegrityError("demonstration with empty id");
        if (!ids.insert(d.id).second) throw IntegrityError("duplicate demonstration id '" + d.id + "'");
        if (text::trim(d.input_text).empty() || text::trim(d.exemplar_output).empty()) {
            throw IntegrityError("demonstration '" + d.id + "' has empty input_text or exemplar_output");
        }
        if (d.stage == Stage::FE && d.polarity) {
            throw IntegrityError("FE demonstration '" + d.id + "' must not carry a polarity");
        }
        if (d.stage == Stage::FA && !d.polarity) {
            throw IntegrityError("FA demonstration '" + d.id + "' must carry a polarity");
        }
        digest_input += d.id + '\x1f' + std::string(to_string(d.stage)) + '\x1f' + std::string(to_string(d.fact_type)) +
                        '\x1f' + d.input_text + '\x1f' + d.exemplar_output + '\x1f' +
                        (d.polarity ? std::string(to_string(*d.polarity)) : std::string("-")) + '\x1e';
        sets_[slot_of(d.stage, d.fact_type)].demos.push_back(std::move(d));
    }
    for (FactType f : {FactType::MF, FactType::LF}) {
        const auto& fa = sets_[slot_of(Stage::FA, f)].demos;
        if (fa.empty()) continue;
        bool has_rel = std::any_of(fa.begin(), fa.end(), [](const auto& d) { return d.polarity == Polarity::relevant; });
        bool has_irr = std::any_of(fa.begin(), fa.end(), [](const auto& d) { return d.polarity == Polarity::irrelevant; });
        if (!has_rel || !has_irr) {
            throw IntegrityError("FA/" + std::string(to_string(f)) + " set needs at least one relevant and one irrelevant demonstration");
        }
    }
    for (auto& s : sets_) {
        if (s.demos.empty()) continue;
        std::vector<std::pair<std::string, TokenStream>> docs;
        docs.reserve(s.demos.size());
        for (const auto& d : s.demos) docs.emplace_back(d.id, tokenizer_(d.input_text));
        s.index = std::make_unique<Bm25Index>(std::move(docs), params);
    }
    fingerprint_ = text::sha256_hex(digest_input);
}

const DemoLibrary::DemoSet& DemoLibrary::slot(Stage stage, FactType fact_type) const
{
    return sets_[slot_of(stage, fact_type)];
}

const std::vector<Demonstration>& DemoLibrary::set(Stage stage, FactType fact_type) const
{
    return slot(stage, fact_type).demos;
}

std::size_t DemoLibrary::size() const noexcept
{
    std::size_t n = 0;
    for (const auto& s : sets_) n += s.demos.size();
    return n;
}

std::vector<Demonstration> DemoLibrary::adm_select(std::string_view x, Stage stage, FactType fact_type, std::size_t k,
                                                   std::optional<Polarity> polarity) const
{
    if (k == 0) throw PreconditionError("adm_select needs k >= 1");
    const auto& s = slot(stage, fact_type);
    if (s.demos.empty()) {
        throw EmptySetError("no demonstrations for " + std::string(to_string(stage)) + "/" + std::string(to_string(fact_type)));
    }
    auto ranked = top_k_rank(*s.index, tokenizer_(x), s.demos.size());
    std::vector<Demonstration> out;
    for (const auto& r : ranked) {
        const auto& d = s.demos[s.index->doc_index(r.doc_id)];
        if (polarity && d.polarity != polarity) continue;
        out.push_back(d);
        if (out.size() == k) break;
    }
    if (out.empty()) {
        throw EmptySetError("no " + std::string(to_string(*polarity)) + " demonstrations for " +
                            std::string(to_string(stage)) + "/" + std::string(to_string(fact_type)));
    }
    return out;
}

std::vector<Demonstration> DemoLibrary::random_select(std::string_view x, Stage stage, FactType fact_type, std::size_t k,
                                                      std::uint64_t seed, std::optional<Polarity> polarity) const
{
    if (k == 0) throw PreconditionError("random_select needs k >= 1");
    const auto& s = slot(stage, fact_type);
    std::vector<const Demonstration*> eligible;
    for (const auto& d : s.demos) {
        if (!polarity || d.polarity == polarity) eligible.push_back(&d);
    }
    if (eligible.empty()) {
        throw EmptySetError("no eligible demonstrations for " + std::string(to_string(stage)) + "/" +
                            std::string(to_string(fact_type)));
    }
    std::sort(eligible.begin(), eligible.end(), [](auto* a, auto* b) { return a->id < b->id; });
    const auto digest = text::sha256_hex(std::string(x) + '\x1f' + std::string(to_string(stage)) +
                                         std::string(to_string(fact_type)) +
                                         (polarity ? std::string(to_string(*polarity)) : std::string()));
    auto rng = seeded_rng(seed, digest);
    const auto n = std::min(k, eligible.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::swap(eligible[i], eligible[i + uniform_below(rng, eligible.size() - i)]);
    }
    std::vector<Demonstration> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(*eligible[i]);
    return out;
}

DemoLibrary parse_demo_library(std::string_view content, Tokenizer tokenizer, Bm25Params params)
{
    json j;
    try {
        j = json::parse(content);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("demos: ") + e.what());
    }
    if (!j.is_array()) throw ParseError("demos file must be a JSON array");
    std::vector<Demonstration> demos;
    for (const auto& d : j) demos.push_back(demonstration_from_json(d));
    return DemoLibrary(std::move(demos), std::move(tokenizer), params);
}

DemoLibrary load_demo_library(const std::filesystem::path& path, Tokenizer tokenizer, Bm25Params params)
{
    return parse_demo_library(io::read_file(path), std::move(tokenizer), params);
}

}  // namespace casejudge
