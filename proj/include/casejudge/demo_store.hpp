#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "casejudge/retrieval.hpp"

namespace casejudge {

enum class Stage { FE, FA };
enum class FactType { MF, LF };
enum class Polarity { relevant, irrelevant };

std::string_view to_string(Stage s);
std::string_view to_string(FactType f);
std::string_view to_string(Polarity p);
Stage parse_stage(std::string_view s);
FactType parse_fact_type(std::string_view s);
Polarity parse_polarity(std::string_view s);

struct Demonstration {
    std::string id;
    Stage stage = Stage::FE;
    FactType fact_type = FactType::MF;
    /// FE: a case fact text. FA: the pair's extracted facts.
    std::string input_text;
    /// FE: the expert extraction. FA: the expert verdict with reasoning.
    std::string exemplar_output;
    /// Present on FA demonstrations only.
    std::optional<Polarity> polarity;

    bool operator==(const Demonstration&) const = default;
};

Demonstration demonstration_from_json(const nlohmann::json& j);

/// The four expert demonstration sets, one per (stage, fact type), each with
/// its own BM25 index over the demonstrations' input text.
class DemoLibrary {
public:
    /// Throws IntegrityError when an FE demo carries a polarity, an FA demo
    /// lacks one, an FA set misses a polarity class, or ids repeat.
    DemoLibrary(std::vector<Demonstration> demos, Tokenizer tokenizer = Tokenizer{}, Bm25Params params = {});

    const std::vector<Demonstration>& set(Stage stage, FactType fact_type) const;
    std::size_t size() const noexcept;
    const Tokenizer& tokenizer() const noexcept { return tokenizer_; }

    /// Adaptive demo matching: the top-k demonstrations of the addressed set
    /// by BM25 score of `x` against their input text, ties by ascending id.
    /// With `polarity`, the same ranking is filtered to that class. Throws
    /// EmptySetError when nothing is eligible.
    std::vector<Demonstration> adm_select(std::string_view x, Stage stage, FactType fact_type, std::size_t k,
                                          std::optional<Polarity> polarity = std::nullopt) const;

    /// The ablation replacement for adm_select: k demonstrations drawn
    /// uniformly without replacement. The draw is seeded from `seed` and the
    /// content of `x`, so it is reproducible and independent of call order.
    std::vector<Demonstration> random_select(std::string_view x, Stage stage, FactType fact_type, std::size_t k,
                                             std::uint64_t seed,
                                             std::optional<Polarity> polarity = std::nullopt) const;

    /// Content hash over all demonstrations, used in config fingerprints.
    const std::string& fingerprint() const noexcept { return fingerprint_; }

private:
    struct DemoSet {
        std::vector<Demonstration> demos;
        std::unique_ptr<Bm25Index> index;
    };
    const DemoSet& slot(Stage stage, FactType fact_type) const;

    Tokenizer tokenizer_;
    std::array<DemoSet, 4> sets_;
    std::string fingerprint_;
};

DemoLibrary load_demo_library(const std::filesystem::path& path, Tokenizer tokenizer = Tokenizer{},
                              Bm25Params params = {});
DemoLibrary parse_demo_library(std::string_view content, Tokenizer tokenizer = Tokenizer{}, Bm25Params params = {});

}  // namespace casejudge
