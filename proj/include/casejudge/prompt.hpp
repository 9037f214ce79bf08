#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "casejudge/demo_store.hpp"

namespace casejudge {

/// Prompt assets: one body template per (stage, fact type), plus the shared
/// system text, task descriptions per stage and definitions per fact type.
/// Bodies use {{task_description}}, {{definitions}}, {{demos}} and
/// {{target}}; each must appear and no other placeholder may.
class TemplateSet {
public:
    /// The assets compiled into the library (identical to data/templates).
    static TemplateSet builtin();
    /// Reads system.txt, task_{fe,fa}.txt, definitions_{mf,lf}.txt and
    /// {fe,fa}_{mf,lf}.txt. Throws TemplateError on a missing file or a
    /// malformed body.
    static TemplateSet load(const std::filesystem::path& dir);

    TemplateSet(std::string system_text, std::array<std::string, 2> task_descriptions,
                std::array<std::string, 2> definitions, std::array<std::string, 4> bodies);

    const std::string& system_text() const noexcept { return system_text_; }
    const std::string& task_description(Stage stage) const;
    const std::string& definitions(FactType fact_type) const;
    const std::string& body(Stage stage, FactType fact_type) const;
    /// SHA-256 over every asset.
    const std::string& fingerprint() const noexcept { return fingerprint_; }

private:
    std::string system_text_;
    std::array<std::string, 2> task_;
    std::array<std::string, 2> definitions_;
    std::array<std::string, 4> bodies_;
    std::string fingerprint_;
};

/// File name of the body template for (stage, fact type), e.g. "fe_mf.txt".
std::string template_file_name(Stage stage, FactType fact_type);

struct PromptText {
    std::string system;
    std::string user;
};

/// Single-pass substitution over `body`; substituted values are not
/// rescanned. Throws TemplateError for unknown, unterminated or missing
/// placeholders.
std::string render_template(std::string_view body, std::string_view task_description, std::string_view definitions,
                            std::string_view demos, std::string_view target);

/// Demonstrations in the given order; empty list renders as an empty block.
std::string render_demos(const std::vector<Demonstration>& demos);

std::string fe_target(std::string_view text);
std::string fa_target(std::string_view a, std::string_view b);

/// Prefixes the stage marker line and renders the (stage, fact type) body.
/// `target` is the already-marked block from fe_target / fa_target.
PromptText assemble_prompt(const TemplateSet& templates, Stage stage, FactType fact_type,
                           const std::vector<Demonstration>& demos, std::string_view target);

struct ParsedResponse {
    /// FE: text between the facts sentinels.
    std::string facts;
    /// FA: the verdict and everything before the verdict line.
    bool relevant = false;
    std::string reasoning;
};

/// FE: the last block between `===FACTS===` and `===END===` lines (must be
/// nonempty). FA: the last line reading `VERDICT: RELEVANT` or
/// `VERDICT: IRRELEVANT`, case-insensitive, surrounding whitespace ignored.
/// Throws JudgeResponseUnparseable.
ParsedResponse parse_judge_response(Stage stage, std::string_view raw);

/// Appended to the prompt when a response could not be parsed.
std::string format_reminder(Stage stage);

}  // namespace casejudge
