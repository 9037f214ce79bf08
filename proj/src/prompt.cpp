#include "casejudge/prompt.hpp"

#include <algorithm>
#include <cctype>

#include "casejudge/builtin_templates.hpp"
#include "casejudge/errors.hpp"
#include "casejudge/io.hpp"
#include "casejudge/llm_gateway.hpp"
#include "casejudge/text.hpp"

namespace casejudge {

namespace {

constexpr std::array<std::string_view, 4> placeholders{"task_description", "definitions", "demos", "target"};

std::size_t body_slot(Stage stage, FactType fact_type)
{
    return (stage == Stage::FE ? 0 : 2) + (fact_type == FactType::MF ? 0 : 1);
}

// Drops the single trailing newline editors add to asset files.
std::string chomp(std::string s)
{
    if (!s.empty() && s.back() == '\n') s.pop_back();
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

std::string template_file_name(Stage stage, FactType fact_type)
{
    std::string name = stage == Stage::FE ? "fe_" : "fa_";
    name += fact_type == FactType::MF ? "mf" : "lf";
    return name + ".txt";
}

TemplateSet::TemplateSet(std::string system_text, std::array<std::string, 2> task_descriptions,
                         std::array<std::string, 2> definitions, std::array<std::string, 4> bodies)
    : system_text_(chomp(std::move(system_text))), task_(std::move(task_descriptions)),
      definitions_(std::move(definitions)), bodies_(std::move(bodies))
{
    for (auto& t : task_) t = chomp(std::move(t));
    for (auto& d : definitions_) d = chomp(std::move(d));
    std::string digest = system_text_;
    for (const auto& t : task_) digest += '\x1e' + t;
    for (const auto& d : definitions_) digest += '\x1e' + d;
    for (std::size_t i = 0; i < bodies_.size(); ++i) {
        bodies_[i] = chomp(std::move(bodies_[i]));
        // Validate eagerly so a bad asset fails at load, not mid-run.
        render_template(bodies_[i], "", "", "", "");
        digest += '\x1e' + bodies_[i];
    }
    fingerprint_ = text::sha256_hex(digest);
}

TemplateSet TemplateSet::builtin()
{
    namespace bt = builtin_templates;
    return TemplateSet(std::string(bt::system), {std::string(bt::task_fe), std::string(bt::task_fa)},
                       {std::string(bt::definitions_mf), std::string(bt::definitions_lf)},
                       {std::string(bt::fe_mf), std::string(bt::fe_lf), std::string(bt::fa_mf), std::string(bt::fa_lf)});
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir)
{
    auto read = [&](const std::string& name) {
        const auto path = dir / name;
        if (!std::filesystem::exists(path)) throw TemplateError("template file missing: " + path.string());
        return io::read_file(path);
    };
    return TemplateSet(read("system.txt"), {read("task_fe.txt"), read("task_fa.txt")},
                       {read("definitions_mf.txt"), read("definitions_lf.txt")},
                       {read(template_file_name(Stage::FE, FactType::MF)), read(template_file_name(Stage::FE, FactType::LF)),
                        read(template_file_name(Stage::FA, FactType::MF)), read(template_file_name(Stage::FA, FactType::LF))});
}

const std::string& TemplateSet::task_description(Stage stage) const { return task_[stage == Stage::FE ? 0 : 1]; }

const std::string& TemplateSet::definitions(FactType fact_type) const
{
    return definitions_[fact_type == FactType::MF ? 0 : 1];
}

const std::string& TemplateSet::body(Stage stage, FactType fact_type) const { return bodies_[body_slot(stage, fact_type)]; }

std::string render_template(std::string_view body, std::string_view task_description, std::string_view definitions,
                            std::string_view demos, std::string_view target)
{
    const std::array<std::string_view, 4> values{task_description, definitions, demos, target};
    std::array<bool, 4> used{};
    std::string out;
    out.reserve(body.size() + task_description.size() + definitions.size() + demos.size() + target.size());
    std::size_t pos = 0;
    while (pos < body.size()) {
        auto open = body.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        out.append(body.substr(pos, open - pos));
        auto close = body.find("}}", open + 2);
        if (close == std::string_view::npos) throw TemplateError("unterminated placeholder in template");
        auto name = body.substr(open + 2, close - open - 2);
        auto it = std::find(placeholders.begin(), placeholders.end(), name);
        if (it == placeholders.end()) throw TemplateError("unknown placeholder {{" + std::string(name) + "}}");
        const auto idx = static_cast<std::size_t>(it - placeholders.begin());
        out.append(values[idx]);
        used[idx] = true;
        pos = close + 2;
    }
    for (std::size_t i = 0; i < used.size(); ++i) {
        if (!used[i]) throw TemplateError("template lacks placeholder {{" + std::string(placeholders[i]) + "}}");
    }
    return out;
}

std::string render_demos(const std::vector<Demonstration>& demos)
{
    std::string out;
    for (std::size_t i = 0; i < demos.size(); ++i) {
        const auto& d = demos[i];
        if (i) out += "\n\n";
        out += "Example " + std::to_string(i + 1);
        if (d.polarity) out += " (" + std::string(to_string(*d.polarity)) + ")";
        out += d.stage == Stage::FE ? "\nInput:\n" : "\nCase facts:\n";
        out += d.input_text;
        out += d.stage == Stage::FE ? "\nOutput:\n" : "\nExpert judgment:\n";
        out += d.exemplar_output;
    }
    return out;
}

std::string fe_target(std::string_view text)
{
    return std::string(protocol::target_begin) + "\n" + std::string(text) + "\n" + std::string(protocol::target_end);
}

std::string fa_target(std::string_view a, std::string_view b)
{
    return "Case A:\n" + std::string(protocol::target_a_begin) + "\n" + std::string(a) + "\n" +
           std::string(protocol::target_a_end) + "\nCase B:\n" + std::string(protocol::target_b_begin) + "\n" +
           std::string(b) + "\n" + std::string(protocol::target_b_end);
}

PromptText assemble_prompt(const TemplateSet& templates, Stage stage, FactType fact_type,
                           const std::vector<Demonstration>& demos, std::string_view target)
{
    PromptText p;
    p.system = templates.system_text();
    p.user = protocol::stage_marker(stage, fact_type) + "\n" +
             render_template(templates.body(stage, fact_type), templates.task_description(stage),
                             templates.definitions(fact_type), render_demos(demos), target);
    return p;
}

namespace {

std::string rstrip(std::string s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
}

std::string upper_ascii(std::string s)
{
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

ParsedResponse parse_judge_response(Stage stage, std::string_view raw)
{
    auto lines = io::split_lines(raw);
    ParsedResponse parsed;
    if (stage == Stage::FE) {
        std::optional<std::size_t> close;
        for (std::size_t i = lines.size(); i-- > 0;) {
            auto l = text::trim(lines[i]);
            if (!close && l == protocol::facts_close) {
                close = i;
            } else if (close && l == protocol::facts_open) {
                std::string body;
                for (std::size_t k = i + 1; k < *close; ++k) {
                    if (k > i + 1) body += '\n';
                    body += rstrip(lines[k]);
                }
                parsed.facts = text::trim(body);
                if (parsed.facts.empty()) throw JudgeResponseUnparseable("facts block is empty");
                return parsed;
            }
        }
        throw JudgeResponseUnparseable("no " + std::string(protocol::facts_open) + " ... " +
                                       std::string(protocol::facts_close) + " block in response");
    }
    for (std::size_t i = lines.size(); i-- > 0;) {
        auto l = upper_ascii(text::trim(lines[i]));
        if (l.rfind("VERDICT:", 0) != 0) continue;
        auto word = text::trim(std::string_view(l).substr(8));
        if (word != "RELEVANT" && word != "IRRELEVANT") continue;
        parsed.relevant = word == "RELEVANT";
        std::string reasoning;
        for (std::size_t k = 0; k < i; ++k) {
            if (k) reasoning += '\n';
            reasoning += lines[k];
        }
        parsed.reasoning = text::trim(reasoning);
        return parsed;
    }
    throw JudgeResponseUnparseable("no VERDICT line in response");
}

std::string format_reminder(Stage stage)
{
    if (stage == Stage::FE) {
        return "\n\nReminder: your previous answer could not be read. Put the extracted facts between a line "
               "containing only " + std::string(protocol::facts_open) + " and a line containing only " +
               std::string(protocol::facts_close) + ".";
    }
    return "\n\nReminder: your previous answer could not be read. End with one line reading exactly " +
           std::string(protocol::verdict_relevant) + " or " + std::string(protocol::verdict_irrelevant) + ".";
}

}  // namespace casejudge
