#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace casejudge {

/// Root of every exception thrown by the library. The CLI maps these to exit
/// code 1 (data error); anything else escaping is a bug.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IntegrityError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class PreconditionError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error("config key '" + key + "': " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

// retrieval
class UnknownDocError : public Error { using Error::Error; };
class ExternalTokenizerError : public Error { using Error::Error; };

// demo_store
class EmptySetError : public Error { using Error::Error; };

// llm_gateway
class UpstreamError : public Error { using Error::Error; };
class AuthError : public UpstreamError { using UpstreamError::UpstreamError; };
class MalformedStageMarker : public Error { using Error::Error; };

// judge_engine
class TemplateError : public Error { using Error::Error; };
class JudgeResponseUnparseable : public Error { using Error::Error; };

/// A failure inside one workflow step, tagged with the step that raised it.
class StageError : public Error {
public:
    StageError(std::string step, const std::string& what)
        : Error(step + ": " + what), step_(std::move(step)) {}
    const std::string& step() const noexcept { return step_; }

private:
    std::string step_;
};

// evaluation
class AlignmentError : public Error { using Error::Error; };
class MissingGoldError : public Error { using Error::Error; };
class EmptyRunError : public Error { using Error::Error; };

// augmentation
class ExhaustedError : public Error { using Error::Error; };
class ScorerError : public Error { using Error::Error; };

class InsufficientLabelError : public Error {
public:
    InsufficientLabelError(int label, std::size_t shortfall)
        : Error("label " + std::to_string(label) + " is short by " + std::to_string(shortfall) +
                " pairs"),
          label_(label), shortfall_(shortfall) {}
    int label() const noexcept { return label_; }
    std::size_t shortfall() const noexcept { return shortfall_; }

private:
    int label_;
    std::size_t shortfall_;
};

}  // namespace casejudge
