#pragma once

#include <atomic>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "casejudge/corpus.hpp"
#include "casejudge/demo_store.hpp"
#include "casejudge/errors.hpp"
#include "casejudge/io.hpp"
#include "casejudge/llm_gateway.hpp"

namespace casejudge::testing {

inline std::filesystem::path data_dir() { return CASEJUDGE_DATA_DIR; }
inline std::filesystem::path toy_dir() { return data_dir() / "toy"; }

struct Toy {
    CaseStore cases;
    std::vector<CandidatePool> pools;
    Qrels qrels;
    std::set<std::string> lexicon;
};

inline Toy load_toy()
{
    auto bundle = ingest_corpus(toy_dir() / "cases.jsonl", toy_dir() / "pools.json", toy_dir() / "qrels.json");
    return {std::move(bundle.cases), std::move(bundle.pools), std::move(*bundle.qrels),
            load_lexicon(toy_dir() / "lexicon.txt")};
}

inline DemoLibrary toy_demos() { return load_demo_library(toy_dir() / "demos.json"); }

inline MockJudge toy_mock(const Toy& toy)
{
    MockJudgeConfig cfg;
    cfg.lexicon = toy.lexicon;
    return MockJudge(cfg);
}

/// Passes calls through and logs the (stage, fact type) of each.
class RecordingJudge : public Judge {
public:
    explicit RecordingJudge(Judge& inner) : inner_(inner) {}

    JudgeResponse complete(const JudgeRequest& request) override
    {
        {
            std::lock_guard lock(mu_);
            calls_.push_back(protocol::read_stage_marker(request.user_text));
            requests_.push_back(request);
        }
        return inner_.complete(request);
    }
    std::string fingerprint() const override { return inner_.fingerprint(); }

    std::vector<std::pair<Stage, FactType>> calls() const
    {
        std::lock_guard lock(mu_);
        return calls_;
    }
    std::vector<JudgeRequest> requests() const
    {
        std::lock_guard lock(mu_);
        return requests_;
    }
    std::size_t count(Stage stage) const
    {
        std::lock_guard lock(mu_);
        std::size_t n = 0;
        for (const auto& c : calls_) n += c.first == stage;
        return n;
    }
    std::size_t count() const
    {
        std::lock_guard lock(mu_);
        return calls_.size();
    }

private:
    Judge& inner_;
    mutable std::mutex mu_;
    std::vector<std::pair<Stage, FactType>> calls_;
    std::vector<JudgeRequest> requests_;
};

/// Answers from a queue, ignoring the prompt.
class ScriptedJudge : public Judge {
public:
    explicit ScriptedJudge(std::vector<std::string> replies) : replies_(replies.begin(), replies.end()) {}

    JudgeResponse complete(const JudgeRequest& request) override
    {
        std::lock_guard lock(mu_);
        seen_.push_back(request.user_text);
        if (replies_.empty()) throw UpstreamError("script exhausted");
        JudgeResponse r;
        r.text = replies_.front();
        replies_.pop_front();
        r.attempts = 1;
        return r;
    }
    std::string fingerprint() const override { return "scripted"; }

    std::vector<std::string> seen_;

private:
    std::mutex mu_;
    std::deque<std::string> replies_;
};

/// Throws UpstreamError whenever `fail_if` says so, else delegates.
class FaultyJudge : public Judge {
public:
    FaultyJudge(Judge& inner, std::function<bool(const JudgeRequest&)> fail_if)
        : inner_(inner), fail_if_(std::move(fail_if))
    {}

    JudgeResponse complete(const JudgeRequest& request) override
    {
        if (fail_if_(request)) {
            ++failures;
            throw UpstreamError("injected failure");
        }
        return inner_.complete(request);
    }
    std::string fingerprint() const override { return inner_.fingerprint(); }

    std::atomic<int> failures{0};

private:
    Judge& inner_;
    std::function<bool(const JudgeRequest&)> fail_if_;
};

class TempDir {
public:
    TempDir()
    {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("casejudge_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace casejudge::testing
