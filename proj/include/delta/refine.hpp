#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "delta/cart.hpp"
#include "delta/dataset.hpp"
#include "delta/error.hpp"
#include "delta/forest.hpp"
#include "delta/refined_rule.hpp"

namespace delta {

// ---------------------------------------------------------------------------
// Prompt
// ---------------------------------------------------------------------------

/// Dataset-level metadata lines rendered into the prompt; deliberately the
/// only dataset information that ever leaves the process.
struct DatasetMeta {
    std::string name;
    Task task = Task::binclass;
    std::size_t n_num_features = 0;
    std::size_t n_cat_features = 0;
    std::size_t train_size = 0;
};

inline DatasetMeta dataset_meta(const std::string& name, const Schema& schema,
                                std::size_t train_size) {
    return {name, schema.task, schema.n_numerical(), schema.n_categorical(), train_size};
}

/// The three prompt blocks, concatenated in order meta, rules, requirement.
struct Prompt {
    std::string meta;
    std::string rules;
    std::string requirement;

    std::string text() const { return meta + "\n" + rules + "\n" + requirement; }
};

enum class RefinerBackendKind { heuristic, remote, replay };

inline std::string to_string(RefinerBackendKind k) {
    switch (k) {
        case RefinerBackendKind::heuristic: return "heuristic";
        case RefinerBackendKind::remote: return "remote";
        case RefinerBackendKind::replay: return "replay";
    }
    throw InternalError("unknown refiner backend kind");
}

inline RefinerBackendKind refiner_backend_from_string(const std::string& s) {
    if (s == "heuristic") return RefinerBackendKind::heuristic;
    if (s == "remote") return RefinerBackendKind::remote;
    if (s == "replay") return RefinerBackendKind::replay;
    throw ConfigError("unknown refiner backend '" + s + "' (heuristic, remote or replay)");
}

struct RefinerConfig {
    RefinerBackendKind backend = RefinerBackendKind::heuristic;
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4o";
    /// Name of the environment variable holding the bearer token; the key
    /// itself never appears in configuration or command lines.
    std::string api_key_env = "DELTA_API_KEY";
    std::size_t n_queries = 10;
    std::size_t max_retries = 2;
    std::size_t leaf_limit = 30;
    std::size_t included_trees = 10;
    double temperature = 0.7;
    std::uint64_t seed = 0;
    /// Transcript to replay (replay backend) or to record into (others).
    std::string replay_path;
    std::string transcript_path;
    /// Transport policy for the remote backend.
    std::size_t transport_retries = 2;
    std::size_t backoff_ms = 500;
    std::size_t timeout_s = 120;
};

inline void validate(const RefinerConfig& cfg) {
    if (cfg.n_queries < 1) throw ConfigError("refiner n_queries must be at least 1");
    if (cfg.leaf_limit < 2) throw ConfigError("refiner leaf_limit must be at least 2");
    if (cfg.included_trees < 1) throw ConfigError("refiner included_trees must be at least 1");
}

/// Renders the fixed prompt template with the meta block filled in, the first
/// cfg.included_trees rule blocks inserted, and the leaf limit substituted.
inline Prompt build_prompt(const DatasetMeta& meta, const RuleSet& rules,
                           const RefinerConfig& cfg) {
    if (rules.size() == 0) throw DataError("cannot build a prompt from an empty rule set");
    Prompt p;
    p.meta =
        "You are an expert in tabular machine learning domain. I will provide the meta "
        "information, the CART tree rules about the prediction task. Please help me design a "
        "better rule for inference.\n"
        "# Meta information about dataset.\n"
        "{\n"
        "    \"name\": \"" + meta.name + "\",\n"
        "    \"task_type\": \"" + to_string(meta.task) + "\",\n"
        "    \"n_num_features\": " + std::to_string(meta.n_num_features) + ",\n"
        "    \"n_cat_features\": " + std::to_string(meta.n_cat_features) + ",\n"
        "    \"train_size\": " + std::to_string(meta.train_size) + ",\n"
        "}";
    p.rules = "# CART tree rules\n" + rules.render(cfg.included_trees) + "# CART tree rules end";
    p.requirement =
        "Based on the above information, please learn the rules evolving process and help me "
        "design a better rule like what cart used for inference to achieve higher performance.\n"
        "Please not just copy, please refine these rules and create a new better one.\n"
        "The new rule aims to divide the training space into several regions, where each region "
        "is denoted by a unique leaf node id.\n"
        "The number of leaf nodes should no more than " + std::to_string(cfg.leaf_limit) + ".\n"
        "Please return the dict format of rule, the format should be strictly like:\n"
        "self.tree = {\n"
        "        \"feature\": 11,\n"
        "        \"threshold\": -0.78,\n"
        "        \"operator\": \"<=\",\n"
        "        \"left\": {\"id\": \"leaf_1\"},\n"
        "        \"right\": {\n"
        "            \"feature\": 7,\n"
        "            \"threshold\": -0.46,\n"
        "            \"operator\": \"<=\",\n"
        "            \"left\": {\"id\": \"leaf_2\"},\n"
        "            \"right\": {\"id\": \"leaf_3\"},\n"
        "        },\n"
        "        }\n"
        "Please note that each leaf id node can only appear once, for example, \"id\": \"leaf_1\" "
        "can only appear once.\n"
        "Thus you only need to return the leaf nodes, rather than the true predictions.\n"
        "Please return the rule as strict JSON: double-quoted keys and strings, no trailing "
        "commas, no commentary outside the JSON object.";
    return p;
}

// ---------------------------------------------------------------------------
// Transcript
// ---------------------------------------------------------------------------

struct TranscriptEntry {
    nlohmann::ordered_json request;
    nlohmann::ordered_json response;
    std::string timestamp;
};

inline std::string utc_timestamp_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Appends JSON-lines entries of {request, response, timestamp}.
class TranscriptWriter {
public:
    explicit TranscriptWriter(const std::string& path) : out_(path, std::ios::trunc) {
        if (!out_) throw ConfigError("cannot open transcript file for writing: " + path);
    }

    void append(const TranscriptEntry& entry) {
        nlohmann::ordered_json j;
        j["request"] = entry.request;
        j["response"] = entry.response;
        j["timestamp"] = entry.timestamp;
        out_ << j.dump() << "\n";
        out_.flush();
    }

private:
    std::ofstream out_;
};

inline std::vector<TranscriptEntry> load_transcript(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open transcript file: " + path);
    std::vector<TranscriptEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::ordered_json j = nlohmann::ordered_json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("request") || !j.contains("response"))
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": transcript line is not a {request, response, timestamp} object");
        entries.push_back({j["request"], j["response"], j.value("timestamp", "")});
    }
    return entries;
}

/// Message content of the first choice in a chat-completion response body.
inline std::string completion_content(const nlohmann::json& response) {
    try {
        return response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw RefinerError("chat response has no choices[0].message.content");
    }
}

inline nlohmann::ordered_json make_completion_body(const std::string& content) {
    nlohmann::ordered_json j;
    j["choices"] = nlohmann::ordered_json::array(
        {nlohmann::ordered_json{{"message", {{"role", "assistant"}, {"content", content}}}}});
    return j;
}

inline nlohmann::ordered_json make_request_body(const RefinerConfig& cfg,
                                                const std::string& prompt_text) {
    nlohmann::ordered_json j;
    j["model"] = cfg.model;
    j["messages"] = nlohmann::ordered_json::array(
        {nlohmann::ordered_json{{"role", "user"}, {"content", prompt_text}}});
    j["temperature"] = cfg.temperature;
    return j;
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// One completion attempt.  Implementations return the full chat-completion
/// response body so the transcript captures exactly what would go over the
/// wire regardless of backend.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string name() const = 0;
    virtual nlohmann::ordered_json complete(const std::string& prompt_text, std::size_t slot,
                                            std::size_t attempt) = 0;
};

/// Remote chat-completions client: POST {model, messages, temperature} with a
/// bearer token taken from the configured environment variable.
class RemoteBackend : public ChatBackend {
public:
    explicit RemoteBackend(const RefinerConfig& cfg) : cfg_(cfg) {
        const char* key = std::getenv(cfg.api_key_env.c_str());
        if (key == nullptr || *key == '\0')
            throw ConfigError("environment variable " + cfg.api_key_env +
                              " is unset; the remote refiner needs an API key");
        api_key_ = key;
        split_endpoint(cfg.endpoint, base_, path_);
    }

    std::string name() const override { return "remote"; }

    nlohmann::ordered_json complete(const std::string& prompt_text, std::size_t, std::size_t) override {
        auto body = make_request_body(cfg_, prompt_text);
        std::string last_error;
        for (std::size_t attempt = 0; attempt <= cfg_.transport_retries; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms * attempt));
            httplib::Client client(base_);
            client.set_connection_timeout(static_cast<time_t>(cfg_.timeout_s), 0);
            client.set_read_timeout(static_cast<time_t>(cfg_.timeout_s), 0);
            httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
            auto res = client.Post(path_, headers, body.dump(), "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                last_error = "http status " + std::to_string(res->status) + ": " + res->body;
                if (res->status >= 400 && res->status < 500 && res->status != 429) break;
                continue;
            }
            nlohmann::ordered_json j = nlohmann::ordered_json::parse(res->body, nullptr, false);
            if (j.is_discarded()) {
                last_error = "response body is not JSON";
                continue;
            }
            return j;
        }
        throw RefinerError("remote completion failed after " +
                           std::to_string(cfg_.transport_retries + 1) + " attempts: " + last_error);
    }

private:
    static void split_endpoint(const std::string& endpoint, std::string& base, std::string& path) {
        auto scheme_end = endpoint.find("://");
        if (scheme_end == std::string::npos)
            throw ConfigError("refiner endpoint must be an http(s) URL: " + endpoint);
        auto path_start = endpoint.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            base = endpoint;
            path = "/v1/chat/completions";
        } else {
            base = endpoint.substr(0, path_start);
            path = endpoint.substr(path_start);
        }
    }

    RefinerConfig cfg_;
    std::string api_key_;
    std::string base_;
    std::string path_;
};

/// Serves recorded responses in order; the no-network CI stand-in for the
/// remote backend.
class ReplayBackend : public ChatBackend {
public:
    explicit ReplayBackend(std::vector<TranscriptEntry> entries) : entries_(std::move(entries)) {}

    static ReplayBackend from_file(const std::string& path) {
        return ReplayBackend(load_transcript(path));
    }

    std::string name() const override { return "replay"; }

    nlohmann::ordered_json complete(const std::string&, std::size_t, std::size_t) override {
        if (next_ >= entries_.size())
            throw RefinerError("replay transcript exhausted after " + std::to_string(next_) +
                               " responses");
        return entries_[next_++].response;
    }

private:
    std::vector<TranscriptEntry> entries_;
    std::size_t next_ = 0;
};

/// Test backend with pre-scripted raw completion texts.
class ScriptBackend : public ChatBackend {
public:
    explicit ScriptBackend(std::vector<std::string> responses)
        : responses_(std::move(responses)) {}

    std::string name() const override { return "script"; }

    nlohmann::ordered_json complete(const std::string&, std::size_t, std::size_t) override {
        if (next_ >= responses_.size()) throw RefinerError("scripted backend exhausted");
        return make_completion_body(responses_[next_++]);
    }

private:
    std::vector<std::string> responses_;
    std::size_t next_ = 0;
};

// ---------------------------------------------------------------------------
// Heuristic refinement
// ---------------------------------------------------------------------------

/// Converts a fitted tree into a prediction-free partitioning rule; leaves
/// take ordinals in depth-first (left-first) order.
inline RefinedRule rule_from_tree(const CartTree& tree) {
    if (!tree.fitted()) throw InternalError("cannot derive a rule from an unfitted tree");
    RefinedRule rule;
    auto walk = [&](auto&& self, std::size_t index) -> std::int32_t {
        const CartTree::Node& node = tree.nodes()[index];
        RefinedRule::Node out;
        std::int32_t at = static_cast<std::int32_t>(rule.nodes.size());
        if (node.is_leaf) {
            out.is_leaf = true;
            out.ordinal = rule.n_leaves++;
            out.leaf_id = "leaf_" + std::to_string(out.ordinal + 1);
            rule.nodes.push_back(std::move(out));
            return at;
        }
        out.is_leaf = false;
        out.feature = node.feature;
        out.threshold = node.threshold;
        rule.nodes.push_back(std::move(out));
        std::int32_t left = self(self, node.left);
        std::int32_t right = self(self, node.right);
        rule.nodes[at].left = left;
        rule.nodes[at].right = right;
        return at;
    };
    walk(walk, 0);
    return rule;
}

/// Offline refinement oracle: refits one tree on the full training set with
/// the leaf budget and strips predictions.  The rule-set argument mirrors the
/// refinement interface but is not consulted — the oracle derives its rule
/// from the data directly.  The seed breaks ties among equal-gain splits, so
/// repeated queries on tie-rich data yield distinct rules.
inline RefinedRule heuristic_refine(const RuleSet& rules, const Dataset& train,
                                    std::size_t leaf_limit, std::uint64_t seed) {
    (void)rules;
    if (train.n_rows() == 0) throw DataError("heuristic refinement needs a non-empty training set");
    CartHyperparams hp;
    hp.max_leaf_nodes = leaf_limit;
    hp.mtry = 0;
    hp.seeded_tie_break = true;
    return rule_from_tree(fit_cart(train, hp, seed));
}

/// Offline oracle exposed through the ChatBackend interface: each slot
/// serializes its refined rule as the completion content, so the downstream
/// parse/validate path is identical for every backend.
class HeuristicBackend : public ChatBackend {
public:
    HeuristicBackend(Dataset train, std::size_t leaf_limit, std::uint64_t seed)
        : train_(std::move(train)), leaf_limit_(leaf_limit), seed_(seed) {}

    std::string name() const override { return "heuristic"; }

    nlohmann::ordered_json complete(const std::string&, std::size_t slot, std::size_t) override {
        RefinedRule rule = heuristic_refine(RuleSet{}, train_, leaf_limit_,
                                            derive_seed(seed_, 0xe0, slot));
        return make_completion_body(serialize_rule(rule));
    }

private:
    Dataset train_;
    std::size_t leaf_limit_;
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Query orchestration
// ---------------------------------------------------------------------------

struct QueryReport {
    std::vector<RefinedRule> rules;
    /// Failed attempts per slot before the accepted response.
    std::vector<std::size_t> retries;
    std::vector<std::string> warnings;
};

/// Issues n_queries completions, re-asking any slot whose response fails to
/// parse or validate, up to max_retries extra attempts per slot.  Either all
/// slots produce a valid rule or the whole query fails.
inline QueryReport query_refiner(const RefinerConfig& cfg, const Prompt& prompt,
                                 ChatBackend& backend, std::size_t n_features,
                                 TranscriptWriter* transcript = nullptr) {
    validate(cfg);
    const std::string prompt_text = prompt.text();
    QueryReport report;
    report.rules.reserve(cfg.n_queries);
    report.retries.assign(cfg.n_queries, 0);
    std::vector<std::string> raw_failures;

    for (std::size_t slot = 0; slot < cfg.n_queries; ++slot) {
        bool accepted = false;
        for (std::size_t attempt = 0; attempt <= cfg.max_retries && !accepted; ++attempt) {
            nlohmann::ordered_json response = backend.complete(prompt_text, slot, attempt);
            if (transcript != nullptr)
                transcript->append({make_request_body(cfg, prompt_text), response,
                                    utc_timestamp_now()});
            std::string content;
            try {
                content = completion_content(response);
            } catch (const RefinerError&) {
                raw_failures.push_back(response.dump());
                report.retries[slot] = attempt + 1;
                continue;
            }
            try {
                RefinedRule rule = parse_rule(content);
                auto violations = validate_rule(rule, n_features, cfg.leaf_limit);
                if (!violations.empty()) {
                    std::string joined;
                    for (const auto& v : violations) joined += v.message + "; ";
                    throw DataError("rule validation failed: " + joined);
                }
                for (const auto& w : rule.warnings)
                    report.warnings.push_back("slot " + std::to_string(slot) + ": " + w);
                report.retries[slot] = attempt;
                report.rules.push_back(std::move(rule));
                accepted = true;
            } catch (const DataError&) {
                raw_failures.push_back(content);
                report.retries[slot] = attempt + 1;
            }
        }
        if (!accepted)
            throw RefinerError("refiner slot " + std::to_string(slot) + " produced no valid rule in " +
                                   std::to_string(cfg.max_retries + 1) + " attempts",
                               raw_failures);
    }
    return report;
}

/// Builds the backend named by the configuration.  The heuristic backend
/// needs training data; remote/replay do not.
inline std::unique_ptr<ChatBackend> make_backend(const RefinerConfig& cfg,
                                                 const Dataset* train = nullptr) {
    switch (cfg.backend) {
        case RefinerBackendKind::heuristic:
            if (train == nullptr)
                throw ConfigError("heuristic refiner backend requires attached training data");
            return std::make_unique<HeuristicBackend>(*train, cfg.leaf_limit, cfg.seed);
        case RefinerBackendKind::remote:
            return std::make_unique<RemoteBackend>(cfg);
        case RefinerBackendKind::replay:
            if (cfg.replay_path.empty())
                throw ConfigError("replay refiner backend requires a transcript path");
            return std::make_unique<ReplayBackend>(ReplayBackend::from_file(cfg.replay_path));
    }
    throw InternalError("unhandled refiner backend kind");
}

}  // namespace delta
