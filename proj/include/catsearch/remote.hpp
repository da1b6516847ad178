#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "catsearch/env.hpp"
#include "catsearch/prm.hpp"

namespace catsearch::remote {

/// One HTTP endpoint. Only plain http:// URLs are supported. The bearer
/// token is read from the environment variable named by token_env at
/// request time and is never stored in config files.
struct EndpointConfig {
  std::string url;  // scheme://host:port, no trailing path
  std::string model;
  std::string token_env = "CATSEARCH_API_TOKEN";
  int timeout_ms = 30000;
  int max_attempts = 3;
  int backoff_ms = 200;  // doubled after every failed attempt
  std::string step_delimiter = "\n\n";
  int max_tokens = 256;

  void validate() const;
};

struct RemoteStats {
  std::atomic<std::int64_t> requests{0};
  std::atomic<std::int64_t> attempts{0};
  std::atomic<std::int64_t> retries{0};
  std::atomic<std::int64_t> clamped_scores{0};
  std::atomic<int> last_attempts{0};
};

/// POSTs JSON and parses JSON. Connection failures, timeouts, 429 and 5xx
/// are retried with exponential backoff up to max_attempts, then raise
/// BackendUnavailable; other non-2xx statuses raise BackendUnavailable at
/// once. A body that is not JSON raises ProtocolError.
class JsonClient {
 public:
  explicit JsonClient(EndpointConfig config, std::ostream* log = nullptr);

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;

  const EndpointConfig& config() const noexcept { return config_; }
  RemoteStats& stats() const noexcept { return *stats_; }

 private:
  EndpointConfig config_;
  std::ostream* log_;
  std::shared_ptr<RemoteStats> stats_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Completion-style policy: one request per step against /v1/completions,
/// stopping at the step delimiter. The prompt is the question text followed
/// by the prefix steps joined with the delimiter. Answers are the FNV-1a
/// hash of the final step's text.
class RemotePolicy final : public env::Policy {
 public:
  explicit RemotePolicy(EndpointConfig config, std::ostream* log = nullptr);

  /// Question text sent for question_id; the id itself is sent otherwise.
  void set_question(const std::string& question_id, std::string text);

  Step sample_step(const env::SyntheticTask& task, const ReasoningPath& prefix, const SamplingParams& params,
                   RngStream rng) const override;
  ReasoningPath finalize(const env::SyntheticTask& task, ReasoningPath path) const override;

  std::string prompt(const env::SyntheticTask& task, const ReasoningPath& prefix) const;
  const JsonClient& client() const noexcept { return client_; }

 private:
  JsonClient client_;
  std::map<std::string, std::string> questions_;
};

/// Scoring endpoint: POST /v1/score with {model, question, steps} answered by
/// {"score": x}. Every call re-scores the full prefix, so a search costs one
/// request per scored node. Out-of-range scores are clamped into [0, 1] and
/// counted in stats().clamped_scores; a missing or non-numeric score is a
/// ProtocolError.
class RemotePrm final : public prm::Prm {
 public:
  RemotePrm(EndpointConfig config, std::string id, prm::SparsityStats stats = {}, std::ostream* log = nullptr);

  void set_question(const std::string& question_id, std::string text);

  double score(const env::SyntheticTask& task, const ReasoningPath& prefix) const override;
  prm::SparsityStats sparsity_stats() const override { return stats_; }
  std::string id() const override { return id_; }

  const JsonClient& client() const noexcept { return client_; }

 private:
  JsonClient client_;
  std::string id_;
  prm::SparsityStats stats_;
  std::map<std::string, std::string> questions_;
};

}  // namespace catsearch::remote
