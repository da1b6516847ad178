#include "catsearch/remote.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace catsearch::remote {
namespace {

bool transient_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

std::string join_steps(const ReasoningPath& path, const std::string& delimiter) {
  std::string out;
  for (std::size_t i = 0; i < path.steps.size(); ++i) {
    if (i > 0) out += delimiter;
    out += path.steps[i].text;
  }
  return out;
}

const std::string& question_text(const std::map<std::string, std::string>& questions,
                                 const std::string& question_id) {
  const auto it = questions.find(question_id);
  return it == questions.end() ? question_id : it->second;
}

}  // namespace

void EndpointConfig::validate() const {
  if (url.rfind("http://", 0) != 0) throw ConfigError("endpoint.url", "must start with http://");
  if (timeout_ms < 1) throw ConfigError("endpoint.timeout_ms", "must be positive");
  if (max_attempts < 1) throw ConfigError("endpoint.max_attempts", "must be positive");
  if (backoff_ms < 0) throw ConfigError("endpoint.backoff_ms", "must be non-negative");
  if (step_delimiter.empty()) throw ConfigError("endpoint.step_delimiter", "must not be empty");
  if (max_tokens < 1) throw ConfigError("endpoint.max_tokens", "must be positive");
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

JsonClient::JsonClient(EndpointConfig config, std::ostream* log)
    : config_(std::move(config)), log_(log), stats_(std::make_shared<RemoteStats>()) {
  config_.validate();
}

nlohmann::json JsonClient::post(const std::string& path, const nlohmann::json& body) const {
  httplib::Client client(config_.url);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (const char* token = std::getenv(config_.token_env.c_str()); token != nullptr && *token != '\0')
    headers.emplace("Authorization", std::string("Bearer ") + token);

  const std::string payload = body.dump();
  ++stats_->requests;
  std::string last_error;
  int delay_ms = config_.backoff_ms;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    ++stats_->attempts;
    if (attempt > 1) ++stats_->retries;
    const auto res = client.Post(path, headers, payload, "application/json");
    if (res && res->status >= 200 && res->status < 300) {
      stats_->last_attempts = attempt;
      if (log_ != nullptr && attempt > 1)
        *log_ << "remote: " << path << " succeeded on attempt " << attempt << '\n';
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("response is not JSON: ") + e.what());
      }
    }
    if (res && !transient_status(res->status)) {
      stats_->last_attempts = attempt;
      throw BackendUnavailable(config_.url + path + " returned HTTP " + std::to_string(res->status));
    }
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (log_ != nullptr)
      *log_ << "remote: " << path << " attempt " << attempt << " failed: " << last_error << '\n';
    if (attempt < config_.max_attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      delay_ms *= 2;
    }
  }
  stats_->last_attempts = config_.max_attempts;
  throw BackendUnavailable(config_.url + path + " failed after " + std::to_string(config_.max_attempts) +
                           " attempts: " + last_error);
}

RemotePolicy::RemotePolicy(EndpointConfig config, std::ostream* log) : client_(std::move(config), log) {}

void RemotePolicy::set_question(const std::string& question_id, std::string text) {
  questions_[question_id] = std::move(text);
}

std::string RemotePolicy::prompt(const env::SyntheticTask& task, const ReasoningPath& prefix) const {
  const auto& delim = client_.config().step_delimiter;
  std::string out = question_text(questions_, task.question_id);
  if (!prefix.steps.empty()) out += delim + join_steps(prefix, delim);
  return out + delim;
}

Step RemotePolicy::sample_step(const env::SyntheticTask& task, const ReasoningPath& prefix,
                               const SamplingParams& params, RngStream rng) const {
  if (prefix.terminal || prefix.length() >= static_cast<std::size_t>(task.depth)) throw PathTerminal();
  const auto& cfg = client_.config();
  Step step;
  step.key = rng.next();
  nlohmann::json body = {{"model", cfg.model},
                         {"prompt", prompt(task, prefix)},
                         {"max_tokens", cfg.max_tokens},
                         {"temperature", params.temperature},
                         {"top_p", params.top_p},
                         {"stop", {cfg.step_delimiter}},
                         {"seed", rng.next() >> 1}};
  if (params.top_k > 0) body["top_k"] = params.top_k;
  const auto doc = client_.post("/v1/completions", body);
  try {
    step.text = doc.at("choices").at(0).at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("completion response lacks choices[0].text: ") + e.what());
  }
  return step;
}

ReasoningPath RemotePolicy::finalize(const env::SyntheticTask& task, ReasoningPath path) const {
  if (path.terminal) return path;
  if (path.length() != static_cast<std::size_t>(task.depth)) throw PathNotComplete();
  path.terminal = true;
  path.answer = static_cast<AnswerId>(fnv1a(path.steps.back().text) >> 1);
  return path;
}

RemotePrm::RemotePrm(EndpointConfig config, std::string id, prm::SparsityStats stats, std::ostream* log)
    : client_(std::move(config), log), id_(std::move(id)), stats_(stats) {}

void RemotePrm::set_question(const std::string& question_id, std::string text) {
  questions_[question_id] = std::move(text);
}

double RemotePrm::score(const env::SyntheticTask& task, const ReasoningPath& prefix) const {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : prefix.steps) steps.push_back(s.text);
  const nlohmann::json body = {
      {"model", client_.config().model}, {"question", question_text(questions_, task.question_id)}, {"steps", steps}};
  const auto doc = client_.post("/v1/score", body);
  if (!doc.is_object() || !doc.contains("score") || !doc["score"].is_number())
    throw ProtocolError("score response must be an object with a numeric \"score\"");
  const double raw = doc["score"].get<double>();
  if (!std::isfinite(raw)) throw ProtocolError("score is not finite");
  if (raw < 0.0 || raw > 1.0) {
    ++client_.stats().clamped_scores;
    return raw < 0.0 ? 0.0 : 1.0;
  }
  return raw;
}

}  // namespace catsearch::remote
