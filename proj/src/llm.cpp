#include "narrmem/llm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "narrmem/errors.hpp"
#include "narrmem/io.hpp"

namespace narrmem {

namespace fs = std::filesystem;
using nlohmann::json;

ProviderConfig provider_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("provider config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("provider config must be a JSON object");
  ProviderConfig c;
  try {
    for (auto& [key, v] : j.items()) {
      if (key == "endpoint") c.endpoint = v.get<std::string>();
      else if (key == "api_key_env") c.api_key_env = v.get<std::string>();
      else if (key == "chat_model") c.chat_model = v.get<std::string>();
      else if (key == "embedding_model") c.embedding_model = v.get<std::string>();
      else if (key == "timeout_s") c.timeout_s = v.get<double>();
      else if (key == "max_retries") c.max_retries = v.get<int>();
      else if (key == "max_in_flight") c.max_in_flight = v.get<std::size_t>();
      else if (key == "backoff_ms") c.backoff_ms = v.get<long>();
      else if (key == "audit_log") c.audit_log = v.get<std::string>();
      else if (key == "cache_dir") c.cache_dir = v.get<std::string>();
      else if (key == "max_chars") c.max_chars = v.get<std::size_t>();
      else throw ConfigError("unknown provider config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("provider config has a wrongly typed value: ") + e.what());
  }
  if (c.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (c.max_in_flight < 1 || c.max_in_flight > 1024) {
    throw ConfigError("max_in_flight must be in 1..1024");
  }
  if (c.timeout_s <= 0) throw ConfigError("timeout_s must be positive");
  if (c.backoff_ms < 0) throw ConfigError("backoff_ms must be >= 0");
  return c;
}

std::string provider_config_to_json(const ProviderConfig& c) {
  json j = {{"endpoint", c.endpoint},       {"api_key_env", c.api_key_env},
            {"chat_model", c.chat_model},   {"embedding_model", c.embedding_model},
            {"timeout_s", c.timeout_s},     {"max_retries", c.max_retries},
            {"max_in_flight", c.max_in_flight}, {"backoff_ms", c.backoff_ms},
            {"audit_log", c.audit_log},     {"cache_dir", c.cache_dir},
            {"max_chars", c.max_chars}};
  return j.dump(2);
}

Gateway::Gateway(std::shared_ptr<ChatProvider> chat, std::shared_ptr<EmbeddingProvider> embedder,
                 GatewayOptions options)
    : chat_(std::move(chat)),
      embedder_(std::move(embedder)),
      options_(std::move(options)),
      in_flight_(static_cast<std::ptrdiff_t>(options_.max_in_flight)) {
  if (options_.max_in_flight < 1 || options_.max_in_flight > 1024) {
    throw ConfigError("max_in_flight must be in 1..1024");
  }
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (!options_.clock) options_.clock = [] { return std::chrono::system_clock::now(); };
}

template <typename F>
auto Gateway::with_retries(int max_retries, const std::string& what, F&& call) {
  if (max_retries < 0) throw InvalidArgument("max_retries must be >= 0");
  for (int attempt = 0;; ++attempt) {
    try {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      return call();
    } catch (const TransientError& e) {
      if (attempt >= max_retries) {
        throw TransportError(what + " failed after " + std::to_string(attempt + 1) +
                             " attempts: " + e.what());
      }
      options_.sleep(options_.backoff_base * (1L << std::min(attempt, 20)));
    }
  }
}

Completion Gateway::complete(const ChatRequest& request) {
  if (!chat_) throw ConfigError("no chat provider configured");
  if (request.prompt.empty()) throw InvalidArgument("chat request has an empty prompt");
  if (request.temperature < 0) throw InvalidArgument("temperature must be >= 0");
  Completion c;
  try {
    c = with_retries(request.max_retries, "chat completion", [&] {
      ++chat_attempts_;
      return chat_->complete(request);
    });
  } catch (const Error& e) {
    const std::string msg = e.what();
    audit(request, nullptr, &msg);
    throw;
  }
  if (c.raw_text.empty()) {
    const std::string msg = "provider returned empty text";
    audit(request, nullptr, &msg);
    throw ContentError(msg);
  }
  audit(request, &c.raw_text, nullptr);
  return c;
}

void Gateway::audit(const ChatRequest& request, const std::string* completion,
                    const std::string* error) {
  if (!options_.audit_log) return;
  AuditRecord r{io::iso8601(options_.clock()), request.kind, request.model_id, request.prompt,
                completion ? *completion : "", error ? *error : "", request.seed};
  const auto line = audit_record_to_json(r);
  std::lock_guard lock(audit_mutex_);
  io::append_line(*options_.audit_log, line);
}

fs::path Gateway::cache_path(const std::string& model_id, const std::string& text) const {
  std::string dir = model_id;
  for (auto& ch : dir) {
    if (ch == '/' || ch == '\\' || ch == ':') ch = '_';
  }
  return *options_.cache_dir / "embeddings" / dir / io::sha256_hex(text);
}

EmbeddingVector Gateway::embed(const std::string& text, const std::string& model_id) {
  if (text.empty()) throw InputError("cannot embed empty text");
  if (text.size() > options_.max_chars) {
    throw InputError("text of " + std::to_string(text.size()) + " bytes exceeds the " +
                     std::to_string(options_.max_chars) + " limit");
  }
  std::optional<fs::path> path;
  if (options_.cache_dir) {
    path = cache_path(model_id, text);
    std::ifstream in(*path, std::ios::binary);
    if (in) {
      try {
        const auto j = json::parse(in);
        EmbeddingVector v{j.at("values").get<std::vector<double>>(), 0, model_id};
        v.dim = v.values.size();
        ++cache_hits_;
        return v;
      } catch (const json::exception&) {
        // unreadable entry: fall through and overwrite it
      }
    }
  }
  if (!embedder_) throw ConfigError("no embedding provider configured");
  auto values = with_retries(options_.embed_max_retries, "embedding", [&] {
    ++embedding_calls_;
    return embedder_->embed(text, model_id);
  });
  if (values.empty()) throw ContentError("provider returned an empty embedding");
  for (double x : values) {
    if (!std::isfinite(x)) throw ContentError("provider returned a non-finite embedding");
  }
  if (path) {
    json j = {{"model", model_id}, {"dim", values.size()}, {"values", values}};
    std::lock_guard lock(cache_mutex_);
    io::write_text_file(*path, j.dump());
  }
  EmbeddingVector v{std::move(values), 0, model_id};
  v.dim = v.values.size();
  return v;
}

std::string audit_record_to_json(const AuditRecord& r) {
  json j = {{"timestamp", r.timestamp}, {"kind", r.kind},     {"model", r.model},
            {"prompt", r.prompt},       {"completion", r.completion}};
  if (!r.error.empty()) j["error"] = r.error;
  if (r.seed) j["seed"] = *r.seed;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::vector<AuditRecord> read_audit_log(const fs::path& path) {
  std::vector<AuditRecord> out;
  std::size_t line_no = 0;
  for (const auto& line : io::split_lines(io::read_text_file(path))) {
    ++line_no;
    try {
      const auto j = json::parse(line);
      out.push_back({j.value("timestamp", ""), j.value("kind", ""), j.value("model", ""),
                     j.at("prompt").get<std::string>(), j.value("completion", ""),
                     j.value("error", ""), std::nullopt});
      if (j.contains("seed")) out.back().seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {
std::string replay_key(const std::string& prompt, const std::optional<std::uint64_t>& seed) {
  return (seed ? std::to_string(*seed) : std::string("-")) + '\n' + prompt;
}
}  // namespace

ReplayChatProvider::ReplayChatProvider(const std::vector<AuditRecord>& records) {
  for (const auto& r : records) {
    if (r.error.empty() && !r.completion.empty()) {
      by_key_[replay_key(r.prompt, r.seed)].push_back(r.completion);
    }
  }
}

std::shared_ptr<ReplayChatProvider> ReplayChatProvider::from_file(const fs::path& path) {
  return std::make_shared<ReplayChatProvider>(read_audit_log(path));
}

Completion ReplayChatProvider::complete(const ChatRequest& request) {
  std::string key = replay_key(request.prompt, request.seed);
  std::lock_guard lock(mutex_);
  auto it = by_key_.find(key);
  if (it == by_key_.end() && request.seed) {
    key = replay_key(request.prompt, std::nullopt);
    it = by_key_.find(key);
  }
  if (it == by_key_.end()) {
    throw TransportError("replay log has no completion for this " + request.kind + " prompt");
  }
  std::size_t& n = served_[key];
  const std::string& text = it->second[std::min(n, it->second.size() - 1)];
  ++n;
  return {text, {{"provider", "replay"}, {"model", request.model_id}}};
}

std::vector<double> CacheOnlyEmbeddingProvider::embed(const std::string&, const std::string& model_id) {
  throw TransportError("embedding for model " + model_id + " is not in the cache (replay mode)");
}

}  // namespace narrmem
