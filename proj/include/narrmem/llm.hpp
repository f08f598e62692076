#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

namespace narrmem {

struct ChatRequest {
  std::string model_id;
  double temperature = 0.0;
  std::string prompt;
  int max_retries = 3;
  std::optional<std::uint64_t> seed;  // forwarded when the provider supports it
  std::string kind = "chat";           // prompt kind, for the audit log
};

struct Completion {
  std::string raw_text;
  std::map<std::string, std::string> provider_meta;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::size_t dim = 0;
  std::string model_id;
};

// Providers throw TransientError for anything worth retrying, TransportError
// for permanent failures and ContentError for refusals.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual Completion complete(const ChatRequest& request) = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<double> embed(const std::string& text, const std::string& model_id) = 0;
};

struct ProviderConfig {
  std::string endpoint = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string chat_model = "gpt-4-0613";
  std::string embedding_model = "text-embedding-3-large";
  double timeout_s = 120.0;
  int max_retries = 3;
  std::size_t max_in_flight = 4;
  long backoff_ms = 500;
  std::string audit_log = "audit/llm.jsonl";  // relative paths resolve against the data dir
  std::string cache_dir = "cache";
  std::size_t max_chars = 30000;  // longest text accepted for embedding
};

// Unknown keys are rejected so typos surface as ConfigError.
ProviderConfig provider_config_from_json(const std::string& json_text);
std::string provider_config_to_json(const ProviderConfig& config);

using Clock = std::function<std::chrono::system_clock::time_point()>;

struct GatewayOptions {
  int embed_max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  std::size_t max_in_flight = 4;
  std::optional<std::filesystem::path> audit_log;
  std::optional<std::filesystem::path> cache_dir;
  std::size_t max_chars = 30000;
  Clock clock = [] { return std::chrono::system_clock::now(); };
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

// Retry, audit and cache layer in front of the providers. Shareable across
// threads; at most max_in_flight provider calls run at once.
class Gateway {
 public:
  Gateway(std::shared_ptr<ChatProvider> chat, std::shared_ptr<EmbeddingProvider> embedder,
          GatewayOptions options = {});

  // Attempts the call max_retries + 1 times with exponential backoff on
  // TransientError, then throws TransportError. Empty text is a ContentError.
  Completion complete(const ChatRequest& request);

  // Cached on disk under <cache_dir>/embeddings/<model>/<sha256(text)>.
  // Empty or over-long text throws InputError.
  EmbeddingVector embed(const std::string& text, const std::string& model_id);

  std::size_t chat_attempts() const { return chat_attempts_; }
  std::size_t embedding_calls() const { return embedding_calls_; }
  std::size_t cache_hits() const { return cache_hits_; }

 private:
  template <typename F>
  auto with_retries(int max_retries, const std::string& what, F&& call);
  void audit(const ChatRequest& request, const std::string* completion,
             const std::string* error);
  std::filesystem::path cache_path(const std::string& model_id, const std::string& text) const;

  std::shared_ptr<ChatProvider> chat_;
  std::shared_ptr<EmbeddingProvider> embedder_;
  GatewayOptions options_;
  std::counting_semaphore<1024> in_flight_;
  std::mutex audit_mutex_;
  std::mutex cache_mutex_;
  std::atomic<std::size_t> chat_attempts_{0};
  std::atomic<std::size_t> embedding_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

struct AuditRecord {
  std::string timestamp;
  std::string kind;
  std::string model;
  std::string prompt;
  std::string completion;
  std::string error;  // empty for successful calls
  std::optional<std::uint64_t> seed;
};

std::vector<AuditRecord> read_audit_log(const std::filesystem::path& path);
std::string audit_record_to_json(const AuditRecord& record);

// Answers each prompt with the completion recorded for it in an audit log,
// matched on (prompt, seed); records without a seed match any seed. A prompt
// recorded several times is answered in recorded order, the last answer
// repeating once they run out. An unrecorded prompt is a TransportError.
class ReplayChatProvider : public ChatProvider {
 public:
  explicit ReplayChatProvider(const std::vector<AuditRecord>& records);
  static std::shared_ptr<ReplayChatProvider> from_file(const std::filesystem::path& path);
  Completion complete(const ChatRequest& request) override;
  std::size_t size() const { return by_key_.size(); }

 private:
  std::map<std::string, std::vector<std::string>> by_key_;
  std::map<std::string, std::size_t> served_;
  std::mutex mutex_;
};

// Embeddings for replay mode: everything must already be in the cache.
class CacheOnlyEmbeddingProvider : public EmbeddingProvider {
 public:
  std::vector<double> embed(const std::string& text, const std::string& model_id) override;
};

// OpenAI-compatible /chat/completions and /embeddings over HTTP(S). The API
// key is read from the environment variable named in the config.
class HttpProvider : public ChatProvider, public EmbeddingProvider {
 public:
  explicit HttpProvider(const ProviderConfig& config);
  Completion complete(const ChatRequest& request) override;
  std::vector<double> embed(const std::string& text, const std::string& model_id) override;

 private:
  std::string post(const std::string& path, const std::string& body);

  std::string scheme_host_port_;
  std::string base_path_;
  std::string api_key_;
  double timeout_s_;
};

}  // namespace narrmem
