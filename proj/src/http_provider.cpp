#include <httplib.h>

#include <cstdlib>
#include <regex>

#include <json.hpp>

#include "narrmem/errors.hpp"
#include "narrmem/llm.hpp"

namespace narrmem {

using nlohmann::json;

HttpProvider::HttpProvider(const ProviderConfig& config) : timeout_s_(config.timeout_s) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config.endpoint, m, url_re)) {
    throw ConfigError("endpoint must be an http(s) URL: " + config.endpoint);
  }
  scheme_host_port_ = m[1].str();
  base_path_ = m[2].str();
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  if (!config.api_key_env.empty()) {
    const char* key = std::getenv(config.api_key_env.c_str());
    if (!key || !*key) {
      throw ConfigError("environment variable " + config.api_key_env + " is not set");
    }
    api_key_ = key;
  }
}

std::string HttpProvider::post(const std::string& path, const std::string& body) {
  httplib::Client client(scheme_host_port_);
  const auto secs = static_cast<time_t>(timeout_s_);
  const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = client.Post(base_path_ + path, headers, body, "application/json");
  if (!res) {
    throw TransientError("request to " + scheme_host_port_ + base_path_ + path +
                         " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransientError("HTTP " + std::to_string(res->status) + " from provider");
  }
  if (res->status != 200) {
    throw TransportError("HTTP " + std::to_string(res->status) + " from provider: " +
                         res->body.substr(0, 500));
  }
  return res->body;
}

Completion HttpProvider::complete(const ChatRequest& request) {
  json body = {{"model", request.model_id},
               {"temperature", request.temperature},
               {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})}};
  if (request.seed) body["seed"] = *request.seed;
  const auto raw = post("/chat/completions", body.dump());
  try {
    const auto j = json::parse(raw);
    const auto& choice = j.at("choices").at(0);
    const std::string finish = choice.value("finish_reason", "");
    if (finish == "content_filter") throw ContentError("provider refused: content filter");
    const auto& content = choice.at("message").at("content");
    if (content.is_null()) throw ContentError("provider returned no message content");
    Completion c{content.get<std::string>(), {{"provider", "http"}}};
    c.provider_meta["model"] = j.value("model", request.model_id);
    c.provider_meta["finish_reason"] = finish;
    if (j.contains("usage") && j["usage"].is_object()) {
      for (auto& [k, v] : j["usage"].items()) {
        if (v.is_number_integer()) c.provider_meta[k] = std::to_string(v.get<long long>());
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed chat response: ") + e.what());
  }
}

std::vector<double> HttpProvider::embed(const std::string& text, const std::string& model_id) {
  json body = {{"model", model_id}, {"input", text}};
  const auto raw = post("/embeddings", body.dump());
  try {
    return json::parse(raw).at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed embedding response: ") + e.what());
  }
}

}  // namespace narrmem
