#include "narrmem/http_server.hpp"

#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "narrmem/errors.hpp"

namespace narrmem::service {

using nlohmann::json;

int http_status(const std::string& code) {
  if (code == "not_found") return 404;
  if (code == "state_error" || code == "sequence_error" || code == "conflict") return 409;
  if (code == "config_error") return 422;
  if (code == "invalid_argument" || code == "data_error" || code == "parse_error") return 400;
  return 500;
}

namespace {

const char* kStubPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>Experiment</title></head>"
    "<body><p>The participant interface is not installed on this server.</p></body></html>";

json probe_json(const ProbeView& p) {
  return {{"done", false}, {"position", p.position}, {"text", p.text}, {"question", p.question}};
}

json session_json(const SessionView& v) {
  const Session& s = v.session;
  json j{{"session_id", s.session_id},
         {"participant_id", s.participant_id},
         {"narrative_id", s.narrative_id},
         {"task", to_string(s.task)},
         {"state", to_string(s.state)},
         {"instructions", v.instructions},
         {"created_at", s.created_at},
         {"completed_at", s.completed_at.empty() ? json(nullptr) : json(s.completed_at)},
         {"fast_presentation", s.fast_presentation}};
  if (s.task == Task::recall) {
    j["recall_prompt"] = kRecallPrompt;
    if (!s.recall_token.empty()) j["completion_token"] = s.recall_token;
  } else {
    j["probes_total"] = kProbesPerSession;
    j["probes_answered"] = s.answers.size();
    if (s.probes_served > static_cast<int>(s.answers.size())) {
      j["current_probe"] = probe_json({s.probes_served,
                                       s.probe_set->probes[static_cast<std::size_t>(s.probes_served - 1)].text,
                                       kProbeQuestion});
    }
  }
  return j;
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw InvalidArgument("request body must be a JSON object");
    return j;
  } catch (const json::exception&) {
    throw InvalidArgument("request body is not valid JSON");
  }
}

template <typename T>
T field(const json& body, const char* name) {
  const auto it = body.find(name);
  if (it == body.end()) throw InvalidArgument(std::string("missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument(std::string("field '") + name + "' has the wrong type");
  }
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      reply(res, http_status(e.code()), {{"error", e.code()}, {"message", e.what()}});
    } catch (const std::exception& e) {
      reply(res, 500, {{"error", "internal"}, {"message", e.what()}});
    }
  };
}

}  // namespace

struct HttpServer::Impl {
  ExperimentService& service;
  ServerOptions options;
  httplib::Server server;
  std::thread thread;
  int port = -1;

  Impl(ExperimentService& s, ServerOptions o) : service(s), options(std::move(o)) { routes(); }

  void routes() {
    auto& svc = service;
    server.Post("/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      const auto view = svc.create_session(field<std::string>(body, "participant_id"),
                                           field<std::string>(body, "narrative_id"),
                                           task_from_string(field<std::string>(body, "task")));
      reply(res, 201, session_json(view));
    }));
    server.Get(R"(/sessions/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
      reply(res, 200, session_json(svc.get_session(req.matches[1])));
    }));
    server.Post(R"(/sessions/([^/]+)/consent)",
                guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  svc.consent(id);
                  reply(res, 200, session_json(svc.get_session(id)));
                }));
    server.Get(R"(/sessions/([^/]+)/stimulus)",
               guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 const auto st = svc.get_stimulus(req.matches[1]);
                 reply(res, 200,
                       {{"prose", st.prose},
                        {"char_count", st.char_count},
                        {"countdown_s", st.countdown_s},
                        {"marquee_speed_px_s", st.marquee_speed_px_s},
                        {"font_color", st.font_color},
                        {"background_color", st.background_color}});
               }));
    server.Post(R"(/sessions/([^/]+)/presentation-finished)",
                guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  svc.presentation_finished(id, parse_body(req).dump());
                  reply(res, 200, session_json(svc.get_session(id)));
                }));
    server.Post(R"(/sessions/([^/]+)/recall)",
                guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  const auto token = svc.submit_recall(req.matches[1], field<std::string>(body, "text"));
                  reply(res, 200, {{"completion_token", token}});
                }));
    server.Get(R"(/sessions/([^/]+)/probes/next)",
               guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 const auto p = svc.next_probe(req.matches[1]);
                 reply(res, 200, p ? probe_json(*p) : json{{"done", true}});
               }));
    server.Post(R"(/sessions/([^/]+)/probes/(\d+)/answer)",
                guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  const std::string id = req.matches[1];
                  int position = 0;
                  try {
                    position = std::stoi(req.matches[2]);
                  } catch (const std::exception&) {
                    throw InvalidArgument("bad probe position");
                  }
                  const auto s = svc.answer_probe(id, position, field<bool>(body, "answer"));
                  reply(res, 200,
                        {{"position", position},
                         {"recorded", true},
                         {"done", s.state == SessionState::completed}});
                }));
    server.Get("/export", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
      ExportFilter f;
      if (req.has_param("narrative_id")) f.narrative_id = req.get_param_value("narrative_id");
      if (req.has_param("participant_id")) f.participant_id = req.get_param_value("participant_id");
      if (req.has_param("task")) f.task = task_from_string(req.get_param_value("task"));
      const auto out = svc.export_dataset(f);
      const std::string kind = req.has_param("kind") ? req.get_param_value("kind") : "";
      if (kind == "recall" || kind == "recognition") {
        res.status = 200;
        res.set_content(kind == "recall" ? out.recall_jsonl : out.recognition_jsonl, "application/x-ndjson");
        return;
      }
      if (!kind.empty()) throw InvalidArgument("kind must be 'recall' or 'recognition'");
      reply(res, 200,
            {{"recall_jsonl", out.recall_jsonl},
             {"recognition_jsonl", out.recognition_jsonl},
             {"recall_records", out.recall_records},
             {"recognition_trials", out.recognition_trials}});
    }));

    if (options.static_dir && server.set_mount_point("/app", options.static_dir->string())) return;
    server.Get("/app", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kStubPage, "text/html");
    });
    server.Get("/app/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kStubPage, "text/html");
    });
  }
};

HttpServer::HttpServer(ExperimentService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  if (impl_->port >= 0) return impl_->port;
  const auto& o = impl_->options;
  impl_->port = o.port == 0 ? impl_->server.bind_to_any_port(o.host)
                            : (impl_->server.bind_to_port(o.host, o.port) ? o.port : -1);
  if (impl_->port < 0) {
    throw ConfigError("cannot bind " + o.host + ":" + std::to_string(o.port));
  }
  return impl_->port;
}

void HttpServer::listen() {
  bind();
  impl_->server.listen_after_bind();
}

int HttpServer::start() {
  const int port = bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace narrmem::service
