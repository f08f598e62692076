#include "narrmem/service.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <tuple>

#include "narrmem/errors.hpp"
#include "narrmem/io.hpp"
#include "narrmem/recall.hpp"
#include "narrmem/recognition.hpp"
#include "narrmem/rng.hpp"

namespace narrmem::service {

using nlohmann::json;

std::string to_string(Task t) { return t == Task::recall ? "recall" : "recognition"; }

Task task_from_string(const std::string& s) {
  if (s == "recall") return Task::recall;
  if (s == "recognition") return Task::recognition;
  throw InvalidArgument("task must be 'recall' or 'recognition', got '" + s + "'");
}

std::string to_string(SessionState s) {
  switch (s) {
    case SessionState::created: return "created";
    case SessionState::consented: return "consented";
    case SessionState::presenting: return "presenting";
    case SessionState::testing: return "testing";
    case SessionState::completed: return "completed";
  }
  return "?";
}

std::string event_to_json(const EventRecord& e) {
  json j;
  j["seq"] = e.seq;
  j["session_seq"] = e.session_seq;
  j["session_id"] = e.session_id;
  j["kind"] = e.kind;
  j["timestamp"] = e.timestamp;
  j["payload"] = json::parse(e.payload);
  return j.dump();
}

EventRecord event_from_json(const std::string& line) {
  try {
    const auto j = json::parse(line);
    EventRecord e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.session_seq = j.at("session_seq").get<std::uint64_t>();
    e.session_id = j.at("session_id").get<std::string>();
    e.kind = j.at("kind").get<std::string>();
    e.timestamp = j.at("timestamp").get<std::string>();
    e.payload = j.at("payload").dump();
    return e;
  } catch (const json::exception& ex) {
    throw DataError(std::string("malformed event: ") + ex.what());
  }
}

namespace {

json probe_to_json(const Probe& p) {
  json j{{"is_old", p.is_old}, {"text", p.text}};
  if (p.is_old) {
    j["clause_index"] = p.clause_index;
  } else {
    j["lure_label"] = p.lure_label;
  }
  return j;
}

Probe probe_from_json(const json& j) {
  Probe p;
  p.is_old = j.at("is_old").get<bool>();
  p.text = j.at("text").get<std::string>();
  if (p.is_old) {
    p.clause_index = j.at("clause_index").get<int>();
  } else {
    p.lure_label = j.at("lure_label").get<std::string>();
  }
  return p;
}

[[noreturn]] void corrupt(const EventRecord& e, const std::string& why) {
  throw DataError("event " + std::to_string(e.seq) + " (" + e.kind + ", session " + e.session_id +
                  "): " + why);
}

// The single definition of what each event does to a session.
void apply_event(std::optional<Session>& slot, const EventRecord& e) {
  json p;
  try {
    p = json::parse(e.payload);
  } catch (const json::exception&) {
    corrupt(e, "payload is not JSON");
  }
  if (e.kind == "session_created") {
    if (slot) corrupt(e, "session already exists");
    Session s;
    s.session_id = e.session_id;
    s.participant_id = p.at("participant_id").get<std::string>();
    s.narrative_id = p.at("narrative_id").get<std::string>();
    s.task = task_from_string(p.at("task").get<std::string>());
    s.created_at = e.timestamp;
    s.events = 1;
    slot = std::move(s);
    return;
  }
  if (!slot) corrupt(e, "unknown session");
  Session& s = *slot;
  if (e.session_seq != s.events + 1) corrupt(e, "per-session sequence gap");
  auto require = [&](SessionState st) {
    if (s.state != st) corrupt(e, "session is " + to_string(s.state));
  };
  try {
    if (e.kind == "consent") {
      require(SessionState::created);
      s.state = SessionState::consented;
    } else if (e.kind == "presentation_started") {
      require(SessionState::consented);
      s.state = SessionState::presenting;
      s.presentation_started_at = e.timestamp;
    } else if (e.kind == "presentation_finished") {
      require(SessionState::presenting);
      s.state = SessionState::testing;
      s.presentation_finished_at = e.timestamp;
      s.fast_presentation = p.at("fast").get<bool>();
      if (s.task == Task::recognition) {
        ProbeSet set;
        for (const auto& pj : p.at("probe_set")) set.probes.push_back(probe_from_json(pj));
        s.probe_set = std::move(set);
      }
    } else if (e.kind == "recall_submitted") {
      require(SessionState::testing);
      if (s.task != Task::recall || s.recall_text) corrupt(e, "recall not expected");
      s.recall_text = p.at("text").get<std::string>();
      s.recall_token = p.at("token").get<std::string>();
    } else if (e.kind == "probe_served") {
      require(SessionState::testing);
      if (s.task != Task::recognition) corrupt(e, "not a recognition session");
      const int pos = p.at("position").get<int>();
      if (pos != s.probes_served + 1 || s.probes_served != static_cast<int>(s.answers.size()) ||
          pos > static_cast<int>(s.probe_set->probes.size())) {
        corrupt(e, "probe served out of sequence");
      }
      s.probes_served = pos;
    } else if (e.kind == "probe_answered") {
      require(SessionState::testing);
      const int pos = p.at("position").get<int>();
      if (pos != s.probes_served || pos != static_cast<int>(s.answers.size()) + 1) {
        corrupt(e, "answer for a probe that is not current");
      }
      s.answers.push_back({p.at("response_yes").get<bool>(), e.timestamp});
    } else if (e.kind == "completed") {
      require(SessionState::testing);
      const bool done = s.task == Task::recall
                            ? s.recall_text.has_value()
                            : s.answers.size() == s.probe_set->probes.size();
      if (!done) corrupt(e, "session completed early");
      s.state = SessionState::completed;
      s.completed_at = e.timestamp;
    } else {
      corrupt(e, "unknown event kind");
    }
  } catch (const json::exception& ex) {
    corrupt(e, std::string("bad payload: ") + ex.what());
  }
  ++s.events;
}

ProbeView view_of(const Session& s, int position) {
  ProbeView v;
  v.position = position;
  v.text = s.probe_set->probes[static_cast<std::size_t>(position - 1)].text;
  return v;
}

std::string instructions_for(Task t) {
  return t == Task::recall ? kRecallInstructions : kRecognitionInstructions;
}

}  // namespace

void SessionStore::apply(const EventRecord& e) {
  std::optional<Session> slot;
  if (const auto it = sessions_.find(e.session_id); it != sessions_.end()) slot = it->second;
  apply_event(slot, e);
  sessions_[e.session_id] = std::move(*slot);
}

std::map<std::string, Session> replay(const std::vector<EventRecord>& events) {
  SessionStore store;
  for (const auto& e : events) store.apply(e);
  return store.sessions();
}

std::vector<EventRecord> read_event_log(const std::filesystem::path& path) {
  std::vector<EventRecord> out;
  if (!std::filesystem::exists(path)) return out;
  for (const auto& line : io::split_lines(io::read_text_file(path))) out.push_back(event_from_json(line));
  return out;
}

struct ExperimentService::Slot {
  std::mutex m;
  std::optional<Session> session;
};

ExperimentService::ExperimentService(Corpus corpus, ServiceOptions options)
    : corpus_(std::move(corpus)), options_(std::move(options)) {
  if (options_.event_log) {
    for (auto& e : read_event_log(*options_.event_log)) {
      if (e.seq != seq_ + 1) throw DataError("event log sequence gap at " + std::to_string(e.seq));
      seq_ = e.seq;
      auto& s = slots_[e.session_id];
      if (!s) s = std::make_unique<Slot>();
      apply_event(s->session, e);
      log_.push_back(std::move(e));
    }
  }
  next_id_ = slots_.size();
}

ExperimentService::~ExperimentService() = default;

ExperimentService::Slot& ExperimentService::slot(const std::string& session_id) const {
  std::lock_guard lock(index_mutex_);
  const auto it = slots_.find(session_id);
  if (it == slots_.end()) throw NotFoundError("unknown session '" + session_id + "'");
  return *it->second;
}

void ExperimentService::commit(Slot& s, const std::string& session_id, const std::string& kind,
                               const std::string& payload,
                               std::optional<std::chrono::system_clock::time_point> at) {
  EventRecord e;
  e.session_id = session_id;
  e.session_seq = s.session ? s.session->events + 1 : 1;
  e.kind = kind;
  e.payload = payload;
  {
    std::lock_guard lock(log_mutex_);
    e.timestamp = io::iso8601(at ? *at : options_.clock());
    e.seq = seq_ + 1;
    if (options_.event_log) io::append_line(*options_.event_log, event_to_json(e));
    seq_ = e.seq;
    log_.push_back(e);
  }
  apply_event(s.session, e);
}

std::uint64_t ExperimentService::session_seed(const std::string& session_id) const {
  return derive_seed(options_.master_seed, session_id);
}

SessionView ExperimentService::create_session(const std::string& participant_id,
                                              const std::string& narrative_id, Task task) {
  if (participant_id.empty()) throw InvalidArgument("participant_id is required");
  const Narrative* n = corpus_.find_narrative(narrative_id);
  if (!n) throw NotFoundError("unknown narrative '" + narrative_id + "'");
  if (task == Task::recognition) {
    const LurePool* lures = corpus_.find_lures(narrative_id);
    if (!lures) throw ConfigError("narrative '" + narrative_id + "' has no lure pool");
    if (n->length() + lures->lures.size() < kProbesPerSession) {
      throw ConfigError("narrative '" + narrative_id + "' has too small a probe pool");
    }
  }
  Slot* s = nullptr;
  std::string id;
  {
    std::lock_guard lock(index_mutex_);
    do {
      char buf[20];
      std::snprintf(buf, sizeof buf, "s%016llx",
                    static_cast<unsigned long long>(derive_seed(options_.master_seed ^ 0x5e55105eULL, next_id_++)));
      id = buf;
    } while (slots_.count(id));
    auto& slot = slots_[id];
    slot = std::make_unique<Slot>();
    s = slot.get();
    // Held until the creation event is applied, so no other call sees an empty slot.
    s->m.lock();
  }
  try {
    std::lock_guard lock(s->m, std::adopt_lock);
    commit(*s, id, "session_created",
           json{{"participant_id", participant_id}, {"narrative_id", narrative_id}, {"task", to_string(task)}}
               .dump());
    return {*s->session, instructions_for(task)};
  } catch (...) {
    std::lock_guard lock(index_mutex_);
    slots_.erase(id);
    throw;
  }
}

SessionView ExperimentService::get_session(const std::string& session_id) const {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.m);
  if (!s.session) throw NotFoundError("unknown session '" + session_id + "'");
  return {*s.session, instructions_for(s.session->task)};
}

Session ExperimentService::consent(const std::string& session_id) {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.m);
  if (s.session->state != SessionState::created) {
    throw StateError("consent requires a new session; session is " + to_string(s.session->state));
  }
  commit(s, s.session->session_id, "consent", "{}");
  return *s.session;
}

Stimulus ExperimentService::get_stimulus(const std::string& session_id) {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.m);
  if (s.session->state != SessionState::consented) {
    throw StateError("stimulus is served once, after consent; session is " + to_string(s.session->state));
  }
  const Narrative& n = corpus_.narrative(s.session->narrative_id);
  commit(s, s.session->session_id, "presentation_started", "{}");
  Stimulus st;
  st.prose = assemble_prose(n);
  st.char_count = static_cast<int>(st.prose.size());
  return st;
}

Session ExperimentService::presentation_finished(const std::string& session_id,
                                                 const std::string& client_info) {
  json client;
  try {
    client = json::parse(client_info.empty() ? "{}" : client_info);
  } catch (const json::exception&) {
    throw InvalidArgument("client info must be a JSON object");
  }
  if (!client.is_object()) throw InvalidArgument("client info must be a JSON object");
  Slot& s = slot(session_id);
  std::lock_guard lock(s.m);
  Session& sess = *s.session;
  if (sess.state != SessionState::presenting) {
    throw StateError("presentation has not started; session is " + to_string(sess.state));
  }
  const Narrative& n = corpus_.narrative(sess.narrative_id);
  const double nominal = stimulus_stats(n).duration_s;
  const auto now = options_.clock();
  const double elapsed =
      std::chrono::duration<double>(now - io::parse_iso8601(sess.presentation_started_at)).count();
  json payload{{"elapsed_s", elapsed}, {"min_expected_s", 0.9 * nominal}, {"fast", elapsed < 0.9 * nominal},
               {"client", client}};
  if (sess.task == Task::recognition) {
    const auto probes = sample_probes(n, *corpus_.find_lures(n.id), session_seed(sess.session_id));
    json arr = json::array();
    for (const auto& p : probes.probes) arr.push_back(probe_to_json(p));
    payload["probe_set"] = std::move(arr);
  }
  commit(s, sess.session_id, "presentation_finished", payload.dump(), now);
  return sess;
}

std::string ExperimentService::submit_recall(const std::string& session_id, const std::string& text) {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.m);
  Session& sess = *s.session;
  if (sess.task != Task::recall) throw StateError("session is not a recall session");
  if (sess.state == SessionState::completed) {
    if (sess.recall_text == text) return sess.recall_token;
    throw ConflictError("a different recall was already submitted for this session");
  }
  if (sess.state != SessionState::testing) {
    throw StateError("recall is accepted after the presentation; session is " + to_string(sess.state));
  }
  const std::string token = "t" + io::sha256_hex(sess.session_id + "\n" + text).substr(0, 24);
  commit(s, sess.session_id, "recall_submitted", json{{"text", text}, {"token", token}}.dump());
  commit(s, s.session->session_id, "completed", "{}");
  return token;
}

std::optional<ProbeView> ExperimentService::next_probe(const std::string& session_id) {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.m);
  Session& sess = *s.session;
  if (sess.task != Task::recognition) throw StateError("session is not a recognition session");
  if (sess.state == SessionState::completed) return std::nullopt;
  if (sess.state != SessionState::testing) {
    throw StateError("probes are served after the presentation; session is " + to_string(sess.state));
  }
  if (sess.probes_served > static_cast<int>(sess.answers.size())) {
    throw SequenceError("probe " + std::to_string(sess.probes_served) + " has not been answered");
  }
  const int pos = sess.probes_served + 1;
  commit(s, s.session->session_id, "probe_served", json{{"position", pos}}.dump());
  return view_of(sess, pos);
}

std::optional<ProbeView> ExperimentService::current_probe(const std::string& session_id) const {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.m);
  const Session& sess = *s.session;
  if (sess.task != Task::recognition || sess.state != SessionState::testing ||
      sess.probes_served == static_cast<int>(sess.answers.size())) {
    return std::nullopt;
  }
  return view_of(sess, sess.probes_served);
}

Session ExperimentService::answer_probe(const std::string& session_id, int position, bool response_yes) {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.m);
  Session& sess = *s.session;
  if (sess.task != Task::recognition) throw StateError("session is not a recognition session");
  if (position >= 1 && position <= static_cast<int>(sess.answers.size())) {
    throw ConflictError("probe " + std::to_string(position) + " was already answered");
  }
  if (sess.state != SessionState::testing) {
    throw StateError("answers are accepted during testing; session is " + to_string(sess.state));
  }
  if (position != sess.probes_served || sess.probes_served == static_cast<int>(sess.answers.size())) {
    throw SequenceError("probe " + std::to_string(position) + " is not the current probe");
  }
  commit(s, sess.session_id, "probe_answered",
         json{{"position", position}, {"response_yes", response_yes}}.dump());
  if (sess.answers.size() == sess.probe_set->probes.size()) commit(s, sess.session_id, "completed", "{}");
  return sess;
}

std::vector<Session> ExperimentService::sessions() const {
  std::vector<Slot*> all;
  {
    std::lock_guard lock(index_mutex_);
    for (const auto& [id, s] : slots_) all.push_back(s.get());
  }
  std::vector<Session> out;
  for (Slot* s : all) {
    std::lock_guard lock(s->m);
    if (s->session) out.push_back(*s->session);
  }
  return out;
}

std::vector<EventRecord> ExperimentService::events() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

ExportResult ExperimentService::export_dataset(const ExportFilter& filter) const {
  auto all = sessions();
  std::vector<Session> kept;
  for (auto& s : all) {
    if (s.state != SessionState::completed) continue;
    if (filter.narrative_id && s.narrative_id != *filter.narrative_id) continue;
    if (filter.participant_id && s.participant_id != *filter.participant_id) continue;
    if (filter.task && s.task != *filter.task) continue;
    kept.push_back(std::move(s));
  }
  std::sort(kept.begin(), kept.end(), [](const Session& a, const Session& b) {
    return std::tie(a.narrative_id, a.participant_id, a.completed_at, a.session_id) <
           std::tie(b.narrative_id, b.participant_id, b.completed_at, b.session_id);
  });
  ExportResult out;
  std::vector<recall::RecallRecord> records;
  std::vector<recognition::RecognitionTrial> trials;
  for (const auto& s : kept) {
    if (s.task == Task::recall) {
      recall::RecallRecord r;
      r.participant_id = s.participant_id;
      r.narrative_id = s.narrative_id;
      r.recall_text = *s.recall_text;
      r.timestamp = s.completed_at;
      records.push_back(std::move(r));
    } else {
      for (std::size_t i = 0; i < s.answers.size(); ++i) {
        const Probe& p = s.probe_set->probes[i];
        recognition::RecognitionTrial t;
        t.participant_id = s.participant_id;
        t.narrative_id = s.narrative_id;
        t.probe_position = static_cast<int>(i + 1);
        t.item = p.item();
        t.is_old = p.is_old;
        t.response_yes = s.answers[i].response_yes;
        t.timestamp = s.answers[i].timestamp;
        trials.push_back(std::move(t));
      }
    }
  }
  out.recall_jsonl = recall::records_to_jsonl(records);
  out.recognition_jsonl = recognition::trials_to_jsonl(trials);
  out.recall_records = records.size();
  out.recognition_trials = trials.size();
  return out;
}

}  // namespace narrmem::service
