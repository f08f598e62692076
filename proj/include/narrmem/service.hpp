#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "narrmem/corpus.hpp"
#include "narrmem/llm.hpp"

namespace narrmem::service {

enum class Task { recall, recognition };
enum class SessionState { created, consented, presenting, testing, completed };

std::string to_string(Task t);
Task task_from_string(const std::string& s);
std::string to_string(SessionState s);

inline constexpr const char* kRecallInstructions =
    "This is a recall task. You will be shown a small narrative in the form of rolling text and "
    "then you will be prompted to write it down as you remember it. Try to include as many details "
    "as possible.";
inline constexpr const char* kRecognitionInstructions =
    "This is a recognition task. You will be shown a small narrative in the form of rolling text "
    "and then you will be shown different clauses, one at a time and your task will be to choose "
    "whether it was shown in the text or not according to your memory.";
inline constexpr const char* kRecallPrompt = "Please recall the story";
inline constexpr const char* kProbeQuestion = "Was the following clause presented in the story?";

inline constexpr int kCountdownSeconds = 3;
inline constexpr int kMarqueeSpeedPxPerSecond = 250;

struct ProbeAnswer {
  bool response_yes = false;
  std::string timestamp;
  friend bool operator==(const ProbeAnswer&, const ProbeAnswer&) = default;
};

struct Session {
  std::string session_id;
  std::string participant_id;
  std::string narrative_id;
  Task task = Task::recall;
  SessionState state = SessionState::created;
  std::optional<ProbeSet> probe_set;  // recognition sessions from testing on
  std::string created_at;
  std::string completed_at;
  std::string presentation_started_at;
  std::string presentation_finished_at;
  bool fast_presentation = false;  // finished sooner than 0.9 x the nominal reading time
  std::optional<std::string> recall_text;
  std::string recall_token;
  int probes_served = 0;
  std::vector<ProbeAnswer> answers;  // by position - 1
  std::uint64_t events = 0;          // events applied to this session

  friend bool operator==(const Session&, const Session&) = default;
};

struct EventRecord {
  std::uint64_t seq = 0;          // global, 1-based
  std::uint64_t session_seq = 0;  // per session, 1-based
  std::string session_id;
  std::string kind;
  std::string payload;  // JSON object
  std::string timestamp;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

std::string event_to_json(const EventRecord& e);
EventRecord event_from_json(const std::string& line);

// Folds events into session states. Throws DataError on an event that is not
// a legal transition, so a corrupted log is noticed rather than half-applied.
class SessionStore {
 public:
  void apply(const EventRecord& e);
  const std::map<std::string, Session>& sessions() const { return sessions_; }

 private:
  std::map<std::string, Session> sessions_;
};

std::map<std::string, Session> replay(const std::vector<EventRecord>& events);
std::vector<EventRecord> read_event_log(const std::filesystem::path& path);

struct SessionView {
  Session session;
  std::string instructions;
};

struct Stimulus {
  std::string prose;
  int char_count = 0;
  int countdown_s = kCountdownSeconds;
  int marquee_speed_px_s = kMarqueeSpeedPxPerSecond;
  std::string font_color = "black";
  std::string background_color = "white";
};

struct ProbeView {
  int position = 0;
  std::string text;
  std::string question = kProbeQuestion;
};

struct ExportFilter {
  std::optional<std::string> narrative_id;
  std::optional<std::string> participant_id;
  std::optional<Task> task;
};

struct ExportResult {
  std::string recall_jsonl;
  std::string recognition_jsonl;
  std::size_t recall_records = 0;
  std::size_t recognition_trials = 0;
};

struct ServiceOptions {
  std::optional<std::filesystem::path> event_log;  // none: memory only
  std::uint64_t master_seed = 0;
  Clock clock = [] { return std::chrono::system_clock::now(); };
};

// The experiment protocol. Every state change is an event appended to the log
// before it is applied; a new instance over the same log replays it.
// Operations on one session are serialized; different sessions run freely.
class ExperimentService {
 public:
  ExperimentService(Corpus corpus, ServiceOptions options = {});
  ~ExperimentService();
  ExperimentService(const ExperimentService&) = delete;
  ExperimentService& operator=(const ExperimentService&) = delete;

  SessionView create_session(const std::string& participant_id, const std::string& narrative_id,
                             Task task);
  SessionView get_session(const std::string& session_id) const;
  Session consent(const std::string& session_id);
  Stimulus get_stimulus(const std::string& session_id);
  // `client_info` is an optional JSON object recorded verbatim (e.g. client
  // timing, tab visibility).
  Session presentation_finished(const std::string& session_id, const std::string& client_info = "{}");
  // Returns the completion token; identical resubmission returns it again.
  std::string submit_recall(const std::string& session_id, const std::string& text);
  // nullopt once all probes are answered.
  std::optional<ProbeView> next_probe(const std::string& session_id);
  // The served but unanswered probe, if any (for resuming a client).
  std::optional<ProbeView> current_probe(const std::string& session_id) const;
  Session answer_probe(const std::string& session_id, int position, bool response_yes);

  // Completed sessions only, ordered by (narrative, participant, timestamp).
  ExportResult export_dataset(const ExportFilter& filter = {}) const;

  std::vector<Session> sessions() const;
  std::vector<EventRecord> events() const;
  const Corpus& corpus() const { return corpus_; }

 private:
  struct Slot;
  Slot& slot(const std::string& session_id) const;
  // Appends the event to the log, then applies it. Caller holds s.m.
  void commit(Slot& s, const std::string& session_id, const std::string& kind,
              const std::string& payload,
              std::optional<std::chrono::system_clock::time_point> at = std::nullopt);
  std::uint64_t session_seed(const std::string& session_id) const;

  Corpus corpus_;
  ServiceOptions options_;
  mutable std::mutex index_mutex_;  // guards slots_ and id generation
  std::map<std::string, std::unique_ptr<Slot>> slots_;
  std::uint64_t next_id_ = 0;
  mutable std::mutex log_mutex_;  // single writer for the log and seq
  std::vector<EventRecord> log_;
  std::uint64_t seq_ = 0;
};

}  // namespace narrmem::service
