#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "refgame/games.hpp"
#include "refgame/refgame_eval.hpp"

namespace refgame {

struct SessionRequest {
  std::string dataset;  // dataset directory
  std::string run;      // directory holding decoded.jsonl
  std::size_t n_tasks = 20;             // image pairs to sample
  std::size_t phrases_per_pair = 1;     // top-ranked phrases shown per pair
  std::uint64_t seed = 0;
  std::size_t panel_size = 3;
};

enum class SessionStatus { Open, Complete };

/// What a voter sees: never the target side or the swap bit.
struct TaskView {
  std::string task_id;
  std::string left_image;   // object id; the service turns it into a content URL
  std::string right_image;
  std::string phrase;
  std::size_t index = 0;    // 1-based: this voter's answers so far plus one
  std::size_t total = 0;
};

/// Samples `n_tasks` pairs from the decoded pool with a seeded shuffle, keeps
/// each pair's top `phrases_per_pair` phrases for one seeded target, draws a
/// presentation swap per task and shuffles the task order. Task ids are opaque.
/// Throws InsufficientTasks.
std::vector<GameTask> sample_session_tasks(const std::vector<DecodedPhrase>& decoded,
                                           const std::vector<AnnotationRecord>& records, const SessionRequest& request);

/// Answer log line: {"task_id", "voter", "choice", "swap", "timestamp"}.
std::string answer_json(const GameAnswer& answer, bool swap);
std::vector<GameAnswer> read_answer_log(const std::filesystem::path& path);

/// Session directory layout: session.json (request + tasks, server side only)
/// and answers.jsonl (append-only).
struct SessionFiles {
  static std::filesystem::path tasks(const std::filesystem::path& dir) { return dir / "session.json"; }
  static std::filesystem::path answers(const std::filesystem::path& dir) { return dir / "answers.jsonl"; }
};

void write_session_file(const std::filesystem::path& dir, const SessionRequest& request,
                        const std::vector<GameTask>& tasks);
std::pair<SessionRequest, std::vector<GameTask>> read_session_file(const std::filesystem::path& dir);

/// Summary recomputed from a session directory's files alone. Throws
/// IncompletePanels while any task lacks a full panel.
HumanSummary summarize_session_dir(const std::filesystem::path& dir);

/// Sessions persisted under `root/<id>/`. Safe for concurrent use; writes to a
/// session are serialized.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root);

  std::string create(const SessionRequest& request, std::vector<GameTask> tasks);

  /// Next task this voter has not answered and whose panel is not full.
  std::optional<TaskView> next(const std::string& session_id, const std::string& voter) const;

  /// Appends durably before returning. Throws UnknownSession, SessionClosed,
  /// UnknownTask or DuplicateAnswer.
  SessionStatus submit(const std::string& session_id, const std::string& task_id, const std::string& voter,
                       Choice choice);

  SessionStatus status(const std::string& session_id) const;
  HumanSummary summary(const std::string& session_id) const;
  std::filesystem::path directory(const std::string& session_id) const;
  std::size_t answered_by(const std::string& session_id, const std::string& voter) const;

 private:
  struct Session {
    SessionRequest request;
    std::vector<GameTask> tasks;
    std::map<std::string, std::size_t> task_index;
    std::vector<GameAnswer> answers;
    std::map<std::string, std::vector<std::string>> voters;  // task -> voters
    mutable std::mutex mutex;
    bool complete() const;
  };

  std::shared_ptr<Session> find(const std::string& session_id) const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace refgame
