#include "refgame/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "refgame/error.hpp"
#include "refgame/phrase.hpp"
#include "refgame/random.hpp"

namespace refgame {

namespace {

using json = nlohmann::ordered_json;

std::string opaque_task_id(std::size_t i) {
  std::ostringstream s;
  s << "t" << std::setw(4) << std::setfill('0') << i;
  return s.str();
}

bool valid_session_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; });
}

std::string new_session_id() {
  std::random_device rd;
  std::uniform_int_distribution<int> hex(0, 15);
  std::string id(16, '0');
  for (auto& c : id) c = "0123456789abcdef"[hex(rd)];
  return id;
}

void append_durably(const std::filesystem::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      ::close(fd);
      throw Error(ErrorCode::IoError, "write failed on " + path.string());
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  const int synced = ::fsync(fd);
  ::close(fd);
  if (synced != 0) throw Error(ErrorCode::IoError, "fsync failed on " + path.string());
}

json task_json(const GameTask& t) {
  return {{"task_id", t.task_id},         {"pair_id", t.pair_id}, {"image_a", t.image_a},
          {"image_b", t.image_b},         {"phrase", join_tokens(t.phrase)}, {"target", to_string(t.target)},
          {"presentation_swap", t.presentation_swap}, {"rank", t.rank}};
}

GameTask task_from_json(const nlohmann::json& j) {
  GameTask t;
  t.task_id = j.at("task_id").get<std::string>();
  t.pair_id = j.at("pair_id").get<std::string>();
  t.image_a = j.at("image_a").get<std::string>();
  t.image_b = j.at("image_b").get<std::string>();
  std::istringstream words(j.at("phrase").get<std::string>());
  for (std::string w; words >> w;) t.phrase.push_back(w);
  t.target = side_from_string(j.at("target").get<std::string>());
  t.presentation_swap = j.at("presentation_swap").get<bool>();
  t.rank = j.value("rank", 1);
  return t;
}

}  // namespace

std::vector<GameTask> sample_session_tasks(const std::vector<DecodedPhrase>& decoded,
                                           const std::vector<AnnotationRecord>& records, const SessionRequest& request) {
  if (request.panel_size == 0 || request.panel_size % 2 == 0) {
    throw Error(ErrorCode::InvalidArgument, "panel size must be odd");
  }
  if (request.n_tasks == 0 || request.phrases_per_pair == 0) {
    throw Error(ErrorCode::InvalidArgument, "n_tasks and phrases_per_pair must be positive");
  }
  std::map<std::string, std::map<Side, std::vector<DecodedPhrase>>> by_pair;
  for (const auto& d : decoded) {
    if (d.rank >= 1 && static_cast<std::size_t>(d.rank) <= request.phrases_per_pair) by_pair[d.pair_id][d.target].push_back(d);
  }
  std::vector<std::string> pairs;
  for (const auto& [pair, sides] : by_pair) {
    for (const auto& [side, phrases] : sides) {
      if (phrases.size() == request.phrases_per_pair) {
        pairs.push_back(pair);
        break;
      }
    }
  }
  if (pairs.size() < request.n_tasks) {
    throw Error(ErrorCode::InsufficientTasks, "asked for " + std::to_string(request.n_tasks) + " pairs, " +
                                                  std::to_string(pairs.size()) + " available");
  }
  auto rng = make_stream(request.seed, 41);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  pairs.resize(request.n_tasks);

  std::vector<DecodedPhrase> chosen;
  for (const auto& pair : pairs) {
    std::vector<Side> complete;
    for (const auto& [side, phrases] : by_pair[pair]) {
      if (phrases.size() == request.phrases_per_pair) complete.push_back(side);
    }
    const Side side = complete[std::uniform_int_distribution<std::size_t>(0, complete.size() - 1)(rng)];
    auto phrases = by_pair[pair][side];
    std::sort(phrases.begin(), phrases.end(), [](const auto& a, const auto& b) { return a.rank < b.rank; });
    chosen.insert(chosen.end(), phrases.begin(), phrases.end());
  }
  auto tasks = decoded_tasks(chosen, records);
  std::bernoulli_distribution coin(0.5);
  for (auto& t : tasks) t.presentation_swap = coin(rng);
  std::shuffle(tasks.begin(), tasks.end(), rng);
  for (std::size_t i = 0; i < tasks.size(); ++i) tasks[i].task_id = opaque_task_id(i + 1);
  return tasks;
}

std::string answer_json(const GameAnswer& a, bool swap) {
  json j{{"task_id", a.task_id}, {"voter", a.voter_id}, {"choice", to_string(a.choice)}, {"swap", swap},
         {"timestamp", a.timestamp}};
  return j.dump();
}

std::vector<GameAnswer> read_answer_log(const std::filesystem::path& path) {
  std::vector<GameAnswer> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("task_id").get<std::string>(), j.at("voter").get<std::string>(),
                     choice_from_string(j.at("choice").get<std::string>()), j.value("timestamp", std::int64_t{0})});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_session_file(const std::filesystem::path& dir, const SessionRequest& r, const std::vector<GameTask>& tasks) {
  std::filesystem::create_directories(dir);
  json j;
  j["request"] = {{"dataset", r.dataset},   {"run", r.run},   {"n_tasks", r.n_tasks},
                  {"phrases_per_pair", r.phrases_per_pair}, {"seed", r.seed}, {"panel_size", r.panel_size}};
  j["tasks"] = json::array();
  for (const auto& t : tasks) j["tasks"].push_back(task_json(t));
  std::ofstream out(SessionFiles::tasks(dir), std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write session file in " + dir.string());
  out << j.dump(2) << "\n";
}

std::pair<SessionRequest, std::vector<GameTask>> read_session_file(const std::filesystem::path& dir) {
  std::ifstream in(SessionFiles::tasks(dir));
  if (!in) throw Error(ErrorCode::UnknownSession, "no session in " + dir.string());
  try {
    const auto j = nlohmann::json::parse(in);
    const auto& r = j.at("request");
    SessionRequest req;
    req.dataset = r.at("dataset").get<std::string>();
    req.run = r.at("run").get<std::string>();
    req.n_tasks = r.at("n_tasks").get<std::size_t>();
    req.phrases_per_pair = r.at("phrases_per_pair").get<std::size_t>();
    req.seed = r.at("seed").get<std::uint64_t>();
    req.panel_size = r.at("panel_size").get<std::size_t>();
    std::vector<GameTask> tasks;
    for (const auto& t : j.at("tasks")) tasks.push_back(task_from_json(t));
    return {req, tasks};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, dir.string() + ": " + e.what());
  }
}

HumanSummary summarize_session_dir(const std::filesystem::path& dir) {
  const auto [request, tasks] = read_session_file(dir);
  const auto answers = read_answer_log(SessionFiles::answers(dir));
  std::map<std::string, std::size_t> counts;
  for (const auto& a : answers) ++counts[a.task_id];
  for (const auto& t : tasks) {
    if (counts[t.task_id] != request.panel_size) {
      throw Error(ErrorCode::IncompletePanels, "task " + t.task_id + " has " + std::to_string(counts[t.task_id]) +
                                                   " of " + std::to_string(request.panel_size) + " answers");
    }
  }
  return aggregate_human(tasks, answers, request.panel_size);
}

// ------------------------------------------------------------------ store

bool SessionStore::Session::complete() const {
  for (const auto& t : tasks) {
    auto it = voters.find(t.task_id);
    if (it == voters.end() || it->second.size() < request.panel_size) return false;
  }
  return true;
}

SessionStore::SessionStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path SessionStore::directory(const std::string& session_id) const { return root_ / session_id; }

std::string SessionStore::create(const SessionRequest& request, std::vector<GameTask> tasks) {
  if (tasks.empty()) throw Error(ErrorCode::InsufficientTasks, "session has no tasks");
  auto s = std::make_shared<Session>();
  s->request = request;
  s->tasks = std::move(tasks);
  for (std::size_t i = 0; i < s->tasks.size(); ++i) s->task_index[s->tasks[i].task_id] = i;

  std::lock_guard lock(mutex_);
  std::string id;
  do {
    id = new_session_id();
  } while (sessions_.count(id) || std::filesystem::exists(directory(id)));
  write_session_file(directory(id), s->request, s->tasks);
  sessions_[id] = std::move(s);
  return id;
}

std::shared_ptr<SessionStore::Session> SessionStore::find(const std::string& session_id) const {
  if (!valid_session_id(session_id)) throw Error(ErrorCode::UnknownSession, "no session " + session_id);
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it != sessions_.end()) return it->second;
  const auto dir = directory(session_id);
  if (!std::filesystem::exists(SessionFiles::tasks(dir))) throw Error(ErrorCode::UnknownSession, "no session " + session_id);
  auto s = std::make_shared<Session>();
  auto [request, tasks] = read_session_file(dir);
  s->request = std::move(request);
  s->tasks = std::move(tasks);
  for (std::size_t i = 0; i < s->tasks.size(); ++i) s->task_index[s->tasks[i].task_id] = i;
  s->answers = read_answer_log(SessionFiles::answers(dir));
  for (const auto& a : s->answers) s->voters[a.task_id].push_back(a.voter_id);
  sessions_[session_id] = s;
  return s;
}

std::optional<TaskView> SessionStore::next(const std::string& session_id, const std::string& voter) const {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  std::size_t done = 0;
  for (const auto& [task, who] : s->voters) done += std::count(who.begin(), who.end(), voter) > 0 ? 1 : 0;
  for (std::size_t i = 0; i < s->tasks.size(); ++i) {
    const auto& t = s->tasks[i];
    const auto it = s->voters.find(t.task_id);
    const std::vector<std::string> none;
    const auto& who = it == s->voters.end() ? none : it->second;
    if (who.size() >= s->request.panel_size) continue;
    if (std::find(who.begin(), who.end(), voter) != who.end()) continue;
    return TaskView{t.task_id, t.left_image(), t.right_image(), join_tokens(t.phrase), done + 1, s->tasks.size()};
  }
  return std::nullopt;
}

SessionStatus SessionStore::submit(const std::string& session_id, const std::string& task_id, const std::string& voter,
                                   Choice choice) {
  if (voter.empty()) throw Error(ErrorCode::InvalidArgument, "voter id is empty");
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  if (s->complete()) throw Error(ErrorCode::SessionClosed, "session " + session_id + " is complete");
  const auto it = s->task_index.find(task_id);
  if (it == s->task_index.end()) throw Error(ErrorCode::UnknownTask, "no task " + task_id);
  auto& who = s->voters[task_id];
  if (std::find(who.begin(), who.end(), voter) != who.end()) {
    throw Error(ErrorCode::DuplicateAnswer, voter + " already answered " + task_id);
  }
  if (who.size() >= s->request.panel_size) {
    throw Error(ErrorCode::DuplicateAnswer, "panel for " + task_id + " is already full");
  }
  const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  GameAnswer a{task_id, voter, choice, static_cast<std::int64_t>(now)};
  append_durably(SessionFiles::answers(directory(session_id)),
                 answer_json(a, s->tasks[it->second].presentation_swap) + "\n");
  s->answers.push_back(a);
  who.push_back(voter);
  return s->complete() ? SessionStatus::Complete : SessionStatus::Open;
}

SessionStatus SessionStore::status(const std::string& session_id) const {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  return s->complete() ? SessionStatus::Complete : SessionStatus::Open;
}

std::size_t SessionStore::answered_by(const std::string& session_id, const std::string& voter) const {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  return static_cast<std::size_t>(
      std::count_if(s->answers.begin(), s->answers.end(), [&](const GameAnswer& a) { return a.voter_id == voter; }));
}

HumanSummary SessionStore::summary(const std::string& session_id) const {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  if (!s->complete()) throw Error(ErrorCode::IncompletePanels, "session " + session_id + " still has open panels");
  return aggregate_human(s->tasks, s->answers, s->request.panel_size);
}

}  // namespace refgame
