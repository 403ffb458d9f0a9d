#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "refgame/error.hpp"
#include "refgame/session.hpp"

namespace refgame {

struct ServiceConfig {
  std::filesystem::path root = ".";  // dataset and run paths resolve under here
  std::filesystem::path sessions;    // defaults to root/sessions
};

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Request handling for the reference-game session API, independent of the
/// transport. Errors come back as {"error": {"code", "message"}}.
class SessionService {
 public:
  explicit SessionService(ServiceConfig config);

  HttpReply create_session(const std::string& body);
  HttpReply next_task(const std::string& session_id, const std::string& voter);
  HttpReply submit_answer(const std::string& session_id, const std::string& body);
  HttpReply summary(const std::string& session_id);
  HttpReply image(const std::string& name) const;

  SessionStore& store() { return store_; }

 private:
  std::filesystem::path resolve(const std::string& relative) const;
  std::string image_url(const std::filesystem::path& dataset, const std::string& object_id);
  std::string view_json(const std::string& session_id, const TaskView& view);

  ServiceConfig config_;
  SessionStore store_;
  mutable std::mutex images_mutex_;
  std::map<std::string, std::filesystem::path> images_;  // content hash -> file
  std::map<std::string, std::string> hash_of_;           // file -> content hash
};

int http_status(ErrorCode code);
std::string error_body(ErrorCode code, const std::string& message);

/// HTTP transport for SessionService. `bind` with port 0 picks a free port
/// and returns it; `run` blocks until `stop`.
class HttpServer {
 public:
  explicit HttpServer(SessionService& service);
  ~HttpServer();
  int bind(const std::string& host, int port);
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace refgame
