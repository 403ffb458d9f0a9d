#include "refgame/service.hpp"

#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "refgame/annotation.hpp"
#include "refgame/error.hpp"

namespace refgame {

namespace {

using json = nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

HttpReply ok(const json& j) { return {200, j.dump(), "application/json"}; }

HttpReply failure(const Error& e) { return {http_status(e.code()), error_body(e.code(), e.detail()), "application/json"}; }

template <typename F>
HttpReply guarded(F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    return failure(e);
  } catch (const nlohmann::json::exception& e) {
    return {400, error_body(ErrorCode::ParseError, e.what())};
  } catch (const std::exception& e) {
    return {400, error_body(ErrorCode::InvalidArgument, e.what())};
  }
}

nlohmann::json parse_body(const std::string& body) {
  auto j = nlohmann::json::parse(body.empty() ? std::string("{}") : body);
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "request body must be an object");
  return j;
}

std::vector<AnnotationRecord> dataset_records(const std::filesystem::path& dir) {
  std::vector<AnnotationRecord> all;
  for (const char* split : {"train", "val", "test"}) {
    const auto path = dir / (std::string(split) + ".jsonl");
    if (!std::filesystem::exists(path)) continue;
    auto part = load_annotations(path);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownTask:
      return 404;
    case ErrorCode::DuplicateAnswer:
    case ErrorCode::SessionClosed:
    case ErrorCode::IncompletePanels:
      return 409;
    case ErrorCode::IoError:
      return 500;
    default:
      return 400;
  }
}

std::string error_body(ErrorCode code, const std::string& message) {
  json j{{"error", {{"code", std::string(error_name(code))}, {"message", message}}}};
  return j.dump();
}

SessionService::SessionService(ServiceConfig config)
    : config_(std::move(config)),
      store_(config_.sessions.empty() ? config_.root / "sessions" : config_.sessions) {}

std::filesystem::path SessionService::resolve(const std::string& relative) const {
  if (relative.empty()) throw Error(ErrorCode::InvalidArgument, "empty path");
  const auto root = std::filesystem::weakly_canonical(config_.root);
  const auto full = std::filesystem::weakly_canonical(root / relative);
  const auto rel = full.lexically_relative(root);
  if (rel.empty() || *rel.begin() == "..") throw Error(ErrorCode::InvalidArgument, "path escapes the service root");
  return full;
}

std::string SessionService::image_url(const std::filesystem::path& dataset, const std::string& object_id) {
  const auto path = dataset / "images" / (object_id + ".png");
  const auto key = path.string();
  {
    std::lock_guard lock(images_mutex_);
    if (auto it = hash_of_.find(key); it != hash_of_.end()) return "/images/" + it->second + ".png";
  }
  const auto hash = fnv1a_hex(read_file(path));
  std::lock_guard lock(images_mutex_);
  hash_of_[key] = hash;
  images_[hash] = path;
  return "/images/" + hash + ".png";
}

std::string SessionService::view_json(const std::string& session_id, const TaskView& view) {
  const auto [request, tasks] = read_session_file(store_.directory(session_id));
  const auto dataset = resolve(request.dataset);
  json j{{"task_id", view.task_id},
         {"image_left_url", image_url(dataset, view.left_image)},
         {"image_right_url", image_url(dataset, view.right_image)},
         {"phrase", view.phrase},
         {"progress", {{"index", view.index}, {"total", view.total}}}};
  return j.dump();
}

HttpReply SessionService::create_session(const std::string& body) {
  return guarded([&] {
    const auto j = parse_body(body);
    SessionRequest request;
    request.dataset = j.at("dataset").get<std::string>();
    request.run = j.at("run").get<std::string>();
    request.n_tasks = j.at("n_tasks").get<std::size_t>();
    request.seed = j.at("seed").get<std::uint64_t>();
    request.panel_size = j.value("panel_size", std::size_t{3});
    request.phrases_per_pair = j.value("phrases_per_pair", std::size_t{1});
    const auto dataset = resolve(request.dataset);
    const auto run = resolve(request.run);
    auto tasks = sample_session_tasks(read_decoded(run / "decoded.jsonl"), dataset_records(dataset), request);
    const auto id = store_.create(request, std::move(tasks));
    return ok({{"session_id", id}});
  });
}

HttpReply SessionService::next_task(const std::string& session_id, const std::string& voter) {
  return guarded([&] {
    if (voter.empty()) throw Error(ErrorCode::InvalidArgument, "voter is required");
    const auto view = store_.next(session_id, voter);
    if (!view) {
      return ok({{"done", true}, {"status", store_.status(session_id) == SessionStatus::Complete ? "complete" : "open"}});
    }
    return HttpReply{200, view_json(session_id, *view)};
  });
}

HttpReply SessionService::submit_answer(const std::string& session_id, const std::string& body) {
  return guarded([&] {
    const auto j = parse_body(body);
    const auto task = j.at("task_id").get<std::string>();
    const auto voter = j.at("voter").get<std::string>();
    const auto choice = choice_from_string(j.at("choice").get<std::string>());
    const auto status = store_.submit(session_id, task, voter, choice);
    json reply{{"ok", true}, {"status", status == SessionStatus::Complete ? "complete" : "open"}};
    if (const auto view = store_.next(session_id, voter)) {
      reply["next"] = json::parse(view_json(session_id, *view));
    } else {
      reply["next"] = nullptr;
    }
    return ok(reply);
  });
}

HttpReply SessionService::summary(const std::string& session_id) {
  return guarded([&] { return HttpReply{200, summary_json(store_.summary(session_id))}; });
}

HttpReply SessionService::image(const std::string& name) const {
  std::filesystem::path path;
  {
    std::lock_guard lock(images_mutex_);
    const auto dot = name.rfind(".png");
    const auto it = images_.find(dot == std::string::npos ? name : name.substr(0, dot));
    if (it == images_.end()) return {404, error_body(ErrorCode::IoError, "unknown image " + name)};
    path = it->second;
  }
  return guarded([&] { return HttpReply{200, read_file(path), "image/png"}; });
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(SessionService& service) : impl_(std::make_unique<Impl>()) {
  auto& s = impl_->server;
  const auto send = [](httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  };
  s.Post("/api/sessions", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.create_session(req.body));
  });
  s.Get(R"(/api/sessions/([^/]+)/next)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.next_task(req.matches[1], req.get_param_value("voter")));
  });
  s.Post(R"(/api/sessions/([^/]+)/answers)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.submit_answer(req.matches[1], req.body));
  });
  s.Get(R"(/api/sessions/([^/]+)/summary)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.summary(req.matches[1]));
  });
  s.Get(R"(/images/([0-9a-f]+\.png))", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.image(req.matches[1]));
  });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace refgame
