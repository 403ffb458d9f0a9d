#include <doctest.h>

#include <fstream>
#include <iterator>
#include <set>
#include <thread>

#include "helpers.hpp"
#include "refgame/error.hpp"
#include "refgame/games.hpp"
#include "refgame/service.hpp"
#include "refgame/session.hpp"

#include <httplib.h>
#include <json.hpp>
#include <sys/wait.h>

using namespace refgame;
using json = nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Dataset under root/data and a decoded run under root/run, built from the
// annotations themselves so every pair has two ranked phrases per side.
struct Fixture {
  testing::TempDir root;
  std::vector<AnnotationRecord> records;
  std::vector<DecodedPhrase> decoded;

  Fixture() {
    const synth::World world(synth::WorldSpec::default_spec());
    const auto ds = world.generate_dataset({20, 6, 12});
    synth::WriteOptions opts;
    opts.image_size = 64;
    synth::write_dataset(root / "data", world, ds, opts);
    records = ds.split("test").records;
    for (const auto& r : records) {
      for (const Side side : {Side::A, Side::B}) {
        for (int rank = 1; rank <= 2; ++rank) {
          const auto& pp = r.phrase_pairs[static_cast<std::size_t>(rank - 1)];
          DecodedPhrase d;
          d.pair_id = r.pair_id;
          d.target = side;
          d.rank = rank;
          d.tokens = side == Side::A ? pp.left.tokens : pp.right.tokens;
          d.log_prob = -static_cast<double>(rank);
          decoded.push_back(d);
        }
      }
    }
    std::filesystem::create_directories(root / "run");
    write_decoded(root / "run/decoded.jsonl", decoded);
  }

  SessionRequest request(std::size_t n = 4, std::uint64_t seed = 7) const {
    SessionRequest r;
    r.dataset = "data";
    r.run = "run";
    r.n_tasks = n;
    r.seed = seed;
    return r;
  }
};

void expect_code(ErrorCode code, const std::function<void()>& f) {
  try {
    f();
    FAIL("expected " << error_name(code));
  } catch (const Error& e) {
    CHECK(e.code() == code);
  }
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(REFGAME_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("harness-io") {
  TEST_CASE("decoded phrase files round trip") {
    Fixture f;
    const auto back = read_decoded(f.root / "run/decoded.jsonl");
    REQUIRE(back.size() == f.decoded.size());
    CHECK(back[3].tokens == f.decoded[3].tokens);
    CHECK(back[3].target == f.decoded[3].target);
    CHECK(decoded_jsonl(back) == decoded_jsonl(f.decoded));
  }

  TEST_CASE("session sampling is deterministic and shows whole pairs") {
    Fixture f;
    auto req = f.request(5, 3);
    req.phrases_per_pair = 2;
    const auto a = sample_session_tasks(f.decoded, f.records, req);
    const auto b = sample_session_tasks(f.decoded, f.records, req);
    REQUIRE(a.size() == 10);
    std::set<std::string> pairs;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].task_id == b[i].task_id);
      CHECK(a[i].pair_id == b[i].pair_id);
      CHECK(a[i].presentation_swap == b[i].presentation_swap);
      CHECK(a[i].task_id.find(a[i].pair_id) == std::string::npos);
      pairs.insert(a[i].pair_id);
      ids.insert(a[i].task_id);
    }
    CHECK(pairs.size() == 5);
    CHECK(ids.size() == 10);

    auto other = req;
    other.seed = 4;
    const auto c = sample_session_tasks(f.decoded, f.records, other);
    bool differs = false;
    for (std::size_t i = 0; i < c.size(); ++i) differs |= c[i].pair_id != a[i].pair_id;
    CHECK(differs);
  }

  TEST_CASE("too few pairs for the request") {
    Fixture f;
    expect_code(ErrorCode::InsufficientTasks, [&] { sample_session_tasks(f.decoded, f.records, f.request(13)); });
    auto req = f.request(2);
    req.phrases_per_pair = 3;
    expect_code(ErrorCode::InsufficientTasks, [&] { sample_session_tasks(f.decoded, f.records, req); });
    req = f.request(2);
    req.panel_size = 2;
    CHECK_THROWS_AS(sample_session_tasks(f.decoded, f.records, req), Error);
  }

  TEST_CASE("store persists raw choices with the swap bit and refuses bad answers") {
    Fixture f;
    SessionStore store(f.root / "sessions");
    const auto tasks = sample_session_tasks(f.decoded, f.records, f.request(2));
    const auto id = store.create(f.request(2), tasks);

    const auto view = store.next(id, "alice");
    REQUIRE(view.has_value());
    CHECK(view->index == 1);
    CHECK(view->total == 2);
    store.submit(id, view->task_id, "alice", Choice::Left);
    CHECK(store.answered_by(id, "alice") == 1);
    CHECK(store.next(id, "alice")->index == 2);
    CHECK(store.next(id, "alice")->task_id != view->task_id);

    const auto log = slurp(SessionFiles::answers(store.directory(id)));
    const auto line = json::parse(log.substr(0, log.find('\n')));
    CHECK(line["task_id"] == view->task_id);
    CHECK(line["voter"] == "alice");
    CHECK(line["choice"] == "left");
    const auto stored = read_session_file(store.directory(id)).second;
    const auto it = std::find_if(stored.begin(), stored.end(), [&](const GameTask& t) { return t.task_id == view->task_id; });
    REQUIRE(it != stored.end());
    CHECK(line["swap"] == it->presentation_swap);

    expect_code(ErrorCode::DuplicateAnswer, [&] { store.submit(id, view->task_id, "alice", Choice::Right); });
    expect_code(ErrorCode::UnknownTask, [&] { store.submit(id, "t9999", "bob", Choice::Left); });
    expect_code(ErrorCode::UnknownSession, [&] { store.submit("abcdef", view->task_id, "bob", Choice::Left); });
    expect_code(ErrorCode::IncompletePanels, [&] { store.summary(id); });
  }

  TEST_CASE("a full session closes and its summary matches the files") {
    Fixture f;
    SessionStore store(f.root / "sessions");
    const auto tasks = sample_session_tasks(f.decoded, f.records, f.request(3));
    const auto id = store.create(f.request(3), tasks);
    std::string last_task;
    const Choice pattern[] = {Choice::Left, Choice::Right, Choice::Unsure};
    int v = 0;
    for (const char* voter : {"v1", "v2", "v3"}) {
      while (auto view = store.next(id, voter)) {
        CHECK(store.status(id) == SessionStatus::Open);
        store.submit(id, view->task_id, voter, pattern[v++ % 3]);
        last_task = view->task_id;
      }
    }
    CHECK(store.status(id) == SessionStatus::Complete);
    CHECK_FALSE(store.next(id, "v4").has_value());
    expect_code(ErrorCode::SessionClosed, [&] { store.submit(id, last_task, "v4", Choice::Left); });

    const auto live = store.summary(id);
    const auto from_files = summarize_session_dir(store.directory(id));
    CHECK(summary_json(live) == summary_json(from_files));
    CHECK(live.tasks == 3);

    SessionStore reopened(f.root / "sessions");
    CHECK(reopened.status(id) == SessionStatus::Complete);
    CHECK(summary_json(reopened.summary(id)) == summary_json(live));
  }

  TEST_CASE("HTTP status mapping") {
    CHECK(http_status(ErrorCode::UnknownSession) == 404);
    CHECK(http_status(ErrorCode::UnknownTask) == 404);
    CHECK(http_status(ErrorCode::DuplicateAnswer) == 409);
    CHECK(http_status(ErrorCode::SessionClosed) == 409);
    CHECK(http_status(ErrorCode::IoError) == 500);
    CHECK(http_status(ErrorCode::InsufficientTasks) == 400);
    const auto body = json::parse(error_body(ErrorCode::UnknownTask, "nope"));
    CHECK(body["error"]["code"] == "UnknownTask");
    CHECK(body["error"]["message"] == "nope");
  }

  TEST_CASE("session API over HTTP never leaks the target") {
    Fixture f;
    SessionService service({f.root.path(), f.root / "sessions"});
    HttpServer server(service);
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread thread([&] { server.run(); });
    httplib::Client client("127.0.0.1", port);

    auto res = client.Post("/api/sessions", R"({"dataset":"data","run":"run","n_tasks":2,"seed":5})",
                           "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    const std::string id = json::parse(res->body)["session_id"];

    res = client.Get("/api/sessions/" + id + "/next?voter=ann");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto view = json::parse(res->body);
    std::set<std::string> keys;
    for (const auto& [k, _] : view.items()) keys.insert(k);
    CHECK(keys == std::set<std::string>{"task_id", "image_left_url", "image_right_url", "phrase", "progress"});
    for (const auto& r : f.records) {
      CHECK(res->body.find(r.pair_id) == std::string::npos);
      CHECK(res->body.find(r.image_a) == std::string::npos);
    }
    CHECK(view["progress"]["index"] == 1);
    CHECK(view["progress"]["total"] == 2);

    const std::string url = view["image_left_url"];
    auto img = client.Get(url);
    REQUIRE(img);
    CHECK(img->status == 200);
    CHECK(img->get_header_value("Content-Type") == "image/png");
    CHECK(img->body.substr(1, 3) == "PNG");

    const json answer{{"task_id", view["task_id"]}, {"voter", "ann"}, {"choice", "right"}};
    res = client.Post("/api/sessions/" + id + "/answers", answer.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto reply = json::parse(res->body);
    CHECK(reply["ok"] == true);
    CHECK(reply["status"] == "open");
    CHECK(reply["next"]["progress"]["index"] == 2);
    CHECK(reply.dump().find("swap") == std::string::npos);

    res = client.Post("/api/sessions/" + id + "/answers", answer.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 409);
    CHECK(json::parse(res->body)["error"]["code"] == "DuplicateAnswer");

    res = client.Get("/api/sessions/" + id + "/summary");
    REQUIRE(res);
    CHECK(res->status == 409);
    res = client.Get("/api/sessions/0123456789abcdef/next?voter=x");
    REQUIRE(res);
    CHECK(res->status == 404);
    res = client.Post("/api/sessions", R"({"dataset":"../../etc","run":"run","n_tasks":2,"seed":5})",
                      "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    res = client.Post("/api/sessions", "{not json", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["error"]["code"] == "ParseError");

    server.stop();
    thread.join();
  }

  TEST_CASE("command line exit codes and deterministic generation") {
    testing::TempDir dir;
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("eval-rg --data " + (dir / "missing").string() + " --out " + (dir / "x").string()) == 1);
    const std::string gen = " synth-gen --train 20 --val 6 --test 6 --image-size 64 --seed 3 --out ";
    REQUIRE(run_cli(gen + (dir / "a").string()) == 0);
    REQUIRE(run_cli(gen + (dir / "b").string()) == 0);
    for (const char* file : {"train.jsonl", "test.jsonl", "features.apfv", "manifest.json", "config.json"}) {
      CAPTURE(file);
      CHECK(slurp(dir / "a" / file) == slurp(dir / "b" / file));
    }
  }
}
