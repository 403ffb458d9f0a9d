#include <doctest.h>

#include <cmath>

#include "refgame/error.hpp"
#include "refgame/refgame_eval.hpp"

using namespace refgame;

namespace {

GameTask task(const std::string& id, Side target, bool swap = false, int rank = 1, const std::string& pair = "p") {
  GameTask t;
  t.task_id = id;
  t.pair_id = pair;
  t.image_a = pair + "_a";
  t.image_b = pair + "_b";
  t.phrase = {"word"};
  t.target = target;
  t.presentation_swap = swap;
  t.rank = rank;
  return t;
}

std::vector<GameAnswer> votes(const std::string& id, std::initializer_list<Choice> choices) {
  std::vector<GameAnswer> out;
  int v = 0;
  for (const auto c : choices) out.push_back({id, "v" + std::to_string(v++), c, 0});
  return out;
}

// Prefers the image whose id ends in "_a" with fixed strength.
ListenerScore prefers_a(const std::string& left, const std::string&, const std::vector<std::string>&) {
  const bool left_is_a = left.back() == 'a';
  return left_is_a ? ListenerScore{0.8, 0.2} : ListenerScore{0.2, 0.8};
}

}  // namespace

TEST_SUITE("refgame-eval") {
  TEST_CASE("panel verdicts") {
    const auto t = task("t1", Side::A);
    using C = Choice;
    CHECK(panel_verdict(t, votes("t1", {C::Left, C::Left, C::Right}), 3) == Verdict::MajorityCorrect);
    CHECK(panel_verdict(t, votes("t1", {C::Right, C::Right, C::Left}), 3) == Verdict::MajorityWrong);
    CHECK(panel_verdict(t, votes("t1", {C::Left, C::Unsure, C::Unsure}), 3) == Verdict::NoMajority);
    CHECK(panel_verdict(t, votes("t1", {C::Left, C::Right, C::Unsure}), 3) == Verdict::NoMajority);
    CHECK(majority_threshold(3) == 2);
    CHECK(majority_threshold(5) == 3);
  }

  TEST_CASE("votes are read through the presentation swap") {
    const auto swapped = task("t1", Side::A, true);
    using C = Choice;
    CHECK(panel_verdict(swapped, votes("t1", {C::Right, C::Right, C::Left}), 3) == Verdict::MajorityCorrect);
    CHECK(panel_verdict(swapped, votes("t1", {C::Left, C::Left, C::Right}), 3) == Verdict::MajorityWrong);
  }

  TEST_CASE("68 percent majority and 18 percent undecided give 77 with guessing") {
    std::vector<GameTask> tasks;
    std::vector<GameAnswer> answers;
    using C = Choice;
    for (int i = 0; i < 100; ++i) {
      const std::string id = "t" + std::to_string(i);
      tasks.push_back(task(id, Side::A));
      std::vector<GameAnswer> v;
      if (i < 68) {
        v = votes(id, {C::Left, C::Left, C::Right});
      } else if (i < 82) {
        v = votes(id, {C::Right, C::Unsure, C::Right});
      } else {
        v = votes(id, {C::Left, C::Unsure, C::Right});
      }
      answers.insert(answers.end(), v.begin(), v.end());
    }
    const auto s = aggregate_human(tasks, answers, 3);
    CHECK(s.majority_correct == 68);
    CHECK(s.majority_wrong == 14);
    CHECK(s.no_majority == 18);
    CHECK(s.majority_accuracy == doctest::Approx(68.0).epsilon(1e-12));
    CHECK(s.accuracy_with_guessing == doctest::Approx(77.0).epsilon(1e-12));
    CHECK(accuracy_with_guessing(68.0, 18.0) == 77.0);
  }

  TEST_CASE("all unsure gives zero majority accuracy and chance with guessing") {
    std::vector<GameTask> tasks;
    std::vector<GameAnswer> answers;
    for (int i = 0; i < 4; ++i) {
      const std::string id = "t" + std::to_string(i);
      tasks.push_back(task(id, i % 2 ? Side::A : Side::B));
      const auto v = votes(id, {Choice::Unsure, Choice::Unsure, Choice::Unsure});
      answers.insert(answers.end(), v.begin(), v.end());
    }
    const auto s = aggregate_human(tasks, answers, 3);
    CHECK(s.majority_accuracy == 0.0);
    CHECK(s.accuracy_with_guessing == 50.0);
  }

  TEST_CASE("panels must be complete and odd") {
    const std::vector<GameTask> tasks = {task("t1", Side::A)};
    try {
      aggregate_human(tasks, votes("t1", {Choice::Left, Choice::Left}), 3);
      FAIL("expected IncompletePanel");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IncompletePanel);
    }
    CHECK_THROWS_AS(aggregate_human(tasks, votes("t1", {Choice::Left, Choice::Left}), 2), Error);
  }

  TEST_CASE("target probability undoes the swap") {
    const auto plain = task("t", Side::A, false);
    const auto swapped = task("t", Side::A, true);
    CHECK(target_probability(plain, prefers_a) == 0.8);
    CHECK(target_probability(swapped, prefers_a) == 0.8);
    CHECK(target_probability(task("t", Side::B, true), prefers_a) == 0.2);
  }

  TEST_CASE("a probability of exactly one half is a miss") {
    CHECK_FALSE(counts_correct(0.5));
    CHECK(counts_correct(std::nextafter(0.5, 1.0)));
    const PairListener coin = [](const std::string&, const std::string&, const std::vector<std::string>&) {
      return ListenerScore{0.5, 0.5};
    };
    const auto acc = rg_accuracy({task("t", Side::A)}, coin, 1);
    CHECK(acc.correct == 0);
    CHECK(acc.total == 1);
    const auto report = evaluate_rg({task("t", Side::A)}, coin, {1});
    CHECK(report.ties == 1);
    CHECK(report.wrong == 0);
  }

  TEST_CASE("top-k accuracy counts each pair's first k ranks") {
    std::vector<GameTask> tasks;
    for (int r = 1; r <= 5; ++r) {
      tasks.push_back(task("a" + std::to_string(r), r <= 2 ? Side::A : Side::B, r % 2 == 0, r, "p1"));
      tasks.push_back(task("b" + std::to_string(r), Side::A, false, r, "p2"));
    }
    CHECK(rg_accuracy(tasks, prefers_a, 1).accuracy() == 1.0);
    const auto top5 = rg_accuracy(tasks, prefers_a, 5);
    CHECK(top5.total == 10);
    CHECK(top5.correct == 7);
    try {
      rg_accuracy(tasks, prefers_a, 10);
      FAIL("expected MissingRanks");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingRanks);
    }
    const auto report = evaluate_rg(tasks, prefers_a);
    CHECK(report.top_k.count(1) == 1);
    CHECK(report.top_k.count(5) == 1);
    CHECK(report.top_k.count(10) == 0);
    CHECK(report.correct == 7);
    CHECK(report.wrong == 3);
  }

  TEST_CASE("position accuracy buckets annotation positions") {
    std::vector<GameTask> tasks;
    for (int p = 1; p <= 5; ++p) {
      auto t = task("t" + std::to_string(p), p == 3 ? Side::B : Side::A);
      t.position = p;
      tasks.push_back(t);
    }
    const auto pos = position_accuracy(tasks, prefers_a);
    for (int p = 0; p < 5; ++p) CHECK(pos[static_cast<std::size_t>(p)].total == 1);
    CHECK(pos[2].correct == 0);
    CHECK(pos[0].correct == 1);
    CHECK(evaluate_rg(tasks, prefers_a, {1}).has_positions);
  }

  TEST_CASE("Wilson interval") {
    const auto i = wilson_interval(8, 10);
    CHECK(i.low == doctest::Approx(0.4902).epsilon(1e-4));
    CHECK(i.high == doctest::Approx(0.9433).epsilon(1e-4));
    const auto zero = wilson_interval(0, 20);
    CHECK(zero.low == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(zero.high == doctest::Approx(0.1611).epsilon(1e-3));
    const auto narrow = wilson_interval(800, 1000);
    CHECK(narrow.width() < i.width());
    CHECK(narrow.low < 0.8);
    CHECK(narrow.high > 0.8);
  }

  TEST_CASE("report serializers") {
    std::vector<GameTask> tasks = {task("t1", Side::A)};
    const auto report = evaluate_rg(tasks, prefers_a, {1});
    const auto json = report_json(report);
    CHECK(json.find("\"top_k\"") != std::string::npos);
    CHECK(report_json(report) == json);
    CHECK_FALSE(report_table(report).empty());
    HumanSummary s;
    s.tasks = 2;
    CHECK(summary_json(s).find("accuracy_with_guessing") != std::string::npos);
  }

  TEST_CASE("enum round trips") {
    CHECK(choice_from_string(to_string(Choice::Unsure)) == Choice::Unsure);
    CHECK(side_from_string(to_string(Side::B)) == Side::B);
    CHECK_THROWS_AS(choice_from_string("maybe"), Error);
  }
}
