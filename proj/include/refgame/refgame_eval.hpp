#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "refgame/listener.hpp"

namespace refgame {

enum class Side { A, B };
enum class Choice { Left, Right, Unsure };

std::string to_string(Side side);
std::string to_string(Choice choice);
Side side_from_string(const std::string& s);
Choice choice_from_string(const std::string& s);

/// One trial. With `presentation_swap` set the pair is shown as (b, a).
struct GameTask {
  std::string task_id;
  std::string pair_id;
  std::string image_a;
  std::string image_b;
  std::vector<std::string> phrase;  // may hold "P1 vs P2"
  Side target = Side::A;
  bool presentation_swap = false;
  int rank = 1;      // rank of the phrase in its speaker's output
  int position = 0;  // annotation position 1..5, 0 when not from an annotation

  const std::string& left_image() const { return presentation_swap ? image_b : image_a; }
  const std::string& right_image() const { return presentation_swap ? image_a : image_b; }
};

struct GameAnswer {
  std::string task_id;
  std::string voter_id;
  Choice choice = Choice::Unsure;
  std::int64_t timestamp = 0;
};

/// Scores a phrase against the pair as presented (left image, right image).
using PairListener = std::function<ListenerScore(const std::string& left_image, const std::string& right_image,
                                                 const std::vector<std::string>& phrase)>;

/// Probability the listener assigns to the true target, after undoing the
/// presentation swap.
double target_probability(const GameTask& task, const PairListener& listener);

/// Strictly greater than one half; an exact tie is a miss.
inline bool counts_correct(double p_target) { return p_target > 0.5; }

struct AccuracyCount {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// Mean over every pair's ranks 1..k. Throws MissingRanks if a pair lacks one.
AccuracyCount rg_accuracy(const std::vector<GameTask>& tasks, const PairListener& listener, std::size_t k);

/// Accuracy restricted to each annotation position 1..5.
std::array<AccuracyCount, 5> position_accuracy(const std::vector<GameTask>& tasks, const PairListener& listener);

struct Interval {
  double low = 0.0;
  double high = 0.0;
  double width() const { return high - low; }
};

/// Wilson score interval (95% by default).
Interval wilson_interval(std::size_t successes, std::size_t n, double z = 1.959963984540054);

enum class Verdict { MajorityCorrect, MajorityWrong, NoMajority };

struct HumanSummary {
  std::size_t panel_size = 3;
  std::size_t tasks = 0;
  std::size_t majority_correct = 0;
  std::size_t majority_wrong = 0;
  std::size_t no_majority = 0;
  double majority_accuracy = 0.0;       // percent
  double accuracy_with_guessing = 0.0;  // percent, no-majority tasks count half
};

/// Votes needed for a majority in a panel of `panel_size`.
inline std::size_t majority_threshold(std::size_t panel_size) { return panel_size / 2 + 1; }

/// Unsure votes never count toward a majority.
Verdict panel_verdict(const GameTask& task, const std::vector<GameAnswer>& answers, std::size_t panel_size);

/// Throws IncompletePanel when a task does not have exactly `panel_size` answers.
HumanSummary aggregate_human(const std::vector<GameTask>& tasks, const std::vector<GameAnswer>& answers,
                             std::size_t panel_size = 3);

/// Majority accuracy plus half the no-majority share, both in percent.
inline double accuracy_with_guessing(double majority_pct, double no_majority_pct) {
  return majority_pct + no_majority_pct / 2.0;
}

struct EvalReport {
  std::map<std::size_t, AccuracyCount> top_k;
  std::array<AccuracyCount, 5> by_position{};
  bool has_positions = false;
  std::size_t correct = 0;  // tasks resolved right at the largest k
  std::size_t wrong = 0;
  std::size_t ties = 0;     // p exactly one half
};

/// Top-k accuracy for each k in `ks` that every pair can supply, plus
/// per-position accuracy when tasks carry annotation positions.
EvalReport evaluate_rg(const std::vector<GameTask>& tasks, const PairListener& listener,
                       const std::vector<std::size_t>& ks = {1, 5, 10});

std::string report_json(const EvalReport& report);
std::string report_table(const EvalReport& report);
std::string summary_json(const HumanSummary& summary);

}  // namespace refgame
