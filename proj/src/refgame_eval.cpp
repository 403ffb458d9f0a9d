#include "refgame/refgame_eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "refgame/error.hpp"

namespace refgame {

std::string to_string(Side side) { return side == Side::A ? "a" : "b"; }

std::string to_string(Choice choice) {
  switch (choice) {
    case Choice::Left: return "left";
    case Choice::Right: return "right";
    case Choice::Unsure: return "unsure";
  }
  return "unsure";
}

Side side_from_string(const std::string& s) {
  if (s == "a") return Side::A;
  if (s == "b") return Side::B;
  throw Error(ErrorCode::InvalidRecord, "side must be a or b, got " + s);
}

Choice choice_from_string(const std::string& s) {
  if (s == "left") return Choice::Left;
  if (s == "right") return Choice::Right;
  if (s == "unsure") return Choice::Unsure;
  throw Error(ErrorCode::InvalidRecord, "choice must be left, right or unsure, got " + s);
}

double target_probability(const GameTask& task, const PairListener& listener) {
  if (task.phrase.empty()) throw Error(ErrorCode::EmptyPhrase, "task " + task.task_id + " has no phrase");
  const ListenerScore s = listener(task.left_image(), task.right_image(), task.phrase);
  const double p_a = task.presentation_swap ? s.p_right : s.p_left;
  const double p_b = task.presentation_swap ? s.p_left : s.p_right;
  return task.target == Side::A ? p_a : p_b;
}

AccuracyCount rg_accuracy(const std::vector<GameTask>& tasks, const PairListener& listener, std::size_t k) {
  std::map<std::string, std::set<int>> ranks;
  for (const auto& t : tasks) ranks[t.pair_id].insert(t.rank);
  for (const auto& [pair, have] : ranks) {
    for (int r = 1; r <= static_cast<int>(k); ++r) {
      if (!have.count(r)) {
        throw Error(ErrorCode::MissingRanks, "pair " + pair + " has no phrase at rank " + std::to_string(r));
      }
    }
  }
  AccuracyCount acc;
  for (const auto& t : tasks) {
    if (t.rank < 1 || t.rank > static_cast<int>(k)) continue;
    acc.correct += counts_correct(target_probability(t, listener)) ? 1 : 0;
    ++acc.total;
  }
  return acc;
}

std::array<AccuracyCount, 5> position_accuracy(const std::vector<GameTask>& tasks, const PairListener& listener) {
  std::array<AccuracyCount, 5> out{};
  for (const auto& t : tasks) {
    if (t.position < 1 || t.position > 5) continue;
    auto& slot = out[static_cast<std::size_t>(t.position - 1)];
    slot.correct += counts_correct(target_probability(t, listener)) ? 1 : 0;
    ++slot.total;
  }
  return out;
}

Interval wilson_interval(std::size_t successes, std::size_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2.0 * nn)) / (1.0 + z2 / nn);
  const double half = z / (1.0 + z2 / nn) * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

Verdict panel_verdict(const GameTask& task, const std::vector<GameAnswer>& answers, std::size_t panel_size) {
  std::size_t votes_a = 0;
  std::size_t votes_b = 0;
  for (const auto& ans : answers) {
    if (ans.choice == Choice::Unsure) continue;
    const bool left = ans.choice == Choice::Left;
    const bool picked_a = task.presentation_swap ? !left : left;
    ++(picked_a ? votes_a : votes_b);
  }
  const std::size_t need = majority_threshold(panel_size);
  Side majority;
  if (votes_a >= need) {
    majority = Side::A;
  } else if (votes_b >= need) {
    majority = Side::B;
  } else {
    return Verdict::NoMajority;
  }
  return majority == task.target ? Verdict::MajorityCorrect : Verdict::MajorityWrong;
}

HumanSummary aggregate_human(const std::vector<GameTask>& tasks, const std::vector<GameAnswer>& answers,
                             std::size_t panel_size) {
  if (panel_size == 0 || panel_size % 2 == 0) throw Error(ErrorCode::InvalidArgument, "panel size must be odd");
  std::unordered_map<std::string, std::vector<GameAnswer>> by_task;
  for (const auto& a : answers) by_task[a.task_id].push_back(a);
  HumanSummary s;
  s.panel_size = panel_size;
  s.tasks = tasks.size();
  for (const auto& t : tasks) {
    const auto it = by_task.find(t.task_id);
    const std::size_t have = it == by_task.end() ? 0 : it->second.size();
    if (have != panel_size) {
      throw Error(ErrorCode::IncompletePanel, "task " + t.task_id + " has " + std::to_string(have) + " of " +
                                                  std::to_string(panel_size) + " answers");
    }
    switch (panel_verdict(t, it->second, panel_size)) {
      case Verdict::MajorityCorrect: ++s.majority_correct; break;
      case Verdict::MajorityWrong: ++s.majority_wrong; break;
      case Verdict::NoMajority: ++s.no_majority; break;
    }
  }
  if (s.tasks > 0) {
    const double n = static_cast<double>(s.tasks);
    s.majority_accuracy = 100.0 * static_cast<double>(s.majority_correct) / n;
    s.accuracy_with_guessing =
        100.0 * static_cast<double>(2 * s.majority_correct + s.no_majority) / (2.0 * n);
  }
  return s;
}

EvalReport evaluate_rg(const std::vector<GameTask>& tasks, const PairListener& listener,
                       const std::vector<std::size_t>& ks) {
  std::map<std::string, std::set<int>> ranks;
  for (const auto& t : tasks) ranks[t.pair_id].insert(t.rank);
  std::size_t available = std::numeric_limits<std::size_t>::max();
  for (const auto& [pair, have] : ranks) {
    std::size_t run = 0;
    while (have.count(static_cast<int>(run) + 1)) ++run;
    available = std::min(available, run);
  }
  if (ranks.empty()) available = 0;

  std::vector<double> p(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) p[i] = target_probability(tasks[i], listener);

  EvalReport report;
  std::size_t largest = 0;
  for (const std::size_t k : ks) {
    if (k == 0 || k > available) continue;
    largest = std::max(largest, k);
    AccuracyCount acc;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].rank < 1 || tasks[i].rank > static_cast<int>(k)) continue;
      acc.correct += counts_correct(p[i]) ? 1 : 0;
      ++acc.total;
    }
    report.top_k[k] = acc;
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    if (t.position >= 1 && t.position <= 5) {
      report.has_positions = true;
      auto& slot = report.by_position[static_cast<std::size_t>(t.position - 1)];
      slot.correct += counts_correct(p[i]) ? 1 : 0;
      ++slot.total;
    }
    if (largest == 0 || t.rank < 1 || t.rank > static_cast<int>(largest)) continue;
    if (p[i] == 0.5) {
      ++report.ties;
    } else if (counts_correct(p[i])) {
      ++report.correct;
    } else {
      ++report.wrong;
    }
  }
  return report;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["top_k"] = nlohmann::ordered_json::array();
  for (const auto& [k, acc] : report.top_k) {
    j["top_k"].push_back({{"k", k}, {"correct", acc.correct}, {"total", acc.total}, {"accuracy", acc.accuracy()}});
  }
  if (report.has_positions) {
    j["positions"] = nlohmann::ordered_json::array();
    for (std::size_t p = 0; p < 5; ++p) {
      const auto& acc = report.by_position[p];
      j["positions"].push_back(
          {{"position", p + 1}, {"correct", acc.correct}, {"total", acc.total}, {"accuracy", acc.accuracy()}});
    }
  }
  j["counts"] = {{"correct", report.correct}, {"wrong", report.wrong}, {"ties", report.ties}};
  return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  out << "top-k  accuracy  correct/total\n";
  for (const auto& [k, acc] : report.top_k) {
    out << std::setw(5) << k << "  " << std::setw(8) << 100.0 * acc.accuracy() << "  " << acc.correct << "/"
        << acc.total << "\n";
  }
  if (report.has_positions) {
    out << "position  accuracy\n";
    for (std::size_t p = 0; p < 5; ++p) {
      out << std::setw(8) << p + 1 << "  " << std::setw(8) << 100.0 * report.by_position[p].accuracy() << "\n";
    }
  }
  out << "correct " << report.correct << "  wrong " << report.wrong << "  ties " << report.ties << "\n";
  return out.str();
}

std::string summary_json(const HumanSummary& s) {
  nlohmann::ordered_json j{{"panel_size", s.panel_size},
                           {"tasks", s.tasks},
                           {"majority_correct", s.majority_correct},
                           {"majority_wrong", s.majority_wrong},
                           {"no_majority", s.no_majority},
                           {"majority_accuracy", s.majority_accuracy},
                           {"accuracy_with_guessing", s.accuracy_with_guessing}};
  return j.dump();
}

}  // namespace refgame
