#include "refgame/pragmatics.hpp"

#include <algorithm>
#include <cmath>

#include "refgame/error.hpp"

namespace refgame {

double combined_score(double p_speaker, double p_listener, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::InvalidArgument, "lambda must lie in [0, 1]");
  return std::pow(p_speaker, lambda) * std::pow(p_listener, 1.0 - lambda);
}

std::vector<RerankedPhrase> rerank(const std::vector<ScoredPhrase>& beam, const std::vector<double>& listener_probs,
                                   double lambda) {
  if (beam.empty()) throw Error(ErrorCode::EmptyBeam, "nothing to rerank");
  if (listener_probs.size() != beam.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one listener probability per beam entry");
  }
  std::vector<RerankedPhrase> out;
  out.reserve(beam.size());
  for (std::size_t i = 0; i < beam.size(); ++i) {
    RerankedPhrase r;
    r.phrase = beam[i];
    r.beam_index = i;
    r.p_speaker = std::exp(beam[i].log_prob);
    r.p_listener = listener_probs[i];
    r.p_combined = combined_score(r.p_speaker, r.p_listener, lambda);
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RerankedPhrase& a, const RerankedPhrase& b) { return a.p_combined > b.p_combined; });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].phrase.rank = static_cast<int>(i + 1);
  return out;
}

std::vector<RerankedPhrase> rerank(const std::vector<ScoredPhrase>& beam,
                                   const std::function<double(const ScoredPhrase&)>& listener_prob, double lambda) {
  std::vector<double> probs;
  probs.reserve(beam.size());
  for (const auto& s : beam) probs.push_back(listener_prob(s));
  return rerank(beam, probs, lambda);
}

double reranked_accuracy(const std::vector<RerankCase>& cases, double lambda, std::size_t k) {
  double correct = 0.0;
  double total = 0.0;
  for (const auto& c : cases) {
    if (c.judge_correct.size() != c.beam.size()) throw Error(ErrorCode::ShapeMismatch, "one judgement per beam entry");
    const auto ranked = rerank(c.beam, c.listener_probs, lambda);
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
      correct += c.judge_correct[ranked[i].beam_index] ? 1.0 : 0.0;
      total += 1.0;
    }
  }
  return total > 0.0 ? correct / total : 0.0;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

double select_lambda(const std::vector<RerankCase>& cases, const std::vector<double>& grid, std::size_t k) {
  if (grid.empty()) throw Error(ErrorCode::EmptyGrid, "lambda grid is empty");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  double best = sorted.front();
  double best_acc = -1.0;
  for (double lambda : sorted) {
    const double acc = reranked_accuracy(cases, lambda, k);
    if (acc > best_acc) {
      best_acc = acc;
      best = lambda;
    }
  }
  return best;
}

}  // namespace refgame
