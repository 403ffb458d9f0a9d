#pragma once

#include <functional>
#include <string>
#include <vector>

#include "refgame/speaker.hpp"

namespace refgame {

/// p = p_s^lambda * p_l^(1 - lambda)
double combined_score(double p_speaker, double p_listener, double lambda);

struct RerankedPhrase {
  ScoredPhrase phrase;        // rank is the new 1-based position
  std::size_t beam_index = 0;
  double p_speaker = 0.0;     // exp(log_prob), not renormalized over the beam
  double p_listener = 0.0;    // listener probability of the target image
  double p_combined = 0.0;
};

/// Stable descending sort by the combined score; ties keep beam order.
/// `listener_probs[i]` belongs to `beam[i]`. Throws EmptyBeam.
std::vector<RerankedPhrase> rerank(const std::vector<ScoredPhrase>& beam, const std::vector<double>& listener_probs,
                                   double lambda);
std::vector<RerankedPhrase> rerank(const std::vector<ScoredPhrase>& beam,
                                   const std::function<double(const ScoredPhrase&)>& listener_prob, double lambda);

/// One validation pair: its beam, the reranking listener's probabilities and
/// whether the judge resolves each beam entry to the right image.
struct RerankCase {
  std::vector<ScoredPhrase> beam;
  std::vector<double> listener_probs;
  std::vector<bool> judge_correct;
};

/// Mean judge accuracy over each case's top-k reranked phrases.
double reranked_accuracy(const std::vector<RerankCase>& cases, double lambda, std::size_t k);

/// {0, 0.1, ..., 1}
std::vector<double> default_lambda_grid();

/// Grid point with the best top-k reranked accuracy; ties go to the smaller
/// lambda. Throws EmptyGrid.
double select_lambda(const std::vector<RerankCase>& cases, const std::vector<double>& grid, std::size_t k = 5);

}  // namespace refgame
