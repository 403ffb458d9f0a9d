#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "refgame/listener.hpp"
#include "refgame/pragmatics.hpp"
#include "refgame/refgame_eval.hpp"
#include "refgame/speaker.hpp"
#include "refgame/synthworld.hpp"

namespace refgame {

/// One decoded description of the target image of a pair.
struct DecodedPhrase {
  std::string pair_id;
  Side target = Side::A;
  int rank = 1;
  std::vector<std::string> tokens;
  double log_prob = 0.0;
  bool truncated = false;
  // Filled by reranking.
  std::optional<double> p_speaker;
  std::optional<double> p_listener;
  std::optional<double> p_combined;
};

/// Ten tasks per record: every position, both sides, in file order.
std::vector<GameTask> annotation_tasks(const std::vector<AnnotationRecord>& records);

/// Beam-decodes descriptions of each pair's images. The simple speaker sees
/// the target alone; the discerning one sees (target, distractor).
std::vector<DecodedPhrase> decode_pairs(const SpeakerModel& speaker, const std::vector<AnnotationRecord>& records,
                                        const FeatureStore& features, std::size_t beam_width = kDefaultBeamWidth,
                                        std::size_t max_len = kDefaultMaxPhraseLen, bool both_targets = true);

std::vector<GameTask> decoded_tasks(const std::vector<DecodedPhrase>& decoded,
                                    const std::vector<AnnotationRecord>& records);

/// Line-delimited {"pair_id", "target", "rank", "phrase", "log_prob"}.
std::string decoded_jsonl(const std::vector<DecodedPhrase>& decoded);
std::vector<DecodedPhrase> read_decoded(const std::filesystem::path& path);
void write_decoded(const std::filesystem::path& path, const std::vector<DecodedPhrase>& decoded);

/// Grammar oracle as a listener: 1 or 0 when the phrase singles out an image,
/// one half otherwise. Phrase pairs average their two halves.
PairListener oracle_listener(const synth::World& world, const synth::SynthDataset& dataset);

/// Trained listener. Phrases containing the separator go through
/// `discerning_score`; others through the plain pair score.
PairListener model_listener(const ListenerModel& model, const FeatureStore& features);

/// Groups decoded phrases by (pair, target), in rank order.
std::vector<std::vector<DecodedPhrase>> group_beams(const std::vector<DecodedPhrase>& decoded);

/// Reranks each group with `listener` (probability of the target) and returns
/// the reordered phrases with fresh ranks.
std::vector<DecodedPhrase> rerank_decoded(const std::vector<DecodedPhrase>& decoded,
                                          const std::vector<AnnotationRecord>& records, const PairListener& listener,
                                          double lambda);

/// Builds lambda-selection cases from decoded phrases, a reranking listener and a judge.
std::vector<RerankCase> rerank_cases(const std::vector<DecodedPhrase>& decoded,
                                     const std::vector<AnnotationRecord>& records, const PairListener& listener,
                                     const PairListener& judge);

}  // namespace refgame
