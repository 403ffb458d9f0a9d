#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "refgame/downstream.hpp"
#include "refgame/synthworld.hpp"

namespace refgame {

/// Categories that fix body colour, size, engines and background to distinct
/// combinations; nose and tail stay free.
std::vector<synth::Category> classification_categories(const synth::World& world, std::size_t count,
                                                       std::uint64_t seed);

struct LabeledImages {
  nn::Matrix features;  // one column per image
  std::vector<int> labels;
};

LabeledImages sample_labeled(const synth::World& world, const std::vector<synth::Category>& categories,
                             std::size_t per_category, std::mt19937_64& rng);

struct ClassificationResult {
  std::size_t k = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Embeds both sets with the top-K lexicon and fits a linear classifier.
ClassificationResult classification_run(const ListenerModel& listener, const std::vector<AnnotationRecord>& train_records,
                                        std::size_t k, const LabeledImages& train, const LabeledImages& test,
                                        const ClassifierConfig& config = {}, bool opponent = false);

struct SlotQuery {
  synth::SlotValue target;
  std::vector<std::string> phrase;
};

/// One query per (slot, value), cycling through slots, first surface of each value.
std::vector<SlotQuery> single_slot_queries(const synth::World& world, std::size_t count);

/// Average precision of ranking `objects` for each query against latent labels.
std::vector<double> retrieval_average_precision(const ListenerModel& listener, const std::vector<SlotQuery>& queries,
                                                const std::vector<synth::SynthObject>& objects);

struct ExplanationTrial {
  std::vector<std::size_t> differing_slots;
  synth::Category first;
  synth::Category second;
  ExplanationReport report;
  bool first_covered = false;   // every differing slot parses among the top 2m phrases
  bool second_covered = false;
};

/// Two categories that differ in `m` random slots (the rest free) and the
/// speaker's explanations for `per_category` images each.
ExplanationTrial explanation_trial(const synth::World& world, const SpeakerModel& speaker, std::size_t m,
                                   std::size_t per_category, std::mt19937_64& rng, const ExplainOptions& options = {});

}  // namespace refgame
