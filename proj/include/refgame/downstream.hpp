#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "refgame/feature_store.hpp"
#include "refgame/listener.hpp"
#include "refgame/speaker.hpp"

namespace refgame {

/// The K most frequent training phrases, or directed phrase pairs ("P1 vs P2")
/// for the opponent space.
struct PhraseLexicon {
  std::vector<std::vector<std::string>> entries;
  std::vector<std::size_t> counts;
  bool opponent = false;
  std::string source_hash;

  std::size_t size() const { return entries.size(); }
};

/// Descending frequency, ties lexicographic on the joined text. Throws
/// KTooLarge when fewer than K distinct entries exist.
PhraseLexicon build_lexicon(const std::vector<AnnotationRecord>& records, std::size_t k, bool opponent = false);

/// Caches the lexicon's phrase embeddings for repeated image embedding.
class LexiconEmbedder {
 public:
  /// Opponent lexicons need a discerning listener.
  LexiconEmbedder(const ListenerModel& listener, const PhraseLexicon& lexicon);

  /// Entry i is phi(I) . theta(P_i); no softmax.
  nn::Vector embed(const nn::Vector& feature) const;
  nn::Matrix embed_all(const nn::Matrix& features) const;  // one column per image
  const nn::Matrix& phrase_matrix() const { return phrases_; }

 private:
  const ListenerModel* listener_;
  nn::Matrix phrases_;  // hidden x K
};

nn::Vector embed_image(const ListenerModel& listener, const PhraseLexicon& lexicon, const nn::Vector& feature);

struct ClassifierConfig {
  double l2 = 1e-4;
  std::size_t iterations = 500;
  double learning_rate = 0.05;
};

/// Multinomial logistic regression on standardized inputs.
class LinearClassifier {
 public:
  /// Rows of `x` are examples. Throws DegenerateLabels for fewer than two
  /// classes or a class with fewer than two examples.
  static LinearClassifier fit(const nn::Matrix& x, const std::vector<int>& labels, const ClassifierConfig& config = {});

  std::vector<int> predict(const nn::Matrix& x) const;
  double accuracy(const nn::Matrix& x, const std::vector<int>& labels) const;
  const std::vector<int>& classes() const { return classes_; }

 private:
  nn::Matrix scores(const nn::Matrix& x) const;

  std::vector<int> classes_;
  nn::RowVector mean_;
  nn::RowVector scale_;
  nn::Matrix weight_;  // features x classes
  nn::RowVector bias_;
};

struct RetrievalHit {
  std::string image_id;
  double score = 0.0;
};

enum class QueryStrategy { Concatenate, SumScores };

/// Ranks images by phi(I) . theta(query). Multiple phrases are concatenated
/// into one token sequence unless `SumScores` is chosen. Throws EmptyQuery.
std::vector<RetrievalHit> retrieve(const ListenerModel& listener, const std::vector<std::vector<std::string>>& query,
                                   const FeatureStore& images, std::size_t top_n = 0,
                                   QueryStrategy strategy = QueryStrategy::Concatenate);

/// Mean precision at each relevant hit, over all relevant items in the list.
double average_precision(const std::vector<bool>& relevant_in_rank_order);

struct Explanation {
  std::vector<std::string> phrase;
  long image_frequency = 0;   // images described in the target category minus the opposite one
  long phrase_frequency = 0;  // occurrences, same difference
};

struct ExplanationReport {
  std::vector<Explanation> first;   // phrases for the first category
  std::vector<Explanation> second;  // phrases for the second category
};

struct ExplainOptions {
  std::size_t beam_width = kDefaultBeamWidth;
  std::size_t max_len = kDefaultMaxPhraseLen;
  std::size_t top_n = 10;
};

/// Decodes both orders of every cross pair with a discerning speaker and
/// credits each half to the image it describes. Phrases are deduplicated per
/// (image pair, side). Sorted by image frequency, then phrase frequency, then
/// text. Throws EmptyCategory.
ExplanationReport explain_categories(const SpeakerModel& speaker, const std::vector<nn::Vector>& first,
                                     const std::vector<nn::Vector>& second, const ExplainOptions& options = {});

/// theta for each phrase, ids are the joined phrase text.
FeatureStore export_phrase_embeddings(const ListenerModel& listener,
                                      const std::vector<std::vector<std::string>>& phrases);
/// phi for each image in the store, same ids.
FeatureStore export_image_embeddings(const ListenerModel& listener, const FeatureStore& images);

}  // namespace refgame
