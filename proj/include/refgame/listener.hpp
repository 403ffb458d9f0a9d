#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "refgame/annotation.hpp"
#include "refgame/feature_store.hpp"
#include "refgame/nn/checkpoint.hpp"
#include "refgame/nn/layers.hpp"
#include "refgame/profile.hpp"
#include "refgame/speaker.hpp"
#include "refgame/vocabulary.hpp"

namespace refgame {

enum class ListenerKind { Simple, Discerning };
enum class TrainingRegime { Contrastive, RandomNegative };

std::string to_string(ListenerKind kind);
std::string to_string(TrainingRegime regime);
ListenerKind listener_kind_from_string(const std::string& s);
TrainingRegime regime_from_string(const std::string& s);

struct ListenerScore {
  double p_left = 0.5;
  double p_right = 0.5;
};

/// Softmax over two logits with the max subtracted first. Swapping the
/// arguments swaps the outputs exactly.
ListenerScore pair_softmax(double left_logit, double right_logit);

/// Mean of two directed probabilities for the same image.
inline double average_directed(double p_from_left_phrase, double p_from_right_phrase) {
  return (p_from_left_phrase + p_from_right_phrase) / 2.0;
}

struct ListenerDims {
  long feature_dim = 64;
  long embed_dim = 64;
  long hidden = 128;
};

struct ListenerExample {
  nn::Vector target;
  nn::Vector distractor;
  std::vector<TokenId> ids;  // start ... end
  std::string target_id;
};

/// Bilinear pair listener: an image head phi (one ReLU layer) and an LSTM
/// phrase encoder theta whose final hidden state is the phrase embedding.
class ListenerModel {
 public:
  ListenerModel(ListenerKind kind, TrainingRegime regime, Vocabulary vocab, ListenerDims dims, bool batch_norm = false);

  void init(std::uint64_t seed, double scale = 1.0);

  ListenerKind kind() const { return kind_; }
  TrainingRegime regime() const { return regime_; }
  const Vocabulary& vocab() const { return vocab_; }
  const ListenerDims& dims() const { return dims_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  nn::Manifest architecture() const;

  /// Image embeddings, one column per input column.
  nn::Matrix image_embedding(const nn::Matrix& features) const;
  nn::Vector image_embedding(const nn::Vector& feature) const;
  /// Final LSTM hidden state for each framed id sequence.
  nn::Matrix phrase_embedding(const std::vector<std::vector<TokenId>>& sequences) const;
  nn::Vector phrase_embedding(const std::vector<TokenId>& ids) const;
  nn::Vector phrase_embedding(const std::vector<std::string>& tokens) const;

  ListenerScore score(const nn::Vector& left, const nn::Vector& right, const std::vector<TokenId>& ids) const;
  ListenerScore score(const nn::Vector& left, const nn::Vector& right, const std::vector<std::string>& tokens) const;

  /// Mean binary cross-entropy of picking each example's target.
  double loss(const nn::ParameterSet& p, const std::vector<const ListenerExample*>& batch, nn::ParameterSet* grads,
              bool training) const;
  double loss(const std::vector<const ListenerExample*>& batch) const { return loss(params_, batch, nullptr, false); }
  void update_running_stats(const std::vector<const ListenerExample*>& batch);

  void save(const std::filesystem::path& dir, const nn::Manifest& meta = {}) const;
  static ListenerModel load(const std::filesystem::path& dir);

 private:
  nn::Matrix encode(const nn::ParameterSet& p, const std::vector<const std::vector<TokenId>*>& seqs,
                    std::vector<nn::LstmStepCache>* caches, std::vector<nn::RowVector>* masks) const;

  ListenerKind kind_;
  TrainingRegime regime_;
  Vocabulary vocab_;
  ListenerDims dims_;
  bool batch_norm_;
  nn::ParameterSet params_;
  std::size_t embedding_ = 0;
  nn::ProjectionHead head_;
  nn::Lstm lstm_;
};

/// Phrase-pair score. A discerning listener embeds "P1 vs P2" as one
/// sequence. A simple listener averages its two directed calls:
///   p(left) = (p(left | P1) + p(right side not picked by P2)) / 2,
/// and falls back to P1 alone when P2 is empty.
ListenerScore discerning_score(const ListenerModel& model, const nn::Vector& left, const nn::Vector& right,
                               const std::vector<std::string>& first, const std::vector<std::string>& second);

/// Ten directed examples per annotation (five positions, both sides).
/// Distractors are the annotation's other image.
std::vector<ListenerExample> build_listener_examples(const std::vector<AnnotationRecord>& records,
                                                     const FeatureStore& features, ListenerKind kind,
                                                     const Vocabulary& vocab);

/// Random-negative regime: redraws each distractor uniformly from the other
/// training images (never the target itself).
void resample_distractors(std::vector<ListenerExample>& examples, const std::vector<std::string>& pool,
                          const FeatureStore& features, std::mt19937_64& rng);

ListenerModel train_listener(const std::vector<AnnotationRecord>& records, const FeatureStore& features,
                             TrainingRegime regime, ListenerKind kind, const Profile& profile, const Vocabulary& vocab,
                             std::uint64_t seed, TrainLog* log = nullptr);

}  // namespace refgame
