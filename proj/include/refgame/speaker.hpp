#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "refgame/annotation.hpp"
#include "refgame/feature_store.hpp"
#include "refgame/nn/checkpoint.hpp"
#include "refgame/nn/layers.hpp"
#include "refgame/profile.hpp"
#include "refgame/vocabulary.hpp"

namespace refgame {

enum class SpeakerKind { Simple, Discerning };

std::string to_string(SpeakerKind kind);
SpeakerKind speaker_kind_from_string(const std::string& s);

struct SpeakerDims {
  long feature_dim = 64;
  long embed_dim = 64;
  long hidden = 128;
  long head_hidden = 256;
  long context_per_image = 64;
};

/// One teacher-forcing example. `second` is empty for the simple speaker.
struct SpeakerExample {
  nn::Vector first;
  nn::Vector second;
  std::vector<TokenId> ids;  // start ... end
};

struct DecodeStep {
  nn::Vector probabilities;  // over the vocabulary; start token has probability 0
  nn::LstmState state;
};

/// Show-and-tell style generator. Image features pass through two
/// ReLU layers; the resulting context (two of them, concatenated, for the
/// discerning kind) is fed to the LSTM at every step next to the word embedding.
class SpeakerModel {
 public:
  SpeakerModel(SpeakerKind kind, Vocabulary vocab, SpeakerDims dims, bool batch_norm = false,
               double dropout_keep = 1.0);

  void init(std::uint64_t seed, double scale = 1.0);

  SpeakerKind kind() const { return kind_; }
  const Vocabulary& vocab() const { return vocab_; }
  const SpeakerDims& dims() const { return dims_; }
  long context_dim() const { return kind_ == SpeakerKind::Discerning ? 2 * dims_.context_per_image : dims_.context_per_image; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  nn::Manifest architecture() const;

  /// Mean per-token cross-entropy of a batch. With `grads` set, accumulates
  /// gradients. Dropout applies only when `dropout_rng` is given.
  double loss(const nn::ParameterSet& p, const std::vector<const SpeakerExample*>& batch, nn::ParameterSet* grads,
              bool training, std::mt19937_64* dropout_rng = nullptr) const;
  double loss(const std::vector<const SpeakerExample*>& batch) const { return loss(params_, batch, nullptr, false); }
  void update_running_stats(const std::vector<const SpeakerExample*>& batch);

  /// Context vector for one image (simple) or an ordered pair (discerning).
  nn::Vector context(const nn::Vector& first, const nn::Vector* second = nullptr) const;
  nn::LstmState initial_state(long batch = 1) const { return lstm_.zero_state(batch); }
  DecodeStep decode_step(TokenId prev, const nn::LstmState& state, const nn::Vector& context) const;
  /// Batched step: column j continues hypothesis j. Returns log-probabilities (V x n).
  nn::Matrix step_log_probs(const std::vector<TokenId>& prev, const nn::Matrix& contexts, nn::LstmState& state) const;

  void save(const std::filesystem::path& dir, const nn::Manifest& meta = {}) const;
  static SpeakerModel load(const std::filesystem::path& dir);

 private:
  nn::Matrix logits(const nn::ParameterSet& p, const nn::Matrix& h) const;

  SpeakerKind kind_;
  Vocabulary vocab_;
  SpeakerDims dims_;
  bool batch_norm_;
  double dropout_keep_;
  nn::ParameterSet params_;
  std::size_t embedding_ = 0;
  nn::ProjectionHead head_;
  nn::Lstm lstm_;
  nn::Dense output_;
};

struct TrainLog {
  double initial_loss = 0.0;  // on the probe set, before the first update
  double final_loss = 0.0;    // same probe set, after training
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

/// Simple: (image, phrase) for both sides of every phrase pair.
/// Discerning: (a, b, "P1 vs P2") and the swapped (b, a, "P2 vs P1").
std::vector<SpeakerExample> build_speaker_examples(const std::vector<AnnotationRecord>& records,
                                                   const FeatureStore& features, SpeakerKind kind,
                                                   const Vocabulary& vocab);

/// Throws VocabMismatch if `vocab` holds words absent from `records` (it was
/// not built from this split) or the corpus is empty.
SpeakerModel train_speaker(const std::vector<AnnotationRecord>& records, const FeatureStore& features,
                           SpeakerKind kind, const Profile& profile, const Vocabulary& vocab, std::uint64_t seed,
                           TrainLog* log = nullptr);

struct ScoredPhrase {
  std::vector<TokenId> ids;          // generated ids, end token included unless truncated
  std::vector<std::string> tokens;   // words only
  double log_prob = 0.0;             // sum of step log-probabilities
  int rank = 0;                      // 1-based
  bool truncated = false;            // hit max_len without an end token
};

inline constexpr std::size_t kDefaultBeamWidth = 10;

/// Beam search over a frozen speaker. Returns up to `beam_width` finished
/// sequences sorted by descending log-probability, ties by token-id order.
/// Unterminated hypotheses at `max_len` are finalized with `truncated` set.
std::vector<ScoredPhrase> beam_decode(const SpeakerModel& model, const nn::Vector& context,
                                      std::size_t beam_width = kDefaultBeamWidth,
                                      std::size_t max_len = kDefaultMaxPhraseLen);

/// Re-scores a generated id sequence step by step with `decode_step`.
double sequence_log_prob(const SpeakerModel& model, const nn::Vector& context, const std::vector<TokenId>& ids);

void throw_if_vocab_mismatch(const std::vector<AnnotationRecord>& records, const Vocabulary& vocab);

}  // namespace refgame
