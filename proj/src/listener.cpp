#include "refgame/listener.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "refgame/error.hpp"
#include "refgame/nn/adam.hpp"
#include "refgame/phrase.hpp"
#include "refgame/random.hpp"

namespace refgame {

namespace {

constexpr std::size_t kProbeExamples = 256;

long manifest_long(const nn::Manifest& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw Error(ErrorCode::ManifestMismatch, "missing " + key);
  return std::stol(it->second);
}

}  // namespace

std::string to_string(ListenerKind kind) { return kind == ListenerKind::Simple ? "simple" : "discerning"; }

std::string to_string(TrainingRegime regime) {
  return regime == TrainingRegime::Contrastive ? "contrastive" : "random_negative";
}

ListenerKind listener_kind_from_string(const std::string& s) {
  if (s == "simple" || s == "sl") return ListenerKind::Simple;
  if (s == "discerning" || s == "dl") return ListenerKind::Discerning;
  throw Error(ErrorCode::ConfigError, "unknown listener kind " + s);
}

TrainingRegime regime_from_string(const std::string& s) {
  if (s == "contrastive") return TrainingRegime::Contrastive;
  if (s == "random_negative" || s == "random-negative") return TrainingRegime::RandomNegative;
  throw Error(ErrorCode::ConfigError, "unknown training regime " + s);
}

ListenerScore pair_softmax(double left_logit, double right_logit) {
  const double m = std::max(left_logit, right_logit);
  const double el = std::exp(left_logit - m);
  const double er = std::exp(right_logit - m);
  return {el / (el + er), er / (el + er)};
}

ListenerModel::ListenerModel(ListenerKind kind, TrainingRegime regime, Vocabulary vocab, ListenerDims dims,
                             bool batch_norm)
    : kind_(kind), regime_(regime), vocab_(std::move(vocab)), dims_(dims), batch_norm_(batch_norm) {
  embedding_ = params_.add("listener.embedding", dims_.embed_dim, static_cast<Eigen::Index>(vocab_.size()));
  head_ = nn::ProjectionHead::create(params_, "listener.image", {dims_.feature_dim, dims_.hidden}, batch_norm_);
  lstm_ = nn::Lstm::create(params_, "listener.lstm", dims_.embed_dim, dims_.hidden);
}

void ListenerModel::init(std::uint64_t seed, double scale) {
  auto rng = make_stream(seed, 21);
  nn::init_scaled_normal(params_[embedding_], 1.0, 1, rng);
  params_[embedding_] *= 0.1 * scale;
  head_.init(params_, rng);
  lstm_.init(params_, rng);
  if (scale != 1.0) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_.trainable(i) && i != embedding_) params_[i] *= scale;
    }
  }
  params_.round_to_float();
}

nn::Manifest ListenerModel::architecture() const {
  return {
      {"arch.model", "listener"},
      {"arch.kind", to_string(kind_)},
      {"arch.feature_dim", std::to_string(dims_.feature_dim)},
      {"arch.embed_dim", std::to_string(dims_.embed_dim)},
      {"arch.hidden", std::to_string(dims_.hidden)},
      {"arch.batch_norm", batch_norm_ ? "1" : "0"},
      {"arch.vocab_size", std::to_string(vocab_.size())},
      {"arch.vocab_fingerprint", std::to_string(vocab_.fingerprint())},
      {"meta.regime", to_string(regime_)},
  };
}

nn::Matrix ListenerModel::encode(const nn::ParameterSet& p, const std::vector<const std::vector<TokenId>*>& seqs,
                                 std::vector<nn::LstmStepCache>* caches, std::vector<nn::RowVector>* masks) const {
  const auto B = static_cast<Eigen::Index>(seqs.size());
  std::size_t steps = 0;
  for (const auto* s : seqs) {
    if (s->empty()) throw Error(ErrorCode::ShapeMismatch, "empty id sequence");
    steps = std::max(steps, s->size());
  }
  if (caches) caches->assign(steps, {});
  if (masks) masks->assign(steps, {});
  nn::LstmState state = lstm_.zero_state(B);
  for (std::size_t t = 0; t < steps; ++t) {
    nn::Matrix x(dims_.embed_dim, B);
    nn::RowVector mask(B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& ids = *seqs[static_cast<std::size_t>(b)];
      const bool live = t < ids.size();
      mask(b) = live ? 1.0 : 0.0;
      const TokenId id = live ? ids[t] : kEndId;
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
        throw Error(ErrorCode::ShapeMismatch, "token id out of range");
      }
      x.col(b) = p[embedding_].col(id);
    }
    state = lstm_.step(p, x, state, &mask, caches ? &(*caches)[t] : nullptr);
    if (masks) (*masks)[t] = std::move(mask);
  }
  return state.h;
}

nn::Matrix ListenerModel::image_embedding(const nn::Matrix& features) const {
  if (features.rows() != dims_.feature_dim) throw Error(ErrorCode::ShapeMismatch, "listener feature size");
  return head_.forward(params_, features, false, nullptr);
}

nn::Vector ListenerModel::image_embedding(const nn::Vector& feature) const {
  return image_embedding(nn::Matrix(feature)).col(0);
}

nn::Matrix ListenerModel::phrase_embedding(const std::vector<std::vector<TokenId>>& sequences) const {
  std::vector<const std::vector<TokenId>*> ptrs;
  for (const auto& s : sequences) ptrs.push_back(&s);
  return encode(params_, ptrs, nullptr, nullptr);
}

nn::Vector ListenerModel::phrase_embedding(const std::vector<TokenId>& ids) const {
  return encode(params_, {&ids}, nullptr, nullptr).col(0);
}

nn::Vector ListenerModel::phrase_embedding(const std::vector<std::string>& tokens) const {
  return phrase_embedding(encode_tokens(tokens, vocab_));
}

ListenerScore ListenerModel::score(const nn::Vector& left, const nn::Vector& right,
                                   const std::vector<TokenId>& ids) const {
  const nn::Vector theta = phrase_embedding(ids);
  return pair_softmax(image_embedding(left).dot(theta), image_embedding(right).dot(theta));
}

ListenerScore ListenerModel::score(const nn::Vector& left, const nn::Vector& right,
                                   const std::vector<std::string>& tokens) const {
  return score(left, right, encode_tokens(tokens, vocab_));
}

double ListenerModel::loss(const nn::ParameterSet& p, const std::vector<const ListenerExample*>& batch,
                           nn::ParameterSet* grads, bool training) const {
  const auto B = static_cast<Eigen::Index>(batch.size());
  if (B == 0) throw Error(ErrorCode::InvalidArgument, "empty batch");
  nn::Matrix images(dims_.feature_dim, 2 * B);
  std::vector<const std::vector<TokenId>*> seqs;
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& ex = *batch[static_cast<std::size_t>(b)];
    if (ex.target.size() != dims_.feature_dim || ex.distractor.size() != dims_.feature_dim) {
      throw Error(ErrorCode::ShapeMismatch, "listener feature size");
    }
    images.col(b) = ex.target;
    images.col(B + b) = ex.distractor;
    seqs.push_back(&ex.ids);
  }
  nn::HeadCache head_cache;
  std::vector<nn::LstmStepCache> caches;
  std::vector<nn::RowVector> masks;
  const nn::Matrix phi = head_.forward(p, images, training, grads ? &head_cache : nullptr);
  const nn::Matrix theta = encode(p, seqs, grads ? &caches : nullptr, grads ? &masks : nullptr);

  double total = 0.0;
  nn::RowVector d_target(B), d_distractor(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const double st = phi.col(b).dot(theta.col(b));
    const double sd = phi.col(B + b).dot(theta.col(b));
    const double m = std::max(st, sd);
    total += m + std::log(std::exp(st - m) + std::exp(sd - m)) - st;
    const double pt = pair_softmax(st, sd).p_left;
    d_target(b) = (pt - 1.0) / static_cast<double>(B);
    d_distractor(b) = (1.0 - pt) / static_cast<double>(B);
  }
  const double mean = total / static_cast<double>(B);
  if (!grads) return mean;

  auto& g = *grads;
  const Eigen::Index H = dims_.hidden;
  nn::Matrix dh = phi.leftCols(B).array().rowwise() * d_target.array();
  dh += (phi.rightCols(B).array().rowwise() * d_distractor.array()).matrix();
  nn::Matrix dphi(H, 2 * B);
  dphi.leftCols(B) = theta.array().rowwise() * d_target.array();
  dphi.rightCols(B) = theta.array().rowwise() * d_distractor.array();
  head_.backward(p, g, head_cache, dphi);

  nn::Matrix dc = nn::Matrix::Zero(H, B);
  for (std::size_t t = caches.size(); t-- > 0;) {
    const nn::Matrix dx = lstm_.step_backward(p, g, caches[t], dh, dc);
    for (Eigen::Index b = 0; b < B; ++b) {
      if (masks[t](b) == 0.0) continue;
      g[embedding_].col((*seqs[static_cast<std::size_t>(b)])[t]) += dx.col(b);
    }
  }
  return mean;
}

void ListenerModel::update_running_stats(const std::vector<const ListenerExample*>& batch) {
  if (!batch_norm_ || batch.empty()) return;
  const auto B = static_cast<Eigen::Index>(batch.size());
  nn::Matrix images(dims_.feature_dim, 2 * B);
  for (Eigen::Index b = 0; b < B; ++b) {
    images.col(b) = batch[static_cast<std::size_t>(b)]->target;
    images.col(B + b) = batch[static_cast<std::size_t>(b)]->distractor;
  }
  nn::HeadCache cache;
  head_.forward(params_, images, true, &cache);
  head_.update_running(params_, cache);
  params_.round_to_float();
}

void ListenerModel::save(const std::filesystem::path& dir, const nn::Manifest& meta) const {
  nn::Manifest m = architecture();
  for (const auto& [k, v] : meta) m[k] = v;
  nn::save_checkpoint(dir, m, params_);
  vocab_.save(dir / "vocab.txt");
}

ListenerModel ListenerModel::load(const std::filesystem::path& dir) {
  const nn::Manifest stored = nn::read_manifest(dir);
  if (stored.count("arch.model") == 0 || stored.at("arch.model") != "listener") {
    throw Error(ErrorCode::ManifestMismatch, dir.string() + " is not a listener checkpoint");
  }
  ListenerDims dims;
  dims.feature_dim = manifest_long(stored, "arch.feature_dim");
  dims.embed_dim = manifest_long(stored, "arch.embed_dim");
  dims.hidden = manifest_long(stored, "arch.hidden");
  const TrainingRegime regime =
      stored.count("meta.regime") ? regime_from_string(stored.at("meta.regime")) : TrainingRegime::Contrastive;
  ListenerModel model(listener_kind_from_string(stored.at("arch.kind")), regime, Vocabulary::load(dir / "vocab.txt"),
                      dims, manifest_long(stored, "arch.batch_norm") != 0);
  nn::load_checkpoint(dir, model.architecture(), model.params_);
  return model;
}

ListenerScore discerning_score(const ListenerModel& model, const nn::Vector& left, const nn::Vector& right,
                               const std::vector<std::string>& first, const std::vector<std::string>& second) {
  if (model.kind() == ListenerKind::Discerning) {
    std::vector<std::string> joined = first;
    joined.push_back(std::string(kPairSeparator));
    joined.insert(joined.end(), second.begin(), second.end());
    return model.score(left, right, joined);
  }
  if (first.empty() && second.empty()) throw Error(ErrorCode::EmptyPhrase, "phrase pair has no words");
  if (second.empty()) return model.score(left, right, first);
  const ListenerScore s2 = model.score(left, right, second);
  if (first.empty()) return {s2.p_right, s2.p_left};
  const ListenerScore s1 = model.score(left, right, first);
  return {average_directed(s1.p_left, s2.p_right), average_directed(s1.p_right, s2.p_left)};
}

std::vector<ListenerExample> build_listener_examples(const std::vector<AnnotationRecord>& records,
                                                     const FeatureStore& features, ListenerKind kind,
                                                     const Vocabulary& vocab) {
  std::vector<ListenerExample> out;
  for (const auto& r : records) {
    const nn::Vector a = nn::to_vector(features.row(r.image_a));
    const nn::Vector b = nn::to_vector(features.row(r.image_b));
    for (const auto& pp : r.phrase_pairs) {
      if (kind == ListenerKind::Simple) {
        out.push_back({a, b, encode_phrase(pp.left, vocab), r.image_a});
        out.push_back({b, a, encode_phrase(pp.right, vocab), r.image_b});
      } else {
        out.push_back({a, b, encode_tokens(pp.serialized_tokens(), vocab), r.image_a});
        out.push_back({b, a, encode_tokens(pp.swapped().serialized_tokens(), vocab), r.image_b});
      }
    }
  }
  return out;
}

void resample_distractors(std::vector<ListenerExample>& examples, const std::vector<std::string>& pool,
                          const FeatureStore& features, std::mt19937_64& rng) {
  if (pool.size() < 2) throw Error(ErrorCode::InvalidArgument, "random negatives need at least two images");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  for (auto& ex : examples) {
    std::size_t k = pick(rng);
    while (pool[k] == ex.target_id) k = pick(rng);
    ex.distractor = nn::to_vector(features.row(pool[k]));
  }
}

namespace {

double probe_loss(const ListenerModel& model, const std::vector<ListenerExample>& examples) {
  std::vector<const ListenerExample*> probe;
  for (std::size_t i = 0; i < std::min(kProbeExamples, examples.size()); ++i) probe.push_back(&examples[i]);
  return model.loss(probe);
}

}  // namespace

ListenerModel train_listener(const std::vector<AnnotationRecord>& records, const FeatureStore& features,
                             TrainingRegime regime, ListenerKind kind, const Profile& profile, const Vocabulary& vocab,
                             std::uint64_t seed, TrainLog* log) {
  throw_if_vocab_mismatch(records, vocab);
  auto examples = build_listener_examples(records, features, kind, vocab);

  std::vector<std::string> pool;
  for (const auto& r : records) {
    pool.push_back(r.image_a);
    pool.push_back(r.image_b);
  }
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

  ListenerDims dims{static_cast<long>(features.dim()), profile.embed_dim, profile.listener_hidden};
  ListenerModel model(kind, regime, vocab, dims, profile.batch_norm);
  model.init(seed);

  TrainLog local;
  TrainLog& out = log ? *log : local;
  out = {};
  out.initial_loss = probe_loss(model, examples);
  // The probe keeps the annotation's own distractors so both regimes are comparable.
  const std::vector<ListenerExample> probe(examples.begin(),
                                           examples.begin() + static_cast<long>(std::min(kProbeExamples, examples.size())));

  auto order_rng = make_stream(seed, 22);
  auto negative_rng = make_stream(seed, 23);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  nn::Adam adam(model.params(), profile.adam);
  nn::ParameterSet grads = model.params().zeros_like();

  auto run_phase = [&](std::size_t batch_size, std::size_t step_budget, std::size_t epochs) {
    const std::size_t per_epoch = (examples.size() + batch_size - 1) / batch_size;
    const std::size_t total = step_budget > 0 ? step_budget : epochs * per_epoch;
    std::size_t done = 0;
    while (done < total) {
      if (regime == TrainingRegime::RandomNegative) resample_distractors(examples, pool, features, negative_rng);
      std::shuffle(order.begin(), order.end(), order_rng);
      double epoch_sum = 0.0;
      std::size_t epoch_batches = 0;
      for (std::size_t start = 0; start < order.size() && done < total; start += batch_size, ++done) {
        std::vector<const ListenerExample*> batch;
        for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
          batch.push_back(&examples[order[k]]);
        }
        grads.set_zero();
        epoch_sum += model.loss(model.params(), batch, &grads, true);
        ++epoch_batches;
        adam.update(model.params(), grads);
        model.params().round_to_float();
        model.update_running_stats(batch);
        ++out.steps;
      }
      out.epoch_loss.push_back(epoch_sum / static_cast<double>(std::max<std::size_t>(1, epoch_batches)));
    }
  };

  const std::size_t steps =
      regime == TrainingRegime::RandomNegative && profile.listener_random_negative_steps > 0
          ? profile.listener_random_negative_steps
          : profile.listener_steps;
  run_phase(profile.listener_batch, steps, profile.listener_epochs);
  if (profile.listener_stage2_steps > 0) {
    adam.set_learning_rate(profile.listener_stage2_lr);
    run_phase(profile.listener_batch, profile.listener_stage2_steps, 0);
  }
  out.final_loss = probe_loss(model, probe);
  return model;
}

}  // namespace refgame
