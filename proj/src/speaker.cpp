#include "refgame/speaker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "refgame/error.hpp"
#include "refgame/nn/adam.hpp"
#include "refgame/random.hpp"

namespace refgame {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kProbeExamples = 256;

long manifest_long(const nn::Manifest& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw Error(ErrorCode::ManifestMismatch, "missing " + key);
  return std::stol(it->second);
}

}  // namespace

std::string to_string(SpeakerKind kind) { return kind == SpeakerKind::Simple ? "simple" : "discerning"; }

SpeakerKind speaker_kind_from_string(const std::string& s) {
  if (s == "simple" || s == "ss") return SpeakerKind::Simple;
  if (s == "discerning" || s == "ds") return SpeakerKind::Discerning;
  throw Error(ErrorCode::ConfigError, "unknown speaker kind " + s);
}

SpeakerModel::SpeakerModel(SpeakerKind kind, Vocabulary vocab, SpeakerDims dims, bool batch_norm, double dropout_keep)
    : kind_(kind), vocab_(std::move(vocab)), dims_(dims), batch_norm_(batch_norm), dropout_keep_(dropout_keep) {
  const auto V = static_cast<Eigen::Index>(vocab_.size());
  embedding_ = params_.add("speaker.embedding", dims_.embed_dim, V);
  head_ = nn::ProjectionHead::create(params_, "speaker.image", {dims_.feature_dim, dims_.head_hidden, dims_.context_per_image},
                                     batch_norm_);
  lstm_ = nn::Lstm::create(params_, "speaker.lstm", dims_.embed_dim + context_dim(), dims_.hidden);
  output_ = nn::Dense::create(params_, "speaker.output", dims_.hidden, V);
}

void SpeakerModel::init(std::uint64_t seed, double scale) {
  auto rng = make_stream(seed, 11);
  nn::init_scaled_normal(params_[embedding_], scale, 1, rng);
  params_[embedding_] *= 0.1;
  head_.init(params_, rng);
  lstm_.init(params_, rng);
  output_.init(params_, rng);
  if (scale != 1.0) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_.trainable(i) && i != embedding_) params_[i] *= scale;
    }
  }
  params_.round_to_float();
}

nn::Manifest SpeakerModel::architecture() const {
  return {
      {"arch.model", "speaker"},
      {"arch.kind", to_string(kind_)},
      {"arch.feature_dim", std::to_string(dims_.feature_dim)},
      {"arch.embed_dim", std::to_string(dims_.embed_dim)},
      {"arch.hidden", std::to_string(dims_.hidden)},
      {"arch.head_hidden", std::to_string(dims_.head_hidden)},
      {"arch.context_per_image", std::to_string(dims_.context_per_image)},
      {"arch.context_dim", std::to_string(context_dim())},
      {"arch.batch_norm", batch_norm_ ? "1" : "0"},
      {"arch.vocab_size", std::to_string(vocab_.size())},
      {"arch.vocab_fingerprint", std::to_string(vocab_.fingerprint())},
      {"meta.dropout_keep", std::to_string(dropout_keep_)},
  };
}

nn::Matrix SpeakerModel::logits(const nn::ParameterSet& p, const nn::Matrix& h) const {
  nn::Matrix z = output_.forward(p, h);
  z.row(kStartId).setConstant(kNegInf);
  return z;
}

double SpeakerModel::loss(const nn::ParameterSet& p, const std::vector<const SpeakerExample*>& batch,
                          nn::ParameterSet* grads, bool training, std::mt19937_64* dropout_rng) const {
  const auto B = static_cast<Eigen::Index>(batch.size());
  if (B == 0) throw Error(ErrorCode::InvalidArgument, "empty batch");
  const bool pair = kind_ == SpeakerKind::Discerning;
  const Eigen::Index F = dims_.feature_dim;
  const Eigen::Index C = dims_.context_per_image;
  const Eigen::Index E = dims_.embed_dim;

  nn::Matrix images(F, pair ? 2 * B : B);
  std::size_t max_len = 0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& ex = *batch[static_cast<std::size_t>(b)];
    if (ex.first.size() != F || (pair && ex.second.size() != F)) {
      throw Error(ErrorCode::ShapeMismatch, "speaker feature size");
    }
    images.col(b) = ex.first;
    if (pair) images.col(B + b) = ex.second;
    max_len = std::max(max_len, ex.ids.size());
  }
  nn::HeadCache head_cache;
  const nn::Matrix projected = head_.forward(p, images, training, grads ? &head_cache : nullptr);
  nn::Matrix ctx(context_dim(), B);
  ctx.topRows(C) = projected.leftCols(B);
  if (pair) ctx.bottomRows(C) = projected.rightCols(B);

  const std::size_t steps = max_len - 1;
  std::vector<nn::LstmStepCache> caches(grads ? steps : 0);
  std::vector<nn::Matrix> dropped(steps), drop_masks(steps), probs(steps);
  std::vector<nn::RowVector> masks(steps);
  const bool dropout = training && dropout_rng && dropout_keep_ < 1.0;
  std::bernoulli_distribution keep(dropout_keep_);

  double total = 0.0;
  double count = 0.0;
  nn::LstmState state = lstm_.zero_state(B);
  for (std::size_t t = 0; t < steps; ++t) {
    nn::Matrix x(E + context_dim(), B);
    nn::RowVector mask = nn::RowVector::Zero(B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& ids = batch[static_cast<std::size_t>(b)]->ids;
      const bool live = t + 1 < ids.size();
      mask(b) = live ? 1.0 : 0.0;
      x.col(b).head(E) = p[embedding_].col(live ? ids[t] : kEndId);
    }
    x.bottomRows(context_dim()) = ctx;
    state = lstm_.step(p, x, state, &mask, grads ? &caches[t] : nullptr);
    nn::Matrix h = state.h;
    if (dropout) {
      drop_masks[t] = nn::Matrix(h.rows(), h.cols());
      for (Eigen::Index k = 0; k < drop_masks[t].size(); ++k) {
        drop_masks[t](k) = keep(*dropout_rng) ? 1.0 / dropout_keep_ : 0.0;
      }
      h = h.cwiseProduct(drop_masks[t]);
    }
    const nn::Matrix logp = nn::log_softmax_columns(logits(p, h));
    for (Eigen::Index b = 0; b < B; ++b) {
      if (mask(b) == 0.0) continue;
      total -= logp(batch[static_cast<std::size_t>(b)]->ids[t + 1], b);
      count += 1.0;
    }
    if (grads) {
      dropped[t] = std::move(h);
      probs[t] = logp.array().exp().matrix();
      masks[t] = std::move(mask);
    }
  }
  if (count == 0.0) throw Error(ErrorCode::InvalidArgument, "batch has no target tokens");
  const double mean = total / count;
  if (!grads) return mean;

  auto& g = *grads;
  nn::Matrix dh = nn::Matrix::Zero(dims_.hidden, B);
  nn::Matrix dc = nn::Matrix::Zero(dims_.hidden, B);
  nn::Matrix dctx = nn::Matrix::Zero(context_dim(), B);
  for (std::size_t t = steps; t-- > 0;) {
    nn::Matrix dz = probs[t];
    for (Eigen::Index b = 0; b < B; ++b) {
      if (masks[t](b) == 0.0) {
        dz.col(b).setZero();
      } else {
        dz(batch[static_cast<std::size_t>(b)]->ids[t + 1], b) -= 1.0;
      }
    }
    dz /= count;
    nn::Matrix dout = output_.backward(p, g, dropped[t], dz);
    if (dropout) dout = dout.cwiseProduct(drop_masks[t]);
    // Padded columns produce no output gradient, so dh there is carry only.
    dh += dout.cwiseProduct(masks[t].replicate(dims_.hidden, 1));
    const nn::Matrix dx = lstm_.step_backward(p, g, caches[t], dh, dc);
    for (Eigen::Index b = 0; b < B; ++b) {
      if (masks[t](b) == 0.0) continue;
      g[embedding_].col(batch[static_cast<std::size_t>(b)]->ids[t]) += dx.col(b).head(E);
    }
    dctx += dx.bottomRows(context_dim()).cwiseProduct(masks[t].replicate(context_dim(), 1));
  }
  nn::Matrix dprojected(C, pair ? 2 * B : B);
  dprojected.leftCols(B) = dctx.topRows(C);
  if (pair) dprojected.rightCols(B) = dctx.bottomRows(C);
  head_.backward(p, g, head_cache, dprojected);
  return mean;
}

void SpeakerModel::update_running_stats(const std::vector<const SpeakerExample*>& batch) {
  if (!batch_norm_ || batch.empty()) return;
  const bool pair = kind_ == SpeakerKind::Discerning;
  const auto B = static_cast<Eigen::Index>(batch.size());
  nn::Matrix images(dims_.feature_dim, pair ? 2 * B : B);
  for (Eigen::Index b = 0; b < B; ++b) {
    images.col(b) = batch[static_cast<std::size_t>(b)]->first;
    if (pair) images.col(B + b) = batch[static_cast<std::size_t>(b)]->second;
  }
  nn::HeadCache cache;
  head_.forward(params_, images, true, &cache);
  head_.update_running(params_, cache);
  params_.round_to_float();
}

nn::Vector SpeakerModel::context(const nn::Vector& first, const nn::Vector* second) const {
  const bool pair = kind_ == SpeakerKind::Discerning;
  if (pair != (second != nullptr)) throw Error(ErrorCode::ShapeMismatch, "speaker kind and image count disagree");
  nn::Matrix images(dims_.feature_dim, pair ? 2 : 1);
  if (first.size() != dims_.feature_dim || (second && second->size() != dims_.feature_dim)) {
    throw Error(ErrorCode::ShapeMismatch, "speaker feature size");
  }
  images.col(0) = first;
  if (pair) images.col(1) = *second;
  const nn::Matrix projected = head_.forward(params_, images, false, nullptr);
  nn::Vector ctx(context_dim());
  ctx.head(dims_.context_per_image) = projected.col(0);
  if (pair) ctx.tail(dims_.context_per_image) = projected.col(1);
  return ctx;
}

nn::Matrix SpeakerModel::step_log_probs(const std::vector<TokenId>& prev, const nn::Matrix& contexts,
                                        nn::LstmState& state) const {
  const auto n = static_cast<Eigen::Index>(prev.size());
  if (contexts.rows() != context_dim() || contexts.cols() != n) {
    throw Error(ErrorCode::ShapeMismatch, "decode context shape");
  }
  const Eigen::Index E = dims_.embed_dim;
  nn::Matrix x(E + context_dim(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const TokenId id = prev[static_cast<std::size_t>(j)];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
      throw Error(ErrorCode::ShapeMismatch, "token id out of range");
    }
    x.col(j).head(E) = params_[embedding_].col(id);
  }
  x.bottomRows(context_dim()) = contexts;
  state = lstm_.step(params_, x, state);
  return nn::log_softmax_columns(logits(params_, state.h));
}

DecodeStep SpeakerModel::decode_step(TokenId prev, const nn::LstmState& state, const nn::Vector& context) const {
  DecodeStep out{{}, state};
  const nn::Matrix logp = step_log_probs({prev}, context, out.state);
  out.probabilities = logp.col(0).unaryExpr([](double v) { return std::exp(v); });
  return out;
}

void SpeakerModel::save(const std::filesystem::path& dir, const nn::Manifest& meta) const {
  nn::Manifest m = architecture();
  for (const auto& [k, v] : meta) m[k] = v;
  nn::save_checkpoint(dir, m, params_);
  vocab_.save(dir / "vocab.txt");
}

SpeakerModel SpeakerModel::load(const std::filesystem::path& dir) {
  const nn::Manifest stored = nn::read_manifest(dir);
  if (stored.count("arch.model") == 0 || stored.at("arch.model") != "speaker") {
    throw Error(ErrorCode::ManifestMismatch, dir.string() + " is not a speaker checkpoint");
  }
  SpeakerDims dims;
  dims.feature_dim = manifest_long(stored, "arch.feature_dim");
  dims.embed_dim = manifest_long(stored, "arch.embed_dim");
  dims.hidden = manifest_long(stored, "arch.hidden");
  dims.head_hidden = manifest_long(stored, "arch.head_hidden");
  dims.context_per_image = manifest_long(stored, "arch.context_per_image");
  const double keep = stored.count("meta.dropout_keep") ? std::stod(stored.at("meta.dropout_keep")) : 1.0;
  SpeakerModel model(speaker_kind_from_string(stored.at("arch.kind")), Vocabulary::load(dir / "vocab.txt"), dims,
                     manifest_long(stored, "arch.batch_norm") != 0, keep);
  nn::load_checkpoint(dir, model.architecture(), model.params_);
  return model;
}

// ------------------------------------------------------------------ training

void throw_if_vocab_mismatch(const std::vector<AnnotationRecord>& records, const Vocabulary& vocab) {
  if (records.empty()) throw Error(ErrorCode::VocabMismatch, "empty training corpus");
  std::set<std::string> seen;
  for (const auto& r : records) {
    for (const auto& pp : r.phrase_pairs) {
      seen.insert(pp.left.tokens.begin(), pp.left.tokens.end());
      seen.insert(pp.right.tokens.begin(), pp.right.tokens.end());
    }
  }
  for (std::size_t id = kNumSpecials; id < vocab.size(); ++id) {
    const auto& tok = vocab.token(static_cast<TokenId>(id));
    if (!seen.count(tok)) throw Error(ErrorCode::VocabMismatch, "vocabulary word '" + tok + "' not in training split");
  }
}

std::vector<SpeakerExample> build_speaker_examples(const std::vector<AnnotationRecord>& records,
                                                   const FeatureStore& features, SpeakerKind kind,
                                                   const Vocabulary& vocab) {
  std::vector<SpeakerExample> out;
  for (const auto& r : records) {
    const nn::Vector a = nn::to_vector(features.row(r.image_a));
    const nn::Vector b = nn::to_vector(features.row(r.image_b));
    for (const auto& pp : r.phrase_pairs) {
      if (kind == SpeakerKind::Simple) {
        out.push_back({a, {}, encode_phrase(pp.left, vocab)});
        out.push_back({b, {}, encode_phrase(pp.right, vocab)});
      } else {
        out.push_back({a, b, encode_tokens(pp.serialized_tokens(), vocab)});
        out.push_back({b, a, encode_tokens(pp.swapped().serialized_tokens(), vocab)});
      }
    }
  }
  return out;
}

namespace {

double probe_loss(const SpeakerModel& model, const std::vector<SpeakerExample>& examples) {
  std::vector<const SpeakerExample*> probe;
  for (std::size_t i = 0; i < std::min(kProbeExamples, examples.size()); ++i) probe.push_back(&examples[i]);
  return model.loss(probe);
}

}  // namespace

SpeakerModel train_speaker(const std::vector<AnnotationRecord>& records, const FeatureStore& features,
                           SpeakerKind kind, const Profile& profile, const Vocabulary& vocab, std::uint64_t seed,
                           TrainLog* log) {
  throw_if_vocab_mismatch(records, vocab);
  const auto examples = build_speaker_examples(records, features, kind, vocab);

  SpeakerDims dims;
  dims.feature_dim = static_cast<long>(features.dim());
  dims.embed_dim = profile.embed_dim;
  dims.hidden = profile.speaker_hidden;
  dims.head_hidden = profile.head_hidden;
  dims.context_per_image = profile.embed_dim;
  SpeakerModel model(kind, vocab, dims, profile.batch_norm, profile.dropout_keep);
  model.init(seed);

  TrainLog local;
  TrainLog& out = log ? *log : local;
  out = {};
  out.initial_loss = probe_loss(model, examples);

  auto order_rng = make_stream(seed, 12);
  auto dropout_rng = make_stream(seed, 13);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  nn::Adam adam(model.params(), profile.adam);
  nn::ParameterSet grads = model.params().zeros_like();

  auto run_phase = [&](std::size_t batch_size, std::size_t step_budget, std::size_t epochs) {
    const std::size_t per_epoch = (examples.size() + batch_size - 1) / batch_size;
    const std::size_t total = step_budget > 0 ? step_budget : epochs * per_epoch;
    std::size_t done = 0;
    while (done < total) {
      std::shuffle(order.begin(), order.end(), order_rng);
      double epoch_sum = 0.0;
      std::size_t epoch_batches = 0;
      for (std::size_t start = 0; start < order.size() && done < total; start += batch_size, ++done) {
        std::vector<const SpeakerExample*> batch;
        for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
          batch.push_back(&examples[order[k]]);
        }
        grads.set_zero();
        epoch_sum += model.loss(model.params(), batch, &grads, true, &dropout_rng);
        ++epoch_batches;
        adam.update(model.params(), grads);
        model.params().round_to_float();
        model.update_running_stats(batch);
        ++out.steps;
      }
      out.epoch_loss.push_back(epoch_sum / static_cast<double>(std::max<std::size_t>(1, epoch_batches)));
    }
  };

  run_phase(profile.speaker_batch, profile.speaker_steps, profile.speaker_epochs);
  if (profile.speaker_stage2_steps > 0) {
    adam.set_learning_rate(profile.speaker_stage2_lr);
    run_phase(profile.speaker_stage2_batch, profile.speaker_stage2_steps, 0);
  }
  out.final_loss = probe_loss(model, examples);
  return model;
}

// ------------------------------------------------------------------ decoding

namespace {

struct Hypothesis {
  std::vector<TokenId> ids;
  double score = 0.0;
  Eigen::Index column = 0;  // column in the state matrix of the previous step
};

struct Candidate {
  std::size_t parent;
  TokenId token;
  double score;
};

bool ranks_before(double sa, const std::vector<TokenId>& a, double sb, const std::vector<TokenId>& b) {
  if (sa != sb) return sa > sb;
  return a < b;
}

}  // namespace

std::vector<ScoredPhrase> beam_decode(const SpeakerModel& model, const nn::Vector& context, std::size_t beam_width,
                                      std::size_t max_len) {
  if (beam_width == 0 || max_len == 0) throw Error(ErrorCode::InvalidArgument, "beam width and max_len must be >= 1");
  const auto V = static_cast<TokenId>(model.vocab().size());

  std::vector<Hypothesis> alive{{{}, 0.0, 0}};
  std::vector<ScoredPhrase> finished;
  nn::LstmState state = model.initial_state(1);

  auto finish = [&](std::vector<TokenId> ids, double score, bool truncated) {
    ScoredPhrase s;
    s.ids = std::move(ids);
    s.log_prob = score;
    s.truncated = truncated;
    finished.push_back(std::move(s));
  };
  auto sort_finished = [&] {
    std::sort(finished.begin(), finished.end(), [](const ScoredPhrase& a, const ScoredPhrase& b) {
      return ranks_before(a.log_prob, a.ids, b.log_prob, b.ids);
    });
    if (finished.size() > beam_width) finished.resize(beam_width);
  };

  for (std::size_t step = 1; step <= max_len && !alive.empty(); ++step) {
    std::vector<TokenId> prev;
    nn::LstmState in{nn::Matrix(state.h.rows(), static_cast<Eigen::Index>(alive.size())),
                     nn::Matrix(state.c.rows(), static_cast<Eigen::Index>(alive.size()))};
    for (std::size_t j = 0; j < alive.size(); ++j) {
      prev.push_back(alive[j].ids.empty() ? kStartId : alive[j].ids.back());
      in.h.col(static_cast<Eigen::Index>(j)) = state.h.col(alive[j].column);
      in.c.col(static_cast<Eigen::Index>(j)) = state.c.col(alive[j].column);
    }
    const nn::Matrix contexts = context.replicate(1, static_cast<Eigen::Index>(alive.size()));
    const nn::Matrix logp = model.step_log_probs(prev, contexts, in);
    state = std::move(in);

    std::vector<Candidate> cands;
    for (std::size_t j = 0; j < alive.size(); ++j) {
      for (TokenId v = 0; v < V; ++v) {
        const double lp = logp(v, static_cast<Eigen::Index>(j));
        if (lp == -std::numeric_limits<double>::infinity()) continue;
        cands.push_back({j, v, alive[j].score + lp});
      }
    }
    auto ids_of = [&](const Candidate& c) {
      auto ids = alive[c.parent].ids;
      ids.push_back(c.token);
      return ids;
    };
    std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      return ids_of(a) < ids_of(b);
    });

    std::vector<Hypothesis> next;
    const bool last = step == max_len;
    std::size_t finalized_now = 0;
    for (const auto& c : cands) {
      if (last) {
        if (finalized_now == beam_width) break;
        finish(ids_of(c), c.score, c.token != kEndId);
        ++finalized_now;
        continue;
      }
      if (next.size() == beam_width) break;
      if (c.token == kEndId) {
        finish(ids_of(c), c.score, false);
      } else {
        next.push_back({ids_of(c), c.score, static_cast<Eigen::Index>(c.parent)});
      }
    }
    alive = std::move(next);
    sort_finished();
    if (!alive.empty() && finished.size() == beam_width && alive.front().score < finished.back().log_prob) break;
  }

  sort_finished();
  for (std::size_t r = 0; r < finished.size(); ++r) {
    auto& s = finished[r];
    s.rank = static_cast<int>(r + 1);
    for (TokenId id : s.ids) {
      if (id != kEndId && id != kStartId) s.tokens.push_back(model.vocab().token(id));
    }
  }
  return finished;
}

double sequence_log_prob(const SpeakerModel& model, const nn::Vector& context, const std::vector<TokenId>& ids) {
  nn::LstmState state = model.initial_state(1);
  TokenId prev = kStartId;
  double total = 0.0;
  for (TokenId id : ids) {
    const DecodeStep step = model.decode_step(prev, state, context);
    total += std::log(step.probabilities(id));
    state = step.state;
    prev = id;
  }
  return total;
}

}  // namespace refgame
