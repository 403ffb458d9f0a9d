#include "refgame/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "refgame/annotation.hpp"
#include "refgame/error.hpp"
#include "refgame/phrase.hpp"

namespace refgame {

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

}  // namespace

PhraseLexicon build_lexicon(const std::vector<AnnotationRecord>& records, std::size_t k, bool opponent) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "K must be at least 1");
  std::map<std::vector<std::string>, std::size_t> counts;
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& r : records) {
    h = fnv1a(serialize_record(r), h);
    for (const auto& pp : r.phrase_pairs) {
      if (opponent) {
        ++counts[pp.serialized_tokens()];
      } else {
        ++counts[pp.left.tokens];
        ++counts[pp.right.tokens];
      }
    }
  }
  if (counts.size() < k) {
    throw Error(ErrorCode::KTooLarge,
                "asked for " + std::to_string(k) + " entries, corpus has " + std::to_string(counts.size()));
  }
  std::vector<std::pair<std::vector<std::string>, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return join_tokens(a.first) < join_tokens(b.first);
  });
  PhraseLexicon lex;
  lex.opponent = opponent;
  lex.source_hash = hex64(h);
  for (std::size_t i = 0; i < k; ++i) {
    lex.entries.push_back(ranked[i].first);
    lex.counts.push_back(ranked[i].second);
  }
  return lex;
}

LexiconEmbedder::LexiconEmbedder(const ListenerModel& listener, const PhraseLexicon& lexicon) : listener_(&listener) {
  if (lexicon.opponent && listener.kind() != ListenerKind::Discerning) {
    throw Error(ErrorCode::InvalidArgument, "opponent lexicons need a discerning listener");
  }
  std::vector<std::vector<TokenId>> seqs;
  for (const auto& e : lexicon.entries) seqs.push_back(encode_tokens(e, listener.vocab()));
  phrases_ = listener.phrase_embedding(seqs);
}

nn::Vector LexiconEmbedder::embed(const nn::Vector& feature) const {
  return phrases_.transpose() * listener_->image_embedding(feature);
}

nn::Matrix LexiconEmbedder::embed_all(const nn::Matrix& features) const {
  return phrases_.transpose() * listener_->image_embedding(features);
}

nn::Vector embed_image(const ListenerModel& listener, const PhraseLexicon& lexicon, const nn::Vector& feature) {
  return LexiconEmbedder(listener, lexicon).embed(feature);
}

// ------------------------------------------------------------------ classifier

LinearClassifier LinearClassifier::fit(const nn::Matrix& x, const std::vector<int>& labels,
                                       const ClassifierConfig& config) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one label per row");
  }
  std::map<int, std::size_t> per_class;
  for (int l : labels) ++per_class[l];
  if (per_class.size() < 2) throw Error(ErrorCode::DegenerateLabels, "need at least two classes");
  for (const auto& [c, n] : per_class) {
    if (n < 2) throw Error(ErrorCode::DegenerateLabels, "class " + std::to_string(c) + " has fewer than two examples");
  }

  LinearClassifier clf;
  for (const auto& [c, n] : per_class) clf.classes_.push_back(c);
  const auto n = static_cast<double>(x.rows());
  clf.mean_ = x.colwise().mean();
  const nn::Matrix centered = x.rowwise() - clf.mean_;
  clf.scale_ = (centered.array().square().colwise().sum() / n).sqrt().matrix();
  for (Eigen::Index j = 0; j < clf.scale_.size(); ++j) {
    if (!(clf.scale_(j) > 1e-12)) clf.scale_(j) = 1.0;
  }
  const nn::Matrix z = centered.array().rowwise() / clf.scale_.array();

  const auto C = static_cast<Eigen::Index>(clf.classes_.size());
  nn::Matrix onehot = nn::Matrix::Zero(x.rows(), C);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = std::lower_bound(clf.classes_.begin(), clf.classes_.end(), labels[i]) - clf.classes_.begin();
    onehot(static_cast<Eigen::Index>(i), c) = 1.0;
  }
  clf.weight_ = nn::Matrix::Zero(x.cols(), C);
  clf.bias_ = nn::RowVector::Zero(C);

  // Full-batch Adam on the convex objective.
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  nn::Matrix mw = nn::Matrix::Zero(x.cols(), C), vw = mw;
  nn::RowVector mb = nn::RowVector::Zero(C), vb = mb;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    nn::Matrix logits = (z * clf.weight_).rowwise() + clf.bias_;
    const nn::Vector m = logits.rowwise().maxCoeff();
    nn::Matrix p = (logits.colwise() - m).array().exp().matrix();
    p = p.array().colwise() / p.rowwise().sum().array();
    const nn::Matrix d = (p - onehot) / n;
    const nn::Matrix gw = z.transpose() * d + config.l2 * clf.weight_;
    const nn::RowVector gb = d.colwise().sum();
    const double t = static_cast<double>(it);
    mw = b1 * mw + (1 - b1) * gw;
    vw = b2 * vw + (1 - b2) * gw.cwiseAbs2();
    mb = b1 * mb + (1 - b1) * gb;
    vb = b2 * vb + (1 - b2) * gb.cwiseAbs2();
    const double c1 = 1 - std::pow(b1, t), c2 = 1 - std::pow(b2, t);
    clf.weight_.array() -= config.learning_rate * (mw.array() / c1) / ((vw.array() / c2).sqrt() + eps);
    clf.bias_.array() -= config.learning_rate * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);
  }
  return clf;
}

nn::Matrix LinearClassifier::scores(const nn::Matrix& x) const {
  if (x.cols() != weight_.rows()) throw Error(ErrorCode::ShapeMismatch, "classifier input width");
  const nn::Matrix z = (x.rowwise() - mean_).array().rowwise() / scale_.array();
  return (z * weight_).rowwise() + bias_;
}

std::vector<int> LinearClassifier::predict(const nn::Matrix& x) const {
  const nn::Matrix s = scores(x);
  std::vector<int> out;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    Eigen::Index best = 0;
    s.row(i).maxCoeff(&best);
    out.push_back(classes_[static_cast<std::size_t>(best)]);
  }
  return out;
}

double LinearClassifier::accuracy(const nn::Matrix& x, const std::vector<int>& labels) const {
  const auto pred = predict(x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i] ? 1 : 0;
  return pred.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(pred.size());
}

// ------------------------------------------------------------------ retrieval

std::vector<RetrievalHit> retrieve(const ListenerModel& listener, const std::vector<std::vector<std::string>>& query,
                                   const FeatureStore& images, std::size_t top_n, QueryStrategy strategy) {
  std::vector<std::vector<std::string>> phrases;
  for (const auto& q : query) {
    if (!q.empty()) phrases.push_back(q);
  }
  if (phrases.empty()) throw Error(ErrorCode::EmptyQuery, "query has no words");

  std::vector<std::vector<TokenId>> seqs;
  if (strategy == QueryStrategy::Concatenate) {
    std::vector<std::string> joined;
    for (const auto& p : phrases) joined.insert(joined.end(), p.begin(), p.end());
    seqs.push_back(encode_tokens(joined, listener.vocab()));
  } else {
    for (const auto& p : phrases) seqs.push_back(encode_tokens(p, listener.vocab()));
  }
  const nn::Vector theta = listener.phrase_embedding(seqs).rowwise().sum();

  nn::Matrix feats(static_cast<Eigen::Index>(images.dim()), static_cast<Eigen::Index>(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) feats.col(static_cast<Eigen::Index>(i)) = nn::to_vector(images.row(i));
  const nn::Vector s = listener.image_embedding(feats).transpose() * theta;

  std::vector<RetrievalHit> hits;
  for (std::size_t i = 0; i < images.size(); ++i) hits.push_back({images.ids()[i], s(static_cast<Eigen::Index>(i))});
  std::stable_sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) { return a.score > b.score; });
  if (top_n > 0 && hits.size() > top_n) hits.resize(top_n);
  return hits;
}

double average_precision(const std::vector<bool>& relevant) {
  double hits = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < relevant.size(); ++i) {
    if (!relevant[i]) continue;
    hits += 1.0;
    sum += hits / static_cast<double>(i + 1);
  }
  return hits > 0.0 ? sum / hits : 0.0;
}

// ------------------------------------------------------------------ explanations

namespace {

struct PhraseTally {
  std::set<std::size_t> images[2];  // image indices per category
  long occurrences[2] = {0, 0};
};

std::vector<Explanation> ranked_for(const std::map<std::vector<std::string>, PhraseTally>& tally, int side,
                                    std::size_t top_n) {
  std::vector<Explanation> out;
  const int other = 1 - side;
  for (const auto& [phrase, t] : tally) {
    if (t.occurrences[side] == 0) continue;
    out.push_back({phrase, static_cast<long>(t.images[side].size()) - static_cast<long>(t.images[other].size()),
                   t.occurrences[side] - t.occurrences[other]});
  }
  std::stable_sort(out.begin(), out.end(), [](const Explanation& a, const Explanation& b) {
    if (a.image_frequency != b.image_frequency) return a.image_frequency > b.image_frequency;
    if (a.phrase_frequency != b.phrase_frequency) return a.phrase_frequency > b.phrase_frequency;
    return join_tokens(a.phrase) < join_tokens(b.phrase);
  });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

}  // namespace

ExplanationReport explain_categories(const SpeakerModel& speaker, const std::vector<nn::Vector>& first,
                                     const std::vector<nn::Vector>& second, const ExplainOptions& options) {
  if (first.empty() || second.empty()) throw Error(ErrorCode::EmptyCategory, "both categories need images");
  if (speaker.kind() != SpeakerKind::Discerning) {
    throw Error(ErrorCode::InvalidArgument, "explanations need a discerning speaker");
  }
  const std::vector<nn::Vector>* sets[2] = {&first, &second};
  std::map<std::vector<std::string>, PhraseTally> tally;

  for (std::size_t i = 0; i < first.size(); ++i) {
    for (std::size_t j = 0; j < second.size(); ++j) {
      // phrases credited to (category, image) for this pair, deduplicated
      std::set<std::vector<std::string>> credited[2];
      for (int order = 0; order < 2; ++order) {
        const int lead = order;  // category whose image is described by the first half
        const std::size_t idx[2] = {i, j};
        const nn::Vector& x1 = (*sets[lead])[idx[lead]];
        const nn::Vector& x2 = (*sets[1 - lead])[idx[1 - lead]];
        const auto beam = beam_decode(speaker, speaker.context(x1, &x2), options.beam_width, options.max_len);
        for (const auto& s : beam) {
          const auto [p1, p2] = split_phrase_pair(s.tokens);
          if (!p1.empty()) credited[lead].insert(p1);
          if (!p2.empty()) credited[1 - lead].insert(p2);
        }
      }
      for (int side = 0; side < 2; ++side) {
        const std::size_t image = side == 0 ? i : j;
        for (const auto& p : credited[side]) {
          auto& t = tally[p];
          t.images[side].insert(image);
          ++t.occurrences[side];
        }
      }
    }
  }
  return {ranked_for(tally, 0, options.top_n), ranked_for(tally, 1, options.top_n)};
}

// ------------------------------------------------------------------ export

FeatureStore export_phrase_embeddings(const ListenerModel& listener,
                                      const std::vector<std::vector<std::string>>& phrases) {
  FeatureStore store(static_cast<std::size_t>(listener.dims().hidden));
  std::vector<std::vector<TokenId>> seqs;
  for (const auto& p : phrases) seqs.push_back(encode_tokens(p, listener.vocab()));
  const nn::Matrix theta = seqs.empty() ? nn::Matrix() : listener.phrase_embedding(seqs);
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    std::vector<float> row(static_cast<std::size_t>(theta.rows()));
    for (std::size_t r = 0; r < row.size(); ++r) row[r] = static_cast<float>(theta(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)));
    store.add(join_tokens(phrases[i]), row);
  }
  return store;
}

FeatureStore export_image_embeddings(const ListenerModel& listener, const FeatureStore& images) {
  FeatureStore store(static_cast<std::size_t>(listener.dims().hidden));
  for (std::size_t i = 0; i < images.size(); ++i) {
    const nn::Vector phi = listener.image_embedding(nn::to_vector(images.row(i)));
    std::vector<float> row(static_cast<std::size_t>(phi.size()));
    for (std::size_t r = 0; r < row.size(); ++r) row[r] = static_cast<float>(phi(static_cast<Eigen::Index>(r)));
    store.add(images.ids()[i], row);
  }
  return store;
}

}  // namespace refgame
