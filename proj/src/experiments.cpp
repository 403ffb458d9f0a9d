#include "refgame/experiments.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "refgame/error.hpp"
#include "refgame/random.hpp"

namespace refgame {

namespace {

constexpr std::size_t kFixedSlots[] = {0, 1, 3, 5};

nn::Matrix feature_matrix(const std::vector<synth::SynthObject>& objects) {
  if (objects.empty()) return {};
  nn::Matrix m(static_cast<Eigen::Index>(objects.front().feature.size()), static_cast<Eigen::Index>(objects.size()));
  for (std::size_t i = 0; i < objects.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = nn::to_vector(objects[i].feature);
  return m;
}

bool covers(const synth::World& world, const std::vector<Explanation>& list, const std::vector<std::size_t>& slots,
            std::size_t depth) {
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < std::min(depth, list.size()); ++i) {
    if (auto sv = world.grammar().parse(join_tokens(list[i].phrase))) seen.insert(sv->slot);
  }
  return std::all_of(slots.begin(), slots.end(), [&](std::size_t s) { return seen.count(s) != 0; });
}

}  // namespace

std::vector<synth::Category> classification_categories(const synth::World& world, std::size_t count,
                                                       std::uint64_t seed) {
  const auto& slots = world.spec().slots;
  for (std::size_t s : kFixedSlots) {
    if (s >= slots.size()) throw Error(ErrorCode::InvalidWorld, "classification needs the default slot layout");
  }
  std::size_t combos = 1;
  for (std::size_t s : kFixedSlots) combos *= slots[s].values.size();
  if (count > combos) throw Error(ErrorCode::InvalidArgument, "more categories than slot combinations");

  auto rng = make_stream(seed, 31);
  std::set<std::vector<std::size_t>> used;
  std::vector<synth::Category> out;
  while (out.size() < count) {
    std::vector<std::size_t> combo;
    for (std::size_t s : kFixedSlots) {
      combo.push_back(std::uniform_int_distribution<std::size_t>(0, slots[s].values.size() - 1)(rng));
    }
    if (!used.insert(combo).second) continue;
    synth::Category c{"cat" + std::to_string(out.size()), std::vector<std::optional<std::size_t>>(slots.size())};
    for (std::size_t i = 0; i < combo.size(); ++i) c.fixed[kFixedSlots[i]] = combo[i];
    out.push_back(std::move(c));
  }
  return out;
}

LabeledImages sample_labeled(const synth::World& world, const std::vector<synth::Category>& categories,
                             std::size_t per_category, std::mt19937_64& rng) {
  std::vector<synth::SynthObject> objects;
  LabeledImages out;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    for (auto& o : synth::sample_category(world, categories[c], per_category, rng)) {
      objects.push_back(std::move(o));
      out.labels.push_back(static_cast<int>(c));
    }
  }
  out.features = feature_matrix(objects);
  return out;
}

ClassificationResult classification_run(const ListenerModel& listener, const std::vector<AnnotationRecord>& train_records,
                                        std::size_t k, const LabeledImages& train, const LabeledImages& test,
                                        const ClassifierConfig& config, bool opponent) {
  const LexiconEmbedder embedder(listener, build_lexicon(train_records, k, opponent));
  const nn::Matrix x_train = embedder.embed_all(train.features).transpose();
  const nn::Matrix x_test = embedder.embed_all(test.features).transpose();
  const auto clf = LinearClassifier::fit(x_train, train.labels, config);
  return {k, clf.accuracy(x_train, train.labels), clf.accuracy(x_test, test.labels)};
}

std::vector<SlotQuery> single_slot_queries(const synth::World& world, std::size_t count) {
  const auto& slots = world.spec().slots;
  std::vector<SlotQuery> out;
  for (std::size_t round = 0; out.size() < count; ++round) {
    bool any = false;
    for (std::size_t s = 0; s < slots.size() && out.size() < count; ++s) {
      if (round >= slots[s].values.size()) continue;
      any = true;
      const synth::SlotValue sv{s, round};
      out.push_back({sv, tokenize_phrase(world.grammar().surfaces(sv).front()).tokens});
    }
    if (!any) break;
  }
  return out;
}

std::vector<double> retrieval_average_precision(const ListenerModel& listener, const std::vector<SlotQuery>& queries,
                                                const std::vector<synth::SynthObject>& objects) {
  FeatureStore store(objects.empty() ? 0 : objects.front().feature.size());
  std::map<std::string, const synth::SynthObject*> by_id;
  for (const auto& o : objects) {
    store.add(o.object_id, o.feature);
    by_id[o.object_id] = &o;
  }
  std::vector<double> out;
  for (const auto& q : queries) {
    std::vector<bool> relevant;
    for (const auto& hit : retrieve(listener, {q.phrase}, store)) {
      relevant.push_back(by_id.at(hit.image_id)->assignment[q.target.slot] == q.target.value);
    }
    out.push_back(average_precision(relevant));
  }
  return out;
}

ExplanationTrial explanation_trial(const synth::World& world, const SpeakerModel& speaker, std::size_t m,
                                   std::size_t per_category, std::mt19937_64& rng, const ExplainOptions& options) {
  const auto& slots = world.spec().slots;
  if (m == 0 || m > slots.size()) throw Error(ErrorCode::InvalidArgument, "m must lie in 1..slot count");
  std::vector<std::size_t> order(slots.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  ExplanationTrial t;
  t.differing_slots.assign(order.begin(), order.begin() + static_cast<long>(m));
  std::sort(t.differing_slots.begin(), t.differing_slots.end());
  t.first = {"first", std::vector<std::optional<std::size_t>>(slots.size())};
  t.second = {"second", std::vector<std::optional<std::size_t>>(slots.size())};
  for (std::size_t s : t.differing_slots) {
    const std::size_t n = slots[s].values.size();
    const std::size_t a = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const std::size_t b = (a + 1 + std::uniform_int_distribution<std::size_t>(0, n - 2)(rng)) % n;
    t.first.fixed[s] = a;
    t.second.fixed[s] = b;
  }
  std::vector<nn::Vector> first, second;
  for (const auto& o : synth::sample_category(world, t.first, per_category, rng)) first.push_back(nn::to_vector(o.feature));
  for (const auto& o : synth::sample_category(world, t.second, per_category, rng)) second.push_back(nn::to_vector(o.feature));
  t.report = explain_categories(speaker, first, second, options);
  t.first_covered = covers(world, t.report.first, t.differing_slots, 2 * m);
  t.second_covered = covers(world, t.report.second, t.differing_slots, 2 * m);
  return t;
}

}  // namespace refgame
