#include "refgame/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "refgame/error.hpp"
#include "refgame/render.hpp"

namespace refgame::synth {

namespace {

constexpr std::size_t kMinDifferences = 5;
constexpr std::size_t kMaxConsecutiveRejects = 1000;

std::string padded(std::size_t i) {
  std::ostringstream s;
  s.width(6);
  s.fill('0');
  s << i;
  return s.str();
}

using Templates = std::vector<std::vector<std::vector<std::string>>>;

// Phrasing for the default slots. Binary slots carry two surfaces per value,
// body colour four; the rest three.
const std::map<std::string, std::map<std::string, std::vector<std::string>>>& builtin_phrasing() {
  static const std::map<std::string, std::map<std::string, std::vector<std::string>>> table = {
      {"body_color",
       {{"red", {"red body", "red plane", "red fuselage", "painted red"}},
        {"blue", {"blue body", "blue plane", "blue fuselage", "painted blue"}},
        {"white", {"white body", "white plane", "white fuselage", "painted white"}},
        {"yellow", {"yellow body", "yellow plane", "yellow fuselage", "painted yellow"}},
        {"green", {"green body", "green plane", "green fuselage", "painted green"}}}},
      {"size",
       {{"small", {"small plane", "small aircraft", "compact size"}},
        {"medium", {"medium plane", "medium aircraft", "medium size"}},
        {"large", {"large plane", "large aircraft", "big size"}}}},
      {"nose", {{"pointy", {"pointy nose", "sharp nose"}}, {"round", {"round nose", "blunt nose"}}}},
      {"engines",
       {{"one", {"one engine", "single engine", "only one engine"}},
        {"two", {"two engines", "twin engines", "pair of engines"}},
        {"four", {"four engines", "quad engines", "many engines"}}}},
      {"tail",
       {{"high", {"stabilizer on top of tail", "high tail"}},
        {"low", {"stabilizer at bottom of tail", "low tail"}}}},
      {"background",
       {{"sky", {"in the sky", "flying", "sky background"}},
        {"runway", {"on the runway", "on the ground", "runway background"}},
        {"grass", {"on the grass", "grass field", "grass background"}}}},
  };
  return table;
}

}  // namespace

std::size_t WorldSpec::one_hot_width() const {
  std::size_t w = 0;
  for (const auto& s : slots) w += s.values.size();
  return w;
}

void WorldSpec::validate() const {
  if (slots.size() < kMinDifferences) throw Error(ErrorCode::InvalidWorld, "need at least 5 slots");
  for (const auto& s : slots) {
    if (s.values.size() < 2) throw Error(ErrorCode::InvalidWorld, "slot " + s.name + " needs >= 2 values");
  }
  std::vector<std::size_t> order = saliency_order;
  std::sort(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] != i) throw Error(ErrorCode::InvalidWorld, "saliency_order is not a permutation");
  }
  if (order.size() != slots.size()) throw Error(ErrorCode::InvalidWorld, "saliency_order is not a permutation");
  if (feature_dim < one_hot_width()) throw Error(ErrorCode::InvalidWorld, "feature_dim below one-hot width");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidWorld, "negative noise_sigma");
  if (!(phrase_drop_rate >= 0.0 && phrase_drop_rate < 1.0)) {
    throw Error(ErrorCode::InvalidWorld, "phrase_drop_rate must be in [0, 1)");
  }
}

WorldSpec WorldSpec::default_spec() {
  WorldSpec spec;
  spec.slots = {
      {"body_color", {"red", "blue", "white", "yellow", "green"}},
      {"size", {"small", "medium", "large"}},
      {"nose", {"pointy", "round"}},
      {"engines", {"one", "two", "four"}},
      {"tail", {"high", "low"}},
      {"background", {"sky", "runway", "grass"}},
  };
  spec.saliency_order = {0, 1, 2, 3, 4, 5};
  return spec;
}

// ---------------------------------------------------------------- Grammar

Grammar::Grammar(const WorldSpec& spec, Templates templates) : templates_(std::move(templates)) {
  if (templates_.size() != spec.slots.size()) throw Error(ErrorCode::InvalidWorld, "grammar slot count mismatch");
  for (std::size_t s = 0; s < templates_.size(); ++s) {
    if (templates_[s].size() != spec.slots[s].values.size()) {
      throw Error(ErrorCode::InvalidWorld, "grammar value count mismatch for " + spec.slots[s].name);
    }
    for (std::size_t v = 0; v < templates_[s].size(); ++v) {
      if (templates_[s][v].empty()) {
        throw Error(ErrorCode::InvalidWorld, "no surface for " + spec.slots[s].name + "=" + spec.slots[s].values[v]);
      }
      for (auto& surface : templates_[s][v]) {
        surface = tokenize_phrase(surface).text();
        if (!lookup_.emplace(surface, SlotValue{s, v}).second) {
          throw Error(ErrorCode::InvalidWorld, "surface \"" + surface + "\" used twice");
        }
      }
    }
  }
}

Grammar Grammar::for_world(const WorldSpec& spec) {
  const auto& table = builtin_phrasing();
  Templates templates;
  for (const auto& slot : spec.slots) {
    std::vector<std::vector<std::string>> per_value;
    const auto slot_it = table.find(slot.name);
    for (const auto& value : slot.values) {
      if (slot_it != table.end()) {
        const auto v_it = slot_it->second.find(value);
        if (v_it != slot_it->second.end()) {
          per_value.push_back(v_it->second);
          continue;
        }
      }
      std::string slot_words = slot.name;
      std::replace(slot_words.begin(), slot_words.end(), '_', ' ');
      per_value.push_back({value + " " + slot_words, slot_words + " " + value});
    }
    templates.push_back(std::move(per_value));
  }
  return Grammar(spec, std::move(templates));
}

std::optional<SlotValue> Grammar::parse(const std::string& text) const {
  auto it = lookup_.find(text);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<SlotValue> Grammar::parse(const AttributePhrase& phrase) const { return parse(phrase.text()); }

std::vector<std::string> Grammar::surface_tokens() const {
  std::set<std::string> tokens;
  for (const auto& [surface, sv] : lookup_) {
    std::istringstream in(surface);
    std::string t;
    while (in >> t) tokens.insert(t);
  }
  return {tokens.begin(), tokens.end()};
}

// ---------------------------------------------------------------- Dataset

const Split& SynthDataset::split(const std::string& name) const {
  for (const auto& s : splits) {
    if (s.name == name) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "no split named " + name);
}

const SynthObject& SynthDataset::object(const std::string& object_id) const {
  auto it = index_.find(object_id);
  if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "unknown object " + object_id);
  return splits[it->second.first].objects[it->second.second];
}

void SynthDataset::build_index() {
  index_.clear();
  for (std::size_t s = 0; s < splits.size(); ++s) {
    for (std::size_t i = 0; i < splits[s].objects.size(); ++i) index_[splits[s].objects[i].object_id] = {s, i};
  }
}

// ---------------------------------------------------------------- World

World::World(WorldSpec spec) : World(spec, Grammar::for_world(spec)) {}

World::World(WorldSpec spec, Grammar grammar) : spec_(std::move(spec)), grammar_(std::move(grammar)) {
  spec_.validate();
  std::size_t offset = 0;
  for (const auto& s : spec_.slots) {
    slot_offset_.push_back(offset);
    offset += s.values.size();
  }
  auto rng = make_stream(spec_.seed, 1);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec_.slots.size())));
  projection_.assign(spec_.feature_dim, std::vector<double>(offset));
  for (auto& row : projection_) {
    for (auto& x : row) x = normal(rng);
  }
}

Assignment World::random_assignment(std::mt19937_64& rng) const {
  Assignment a(spec_.slots.size());
  for (std::size_t s = 0; s < a.size(); ++s) {
    a[s] = std::uniform_int_distribution<std::size_t>(0, spec_.slots[s].values.size() - 1)(rng);
  }
  return a;
}

std::vector<float> World::clean_feature(const Assignment& assignment) const {
  std::vector<float> feature(spec_.feature_dim);
  for (std::size_t d = 0; d < spec_.feature_dim; ++d) {
    double acc = 0.0;
    for (std::size_t s = 0; s < assignment.size(); ++s) acc += projection_[d][slot_offset_[s] + assignment[s]];
    feature[d] = static_cast<float>(acc);
  }
  return feature;
}

SynthObject World::make_object(std::string object_id, Assignment assignment, std::mt19937_64& rng) const {
  if (assignment.size() != spec_.slots.size()) throw Error(ErrorCode::InvalidArgument, "assignment size mismatch");
  std::vector<double> latent(spec_.one_hot_width(), 0.0);
  for (std::size_t s = 0; s < assignment.size(); ++s) {
    if (assignment[s] >= spec_.slots[s].values.size()) {
      throw Error(ErrorCode::UnknownSlotValue, "value index out of range for " + spec_.slots[s].name);
    }
    latent[slot_offset_[s] + assignment[s]] = 1.0;
  }
  if (spec_.saliency_difficulty) {
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::size_t s = 0; s < assignment.size(); ++s) {
      const double blur = spec_.difficulty_step * static_cast<double>(saliency_rank(s));
      for (std::size_t v = 0; v < spec_.slots[s].values.size(); ++v) latent[slot_offset_[s] + v] += blur * unit(rng);
    }
  }
  std::normal_distribution<double> noise(0.0, spec_.noise_sigma);
  std::vector<float> feature(spec_.feature_dim);
  for (std::size_t d = 0; d < spec_.feature_dim; ++d) {
    double acc = 0.0;
    for (std::size_t k = 0; k < latent.size(); ++k) acc += projection_[d][k] * latent[k];
    feature[d] = static_cast<float>(acc + (spec_.noise_sigma > 0.0 ? noise(rng) : 0.0));
  }
  return SynthObject{std::move(object_id), std::move(assignment), std::move(feature)};
}

std::size_t World::saliency_rank(std::size_t slot) const {
  const auto it = std::find(spec_.saliency_order.begin(), spec_.saliency_order.end(), slot);
  return static_cast<std::size_t>(it - spec_.saliency_order.begin());
}

std::vector<std::size_t> World::differing_slots(const Assignment& a, const Assignment& b) const {
  std::vector<std::size_t> out;
  for (std::size_t slot : spec_.saliency_order) {
    if (a.at(slot) != b.at(slot)) out.push_back(slot);
  }
  return out;
}

Ground World::oracle_ground(const AttributePhrase& phrase, const Assignment& first, const Assignment& second) const {
  const auto sv = grammar_.parse(phrase);
  if (!sv) return Ground::Ambiguous;
  const bool in_first = first.at(sv->slot) == sv->value;
  const bool in_second = second.at(sv->slot) == sv->value;
  if (in_first == in_second) return Ground::Ambiguous;
  return in_first ? Ground::Left : Ground::Right;
}

Ground World::oracle_ground(const AttributePhrase& phrase, const SynthObject& first, const SynthObject& second) const {
  return oracle_ground(phrase, first.assignment, second.assignment);
}

AnnotationRecord World::describe_pair(const std::string& pair_id, const SynthObject& a, const SynthObject& b,
                                      std::mt19937_64& rng) const {
  AnnotationRecord record{pair_id, a.object_id, b.object_id, {}};
  const auto diffs = differing_slots(a.assignment, b.assignment);
  const std::size_t n = std::min(diffs.size(), static_cast<std::size_t>(kPhrasesPerAnnotation));
  auto pick = [&](SlotValue sv) {
    const auto& surfaces = grammar_.surfaces(sv);
    return surfaces[std::uniform_int_distribution<std::size_t>(0, surfaces.size() - 1)(rng)];
  };
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t slot = diffs[k];
    PhrasePair pp;
    pp.left = tokenize_phrase(pick({slot, a.assignment[slot]}));
    pp.right = tokenize_phrase(pick({slot, b.assignment[slot]}));
    pp.position = static_cast<int>(k + 1);
    record.phrase_pairs.push_back(std::move(pp));
  }
  if (spec_.phrase_drop_rate > 0.0 && !record.phrase_pairs.empty()) {
    std::bernoulli_distribution drop(spec_.phrase_drop_rate);
    std::vector<PhrasePair> kept;
    for (auto& pp : record.phrase_pairs) {
      if (!drop(rng)) kept.push_back(std::move(pp));
    }
    if (kept.empty()) kept.push_back(record.phrase_pairs.front());
    record.phrase_pairs = std::move(kept);
  }
  return record;
}

SynthDataset World::generate_dataset(const SplitSizes& sizes) const {
  const std::pair<const char*, std::size_t> plan[] = {{"train", sizes.train}, {"val", sizes.val}, {"test", sizes.test}};
  SynthDataset dataset;
  dataset.features = FeatureStore(spec_.feature_dim);
  for (std::size_t s = 0; s < 3; ++s) {
    const auto [name, n_pairs] = plan[s];
    auto rng = make_stream(spec_.seed, 100 + s);
    Split split{name, {}, {}};
    if (n_pairs > 0) {
      const std::size_t pool = std::max<std::size_t>(2, n_pairs);
      for (std::size_t i = 0; i < pool; ++i) {
        split.objects.push_back(make_object(std::string(name) + "_o" + padded(i), random_assignment(rng), rng));
      }
      std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
      std::size_t rejects = 0;
      while (split.records.size() < n_pairs) {
        const std::size_t i = pick(rng);
        const std::size_t j = pick(rng);
        if (i == j || differing_slots(split.objects[i].assignment, split.objects[j].assignment).size() < kMinDifferences) {
          if (++rejects >= kMaxConsecutiveRejects) {
            throw Error(ErrorCode::InfeasibleWorld, "1000 consecutive draws without a pair differing in 5 slots");
          }
          continue;
        }
        rejects = 0;
        split.records.push_back(describe_pair(std::string(name) + "_p" + padded(split.records.size()),
                                              split.objects[i], split.objects[j], rng));
      }
    }
    for (const auto& o : split.objects) dataset.features.add(o.object_id, o.feature);
    dataset.splits.push_back(std::move(split));
  }
  dataset.build_index();
  return dataset;
}

std::vector<SynthObject> sample_category(const World& world, const Category& category, std::size_t count,
                                         std::mt19937_64& rng) {
  const auto& slots = world.spec().slots;
  if (category.fixed.size() != slots.size()) throw Error(ErrorCode::InvalidArgument, "category slot count mismatch");
  std::vector<SynthObject> out;
  for (std::size_t i = 0; i < count; ++i) {
    Assignment a = world.random_assignment(rng);
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if (category.fixed[s]) a[s] = *category.fixed[s];
    }
    out.push_back(world.make_object(category.name + "_" + padded(i), std::move(a), rng));
  }
  return out;
}

// ---------------------------------------------------------------- Persistence

std::string manifest_json(const WorldSpec& spec, const Grammar& grammar) {
  nlohmann::ordered_json j;
  j["seed"] = spec.seed;
  j["feature_dim"] = spec.feature_dim;
  j["noise_sigma"] = spec.noise_sigma;
  j["saliency_difficulty"] = spec.saliency_difficulty;
  j["difficulty_step"] = spec.difficulty_step;
  j["phrase_drop_rate"] = spec.phrase_drop_rate;
  j["saliency_order"] = spec.saliency_order;
  nlohmann::ordered_json slots = nlohmann::ordered_json::array();
  for (const auto& s : spec.slots) slots.push_back({{"name", s.name}, {"values", s.values}});
  j["slots"] = std::move(slots);
  j["grammar"] = grammar.templates();
  return j.dump(2);
}

World world_from_manifest(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  WorldSpec spec;
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.feature_dim = j.at("feature_dim").get<std::size_t>();
  spec.noise_sigma = j.at("noise_sigma").get<double>();
  spec.saliency_difficulty = j.at("saliency_difficulty").get<bool>();
  spec.difficulty_step = j.at("difficulty_step").get<double>();
  spec.phrase_drop_rate = j.at("phrase_drop_rate").get<double>();
  spec.saliency_order = j.at("saliency_order").get<std::vector<std::size_t>>();
  for (const auto& s : j.at("slots")) {
    spec.slots.push_back({s.at("name").get<std::string>(), s.at("values").get<std::vector<std::string>>()});
  }
  Grammar grammar(spec, j.at("grammar").get<Templates>());
  return World(std::move(spec), std::move(grammar));
}

void write_dataset(const std::filesystem::path& dir, const World& world, const SynthDataset& dataset,
                   const WriteOptions& options) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest_json(world.spec(), world.grammar()) << '\n';
  }
  std::ofstream objects(dir / "objects.jsonl", std::ios::binary);
  for (const auto& split : dataset.splits) {
    save_annotations(dir / (split.name + ".jsonl"), split.records);
    for (const auto& o : split.objects) {
      nlohmann::ordered_json j;
      j["object_id"] = o.object_id;
      j["split"] = split.name;
      j["assignment"] = o.assignment;
      objects << j.dump() << '\n';
    }
  }
  dataset.features.save(dir / "features.apfv");
  if (options.images) {
    std::filesystem::create_directories(dir / "images");
    for (const auto& split : dataset.splits) {
      for (const auto& o : split.objects) {
        const auto png = encode_png(render_image(world.spec(), o, options.image_size));
        std::ofstream out(dir / "images" / (o.object_id + ".png"), std::ios::binary);
        out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
      }
    }
  }
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.json");
  if (!manifest) throw Error(ErrorCode::IoError, "missing manifest in " + dir.string());
  std::stringstream buffer;
  buffer << manifest.rdbuf();
  LoadedDataset loaded{world_from_manifest(buffer.str()), {}};
  auto& ds = loaded.dataset;
  ds.features = FeatureStore::load(dir / "features.apfv");
  for (const char* name : {"train", "val", "test"}) {
    Split split{name, {}, {}};
    if (std::filesystem::exists(dir / (split.name + ".jsonl"))) split.records = load_annotations(dir / (split.name + ".jsonl"));
    ds.splits.push_back(std::move(split));
  }
  std::ifstream objects(dir / "objects.jsonl");
  std::string line;
  while (std::getline(objects, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    SynthObject o;
    o.object_id = j.at("object_id").get<std::string>();
    o.assignment = j.at("assignment").get<Assignment>();
    const auto row = ds.features.row(o.object_id);
    o.feature.assign(row.begin(), row.end());
    const auto split_name = j.at("split").get<std::string>();
    for (auto& s : ds.splits) {
      if (s.name == split_name) s.objects.push_back(std::move(o));
    }
  }
  ds.build_index();
  return loaded;
}

}  // namespace refgame::synth
