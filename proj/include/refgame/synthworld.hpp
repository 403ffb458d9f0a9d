#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "refgame/annotation.hpp"
#include "refgame/random.hpp"
#include "refgame/feature_store.hpp"
#include "refgame/phrase.hpp"

namespace refgame::synth {

struct Slot {
  std::string name;
  std::vector<std::string> values;
};

/// Value index per slot, in slot order.
using Assignment = std::vector<std::size_t>;

struct WorldSpec {
  std::vector<Slot> slots;
  std::vector<std::size_t> saliency_order;  // permutation of slot indices
  std::size_t feature_dim = 64;
  double noise_sigma = 0.1;
  std::uint64_t seed = 7;
  // When set, latent indicators of the slot at saliency rank r are blurred
  // with N(0, (difficulty_step * r)^2) before projection, so later
  // annotation positions are harder to ground.
  bool saliency_difficulty = false;
  double difficulty_step = 0.15;
  // Probability that a generated phrase pair is dropped from its record
  // (at least one always survives). Mimics a consistency-filtering pass.
  double phrase_drop_rate = 0.0;

  std::size_t one_hot_width() const;
  /// Throws InvalidWorld.
  void validate() const;

  static WorldSpec default_spec();
};

struct SlotValue {
  std::size_t slot = 0;
  std::size_t value = 0;
  auto operator<=>(const SlotValue&) const = default;
};

/// Surface phrases per (slot, value); surfaces are unique across the grammar.
class Grammar {
 public:
  Grammar() = default;
  /// templates[slot][value] -> surfaces. Throws InvalidWorld on a missing or
  /// duplicated surface.
  Grammar(const WorldSpec& spec, std::vector<std::vector<std::vector<std::string>>> templates);

  /// Built-in phrasing for the default slots, generic "<value> <slot>" forms otherwise.
  static Grammar for_world(const WorldSpec& spec);

  const std::vector<std::string>& surfaces(SlotValue sv) const { return templates_.at(sv.slot).at(sv.value); }
  const std::vector<std::vector<std::vector<std::string>>>& templates() const { return templates_; }
  std::optional<SlotValue> parse(const AttributePhrase& phrase) const;
  std::optional<SlotValue> parse(const std::string& text) const;
  /// Every surface token, sorted.
  std::vector<std::string> surface_tokens() const;
  std::size_t surface_count() const { return lookup_.size(); }

 private:
  std::vector<std::vector<std::vector<std::string>>> templates_;
  std::map<std::string, SlotValue> lookup_;
};

struct SynthObject {
  std::string object_id;
  Assignment assignment;
  std::vector<float> feature;
};

enum class Ground { Left, Right, Ambiguous };

struct SplitSizes {
  std::size_t train = 2000;
  std::size_t val = 200;
  std::size_t test = 200;
};

struct Split {
  std::string name;
  std::vector<SynthObject> objects;
  std::vector<AnnotationRecord> records;
};

struct SynthDataset {
  std::vector<Split> splits;  // train, val, test
  FeatureStore features;

  const Split& split(const std::string& name) const;
  const SynthObject& object(const std::string& object_id) const;
  bool has_object(const std::string& object_id) const { return index_.count(object_id) != 0; }
  void build_index();

 private:
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> index_;
};

using refgame::make_stream;

/// The generated world: spec, grammar and the fixed latent-to-feature projection.
class World {
 public:
  explicit World(WorldSpec spec);
  World(WorldSpec spec, Grammar grammar);

  const WorldSpec& spec() const { return spec_; }
  const Grammar& grammar() const { return grammar_; }

  Assignment random_assignment(std::mt19937_64& rng) const;
  /// feature = projection(scaled one-hot) + N(0, noise_sigma), noise drawn from `rng`.
  SynthObject make_object(std::string object_id, Assignment assignment, std::mt19937_64& rng) const;
  std::vector<float> clean_feature(const Assignment& assignment) const;

  /// Slots where the assignments differ, in saliency order.
  std::vector<std::size_t> differing_slots(const Assignment& a, const Assignment& b) const;
  std::size_t saliency_rank(std::size_t slot) const;

  Ground oracle_ground(const AttributePhrase& phrase, const SynthObject& first, const SynthObject& second) const;
  Ground oracle_ground(const AttributePhrase& phrase, const Assignment& first, const Assignment& second) const;

  /// Pairs two pool objects that differ in at least five slots (resampling
  /// otherwise) and describes the first five differences in saliency order.
  /// Throws InfeasibleWorld after 1000 consecutive failed draws.
  SynthDataset generate_dataset(const SplitSizes& sizes) const;

  /// Builds a record from the latent difference of two objects.
  AnnotationRecord describe_pair(const std::string& pair_id, const SynthObject& a, const SynthObject& b,
                                 std::mt19937_64& rng) const;

 private:
  WorldSpec spec_;
  Grammar grammar_;
  std::vector<std::vector<double>> projection_;  // feature_dim rows x one_hot_width cols
  std::vector<std::size_t> slot_offset_;
};

/// Fixes some slots (nullopt = free) and samples the rest uniformly.
struct Category {
  std::string name;
  std::vector<std::optional<std::size_t>> fixed;
};

std::vector<SynthObject> sample_category(const World& world, const Category& category, std::size_t count,
                                         std::mt19937_64& rng);

/// Manifest (spec + grammar) for reconstructing the oracle.
std::string manifest_json(const WorldSpec& spec, const Grammar& grammar);
World world_from_manifest(const std::string& json_text);

struct WriteOptions {
  bool images = true;
  std::size_t image_size = 128;
};

/// Writes <dir>/{train,val,test}.jsonl, features.apfv (+ sidecar),
/// objects.jsonl (latent assignments), manifest.json and images/<id>.png.
void write_dataset(const std::filesystem::path& dir, const World& world, const SynthDataset& dataset,
                   const WriteOptions& options);

struct LoadedDataset {
  World world;
  SynthDataset dataset;
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace refgame::synth
