#include "refgame/games.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "refgame/error.hpp"
#include "refgame/phrase.hpp"

namespace refgame {

namespace {

std::unordered_map<std::string, const AnnotationRecord*> index_records(const std::vector<AnnotationRecord>& records) {
  std::unordered_map<std::string, const AnnotationRecord*> out;
  for (const auto& r : records) out[r.pair_id] = &r;
  return out;
}

const AnnotationRecord& find_record(const std::unordered_map<std::string, const AnnotationRecord*>& index,
                                    const std::string& pair_id) {
  auto it = index.find(pair_id);
  if (it == index.end()) throw Error(ErrorCode::InvalidRecord, "unknown pair " + pair_id);
  return *it->second;
}

bool has_separator(const std::vector<std::string>& tokens) {
  return std::find(tokens.begin(), tokens.end(), kPairSeparator) != tokens.end();
}

GameTask task_for(const AnnotationRecord& r, const DecodedPhrase& d) {
  GameTask t;
  t.task_id = d.pair_id + ":" + to_string(d.target) + ":" + std::to_string(d.rank);
  t.pair_id = d.pair_id;
  t.image_a = r.image_a;
  t.image_b = r.image_b;
  t.phrase = d.tokens;
  t.target = d.target;
  t.rank = d.rank;
  // A discerning phrase "P1 vs P2" describes the target first, so the pair is
  // reordered to put the target in the first slot.
  if (has_separator(d.tokens) && d.target == Side::B) {
    std::swap(t.image_a, t.image_b);
    t.target = Side::A;
  }
  return t;
}

}  // namespace

std::vector<GameTask> annotation_tasks(const std::vector<AnnotationRecord>& records) {
  std::vector<GameTask> out;
  for (const auto& r : records) {
    for (const auto& pp : r.phrase_pairs) {
      for (int side = 0; side < 2; ++side) {
        GameTask t;
        t.pair_id = r.pair_id;
        t.image_a = r.image_a;
        t.image_b = r.image_b;
        t.target = side == 0 ? Side::A : Side::B;
        t.phrase = side == 0 ? pp.left.tokens : pp.right.tokens;
        t.position = pp.position;
        t.task_id = r.pair_id + ":" + std::to_string(pp.position) + to_string(t.target);
        out.push_back(std::move(t));
      }
    }
  }
  return out;
}

std::vector<DecodedPhrase> decode_pairs(const SpeakerModel& speaker, const std::vector<AnnotationRecord>& records,
                                        const FeatureStore& features, std::size_t beam_width, std::size_t max_len,
                                        bool both_targets) {
  std::vector<DecodedPhrase> out;
  for (const auto& r : records) {
    const nn::Vector a = nn::to_vector(features.row(r.image_a));
    const nn::Vector b = nn::to_vector(features.row(r.image_b));
    for (int side = 0; side < (both_targets ? 2 : 1); ++side) {
      const nn::Vector& target = side == 0 ? a : b;
      const nn::Vector& other = side == 0 ? b : a;
      const nn::Vector ctx =
          speaker.kind() == SpeakerKind::Simple ? speaker.context(target) : speaker.context(target, &other);
      for (const auto& s : beam_decode(speaker, ctx, beam_width, max_len)) {
        DecodedPhrase d;
        d.pair_id = r.pair_id;
        d.target = side == 0 ? Side::A : Side::B;
        d.rank = s.rank;
        d.tokens = s.tokens;
        d.log_prob = s.log_prob;
        d.truncated = s.truncated;
        out.push_back(std::move(d));
      }
    }
  }
  return out;
}

std::vector<GameTask> decoded_tasks(const std::vector<DecodedPhrase>& decoded,
                                    const std::vector<AnnotationRecord>& records) {
  const auto index = index_records(records);
  std::vector<GameTask> out;
  for (const auto& d : decoded) {
    out.push_back(task_for(find_record(index, d.pair_id), d));
  }
  return out;
}

std::string decoded_jsonl(const std::vector<DecodedPhrase>& decoded) {
  std::ostringstream out;
  for (const auto& d : decoded) {
    nlohmann::ordered_json j{{"pair_id", d.pair_id},
                             {"target", to_string(d.target)},
                             {"rank", d.rank},
                             {"phrase", join_tokens(d.tokens)},
                             {"log_prob", d.log_prob}};
    if (d.truncated) j["truncated"] = true;
    if (d.p_combined) {
      j["p_s"] = *d.p_speaker;
      j["p_l"] = *d.p_listener;
      j["p_combined"] = *d.p_combined;
    }
    out << j.dump() << "\n";
  }
  return out.str();
}

void write_decoded(const std::filesystem::path& path, const std::vector<DecodedPhrase>& decoded) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << decoded_jsonl(decoded);
}

std::vector<DecodedPhrase> read_decoded(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::vector<DecodedPhrase> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DecodedPhrase d;
      d.pair_id = j.at("pair_id").get<std::string>();
      d.target = side_from_string(j.at("target").get<std::string>());
      d.rank = j.at("rank").get<int>();
      std::istringstream words(j.at("phrase").get<std::string>());
      for (std::string w; words >> w;) d.tokens.push_back(w);
      d.log_prob = j.at("log_prob").get<double>();
      d.truncated = j.value("truncated", false);
      if (j.contains("p_combined")) {
        d.p_speaker = j.at("p_s").get<double>();
        d.p_listener = j.at("p_l").get<double>();
        d.p_combined = j.at("p_combined").get<double>();
      }
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

PairListener oracle_listener(const synth::World& world, const synth::SynthDataset& dataset) {
  return [&world, &dataset](const std::string& left, const std::string& right,
                            const std::vector<std::string>& phrase) -> ListenerScore {
    const auto& l = dataset.object(left).assignment;
    const auto& r = dataset.object(right).assignment;
    auto ground = [&](const std::vector<std::string>& tokens) -> ListenerScore {
      if (tokens.empty()) return {0.5, 0.5};
      switch (world.oracle_ground(phrase_from_tokens(tokens), l, r)) {
        case synth::Ground::Left: return {1.0, 0.0};
        case synth::Ground::Right: return {0.0, 1.0};
        case synth::Ground::Ambiguous: return {0.5, 0.5};
      }
      return {0.5, 0.5};
    };
    if (!has_separator(phrase)) return ground(phrase);
    const auto [p1, p2] = split_phrase_pair(phrase);
    if (p2.empty()) return ground(p1);
    const ListenerScore s2 = ground(p2);
    if (p1.empty()) return {s2.p_right, s2.p_left};
    const ListenerScore s1 = ground(p1);
    return {average_directed(s1.p_left, s2.p_right), average_directed(s1.p_right, s2.p_left)};
  };
}

PairListener model_listener(const ListenerModel& model, const FeatureStore& features) {
  return [&model, &features](const std::string& left, const std::string& right,
                             const std::vector<std::string>& phrase) -> ListenerScore {
    const nn::Vector l = nn::to_vector(features.row(left));
    const nn::Vector r = nn::to_vector(features.row(right));
    if (!has_separator(phrase)) return model.score(l, r, phrase);
    const auto [p1, p2] = split_phrase_pair(phrase);
    return discerning_score(model, l, r, p1, p2);
  };
}

std::vector<std::vector<DecodedPhrase>> group_beams(const std::vector<DecodedPhrase>& decoded) {
  std::vector<std::vector<DecodedPhrase>> groups;
  std::map<std::pair<std::string, Side>, std::size_t> where;
  for (const auto& d : decoded) {
    const auto key = std::make_pair(d.pair_id, d.target);
    auto it = where.find(key);
    if (it == where.end()) {
      it = where.emplace(key, groups.size()).first;
      groups.emplace_back();
    }
    groups[it->second].push_back(d);
  }
  for (auto& g : groups) {
    std::stable_sort(g.begin(), g.end(), [](const DecodedPhrase& a, const DecodedPhrase& b) { return a.rank < b.rank; });
  }
  return groups;
}

namespace {

std::vector<ScoredPhrase> as_beam(const std::vector<DecodedPhrase>& group) {
  std::vector<ScoredPhrase> beam;
  for (const auto& d : group) {
    ScoredPhrase s;
    s.tokens = d.tokens;
    s.log_prob = d.log_prob;
    s.rank = d.rank;
    s.truncated = d.truncated;
    beam.push_back(std::move(s));
  }
  return beam;
}

std::vector<double> target_probs(const std::vector<DecodedPhrase>& group, const AnnotationRecord& record,
                                 const PairListener& listener) {
  std::vector<double> out;
  for (const auto& d : group) out.push_back(target_probability(task_for(record, d), listener));
  return out;
}

}  // namespace

std::vector<DecodedPhrase> rerank_decoded(const std::vector<DecodedPhrase>& decoded,
                                          const std::vector<AnnotationRecord>& records, const PairListener& listener,
                                          double lambda) {
  const auto index = index_records(records);
  std::vector<DecodedPhrase> out;
  for (const auto& group : group_beams(decoded)) {
    const auto& record = find_record(index, group.front().pair_id);
    const auto ranked = rerank(as_beam(group), target_probs(group, record, listener), lambda);
    for (const auto& r : ranked) {
      DecodedPhrase d = group[r.beam_index];
      d.rank = r.phrase.rank;
      d.p_speaker = r.p_speaker;
      d.p_listener = r.p_listener;
      d.p_combined = r.p_combined;
      out.push_back(std::move(d));
    }
  }
  return out;
}

std::vector<RerankCase> rerank_cases(const std::vector<DecodedPhrase>& decoded,
                                     const std::vector<AnnotationRecord>& records, const PairListener& listener,
                                     const PairListener& judge) {
  const auto index = index_records(records);
  std::vector<RerankCase> cases;
  for (const auto& group : group_beams(decoded)) {
    const auto& record = find_record(index, group.front().pair_id);
    RerankCase c;
    c.beam = as_beam(group);
    c.listener_probs = target_probs(group, record, listener);
    for (double p : target_probs(group, record, judge)) c.judge_correct.push_back(counts_correct(p));
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace refgame
