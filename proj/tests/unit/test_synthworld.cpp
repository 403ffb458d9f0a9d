#include <doctest.h>

#include <fstream>
#include <iterator>
#include <set>

#include "helpers.hpp"
#include "refgame/error.hpp"
#include "refgame/render.hpp"
#include "refgame/synthworld.hpp"

using namespace refgame;
using namespace refgame::synth;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const World& default_world() {
  static const World world(WorldSpec::default_spec());
  return world;
}

}  // namespace

TEST_SUITE("synthworld") {
  TEST_CASE("default spec produces the requested records with five pairs each") {
    const auto ds = default_world().generate_dataset({100, 10, 10});
    const auto& train = ds.split("train");
    CHECK(train.records.size() == 100);
    for (const auto& r : train.records) CHECK(r.phrase_pairs.size() == 5);
    CHECK(default_world().spec().slots.size() == 6);
  }

  TEST_CASE("every emitted pair differs in at least five slots, described in saliency order") {
    const auto& world = default_world();
    const auto ds = world.generate_dataset({300, 0, 0});
    for (const auto& r : ds.split("train").records) {
      const auto& a = ds.object(r.image_a).assignment;
      const auto& b = ds.object(r.image_b).assignment;
      std::vector<std::size_t> differing;
      for (std::size_t slot : world.spec().saliency_order) {
        if (a[slot] != b[slot]) differing.push_back(slot);
      }
      REQUIRE(differing.size() >= 5);
      for (std::size_t k = 0; k < 5; ++k) {
        const auto& pp = r.phrase_pairs[k];
        CHECK(pp.position == static_cast<int>(k) + 1);
        const auto left = world.grammar().parse(pp.left);
        const auto right = world.grammar().parse(pp.right);
        REQUIRE(left.has_value());
        REQUIRE(right.has_value());
        CHECK(left->slot == differing[k]);
        CHECK(left->value == a[differing[k]]);
        CHECK(right->slot == differing[k]);
        CHECK(right->value == b[differing[k]]);
        CHECK(world.oracle_ground(pp.left, a, b) == Ground::Left);
        CHECK(world.oracle_ground(pp.right, a, b) == Ground::Right);
      }
    }
  }

  TEST_CASE("oracle grounding rules") {
    const auto& world = default_world();
    // slots: body_color, size, nose, engines, tail, background
    const Assignment pointy_red = {0, 0, 0, 0, 0, 0};
    const Assignment round_red = {0, 0, 1, 0, 0, 0};
    CHECK(world.oracle_ground(tokenize_phrase("pointy nose"), pointy_red, round_red) == Ground::Left);
    CHECK(world.oracle_ground(tokenize_phrase("pointy nose"), round_red, pointy_red) == Ground::Right);
    CHECK(world.oracle_ground(tokenize_phrase("red body"), pointy_red, round_red) == Ground::Ambiguous);
    CHECK(world.oracle_ground(tokenize_phrase("purple wings"), pointy_red, round_red) == Ground::Ambiguous);
  }

  TEST_CASE("grammar surfaces are unique and every value has one") {
    const auto& g = default_world().grammar();
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto& slot : g.templates()) {
      for (const auto& value : slot) {
        CHECK_FALSE(value.empty());
        for (const auto& s : value) {
          seen.insert(s);
          ++total;
        }
      }
    }
    CHECK(seen.size() == total);
    CHECK(g.surface_count() == total);
  }

  TEST_CASE("same seed gives byte-identical dataset directories") {
    testing::TempDir a;
    testing::TempDir b;
    WriteOptions opts;
    opts.image_size = 64;
    for (const auto* dir : {&a, &b}) {
      const World world(WorldSpec::default_spec());
      write_dataset(dir->path(), world, world.generate_dataset({20, 5, 5}), opts);
    }
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
      if (!entry.is_regular_file()) continue;
      const auto rel = std::filesystem::relative(entry.path(), a.path());
      CHECK_MESSAGE(slurp(entry.path()) == slurp(b.path() / rel), rel.string());
      ++files;
    }
    CHECK(files > 30);
  }

  TEST_CASE("dataset reloads with world and features intact") {
    testing::TempDir dir;
    const auto& world = default_world();
    const auto ds = world.generate_dataset({20, 5, 5});
    write_dataset(dir.path(), world, ds, {false, 64});
    const auto loaded = load_dataset(dir.path());
    CHECK(loaded.dataset.features == ds.features);
    CHECK(loaded.dataset.split("val").records.size() == 5);
    CHECK(loaded.world.grammar().surface_tokens() == world.grammar().surface_tokens());
    const auto& o = ds.split("test").objects.front();
    CHECK(loaded.dataset.object(o.object_id).assignment == o.assignment);
  }

  TEST_CASE("different seeds give different worlds") {
    auto spec = WorldSpec::default_spec();
    spec.seed = 8;
    const World other(spec);
    const auto a = default_world().generate_dataset({5, 0, 0});
    const auto b = other.generate_dataset({5, 0, 0});
    CHECK_FALSE(a.features == b.features);
  }

  TEST_CASE("invalid specs are rejected") {
    auto spec = WorldSpec::default_spec();
    spec.slots.resize(4);
    spec.saliency_order = {0, 1, 2, 3};
    CHECK_THROWS_AS(World{spec}, Error);

    spec = WorldSpec::default_spec();
    spec.feature_dim = 10;
    try {
      World w(spec);
      FAIL("expected InvalidWorld");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidWorld);
    }

    spec = WorldSpec::default_spec();
    spec.saliency_order = {0, 0, 1, 2, 3, 4};
    CHECK_THROWS_AS(World{spec}, Error);
  }

  TEST_CASE("a two-object pool that cannot differ in five slots is infeasible") {
    // A one-pair split draws from a pool of two objects; some seeds give a
    // pool whose only pair differs in fewer than five slots.
    bool saw_infeasible = false;
    for (std::uint64_t seed = 0; seed < 64 && !saw_infeasible; ++seed) {
      auto spec = WorldSpec::default_spec();
      spec.seed = seed;
      const World world(spec);
      try {
        world.generate_dataset({1, 0, 0});
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InfeasibleWorld);
        saw_infeasible = true;
      }
    }
    CHECK(saw_infeasible);
  }

  TEST_CASE("phrase drop keeps at least one pair and stays grammatical") {
    auto spec = WorldSpec::default_spec();
    spec.phrase_drop_rate = 0.5;
    const World world(spec);
    const auto ds = world.generate_dataset({200, 0, 0});
    std::size_t total = 0;
    for (const auto& r : ds.split("train").records) {
      CHECK(r.phrase_pairs.size() >= 1);
      total += r.phrase_pairs.size();
    }
    CHECK(total < 200 * 5);
    CHECK(total > 200);
  }

  TEST_CASE("features are the projection of the latent one-hot plus small noise") {
    const auto& world = default_world();
    const auto ds = world.generate_dataset({10, 0, 0});
    for (const auto& o : ds.split("train").objects) {
      const auto clean = world.clean_feature(o.assignment);
      double sq = 0.0;
      for (std::size_t i = 0; i < clean.size(); ++i) sq += (clean[i] - o.feature[i]) * (clean[i] - o.feature[i]);
      const double rms = std::sqrt(sq / static_cast<double>(clean.size()));
      CHECK(rms < 3 * world.spec().noise_sigma);
      CHECK(rms > 0.3 * world.spec().noise_sigma);
    }
  }

  TEST_CASE("rendering is deterministic and encodes to identical bytes") {
    const auto& world = default_world();
    const SynthObject o{"o", {1, 2, 0, 1, 0, 2}, {}};
    const auto a = render_image(world.spec(), o, 96);
    const auto b = render_image(world.spec(), o, 96);
    CHECK(a.rgb == b.rgb);
    CHECK(encode_png(a) == encode_png(b));
    const auto png = encode_png(a);
    REQUIRE(png.size() > 8);
    CHECK(png[1] == 'P');
    CHECK(png[2] == 'N');
    CHECK(png[3] == 'G');
  }

  TEST_CASE("changing only body colour changes only fuselage pixels") {
    const auto& world = default_world();
    const SynthObject red{"r", {0, 1, 0, 1, 0, 0}, {}};
    const SynthObject blue{"b", {1, 1, 0, 1, 0, 0}, {}};
    const auto ia = render_image(world.spec(), red, 128);
    const auto ib = render_image(world.spec(), blue, 128);
    const auto la = layout_for(world.spec(), red, 128);
    const auto lb = layout_for(world.spec(), blue, 128);
    std::size_t changed = 0;
    for (std::size_t y = 0; y < ia.height; ++y) {
      for (std::size_t x = 0; x < ia.width; ++x) {
        if (ia.at(x, y) == ib.at(x, y)) continue;
        ++changed;
        CHECK(ia.at(x, y) == la.body);
        CHECK(ib.at(x, y) == lb.body);
      }
    }
    CHECK(changed > 100);
  }

  TEST_CASE("pointy nose draws a triangle narrowing towards the tip") {
    const auto& world = default_world();
    const SynthObject pointy{"p", {0, 2, 0, 1, 0, 0}, {}};
    const SynthObject round{"q", {0, 2, 1, 1, 0, 0}, {}};
    const auto l = layout_for(world.spec(), pointy, 128);
    const auto extent = [&](const Image& img, double fx) {
      const auto x = static_cast<std::size_t>(fx);
      std::size_t n = 0;
      for (std::size_t y = 0; y < img.height; ++y) n += img.at(x, y) == l.part ? 1 : 0;
      return n;
    };
    const auto ip = render_image(world.spec(), pointy, 128);
    const auto ir = render_image(world.spec(), round, 128);
    const double near_base = l.nose_base_x + 0.1 * (l.nose_tip_x - l.nose_base_x);
    const double near_tip = l.nose_base_x + 0.8 * (l.nose_tip_x - l.nose_base_x);
    CHECK(extent(ip, near_tip) > 0);
    CHECK(extent(ip, near_tip) < extent(ip, near_base));
    CHECK(extent(ir, near_base) > extent(ip, near_base));
  }

  TEST_CASE("render preconditions") {
    const auto& world = default_world();
    const SynthObject o{"o", {0, 0, 0, 0, 0, 0}, {}};
    CHECK_THROWS_AS(render_image(world.spec(), o, 32), Error);
    const SynthObject bad{"o", {9, 0, 0, 0, 0, 0}, {}};
    try {
      render_image(world.spec(), bad, 64);
      FAIL("expected UnknownSlotValue");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnknownSlotValue);
    }
  }
}
