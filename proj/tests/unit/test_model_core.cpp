#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "refgame/binary_io.hpp"
#include "refgame/error.hpp"
#include "refgame/nn/adam.hpp"
#include "refgame/nn/checkpoint.hpp"
#include "refgame/nn/gradcheck.hpp"
#include "refgame/nn/layers.hpp"
#include "refgame/profile.hpp"
#include "tiny_models.hpp"

using namespace refgame;
using namespace refgame::nn;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<SpeakerExample> speaker_batch(const SpeakerModel& m, std::mt19937_64& rng, std::size_t n) {
  std::vector<SpeakerExample> out;
  const long f = m.dims().feature_dim;
  std::uniform_int_distribution<int> word(kNumSpecials, static_cast<int>(m.vocab().size()) - 1);
  for (std::size_t i = 0; i < n; ++i) {
    SpeakerExample e;
    e.first = testing::random_vector(f, rng);
    if (m.kind() == SpeakerKind::Discerning) e.second = testing::random_vector(f, rng);
    e.ids = {kStartId, word(rng), word(rng), word(rng), kEndId};
    if (i % 2 == 1) e.ids = {kStartId, word(rng), kEndId};
    out.push_back(e);
  }
  return out;
}

std::vector<ListenerExample> listener_batch(const ListenerModel& m, std::mt19937_64& rng, std::size_t n) {
  std::vector<ListenerExample> out;
  const long f = m.dims().feature_dim;
  std::uniform_int_distribution<int> word(kNumSpecials, static_cast<int>(m.vocab().size()) - 1);
  for (std::size_t i = 0; i < n; ++i) {
    ListenerExample e;
    e.target = testing::random_vector(f, rng);
    e.distractor = testing::random_vector(f, rng);
    e.ids = {kStartId, word(rng), word(rng), kEndId};
    if (i % 3 == 2) e.ids = {kStartId, word(rng), kSeparatorId, word(rng), word(rng), kEndId};
    out.push_back(e);
  }
  return out;
}

template <typename T>
std::vector<const T*> pointers(const std::vector<T>& v) {
  std::vector<const T*> out;
  for (const auto& x : v) out.push_back(&x);
  return out;
}

}  // namespace

TEST_SUITE("model-core") {
  TEST_CASE("one LSTM step matches the closed-form cell equations") {
    ParameterSet p;
    const auto cell = Lstm::create(p, "cell", 2, 2);
    // Hand-set weights, gate blocks (i, f, g, o), two units each.
    p[cell.w] << 0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8, 0.2, 0.1, -0.3, 0.5, 0.4, 0.4, -0.1, 0.2;
    p[cell.u] << 0.05, 0.1, -0.1, 0.2, 0.3, -0.2, 0.1, 0.1, -0.4, 0.3, 0.2, 0.2, 0.1, -0.3, 0.5, 0.0;
    p[cell.b] << 0.0, 0.1, 1.0, 1.0, -0.1, 0.2, 0.3, -0.3;
    Matrix x(2, 1);
    x << 0.7, -1.2;
    LstmState prev{Matrix(2, 1), Matrix(2, 1)};
    prev.h << 0.3, -0.1;
    prev.c << 0.5, 0.25;

    const auto next = cell.step(p, x, prev);

    const auto& W = p[cell.w];
    const auto& U = p[cell.u];
    const auto& b = p[cell.b];
    for (int unit = 0; unit < 2; ++unit) {
      auto pre = [&](int gate) {
        const int row = gate * 2 + unit;
        return W(row, 0) * x(0) + W(row, 1) * x(1) + U(row, 0) * prev.h(0) + U(row, 1) * prev.h(1) + b(row);
      };
      const double i = sigmoid(pre(0));
      const double f = sigmoid(pre(1));
      const double g = std::tanh(pre(2));
      const double o = sigmoid(pre(3));
      const double c = f * prev.c(unit) + i * g;
      const double h = o * std::tanh(c);
      CHECK(next.c(unit) == doctest::Approx(c).epsilon(1e-14));
      CHECK(next.h(unit) == doctest::Approx(h).epsilon(1e-14));
    }
  }

  TEST_CASE("masked LSTM columns carry their state through") {
    ParameterSet p;
    const auto cell = Lstm::create(p, "cell", 3, 4);
    std::mt19937_64 rng(3);
    cell.init(p, rng);
    Matrix x = Matrix::Random(3, 2);
    LstmState prev{Matrix::Random(4, 2), Matrix::Random(4, 2)};
    RowVector mask(2);
    mask << 1.0, 0.0;
    const auto next = cell.step(p, x, prev, &mask);
    CHECK(next.h.col(1) == prev.h.col(1));
    CHECK(next.c.col(1) == prev.c.col(1));
    CHECK(next.h.col(0) != prev.h.col(0));
  }

  TEST_CASE("log-softmax keeps -inf entries and normalizes the rest") {
    Matrix logits(3, 1);
    logits << -std::numeric_limits<double>::infinity(), 0.0, std::log(3.0);
    const auto ls = log_softmax_columns(logits);
    CHECK(std::isinf(ls(0, 0)));
    CHECK(std::exp(ls(1, 0)) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(std::exp(ls(2, 0)) == doctest::Approx(0.75).epsilon(1e-15));
  }

  TEST_CASE("Adam defaults") {
    const AdamConfig c;
    CHECK(c.learning_rate == 0.001);
    CHECK(c.beta1 == 0.7);
    CHECK(c.beta2 == 0.999);
    CHECK(c.epsilon == 1e-8);
  }

  TEST_CASE("Adam first step with unit gradient moves by lr") {
    ParameterSet p;
    p.add("x", 1, 1);
    p[0](0, 0) = 0.5;
    ParameterSet g = p.zeros_like();
    g[0](0, 0) = 1.0;
    Adam adam(p, {});
    adam.update(p, g);
    // m_hat = v_hat = 1 at step one.
    CHECK(p[0](0, 0) == 0.5 - 0.001 / (1.0 + 1e-8));
    CHECK(adam.step() == 1);
  }

  TEST_CASE("Adam with zero gradient leaves parameters unchanged") {
    ParameterSet p;
    p.add("w", 2, 3);
    p[0].setRandom();
    const ParameterSet before = p;
    Adam adam(p, {});
    for (int i = 0; i < 3; ++i) adam.update(p, p.zeros_like());
    CHECK(p == before);
  }

  TEST_CASE("Adam rejects non-finite gradients without touching parameters") {
    ParameterSet p;
    p.add("w", 2, 2);
    p[0].setConstant(1.0);
    const ParameterSet before = p;
    ParameterSet g = p.zeros_like();
    g[0](1, 1) = std::numeric_limits<double>::quiet_NaN();
    Adam adam(p, {});
    try {
      adam.update(p, g);
      FAIL("expected NonFiniteGradient");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonFiniteGradient);
    }
    CHECK(p == before);
    CHECK(adam.step() == 0);

    ParameterSet other;
    other.add("w", 3, 2);
    CHECK_THROWS_AS(adam.update(p, other), Error);
  }

  TEST_CASE("gradient check is exact on a linear model with squared loss") {
    ParameterSet p;
    const auto layer = Dense::create(p, "lin", 3, 2);
    std::mt19937_64 rng(5);
    layer.init(p, rng);
    p[layer.bias].setRandom();
    const Matrix x = Matrix::Random(3, 4);
    const Matrix y = Matrix::Random(2, 4);
    const LossFunction loss = [&](const ParameterSet& q, ParameterSet* g) {
      const Matrix r = layer.forward(q, x) - y;
      if (g) layer.backward(q, *g, x, r);
      return 0.5 * r.squaredNorm();
    };
    const auto report = gradient_check(p, loss);
    CHECK(report.max_relative_error < 1e-8);
    CHECK(report.probes == p.scalar_count());
  }

  TEST_CASE("gradient check on tiny speakers") {
    for (const auto kind : {SpeakerKind::Simple, SpeakerKind::Discerning}) {
      for (const bool bn : {false, true}) {
        CAPTURE(to_string(kind));
        CAPTURE(bn);
        const auto m = testing::tiny_speaker(kind, 17, 3, bn);
        std::mt19937_64 rng(99);
        const auto batch = speaker_batch(m, rng, 4);
        const auto ptrs = pointers(batch);
        const LossFunction loss = [&](const ParameterSet& q, ParameterSet* g) { return m.loss(q, ptrs, g, true); };
        const auto report = gradient_check(m.params(), loss);
        CHECK(report.max_relative_error < 1e-4);
        CHECK(report.probes > 100);
      }
    }
  }

  TEST_CASE("gradient check on tiny listeners") {
    for (const auto kind : {ListenerKind::Simple, ListenerKind::Discerning}) {
      for (const bool bn : {false, true}) {
        CAPTURE(to_string(kind));
        CAPTURE(bn);
        const auto m = testing::tiny_listener(kind, 23, 3, bn);
        std::mt19937_64 rng(7);
        const auto batch = listener_batch(m, rng, 5);
        const auto ptrs = pointers(batch);
        const LossFunction loss = [&](const ParameterSet& q, ParameterSet* g) { return m.loss(q, ptrs, g, true); };
        const auto report = gradient_check(m.params(), loss);
        CHECK(report.max_relative_error < 1e-4);
      }
    }
  }

  TEST_CASE("gradient check reports a deliberately wrong gradient") {
    ParameterSet p;
    p.add("x", 2, 1);
    p[0] << 1.0, 2.0;
    const LossFunction loss = [](const ParameterSet& q, ParameterSet* g) {
      if (g) (*g)[0] = 3.0 * q[0];  // true gradient is 2x
      return q[0].squaredNorm();
    };
    CHECK(gradient_check(p, loss).max_relative_error > 0.3);
  }

  TEST_CASE("checkpoint round trip is bit-exact") {
    testing::TempDir dir;
    auto m = testing::tiny_speaker(SpeakerKind::Discerning, 4, 5, true);
    m.save(dir / "spk", {{"meta.note", "x"}});
    const auto back = SpeakerModel::load(dir / "spk");
    CHECK(back.params() == m.params());
    CHECK(back.vocab() == m.vocab());
    CHECK(back.kind() == SpeakerKind::Discerning);

    auto l = testing::tiny_listener(ListenerKind::Simple, 4, 5, true);
    l.save(dir / "lis");
    const auto lback = ListenerModel::load(dir / "lis");
    CHECK(lback.params() == l.params());
  }

  TEST_CASE("checkpoint tensor files carry a rank and shape header") {
    testing::TempDir dir;
    ParameterSet p;
    p.add("alpha", 2, 3);
    p[0] << 1, 2, 3, 4, 5, 6;
    save_checkpoint(dir.path(), {{"arch.model", "toy"}}, p);
    std::ifstream in(dir / "tensors/alpha.bin", std::ios::binary);
    REQUIRE(in);
    CHECK(binary::read_u32(in) == 2);
    CHECK(binary::read_u32(in) == 2);
    CHECK(binary::read_u32(in) == 3);
    std::vector<float> values;
    for (int i = 0; i < 6; ++i) values.push_back(binary::read_f32(in));
    CHECK(values == std::vector<float>{1, 2, 3, 4, 5, 6});
    CHECK(read_manifest(dir.path()).at("arch.model") == "toy");
  }

  TEST_CASE("loading under a different architecture fails loudly") {
    testing::TempDir dir;
    ParameterSet p;
    p.add("w", 2, 2);
    save_checkpoint(dir.path(), {{"arch.model", "toy"}, {"arch.hidden", "2"}}, p);

    ParameterSet q = p.zeros_like();
    try {
      load_checkpoint(dir.path(), {{"arch.model", "toy"}, {"arch.hidden", "3"}}, q);
      FAIL("expected ManifestMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ManifestMismatch);
    }
    ParameterSet bigger;
    bigger.add("w", 3, 2);
    CHECK_THROWS_AS(load_checkpoint(dir.path(), {{"arch.model", "toy"}, {"arch.hidden", "2"}}, bigger), Error);
    CHECK_NOTHROW(load_checkpoint(dir.path(), {{"arch.model", "toy"}, {"arch.hidden", "2"}, {"meta.x", "y"}}, q));

    // A speaker whose vocabulary file was swapped no longer matches its fingerprint.
    auto m = testing::tiny_speaker(SpeakerKind::Simple, 1, 3);
    m.save(dir / "spk");
    testing::tiny_vocab(3).save(dir / "spk/vocab.txt");
    CHECK_NOTHROW(SpeakerModel::load(dir / "spk"));
    Vocabulary({"a", "b", "c"}).save(dir / "spk/vocab.txt");
    try {
      SpeakerModel::load(dir / "spk");
      FAIL("expected ManifestMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ManifestMismatch);
    }
    CHECK_THROWS_AS(ListenerModel::load(dir / "spk"), Error);
  }

  TEST_CASE("parameters stay float32-representable after init") {
    const auto m = testing::tiny_speaker(SpeakerKind::Simple, 9);
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      const auto& t = m.params()[i];
      for (long k = 0; k < t.size(); ++k) {
        const double v = t.data()[k];
        CHECK(static_cast<double>(static_cast<float>(v)) == v);
      }
    }
  }

  TEST_CASE("profiles") {
    const auto paper = Profile::paper();
    CHECK(paper.listener_hidden == 1024);
    CHECK(paper.speaker_hidden == 2048);
    CHECK(paper.speaker_batch == 64);
    CHECK(paper.speaker_steps == 40000);
    CHECK(paper.speaker_stage2_lr == 5e-6);
    CHECK(paper.dropout_keep == 0.7);
    const auto desk = Profile::desk();
    CHECK(desk.speaker_hidden == 128);
    CHECK(desk.embed_dim == 64);
    CHECK(desk.head_hidden == 256);
    try {
      Profile::by_name("gpu");
      FAIL("expected ConfigError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
    }
  }
}
