#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "refgame/error.hpp"
#include "refgame/pragmatics.hpp"

using namespace refgame;

namespace {

std::vector<ScoredPhrase> beam_of(const std::vector<double>& probs) {
  std::vector<ScoredPhrase> beam;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    ScoredPhrase s;
    s.ids = {static_cast<TokenId>(kNumSpecials + i), kEndId};
    s.tokens = {"w" + std::to_string(i)};
    s.log_prob = std::log(probs[i]);
    s.rank = static_cast<int>(i) + 1;
    beam.push_back(s);
  }
  return beam;
}

std::vector<std::size_t> order(const std::vector<RerankedPhrase>& r) {
  std::vector<std::size_t> out;
  for (const auto& p : r) out.push_back(p.beam_index);
  return out;
}

}  // namespace

TEST_SUITE("pragmatics") {
  TEST_CASE("geometric interpolation of speaker and listener") {
    CHECK(combined_score(0.64, 0.25, 0.5) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(combined_score(0.3, 0.9, 1.0) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(combined_score(0.3, 0.9, 0.0) == doctest::Approx(0.9).epsilon(1e-15));
  }

  TEST_CASE("lambda one keeps the beam order") {
    const auto beam = beam_of({0.4, 0.3, 0.2, 0.05});
    const auto r = rerank(beam, {0.1, 0.9, 0.6, 0.99}, 1.0);
    CHECK(order(r) == std::vector<std::size_t>{0, 1, 2, 3});
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i].phrase.rank == static_cast<int>(i) + 1);
    CHECK(r[0].p_speaker == doctest::Approx(0.4).epsilon(1e-15));
  }

  TEST_CASE("lambda zero orders by listener probability, stable on ties") {
    const auto beam = beam_of({0.4, 0.3, 0.2, 0.05});
    const auto r = rerank(beam, {0.1, 0.9, 0.6, 0.9}, 0.0);
    CHECK(order(r) == std::vector<std::size_t>{1, 3, 2, 0});
    CHECK(r[0].p_listener == 0.9);
  }

  TEST_CASE("rerank is a permutation of the beam") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> ps;
      std::vector<double> pl;
      for (int i = 0; i < 10; ++i) {
        ps.push_back(u(rng));
        pl.push_back(u(rng));
      }
      std::sort(ps.rbegin(), ps.rend());
      const double lambda = u(rng);
      const auto r = rerank(beam_of(ps), pl, lambda);
      auto idx = order(r);
      std::sort(idx.begin(), idx.end());
      for (std::size_t i = 0; i < idx.size(); ++i) CHECK(idx[i] == i);
      for (std::size_t i = 1; i < r.size(); ++i) CHECK(r[i - 1].p_combined >= r[i].p_combined);
      for (const auto& p : r) {
        CHECK(p.p_combined == doctest::Approx(combined_score(p.p_speaker, p.p_listener, lambda)).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("callback form matches the vector form") {
    const auto beam = beam_of({0.5, 0.3, 0.2});
    const std::vector<double> pl = {0.2, 0.7, 0.4};
    const auto a = rerank(beam, pl, 0.3);
    const auto b = rerank(beam, [&](const ScoredPhrase& s) { return pl[static_cast<std::size_t>(s.rank - 1)]; }, 0.3);
    CHECK(order(a) == order(b));
  }

  TEST_CASE("rerank argument errors") {
    try {
      rerank(std::vector<ScoredPhrase>{}, std::vector<double>{}, 0.5);
      FAIL("expected EmptyBeam");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyBeam);
    }
    CHECK_THROWS_AS(rerank(beam_of({0.5}), std::vector<double>{0.1, 0.2}, 0.5), Error);
  }

  TEST_CASE("default grid is eleven evenly spaced points") {
    const auto g = default_lambda_grid();
    REQUIRE(g.size() == 11);
    CHECK(g.front() == 0.0);
    CHECK(g.back() == 1.0);
    CHECK(g[3] == doctest::Approx(0.3).epsilon(1e-15));
  }

  TEST_CASE("reranked accuracy averages the judge over each top-k") {
    RerankCase c;
    c.beam = beam_of({0.5, 0.3, 0.2});
    c.listener_probs = {0.1, 0.9, 0.8};
    c.judge_correct = {false, true, true};
    // lambda 1: top-1 is beam[0] (wrong); lambda 0: top-1 is beam[1] (right).
    CHECK(reranked_accuracy({c}, 1.0, 1) == 0.0);
    CHECK(reranked_accuracy({c}, 0.0, 1) == 1.0);
    CHECK(reranked_accuracy({c}, 1.0, 2) == 0.5);
    CHECK(reranked_accuracy({c}, 1.0, 3) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  }

  TEST_CASE("lambda selection picks the best grid point, ties to the smaller") {
    RerankCase c;
    c.beam = beam_of({0.5, 0.3, 0.2});
    c.listener_probs = {0.1, 0.9, 0.8};
    c.judge_correct = {false, true, true};
    // Every lambda below the crossover puts beam[1] first.
    CHECK(select_lambda({c}, {0.0, 0.2, 1.0}, 1) == 0.0);
    CHECK(select_lambda({c}, {1.0, 0.2}, 1) == 0.2);

    RerankCase flat = c;
    flat.judge_correct = {true, true, true};
    CHECK(select_lambda({flat}, default_lambda_grid(), 1) == 0.0);
    CHECK(select_lambda({flat}, {0.7, 0.4, 0.9}, 1) == 0.4);

    try {
      select_lambda({c}, {}, 1);
      FAIL("expected EmptyGrid");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyGrid);
    }
  }
}
