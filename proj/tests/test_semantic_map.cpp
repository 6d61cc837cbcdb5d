#include "fovea/error.hpp"
#include "fovea/geometry.hpp"
#include "fovea/semantic_map.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <cmath>
#include <random>
#include <set>
#include <vector>

using namespace fovea;

namespace {

double rnd(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Eq. 5 with one draw: Gamma(B)/Gamma(B+1) * Gamma(b_k+1)/Gamma(b_k), taken
// through lgamma rather than the simplified ratio.
double dcm_single(const std::vector<double>& beta, std::size_t k) {
  double total = 0.0;
  for (double b : beta) total += b;
  return std::exp(std::lgamma(total) - std::lgamma(total + 1.0) + std::lgamma(beta[k] + 1.0) - std::lgamma(beta[k]));
}

// Axis-aligned rectangle test, independent of the library geometry.
std::set<std::pair<int, int>> overlap_oracle(double l, double t, double w, double h, const GridGeometry& g) {
  std::set<std::pair<int, int>> out;
  for (int y = 0; y < g.rows(); ++y) {
    for (int x = 0; x < g.cols(); ++x) {
      const double cl = x * g.image_width() / g.cols();
      const double cr = (x + 1) * g.image_width() / g.cols();
      const double ct = y * g.image_height() / g.rows();
      const double cb = (y + 1) * g.image_height() / g.rows();
      if (std::min(cr, l + w) > std::max(cl, l) && std::min(cb, t + h) > std::max(ct, t)) out.insert({x, y});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("uniform initialisation") {
  const GridGeometry g(640, 480, 10, 10);
  const auto map = SemanticMap::init_uniform(g, 80);
  CHECK(map.num_cells() == 100);
  for (std::size_t i = 0; i < map.num_cells(); ++i) {
    REQUIRE(map.beta(i).size() == 81);
    for (double b : map.beta(i).values()) CHECK(b == 0.5);
    CHECK_FALSE(map.visited(i));
  }
  CHECK(map.history().empty());
  const auto single = SemanticMap::init_uniform(GridGeometry(10, 10, 1, 1), 1);
  CHECK(single.beta(Cell{0, 0}) == DirichletParams{0.5, 0.5});
  const auto p = cell_posterior(map.beta(Cell{3, 4}));
  for (double v : p.values()) CHECK(v == doctest::Approx(1.0 / 81));
  CHECK_THROWS_AS(SemanticMap::init_uniform(g, 0), InvalidInput);
  CHECK_THROWS_AS(GridGeometry(640, 480, 0, 10), InvalidInput);
}

TEST_CASE("geometry") {
  const GridGeometry g(640, 480, 10, 8);
  CHECK(g.cell_width() == 64.0);
  CHECK(g.cell_height() == 60.0);
  CHECK(g.half_diagonal() == doctest::Approx(400.0));
  for (std::size_t i = 0; i < g.num_cells(); ++i) {
    const Cell c = g.cell_at(i);
    CHECK(g.index(c) == i);
    const Point p = g.cell_center(c);
    CHECK(p.x > 0.0);
    CHECK(p.x < 640.0);
    CHECK(p.y > 0.0);
    CHECK(p.y < 480.0);
  }
  CHECK(g.cell_at(12) == Cell{2, 1});
  CHECK(Cell{9, 0} < Cell{0, 1});
}

TEST_CASE("cell posterior") {
  CHECK(cell_posterior(DirichletParams{0.5, 0.5}) == ScoreVector{0.5, 0.5});
  const auto p = cell_posterior(DirichletParams{2, 1, 1});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[2] == doctest::Approx(0.25));
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> beta(2 + i % 6);
    for (auto& b : beta) b = rnd(rng, 0.05, 50.0);
    const auto post = cell_posterior(DirichletParams(beta));
    for (std::size_t k = 0; k < beta.size(); ++k) CHECK(post[k] == doctest::Approx(dcm_single(beta, k)).epsilon(1e-10));
  }
}

TEST_CASE("kaplan update examples") {
  CHECK(kaplan_update(DirichletParams{0.5, 0.5}, std::vector<double>{0.3, 0.3}) == DirichletParams{0.5, 0.5});
  CHECK(kaplan_update(DirichletParams{2, 2, 2}, std::vector<double>{0.2, 0.2, 0.2}) == DirichletParams{2, 2, 2});
  const auto b = kaplan_update(DirichletParams{1, 1}, std::vector<double>{1, 0});
  CHECK(b[0] == doctest::Approx(2.0));
  CHECK(b[1] == doctest::Approx(1.0));
  const auto exact = oracle::fused_mean({1, 1}, {1, 0});
  CHECK(b[0] / b.sum() == doctest::Approx(exact[0]).epsilon(1e-12));
  CHECK(exact[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS(kaplan_update(DirichletParams{1, 1}, std::vector<double>{0, 0}), InvalidInput);
  CHECK_THROWS_AS(kaplan_update(DirichletParams{1, 1}, std::vector<double>{1, -0.1}), InvalidInput);
  CHECK_THROWS_AS(kaplan_update(DirichletParams{1, 1}, std::vector<double>{1, 0, 0}), InvalidInput);
}

TEST_CASE("kaplan update properties") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + i % 5;
    std::vector<double> beta(n), lambda(n);
    for (auto& b : beta) b = rnd(rng, 0.05, 40.0);
    for (auto& l : lambda) l = rnd(rng, 0.0, 1.0);
    const DirichletParams prior(beta);
    const auto post = kaplan_update(prior, lambda);

    // Sum identity.
    double dot = 0.0;
    double lmin = lambda[0];
    for (std::size_t k = 0; k < n; ++k) {
      dot += beta[k] * lambda[k];
      lmin = std::min(lmin, lambda[k]);
    }
    CHECK(post.sum() == doctest::Approx((prior.sum() + 1.0) / (1.0 + lmin / dot)).epsilon(1e-12));

    // Posterior mean equals the fused mean beta_i (1 + lambda_i / dot) / (B + 1).
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(post[k] / post.sum() == doctest::Approx(beta[k] * (1.0 + lambda[k] / dot) / (prior.sum() + 1.0)).epsilon(1e-12));
    }

    // Homogeneity in lambda.
    const double c = rnd(rng, 1e-3, 1e3);
    std::vector<double> scaled(lambda);
    for (auto& l : scaled) l *= c;
    const auto again = kaplan_update(prior, scaled);
    for (std::size_t k = 0; k < n; ++k) CHECK(again[k] == doctest::Approx(post[k]).epsilon(1e-12));

    // Matches the hand-written oracle.
    const auto ref = oracle::kaplan(beta, lambda);
    for (std::size_t k = 0; k < n; ++k) CHECK(post[k] == doctest::Approx(ref[k]).epsilon(1e-12));
  }
}

TEST_CASE("kaplan update concentrates toward a repeated one-hot likelihood") {
  for (std::size_t k = 0; k < 4; ++k) {
    DirichletParams beta = DirichletParams::uniform(4, 0.5);
    std::vector<double> lambda(4, 0.0);
    lambda[k] = 1.0;
    double last = cell_posterior(beta)[k];
    for (int step = 0; step < 200; ++step) {
      beta = kaplan_update(beta, lambda);
      const double now = cell_posterior(beta)[k];
      CHECK(now > last);
      CHECK(now < 1.0);
      last = now;
    }
    CHECK(last > 0.99);
  }
}

TEST_CASE("cells overlapped") {
  const GridGeometry g(100, 100, 10, 10);
  CHECK(cells_overlapped({20, 30, 10, 10}, g) == std::vector<Cell>{{2, 3}});
  CHECK(cells_overlapped(g.image_rect(), g).size() == 100);
  CHECK(cells_overlapped({19, 30, 2, 5}, g) == std::vector<Cell>{{1, 3}, {2, 3}});
  // Touching an edge without sharing area does not count.
  CHECK(cells_overlapped({10, 10, 10, 10}, g) == std::vector<Cell>{{1, 1}});

  std::mt19937_64 rng(12);
  const GridGeometry odd(637, 411, 7, 9);
  for (int i = 0; i < 500; ++i) {
    const double l = rnd(rng, -50, 600);
    const double t = rnd(rng, -50, 400);
    const double w = rnd(rng, 0.5, 300);
    const double h = rnd(rng, 0.5, 300);
    std::set<std::pair<int, int>> got;
    Cell prev{-1, -1};
    bool first = true;
    for (Cell c : cells_overlapped({l, t, w, h}, odd)) {
      got.insert({c.x, c.y});
      if (!first) CHECK(prev < c);
      prev = c;
      first = false;
    }
    CHECK(got == overlap_oracle(l, t, w, h, odd));
  }
}

TEST_CASE("minimum overlap fraction") {
  const GridGeometry g(100, 100, 10, 10);
  // 1 px into cell 2, 9 px in cell 1.
  CHECK(cells_overlapped({11, 0, 10, 10}, g, 0.2) == std::vector<Cell>{{1, 0}});
  CHECK(cells_overlapped({11, 0, 10, 10}, g, 0.0).size() == 2);
}

TEST_CASE("apply detections in raw mode") {
  const GridGeometry g(100, 100, 10, 10);
  const auto fresh = SemanticMap::init_uniform(g, 2);
  const UpdateOptions raw;

  const auto empty = apply_detections(fresh, {}, Cell{4, 4}, raw);
  for (std::size_t i = 0; i < fresh.num_cells(); ++i) CHECK(empty.beta(i) == fresh.beta(i));
  CHECK(empty.visited(Cell{4, 4}));
  CHECK(empty.history() == std::vector<Cell>{{4, 4}});

  const Detection one{{20, 30, 10, 10}, ScoreVector{0.1, 0.7, 0.2}};
  const auto m1 = apply_detections(fresh, std::vector<Detection>{one}, Cell{0, 0}, raw);
  for (std::size_t i = 0; i < fresh.num_cells(); ++i) {
    if (g.cell_at(i) == Cell{2, 3}) {
      CHECK(m1.beta(i) == kaplan_update(fresh.beta(i), one.scores.values()));
    } else {
      CHECK(m1.beta(i) == fresh.beta(i));
    }
  }

  const Detection two{{22, 31, 5, 5}, ScoreVector{0.6, 0.3, 0.1}};
  const auto m2 = apply_detections(fresh, std::vector<Detection>{one, two}, Cell{0, 0}, raw);
  const auto composed =
      kaplan_update(kaplan_update(fresh.beta(Cell{2, 3}), one.scores.values()), two.scores.values());
  CHECK(m2.beta(Cell{2, 3}) == composed);

  CHECK_THROWS_AS(apply_detections(fresh, std::vector<Detection>{one}, Cell{0, 0}, UpdateOptions{UpdateMode::calibrated}),
                  InvalidInput);
}

TEST_CASE("apply detections only touches overlapped cells") {
  std::mt19937_64 rng(3);
  const GridGeometry g(320, 240, 8, 6);
  for (int trial = 0; trial < 100; ++trial) {
    auto map = SemanticMap::init_uniform(g, 3);
    std::vector<Detection> dets;
    std::set<std::size_t> touched;
    const int n = trial % 5;
    for (int d = 0; d < n; ++d) {
      const BoundingBox box{rnd(rng, 0, 280), rnd(rng, 0, 200), rnd(rng, 1, 80), rnd(rng, 1, 80)};
      dets.push_back({box, ScoreVector::normalized({rnd(rng, 0.01, 1), rnd(rng, 0.01, 1), rnd(rng, 0.01, 1), rnd(rng, 0.01, 1)})});
      for (Cell c : cells_overlapped(box, g)) touched.insert(g.index(c));
    }
    const auto after = apply_detections(map, dets, Cell{0, 0}, UpdateOptions{});
    for (std::size_t i = 0; i < g.num_cells(); ++i) {
      if (!touched.contains(i)) CHECK(after.beta(i) == map.beta(i));
    }
  }
}

TEST_CASE("visited bookkeeping") {
  const GridGeometry g(30, 30, 3, 3);
  auto map = SemanticMap::init_uniform(g, 1);
  map.mark_visited(Cell{1, 1});
  map.mark_visited(Cell{1, 1});
  CHECK(map.visited(Cell{1, 1}));
  CHECK(map.history().size() == 1);
  CHECK(map.unvisited_cells().size() == 8);
  const auto marked = ior_mark(map, Cell{0, 0});
  CHECK(marked.visited(Cell{0, 0}));
  CHECK_FALSE(map.visited(Cell{0, 0}));
  for (std::size_t i = 0; i < g.num_cells(); ++i) map.mark_visited(g.cell_at(i));
  CHECK(map.exhausted());
  // visited(c) holds exactly for cells in the history.
  for (std::size_t i = 0; i < g.num_cells(); ++i) {
    const Cell c = g.cell_at(i);
    CHECK(std::find(map.history().begin(), map.history().end(), c) != map.history().end());
  }
}

TEST_CASE("map json round trip") {
  const GridGeometry g(640, 480, 4, 3);
  auto map = SemanticMap::init_uniform(g, 2);
  map.set_beta(Cell{1, 2}, DirichletParams{0.1234567890123, 7.0, 1e-5});
  map.mark_visited(Cell{3, 0});
  map.mark_visited(Cell{1, 2});
  const auto j = map_to_json(map);
  CHECK(j.at("K") == 2);
  CHECK(j.at("beta").size() == 12);
  const auto back = map_from_json(j);
  CHECK(back == map);
  CHECK(map_to_json(back).dump() == j.dump());
  CHECK(geometry_from_json(geometry_to_json(g)) == g);

  auto broken = j;
  broken["beta"][0] = {0.5};
  CHECK_THROWS_AS(map_from_json(broken), InvalidInput);
}
