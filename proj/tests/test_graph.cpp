#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <dtdens/graph.hpp>
#include <dtdens/npmle.hpp>

using namespace dtdens;

TEST_CASE("seven-record example: last vertex only reaches itself", "[graph]")
{
  auto g = build_graph(validate_sample(oracle::seven_records()));
  REQUIRE(g.n == 7);
  CHECK(g.adjacency[6] == std::vector<std::size_t>{ 6 });
  for (std::size_t i = 0; i < 7; ++i)
    CHECK(g.has_edge(i, i));
}

TEST_CASE("seven-record example: connected but not strongly", "[graph]")
{
  auto st = npmle_status(validate_sample(oracle::seven_records()));
  CHECK(st.existence == NpmleExistence::does_not_exist);
  REQUIRE(st.components.size() == 2);
  CHECK(st.components[1] == std::vector<std::size_t>{ 6 });
  REQUIRE(st.sink_vertex);
  CHECK(*st.sink_vertex == 6);
}

TEST_CASE("widening the last interval restores existence", "[graph]")
{
  auto recs = oracle::seven_records();
  recs[6].u = 1.4;
  auto st = npmle_status(validate_sample(recs));
  CHECK(st.existence == NpmleExistence::unique_exists);
  CHECK(st.components.size() == 1);
  CHECK_FALSE(st.sink_vertex);
}

TEST_CASE("trivial graphs", "[graph]")
{
  auto one = build_graph(validate_sample({ { 0.0, 1.0, 0.5 } }));
  CHECK(one.n == 1);
  CHECK(one.has_edge(0, 0));

  std::vector<Record> full{ { 0, 1, 0.1 }, { 0, 1, 0.4 }, { 0, 1, 0.9 } };
  auto sample = validate_sample(full, Interval{ 0.0, 1.0 });
  auto g = build_graph(sample);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(g.adjacency[i].size() == 3);
  CHECK(npmle_status(sample).existence == NpmleExistence::unique_exists);
}

TEST_CASE("disjoint windows are disconnected", "[graph]")
{
  auto st =
    npmle_status(validate_sample({ { 0.0, 0.4, 0.2 }, { 0.6, 1.0, 0.8 } }));
  CHECK(st.existence == NpmleExistence::disconnected);
  CHECK(st.components.size() == 2);
}

TEST_CASE("components agree with all-pairs reachability", "[graph][property]")
{
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> size(1, 12);
  for (int rep = 0; rep < 500; ++rep) {
    std::size_t n = size(rng);
    std::vector<Record> recs(n);
    for (auto& r : recs) {
      r.x = unif(rng);
      r.u = r.x - 0.4 * unif(rng);
      r.v = r.x + 0.4 * unif(rng);
    }
    auto reach = oracle::reachability(recs);
    auto g = build_graph(validate_sample(recs));
    std::size_t count = 0;
    auto comp = strong_components(g, count);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        CHECK((comp[i] == comp[j]) == (reach[i][j] && reach[j][i]));

    auto st = npmle_status(g);
    bool all = oracle::strongly_connected(recs);
    CHECK((st.existence == NpmleExistence::unique_exists) == all);
  }
}

TEST_CASE("a full-domain record reaches every vertex", "[graph][property]")
{
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Interval dom{ 0.0, 1.0 };
  for (int rep = 0; rep < 50; ++rep) {
    // every window contains 0.5, so a record observed at 0.5 is reachable
    // from every vertex as well
    std::vector<Record> recs(8);
    for (auto& r : recs) {
      r.x = unif(rng);
      r.u = std::min(r.x, 0.5) - 0.2 * unif(rng);
      r.v = std::max(r.x, 0.5) + 0.2 * unif(rng);
    }
    recs.push_back({ 0.0, 1.0, 0.5 });
    auto sample = validate_sample(recs, dom);
    auto g = build_graph(sample);
    CHECK(g.adjacency.back().size() == recs.size());
    CHECK(npmle_status(sample).existence == NpmleExistence::unique_exists);
  }
}

TEST_CASE("strongly connected samples give a converged NPMLE",
          "[graph][npmle][property]")
{
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    auto sample = validate_sample(oracle::random_connected_instance(10, rng));
    REQUIRE(npmle_status(sample).existence == NpmleExistence::unique_exists);
    CHECK(solve_npmle(sample).converged);
  }
}
