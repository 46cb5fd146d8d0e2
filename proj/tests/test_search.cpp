#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "nlselect/rng.hpp"
#include "nlselect/search.hpp"
#include "nlselect/simulation.hpp"

using namespace nlselect;

namespace {

simulation::Instance planted_instance(int n, int p, std::uint64_t seed,
                                      std::vector<std::pair<int, double>> coef,
                                      double sigma = 1.0) {
    simulation::SimSpec spec;
    spec.p = p;
    spec.n = n;
    spec.seed = seed;
    spec.sigma = sigma;
    spec.pattern = simulation::Pattern::custom;
    spec.custom_beta = Eigen::VectorXd::Zero(p);
    for (const auto& [j, b] : coef) spec.custom_beta[j] = b;
    return simulation::sample_dataset(spec, 0);
}

search::ScoredModelSet exhaustive_scores(const Dataset& d,
                                         const HyperConfig& cfg) {
    const int p = d.p();
    search::ScoredModelSet set;
    for (int mask = 0; mask < (1 << p); ++mask) {
        std::vector<int> idx;
        for (int j = 0; j < p; ++j) {
            if (mask & (1 << j)) idx.push_back(j);
        }
        const ModelIndex m(idx);
        set.entries.emplace(m, laplace::score_model(d, m, cfg));
    }
    return set;
}

} // namespace

TEST_CASE("default ladder cools geometrically from 3 to 1") {
    const auto ladder = search::default_ladder();
    REQUIRE(ladder.size() == 10);
    CHECK(ladder.front() == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(ladder.back() == doctest::Approx(1.0).epsilon(1e-12));
    const double ratio = ladder[1] / ladder[0];
    for (std::size_t i = 0; i + 1 < ladder.size(); ++i) {
        CHECK(ladder[i + 1] < ladder[i]);
        CHECK(ladder[i + 1] / ladder[i] ==
              doctest::Approx(ratio).epsilon(1e-12));
    }
}

TEST_CASE("default screen size grows like n over log n with a floor") {
    CHECK(search::default_screen_size(50) == 20);
    CHECK(search::default_screen_size(100) == 22);
    CHECK(search::default_screen_size(1000) == 145);
}

TEST_CASE("screening ranks columns by residual correlation") {
    Rng rng(61);
    const int n = 400, p = 8;
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
        X(i, 5) = X(i, 2); // exact duplicate column
        y[i] = 3.0 * X(i, 2) + 0.01 * rng.normal();
    }
    const Dataset data = standardize(X, y);

    const auto top = search::screen(data, ModelIndex{}, Eigen::VectorXd(), 3);
    REQUIRE(top.size() == 3);
    CHECK(top[0] == 2); // duplicate ties break toward the smaller index
    CHECK(top[1] == 5);

    // oversized request returns the whole complement of the model
    Eigen::VectorXd beta1(1);
    beta1 << 3.0;
    const auto rest = search::screen(data, ModelIndex{2}, beta1, 100);
    CHECK(rest.size() == static_cast<std::size_t>(p - 1));
    CHECK(std::find(rest.begin(), rest.end(), 2) == rest.end());

    CHECK_THROWS_AS(
        search::screen(data, ModelIndex{2}, Eigen::VectorXd(), 3), Error);
    CHECK_THROWS_AS(
        search::screen(data, ModelIndex{}, Eigen::VectorXd(), 0), Error);
}

TEST_CASE("neighborhoods enumerate additions, deletions and swaps") {
    const ModelIndex model{1, 3};
    const std::vector<int> screened{0, 2, 5};

    const auto sets = search::neighbors(model, 6, 3, screened);
    REQUIRE(sets.additions.size() == 3);
    CHECK(sets.additions[0] == ModelIndex{0, 1, 3});
    CHECK(sets.additions[1] == ModelIndex{1, 2, 3});
    CHECK(sets.additions[2] == ModelIndex{1, 3, 5});
    REQUIRE(sets.deletions.size() == 2);
    CHECK(sets.deletions[0] == ModelIndex{3});
    CHECK(sets.deletions[1] == ModelIndex{1});
    REQUIRE(sets.swaps.size() == 6);
    CHECK(sets.swaps[0] == ModelIndex{0, 3});
    CHECK(sets.swaps[1] == ModelIndex{2, 3});
    CHECK(sets.swaps[2] == ModelIndex{3, 5});
    CHECK(sets.swaps[3] == ModelIndex{0, 1});
    CHECK(sets.swaps[4] == ModelIndex{1, 2});
    CHECK(sets.swaps[5] == ModelIndex{1, 5});
    CHECK(sets.all().size() == 11);

    // at the size cap no additions are proposed
    const auto capped = search::neighbors(model, 6, 2, screened);
    CHECK(capped.additions.empty());
    CHECK(capped.deletions.size() == 2);
    CHECK(capped.swaps.size() == 6);

    // the empty model only grows
    const auto fromEmpty = search::neighbors(ModelIndex{}, 6, 3, screened);
    CHECK(fromEmpty.additions.size() == 3);
    CHECK(fromEmpty.deletions.empty());
    CHECK(fromEmpty.swaps.empty());

    const std::vector<int> bad{0, 7};
    CHECK_THROWS_AS(search::neighbors(model, 6, 3, bad), Error);
    CHECK_THROWS_AS(search::neighbors(model, 6, 2, bad), Error);
    CHECK_THROWS_AS(search::neighbors(ModelIndex{9}, 6, 3, screened), Error);
    CHECK_THROWS_AS(search::neighbors(model, 6, 0, screened), Error);
}

TEST_CASE("map extraction prefers score, then size, then lexicographic") {
    search::ScoredModelSet set;
    const auto put = [&](ModelIndex m, double lp) {
        set.entries.emplace(m, laplace::ScoredModel{m, lp, lp});
    };
    put(ModelIndex{0}, -5.0);
    put(ModelIndex{0, 1}, -3.0);
    put(ModelIndex{2}, -3.0);
    put(ModelIndex{1}, -3.0);
    const auto best = search::map_model(set);
    CHECK(best.model == ModelIndex{1});
    CHECK(best.log_posterior_unnorm == -3.0);

    search::ScoredModelSet single;
    single.entries.emplace(ModelIndex{4},
                           laplace::ScoredModel{ModelIndex{4}, -9.0, -9.0});
    CHECK(search::map_model(single).model == ModelIndex{4});

    search::ScoredModelSet empty;
    CHECK_THROWS_AS(search::map_model(empty), EmptySet);

    search::ScoredModelSet sunk;
    const double inf = std::numeric_limits<double>::infinity();
    sunk.entries.emplace(ModelIndex{0},
                         laplace::ScoredModel{ModelIndex{0}, -inf, -inf});
    CHECK_THROWS_AS(search::map_model(sunk), EmptySet);
}

TEST_CASE("search is deterministic under a fixed seed") {
    const auto inst = planted_instance(50, 15, 9, {{0, 1.5}, {4, -1.2}});
    HyperConfig cfg;
    search::SearchConfig scfg;
    scfg.seed = 31;
    const auto a = search::run_search(inst.dataset, cfg, scfg);
    const auto b = search::run_search(inst.dataset, cfg, scfg);
    CHECK(a.visits == b.visits);
    REQUIRE(a.entries.size() == b.entries.size());
    auto ia = a.entries.begin();
    auto ib = b.entries.begin();
    for (; ia != a.entries.end(); ++ia, ++ib) {
        CHECK(ia->first == ib->first);
        CHECK(ia->second.log_posterior_unnorm ==
              ib->second.log_posterior_unnorm);
    }
    CHECK(search::map_model(a).model == search::map_model(b).model);
}

TEST_CASE("search recovers a planted strong signal") {
    const auto inst = planted_instance(
        60, 30, 3, {{0, 2.0}, {5, -2.0}, {10, 1.5}}, 0.7);
    HyperConfig cfg;
    search::SearchConfig scfg;
    scfg.seed = 7;
    const auto found = search::run_search(inst.dataset, cfg, scfg);
    CHECK(found.failures.empty());
    CHECK(search::map_model(found).model == inst.truth);
}

TEST_CASE("search never proposes models beyond the size cap") {
    const auto inst = planted_instance(40, 12, 5, {{0, 1.5}, {4, -1.2}});
    HyperConfig cfg;
    search::SearchConfig scfg;
    scfg.seed = 11;
    scfg.q_n = 4;
    const auto found = search::run_search(inst.dataset, cfg, scfg);
    for (const auto& [model, scored] : found.entries) {
        CHECK(model.size() <= 4);
    }
    CHECK(found.entries.size() > 10);
}

TEST_CASE("search configuration is validated") {
    const auto inst = planted_instance(30, 6, 2, {{0, 1.5}});
    HyperConfig cfg;
    search::SearchConfig bad_iters;
    bad_iters.iterations_per_temperature = 0;
    CHECK_THROWS_AS(search::run_search(inst.dataset, cfg, bad_iters), Error);
    search::SearchConfig bad_temp;
    bad_temp.temperature_ladder = {2.0, 0.0};
    CHECK_THROWS_AS(search::run_search(inst.dataset, cfg, bad_temp), Error);
}

TEST_CASE("search matches exhaustive enumeration on small problems") {
    HyperConfig cfg;
    for (std::uint64_t seed : {1, 4}) {
        const auto inst =
            planted_instance(60, 8, seed, {{1, 1.4}, {4, -1.0}});
        const auto all = exhaustive_scores(inst.dataset, cfg);
        const auto best = search::map_model(all);
        search::SearchConfig scfg;
        scfg.seed = seed;
        scfg.q_n = 8;
        const auto found = search::run_search(inst.dataset, cfg, scfg);
        CHECK(search::map_model(found).model == best.model);
        CHECK(search::map_model(found).log_posterior_unnorm ==
              doctest::Approx(best.log_posterior_unnorm).epsilon(1e-12));
    }
}

TEST_CASE("search lands in the top percentile of the model space") {
    const auto inst =
        planted_instance(50, 10, 8, {{2, 0.6}, {7, -0.6}}, 1.5);
    HyperConfig cfg;
    const auto all = exhaustive_scores(inst.dataset, cfg);
    std::vector<double> scores;
    scores.reserve(all.entries.size());
    for (const auto& [model, scored] : all.entries) {
        scores.push_back(scored.log_posterior_unnorm);
    }
    std::sort(scores.begin(), scores.end());
    const double q99 = scores[static_cast<std::size_t>(
        0.99 * static_cast<double>(scores.size() - 1))];

    search::SearchConfig scfg;
    scfg.seed = 19;
    scfg.q_n = 10;
    const auto found = search::run_search(inst.dataset, cfg, scfg);
    CHECK(search::map_model(found).log_posterior_unnorm >= q99);
}
