#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "nlselect/rng.hpp"
#include "nlselect/simulation.hpp"

using namespace nlselect;
using namespace nlselect::simulation;

TEST_CASE("covariance entries follow the design") {
    const CovarianceModel ar(Design::ar1, 5, 0.5);
    CHECK(ar.entry(0, 0) == 1.0);
    CHECK(ar.entry(0, 1) == doctest::Approx(0.5));
    CHECK(ar.entry(1, 0) == doctest::Approx(0.5));
    CHECK(ar.entry(0, 2) == doctest::Approx(0.25));
    CHECK(ar.entry(1, 4) == doctest::Approx(0.125));

    const CovarianceModel cs(Design::compound_symmetry, 4, 0.3);
    CHECK(cs.entry(2, 2) == 1.0);
    CHECK(cs.entry(0, 3) == doctest::Approx(0.3));

    // the isotropic design ignores rho entirely
    const CovarianceModel iso(Design::isotropic, 3, 0.9);
    CHECK(iso.entry(0, 1) == 0.0);
    CHECK(iso.entry(1, 1) == 1.0);

    CHECK_THROWS_AS(CovarianceModel(Design::compound_symmetry, 3, 1.0), Error);
    CHECK_THROWS_AS(CovarianceModel(Design::compound_symmetry, 3, -0.1), Error);
    CHECK_THROWS_AS(CovarianceModel(Design::ar1, 3, 1.0), Error);
    CHECK_THROWS_AS(CovarianceModel(Design::ar1, 3, -1.0), Error);
    CHECK_THROWS_AS(CovarianceModel(Design::isotropic, 0, 0.0), Error);
    CHECK_THROWS_AS(ar.entry(0, 5), Error);
    CHECK_THROWS_AS(ar.entry(-1, 0), Error);
}

TEST_CASE("sampled rows reproduce the design covariance") {
    const int n = 20000, p = 5;
    const struct {
        Design design;
        double rho;
    } cases[] = {{Design::isotropic, 0.0},
                 {Design::compound_symmetry, 0.4},
                 {Design::ar1, 0.6}};
    for (const auto& c : cases) {
        const CovarianceModel cov(c.design, p, c.rho);
        Rng rng(777);
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(p, p);
        Eigen::RowVectorXd row(p);
        for (int i = 0; i < n; ++i) {
            cov.sample_row(rng, row);
            acc += row.transpose() * row;
        }
        acc /= n;
        double worst = 0.0;
        for (int i = 0; i < p; ++i) {
            for (int j = 0; j < p; ++j) {
                worst = std::max(worst, std::abs(acc(i, j) - cov.entry(i, j)));
            }
        }
        CHECK(worst <= 0.05);
    }

    const CovarianceModel cov(Design::ar1, 5, 0.6);
    Rng rng(1);
    Eigen::RowVectorXd wrong(4);
    CHECK_THROWS_AS(cov.sample_row(rng, wrong), Error);
}

TEST_CASE("datasets are standardized, seeded, and repetition-varying") {
    SimSpec spec;
    spec.p = 12;
    spec.n = 30;
    spec.seed = 5;
    spec.pattern = Pattern::large;
    spec.sign_flip_prob = 0.0;

    const Instance a = sample_dataset(spec, 0);
    CHECK(a.dataset.standardized);
    CHECK(a.dataset.n() == 30);
    CHECK(a.dataset.p() == 12);
    for (int j = 0; j < 12; ++j) {
        CHECK(std::abs(a.dataset.X.col(j).mean()) <= 1e-10);
        const double sd = std::sqrt(a.dataset.X.col(j).squaredNorm() / 29.0);
        CHECK(sd == doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK(std::abs(a.dataset.y.mean()) <= 1e-10);

    const Instance b = sample_dataset(spec, 0);
    CHECK((a.dataset.X - b.dataset.X).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.dataset.y - b.dataset.y).lpNorm<Eigen::Infinity>() == 0.0);

    const Instance c = sample_dataset(spec, 1);
    CHECK((a.dataset.y - c.dataset.y).lpNorm<Eigen::Infinity>() > 0.0);

    // the first ten coordinates carry the signal, magnitudes as listed
    CHECK(a.truth == ModelIndex{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const double large[10] = {1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0};
    for (int j = 0; j < 10; ++j) CHECK(a.beta0[j] == large[j]);
    CHECK(a.beta0[10] == 0.0);

    SimSpec flipped = spec;
    flipped.sign_flip_prob = 1.0;
    const Instance f = sample_dataset(flipped, 0);
    for (int j = 0; j < 10; ++j) CHECK(f.beta0[j] == -large[j]);

    SimSpec mixed = spec;
    mixed.pattern = Pattern::mixed;
    const Instance m = sample_dataset(mixed, 0);
    const double weak[5] = {0.3, 0.35, 0.4, 0.45, 0.5};
    for (int j = 0; j < 5; ++j) CHECK(m.beta0[j] == weak[j]);
    CHECK(m.beta0[9] == 1.5);

    SimSpec tiny = spec;
    tiny.p = 9;
    CHECK_THROWS_AS(sample_dataset(tiny, 0), Error);
    SimSpec short_n = spec;
    short_n.n = 11;
    CHECK_THROWS_AS(sample_dataset(short_n, 0), Error);
}

TEST_CASE("custom patterns define the truth support exactly") {
    SimSpec spec;
    spec.p = 15;
    spec.n = 25;
    spec.seed = 9;
    spec.pattern = Pattern::custom;
    spec.custom_beta = Eigen::VectorXd::Zero(15);
    spec.custom_beta[2] = 1.3;
    spec.custom_beta[9] = -0.4;
    spec.sign_flip_prob = 1.0; // must not apply to custom coefficients

    const Instance inst = sample_dataset(spec, 0);
    CHECK(inst.truth == ModelIndex{2, 9});
    CHECK((inst.beta0 - spec.custom_beta).lpNorm<Eigen::Infinity>() == 0.0);

    SimSpec bad = spec;
    bad.custom_beta = Eigen::VectorXd::Zero(14);
    CHECK_THROWS_AS(sample_dataset(bad, 0), Error);
}

TEST_CASE("effective sample size defaults to a fifth of p") {
    SimSpec spec;
    spec.p = 100;
    spec.n = 0;
    CHECK(effective_n(spec) == 20);
    spec.n = 7;
    CHECK(effective_n(spec) == 7);
}

TEST_CASE("selection metrics handle boundary conventions") {
    const auto m1 = selection_metrics(ModelIndex{0, 1}, ModelIndex{0, 1}, 5);
    CHECK(m1.ppv == 1.0);
    CHECK(m1.tpr == 1.0);
    CHECK(m1.fpr == 0.0);

    const auto m2 = selection_metrics(ModelIndex{}, ModelIndex{0, 1}, 5);
    CHECK(m2.ppv == 0.0);
    CHECK(m2.tpr == 0.0);
    CHECK(m2.fpr == 0.0);

    const auto m3 = selection_metrics(ModelIndex{1, 2}, ModelIndex{0, 1}, 5);
    CHECK(m3.ppv == doctest::Approx(0.5));
    CHECK(m3.tpr == doctest::Approx(0.5));
    CHECK(m3.fpr == doctest::Approx(1.0 / 3.0));

    const auto m4 = selection_metrics(ModelIndex{}, ModelIndex{}, 4);
    CHECK(m4.ppv == 1.0);
    CHECK(m4.tpr == 1.0);
    CHECK(m4.fpr == 0.0);

    const auto m5 = selection_metrics(ModelIndex{0}, ModelIndex{}, 3);
    CHECK(m5.ppv == 0.0);
    CHECK(m5.tpr == 1.0);
    CHECK(m5.fpr == doctest::Approx(1.0 / 3.0));

    CHECK_THROWS_AS(selection_metrics(ModelIndex{5}, ModelIndex{0}, 5), Error);
    CHECK_THROWS_AS(selection_metrics(ModelIndex{0}, ModelIndex{5}, 5), Error);
}

TEST_CASE("selection metrics match a direct set computation") {
    Rng rng(2024);
    const int p = 12;
    for (int trial = 0; trial < 300; ++trial) {
        std::set<int> sel, tru;
        const int ns = static_cast<int>(rng.uniform_below(5));
        const int nt = static_cast<int>(rng.uniform_below(5));
        for (int i = 0; i < ns; ++i) sel.insert(static_cast<int>(rng.uniform_below(p)));
        for (int i = 0; i < nt; ++i) tru.insert(static_cast<int>(rng.uniform_below(p)));

        int tp = 0, fp = 0, fn = 0;
        for (int j : sel) (tru.count(j) ? tp : fp)++;
        for (int j : tru) fn += sel.count(j) ? 0 : 1;
        const int tn = p - tp - fp - fn;
        const double ppv =
            (tp + fp) > 0 ? double(tp) / (tp + fp) : (tru.empty() ? 1.0 : 0.0);
        const double tpr = tru.empty() ? 1.0 : double(tp) / tru.size();
        const double fpr = (fp + tn) > 0 ? double(fp) / (fp + tn) : 0.0;

        const auto m = selection_metrics(
            ModelIndex(std::vector<int>(sel.begin(), sel.end())),
            ModelIndex(std::vector<int>(tru.begin(), tru.end())), p);
        CHECK(m.ppv == doctest::Approx(ppv).epsilon(1e-14));
        CHECK(m.tpr == doctest::Approx(tpr).epsilon(1e-14));
        CHECK(m.fpr == doctest::Approx(fpr).epsilon(1e-14));
    }
}

TEST_CASE("scenario models have the documented shapes") {
    const ModelIndex truth{0, 1, 2, 3};
    const int p = 20;

    Rng r1(7);
    const ModelIndex s1 = scenario_model(truth, 1, p, r1);
    CHECK(s1.size() == 2);
    for (int j : s1.indices()) CHECK(truth.contains(j));

    Rng r2(7);
    const ModelIndex s2 = scenario_model(truth, 2, p, r2);
    CHECK(s2.size() == 8);
    for (int j : truth.indices()) CHECK(s2.contains(j));
    CHECK(s2.max_index() < p);

    Rng r3(7);
    const ModelIndex s3 = scenario_model(truth, 3, p, r3);
    CHECK(s3.size() == 2);
    CHECK(s3.max_index() < p);

    Rng r4(7);
    const ModelIndex s4 = scenario_model(truth, 4, p, r4);
    CHECK(s4.size() == 8);
    CHECK(s4.max_index() < p);

    // same seed, same construction
    Rng r1b(7);
    CHECK(scenario_model(truth, 1, p, r1b) == s1);

    Rng r(1);
    CHECK_THROWS_AS(scenario_model(ModelIndex{0}, 1, p, r), Error);
    CHECK_THROWS_AS(scenario_model(truth, 2, 6, r), Error);
    CHECK_THROWS_AS(scenario_model(truth, 4, 6, r), Error);
    CHECK_THROWS_AS(scenario_model(truth, 0, p, r), Error);
    CHECK_THROWS_AS(scenario_model(truth, 5, p, r), Error);
}

TEST_CASE("ratio experiment prefers the truth over its perturbations") {
    SimSpec base;
    base.pattern = Pattern::custom;
    base.custom_beta = Eigen::VectorXd::Zero(40);
    base.custom_beta[0] = 1.8;
    base.custom_beta[20] = -1.5;
    base.repetitions = 3;
    base.seed = 12;
    const std::vector<int> sweep{40};
    HyperConfig cfg;

    for (int scenario = 1; scenario <= 4; ++scenario) {
        const auto rows = ratio_experiment(base, sweep, scenario, cfg);
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].p == 40);
        CHECK(rows[0].scenario == scenario);
        CHECK(rows[0].design == base.design);
        CHECK(rows[0].mean_log_ratio < 0.0);
        CHECK(rows[0].std_error >= 0.0);

        const auto again = ratio_experiment(base, sweep, scenario, cfg);
        CHECK(again[0].mean_log_ratio == rows[0].mean_log_ratio);
        CHECK(again[0].std_error == rows[0].std_error);
    }

    CHECK_THROWS_AS(ratio_experiment(base, sweep, 0, cfg), Error);
    CHECK_THROWS_AS(ratio_experiment(base, sweep, 5, cfg), Error);
    SimSpec norep = base;
    norep.repetitions = 0;
    CHECK_THROWS_AS(ratio_experiment(norep, sweep, 1, cfg), Error);
}

TEST_CASE("selection experiment reports per-method averages") {
    SimSpec spec;
    spec.p = 12;
    spec.n = 30;
    spec.repetitions = 2;
    spec.seed = 4;
    spec.pattern = Pattern::large;
    const std::vector<Method> methods{Method::hyper_pmom, Method::fixed_tau};
    HyperConfig cfg;
    search::SearchConfig scfg;

    const auto rows = selection_experiment(spec, methods, cfg, scfg);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].method == Method::hyper_pmom);
    CHECK(rows[1].method == Method::fixed_tau);
    for (const auto& row : rows) {
        CHECK(row.p == 12);
        CHECK(row.design == spec.design);
        CHECK(row.pattern == Pattern::large);
        CHECK(row.metrics.ppv >= 0.0);
        CHECK(row.metrics.ppv <= 1.0);
        CHECK(row.metrics.tpr >= 0.0);
        CHECK(row.metrics.tpr <= 1.0);
        CHECK(row.metrics.fpr >= 0.0);
        CHECK(row.metrics.fpr <= 1.0);
    }

    const auto again = selection_experiment(spec, methods, cfg, scfg);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(again[i].metrics.ppv == rows[i].metrics.ppv);
        CHECK(again[i].metrics.tpr == rows[i].metrics.tpr);
        CHECK(again[i].metrics.fpr == rows[i].metrics.fpr);
    }

    CHECK_THROWS_AS(
        selection_experiment(spec, std::vector<Method>{}, cfg, scfg), Error);
    SimSpec norep = spec;
    norep.repetitions = 0;
    CHECK_THROWS_AS(selection_experiment(norep, methods, cfg, scfg), Error);
}

TEST_CASE("inclusion probabilities weight models by posterior mass") {
    search::ScoredModelSet set;
    const auto put = [&](ModelIndex m, double lp) {
        set.entries.emplace(m, laplace::ScoredModel{m, lp, lp});
    };
    put(ModelIndex{}, std::log(1.0));
    put(ModelIndex{0}, std::log(3.0));
    put(ModelIndex{0, 1}, std::log(4.0));
    const double inf = std::numeric_limits<double>::infinity();
    put(ModelIndex{2}, -inf); // failed scores carry no weight

    const Eigen::VectorXd incl = inclusion_probabilities(3, set);
    CHECK(incl[0] == doctest::Approx(7.0 / 8.0).epsilon(1e-12));
    CHECK(incl[1] == doctest::Approx(4.0 / 8.0).epsilon(1e-12));
    CHECK(incl[2] == 0.0);

    search::ScoredModelSet sunk;
    sunk.entries.emplace(ModelIndex{0},
                         laplace::ScoredModel{ModelIndex{0}, -inf, -inf});
    CHECK_THROWS_AS(inclusion_probabilities(3, sunk), EmptySet);

    CHECK_THROWS_AS(inclusion_probabilities(1, set), Error);
}

TEST_CASE("roc curves sweep from the empty to the full selection") {
    search::ScoredModelSet set;
    const auto put = [&](ModelIndex m, double lp) {
        set.entries.emplace(m, laplace::ScoredModel{m, lp, lp});
    };
    put(ModelIndex{}, std::log(1.0));
    put(ModelIndex{0}, std::log(3.0));
    put(ModelIndex{0, 1}, std::log(4.0));

    const auto points = roc_points(3, ModelIndex{0}, set);
    REQUIRE(points.size() >= 3);
    CHECK(points.front().threshold == 1.5);
    CHECK(points.front().fpr == 0.0);
    CHECK(points.front().tpr == 0.0);
    CHECK(points.back().threshold == 0.0);
    CHECK(points.back().fpr == 1.0);
    CHECK(points.back().tpr == 1.0);
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        CHECK(points[i].threshold > points[i + 1].threshold);
        CHECK(points[i].fpr <= points[i + 1].fpr);
        CHECK(points[i].tpr <= points[i + 1].tpr);
    }
}

TEST_CASE("held-out prediction error refits the chosen model") {
    Rng rng(33);
    const int ntr = 50, nte = 30, p = 3;
    Eigen::MatrixXd Xtr(ntr, p), Xte(nte, p);
    Eigen::VectorXd ytr(ntr), yte(nte);
    for (int i = 0; i < ntr; ++i) {
        for (int j = 0; j < p; ++j) Xtr(i, j) = rng.normal();
        ytr[i] = 2.0 * Xtr(i, 0) - Xtr(i, 1);
    }
    for (int i = 0; i < nte; ++i) {
        for (int j = 0; j < p; ++j) Xte(i, j) = rng.normal();
        yte[i] = 2.0 * Xte(i, 0) - Xte(i, 1);
    }
    const Dataset train{Xtr, ytr};
    const Dataset test{Xte, yte};

    CHECK(mspe(train, test, ModelIndex{0, 1}) <= 1e-18);
    CHECK(mspe(train, test, ModelIndex{}) ==
          doctest::Approx(yte.squaredNorm() / nte).epsilon(1e-14));
    CHECK(mspe(train, test, ModelIndex{2}) > 0.1);

    Eigen::MatrixXd Xdup = Xtr;
    Xdup.col(1) = Xdup.col(0);
    const Dataset dup{Xdup, ytr};
    CHECK_THROWS_AS(mspe(dup, test, ModelIndex{0, 1}), SingularDesign);

    Eigen::MatrixXd Xnarrow = Xte.leftCols(2);
    const Dataset narrow{Xnarrow, yte};
    CHECK_THROWS_AS(mspe(train, narrow, ModelIndex{0}), Error);
    CHECK_THROWS_AS(mspe(train, test, ModelIndex{3}), Error);
}

TEST_CASE("names round trip through their parsers") {
    CHECK(std::string(design_name(Design::isotropic)) == "iso");
    CHECK(std::string(design_name(Design::compound_symmetry)) == "cs");
    CHECK(std::string(design_name(Design::ar1)) == "ar1");
    CHECK(design_from_name("iso") == Design::isotropic);
    CHECK(design_from_name("cs") == Design::compound_symmetry);
    CHECK(design_from_name("ar1") == Design::ar1);
    CHECK_THROWS_AS(design_from_name("toeplitz"), Error);

    CHECK(std::string(pattern_name(Pattern::large)) == "large");
    CHECK(std::string(pattern_name(Pattern::mixed)) == "mixed");
    CHECK(std::string(pattern_name(Pattern::custom)) == "custom");
    CHECK(pattern_from_name("large") == Pattern::large);
    CHECK(pattern_from_name("mixed") == Pattern::mixed);
    CHECK(pattern_from_name("custom") == Pattern::custom);
    CHECK_THROWS_AS(pattern_from_name("sparse"), Error);

    CHECK(std::string(method_name(Method::hyper_pmom)) == "hyper-pmom");
    CHECK(std::string(method_name(Method::fixed_tau)) == "fixed-tau");
}
