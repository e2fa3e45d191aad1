#include <gtest/gtest.h>

#include <random>

#include "ecmu/ingestion.hpp"
#include "ecmu/unlearning.hpp"
#include "test_helpers.hpp"

using namespace ecmu;

namespace {

struct Stores {
    VectorStore cil{StoreRole::Cil};
    VectorStore mu{StoreRole::Mu};
};

Stores load(const std::vector<VectorRecord>& recs) {
    Stores s;
    for (const auto& r : recs) insert(s.cil, s.mu, r);
    return s;
}

std::vector<EmbeddingVector> exemplars_of(const std::vector<VectorRecord>& recs, ClassId label, std::size_t n) {
    std::vector<EmbeddingVector> out;
    for (const auto& r : recs) {
        if (r.label == label && out.size() < n) out.push_back(r.vector);
    }
    return out;
}

} // namespace

TEST(Identify, ExemplarsNearClusterFour) {
    const auto data = generate_synthetic({6, 100, 32, 0.05, 11});
    auto s = load(data);
    const auto id = identify_class(s.cil, {exemplars_of(data, 4, 10), 50});
    EXPECT_EQ(id.label, 4u);
    EXPECT_EQ(id.votes.at(4), 10u);
    EXPECT_GT(id.mean_top_similarity, 0.9);
}

TEST(Identify, SplitExemplarsPickMajority) {
    const auto data = generate_synthetic({4, 50, 16, 0.05, 3});
    auto s = load(data);
    auto ex = exemplars_of(data, 1, 6);
    for (auto& v : exemplars_of(data, 2, 4)) ex.push_back(v);
    UnlearnRequest req{ex, 20};
    const auto report = unlearn(s.cil, s.mu, req);
    EXPECT_EQ(report.identified_label, 1u);
    EXPECT_FALSE(report.unanimous);
    EXPECT_DOUBLE_EQ(report.vote_fraction, 0.6);
    EXPECT_FALSE(report.low_confidence);
}

TEST(Identify, EvenSplitIsLowConfidence) {
    const auto data = generate_synthetic({4, 50, 16, 0.05, 3});
    auto s = load(data);
    auto ex = exemplars_of(data, 1, 5);
    for (auto& v : exemplars_of(data, 2, 5)) ex.push_back(v);
    const auto report = unlearn(s.cil, s.mu, {ex, 20});
    EXPECT_TRUE(report.low_confidence);
    EXPECT_DOUBLE_EQ(report.vote_fraction, 0.5);
}

TEST(Identify, Errors) {
    VectorStore cil(StoreRole::Cil);
    EXPECT_THROW(identify_class(cil, {{EmbeddingVector{1, 0}}, 5}), EmptyStoreError);
    cil.insert({1, 0, EmbeddingVector{1, 0}});
    EXPECT_THROW(identify_class(cil, {{}, 5}), ArgumentError);
}

TEST(Unlearn, MovesWholeClassThenClassIsGone) {
    const auto data = generate_synthetic({6, 500, 64, 0.05, 42});
    auto s = load(data);
    const auto ex = exemplars_of(data, 3, 10);
    const auto report = unlearn(s.cil, s.mu, {ex, 100});
    EXPECT_EQ(report.identified_label, 3u);
    EXPECT_EQ(report.moved, 500u);
    EXPECT_TRUE(report.unanimous);
    EXPECT_EQ(s.mu.count_of(3), 500u);
    EXPECT_FALSE(s.cil.has_class(3));
    EXPECT_EQ(s.cil.size(), 2500u);
}

TEST(Unlearn, SecondRequestForSameClassMovesAnotherClass) {
    // The forgotten class is no longer in DB-CIL, so exemplars resolve to a neighbour.
    const auto data = generate_synthetic({3, 40, 8, 0.05, 8});
    auto s = load(data);
    const auto ex = exemplars_of(data, 0, 5);
    unlearn(s.cil, s.mu, {ex, 10});
    const std::size_t before = s.mu.size();
    const auto again = unlearn(s.cil, s.mu, {ex, 10});
    EXPECT_NE(again.identified_label, 0u);
    EXPECT_EQ(s.mu.size(), before + again.moved);
    EXPECT_THROW(migrate_class(s.cil, s.mu, 0), MissingClassError);
}

TEST(Unlearn, DualStoreOverload) {
    const auto data = generate_synthetic({3, 30, 8, 0.05, 1});
    DualStore db;
    for (const auto& r : data) db.insert(StoreRole::Cil, r);
    const auto report = unlearn(db, {exemplars_of(data, 2, 4), 10});
    EXPECT_EQ(report.identified_label, 2u);
    db.read([](const VectorStore& cil, const VectorStore& mu) {
        EXPECT_EQ(cil.size(), 60u);
        EXPECT_EQ(mu.size(), 30u);
    });
}

TEST(Filter, Examples) {
    VectorStore mu(StoreRole::Mu);
    EXPECT_FALSE(membership_filter(mu, EmbeddingVector{1, 0}, 0.0));  // nothing unlearned
    mu.insert({1, 0, EmbeddingVector{1, 0}});
    EXPECT_TRUE(membership_filter(mu, EmbeddingVector{2, 0}, 0.77));
    EXPECT_FALSE(membership_filter(mu, EmbeddingVector{0, 1}, 0.77));
    EXPECT_TRUE(membership_filter(mu, EmbeddingVector{0, 1}, 0.0));    // s = 0 boundary: cos 0 >= 0
    EXPECT_FALSE(membership_filter(mu, EmbeddingVector{1, 0}, std::nextafter(1.0, 2.0)));
    EXPECT_TRUE(membership_filter(mu, EmbeddingVector{-1, 0}, -1.0));
    EXPECT_THROW(membership_filter(mu, EmbeddingVector{1, 0, 0}, 0.5), DimensionError);
    EXPECT_THROW(membership_filter(mu, EmbeddingVector{1, 0}, std::nan("")), ArgumentError);
}

TEST(Filter, CentroidModeComparesAgainstCentroids) {
    VectorStore mu(StoreRole::Mu);
    mu.insert({1, 0, EmbeddingVector{1, 0}});
    mu.insert({2, 0, EmbeddingVector{0, 1}});
    const EmbeddingVector probe{1, 0};
    EXPECT_DOUBLE_EQ(*max_similarity(mu, probe, FilterMode::RecordMax), 1.0);
    EXPECT_NEAR(*max_similarity(mu, probe, FilterMode::Centroid), std::sqrt(0.5), 1e-12);
    EXPECT_TRUE(membership_filter(mu, probe, 0.9, FilterMode::RecordMax));
    EXPECT_FALSE(membership_filter(mu, probe, 0.9, FilterMode::Centroid));
}

TEST(FilterProperty, FlaggedSetShrinksAsThresholdRises) {
    std::mt19937_64 gen(77);
    const auto grid = threshold_grid(-1.0, 1.0, 2.0 / 49.0);
    ASSERT_EQ(grid.size(), 50u);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t dim = 2 + gen() % 10;
        VectorStore mu(StoreRole::Mu);
        for (auto& r : fixtures::random_records(gen, 1 + gen() % 30, dim, 3)) mu.insert(r);
        const auto q = fixtures::random_vector(gen, dim);
        bool prev = true;
        for (double s : grid) {
            const bool f = membership_filter(mu, q, s);
            ASSERT_FALSE(f && !prev) << "flag reappeared at s=" << s;
            prev = f;
        }
    }
}

TEST(Sweep, ExtremeThresholds) {
    VectorStore mu(StoreRole::Mu);
    mu.insert({1, 9, EmbeddingVector{1, 0}});
    std::vector<LabeledInput> in{{EmbeddingVector{0, 1}, false},
                                 {EmbeddingVector{1, 0.1}, false},
                                 {EmbeddingVector{1, 0}, true},
                                 {EmbeddingVector{1, 0.05}, true}};
    const std::vector<double> grid{0.0, 1.0 + 1e-9};
    const auto cal = sweep_threshold(mu, in, grid);
    ASSERT_EQ(cal.grid.size(), 2u);
    // s = 0 flags everything with cos >= 0: all retained become FN, all unlearned TN.
    EXPECT_EQ(cal.grid[0].tp, 0u);
    EXPECT_EQ(cal.grid[0].fn, 2u);
    EXPECT_EQ(cal.grid[0].tn, 2u);
    EXPECT_DOUBLE_EQ(*cal.grid[0].specificity, 1.0);
    EXPECT_DOUBLE_EQ(*cal.grid[0].recall, 0.0);
    // Above 1 nothing is flagged.
    EXPECT_EQ(cal.grid[1].tp, 2u);
    EXPECT_EQ(cal.grid[1].fp, 2u);
    EXPECT_DOUBLE_EQ(*cal.grid[1].recall, 1.0);
    EXPECT_DOUBLE_EQ(*cal.grid[1].specificity, 0.0);
}

TEST(Sweep, RejectsBadGrids) {
    VectorStore mu(StoreRole::Mu);
    mu.insert({1, 0, EmbeddingVector{1, 0}});
    std::vector<LabeledInput> in{{EmbeddingVector{1, 0}, true}};
    const std::vector<double> unsorted{0.5, 0.2};
    const std::vector<double> empty;
    EXPECT_THROW(sweep_threshold(mu, in, unsorted), ArgumentError);
    EXPECT_THROW(sweep_threshold(mu, in, empty), ArgumentError);
    EXPECT_THROW(sweep_threshold(mu, std::span<const LabeledInput>{}, std::vector<double>{0.5}), ArgumentError);
}

TEST(SweepProperty, RecallRisesSpecificityFallsCountsConserved) {
    std::mt19937_64 gen(314);
    const auto grid = threshold_grid(0.0, 1.0, 0.02);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t dim = 4 + gen() % 8;
        VectorStore mu(StoreRole::Mu);
        for (auto& r : fixtures::random_records(gen, 20, dim, 2)) mu.insert(r);
        std::vector<LabeledInput> in;
        for (int i = 0; i < 40; ++i) in.push_back({fixtures::random_vector(gen, dim), gen() % 2 == 0});
        const auto cal = sweep_threshold(mu, in, grid);
        for (std::size_t i = 0; i < cal.grid.size(); ++i) {
            const auto& p = cal.grid[i];
            ASSERT_EQ(p.tp + p.fp + p.tn + p.fn, in.size());
            if (i == 0) continue;
            const auto& q = cal.grid[i - 1];
            ASSERT_EQ(p.tp + p.fn, q.tp + q.fn);
            if (p.recall) ASSERT_GE(*p.recall, *q.recall);
            if (p.specificity) ASSERT_LE(*p.specificity, *q.specificity);
        }
    }
}

TEST(Sweep, WellSeparatedClustersCalibrateWell) {
    const auto data = generate_synthetic({6, 200, 64, 0.05, 42});
    const auto parts = split(data, 0.2, 42);
    auto s = load(parts.train);
    migrate_class(s.cil, s.mu, 2);
    std::vector<LabeledInput> in;
    for (const auto& r : parts.test) in.push_back({r.vector, r.label == 2});
    const auto cal = sweep_threshold(s.mu, in, threshold_grid(0.5, 0.95, 0.01));
    const double s_star = select_threshold(cal);
    const auto& p = *std::find_if(cal.grid.begin(), cal.grid.end(),
                                  [&](const CalibrationPoint& c) { return c.threshold == s_star; });
    EXPECT_GE(*p.recall, 0.9);
    EXPECT_GE(*p.specificity, 0.7);

    // Every migrated vector is its own neighbour in DB-MU.
    for (const auto& r : s.mu.records()) ASSERT_TRUE(membership_filter(s.mu, r.vector, s_star));
}

TEST(SelectThreshold, MiddleOfPlateau) {
    FilterCalibration cal;
    cal.grid = {make_point(0.1, 1, 0, 1, 1), make_point(0.2, 2, 0, 2, 0), make_point(0.3, 2, 0, 2, 0),
                make_point(0.4, 2, 0, 2, 0), make_point(0.5, 2, 2, 0, 0)};
    EXPECT_DOUBLE_EQ(select_threshold(cal), 0.3);
}

TEST(ThresholdGrid, InclusiveEndpoints) {
    const auto g = threshold_grid(0.5, 0.95, 0.01);
    ASSERT_EQ(g.size(), 46u);
    EXPECT_DOUBLE_EQ(g.front(), 0.5);
    EXPECT_NEAR(g.back(), 0.95, 1e-12);
    EXPECT_THROW(threshold_grid(1, 0, 0.1), ArgumentError);
    EXPECT_THROW(threshold_grid(0, 1, 0), ArgumentError);
}
