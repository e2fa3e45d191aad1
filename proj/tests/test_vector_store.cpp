#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <random>
#include <thread>

#include "ecmu/ingestion.hpp"
#include "ecmu/vector_store.hpp"
#include "test_helpers.hpp"

using namespace ecmu;

namespace {

// Oracle: full scan, full sort.
std::vector<Neighbor> brute_force_knn(const VectorStore& store, const EmbeddingVector& q, std::size_t k) {
    std::vector<Neighbor> all;
    for (const auto& r : store.records()) {
        const double num = dot(q.values(), r.vector.values());
        all.push_back({r.id, r.label, std::clamp(num / (q.norm() * r.vector.norm()), -1.0, 1.0)});
    }
    std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.similarity > b.similarity || (a.similarity == b.similarity && a.id < b.id);
    });
    all.resize(std::min(k, all.size()));
    return all;
}

std::vector<double> mean_of(const VectorStore& store, ClassId label) {
    std::vector<double> sum(store.dim(), 0.0);
    std::size_t n = 0;
    for (const auto& r : store.records()) {
        if (r.label != label) continue;
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += r.vector[i];
        ++n;
    }
    for (auto& x : sum) x /= static_cast<double>(n);
    return sum;
}

} // namespace

TEST(Insert, FirstRecordIsItsOwnCentroid) {
    VectorStore s;
    s.insert({1, 3, EmbeddingVector{0.5, -2.0}});
    ASSERT_TRUE(s.has_class(3));
    EXPECT_EQ(s.summaries().at(3).count, 1u);
    EXPECT_EQ(s.centroid_of(3), (EmbeddingVector{0.5, -2.0}));
    EXPECT_EQ(s.dim(), 2u);
}

TEST(Insert, TwoPointMean) {
    VectorStore s;
    s.insert({1, 0, EmbeddingVector{1, 0}});
    s.insert({2, 0, EmbeddingVector{0, 1}});
    EXPECT_EQ(s.centroid_of(0), (EmbeddingVector{0.5, 0.5}));
}

TEST(Insert, DuplicateIdConflicts) {
    VectorStore s;
    s.insert({1, 0, EmbeddingVector{1, 0}});
    EXPECT_THROW(s.insert({1, 2, EmbeddingVector{0, 1}}), ConflictError);
    EXPECT_EQ(s.size(), 1u);
}

TEST(Insert, DuplicateIdAcrossStoresConflicts) {
    VectorStore cil(StoreRole::Cil), mu(StoreRole::Mu);
    insert(mu, cil, {9, 0, EmbeddingVector{1, 0}});
    EXPECT_THROW(insert(cil, mu, {9, 1, EmbeddingVector{0, 1}}), ConflictError);
    EXPECT_TRUE(cil.empty());
}

TEST(Insert, DimensionMismatchAndZeroVector) {
    VectorStore s;
    s.insert({1, 0, EmbeddingVector{1, 0}});
    EXPECT_THROW(s.insert({2, 0, EmbeddingVector{1, 0, 0}}), DimensionError);
    EXPECT_THROW(s.insert({3, 0, EmbeddingVector{0, 0}}), DegenerateVectorError);
}

TEST(Knn, SingletonStore) {
    VectorStore s;
    s.insert({5, 1, EmbeddingVector{1, 1}});
    const auto hits = knn(s, EmbeddingVector{1, 0}, 10);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].id, 5);
    EXPECT_NEAR(hits[0].similarity, std::sqrt(0.5), 1e-15);
}

TEST(Knn, SelfQueryRanksFirst) {
    std::mt19937_64 gen(1);
    VectorStore s;
    for (auto& r : fixtures::random_records(gen, 50, 16, 4)) s.insert(r);
    const auto& target = s.records()[17];
    const auto hits = knn(s, target.vector, 5);
    EXPECT_EQ(hits[0].id, target.id);
    EXPECT_DOUBLE_EQ(hits[0].similarity, 1.0);
}

TEST(Knn, TiesBreakByAscendingId) {
    VectorStore s;
    s.insert({30, 0, EmbeddingVector{1, 1}});
    s.insert({10, 1, EmbeddingVector{1, -1}});
    s.insert({20, 2, EmbeddingVector{-1, 1}});
    // query (1,0) vs (-1,1) is negative; use a query equidistant to all three
    VectorStore eq;
    eq.insert({30, 0, EmbeddingVector{1, 0, 0}});
    eq.insert({10, 1, EmbeddingVector{0, 1, 0}});
    eq.insert({20, 2, EmbeddingVector{0, 0, 1}});
    const auto hits = knn(eq, EmbeddingVector{1, 1, 1}, 2);
    ASSERT_EQ(hits.size(), 2u);
    EXPECT_EQ(hits[0].id, 10);
    EXPECT_EQ(hits[1].id, 20);
}

TEST(Knn, Errors) {
    VectorStore s;
    EXPECT_THROW(knn(s, EmbeddingVector{1, 0}, 3), EmptyStoreError);
    s.insert({1, 0, EmbeddingVector{1, 0}});
    EXPECT_THROW(knn(s, EmbeddingVector{1, 0, 0}, 3), DimensionError);
    EXPECT_THROW(knn(s, EmbeddingVector{1, 0}, 0), ArgumentError);
}

TEST(KnnProperty, MatchesBruteForce) {
    std::mt19937_64 gen(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 1 + gen() % 400;
        const std::size_t dim = 2 + gen() % 40;
        VectorStore s;
        for (auto& r : fixtures::random_records(gen, n, dim, 6)) s.insert(r);
        const auto q = fixtures::random_vector(gen, dim);
        const std::size_t k = 1 + gen() % (n + 5);
        ASSERT_EQ(knn(s, q, k), brute_force_knn(s, q, k));
    }
}

TEST(KnnProperty, InsertionOrderDoesNotMatter) {
    std::mt19937_64 gen(99);
    // Coarse values so that exact similarity ties actually occur.
    std::uniform_int_distribution<int> coord(-2, 2);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<VectorRecord> recs;
        for (RecordId id = 0; id < 80; ++id) {
            std::vector<double> v(3);
            do {
                for (auto& x : v) x = coord(gen);
            } while (v == std::vector<double>(3, 0.0));
            recs.push_back({id, static_cast<ClassId>(id % 3), EmbeddingVector(v)});
        }
        VectorStore a, b;
        for (const auto& r : recs) a.insert(r);
        std::shuffle(recs.begin(), recs.end(), gen);
        for (const auto& r : recs) b.insert(r);
        const EmbeddingVector q{1, 0, 1};
        ASSERT_EQ(knn(a, q, 25), knn(b, q, 25));
    }
}

TEST(KnnClassify, UnanimousAndMajority) {
    VectorStore s;
    for (RecordId i = 0; i < 5; ++i) s.insert({i, 7, EmbeddingVector{1.0, 0.01 * static_cast<double>(i)}});
    EXPECT_EQ(knn_classify(s, EmbeddingVector{1, 0}, 5), 7u);

    VectorStore m;
    m.insert({1, 0, EmbeddingVector{1, 0.1}});
    m.insert({2, 0, EmbeddingVector{1, 0.2}});
    m.insert({3, 0, EmbeddingVector{1, 0.3}});
    m.insert({4, 1, EmbeddingVector{1, 0.0}});
    m.insert({5, 1, EmbeddingVector{1, 0.05}});
    EXPECT_EQ(knn_classify(m, EmbeddingVector{1, 0}, 5), 0u);  // 3 votes beat 2 nearer ones
}

TEST(KnnClassify, VoteTieGoesToHigherSimilarityThenLowerLabel) {
    std::vector<Neighbor> n{{1, 4, 0.9}, {2, 2, 0.5}, {3, 4, 0.1}, {4, 2, 0.6}};
    EXPECT_EQ(majority_vote(n).label, 2u);  // 2 votes each; 1.1 > 1.0
    std::vector<Neighbor> full_tie{{1, 4, 0.5}, {2, 2, 0.5}};
    EXPECT_EQ(majority_vote(full_tie).label, 2u);
}

TEST(KnnClassify, SyntheticClustersAbove95Percent) {
    const auto data = generate_synthetic({10, 100, 64, 0.1, 42});
    const auto parts = split(data, 0.1, 42);
    VectorStore s;
    for (const auto& r : parts.train) s.insert(r);
    std::size_t correct = 0;
    for (const auto& r : parts.test) correct += knn_classify(s, r.vector, 10) == r.label ? 1 : 0;
    ASSERT_EQ(parts.test.size(), 100u);
    EXPECT_GE(static_cast<double>(correct) / 100.0, 0.95);
}

TEST(CentroidOf, MeanSingletonAndMissing) {
    VectorStore s;
    s.insert({1, 0, EmbeddingVector{2, 0}});
    s.insert({2, 0, EmbeddingVector{0, 2}});
    s.insert({3, 5, EmbeddingVector{3, 4}});
    EXPECT_EQ(centroid_of(s, 0), (EmbeddingVector{1, 1}));
    EXPECT_EQ(centroid_of(s, 5), (EmbeddingVector{3, 4}));
    VectorStore dst(StoreRole::Mu);
    migrate_class(s, dst, 0);
    EXPECT_THROW(centroid_of(s, 0), MissingClassError);
}

TEST(Migrate, WholeClassMovesOnce) {
    const auto data = generate_synthetic({3, 500, 16, 0.05, 7});
    VectorStore cil(StoreRole::Cil), mu(StoreRole::Mu);
    for (const auto& r : data) insert(cil, mu, r);
    EXPECT_EQ(migrate_class(cil, mu, 1), 500u);
    EXPECT_FALSE(cil.has_class(1));
    EXPECT_EQ(mu.count_of(1), 500u);
    EXPECT_EQ(cil.size() + mu.size(), 1500u);
    for (const auto& r : mu.records()) EXPECT_FALSE(cil.contains(r.id));
    EXPECT_THROW(migrate_class(cil, mu, 1), MissingClassError);
}

TEST(Migrate, AbsentLabelLeavesDestinationUnchanged) {
    VectorStore cil(StoreRole::Cil), mu(StoreRole::Mu);
    cil.insert({1, 0, EmbeddingVector{1, 0}});
    mu.insert({2, 4, EmbeddingVector{0, 1}});
    EXPECT_THROW(migrate_class(cil, mu, 9), MissingClassError);
    EXPECT_EQ(mu.size(), 1u);
    EXPECT_EQ(cil.size(), 1u);
}

TEST(Migrate, DimensionMismatchRejectedBeforeAnyChange) {
    VectorStore cil(StoreRole::Cil), mu(StoreRole::Mu);
    cil.insert({1, 0, EmbeddingVector{1, 0}});
    mu.insert({2, 4, EmbeddingVector{0, 1, 0}});
    EXPECT_THROW(migrate_class(cil, mu, 0), DimensionError);
    EXPECT_TRUE(cil.has_class(0));
}

TEST(StoreProperty, RandomInsertMigrateKeepsSummariesConsistent) {
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 30; ++trial) {
        VectorStore cil(StoreRole::Cil), mu(StoreRole::Mu);
        const auto recs = fixtures::random_records(gen, 300, 12, 8);
        std::size_t inserted = 0;
        for (const auto& r : recs) {
            insert(cil, mu, r);
            ++inserted;
            if (gen() % 40 == 0 && !cil.empty()) {
                const auto labels = cil.labels();
                const ClassId l = labels[gen() % labels.size()];
                const std::size_t before = cil.size() + mu.size();
                migrate_class(cil, mu, l);
                ASSERT_EQ(cil.size() + mu.size(), before);
            }
        }
        ASSERT_EQ(cil.size() + mu.size(), inserted);
        for (const VectorStore* s : {&cil, &mu}) {
            std::size_t total = 0;
            for (const auto& [label, sum] : s->summaries()) {
                total += sum.count;
                const auto mean = mean_of(*s, label);
                ASSERT_LE(VectorStore::relative_difference(sum.centroid, EmbeddingVector(mean)), 1e-6);
            }
            ASSERT_EQ(total, s->size());
        }
        VectorStore copy = cil;
        ASSERT_LE(copy.recompute_summaries(), 1e-6);
    }
}

TEST(DualStore, ReadersNeverSeeHalfMigratedClass) {
    const auto data = generate_synthetic({6, 200, 8, 0.1, 3});
    DualStore db;
    for (const auto& r : data) db.insert(StoreRole::Cil, r);
    std::atomic<bool> done{false};
    std::atomic<int> violations{0};
    std::vector<std::thread> readers;
    for (int t = 0; t < 3; ++t) {
        readers.emplace_back([&] {
            while (!done.load()) {
                db.read([&](const VectorStore& cil, const VectorStore& mu) {
                    if (cil.size() + mu.size() != data.size()) violations++;
                    for (ClassId l = 0; l < 6; ++l) {
                        if (cil.has_class(l) == mu.has_class(l)) violations++;
                    }
                });
            }
        });
    }
    for (ClassId l = 0; l < 5; ++l) EXPECT_EQ(db.migrate(l), 200u);
    done = true;
    for (auto& t : readers) t.join();
    EXPECT_EQ(violations.load(), 0);
    EXPECT_THROW(db.insert(StoreRole::Cil, data[0]), ConflictError);
}
