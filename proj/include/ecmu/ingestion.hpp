#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "embedding.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "vector_store.hpp"

namespace ecmu {

// Embedding file layout (all little-endian):
//   header  : "ECMU" | u32 version = 1 | u32 dim | u64 count        (20 bytes)
//   record  : i64 id | u32 label | dim x f32                        (12 + 4*dim bytes)
inline constexpr std::array<char, 4> kFileMagic = {'E', 'C', 'M', 'U'};
inline constexpr std::uint32_t kFileVersion = 1;
inline constexpr std::size_t kHeaderBytes = 20;

inline constexpr std::size_t record_bytes(std::size_t dim) noexcept { return 12 + 4 * dim; }

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) noexcept {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(const std::uint8_t* p) noexcept {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

} // namespace detail

/// Serialises records to the embedding file byte layout. Values are narrowed
/// to 32-bit floats.
inline std::vector<std::uint8_t> encode_embeddings(std::span<const VectorRecord> records) {
    if (records.empty()) throw ArgumentError("refusing to write an empty embedding file");
    const std::size_t dim = records.front().vector.dim();
    if (dim == 0 || dim > std::numeric_limits<std::uint32_t>::max()) throw ArgumentError("invalid dimension");

    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + records.size() * record_bytes(dim));
    out.insert(out.end(), kFileMagic.begin(), kFileMagic.end());
    detail::put_u32(out, kFileVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(dim));
    detail::put_u64(out, records.size());

    std::unordered_set<RecordId> seen;
    for (const auto& r : records) {
        detail::check_same_dim(r.vector.dim(), dim);
        if (!seen.insert(r.id).second) throw ArgumentError("duplicate record id " + std::to_string(r.id));
        detail::put_u64(out, static_cast<std::uint64_t>(r.id));
        detail::put_u32(out, r.label);
        for (double x : r.vector.values()) {
            const auto f = static_cast<float>(x);
            if (!std::isfinite(f)) {
                throw DataError("record " + std::to_string(r.id) + " has a value outside 32-bit float range");
            }
            detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
        }
    }
    return out;
}

/// Parses and validates an embedding file image.
inline std::vector<VectorRecord> decode_embeddings(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes) throw FormatError("truncated header", bytes.size());
    const std::uint8_t* p = bytes.data();
    if (std::memcmp(p, kFileMagic.data(), kFileMagic.size()) != 0) throw FormatError("bad magic", 0);
    const std::uint32_t version = detail::get_u32(p + 4);
    if (version != kFileVersion) {
        throw FormatError("unsupported version " + std::to_string(version), 4);
    }
    const std::uint32_t dim = detail::get_u32(p + 8);
    if (dim == 0) throw FormatError("dimension is zero", 8);
    const std::uint64_t count = detail::get_u64(p + 12);

    const std::uint64_t rec = record_bytes(dim);
    const std::uint64_t payload = bytes.size() - kHeaderBytes;
    if (count > payload / rec) {
        const std::uint64_t whole = payload / rec;
        throw FormatError("declared " + std::to_string(count) + " records but only " + std::to_string(whole) +
                              " fit; truncated record",
                          kHeaderBytes + whole * rec);
    }
    if (payload != count * rec) {
        throw FormatError("trailing bytes after " + std::to_string(count) + " records", kHeaderBytes + count * rec);
    }

    std::vector<VectorRecord> out;
    out.reserve(count);
    std::unordered_set<RecordId> seen;
    seen.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t offset = kHeaderBytes + i * rec;
        const std::uint8_t* r = p + offset;
        const auto id = static_cast<RecordId>(detail::get_u64(r));
        const ClassId label = detail::get_u32(r + 8);
        std::vector<double> values(dim);
        for (std::uint32_t d = 0; d < dim; ++d) {
            const float f = std::bit_cast<float>(detail::get_u32(r + 12 + 4 * d));
            if (!std::isfinite(f)) {
                throw DataError("non-finite value in record " + std::to_string(id) + " (at byte offset " +
                                std::to_string(offset + 12 + 4 * d) + ")");
            }
            values[d] = f;
        }
        if (!seen.insert(id).second) {
            throw DataError("duplicate record id " + std::to_string(id) + " (at byte offset " + std::to_string(offset) +
                            ")");
        }
        out.push_back({id, label, EmbeddingVector(std::move(values))});
    }
    return out;
}

inline void write_embeddings(const std::string& path, std::span<const VectorRecord> records) {
    const auto bytes = encode_embeddings(records);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline std::vector<VectorRecord> read_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_embeddings(bytes);
}

struct SyntheticSpec {
    std::size_t n_classes = 6;
    std::size_t per_class = 500;
    std::size_t dim = 64;
    double spread = 0.05;  ///< per-coordinate std-dev of the cluster noise
    std::uint64_t seed = 42;
};

inline void validate(const SyntheticSpec& spec) {
    if (spec.n_classes == 0 || spec.per_class == 0 || spec.dim == 0) {
        throw ArgumentError("synthetic spec needs positive n_classes, per_class and dim");
    }
    if (!(spec.spread > 0.0) || !(spec.spread < 10.0)) throw ArgumentError("synthetic spread must lie in (0, 10)");
}

/**
 * Unit-norm Gaussian clusters around random unit directions.
 *
 * Records come out class-major with sequential ids from 0. Components are
 * rounded to 32-bit float precision so a written file reads back identical to
 * the in-memory records.
 */
inline std::vector<VectorRecord> generate_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    const Rng root(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    auto normalised = [](std::vector<double> v) {
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        for (double& x : v) x /= n;
        return v;
    };

    std::vector<std::vector<double>> centroids;
    Rng centroid_rng = root.split(0);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        std::vector<double> v(spec.dim);
        do {
            for (double& x : v) x = gauss(centroid_rng);
        } while (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
        centroids.push_back(normalised(std::move(v)));
    }

    std::vector<VectorRecord> out;
    out.reserve(spec.n_classes * spec.per_class);
    RecordId next_id = 0;
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        Rng member_rng = root.split(c + 1);
        std::normal_distribution<double> noise(0.0, spec.spread);
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            std::vector<double> v(spec.dim);
            for (std::size_t d = 0; d < spec.dim; ++d) v[d] = centroids[c][d] + noise(member_rng);
            v = normalised(std::move(v));
            for (double& x : v) x = static_cast<float>(x);
            out.push_back({next_id++, static_cast<ClassId>(c), EmbeddingVector(std::move(v))});
        }
    }
    return out;
}

struct Split {
    std::vector<VectorRecord> train;
    std::vector<VectorRecord> test;
};

/// Stratified split: per class, round(test_fraction * n) records (clamped to
/// [1, n-1]) go to test. Both halves keep the input order.
inline Split split(std::span<const VectorRecord> records, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ArgumentError("test_fraction must lie in (0, 1)");
    std::map<ClassId, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].label].push_back(i);

    const Rng root(seed);
    std::vector<bool> is_test(records.size(), false);
    for (auto& [label, idx] : by_class) {
        const std::size_t n = idx.size();
        if (n < 2) throw ArgumentError("class " + std::to_string(label) + " has fewer than 2 records");
        auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
        n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
        Rng rng = root.split(label);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t j = 0; j < n_test; ++j) is_test[idx[j]] = true;
    }

    Split out;
    for (std::size_t i = 0; i < records.size(); ++i) (is_test[i] ? out.test : out.train).push_back(records[i]);
    return out;
}

/// Records whose label is in `labels`, in input order.
inline std::vector<VectorRecord> select_classes(std::span<const VectorRecord> records, std::span<const ClassId> labels) {
    std::vector<VectorRecord> out;
    for (const auto& r : records) {
        if (std::find(labels.begin(), labels.end(), r.label) != labels.end()) out.push_back(r);
    }
    return out;
}

} // namespace ecmu
