#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "sparse.hpp"

namespace fbgcn {

struct Split {
    std::vector<std::int64_t> train;
    std::vector<std::int64_t> valid;
    std::vector<std::int64_t> test;
};

inline constexpr int kUnlabeled = -1;

struct Dataset {
    std::string name;
    std::int64_t n = 0;
    std::int64_t num_features = 0;  // D
    int num_classes = 0;            // O
    CsrMatrix features;             // n x D
    std::vector<int> labels;        // class id per node, kUnlabeled if absent
    SparseSym adjacency;            // nonnegative, zero diagonal
    std::optional<Split> canonical_split;

    std::int64_t num_links() const { return adjacency.nnz() / 2; }
};

struct DatasetStats {
    std::int64_t nodes = 0;
    std::int64_t links = 0;
    std::int64_t components = 0;
    std::int64_t features = 0;
    int classes = 0;
};

// Disjoint-set forest with path halving and union by size.
class UnionFind {
public:
    explicit UnionFind(std::int64_t n) : parent_(static_cast<std::size_t>(n)), size_(static_cast<std::size_t>(n), 1) {
        std::iota(parent_.begin(), parent_.end(), 0);
        sets_ = n;
    }

    std::int64_t find(std::int64_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::int64_t a, std::int64_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (size_[a] < size_[b]) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
        --sets_;
    }

    std::int64_t sets() const noexcept { return sets_; }

private:
    std::vector<std::int64_t> parent_;
    std::vector<std::int64_t> size_;
    std::int64_t sets_ = 0;
};

inline std::int64_t connected_components(const SparseSym& adjacency) {
    UnionFind uf(adjacency.n());
    const auto& a = adjacency.csr();
    for (std::int64_t i = 0; i < a.rows(); ++i)
        for (auto j : a.row_cols(i))
            if (j > i) uf.unite(i, j);
    return uf.sets();
}

inline DatasetStats dataset_stats(const Dataset& d) {
    return {d.n, d.num_links(), connected_components(d.adjacency), d.num_features, d.num_classes};
}

// Throws DataError when a Dataset invariant does not hold.
inline void validate_dataset(const Dataset& d) {
    if (d.adjacency.n() != d.n) throw DataError("adjacency dimension differs from node count");
    if (d.features.rows() != d.n || d.features.cols() != d.num_features)
        throw DataError("feature matrix shape differs from meta");
    if (static_cast<std::int64_t>(d.labels.size()) != d.n) throw DataError("label vector length differs from n");
    for (std::int64_t i = 0; i < d.n; ++i) {
        if (d.labels[i] != kUnlabeled && (d.labels[i] < 0 || d.labels[i] >= d.num_classes))
            throw DataError("label of node " + std::to_string(i) + " outside [0, O)");
        if (d.adjacency.coeff(i, i) != 0.0) throw DataError("adjacency diagonal must be zero");
    }
    for (double v : d.adjacency.csr().values())
        if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("adjacency weights must be finite and nonnegative");
    if (!d.features.all_finite()) throw DataError("feature matrix has non-finite entries");
}

namespace detail {

class LineReader {
public:
    explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path) {
        if (!in_) throw DataError("cannot open " + path.string());
    }

    // Next non-blank line, split on whitespace.
    bool next(std::vector<std::string_view>& fields) {
        while (std::getline(in_, line_)) {
            ++line_no_;
            fields.clear();
            std::string_view s(line_);
            std::size_t pos = 0;
            while (pos < s.size()) {
                while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
                auto start = pos;
                while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
                if (pos > start) fields.push_back(s.substr(start, pos - start));
            }
            if (!fields.empty()) return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_.filename().string(), line_no_, what); }

    std::int64_t to_int(std::string_view f) const {
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc() || p != f.data() + f.size()) fail("expected integer, got '" + std::string(f) + "'");
        return v;
    }

    double to_double(std::string_view f) const {
        double v = 0;
        auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc() || p != f.data() + f.size()) fail("expected number, got '" + std::string(f) + "'");
        if (!std::isfinite(v)) fail("non-finite value");
        return v;
    }

    std::int64_t to_index(std::string_view f, std::int64_t bound, const char* what) const {
        auto v = to_int(f);
        if (v < 0 || v >= bound) fail(std::string(what) + " " + std::to_string(v) + " out of range [0, " +
                                      std::to_string(bound) + ")");
        return v;
    }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::string line_;
    std::size_t line_no_ = 0;
};

inline std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

}  // namespace detail

// Reads the directory container (meta/edges/feats/labels[/split]).
// Duplicate links and self-loops are dropped; a link listed in both
// directions with different weights is a data error.
inline Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset d;
    std::vector<std::string_view> f;
    {
        detail::LineReader r(dir / "meta.txt");
        bool have_n = false, have_d = false, have_o = false;
        while (r.next(f)) {
            if (f.size() < 2) r.fail("expected '<key> <value>'");
            if (f[0] == "n") {
                d.n = r.to_int(f[1]);
                have_n = true;
            } else if (f[0] == "D") {
                d.num_features = r.to_int(f[1]);
                have_d = true;
            } else if (f[0] == "O") {
                d.num_classes = static_cast<int>(r.to_int(f[1]));
                have_o = true;
            } else if (f[0] == "name") {
                d.name = std::string(f[1]);
            } else {
                r.fail("unknown key '" + std::string(f[0]) + "'");
            }
        }
        if (!have_n || !have_d || !have_o) throw DataError("meta.txt must define n, D and O");
        if (d.n < 1 || d.num_features < 1 || d.num_classes < 1) throw DataError("meta.txt sizes must be positive");
    }
    {
        detail::LineReader r(dir / "edges.txt");
        std::map<std::pair<std::int64_t, std::int64_t>, double> links;
        while (r.next(f)) {
            if (f.size() != 3) r.fail("expected 'src dst weight'");
            auto s = r.to_index(f[0], d.n, "node");
            auto t = r.to_index(f[1], d.n, "node");
            auto w = r.to_double(f[2]);
            if (w < 0.0) r.fail("negative edge weight");
            if (s == t) continue;
            std::pair<std::int64_t, std::int64_t> key{std::min(s, t), std::max(s, t)};
            auto [it, inserted] = links.emplace(key, w);
            if (!inserted && it->second != w)
                throw DataError("conflicting weights for link (" + std::to_string(key.first) + "," +
                                std::to_string(key.second) + ")");
        }
        std::vector<Triplet> t;
        t.reserve(links.size());
        for (const auto& [k, w] : links) t.push_back({k.first, k.second, w});
        d.adjacency = SparseSym::from_upper_triplets(d.n, t);
    }
    {
        detail::LineReader r(dir / "feats.txt");
        std::vector<Triplet> t;
        while (r.next(f)) {
            if (f.size() != 3) r.fail("expected 'row col value'");
            t.push_back({r.to_index(f[0], d.n, "row"), r.to_index(f[1], d.num_features, "column"), r.to_double(f[2])});
        }
        auto count = t.size();
        d.features = CsrMatrix::from_triplets(d.n, d.num_features, std::move(t));
        if (static_cast<std::size_t>(d.features.nnz()) != count) throw DataError("feats.txt has duplicate entries");
    }
    {
        detail::LineReader r(dir / "labels.txt");
        d.labels.assign(static_cast<std::size_t>(d.n), kUnlabeled);
        while (r.next(f)) {
            if (f.size() != 2) r.fail("expected 'node class_id'");
            auto node = r.to_index(f[0], d.n, "node");
            auto cls = r.to_index(f[1], d.num_classes, "class");
            if (d.labels[node] != kUnlabeled && d.labels[node] != cls) r.fail("conflicting label");
            d.labels[node] = static_cast<int>(cls);
        }
    }
    if (std::filesystem::exists(dir / "split.txt")) {
        detail::LineReader r(dir / "split.txt");
        Split s;
        while (r.next(f)) {
            if (f.size() != 2) r.fail("expected 'train|valid|test node'");
            auto node = r.to_index(f[1], d.n, "node");
            if (f[0] == "train") s.train.push_back(node);
            else if (f[0] == "valid") s.valid.push_back(node);
            else if (f[0] == "test") s.test.push_back(node);
            else r.fail("unknown split part '" + std::string(f[0]) + "'");
        }
        d.canonical_split = std::move(s);
    }
    validate_dataset(d);
    return d;
}

// Writes the canonical container form: links once with i < j, triplets in
// row-major order, shortest round-trip decimal formatting.
inline void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw DataError("cannot write " + (dir / name).string());
        return out;
    };
    {
        auto out = open("meta.txt");
        out << "n " << d.n << "\nD " << d.num_features << "\nO " << d.num_classes << "\nname " << d.name << '\n';
    }
    {
        auto out = open("edges.txt");
        const auto& a = d.adjacency.csr();
        for (std::int64_t i = 0; i < a.rows(); ++i) {
            auto cols = a.row_cols(i);
            auto vals = a.row_values(i);
            for (std::size_t p = 0; p < cols.size(); ++p)
                if (cols[p] > i) out << i << ' ' << cols[p] << ' ' << detail::format_double(vals[p]) << '\n';
        }
    }
    {
        auto out = open("feats.txt");
        for (std::int64_t i = 0; i < d.features.rows(); ++i) {
            auto cols = d.features.row_cols(i);
            auto vals = d.features.row_values(i);
            for (std::size_t p = 0; p < cols.size(); ++p)
                out << i << ' ' << cols[p] << ' ' << detail::format_double(vals[p]) << '\n';
        }
    }
    {
        auto out = open("labels.txt");
        for (std::int64_t i = 0; i < d.n; ++i)
            if (d.labels[i] != kUnlabeled) out << i << ' ' << d.labels[i] << '\n';
    }
    if (d.canonical_split) {
        auto out = open("split.txt");
        for (auto v : d.canonical_split->train) out << "train " << v << '\n';
        for (auto v : d.canonical_split->valid) out << "valid " << v << '\n';
        for (auto v : d.canonical_split->test) out << "test " << v << '\n';
    }
}

struct SplitRatio {
    int train_per_class = 20;
    std::int64_t valid = 500;
    std::int64_t test = 1000;
};

// Random split with the Planetoid ratio: a fixed number of training nodes
// per class, then validation and test drawn uniformly from the remaining
// labeled nodes.
inline Split planetoid_ratio_split(const Dataset& d, std::uint64_t seed, SplitRatio ratio = {}) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(d.num_classes));
    for (std::int64_t i = 0; i < d.n; ++i)
        if (d.labels[i] != kUnlabeled) by_class[d.labels[i]].push_back(i);

    Split s;
    std::vector<std::int64_t> rest;
    for (int c = 0; c < d.num_classes; ++c) {
        auto& nodes = by_class[c];
        if (static_cast<std::int64_t>(nodes.size()) < ratio.train_per_class)
            throw UsageError("class " + std::to_string(c) + " has " + std::to_string(nodes.size()) +
                             " labeled nodes, fewer than " + std::to_string(ratio.train_per_class));
        std::shuffle(nodes.begin(), nodes.end(), rng);
        s.train.insert(s.train.end(), nodes.begin(), nodes.begin() + ratio.train_per_class);
        rest.insert(rest.end(), nodes.begin() + ratio.train_per_class, nodes.end());
    }
    std::sort(rest.begin(), rest.end());
    if (static_cast<std::int64_t>(rest.size()) < ratio.valid + ratio.test)
        throw UsageError("not enough labeled nodes left for validation and test");
    std::shuffle(rest.begin(), rest.end(), rng);
    s.valid.assign(rest.begin(), rest.begin() + ratio.valid);
    s.test.assign(rest.begin() + ratio.valid, rest.begin() + ratio.valid + ratio.test);
    return s;
}

enum class GraphKind { path, complete, two_blocks };

// Small deterministic fixtures: one-hot node-id features, labels 0 for the
// first half of the nodes and 1 for the rest.
inline Dataset synthetic_graph(GraphKind kind, std::int64_t n, std::uint64_t seed) {
    if (n < 2) throw UsageError("synthetic graph needs n >= 2");
    Dataset d;
    d.n = n;
    d.num_features = n;
    d.num_classes = 2;
    std::vector<Triplet> edges;
    switch (kind) {
        case GraphKind::path:
            d.name = "path";
            for (std::int64_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, 1.0});
            break;
        case GraphKind::complete:
            d.name = "complete";
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = i + 1; j < n; ++j) edges.push_back({i, j, 1.0});
            break;
        case GraphKind::two_blocks: {
            d.name = "two_blocks";
            std::mt19937_64 rng(seed);
            std::bernoulli_distribution within(0.6), across(0.1);
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = i + 1; j < n; ++j) {
                    bool same = (i < n / 2) == (j < n / 2);
                    if (same ? within(rng) : across(rng)) edges.push_back({i, j, 1.0});
                }
            break;
        }
    }
    d.adjacency = SparseSym::from_upper_triplets(n, edges);
    std::vector<Triplet> feats;
    for (std::int64_t i = 0; i < n; ++i) feats.push_back({i, i, 1.0});
    d.features = CsrMatrix::from_triplets(n, n, std::move(feats));
    d.labels.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) d.labels[i] = i < n / 2 ? 0 : 1;
    return d;
}

}  // namespace fbgcn
