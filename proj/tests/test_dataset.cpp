#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "prcnn/dataset.hpp"
#include "prcnn/wav.hpp"

using namespace prcnn;
namespace fs = std::filesystem;

namespace {

struct TempTree {
    fs::path root;
    explicit TempTree(const std::string& name) : root(fs::temp_directory_path() / name) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempTree() { fs::remove_all(root); }
};

void make_tree(const fs::path& root, const std::vector<std::string>& genres,
               std::size_t files_per_genre) {
    std::vector<double> samples(kClipSamples, 0.1);
    for (const std::string& g : genres) {
        fs::create_directories(root / g);
        for (std::size_t i = 0; i < files_per_genre; ++i) {
            write_wav((root / g / (g + "." + std::to_string(i) + ".wav")).string(), samples,
                      kSampleRate);
        }
    }
}

}  // namespace

TEST_CASE("scan_dataset finds files with alphabetical labels") {
    TempTree tree("prcnn_scan_test");
    make_tree(tree.root, {"rock", "blues", "jazz"}, 4);

    DatasetManifest m = scan_dataset(tree.root.string());
    CHECK(m.label_names == std::vector<std::string>{"blues", "jazz", "rock"});
    REQUIRE(m.entries.size() == 12);
    CHECK(std::is_sorted(m.entries.begin(), m.entries.end(),
                         [](const auto& a, const auto& b) { return a.path < b.path; }));
    for (const ManifestEntry& e : m.entries) {
        CHECK(e.label < 3);
        CHECK(e.split == SplitSide::unassigned);
    }

    DatasetManifest again = scan_dataset(tree.root.string());
    REQUIRE(again.entries.size() == m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        CHECK(again.entries[i].path == m.entries[i].path);
        CHECK(again.entries[i].label == m.entries[i].label);
    }
}

TEST_CASE("scan_dataset rejects empty roots") {
    TempTree tree("prcnn_scan_empty");
    CHECK_THROWS_AS(scan_dataset(tree.root.string()), DataError);
    fs::create_directories(tree.root / "rock");  // genre dir with no wav files
    CHECK_THROWS_AS(scan_dataset(tree.root.string()), DataError);
}

TEST_CASE("split is stratified at the song level") {
    TempTree tree("prcnn_split_test");
    make_tree(tree.root, {"a", "b"}, 10);
    DatasetManifest m = scan_dataset(tree.root.string());
    split(m, 0.9, Seed{17});

    std::map<std::size_t, std::size_t> train_count, test_count;
    for (const ManifestEntry& e : m.entries) {
        REQUIRE(e.split != SplitSide::unassigned);
        if (e.split == SplitSide::train) {
            ++train_count[e.label];
        } else {
            ++test_count[e.label];
        }
    }
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(train_count[c] == 9);
        CHECK(test_count[c] == 1);
    }
}

TEST_CASE("split determinism across seeds") {
    TempTree tree("prcnn_split_seed");
    make_tree(tree.root, {"a", "b", "c"}, 8);

    auto sides = [&](Seed seed) {
        DatasetManifest m = scan_dataset(tree.root.string());
        split(m, 0.75, seed);
        std::vector<int> v;
        for (const ManifestEntry& e : m.entries) v.push_back(static_cast<int>(e.split));
        return v;
    };
    CHECK(sides(Seed{5}) == sides(Seed{5}));

    bool any_diff = false;
    for (std::uint64_t s = 6; s < 16 && !any_diff; ++s) {
        any_diff = sides(Seed{5}) != sides(Seed{s});
    }
    CHECK(any_diff);
}

TEST_CASE("no source file straddles the split") {
    TempTree tree("prcnn_split_leak");
    make_tree(tree.root, {"a", "b"}, 6);
    DatasetManifest m = scan_dataset(tree.root.string());
    split(m, 0.5, Seed{3});

    // each entry is one file; a file appears exactly once, so there is nothing
    // to straddle unless the same path shows up on both sides
    std::set<std::string> train_paths, test_paths;
    for (const ManifestEntry& e : m.entries) {
        (e.split == SplitSide::train ? train_paths : test_paths).insert(e.path);
    }
    for (const std::string& p : train_paths) CHECK(test_paths.count(p) == 0);
}

TEST_CASE("split refuses classes with fewer than two songs") {
    TempTree tree("prcnn_split_tiny");
    make_tree(tree.root, {"a"}, 1);
    DatasetManifest m = scan_dataset(tree.root.string());
    CHECK_THROWS_AS(split(m, 0.8, Seed{1}), DataError);
}

TEST_CASE("manifest round trip") {
    TempTree tree("prcnn_manifest_test");
    make_tree(tree.root, {"x", "y"}, 3);
    DatasetManifest m = scan_dataset(tree.root.string());
    split(m, 0.67, Seed{9});

    const std::string path = (tree.root / "manifest.tsv").string();
    save_manifest(m, path);
    DatasetManifest loaded = load_manifest(path);
    CHECK(loaded.label_names == m.label_names);
    REQUIRE(loaded.entries.size() == m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        CHECK(loaded.entries[i].path == m.entries[i].path);
        CHECK(loaded.entries[i].label == m.entries[i].label);
        CHECK(loaded.entries[i].split == m.entries[i].split);
    }
}

TEST_CASE("default tones land on the promised disjoint bins") {
    auto tones = default_tones(10);
    REQUIRE(tones.size() == 10);
    std::set<long> bins;
    for (std::size_t c = 0; c < 10; ++c) {
        REQUIRE(tones[c].size() == 3);
        for (std::size_t k = 0; k < 3; ++k) {
            const double expect_bin = 40.0 + 12.0 * static_cast<double>(c) +
                                      4.0 * static_cast<double>(k);
            const double bin = tones[c][k] * kFftSize / kSampleRate;
            CHECK(bin == doctest::Approx(expect_bin).epsilon(1e-12));
            bins.insert(std::lround(bin));
        }
    }
    CHECK(bins.size() == 30);  // fully disjoint across classes
}

TEST_CASE("synth clips peak at their class bins") {
    SynthSpec spec;
    spec.class_count = 4;
    spec.clips_per_class = 2;
    spec.tones_per_class = default_tones(4);
    spec.seed = Seed{101};
    Shard shard = synth_generate(spec);
    REQUIRE(shard.records.size() == 8);
    CHECK(shard.class_count == 4);

    for (const Spectrogram& rec : shard.records) {
        REQUIRE(rec.label >= 0);
        const std::set<long> class_bins = {40 + 12 * rec.label, 44 + 12 * rec.label,
                                           48 + 12 * rec.label};
        // the global argmax bin of the mean frame spectrum must be a class bin
        std::vector<double> mean(kBinCount, 0.0);
        for (std::size_t t = 0; t < kFrameCount; ++t) {
            for (std::size_t b = 0; b < kBinCount; ++b) mean[b] += rec.values(t, b);
        }
        const long best = std::max_element(mean.begin(), mean.end()) - mean.begin();
        CHECK(class_bins.count(best) == 1);
    }
}

TEST_CASE("synth classes are nearest-centroid separable") {
    SynthSpec spec;
    spec.class_count = 5;
    spec.clips_per_class = 6;
    spec.tones_per_class = default_tones(5);
    spec.seed = Seed{202};
    Shard shard = synth_generate(spec);

    // centroid of the mean frame spectrum per class
    std::vector<std::vector<double>> centroids(5, std::vector<double>(kBinCount, 0.0));
    std::vector<std::size_t> counts(5, 0);
    auto mean_spectrum = [](const Spectrogram& rec) {
        std::vector<double> m(kBinCount, 0.0);
        for (std::size_t t = 0; t < kFrameCount; ++t) {
            for (std::size_t b = 0; b < kBinCount; ++b) m[b] += rec.values(t, b);
        }
        for (double& v : m) v /= static_cast<double>(kFrameCount);
        return m;
    };
    for (const Spectrogram& rec : shard.records) {
        auto m = mean_spectrum(rec);
        for (std::size_t b = 0; b < kBinCount; ++b) centroids[rec.label][b] += m[b];
        ++counts[rec.label];
    }
    for (std::size_t c = 0; c < 5; ++c) {
        for (double& v : centroids[c]) v /= static_cast<double>(counts[c]);
    }

    std::size_t correct = 0;
    for (const Spectrogram& rec : shard.records) {
        auto m = mean_spectrum(rec);
        std::size_t best = 0;
        double best_dist = 1e300;
        for (std::size_t c = 0; c < 5; ++c) {
            double d = 0;
            for (std::size_t b = 0; b < kBinCount; ++b) {
                const double diff = m[b] - centroids[c][b];
                d += diff * diff;
            }
            if (d < best_dist) {
                best_dist = d;
                best = c;
            }
        }
        if (static_cast<int>(best) == rec.label) ++correct;
    }
    CHECK(correct == shard.records.size());
}

TEST_CASE("synth generation is seed-deterministic") {
    SynthSpec spec;
    spec.class_count = 2;
    spec.clips_per_class = 2;
    spec.tones_per_class = default_tones(2);
    spec.seed = Seed{77};
    Shard a = synth_generate(spec);
    Shard b = synth_generate(spec);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t r = 0; r < a.records.size(); ++r) {
        CHECK(a.records[r].source_id == b.records[r].source_id);
        for (std::size_t i = 0; i < a.records[r].values.size(); ++i) {
            CHECK(a.records[r].values[i] == b.records[r].values[i]);
        }
    }

    spec.seed = Seed{78};
    Shard c = synth_generate(spec);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.records[0].values.size() && !any_diff; ++i) {
        any_diff = a.records[0].values[i] != c.records[0].values[i];
    }
    CHECK(any_diff);
}

TEST_CASE("tones above Nyquist are rejected") {
    Rng rng(1);
    CHECK_THROWS_AS(synth_tone_signal({12000.0}, kClipSamples, 0.0, rng), ArgumentError);
}
