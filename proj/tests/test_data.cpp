#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include "sslhar/data.hpp"
#include "sslhar/rng.hpp"

using namespace sslhar;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

SensorStream toy_stream(const std::string& subject, int n, double rate,
                        const std::string& label) {
    SensorStream s;
    s.subject_id = subject;
    s.sample_rate_hz = rate;
    s.channel_names = {"ch0", "ch1", "ch2"};
    s.channels.resize(3);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) s.channels[static_cast<size_t>(c)].push_back(0.1 * i + c);
        s.labels.push_back(label);
    }
    return s;
}

}  // namespace

TEST_CASE("load_csv groups rows per subject") {
    const std::string path = temp_path("sslhar_two_subjects.csv");
    write_file(path,
               "subject,label,t,ch0,ch1\n"
               "a,walk,0.0,1.0,2.0\n"
               "a,walk,0.05,1.1,2.1\n"
               "a,walk,0.1,1.2,2.2\n"
               "b,run,0.0,5.0,6.0\n"
               "b,run,0.05,5.1,6.1\n");
    const std::vector<SensorStream> streams = load_csv(path);
    REQUIRE(streams.size() == 2);
    CHECK(streams[0].subject_id == "a");
    CHECK(streams[0].length() == 3);
    CHECK(streams[1].subject_id == "b");
    CHECK(streams[1].length() == 2);
    CHECK(streams[0].sample_rate_hz == doctest::Approx(20.0));
}

TEST_CASE("load_csv rejects empty and malformed files with line numbers") {
    const std::string empty = temp_path("sslhar_empty.csv");
    write_file(empty, "");
    CHECK_THROWS_WITH_AS(load_csv(empty), doctest::Contains("no data rows"), std::runtime_error);

    const std::string header_only = temp_path("sslhar_header_only.csv");
    write_file(header_only, "subject,label,t,ch0\n");
    CHECK_THROWS_WITH_AS(load_csv(header_only), doctest::Contains("no data rows"),
                         std::runtime_error);

    const std::string bad_header = temp_path("sslhar_bad_header.csv");
    write_file(bad_header, "user,label,t,ch0\na,w,0,1\n");
    CHECK_THROWS_WITH_AS(load_csv(bad_header), doctest::Contains("unknown header"),
                         std::runtime_error);

    const std::string ragged = temp_path("sslhar_ragged.csv");
    write_file(ragged, "subject,label,t,ch0\na,w,0.0,1\na,w,0.05\n");
    CHECK_THROWS_WITH_AS(load_csv(ragged), doctest::Contains("line 3"), std::runtime_error);

    const std::string nan_row = temp_path("sslhar_nan.csv");
    write_file(nan_row, "subject,label,t,ch0\na,w,0.0,1\na,w,0.05,nan\n");
    CHECK_THROWS_WITH_AS(load_csv(nan_row), doctest::Contains("line 3"), std::runtime_error);

    const std::string text_row = temp_path("sslhar_text.csv");
    write_file(text_row, "subject,label,t,ch0\na,w,0.0,1\na,w,0.05,oops\n");
    CHECK_THROWS_WITH_AS(load_csv(text_row), doctest::Contains("line 3"), std::runtime_error);
}

TEST_CASE("csv roundtrip preserves data") {
    const std::string path = temp_path("sslhar_roundtrip.csv");
    Rng rng(3);
    std::vector<SensorStream> streams = synth_generate(2, 2, 20.0, 4.0, rng);
    write_csv(path, streams);
    const std::vector<SensorStream> loaded = load_csv(path);
    REQUIRE(loaded.size() == streams.size());
    CHECK(loaded[0].length() == streams[0].length());
    CHECK(loaded[0].sample_rate_hz == doctest::Approx(20.0).epsilon(1e-3));
    for (int i = 0; i < 20; ++i) {
        CHECK(loaded[0].channels[0][static_cast<size_t>(i)] ==
              doctest::Approx(streams[0].channels[0][static_cast<size_t>(i)]).epsilon(1e-5));
    }
}

TEST_CASE("segment window and hop arithmetic") {
    // 20 Hz, 2 s window, 50% overlap: T = 40, hop = 20.
    SensorStream s = toy_stream("a", 100, 20.0, "walk");
    const WindowedDataset ds = segment(s, 2.0, 0.5, {"walk"});
    CHECK(ds.window_len == 40);
    REQUIRE(ds.size() == 4);  // offsets 0, 20, 40, 60
    CHECK(ds.examples[0].x.shape() == std::vector<int>{3, 40});
    CHECK(ds.examples[0].subject == "a");
    CHECK(ds.examples[0].label == 0);
}

TEST_CASE("segment of a too-short stream yields no windows") {
    SensorStream s = toy_stream("a", 39, 20.0, "walk");
    const WindowedDataset ds = segment(s, 2.0, 0.5, {"walk"});
    CHECK(ds.size() == 0);
}

TEST_CASE("segment count matches naive enumeration") {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const int len = 1 + rng.uniform_int(300);
        const double rate = 10.0;
        const double window_seconds = (1 + rng.uniform_int(30)) / 10.0;
        const double overlap = 0.25 * rng.uniform_int(4);
        SensorStream s = toy_stream("a", len, rate, "w");
        const WindowedDataset ds = segment(s, window_seconds, overlap, {"w"});
        const int T = static_cast<int>(std::lround(window_seconds * rate));
        const int hop = std::max(1, static_cast<int>(std::lround(T * (1.0 - overlap))));
        int count = 0;
        for (int off = 0; off + T <= len; off += hop) ++count;
        CHECK(ds.size() == count);
        if (len >= T) CHECK(count == (len - T) / hop + 1);
    }
}

TEST_CASE("segment labels by majority and discards ties") {
    SensorStream s = toy_stream("a", 40, 10.0, "w");
    // 10 Hz, 2 s window: T = 20, hop = 10. Window [0,20) gets 12 w / 8 r:
    for (int i = 12; i < 20; ++i) s.labels[static_cast<size_t>(i)] = "r";
    // Window [10,20)+[20,30) = exactly 10 w / 10 r after this flip:
    for (int i = 20; i < 28; ++i) s.labels[static_cast<size_t>(i)] = "r";
    // labels: [0,12) w, [12,28) r, [28,40) w
    // windows: [0,20): 12w 8r -> w; [10,30): 2w 18r -> r; [20,40): 12w 8r -> w
    const WindowedDataset ds = segment(s, 2.0, 0.5, {"r", "w"});
    REQUIRE(ds.size() == 3);
    CHECK(ds.classes[static_cast<size_t>(ds.examples[0].label)] == "w");
    CHECK(ds.classes[static_cast<size_t>(ds.examples[1].label)] == "r");
    CHECK(ds.classes[static_cast<size_t>(ds.examples[2].label)] == "w");

    // Exact tie: 10 vs 10 -> window discarded.
    SensorStream tie = toy_stream("a", 20, 10.0, "w");
    for (int i = 10; i < 20; ++i) tie.labels[static_cast<size_t>(i)] = "r";
    CHECK(segment(tie, 2.0, 0.5, {"r", "w"}).size() == 0);
}

TEST_CASE("normalize uses train statistics everywhere") {
    SensorStream s = toy_stream("a", 50, 10.0, "w");
    // Channel 0: values 5 +/- 2 pattern; others constant.
    for (int i = 0; i < 50; ++i) {
        s.channels[0][static_cast<size_t>(i)] = (i % 2 == 0) ? 3.0 : 7.0;  // mean 5, std 2
        s.channels[1][static_cast<size_t>(i)] = 4.0;                       // constant
        s.channels[2][static_cast<size_t>(i)] = static_cast<double>(i);
    }
    WindowedDataset train = segment(s, 1.0, 0.0, {"w"});
    WindowedDataset other = train;
    const NormStats stats = normalize(train, {&other});
    CHECK(stats.mean[0] == doctest::Approx(5.0));
    CHECK(stats.scale[0] == doctest::Approx(2.0));
    CHECK(stats.scale[1] == 1.0);  // zero-variance fallback
    REQUIRE(stats.zero_variance_channels.size() == 1);
    CHECK(stats.zero_variance_channels[0] == 1);
    // value 7 maps to 1 under mean 5 / std 2
    bool found = false;
    for (int t = 0; t < train.window_len; ++t) {
        if (train.examples[0].x.at(0, t) == doctest::Approx(1.0)) found = true;
    }
    CHECK(found);
    // constant channel becomes zeros
    for (int t = 0; t < train.window_len; ++t) CHECK(train.examples[0].x.at(1, t) == 0.0);
    // identical transform applied to the other split
    CHECK(other.examples[0].x.at(0, 0) == train.examples[0].x.at(0, 0));
}

TEST_CASE("balanced_sample splits counts with remainder to the first classes") {
    Rng rng(5);
    std::vector<SensorStream> streams = synth_generate(3, 6, 20.0, 30.0, rng);
    WindowedDataset ds = segment_all(streams, 2.0, 0.5);
    std::vector<int> pool(static_cast<size_t>(ds.size()));
    for (int i = 0; i < ds.size(); ++i) pool[static_cast<size_t>(i)] = i;

    Rng srng(7);
    const BalancedSample bs = balanced_sample(ds, pool, 50, srng);
    CHECK(bs.labeled_ids.size() == 50);
    std::map<int, int> counts;
    for (int id : bs.labeled_ids) ++counts[ds.examples[static_cast<size_t>(id)].label];
    CHECK(counts[0] == 9);
    CHECK(counts[1] == 9);
    for (int c = 2; c < 6; ++c) CHECK(counts[c] == 8);
    CHECK(bs.labeled_ids.size() + bs.unlabeled_ids.size() == pool.size());

    // one per class
    Rng srng2(7);
    const BalancedSample one = balanced_sample(ds, pool, 6, srng2);
    std::map<int, int> one_counts;
    for (int id : one.labeled_ids) ++one_counts[ds.examples[static_cast<size_t>(id)].label];
    for (int c = 0; c < 6; ++c) CHECK(one_counts[c] == 1);

    // determinism
    Rng a(11), b(11);
    CHECK(balanced_sample(ds, pool, 20, a).labeled_ids ==
          balanced_sample(ds, pool, 20, b).labeled_ids);
}

TEST_CASE("balanced_sample max-min spread is at most one for any budget") {
    Rng rng(5);
    std::vector<SensorStream> streams = synth_generate(2, 4, 20.0, 30.0, rng);
    WindowedDataset ds = segment_all(streams, 2.0, 0.5);
    std::vector<int> pool(static_cast<size_t>(ds.size()));
    for (int i = 0; i < ds.size(); ++i) pool[static_cast<size_t>(i)] = i;
    Rng srng(13);
    for (int n : {4, 5, 7, 13, 40}) {
        std::map<int, int> counts;
        for (int c = 0; c < 4; ++c) counts[c] = 0;
        for (int id : balanced_sample(ds, pool, n, srng).labeled_ids) {
            ++counts[ds.examples[static_cast<size_t>(id)].label];
        }
        int lo = 1 << 30, hi = 0, total = 0;
        for (auto& [c, v] : counts) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            total += v;
        }
        CHECK(hi - lo <= 1);
        CHECK(total == n);
    }
}

TEST_CASE("balanced_sample names a class that is too small") {
    SensorStream a = toy_stream("a", 600, 10.0, "big");
    SensorStream b = toy_stream("b", 20, 10.0, "tiny");
    WindowedDataset ds = segment_all({a, b}, 1.0, 0.0);
    std::vector<int> pool(static_cast<size_t>(ds.size()));
    for (int i = 0; i < ds.size(); ++i) pool[static_cast<size_t>(i)] = i;
    Rng rng(3);
    CHECK_THROWS_WITH_AS(balanced_sample(ds, pool, 100, rng), doctest::Contains("tiny"),
                         std::invalid_argument);
}

TEST_CASE("loso folds are subject-disjoint and exhaustive") {
    Rng rng(19);
    std::vector<SensorStream> streams = synth_generate(3, 3, 20.0, 20.0, rng);
    WindowedDataset ds = segment_all(streams, 2.0, 0.5);
    const SplitPlan plan = loso_split(ds);
    REQUIRE(plan.folds.size() == 3);
    std::set<std::string> tests;
    for (const SplitPlan::Fold& f : plan.folds) {
        tests.insert(f.test_subject);
        for (const std::string& tr : f.train_subjects) CHECK(tr != f.test_subject);
        CHECK(f.train_subjects.size() == 2);
        for (int id : f.test_ids) {
            CHECK(ds.examples[static_cast<size_t>(id)].subject == f.test_subject);
        }
    }
    CHECK(tests.size() == 3);

    // single subject rejected
    WindowedDataset single = segment(streams[0], 2.0, 0.5, ds.classes);
    CHECK_THROWS_AS(loso_split(single), std::invalid_argument);
}

TEST_CASE("assign_fold_samples keeps test and validation out of training") {
    Rng rng(23);
    std::vector<SensorStream> streams = synth_generate(4, 3, 20.0, 30.0, rng);
    WindowedDataset ds = segment_all(streams, 2.0, 0.5);
    SplitPlan plan = loso_split(ds);
    Rng srng(29);
    assign_fold_samples(plan, ds, 12, srng);
    for (const SplitPlan::Fold& f : plan.folds) {
        CHECK(!f.validation_subject.empty());
        CHECK(f.validation_subject != f.test_subject);
        std::set<int> test_ids(f.test_ids.begin(), f.test_ids.end());
        std::set<int> val_ids(f.validation_ids.begin(), f.validation_ids.end());
        for (int id : f.labeled_ids) {
            CHECK(test_ids.count(id) == 0);
            CHECK(val_ids.count(id) == 0);
        }
        for (int id : f.unlabeled_ids) {
            CHECK(test_ids.count(id) == 0);
            CHECK(val_ids.count(id) == 0);
        }
        // balanced labeled budget met
        CHECK(f.labeled_ids.size() == 12);
    }

    // transductive mode swaps the unlabeled pool for the test subject's data
    SplitPlan tplan = loso_split(ds);
    Rng trng(29);
    assign_fold_samples(tplan, ds, 12, trng, true);
    CHECK(tplan.folds[0].unlabeled_ids == tplan.folds[0].test_ids);
}

TEST_CASE("downsample averages blocks and divides the rate") {
    SensorStream s = toy_stream("a", 12, 60.0, "w");
    for (int i = 0; i < 12; ++i) s.channels[0][static_cast<size_t>(i)] = i;
    const SensorStream d = downsample(s, 3);
    CHECK(d.sample_rate_hz == doctest::Approx(20.0));
    CHECK(d.length() == 4);
    CHECK(d.channels[0][0] == doctest::Approx(1.0));  // mean of 0,1,2
    CHECK(d.channels[0][1] == doctest::Approx(4.0));
}

TEST_CASE("synth corpus is deterministic and class balanced") {
    Rng a(77), b(77);
    const std::vector<SensorStream> s1 = synth_generate(3, 4, 20.0, 10.0, a);
    const std::vector<SensorStream> s2 = synth_generate(3, 4, 20.0, 10.0, b);
    REQUIRE(s1.size() == s2.size());
    for (size_t i = 0; i < s1.size(); ++i) {
        REQUIRE(s1[i].length() == s2[i].length());
        for (int j = 0; j < s1[i].length(); ++j) {
            CHECK(s1[i].channels[0][static_cast<size_t>(j)] ==
                  s2[i].channels[0][static_cast<size_t>(j)]);
        }
    }
    // equal seconds per class per subject
    for (const SensorStream& s : s1) {
        std::map<std::string, int> counts;
        for (const std::string& l : s.labels) ++counts[l];
        REQUIRE(counts.size() == 4);
        for (auto& [label, count] : counts) CHECK(count == 200);
    }
}

TEST_CASE("synth classes have separated spectral peaks") {
    Rng rng(31);
    const std::vector<SensorStream> streams = synth_generate(2, 4, 20.0, 60.0, rng);
    const SensorStream& s = streams[0];
    const int per_class = 60 * 20;
    std::vector<double> peak_freqs;
    for (int c = 0; c < 4; ++c) {
        // DFT magnitude argmax of channel 0 over this class's segment.
        const int off = c * per_class;
        const int n = per_class;
        double best_mag = -1.0;
        int best_bin = 0;
        for (int k = 1; k < n / 2; ++k) {
            double re = 0.0, im = 0.0;
            for (int i = 0; i < n; ++i) {
                const double ang = -2.0 * std::numbers::pi * k * i / n;
                const double v = s.channels[0][static_cast<size_t>(off + i)];
                re += v * std::cos(ang);
                im += v * std::sin(ang);
            }
            const double mag = re * re + im * im;
            if (mag > best_mag) {
                best_mag = mag;
                best_bin = k;
            }
        }
        peak_freqs.push_back(best_bin * 20.0 / n);
    }
    for (size_t c = 1; c < peak_freqs.size(); ++c) {
        CHECK(peak_freqs[c] > peak_freqs[c - 1] + 0.2);  // separated by construction
    }
}
