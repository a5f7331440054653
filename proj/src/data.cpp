#include "sslhar/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sslhar {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

double parse_double(const std::string& field, int line_no, const std::string& what) {
    try {
        size_t consumed = 0;
        const double v = std::stod(field, &consumed);
        if (consumed != field.size()) throw std::invalid_argument("trailing");
        if (!std::isfinite(v)) {
            throw std::runtime_error("csv line " + std::to_string(line_no) + ": non-finite " +
                                     what + " value '" + field + "'");
        }
        return v;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        throw std::runtime_error("csv line " + std::to_string(line_no) + ": non-numeric " + what +
                                 " value '" + field + "'");
    }
}

}  // namespace

std::vector<SensorStream> load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv '" + path + "': no data rows");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 4 || header[0] != "subject" || header[1] != "label" || header[2] != "t") {
        throw std::runtime_error("csv '" + path + "': unknown header '" + line + "'");
    }
    const int n_ch = static_cast<int>(header.size()) - 3;
    std::vector<std::string> channel_names;
    for (int c = 0; c < n_ch; ++c) {
        const std::string expect = "ch" + std::to_string(c);
        if (header[static_cast<size_t>(c + 3)] != expect) {
            throw std::runtime_error("csv '" + path + "': unknown header column '" +
                                     header[static_cast<size_t>(c + 3)] + "', expected '" +
                                     expect + "'");
        }
        channel_names.push_back(expect);
    }

    std::vector<SensorStream> streams;
    std::map<std::string, size_t> by_subject;  // first-appearance order kept in `streams`
    std::vector<std::vector<double>> times;
    int line_no = 1;
    bool any_rows = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(header.size()) + " fields, got " +
                                     std::to_string(fields.size()));
        }
        any_rows = true;
        const std::string& subject = fields[0];
        auto it = by_subject.find(subject);
        if (it == by_subject.end()) {
            it = by_subject.emplace(subject, streams.size()).first;
            SensorStream s;
            s.subject_id = subject;
            s.channel_names = channel_names;
            s.channels.resize(static_cast<size_t>(n_ch));
            streams.push_back(std::move(s));
            times.emplace_back();
        }
        SensorStream& s = streams[it->second];
        s.labels.push_back(fields[1]);
        times[it->second].push_back(parse_double(fields[2], line_no, "time"));
        for (int c = 0; c < n_ch; ++c) {
            s.channels[static_cast<size_t>(c)].push_back(
                parse_double(fields[static_cast<size_t>(c + 3)], line_no, "channel"));
        }
    }
    if (!any_rows) throw std::runtime_error("csv '" + path + "': no data rows");

    for (size_t i = 0; i < streams.size(); ++i) {
        SensorStream& s = streams[i];
        const std::vector<double>& t = times[i];
        if (t.size() < 2) {
            throw std::runtime_error("csv '" + path + "': subject '" + s.subject_id +
                                     "' has fewer than 2 samples, cannot infer sample rate");
        }
        const double span = t.back() - t.front();
        if (span <= 0.0) {
            throw std::runtime_error("csv '" + path + "': subject '" + s.subject_id +
                                     "' has non-increasing timestamps");
        }
        s.sample_rate_hz = static_cast<double>(t.size() - 1) / span;
    }
    return streams;
}

void write_csv(const std::string& path, const std::vector<SensorStream>& streams) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    if (streams.empty()) throw std::invalid_argument("write_csv: no streams");
    const size_t n_ch = streams.front().channels.size();
    out << "subject,label,t";
    for (size_t c = 0; c < n_ch; ++c) out << ",ch" << c;
    out << "\n";
    char buf[64];
    for (const SensorStream& s : streams) {
        for (int i = 0; i < s.length(); ++i) {
            out << s.subject_id << "," << s.labels[static_cast<size_t>(i)];
            std::snprintf(buf, sizeof(buf), ",%.6f", static_cast<double>(i) / s.sample_rate_hz);
            out << buf;
            for (size_t c = 0; c < n_ch; ++c) {
                std::snprintf(buf, sizeof(buf), ",%.6f", s.channels[c][static_cast<size_t>(i)]);
                out << buf;
            }
            out << "\n";
        }
    }
}

WindowedDataset segment(const SensorStream& stream, double window_seconds,
                        double overlap_fraction, const std::vector<std::string>& classes) {
    if (overlap_fraction < 0.0 || overlap_fraction >= 1.0) {
        throw std::invalid_argument("segment: overlap must be in [0, 1)");
    }
    const int T = static_cast<int>(std::lround(window_seconds * stream.sample_rate_hz));
    if (T < 1) throw std::invalid_argument("segment: window of " + std::to_string(T) + " samples");
    const int hop =
        std::max(1, static_cast<int>(std::lround(static_cast<double>(T) * (1.0 - overlap_fraction))));

    WindowedDataset ds;
    ds.window_len = T;
    ds.channels = static_cast<int>(stream.channels.size());
    ds.classes = classes;

    std::map<std::string, int> class_index;
    for (size_t i = 0; i < classes.size(); ++i) class_index[classes[i]] = static_cast<int>(i);

    const int len = stream.length();
    for (int off = 0; off + T <= len; off += hop) {
        // Majority label; ties discard the window.
        std::map<std::string, int> counts;
        for (int i = off; i < off + T; ++i) ++counts[stream.labels[static_cast<size_t>(i)]];
        std::string best;
        int best_count = 0;
        bool tie = false;
        for (const auto& [label, count] : counts) {
            if (count > best_count) {
                best = label;
                best_count = count;
                tie = false;
            } else if (count == best_count) {
                tie = true;
            }
        }
        if (tie) continue;
        auto it = class_index.find(best);
        if (it == class_index.end()) {
            throw std::invalid_argument("segment: label '" + best + "' not in class list");
        }
        Window w;
        w.subject = stream.subject_id;
        w.label = it->second;
        w.x = Tensor({ds.channels, T});
        for (int c = 0; c < ds.channels; ++c) {
            const double* src = stream.channels[static_cast<size_t>(c)].data() + off;
            std::copy(src, src + T, w.x.data() + static_cast<int64_t>(c) * T);
        }
        ds.examples.push_back(std::move(w));
    }
    return ds;
}

WindowedDataset segment_all(const std::vector<SensorStream>& streams, double window_seconds,
                            double overlap_fraction) {
    if (streams.empty()) throw std::invalid_argument("segment_all: no streams");
    std::set<std::string> label_set;
    for (const SensorStream& s : streams) {
        label_set.insert(s.labels.begin(), s.labels.end());
    }
    const std::vector<std::string> classes(label_set.begin(), label_set.end());
    WindowedDataset all;
    bool first = true;
    for (const SensorStream& s : streams) {
        WindowedDataset part = segment(s, window_seconds, overlap_fraction, classes);
        if (first) {
            all = std::move(part);
            first = false;
        } else {
            if (part.window_len != all.window_len || part.channels != all.channels) {
                throw std::invalid_argument("segment_all: stream '" + s.subject_id +
                                            "' yields window " + std::to_string(part.window_len) +
                                            " x " + std::to_string(part.channels) +
                                            ", expected " + std::to_string(all.window_len) +
                                            " x " + std::to_string(all.channels));
            }
            for (Window& w : part.examples) all.examples.push_back(std::move(w));
        }
    }
    return all;
}

SensorStream downsample(const SensorStream& stream, int factor) {
    if (factor < 1) throw std::invalid_argument("downsample: factor must be >= 1");
    if (factor == 1) return stream;
    SensorStream out;
    out.subject_id = stream.subject_id;
    out.sample_rate_hz = stream.sample_rate_hz / factor;
    out.channel_names = stream.channel_names;
    out.channels.resize(stream.channels.size());
    const int n = stream.length() / factor;
    for (size_t c = 0; c < stream.channels.size(); ++c) {
        out.channels[c].reserve(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < factor; ++j) {
                acc += stream.channels[c][static_cast<size_t>(i * factor + j)];
            }
            out.channels[c].push_back(acc / factor);
        }
    }
    out.labels.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        // Label of the block's first sample.
        out.labels.push_back(stream.labels[static_cast<size_t>(i * factor)]);
    }
    return out;
}

NormStats compute_norm_stats(const WindowedDataset& ds, const std::vector<int>& ids) {
    if (ids.empty()) throw std::invalid_argument("compute_norm_stats: empty training split");
    NormStats st;
    st.mean.assign(static_cast<size_t>(ds.channels), 0.0);
    st.scale.assign(static_cast<size_t>(ds.channels), 1.0);
    const int64_t per_channel = static_cast<int64_t>(ids.size()) * ds.window_len;
    for (int c = 0; c < ds.channels; ++c) {
        double mean = 0.0;
        for (int id : ids) {
            const Tensor& x = ds.examples[static_cast<size_t>(id)].x;
            const double* row = x.data() + static_cast<int64_t>(c) * ds.window_len;
            for (int t = 0; t < ds.window_len; ++t) mean += row[t];
        }
        mean /= static_cast<double>(per_channel);
        double var = 0.0;
        for (int id : ids) {
            const Tensor& x = ds.examples[static_cast<size_t>(id)].x;
            const double* row = x.data() + static_cast<int64_t>(c) * ds.window_len;
            for (int t = 0; t < ds.window_len; ++t) {
                const double d = row[t] - mean;
                var += d * d;
            }
        }
        var /= static_cast<double>(per_channel);
        st.mean[static_cast<size_t>(c)] = mean;
        if (var > 0.0) {
            st.scale[static_cast<size_t>(c)] = std::sqrt(var);
        } else {
            st.zero_variance_channels.push_back(c);
        }
    }
    return st;
}

void apply_norm(WindowedDataset& ds, const NormStats& stats) {
    if (static_cast<int>(stats.mean.size()) != ds.channels) {
        throw std::invalid_argument("apply_norm: stats cover " + std::to_string(stats.mean.size()) +
                                    " channels, dataset has " + std::to_string(ds.channels));
    }
    for (Window& w : ds.examples) {
        for (int c = 0; c < ds.channels; ++c) {
            double* row = w.x.data() + static_cast<int64_t>(c) * ds.window_len;
            const double m = stats.mean[static_cast<size_t>(c)];
            const double inv = 1.0 / stats.scale[static_cast<size_t>(c)];
            for (int t = 0; t < ds.window_len; ++t) row[t] = (row[t] - m) * inv;
        }
    }
}

NormStats normalize(WindowedDataset& train, const std::vector<WindowedDataset*>& others) {
    std::vector<int> ids(static_cast<size_t>(train.size()));
    for (int i = 0; i < train.size(); ++i) ids[static_cast<size_t>(i)] = i;
    const NormStats stats = compute_norm_stats(train, ids);
    apply_norm(train, stats);
    for (WindowedDataset* ds : others) apply_norm(*ds, stats);
    return stats;
}

BalancedSample balanced_sample(const WindowedDataset& ds, const std::vector<int>& pool,
                               int n_labeled, Rng& rng) {
    const int k = static_cast<int>(ds.classes.size());
    if (k < 1) throw std::invalid_argument("balanced_sample: dataset has no classes");
    if (n_labeled < 1) throw std::invalid_argument("balanced_sample: n_labeled must be >= 1");

    std::vector<std::vector<int>> per_class(static_cast<size_t>(k));
    for (int id : pool) {
        const int label = ds.examples[static_cast<size_t>(id)].label;
        if (label == kUnlabeled) continue;
        per_class[static_cast<size_t>(label)].push_back(id);
    }
    std::vector<int> want(static_cast<size_t>(k), n_labeled / k);
    for (int c = 0; c < n_labeled % k; ++c) ++want[static_cast<size_t>(c)];

    BalancedSample out;
    std::vector<char> taken(ds.examples.size(), 0);
    for (int c = 0; c < k; ++c) {
        std::vector<int>& candidates = per_class[static_cast<size_t>(c)];
        if (static_cast<int>(candidates.size()) < want[static_cast<size_t>(c)]) {
            throw std::invalid_argument("balanced_sample: class '" + ds.classes[static_cast<size_t>(c)] +
                                        "' has " + std::to_string(candidates.size()) +
                                        " examples, needs " +
                                        std::to_string(want[static_cast<size_t>(c)]));
        }
        rng.shuffle(candidates);
        for (int i = 0; i < want[static_cast<size_t>(c)]; ++i) {
            out.labeled_ids.push_back(candidates[static_cast<size_t>(i)]);
            taken[static_cast<size_t>(candidates[static_cast<size_t>(i)])] = 1;
        }
    }
    std::sort(out.labeled_ids.begin(), out.labeled_ids.end());
    for (int id : pool) {
        if (!taken[static_cast<size_t>(id)]) out.unlabeled_ids.push_back(id);
    }
    return out;
}

SplitPlan loso_split(const WindowedDataset& ds) {
    std::set<std::string> subject_set;
    for (const Window& w : ds.examples) subject_set.insert(w.subject);
    if (subject_set.size() < 2) {
        throw std::invalid_argument("loso_split: need at least 2 subjects, got " +
                                    std::to_string(subject_set.size()));
    }
    const std::vector<std::string> subjects(subject_set.begin(), subject_set.end());
    SplitPlan plan;
    for (const std::string& test : subjects) {
        SplitPlan::Fold fold;
        fold.test_subject = test;
        for (const std::string& s : subjects) {
            if (s != test) fold.train_subjects.push_back(s);
        }
        for (int i = 0; i < ds.size(); ++i) {
            if (ds.examples[static_cast<size_t>(i)].subject == test) fold.test_ids.push_back(i);
        }
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

void assign_fold_samples(SplitPlan& plan, const WindowedDataset& ds, int n_labeled, Rng& rng,
                         bool transductive) {
    for (SplitPlan::Fold& fold : plan.folds) {
        // Validation: the training subject that follows the test subject in
        // sorted order (train_subjects is sorted and excludes the test one).
        size_t vi = 0;
        while (vi < fold.train_subjects.size() && fold.train_subjects[vi] < fold.test_subject) {
            ++vi;
        }
        fold.validation_subject = fold.train_subjects[vi % fold.train_subjects.size()];
        fold.validation_ids.clear();
        std::vector<int> train_pool;
        for (int i = 0; i < ds.size(); ++i) {
            const Window& w = ds.examples[static_cast<size_t>(i)];
            if (w.subject == fold.test_subject) continue;
            if (w.subject == fold.validation_subject) {
                fold.validation_ids.push_back(i);
            } else {
                train_pool.push_back(i);
            }
        }
        Rng fold_rng = rng.fork("fold." + fold.test_subject);
        BalancedSample bs = balanced_sample(ds, train_pool, n_labeled, fold_rng);
        fold.labeled_ids = std::move(bs.labeled_ids);
        fold.unlabeled_ids = transductive ? fold.test_ids : std::move(bs.unlabeled_ids);
    }
}

std::vector<SensorStream> synth_generate(int n_subjects, int n_classes, double rate_hz,
                                         double seconds_per_class, Rng& rng) {
    if (n_classes < 2) throw std::invalid_argument("synth_generate: need n_classes >= 2");
    if (n_subjects < 2) throw std::invalid_argument("synth_generate: need n_subjects >= 2");
    if (rate_hz <= 0.0 || seconds_per_class <= 0.0) {
        throw std::invalid_argument("synth_generate: rate and seconds must be positive");
    }
    constexpr int kChannels = 3;
    const int samples_per_class = static_cast<int>(std::lround(seconds_per_class * rate_hz));

    std::vector<SensorStream> streams;
    for (int s = 0; s < n_subjects; ++s) {
        SensorStream st;
        st.subject_id = "s" + std::to_string(s);
        st.sample_rate_hz = rate_hz;
        for (int c = 0; c < kChannels; ++c) st.channel_names.push_back("ch" + std::to_string(c));
        st.channels.resize(kChannels);

        Rng srng = rng.fork("subject." + std::to_string(s));
        // Persistent subject idiosyncrasies: pace, vigor, sensor gains.
        // Bounded jitter keeps every subject's class bands inside the
        // geometric class spacing, so activities stay identifiable across
        // subjects while looking different in detail.
        auto jitter = [&srng](double scale) {
            return std::exp(scale * (2.0 * srng.uniform() - 1.0));
        };
        const double freq_mult = jitter(0.045);
        const double amp_mult = jitter(0.12);
        double gain[kChannels];
        for (double& g : gain) g = jitter(0.12);

        for (int c = 0; c < n_classes; ++c) {
            // Geometric spacing from 1 Hz keeps at least two full periods in a
            // 2 s window and keeps class bands separated across subjects.
            const double f = 1.0 * std::pow(1.30, c) * freq_mult;  // fundamental, Hz
            const double amp = (0.9 + 0.10 * c) * amp_mult;
            // Harmonic mix keyed to the class, a second cue besides frequency.
            const double h2 = 0.6 * (c % 3 == 0 ? 1.0 : (c % 3 == 1 ? 0.55 : 0.25));
            const double h3 = 0.35 * (c % 2 == 0 ? 0.4 : 1.0);
            const double phase0 = 2.0 * std::numbers::pi * srng.uniform();
            const double phase1 = 2.0 * std::numbers::pi * srng.uniform();
            const double phase2 = 2.0 * std::numbers::pi * srng.uniform();
            const double wobble_phase = 2.0 * std::numbers::pi * srng.uniform();
            const double env_phase = 2.0 * std::numbers::pi * srng.uniform();
            const std::string label = "act" + std::to_string(c);
            for (int i = 0; i < samples_per_class; ++i) {
                const double t = static_cast<double>(i) / rate_hz;
                // Slow frequency wobble and amplitude drift keep windows from
                // the same block from being near-duplicates.
                const double warped =
                    t + 0.05 * std::sin(2.0 * std::numbers::pi * 0.045 * t + wobble_phase);
                const double env =
                    1.0 + 0.25 * std::sin(2.0 * std::numbers::pi * 0.08 * t + env_phase);
                const double w = 2.0 * std::numbers::pi * f * warped;
                const double ch0 =
                    amp * env * (std::sin(w + phase0) + h2 * std::sin(2.0 * w + phase1));
                const double ch1 =
                    amp * 0.8 * (std::cos(w + phase1) + h3 * std::sin(3.0 * w + phase2));
                const double ch2 = amp * 0.6 * env * std::sin(w + phase2);
                const double base[kChannels] = {ch0, ch1, ch2};
                for (int ch = 0; ch < kChannels; ++ch) {
                    st.channels[static_cast<size_t>(ch)].push_back(gain[ch] * base[ch] +
                                                                   0.25 * srng.normal());
                }
                st.labels.push_back(label);
            }
        }
        streams.push_back(std::move(st));
    }
    return streams;
}

}  // namespace sslhar
