#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sslhar/cli.hpp"
#include "sslhar/runconfig.hpp"

using namespace sslhar;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("har");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempTree {
    fs::path root;
    TempTree() {
        root = fs::temp_directory_path() / "sslhar_cli_test";
        fs::remove_all(root);
        fs::create_directories(root);
    }
    std::string sub(const std::string& name) const { return (root / name).string(); }
};

const TempTree& tree() {
    static TempTree t;
    return t;
}

const std::string& corpus_csv() {
    static std::string path = [] {
        const std::string out = tree().sub("corpus");
        REQUIRE(run_cli({"synth", "--subjects", "3", "--classes", "3", "--rate", "20",
                         "--seconds", "30", "--seed", "5", "--out", out}) == 0);
        return out + "/synth.csv";
    }();
    return path;
}

std::string write_config(const std::string& name, const std::string& json) {
    const std::string path = tree().sub(name);
    std::ofstream out(path);
    out << json;
    return path;
}

}  // namespace

TEST_CASE("synth writes the documented csv schema") {
    const std::string csv = corpus_csv();
    std::ifstream in(csv);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "subject,label,t,ch0,ch1,ch2");
    std::string first;
    std::getline(in, first);
    CHECK(first.rfind("s0,act0,0.000000,", 0) == 0);
}

TEST_CASE("unknown config keys exit with code 2 naming the key") {
    const std::string cfg = write_config("bad.json", R"({"data": "x.csv", "learning_rte": 0.1})");
    CHECK(run_cli({"train", "--config", cfg}) == 2);

    const std::string bad_value =
        write_config("bad2.json", R"({"model_kind": "transformer"})");
    CHECK(run_cli({"train", "--config", bad_value}) == 2);

    CHECK(run_cli({"train", "--no-such-flag"}) == 2);
}

TEST_CASE("missing data file is a runtime failure, not a config error") {
    const std::string cfg = write_config("missing_data.json", R"({"data": "does_not_exist.csv"})");
    CHECK(run_cli({"train", "--config", cfg, "--out", tree().sub("missing_out")}) == 1);
}

TEST_CASE("gradcheck subcommand passes for every family") {
    CHECK(run_cli({"gradcheck", "--spec", "convv:8:5:1:1-maxpool:2:2-fc", "--tol", "1e-4",
                   "--seed", "3"}) == 0);
}

TEST_CASE("train writes resolved config, history, checkpoint, metrics") {
    const std::string out = tree().sub("train_cnn");
    const std::string cfg = write_config("train_cnn.json", R"({
        "data": ")" + corpus_csv() + R"(",
        "model_kind": "cnn",
        "spec": "convv:4:5:1:1-maxpool:2:2-fc",
        "n_labeled": 9,
        "max_epochs": 3,
        "batch_labeled": 9,
        "test_subject": "s2",
        "seed": 11
    })");
    REQUIRE(run_cli({"train", "--config", cfg, "--out", out}) == 0);
    CHECK(fs::exists(out + "/config.resolved.json"));
    CHECK(fs::exists(out + "/history.csv"));
    CHECK(fs::exists(out + "/checkpoint.bin"));
    CHECK(fs::exists(out + "/metrics_test.csv"));

    // resolved copy parses and reproduces the effective settings
    const RunConfig resolved = parse_run_config_file(out + "/config.resolved.json");
    CHECK(resolved.model_kind == "cnn");
    CHECK(resolved.n_labeled == 9);
    CHECK(resolved.test_subject == "s2");

    // metrics csv has the documented shape
    const std::string metrics = slurp(out + "/metrics_test.csv");
    CHECK(metrics.rfind("class,precision,recall,f1,support\n", 0) == 0);
    CHECK(metrics.find("mean_f1") != std::string::npos);
}

TEST_CASE("train without a test subject still produces a checkpoint") {
    const std::string out = tree().sub("train_no_test");
    const std::string cfg = write_config("train_no_test.json", R"({
        "data": ")" + corpus_csv() + R"(",
        "model_kind": "cnn",
        "spec": "convv:4:5:1:1-maxpool:2:2-fc",
        "n_labeled": 9,
        "max_epochs": 2,
        "batch_labeled": 9,
        "validation_subject": "s1",
        "seed": 13
    })");
    REQUIRE(run_cli({"train", "--config", cfg, "--out", out}) == 0);
    CHECK(fs::exists(out + "/checkpoint.bin"));
    CHECK(fs::exists(out + "/history.csv"));
    CHECK_FALSE(fs::exists(out + "/metrics_test.csv"));
}

TEST_CASE("eval reuses a train checkpoint") {
    const std::string out = tree().sub("eval_out");
    REQUIRE(run_cli({"eval", "--checkpoint", tree().sub("train_cnn") + "/checkpoint.bin",
                     "--data", corpus_csv(), "--subject", "s2", "--out", out}) == 0);
    CHECK(fs::exists(out + "/metrics.csv"));
}

TEST_CASE("identical config and seed give byte-identical outputs") {
    const std::string cfg = write_config("repro.json", R"({
        "data": ")" + corpus_csv() + R"(",
        "model_kind": "ladder",
        "spec": "convv:4:5:1:1-maxpool:2:2-fc",
        "n_labeled": 9,
        "max_epochs": 2,
        "batch_labeled": 9,
        "batch_unlabeled": 16,
        "seed": 23
    })");
    const std::string out1 = tree().sub("repro1");
    const std::string out2 = tree().sub("repro2");
    REQUIRE(run_cli({"loso", "--config", cfg, "--out", out1}) == 0);
    REQUIRE(run_cli({"loso", "--config", cfg, "--out", out2}) == 0);
    CHECK(slurp(out1 + "/loso_summary.csv") == slurp(out2 + "/loso_summary.csv"));
    for (const std::string subject : {"s0", "s1", "s2"}) {
        CHECK(slurp(out1 + "/fold_" + subject + "_metrics.csv") ==
              slurp(out2 + "/fold_" + subject + "_metrics.csv"));
    }
}

TEST_CASE("loso writes one metrics file per fold plus the summary") {
    const std::string summary = slurp(tree().sub("repro1") + "/loso_summary.csv");
    CHECK(summary.rfind("test_subject,mean_f1\n", 0) == 0);
    CHECK(summary.find("\nmean,") != std::string::npos);
    CHECK(summary.find("\nstd,") != std::string::npos);
    int fold_rows = 0;
    std::istringstream ss(summary);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.size() > 1 && line[0] == 's' && std::isdigit(line[1])) ++fold_rows;
    }
    CHECK(fold_rows == 3);
}

TEST_CASE("sweep-lambda writes one row per emphasized layer") {
    const std::string out = tree().sub("sweep");
    const std::string cfg = write_config("sweep.json", R"({
        "data": ")" + corpus_csv() + R"(",
        "spec": "convv:4:5:1:1-maxpool:2:2-fc",
        "n_labeled": 9,
        "max_epochs": 2,
        "batch_labeled": 9,
        "batch_unlabeled": 16,
        "test_subject": "s0",
        "seed": 31
    })");
    REQUIRE(run_cli({"sweep-lambda", "--config", cfg, "--out", out}) == 0);
    const std::string csv = slurp(out + "/lambda_sweep.csv");
    CHECK(csv.rfind("emphasized_layer,mean_f1\n", 0) == 0);
    int rows = 0;
    std::istringstream ss(csv);
    std::string line;
    std::getline(ss, line);  // header
    while (std::getline(ss, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 4);  // depth 3 spec: layers 0..3
}

TEST_CASE("viz-pca exports coordinates for labeled and test windows") {
    const std::string out = tree().sub("viz");
    const std::string cfg = write_config("viz.json", R"({
        "data": ")" + corpus_csv() + R"(",
        "model_kind": "cnn",
        "spec": "convv:4:5:1:1-maxpool:2:2-fc",
        "n_labeled": 9,
        "test_subject": "s2",
        "seed": 11
    })");
    REQUIRE(run_cli({"viz-pca", "--config", cfg, "--checkpoint",
                     tree().sub("train_cnn") + "/checkpoint.bin", "--out", out}) == 0);
    const std::string csv = slurp(out + "/pca_export.csv");
    CHECK(csv.rfind("example_id,subject,label,is_labeled,pc1,pc2\n", 0) == 0);
    CHECK(csv.find(",1,") != std::string::npos);   // labeled rows present
    CHECK(csv.find("s2") != std::string::npos);    // test rows present
}

TEST_CASE("selftrain and logreg model kinds run end to end") {
    const std::string out = tree().sub("selftrain");
    const std::string cfg = write_config("selftrain.json", R"({
        "data": ")" + corpus_csv() + R"(",
        "model_kind": "selftrain",
        "n_labeled": 9,
        "threshold": 0.95,
        "max_iters": 3,
        "logreg_epochs": 120,
        "test_subject": "s1",
        "seed": 41
    })");
    REQUIRE(run_cli({"train", "--config", cfg, "--out", out}) == 0);
    CHECK(fs::exists(out + "/metrics_test.csv"));
    CHECK(fs::exists(out + "/checkpoint.bin"));

    const std::string out2 = tree().sub("logreg");
    REQUIRE(run_cli({"train", "--config", cfg, "--out", out2, "--model", "logreg"}) == 0);
    CHECK(fs::exists(out2 + "/metrics_test.csv"));
}

TEST_CASE("pretrained cnn model kind runs end to end") {
    const std::string out = tree().sub("pretrain");
    const std::string cfg = write_config("pretrain.json", R"({
        "data": ")" + corpus_csv() + R"(",
        "model_kind": "pretrain_cnn",
        "spec": "convv:4:5:1:1-maxpool:2:2-fc",
        "n_labeled": 9,
        "max_epochs": 2,
        "pretrain_epochs": 2,
        "batch_labeled": 9,
        "batch_unlabeled": 16,
        "test_subject": "s0",
        "seed": 43
    })");
    REQUIRE(run_cli({"train", "--config", cfg, "--out", out}) == 0);
    CHECK(fs::exists(out + "/metrics_test.csv"));
}
