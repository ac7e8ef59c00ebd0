#include "jmf/io.hpp"

#include <json.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& work_dir()
{
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("jmf_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args)
{
    const std::string cmd = "cd '" + work_dir().string() + "' && '" JMF_CLI_PATH "' " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json load(const fs::path& rel)
{
    return json::parse(jmf::io::read_text(work_dir() / rel));
}

void write(const fs::path& rel, const std::string& text)
{
    jmf::io::write_text(work_dir() / rel, text);
}

std::map<std::string, std::string> snapshot(const fs::path& rel)
{
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(work_dir() / rel)) {
        files[e.path().filename().string()] = jmf::io::read_text(e.path());
    }
    return files;
}

class RemoveWorkDir : public ::testing::Environment {
public:
    void TearDown() override { fs::remove_all(work_dir()); }
};

const auto* const cleanup = ::testing::AddGlobalTestEnvironment(new RemoveWorkDir);

} // namespace

TEST(CliGenerate, ManifestListsDataShapes)
{
    ASSERT_EQ(run("generate --dataset D1 --seed 7 --out gen_a"), 0);
    const json m = load("gen_a/manifest.json");
    std::vector<std::pair<int, int>> shapes;
    for (const auto& f : m.at("files")) {
        if (f.at("role") == "data") {
            shapes.emplace_back(f.at("shape")[0].get<int>(), f.at("shape")[1].get<int>());
        }
    }
    EXPECT_EQ(shapes, (std::vector<std::pair<int, int>>{{45, 130}, {45, 170}, {45, 215}}));
    EXPECT_EQ(m.at("seed").get<int>(), 7);
}

TEST(CliGenerate, SameSeedSameBytes)
{
    ASSERT_EQ(run("generate --dataset D1 --seed 7 --out gen_b1"), 0);
    ASSERT_EQ(run("generate --dataset D1 --seed 7 --out gen_b2"), 0);
    const auto a = snapshot("gen_b1");
    EXPECT_EQ(a.size(), 15u);
    EXPECT_EQ(a, snapshot("gen_b2"));
}

TEST(CliGenerate, InvalidDatasetIsUsageError)
{
    EXPECT_EQ(run("generate --dataset D9 --out gen_bad"), 2);
    EXPECT_EQ(run("generate --out gen_bad"), 2);
    EXPECT_EQ(run(""), 2);
}

TEST(CliSolve, SummaryAggregatesEveryRun)
{
    write("solve4.json", R"({
        "source": {"synthetic": {"dataset": "D1"}}, "constraints": false,
        "solvers": [{"algorithm": "MUR", "tolerance": 1e-3}, {"algorithm": "PG", "tolerance": 1e-3},
                    {"algorithm": "Ne", "tolerance": 1e-3}, {"algorithm": "PANLS", "tolerance": 1e-3}],
        "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]})");
    ASSERT_EQ(run("solve --config solve4.json --out solve4"), 0);
    const json s = load("solve4/summary.json");
    ASSERT_EQ(s.at("rows").size(), 4u);
    ASSERT_EQ(s.at("runs").size(), 40u);
    for (const auto& row : s.at("rows")) {
        EXPECT_EQ(row.at("runs").get<int>(), 10);
    }

    std::vector<double> seconds(4, 0.0);
    std::vector<double> iters(4, 0.0);
    for (const auto& r : s.at("runs")) {
        const Eigen::MatrixXd trace = [&] {
            auto text = jmf::io::read_text(work_dir() / "solve4" / r.at("trace").get<std::string>());
            text = text.substr(text.find('\n') + 1);
            write("trace_body.csv", text);
            return jmf::io::read_matrix(work_dir() / "trace_body.csv");
        }();
        const auto last = trace.rows() - 1;
        EXPECT_NEAR(trace(last, 1), r.at("final_objective").get<double>(),
                    1e-12 * std::abs(r.at("final_objective").get<double>()));
        EXPECT_EQ(trace(last, 0), r.at("iterations").get<double>());
        const auto k = r.at("solver").get<std::size_t>();
        seconds[k] += trace(last, 3);
        iters[k] += trace(last, 0);
    }
    for (std::size_t k = 0; k < 4; ++k) {
        const auto& row = s.at("rows")[k];
        EXPECT_NEAR(row.at("mean_seconds").get<double>(), seconds[k] / 10.0, 1e-12);
        EXPECT_NEAR(row.at("mean_iterations").get<double>(), iters[k] / 10.0, 1e-12);
    }
    EXPECT_TRUE(fs::exists(work_dir() / "solve4/summary.csv"));
}

TEST(CliSolve, MurWithGradientRuleRejected)
{
    write("mur2.json", R"({"source": {"synthetic": {"dataset": "D1"}},
        "solvers": [{"algorithm": "MUR", "stop_rule": "GradientRatio"}], "seeds": [0]})");
    EXPECT_EQ(run("solve --config mur2.json --out mur2"), 2);
}

TEST(CliSolve, BadInputsAreUsageErrors)
{
    EXPECT_EQ(run("solve --config missing.json --out x"), 2);
    write("broken.json", "{ not json");
    EXPECT_EQ(run("solve --config broken.json --out x"), 2);
    write("nofile.json", R"({"source": {"views": ["nope.csv"]}, "params": {"rank": 2}, "seeds": [0]})");
    EXPECT_EQ(run("solve --config nofile.json --out x"), 2);
}

TEST(CliSolve, AllDivergedExitsOne)
{
    std::string big;
    for (int i = 0; i < 5; ++i) {
        big += "1e200,1e200,1e200,1e200\n";
    }
    write("big.csv", big);
    write("diverge.json", R"({"source": {"views": ["big.csv"]}, "params": {"rank": 2},
        "solvers": [{"algorithm": "PG"}], "seeds": [0, 1]})");
    EXPECT_EQ(run("solve --config diverge.json --out diverge"), 1);
    const json s = load("diverge/summary.json");
    EXPECT_EQ(s.at("rows")[0].at("diverged").get<int>(), 2);
}

TEST(CliGridsearch, SingleCellAndSelection)
{
    write("grid1.json", R"({"source": {"synthetic": {"dataset": "D1"}},
        "solvers": [{"algorithm": "PANLS", "tolerance": 1e-4}],
        "grid": {"lambda1": [0.01], "lambda2": [0.1], "gamma1": [1e-6], "gamma2": [0.1], "repeats": 3}})");
    ASSERT_EQ(run("gridsearch --config grid1.json --out grid1"), 0);
    const json best = load("grid1/best.json");
    EXPECT_DOUBLE_EQ(best.at("lambda1").get<double>(), 0.01);
    EXPECT_DOUBLE_EQ(best.at("lambda2").get<double>(), 0.1);
    EXPECT_EQ(best.at("cells").get<int>(), 1);
}

TEST(CliGridsearch, NeedsGroundTruth)
{
    write("one.csv", "1,2\n3,4\n");
    write("gridfile.json", R"({"source": {"views": ["one.csv"]}, "params": {"rank": 1}, "seeds": [0]})");
    EXPECT_EQ(run("gridsearch --config gridfile.json --out gridfile"), 2);
}

TEST(CliPredict, HeldOutViewOfExactModel)
{
    ASSERT_EQ(run("generate --dataset D1 --noise 0 --out exact"), 0);
    ASSERT_EQ(run("predict --model exact/truth_model.json --mode L-view --target 0 --test exact/X_1.csv "
                  "exact/X_2.csv --truth exact/X_0.csv --out pred_view"),
              0);
    EXPECT_LT(load("pred_view/report.json").at("relative_error").get<double>(), 1e-6);
    EXPECT_TRUE(fs::exists(work_dir() / "pred_view/X_hat.csv"));
}

TEST(CliPredict, RightModeOnTrainingData)
{
    ASSERT_EQ(run("generate --dataset D1 --seed 3 --out train"), 0);
    write("train.json", R"({"source": {"manifest": "train/manifest.json"}, "constraints": false,
        "solvers": [{"algorithm": "PANLS", "tolerance": 1e-6}], "seeds": [0]})");
    ASSERT_EQ(run("solve --config train.json --out train_run"), 0);
    const json s = load("train_run/summary.json");
    const double trained = s.at("runs")[0].at("reconstruction_error").get<double>();
    ASSERT_EQ(run("predict --model train_run/" + s.at("runs")[0].at("model").get<std::string>() +
                  " --mode R --test train/X_0.csv train/X_1.csv train/X_2.csv --out pred_r"),
              0);
    const double predicted = load("pred_r/report.json").at("reconstruction_error").get<double>();
    EXPECT_NEAR(predicted, trained, 1e-6 * trained);
}

TEST(CliPredict, ClassModeWritesLabelsAndAccuracy)
{
    ASSERT_EQ(run("generate --dataset D1 --noise 0 --out cls"), 0);
    std::string labels;
    // Rows 40..44 belong to no component; their all-zero basis rows tie and resolve to class 0.
    for (int i = 0; i < 45; ++i) {
        labels += std::to_string(i < 40 ? i / 10 : 0) + "\n";
    }
    write("labels.csv", labels);
    ASSERT_EQ(run("predict --model cls/truth_model.json --mode L-class --test cls/X_0.csv cls/X_1.csv cls/X_2.csv "
                  "--labels labels.csv --out pred_cls"),
              0);
    const json report = load("pred_cls/report.json");
    EXPECT_EQ(report.at("accuracy").get<double>(), 1.0);
}

TEST(CliPredict, ErrorsAreUsageErrors)
{
    ASSERT_EQ(run("generate --dataset D1 --noise 0 --out perr"), 0);
    EXPECT_EQ(run("predict --model perr/truth_model.json --mode R --test perr/missing.csv --out p"), 2);
    EXPECT_EQ(run("predict --model perr/truth_model.json --mode L-view --target 0 --test perr/X_1.csv --out p"), 2);
    EXPECT_EQ(run("predict --model perr/truth_model.json --mode L-class --test perr/X_1.csv perr/X_0.csv "
                  "perr/X_2.csv --out p"),
              2);
    EXPECT_EQ(run("predict --model perr/truth_model.json --mode Q --test perr/X_1.csv --out p"), 2);
}
