// SPDX-License-Identifier: Apache-2.0
//
// End-to-end exercises of the installed CLI surface, shelled out against the
// built binary.
#include <gtest/gtest.h>

#include <cstdlib>
#include <string>

#include "support.hpp"

namespace test = finsent::test;
using test::TempDir;

namespace {

int run(const std::string& args) {
    std::string cmd = std::string(FINSENT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_dataset_csv(const std::filesystem::path& path, int rows) {
    std::string csv = "text,label\n";
    const char* texts[] = {"Profit rose sharply in Q{}.", "Shares fell after the warning {}.",
                           "The board met on day {}."};
    const char* labels[] = {"positive", "negative", "neutral"};
    for (int i = 0; i < rows; ++i) {
        std::string t = texts[i % 3];
        t.replace(t.find("{}"), 2, std::to_string(i));
        csv += t + "," + labels[i % 3] + "\n";
    }
    test::write_file(path, csv);
}

}  // namespace

TEST(Cli, FullPipelineExitCodesAndArtifacts) {
    TempDir dir("cli");
    auto p = [&](const std::string& name) { return dir.file(name).string(); };
    write_dataset_csv(dir.file("fpb.csv"), 60);
    write_dataset_csv(dir.file("tsd.csv"), 30);

    ASSERT_EQ(run("ingest --input " + p("fpb.csv") +
                  " --format csv --domain fpb"
                  " --label-map positive=positive,negative=negative,neutral=neutral"
                  " --out " + p("corpus.jsonl")),
              0);
    ASSERT_EQ(run("ingest --input " + p("tsd.csv") +
                  " --format csv --domain tsd"
                  " --label-map positive=positive,negative=negative,neutral=neutral"
                  " --append --out " + p("corpus.jsonl")),
              0);
    ASSERT_EQ(run("split --corpus " + p("corpus.jsonl") +
                  " --test-fraction 0.2 --seed 11 --out " + p("split.jsonl")),
              0);
    ASSERT_EQ(run("plan --total-steps 100 --lr-max 0.3 --out " + p("plan.json")), 0);
    ASSERT_EQ(run("emit-manifest --corpus " + p("split.jsonl") + " --plan " + p("plan.json") +
                  " --batch-size 4 --seed 5 --out " + p("manifest.jsonl")),
              0);
    ASSERT_EQ(run("train-ref --corpus " + p("split.jsonl") + " --manifest " +
                  p("manifest.jsonl") + " --eval-every 25 --model-out " + p("model.json") +
                  " --trajectory-out " + p("traj.csv")),
              0);
    ASSERT_EQ(run("eval --corpus " + p("split.jsonl") +
                  " --dataset fpb --classifier reference --model " + p("model.json") +
                  " --out " + p("ref_report.json")),
              0);
    ASSERT_EQ(run("eval --corpus " + p("split.jsonl") +
                  " --dataset tsd --classifier mock --shots 3 --seed 9 --paper-faithful"
                  " --out " + p("mock_report.json") + " --log " + p("mock_preds.jsonl")),
              0);

    for (const char* f : {"corpus.jsonl", "split.jsonl", "plan.json", "manifest.jsonl",
                          "model.json", "traj.csv", "ref_report.json", "mock_report.json",
                          "mock_preds.jsonl"})
        EXPECT_TRUE(std::filesystem::exists(dir.file(f))) << f;
}

TEST(Cli, SweepIsDeterministicAndRendered) {
    TempDir dir("cli");
    auto p = [&](const std::string& name) { return dir.file(name).string(); };
    write_dataset_csv(dir.file("fpb.csv"), 45);
    ASSERT_EQ(run("ingest --input " + p("fpb.csv") +
                  " --format csv --domain fpb"
                  " --label-map positive=positive,negative=negative,neutral=neutral"
                  " --out " + p("corpus.jsonl")),
              0);
    ASSERT_EQ(run("split --corpus " + p("corpus.jsonl") +
                  " --test-fraction 0.2 --seed 3 --out " + p("split.jsonl")),
              0);
    test::write_file(dir.file("sweep.json"),
                     R"({"shots": [0, 3], "classifier": "mock", "master_seed": 7})");
    ASSERT_EQ(run("sweep-shots --corpus " + p("split.jsonl") + " --config " + p("sweep.json") +
                  " --out-dir " + p("out_a")),
              0);
    ASSERT_EQ(run("sweep-shots --corpus " + p("split.jsonl") + " --config " + p("sweep.json") +
                  " --out-dir " + p("out_b")),
              0);
    for (const char* f : {"report.md", "report.csv", "plot_data.csv", "rows.json",
                          "raw_reports.json", "preds_fpb_3shot_r2.jsonl"}) {
        auto a = test::read_file(dir.file("out_a") / f);
        auto b = test::read_file(dir.file("out_b") / f);
        EXPECT_FALSE(a.empty()) << f;
        EXPECT_EQ(a, b) << f;
    }
    ASSERT_EQ(run("report --rows " + p("out_a") + "/rows.json --format markdown --out-dir " +
                  p("rendered")),
              0);
    EXPECT_TRUE(std::filesystem::exists(dir.file("rendered") / "report.md"));
}

TEST(Cli, FailuresExitNonZero) {
    TempDir dir("cli");
    auto p = [&](const std::string& name) { return dir.file(name).string(); };
    EXPECT_NE(run("ingest --input " + p("missing.csv") +
                  " --format csv --domain x --label-map a=positive --out " + p("c.jsonl")),
              0);
    EXPECT_NE(run("split --corpus " + p("nope.jsonl") + " --seed 1 --out " + p("s.jsonl")), 0);
    EXPECT_NE(run("plan --total-steps 100 --lr-max 0 --out " + p("plan.json")), 0);
    // unmappable-only file: report printed, but nothing usable to write
    test::write_file(dir.file("bad.csv"), "text,label\nsome text,9\n");
    EXPECT_NE(run("ingest --input " + p("bad.csv") +
                  " --format csv --domain x --label-map 1=positive --out " + p("c.jsonl")),
              0);
}
