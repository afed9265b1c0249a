#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <regex>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "test_support.hpp"

namespace hdcal {
namespace {

namespace fs = std::filesystem;
using test::parse_config;
using test::read_file;
using test::scratch_dir;

constexpr const char* kTinyConfig = "d = 2\nL = 2\nH = 2\nS = 1\nm = 1\nadversary = iid\nq = 1,1\n";

TEST(Config, ParsesFlatKeyValues) {
  const auto cfg = parse_config("# tiny\nd = 3\nL = 2\nH = 4\nS = 2\nm = 1\nmode = sampled\ntrials = 8\nadversary = iid\nq = 1, 2, 3\n");
  EXPECT_EQ(cfg.forecast, (ForecastConfig{3, 2, 4, 2, 1}));
  EXPECT_EQ(cfg.mode, Mode::kSampled);
  EXPECT_EQ(cfg.trials, 8u);
  EXPECT_EQ(cfg.iid_law(), RationalDist::make(std::vector<std::int64_t>{1, 2, 3}, 6));
}

TEST(Config, EpsilonUsesPaperParameters) {
  const auto cfg = parse_config("d = 2\nepsilon = 0.5\nadversary = adaptive_argmin\n");
  EXPECT_EQ(cfg.forecast, paper_parameters(2, 0.5));
}

TEST(Config, Errors) {
  using test::thrown_code;
  EXPECT_EQ(thrown_code([] { parse_config("L = 1\nH = 2\nS = 1\nm = 1\n"); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(thrown_code([] { parse_config("d = 2\nL = 1\nH = 2\nS = 1\nm = 1\ncolour = red\n"); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(thrown_code([] { parse_config("d = 2\nepsilon = 0.5\nL = 1\n"); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(thrown_code([] { parse_config("d = 2\nL = 1\nH = 1\nS = 1\nm = 1\n"); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(thrown_code([] { parse_config("d = 2\nL = 1\nH = 2\nS = 1\nm = 1\nmode = fast\n"); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(thrown_code([] { parse_config("d = 2\nL = 1\nH = 2\nS = 1\nm = 1\nq = 1,1,1\n"); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(thrown_code([] { parse_config("d = 2\nL = 1\nH = 2\nS = 1\nm = 1\nmode = sampled\ntrials = 1\n"); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(thrown_code([] { parse_config("d = 2\nL = 8\nH = 16\nS = 16\nm = 1\n"); }), ErrorCode::kBudgetExceeded);
  EXPECT_EQ(thrown_code([] { parse_config("d = 8\nL = 1\nH = 2\nS = 1\nm = 1\nadversary = hard\nR = 2\nK = 3\n"); }),
            ErrorCode::kConfigInvalid);
  EXPECT_EQ(thrown_code([] { load_run_config("/nonexistent/run.cfg"); }), ErrorCode::kIoError);
}

TEST(Config, HardAdversaryNeedsMatchingShape) {
  // d = R^2 K = 8, T = K^(R-1) = 2 = S H^L with L=1, H=2, S=1.
  const auto cfg = parse_config("d = 8\nL = 1\nH = 2\nS = 1\nm = 1\nadversary = hard\nR = 2\nK = 2\n");
  EXPECT_EQ(cfg.adversary.kind, AdversaryKind::kHard);
  const auto tr = run_protocol(cfg, 0);
  EXPECT_EQ(tr.size(), 2u);
}

TEST(Transcript, RoundTripIsLossless) {
  auto cfg = parse_config(kTinyConfig);
  cfg.mode = Mode::kSampled;
  cfg.seed = 7;
  const auto tr = run_protocol(cfg, 0);
  std::ostringstream first;
  write_transcript(first, tr);
  std::istringstream in(first.str());
  const auto back = read_transcript(in);
  std::ostringstream second;
  write_transcript(second, back);
  EXPECT_EQ(first.str(), second.str());
  EXPECT_EQ(back.size(), 4u);
  EXPECT_EQ(dce(back), dce(tr));
}

TEST(Transcript, CorruptInputRejected) {
  using test::thrown_code;
  const auto tr = run_protocol(parse_config(kTinyConfig), 0);
  std::ostringstream out;
  write_transcript(out, tr);
  const std::string text = out.str();

  auto read = [](const std::string& s) {
    std::istringstream in(s);
    return read_transcript(in);
  };
  EXPECT_EQ(thrown_code([&] { read(""); }), ErrorCode::kCorruptRecord);
  EXPECT_EQ(thrown_code([&] { read(text.substr(0, text.rfind('\n', text.size() - 2) + 1)); }), ErrorCode::kCorruptRecord);
  EXPECT_EQ(thrown_code([&] { read(std::regex_replace(text, std::regex("\"outcome\":[0-9]+"), "\"outcome\":9", std::regex_constants::format_first_only)); }),
            ErrorCode::kCorruptRecord);
  EXPECT_EQ(thrown_code([&] { read(text + "{not json\n"); }), ErrorCode::kCorruptRecord);
}

TEST(CmdRun, TinyRunIsDeterministic) {
  const auto cfg = parse_config(kTinyConfig);
  const auto a = scratch_dir("run_a");
  const auto b = scratch_dir("run_b");
  const auto ra = cmd_run(cfg, 7, a);
  cmd_run(cfg, 7, b);
  EXPECT_EQ(ra.transcript.size(), 4u);
  EXPECT_EQ(read_file(a / "transcript.jsonl"), read_file(b / "transcript.jsonl"));
  EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
  const auto c = scratch_dir("run_c");
  cmd_run(cfg, 8, c);
  EXPECT_NE(read_file(a / "metrics.csv"), read_file(c / "metrics.csv"));
}

TEST(CmdRun, SampledModeReportsEce) {
  auto cfg = parse_config("d = 2\nL = 2\nH = 4\nS = 2\nm = 1\nmode = sampled\ntrials = 6\n");
  const auto dir = scratch_dir("run_sampled");
  const auto res = cmd_run(cfg, 3, dir);
  ASSERT_TRUE(res.ece.has_value());
  EXPECT_EQ(res.ece->trials, 6u);
  const auto csv = read_file(dir / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
}

TEST(CmdCertify, ValidRunPassesAndWritesReports) {
  const auto dir = scratch_dir("certify_ok");
  cmd_run(parse_config("d = 3\nL = 2\nH = 4\nS = 2\nm = 2\nadversary = adaptive_argmin\n"), 1, dir);
  const auto report = cmd_certify(dir);
  EXPECT_TRUE(report.all_passed());
  const auto j = nlohmann::json::parse(read_file(dir / "certificate.json"));
  EXPECT_EQ(j.at("checks").size(), report.checks.size());
  EXPECT_TRUE(fs::exists(dir / "certificate.csv"));
}

TEST(CmdCertify, TamperedTranscriptFails) {
  const auto dir = scratch_dir("certify_tampered");
  cmd_run(parse_config(kTinyConfig), 7, dir);
  auto text = read_file(dir / "transcript.jsonl");
  const auto pos = text.find("\"outcome\":", text.find("\"t\":1,"));
  ASSERT_NE(pos, std::string::npos);
  char& digit = text[pos + std::string("\"outcome\":").size()];
  digit = digit == '1' ? '2' : '1';
  write_text_file(dir / "transcript.jsonl", text);
  const auto report = cmd_certify(dir);
  EXPECT_FALSE(report.all_passed());
  EXPECT_FALSE(report.find("recomputation_identity")->pass);
}

TEST(CmdCertify, EmptyDirectory) {
  const auto dir = scratch_dir("certify_empty");
  EXPECT_EQ(test::thrown_code([&] { cmd_certify(dir); }), ErrorCode::kMissingTranscript);
}

TEST(CmdLowerbound, TruthfulForecasterClearsThreshold) {
  const auto rep = cmd_lowerbound(2, 2, LowerBoundForecaster::kTruthful, 500, 1);
  EXPECT_EQ(rep.eps1, std::ldexp(1.0, -12));
  EXPECT_EQ(rep.eps1_T, 2 * std::ldexp(1.0, -12));
  EXPECT_GT(rep.mean_dce, 0.0);
  EXPECT_TRUE(rep.pass);
}

TEST(CmdLowerbound, UniformForecasterClosedForm) {
  // One key: DCE = sum_i |T/d - N_i| with N_i the count of outcome i.
  const HardSeqConfig hard{3, 2};
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const auto tr = lowerbound_trial(hard, LowerBoundForecaster::kUniform, 4, trial);
    std::vector<double> n(tr.dim(), 0.0);
    for (const auto& rec : tr.days()) n[rec.outcome.index - 1] += 1.0;
    double expected = 0.0;
    for (double c : n) expected += std::abs(static_cast<double>(tr.size()) / static_cast<double>(tr.dim()) - c);
    EXPECT_NEAR(dce(tr), expected, 1e-12);
  }
}

TEST(CmdLowerbound, HierarchicalForecasterRuns) {
  const auto rep = cmd_lowerbound(3, 2, LowerBoundForecaster::kHierarchical, 20, 2);
  EXPECT_EQ(rep.trials, 20u);
  EXPECT_GT(rep.mean_dce, 0.0);
  EXPECT_EQ(test::thrown_code([] { cmd_lowerbound(3, 1, LowerBoundForecaster::kHierarchical, 20, 2); }), ErrorCode::kInvalidForecaster);
}

TEST(CmdLowerbound, Rejections) {
  EXPECT_EQ(test::thrown_code([] { cmd_lowerbound(2, 2, LowerBoundForecaster::kTruthful, 1, 1); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(test::thrown_code([] { parse_lowerbound_forecaster("oracle"); }), ErrorCode::kInvalidForecaster);
}

TEST(CmdOracle, SmallRunPassesAndReruns) {
  OracleOptions opt;
  opt.transcripts = 50;
  opt.ece_cases = 2;
  opt.ece_trials = 500;
  opt.seed = 12;
  const auto a = cmd_oracle(opt);
  const auto b = cmd_oracle(opt);
  EXPECT_TRUE(a.pass());
  EXPECT_EQ(a.fingerprint, b.fingerprint);
  EXPECT_EQ(a.max_dce_diff, b.max_dce_diff);
  opt.max_d = 1;
  EXPECT_EQ(test::thrown_code([&] { cmd_oracle(opt); }), ErrorCode::kConfigInvalid);
}

TEST(CmdConcentration, OneLevelGapIsExactlyZero) {
  const auto rep = cmd_concentration(parse_config("d = 2\nL = 1\nH = 4\nS = 4\nm = 1\n"), 20, 1, 16);
  EXPECT_TRUE(rep.exact_zero_control);
  EXPECT_TRUE(rep.pass);
}

TEST(CmdConcentration, Rejections) {
  EXPECT_EQ(test::thrown_code([] { cmd_concentration(parse_config("d = 2\nL = 2\nH = 4\nS = 4\nm = 1\nadversary = adaptive_argmin\n"), 20, 1); }),
            ErrorCode::kAdaptiveAdversaryUnsupported);
  EXPECT_EQ(test::thrown_code([] { cmd_concentration(parse_config(kTinyConfig), 1, 1); }), ErrorCode::kConfigInvalid);
}

TEST(CmdHardseq, WritesDeterministicFiles) {
  const auto a = scratch_dir("hardseq_a");
  const auto b = scratch_dir("hardseq_b");
  cmd_hardseq(3, 2, 9, a);
  cmd_hardseq(3, 2, 9, b);
  EXPECT_EQ(read_file(a / "hardseq.jsonl"), read_file(b / "hardseq.jsonl"));
  EXPECT_EQ(read_file(a / "tau_tree.json"), read_file(b / "tau_tree.json"));
  const auto tree = TauTree::from_json(nlohmann::json::parse(read_file(a / "tau_tree.json")));
  EXPECT_EQ(tree.size(), 6u);
}

int cli(const std::string& args) {
  const std::string cmd = std::string(HDCAL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch_dir("cli");
  write_text_file(dir / "tiny.cfg", kTinyConfig);
  write_text_file(dir / "bad.cfg", "L = 1\n");
  const std::string run = (dir / "run").string();
  EXPECT_EQ(cli("run --config " + (dir / "tiny.cfg").string() + " --seed 7 --out " + run), 0);
  EXPECT_EQ(cli("certify --run " + run), 0);
  EXPECT_EQ(cli("run --config " + (dir / "bad.cfg").string() + " --seed 7 --out " + run), 2);
  EXPECT_EQ(cli("certify --run " + (dir / "missing").string()), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("lowerbound --R 2 --K 2 --forecaster truthful --trials 1 --seed 1"), 2);

  auto text = read_file(fs::path(run) / "transcript.jsonl");
  const auto pos = text.find("\"outcome\":", text.find("\"t\":1,")) + std::string("\"outcome\":").size();
  text[pos] = text[pos] == '1' ? '2' : '1';
  write_text_file(fs::path(run) / "transcript.jsonl", text);
  EXPECT_EQ(cli("certify --run " + run), 1);
}

}  // namespace
}  // namespace hdcal
