#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "maskcf/cli.hpp"

using namespace maskcf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("maskcf_test_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ConfigPairs parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "run.cfg");
}

std::size_t lines(const std::string& s) { return std::size_t(std::count(s.begin(), s.end(), '\n')); }

const fs::path kSynth01 = fs::path(MASKCF_FIXTURE_DIR) / "synth01";

}  // namespace

// ---------------------------------------------------------------- config

TEST(Config, CommentsBlankLinesAndWhitespace) {
  const auto p = parse("# run\n\nvariant = rcb  # trailing\n  lambda=0.5\n");
  EXPECT_EQ(p.size(), 2u);
  EXPECT_EQ(p.at("variant"), "rcb");
  EXPECT_EQ(p.at("lambda"), "0.5");
}

TEST(Config, UnknownKeyAndMissingEqualsNameTheLine) {
  try {
    parse("lambda = 1\n\nlamda = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse("lambda 1\n"), ConfigError);
}

TEST(Config, ModeSelectsSolverDefaults) {
  const auto single = resolve_config({});
  const auto multi = resolve_config({{"mode", "multi"}});
  EXPECT_EQ(single.tracker.solver.tau, SolverConfig::single_base().tau);
  EXPECT_EQ(single.tracker.solver.delta, 1.2);
  EXPECT_EQ(multi.tracker.spec.mode, SolverMode::multi_base);
  EXPECT_EQ(multi.tracker.solver.tau, SolverConfig::multi_base().tau);
  EXPECT_EQ(multi.tracker.solver.iters, SolverConfig::multi_base().iters);
  EXPECT_EQ(resolve_config({{"mode", "multi"}, {"iters", "7"}}).tracker.solver.iters, 7);
}

TEST(Config, ValuesAreParsedAndValidated) {
  const auto c = resolve_config({{"variant", "RC"}, {"delta", "2"}, {"features", "gray"}, {"workers", "3"}});
  EXPECT_EQ(c.tracker.spec.variant, Variant::rc);
  EXPECT_EQ(c.tracker.solver.delta, 2.0);
  EXPECT_EQ(c.tracker.features.kind, FeatureKind::grayscale);
  EXPECT_EQ(c.workers, 3);
  for (const ConfigPairs& bad : std::vector<ConfigPairs>{{{"lambda", "abc"}},
                                                         {{"lambda", "1e-3x"}},
                                                         {{"iters", "2.5"}},
                                                         {{"lambda", "-1"}},
                                                         {{"cell", "0"}},
                                                         {{"variant", "kcf"}},
                                                         {{"mode", "dual"}},
                                                         {{"features", "cnn"}},
                                                         {{"workers", "0"}},
                                                         {{"inner_iterations", "0"}},
                                                         {{"bogus", "1"}}})
    EXPECT_THROW(resolve_config(bad), ConfigError) << bad.begin()->first;
}

TEST(Config, FlagsOverrideFile) {
  const fs::path d = fresh_dir("override");
  std::ofstream(d / "run.cfg") << "lambda = 0.2\niters = 5\n";
  const auto c = cli::load_config((d / "run.cfg").string(), {{"iters", "6"}});
  EXPECT_EQ(c.tracker.solver.lambda, 0.2);
  EXPECT_EQ(c.tracker.solver.iters, 6);
  EXPECT_THROW(cli::load_config((d / "absent.cfg").string(), {}), ConfigError);
}

TEST(Config, FormatRoundTrips) {
  for (const ConfigPairs& given : std::vector<ConfigPairs>{
           {}, {{"mode", "multi"}, {"lambda", "0.1234567890123"}, {"seq", "a/b"}, {"seed", "99"}, {"variant", "rcb"}}}) {
    const auto c = resolve_config(given);
    const std::string text = format_config(c);
    std::istringstream in(text);
    const auto again = resolve_config(parse_config(in, "echo"));
    EXPECT_EQ(format_config(again), text);
    EXPECT_EQ(again.tracker.solver.lambda, c.tracker.solver.lambda);
  }
}

// ---------------------------------------------------------------- track

TEST(CliTrack, WritesBoxesIouAndConfig) {
  const fs::path out = fresh_dir("track");
  auto cfg = resolve_config({{"seq", kSynth01.string()}, {"out", out.string()}, {"variant", "RCG"}});
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_track(cfg, {}, log), cli::kOk) << log.str();
  const std::string boxes = slurp(out / "boxes.txt");
  EXPECT_EQ(lines(boxes), 5u);
  EXPECT_EQ(boxes.substr(0, boxes.find('\n')), slurp(kSynth01 / "groundtruth_rect.txt").substr(0, boxes.find('\n')));
  EXPECT_EQ(lines(slurp(out / "iou.txt")), 5u);
  EXPECT_EQ(slurp(out / "config.txt"), format_config(cfg));
}

TEST(CliTrack, EchoedConfigReproducesTheRun) {
  const fs::path a = fresh_dir("echo_a"), b = fresh_dir("echo_b");
  std::ostringstream log;
  auto cfg = resolve_config({{"seq", kSynth01.string()}, {"out", a.string()}, {"delta", "1.4"}});
  ASSERT_EQ(cli::cmd_track(cfg, {}, log), cli::kOk);
  auto again = cli::load_config((a / "config.txt").string(), {{"out", b.string()}});
  EXPECT_EQ(again.tracker.solver.delta, 1.4);
  ASSERT_EQ(cli::cmd_track(again, {}, log), cli::kOk);
  EXPECT_EQ(slurp(a / "boxes.txt"), slurp(b / "boxes.txt"));
  EXPECT_EQ(slurp(a / "iou.txt"), slurp(b / "iou.txt"));
}

TEST(CliTrack, MissingGroundTruth) {
  const fs::path seq = fresh_dir("nogt");
  fs::copy(kSynth01 / "img", seq / "img");
  const fs::path out = fresh_dir("nogt_out");
  auto cfg = resolve_config({{"seq", seq.string()}, {"out", out.string()}});
  std::ostringstream log, err;
  cli::TrackOptions opt;
  opt.require_groundtruth = true;
  EXPECT_EQ(cli::guarded([&] { return cli::cmd_track(cfg, opt, log); }, err), cli::kData);
  opt.require_groundtruth = false;
  EXPECT_EQ(cli::guarded([&] { return cli::cmd_track(cfg, opt, log); }, err), cli::kData);
  opt.init = cli::parse_box("138,104,32,32");
  EXPECT_EQ(cli::guarded([&] { return cli::cmd_track(cfg, opt, log); }, err), cli::kOk) << err.str();
  EXPECT_EQ(lines(slurp(out / "boxes.txt")), 5u);
  EXPECT_FALSE(fs::exists(out / "iou.txt"));
}

TEST(CliTrack, ConfigErrorsExitOne) {
  std::ostringstream log, err;
  EXPECT_EQ(cli::guarded([&] { return cli::cmd_track(resolve_config({}), {}, log); }, err), cli::kConfig);
  EXPECT_EQ(cli::guarded([&] { return cli::cmd_track(resolve_config({{"tau", "-2"}}), {}, log); }, err), cli::kConfig);
  EXPECT_THROW(cli::parse_box("1,2,3"), ParseError);
}

TEST(CliGuarded, ErrorFamiliesMapToExitCodes) {
  std::ostringstream err;
  auto code = [&](auto thrower) { return cli::guarded([&]() -> int { thrower(); return 0; }, err); };
  EXPECT_EQ(code([] { throw ConfigError("c"); }), 1);
  EXPECT_EQ(code([] { throw std::invalid_argument("c"); }), 1);
  EXPECT_EQ(code([] { throw ParseError("f", 2, "p"); }), 2);
  EXPECT_EQ(code([] { throw DataError("d"); }), 2);
  EXPECT_EQ(code([] { throw NumericDivergenceError("n", 4); }), 3);
  EXPECT_EQ(code([] { throw SingularSystemError("s"); }), 3);
  EXPECT_EQ(code([] {}), 0);
}

// ---------------------------------------------------------------- verify

TEST(CliVerify, DefaultFixturesPass) {
  cli::VerifyOptions opt;
  opt.workers = 4;
  std::ostringstream out, err;
  ASSERT_EQ(cli::cmd_verify(opt, out, err), cli::kOk) << err.str();
  EXPECT_NE(out.str().find("max relative objective gap = "), std::string::npos);
  EXPECT_NE(out.str().find("≤ 1e-04"), std::string::npos) << out.str();
  EXPECT_EQ(lines(out.str()), 1 + 36 + 3u);
}

TEST(CliVerify, CorruptFixtureExitsTwoWithItsName) {
  const fs::path d = fresh_dir("corrupt");
  fs::copy_file(fs::path(MASKCF_FIXTURE_DIR) / "oracle" / "fx00_6x6_L1_ones_c2.txt", d / "fx00.txt");
  std::ofstream(d / "fx01_broken.txt") << "6 6 1 3 3 0.05 1\n0.1 0.2\n";
  cli::VerifyOptions opt;
  opt.fixtures = d.string();
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_verify(opt, out, err), cli::kData);
  EXPECT_NE(err.str().find("fx01_broken.txt"), std::string::npos) << err.str();
}

TEST(CliVerify, FailingFixtureExitsThreeWithItsName) {
  const fs::path d = fresh_dir("failing");
  fs::copy_file(fs::path(MASKCF_FIXTURE_DIR) / "oracle" / "fx06_8x8_L1_ones_c2.txt", d / "fx06.txt");
  cli::VerifyOptions opt;
  opt.fixtures = d.string();
  opt.gap_tolerance = -1.0;  // unattainable
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_verify(opt, out, err), cli::kNumeric);
  EXPECT_NE(err.str().find("fixture fx06 failed"), std::string::npos) << err.str();
  opt.fixtures = (d / "absent").string();
  EXPECT_THROW(cli::cmd_verify(opt, out, err), DataError);
}

// ---------------------------------------------------------------- synth

TEST(CliSynth, MotionAndClutterArguments) {
  EXPECT_EQ(cli::parse_motion("linear:3,0"), std::make_pair(3.0, 0.0));
  EXPECT_EQ(cli::parse_motion("linear:-1.5,2"), std::make_pair(-1.5, 2.0));
  for (const char* bad : {"3,0", "linear:3", "linear:a,1", "circle:1,1"})
    EXPECT_THROW(cli::parse_motion(bad), ConfigError) << bad;
  EXPECT_EQ(cli::parse_clutter("border"), ClutterKind::border);
  EXPECT_THROW(cli::parse_clutter("heavy"), ConfigError);
}

TEST(CliSynth, FiftyFramesMovingThreePixels) {
  const fs::path d = fresh_dir("synth50");
  SynthConfig c;
  c.frames = 50;
  std::tie(c.dx, c.dy) = cli::parse_motion("linear:3,0");
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_synth(c, d.string(), log), cli::kOk);
  const auto seq = load_otb_sequence(d);
  ASSERT_EQ(seq.frames.size(), 50u);
  for (std::size_t t = 1; t < 50; ++t) {
    EXPECT_NEAR(seq.groundtruth[t].cx - seq.groundtruth[t - 1].cx, 3.0, 1e-4);
    EXPECT_EQ(seq.groundtruth[t].cy, seq.groundtruth[0].cy);
  }
}

TEST(CliSynth, SameSeedByteIdenticalAndCommittedFixtureReproduces) {
  const fs::path d = fresh_dir("synth_fixture");
  SynthConfig c;
  c.frames = 5;
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_synth(c, d.string(), log), cli::kOk);
  for (const char* f : {"img/0001.jpg", "img/0005.jpg", "groundtruth_rect.txt"})
    EXPECT_EQ(slurp(d / f), slurp(kSynth01 / f)) << f;
}
