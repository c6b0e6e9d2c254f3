// maskcf track | ablate | verify | synth
//
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric failure.

#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "maskcf/cli.hpp"

namespace {

using namespace maskcf;

std::map<std::string, std::string> defaults_for(SolverMode mode) {
  CliConfig c;
  c.tracker = TrackerConfig::defaults({Variant::rcg, mode});
  std::istringstream in(format_config(c));
  ConfigPairs pairs = parse_config(in, "defaults");
  return {pairs.begin(), pairs.end()};
}

// Adds --<key> for every configuration key; given values land in `given`.
void add_config_flags(CLI::App* sub, std::string& config_file, std::map<std::string, std::string>& given) {
  static const auto single = defaults_for(SolverMode::single_base);
  static const auto multi = defaults_for(SolverMode::multi_base);
  sub->add_option("--config", config_file, "key=value file (# comments); flags override it");
  for (const char* key : kConfigKeys) {
    std::string help;
    const auto s = single.find(key), m = multi.find(key);
    if (s != single.end() && m != multi.end())
      help = s->second == m->second ? "default " + s->second
                                    : "default " + s->second + " (single), " + m->second + " (multi)";
    if (std::string(key) == "variant") help = "baseline, rc, rcb or rcg; default rcg";
    if (std::string(key) == "mode") help = "single or multi; default single";
    if (std::string(key) == "features") help = "hog or gray; default hog";
    if (std::string(key) == "dataset") help = "directory of OTB-layout sequences (ablate)";
    if (std::string(key) == "seq") help = "one OTB-layout sequence directory";
    if (std::string(key) == "delta") help += "; Gaussian mask spread for RCG";
    sub->add_option("--" + std::string(key), given[key], help);
  }
}

CliConfig config_from(const CLI::App* sub, const std::string& file, const std::map<std::string, std::string>& given) {
  ConfigPairs overrides;
  for (const auto& [k, v] : given)
    if (sub->count("--" + k) > 0) overrides[k] = v;
  return cli::load_config(file, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked correlation filter tracker: tracking, ablation, oracle verification, synthetic data"};
  app.require_subcommand(1);

  std::string track_file, ablate_file, init_box;
  std::map<std::string, std::string> track_given, ablate_given;
  bool require_gt = false;
  auto* track = app.add_subcommand("track", "track one OTB-layout sequence; writes boxes.txt, iou.txt, config.txt");
  add_config_flags(track, track_file, track_given);
  track->add_option("--init", init_box, "initial x,y,w,h box (top-left); default first ground-truth box");
  track->add_flag("--require-gt", require_gt, "fail when groundtruth_rect.txt is missing");

  auto* ablate = app.add_subcommand("ablate", "run Baseline, RC, RCB and RCG over a dataset and write reports");
  add_config_flags(ablate, ablate_file, ablate_given);

  cli::VerifyOptions vopt;
  auto* verify = app.add_subcommand("verify", "run the oracle fixture suite and print objective gaps");
  verify->add_option("--fixtures", vopt.fixtures, "fixture directory")->capture_default_str();
  verify->add_option("--seed", vopt.seed, "seed for the randomized cross-checks")->capture_default_str();
  verify->add_option("--workers", vopt.workers, "parallel fixture solves")->capture_default_str();

  SynthConfig scfg;
  std::string motion = "linear:3,0", clutter = "none", synth_out = "synth";
  auto* synth = app.add_subcommand("synth", "generate a synthetic sequence in OTB layout");
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();
  synth->add_option("--frames", scfg.frames, "number of frames")->capture_default_str();
  synth->add_option("--motion", motion, "linear:dx,dy in pixels per frame")->capture_default_str();
  synth->add_option("--clutter", clutter, "none or border")->capture_default_str();
  synth->add_option("--seed", scfg.seed, "random seed")->capture_default_str();
  synth->add_option("--width", scfg.width, "image width")->capture_default_str();
  synth->add_option("--height", scfg.height, "image height")->capture_default_str();
  synth->add_option("--target-w", scfg.target_w, "target width in pixels")->capture_default_str();
  synth->add_option("--target-h", scfg.target_h, "target height in pixels")->capture_default_str();
  synth->add_option("--scale-rate", scfg.scale_rate, "per-frame size factor")->capture_default_str();
  synth->add_option("--noise", scfg.noise, "per-pixel noise amplitude")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kConfig;
  }

  return cli::guarded(
      [&]() -> int {
        if (track->parsed()) {
          cli::TrackOptions opt;
          opt.require_groundtruth = require_gt;
          if (!init_box.empty()) opt.init = cli::parse_box(init_box);
          return cli::cmd_track(config_from(track, track_file, track_given), opt, std::cout);
        }
        if (ablate->parsed()) return cli::cmd_ablate(config_from(ablate, ablate_file, ablate_given), std::cout);
        if (verify->parsed()) return cli::cmd_verify(vopt, std::cout, std::cerr);
        const auto [dx, dy] = cli::parse_motion(motion);
        scfg.dx = dx;
        scfg.dy = dy;
        scfg.clutter = cli::parse_clutter(clutter);
        scfg.validate();
        return cli::cmd_synth(scfg, synth_out, std::cout);
      },
      std::cerr);
}
