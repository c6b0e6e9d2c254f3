#pragma once

// Subcommand bodies behind the maskcf executable. Each returns an exit code:
// 0 success, 1 configuration, 2 data, 3 numeric failure. Link maskcf_io.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "maskcf/bench.hpp"
#include "maskcf/config.hpp"
#include "maskcf/oracle.hpp"
#include "maskcf/otb.hpp"
#include "maskcf/solver_single.hpp"
#include "maskcf/synth.hpp"

#ifndef MASKCF_FIXTURE_DIR
#define MASKCF_FIXTURE_DIR "fixtures"
#endif

namespace maskcf::cli {

enum ExitCode : int { kOk = 0, kConfig = 1, kData = 2, kNumeric = 3 };

/// Runs body and maps escaping errors onto exit codes, printing the message.
inline int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ParseError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const Error& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  }
}

inline CliConfig load_config(const std::string& file, const ConfigPairs& overrides) {
  ConfigPairs pairs;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file);
    pairs = parse_config(in, file);
  }
  for (const auto& [k, v] : overrides) pairs[k] = v;
  return resolve_config(pairs);
}

inline std::string format_box(const BoundingBox& b) {
  char line[128];
  std::snprintf(line, sizeof line, "%.6g,%.6g,%.6g,%.6g\n", b.left(), b.top(), b.w, b.h);
  return line;
}

inline BoundingBox parse_box(const std::string& text) {
  std::istringstream in(text);
  const auto boxes = parse_groundtruth(in, "--init");
  if (boxes.size() != 1) throw ConfigError("--init expects one x,y,w,h box");
  return boxes[0];
}

// ---------------------------------------------------------------------------
// track

struct TrackOptions {
  std::optional<BoundingBox> init;
  bool require_groundtruth = false;
};

inline int cmd_track(const CliConfig& cfg, const TrackOptions& opt, std::ostream& out) {
  namespace fs = std::filesystem;
  if (cfg.seq.empty()) throw ConfigError("track needs --seq");
  const Sequence seq = load_otb_sequence(cfg.seq, opt.require_groundtruth);
  if (!opt.init && !seq.has_groundtruth()) throw DataError(cfg.seq + ": no ground truth; pass --init x,y,w,h");
  const BoundingBox start = opt.init ? *opt.init : seq.groundtruth[0];

  const Tracker tr(cfg.tracker);
  std::vector<BoundingBox> boxes{start};
  TrackState s = tr.init(read_frame(seq, 0), start);
  std::size_t lost_at = 0;
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    if (lost_at == 0) {
      try {
        auto [next, box] = tr.step(std::move(s), read_frame(seq, t));
        s = std::move(next);
        boxes.push_back(box);
        continue;
      } catch (const TrackingLostError&) {
        lost_at = t;
      }
    }
    boxes.push_back(boxes.back());
  }

  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  std::string text;
  for (const auto& b : boxes) text += format_box(b);
  maskcf::detail::write_text(dir / "boxes.txt", text);
  maskcf::detail::write_text(dir / "config.txt", format_config(cfg));
  out << seq.name << ": " << boxes.size() << " frames, " << to_string(cfg.tracker.spec.variant) << " "
      << to_string(cfg.tracker.spec.mode) << "-base\n";
  if (lost_at) out << "target lost at frame " << lost_at + 1 << "; last box repeated\n";
  if (seq.has_groundtruth()) {
    std::vector<double> ious;
    std::string lines;
    char buf[32];
    for (std::size_t t = 0; t < boxes.size(); ++t) {
      ious.push_back(iou(boxes[t], seq.groundtruth[t]));
      std::snprintf(buf, sizeof buf, "%.6f\n", ious.back());
      lines += buf;
    }
    maskcf::detail::write_text(dir / "iou.txt", lines);
    std::snprintf(buf, sizeof buf, "%.3f", overlap_precision(ious));
    out << "OP(0.5) " << buf;
    std::snprintf(buf, sizeof buf, "%.3f", success_auc(ious));
    out << "  AUC " << buf << "\n";
  }
  out << "wrote " << (dir / "boxes.txt").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// ablate

/// Sequences for an ablation: every subdirectory of the dataset holding an
/// img/ folder (sorted by name), or the single --seq directory.
inline std::vector<Sequence> collect_sequences(const CliConfig& cfg) {
  namespace fs = std::filesystem;
  std::vector<Sequence> seqs;
  if (!cfg.seq.empty()) {
    seqs.push_back(load_otb_sequence(cfg.seq));
  } else if (!cfg.dataset.empty()) {
    if (!fs::is_directory(cfg.dataset)) throw DataError("dataset " + cfg.dataset + " is not a directory");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(cfg.dataset))
      if (e.is_directory() && fs::is_directory(e.path() / "img")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) seqs.push_back(load_otb_sequence(d));
    if (seqs.empty()) throw DataError("dataset " + cfg.dataset + " holds no sequences");
  } else {
    throw ConfigError("ablate needs --dataset or --seq");
  }
  return seqs;
}

inline int cmd_ablate(const CliConfig& cfg, std::ostream& out) {
  const auto seqs = collect_sequences(cfg);
  const AblationResult a = run_ablation(seqs, cfg.tracker.spec.mode, cfg.tracker, cfg.workers);
  const std::filesystem::path dir(cfg.out);
  write_reports(dir, a);
  maskcf::detail::write_text(dir / "config.txt", format_config(cfg));
  out << format_summary(a);
  out << "wrote " << dir.string() << "/{results.jsonl,summary.csv,summary.txt,plots/}\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyOptions {
  std::string fixtures = std::string(MASKCF_FIXTURE_DIR) + "/oracle";
  double gap_tolerance = 1e-4;
  int sherman_morrison_bins = 500;
  int parseval_trials = 100;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct FixtureCheck {
  std::string name;
  double gap = 0.0;       // relative objective gap, ADMM vs dense optimum
  double parseval = 0.0;  // relative spatial vs spectral objective difference
  double seconds = 0.0;
  bool ok = false;
};

namespace detail {

template <class F>
void parallel_for(std::size_t n, int workers, F&& fn) {
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < std::max(1, workers); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Largest difference between the Sherman-Morrison bin solve and a dense
/// complex LU solve of (mu I + tau conj(x) x^T) f = r.
inline double sherman_morrison_error(int bins, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto u = [&] { return oracle::detail::uniform_pm1(rng); };
  double worst = 0.0;
  for (int b = 0; b < bins; ++b) {
    const int L = 1 + b % 8;
    const double mu = 0.1 + 5.0 * (u() + 1.0), tau = 0.1 + 5.0 * (u() + 1.0);
    const auto n = std::size_t(L);
    std::vector<Complex> x(n), r(n), f(n);
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Identity(L, L) * mu;
    Eigen::VectorXcd rv(L);
    for (int l = 0; l < L; ++l) {
      x[std::size_t(l)] = {3.0 * u(), 3.0 * u()};
      r[std::size_t(l)] = {u(), u()};
      rv(l) = r[std::size_t(l)];
    }
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) A(i, j) += tau * std::conj(x[std::size_t(i)]) * x[std::size_t(j)];
    sherman_morrison_bin(x, r, mu, tau, f);
    const Eigen::VectorXcd direct = A.partialPivLu().solve(rv);
    for (int l = 0; l < L; ++l) worst = std::max(worst, std::abs(f[std::size_t(l)] - direct(l)));
  }
  return worst;
}

inline FixtureCheck check_fixture(const oracle::Fixture& fx, const VerifyOptions& opt, int parseval_trials) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  FixtureCheck c;
  c.name = fx.name;
  const auto crop = fx.crop();
  const FilterBank fb = train_masked_bacf({fx.x, Label{fx.y, 1.0}, fx.mask, reference_config(fx.lambda), crop});
  const auto p = oracle::build_dense(fx.x, fx.mask, fx.y, crop, fx.lambda);
  const auto best = oracle::dense_solve_masked_cf(p);
  c.gap = (oracle::dense_objective(p, oracle::flatten(fb.g)) - best.objective) / best.objective;

  std::mt19937_64 rng(opt.seed ^ fx.seed);
  for (int trial = 0; trial < parseval_trials; ++trial) {
    FeatureMap f(fx.x.grid(), fx.x.channels());
    for (int l = 0; l < f.channels(); ++l)
      for (auto& v : f[l]) v = oracle::detail::uniform_pm1(rng);
    const double spatial = oracle::eval_masked_objective(f, fx.x, fx.y, fx.mask, oracle::Regularizer::ridge(fx.lambda));
    const double spectral = masked_objective_spectral(f, fx.x, fx.y, fx.mask, fx.lambda);
    c.parseval = std::max(c.parseval, rel(spectral, spatial));
  }
  c.ok = c.gap <= opt.gap_tolerance && c.parseval <= 1e-8;
  c.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return c;
}

}  // namespace detail

/// Oracle suite: ADMM against the dense optimum on every fixture, plus the
/// Sherman-Morrison and Parseval cross-checks.
inline int cmd_verify(const VerifyOptions& opt, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(opt.fixtures)) throw DataError("fixture directory " + opt.fixtures + " not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(opt.fixtures))
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no fixtures in " + opt.fixtures);

  std::vector<oracle::Fixture> fixtures;
  for (const auto& f : files) {
    try {
      fixtures.push_back(oracle::read_fixture(f));
    } catch (const std::exception& e) {
      err << "corrupt fixture " << f.string() << ": " << e.what() << "\n";
      return kData;
    }
  }

  const int trials = int((std::size_t(std::max(1, opt.parseval_trials)) + fixtures.size() - 1) / fixtures.size());
  std::vector<FixtureCheck> checks(fixtures.size());
  detail::parallel_for(fixtures.size(), opt.workers,
                       [&](std::size_t i) { checks[i] = detail::check_fixture(fixtures[i], opt, trials); });

  char buf[200];
  std::snprintf(buf, sizeof buf, "%-28s %6s %3s %14s %14s %8s\n", "fixture", "grid", "L", "objective gap",
                "parseval", "seconds");
  out << buf;
  double max_gap = 0.0, max_parseval = 0.0, total = 0.0;
  const FixtureCheck* first_bad = nullptr;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const auto& c = checks[i];
    const auto& fx = fixtures[i];
    std::snprintf(buf, sizeof buf, "%-28s %3dx%-2d %3d %14.3e %14.3e %8.3f%s\n", c.name.c_str(), fx.H, fx.W, fx.L,
                  c.gap, c.parseval, c.seconds, c.ok ? "" : "  FAIL");
    out << buf;
    max_gap = std::max(max_gap, c.gap);
    max_parseval = std::max(max_parseval, c.parseval);
    total += c.seconds;
    if (!c.ok && !first_bad) first_bad = &c;
  }
  const double sm = detail::sherman_morrison_error(opt.sherman_morrison_bins, opt.seed);
  std::snprintf(buf, sizeof buf, "max relative objective gap = %.3e %s %.0e over %zu fixtures (%.2f s)\n", max_gap,
                max_gap <= opt.gap_tolerance ? "\u2264" : ">", opt.gap_tolerance, checks.size(), total);
  out << buf;
  std::snprintf(buf, sizeof buf, "max parseval relative difference = %.3e\n", max_parseval);
  out << buf;
  std::snprintf(buf, sizeof buf, "sherman-morrison max abs error = %.3e over %d bins\n", sm, opt.sherman_morrison_bins);
  out << buf;

  if (first_bad) {
    err << "fixture " << first_bad->name << " failed (gap " << first_bad->gap << ", parseval " << first_bad->parseval
        << ")\n";
    return kNumeric;
  }
  if (!(sm <= 1e-9)) {
    err << "sherman-morrison check failed\n";
    return kNumeric;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// synth

/// "linear:dx,dy" in pixels per frame.
inline std::pair<double, double> parse_motion(const std::string& s) {
  const std::string prefix = "linear:";
  if (s.rfind(prefix, 0) != 0) throw ConfigError("--motion: expected linear:dx,dy, got '" + s + "'");
  const std::string rest = s.substr(prefix.size());
  const auto comma = rest.find(',');
  if (comma == std::string::npos) throw ConfigError("--motion: expected linear:dx,dy, got '" + s + "'");
  return {::maskcf::detail::parse_number<double>("--motion", rest.substr(0, comma)),
          ::maskcf::detail::parse_number<double>("--motion", rest.substr(comma + 1))};
}

inline ClutterKind parse_clutter(const std::string& s) {
  if (s == "none") return ClutterKind::none;
  if (s == "border") return ClutterKind::border;
  throw ConfigError("--clutter: expected none or border, got '" + s + "'");
}

inline int cmd_synth(const SynthConfig& cfg, const std::string& out_dir, std::ostream& out) {
  const SynthSequence seq = make_synth_sequence(cfg);
  write_otb_sequence(out_dir, seq);
  out << "wrote " << seq.frames.size() << " frames to " << out_dir << "\n";
  return kOk;
}

}  // namespace maskcf::cli
