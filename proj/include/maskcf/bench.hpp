#pragma once

// One-pass and supervised runs, the four-variant ablation, and its reports
// (JSON lines, CSV, plain-text table, SVG success plots).

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "maskcf/metrics.hpp"
#include "maskcf/otb.hpp"
#include "maskcf/tracker.hpp"

namespace maskcf {

using FrameLoader = std::function<Image(std::size_t)>;

struct RunResult {
  std::string sequence;
  Variant variant = Variant::rcg;
  SolverMode mode = SolverMode::single_base;
  std::vector<BoundingBox> boxes;
  std::vector<double> ious;
  std::vector<double> frame_seconds;
  int failures = 0;  // supervised re-initialization protocol
  std::string error;

  bool ok() const noexcept { return error.empty() && !ious.empty(); }
  double op50() const { return overlap_precision(ious); }
  double auc() const { return success_auc(ious); }
  double fps() const {
    double s = 0.0;
    for (double v : frame_seconds) s += v;
    return s > 0.0 ? double(frame_seconds.size()) / s : 0.0;
  }
};

/// One-pass evaluation from the first ground-truth box. A lost target keeps
/// its last box for the remaining frames.
inline RunResult run_one_pass(const std::string& name, const FrameLoader& frames, std::span<const BoundingBox> gt,
                              const TrackerConfig& cfg) {
  if (gt.size() < 2) throw DataError(name + ": need ground truth for at least 2 frames");
  RunResult res{name, cfg.spec.variant, cfg.spec.mode, {}, {}, {}, 0, {}};
  const Tracker tr(cfg);
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  TrackState s = tr.init(frames(0), gt[0]);
  res.frame_seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  res.boxes.push_back(gt[0]);
  res.ious.push_back(1.0);
  BoundingBox last = gt[0];
  bool lost = false;
  for (std::size_t t = 1; t < gt.size(); ++t) {
    const Image im = frames(t);
    t0 = clock::now();
    if (!lost) {
      try {
        auto [next, box] = tr.step(std::move(s), im);
        s = std::move(next);
        last = box;
      } catch (const TrackingLostError&) {
        lost = true;
      }
    }
    res.frame_seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    res.boxes.push_back(last);
    res.ious.push_back(iou(last, gt[t]));
  }
  return res;
}

/// Supervised run: a frame with IoU <= threshold (or a lost target) is a
/// failure and the tracker restarts from ground truth kReinitDelay frames
/// later. Skipped frames are recorded as 0 and restart frames as 1, so
/// count_failures on the returned trace reproduces the event count.
inline std::vector<double> run_supervised(const FrameLoader& frames, std::span<const BoundingBox> gt,
                                          const TrackerConfig& cfg, double threshold = 0.0) {
  const Tracker tr(cfg);
  std::vector<double> trace(gt.size(), 0.0);
  std::size_t t = 0;
  while (t < gt.size()) {
    TrackState s = tr.init(frames(t), gt[t]);
    trace[t] = 1.0;
    for (++t; t < gt.size(); ++t) {
      double o = 0.0;
      try {
        auto [next, box] = tr.step(std::move(s), frames(t));
        s = std::move(next);
        o = iou(box, gt[t]);
      } catch (const TrackingLostError&) {
      }
      trace[t] = o;
      if (o <= threshold) break;
    }
    t += std::size_t(kReinitDelay);
  }
  return trace;
}

inline FrameLoader disk_frames(const Sequence& seq) {
  return [&seq](std::size_t t) { return read_frame(seq, t); };
}

struct VariantSummary {
  Variant variant = Variant::rcg;
  double mean_op50 = 0.0;
  double mean_auc = 0.0;
  int failures = 0;
  double mean_fps = 0.0;
  int sequences = 0;
  int errors = 0;
};

struct AblationResult {
  SolverMode mode = SolverMode::single_base;
  std::vector<RunResult> runs;  // sequence-major, variants in table order
  std::vector<VariantSummary> summary;
};

/// Runs Baseline, RC, RCB and RCG on every sequence with the same config apart
/// from the variant. Per-run errors are recorded and the run continues.
inline AblationResult run_ablation(const std::vector<Sequence>& seqs, SolverMode mode, const TrackerConfig& base,
                                   int workers = 1) {
  if (seqs.empty()) throw std::invalid_argument("run_ablation: no sequences");
  constexpr std::size_t V = std::size(kAllVariants);
  AblationResult out;
  out.mode = mode;
  out.runs.resize(seqs.size() * V);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t job; (job = next.fetch_add(1)) < out.runs.size();) {
      const Sequence& seq = seqs[job / V];
      TrackerConfig cfg = base;
      cfg.spec = {kAllVariants[job % V], mode};
      RunResult& r = out.runs[job];
      try {
        const FrameLoader frames = disk_frames(seq);
        r = run_one_pass(seq.name, frames, seq.groundtruth, cfg);
        r.failures = count_failures(run_supervised(frames, seq.groundtruth, cfg));
      } catch (const std::exception& e) {
        r = RunResult{seq.name, cfg.spec.variant, mode, {}, {}, {}, 0, e.what()};
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < std::max(1, workers); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  for (std::size_t v = 0; v < V; ++v) {
    VariantSummary s{kAllVariants[v], 0, 0, 0, 0, 0, 0};
    for (std::size_t q = 0; q < seqs.size(); ++q) {
      const RunResult& r = out.runs[q * V + v];
      if (!r.ok()) {
        ++s.errors;
        continue;
      }
      s.mean_op50 += r.op50();
      s.mean_auc += r.auc();
      s.failures += r.failures;
      s.mean_fps += r.fps();
      ++s.sequences;
    }
    if (s.sequences > 0) {
      s.mean_op50 /= s.sequences;
      s.mean_auc /= s.sequences;
      s.mean_fps /= s.sequences;
    }
    out.summary.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
};

/// Minimal SVG line chart on [0, 1] x [0, 1].
inline std::string svg_line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                  const std::vector<PlotSeries>& series) {
  constexpr int W = 480, H = 360, L = 60, R = 130, T = 40, B = 50;
  constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double x) { return L + x * pw; };
  auto py = [&](double y) { return T + (1.0 - y) * ph; };
  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n<rect width=\"100%%\" height=\"100%%\" fill=\"white\"/>\n",
                W, H);
  s += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">%s</text>\n",
                (L + W - R) / 2, title.c_str());
  s += buf;
  for (int i = 0; i <= 10; i += 2) {
    const double v = i / 10.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n"
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.1f</text>\n"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.1f</text>\n",
                  px(v), py(0), px(v), py(1), px(0), py(v), px(1), py(v), px(v), py(0) + 16, v, px(0) - 6, py(v) + 4, v);
    s += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%d\" y=\"%d\" width=\"%.0f\" height=\"%.0f\" fill=\"none\" stroke=\"black\"/>\n"
                "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\">%s</text>\n"
                "<text x=\"16\" y=\"%.1f\" text-anchor=\"middle\" transform=\"rotate(-90 16 %.1f)\">%s</text>\n",
                L, T, pw, ph, px(0.5), H - 12, xlabel.c_str(), py(0.5), py(0.5), ylabel.c_str());
  s += buf;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = colors[k % std::size(colors)];
    s += "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"";
    s += color;
    s += "\" points=\"";
    for (std::size_t i = 0; i < series[k].x.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.1f,%.1f", i ? " " : "", px(series[k].x[i]), py(series[k].y[i]));
      s += buf;
    }
    s += "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%d\" y1=\"%zu\" x2=\"%d\" y2=\"%zu\" stroke=\"%s\" stroke-width=\"2\"/>"
                  "<text x=\"%d\" y=\"%zu\">%s</text>\n",
                  W - R + 10, T + 10 + 18 * k, W - R + 30, T + 10 + 18 * k, color, W - R + 36, T + 14 + 18 * k,
                  series[k].name.c_str());
    s += buf;
  }
  s += "</svg>\n";
  return s;
}

namespace detail {

inline PlotSeries success_series(const std::string& name, std::span<const double> ious, double auc) {
  PlotSeries p;
  char label[64];
  std::snprintf(label, sizeof label, "%s [%.3f]", name.c_str(), auc);
  p.name = label;
  const auto c = success_curve(ious);
  for (int i = 0; i < kSuccessThresholds; ++i) {
    p.x.push_back(i / 100.0);
    p.y.push_back(c[std::size_t(i)]);
  }
  return p;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw DataError("cannot write " + p.string());
}

}  // namespace detail

inline nlohmann::json to_json(const RunResult& r) {
  nlohmann::json j;
  j["sequence"] = r.sequence;
  j["variant"] = to_string(r.variant);
  j["mode"] = to_string(r.mode);
  if (r.ok()) {
    j["op50"] = r.op50();
    j["auc"] = r.auc();
    j["failures"] = r.failures;
    j["fps"] = r.fps();
    j["per_frame_iou"] = r.ious;
  } else {
    j["error"] = r.error;
  }
  return j;
}

/// Plain-text table: one column per variant in Baseline, RC, RCB, RCG order.
inline std::string format_summary(const AblationResult& a) {
  std::string s;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-24s", (std::string("ablation (") + to_string(a.mode) + "-base)").c_str());
  s += buf;
  for (const auto& v : a.summary) {
    std::snprintf(buf, sizeof buf, "%10s", to_string(v.variant));
    s += buf;
  }
  s += "\n";
  auto row = [&](const char* label, auto get, const char* fmt) {
    std::snprintf(buf, sizeof buf, "%-24s", label);
    s += buf;
    for (const auto& v : a.summary) {
      std::snprintf(buf, sizeof buf, fmt, get(v));
      s += buf;
    }
    s += "\n";
  };
  row("mean OP (IoU > 0.5)", [](const VariantSummary& v) { return v.mean_op50; }, "%10.3f");
  row("mean AUC", [](const VariantSummary& v) { return v.mean_auc; }, "%10.3f");
  row("failures (simplified)", [](const VariantSummary& v) { return v.failures; }, "%10d");
  row("mean FPS", [](const VariantSummary& v) { return v.mean_fps; }, "%10.1f");
  row("sequences", [](const VariantSummary& v) { return v.sequences; }, "%10d");
  row("errors", [](const VariantSummary& v) { return v.errors; }, "%10d");
  s += "failures (simplified): IoU = 0 counts one failure, re-initialized from ground truth " +
       std::to_string(kReinitDelay) + " frames later. Not comparable to VOT robustness; EAO is not computed.\n";
  return s;
}

/// results.jsonl, summary.csv, summary.txt and plots/*.svg under dir.
inline void write_reports(const std::filesystem::path& dir, const AblationResult& a) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "plots", ec);
  if (ec) throw DataError("cannot create " + (dir / "plots").string() + ": " + ec.message());

  std::string jsonl;
  for (const auto& r : a.runs) jsonl += to_json(r).dump() + "\n";
  detail::write_text(dir / "results.jsonl", jsonl);

  std::string csv = "variant,mean_op50,mean_auc,failures_simplified,mean_fps,sequences,errors\n";
  char buf[200];
  for (const auto& v : a.summary) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%d,%.3f,%d,%d\n", to_string(v.variant), v.mean_op50, v.mean_auc,
                  v.failures, v.mean_fps, v.sequences, v.errors);
    csv += buf;
  }
  detail::write_text(dir / "summary.csv", csv);
  detail::write_text(dir / "summary.txt", format_summary(a));

  constexpr std::size_t V = std::size(kAllVariants);
  std::vector<std::vector<double>> pooled(V);
  for (std::size_t q = 0; q * V < a.runs.size(); ++q) {
    std::vector<PlotSeries> series;
    for (std::size_t v = 0; v < V; ++v) {
      const RunResult& r = a.runs[q * V + v];
      if (!r.ok()) continue;
      series.push_back(detail::success_series(to_string(r.variant), r.ious, r.auc()));
      pooled[v].insert(pooled[v].end(), r.ious.begin(), r.ious.end());
    }
    const std::string& name = a.runs[q * V].sequence;
    detail::write_text(dir / "plots" / ("success_" + name + ".svg"),
                       svg_line_chart("Success plot: " + name, "Overlap threshold", "Success rate", series));
  }
  std::vector<PlotSeries> overall;
  for (std::size_t v = 0; v < V; ++v)
    if (!pooled[v].empty()) overall.push_back(detail::success_series(to_string(kAllVariants[v]), pooled[v], success_auc(pooled[v])));
  detail::write_text(dir / "plots" / "success_all.svg",
                     svg_line_chart("Success plot: all sequences", "Overlap threshold", "Success rate", overall));
}

}  // namespace maskcf
