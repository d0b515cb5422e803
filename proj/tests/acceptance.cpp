// Acceptance checks: one PASS/FAIL line per criterion. Exit code 0 only if
// every criterion passes. Tolerances and budgets are fixed below.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "avloc/avic_io.hpp"
#include "avloc/dsp.hpp"
#include "avloc/gradcheck_suite.hpp"
#include "avloc/icl.hpp"
#include "avloc/localization.hpp"
#include "avloc/pipeline.hpp"
#include "avloc/rng.hpp"
#include "oracle.hpp"

namespace fs = std::filesystem;
using namespace avloc;

namespace {

constexpr double kGradTol = 1e-4;
constexpr std::size_t kGradSeeds = 10;
constexpr double kGradSeconds = 60.0;
constexpr double kLossTol = 1e-12;
constexpr int kLossBatches = 100;
constexpr double kMetricTol = 1e-9;
constexpr int kMetricCases = 1000;
constexpr double kAblationMargin = 10.0;
constexpr double kSeedNoise = 2.0;
constexpr double kAblationMinutes = 90.0;
constexpr int kSeeds = 3;
constexpr int kFocusingSeeds = 2;
constexpr double kParsevalTol = 1e-9;
constexpr double kPeakBins = 1.0;
constexpr double kNormTol = 1e-12;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor unit_rows(std::size_t k, std::size_t d, Rng& r) {
  Tensor t({k, d});
  for (std::size_t i = 0; i < k; ++i) {
    double n = 0.0;
    for (std::size_t c = 0; c < d; ++c) n += (t(i, c) = r.draw_uniform(-1, 1)) * t(i, c);
    n = std::sqrt(n);
    for (std::size_t c = 0; c < d; ++c) t(i, c) /= n;
  }
  return t;
}

double naive_iterative(const Tensor& vp, const Tensor& vm, const std::vector<bool>& has_neg,
                       const Tensor& a, const icl::RelationMatrix& y, double tau) {
  const std::size_t k = vp.extent(0), d = vp.extent(1);
  auto dot = [d](const Tensor& x, std::size_t i, const Tensor& z, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += x(i, c) * z(j, c);
    return s;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double ep = std::exp(dot(vp, i, a, j) / tau);
      if (y.at(i, j)) num += ep;
      den += ep;
      if (has_neg[i]) den += std::exp(dot(vm, i, a, j) / tau);
    }
    total += std::log(num / den);
  }
  return -total / static_cast<double>(k);
}

void gradient_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckSuiteOptions o;
  o.num_seeds = kGradSeeds;
  o.tolerance = kGradTol;
  const auto r = run_gradcheck_suite(o);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (const auto& c : r.components) worst = std::max(worst, c.max_rel_error);
  report(r.passed && secs < kGradSeconds, "gradient exactness",
         fmt("%zu components x %zu seeds, max rel error %.2e (tol %.0e), %.1f s (budget %.0f s)",
             r.components.size(), r.seeds, worst, kGradTol, secs, kGradSeconds));
}

void loss_reductions() {
  Rng r(101);
  double red = 0.0, lnk = 0.0, naive = 0.0;
  for (int t = 0; t < kLossBatches; ++t) {
    // x_pos = all patches: v+ is phi over the whole map; no v-; y = I.
    const std::size_t k = 1 + r.draw_index(12), d = 2 + r.draw_index(8), patches = 1 + r.draw_index(9);
    Tensor pooled({k, d});
    for (std::size_t i = 0; i < k; ++i) {
      enc::VisualFeatureMap v;
      v.values = Tensor({patches, 1, d});
      for (auto& x : v.values.data()) x = r.draw_uniform(-1, 1);
      const auto p = enc::phi(v);
      for (std::size_t c = 0; c < d; ++c) pooled(i, c) = p.value[c];
    }
    const auto a = unit_rows(k, d, r);
    const double tau = 0.05 + r.draw_uniform();
    const double base = icl::contrastive_loss(pooled, a, tau).value;
    const double itr = icl::iterative_loss(pooled, Tensor({k, d}, 0.0), std::vector<bool>(k, false),
                                           a, icl::RelationMatrix::identity(k), tau)
                           .value;
    red = std::max(red, std::abs(base - itr));

    // All similarities equal.
    Tensor same({k, d}, 0.0);
    for (std::size_t i = 0; i < k; ++i) same(i, 0) = 1.0;
    lnk = std::max(lnk, std::abs(icl::contrastive_loss(same, same, tau).value -
                                 std::log(static_cast<double>(k))));

    // Random shapes against the double loop.
    const auto vp = unit_rows(k, d, r), vm = unit_rows(k, d, r);
    std::vector<bool> has(k);
    for (std::size_t i = 0; i < k; ++i) has[i] = r.draw_uniform() < 0.6;
    auto y = icl::RelationMatrix::identity(k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j)
        if (r.draw_uniform() < 0.4) y.y[i * k + j] = y.y[j * k + i] = 1;
    naive = std::max(naive, std::abs(icl::iterative_loss(vp, vm, has, a, y, tau).value -
                                     naive_iterative(vp, vm, has, a, y, tau)));
  }
  report(red <= kLossTol && lnk <= kLossTol && naive <= kLossTol, "loss reductions",
         fmt("%d batches: |itr - base| %.1e, |base - ln k| %.1e, |itr - naive| %.1e (tol %.0e)",
             kLossBatches, red, lnk, naive, kLossTol));
}

void metric_oracle() {
  Rng r(202);
  double ciou_err = 0.0, auc_err = 0.0;
  for (int t = 0; t < kMetricCases; ++t) {
    const std::size_t w = 1 + r.draw_index(16), h = 1 + r.draw_index(16);
    Tensor pred({w, h});
    for (auto& v : pred.data()) v = r.draw_uniform();
    std::vector<corpus::BoundingBox> boxes;
    std::vector<oracle::Box> oboxes;
    const std::size_t nb = r.draw_index(4);
    for (std::size_t b = 0; b < nb; ++b) {
      const int x0 = static_cast<int>(r.draw_index(w)), y0 = static_cast<int>(r.draw_index(h));
      const int x1 = x0 + 1 + static_cast<int>(r.draw_index(w - x0));
      const int y1 = y0 + 1 + static_cast<int>(r.draw_index(h - y0));
      boxes.push_back({x0, y0, x1, y1});
      oboxes.push_back({x0, y0, x1, y1});
    }
    const int cons = 1 + static_cast<int>(r.draw_index(2));
    const auto g = eval::consensus_map(boxes, w, h, cons);
    const auto og = oracle::consensus(oboxes, static_cast<int>(w), static_cast<int>(h), cons);
    std::vector<double> flat_g;
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t y = 0; y < h; ++y) flat_g.push_back(og[x][y]);
    const double thr = r.draw_uniform();
    const std::vector<double> flat_p(pred.data().begin(), pred.data().end());
    ciou_err = std::max(ciou_err, std::abs(eval::ciou(pred, g, thr) - oracle::ciou(flat_p, flat_g, thr)));

    std::vector<double> scores(1 + r.draw_index(50));
    for (auto& s : scores) s = r.draw_uniform() < 0.2 ? std::round(r.draw_uniform() * 20) / 20 : r.draw_uniform();
    auc_err = std::max(auc_err, std::abs(eval::success_curve(scores).auc - oracle::auc(scores)));
  }

  // Every pair of boxes on a 4x3 grid, consensus 1..3, compared cell by cell.
  std::vector<oracle::Box> all;
  for (int x0 = 0; x0 < 4; ++x0)
    for (int x1 = x0 + 1; x1 <= 4; ++x1)
      for (int y0 = 0; y0 < 3; ++y0)
        for (int y1 = y0 + 1; y1 <= 3; ++y1) all.push_back({x0, y0, x1, y1});
  std::size_t cases = 0, mismatches = 0;
  for (const auto& a : all) {
    for (const auto& b : all) {
      for (int cons = 1; cons <= 3; ++cons) {
        const auto got = eval::consensus_map({{a.x0, a.y0, a.x1, a.y1}, {b.x0, b.y0, b.x1, b.y1}}, 4,
                                             3, static_cast<std::size_t>(cons));
        const auto ref = oracle::consensus({a, b}, 4, 3, cons);
        for (std::size_t x = 0; x < 4; ++x)
          for (std::size_t y = 0; y < 3; ++y) mismatches += got(x, y) != ref[x][y];
        ++cases;
      }
    }
  }
  report(ciou_err <= kMetricTol && auc_err <= kMetricTol && mismatches == 0, "metric oracle",
         fmt("%d pairs: cIoU err %.1e, AUC err %.1e (tol %.0e); consensus %zu cases, %zu mismatches",
             kMetricCases, ciou_err, auc_err, kMetricTol, cases, mismatches));
}

void ablation_and_focusing() {
  const auto t0 = std::chrono::steady_clock::now();
  const corpus::CorpusConfig cc;
  const auto c = corpus::generate_corpus(cc, 0);
  const pipeline::RunConfig rc;
  const auto train = prepare_examples(c.train, rc.audio);
  const auto test = prepare_examples(c.test, rc.audio);
  const auto enc_cfg = pipeline::resolve_encoder(rc, c.manifest, &train);

  const std::vector<icl::Variant> order = {icl::Variant::initial, icl::Variant::itr,
                                           icl::Variant::itr_intra, icl::Variant::itr_inter,
                                           icl::Variant::full};
  std::vector<double> mean(order.size(), 0.0);
  int focused = 0;
  std::string focus_detail;
  for (std::size_t v = 0; v < order.size(); ++v) {
    std::string row;
    for (int s = 0; s < kSeeds; ++s) {
      auto base = rc.train;
      base.seed = static_cast<std::uint64_t>(s);
      const auto vc = icl::make_variant(base, order[v]);
      icl::TrainOptions o;
      o.components = vc.components;
      o.test = &test;
      o.eval = rc.eval;
      const auto st = icl::train(train, enc_cfg, vc.train, o);
      const double last = st.log.back().ciou_at_05;
      mean[v] += last / kSeeds;
      row += fmt(" %.1f", last);
      if (order[v] == icl::Variant::full) {
        const double at_init = st.log[vc.train.initial_epochs - 1].ciou_at_05;
        focused += last > at_init ? 1 : 0;
        focus_detail += fmt(" %.1f->%.1f", at_init, last);
      }
    }
    std::printf("  %-10s cIoU@0.5 per seed:%s  mean %.2f\n", icl::variant_name(order[v]).c_str(),
                row.c_str(), mean[v]);
  }
  const double minutes = seconds_since(t0) / 60.0;
  const double full = mean[4];
  const bool over_initial = full - mean[0] >= kAblationMargin;
  const bool over_single = full >= mean[1] - kSeedNoise && full >= mean[2] - kSeedNoise &&
                           full >= mean[3] - kSeedNoise;
  report(over_initial && over_single && minutes < kAblationMinutes, "ablation trend",
         fmt("mean cIoU@0.5 initial %.2f, itr %.2f, itr-intra %.2f, itr-inter %.2f, full %.2f; "
             "full - initial %.2f (need >= %.0f), full vs singles within %.0f: %s; %.1f min "
             "(budget %.0f)",
             mean[0], mean[1], mean[2], mean[3], full, full - mean[0], kAblationMargin, kSeedNoise,
             over_single ? "yes" : "no", minutes, kAblationMinutes));
  report(focused >= kFocusingSeeds, "localization focusing",
         fmt("full, end of initial stage -> final:%s; improved in %d of %d seeds (need %d)",
             focus_detail.c_str(), focused, kSeeds, kFocusingSeeds));
}

void dsp_correctness() {
  double worst_peak = 0.0;
  for (double rate : {8000.0, 22050.0}) {
    for (double hz : {300.0, 440.0, 1234.0, 3000.0}) {
      dsp::Waveform w;
      w.sample_rate = rate;
      w.samples.resize(static_cast<std::size_t>(rate / 2));
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = std::sin(2.0 * M_PI * hz * static_cast<double>(i) / rate);
      const auto s = dsp::stft(w, 0.04, 0.02);
      const double expected = hz * static_cast<double>(s.fft_size) / rate;
      for (std::size_t f = 0; f < s.frames; ++f) {
        std::size_t best = 0;
        for (std::size_t b = 1; b < s.fft_bins; ++b)
          if (s.power(b, f) > s.power(best, f)) best = b;
        worst_peak = std::max(worst_peak, std::abs(static_cast<double>(best) - expected));
      }
    }
  }

  Rng r(303);
  dsp::Waveform w;
  w.sample_rate = 8000.0;
  w.samples.resize(4000);
  for (auto& v : w.samples) v = r.draw_uniform(-1, 1);
  const auto s = dsp::stft(w, 0.04, 0.02);
  const auto win = dsp::hann_window(s.window_length);
  double parseval = 0.0;
  for (std::size_t f = 0; f < s.frames; ++f) {
    double energy = 0.0;
    for (std::size_t i = 0; i < s.window_length; ++i) {
      const double x = w.samples[f * s.hop_length + i] * win[i];
      energy += x * x;
    }
    double spec = s.power(0, f) + s.power(s.fft_bins - 1, f);
    for (std::size_t b = 1; b + 1 < s.fft_bins; ++b) spec += 2.0 * s.power(b, f);
    parseval = std::max(parseval, std::abs(energy - spec / static_cast<double>(s.fft_size)) / energy);
  }

  std::size_t grid = 0, wrong = 0;
  for (std::size_t len : {1u, 7u, 100u, 320u, 8000u, 110250u}) {
    for (std::size_t win_len : {1u, 3u, 64u, 320u, 882u}) {
      for (std::size_t hop : {1u, 2u, 160u, 441u}) {
        if (win_len > len) continue;
        std::size_t direct = 0;
        for (std::size_t st = 0; st + win_len <= len; st += hop) ++direct;
        wrong += dsp::frame_count(len, win_len, hop) != direct;
        ++grid;
      }
    }
  }
  report(worst_peak <= kPeakBins && parseval <= kParsevalTol && wrong == 0, "DSP correctness",
         fmt("peak offset %.2f bins (tol %.0f), Parseval rel err %.1e (tol %.0e), frame count "
             "%zu/%zu exact",
             worst_peak, kPeakBins, parseval, kParsevalTol, grid - wrong, grid));
}

void determinism(const fs::path& work) {
  corpus::CorpusConfig cc;
  cc.train_instances = 96;
  cc.test_instances = 16;
  const auto corpus_dir = work / "determinism_corpus";
  fs::remove_all(corpus_dir);
  pipeline::gen_corpus(cc, 11, corpus_dir);

  auto run = [&](const std::string& name, std::size_t threads) {
    pipeline::TrainRequest tr;
    tr.corpus = corpus_dir;
    tr.out = work / name;
    tr.config.train.total_epochs = 8;
    tr.config.train.initial_epochs = 3;
    tr.config.train.seed = 4;
    tr.threads = threads;
    fs::remove_all(tr.out);
    pipeline::train(tr);
    pipeline::EvalRequest ev;
    ev.corpus = corpus_dir;
    ev.checkpoint = tr.out / "checkpoint";
    ev.out = tr.out / "eval";
    ev.threads = threads;
    pipeline::evaluate(ev);
    return std::make_pair(read_bytes(tr.out / "metrics.csv"), read_bytes(ev.out / "eval.json"));
  };
  const auto a = run("det_a", 1), b = run("det_b", 1), c = run("det_c", 4);
  const bool repeat = a == b, threads = a == c;
  report(repeat && threads, "determinism",
         fmt("train+eval metrics and eval JSON: repeat run %s, --threads 1 vs 4 %s",
             repeat ? "identical" : "DIFFER", threads ? "identical" : "DIFFER"));
}

void normalization() {
  Rng r(404);
  double worst = 0.0;
  std::size_t region_checks = 0, region_mismatch = 0;
  for (int t = 0; t < 500; ++t) {
    loc::ResponseMap m;
    m.values = Tensor({1 + r.draw_index(10), 1 + r.draw_index(10)});
    for (auto& x : m.values.data()) x = r.draw_uniform(-1, 1);
    auto m2 = m;
    const double alpha = std::exp(r.draw_uniform(-3, 3)), beta = r.draw_uniform(-5, 5);
    for (auto& x : m2.values.data()) x = alpha * x + beta;
    const auto a = loc::minmax_normalize(m), b = loc::minmax_normalize(m2);
    for (std::size_t i = 0; i < a.values.size(); ++i)
      worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
    for (double dv : {0.0, 0.3, 0.5, 0.6, 0.9}) {
      bool near = false;  // values within rounding of the threshold may flip
      for (double x : a.values.data()) near = near || std::abs(x - dv) <= kNormTol;
      if (near) continue;
      ++region_checks;
      region_mismatch += loc::threshold_region(a, dv).indices != loc::threshold_region(b, dv).indices;
    }
  }
  std::size_t degenerate_nonempty = 0;
  for (double c : {-2.0, 0.0, 0.7}) {
    loc::ResponseMap m;
    m.values = Tensor({8, 8}, c);
    const auto n = loc::minmax_normalize(m);
    for (double dv : {0.0, 0.25, 0.6, 1.0}) degenerate_nonempty += !loc::threshold_region(n, dv).indices.empty();
    degenerate_nonempty += !n.degenerate;
  }
  report(worst <= kNormTol && region_mismatch == 0 && degenerate_nonempty == 0,
         "normalization and thresholding",
         fmt("affine invariance max err %.1e (tol %.0e); region invariance %zu/%zu; constant maps "
             "give empty regions: %s",
             worst, kNormTol, region_checks - region_mismatch, region_checks,
             degenerate_nonempty == 0 ? "yes" : "no"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work = (fs::temp_directory_path() / "avloc_acceptance").string();
  bool skip_training = false;
  app.add_option("--work-dir", work, "Scratch directory");
  app.add_flag("--skip-ablation", skip_training, "Skip the ablation and focusing runs");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  try {
    gradient_exactness();
    loss_reductions();
    metric_oracle();
    if (!skip_training) {
      ablation_and_focusing();
    } else {
      std::printf("SKIP ablation trend\nSKIP localization focusing\n");
    }
    dsp_correctness();
    determinism(work);
    normalization();
  } catch (const std::exception& e) {
    std::printf("FAIL aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
