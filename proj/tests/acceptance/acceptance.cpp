// Acceptance gate: one PASS/FAIL line per criterion. Run all criteria, or a
// subset with `--only A5 --only A7`. Exit status is non-zero if any selected
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "hdx/error.hpp"
#include "hdx/evalharness.hpp"
#include "hdx/explain.hpp"
#include "hdx/nnet.hpp"
#include "hdx/stein.hpp"
#include "oracles.hpp"

namespace {

using namespace hdx;
using hdx::testing::central_difference;
using hdx::testing::gaussian_points;
using hdx::testing::nested_difference_trace;
using hdx::testing::random_vector;
using hdx::testing::rel_err;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void info(const std::string& line) { std::printf("  INFO %s\n", line.c_str()); }

MLPClassifier trained_moons(std::size_t n, std::uint64_t seed, Dataset* out = nullptr) {
  Dataset d = gen_two_moons(n, 0.1, seed);
  TrainConfig cfg;
  cfg.seed = seed;
  MLPClassifier m = train(d, cfg).model;
  if (out) *out = std::move(d);
  return m;
}

// --- A1 ---------------------------------------------------------------------

Outcome a1() {
  double worst_grad = 0.0, worst_trace = 0.0, worst_model = 0.0;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 8);
  for (const BaseKernel& k : {BaseKernel::linear(), BaseKernel::rbf(0.4), BaseKernel::imq()}) {
    for (int probe = 0; probe < 200; ++probe) {
      const Eigen::Index d = dim(rng);
      const Vector a = random_vector(rng, d), b = random_vector(rng, d);
      const Vector ga = central_difference([&](const Vector& v) { return k.eval(v, b); }, a, 1e-5);
      const Vector gb = central_difference([&](const Vector& v) { return k.eval(a, v); }, b, 1e-5);
      worst_grad = std::max({worst_grad, rel_err(ga, k.grad_a(a, b), 1e-3),
                             rel_err(gb, k.grad_b(a, b), 1e-3)});
      const double tr = nested_difference_trace(
          [&](const Vector& x, const Vector& y) { return k.eval(x, y); }, a, b, 1e-4);
      worst_trace = std::max(worst_trace, std::abs(tr - k.trace_hessian(a, b)) /
                                              std::max(1.0, std::abs(tr)));
    }
  }
  const MLPClassifier m = trained_moons(200, 1);
  for (int probe = 0; probe < 200; ++probe) {
    const Vector x = random_vector(rng, 2, 1.5);
    const int y = probe % 2;
    const Vector fd = central_difference([&](const Vector& v) { return m.log_proba(v)(y); }, x, 1e-5);
    worst_model = std::max(worst_model, (fd - m.input_gradient(x, y)).cwiseAbs().maxCoeff() /
                                            std::max(1.0, fd.cwiseAbs().maxCoeff()));
    const Vector h = m.representation(x);
    const Vector fdh = central_difference(
        [&](const Vector& v) { return log_softmax(m.head_logits(v))(y); }, h, 1e-5);
    worst_model = std::max(worst_model, (fdh - m.rep_gradient(h, y)).cwiseAbs().maxCoeff() /
                                            std::max(1.0, fdh.cwiseAbs().maxCoeff()));
  }
  return {worst_grad <= 1e-6 && worst_trace <= 1e-4 && worst_model <= 1e-4,
          "max kernel-grad rel err " + fmt("%.2e", worst_grad) + ", trace err " +
              fmt("%.2e", worst_trace) + ", model-grad err " + fmt("%.2e", worst_model)};
}

// --- A2 ---------------------------------------------------------------------

Outcome a2() {
  int null_ok = 0, shift_ok = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (bool shifted : {false, true}) {
      const auto pts = gaussian_points(1000, Vector::Constant(2, shifted ? 1.5 : 0.0), seed);
      std::vector<Vector> zs;
      for (const auto& p : pts) zs.push_back(p.z);
      const KsdEstimate u = ksd_ustat(pts, BaseKernel::rbf(median_heuristic_gamma(zs, seed)));
      if (!shifted) null_ok += std::abs(u.value) <= 3.0 * u.std_error;
      if (shifted) shift_ok += u.value > 3.0 * u.std_error;
    }
  }
  return {null_ok >= 19 && shift_ok >= 19, "null within 3 SE in " + std::to_string(null_ok) +
                                               "/20 seeds, shift 1.5 above band in " +
                                               std::to_string(shift_ok) + "/20"};
}

// --- A3 ---------------------------------------------------------------------

Outcome a3() {
  Dataset d = gen_two_moons(50, 0.1, 5);
  const MLPClassifier m = trained_moons(500, 0);
  double worst_ratio = 0.0, worst_asym = 0.0;
  bool ok = true;
  for (Variant v : {Variant::kRaw, Variant::kLastLayer}) {
    const ScoreCache cache = build_cache(m, d, v);
    std::vector<Vector> zs;
    for (const auto& p : cache.points()) zs.push_back(p.z);
    for (const BaseKernel& k :
         {BaseKernel::linear(), BaseKernel::rbf(median_heuristic_gamma(zs)), BaseKernel::imq()}) {
      const Eigen::MatrixXd g = stein_gram(cache.points(), k);
      const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
      const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g).eigenvalues();
      const double ratio = -ev.minCoeff() / ev.maxCoeff();
      worst_ratio = std::max(worst_ratio, ratio);
      worst_asym = std::max(worst_asym, asym);
      ok = ok && ev.minCoeff() >= -1e-6 * ev.maxCoeff() && asym <= 1e-10;
    }
  }
  return {ok, "worst -min/max eigenvalue " + fmt("%.2e", worst_ratio) + ", asymmetry " +
                  fmt("%.2e", worst_asym) + " over 2 variants x 3 kernels"};
}

// --- A4 ---------------------------------------------------------------------

Outcome a4() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial) * 9;
    const Eigen::Index dim = 1 + trial % 6;
    std::vector<SteinPoint> pts(n);
    for (auto& p : pts) p = {random_vector(rng, dim), random_vector(rng, dim, 2.0)};
    for (const BaseKernel& k : {BaseKernel::linear(), BaseKernel::rbf(0.7), BaseKernel::imq(2.0, -0.3)}) {
      double diag = 0.0;
      for (const auto& p : pts) diag += stein_kernel(k, p, p);
      const double nn = static_cast<double>(n);
      const double lhs = ksd_vstat(pts, k).value;
      const double rhs = (nn - 1.0) / nn * ksd_ustat(pts, k).value + diag / (nn * nn);
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return {worst <= 1e-10, "max |V - ((n-1)/n U + diag/n^2)| = " + fmt("%.2e", worst)};
}

// --- A5 / A6 ----------------------------------------------------------------

struct HitRun {
  MetricsReport hd, tracin, rep;
};

HitRateConfig a5_config(std::uint64_t seed) {
  HitRateConfig hc;
  hc.augmentation = Augmentation::kNoise;
  hc.trials_per_point = 30;
  hc.sample_size = 500;
  hc.seed = seed;
  return hc;
}

HitRun hit_run(std::uint64_t seed, bool baselines_too) {
  Dataset d = gen_two_moons(500, 0.1, seed);
  TrainConfig cfg;
  cfg.seed = seed;
  const MLPClassifier m = train(d, cfg).model;
  ScoreCache cache = build_cache(m, d, Variant::kRaw);
  const BaseKernel k = resolve_kernel(KernelSpec{}, cache.points(), seed);
  const HitRateConfig hc = a5_config(seed);
  HitRun r;
  r.hd = hit_rate_experiment(HdExplainer(m, std::move(cache), k), d, hc);
  r.tracin = hit_rate_experiment(TracInLastExplainer(m, d), d, hc);
  if (baselines_too) r.rep = hit_rate_experiment(RepSimilarityExplainer(m, d), d, hc);
  return r;
}

std::map<std::uint64_t, HitRun>& hit_runs() {
  static std::map<std::uint64_t, HitRun> runs;
  return runs;
}

const HitRun& hit_run_cached(std::uint64_t seed) {
  auto& runs = hit_runs();
  auto it = runs.find(seed);
  if (it == runs.end()) it = runs.emplace(seed, hit_run(seed, seed == 0)).first;
  return it->second;
}

Outcome a5() {
  const HitRun& r = hit_run_cached(0);
  for (const auto* rep : {&r.hd, &r.tracin, &r.rep}) {
    std::ostringstream os;
    os << rep->method << ":";
    for (const auto& k : rep->per_k)
      os << " hit@" << k.k << "=" << fmt("%.3f", k.hit_rate) << " cov@" << k.k << "="
         << fmt("%.3f", k.coverage);
    os << " mean_ms=" << fmt("%.4f", rep->mean_ms);
    info(os.str());
  }
  // Reference points outside the criterion: the same protocol with localised kernels.
  {
    Dataset d = gen_two_moons(500, 0.1, 0);
    TrainConfig cfg;
    const MLPClassifier m = train(d, cfg).model;
    const ScoreCache cache = build_cache(m, d, Variant::kRaw);
    HitRateConfig hc = a5_config(0);
    hc.sample_size = 100;
    hc.ks = {1};
    const double g = resolve_kernel(KernelSpec{}, cache.points(), 0).gamma();
    for (const BaseKernel& k : {BaseKernel::rbf(100.0 * g), BaseKernel::imq(0.1, -0.5)}) {
      const MetricsReport rep = hit_rate_experiment(HdExplainer(m, cache, k), d, hc);
      info("reference " + k.describe() + ": hit@1=" + fmt("%.3f", rep.at(1).hit_rate) +
           " (100 sources x 30 trials)");
    }
  }
  const double hit1 = r.hd.at(1).hit_rate;
  return {hit1 >= 0.80, "HD-Explain (RBF, median heuristic) hit@1 = " + fmt("%.3f", hit1) +
                            " (threshold 0.80)"};
}

Outcome a6() {
  int agree = 0;
  std::ostringstream os;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const HitRun& r = hit_run_cached(seed);
    const double hd = r.hd.at(3).coverage, tr = r.tracin.at(3).coverage;
    agree += hd > tr;
    os << " s" << seed << ":" << fmt("%.5f", hd) << ">" << fmt("%.5f", tr);
  }
  return {agree >= 4, "coverage@3 HD-Explain > tracin-last in " + std::to_string(agree) + "/5 seeds;" +
                          os.str()};
}

// --- A7 ---------------------------------------------------------------------

Outcome a7() {
  int ok = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Dataset d = gen_two_moons(500, 0.1, seed);
    const MLPClassifier m = trained_moons(500, seed, &d);
    const ScoreCache cache = build_cache(m, d, Variant::kRaw);
    const BaseKernel k = resolve_kernel(KernelSpec{}, cache.points(), seed);
    const auto rows = ksd_shift_experiment(
        m, d, shifts_along({0.0, 0.25, 0.5}, default_shift_direction(d)), k);
    const bool inc = rows[0].ksd.value < rows[1].ksd.value && rows[1].ksd.value < rows[2].ksd.value;
    ok += inc;
    min_margin = std::min({min_margin, (rows[1].ksd.value - rows[0].ksd.value) / rows[1].ksd.value,
                           (rows[2].ksd.value - rows[1].ksd.value) / rows[2].ksd.value});
  }
  return {ok >= 19, "strictly increasing KSD in " + std::to_string(ok) +
                        "/20 seeds (min relative step " + fmt("%.3f", min_margin) + ")"};
}

// --- A8 ---------------------------------------------------------------------

Outcome a8() {
  double sum = 0.0;
  std::ostringstream os;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset d = gen_two_moons(1000, 0.1, seed);
    TrainConfig cfg;
    cfg.seed = seed;
    const auto reports = label_flip_debug_experiment(d, 0.05, cfg, KernelSpec{}, seed);
    const auto& curve = reports.front().curve;
    const auto it = std::find_if(curve.begin(), curve.end(),
                                 [](const PrecisionRecall& p) { return p.m == 50; });
    sum += it->precision;
    os << " " << fmt("%.2f", it->precision);
  }
  const double mean = sum / 10.0;
  return {mean >= 0.15,
          "HD-Explain* mean precision@50 = " + fmt("%.3f", mean) + " (threshold 0.15); per seed" + os.str()};
}

// --- A9 ---------------------------------------------------------------------

Outcome a9() {
  const std::size_t n = 10000;
  const Dataset d = gen_two_moons(n, 0.1, 9);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 9;
  const MLPClassifier m = train(d, cfg).model;
  const ScoreCache cache = build_cache(m, d, Variant::kRaw);
  const ExplainerConfig ec{Variant::kRaw, BaseKernel::linear(), 3};
  std::mt19937_64 rng(1);
  const int queries = 200;
  bool exact = true;
  double total_ms = 0.0;
  for (int q = 0; q < queries; ++q) {
    const Vector x = random_vector(rng, 2);
    const std::uint64_t before = stein_kernel_evaluations();
    const auto t0 = Clock::now();
    const Explanation e = explain(m, cache, x, ec);
    total_ms += std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    exact = exact && stein_kernel_evaluations() - before == n && e.kernel_evaluations == n;
  }
  const double mean = total_ms / queries;
  return {exact && mean < 50.0, std::string("kernel evaluations per query ") +
                                    (exact ? "exactly n" : "NOT n") + " (n=10000), mean query " +
                                    fmt("%.3f", mean) + " ms over 200 queries (limit 50 ms)"};
}

// --- A10 --------------------------------------------------------------------

Outcome a10() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hdx_acceptance_a10";
  fs::create_directories(dir);
  bool ok = true;
  std::size_t mutations = 0, detected = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Dataset d = gen_two_moons(200, 0.1, seed);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.seed = seed;
    const MLPClassifier m = train(d, cfg).model;
    for (Variant v : {Variant::kRaw, Variant::kLastLayer}) {
      const ScoreCache c = build_cache(m, d, v);
      const std::string mp = (dir / "m.bin").string(), cp = (dir / "c.bin").string();
      save_model(m, mp);
      save_cache(c, cp);
      const MLPClassifier m2 = load_model(mp);
      const ScoreCache c2 = load_cache(cp);
      ok = ok && m2.serialize() == m.serialize() && c2.serialize() == c.serialize();
      for (std::size_t i = 0; i < c.size(); ++i)
        ok = ok && c2.point(i).z == c.point(i).z && c2.point(i).score == c.point(i).score;
      for (std::size_t l = 0; l < m.num_layers(); ++l) {
        for (Eigen::Index e = 0; e < m.weights()[l].size() + m.biases()[l].size(); ++e) {
          MLPClassifier mut = m2;
          double& p = e < mut.weights()[l].size()
                          ? mut.mutable_weights()[l].data()[e]
                          : mut.mutable_biases()[l].data()[e - mut.weights()[l].size()];
          p = std::nextafter(p, std::numeric_limits<double>::infinity());
          ++mutations;
          try {
            c2.check_model(mut);
          } catch (const StaleCacheError&) {
            ++detected;
          }
        }
      }
    }
  }
  fs::remove_all(dir);
  ok = ok && detected == mutations;
  return {ok, std::string("round trips ") + (ok ? "bit-exact" : "FAILED") + "; stale cache detected for " +
                  std::to_string(detected) + "/" + std::to_string(mutations) +
                  " single-ulp parameter mutations"};
}

struct Criterion {
  const char* id;
  const char* title;
  double limit_s;  // 0: no runtime limit
  std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {"A1", "derivative suite", 30.0, a1},
      {"A2", "Stein identity oracle", 30.0, a2},
      {"A3", "Stein Gram PSD", 0.0, a3},
      {"A4", "V/U estimator identity", 0.0, a4},
      {"A5", "hit rate, two-moons", 300.0, a5},
      {"A6", "coverage ordering", 0.0, a6},
      {"A7", "KSD shift monotone", 120.0, a7},
      {"A8", "label-flip debugging", 600.0, a8},
      {"A9", "query cost", 0.0, a9},
      {"A10", "persistence and staleness", 0.0, a10},
  };
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only.insert(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--only ID]...\n", argv[0]);
      return 2;
    }
  }
  for (const auto& id : only)
    if (std::none_of(all.begin(), all.end(), [&](const Criterion& c) { return id == c.id; })) {
      std::fprintf(stderr, "unknown criterion %s\n", id.c_str());
      return 2;
    }

  int failed = 0;
  for (const Criterion& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (c.limit_s > 0.0 && secs >= c.limit_s) {
      o.pass = false;
      o.detail += "; runtime limit exceeded";
    }
    std::printf("%-4s %s  %s: %s [%.1f s%s]\n", c.id, o.pass ? "PASS" : "FAIL", c.title,
                o.detail.c_str(), secs,
                c.limit_s > 0.0 ? (" / limit " + fmt("%.0f", c.limit_s) + " s").c_str() : "");
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
