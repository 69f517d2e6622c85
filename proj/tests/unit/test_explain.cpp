#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "hdx/error.hpp"
#include "hdx/evalharness.hpp"
#include "hdx/explain.hpp"
#include "oracles.hpp"

namespace hdx {
namespace {

using testing::central_difference;
using testing::rel_err;

struct Fixture {
  Dataset data;
  MLPClassifier model;
};

const Fixture& moons() {
  static const Fixture f = [] {
    Dataset d = gen_two_moons(500, 0.1, 0);
    TrainConfig cfg;
    MLPClassifier m = train(d, cfg).model;
    return Fixture{std::move(d), std::move(m)};
  }();
  return f;
}

TEST(Explain, SingleRecordCache) {
  const MLPClassifier m = MLPClassifier::glorot({2, 4, 2}, 0);
  const Dataset one = gen_two_moons(2, 0.0, 0).subset({1});
  const ScoreCache c = build_cache(m, one, Variant::kRaw);
  const Explanation e = explain(m, c, Vector::Constant(2, 0.3), {Variant::kRaw, BaseKernel::rbf(1.0), 1});
  ASSERT_EQ(e.ranked.size(), 1u);
  EXPECT_EQ(e.ranked[0].train_index, 0u);
  EXPECT_THROW(explain(m, c, Vector::Zero(2), {Variant::kRaw, BaseKernel::linear(), 2}),
               ArgumentError);
}

TEST(Explain, EqualValuesBreakTiesByIndex) {
  const MLPClassifier m = MLPClassifier::glorot({2, 4, 2}, 0);
  Matrix x(4, 2);
  x << 0.5, 0.5, 0.1, 0.9, 0.5, 0.5, 0.5, 0.5;
  const Dataset d(x, {1, 0, 1, 1}, 2);
  const ScoreCache c = build_cache(m, d, Variant::kRaw);
  const Explanation e =
      explain(m, c, (Vector(2) << 0.4, 0.6).finished(), {Variant::kRaw, BaseKernel::rbf(1.0), 4});
  std::vector<std::size_t> dupes;
  for (const auto& r : e.ranked)
    if (r.train_index != 1) dupes.push_back(r.train_index);
  EXPECT_EQ(dupes, (std::vector<std::size_t>{0, 2, 3}));
}

TEST(TopK, OrderingContract) {
  std::vector<RankedEntry> v = {{0, 1.0, 0}, {1, 3.0, 0}, {2, 1.0, 1}, {3, std::nan(""), 0},
                                {4, 3.0, 1}};
  const auto top = top_k_entries(v, 5);
  std::vector<std::size_t> idx;
  for (const auto& r : top) idx.push_back(r.train_index);
  EXPECT_EQ(idx, (std::vector<std::size_t>{1, 4, 0, 2, 3}));
  EXPECT_EQ(top_k_entries(v, 2).size(), 2u);
  EXPECT_EQ(argmax_lowest((Vector(3) << 0.4, 0.4, 0.2).finished()), 0);
}

TEST(Explain, ContractOnTrainedModel) {
  const auto& f = moons();
  for (Variant v : {Variant::kRaw, Variant::kLastLayer}) {
    const ScoreCache c = build_cache(f.model, f.data, v);
    const BaseKernel k = BaseKernel::imq(1.0, -0.5);
    const Vector x = (Vector(2) << 0.3, 0.2).finished();
    const std::uint64_t before = stein_kernel_evaluations();
    const Explanation e = explain(f.model, c, x, {v, k, 10});
    EXPECT_EQ(stein_kernel_evaluations() - before, f.data.size());
    EXPECT_EQ(e.kernel_evaluations, f.data.size());
    ASSERT_EQ(e.ranked.size(), 10u);
    EXPECT_EQ(e.predicted_label, f.model.predict(x));
    EXPECT_LE((e.predicted_proba - f.model.predict_proba(x)).cwiseAbs().maxCoeff(), 0.0);

    const SteinPoint t = make_stein_point(f.model, x, e.predicted_label, v);
    std::vector<std::size_t> seen;
    for (std::size_t i = 0; i < e.ranked.size(); ++i) {
      const auto& r = e.ranked[i];
      if (i > 0) EXPECT_GE(e.ranked[i - 1].value, r.value);
      ASSERT_LT(r.train_index, f.data.size());
      seen.push_back(r.train_index);
      EXPECT_EQ(r.train_label, f.data.label(r.train_index));
      const double fresh = stein_kernel(k, t, c.point(r.train_index));
      EXPECT_LE(std::abs(fresh - r.value), 1e-10 * std::max(1.0, std::abs(fresh)));
    }
    std::sort(seen.begin(), seen.end());
    EXPECT_EQ(std::adjacent_find(seen.begin(), seen.end()), seen.end());

    // Brute-force full ranking agrees with the returned prefix.
    std::vector<RankedEntry> all;
    for (std::size_t i = 0; i < c.size(); ++i)
      all.push_back({i, stein_kernel(k, t, c.point(i)), c.label(i)});
    std::stable_sort(all.begin(), all.end(),
                     [](const RankedEntry& a, const RankedEntry& b) { return a.value > b.value; });
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i].train_index, e.ranked[i].train_index);

    const Explanation again = explain(f.model, c, x, {v, k, 10});
    EXPECT_EQ(again.ranked, e.ranked);
    EXPECT_EQ(again.predicted_label, e.predicted_label);
  }
}

TEST(Explain, PermutationInvariance) {
  const auto& f = moons();
  const ScoreCache c = build_cache(f.model, f.data, Variant::kRaw);
  std::vector<std::size_t> order(c.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(3));
  const ScoreCache p = c.permuted(order);
  for (const BaseKernel& k : {BaseKernel::linear(), BaseKernel::rbf(0.2), BaseKernel::imq()}) {
    const Vector x = (Vector(2) << -0.5, 0.8).finished();
    EXPECT_EQ(explain(f.model, c, x, {Variant::kRaw, k, 25}).ranked,
              explain(f.model, p, x, {Variant::kRaw, k, 25}).ranked);
  }
}

TEST(Explain, SelfRetrievalWithLocalisedKernel) {
  const auto& f = moons();
  for (Variant v : {Variant::kRaw, Variant::kLastLayer}) {
    const ScoreCache c = build_cache(f.model, f.data, v);
    int hits = 0;
    for (std::size_t i : sample_indices(f.data.size(), 100, 1)) {
      const Explanation e = explain(f.model, c, f.data.row(i), {v, BaseKernel::imq(0.1, -0.5), 1});
      hits += e.ranked[0].train_index == i;
    }
    EXPECT_GE(hits, 95) << to_string(v);
  }
}

TEST(Explain, RejectsStaleOrMismatchedCache) {
  const auto& f = moons();
  const ScoreCache c = build_cache(f.model, f.data, Variant::kRaw);
  MLPClassifier other = f.model;
  other.mutable_weights()[0](0, 0) *= 1.0 + 1e-12;
  const Vector x = Vector::Zero(2);
  EXPECT_THROW(explain(other, c, x, {Variant::kRaw, BaseKernel::linear(), 3}), StaleCacheError);
  EXPECT_THROW(explain(f.model, c, x, {Variant::kLastLayer, BaseKernel::linear(), 3}),
               ArgumentError);
  EXPECT_THROW(explain(f.model, c, Vector::Constant(2, std::nan("")),
                       {Variant::kRaw, BaseKernel::linear(), 3}),
               ArgumentError);
}

TEST(Explain, CacheRebuildIsBitIdentical) {
  const auto& f = moons();
  const ScoreCache a = build_cache(f.model, f.data, Variant::kRaw);
  EXPECT_EQ(a.size(), 500u);
  EXPECT_EQ(a.dim(), 4u);
  EXPECT_EQ(a.serialize(), build_cache(f.model, f.data, Variant::kRaw).serialize());
}

TEST(Explain, JsonShape) {
  const auto& f = moons();
  const ScoreCache c = build_cache(f.model, f.data, Variant::kRaw);
  const Explanation e = explain(f.model, c, Vector::Zero(2), {Variant::kRaw, BaseKernel::linear(), 3});
  const auto j = nlohmann::json::parse(e.to_json());
  EXPECT_EQ(j.at("predicted_label").get<int>(), e.predicted_label);
  EXPECT_EQ(j.at("predicted_proba").size(), 2u);
  ASSERT_EQ(j.at("topk").size(), 3u);
  EXPECT_EQ(j.at("topk")[0].at("train_index").get<std::size_t>(), e.ranked[0].train_index);
  EXPECT_EQ(j.at("topk")[0].at("kernel_value").get<double>(), e.ranked[0].value);
  EXPECT_TRUE(j.at("elapsed_ms").is_number());
}

TEST(SelfInfluence, PermutationAndNonNegative) {
  const auto& f = moons();
  const ScoreCache c = build_cache(f.model, f.data, Variant::kLastLayer);
  const auto r = self_influence_ranking(c, BaseKernel::rbf(0.1));
  ASSERT_EQ(r.size(), c.size());
  std::vector<std::size_t> idx;
  double max_abs = 0.0;
  for (const auto& e : r) {
    idx.push_back(e.train_index);
    max_abs = std::max(max_abs, std::abs(e.value));
  }
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_GE(r[i - 1].value, r[i].value);
  for (const auto& e : r) {
    EXPECT_GE(e.value, -1e-6 * max_abs);
    EXPECT_EQ(e.value, stein_kernel(BaseKernel::rbf(0.1), c.point(e.train_index),
                                    c.point(e.train_index)));
  }
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(idx[i], i);
}

// Loss gradient of the final layer: d/dW [-log softmax(W h + b)[y]], flattened.
Vector head_loss_gradient_fd(const MLPClassifier& m, const Vector& h, int y) {
  const Eigen::MatrixXd w0 = m.head_weight();
  const Vector b = m.head_bias();
  Vector flat = Eigen::Map<const Vector>(w0.data(), w0.size());
  return central_difference(
      [&](const Vector& v) {
        const Eigen::MatrixXd w = Eigen::Map<const Eigen::MatrixXd>(v.data(), w0.rows(), w0.cols());
        return -log_softmax(w * h + b)(y);
      },
      flat, 1e-6);
}

TEST(TracIn, MatchesFiniteDifferenceInnerProduct) {
  const auto& f = moons();
  const Dataset small = f.data.subset({0, 7, 100, 251, 400});
  const Vector x = (Vector(2) << 0.1, 0.4).finished();
  const auto ranking = baseline_tracin_last(f.model, small, x);
  const Vector gt = head_loss_gradient_fd(f.model, f.model.representation(x), f.model.predict(x));
  for (const auto& r : ranking) {
    const Vector gi = head_loss_gradient_fd(f.model, f.model.representation(small.row(r.train_index)),
                                            small.label(r.train_index));
    EXPECT_LE(rel_err(gi.dot(gt), r.value, 1e-8), 1e-4);
  }
}

TEST(TracIn, ZeroWhenTestResidualVanishes) {
  // A huge output bias makes p_t exactly one-hot in double precision.
  MLPClassifier m = MLPClassifier::glorot({2, 3, 2}, 1);
  m.mutable_biases()[1] << 1000.0, 0.0;
  const auto r = baseline_tracin_last(m, gen_two_moons(10, 0.1, 0), Vector::Zero(2));
  for (const auto& e : r) EXPECT_EQ(e.value, 0.0);
}

TEST(TracIn, RankingInvariantToRepresentationScale) {
  const auto& f = moons();
  const Vector x = (Vector(2) << 1.2, -0.3).finished();
  const auto base = baseline_tracin_last(f.model, f.data, x);
  const Vector h = f.model.representation(x);
  const Vector p = f.model.predict_proba(x);
  const Vector rt = p - one_hot(f.model.predict(x), 2);
  for (double c : {0.01, 3.0, 250.0}) {
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < f.data.size(); ++i) {
      const Vector hi = f.model.representation(f.data.row(i));
      const Vector ri = f.model.predict_proba(f.data.row(i)) - one_hot(f.data.label(i), 2);
      const double v = ri.dot(rt) * (c * hi).dot(c * h);
      if (v > best_v) {
        best_v = v;
        best = i;
      }
    }
    EXPECT_EQ(best, base[0].train_index) << "scale " << c;
  }
}

TEST(RepSimilarity, CosineProperties) {
  const auto& f = moons();
  for (std::size_t i : {std::size_t{3}, std::size_t{77}, std::size_t{420}}) {
    const auto r = baseline_rep_similarity(f.model, f.data, f.data.row(i));
    EXPECT_NEAR(r[0].value, 1.0, 1e-12);
    const auto it = std::find_if(r.begin(), r.end(), [&](const RankedEntry& e) { return e.train_index == i; });
    ASSERT_NE(it, r.end());
    EXPECT_NEAR(it->value, 1.0, 1e-12);
    for (const auto& e : r) {
      EXPECT_GE(e.value, -1.0);
      EXPECT_LE(e.value, 1.0);
    }
  }
}

TEST(RepSimilarity, OrthogonalAndZeroRepresentations) {
  // Hidden unit 0 sees only x0, unit 1 only x1 (tanh keeps the sign pattern).
  std::vector<Eigen::MatrixXd> w = {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Ones(2, 2)};
  std::vector<Vector> b = {Vector::Zero(2), Vector::Zero(2)};
  const MLPClassifier m({2, 2, 2}, w, b);
  Matrix x(3, 2);
  x << 1.0, 0.0, 2.0, 0.0, 0.0, 0.0;
  const Dataset d(x, {0, 1, 0}, 2);
  for (const auto& e : baseline_rep_similarity(m, d, (Vector(2) << 0.0, 1.0).finished()))
    EXPECT_EQ(e.value, 0.0);
  const RepSimilarityExplainer ex(m, d);
  EXPECT_EQ(ex.scores(Vector::Zero(2)), (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Baselines, NeedHiddenLayer) {
  const MLPClassifier m = MLPClassifier::glorot({2, 2}, 0);
  const Dataset d = gen_two_moons(10, 0.1, 0);
  EXPECT_THROW(baseline_tracin_last(m, d, Vector::Zero(2)), UnsupportedError);
  EXPECT_THROW(baseline_rep_similarity(m, d, Vector::Zero(2)), UnsupportedError);
}

TEST(Explainers, InterfaceAgreesWithFreeFunctions) {
  const auto& f = moons();
  const Vector x = (Vector(2) << 0.0, 0.5).finished();
  const TracInLastExplainer t(f.model, f.data);
  const auto full = baseline_tracin_last(f.model, f.data, x);
  const Explanation e = t.explain(x, 5);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(e.ranked[i], full[i]);

  const HdExplainer hd(f.model, build_cache(f.model, f.data, Variant::kLastLayer), BaseKernel::imq());
  EXPECT_EQ(hd.name(), "hd-explain-star");
  EXPECT_EQ(hd.explain(x, 4).ranked,
            explain(f.model, hd.cache(), x, {Variant::kLastLayer, BaseKernel::imq(), 4}).ranked);
}

}  // namespace
}  // namespace hdx
