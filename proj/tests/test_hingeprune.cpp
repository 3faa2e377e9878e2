#include <cmath>

#include "doctest.h"
#include "oracles.hpp"

#include "condense/hingeprune.hpp"
#include "condense/rng.hpp"

using namespace condense;

namespace {

MagnitudeCurve curve_from(std::vector<double> sorted_desc) {
  MagnitudeCurve c;
  c.layer_id = 0;
  c.sorted_gamma = std::move(sorted_desc);
  c.channel_ids.resize(c.sorted_gamma.size());
  for (size_t i = 0; i < c.channel_ids.size(); ++i) c.channel_ids[i] = static_cast<int>(i);
  return c;
}

// Random proper plan: every prunable layer keeps a random non-empty subset of
// its top-gamma-ordered channels (as build_pruning_plan would).
PruningPlan random_plan(const NetworkGraph& g, Rng& rng) {
  std::vector<HingeReport> hinges;
  for (int id : prunable_layer_ids(g)) {
    HingeReport h;
    h.layer_id = id;
    h.method = HingeReport::Method::manual;
    h.keep_count = 1 + rng.uniform_int(g.layer(id).out_ch);
    hinges.push_back(h);
  }
  return build_pruning_plan(g, hinges);
}

Tensor random_input(int channels, int size, Rng& rng) {
  Tensor x({1, channels, size, size});
  for (int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform(-1, 1));
  return x;
}

}  // namespace

TEST_CASE("magnitude_curve sorts descending with index tie-break") {
  NetworkGraph g;
  g.input_channels = 1;
  LayerSpec l;
  l.id = 0; l.kind = LayerKind::conv; l.in_ch = 1; l.out_ch = 3;
  l.kernel = 1; l.stride = 1; l.padding = 0;
  l.input_sources = {kNetworkInput};
  g.layers.push_back(l);
  g.weights.push_back(make_param(Tensor({3, 1, 1, 1}, {1.0f, 3.0f, 2.0f})));
  MagnitudeCurve c = magnitude_curve(g, 0);
  CHECK(c.sorted_gamma == std::vector<double>{3.0, 2.0, 1.0});
  CHECK(c.channel_ids == std::vector<int>{1, 2, 0});

  SUBCASE("all-equal gammas give the identity permutation") {
    g.weights[0] = make_param(Tensor({3, 1, 1, 1}, {2.0f, -2.0f, 2.0f}));
    MagnitudeCurve c2 = magnitude_curve(g, 0);
    CHECK(c2.channel_ids == std::vector<int>{0, 1, 2});
  }
  SUBCASE("curve is a permutation of channel_importance gamma") {
    Rng rng(71);
    NetworkGraph u = build_unet(4, 2, 512, 16, rng);
    for (const LayerSpec& spec : u.layers) {
      MagnitudeCurve mc = magnitude_curve(u, spec.id);
      ChannelImportance ci = channel_importance(u, spec.id);
      std::vector<double> sorted_ci = ci.gamma;
      std::sort(sorted_ci.begin(), sorted_ci.end(), std::greater<double>());
      std::vector<double> mc_copy = mc.sorted_gamma;
      CHECK(mc_copy == sorted_ci);
    }
  }
}

TEST_CASE("detect_hinge") {
  SUBCASE("clear bimodal curve") {
    MagnitudeCurve c = curve_from({10, 9.5, 9, 8.8, 0.01, 0.009, 0.005});
    HingeReport h = detect_hinge(c, 10.0);
    CHECK(h.keep_count == 4);
    REQUIRE(h.drop_ratio.has_value());
    CHECK(*h.drop_ratio == doctest::Approx(880.0));
  }
  SUBCASE("flat curve yields no hinge") {
    HingeReport h = detect_hinge(curve_from({5, 5, 5, 5}), 10.0);
    CHECK(h.keep_count == 4);
    CHECK_FALSE(h.drop_ratio.has_value());
  }
  SUBCASE("gentle slope below the ratio yields no hinge") {
    HingeReport h = detect_hinge(curve_from({8, 7, 6, 5, 4}), 10.0);
    CHECK(h.keep_count == 5);
    CHECK_FALSE(h.drop_ratio.has_value());
  }
  SUBCASE("exact zeros in the tail use the floor") {
    HingeReport h = detect_hinge(curve_from({3.0, 0.0, 0.0}), 10.0);
    CHECK(h.keep_count == 1);
  }
  SUBCASE("single channel is never pruned") {
    HingeReport h = detect_hinge(curve_from({0.2}), 10.0);
    CHECK(h.keep_count == 1);
    CHECK_FALSE(h.drop_ratio.has_value());
  }
  SUBCASE("min_drop_ratio must exceed 1") {
    CHECK_THROWS_AS(detect_hinge(curve_from({2, 1}), 1.0), DomainError);
  }
  SUBCASE("agrees with the brute-force scan on random curves") {
    Rng rng(73);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 2 + rng.uniform_int(12);
      std::vector<double> v(static_cast<size_t>(n));
      for (double& x : v) x = std::pow(10.0, rng.uniform(-6, 1));
      std::sort(v.begin(), v.end(), std::greater<double>());
      const int brute = oracles::brute_force_hinge(v, 10.0, 1e-12);
      HingeReport h = detect_hinge(curve_from(v), 10.0);
      CHECK(h.keep_count == (brute == 0 ? n : brute));
    }
  }
}

TEST_CASE("hinge recovery on planted bimodal curves") {
  // Heads uniform in [1,10]; tails are heads scaled by 1e-4.
  Rng rng(79);
  int recovered = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const int n = 4 + rng.uniform_int(29);
    const int split = 1 + rng.uniform_int(n - 1);
    std::vector<double> v;
    for (int i = 0; i < split; ++i) v.push_back(rng.uniform(1.0, 10.0));
    for (int i = split; i < n; ++i) v.push_back(rng.uniform(1.0, 10.0) * 1e-4);
    std::sort(v.begin(), v.begin() + split, std::greater<double>());
    std::sort(v.begin() + split, v.end(), std::greater<double>());
    HingeReport h = detect_hinge(curve_from(v), 10.0);
    if (h.keep_count == split) ++recovered;
  }
  CHECK(recovered == trials);
}

TEST_CASE("flat random curves never produce a hinge") {
  Rng rng(83);
  for (int t = 0; t < 100; ++t) {
    const int n = 3 + rng.uniform_int(20);
    std::vector<double> v(static_cast<size_t>(n));
    for (double& x : v) x = rng.uniform(1.0, 9.0);  // max adjacent ratio < 10
    std::sort(v.begin(), v.end(), std::greater<double>());
    HingeReport h = detect_hinge(curve_from(v), 10.0);
    CHECK(h.keep_count == n);
  }
}

TEST_CASE("build_pruning_plan propagates keep-sets through skips") {
  Rng rng(89);
  NetworkGraph g = build_unet(8, 3, 512, 32, rng);
  std::vector<HingeReport> hinges;
  for (int id : prunable_layer_ids(g)) {
    HingeReport h;
    h.layer_id = id;
    h.method = HingeReport::Method::manual;
    h.keep_count = g.layer(id).out_ch;
    hinges.push_back(h);
  }
  // prune encoder layer 1 (out 16) down to 10 channels
  hinges[1].keep_count = 10;
  PruningPlan plan = build_pruning_plan(g, hinges);
  CHECK(plan.keep_out.at(1).size() == 10);
  // successor encoder layer 2 sees exactly those 10 channels
  CHECK(plan.keep_in.at(2) == plan.keep_out.at(1));
  // the skip-consuming decoder (layer 4 consumes {3, 1}) sees dec-3 keeps then
  // the 10 encoder channels offset by layer 3's original width (16)
  const std::vector<int>& in4 = plan.keep_in.at(4);
  REQUIRE(in4.size() == 16 + 10);
  for (int c = 0; c < 16; ++c) CHECK(in4[static_cast<size_t>(c)] == c);
  for (size_t i = 0; i < 10; ++i) {
    CHECK(in4[16 + i] == 16 + plan.keep_out.at(1)[i]);
  }

  SUBCASE("identity plan on every layer") {
    std::vector<HingeReport> full;
    for (int id : prunable_layer_ids(g)) {
      HingeReport h;
      h.layer_id = id;
      h.keep_count = g.layer(id).out_ch;
      full.push_back(h);
    }
    PruningPlan ip = build_pruning_plan(g, full);
    PruningPlan ref = identity_plan(g);
    CHECK(ip.keep_out == ref.keep_out);
    CHECK(ip.keep_in == ref.keep_in);
  }
  SUBCASE("pruning a decoder-internal layer leaves encoder weights untouched") {
    std::vector<HingeReport> dec_only;
    for (int id : prunable_layer_ids(g)) {
      HingeReport h;
      h.layer_id = id;
      h.keep_count = (id == 3) ? 4 : g.layer(id).out_ch;
      dec_only.push_back(h);
    }
    PruningPlan p = build_pruning_plan(g, dec_only);
    NetworkGraph pruned = apply_pruning(g, p);
    for (int id : {0, 1, 2}) {
      const Tensor& a = g.weight(id)->value;
      const Tensor& b = pruned.weight(id)->value;
      REQUIRE(a.shape() == b.shape());
      for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
  }
  SUBCASE("missing report is a plan error") {
    std::vector<HingeReport> partial(hinges.begin(), hinges.end() - 1);
    CHECK_THROWS_AS(build_pruning_plan(g, partial), PlanError);
  }
  SUBCASE("output-layer report is rejected") {
    std::vector<HingeReport> extra = hinges;
    HingeReport h;
    h.layer_id = g.output_layer_id();
    h.keep_count = 3;
    extra.push_back(h);
    CHECK_THROWS_AS(build_pruning_plan(g, extra), PlanError);
  }
}

TEST_CASE("apply_pruning identity plan is a bit-identical copy") {
  Rng rng(97);
  NetworkGraph g = build_unet(6, 2, 512, 16, rng);
  NetworkGraph pruned = apply_pruning(g, identity_plan(g));
  CHECK(structurally_equal(g, pruned));
  for (size_t i = 0; i < g.weights.size(); ++i) {
    const Tensor& a = g.weights[i]->value;
    const Tensor& b = pruned.weights[i]->value;
    REQUIRE(a.shape() == b.shape());
    for (int64_t j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
  }
  // idempotent under the identity plan
  NetworkGraph again = apply_pruning(pruned, identity_plan(pruned));
  CHECK(structurally_equal(pruned, again));
}

TEST_CASE("masked-equivalence: pruned forward equals masked forward") {
  Rng rng(101);
  int trials = 0;
  while (trials < 25) {
    const int depth = 2 + rng.uniform_int(2);
    const int base = 3 + rng.uniform_int(5);
    const int size = 16;
    Rng build_rng(rng.next_u64());
    NetworkGraph g = build_unet(base, depth, 64, size, build_rng);
    PruningPlan plan = random_plan(g, rng);
    NetworkGraph pruned = apply_pruning(g, plan);
    NetworkGraph masked = mask_pruned_channels(g, plan);
    Tensor x = random_input(3, size, rng);
    Tensor a = forward(pruned, x);
    Tensor b = forward(masked, x);
    REQUIRE(a.shape() == b.shape());
    double max_diff = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
      max_diff = std::max(max_diff, static_cast<double>(std::fabs(a[i] - b[i])));
    }
    CHECK(max_diff <= 1e-5);
    ++trials;
  }
}

TEST_CASE("pruned parameter counts follow the keep-set arithmetic") {
  Rng rng(103);
  NetworkGraph g = build_unet(8, 2, 512, 16, rng);
  PruningPlan plan = random_plan(g, rng);
  NetworkGraph pruned = apply_pruning(g, plan);
  MacReport before = count_macs(g, 16);
  MacReport after = count_macs(pruned, 16);
  for (size_t i = 0; i < pruned.layers.size(); ++i) {
    const LayerSpec& l = pruned.layers[i];
    const int64_t expect = static_cast<int64_t>(l.kernel) * l.kernel *
                           static_cast<int64_t>(plan.keep_in.at(l.id).size()) *
                           static_cast<int64_t>(plan.keep_out.at(l.id).size());
    CHECK(after.per_layer_params[i] == expect);
  }
  // strict decrease when any keep-set is proper
  bool any_proper = false;
  for (size_t i = 0; i < g.layers.size(); ++i) {
    if (plan.keep_out.at(g.layers[i].id).size() < static_cast<size_t>(g.layers[i].out_ch)) {
      any_proper = true;
    }
  }
  if (any_proper) {
    CHECK(after.total_macs < before.total_macs);
    int64_t params_before = 0, params_after = 0;
    for (int64_t p : before.per_layer_params) params_before += p;
    for (int64_t p : after.per_layer_params) params_after += p;
    CHECK(params_after < params_before);
  }
}

TEST_CASE("inconsistent plans are rejected naming the problem") {
  Rng rng(107);
  NetworkGraph g = build_unet(4, 2, 512, 16, rng);
  PruningPlan plan = identity_plan(g);
  SUBCASE("tampered input keep-set") {
    plan.keep_in.at(1).pop_back();
    CHECK_THROWS_AS(apply_pruning(g, plan), StructuralError);
  }
  SUBCASE("empty keep-set") {
    plan.keep_out.at(1).clear();
    CHECK_THROWS_AS(apply_pruning(g, plan), PlanError);
  }
  SUBCASE("out-of-range channel id") {
    plan.keep_out.at(1) = {0, 99};
    CHECK_THROWS_AS(apply_pruning(g, plan), PlanError);
  }
  SUBCASE("output layer must keep everything") {
    const int out_id = g.output_layer_id();
    plan.keep_out.at(out_id) = {0, 1};
    CHECK_THROWS_AS(apply_pruning(g, plan), PlanError);
  }
}

TEST_CASE("hinge never prunes the largest-gamma channel") {
  Rng rng(109);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + rng.uniform_int(10);
    std::vector<double> v(static_cast<size_t>(n));
    for (double& x : v) x = std::pow(10.0, rng.uniform(-8, 1));
    std::sort(v.begin(), v.end(), std::greater<double>());
    HingeReport h = detect_hinge(curve_from(v), 10.0);
    CHECK(h.keep_count >= 1);
    CHECK(h.keep_count <= n);
  }
}
