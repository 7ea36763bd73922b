#include <catch_amalgamated.hpp>

#include "semdnn/semdnn.hpp"

using namespace semdnn;

// ---------------------------------------------------------------------------
// device noise statistics (Monte-Carlo oracles)
// ---------------------------------------------------------------------------

TEST_CASE("write noise is multiplicative with the configured relative sigma") {
  DeviceStats st;
  st.sigma_write = 0.15;
  Rng rng(1);
  const double target = 150.0;
  const int n = 200000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    const double g = sample_programmed(target, st, rng);
    REQUIRE(g >= 0.0);
    sum += g;
    sumsq += g * g;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sumsq / n - mean * mean);
  REQUIRE(mean == Catch::Approx(target).epsilon(0.005));
  REQUIRE(sd / target == Catch::Approx(0.15).epsilon(0.02));
  REQUIRE_THROWS_AS(sample_programmed(-1.0, st, rng), std::invalid_argument);
}

TEST_CASE("read noise std follows the linear mean-conductance model") {
  DeviceStats st;  // read_a=0.03, read_b=0.5
  Rng rng(2);
  for (double g : {10.0, 80.0, 150.0}) {
    const int n = 200000;
    double sum = 0, sumsq = 0;
    for (int i = 0; i < n; ++i) {
      const double v = sample_read(g, st, rng);
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sumsq / n - mean * mean);
    REQUIRE(mean == Catch::Approx(g).margin(3 * st.sigma_read(g) / std::sqrt(double(n)) + 1e-2));
    REQUIRE(sd == Catch::Approx(st.sigma_read(g)).epsilon(0.02));
  }
}

TEST_CASE("fit_read_model recovers a linear law and rejects degenerate input") {
  std::vector<std::pair<double, double>> pts;
  for (double g = 10; g <= 150; g += 20) pts.emplace_back(g, 0.03 * g + 0.5);
  auto [a, b] = fit_read_model(pts);
  REQUIRE(a == Catch::Approx(0.03).epsilon(1e-9));
  REQUIRE(b == Catch::Approx(0.5).epsilon(1e-9));

  // noisy measurements, generated then re-fit (round trip within MC error)
  Rng rng(3);
  std::vector<std::pair<double, double>> noisy;
  DeviceStats st;
  for (double g = 10; g <= 150; g += 10) {
    double sum = 0, sumsq = 0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      const double v = sample_read(g, st, rng);
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / n;
    noisy.emplace_back(mean, std::sqrt(sumsq / n - mean * mean));
  }
  auto [an, bn] = fit_read_model(noisy);
  REQUIRE(an == Catch::Approx(0.03).epsilon(0.03));
  REQUIRE(bn == Catch::Approx(0.5).margin(0.1));

  REQUIRE_THROWS(fit_read_model({{50.0, 1.0}, {50.0, 2.0}}));
  REQUIRE_THROWS_AS(fit_read_model({{50.0, 1.0}}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// crossbar
// ---------------------------------------------------------------------------

TEST_CASE("noise-free differential programming gives exact ternary weights") {
  Rng rng(4);
  TernaryTensor w({5, 4});
  for (auto& v : w.values) v = static_cast<std::int8_t>(static_cast<int>(rng.below(3)) - 1);
  Crossbar xb = Crossbar::program(w, DeviceStats{}, rng, false);
  const MatrixXd e = xb.effective();
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) {
      // IEEE: x/x == 1.0 exactly, so the entries are exactly -1, 0, +1
      REQUIRE(e(i, j) == static_cast<double>(w.values[i * 4 + j]));
    }
}

TEST_CASE("noise-free mvm equals the integer product on random ternary matrices") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const int rows = 1 + static_cast<int>(rng.below(64));
    const int cols = 1 + static_cast<int>(rng.below(64));
    TernaryTensor w({rows, cols});
    for (auto& v : w.values) v = static_cast<std::int8_t>(static_cast<int>(rng.below(3)) - 1);
    Crossbar xb = Crossbar::program(w, DeviceStats{}, rng, false);
    VectorXd x(rows);
    for (int i = 0; i < rows; ++i) x[i] = static_cast<double>(static_cast<int>(rng.below(17)) - 8);
    const VectorXd out = xb.mvm(x);
    for (int j = 0; j < cols; ++j) {
      long long acc = 0;
      for (int i = 0; i < rows; ++i)
        acc += static_cast<long long>(x[i]) * w.values[static_cast<long long>(i) * cols + j];
      REQUIRE(out[j] == static_cast<double>(acc));  // exact, no tolerance
    }
  }
}

TEST_CASE("mvm rejects mismatched input length") {
  Rng rng(6);
  TernaryTensor w({3, 2}, {1, 0, -1, 1, 0, 0});
  Crossbar xb = Crossbar::program(w, DeviceStats{}, rng, false);
  REQUIRE_THROWS_AS(xb.mvm(VectorXd::Zero(4)), std::invalid_argument);
}

TEST_CASE("polarity swap negates the effective weights") {
  Rng rng(7);
  TernaryTensor w({4, 3});
  for (auto& v : w.values) v = static_cast<std::int8_t>(static_cast<int>(rng.below(3)) - 1);
  Crossbar xb = Crossbar::program(w, DeviceStats{}, rng, true);
  const MatrixXd before = xb.effective();
  xb.swap_polarity();
  REQUIRE((xb.effective() + before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear programming maps normalized weights proportionally") {
  Rng rng(8);
  MatrixXd w(2, 2);
  w << 1.0, -0.5, 0.0, 0.25;
  Crossbar xb = Crossbar::program_linear(w, DeviceStats{}, rng, false);
  const MatrixXd e = xb.effective();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) REQUIRE(e(i, j) == Catch::Approx(w(i, j)).margin(1e-12));
}

TEST_CASE("programmed state is frozen: repeated noise-free reads identical") {
  Rng rng(9);
  TernaryTensor w({6, 6});
  for (auto& v : w.values) v = static_cast<std::int8_t>(static_cast<int>(rng.below(3)) - 1);
  Crossbar xb = Crossbar::program(w, DeviceStats{}, rng, true);
  const MatrixXd a = xb.effective(), b = xb.effective();
  REQUIRE((a - b).cwiseAbs().maxCoeff() == 0.0);
  // read noise, by contrast, is fresh per read
  Rng rd(10);
  const MatrixXd r1 = xb.effective_read(rd), r2 = xb.effective_read(rd);
  REQUIRE((r1 - r2).cwiseAbs().maxCoeff() > 0.0);
}

// ---------------------------------------------------------------------------
// mapped pipeline
// ---------------------------------------------------------------------------

TEST_CASE("activation quantization is scale invariant and passes zero through") {
  Tensor t({4}, {0.1, -0.7, 0.33, 0.02});
  Tensor t2 = t;
  for (auto& v : t2.values) v *= 37.0;
  quantize_activations(t, 8);
  quantize_activations(t2, 8);
  for (int i = 0; i < 4; ++i) REQUIRE(t2.values[i] == Catch::Approx(37.0 * t.values[i]));
  Tensor z({3});
  quantize_activations(z, 8);
  for (double v : z.values) REQUIRE(v == 0.0);
  // bits=0 disables
  Tensor u({2}, {0.123456, -0.9});
  Tensor u0 = u;
  quantize_activations(u, 0);
  REQUIRE(u.values == u0.values);
}

TEST_CASE("software and noise-free crossbar backends are bit-identical") {
  Rng rng(12);
  Model m = init_model(ModelSpec::mnist_default(), rng);
  QuantModel q = quantize_model(m);
  MappedNetwork sw = map_software(q);
  Rng prog(13);
  DeviceStats st;
  st.sigma_write = 0.0;
  MappedNetwork xb = map_crossbar(q, st, prog, false);
  Dataset d = synth_digits(5, 14);
  PipelineOptions opt{8, 0, false, 512};
  for (size_t i = 0; i < d.size(); ++i) {
    auto ma = forward_features(d.image_tensor(i), sw, opt);
    auto mb = forward_features(d.image_tensor(i), xb, opt);
    for (size_t b = 0; b < ma.size(); ++b) REQUIRE(ma[b].values == mb[b].values);
    VectorXd la = head_logits(ma.back(), sw, opt);
    VectorXd lb = head_logits(mb.back(), xb, opt);
    REQUIRE((la - lb).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("op counting matches the analytic profile on a real forward pass") {
  Rng rng(15);
  const ModelSpec spec = ModelSpec::mnist_default();
  Model m = init_model(spec, rng);
  QuantModel q = quantize_model(m);
  MappedNetwork net = map_software(q);
  PipelineOptions opt{8, 0, false, 512};
  const OpsProfile prof = ops_profile(spec, opt.tile);

  OpCounts ops;
  auto maps = forward_features(synth_digits(1, 16).image_tensor(0), net, opt, nullptr, &ops);
  OpCounts expect = prof.stem;
  for (auto& b : prof.blocks) expect += b;
  REQUIRE(ops.cim_mac == expect.cim_mac);
  REQUIRE(ops.cim_adc == expect.cim_adc);
  REQUIRE(ops.digital == expect.digital);
}

TEST_CASE("ADC quantizes to the configured resolution and counts saturations") {
  MappedConv c;
  c.in_c = 1;
  c.out_c = 1;
  c.k = 1;
  c.w = MatrixXd::Ones(1, 1);
  c.scale = 1.0;
  c.adc_range = 1.0;
  PipelineOptions opt{0, 4, false, 512};  // 4-bit: 7 positive levels
  Tensor x({1, 1, 3}, {0.5, 2.0, -0.04});
  OpCounts ops;
  Tensor y = conv_apply(x, c, opt, nullptr, &ops);
  const double step = 1.0 / 7.0;
  REQUIRE(y.values[0] == Catch::Approx(std::round(0.5 / step) * step));
  REQUIRE(y.values[1] == Catch::Approx(1.0));  // clipped to full scale
  REQUIRE(ops.adc_saturations == 1);
  REQUIRE(y.values[2] == Catch::Approx(std::round(-0.04 / step) * step).margin(1e-12));
}

TEST_CASE("adc_bits=0 or uncalibrated range means ideal readout") {
  MappedConv c;
  c.in_c = 1;
  c.out_c = 1;
  c.k = 1;
  c.w = MatrixXd::Ones(1, 1);
  c.scale = 1.0;
  Tensor x({1, 1, 2}, {0.123456789, -7.7});
  PipelineOptions ideal{0, 0, false, 512};
  REQUIRE(conv_apply(x, c, ideal).values == x.values);
  PipelineOptions uncal{0, 14, false, 512};  // bits set but range 0
  REQUIRE(conv_apply(x, c, uncal).values == x.values);
}

// ---------------------------------------------------------------------------
// CAM search
// ---------------------------------------------------------------------------

namespace {
CenterBank toy_bank(Rng& rng, int n_classes, int dim) {
  CenterBank bank;
  bank.n_classes = n_classes;
  bank.ternary = true;
  bank.exit_blocks = {0};
  TernaryTensor t({n_classes, dim});
  MatrixXd exact(dim, n_classes);
  for (int c = 0; c < n_classes; ++c)
    for (int d = 0; d < dim; ++d) {
      const int v = static_cast<int>(rng.below(3)) - 1;
      t.values[static_cast<long long>(c) * dim + d] = static_cast<std::int8_t>(v);
      exact(d, c) = v;
    }
  bank.centers.push_back(t);
  bank.exact.push_back(exact);
  return bank;
}
}  // namespace

TEST_CASE("noise-free CAM argmax equals the direct cosine argmax") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 4 + static_cast<int>(rng.below(28));
    CenterBank bank = toy_bank(rng, 10, dim);
    VectorXd q(dim);
    for (int d = 0; d < dim; ++d) q[d] = rng.gaussian();
    PipelineOptions opt{0, 0, false, 512};
    SearchResult r = search(q, bank, 0, opt);
    // oracle: cosine similarity computed independently
    int best = -1;
    double bestv = -2;
    for (int c = 0; c < 10; ++c) {
      const double cn = bank.exact[0].col(c).norm();
      const double s = cn == 0.0 ? 0.0 : q.dot(bank.exact[0].col(c)) / (q.norm() * cn);
      REQUIRE(r.similarities[c] == Catch::Approx(s).margin(1e-12));
      REQUIRE(std::abs(r.similarities[c]) <= 1.0 + 1e-12);
      if (s > bestv) {
        bestv = s;
        best = c;
      }
    }
    REQUIRE(r.argmax == best);
  }
}

TEST_CASE("all-zero query is rejected; zero center is flagged with similarity 0") {
  Rng rng(18);
  CenterBank bank = toy_bank(rng, 3, 8);
  PipelineOptions opt{0, 0, false, 512};
  REQUIRE_THROWS_AS(search(VectorXd::Zero(8), bank, 0, opt), std::invalid_argument);

  for (int d = 0; d < 8; ++d) {
    bank.centers[0].values[static_cast<long long>(1) * 8 + d] = 0;
    bank.exact[0](d, 1) = 0.0;
  }
  VectorXd q = VectorXd::Ones(8);
  SearchResult r = search(q, bank, 0, opt);
  REQUIRE(r.zero_center_seen);
  REQUIRE(r.similarities[1] == 0.0);
}

TEST_CASE("CAM programming freezes write noise; search ops are counted") {
  Rng rng(19);
  CenterBank bank = toy_bank(rng, 10, 16);
  DeviceStats st;
  Rng prog(20);
  CenterBank noisy = program_bank(bank, st, prog, true);
  REQUIRE(noisy.cams.size() == 1);
  // ternary content preserved in the bank description
  REQUIRE(noisy.centers[0].values == bank.centers[0].values);
  // stored (frozen) effective centers differ from exact ternary under noise
  REQUIRE((noisy.exact[0] - bank.exact[0]).cwiseAbs().maxCoeff() > 0.0);

  PipelineOptions opt{8, 0, false, 512};
  OpCounts ops;
  search(VectorXd::Ones(16), noisy, 0, opt, nullptr, &ops);
  REQUIRE(ops.cam_compare == 160);  // n_classes * dim
  REQUIRE(ops.cam_adc == 10);
  REQUIRE(ops.sort == 10);
}

TEST_CASE("semantic centers quantize each class-mean vector independently") {
  Dataset d = synth_digits(80, 23);
  Rng rng(23);
  Model m = init_model(ModelSpec::mnist_default(), rng);
  MappedNetwork net = map_software(quantize_model(m));
  PipelineOptions opt{8, 0, false, 512};
  auto means = class_mean_gap(d, net, opt);
  CenterBank bank = compute_semantic_centers(d, net, opt);
  for (int e = 0; e < bank.n_exits(); ++e) {
    for (int c = 0; c < bank.n_classes; ++c) {
      Tensor mv({static_cast<int>(means[e].rows())});
      for (int i = 0; i < means[e].rows(); ++i) mv.values[i] = means[e](i, c);
      TernaryTensor q = ternary_quantize(mv);
      for (int i = 0; i < means[e].rows(); ++i)
        REQUIRE(bank.exact[e](i, c) == static_cast<double>(q.values[i]));
    }
  }
}

TEST_CASE("class_mean_gap rejects a dataset missing a class") {
  Dataset d = synth_digits(200, 24);
  Dataset only;
  only.h = d.h;
  only.w = d.w;
  for (size_t i = 0; i < d.size(); ++i)
    if (d.labels[i] != 7) {
      only.images.push_back(d.images[i]);
      only.labels.push_back(d.labels[i]);
    }
  Rng rng(24);
  MappedNetwork net = map_software(quantize_model(init_model(ModelSpec::mnist_default(), rng)));
  PipelineOptions opt{8, 0, false, 512};
  REQUIRE_THROWS(class_mean_gap(only, net, opt));
}
