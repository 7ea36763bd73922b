#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "semdnn/semdnn.hpp"

using namespace semdnn;
namespace fs = std::filesystem;

namespace {
fs::path tmpdir() {
  static fs::path p = [] {
    fs::path d = fs::temp_directory_path() / "semdnn_core_tests";
    fs::create_directories(d);
    return d;
  }();
  return p;
}
}  // namespace

// ---------------------------------------------------------------------------
// rng
// ---------------------------------------------------------------------------

TEST_CASE("rng is deterministic and seed-sensitive") {
  Rng a(7), b(7), c(8);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
  bool differs = false;
  Rng a2(7);
  for (int i = 0; i < 100; ++i) differs |= (a2.next_u64() != c.next_u64());
  REQUIRE(differs);
}

TEST_CASE("rng uniform lies in (0,1] and gaussian moments match") {
  Rng r(123);
  double sum = 0, sumsq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u <= 1.0);
  }
  for (int i = 0; i < n; ++i) {
    const double g = r.gaussian();
    sum += g;
    sumsq += g * g;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.01);       // ~4 sigma of the MC error
  REQUIRE(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng substreams are independent of draw order") {
  const std::uint64_t s1 = Rng::derive(42, 0);
  const std::uint64_t s2 = Rng::derive(42, 1);
  REQUIRE(s1 != s2);
  Rng a(s1);
  a.next_u64();  // consuming stream 0 must not affect stream 1
  Rng b(s2), b2(Rng::derive(42, 1));
  REQUIRE(b.next_u64() == b2.next_u64());
}

// ---------------------------------------------------------------------------
// ternary quantization
// ---------------------------------------------------------------------------

TEST_CASE("thirds-of-range thresholds, hand-computed") {
  // range [-3, 3]: lo = -1, hi = 1
  std::vector<double> w{-3.0, -0.5, 0.0, 0.7, 3.0};
  const auto t = ternary_thresholds(w);
  REQUIRE(t.lo == Catch::Approx(-1.0));
  REQUIRE(t.hi == Catch::Approx(1.0));
  REQUIRE(ternary_apply(-3.0, t) == -1);
  REQUIRE(ternary_apply(-0.5, t) == 0);
  REQUIRE(ternary_apply(0.7, t) == 0);
  REQUIRE(ternary_apply(3.0, t) == 1);
  // boundary values are inclusive into the zero band
  REQUIRE(ternary_apply(-1.0, t) == 0);
  REQUIRE(ternary_apply(1.0, t) == 0);
}

TEST_CASE("asymmetric range thresholds") {
  // [0, 3]: lo = 1, hi = 2 — everything below 1 maps to -1? No: to -1 only
  // strictly below lo. Here the minimum 0 < lo so it quantizes to -1 even
  // though all inputs are nonnegative; the rule is range-based, not sign-based.
  std::vector<double> w{0.0, 1.5, 3.0};
  const auto t = ternary_thresholds(w);
  REQUIRE(t.lo == Catch::Approx(1.0));
  REQUIRE(t.hi == Catch::Approx(2.0));
  REQUIRE(ternary_apply(0.0, t) == -1);
  REQUIRE(ternary_apply(1.5, t) == 0);
  REQUIRE(ternary_apply(3.0, t) == 1);
}

TEST_CASE("quantization rejects bad input") {
  REQUIRE_THROWS_AS(ternary_thresholds(std::vector<double>{}), std::invalid_argument);
  REQUIRE_THROWS_AS(ternary_thresholds(std::vector<double>{1.0, std::nan("")}),
                    std::invalid_argument);
}

TEST_CASE("property: range, monotonicity, anti-symmetry over random tensors") {
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(64));
    Tensor w({n});
    for (auto& v : w.values) v = rng.gaussian(rng.uniform(-1, 1), rng.uniform() * 2.0);
    TernaryTensor q = ternary_quantize(w);
    // range
    for (auto v : q.values) REQUIRE((v >= -1 && v <= 1));
    // anti-symmetry
    Tensor neg = w;
    for (auto& v : neg.values) v = -v;
    TernaryTensor qn = ternary_quantize(neg);
    for (size_t i = 0; i < q.values.size(); ++i)
      REQUIRE(static_cast<int>(qn.values[i]) == -static_cast<int>(q.values[i]));
    // monotonicity
    for (size_t i = 0; i < q.values.size(); ++i)
      for (size_t j = 0; j < q.values.size(); ++j)
        if (w.values[i] <= w.values[j]) REQUIRE(q.values[i] <= q.values[j]);
  }
}

TEST_CASE("group thresholds equal thresholds of the concatenation") {
  Rng rng(5);
  Tensor a({10}), b({7});
  for (auto& v : a.values) v = rng.gaussian();
  for (auto& v : b.values) v = rng.gaussian();
  std::vector<const Tensor*> grp{&a, &b};
  const auto tg = ternary_thresholds_group(grp);
  std::vector<double> cat = a.values;
  cat.insert(cat.end(), b.values.begin(), b.values.end());
  const auto tc = ternary_thresholds(cat);
  REQUIRE(tg.lo == Catch::Approx(tc.lo));
  REQUIRE(tg.hi == Catch::Approx(tc.hi));
}

// ---------------------------------------------------------------------------
// model structure
// ---------------------------------------------------------------------------

TEST_CASE("default spec matches the published architecture summary") {
  const ModelSpec s = ModelSpec::mnist_default();
  REQUIRE(s.blocks.size() == 11);
  REQUIRE(s.n_exits() == 11);
  // ~88k parameters
  REQUIRE(s.param_count() > 86000);
  REQUIRE(s.param_count() < 90000);
  // ~2k values stored across all exits' class centers
  long long cam_values = 0;
  for (auto& b : s.blocks)
    if (b.exit_point) cam_values += static_cast<long long>(b.out_c) * s.n_classes;
  REQUIRE(cam_values > 1800);
  REQUIRE(cam_values < 2500);
}

TEST_CASE("im2col/conv against a brute-force loop nest") {
  Rng rng(11);
  const int in_c = 3, h = 7, w = 6, k = 3, stride = 2, pad = 1, out_c = 4;
  Tensor x({in_c, h, w});
  for (auto& v : x.values) v = rng.gaussian();
  Tensor wt({out_c, in_c, k, k});
  for (auto& v : wt.values) v = rng.gaussian();

  MatrixXd col;
  im2col(x.data(), in_c, h, w, k, stride, pad, col);
  MatrixXd wm = weight_matrix(wt);
  MatrixXd z = wm.transpose() * col;

  const int oh = conv_out_dim(h, k, stride, pad);
  const int ow = conv_out_dim(w, k, stride, pad);
  for (int o = 0; o < out_c; ++o)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0;
        for (int c = 0; c < in_c; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride + ky - pad;
              const int ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += x.values[(static_cast<long long>(c) * h + iy) * w + ix] *
                     wt.values[((static_cast<long long>(o) * in_c + c) * k + ky) * k + kx];
            }
        REQUIRE(z(o, oy * ow + ox) == Catch::Approx(acc).margin(1e-12));
      }
}

TEST_CASE("gap computes channel means and rejects empty maps") {
  Tensor t({2, 2, 2}, {1, 2, 3, 4, -1, 1, 0, 0});
  Tensor g = gap(t);
  REQUIRE(g.values[0] == Catch::Approx(2.5));
  REQUIRE(g.values[1] == Catch::Approx(0.0));
  REQUIRE_THROWS_AS(gap(Tensor({3, 0, 5})), std::invalid_argument);
}

TEST_CASE("block quantization groups convs and shortcut together") {
  Rng rng(3);
  Model m = init_model(ModelSpec::mnist_default(), rng);
  QuantModel q = quantize_model(m);
  // block 4 has a shortcut (stride 2 + channel change)
  const auto& b = m.blocks[4];
  const auto& qb = q.blocks[4];
  REQUIRE(qb.shortcut.has_value());
  std::vector<const Tensor*> grp;
  for (auto& c : b.convs) grp.push_back(&c.w);
  grp.push_back(&b.shortcut->w);
  const auto t = ternary_thresholds_group(grp);
  REQUIRE(qb.thresholds.lo == Catch::Approx(t.lo));
  REQUIRE(qb.thresholds.hi == Catch::Approx(t.hi));
  // and the payload is the elementwise application of those shared thresholds
  for (size_t i = 0; i < b.convs[0].w.values.size(); ++i)
    REQUIRE(qb.convs[0].w.values[i] == ternary_apply(b.convs[0].w.values[i], t));
}

TEST_CASE("deterministic init: same seed, same model") {
  Rng r1(77), r2(77);
  Model a = init_model(ModelSpec::mnist_default(), r1);
  Model b = init_model(ModelSpec::mnist_default(), r2);
  REQUIRE(a.stem.w.values == b.stem.w.values);
  REQUIRE(a.fc.scale == b.fc.scale);
  REQUIRE(a.blocks[6].convs[1].w.values == b.blocks[6].convs[1].w.values);
}

// ---------------------------------------------------------------------------
// IDX and synthetic data
// ---------------------------------------------------------------------------

TEST_CASE("IDX round trip and error handling") {
  Dataset d = synth_digits(32, 4);
  const auto ip = (tmpdir() / "t-images-idx3-ubyte").string();
  const auto lp = (tmpdir() / "t-labels-idx1-ubyte").string();
  save_idx(d, ip, lp);
  Dataset r = load_mnist(ip, lp);
  REQUIRE(r.size() == d.size());
  REQUIRE(r.labels == d.labels);
  for (size_t i = 0; i < d.size(); ++i)
    for (size_t p = 0; p < d.images[i].size(); ++p)
      REQUIRE(std::abs(r.images[i][p] - d.images[i][p]) <= 0.5 / 255.0 + 1e-12);

  // truncated image payload
  {
    std::ifstream in(ip, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    bytes.resize(bytes.size() - 100);
    const auto tp = (tmpdir() / "trunc-images-idx3-ubyte").string();
    std::ofstream(tp, std::ios::binary).write(bytes.data(), bytes.size());
    REQUIRE_THROWS_AS(load_mnist(tp, lp), FormatError);
  }
  // wrong magic
  {
    const auto bp = (tmpdir() / "bad-images-idx3-ubyte").string();
    std::ofstream(bp, std::ios::binary).write("\x00\x00\x08\x04garbage", 11);
    REQUIRE_THROWS_AS(load_mnist(bp, lp), FormatError);
  }
}

TEST_CASE("synthetic digits are balanced-ish, deterministic, in range") {
  Dataset a = synth_digits(500, 9);
  Dataset b = synth_digits(500, 9);
  REQUIRE(a.labels == b.labels);
  REQUIRE(a.images[17] == b.images[17]);
  std::vector<int> counts(10, 0);
  for (int l : a.labels) {
    REQUIRE(l >= 0);
    REQUIRE(l <= 9);
    counts[l]++;
  }
  for (int c : counts) REQUIRE(c > 20);
  for (double v : a.images[0]) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

TEST_CASE("model container round trip") {
  Rng rng(21);
  ModelFile mf;
  mf.model = init_model(ModelSpec::mnist_default(), rng);
  mf.quant = quantize_model(mf.model);
  mf.seed = 21;
  mf.config_hash = "deadbeefdeadbeef";
  const auto p = (tmpdir() / "model.txt").string();
  save_model(mf, p);
  ModelFile r = load_model(p);
  REQUIRE(r.seed == 21);
  REQUIRE(r.config_hash == "deadbeefdeadbeef");
  // ternary payload bit-exact
  REQUIRE(r.quant.stem.convs[0].w.values == mf.quant.stem.convs[0].w.values);
  REQUIRE(r.quant.blocks[10].convs[1].w.values == mf.quant.blocks[10].convs[1].w.values);
  // real metadata within 1e-9 (printed with max_digits10, so exact here)
  REQUIRE(r.model.fc.scale == Catch::Approx(mf.model.fc.scale).epsilon(1e-9));
  REQUIRE(r.model.blocks[3].convs[0].w.values[5] ==
          Catch::Approx(mf.model.blocks[3].convs[0].w.values[5]).epsilon(1e-9));
  REQUIRE(r.quant.blocks[2].thresholds.lo ==
          Catch::Approx(mf.quant.blocks[2].thresholds.lo).epsilon(1e-9));
}

TEST_CASE("version and shape tampering fail cleanly") {
  Rng rng(22);
  ModelFile mf;
  mf.model = init_model(ModelSpec::mnist_default(), rng);
  mf.quant = quantize_model(mf.model);
  const auto p = (tmpdir() / "tamper.txt").string();
  save_model(mf, p);

  auto rewrite = [&](const std::string& from, const std::string& to) {
    std::ifstream in(p);
    std::string all((std::istreambuf_iterator<char>(in)), {});
    const auto pos = all.find(from);
    REQUIRE(pos != std::string::npos);
    all.replace(pos, from.size(), to);
    const auto q = (tmpdir() / "tampered.txt").string();
    std::ofstream(q) << all;
    return q;
  };
  // version bump
  REQUIRE_THROWS_WITH(load_model(rewrite("semdnn-model 1", "semdnn-model 2")),
                      Catch::Matchers::ContainsSubstring("version mismatch"));
  // shape header corruption
  REQUIRE_THROWS_AS(load_model(rewrite("tensor fp:stem 4 16 1 3 3", "tensor fp:stem 4 16 1 3 4")),
                    FormatError);
}

TEST_CASE("center bank round trip preserves every stored value") {
  Dataset d = synth_digits(120, 31);
  Rng rng(31);
  Model m = init_model(ModelSpec::mnist_default(), rng);
  QuantModel q = quantize_model(m);
  MappedNetwork net = map_software(q);
  PipelineOptions opt{8, 0, false, 512};
  CenterBank bank = compute_semantic_centers(d, net, opt);
  long long vals = 0;
  for (auto& c : bank.centers) vals += c.size();
  REQUIRE(vals > 1800);  // the ~2k stored values
  REQUIRE(vals < 2500);
  const auto p = (tmpdir() / "centers.txt").string();
  save_centers({bank, 31, "cafe"}, p);
  CentersFile r = load_centers(p);
  REQUIRE(r.bank.n_exits() == bank.n_exits());
  for (int e = 0; e < bank.n_exits(); ++e) {
    REQUIRE(r.bank.centers[e].values == bank.centers[e].values);
    REQUIRE((r.bank.exact[e] - bank.exact[e]).cwiseAbs().maxCoeff() == 0.0);
  }
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

TEST_CASE("config defaults, overrides and hash stability") {
  RunConfig def;
  const std::string h1 = config_hash(def);
  REQUIRE(h1 == config_hash(RunConfig{}));

  nlohmann::json j;
  j["train"]["epochs"] = 3;
  j["device"]["sigma_write"] = 0.2;
  RunConfig c = config_from_json(j);
  REQUIRE(c.train.epochs == 3);
  REQUIRE(c.device.sigma_write == Catch::Approx(0.2));
  REQUIRE(c.train.lr == Catch::Approx(def.train.lr));  // untouched keys keep defaults
  REQUIRE(config_hash(c) != h1);
}

TEST_CASE("device stats validation") {
  DeviceStats d;
  REQUIRE_NOTHROW(d.validate());
  d.g_off = 200.0;
  REQUIRE_THROWS_AS(d.validate(), std::invalid_argument);
  d = DeviceStats{};
  d.sigma_write = -0.1;
  REQUIRE_THROWS_AS(d.validate(), std::invalid_argument);
}
