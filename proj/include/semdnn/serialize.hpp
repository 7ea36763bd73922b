#pragma once
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "semdnn/cam.hpp"
#include "semdnn/mnist.hpp"  // FormatError
#include "semdnn/model.hpp"

namespace semdnn {

// Versioned human-auditable text containers: a header with shapes,
// quantization thresholds and scales, then flat arrays. Ternary payloads are
// stored as integers; reals round-trip exactly via max_digits10.

constexpr const char* kModelMagic = "semdnn-model";
constexpr const char* kCentersMagic = "semdnn-centers";
constexpr int kFormatVersion = 1;

namespace detail {

inline void write_reals(std::ostream& out, const std::vector<double>& v) {
  out << std::setprecision(17);
  for (size_t i = 0; i < v.size(); ++i) out << v[i] << ((i + 1) % 8 == 0 ? '\n' : ' ');
  if (v.size() % 8) out << '\n';
}

inline void expect(std::istream& in, const std::string& tok, const std::string& ctx) {
  std::string s;
  if (!(in >> s) || s != tok)
    throw FormatError(ctx + ": expected '" + tok + "', found '" + s + "'");
}

inline void check_version(std::istream& in, const std::string& magic, const std::string& path) {
  std::string m;
  int v = -1;
  if (!(in >> m >> v)) throw FormatError(path + ": missing header");
  if (m != magic) throw FormatError(path + ": bad magic '" + m + "', expected '" + magic + "'");
  if (v != kFormatVersion)
    throw FormatError(path + ": version mismatch, expected " + std::to_string(kFormatVersion) +
                      ", found " + std::to_string(v));
}

inline void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  out << "tensor " << name << " " << t.shape.size();
  for (int d : t.shape) out << " " << d;
  out << "\n";
  write_reals(out, t.values);
}

inline Tensor read_tensor(std::istream& in, const std::string& name, const std::string& path) {
  expect(in, "tensor", path);
  expect(in, name, path);
  size_t nd;
  in >> nd;
  std::vector<int> shape(nd);
  for (auto& d : shape) in >> d;
  const long long n = shape_size(shape);
  std::vector<double> vals(n);
  for (auto& v : vals)
    if (!(in >> v)) throw FormatError(path + ": truncated tensor " + name);
  return Tensor(std::move(shape), std::move(vals));
}

inline void write_ternary(std::ostream& out, const std::string& name, const TernaryTensor& t) {
  out << "tern " << name << " " << t.shape.size();
  for (int d : t.shape) out << " " << d;
  out << "\n";
  for (size_t i = 0; i < t.values.size(); ++i)
    out << static_cast<int>(t.values[i]) << ((i + 1) % 32 == 0 ? '\n' : ' ');
  if (t.values.size() % 32) out << '\n';
}

inline TernaryTensor read_ternary(std::istream& in, const std::string& name,
                                  const std::string& path) {
  expect(in, "tern", path);
  expect(in, name, path);
  size_t nd;
  in >> nd;
  std::vector<int> shape(nd);
  for (auto& d : shape) in >> d;
  const long long n = shape_size(shape);
  if (n < 0) throw FormatError(path + ": bad shape for " + name);
  std::vector<std::int8_t> vals(n);
  for (auto& v : vals) {
    int x;
    if (!(in >> x)) throw FormatError(path + ": truncated ternary " + name);
    if (x < -1 || x > 1) throw FormatError(path + ": non-ternary value in " + name);
    v = static_cast<std::int8_t>(x);
  }
  return TernaryTensor(std::move(shape), std::move(vals));
}

inline void write_spec(std::ostream& out, const ModelSpec& s) {
  out << "spec " << s.in_h << " " << s.in_w << " " << s.in_c << " " << s.stem_c << " "
      << s.n_classes << " " << s.blocks.size() << "\n";
  for (auto& b : s.blocks)
    out << "block " << b.out_c << " " << b.stride << " " << b.convs << " "
        << (b.exit_point ? 1 : 0) << "\n";
}

inline ModelSpec read_spec(std::istream& in, const std::string& path) {
  expect(in, "spec", path);
  ModelSpec s;
  size_t nb;
  in >> s.in_h >> s.in_w >> s.in_c >> s.stem_c >> s.n_classes >> nb;
  for (size_t i = 0; i < nb; ++i) {
    expect(in, "block", path);
    BlockSpec b;
    int ex;
    in >> b.out_c >> b.stride >> b.convs >> ex;
    b.exit_point = ex != 0;
    s.blocks.push_back(b);
  }
  s.validate();
  return s;
}

}  // namespace detail

struct ModelFile {
  Model model;       // full-precision weights + scales
  QuantModel quant;  // ternary payload, thresholds, scales
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline void save_model(const ModelFile& mf, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError(path + ": cannot open for write");
  out << kModelMagic << " " << kFormatVersion << "\n";
  out << "seed " << mf.seed << " confighash " << mf.config_hash << "\n";
  detail::write_spec(out, mf.model.spec);

  auto dump_fp = [&](const std::string& name, const ConvParam& c) {
    detail::write_tensor(out, "fp:" + name, c.w);
    out << "scalar scale:" << name << " " << std::setprecision(17) << c.scale << "\n";
  };
  auto dump_q = [&](const std::string& name, const QuantConv& c) {
    detail::write_ternary(out, "q:" + name, c.w);
  };

  dump_fp("stem", mf.model.stem);
  for (size_t i = 0; i < mf.model.blocks.size(); ++i) {
    const auto& b = mf.model.blocks[i];
    for (size_t j = 0; j < b.convs.size(); ++j)
      dump_fp("b" + std::to_string(i) + "c" + std::to_string(j), b.convs[j]);
    if (b.shortcut) dump_fp("b" + std::to_string(i) + "sc", *b.shortcut);
  }
  dump_fp("fc", mf.model.fc);

  out << "thresholds stem " << std::setprecision(17) << mf.quant.stem.thresholds.lo << " "
      << mf.quant.stem.thresholds.hi << "\n";
  dump_q("stem", mf.quant.stem.convs[0]);
  for (size_t i = 0; i < mf.quant.blocks.size(); ++i) {
    const auto& b = mf.quant.blocks[i];
    out << "thresholds b" << i << " " << b.thresholds.lo << " " << b.thresholds.hi << "\n";
    for (size_t j = 0; j < b.convs.size(); ++j)
      dump_q("b" + std::to_string(i) + "c" + std::to_string(j), b.convs[j]);
    if (b.shortcut) dump_q("b" + std::to_string(i) + "sc", *b.shortcut);
  }
  out << "thresholds fc " << mf.quant.fc.thresholds.lo << " " << mf.quant.fc.thresholds.hi
      << "\n";
  dump_q("fc", mf.quant.fc.convs[0]);
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open");
  detail::check_version(in, kModelMagic, path);
  ModelFile mf;
  detail::expect(in, "seed", path);
  in >> mf.seed;
  detail::expect(in, "confighash", path);
  in >> mf.config_hash;
  const ModelSpec spec = detail::read_spec(in, path);
  mf.model.spec = spec;
  mf.quant.spec = spec;

  auto read_fp = [&](const std::string& name, int stride, int pad) {
    ConvParam c;
    c.w = detail::read_tensor(in, "fp:" + name, path);
    detail::expect(in, "scalar", path);
    detail::expect(in, "scale:" + name, path);
    in >> c.scale;
    c.stride = stride;
    c.pad = pad;
    return c;
  };
  mf.model.stem = read_fp("stem", 1, 1);
  for (size_t i = 0; i < spec.blocks.size(); ++i) {
    const BlockSpec& bs = spec.blocks[i];
    const int ic = spec.block_in_c(static_cast<int>(i));
    ResBlock b;
    for (int j = 0; j < bs.convs; ++j)
      b.convs.push_back(
          read_fp("b" + std::to_string(i) + "c" + std::to_string(j), j == 0 ? bs.stride : 1, 1));
    if (ic != bs.out_c || bs.stride != 1)
      b.shortcut = read_fp("b" + std::to_string(i) + "sc", bs.stride, 0);
    mf.model.blocks.push_back(std::move(b));
  }
  mf.model.fc = read_fp("fc", 1, 0);

  auto read_q = [&](const std::string& name, const ConvParam& fp) {
    QuantConv q;
    q.w = detail::read_ternary(in, "q:" + name, path);
    if (q.w.shape != fp.w.shape) throw FormatError(path + ": quant/fp shape mismatch " + name);
    q.scale = fp.scale;
    q.stride = fp.stride;
    q.pad = fp.pad;
    return q;
  };
  auto read_th = [&](const std::string& name) {
    detail::expect(in, "thresholds", path);
    detail::expect(in, name, path);
    TernaryThresholds t{};
    in >> t.lo >> t.hi;
    return t;
  };

  mf.quant.stem.thresholds = read_th("stem");
  mf.quant.stem.convs.push_back(read_q("stem", mf.model.stem));
  for (size_t i = 0; i < spec.blocks.size(); ++i) {
    QuantBlock qb;
    qb.thresholds = read_th("b" + std::to_string(i));
    const auto& b = mf.model.blocks[i];
    for (size_t j = 0; j < b.convs.size(); ++j)
      qb.convs.push_back(read_q("b" + std::to_string(i) + "c" + std::to_string(j), b.convs[j]));
    if (b.shortcut) qb.shortcut = read_q("b" + std::to_string(i) + "sc", *b.shortcut);
    mf.quant.blocks.push_back(std::move(qb));
  }
  mf.quant.fc.thresholds = read_th("fc");
  mf.quant.fc.convs.push_back(read_q("fc", mf.model.fc));
  return mf;
}

struct QuantConvThresholds;  // not used; kept out intentionally

struct CentersFile {
  CenterBank bank;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline void save_centers(const CentersFile& cf, const std::string& path) {
  if (!cf.bank.ternary)
    throw std::invalid_argument("save_centers: only ternary banks are serialized");
  std::ofstream out(path);
  if (!out) throw FormatError(path + ": cannot open for write");
  out << kCentersMagic << " " << kFormatVersion << "\n";
  out << "seed " << cf.seed << " confighash " << cf.config_hash << "\n";
  out << "classes " << cf.bank.n_classes << " exits " << cf.bank.n_exits() << "\n";
  out << "exitblocks";
  for (int b : cf.bank.exit_blocks) out << " " << b;
  out << "\n";
  for (int e = 0; e < cf.bank.n_exits(); ++e)
    detail::write_ternary(out, "center" + std::to_string(e), cf.bank.centers[e]);
}

inline CentersFile load_centers(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open");
  detail::check_version(in, kCentersMagic, path);
  CentersFile cf;
  detail::expect(in, "seed", path);
  in >> cf.seed;
  detail::expect(in, "confighash", path);
  in >> cf.config_hash;
  detail::expect(in, "classes", path);
  in >> cf.bank.n_classes;
  detail::expect(in, "exits", path);
  int ne;
  in >> ne;
  detail::expect(in, "exitblocks", path);
  cf.bank.exit_blocks.resize(ne);
  for (auto& b : cf.bank.exit_blocks) in >> b;
  cf.bank.ternary = true;
  for (int e = 0; e < ne; ++e) {
    TernaryTensor t = detail::read_ternary(in, "center" + std::to_string(e), path);
    const int dim = t.shape[1];
    MatrixXd exact(dim, cf.bank.n_classes);
    for (int c = 0; c < cf.bank.n_classes; ++c)
      for (int d = 0; d < dim; ++d)
        exact(d, c) = static_cast<double>(t.values[static_cast<long long>(c) * dim + d]);
    cf.bank.centers.push_back(std::move(t));
    cf.bank.exact.push_back(std::move(exact));
  }
  return cf;
}

// GAP embeddings + centers as CSV for external projection/plotting.
inline void export_embeddings(const Dataset& data, const MappedNetwork& net,
                              const CenterBank& bank, const std::vector<int>& exit_indices,
                              const PipelineOptions& opt, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError(path + ": cannot open for write");
  out << std::setprecision(12);
  int max_dim = 0;
  for (int e : exit_indices) max_dim = std::max(max_dim, bank.dim(e));
  out << "exit_index,kind,label";
  for (int d = 0; d < max_dim; ++d) out << ",v" << d;
  out << "\n";
  for (size_t i = 0; i < data.size(); ++i) {
    auto maps = forward_features(data.image_tensor(i), net, opt);
    for (int e : exit_indices) {
      Tensor g = gap(maps[bank.exit_blocks[e]]);
      out << e << ",sample," << data.labels[i];
      for (long long d = 0; d < g.size(); ++d) out << "," << g.values[d];
      out << "\n";
    }
  }
  for (int e : exit_indices)
    for (int c = 0; c < bank.n_classes; ++c) {
      out << e << ",center," << c;
      for (int d = 0; d < bank.dim(e); ++d) out << "," << bank.exact[e](d, c);
      out << "\n";
    }
}

}  // namespace semdnn
