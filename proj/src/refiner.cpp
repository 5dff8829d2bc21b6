#include "drums/refiner.hpp"

#include "drums/log.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>

namespace drums {

using Kind = LayerSpec::Kind;

std::size_t LayerSpec::parameter_count() const {
  const auto i = static_cast<std::size_t>(in), o = static_cast<std::size_t>(out);
  switch (kind) {
  case Kind::Conv3x3:
    return 9 * i * o + (bias ? o : 0);
  case Kind::Conv1x1:
    return i * o + (bias ? o : 0);
  case Kind::TransposeConv2:
    return 4 * i * o + (bias ? o : 0);
  case Kind::BatchNorm:
    return 2 * o;
  default:
    return 0;
  }
}

namespace {

void conv_bn_relu(std::vector<LayerSpec> &s, const std::string &prefix, int idx, int in, int out,
                  bool bias) {
  const std::string n = std::to_string(idx);
  s.push_back({Kind::Conv3x3, prefix + ".conv" + n, in, out, bias});
  s.push_back({Kind::BatchNorm, prefix + ".bn" + n, out, out, false});
  s.push_back({Kind::Relu, prefix + ".relu" + n, out, out, false});
}

void validate_arch(const UNetArch &a) {
  if (a.version != kArchVersion)
    throw WeightsError("unknown architecture version " + std::to_string(a.version));
  if (a.levels < 1 || a.levels > 8 || a.base_filters < 1 || a.in_channels < 1 ||
      a.out_channels < 1)
    throw WeightsError("invalid architecture descriptor");
}

} // namespace

std::vector<LayerSpec> layer_specs(const UNetArch &arch) {
  validate_arch(arch);
  std::vector<LayerSpec> s;
  int prev = arch.in_channels;
  for (int l = 0; l <= arch.levels; ++l) {
    const std::string p = "enc" + std::to_string(l);
    if (l > 0)
      s.push_back({Kind::MaxPool2, p + ".pool", prev, prev, false});
    conv_bn_relu(s, p, 1, prev, arch.filters(l), arch.conv_bias);
    conv_bn_relu(s, p, 2, arch.filters(l), arch.filters(l), arch.conv_bias);
    prev = arch.filters(l);
  }
  s.push_back({Kind::Dropout, "dropout", prev, prev, false});
  for (int l = arch.levels - 1; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    const int f = arch.filters(l);
    s.push_back({Kind::TransposeConv2, p + ".up", prev, f, true});
    s.push_back({Kind::ConcatSkip, p + ".cat", 2 * f, 2 * f, false});
    conv_bn_relu(s, p, 1, 2 * f, f, arch.conv_bias);
    conv_bn_relu(s, p, 2, f, f, arch.conv_bias);
    prev = f;
  }
  s.push_back({Kind::Conv1x1, "head", prev, arch.out_channels, true});
  return s;
}

std::size_t parameter_count(const UNetArch &arch) {
  std::size_t n = 0;
  for (const auto &l : layer_specs(arch))
    n += l.parameter_count();
  return n;
}

std::vector<TensorSpec> expected_tensors(const UNetArch &arch) {
  std::vector<TensorSpec> t;
  for (const auto &l : layer_specs(arch)) {
    const auto i = static_cast<std::size_t>(l.in), o = static_cast<std::size_t>(l.out);
    switch (l.kind) {
    case Kind::Conv3x3:
      t.push_back({l.name + ".weight", {o, i, 3, 3}});
      break;
    case Kind::Conv1x1:
      t.push_back({l.name + ".weight", {o, i, 1, 1}});
      break;
    case Kind::TransposeConv2:
      t.push_back({l.name + ".weight", {i, o, 2, 2}});
      break;
    case Kind::BatchNorm:
      t.push_back({l.name + ".weight", {o}});
      t.push_back({l.name + ".bias", {o}});
      t.push_back({l.name + ".running_mean", {o}, false});
      t.push_back({l.name + ".running_var", {o}, false});
      break;
    default:
      break;
    }
    if (l.bias)
      t.push_back({l.name + ".bias", {o}});
  }
  return t;
}

NetworkWeights::NetworkWeights(UNetArch arch, std::map<std::string, FTensor> tensors)
    : arch_(arch), tensors_(std::move(tensors)) {
  for (const auto &spec : expected_tensors(arch_)) {
    const auto layer = spec.name.substr(0, spec.name.rfind('.'));
    auto it = tensors_.find(spec.name);
    if (it == tensors_.end())
      throw WeightsError("layer " + layer + ": missing tensor '" + spec.name + "'");
    if (it->second.shape() != spec.shape)
      throw WeightsError("layer " + layer + ": shape mismatch for '" + spec.name + "', got " +
                         shape_string(it->second.shape()) + ", expected " +
                         shape_string(spec.shape));
  }
}

const FTensor &NetworkWeights::at(const std::string &name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end())
    throw WeightsError("no weight tensor '" + name + "'");
  return it->second;
}

FTensor &NetworkWeights::at(const std::string &name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end())
    throw WeightsError("no weight tensor '" + name + "'");
  return it->second;
}

std::size_t NetworkWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto &spec : expected_tensors(arch_))
    if (spec.trainable)
      n += at(spec.name).size();
  return n;
}

Archive NetworkWeights::to_archive() const {
  Archive a;
  a.put(make_scalars("arch", {static_cast<double>(arch_.version), static_cast<double>(arch_.levels),
                              static_cast<double>(arch_.base_filters),
                              static_cast<double>(arch_.in_channels),
                              static_cast<double>(arch_.out_channels),
                              arch_.conv_bias ? 1.0 : 0.0, arch_.dropout}));
  for (const auto &spec : expected_tensors(arch_)) {
    const auto &t = at(spec.name);
    a.put(Tensor{spec.name, t.shape(), DType::Real32, t.vector()});
  }
  return a;
}

NetworkWeights NetworkWeights::from_archive(const Archive &archive) {
  if (!archive.contains("arch"))
    throw WeightsError("weight archive has no 'arch' descriptor entry");
  const auto d = to_scalars(archive.at("arch"));
  if (d.empty())
    throw WeightsError("empty architecture descriptor");
  UNetArch arch;
  arch.version = static_cast<int>(d[0]);
  if (arch.version != kArchVersion)
    throw WeightsError("unknown architecture version " + std::to_string(arch.version));
  if (d.size() < 7)
    throw WeightsError("architecture descriptor has " + std::to_string(d.size()) +
                       " fields, expected 7");
  arch.levels = static_cast<int>(d[1]);
  arch.base_filters = static_cast<int>(d[2]);
  arch.in_channels = static_cast<int>(d[3]);
  arch.out_channels = static_cast<int>(d[4]);
  arch.conv_bias = d[5] != 0.0;
  arch.dropout = d[6];
  validate_arch(arch);

  std::map<std::string, FTensor> tensors;
  std::size_t unused = 0;
  const auto specs = expected_tensors(arch);
  for (const auto &t : archive.entries()) {
    if (t.name == "arch")
      continue;
    const bool known = std::any_of(specs.begin(), specs.end(),
                                   [&](const TensorSpec &s) { return s.name == t.name; });
    if (!known) {
      ++unused;
      continue;
    }
    if (t.dtype != DType::Real32)
      throw WeightsError("weight tensor '" + t.name + "' is not real32");
    tensors.emplace(t.name, FTensor(t.dims, t.data));
  }
  if (unused)
    log::warn("weights: ignoring " + std::to_string(unused) + " unrecognised entries");
  NetworkWeights w(arch, std::move(tensors));
  log::info("weights: " + std::to_string(w.parameter_count()) + " trainable parameters");
  return w;
}

NetworkWeights load_weights(const std::filesystem::path &path) {
  return NetworkWeights::from_archive(Archive::load(path));
}

void save_weights(const NetworkWeights &w, const std::filesystem::path &path) {
  w.to_archive().save(path);
}

namespace {

template <class Fill> NetworkWeights build_weights(const UNetArch &arch, Fill fill) {
  std::map<std::string, FTensor> tensors;
  for (const auto &spec : expected_tensors(arch)) {
    FTensor t(spec.shape, 0.0f);
    fill(spec, t);
    tensors.emplace(spec.name, std::move(t));
  }
  return NetworkWeights(arch, std::move(tensors));
}

bool ends_with(const std::string &s, const std::string &suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_bn(const std::string &name) { return name.find(".bn") != std::string::npos; }

} // namespace

NetworkWeights zero_weights(const UNetArch &arch) {
  return build_weights(arch, [](const TensorSpec &, FTensor &) {});
}

NetworkWeights random_weights(const UNetArch &arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return build_weights(arch, [&](const TensorSpec &spec, FTensor &t) {
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    if (is_bn(spec.name)) {
      std::uniform_real_distribution<double> pos(0.5, 1.5);
      const bool around_one = ends_with(spec.name, ".weight") || ends_with(spec.name, ".running_var");
      for (auto &v : t.values())
        v = static_cast<float>(around_one ? pos(rng) : u(rng));
    } else if (ends_with(spec.name, ".weight")) {
      // fan-in: (C_in k k) for convs, C_in for the transpose conv layout (C_in, C_out, 2, 2).
      const bool transposed = spec.name.find(".up.") != std::string::npos;
      const double fan_in = transposed ? static_cast<double>(spec.shape[0])
                                       : static_cast<double>(spec.shape[1] * spec.shape[2] * spec.shape[3]);
      std::normal_distribution<double> g(0.0, std::sqrt(2.0 / fan_in));
      for (auto &v : t.values())
        v = static_cast<float>(g(rng));
    } else {
      for (auto &v : t.values())
        v = static_cast<float>(u(rng));
    }
  });
}

NetworkWeights identity_weights(const UNetArch &arch) {
  const std::size_t c = static_cast<std::size_t>(arch.in_channels);
  if (arch.in_channels != arch.out_channels || 2 * arch.in_channels > arch.base_filters)
    throw ConfigError("identity weights need in == out channels and 2*in <= base filters");
  const float unit_var = static_cast<float>(1.0 - 1e-5);
  return build_weights(arch, [&](const TensorSpec &spec, FTensor &t) {
    const auto &n = spec.name;
    if (is_bn(n)) {
      if (ends_with(n, ".weight") || ends_with(n, ".running_var"))
        t.fill(ends_with(n, ".weight") ? 1.0f : unit_var);
      return;
    }
    if (n == "enc0.conv1.weight") {
      for (std::size_t i = 0; i < c; ++i) {
        t(i, i, 1, 1) = 1.0f;
        t(c + i, i, 1, 1) = -1.0f;
      }
    } else if (n == "enc0.conv2.weight" || n == "dec0.conv1.weight" || n == "dec0.conv2.weight") {
      for (std::size_t i = 0; i < 2 * c; ++i)
        t(i, i, 1, 1) = 1.0f; // dec0.conv1 reads the skip half, which comes first
    } else if (n == "head.weight") {
      for (std::size_t i = 0; i < c; ++i) {
        t(i, i, 0, 0) = 1.0f;
        t(i, c + i, 0, 0) = -1.0f;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Layer kernels

namespace {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
using MatFRow = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_chw(const FTensor &x, const char *op) {
  if (x.rank() != 3)
    throw DataError(std::string(op) + ": expected (C, H, W), got " + shape_string(x.shape()));
}

} // namespace

FTensor conv2d(const FTensor &x, const FTensor &kernel, const FTensor *bias) {
  require_chw(x, "conv2d");
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3) || kernel.dim(2) % 2 == 0)
    throw DataError("conv2d: kernel must be (C_out, C_in, k, k) with odd k, got " +
                    shape_string(kernel.shape()));
  const std::size_t cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t cout = kernel.dim(0), k = kernel.dim(2), pad = k / 2;
  if (kernel.dim(1) != cin)
    throw DataError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                    " input channels, got " + std::to_string(cin));
  if (bias && bias->size() != cout)
    throw DataError("conv2d: bias length mismatch");

  const std::size_t K = cin * k * k;
  const MatD wm = Eigen::Map<const MatFRow>(kernel.data(), static_cast<Eigen::Index>(cout),
                                            static_cast<Eigen::Index>(K))
                      .cast<double>();
  FTensor out({cout, H, W});
  const std::size_t budget = std::size_t{1} << 21;
  const std::size_t rows = std::clamp<std::size_t>(budget / std::max<std::size_t>(K * W, 1), 1, H);
  const std::size_t chunks = (H + rows - 1) / rows;

#pragma omp parallel for schedule(static)
  for (std::size_t ch = 0; ch < chunks; ++ch) {
    const std::size_t y0 = ch * rows, y1 = std::min(H, y0 + rows), P = (y1 - y0) * W;
    MatD col = MatD::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t dy = 0; dy < k; ++dy)
        for (std::size_t dx = 0; dx < k; ++dx) {
          const auto row = static_cast<Eigen::Index>((ci * k + dy) * k + dx);
          for (std::size_t y = y0; y < y1; ++y) {
            const long sy = static_cast<long>(y + dy) - static_cast<long>(pad);
            if (sy < 0 || sy >= static_cast<long>(H))
              continue;
            const float *src = x.data() + (ci * H + static_cast<std::size_t>(sy)) * W;
            for (std::size_t xx = 0; xx < W; ++xx) {
              const long sx = static_cast<long>(xx + dx) - static_cast<long>(pad);
              if (sx >= 0 && sx < static_cast<long>(W))
                col(row, static_cast<Eigen::Index>((y - y0) * W + xx)) = src[sx];
            }
          }
        }
    const MatD res = wm * col;
    for (std::size_t co = 0; co < cout; ++co) {
      const double b = bias ? (*bias)[co] : 0.0;
      float *dst = out.data() + co * H * W + y0 * W;
      for (std::size_t p = 0; p < P; ++p)
        dst[p] = static_cast<float>(res(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(p)) + b);
    }
  }
  return out;
}

FTensor batchnorm_inference(const FTensor &x, const FTensor &gamma, const FTensor &beta,
                            const FTensor &mean, const FTensor &var, double eps) {
  require_chw(x, "batchnorm");
  const std::size_t C = x.dim(0), n = x.dim(1) * x.dim(2);
  for (const FTensor *p : {&gamma, &beta, &mean, &var})
    if (p->size() != C)
      throw DataError("batchnorm: statistics do not match channel count " + std::to_string(C));
  FTensor out(x.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const double denom = static_cast<double>(var[c]) + eps;
    if (!(denom > 0.0))
      throw DataError("batchnorm: non-positive variance in channel " + std::to_string(c));
    const double scale = gamma[c] / std::sqrt(denom);
    const double shift = beta[c] - scale * mean[c];
    const float *src = x.data() + c * n;
    float *dst = out.data() + c * n;
    for (std::size_t i = 0; i < n; ++i)
      dst[i] = static_cast<float>(scale * src[i] + shift);
  }
  return out;
}

void relu_inplace(FTensor &x) {
  for (auto &v : x.values())
    v = std::max(v, 0.0f);
}

FTensor maxpool2(const FTensor &x) {
  require_chw(x, "maxpool2");
  const std::size_t C = x.dim(0), H = x.dim(1) / 2, W = x.dim(2) / 2;
  FTensor out({C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j)
        out(c, i, j) = std::max({x(c, 2 * i, 2 * j), x(c, 2 * i, 2 * j + 1),
                                 x(c, 2 * i + 1, 2 * j), x(c, 2 * i + 1, 2 * j + 1)});
  return out;
}

FTensor transpose_conv2(const FTensor &x, const FTensor &kernel, const FTensor &bias) {
  require_chw(x, "transpose_conv2");
  const std::size_t cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (kernel.rank() != 4 || kernel.dim(0) != cin || kernel.dim(2) != 2 || kernel.dim(3) != 2)
    throw DataError("transpose_conv2: kernel must be (C_in, C_out, 2, 2), got " +
                    shape_string(kernel.shape()));
  const std::size_t cout = kernel.dim(1);
  if (bias.size() != cout)
    throw DataError("transpose_conv2: bias length mismatch");
  const auto ci_i = static_cast<Eigen::Index>(cin), co_i = static_cast<Eigen::Index>(cout);
  const MatD xm = Eigen::Map<const MatFRow>(x.data(), ci_i, static_cast<Eigen::Index>(H * W))
                      .cast<double>();
  FTensor out({cout, 2 * H, 2 * W});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) {
      MatD wab(co_i, ci_i);
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t co = 0; co < cout; ++co)
          wab(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(ci)) = kernel(ci, co, a, b);
      const MatD res = wab * xm;
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j)
            out(co, 2 * i + a, 2 * j + b) = static_cast<float>(
                res(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(i * W + j)) + bias[co]);
    }
  return out;
}

FTensor concat_channels(const FTensor &skip, const FTensor &up) {
  require_chw(skip, "concat");
  require_chw(up, "concat");
  if (skip.dim(1) != up.dim(1) || skip.dim(2) != up.dim(2))
    throw DataError("concat: spatial mismatch " + shape_string(skip.shape()) + " vs " +
                    shape_string(up.shape()));
  std::vector<float> v(skip.vector());
  v.insert(v.end(), up.vector().begin(), up.vector().end());
  return FTensor({skip.dim(0) + up.dim(0), skip.dim(1), skip.dim(2)}, std::move(v));
}

// ---------------------------------------------------------------------------

namespace {

FTensor conv_block(FTensor x, const NetworkWeights &w, const std::string &p) {
  const bool bias = w.arch().conv_bias;
  for (int i = 1; i <= 2; ++i) {
    const std::string c = p + ".conv" + std::to_string(i), b = p + ".bn" + std::to_string(i);
    x = conv2d(x, w.at(c + ".weight"), bias ? &w.at(c + ".bias") : nullptr);
    x = batchnorm_inference(x, w.at(b + ".weight"), w.at(b + ".bias"), w.at(b + ".running_mean"),
                            w.at(b + ".running_var"));
    relu_inplace(x);
  }
  return x;
}

void expect_spatial(const FTensor &t, std::size_t h, std::size_t w, const std::string &stage) {
  if (t.dim(1) != h || t.dim(2) != w)
    throw DataError("forward: stage " + stage + " has spatial size " + std::to_string(t.dim(1)) +
                    "x" + std::to_string(t.dim(2)) + ", expected " + std::to_string(h) + "x" +
                    std::to_string(w));
}

} // namespace

FTensor forward(const FTensor &x, const NetworkWeights &w, ActivationTrace *trace) {
  require_chw(x, "forward");
  const auto &arch = w.arch();
  if (x.dim(0) != static_cast<std::size_t>(arch.in_channels))
    throw DataError("forward: input has " + std::to_string(x.dim(0)) +
                    " channels, network expects " + std::to_string(arch.in_channels));
  const std::size_t H = x.dim(1), W = x.dim(2), block = std::size_t{1} << arch.levels;
  if (H % block != 0 || W % block != 0)
    throw DataError("forward: input size " + std::to_string(H) + "x" + std::to_string(W) +
                    " not divisible by " + std::to_string(block));

  auto record = [&](const std::string &name, const FTensor &t) {
    if (trace)
      trace->emplace_back(name, t);
  };

  std::vector<FTensor> skips;
  FTensor cur = x;
  for (int l = 0; l <= arch.levels; ++l) {
    const std::string p = "enc" + std::to_string(l);
    if (l > 0)
      cur = maxpool2(cur);
    cur = conv_block(std::move(cur), w, p);
    expect_spatial(cur, H >> l, W >> l, p);
    record(p, cur);
    if (l < arch.levels)
      skips.push_back(cur);
  }
  // Dropout is the identity at inference.
  for (int l = arch.levels - 1; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    FTensor up = transpose_conv2(cur, w.at(p + ".up.weight"), w.at(p + ".up.bias"));
    cur = conv_block(concat_channels(skips[static_cast<std::size_t>(l)], up), w, p);
    expect_spatial(cur, H >> l, W >> l, p);
    record(p, cur);
  }
  FTensor out = conv2d(cur, w.at("head.weight"), &w.at("head.bias"));
  record("output", out);
  return out;
}

PreparedBasis refine_basis(const PreparedBasis &p, const NetworkWeights &w) {
  const std::size_t ch = p.channels.dim(0);
  if (ch != static_cast<std::size_t>(w.arch().in_channels) ||
      ch != static_cast<std::size_t>(w.arch().out_channels))
    throw DataError("refine_basis: basis has " + std::to_string(ch) +
                    " channels, network maps " + std::to_string(w.arch().in_channels) + " -> " +
                    std::to_string(w.arch().out_channels));
  FTensor in(p.channels.shape());
  for (std::size_t i = 0; i < in.size(); ++i)
    in[i] = static_cast<float>(p.channels[i]);
  const FTensor out = forward(in, w);
  PreparedBasis r = p;
  for (std::size_t i = 0; i < out.size(); ++i)
    r.channels[i] = out[i];
  return r;
}

ParityReport check_parity(const Archive &dump, const NetworkWeights &w) {
  const Tensor &in = dump.at("input");
  const FTensor x(in.dims, in.data);
  ActivationTrace trace;
  forward(x, w, &trace);
  ParityReport rep;
  for (const auto &[name, act] : trace) {
    const std::string key = name == "output" ? "output" : "act." + name;
    if (!dump.contains(key))
      continue;
    const Tensor &ref = dump.at(key);
    if (ref.dims != act.shape())
      throw DataError("parity: stage " + name + " shape " + shape_string(act.shape()) +
                      " vs dump " + shape_string(ref.dims));
    double m = 0.0;
    for (std::size_t i = 0; i < act.size(); ++i)
      m = std::max(m, std::abs(static_cast<double>(act[i]) - ref.data[i]));
    rep.stage_max_abs.emplace_back(name, m);
    if (name == "output")
      rep.output_max_abs = m;
  }
  if (!dump.contains("output"))
    throw DataError("parity dump has no 'output' entry");
  return rep;
}

Archive make_parity_dump(const FTensor &input, const NetworkWeights &w) {
  ActivationTrace trace;
  forward(input, w, &trace);
  Archive a;
  a.put(Tensor{"input", input.shape(), DType::Real32, input.vector()});
  for (const auto &[name, act] : trace)
    a.put(Tensor{name == "output" ? "output" : "act." + name, act.shape(), DType::Real32,
                 act.vector()});
  return a;
}

} // namespace drums
