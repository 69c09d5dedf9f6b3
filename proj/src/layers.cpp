#include "geoloc/layers.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "geoloc/error.hpp"

namespace geoloc::nn {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'G', 'E', 'O', 'L', 'O', 'C', 'K', 'P'};

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::filesystem::path& path) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    fail(ErrorCode::kParse, "truncated checkpoint " + path.string());
  }
  return value;
}

}  // namespace

BoundParams bind(ad::Tape& tape, const ParamMap& params, bool requires_grad) {
  BoundParams out;
  for (const auto& [path, value] : params) {
    out.emplace(path, requires_grad ? tape.variable(value) : tape.constant(value));
  }
  return out;
}

ParamMap gradients(const ad::Tape& tape, const BoundParams& bound) {
  ParamMap out;
  for (const auto& [path, var] : bound) out.emplace(path, tape.grad(var));
  return out;
}

ad::Var lookup(const BoundParams& params, const std::string& path) {
  const auto it = params.find(path);
  if (it == params.end()) fail(ErrorCode::kKey, "missing parameter " + path);
  return it->second;
}

std::size_t parameter_count(const ParamMap& params) {
  std::size_t n = 0;
  for (const auto& [_, t] : params) n += t.size();
  return n;
}

void init_conv(ParamMap& params, const std::string& prefix, std::size_t in_channels,
               std::size_t out_channels, std::size_t kernel, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(in_channels * kernel * kernel);
  params[prefix + ".weight"] =
      uniform({out_channels, in_channels, kernel, kernel}, std::sqrt(6.0 / fan_in), rng);
  params[prefix + ".bias"] = Tensor({out_channels});
}

void init_fully_connected(ParamMap& params, const std::string& prefix, std::size_t in_dim,
                          std::size_t out_dim, std::mt19937_64& rng) {
  params[prefix + ".weight"] =
      uniform({in_dim, out_dim}, std::sqrt(6.0 / static_cast<double>(in_dim)), rng);
  params[prefix + ".bias"] = Tensor({out_dim});
}

void init_residual_block(ParamMap& params, const std::string& prefix, std::size_t in_channels,
                         std::size_t out_channels, std::mt19937_64& rng) {
  init_conv(params, prefix + ".conv1", in_channels, out_channels, 3, rng);
  init_conv(params, prefix + ".conv2", out_channels, out_channels, 3, rng);
  if (in_channels != out_channels) {
    init_conv(params, prefix + ".proj", in_channels, out_channels, 1, rng);
  }
}

void init_lstm(ParamMap& params, const std::string& prefix, std::size_t input_dim,
               std::size_t hidden, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  params[prefix + ".weight"] = uniform({input_dim + hidden, 4 * hidden}, bound, rng);
  Tensor bias = uniform({4 * hidden}, bound, rng);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;
  params[prefix + ".bias"] = std::move(bias);
}

ad::Var conv(ad::Var x, const BoundParams& params, const std::string& prefix) {
  const ad::Var w = lookup(params, prefix + ".weight");
  const std::size_t k = w.shape().at(2);
  return ad::bias_add(ad::conv2d(x, w, 1, k / 2), lookup(params, prefix + ".bias"));
}

ad::Var residual_block(ad::Var x, const BoundParams& params, const std::string& prefix) {
  if (x.shape().size() != 4) {
    fail(ErrorCode::kShape, "residual_block " + prefix + ": expected (B, C, H, W), got " +
                                to_string(x.shape()));
  }
  const ad::Var branch =
      conv(ad::relu(conv(x, params, prefix + ".conv1")), params, prefix + ".conv2");
  ad::Var shortcut = x;
  if (params.contains(prefix + ".proj.weight")) {
    shortcut = conv(x, params, prefix + ".proj");
  } else if (branch.shape() != x.shape()) {
    fail(ErrorCode::kShape, "residual_block " + prefix + ": branch shape " +
                                to_string(branch.shape()) + " differs from input " +
                                to_string(x.shape()) + " and no projection is configured");
  }
  return ad::relu(ad::add(branch, shortcut));
}

ad::Var fully_connected(ad::Var x, const BoundParams& params, const std::string& prefix) {
  return ad::bias_add(ad::matmul(x, lookup(params, prefix + ".weight")),
                      lookup(params, prefix + ".bias"));
}

LstmState zero_lstm_state(ad::Tape& tape, std::size_t batch, std::size_t hidden) {
  return {tape.constant(Tensor({batch, hidden})), tape.constant(Tensor({batch, hidden}))};
}

LstmStep lstm_cell(ad::Var x, const LstmState& state, const BoundParams& params,
                   const std::string& prefix) {
  const ad::Var w = lookup(params, prefix + ".weight");
  const Shape& hs = state.h.shape();
  if (hs != state.c.shape() || hs.size() != 2 || x.shape().size() != 2 ||
      x.shape()[0] != hs[0]) {
    fail(ErrorCode::kShape, "lstm_cell " + prefix + ": input " + to_string(x.shape()) +
                                " with state h " + to_string(hs) + ", c " +
                                to_string(state.c.shape()));
  }
  const std::size_t hidden = hs[1];
  if (w.shape() != Shape{x.shape()[1] + hidden, 4 * hidden}) {
    fail(ErrorCode::kShape, "lstm_cell " + prefix + ": weight " + to_string(w.shape()) +
                                " does not match input " + to_string(x.shape()) +
                                " and hidden size " + std::to_string(hidden));
  }
  const ad::Var xh[] = {x, state.h};
  const ad::Var gates =
      ad::bias_add(ad::matmul(ad::concat(xh, 1), w), lookup(params, prefix + ".bias"));
  const ad::Var i = ad::sigmoid(ad::slice(gates, 1, 0, hidden));
  const ad::Var f = ad::sigmoid(ad::slice(gates, 1, hidden, 2 * hidden));
  const ad::Var g = ad::tanh(ad::slice(gates, 1, 2 * hidden, 3 * hidden));
  const ad::Var o = ad::sigmoid(ad::slice(gates, 1, 3 * hidden, 4 * hidden));
  const ad::Var c = ad::add(ad::mul(f, state.c), ad::mul(i, g));
  const ad::Var h = ad::mul(o, ad::tanh(c));
  return {h, {h, c}};
}

void save_checkpoint(const std::filesystem::path& path, const ParamMap& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::kIo, "cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_pod<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) fail(ErrorCode::kIo, "failed writing checkpoint " + path.string());
}

ParamMap load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::kParse, path.string() + " is not a checkpoint file");
  }
  const auto version = read_pod<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kParse, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = read_pod<std::uint32_t>(is, path);
  ParamMap params;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = read_pod<std::uint32_t>(is, path);
    if (len > 4096) fail(ErrorCode::kParse, "implausible parameter name length in checkpoint");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) fail(ErrorCode::kParse, "truncated checkpoint");
    const auto rank = read_pod<std::uint32_t>(is, path);
    if (rank > 8) fail(ErrorCode::kParse, "implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(is, path));
    std::vector<double> data(element_count(shape));
    if (!is.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      fail(ErrorCode::kParse, "truncated data for " + name);
    }
    if (!params.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      fail(ErrorCode::kParse, "duplicate parameter " + name + " in checkpoint");
    }
  }
  return params;
}

}  // namespace geoloc::nn
