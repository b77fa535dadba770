#include "fedccrl/model.hpp"

#include <cmath>
#include <fstream>

#include "fedccrl/rng.hpp"
#include "fedccrl/wire.hpp"

namespace fedccrl {

namespace {
constexpr char kMagic[8] = {'F', 'C', 'R', 'L', 'P', 'A', 'R', 'M'};
constexpr std::uint32_t kFormatVersion = 1;
}  // namespace

void ModelConfig::validate() const {
  if (channels == 0 || height == 0 || width == 0) {
    throw TensorError("ModelConfig: input dimensions must be positive");
  }
  if (hidden_sizes.empty()) throw TensorError("ModelConfig: hidden_sizes must be non-empty");
  for (auto h : hidden_sizes) {
    if (h == 0) throw TensorError("ModelConfig: hidden layer width must be positive");
  }
  if (representation_dim == 0) throw TensorError("ModelConfig: representation_dim must be >= 1");
  if (num_classes < 2) throw TensorError("ModelConfig: need at least 2 classes");
}

const Tensor& ModelParameters::find(std::string_view name) const {
  for (const auto& [n, t] : entries) {
    if (n == name) return t;
  }
  throw TensorError("ModelParameters: no parameter named '" + std::string(name) + "'");
}

ModelParameters ModelParameters::clone() const {
  ModelParameters out;
  out.version = version;
  out.entries.reserve(entries.size());
  for (const auto& [n, t] : entries) out.entries.emplace_back(n, t.clone());
  return out;
}

ModelParameters& ModelParameters::set_requires_grad(bool v) {
  for (auto& [n, t] : entries) t.set_requires_grad(v);
  return *this;
}

void ModelParameters::zero_grads() {
  for (auto& [n, t] : entries) t.zero_grad();
}

std::size_t ModelParameters::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries) n += t.size();
  return n;
}

ModelParameters init_parameters(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0x6d6f64656cULL));  // "model"
  ModelParameters params;

  auto make_layer = [&](const std::string& prefix, std::size_t fan_in, std::size_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    std::vector<double> b(fan_out);
    for (auto& v : b) v = rng.uniform(-bound, bound);
    params.entries.emplace_back(prefix + ".weight", Tensor::from_data({fan_in, fan_out}, std::move(w)));
    params.entries.emplace_back(prefix + ".bias", Tensor::from_data({fan_out}, std::move(b)));
  };

  std::size_t in = cfg.input_size();
  for (std::size_t i = 0; i < cfg.hidden_sizes.size(); ++i) {
    make_layer("encoder." + std::to_string(i), in, cfg.hidden_sizes[i]);
    in = cfg.hidden_sizes[i];
  }
  make_layer("encoder." + std::to_string(cfg.hidden_sizes.size()), in, cfg.representation_dim);
  make_layer("classifier", cfg.representation_dim, cfg.num_classes);
  return params;
}

Tensor encode(const ModelConfig& cfg, const ModelParameters& params, const Tensor& x) {
  if (x.rank() != 4 || x.shape()[1] != cfg.channels || x.shape()[2] != cfg.height ||
      x.shape()[3] != cfg.width) {
    throw TensorError("encode: input shape " + shape_to_string(x.shape()) +
                      " does not match config input dims [B," + std::to_string(cfg.channels) + "," +
                      std::to_string(cfg.height) + "," + std::to_string(cfg.width) + "]");
  }
  const std::size_t batch = x.shape()[0];
  Tensor h = reshape(x, {batch, cfg.input_size()});
  for (std::size_t i = 0; i < cfg.hidden_sizes.size(); ++i) {
    const std::string p = "encoder." + std::to_string(i);
    h = relu(add(matmul(h, params.find(p + ".weight")), params.find(p + ".bias")));
  }
  const std::string p = "encoder." + std::to_string(cfg.hidden_sizes.size());
  return add(matmul(h, params.find(p + ".weight")), params.find(p + ".bias"));
}

Tensor classify(const ModelConfig& cfg, const ModelParameters& params, const Tensor& z) {
  if (z.rank() != 2 || z.shape()[1] != cfg.representation_dim) {
    throw TensorError("classify: representation shape " + shape_to_string(z.shape()) +
                      " does not match V=" + std::to_string(cfg.representation_dim));
  }
  return softmax(add(matmul(z, params.find("classifier.weight")), params.find("classifier.bias")));
}

std::vector<std::size_t> predict_labels(const Tensor& probabilities) {
  if (probabilities.rank() != 2) throw TensorError("predict_labels: expected [B,K]");
  const std::size_t batch = probabilities.shape()[0];
  const std::size_t k = probabilities.shape()[1];
  std::vector<std::size_t> labels(batch);
  const auto d = probabilities.data();
  for (std::size_t r = 0; r < batch; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (d[r * k + j] > d[r * k + best]) best = j;
    }
    labels[r] = best;
  }
  return labels;
}

AdamState make_adam_state(const ModelParameters& params) {
  AdamState st;
  st.m.reserve(params.entries.size());
  st.v.reserve(params.entries.size());
  for (const auto& [name, t] : params.entries) {
    st.m.emplace_back(t.size(), 0.0);
    st.v.emplace_back(t.size(), 0.0);
  }
  return st;
}

void adam_step(ModelParameters& params, AdamState& state, double lr) {
  if (state.m.size() != params.entries.size()) {
    throw TensorError("adam_step: state does not match parameter list");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    auto& [name, tensor] = params.entries[i];
    if (!tensor.has_grad()) {
      throw TensorError("adam_step: parameter '" + name + "' has no gradient");
    }
    const auto g = tensor.grad();
    auto d = tensor.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < d.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      d[j] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

double cosine_lr(std::size_t round, std::size_t epoch, const ScheduleConfig& cfg) {
  const std::size_t total = cfg.rounds * cfg.local_epochs;
  const std::size_t step = round * cfg.local_epochs + epoch;
  if (epoch >= cfg.local_epochs || step >= total) {
    throw std::out_of_range("cosine_lr: step " + std::to_string(step) + " outside [0," +
                            std::to_string(total) + ")");
  }
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return cfg.lr_init * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

std::vector<std::uint8_t> serialize_parameters(const ModelParameters& params) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  put_u32(out, kFormatVersion);
  put_u64(out, params.version);
  put_u32(out, static_cast<std::uint32_t>(params.entries.size()));
  for (const auto& [name, t] : params.entries) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_u64(out, e);
    for (double v : t.data()) put_f64(out, v);
  }
  return out;
}

ModelParameters deserialize_parameters(std::span<const std::uint8_t> bytes) {
  WireReader r(bytes);
  const std::string magic = r.str(8);
  if (magic != std::string(kMagic, 8)) throw FormatError("parameter payload: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw FormatError("parameter payload: unsupported format version " + std::to_string(version));
  }
  ModelParameters params;
  params.version = r.u64();
  const std::uint32_t count = r.u32();
  params.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    Shape shape(r.u32());
    for (auto& e : shape) e = r.u64();
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = r.f64();
    params.entries.emplace_back(name, Tensor::from_data(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw FormatError("parameter payload: trailing bytes");
  return params;
}

void save_parameters(const ModelParameters& params, const std::string& path) {
  const auto bytes = serialize_parameters(params);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("short write to '" + path + "'");
}

ModelParameters load_parameters(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_parameters(bytes);
}

}  // namespace fedccrl
