#include "ser/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ser::model {

namespace {

Tensor glorot(ad::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  ad::Buffer v(ad::shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor zeros_param(std::size_t n) { return Tensor::zeros({n}, true); }

BatchNormLayer make_bn(std::size_t channels) {
  return {Tensor::full({channels}, 1.0, true), Tensor::zeros({channels}, true),
          Tensor::zeros({channels}), Tensor::full({channels}, 1.0)};
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

bool variant_has_eca(Variant v) { return v == Variant::full || v == Variant::no_gfb || v == Variant::one_gfb; }

std::size_t variant_gfbs(Variant v, std::size_t configured) {
  switch (v) {
    case Variant::no_gfb:
    case Variant::no_eca_no_gfb:
      return 0;
    case Variant::one_gfb:
      return std::min<std::size_t>(1, configured);
    default:
      return configured;
  }
}

}  // namespace

std::string to_string(EcaMode mode) { return mode == EcaMode::table1 ? "table1" : "eq4"; }

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::no_eca: return "no_eca";
    case Variant::no_gfb: return "no_gfb";
    case Variant::one_gfb: return "one_gfb";
    case Variant::no_eca_no_gfb: return "no_eca_no_gfb";
  }
  return "full";
}

EcaMode parse_eca_mode(const std::string& s) {
  if (s == "table1") return EcaMode::table1;
  if (s == "eq4") return EcaMode::eq4;
  throw std::invalid_argument("unknown eca_mode '" + s + "' (expected table1 or eq4)");
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::full, Variant::no_eca, Variant::no_gfb, Variant::one_gfb, Variant::no_eca_no_gfb}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown model variant '" + s + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("model." + field + ": " + why);
  };
  if (input_len == 0) fail("input_len", "must be positive");
  if (alfb_filters.size() != 4) fail("alfb_filters", "expected 4 entries");
  if (alfb_kernels.size() != 4) fail("alfb_kernels", "expected 4 entries");
  if (alfb_pools.size() != 4) fail("alfb_pools", "expected 4 entries");
  if (gfb_units.size() != 2) fail("gfb_units", "expected 2 entries");
  if (gfb_dropout.size() != 2) fail("gfb_dropout", "expected 2 entries");
  for (auto f : alfb_filters) if (f == 0) fail("alfb_filters", "must be positive");
  for (auto k : alfb_kernels) if (k == 0) fail("alfb_kernels", "must be positive");
  for (auto p : alfb_pools) if (p.pool == 0 || p.stride == 0) fail("alfb_pools", "pool and stride must be positive");
  for (auto u : gfb_units) if (u == 0) fail("gfb_units", "must be positive");
  for (auto d : gfb_dropout) if (!(d >= 0.0 && d < 1.0)) fail("gfb_dropout", "must be in [0, 1)");
  if (dense_units == 0) fail("dense_units", "must be positive");
  if (n_classes < 2) fail("n_classes", "must be at least 2");
}

std::size_t eca_kernel_size(std::size_t channels, double gamma, double b) {
  if (channels < 1) throw std::invalid_argument("eca_kernel_size: channel count must be >= 1");
  const double t = std::log2(static_cast<double>(channels)) / gamma + b / gamma;
  const double k = 2.0 * std::floor((t - 1.0) / 2.0 + 0.5) + 1.0;
  return static_cast<std::size_t>(std::max(1.0, k));
}

Tensor EcaBlock::attention(const Tensor& x) const {
  const Tensor pooled = ad::global_avg_pool1d(x);  // [B, C]
  const std::size_t batch = pooled.dim(0), channels = pooled.dim(1);
  // Channels play the role of time for the gate convolution.
  Tensor gate = ad::conv1d(ad::reshape(pooled, {batch, channels, 1}), weights, bias, 1, ad::Padding::same);
  return ad::sigmoid(ad::reshape(gate, {batch, channels}));
}

Tensor EcaBlock::forward(const Tensor& x) const {
  const Tensor a = attention(x);
  return ad::mul(x, ad::reshape(a, {a.dim(0), 1, a.dim(1)}));
}

SeBlock SeBlock::create(std::size_t channels, std::size_t reduction, Rng& rng) {
  if (reduction == 0 || channels % reduction != 0) {
    throw std::invalid_argument("se_block: channels " + std::to_string(channels) + " not divisible by reduction " +
                                std::to_string(reduction));
  }
  const std::size_t hidden = channels / reduction;
  return {glorot({channels, hidden}, channels, hidden, rng), glorot({hidden, channels}, hidden, channels, rng)};
}

Tensor SeBlock::attention(const Tensor& x) const {
  const Tensor z = ad::global_avg_pool1d(x);
  if (w1.dim(0) != z.dim(1)) {
    throw ad::ShapeError("se_block: weights for " + std::to_string(w1.dim(0)) + " channels, input " + ad::shape_str(x.shape()));
  }
  return ad::sigmoid(ad::matmul(ad::relu(ad::matmul(z, w1)), w2));
}

Tensor SeBlock::forward(const Tensor& x) const {
  const Tensor a = attention(x);
  return ad::mul(x, ad::reshape(a, {a.dim(0), 1, a.dim(1)}));
}

LstmParams LstmParams::create(std::size_t input_dim, std::size_t units, Rng& rng) {
  LstmParams p;
  p.input_dim = input_dim;
  p.units = units;
  for (Tensor* w : {&p.wxi, &p.wxf, &p.wxc, &p.wxo}) *w = glorot({input_dim, units}, input_dim, 4 * units, rng);
  for (Tensor* w : {&p.whi, &p.whf, &p.whc, &p.who}) *w = glorot({units, units}, units, 4 * units, rng);
  p.bi = zeros_param(units);
  p.bf = Tensor::full({units}, 1.0, true);
  p.bc = zeros_param(units);
  p.bo = zeros_param(units);
  return p;
}

std::vector<std::pair<std::string, Tensor*>> LstmParams::named() {
  return {{"Wxi", &wxi}, {"Wxf", &wxf}, {"Wxc", &wxc}, {"Wxo", &wxo}, {"Whi", &whi}, {"Whf", &whf},
          {"Whc", &whc}, {"Who", &who}, {"bi", &bi},   {"bf", &bf},   {"bc", &bc},   {"bo", &bo}};
}

Tensor LstmParams::run(const Tensor& x, bool reverse) const {
  const Tensor wx = ad::concat({wxi, wxf, wxc, wxo}, 1);
  const Tensor wh = ad::concat({whi, whf, whc, who}, 1);
  const Tensor b = ad::concat({bi, bf, bc, bo}, 0);
  return ad::lstm(x, wx, wh, b, reverse);
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x_t, const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmParams& p) {
  auto gate = [&](const Tensor& wx, const Tensor& wh, const Tensor& b) {
    return ad::add(ad::add(ad::matmul(x_t, wx), ad::matmul(h_prev, wh)), b);
  };
  const Tensor i = ad::sigmoid(gate(p.wxi, p.whi, p.bi));
  const Tensor f = ad::sigmoid(gate(p.wxf, p.whf, p.bf));
  const Tensor o = ad::sigmoid(gate(p.wxo, p.who, p.bo));
  const Tensor g = ad::tanh(gate(p.wxc, p.whc, p.bc));
  const Tensor c = ad::add(ad::mul(f, c_prev), ad::mul(i, g));
  const Tensor h = ad::mul(o, ad::tanh(c));
  return {h, c};
}

Tensor bilstm(const Tensor& x, const LstmParams& forward, const LstmParams& backward) {
  const std::size_t time_axis = x.rank() - 2;
  if (x.dim(time_axis) == 0) throw std::invalid_argument("bilstm: empty sequence");
  return ad::concat({forward.run(x, false), backward.run(x, true)}, x.rank() - 1);
}

Tensor AlfbBlock::forward(const Tensor& x, Mode mode) {
  Tensor h = ad::relu(conv.forward(x));
  if (use_eca) h = eca.forward(h);
  h = bn.forward(h, mode);
  return ad::maxpool1d(h, pool.pool, pool.stride);
}

Tensor GfbBlock::forward(const Tensor& x, Mode mode, Rng& rng) {
  Tensor h = bilstm(x, fw, bw);
  h = bn.forward(h, mode);
  return ad::dropout(h, dropout, mode, rng);
}

std::size_t ParameterCounts::of(const std::string& block) const {
  for (const auto& b : blocks) {
    if (b.block == block) return b.count;
  }
  return 0;
}

Network::Network(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, "init"));
  const bool eca = variant_has_eca(config_.variant);

  std::size_t in_ch = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string prefix = "alfb" + std::to_string(i + 1);
    const std::size_t filters = config_.alfb_filters[i];
    const std::size_t kernel = config_.alfb_kernels[i];
    AlfbBlock block;
    block.conv.weights = glorot({kernel, in_ch, filters}, kernel * in_ch, kernel * filters, rng);
    block.conv.bias = zeros_param(filters);
    block.use_eca = eca;
    if (eca) {
      const std::size_t k = config_.eca_mode == EcaMode::table1 ? 1 : eca_kernel_size(filters);
      block.eca.weights = glorot({k, 1, 1}, k, k, rng);
      if (config_.eca_mode == EcaMode::table1) block.eca.bias = zeros_param(1);
    }
    block.bn = make_bn(filters);
    block.pool = config_.alfb_pools[i];
    alfbs_.push_back(std::move(block));
    in_ch = filters;
  }

  const std::size_t n_gfb = variant_gfbs(config_.variant, config_.gfb_units.size());
  std::size_t in_dim = 1;
  for (std::size_t j = 0; j < n_gfb; ++j) {
    const std::size_t units = config_.gfb_units[j];
    GfbBlock block;
    block.fw = LstmParams::create(in_dim, units, rng);
    block.bw = LstmParams::create(in_dim, units, rng);
    block.bn = make_bn(2 * units);
    block.dropout = config_.gfb_dropout[j];
    gfbs_.push_back(std::move(block));
    in_dim = 2 * units;
  }

  const std::size_t width = concat_width();
  dense_ = {glorot({width, config_.dense_units}, width, config_.dense_units, rng), zeros_param(config_.dense_units)};
  dense_bn_ = make_bn(config_.dense_units);
  output_ = {glorot({config_.dense_units, config_.n_classes}, config_.dense_units, config_.n_classes, rng),
             zeros_param(config_.n_classes)};
  input_mean_ = Tensor::zeros({config_.input_len});
  input_std_ = Tensor::full({config_.input_len}, 1.0);

  add("input.mean", input_mean_, false, false);
  add("input.std", input_std_, false, false);
  for (std::size_t i = 0; i < alfbs_.size(); ++i) {
    const std::string p = "alfb" + std::to_string(i + 1);
    auto& b = alfbs_[i];
    add(p + ".conv.w", b.conv.weights);
    add(p + ".conv.b", b.conv.bias);
    if (b.use_eca) {
      add(p + ".eca.w", b.eca.weights);
      if (b.eca.bias.defined()) add(p + ".eca.b", b.eca.bias);
    }
    add(p + ".bn.gamma", b.bn.gamma);
    add(p + ".bn.beta", b.bn.beta);
    add(p + ".bn.moving_mean", b.bn.moving_mean, false);
    add(p + ".bn.moving_var", b.bn.moving_var, false);
  }
  for (std::size_t j = 0; j < gfbs_.size(); ++j) {
    const std::string p = "gfb" + std::to_string(j + 1);
    auto& g = gfbs_[j];
    for (auto& [name, t] : g.fw.named()) add(p + ".fw." + name, *t);
    for (auto& [name, t] : g.bw.named()) add(p + ".bw." + name, *t);
    add(p + ".bn.gamma", g.bn.gamma);
    add(p + ".bn.beta", g.bn.beta);
    add(p + ".bn.moving_mean", g.bn.moving_mean, false);
    add(p + ".bn.moving_var", g.bn.moving_var, false);
  }
  add("dense.w", dense_.weights);
  add("dense.b", dense_.bias);
  add("dense.bn.gamma", dense_bn_.gamma);
  add("dense.bn.beta", dense_bn_.beta);
  add("dense.bn.moving_mean", dense_bn_.moving_mean, false);
  add("dense.bn.moving_var", dense_bn_.moving_var, false);
  add("output.w", output_.weights);
  add("output.b", output_.bias);
}

void Network::add(const std::string& name, Tensor& t, bool trainable, bool counted) {
  entries_.push_back({name, name.substr(0, name.find('.')), t, trainable, counted});
}

bool Network::has_eca() const { return variant_has_eca(config_.variant); }

std::size_t Network::active_gfbs() const { return gfbs_.size(); }

std::vector<std::size_t> Network::local_time_chain() const {
  std::vector<std::size_t> chain{config_.input_len};
  for (const auto& p : config_.alfb_pools) chain.push_back(ceil_div(chain.back(), p.stride));
  return chain;
}

std::size_t Network::concat_width() const {
  std::size_t width = local_time_chain().back() * config_.alfb_filters.back();
  if (!gfbs_.empty()) width += 2 * config_.gfb_units[gfbs_.size() - 1];
  return width;
}

Tensor Network::forward(const Tensor& x, Mode mode, Rng& dropout_rng) {
  if (x.rank() != 2 || x.dim(1) != config_.input_len) {
    throw ad::ShapeError("network: expected input [batch, " + std::to_string(config_.input_len) + "], got " +
                         ad::shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  std::vector<double> inv_std(config_.input_len);
  for (std::size_t i = 0; i < inv_std.size(); ++i) inv_std[i] = 1.0 / input_std_.data()[i];
  const Tensor scaled = ad::mul(ad::sub(x, input_mean_), Tensor::from({config_.input_len}, std::move(inv_std)));
  const Tensor seq = ad::reshape(scaled, {batch, config_.input_len, 1});

  Tensor local = seq;
  for (auto& block : alfbs_) local = block.forward(local, mode);
  local = ad::reshape(local, {batch, local.dim(1) * local.dim(2)});

  Tensor joined = local;
  if (!gfbs_.empty()) {
    Tensor global = seq;
    for (auto& block : gfbs_) global = block.forward(global, mode, dropout_rng);
    joined = ad::concat({local, ad::global_avg_pool1d(global)}, 1);
  }

  Tensor h = ad::relu(dense_.forward(joined));
  h = dense_bn_.forward(h, mode);
  return output_.forward(h);
}

Tensor Network::predict_proba(const Tensor& x) {
  ad::NoGradGuard guard;
  Rng unused(0);
  return ad::softmax(forward(x, Mode::infer, unused), 1);
}

std::vector<Tensor> Network::trainable_parameters() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back(e.tensor);
  }
  return out;
}

std::vector<NamedTensor> Network::named_parameters() const {
  std::vector<NamedTensor> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back({e.name, e.tensor});
  }
  return out;
}

std::vector<NamedTensor> Network::state() const {
  std::vector<NamedTensor> out;
  for (const auto& e : entries_) out.push_back({e.name, e.tensor});
  return out;
}

void Network::load_state(const std::vector<NamedTensor>& tensors) {
  std::vector<std::string> problems;
  for (auto& e : entries_) {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == e.name; });
    if (it == tensors.end()) {
      problems.push_back("missing '" + e.name + "'");
    } else if (it->tensor.shape() != e.tensor.shape()) {
      problems.push_back("'" + e.name + "' has shape " + ad::shape_str(it->tensor.shape()) + ", model expects " +
                         ad::shape_str(e.tensor.shape()));
    }
  }
  for (const auto& t : tensors) {
    if (std::none_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == t.name; })) {
      problems.push_back("unexpected '" + t.name + "'");
    }
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint does not match model:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw std::invalid_argument(msg);
  }
  for (auto& e : entries_) {
    const auto& src = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == e.name; })->tensor;
    std::copy(src.data().begin(), src.data().end(), e.tensor.mutable_data().begin());
  }
}

ParameterCounts Network::count_parameters() const {
  ParameterCounts counts;
  for (const auto& e : entries_) {
    if (!e.counted) continue;
    if (counts.blocks.empty() || counts.blocks.back().block != e.block) counts.blocks.push_back({e.block, 0});
    counts.blocks.back().count += e.tensor.numel();
    counts.total += e.tensor.numel();
  }
  return counts;
}

void Network::set_input_normalization(const std::vector<double>& mean, const std::vector<double>& stddev) {
  if (mean.size() != config_.input_len || stddev.size() != config_.input_len) {
    throw std::invalid_argument("input normalization must have " + std::to_string(config_.input_len) + " entries");
  }
  for (double s : stddev) {
    if (!(s > 0.0)) throw std::invalid_argument("input normalization: standard deviations must be positive");
  }
  std::copy(mean.begin(), mean.end(), input_mean_.mutable_data().begin());
  std::copy(stddev.begin(), stddev.end(), input_std_.mutable_data().begin());
}

Network build_model(const ModelConfig& config) { return Network(config); }

Network build_ablation(ModelConfig config, Variant variant) {
  config.variant = variant;
  return Network(config);
}

}  // namespace ser::model
