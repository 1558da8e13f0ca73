#include "couple_sed/crnn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "couple_sed/util.hpp"

namespace csed::crnn {

namespace nk = numkit;

CrnnConfig CrnnConfig::desk(std::size_t n_mels) {
  CrnnConfig cfg;
  cfg.n_mels = n_mels;
  cfg.conv_filters = {8, 16};
  cfg.pool_sizes = {{2, 2}, {2, 2}};
  cfg.gru_layers = 1;
  cfg.gru_hidden = 16;
  cfg.n_classes = 4;
  return cfg;
}

void CrnnConfig::validate() const {
  if (conv_filters.size() != pool_sizes.size()) {
    throw std::invalid_argument("crnn config: conv_filters and pool_sizes differ in length");
  }
  if (conv_filters.empty()) throw std::invalid_argument("crnn config: need at least one conv block");
  if (n_classes < 1) throw std::invalid_argument("crnn config: n_classes must be >= 1");
  if (n_mels < 1) throw std::invalid_argument("crnn config: n_mels must be >= 1");
  if (gru_layers < 1 || gru_hidden < 1) throw std::invalid_argument("crnn config: empty GRU stack");
  if (kernel % 2 == 0) throw std::invalid_argument("crnn config: kernel must be odd");
  for (auto f : conv_filters)
    if (f < 1) throw std::invalid_argument("crnn config: zero conv filters");
  for (const auto& p : pool_sizes)
    if (p[0] < 1 || p[1] < 1) throw std::invalid_argument("crnn config: zero pool size");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("crnn config: dropout not in [0, 1)");
}

std::size_t CrnnConfig::time_pool() const {
  std::size_t p = 1;
  for (const auto& s : pool_sizes) p *= s[0];
  return p;
}

std::size_t CrnnConfig::output_frames(std::size_t input_frames) const {
  std::size_t t = input_frames;
  for (const auto& s : pool_sizes) t = (t + s[0] - 1) / s[0];
  return t;
}

std::size_t CrnnConfig::output_bands() const {
  std::size_t f = n_mels;
  for (const auto& s : pool_sizes) f = (f + s[1] - 1) / s[1];
  return f;
}

std::vector<std::pair<std::string, const Tensor*>> CrnnParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const std::string p = "conv" + std::to_string(i) + ".";
    out.emplace_back(p + "kernels", &conv[i].kernels);
    out.emplace_back(p + "bias", &conv[i].bias);
  }
  for (std::size_t i = 0; i < gru.size(); ++i) {
    for (int dir = 0; dir < 2; ++dir) {
      const nk::GruWeights& w = dir == 0 ? gru[i].forward : gru[i].backward;
      const std::string p = "gru" + std::to_string(i) + (dir == 0 ? ".fwd." : ".bwd.");
      out.emplace_back(p + "w_ih", &w.w_ih);
      out.emplace_back(p + "w_hh", &w.w_hh);
      out.emplace_back(p + "b_ih", &w.b_ih);
      out.emplace_back(p + "b_hh", &w.b_hh);
    }
  }
  out.emplace_back("attn.w", &attn_w);
  out.emplace_back("attn.b", &attn_b);
  out.emplace_back("cls.w", &cls_w);
  out.emplace_back("cls.b", &cls_b);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> CrnnParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& [name, t] : std::as_const(*this).named()) out.emplace_back(name, const_cast<Tensor*>(t));
  return out;
}

std::vector<Tensor*> CrnnParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::vector<const Tensor*> CrnnParams::tensors() const {
  std::vector<const Tensor*> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::size_t CrnnParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

bool CrnnParams::all_finite() const {
  for (const Tensor* t : tensors())
    if (!t->all_finite()) return false;
  return true;
}

bool operator==(const CrnnParams& a, const CrnnParams& b) {
  if (!(a.config == b.config)) return false;
  const auto ta = a.tensors(), tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (!(*ta[i] == *tb[i])) return false;
  return true;
}

CrnnParams zero_params(const CrnnConfig& cfg) {
  cfg.validate();
  CrnnParams p;
  p.config = cfg;
  std::size_t c_in = 1;
  for (std::size_t f : cfg.conv_filters) {
    p.conv.push_back({Tensor({2 * f, c_in, cfg.kernel, cfg.kernel}), Tensor({2 * f})});
    c_in = f;
  }
  const std::size_t H = cfg.gru_hidden;
  std::size_t d = cfg.gru_input();
  for (std::size_t l = 0; l < cfg.gru_layers; ++l) {
    auto make = [&] {
      return nk::GruWeights{Tensor({3 * H, d}), Tensor({3 * H, H}), Tensor({3 * H}), Tensor({3 * H})};
    };
    p.gru.push_back({make(), make()});
    d = 2 * H;
  }
  p.attn_w = Tensor({cfg.n_classes, 2 * H});
  p.attn_b = Tensor({cfg.n_classes});
  p.cls_w = Tensor({cfg.n_classes, 2 * H});
  p.cls_b = Tensor({cfg.n_classes});
  return p;
}

CrnnParams init_params(const CrnnConfig& cfg, std::uint64_t seed) {
  CrnnParams p = zero_params(cfg);
  std::mt19937_64 rng(seed);
  auto fill = [&](Tensor& t, double fan_in) {
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (auto& v : t.data()) v = dist(rng);
  };
  for (auto& block : p.conv) {
    const double fan_in = static_cast<double>(block.kernels.dim(1) * cfg.kernel * cfg.kernel);
    fill(block.kernels, fan_in);
    fill(block.bias, fan_in);
  }
  const double h = static_cast<double>(cfg.gru_hidden);
  for (auto& layer : p.gru) {
    for (auto* w : {&layer.forward, &layer.backward}) {
      fill(w->w_ih, h);
      fill(w->w_hh, h);
      fill(w->b_ih, h);
      fill(w->b_hh, h);
    }
  }
  const double d = static_cast<double>(2 * cfg.gru_hidden);
  fill(p.attn_w, d);
  fill(p.attn_b, d);
  fill(p.cls_w, d);
  fill(p.cls_b, d);
  return p;
}

std::vector<Var> register_params(Tape& tape, const CrnnParams& params, bool trainable) {
  std::vector<Var> vars;
  for (const Tensor* t : params.tensors()) vars.push_back(tape.leaf(*t, trainable));
  return vars;
}

Var attention_pool(Tape& tape, Var attn_logits, Var frame_probs) {
  const Tensor& a = tape.value(attn_logits);
  if (a.rank() != 2 || a.dim(0) == 0) {
    throw nk::ShapeError("attention_pool: need at least one frame, got " + nk::shape_str(a.shape()));
  }
  const Var weights = nk::softmax_axis0(tape, attn_logits);
  return nk::sum_axis0(tape, nk::mul(tape, weights, frame_probs));
}

Tensor attention_pool(const Tensor& frame_feats, const Tensor& attn_w, const Tensor& attn_b,
                      const Tensor& cls_w, const Tensor& cls_b) {
  Tape tape;
  const Var x = tape.constant(frame_feats);
  const Var logits = nk::linear(tape, x, tape.constant(attn_w), tape.constant(attn_b));
  const Var probs =
      nk::sigmoid(tape, nk::linear(tape, x, tape.constant(cls_w), tape.constant(cls_b)));
  return tape.value(attention_pool(tape, logits, probs));
}

namespace {

Var dropout(Tape& tape, Var x, double rate, std::mt19937_64& rng) {
  const Tensor& v = tape.value(x);
  Tensor mask(v.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  for (auto& m : mask.data()) m = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return nk::mul_const(tape, x, mask);
}

}  // namespace

PredictionVars forward(Tape& tape, const CrnnParams& params, const std::vector<Var>& pv,
                       const Tensor& features, const ForwardOptions& options) {
  const CrnnConfig& cfg = params.config;
  if (features.rank() != 2 || features.dim(1) != cfg.n_mels || features.dim(0) == 0) {
    throw nk::ShapeError("crnn forward: expected features [T, " + std::to_string(cfg.n_mels) +
                         "], got " + nk::shape_str(features.shape()));
  }
  if (pv.size() != params.tensors().size()) {
    throw nk::ShapeError("crnn forward: parameter handle count mismatch");
  }
  std::mt19937_64 rng(options.rng_seed);
  Tensor input = features.reshaped({1, features.dim(0), features.dim(1)});
  if (options.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, options.noise_std);
    for (auto& v : input.data()) v += noise(rng);
  }

  std::size_t k = 0;
  Var x = tape.constant(std::move(input));
  for (std::size_t i = 0; i < params.conv.size(); ++i) {
    x = nk::conv2d(tape, x, pv[k], pv[k + 1]);
    k += 2;
    x = nk::glu(tape, x);
    x = nk::max_pool2d(tape, x, cfg.pool_sizes[i][0], cfg.pool_sizes[i][1]);
  }
  x = nk::to_sequence(tape, x);
  const bool drop = options.dropout_active && cfg.dropout > 0.0;
  for (std::size_t l = 0; l < params.gru.size(); ++l) {
    if (drop) x = dropout(tape, x, cfg.dropout, rng);
    const Var f = nk::gru_pass(tape, x, pv[k], pv[k + 1], pv[k + 2], pv[k + 3], false);
    const Var b = nk::gru_pass(tape, x, pv[k + 4], pv[k + 5], pv[k + 6], pv[k + 7], true);
    k += 8;
    x = nk::concat_cols(tape, f, b);
  }
  if (drop) x = dropout(tape, x, cfg.dropout, rng);
  const Var attn_logits = nk::linear(tape, x, pv[k], pv[k + 1]);
  const Var frame_probs = nk::sigmoid(tape, nk::linear(tape, x, pv[k + 2], pv[k + 3]));
  const Var clip_probs = attention_pool(tape, attn_logits, frame_probs);
  return {frame_probs, clip_probs};
}

Predictions forward(const CrnnParams& params, const Tensor& features, const ForwardOptions& options) {
  Tape tape;
  const auto vars = register_params(tape, params, false);
  const PredictionVars out = forward(tape, params, vars, features, options);
  return {tape.value(out.frame_probs), tape.value(out.clip_probs)};
}

Predictions forward(const CrnnParams& params, const features::FeatureMatrix& features,
                    double noise_std, std::uint64_t rng_seed) {
  if (noise_std < 0.0) throw std::invalid_argument("crnn forward: noise_std must be >= 0");
  return forward(params, features.frames, ForwardOptions{noise_std, rng_seed, false});
}

// ---------------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

constexpr char kMagic[8] = {'C', 'S', 'E', 'D', 'C', 'K', 'P', '1'};

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint64_t get_u64(std::istream& in, const std::string& path) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  if (!in) throw std::runtime_error("checkpoint truncated: " + path);
  return v;
}

double get_f64(std::istream& in, const std::string& path) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  if (!in) throw std::runtime_error("checkpoint truncated: " + path);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const CrnnParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  const CrnnConfig& c = params.config;
  out.write(kMagic, 8);
  put_u64(out, c.n_mels);
  put_u64(out, c.conv_filters.size());
  for (std::size_t i = 0; i < c.conv_filters.size(); ++i) {
    put_u64(out, c.conv_filters[i]);
    put_u64(out, c.pool_sizes[i][0]);
    put_u64(out, c.pool_sizes[i][1]);
  }
  put_u64(out, c.kernel);
  put_u64(out, c.gru_layers);
  put_u64(out, c.gru_hidden);
  put_u64(out, c.n_classes);
  put_f64(out, c.dropout);
  const auto named = params.named();
  put_u64(out, named.size());
  for (const auto& [name, t] : named) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, t->rank());
    for (auto d : t->shape()) put_u64(out, d);
    out.write(reinterpret_cast<const char*>(t->data().data()),
              static_cast<std::streamsize>(t->size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

CrnnParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("not a checkpoint: " + path);
  CrnnConfig c;
  c.n_mels = get_u64(in, path);
  const std::uint64_t blocks = get_u64(in, path);
  if (blocks > 64) throw std::runtime_error("checkpoint corrupt (block count): " + path);
  c.conv_filters.clear();
  c.pool_sizes.clear();
  for (std::uint64_t i = 0; i < blocks; ++i) {
    c.conv_filters.push_back(get_u64(in, path));
    const std::size_t pt = get_u64(in, path);
    const std::size_t pf = get_u64(in, path);
    c.pool_sizes.push_back({pt, pf});
  }
  c.kernel = get_u64(in, path);
  c.gru_layers = get_u64(in, path);
  c.gru_hidden = get_u64(in, path);
  c.n_classes = get_u64(in, path);
  c.dropout = get_f64(in, path);
  CrnnParams p = zero_params(c);
  auto named = p.named();
  if (get_u64(in, path) != named.size()) throw std::runtime_error("checkpoint tensor count mismatch: " + path);
  for (auto& [name, t] : named) {
    const std::uint64_t len = get_u64(in, path);
    if (len > 256) throw std::runtime_error("checkpoint corrupt (name): " + path);
    std::string stored(len, '\0');
    in.read(stored.data(), static_cast<std::streamsize>(len));
    if (stored != name) throw std::runtime_error("checkpoint tensor '" + stored + "' where '" + name + "' expected");
    nk::Shape shape(get_u64(in, path));
    for (auto& d : shape) d = get_u64(in, path);
    if (shape != t->shape()) {
      throw std::runtime_error("checkpoint tensor " + name + " has shape " + nk::shape_str(shape));
    }
    in.read(reinterpret_cast<char*>(t->data().data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint truncated: " + path);
  }
  return p;
}

std::string checkpoint_id(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return hex64(fnv1a64(buf.str()));
}

}  // namespace csed::crnn
