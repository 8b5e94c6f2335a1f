#include "lsvt/distill.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "json.hpp"
#include "lsvt/errors.hpp"
#include "lsvt/image_io.hpp"
#include "lsvt/ops.hpp"
#include "lsvt/rng.hpp"

namespace lsvt {

using nlohmann::json;

void DistillConfig::validate() const {
  if (!(tau_t > 0.0)) throw ConfigError("tau_t must be > 0");
  if (!(tau_s > 0.0)) throw ConfigError("tau_s must be > 0");
  if (tau_t > tau_s) throw ConfigError("tau_t must not exceed tau_s (the teacher is the sharper side)");
  if (!(ema_lambda >= 0.0 && ema_lambda <= 1.0)) throw ConfigError("ema_lambda must lie in [0, 1]");
  if (!(center_momentum >= 0.0 && center_momentum < 1.0)) throw ConfigError("center_momentum must lie in [0, 1)");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0) || !(lr_min >= 0.0) || lr_min > lr) throw ConfigError("need 0 <= lr_min <= lr and lr > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(max_grad_norm >= 0.0)) throw ConfigError("max_grad_norm must be >= 0");
  if (base_size == 0) throw ConfigError("base_size must be >= 1");
  validate_views(global, local, photo);
}

template <typename T>
Tensor<T> teacher_probs(const Tensor<T>& logits, T tau_t, const std::vector<T>& center) {
  if (!(tau_t > T{0})) throw DomainError("teacher temperature must be > 0");
  if (logits.rank() != 2) throw ShapeError("teacher_probs expects B×K logits, got " + to_string(logits.shape()));
  NoTapeScope<T> no_tape;
  if (center.empty()) return softmax_rows(logits.detach(), tau_t);
  if (center.size() != logits.cols()) {
    throw ShapeError("center has " + std::to_string(center.size()) + " entries, logits have " +
                     std::to_string(logits.cols()) + " columns");
  }
  const Tensor<T> c({logits.cols()}, center);
  return softmax_rows(add_bias(logits.detach(), scale(c, T{-1})), tau_t);
}

template <typename T>
Tensor<T> student_log_probs(const Tensor<T>& logits, T tau_s) {
  if (!(tau_s > T{0})) throw DomainError("student temperature must be > 0");
  return log_softmax_rows(logits, tau_s);
}

template <typename T>
Tensor<T> distill_loss(const std::vector<Tensor<T>>& teacher, const std::vector<Tensor<T>>& student,
                       const std::vector<std::pair<std::size_t, std::size_t>>& excluded) {
  if (teacher.empty() || student.empty()) throw ContractError("distill_loss: empty view set");
  for (const auto& t : teacher) {
    if (t.requires_grad()) throw ContractError("distill_loss: teacher outputs must be detached");
  }
  Tensor<T> total;
  std::size_t pairs = 0;
  for (std::size_t g = 0; g < teacher.size(); ++g) {
    for (std::size_t l = 0; l < student.size(); ++l) {
      if (std::find(excluded.begin(), excluded.end(), std::pair{g, l}) != excluded.end()) continue;
      if (teacher[g].shape() != student[l].shape()) {
        throw ShapeError("distill_loss: teacher view " + to_string(teacher[g].shape()) + " vs student view " +
                         to_string(student[l].shape()));
      }
      auto h = soft_cross_entropy(teacher[g], student[l]);
      total = pairs == 0 ? h : add(total, h);
      ++pairs;
    }
  }
  if (pairs == 0) throw ContractError("distill_loss: every pair is excluded");
  return scale(total, static_cast<T>(1.0 / static_cast<double>(pairs)));
}

template <typename T>
void ema_update(ViTModel<T>& teacher, const ViTModel<T>& student, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("EMA coefficient must lie in [0, 1]");
  auto tp = teacher.named_parameters();
  const auto sp = student.named_parameters();
  if (tp.size() != sp.size()) throw ContractError("ema_update: parameter lists differ");
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i].second.shape() != sp[i].second.shape()) {
      throw ContractError("ema_update: shape mismatch at " + tp[i].first);
    }
    auto dst = tp[i].second.mutable_data();
    const auto src = sp[i].second.data();
    if (lambda == 1.0) continue;
    if (lambda == 0.0) {
      std::copy(src.begin(), src.end(), dst.begin());
      continue;
    }
    for (std::size_t k = 0; k < dst.size(); ++k) {
      dst[k] = static_cast<T>(lambda * dst[k] + (1.0 - lambda) * src[k]);
    }
  }
}

template <typename T>
void update_center(std::vector<T>& center, const Tensor<T>& logits, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("center momentum must lie in [0, 1)");
  const std::size_t B = logits.rows(), K = logits.cols();
  if (center.size() != K) throw ShapeError("center length does not match logits");
  const auto& v = logits.values();
  for (std::size_t k = 0; k < K; ++k) {
    double acc = 0.0;
    for (std::size_t b = 0; b < B; ++b) acc += v[b * K + k];
    center[k] = static_cast<T>(momentum * center[k] + (1.0 - momentum) * (acc / static_cast<double>(B)));
  }
}

template <typename T>
double mean_row_entropy(const Tensor<T>& probs) {
  const std::size_t B = probs.rows(), K = probs.cols();
  const auto& v = probs.values();
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < K; ++k) {
      const double p = v[b * K + k];
      if (p > 0.0) total -= p * std::log(p);
    }
  }
  return total / static_cast<double>(B);
}

#define LSVT_INSTANTIATE(T)                                                                          \
  template Tensor<T> teacher_probs<T>(const Tensor<T>&, T, const std::vector<T>&);                   \
  template Tensor<T> student_log_probs<T>(const Tensor<T>&, T);                                      \
  template Tensor<T> distill_loss<T>(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&,   \
                                     const std::vector<std::pair<std::size_t, std::size_t>>&);       \
  template void ema_update<T>(ViTModel<T>&, const ViTModel<T>&, double);                             \
  template void update_center<T>(std::vector<T>&, const Tensor<T>&, double);                         \
  template double mean_row_entropy<T>(const Tensor<T>&);

LSVT_INSTANTIATE(float)
LSVT_INSTANTIATE(double)
#undef LSVT_INSTANTIATE

// ---------------------------------------------------------------------------

TrainerState::TrainerState(const ViTConfig& model, const DistillConfig& cfg, ChannelStats channel_stats)
    : model_config(model),
      config(cfg),
      stats(std::move(channel_stats)),
      student(model, derive_seed(cfg.seed, 0x73747564656e74ULL)),
      teacher(student),
      center(model.proto_dim, 0.0f) {
  config.validate();
  teacher.set_requires_grad(false);
  for (const auto& [name, p] : student.named_parameters()) velocity.emplace_back(p.size(), 0.0f);
}

LoadedImages load_resized(const Manifest& manifest, std::size_t base) {
  LoadedImages out;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto path = manifest.resolve(manifest.records[i]);
    try {
      out.images.push_back(resize_center_crop(to_float(decode_image(path)), base));
      out.kept.push_back(i);
    } catch (const FormatError& e) {
      warn(std::string("skipping undecodable image: ") + e.what());
      ++out.skipped;
    }
  }
  return out;
}

LoadedImages standardize_all(LoadedImages loaded, const ChannelStats& stats) {
  for (auto& im : loaded.images) im = standardize_image(im, im.height, stats);
  return loaded;
}

double cosine_lr(const DistillConfig& config, std::uint64_t step, std::uint64_t total_steps) {
  if (total_steps == 0) return config.lr;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return config.lr_min + 0.5 * (config.lr - config.lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

namespace {

std::vector<Image> view_major(const std::vector<CropSet>& sets, bool globals) {
  std::vector<Image> out;
  const std::size_t views = globals ? sets.front().globals.size() : sets.front().locals.size();
  for (std::size_t v = 0; v < views; ++v)
    for (const auto& s : sets) out.push_back(globals ? s.globals[v] : s.locals[v]);
  return out;
}

std::vector<Tensor<float>> split_views(const Tensor<float>& x, std::size_t views, std::size_t batch) {
  std::vector<Tensor<float>> out;
  for (std::size_t v = 0; v < views; ++v) out.push_back(slice_rows(x, v * batch, batch));
  return out;
}

}  // namespace

double train_step(TrainerState& state, const std::vector<const Image*>& batch,
                  const std::vector<std::uint64_t>& image_ids, double* teacher_entropy,
                  const TapeInspector& inspect) {
  const auto& cfg = state.config;
  if (batch.empty() || batch.size() != image_ids.size()) throw ContractError("train_step: bad batch");
  const std::size_t B = batch.size();
  std::vector<CropSet> sets;
  sets.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    sets.push_back(make_views(*batch[b], cfg.global, cfg.local, cfg.photo,
                              derive_seed(cfg.seed, state.epoch, image_ids[b]), image_ids[b]));
  }
  const auto globals = view_major(sets, true);
  auto student_views = view_major(sets, false);
  const std::size_t ng = cfg.global.count, nl = cfg.local.count;
  std::vector<std::pair<std::size_t, std::size_t>> excluded;
  if (cfg.student_sees_globals) {
    student_views.insert(student_views.end(), globals.begin(), globals.end());
    for (std::size_t g = 0; g < ng; ++g) excluded.emplace_back(g, nl + g);
  }

  Tensor<float> teacher_logits, probs;
  {
    NoTapeScope<float> no_tape;
    teacher_logits = vit_forward(state.teacher, globals).proto_logits;
    probs = teacher_probs(teacher_logits, static_cast<float>(cfg.tau_t),
                          cfg.centering ? state.center : std::vector<float>{});
  }
  if (teacher_entropy) *teacher_entropy = mean_row_entropy(probs);

  Tape<float> tape;
  Tensor<float> loss;
  {
    TapeScope<float> scope(tape);
    state.student.zero_grad();
    // Local views are smaller than global ones, so the two student passes run separately.
    auto logits = vit_forward(state.student, std::vector<Image>(student_views.begin(), student_views.begin() + nl * B))
                      .proto_logits;
    auto logp = split_views(student_log_probs(logits, static_cast<float>(cfg.tau_s)), nl, B);
    if (cfg.student_sees_globals) {
      auto glogits = vit_forward(state.student, globals).proto_logits;
      auto glogp = split_views(student_log_probs(glogits, static_cast<float>(cfg.tau_s)), ng, B);
      logp.insert(logp.end(), glogp.begin(), glogp.end());
    }
    loss = distill_loss(split_views(probs, ng, B), logp, excluded);
  }
  tape.backward(loss);
  if (inspect) inspect(tape);

  auto params = state.student.named_parameters();
  double grad_scale = 1.0;
  if (cfg.max_grad_norm > 0.0) {
    double sq = 0.0;
    for (auto& [name, p] : params)
      for (float g : p.mutable_grad()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > cfg.max_grad_norm) grad_scale = cfg.max_grad_norm / norm;
  }
  const std::uint64_t total = cfg.epochs * state.steps_per_epoch;
  const double lr = cosine_lr(cfg, state.step, total);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].second;
    auto w = p.mutable_data();
    auto g = p.mutable_grad();
    auto& v = state.velocity[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double grad = grad_scale * g[k] + cfg.weight_decay * w[k];
      v[k] = static_cast<float>(cfg.momentum * v[k] + grad);
      w[k] = static_cast<float>(w[k] - lr * v[k]);
    }
  }
  state.student.zero_grad();

  if (cfg.centering) update_center(state.center, teacher_logits, cfg.center_momentum);
  ++state.step;
  if (cfg.ema == EmaGranularity::per_step) ema_update(state.teacher, state.student, cfg.ema_lambda);
  const double value = loss.item();
  state.history.push_back({state.epoch, state.step, value});
  return value;
}

EpochStats train_epoch(TrainerState& state, const std::vector<Image>& images) {
  if (images.empty()) throw ContractError("train_epoch: no training images");
  const auto& cfg = state.config;
  const std::size_t n = images.size();
  state.steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

  std::vector<std::uint64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, 0x7368756666ULL, state.epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

  EpochStats stats;
  stats.epoch = state.epoch;
  stats.images = n;
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::size_t end = std::min(n, start + cfg.batch_size);
    std::vector<const Image*> batch;
    std::vector<std::uint64_t> ids(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
    for (auto id : ids) batch.push_back(&images[id]);
    double entropy = 0.0;
    stats.mean_loss += train_step(state, batch, ids, &entropy);
    stats.teacher_entropy += entropy;
    ++stats.steps;
  }
  stats.mean_loss /= static_cast<double>(stats.steps);
  stats.teacher_entropy /= static_cast<double>(stats.steps);
  if (cfg.ema == EmaGranularity::per_epoch) ema_update(state.teacher, state.student, cfg.ema_lambda);
  ++state.epoch;
  return stats;
}

// ---------------------------------------------------------------------------
// Checkpoint format

namespace {

constexpr char kMagic[4] = {'L', 'S', 'V', 'T'};
constexpr std::uint32_t kTrailer = 0x21444e45;  // "END!"

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string origin) : buf_(std::move(data)), origin_(std::move(origin)) {}
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError("checkpoint '" + origin_ + "' is truncated");
  }
  std::string bytes(std::size_t n) {
    need(n);
    auto out = buf_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str() { return bytes(uint<std::uint32_t>()); }
  bool done() const { return pos_ == buf_.size(); }
  const std::string& origin() const { return origin_; }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
  std::string origin_;
};

json views_json(const ViewSpec& v) {
  return {{"count", v.count}, {"scale_lo", v.scale_lo}, {"scale_hi", v.scale_hi}, {"size", v.size}};
}

ViewSpec views_from(const json& j, ViewKind kind) {
  return {kind, j.at("count").get<std::size_t>(), j.at("scale_lo").get<double>(), j.at("scale_hi").get<double>(),
          j.at("size").get<std::size_t>()};
}

json config_json(const TrainerState& s) {
  const auto& m = s.model_config;
  const auto& c = s.config;
  json model = {{"preset", m.preset},       {"image_size", m.image_size}, {"patch_size", m.patch_size},
                {"channels", m.channels},   {"depth", m.depth},           {"d_model", m.d_model},
                {"heads", m.heads},         {"mlp_ratio", m.mlp_ratio},   {"head_hidden", m.head_hidden},
                {"proto_dim", m.proto_dim}, {"init_std", m.init_std},
                {"head_init_std", m.head_init_std}};
  json distill = {{"tau_t", c.tau_t},
                  {"tau_s", c.tau_s},
                  {"ema", c.ema == EmaGranularity::per_epoch ? "per_epoch" : "per_step"},
                  {"ema_lambda", c.ema_lambda},
                  {"centering", c.centering},
                  {"center_momentum", c.center_momentum},
                  {"epochs", c.epochs},
                  {"batch_size", c.batch_size},
                  {"lr", c.lr},
                  {"lr_min", c.lr_min},
                  {"momentum", c.momentum},
                  {"weight_decay", c.weight_decay},
                  {"max_grad_norm", c.max_grad_norm},
                  {"student_sees_globals", c.student_sees_globals},
                  {"seed", c.seed},
                  {"base_size", c.base_size},
                  {"global", views_json(c.global)},
                  {"local", views_json(c.local)},
                  {"p_flip", c.photo.p_flip},
                  {"p_gray", c.photo.p_gray},
                  {"photo_extra", c.photo.extra},
                  {"jitter", c.photo.jitter},
                  {"p_blur", c.photo.p_blur}};
  json stats = {{"mean", s.stats.mean}, {"std", s.stats.stddev}};
  return {{"model", model}, {"distill", distill}, {"stats", stats}};
}

void parse_config(const json& j, ViTConfig& m, DistillConfig& c, ChannelStats& stats) {
  const auto& jm = j.at("model");
  m.preset = jm.at("preset").get<std::string>();
  m.image_size = jm.at("image_size");
  m.patch_size = jm.at("patch_size");
  m.channels = jm.at("channels");
  m.depth = jm.at("depth");
  m.d_model = jm.at("d_model");
  m.heads = jm.at("heads");
  m.mlp_ratio = jm.at("mlp_ratio");
  m.head_hidden = jm.at("head_hidden");
  m.proto_dim = jm.at("proto_dim");
  m.init_std = jm.at("init_std");
  m.head_init_std = jm.at("head_init_std");
  const auto& jd = j.at("distill");
  c.tau_t = jd.at("tau_t");
  c.tau_s = jd.at("tau_s");
  c.ema = jd.at("ema").get<std::string>() == "per_step" ? EmaGranularity::per_step : EmaGranularity::per_epoch;
  c.ema_lambda = jd.at("ema_lambda");
  c.centering = jd.at("centering");
  c.center_momentum = jd.at("center_momentum");
  c.epochs = jd.at("epochs");
  c.batch_size = jd.at("batch_size");
  c.lr = jd.at("lr");
  c.lr_min = jd.at("lr_min");
  c.momentum = jd.at("momentum");
  c.weight_decay = jd.at("weight_decay");
  c.max_grad_norm = jd.at("max_grad_norm");
  c.student_sees_globals = jd.at("student_sees_globals");
  c.seed = jd.at("seed");
  c.base_size = jd.at("base_size");
  c.global = views_from(jd.at("global"), ViewKind::global);
  c.local = views_from(jd.at("local"), ViewKind::local);
  c.photo.p_flip = jd.at("p_flip");
  c.photo.p_gray = jd.at("p_gray");
  c.photo.extra = jd.at("photo_extra");
  c.photo.jitter = jd.at("jitter");
  c.photo.p_blur = jd.at("p_blur");
  stats.mean = j.at("stats").at("mean").get<std::vector<double>>();
  stats.stddev = j.at("stats").at("std").get<std::vector<double>>();
}

void write_tensor(Writer& w, const std::string& name, const Shape& shape, std::span<const float> values) {
  w.str(name);
  w.uint(std::uint8_t{0});  // dtype code 0 = f32 (1 = f64)
  w.uint(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.uint(static_cast<std::uint64_t>(d));
  for (float v : values) w.f32(v);
}

struct RawTensor {
  Shape shape;
  std::vector<float> values;
};

RawTensor read_tensor(Reader& r, std::string& name) {
  name = r.str();
  const auto dtype = r.uint<std::uint8_t>();
  const auto rank = r.uint<std::uint32_t>();
  if (rank > 8) throw FormatError("checkpoint '" + r.origin() + "': implausible rank for " + name);
  RawTensor t;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    t.shape.push_back(static_cast<std::size_t>(r.uint<std::uint64_t>()));
    count *= t.shape.back();
  }
  const std::size_t width = dtype == 0 ? 4 : dtype == 1 ? 8 : 0;
  if (width == 0) throw FormatError("checkpoint '" + r.origin() + "': unknown dtype code " + std::to_string(dtype));
  r.need(count * width);
  t.values.resize(count);
  for (auto& v : t.values) v = dtype == 0 ? r.f32() : static_cast<float>(r.f64());
  return t;
}

void assign(Tensor<float>& dst, const RawTensor& src, const std::string& name, const std::string& origin) {
  if (dst.shape() != src.shape) {
    throw FormatError("checkpoint '" + origin + "': tensor " + name + " has shape " + to_string(src.shape) +
                      ", model expects " + to_string(dst.shape()));
  }
  std::copy(src.values.begin(), src.values.end(), dst.mutable_data().begin());
}

}  // namespace

void save_checkpoint(const TrainerState& state, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, 4);
  w.uint(kCheckpointVersion);
  w.str(config_json(state).dump());
  const auto sp = state.student.named_parameters();
  const auto tp = state.teacher.named_parameters();
  w.uint(static_cast<std::uint32_t>(sp.size() * 3 + 1));
  for (const auto& [name, p] : sp) write_tensor(w, "student." + name, p.shape(), p.data());
  for (const auto& [name, p] : tp) write_tensor(w, "teacher." + name, p.shape(), p.data());
  for (std::size_t i = 0; i < sp.size(); ++i) {
    write_tensor(w, "momentum." + sp[i].first, sp[i].second.shape(), state.velocity[i]);
  }
  write_tensor(w, "center", {state.center.size()}, state.center);
  w.uint(state.epoch);
  w.uint(state.step);
  w.uint(state.steps_per_epoch);
  w.uint(static_cast<std::uint64_t>(state.history.size()));
  for (const auto& h : state.history) {
    w.uint(h.epoch);
    w.uint(h.step);
    w.f64(h.loss);
  }
  w.uint(kTrailer);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint '" + path.string() + "'");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw FormatError("failed writing checkpoint '" + path.string() + "'");
}

TrainerState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  Reader r({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()}, path.string());
  if (r.bytes(4) != std::string(kMagic, 4)) throw FormatError("'" + path.string() + "' is not a checkpoint (bad magic)");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint '" + path.string() + "' has version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  ViTConfig model;
  DistillConfig cfg;
  ChannelStats stats;
  try {
    parse_config(json::parse(r.str()), model, cfg, stats);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint '" + path.string() + "': bad config block: " + e.what());
  }
  TrainerState state(model, cfg, stats);
  auto sp = state.student.named_parameters();
  auto tp = state.teacher.named_parameters();
  const auto count = r.uint<std::uint32_t>();
  if (count != sp.size() * 3 + 1) throw FormatError("checkpoint '" + path.string() + "': unexpected tensor count");
  std::string name;
  for (auto* group : {&sp, &tp}) {
    const std::string prefix = group == &sp ? "student." : "teacher.";
    for (auto& [pname, p] : *group) {
      const auto t = read_tensor(r, name);
      if (name != prefix + pname) throw FormatError("checkpoint '" + path.string() + "': expected " + prefix + pname + ", found " + name);
      assign(p, t, name, path.string());
    }
  }
  for (std::size_t i = 0; i < sp.size(); ++i) {
    const auto t = read_tensor(r, name);
    if (name != "momentum." + sp[i].first || t.values.size() != state.velocity[i].size()) {
      throw FormatError("checkpoint '" + path.string() + "': bad momentum entry " + name);
    }
    state.velocity[i] = t.values;
  }
  const auto c = read_tensor(r, name);
  if (name != "center" || c.values.size() != state.center.size()) throw FormatError("checkpoint '" + path.string() + "': bad center");
  state.center = c.values;
  state.epoch = r.uint<std::uint64_t>();
  state.step = r.uint<std::uint64_t>();
  state.steps_per_epoch = r.uint<std::uint64_t>();
  const auto n = r.uint<std::uint64_t>();
  r.need(n * 24);
  for (std::uint64_t i = 0; i < n; ++i) {
    LossRecord h;
    h.epoch = r.uint<std::uint64_t>();
    h.step = r.uint<std::uint64_t>();
    h.loss = r.f64();
    state.history.push_back(h);
  }
  if (r.uint<std::uint32_t>() != kTrailer || !r.done()) throw FormatError("checkpoint '" + path.string() + "': bad trailer");
  return state;
}

TeacherBundle load_teacher(const std::filesystem::path& path) {
  auto state = load_checkpoint(path);
  return {std::move(state.teacher), std::move(state.stats), state.config};
}

void write_loss_history_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << "epoch,step,loss\n";
  char buf[64];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof(buf), "%.9g", h.loss);
    out << h.epoch << ',' << h.step << ',' << buf << '\n';
  }
}

}  // namespace lsvt
