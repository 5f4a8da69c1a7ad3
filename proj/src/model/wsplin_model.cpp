#include "wsplin/model/wsplin_model.hpp"

#include <cstring>
#include <fstream>

#include "wsplin/image.hpp"
#include "wsplin/rng.hpp"

namespace wsplin {

void PipelineConfig::validate() const {
  pyramid.validate();
  if (num_classes < 2) throw InvalidConfigError("need at least 2 classes");
  // -1 marks a label space without a normal class (distress-only recognizers).
  if (normal_class < -1 || normal_class >= num_classes) {
    throw InvalidConfigError("normal_class outside [-1,C)");
  }
  if (strategy == Strategy::SS && !(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidConfigError("alpha must lie in (0,1] for sparse sampling");
  }
  if (lambda < 0.0) throw InvalidConfigError("lambda must be nonnegative");
  if (cdn_dropout < 0.0 || cdn_dropout >= 1.0) {
    throw InvalidConfigError("dropout rate must lie in [0,1)");
  }
  if (!class_names.empty() && static_cast<int>(class_names.size()) != num_classes) {
    throw InvalidConfigError("class_names size differs from num_classes");
  }
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j;
  j["strategy"] = strategy_to_string(strategy);
  j["alpha"] = alpha;
  j["lambda"] = lambda;
  j["num_classes"] = num_classes;
  j["normal_class"] = normal_class;
  j["pyramid"]["layers"] = pyramid.layer_resolutions;
  j["pyramid"]["window"] = pyramid.window_size;
  j["pyramid"]["stride"] = pyramid.stride;
  j["backbone"]["name"] = backbone.name;
  j["backbone"]["in_channels"] = backbone.in_channels;
  j["backbone"]["pretrained"] = backbone.pretrained;
  j["backbone"]["weights_path"] = backbone.weights_path;
  j["cdn_dropout"] = cdn_dropout;
  j["class_names"] = class_names;
  return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  c.alpha = j.at("alpha").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.num_classes = j.at("num_classes").get<int>();
  c.normal_class = j.at("normal_class").get<int>();
  c.pyramid.layer_resolutions = j.at("pyramid").at("layers").get<std::vector<std::pair<int, int>>>();
  c.pyramid.window_size = j.at("pyramid").at("window").get<int>();
  c.pyramid.stride = j.at("pyramid").at("stride").get<int>();
  c.backbone.name = j.at("backbone").at("name").get<std::string>();
  c.backbone.in_channels = j.at("backbone").at("in_channels").get<int>();
  c.backbone.pretrained = j.at("backbone").at("pretrained").get<bool>();
  c.backbone.weights_path = j.at("backbone").at("weights_path").get<std::string>();
  c.cdn_dropout = j.at("cdn_dropout").get<double>();
  c.class_names = j.at("class_names").get<std::vector<std::string>>();
  return c;
}

std::string PipelineConfig::canonical_text() const { return to_json().dump(2) + "\n"; }

WsplinModel::WsplinModel(PipelineConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  m_ = patch_count_for(cfg_.strategy, cfg_.pyramid, cfg_.alpha);

  backbone_ = make_backbone(cfg_.backbone, cfg_.num_classes);

  const int64_t mc = static_cast<int64_t>(m_) * cfg_.num_classes;
  cdn_ = std::make_unique<nn::Sequential>();
  cdn_->add<nn::Affine>(mc, mc);
  cdn_->add<nn::ReLU>();
  cdn_->add<nn::Dropout>(cfg_.cdn_dropout);
  cdn_->add<nn::Affine>(mc, mc);
  cdn_->add<nn::ReLU>();
  cdn_->add<nn::Dropout>(cfg_.cdn_dropout);
  cdn_->add<nn::Affine>(mc, mc);
  cdn_->add<nn::Affine>(mc, cfg_.num_classes);
  cdn_->add<nn::Softmax>();

  int next_slot = 0;
  backbone_->assign_slots(next_slot);
  squash_.assign_slots(next_slot);
  cdn_->assign_slots(next_slot);
  n_slots_ = next_slot;

  backbone_->collect_params(params_);
  cdn_->collect_params(params_);
  for (size_t i = 0; i < params_.size(); ++i) params_[i]->id = static_cast<int>(i);

  std::mt19937_64 rng = make_rng(init_seed, 0x6d6f64656cULL);
  backbone_->init(rng);
  cdn_->init(rng);

  if (!cfg_.backbone.weights_path.empty()) {
    std::vector<std::pair<std::string, Tensor*>> bb_state;
    backbone_->collect_state("backbone", bb_state);
    load_tensor_blocks(cfg_.backbone.weights_path, std::move(bb_state));
  }
}

nn::Ctx WsplinModel::make_ctx(nn::Mode mode, uint64_t rng_seed) const {
  nn::Ctx ctx(n_slots_, static_cast<int>(params_.size()));
  ctx.mode = mode;
  ctx.rng.seed(rng_seed);
  return ctx;
}

Tensor WsplinModel::plin_forward(const Tensor& patches, nn::Ctx& ctx) {
  const int win = cfg_.pyramid.window_size;
  if (patches.ndim() != 4 || patches.dim(0) < 1 || patches.dim(1) != cfg_.backbone.in_channels ||
      patches.dim(2) != win || patches.dim(3) != win) {
    throw ShapeError("patch tensor " + patches.shape_str() + " does not match [m," +
                     std::to_string(cfg_.backbone.in_channels) + "," + std::to_string(win) + "," +
                     std::to_string(win) + "]");
  }
  Tensor logits = backbone_->forward(patches, ctx);
  return squash_.forward(logits, ctx);
}

Tensor WsplinModel::cdn_forward(const Tensor& S, nn::Ctx& ctx) {
  const int64_t mc = static_cast<int64_t>(m_) * cfg_.num_classes;
  if (S.ndim() != 2 || S.dim(0) != m_ || S.dim(1) != cfg_.num_classes) {
    throw ShapeError("confidence matrix " + S.shape_str() + " does not match [" +
                     std::to_string(m_) + "," + std::to_string(cfg_.num_classes) + "]");
  }
  return cdn_->forward(S.reshaped({1, mc}), ctx);
}

WsplinModel::ForwardResult WsplinModel::forward(const Tensor& patches, nn::Ctx& ctx) {
  ForwardResult r;
  r.S = plin_forward(patches, ctx);
  r.probs = cdn_forward(r.S, ctx);
  return r;
}

void WsplinModel::backward(const Tensor& dprobs, const Tensor& dS_extra, nn::Ctx& ctx) {
  Tensor dS_flat = cdn_->backward(dprobs, ctx);
  Tensor dS = dS_flat.reshaped({m_, cfg_.num_classes});
  if (dS_extra.numel() > 0) dS.add_(dS_extra);
  Tensor dlogits = squash_.backward(dS, ctx);
  backbone_->backward(dlogits, ctx);
}

WsplinModel::Prediction WsplinModel::predict(const cv::Mat& image) {
  const cv::Mat adapted = to_channels(image, cfg_.backbone.in_channels);
  PatchSet set = extract_patches(adapted, cfg_.strategy, cfg_.pyramid, cfg_.alpha);
  nn::Ctx ctx = make_ctx(nn::Mode::kEval);
  ForwardResult r = forward(set.patches, ctx);

  Prediction p;
  p.S = std::move(r.S);
  p.patches = std::move(set);
  p.probabilities.resize(static_cast<size_t>(cfg_.num_classes));
  int best = 0;
  for (int c = 0; c < cfg_.num_classes; ++c) {
    p.probabilities[static_cast<size_t>(c)] = r.probs[c];
    if (r.probs[c] > r.probs[best]) best = c;
  }
  p.class_index = best;
  return p;
}

std::vector<std::pair<std::string, Tensor*>> WsplinModel::state() {
  std::vector<std::pair<std::string, Tensor*>> out;
  backbone_->collect_state("backbone", out);
  cdn_->collect_state("cdn", out);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic, u32 version, u64 json length, config json,
// u64 tensor count, then per tensor: u64 name length, name, u32 ndim,
// i64 dims, f64 payload. Little-endian throughout.

namespace {

constexpr char kMagic[8] = {'W', 'S', 'P', 'L', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCheckpointVersion = 1;

template <class T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw CheckpointError("truncated checkpoint");
  return v;
}

void write_tensor_blocks(std::ofstream& f,
                         const std::vector<std::pair<std::string, Tensor*>>& state) {
  write_pod<uint64_t>(f, state.size());
  for (const auto& [name, t] : state) {
    write_pod<uint64_t>(f, name.size());
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(f, static_cast<uint32_t>(t->ndim()));
    for (int d = 0; d < t->ndim(); ++d) write_pod<int64_t>(f, t->dim(d));
    f.write(reinterpret_cast<const char*>(t->data()),
            static_cast<std::streamsize>(t->numel() * sizeof(double)));
  }
}

void read_tensor_blocks(std::ifstream& f, std::vector<std::pair<std::string, Tensor*>>& state) {
  std::vector<bool> filled(state.size(), false);
  const uint64_t count = read_pod<uint64_t>(f);
  for (uint64_t i = 0; i < count; ++i) {
    const uint64_t name_len = read_pod<uint64_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), static_cast<std::streamsize>(name_len));
    const uint32_t ndim = read_pod<uint32_t>(f);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = read_pod<int64_t>(f);

    size_t target = state.size();
    for (size_t s = 0; s < state.size(); ++s) {
      if (state[s].first == name) {
        target = s;
        break;
      }
    }
    if (target == state.size()) throw CheckpointError("unknown tensor '" + name + "'");
    Tensor* t = state[target].second;
    if (t->shape() != shape) {
      throw CheckpointError("tensor '" + name + "' has shape mismatch");
    }
    f.read(reinterpret_cast<char*>(t->data()),
           static_cast<std::streamsize>(t->numel() * sizeof(double)));
    if (!f) throw CheckpointError("truncated checkpoint");
    filled[target] = true;
  }
  for (size_t s = 0; s < state.size(); ++s) {
    if (!filled[s]) throw CheckpointError("tensor '" + state[s].first + "' missing from file");
  }
}

}  // namespace

void WsplinModel::save_checkpoint(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  f.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(f, kCheckpointVersion);
  const std::string js = cfg_.to_json().dump();
  write_pod<uint64_t>(f, js.size());
  f.write(js.data(), static_cast<std::streamsize>(js.size()));
  write_tensor_blocks(f, state());
  if (!f) throw CheckpointError("write failed for '" + path.string() + "'");
}

std::unique_ptr<WsplinModel> WsplinModel::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("'" + path.string() + "' is not a checkpoint");
  }
  const uint32_t version = read_pod<uint32_t>(f);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const uint64_t json_len = read_pod<uint64_t>(f);
  std::string js(json_len, '\0');
  f.read(js.data(), static_cast<std::streamsize>(json_len));
  if (!f) throw CheckpointError("truncated checkpoint");

  PipelineConfig cfg;
  try {
    cfg = PipelineConfig::from_json(nlohmann::json::parse(js));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
  }
  // Weights come from the file itself; do not re-resolve external paths.
  cfg.backbone.weights_path.clear();
  cfg.backbone.pretrained = false;

  auto model = std::make_unique<WsplinModel>(cfg, 0);
  auto state = model->state();
  read_tensor_blocks(f, state);
  return model;
}

void load_tensor_blocks(const std::filesystem::path& path,
                        std::vector<std::pair<std::string, Tensor*>> state) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open weights file '" + path.string() + "'");
  read_tensor_blocks(f, state);
}

}  // namespace wsplin
