#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "gradcheck.hpp"
#include "wsplin/model/wsplin_model.hpp"

using namespace wsplin;

namespace {

PipelineConfig mini_config(Strategy strategy, int num_classes, double alpha = 0.25,
                           double dropout = 0.5) {
  PipelineConfig cfg;
  cfg.strategy = strategy;
  cfg.alpha = alpha;
  cfg.lambda = 1e-3;
  cfg.num_classes = num_classes;
  cfg.normal_class = 0;
  cfg.pyramid = PyramidSpec::mini();
  cfg.backbone.name = "tiny";
  cfg.backbone.in_channels = 1;
  cfg.cdn_dropout = dropout;
  for (int c = 0; c < num_classes; ++c) cfg.class_names.push_back("class" + std::to_string(c));
  return cfg;
}

Tensor random_patches(int m, int channels, int win, uint64_t seed) {
  Tensor t({m, channels, win, win});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = u(rng);
  return t;
}

nn::Affine& last_affine(nn::Sequential& net) {
  return dynamic_cast<nn::Affine&>(net.at(net.size() - 1));
}

}  // namespace

TEST_CASE("plin forward shapes for the pyramid and slide-window strategies") {
  {
    WsplinModel model(mini_config(Strategy::IP, 8), 1);
    CHECK(model.patch_count() == 17);
    auto ctx = model.make_ctx(nn::Mode::kEval);
    const Tensor S = model.plin_forward(random_patches(17, 1, 40, 1), ctx);
    CHECK(S.shape() == Shape{17, 8});
  }
  {
    WsplinModel model(mini_config(Strategy::SW, 2), 1);
    CHECK(model.patch_count() == 12);
    auto ctx = model.make_ctx(nn::Mode::kEval);
    const Tensor S = model.plin_forward(random_patches(12, 1, 40, 2), ctx);
    CHECK(S.shape() == Shape{12, 2});
  }
  {
    WsplinModel model(mini_config(Strategy::SS, 3), 1);
    CHECK(model.patch_count() == 5);
  }
}

TEST_CASE("plin rejects mis-sized patches") {
  WsplinModel model(mini_config(Strategy::IP, 2), 1);
  auto ctx = model.make_ctx(nn::Mode::kEval);
  CHECK_THROWS_AS(model.plin_forward(random_patches(17, 1, 32, 3), ctx), ShapeError);
  CHECK_THROWS_AS(model.plin_forward(random_patches(17, 3, 40, 3), ctx), ShapeError);
}

TEST_CASE("plin confidences live strictly inside (0,1)") {
  WsplinModel model(mini_config(Strategy::IP, 4), 7);
  auto ctx = model.make_ctx(nn::Mode::kEval);
  const Tensor S = model.plin_forward(random_patches(17, 1, 40, 4), ctx);
  for (int64_t i = 0; i < S.numel(); ++i) {
    CHECK(S[i] > 0.0);
    CHECK(S[i] < 1.0);
  }
}

TEST_CASE("zeroed backbone head squashes every confidence to one half") {
  WsplinModel model(mini_config(Strategy::IP, 8), 5);
  nn::Affine& head = last_affine(model.backbone());
  head.weight.value.fill(0.0);
  head.bias.value.fill(0.0);
  auto ctx = model.make_ctx(nn::Mode::kEval);
  const Tensor S = model.plin_forward(random_patches(17, 1, 40, 5), ctx);
  for (int64_t i = 0; i < S.numel(); ++i) CHECK(S[i] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("cdn layer widths follow m x C") {
  WsplinModel model(mini_config(Strategy::IP, 8), 6);
  auto& first = dynamic_cast<nn::Affine&>(model.cdn().at(0));
  CHECK(first.weight.value.shape() == Shape{136, 136});
  auto& out = dynamic_cast<nn::Affine&>(model.cdn().at(7));
  CHECK(out.weight.value.shape() == Shape{8, 136});
}

TEST_CASE("cdn output is a probability simplex point") {
  WsplinModel model(mini_config(Strategy::IP, 8), 8);
  auto ctx = model.make_ctx(nn::Mode::kEval);
  const auto fwd = model.forward(random_patches(17, 1, 40, 9), ctx);
  double sum = 0.0;
  for (int c = 0; c < 8; ++c) {
    CHECK(fwd.probs[c] >= 0.0);
    sum += fwd.probs[c];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("zeroed cdn output layer yields the uniform distribution") {
  WsplinModel model(mini_config(Strategy::IP, 8), 10);
  // The softmax sits after the last affine; index 7 is the output affine.
  auto& head = dynamic_cast<nn::Affine&>(model.cdn().at(7));
  head.weight.value.fill(0.0);
  head.bias.value.fill(0.0);
  auto ctx = model.make_ctx(nn::Mode::kEval);
  const auto fwd = model.forward(random_patches(17, 1, 40, 11), ctx);
  for (int c = 0; c < 8; ++c) CHECK(fwd.probs[c] == doctest::Approx(1.0 / 8).epsilon(1e-12));
}

TEST_CASE("eval mode is deterministic, dropout only acts in train mode") {
  WsplinModel model(mini_config(Strategy::IP, 4, 0.25, 0.5), 12);
  const Tensor patches = random_patches(17, 1, 40, 12);
  auto ctx1 = model.make_ctx(nn::Mode::kEval, 1);
  auto ctx2 = model.make_ctx(nn::Mode::kEval, 2);
  const auto a = model.forward(patches, ctx1);
  const auto b = model.forward(patches, ctx2);
  for (int c = 0; c < 4; ++c) CHECK(a.probs[c] == b.probs[c]);

  auto t1 = model.make_ctx(nn::Mode::kTrain, 1);
  auto t2 = model.make_ctx(nn::Mode::kTrain, 2);
  const auto ta = model.forward(patches, t1);
  const auto tb = model.forward(patches, t2);
  bool any_diff = false;
  for (int c = 0; c < 4; ++c) any_diff |= ta.probs[c] != tb.probs[c];
  CHECK(any_diff);
}

TEST_CASE("permuting patch rows and the first affine's input columns is a no-op") {
  WsplinModel model(mini_config(Strategy::IP, 3, 0.25, 0.0), 13);
  const int m = model.patch_count();
  const int C = 3;
  Tensor S({m, C});
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int64_t i = 0; i < S.numel(); ++i) S[i] = u(rng);

  auto ctx = model.make_ctx(nn::Mode::kEval);
  const Tensor base = model.cdn_forward(S, ctx);

  // Random permutation of patch rows.
  std::vector<int> perm(static_cast<size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  Tensor S_perm({m, C});
  for (int p = 0; p < m; ++p) {
    for (int c = 0; c < C; ++c) S_perm.at(p, c) = S.at(perm[static_cast<size_t>(p)], c);
  }

  auto& first = dynamic_cast<nn::Affine&>(model.cdn().at(0));
  const Tensor W = first.weight.value;  // mc x mc
  const int64_t mc = static_cast<int64_t>(m) * C;
  Tensor W_perm({mc, mc});
  for (int64_t row = 0; row < mc; ++row) {
    for (int p = 0; p < m; ++p) {
      for (int c = 0; c < C; ++c) {
        W_perm[row * mc + p * C + c] = W[row * mc + perm[static_cast<size_t>(p)] * C + c];
      }
    }
  }
  first.weight.value = W_perm;

  auto ctx2 = model.make_ctx(nn::Mode::kEval);
  const Tensor permuted = model.cdn_forward(S_perm, ctx2);
  for (int c = 0; c < C; ++c) {
    CHECK(permuted[c] == doctest::Approx(base[c]).epsilon(1e-12));
  }
}

TEST_CASE("predict breaks argmax ties toward the lowest class index") {
  WsplinModel model(mini_config(Strategy::IP, 2), 16);
  auto& head = dynamic_cast<nn::Affine&>(model.cdn().at(7));
  head.weight.value.fill(0.0);
  head.bias.value.fill(0.0);
  cv::Mat img(120, 160, CV_8UC1, cv::Scalar(128));
  const auto pred = model.predict(img);
  CHECK(pred.probabilities[0] == doctest::Approx(0.5));
  CHECK(pred.class_index == 0);
}

TEST_CASE("argmax picks the maximum probability") {
  WsplinModel model(mini_config(Strategy::IP, 3), 17);
  // probability vector (0.1, 0.7, 0.2) -> class 1
  std::vector<double> probs = {0.1, 0.7, 0.2};
  int best = 0;
  for (int c = 1; c < 3; ++c) {
    if (probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(best)]) best = c;
  }
  CHECK(best == 1);
}

TEST_CASE("checkpoint round-trips bit-exactly and verifies config") {
  const auto dir = std::filesystem::temp_directory_path() / "wsplin_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.wsplin";

  WsplinModel model(mini_config(Strategy::IP, 4), 18);
  cv::Mat img(120, 160, CV_8UC1);
  std::mt19937_64 rng(19);
  for (int y = 0; y < img.rows; ++y) {
    for (int x = 0; x < img.cols; ++x) {
      img.at<uchar>(y, x) = static_cast<uchar>(rng() % 256);
    }
  }
  const auto before = model.predict(img);
  model.save_checkpoint(path);

  auto loaded = WsplinModel::load_checkpoint(path);
  CHECK(loaded->config().strategy == Strategy::IP);
  CHECK(loaded->config().num_classes == 4);
  CHECK(loaded->patch_count() == 17);
  const auto after = loaded->predict(img);
  CHECK(after.class_index == before.class_index);
  for (int c = 0; c < 4; ++c) CHECK(after.probabilities[c] == before.probabilities[c]);

  // Garbage file -> checkpoint error.
  const auto junk = dir / "junk.wsplin";
  std::ofstream(junk, std::ios::binary) << "not a checkpoint";
  CHECK_THROWS_AS(WsplinModel::load_checkpoint(junk), CheckpointError);

  // Truncated file -> checkpoint error.
  const auto truncated = dir / "trunc.wsplin";
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream(truncated, std::ios::binary)
        << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(WsplinModel::load_checkpoint(truncated), CheckpointError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("pretrained backbone without weights is rejected") {
  PipelineConfig cfg = mini_config(Strategy::IP, 2);
  cfg.backbone.pretrained = true;
  CHECK_THROWS_AS(WsplinModel(cfg, 0), CheckpointError);
}

TEST_CASE("efficientnet-b3 builds with the paper-scale parameter count") {
  BackboneSpec spec;
  spec.name = "effnet-b3";
  spec.in_channels = 1;
  auto net = make_backbone(spec, 2);
  std::vector<nn::Param*> params;
  net->collect_params(params);
  int64_t total = 0;
  for (const auto* p : params) total += p->value.numel();
  // EfficientNet-B3 carries roughly 11M trunk parameters.
  CHECK(total > 9'000'000);
  CHECK(total < 13'000'000);

  int slots = 0;
  net->assign_slots(slots);
  for (size_t i = 0; i < params.size(); ++i) params[i]->id = static_cast<int>(i);
  std::mt19937_64 rng(20);
  net->init(rng);
  nn::Ctx ctx(slots, static_cast<int>(params.size()));
  ctx.mode = nn::Mode::kEval;
  Tensor x = random_patches(1, 1, 64, 21);
  const Tensor y = net->forward(x, ctx);
  CHECK(y.shape() == Shape{1, 2});
  CHECK(std::isfinite(y[0]));
  CHECK(std::isfinite(y[1]));
}

TEST_CASE("composed model gradients match finite differences (m=5, C=3)") {
  PipelineConfig cfg = mini_config(Strategy::SS, 3, 0.25, 0.0);
  WsplinModel model(cfg, 23);
  REQUIRE(model.patch_count() == 5);
  const Tensor patches = random_patches(5, 1, 40, 24);

  SUBCASE("distressed label engages the sparsity path") {
    const auto r = gradcheck::check_model(model, patches, 2, 25, 3);
    CHECK(r.probes > 0);
    CHECK(r.max_rel_err < 1e-3);
  }
  SUBCASE("normal label leaves only the cross-entropy path") {
    const auto r = gradcheck::check_model(model, patches, 0, 26, 3);
    CHECK(r.max_rel_err < 1e-3);
  }
}
