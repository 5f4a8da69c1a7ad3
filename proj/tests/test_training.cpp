#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <numbers>

#include "wsplin/data/synthetic.hpp"
#include "wsplin/train/augment.hpp"
#include "wsplin/train/trainer.hpp"

using namespace wsplin;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("wsplin_train_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

CorpusManifest mini_corpus(const fs::path& dir, int per_class, int classes, uint64_t seed) {
  SyntheticSpec spec;
  spec.images_per_class = per_class;
  spec.num_classes = classes;
  spec.width = 160;
  spec.height = 120;
  spec.seed = seed;
  spec.train_ratio = 0.75;
  return generate_synthetic_corpus(dir, spec);
}

PipelineConfig mini_pipeline(Strategy strategy = Strategy::IP) {
  PipelineConfig cfg;
  cfg.strategy = strategy;
  cfg.pyramid = PyramidSpec::mini();
  cfg.backbone.name = "tiny";
  cfg.backbone.in_channels = 1;
  return cfg;
}

ScheduleSpec mini_schedule(int epochs, uint64_t seed) {
  ScheduleSpec s;
  s.total_epochs = epochs;
  s.batch_size = 4;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("lr schedule holds then cosine-anneals") {
  ScheduleSpec spec;
  spec.base_lr = 8e-4;
  spec.hold_fraction = 0.25;
  CHECK(lr_at(0, 1000, spec) == doctest::Approx(8e-4).epsilon(1e-15));
  CHECK(lr_at(249, 1000, spec) == doctest::Approx(8e-4).epsilon(1e-15));
  // Cosine midpoint: 8e-4 * 0.5 * (1 + cos(pi/2)) = 4e-4.
  CHECK(lr_at(625, 1000, spec) == doctest::Approx(4e-4).epsilon(1e-12));
  CHECK(lr_at(999, 1000, spec) < 1e-8);
  CHECK_THROWS_AS(lr_at(1000, 1000, spec), InvalidConfigError);
}

TEST_CASE("lr schedule is continuous at the hold boundary and non-increasing after") {
  ScheduleSpec spec;
  spec.base_lr = 1e-3;
  spec.hold_fraction = 0.25;
  const int64_t total = 400;
  CHECK(lr_at(100, total, spec) == doctest::Approx(spec.base_lr).epsilon(1e-12));
  double prev = spec.base_lr;
  for (int64_t step = 0; step < total; ++step) {
    const double lr = lr_at(step, total, spec);
    CHECK(lr <= prev + 1e-15);
    prev = lr;
  }
}

TEST_CASE("augment identity parameters leave the image unchanged") {
  cv::Mat img(12, 16, CV_8UC1);
  for (int y = 0; y < img.rows; ++y) {
    for (int x = 0; x < img.cols; ++x) img.at<uchar>(y, x) = static_cast<uchar>(y * 16 + x);
  }
  const cv::Mat out = apply_augment(img, AugmentParams{});
  CHECK(cv::countNonZero(out != img) == 0);
}

TEST_CASE("augment with a fixed seed is reproducible") {
  cv::Mat img(24, 32, CV_8UC1);
  cv::randu(img, 0, 255);  // input fixture only; augmentation draws are seeded
  const cv::Mat a = augment(img, 1234);
  const cv::Mat b = augment(img, 1234);
  CHECK(a.size() == b.size());
  CHECK(cv::countNonZero(a != b) == 0);
}

TEST_CASE("two 180-degree rotations are an involution") {
  cv::Mat img(12, 16, CV_8UC1);
  cv::randu(img, 0, 255);
  AugmentParams p;
  p.rotate_quarters = 2;
  const cv::Mat once = apply_augment(img, p);
  const cv::Mat twice = apply_augment(once, p);
  CHECK(cv::countNonZero(twice != img) == 0);
}

TEST_CASE("setting views enforce manifest invariants") {
  TempDir dir("views");
  const CorpusManifest full = mini_corpus(dir.path / "corpus", 4, 3, 21);

  const SettingView det = make_setting_view(Setting::IDet, full);
  CHECK(det.num_classes == 2);
  CHECK(det.class_names == std::vector<std::string>{"normal", "distressed"});
  CHECK(det.normal_class == 0);

  const SettingView rec = make_setting_view(Setting::IRec, full);
  CHECK(rec.num_classes == 3);
  CHECK(rec.normal_class == 0);

  // II-REC-i rejects manifests that still contain the normal class.
  CHECK_THROWS_AS(make_setting_view(Setting::IIRecI, full), InvalidConfigError);

  CorpusManifest distressed = distress_only(full);
  const SettingView ideal = make_setting_view(Setting::IIRecI, distressed);
  CHECK(ideal.num_classes == 2);
  CHECK(ideal.normal_class == -1);
  for (const auto& s : ideal.train) CHECK(s.class_index >= 0);
}

TEST_CASE("training rejects an empty train manifest") {
  TempDir dir("empty_train");
  CorpusManifest m = mini_corpus(dir.path / "corpus", 2, 2, 31);
  for (auto& e : m.entries) e.split = "test";
  const SettingView view = make_setting_view(Setting::IDet, m);
  CHECK_THROWS_AS(train(view, mini_pipeline(), mini_schedule(1, 0), dir.path / "run"),
                  InvalidConfigError);
}

TEST_CASE("training is bitwise deterministic under a fixed seed") {
  TempDir dir("determinism");
  const CorpusManifest m = mini_corpus(dir.path / "corpus", 5, 2, 41);
  const SettingView view = make_setting_view(Setting::IDet, m);

  const TrainResult a = train(view, mini_pipeline(), mini_schedule(2, 7), dir.path / "run_a");
  const TrainResult b = train(view, mini_pipeline(), mini_schedule(2, 7), dir.path / "run_b");
  const std::string log_a = read_file(a.run_dir / "metrics.log");
  CHECK_FALSE(log_a.empty());
  CHECK(log_a == read_file(b.run_dir / "metrics.log"));
  CHECK(read_file(a.run_dir / "val.log") == read_file(b.run_dir / "val.log"));
  CHECK(read_file(a.last_checkpoint) == read_file(b.last_checkpoint));

  // A different seed takes a different trajectory.
  const TrainResult c = train(view, mini_pipeline(), mini_schedule(2, 8), dir.path / "run_c");
  CHECK(log_a != read_file(c.run_dir / "metrics.log"));
}

TEST_CASE("run directory carries the documented layout") {
  TempDir dir("layout");
  const CorpusManifest m = mini_corpus(dir.path / "corpus", 5, 2, 51);
  const SettingView view = make_setting_view(Setting::IDet, m);
  const TrainResult r = train(view, mini_pipeline(), mini_schedule(2, 3), dir.path / "run");

  CHECK(fs::exists(r.run_dir / "config.json"));
  CHECK(fs::exists(r.run_dir / "metrics.log"));
  CHECK(fs::exists(r.run_dir / "val.log"));
  CHECK(fs::exists(r.run_dir / "checkpoint_last.wsplin"));
  CHECK(fs::exists(r.run_dir / "checkpoint_best.wsplin"));
  CHECK(fs::exists(r.run_dir / "report_val" / "report.txt"));
  CHECK(r.epochs.size() == 2);

  // One record per epoch: epoch, lr, L_c, L_s, total.
  std::ifstream log(r.run_dir / "metrics.log");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    ++lines;
    CHECK(std::count(line.begin(), line.end(), '\t') == 4);
  }
  CHECK(lines == 2);

  // The checkpoint reloads and its config echoes the pipeline.
  auto model = WsplinModel::load_checkpoint(r.last_checkpoint);
  CHECK(model->config().num_classes == 2);
  CHECK(model->config().class_names[0] == "normal");
}

TEST_CASE("training loss decreases on a learnable mini corpus") {
  TempDir dir("learns");
  const CorpusManifest m = mini_corpus(dir.path / "corpus", 6, 2, 61);
  const SettingView view = make_setting_view(Setting::IDet, m);
  ScheduleSpec schedule = mini_schedule(6, 5);
  schedule.augment = false;
  const TrainResult r = train(view, mini_pipeline(), schedule, dir.path / "run");
  REQUIRE(r.epochs.size() == 6);
  CHECK(r.epochs.back().loss_c < r.epochs.front().loss_c);
}

TEST_CASE("two-stage evaluation composes detector and recognizer") {
  TempDir dir("two_stage");
  const CorpusManifest m = mini_corpus(dir.path / "corpus", 5, 3, 71);
  const SettingView full = make_setting_view(Setting::IIRecN, m);

  const SettingView det_view = make_setting_view(Setting::IDet, m);
  const TrainResult det = train(det_view, mini_pipeline(), mini_schedule(2, 9), dir.path / "det");

  const CorpusManifest distressed = distress_only(m);
  const SettingView rec_view = make_setting_view(Setting::IIRecI, distressed);
  const TrainResult rec = train(rec_view, mini_pipeline(), mini_schedule(2, 9), dir.path / "rec");

  auto detector = WsplinModel::load_checkpoint(det.best_checkpoint);
  auto recognizer = WsplinModel::load_checkpoint(rec.best_checkpoint);
  const EvalOutputs out = evaluate_two_stage(*detector, *recognizer, full);
  CHECK(out.predictions.size() == full.test.size());
  CHECK(out.report.num_classes == 3);
  CHECK(out.report.setting == "ii-rec-n");

  // Swapped checkpoints are rejected.
  CHECK_THROWS_AS(evaluate_two_stage(*recognizer, *detector, full), CheckpointError);
}

TEST_CASE("ii-rec-n training is rejected") {
  TempDir dir("recn_train");
  const CorpusManifest m = mini_corpus(dir.path / "corpus", 4, 3, 81);
  const SettingView view = make_setting_view(Setting::IIRecN, m);
  CHECK_THROWS_AS(train(view, mini_pipeline(), mini_schedule(1, 0), dir.path / "run"),
                  InvalidConfigError);
}
