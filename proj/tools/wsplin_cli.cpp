#include <CLI11.hpp>
#include <iostream>

#include "wsplin/data/crack500.hpp"
#include "wsplin/data/ingest.hpp"
#include "wsplin/data/synthetic.hpp"
#include "wsplin/image.hpp"
#include "wsplin/parallel.hpp"
#include "wsplin/report/overlay.hpp"
#include "wsplin/train/trainer.hpp"

namespace {

using namespace wsplin;

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitDivergence = 4;

struct TrainArgs {
  std::string setting = "i-det";
  std::string strategy = "ip";
  double alpha = 0.25;
  double lambda = 1e-3;
  std::string backbone = "tiny";
  std::string backbone_weights;
  int channels = 1;
  std::string pyramid = "default";
  int epochs = 30;
  int batch = 8;
  double lr = 8e-4;
  double hold_fraction = 0.25;
  uint64_t seed = 0;
  std::string optimizer = "adam";
  bool no_augment = false;
  std::string manifest;
  std::string out = "run";
  bool alpha_given = false;
};

PyramidSpec pyramid_by_name(const std::string& name) {
  if (name == "default") return PyramidSpec::defaults();
  if (name == "mini") return PyramidSpec::mini();
  throw UsageError("unknown pyramid '" + name + "' (expected default or mini)");
}

int cmd_train(const TrainArgs& a) {
  if (a.alpha_given && a.strategy != "ss") {
    throw UsageError("--alpha only applies to the ss strategy");
  }
  if (!(a.alpha > 0.0 && a.alpha <= 1.0)) throw UsageError("--alpha must lie in (0,1]");
  if (a.lambda < 0.0) throw UsageError("--lambda must be nonnegative");

  const CorpusManifest manifest = CorpusManifest::load(a.manifest);
  const SettingView view = make_setting_view(setting_from_string(a.setting), manifest);

  PipelineConfig cfg;
  cfg.strategy = strategy_from_string(a.strategy);
  cfg.alpha = a.alpha;
  cfg.lambda = a.lambda;
  cfg.pyramid = pyramid_by_name(a.pyramid);
  cfg.backbone.name = a.backbone;
  cfg.backbone.in_channels = a.channels;
  cfg.backbone.weights_path = a.backbone_weights;
  cfg.backbone.pretrained = !a.backbone_weights.empty();

  ScheduleSpec schedule;
  schedule.base_lr = a.lr;
  schedule.hold_fraction = a.hold_fraction;
  schedule.total_epochs = a.epochs;
  schedule.batch_size = a.batch;
  schedule.seed = a.seed;
  schedule.optimizer = a.optimizer;
  schedule.augment = !a.no_augment;

  const TrainResult res = train(view, cfg, schedule, a.out);
  std::cout << "run directory: " << res.run_dir.string() << "\n";
  std::cout << "last checkpoint: " << res.last_checkpoint.string() << "\n";
  std::cout << "best checkpoint: " << res.best_checkpoint.string() << "\n";
  std::cout << "train top-1: " << res.final_train_top1 << "\n";
  return 0;
}

void check_compatible(const WsplinModel& model, const SettingView& view) {
  const PipelineConfig& cfg = model.config();
  if (cfg.num_classes != view.num_classes || cfg.class_names != view.class_names) {
    throw CheckpointError("checkpoint label space does not match the manifest/setting");
  }
}

int cmd_evaluate(const std::string& ckpt, const std::string& detector_ckpt,
                 const std::string& manifest_path, const std::string& setting_str,
                 const std::string& out_dir) {
  const Setting setting = setting_from_string(setting_str);
  const CorpusManifest manifest = CorpusManifest::load(manifest_path);
  const SettingView view = make_setting_view(setting, manifest);

  EvalOutputs outputs;
  if (setting == Setting::IIRecN) {
    if (detector_ckpt.empty()) {
      throw UsageError("--setting ii-rec-n needs --detector-ckpt in addition to --ckpt");
    }
    auto detector = WsplinModel::load_checkpoint(detector_ckpt);
    auto recognizer = WsplinModel::load_checkpoint(ckpt);
    outputs = evaluate_two_stage(*detector, *recognizer, view);
  } else {
    auto model = WsplinModel::load_checkpoint(ckpt);
    check_compatible(*model, view);
    outputs = evaluate_model(*model, view.test, setting_str);
  }
  outputs.report.write(out_dir);
  std::cout << outputs.report.canonical_text();
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& image_path, const std::string& out_dir) {
  auto model = WsplinModel::load_checkpoint(ckpt);
  const cv::Mat img = load_image(image_path);
  const WsplinModel::Prediction pred = model->predict(img);
  const auto& names = model->config().class_names;
  std::cout << "predicted: " << names[static_cast<size_t>(pred.class_index)] << " (index "
            << pred.class_index << ")\n";
  for (size_t c = 0; c < names.size(); ++c) {
    std::cout << "p(" << names[c] << ") = " << pred.probabilities[c] << "\n";
  }
  if (!out_dir.empty()) {
    const OverlayArtifact art =
        render_overlay(img, pred.patches, pred.S, names, 0.5);
    write_overlay(art, out_dir, std::filesystem::path(image_path).stem().string());
  }
  return 0;
}

int cmd_visualize(const std::string& ckpt, const std::string& image_path,
                  const std::string& out_dir, double threshold) {
  auto model = WsplinModel::load_checkpoint(ckpt);
  const cv::Mat img = load_image(image_path);
  const WsplinModel::Prediction pred = model->predict(img);
  const OverlayArtifact art =
      render_overlay(img, pred.patches, pred.S, model->config().class_names, threshold);
  const std::string stem = std::filesystem::path(image_path).stem().string();
  write_overlay(art, out_dir, stem);
  std::cout << "overlay: " << (std::filesystem::path(out_dir) / (stem + "_overlay.png")).string()
            << "\n";
  std::cout << "sidecar: " << (std::filesystem::path(out_dir) / (stem + "_patches.tsv")).string()
            << "\n";
  return 0;
}

int cmd_filter(const std::string& ckpt, const std::string& manifest_path, double threshold,
               const std::string& out_dir) {
  auto model = WsplinModel::load_checkpoint(ckpt);
  const PipelineConfig& cfg = model->config();
  if (cfg.normal_class < 0) {
    throw CheckpointError("filtering needs a checkpoint whose label space has a normal class");
  }
  const CorpusManifest manifest = CorpusManifest::load(manifest_path);

  std::vector<double> scores(manifest.entries.size(), 0.0);
  parallel_for(static_cast<int64_t>(manifest.entries.size()), [&](int64_t i) {
    const cv::Mat img = load_image(manifest.resolve(manifest.entries[static_cast<size_t>(i)]).string());
    const WsplinModel::Prediction pred = model->predict(img);
    scores[static_cast<size_t>(i)] =
        1.0 - pred.probabilities[static_cast<size_t>(cfg.normal_class)];
  });

  CorpusManifest kept = manifest, dropped = manifest;
  kept.entries.clear();
  dropped.entries.clear();
  int64_t kept_distressed = 0, total_distressed = 0;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    const bool distressed = e.class_name != "normal";
    total_distressed += distressed ? 1 : 0;
    if (scores[i] >= threshold) {
      kept.entries.push_back(e);
      kept_distressed += distressed ? 1 : 0;
    } else {
      dropped.entries.push_back(e);
    }
  }
  std::filesystem::create_directories(out_dir);
  kept.save(std::filesystem::path(out_dir) / "kept.txt");
  dropped.save(std::filesystem::path(out_dir) / "dropped.txt");

  std::cout << "kept: " << kept.entries.size() << "\n";
  std::cout << "dropped: " << dropped.entries.size() << "\n";
  if (total_distressed > 0) {
    std::cout << "kept-set recall: "
              << static_cast<double>(kept_distressed) / static_cast<double>(total_distressed)
              << "\n";
    if (!kept.entries.empty()) {
      std::cout << "kept-set precision: "
                << static_cast<double>(kept_distressed) / static_cast<double>(kept.entries.size())
                << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly supervised patch label inference pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a procedural desk-scale corpus");
  SyntheticSpec synth_spec;
  std::string synth_out = "corpus";
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--per-class", synth_spec.images_per_class, "images per class");
  synth->add_option("--classes", synth_spec.num_classes, "number of classes incl. normal");
  synth->add_option("--width", synth_spec.width, "image width");
  synth->add_option("--height", synth_spec.height, "image height");
  synth->add_option("--seed", synth_spec.seed, "rng seed");
  synth->add_option("--train-ratio", synth_spec.train_ratio, "train split fraction");

  // ingest
  auto* ing = app.add_subcommand("ingest", "build a manifest from a class-folder corpus");
  std::string ing_root, ing_out = "manifest.txt";
  double ing_train = 0.5;
  uint64_t ing_seed = 0;
  ing->add_option("--root", ing_root, "corpus root (one folder per class)")->required();
  ing->add_option("--out", ing_out, "manifest file to write");
  ing->add_option("--train-ratio", ing_train, "train split fraction");
  ing->add_option("--seed", ing_seed, "rng seed");

  // crack500
  auto* c500 = app.add_subcommand("crack500", "prepare a detection corpus from masked crack images");
  std::string c500_in, c500_out = "crack500-pdd";
  int c500_normals = 286;
  uint64_t c500_seed = 0;
  c500->add_option("--in", c500_in, "directory of crack images + *_mask files")->required();
  c500->add_option("--out", c500_out, "output directory");
  c500->add_option("--normals", c500_normals, "how many normal images to synthesize");
  c500->add_option("--seed", c500_seed, "rng seed");

  // distress-only
  auto* donly = app.add_subcommand("distress-only",
                                   "derive a distress-only manifest for ii-rec-i training");
  std::string donly_in, donly_out;
  donly->add_option("--in", donly_in, "source manifest")->required();
  donly->add_option("--out", donly_out, "manifest file to write")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a model under a protocol setting");
  TrainArgs ta;
  tr->add_option("--setting", ta.setting, "i-det | i-rec | ii-rec-i")
      ->check(CLI::IsMember({"i-det", "i-rec", "ii-rec-i"}));
  tr->add_option("--strategy", ta.strategy, "sw | ip | ss")
      ->check(CLI::IsMember({"sw", "ip", "ss"}));
  auto* alpha_opt = tr->add_option("--alpha", ta.alpha, "sparse sample ratio in (0,1]");
  tr->add_option("--lambda", ta.lambda, "sparsity constraint weight");
  tr->add_option("--backbone", ta.backbone, "tiny | effnet-b3")
      ->check(CLI::IsMember({"tiny", "effnet-b3"}));
  tr->add_option("--backbone-weights", ta.backbone_weights, "pretrained backbone weights file");
  tr->add_option("--channels", ta.channels, "backbone input channels (1 or 3)");
  tr->add_option("--pyramid", ta.pyramid, "default | mini")
      ->check(CLI::IsMember({"default", "mini"}));
  tr->add_option("--epochs", ta.epochs, "training epochs");
  tr->add_option("--batch", ta.batch, "batch size");
  tr->add_option("--lr", ta.lr, "base learning rate");
  tr->add_option("--hold-fraction", ta.hold_fraction, "flat fraction of the cosine schedule");
  tr->add_option("--seed", ta.seed, "run seed");
  tr->add_option("--optimizer", ta.optimizer, "adam | adam-lookahead")
      ->check(CLI::IsMember({"adam", "adam-lookahead"}));
  tr->add_flag("--no-augment", ta.no_augment, "disable train-time augmentation");
  tr->add_option("--manifest", ta.manifest, "corpus manifest")->required();
  tr->add_option("--out", ta.out, "run directory");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint under a protocol setting");
  std::string ev_ckpt, ev_det_ckpt, ev_manifest, ev_setting = "i-det", ev_out = "eval";
  ev->add_option("--ckpt", ev_ckpt, "checkpoint (the recognizer for ii-rec-n)")->required();
  ev->add_option("--detector-ckpt", ev_det_ckpt, "detector checkpoint for ii-rec-n");
  ev->add_option("--manifest", ev_manifest, "corpus manifest")->required();
  ev->add_option("--setting", ev_setting, "i-det | i-rec | ii-rec-i | ii-rec-n")
      ->check(CLI::IsMember({"i-det", "i-rec", "ii-rec-i", "ii-rec-n"}));
  ev->add_option("--out", ev_out, "report directory");

  // predict
  auto* pr = app.add_subcommand("predict", "classify one image");
  std::string pr_ckpt, pr_image, pr_out;
  pr->add_option("--ckpt", pr_ckpt, "checkpoint")->required();
  pr->add_option("--image", pr_image, "image file")->required();
  pr->add_option("--out", pr_out, "optional overlay/sidecar directory");

  // filter
  auto* fi = app.add_subcommand("filter", "split a manifest by distressed-confidence threshold");
  std::string fi_ckpt, fi_manifest, fi_out = "filtered";
  double fi_threshold = 0.5;
  fi->add_option("--ckpt", fi_ckpt, "detector or one-stage recognizer checkpoint")->required();
  fi->add_option("--manifest", fi_manifest, "corpus manifest")->required();
  fi->add_option("--threshold", fi_threshold, "keep images with distressed score >= T");
  fi->add_option("--out", fi_out, "output directory");

  // visualize
  auto* vi = app.add_subcommand("visualize", "export the patch-label overlay for one image");
  std::string vi_ckpt, vi_image, vi_out = "overlay";
  double vi_threshold = 0.5;
  vi->add_option("--ckpt", vi_ckpt, "checkpoint")->required();
  vi->add_option("--image", vi_image, "image file")->required();
  vi->add_option("--out", vi_out, "output directory");
  vi->add_option("--threshold", vi_threshold, "tag confidence threshold");

  try {
    app.parse(argc, argv);

    if (app.got_subcommand(synth)) {
      const CorpusManifest m = generate_synthetic_corpus(synth_out, synth_spec);
      std::cout << "corpus: " << synth_out << " (" << m.entries.size() << " images, checksum "
                << m.checksum() << ")\n";
      return 0;
    }
    if (app.got_subcommand(ing)) {
      SplitRatios ratios{ing_train, 1.0 - ing_train};
      const IngestResult r = ingest(ing_root, ratios, ing_seed);
      r.manifest.save(ing_out);
      std::cout << "manifest: " << ing_out << " (" << r.manifest.entries.size() << " entries)\n";
      if (!r.quarantined.empty()) {
        const auto qpath = std::filesystem::path(ing_out).parent_path() / "quarantine.txt";
        std::ofstream q(qpath, std::ios::binary);
        for (const std::string& bad : r.quarantined) q << bad << "\n";
        std::cout << "quarantined " << r.quarantined.size() << " unreadable files (see "
                  << qpath.string() << ")\n";
      }
      return 0;
    }
    if (app.got_subcommand(c500)) {
      const Crack500Result r = prepare_crack500_pdd(c500_in, c500_out, c500_normals, c500_seed);
      std::cout << "cracks: " << r.crack_count << ", normals: " << r.normal_count << "\n";
      for (const std::string& w : r.warnings) std::cout << "warning: " << w << "\n";
      std::cout << "manifests: " << (r.out_dir / "manifest_rep0.txt").string() << " .. rep4\n";
      return 0;
    }
    if (app.got_subcommand(donly)) {
      const CorpusManifest m = CorpusManifest::load(donly_in);
      CorpusManifest d = distress_only(m);
      d.base_dir = std::filesystem::path(donly_out).parent_path();
      // Entries stay relative to the source corpus.
      const auto rel = std::filesystem::relative(m.base_dir, d.base_dir.empty()
                                                                 ? std::filesystem::path(".")
                                                                 : d.base_dir);
      for (ManifestEntry& e : d.entries) e.path = (rel / e.path).lexically_normal().string();
      d.save(donly_out);
      std::cout << "manifest: " << donly_out << " (" << d.entries.size() << " entries)\n";
      return 0;
    }
    if (app.got_subcommand(tr)) {
      ta.alpha_given = alpha_opt->count() > 0;
      return cmd_train(ta);
    }
    if (app.got_subcommand(ev)) {
      return cmd_evaluate(ev_ckpt, ev_det_ckpt, ev_manifest, ev_setting, ev_out);
    }
    if (app.got_subcommand(pr)) return cmd_predict(pr_ckpt, pr_image, pr_out);
    if (app.got_subcommand(fi)) return cmd_filter(fi_ckpt, fi_manifest, fi_threshold, fi_out);
    if (app.got_subcommand(vi)) return cmd_visualize(vi_ckpt, vi_image, vi_out, vi_threshold);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const InvalidConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IngestionError& e) {
    std::cerr << "ingestion error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const wsplin::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
