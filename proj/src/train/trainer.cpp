#include "wsplin/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "wsplin/image.hpp"
#include "wsplin/nn/optim.hpp"
#include "wsplin/train/augment.hpp"
#include "wsplin/objectives.hpp"
#include "wsplin/parallel.hpp"
#include "wsplin/rng.hpp"

namespace wsplin {

Setting setting_from_string(const std::string& s) {
  if (s == "i-det") return Setting::IDet;
  if (s == "i-rec") return Setting::IRec;
  if (s == "ii-rec-i") return Setting::IIRecI;
  if (s == "ii-rec-n") return Setting::IIRecN;
  throw InvalidConfigError("unknown setting '" + s + "'");
}

std::string setting_to_string(Setting s) {
  switch (s) {
    case Setting::IDet: return "i-det";
    case Setting::IRec: return "i-rec";
    case Setting::IIRecI: return "ii-rec-i";
    case Setting::IIRecN: return "ii-rec-n";
  }
  return "?";
}

SettingView make_setting_view(Setting setting, const CorpusManifest& manifest) {
  SettingView view;
  view.setting = setting;
  const bool has_normal = manifest.class_map.count("normal") > 0;

  if (setting == Setting::IIRecI) {
    if (has_normal) {
      throw InvalidConfigError(
          "ii-rec-i requires a distress-only manifest, but this one contains the normal class");
    }
    view.class_names = manifest.class_names();
    view.num_classes = static_cast<int>(view.class_names.size());
    view.normal_class = -1;
    if (view.num_classes < 2) {
      throw InvalidConfigError("ii-rec-i needs at least two distress classes");
    }
  } else if (setting == Setting::IDet) {
    if (!has_normal) throw InvalidConfigError("i-det requires a corpus with a normal class");
    view.class_names = {"normal", "distressed"};
    view.num_classes = 2;
    view.normal_class = 0;
  } else {  // IRec and the full-corpus view of IIRecN
    if (!has_normal) {
      throw InvalidConfigError(setting_to_string(setting) +
                               " requires a corpus with a normal class");
    }
    view.class_names = manifest.class_names();
    view.num_classes = static_cast<int>(view.class_names.size());
    view.normal_class = manifest.class_map.at("normal");
  }

  for (const ManifestEntry& e : manifest.entries) {
    SettingView::Sample s;
    s.path = manifest.resolve(e);
    if (setting == Setting::IDet) {
      s.class_index = e.class_name == "normal" ? 0 : 1;
    } else {
      s.class_index = manifest.class_index(e.class_name);
    }
    if (e.split == "train") {
      view.train.push_back(std::move(s));
    } else {
      view.test.push_back(std::move(s));
    }
  }
  return view;
}

namespace {

struct EvalRaw {
  std::vector<int> predictions;
  std::vector<double> scores;
  std::vector<Tensor> S;
};

EvalRaw eval_on_mats(WsplinModel& model, const std::vector<cv::Mat>& mats, bool keep_S) {
  const PipelineConfig& cfg = model.config();
  EvalRaw out;
  out.predictions.assign(mats.size(), 0);
  if (cfg.normal_class >= 0) out.scores.assign(mats.size(), 0.0);
  if (keep_S) out.S.resize(mats.size());

  parallel_for(static_cast<int64_t>(mats.size()), [&](int64_t i) {
    PatchSet set = extract_patches(mats[static_cast<size_t>(i)], cfg.strategy, cfg.pyramid,
                                   cfg.alpha);
    nn::Ctx ctx = model.make_ctx(nn::Mode::kEval);
    WsplinModel::ForwardResult r = model.forward(set.patches, ctx);
    int best = 0;
    for (int c = 1; c < cfg.num_classes; ++c) {
      if (r.probs[c] > r.probs[best]) best = c;
    }
    out.predictions[static_cast<size_t>(i)] = best;
    if (cfg.normal_class >= 0) {
      out.scores[static_cast<size_t>(i)] = 1.0 - r.probs[cfg.normal_class];
    }
    if (keep_S) out.S[static_cast<size_t>(i)] = std::move(r.S);
  });
  return out;
}

cv::Mat load_adapted(const std::filesystem::path& path, int channels) {
  return to_channels(load_image(path.string()), channels);
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

EvalOutputs evaluate_model(WsplinModel& model, const std::vector<SettingView::Sample>& samples,
                           const std::string& setting_name, bool keep_S) {
  const PipelineConfig& cfg = model.config();
  std::vector<cv::Mat> mats(samples.size());
  parallel_for(static_cast<int64_t>(samples.size()), [&](int64_t i) {
    mats[static_cast<size_t>(i)] = load_adapted(samples[static_cast<size_t>(i)].path,
                                                cfg.backbone.in_channels);
  });
  EvalRaw raw = eval_on_mats(model, mats, keep_S);

  EvalOutputs out;
  out.predictions = std::move(raw.predictions);
  out.scores = std::move(raw.scores);
  out.S = std::move(raw.S);
  out.labels.reserve(samples.size());
  for (const auto& s : samples) out.labels.push_back(s.class_index);
  out.report = make_report(out.predictions, out.scores, out.labels, cfg.class_names, setting_name,
                           std::max(cfg.normal_class, 0));
  return out;
}

TrainResult train(const SettingView& view, PipelineConfig pipeline, const ScheduleSpec& schedule,
                  const std::filesystem::path& out_dir) {
  schedule.validate();
  if (view.setting == Setting::IIRecN) {
    throw InvalidConfigError(
        "ii-rec-n is evaluation-only; train an i-det detector and a ii-rec-i recognizer instead");
  }
  if (view.train.empty()) throw InvalidConfigError("train split is empty");

  pipeline.num_classes = view.num_classes;
  pipeline.class_names = view.class_names;
  pipeline.normal_class = view.normal_class;
  pipeline.validate();

  std::filesystem::create_directories(out_dir);
  {
    nlohmann::json echo;
    echo["pipeline"] = pipeline.to_json();
    echo["schedule"]["base_lr"] = schedule.base_lr;
    echo["schedule"]["hold_fraction"] = schedule.hold_fraction;
    echo["schedule"]["total_epochs"] = schedule.total_epochs;
    echo["schedule"]["batch_size"] = schedule.batch_size;
    echo["schedule"]["seed"] = schedule.seed;
    echo["schedule"]["optimizer"] = schedule.optimizer;
    echo["schedule"]["augment"] = schedule.augment;
    echo["setting"] = setting_to_string(view.setting);
    std::ofstream f(out_dir / "config.json", std::ios::binary);
    f << echo.dump(2) << "\n";
  }

  // Hold out 10% of train for best-checkpoint selection.
  std::vector<size_t> order(view.train.size());
  std::iota(order.begin(), order.end(), size_t{0});
  {
    auto rng = make_rng(schedule.seed, fnv1a64("val-holdout"));
    std::shuffle(order.begin(), order.end(), rng);
  }
  const size_t n_val = view.train.size() / 10;
  std::vector<SettingView::Sample> val_samples, fit_samples;
  for (size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val_samples : fit_samples).push_back(view.train[order[i]]);
  }

  WsplinModel model(pipeline, schedule.seed);
  const PipelineConfig& cfg = model.config();

  std::vector<cv::Mat> fit_mats(fit_samples.size()), val_mats(val_samples.size());
  parallel_for(static_cast<int64_t>(fit_samples.size()), [&](int64_t i) {
    fit_mats[static_cast<size_t>(i)] =
        load_adapted(fit_samples[static_cast<size_t>(i)].path, cfg.backbone.in_channels);
  });
  parallel_for(static_cast<int64_t>(val_samples.size()), [&](int64_t i) {
    val_mats[static_cast<size_t>(i)] =
        load_adapted(val_samples[static_cast<size_t>(i)].path, cfg.backbone.in_channels);
  });

  std::unique_ptr<nn::Optimizer> optimizer;
  {
    auto adam = std::make_unique<nn::Adam>(model.params());
    if (schedule.optimizer == "adam-lookahead") {
      optimizer = std::make_unique<nn::Lookahead>(std::move(adam), model.params());
    } else {
      optimizer = std::move(adam);
    }
  }

  const int64_t n_fit = static_cast<int64_t>(fit_samples.size());
  const int64_t batches_per_epoch = (n_fit + schedule.batch_size - 1) / schedule.batch_size;
  const int64_t total_steps = batches_per_epoch * schedule.total_epochs;
  const int C = cfg.num_classes;
  const bool serialized = model.has_batch_state();

  TrainResult result;
  result.run_dir = out_dir;
  result.last_checkpoint = out_dir / "checkpoint_last.wsplin";
  result.best_checkpoint = out_dir / "checkpoint_best.wsplin";

  std::ofstream metrics_log(out_dir / "metrics.log", std::ios::binary);
  std::ofstream val_log(out_dir / "val.log", std::ios::binary);

  double best_metric = -1.0;
  bool have_best = false;
  int64_t gstep = 0;
  bool saved_any = false;

  for (int epoch = 0; epoch < schedule.total_epochs; ++epoch) {
    std::vector<size_t> epoch_order(fit_samples.size());
    std::iota(epoch_order.begin(), epoch_order.end(), size_t{0});
    {
      auto rng = make_rng(schedule.seed, 0xe90c4, static_cast<uint64_t>(epoch));
      std::shuffle(epoch_order.begin(), epoch_order.end(), rng);
    }
    const double epoch_lr = lr_at(gstep, total_steps, schedule);
    double epoch_ce_sum = 0.0;
    double epoch_sparsity = 0.0;

    for (int64_t b0 = 0; b0 < n_fit; b0 += schedule.batch_size) {
      const int64_t bsz = std::min<int64_t>(schedule.batch_size, n_fit - b0);
      std::vector<Tensor> S_batch(static_cast<size_t>(bsz));
      Tensor probs({bsz, C});
      Tensor labels({bsz, C});
      std::vector<std::vector<Tensor>> sample_grads(static_cast<size_t>(bsz));

      parallel_for(bsz, [&](int64_t i) {
        const size_t pos = static_cast<size_t>(b0 + i);
        const SettingView::Sample& sample = fit_samples[epoch_order[pos]];
        const cv::Mat& cached = fit_mats[epoch_order[pos]];
        const uint64_t sample_seed =
            seed_for(schedule.seed, static_cast<uint64_t>(epoch), static_cast<uint64_t>(pos));

        std::mt19937_64 rng(sample_seed);
        const cv::Mat img =
            schedule.augment ? apply_augment(cached, AugmentParams::draw(rng)) : cached;
        PatchSet set = extract_patches(img, cfg.strategy, cfg.pyramid, cfg.alpha);

        nn::Ctx ctx = model.make_ctx(nn::Mode::kTrain, seed_for(sample_seed, 0xd0));
        WsplinModel::ForwardResult fwd = model.forward(set.patches, ctx);

        const int y = sample.class_index;
        Tensor dprobs({1, static_cast<int64_t>(C)});
        if (fwd.probs[y] > kProbFloor) {
          dprobs[y] = -1.0 / (fwd.probs[y] * static_cast<double>(bsz));
        }

        const bool distressed = cfg.normal_class < 0 || y != cfg.normal_class;
        Tensor dS_extra;
        if (distressed && cfg.lambda > 0.0) dS_extra = Tensor::full(fwd.S.shape(), cfg.lambda);
        model.backward(dprobs, dS_extra, ctx);

        for (int c = 0; c < C; ++c) probs.at(i, c) = fwd.probs[c];
        labels.at(i, y) = 1.0;
        S_batch[static_cast<size_t>(i)] = std::move(fwd.S);
        sample_grads[static_cast<size_t>(i)] = std::move(ctx.grads);
      }, serialized ? 1 : -1);

      const LossBreakdown lb =
          total_loss(probs, labels, S_batch, cfg.lambda, cfg.normal_class);
      if (!std::isfinite(lb.total)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                              (saved_any ? "; last good checkpoint: " + result.last_checkpoint.string()
                                         : "; no checkpoint written yet"));
      }
      epoch_ce_sum += lb.classification * static_cast<double>(bsz);
      epoch_sparsity += lb.sparsity;

      // Ordered reduction keeps runs bitwise reproducible.
      std::vector<Tensor> master(static_cast<size_t>(model.num_params()));
      for (int64_t i = 0; i < bsz; ++i) {
        auto& grads = sample_grads[static_cast<size_t>(i)];
        for (size_t id = 0; id < grads.size(); ++id) {
          if (grads[id].numel() == 0) continue;
          if (master[id].numel() == 0) {
            master[id] = std::move(grads[id]);
          } else {
            master[id].add_(grads[id]);
          }
        }
      }
      optimizer->step(lr_at(gstep, total_steps, schedule), master);
      ++gstep;
    }

    const double loss_c = epoch_ce_sum / static_cast<double>(n_fit);
    const double loss_total = loss_c + cfg.lambda * epoch_sparsity;

    double val_metric = 0.0;
    if (!val_samples.empty()) {
      EvalRaw raw = eval_on_mats(model, val_mats, false);
      std::vector<ScoredSample> scored;
      int64_t correct = 0;
      for (size_t i = 0; i < val_samples.size(); ++i) {
        const int y = val_samples[i].class_index;
        if (raw.predictions[i] == y) ++correct;
        if (cfg.normal_class >= 0) scored.push_back({raw.scores[i], y != cfg.normal_class});
      }
      const double top1 = static_cast<double>(correct) / static_cast<double>(val_samples.size());
      if (cfg.normal_class >= 0) {
        try {
          val_metric = auc(scored);
        } catch (const UndefinedMetricError&) {
          val_metric = top1;
        }
      } else {
        val_metric = top1;
      }
    }

    metrics_log << epoch << "\t" << fmt17(epoch_lr) << "\t" << fmt17(loss_c) << "\t"
                << fmt17(epoch_sparsity) << "\t" << fmt17(loss_total) << "\n";
    metrics_log.flush();
    val_log << epoch << "\t" << fmt17(val_metric) << "\n";
    val_log.flush();

    model.save_checkpoint(result.last_checkpoint);
    saved_any = true;
    if (val_samples.empty() || !have_best || val_metric > best_metric) {
      best_metric = val_metric;
      have_best = true;
      model.save_checkpoint(result.best_checkpoint);
    }

    result.epochs.push_back({epoch, epoch_lr, loss_c, epoch_sparsity, loss_total, val_metric});
  }

  // Final report on the held-out validation split (the train split itself
  // when no holdout exists) plus the train-split accuracy.
  {
    EvalOutputs train_eval = evaluate_model(model, view.train, setting_to_string(view.setting));
    result.final_train_top1 = train_eval.report.top1;
    if (!val_samples.empty()) {
      EvalOutputs val_eval = evaluate_model(model, val_samples, setting_to_string(view.setting));
      val_eval.report.write(out_dir / "report_val");
    } else {
      train_eval.report.write(out_dir / "report_val");
    }
  }
  return result;
}

EvalOutputs evaluate_two_stage(WsplinModel& detector, WsplinModel& recognizer,
                               const SettingView& full_view) {
  const PipelineConfig& det_cfg = detector.config();
  const PipelineConfig& rec_cfg = recognizer.config();
  if (det_cfg.num_classes != 2 || det_cfg.normal_class < 0) {
    throw CheckpointError("first-stage checkpoint is not an i-det detector");
  }
  if (rec_cfg.normal_class >= 0) {
    throw CheckpointError("second-stage checkpoint is not a ii-rec-i recognizer");
  }
  if (full_view.normal_class < 0) {
    throw InvalidConfigError("two-stage evaluation needs a corpus with a normal class");
  }

  // Recognizer classes map into the full label space by name.
  std::vector<int> reco_to_full(rec_cfg.class_names.size());
  for (size_t r = 0; r < rec_cfg.class_names.size(); ++r) {
    const auto it = std::find(full_view.class_names.begin(), full_view.class_names.end(),
                              rec_cfg.class_names[r]);
    if (it == full_view.class_names.end()) {
      throw CheckpointError("recognizer class '" + rec_cfg.class_names[r] +
                            "' not present in the evaluation corpus");
    }
    reco_to_full[r] = static_cast<int>(it - full_view.class_names.begin());
  }

  const auto& samples = full_view.test;
  EvalOutputs out;
  out.predictions.assign(samples.size(), 0);
  out.scores.assign(samples.size(), 0.0);
  out.labels.reserve(samples.size());
  for (const auto& s : samples) out.labels.push_back(s.class_index);

  parallel_for(static_cast<int64_t>(samples.size()), [&](int64_t i) {
    const cv::Mat img = load_image(samples[static_cast<size_t>(i)].path.string());
    WsplinModel::Prediction det = detector.predict(img);
    out.scores[static_cast<size_t>(i)] =
        1.0 - det.probabilities[static_cast<size_t>(det_cfg.normal_class)];
    if (det.class_index == det_cfg.normal_class) {
      out.predictions[static_cast<size_t>(i)] = full_view.normal_class;
    } else {
      WsplinModel::Prediction rec = recognizer.predict(img);
      out.predictions[static_cast<size_t>(i)] = reco_to_full[static_cast<size_t>(rec.class_index)];
    }
  });

  out.report = make_report(out.predictions, out.scores, out.labels, full_view.class_names,
                           "ii-rec-n", full_view.normal_class);
  return out;
}

}  // namespace wsplin
