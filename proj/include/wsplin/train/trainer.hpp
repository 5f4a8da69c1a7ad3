#pragma once

#include <filesystem>

#include "wsplin/data/manifest.hpp"
#include "wsplin/metrics.hpp"
#include "wsplin/model/wsplin_model.hpp"
#include "wsplin/train/schedule.hpp"

namespace wsplin {

// The four application protocols. I-DET collapses labels to normal/distressed,
// I-REC keeps the full class set, II-REC-i trains on distress-only corpora,
// II-REC-n chains a trained detector with a trained recognizer at evaluation
// time.
enum class Setting { IDet, IRec, IIRecI, IIRecN };

Setting setting_from_string(const std::string& s);
std::string setting_to_string(Setting s);

struct SettingView {
  Setting setting = Setting::IRec;
  int num_classes = 0;
  int normal_class = -1;  // -1 when the setting has no normal class
  std::vector<std::string> class_names;

  struct Sample {
    std::filesystem::path path;
    int class_index = 0;
  };
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Maps manifest classes into the setting's label space and checks the
// setting's manifest invariants (e.g. a distress-only corpus for II-REC-i).
SettingView make_setting_view(Setting setting, const CorpusManifest& manifest);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss_c = 0.0;
  double loss_s = 0.0;
  double loss_total = 0.0;
  double val_metric = 0.0;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  std::vector<EpochLog> epochs;
  double final_train_top1 = 0.0;
};

// End-to-end optimization of the total loss over the manifest's train split
// with the adaptive-moment optimizer under the cosine schedule. Emits the run
// directory layout: config.json, metrics.log (one epoch per line: epoch, lr,
// L_c, L_s, total), val.log, checkpoint_last/best, report_val/. Fully
// deterministic under the schedule seed.
TrainResult train(const SettingView& view, PipelineConfig pipeline, const ScheduleSpec& schedule,
                  const std::filesystem::path& out_dir);

struct EvalOutputs {
  EvaluationReport report;
  std::vector<int> predictions;
  std::vector<double> scores;  // distressed scores; empty when no normal class
  std::vector<int> labels;
  std::vector<Tensor> S;  // filled when keep_S
};

EvalOutputs evaluate_model(WsplinModel& model, const std::vector<SettingView::Sample>& samples,
                           const std::string& setting_name, bool keep_S = false);

// Chained protocol: the detector labels every test image; images it calls
// normal keep that label, the rest are relabeled by the recognizer, and the
// report is computed against ground truth over all images so detector misses
// accumulate into the final error.
EvalOutputs evaluate_two_stage(WsplinModel& detector, WsplinModel& recognizer,
                               const SettingView& full_view);

}  // namespace wsplin
