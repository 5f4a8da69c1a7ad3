#pragma once

#include <filesystem>
#include <opencv2/core.hpp>
#include <string>
#include <vector>

#include "wsplin/patch_geometry.hpp"

namespace wsplin {

struct OverlayArtifact {
  cv::Mat rendered;          // BGR, source resolution
  std::string sidecar_text;  // one line per patch: geometry + confidence row
};

// Tints every patch box by its top-class confidence (linear alpha from 0 to
// 1) and tags boxes whose confidence exceeds the threshold. The sidecar holds
// the exact PatchBox geometry plus the full confidence row per patch.
OverlayArtifact render_overlay(const cv::Mat& source, const PatchSet& patches, const Tensor& S,
                               const std::vector<std::string>& class_names,
                               double tag_threshold = 0.5);

// Canonical sidecar line formatting, shared with tests.
std::string sidecar_line(const PatchBox& box, const double* confidences, int num_classes);

void write_overlay(const OverlayArtifact& artifact, const std::filesystem::path& out_dir,
                   const std::string& stem);

}  // namespace wsplin
