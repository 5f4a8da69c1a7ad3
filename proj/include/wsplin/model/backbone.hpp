#pragma once

#include <memory>
#include <string>

#include "wsplin/nn/layers.hpp"

namespace wsplin {

struct BackboneSpec {
  std::string name = "tiny";  // "tiny" or "effnet-b3"
  int in_channels = 1;
  bool pretrained = false;
  std::string weights_path;  // tensor-block file; required when pretrained

  bool operator==(const BackboneSpec&) const = default;
};

// Builds the patch label inference trunk: a network mapping
// [m, in_channels, win, win] patches to [m, num_classes] scores.
//
// "tiny" is a 4-conv-block net for desk-scale runs; "effnet-b3" is the
// EfficientNet-B3 graph (MBConv blocks with squeeze-excitation, batch norm
// and swish).
std::unique_ptr<nn::Sequential> make_backbone(const BackboneSpec& spec, int num_classes);

}  // namespace wsplin
