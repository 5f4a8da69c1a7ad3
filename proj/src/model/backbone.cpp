#include "wsplin/model/backbone.hpp"

#include <cmath>

#include "wsplin/errors.hpp"

namespace wsplin {

namespace {

std::unique_ptr<nn::Sequential> make_tiny(int in_channels, int num_classes) {
  auto net = std::make_unique<nn::Sequential>();
  int cin = in_channels;
  for (int cout : {8, 16, 32, 64}) {
    net->add<nn::Conv2d>(cin, cout, 3, 2, 1);
    net->add<nn::ReLU>();
    cin = cout;
  }
  net->add<nn::GlobalAvgPool>();
  net->add<nn::Affine>(64, num_classes);
  return net;
}

// Width/depth scaling of the base table, divisor 8.
int round_filters(int filters, double width) {
  double f = filters * width;
  int out = std::max(8, static_cast<int>(f + 4.0) / 8 * 8);
  if (out < 0.9 * f) out += 8;
  return out;
}

int round_repeats(int repeats, double depth) {
  return static_cast<int>(std::ceil(depth * repeats));
}

std::unique_ptr<nn::Sequential> make_efficientnet_b3(int in_channels, int num_classes) {
  constexpr double kWidth = 1.2;
  constexpr double kDepth = 1.4;

  struct BlockArgs {
    int expand, kernel, stride, cin, cout, repeats;
  };
  const BlockArgs base[] = {
      {1, 3, 1, 32, 16, 1},  {6, 3, 2, 16, 24, 2},  {6, 5, 2, 24, 40, 2},
      {6, 3, 2, 40, 80, 3},  {6, 5, 1, 80, 112, 3}, {6, 5, 2, 112, 192, 4},
      {6, 3, 1, 192, 320, 1},
  };

  auto net = std::make_unique<nn::Sequential>();
  const int stem = round_filters(32, kWidth);
  net->add<nn::Conv2d>(in_channels, stem, 3, 2, 1, false);
  net->add<nn::BatchNorm2d>(stem);
  net->add<nn::Swish>();

  for (const BlockArgs& b : base) {
    const int cin0 = round_filters(b.cin, kWidth);
    const int cout = round_filters(b.cout, kWidth);
    const int reps = round_repeats(b.repeats, kDepth);
    for (int r = 0; r < reps; ++r) {
      const int cin = r == 0 ? cin0 : cout;
      const int stride = r == 0 ? b.stride : 1;
      net->add<nn::MBConv>(cin, cout, b.kernel, stride, b.expand);
    }
  }

  const int head = round_filters(1280, kWidth);
  const int last = round_filters(320, kWidth);
  net->add<nn::Conv2d>(last, head, 1, 1, 0, false);
  net->add<nn::BatchNorm2d>(head);
  net->add<nn::Swish>();
  net->add<nn::GlobalAvgPool>();
  net->add<nn::Dropout>(0.3);
  net->add<nn::Affine>(head, num_classes);
  return net;
}

}  // namespace

std::unique_ptr<nn::Sequential> make_backbone(const BackboneSpec& spec, int num_classes) {
  if (spec.pretrained && spec.weights_path.empty()) {
    throw CheckpointError("backbone '" + spec.name +
                          "': pretrained initialization requested but no weights file given");
  }
  if (spec.name == "tiny") return make_tiny(spec.in_channels, num_classes);
  if (spec.name == "effnet-b3") return make_efficientnet_b3(spec.in_channels, num_classes);
  throw InvalidConfigError("unknown backbone '" + spec.name + "' (expected tiny or effnet-b3)");
}

}  // namespace wsplin
