#include "wsplin/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace wsplin::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

namespace {

double uniform_fan_in(std::mt19937_64& rng, double fan_in) {
  const double a = 1.0 / std::sqrt(fan_in);
  return std::uniform_real_distribution<double>(-a, a)(rng);
}

void init_uniform(Tensor& t, std::mt19937_64& rng, double fan_in) {
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniform_fan_in(rng, fan_in);
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

void Layer::collect_state(const std::string& prefix,
                          std::vector<std::pair<std::string, Tensor*>>& out) {
  std::vector<Param*> params;
  collect_params(params);
  for (Param* p : params) out.emplace_back(prefix + "." + p->name, &p->value);
}

// ---------------------------------------------------------------------------
// Affine

Affine::Affine(int64_t in, int64_t out) : in_(in), out_(out) {
  weight = {"weight", Tensor({out, in})};
  bias = {"bias", Tensor({out})};
}

void Affine::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

void Affine::init(std::mt19937_64& rng) {
  init_uniform(weight.value, rng, static_cast<double>(in_));
  bias.value.fill(0.0);
}

Tensor Affine::forward(const Tensor& x, Ctx& ctx) {
  if (x.ndim() != 2 || x.dim(1) != in_) {
    throw ShapeError("affine expects [N," + std::to_string(in_) + "], got " + x.shape_str());
  }
  const int64_t n = x.dim(0);
  Tensor y({n, out_});
  CMapMat X(x.data(), n, in_);
  CMapMat W(weight.value.data(), out_, in_);
  MapMat Y(y.data(), n, out_);
  Y.noalias() = X * W.transpose();
  Y.rowwise() += CMapVec(bias.value.data(), out_).transpose();
  ctx.slot(slot_) = {x};
  return y;
}

Tensor Affine::backward(const Tensor& gy, Ctx& ctx) {
  const Tensor& x = ctx.slot(slot_)[0];
  const int64_t n = x.dim(0);
  CMapMat X(x.data(), n, in_);
  CMapMat GY(gy.data(), n, out_);
  CMapMat W(weight.value.data(), out_, in_);

  Tensor& gw = ctx.grad_for(weight);
  Tensor& gb = ctx.grad_for(bias);
  MapMat GW(gw.data(), out_, in_);
  MapVec GB(gb.data(), out_);
  GW.noalias() += GY.transpose() * X;
  GB.noalias() += GY.colwise().sum().transpose();

  Tensor gx({n, in_});
  MapMat GX(gx.data(), n, in_);
  GX.noalias() = GY * W;
  return gx;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int cin, int cout, int kernel, int stride, int pad, bool use_bias)
    : cin_(cin), cout_(cout), k_(kernel), stride_(stride), pad_(pad), use_bias_(use_bias) {
  weight = {"weight", Tensor({cout, cin, kernel, kernel})};
  if (use_bias_) bias = {"bias", Tensor({cout})};
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight);
  if (use_bias_) out.push_back(&bias);
}

void Conv2d::init(std::mt19937_64& rng) {
  init_uniform(weight.value, rng, static_cast<double>(cin_) * k_ * k_);
  if (use_bias_) bias.value.fill(0.0);
}

namespace {

// col layout: [C*k*k] rows x [N*OH*OW] columns, row-major.
void im2col(const double* x, int64_t n, int c, int h, int w, int k, int stride, int pad,
            int oh, int ow, double* col) {
  const int64_t cols = n * oh * ow;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* crow = col + ((static_cast<int64_t>(ci) * k + ky) * k + kx) * cols;
        for (int64_t ni = 0; ni < n; ++ni) {
          const double* xc = x + (ni * c + ci) * h * w;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            double* dst = crow + (ni * oh + oy) * ow;
            if (iy < 0 || iy >= h) {
              std::fill(dst, dst + ow, 0.0);
              continue;
            }
            const double* xrow = xc + static_cast<int64_t>(iy) * w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride - pad + kx;
              dst[ox] = (ix >= 0 && ix < w) ? xrow[ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int64_t n, int c, int h, int w, int k, int stride, int pad,
                int oh, int ow, double* gx) {
  const int64_t cols = n * oh * ow;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* crow = col + ((static_cast<int64_t>(ci) * k + ky) * k + kx) * cols;
        for (int64_t ni = 0; ni < n; ++ni) {
          double* xc = gx + (ni * c + ci) * h * w;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const double* src = crow + (ni * oh + oy) * ow;
            double* xrow = xc + static_cast<int64_t>(iy) * w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < w) xrow[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, Ctx& ctx) {
  if (x.ndim() != 4 || x.dim(1) != cin_) {
    throw ShapeError("conv expects [N," + std::to_string(cin_) + ",H,W], got " + x.shape_str());
  }
  const int64_t n = x.dim(0);
  const int h = static_cast<int>(x.dim(2));
  const int w = static_cast<int>(x.dim(3));
  const int oh = (h + 2 * pad_ - k_) / stride_ + 1;
  const int ow = (w + 2 * pad_ - k_) / stride_ + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv output collapsed to zero");

  const int64_t kk = static_cast<int64_t>(cin_) * k_ * k_;
  const int64_t cols = n * oh * ow;
  Tensor col({kk, cols});
  im2col(x.data(), n, cin_, h, w, k_, stride_, pad_, oh, ow, col.data());

  Tensor ymat({cout_, cols});
  {
    CMapMat W(weight.value.data(), cout_, kk);
    CMapMat COL(col.data(), kk, cols);
    MapMat Y(ymat.data(), cout_, cols);
    Y.noalias() = W * COL;
    if (use_bias_) Y.colwise() += CMapVec(bias.value.data(), cout_);
  }

  Tensor y({n, cout_, oh, ow});
  const int64_t hw = static_cast<int64_t>(oh) * ow;
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int co = 0; co < cout_; ++co) {
      const double* src = ymat.data() + co * cols + ni * hw;
      double* dst = y.data() + (ni * cout_ + co) * hw;
      std::copy(src, src + hw, dst);
    }
  }
  ctx.slot(slot_) = {x};
  return y;
}

Tensor Conv2d::backward(const Tensor& gy, Ctx& ctx) {
  const Tensor& x = ctx.slot(slot_)[0];
  const int64_t n = x.dim(0);
  const int h = static_cast<int>(x.dim(2));
  const int w = static_cast<int>(x.dim(3));
  const int oh = static_cast<int>(gy.dim(2));
  const int ow = static_cast<int>(gy.dim(3));
  const int64_t kk = static_cast<int64_t>(cin_) * k_ * k_;
  const int64_t cols = n * oh * ow;
  const int64_t hw = static_cast<int64_t>(oh) * ow;

  Tensor gymat({cout_, cols});
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int co = 0; co < cout_; ++co) {
      const double* src = gy.data() + (ni * cout_ + co) * hw;
      double* dst = gymat.data() + co * cols + ni * hw;
      std::copy(src, src + hw, dst);
    }
  }

  Tensor col({kk, cols});
  im2col(x.data(), n, cin_, h, w, k_, stride_, pad_, oh, ow, col.data());

  Tensor& gw = ctx.grad_for(weight);
  {
    CMapMat GY(gymat.data(), cout_, cols);
    CMapMat COL(col.data(), kk, cols);
    MapMat GW(gw.data(), cout_, kk);
    GW.noalias() += GY * COL.transpose();
    if (use_bias_) {
      MapVec GB(ctx.grad_for(bias).data(), cout_);
      GB.noalias() += GY.rowwise().sum();
    }
  }

  Tensor dcol({kk, cols});
  {
    CMapMat W(weight.value.data(), cout_, kk);
    CMapMat GY(gymat.data(), cout_, cols);
    MapMat DCOL(dcol.data(), kk, cols);
    DCOL.noalias() = W.transpose() * GY;
  }

  Tensor gx = Tensor::zeros(x.shape());
  col2im_add(dcol.data(), n, cin_, h, w, k_, stride_, pad_, oh, ow, gx.data());
  return gx;
}

// ---------------------------------------------------------------------------
// DepthwiseConv2d

DepthwiseConv2d::DepthwiseConv2d(int channels, int kernel, int stride, int pad, bool use_bias)
    : c_(channels), k_(kernel), stride_(stride), pad_(pad), use_bias_(use_bias) {
  weight = {"weight", Tensor({channels, kernel, kernel})};
  if (use_bias_) bias = {"bias", Tensor({channels})};
}

void DepthwiseConv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight);
  if (use_bias_) out.push_back(&bias);
}

void DepthwiseConv2d::init(std::mt19937_64& rng) {
  init_uniform(weight.value, rng, static_cast<double>(k_) * k_);
  if (use_bias_) bias.value.fill(0.0);
}

Tensor DepthwiseConv2d::forward(const Tensor& x, Ctx& ctx) {
  if (x.ndim() != 4 || x.dim(1) != c_) {
    throw ShapeError("depthwise conv expects [N," + std::to_string(c_) + ",H,W], got " +
                     x.shape_str());
  }
  const int64_t n = x.dim(0);
  const int h = static_cast<int>(x.dim(2));
  const int w = static_cast<int>(x.dim(3));
  const int oh = (h + 2 * pad_ - k_) / stride_ + 1;
  const int ow = (w + 2 * pad_ - k_) / stride_ + 1;
  Tensor y({n, c_, oh, ow});
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int c = 0; c < c_; ++c) {
      const double* xc = x.data() + (ni * c_ + c) * h * w;
      const double* wc = weight.value.data() + static_cast<int64_t>(c) * k_ * k_;
      const double b = use_bias_ ? bias.value[c] : 0.0;
      double* yc = y.data() + (ni * c_ + c) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= w) continue;
              acc += wc[ky * k_ + kx] * xc[static_cast<int64_t>(iy) * w + ix];
            }
          }
          yc[static_cast<int64_t>(oy) * ow + ox] = acc;
        }
      }
    }
  }
  ctx.slot(slot_) = {x};
  return y;
}

Tensor DepthwiseConv2d::backward(const Tensor& gy, Ctx& ctx) {
  const Tensor& x = ctx.slot(slot_)[0];
  const int64_t n = x.dim(0);
  const int h = static_cast<int>(x.dim(2));
  const int w = static_cast<int>(x.dim(3));
  const int oh = static_cast<int>(gy.dim(2));
  const int ow = static_cast<int>(gy.dim(3));

  Tensor& gw = ctx.grad_for(weight);
  Tensor* gb = use_bias_ ? &ctx.grad_for(bias) : nullptr;
  Tensor gx = Tensor::zeros(x.shape());

  for (int64_t ni = 0; ni < n; ++ni) {
    for (int c = 0; c < c_; ++c) {
      const double* xc = x.data() + (ni * c_ + c) * h * w;
      const double* wc = weight.value.data() + static_cast<int64_t>(c) * k_ * k_;
      const double* gyc = gy.data() + (ni * c_ + c) * oh * ow;
      double* gwc = gw.data() + static_cast<int64_t>(c) * k_ * k_;
      double* gxc = gx.data() + (ni * c_ + c) * h * w;
      double gbc = 0.0;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const double g = gyc[static_cast<int64_t>(oy) * ow + ox];
          gbc += g;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= w) continue;
              gwc[ky * k_ + kx] += g * xc[static_cast<int64_t>(iy) * w + ix];
              gxc[static_cast<int64_t>(iy) * w + ix] += g * wc[ky * k_ + kx];
            }
          }
        }
      }
      if (gb) (*gb)[c] += gbc;
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, double eps, double momentum)
    : c_(channels), eps_(eps), momentum_(momentum) {
  gamma = {"gamma", Tensor({channels})};
  beta = {"beta", Tensor({channels})};
  running_mean = Tensor({channels});
  running_var = Tensor::full({channels}, 1.0);
}

void BatchNorm2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

void BatchNorm2d::collect_state(const std::string& prefix,
                                std::vector<std::pair<std::string, Tensor*>>& out) {
  Layer::collect_state(prefix, out);
  out.emplace_back(prefix + ".running_mean", &running_mean);
  out.emplace_back(prefix + ".running_var", &running_var);
}

void BatchNorm2d::init(std::mt19937_64&) {
  gamma.value.fill(1.0);
  beta.value.fill(0.0);
  running_mean.fill(0.0);
  running_var.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, Ctx& ctx) {
  const int64_t n = x.dim(0);
  const int64_t hw = x.dim(2) * x.dim(3);
  const int64_t m = n * hw;
  Tensor xhat(x.shape());
  Tensor invstd({c_});

  if (ctx.mode == Mode::kTrain) {
    for (int c = 0; c < c_; ++c) {
      double mean = 0.0;
      for (int64_t ni = 0; ni < n; ++ni) {
        const double* xc = x.data() + (ni * c_ + c) * hw;
        for (int64_t i = 0; i < hw; ++i) mean += xc[i];
      }
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (int64_t ni = 0; ni < n; ++ni) {
        const double* xc = x.data() + (ni * c_ + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const double d = xc[i] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(m);
      const double istd = 1.0 / std::sqrt(var + eps_);
      invstd[c] = istd;
      for (int64_t ni = 0; ni < n; ++ni) {
        const double* xc = x.data() + (ni * c_ + c) * hw;
        double* hc = xhat.data() + (ni * c_ + c) * hw;
        for (int64_t i = 0; i < hw; ++i) hc[i] = (xc[i] - mean) * istd;
      }
      const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
      running_mean[c] = (1.0 - momentum_) * running_mean[c] + momentum_ * mean;
      running_var[c] = (1.0 - momentum_) * running_var[c] + momentum_ * unbiased;
    }
  } else {
    for (int c = 0; c < c_; ++c) {
      const double istd = 1.0 / std::sqrt(running_var[c] + eps_);
      invstd[c] = istd;
      const double mean = running_mean[c];
      for (int64_t ni = 0; ni < n; ++ni) {
        const double* xc = x.data() + (ni * c_ + c) * hw;
        double* hc = xhat.data() + (ni * c_ + c) * hw;
        for (int64_t i = 0; i < hw; ++i) hc[i] = (xc[i] - mean) * istd;
      }
    }
  }

  Tensor y(x.shape());
  for (int c = 0; c < c_; ++c) {
    const double g = gamma.value[c];
    const double b = beta.value[c];
    for (int64_t ni = 0; ni < n; ++ni) {
      const double* hc = xhat.data() + (ni * c_ + c) * hw;
      double* yc = y.data() + (ni * c_ + c) * hw;
      for (int64_t i = 0; i < hw; ++i) yc[i] = g * hc[i] + b;
    }
  }
  Tensor mode_flag({1});
  mode_flag[0] = ctx.mode == Mode::kTrain ? 1.0 : 0.0;
  ctx.slot(slot_) = {std::move(xhat), std::move(invstd), std::move(mode_flag)};
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy, Ctx& ctx) {
  auto& saved = ctx.slot(slot_);
  const Tensor& xhat = saved[0];
  const Tensor& invstd = saved[1];
  const bool train = saved[2][0] != 0.0;
  const int64_t n = gy.dim(0);
  const int64_t hw = gy.dim(2) * gy.dim(3);
  const int64_t m = n * hw;

  Tensor& gg = ctx.grad_for(gamma);
  Tensor& gb = ctx.grad_for(beta);
  Tensor gx(gy.shape());

  for (int c = 0; c < c_; ++c) {
    double sum_gy = 0.0, sum_gy_xhat = 0.0;
    for (int64_t ni = 0; ni < n; ++ni) {
      const double* gc = gy.data() + (ni * c_ + c) * hw;
      const double* hc = xhat.data() + (ni * c_ + c) * hw;
      for (int64_t i = 0; i < hw; ++i) {
        sum_gy += gc[i];
        sum_gy_xhat += gc[i] * hc[i];
      }
    }
    gg[c] += sum_gy_xhat;
    gb[c] += sum_gy;
    const double g = gamma.value[c];
    const double istd = invstd[c];
    if (train) {
      const double mean_gy = sum_gy / static_cast<double>(m);
      const double mean_gy_xhat = sum_gy_xhat / static_cast<double>(m);
      for (int64_t ni = 0; ni < n; ++ni) {
        const double* gc = gy.data() + (ni * c_ + c) * hw;
        const double* hc = xhat.data() + (ni * c_ + c) * hw;
        double* xc = gx.data() + (ni * c_ + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          xc[i] = g * istd * (gc[i] - mean_gy - hc[i] * mean_gy_xhat);
        }
      }
    } else {
      for (int64_t ni = 0; ni < n; ++ni) {
        const double* gc = gy.data() + (ni * c_ + c) * hw;
        double* xc = gx.data() + (ni * c_ + c) * hw;
        for (int64_t i = 0; i < hw; ++i) xc[i] = g * istd * gc[i];
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Activations

Tensor ReLU::forward(const Tensor& x, Ctx& ctx) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  ctx.slot(slot_) = {y};
  return y;
}

Tensor ReLU::backward(const Tensor& gy, Ctx& ctx) {
  const Tensor& y = ctx.slot(slot_)[0];
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = y[i] > 0.0 ? gy[i] : 0.0;
  return gx;
}

Tensor Sigmoid::forward(const Tensor& x, Ctx& ctx) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = sigmoid(x[i]);
  ctx.slot(slot_) = {y};
  return y;
}

Tensor Sigmoid::backward(const Tensor& gy, Ctx& ctx) {
  const Tensor& y = ctx.slot(slot_)[0];
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * y[i] * (1.0 - y[i]);
  return gx;
}

Tensor Swish::forward(const Tensor& x, Ctx& ctx) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] * sigmoid(x[i]);
  ctx.slot(slot_) = {x};
  return y;
}

Tensor Swish::backward(const Tensor& gy, Ctx& ctx) {
  const Tensor& x = ctx.slot(slot_)[0];
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i) {
    const double s = sigmoid(x[i]);
    gx[i] = gy[i] * (s * (1.0 + x[i] * (1.0 - s)));
  }
  return gx;
}

Dropout::Dropout(double rate) : rate_(rate) {
  if (rate < 0.0 || rate >= 1.0) throw InvalidConfigError("dropout rate must lie in [0,1)");
}

Tensor Dropout::forward(const Tensor& x, Ctx& ctx) {
  if (ctx.mode != Mode::kTrain || rate_ == 0.0) {
    ctx.slot(slot_).clear();
    return x;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double scale = 1.0 / (1.0 - rate_);
  Tensor mask(x.shape());
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double keep = u(ctx.rng) >= rate_ ? scale : 0.0;
    mask[i] = keep;
    y[i] = x[i] * keep;
  }
  ctx.slot(slot_) = {std::move(mask)};
  return y;
}

Tensor Dropout::backward(const Tensor& gy, Ctx& ctx) {
  auto& saved = ctx.slot(slot_);
  if (saved.empty()) return gy;
  const Tensor& mask = saved[0];
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * mask[i];
  return gx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, Ctx& ctx) {
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  for (int64_t i = 0; i < n * c; ++i) {
    const double* xc = x.data() + i * hw;
    double sum = 0.0;
    for (int64_t j = 0; j < hw; ++j) sum += xc[j];
    y[i] = sum / static_cast<double>(hw);
  }
  Tensor dims({4});
  for (int d = 0; d < 4; ++d) dims[d] = static_cast<double>(x.dim(d));
  ctx.slot(slot_) = {std::move(dims)};
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& gy, Ctx& ctx) {
  const Tensor& dims = ctx.slot(slot_)[0];
  const int64_t n = static_cast<int64_t>(dims[0]);
  const int64_t c = static_cast<int64_t>(dims[1]);
  const int64_t h = static_cast<int64_t>(dims[2]);
  const int64_t w = static_cast<int64_t>(dims[3]);
  const int64_t hw = h * w;
  Tensor gx({n, c, h, w});
  for (int64_t i = 0; i < n * c; ++i) {
    const double g = gy[i] / static_cast<double>(hw);
    double* xc = gx.data() + i * hw;
    std::fill(xc, xc + hw, g);
  }
  return gx;
}

Tensor Softmax::forward(const Tensor& x, Ctx& ctx) {
  const int64_t n = x.dim(0), c = x.dim(1);
  Tensor y(x.shape());
  for (int64_t i = 0; i < n; ++i) {
    const double* xi = x.data() + i * c;
    double* yi = y.data() + i * c;
    double mx = xi[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    for (int64_t j = 0; j < c; ++j) yi[j] /= sum;
  }
  ctx.slot(slot_) = {y};
  return y;
}

Tensor Softmax::backward(const Tensor& gy, Ctx& ctx) {
  const Tensor& y = ctx.slot(slot_)[0];
  const int64_t n = y.dim(0), c = y.dim(1);
  Tensor gx(y.shape());
  for (int64_t i = 0; i < n; ++i) {
    const double* yi = y.data() + i * c;
    const double* gi = gy.data() + i * c;
    double dot = 0.0;
    for (int64_t j = 0; j < c; ++j) dot += gi[j] * yi[j];
    double* xi = gx.data() + i * c;
    for (int64_t j = 0; j < c; ++j) xi[j] = yi[j] * (gi[j] - dot);
  }
  return gx;
}

// ---------------------------------------------------------------------------
// SqueezeExcite

SqueezeExcite::SqueezeExcite(int channels, int reduced) : c_(channels), reduced_(reduced) {
  w_reduce = {"w_reduce", Tensor({reduced, channels})};
  b_reduce = {"b_reduce", Tensor({reduced})};
  w_expand = {"w_expand", Tensor({channels, reduced})};
  b_expand = {"b_expand", Tensor({channels})};
}

void SqueezeExcite::collect_params(std::vector<Param*>& out) {
  out.push_back(&w_reduce);
  out.push_back(&b_reduce);
  out.push_back(&w_expand);
  out.push_back(&b_expand);
}

void SqueezeExcite::init(std::mt19937_64& rng) {
  init_uniform(w_reduce.value, rng, static_cast<double>(c_));
  b_reduce.value.fill(0.0);
  init_uniform(w_expand.value, rng, static_cast<double>(reduced_));
  b_expand.value.fill(0.0);
}

Tensor SqueezeExcite::forward(const Tensor& x, Ctx& ctx) {
  const int64_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
  Tensor z({n, c_});
  for (int64_t i = 0; i < n * c_; ++i) {
    const double* xc = x.data() + i * hw;
    double sum = 0.0;
    for (int64_t j = 0; j < hw; ++j) sum += xc[j];
    z[i] = sum / static_cast<double>(hw);
  }

  Tensor u({n, reduced_});
  {
    CMapMat Z(z.data(), n, c_);
    CMapMat W1(w_reduce.value.data(), reduced_, c_);
    MapMat U(u.data(), n, reduced_);
    U.noalias() = Z * W1.transpose();
    U.rowwise() += CMapVec(b_reduce.value.data(), reduced_).transpose();
  }
  Tensor hswish({n, reduced_});
  for (int64_t i = 0; i < hswish.numel(); ++i) hswish[i] = u[i] * sigmoid(u[i]);

  Tensor v({n, c_});
  {
    CMapMat H(hswish.data(), n, reduced_);
    CMapMat W2(w_expand.value.data(), c_, reduced_);
    MapMat V(v.data(), n, c_);
    V.noalias() = H * W2.transpose();
    V.rowwise() += CMapVec(b_expand.value.data(), c_).transpose();
  }
  Tensor s({n, c_});
  for (int64_t i = 0; i < s.numel(); ++i) s[i] = sigmoid(v[i]);

  Tensor y(x.shape());
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int c = 0; c < c_; ++c) {
      const double sc = s[ni * c_ + c];
      const double* xc = x.data() + (ni * c_ + c) * hw;
      double* yc = y.data() + (ni * c_ + c) * hw;
      for (int64_t j = 0; j < hw; ++j) yc[j] = xc[j] * sc;
    }
  }
  ctx.slot(slot_) = {x, std::move(z), std::move(u), std::move(hswish), std::move(s)};
  return y;
}

Tensor SqueezeExcite::backward(const Tensor& gy, Ctx& ctx) {
  auto& saved = ctx.slot(slot_);
  const Tensor& x = saved[0];
  const Tensor& z = saved[1];
  const Tensor& u = saved[2];
  const Tensor& hswish = saved[3];
  const Tensor& s = saved[4];
  const int64_t n = x.dim(0), hw = x.dim(2) * x.dim(3);

  Tensor gs({n, c_});
  Tensor gx(x.shape());
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int c = 0; c < c_; ++c) {
      const double sc = s[ni * c_ + c];
      const double* xc = x.data() + (ni * c_ + c) * hw;
      const double* gc = gy.data() + (ni * c_ + c) * hw;
      double* gxc = gx.data() + (ni * c_ + c) * hw;
      double acc = 0.0;
      for (int64_t j = 0; j < hw; ++j) {
        acc += gc[j] * xc[j];
        gxc[j] = gc[j] * sc;
      }
      gs[ni * c_ + c] = acc;
    }
  }

  Tensor gv({n, c_});
  for (int64_t i = 0; i < gv.numel(); ++i) gv[i] = gs[i] * s[i] * (1.0 - s[i]);

  Tensor gh({n, reduced_});
  {
    Tensor& gw2 = ctx.grad_for(w_expand);
    Tensor& gb2 = ctx.grad_for(b_expand);
    CMapMat GV(gv.data(), n, c_);
    CMapMat H(hswish.data(), n, reduced_);
    CMapMat W2(w_expand.value.data(), c_, reduced_);
    MapMat GW2(gw2.data(), c_, reduced_);
    MapVec GB2(gb2.data(), c_);
    GW2.noalias() += GV.transpose() * H;
    GB2.noalias() += GV.colwise().sum().transpose();
    MapMat GH(gh.data(), n, reduced_);
    GH.noalias() = GV * W2;
  }

  Tensor gu({n, reduced_});
  for (int64_t i = 0; i < gu.numel(); ++i) {
    const double sg = sigmoid(u[i]);
    gu[i] = gh[i] * (sg * (1.0 + u[i] * (1.0 - sg)));
  }

  Tensor gz({n, c_});
  {
    Tensor& gw1 = ctx.grad_for(w_reduce);
    Tensor& gb1 = ctx.grad_for(b_reduce);
    CMapMat GU(gu.data(), n, reduced_);
    CMapMat Z(z.data(), n, c_);
    CMapMat W1(w_reduce.value.data(), reduced_, c_);
    MapMat GW1(gw1.data(), reduced_, c_);
    MapVec GB1(gb1.data(), reduced_);
    GW1.noalias() += GU.transpose() * Z;
    GB1.noalias() += GU.colwise().sum().transpose();
    MapMat GZ(gz.data(), n, c_);
    GZ.noalias() = GU * W1;
  }

  for (int64_t ni = 0; ni < n; ++ni) {
    for (int c = 0; c < c_; ++c) {
      const double g = gz[ni * c_ + c] / static_cast<double>(hw);
      double* gxc = gx.data() + (ni * c_ + c) * hw;
      for (int64_t j = 0; j < hw; ++j) gxc[j] += g;
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Sequential

Tensor Sequential::forward(const Tensor& x, Ctx& ctx) {
  Tensor h = x;
  for (auto& layer : layers_) h = layer->forward(h, ctx);
  return h;
}

Tensor Sequential::backward(const Tensor& gy, Ctx& ctx) {
  Tensor g = gy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g, ctx);
  return g;
}

void Sequential::collect_params(std::vector<Param*>& out) {
  for (auto& layer : layers_) layer->collect_params(out);
}

void Sequential::collect_state(const std::string& prefix,
                               std::vector<std::pair<std::string, Tensor*>>& out) {
  for (size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->collect_state(prefix + "." + std::to_string(i), out);
  }
}

void Sequential::assign_slots(int& next) {
  for (auto& layer : layers_) layer->assign_slots(next);
}

void Sequential::init(std::mt19937_64& rng) {
  for (auto& layer : layers_) layer->init(rng);
}

bool Sequential::has_batch_state() const {
  for (const auto& layer : layers_) {
    if (layer->has_batch_state()) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// MBConv

MBConv::MBConv(int cin, int cout, int kernel, int stride, int expand_ratio, double se_ratio)
    : skip_(stride == 1 && cin == cout) {
  const int cmid = cin * expand_ratio;
  if (expand_ratio != 1) {
    body_.add<Conv2d>(cin, cmid, 1, 1, 0, false);
    body_.add<BatchNorm2d>(cmid);
    body_.add<Swish>();
  }
  body_.add<DepthwiseConv2d>(cmid, kernel, stride, (kernel - 1) / 2, false);
  body_.add<BatchNorm2d>(cmid);
  body_.add<Swish>();
  const int reduced = std::max(1, static_cast<int>(cin * se_ratio));
  body_.add<SqueezeExcite>(cmid, reduced);
  body_.add<Conv2d>(cmid, cout, 1, 1, 0, false);
  body_.add<BatchNorm2d>(cout);
}

Tensor MBConv::forward(const Tensor& x, Ctx& ctx) {
  Tensor y = body_.forward(x, ctx);
  if (skip_) y.add_(x);
  return y;
}

Tensor MBConv::backward(const Tensor& gy, Ctx& ctx) {
  Tensor gx = body_.backward(gy, ctx);
  if (skip_) gx.add_(gy);
  return gx;
}

void MBConv::collect_params(std::vector<Param*>& out) { body_.collect_params(out); }

void MBConv::collect_state(const std::string& prefix,
                           std::vector<std::pair<std::string, Tensor*>>& out) {
  body_.collect_state(prefix, out);
}

void MBConv::assign_slots(int& next) { body_.assign_slots(next); }

void MBConv::init(std::mt19937_64& rng) { body_.init(rng); }

}  // namespace wsplin::nn
