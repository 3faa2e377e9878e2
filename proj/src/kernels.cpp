#include "condense/kernels.hpp"

#include <cmath>
#include <cstring>

namespace condense::kernels {

namespace {

constexpr float kBceEps = 1e-7f;

void check_rank4(const std::vector<int>& s, const char* what) {
  if (s.size() != 4) throw DimensionError(std::string(what) + " must be rank 4");
}

// Samples src at (pos*stride - pad + k) for every (channel, kh, kw, pos)
// cell; out-of-range taps read as zero. col is [channels*k*k, pos_h*pos_w].
void im2col(const float* src, int channels, int src_h, int src_w,
            int k, int stride, int pad, int pos_h, int pos_w, float* col) {
  const int ncols = pos_h * pos_w;
  for (int c = 0; c < channels; ++c) {
    const float* plane = src + static_cast<int64_t>(c) * src_h * src_w;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        float* row = col + (static_cast<int64_t>((c * k + kh) * k + kw)) * ncols;
        for (int ph = 0; ph < pos_h; ++ph) {
          const int ih = ph * stride - pad + kh;
          float* out_row = row + static_cast<int64_t>(ph) * pos_w;
          if (ih < 0 || ih >= src_h) {
            std::memset(out_row, 0, sizeof(float) * static_cast<size_t>(pos_w));
            continue;
          }
          const float* src_row = plane + static_cast<int64_t>(ih) * src_w;
          for (int pw = 0; pw < pos_w; ++pw) {
            const int iw = pw * stride - pad + kw;
            out_row[pw] = (iw >= 0 && iw < src_w) ? src_row[iw] : 0.0f;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds col cells into dst.
void col2im(const float* col, int channels, int dst_h, int dst_w,
            int k, int stride, int pad, int pos_h, int pos_w, float* dst) {
  const int ncols = pos_h * pos_w;
  for (int c = 0; c < channels; ++c) {
    float* plane = dst + static_cast<int64_t>(c) * dst_h * dst_w;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const float* row = col + (static_cast<int64_t>((c * k + kh) * k + kw)) * ncols;
        for (int ph = 0; ph < pos_h; ++ph) {
          const int ih = ph * stride - pad + kh;
          if (ih < 0 || ih >= dst_h) continue;
          float* dst_row = plane + static_cast<int64_t>(ih) * dst_w;
          const float* src_row = row + static_cast<int64_t>(ph) * pos_w;
          for (int pw = 0; pw < pos_w; ++pw) {
            const int iw = pw * stride - pad + kw;
            if (iw >= 0 && iw < dst_w) dst_row[iw] += src_row[pw];
          }
        }
      }
    }
  }
}

}  // namespace

void gemm_nn(int m, int k, int n, const float* a, const float* b, float* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(float) * static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<int64_t>(i) * n;
    const float* arow = a + static_cast<int64_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const float av = arow[kk];
      if (av == 0.0f) continue;
      const float* brow = b + static_cast<int64_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(int m, int k, int n, const float* a, const float* b, float* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(float) * static_cast<size_t>(m) * n);
  for (int kk = 0; kk < k; ++kk) {
    const float* arow = a + static_cast<int64_t>(kk) * m;
    const float* brow = b + static_cast<int64_t>(kk) * n;
    for (int i = 0; i < m; ++i) {
      const float av = arow[i];
      if (av == 0.0f) continue;
      float* crow = c + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int m, int k, int n, const float* a, const float* b, float* c, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<int64_t>(i) * k;
    float* crow = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<int64_t>(j) * k;
      // Four fixed-order lanes; faster than a single serial chain and still
      // bit-reproducible run to run.
      float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
      int kk = 0;
      for (; kk + 4 <= k; kk += 4) {
        s0 += arow[kk] * brow[kk];
        s1 += arow[kk + 1] * brow[kk + 1];
        s2 += arow[kk + 2] * brow[kk + 2];
        s3 += arow[kk + 3] * brow[kk + 3];
      }
      float s = (s0 + s1) + (s2 + s3);
      for (; kk < k; ++kk) s += arow[kk] * brow[kk];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

ConvDims conv2d_dims(const std::vector<int>& xs, const std::vector<int>& ws,
                     int stride, int pad) {
  check_rank4(xs, "conv2d input");
  check_rank4(ws, "conv2d weight");
  if (ws[2] != ws[3]) throw DimensionError("conv2d kernel must be square");
  if (stride < 1) throw ConfigError("conv2d stride must be >= 1");
  if (pad < 0) throw ConfigError("conv2d padding must be >= 0");
  if (xs[1] != ws[1]) {
    throw DimensionError("conv2d channel mismatch: input has " + std::to_string(xs[1]) +
                         ", weight expects " + std::to_string(ws[1]));
  }
  ConvDims d;
  d.batch = xs[0]; d.in_ch = xs[1]; d.in_h = xs[2]; d.in_w = xs[3];
  d.out_ch = ws[0]; d.kernel = ws[2]; d.stride = stride; d.pad = pad;
  d.out_h = (d.in_h + 2 * pad - d.kernel) / stride + 1;
  d.out_w = (d.in_w + 2 * pad - d.kernel) / stride + 1;
  if (d.in_h + 2 * pad < d.kernel || d.in_w + 2 * pad < d.kernel || d.out_h < 1 || d.out_w < 1) {
    throw ConfigError("conv2d output spatial size would be non-positive");
  }
  return d;
}

ConvDims conv_transpose2d_dims(const std::vector<int>& xs, const std::vector<int>& ws,
                               int stride, int pad) {
  check_rank4(xs, "conv_transpose2d input");
  check_rank4(ws, "conv_transpose2d weight");
  if (ws[2] != ws[3]) throw DimensionError("conv_transpose2d kernel must be square");
  if (stride < 1) throw ConfigError("conv_transpose2d stride must be >= 1");
  if (pad < 0) throw ConfigError("conv_transpose2d padding must be >= 0");
  if (xs[1] != ws[0]) {
    throw DimensionError("conv_transpose2d channel mismatch: input has " + std::to_string(xs[1]) +
                         ", weight expects " + std::to_string(ws[0]));
  }
  ConvDims d;
  d.batch = xs[0]; d.in_ch = xs[1]; d.in_h = xs[2]; d.in_w = xs[3];
  d.out_ch = ws[1]; d.kernel = ws[2]; d.stride = stride; d.pad = pad;
  d.out_h = (d.in_h - 1) * stride - 2 * pad + d.kernel;
  d.out_w = (d.in_w - 1) * stride - 2 * pad + d.kernel;
  if (d.out_h < 1 || d.out_w < 1) {
    throw ConfigError("conv_transpose2d output spatial size would be non-positive");
  }
  return d;
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  const ConvDims d = conv2d_dims(x.shape(), w.shape(), stride, pad);
  Tensor out({d.batch, d.out_ch, d.out_h, d.out_w});
  const int ickk = d.in_ch * d.kernel * d.kernel;
  const int ncols = d.out_h * d.out_w;
  std::vector<float> col(static_cast<size_t>(ickk) * ncols);
  for (int b = 0; b < d.batch; ++b) {
    const float* xb = x.data() + static_cast<int64_t>(b) * d.in_ch * d.in_h * d.in_w;
    im2col(xb, d.in_ch, d.in_h, d.in_w, d.kernel, d.stride, d.pad, d.out_h, d.out_w, col.data());
    float* ob = out.data() + static_cast<int64_t>(b) * d.out_ch * ncols;
    gemm_nn(d.out_ch, ickk, ncols, w.data(), col.data(), ob, false);
  }
  return out;
}

Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w, const ConvDims& d) {
  Tensor dx({d.batch, d.in_ch, d.in_h, d.in_w});
  const int ickk = d.in_ch * d.kernel * d.kernel;
  const int ncols = d.out_h * d.out_w;
  std::vector<float> col(static_cast<size_t>(ickk) * ncols);
  for (int b = 0; b < d.batch; ++b) {
    const float* gb = grad_out.data() + static_cast<int64_t>(b) * d.out_ch * ncols;
    gemm_tn(ickk, d.out_ch, ncols, w.data(), gb, col.data(), false);
    float* dxb = dx.data() + static_cast<int64_t>(b) * d.in_ch * d.in_h * d.in_w;
    col2im(col.data(), d.in_ch, d.in_h, d.in_w, d.kernel, d.stride, d.pad, d.out_h, d.out_w, dxb);
  }
  return dx;
}

Tensor conv2d_grad_weight(const Tensor& x, const Tensor& grad_out, const ConvDims& d) {
  Tensor dw({d.out_ch, d.in_ch, d.kernel, d.kernel});
  const int ickk = d.in_ch * d.kernel * d.kernel;
  const int ncols = d.out_h * d.out_w;
  std::vector<float> col(static_cast<size_t>(ickk) * ncols);
  for (int b = 0; b < d.batch; ++b) {
    const float* xb = x.data() + static_cast<int64_t>(b) * d.in_ch * d.in_h * d.in_w;
    im2col(xb, d.in_ch, d.in_h, d.in_w, d.kernel, d.stride, d.pad, d.out_h, d.out_w, col.data());
    const float* gb = grad_out.data() + static_cast<int64_t>(b) * d.out_ch * ncols;
    gemm_nt(d.out_ch, ncols, ickk, gb, col.data(), dw.data(), true);
  }
  return dw;
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  const ConvDims d = conv_transpose2d_dims(x.shape(), w.shape(), stride, pad);
  Tensor out({d.batch, d.out_ch, d.out_h, d.out_w});
  const int ockk = d.out_ch * d.kernel * d.kernel;
  const int npos = d.in_h * d.in_w;
  std::vector<float> col(static_cast<size_t>(ockk) * npos);
  for (int b = 0; b < d.batch; ++b) {
    const float* xb = x.data() + static_cast<int64_t>(b) * d.in_ch * npos;
    gemm_tn(ockk, d.in_ch, npos, w.data(), xb, col.data(), false);
    float* ob = out.data() + static_cast<int64_t>(b) * d.out_ch * d.out_h * d.out_w;
    col2im(col.data(), d.out_ch, d.out_h, d.out_w, d.kernel, d.stride, d.pad, d.in_h, d.in_w, ob);
  }
  return out;
}

Tensor conv_transpose2d_grad_input(const Tensor& grad_out, const Tensor& w, const ConvDims& d) {
  Tensor dx({d.batch, d.in_ch, d.in_h, d.in_w});
  const int ockk = d.out_ch * d.kernel * d.kernel;
  const int npos = d.in_h * d.in_w;
  std::vector<float> col(static_cast<size_t>(ockk) * npos);
  for (int b = 0; b < d.batch; ++b) {
    const float* gb = grad_out.data() + static_cast<int64_t>(b) * d.out_ch * d.out_h * d.out_w;
    im2col(gb, d.out_ch, d.out_h, d.out_w, d.kernel, d.stride, d.pad, d.in_h, d.in_w, col.data());
    float* dxb = dx.data() + static_cast<int64_t>(b) * d.in_ch * npos;
    gemm_nn(d.in_ch, ockk, npos, w.data(), col.data(), dxb, false);
  }
  return dx;
}

Tensor conv_transpose2d_grad_weight(const Tensor& x, const Tensor& grad_out, const ConvDims& d) {
  Tensor dw({d.in_ch, d.out_ch, d.kernel, d.kernel});
  const int ockk = d.out_ch * d.kernel * d.kernel;
  const int npos = d.in_h * d.in_w;
  std::vector<float> col(static_cast<size_t>(ockk) * npos);
  for (int b = 0; b < d.batch; ++b) {
    const float* gb = grad_out.data() + static_cast<int64_t>(b) * d.out_ch * d.out_h * d.out_w;
    im2col(gb, d.out_ch, d.out_h, d.out_w, d.kernel, d.stride, d.pad, d.in_h, d.in_w, col.data());
    const float* xb = x.data() + static_cast<int64_t>(b) * d.in_ch * npos;
    gemm_nt(d.in_ch, npos, ockk, xb, col.data(), dw.data(), true);
  }
  return dw;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  check_rank4(a.shape(), "concat input a");
  check_rank4(b.shape(), "concat input b");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels batch/spatial mismatch: " + a.shape_str() +
                         " vs " + b.shape_str());
  }
  const int ca = a.dim(1), cb = b.dim(1);
  const int64_t plane = static_cast<int64_t>(a.dim(2)) * a.dim(3);
  Tensor out({a.dim(0), ca + cb, a.dim(2), a.dim(3)});
  for (int n = 0; n < a.dim(0); ++n) {
    std::memcpy(out.data() + (static_cast<int64_t>(n) * (ca + cb)) * plane,
                a.data() + static_cast<int64_t>(n) * ca * plane,
                sizeof(float) * static_cast<size_t>(ca * plane));
    std::memcpy(out.data() + (static_cast<int64_t>(n) * (ca + cb) + ca) * plane,
                b.data() + static_cast<int64_t>(n) * cb * plane,
                sizeof(float) * static_cast<size_t>(cb * plane));
  }
  return out;
}

Tensor slice_channels(const Tensor& x, int from, int to) {
  check_rank4(x.shape(), "slice input");
  if (from < 0 || to > x.dim(1) || from >= to) {
    throw DimensionError("slice_channels range [" + std::to_string(from) + "," +
                         std::to_string(to) + ") invalid for " + x.shape_str());
  }
  const int c = x.dim(1), cs = to - from;
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor out({x.dim(0), cs, x.dim(2), x.dim(3)});
  for (int n = 0; n < x.dim(0); ++n) {
    std::memcpy(out.data() + static_cast<int64_t>(n) * cs * plane,
                x.data() + (static_cast<int64_t>(n) * c + from) * plane,
                sizeof(float) * static_cast<size_t>(cs * plane));
  }
  return out;
}

Tensor activation(const Tensor& x, Act kind, float leaky_slope) {
  Tensor y(x.shape());
  const float* in = x.data();
  float* out = y.data();
  const int64_t n = x.size();
  switch (kind) {
    case Act::none:
      std::memcpy(out, in, sizeof(float) * static_cast<size_t>(n));
      break;
    case Act::relu:
      for (int64_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
      break;
    case Act::leaky_relu:
      for (int64_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : leaky_slope * in[i];
      break;
    case Act::tanh:
      for (int64_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
      break;
    case Act::sigmoid:
      for (int64_t i = 0; i < n; ++i) out[i] = 1.0f / (1.0f + std::exp(-in[i]));
      break;
  }
  return y;
}

Tensor activation_grad(const Tensor& grad_out, const Tensor& x, const Tensor& y,
                       Act kind, float leaky_slope) {
  Tensor dx(grad_out.shape());
  const float* g = grad_out.data();
  const float* xi = x.data();
  const float* yi = y.data();
  float* o = dx.data();
  const int64_t n = grad_out.size();
  switch (kind) {
    case Act::none:
      std::memcpy(o, g, sizeof(float) * static_cast<size_t>(n));
      break;
    case Act::relu:
      for (int64_t i = 0; i < n; ++i) o[i] = xi[i] > 0.0f ? g[i] : 0.0f;
      break;
    case Act::leaky_relu:
      for (int64_t i = 0; i < n; ++i) o[i] = xi[i] > 0.0f ? g[i] : leaky_slope * g[i];
      break;
    case Act::tanh:
      for (int64_t i = 0; i < n; ++i) o[i] = g[i] * (1.0f - yi[i] * yi[i]);
      break;
    case Act::sigmoid:
      for (int64_t i = 0; i < n; ++i) o[i] = g[i] * yi[i] * (1.0f - yi[i]);
      break;
  }
  return dx;
}

Tensor instance_norm(const Tensor& x, float eps) {
  check_rank4(x.shape(), "instance_norm input");
  const int b = x.dim(0), c = x.dim(1);
  const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor y(x.shape());
  for (int n = 0; n < b * c; ++n) {
    const float* in = x.data() + n * hw;
    float* out = y.data() + n * hw;
    double mean = 0.0;
    for (int64_t i = 0; i < hw; ++i) mean += in[i];
    mean /= static_cast<double>(hw);
    double var = 0.0;
    for (int64_t i = 0; i < hw; ++i) {
      const double d = in[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(hw);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
    const float mu = static_cast<float>(mean);
    for (int64_t i = 0; i < hw; ++i) out[i] = (in[i] - mu) * inv;
  }
  return y;
}

Tensor instance_norm_grad(const Tensor& grad_out, const Tensor& x, const Tensor& y, float eps) {
  const int b = x.dim(0), c = x.dim(1);
  const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor dx(x.shape());
  for (int n = 0; n < b * c; ++n) {
    const float* in = x.data() + n * hw;
    const float* yo = y.data() + n * hw;
    const float* g = grad_out.data() + n * hw;
    float* o = dx.data() + n * hw;
    double mean = 0.0;
    for (int64_t i = 0; i < hw; ++i) mean += in[i];
    mean /= static_cast<double>(hw);
    double var = 0.0;
    for (int64_t i = 0; i < hw; ++i) {
      const double d = in[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(hw);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
    double gmean = 0.0, gymean = 0.0;
    for (int64_t i = 0; i < hw; ++i) {
      gmean += g[i];
      gymean += static_cast<double>(g[i]) * yo[i];
    }
    gmean /= static_cast<double>(hw);
    gymean /= static_cast<double>(hw);
    for (int64_t i = 0; i < hw; ++i) {
      o[i] = inv * (g[i] - static_cast<float>(gmean) - yo[i] * static_cast<float>(gymean));
    }
  }
  return dx;
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) {
    throw DimensionError("l1_loss shape mismatch: " + pred.shape_str() + " vs " + target.shape_str());
  }
  double acc = 0.0;
  const float* p = pred.data();
  const float* t = target.data();
  for (int64_t i = 0; i < pred.size(); ++i) acc += std::fabs(static_cast<double>(p[i]) - t[i]);
  return Tensor::scalar(static_cast<float>(acc / static_cast<double>(pred.size())));
}

Tensor l1_loss_grad_pred(const Tensor& pred, const Tensor& target, float upstream) {
  Tensor dp(pred.shape());
  const float* p = pred.data();
  const float* t = target.data();
  float* o = dp.data();
  const float scale = upstream / static_cast<float>(pred.size());
  for (int64_t i = 0; i < pred.size(); ++i) {
    const float d = p[i] - t[i];
    o[i] = d > 0.0f ? scale : (d < 0.0f ? -scale : 0.0f);
  }
  return dp;
}

Tensor bce_loss(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) {
    throw DimensionError("bce_loss shape mismatch: " + pred.shape_str() + " vs " + target.shape_str());
  }
  double acc = 0.0;
  const float* p = pred.data();
  const float* t = target.data();
  for (int64_t i = 0; i < pred.size(); ++i) {
    const double ph = std::min(std::max(p[i], kBceEps), 1.0f - kBceEps);
    acc -= t[i] * std::log(ph) + (1.0 - t[i]) * std::log(1.0 - ph);
  }
  return Tensor::scalar(static_cast<float>(acc / static_cast<double>(pred.size())));
}

Tensor bce_loss_grad_pred(const Tensor& pred, const Tensor& target, float upstream) {
  Tensor dp(pred.shape());
  const float* p = pred.data();
  const float* t = target.data();
  float* o = dp.data();
  const float scale = upstream / static_cast<float>(pred.size());
  for (int64_t i = 0; i < pred.size(); ++i) {
    const float ph = std::min(std::max(p[i], kBceEps), 1.0f - kBceEps);
    o[i] = scale * (ph - t[i]) / (ph * (1.0f - ph));
  }
  return dp;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x[i];
  return Tensor::scalar(static_cast<float>(acc));
}

Tensor take_channels(const Tensor& x, int axis, const std::vector<int>& indices) {
  check_rank4(x.shape(), "take_channels input");
  if (axis != 0 && axis != 1) throw DimensionError("take_channels supports axis 0 or 1");
  if (indices.empty()) throw DimensionError("take_channels needs at least one index");
  for (int i : indices) {
    if (i < 0 || i >= x.dim(axis)) {
      throw DimensionError("take_channels index " + std::to_string(i) + " out of range for " + x.shape_str());
    }
  }
  std::vector<int> shape = x.shape();
  shape[static_cast<size_t>(axis)] = static_cast<int>(indices.size());
  Tensor out(shape);
  if (axis == 0) {
    const int64_t block = static_cast<int64_t>(x.dim(1)) * x.dim(2) * x.dim(3);
    for (size_t i = 0; i < indices.size(); ++i) {
      std::memcpy(out.data() + static_cast<int64_t>(i) * block,
                  x.data() + static_cast<int64_t>(indices[i]) * block,
                  sizeof(float) * static_cast<size_t>(block));
    }
  } else {
    const int64_t block = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    const int d0 = x.dim(0), d1 = x.dim(1);
    const int nk = static_cast<int>(indices.size());
    for (int a = 0; a < d0; ++a) {
      for (int i = 0; i < nk; ++i) {
        std::memcpy(out.data() + (static_cast<int64_t>(a) * nk + i) * block,
                    x.data() + (static_cast<int64_t>(a) * d1 + indices[static_cast<size_t>(i)]) * block,
                    sizeof(float) * static_cast<size_t>(block));
      }
    }
  }
  return out;
}

Tensor stack_batch(const std::vector<const Tensor*>& samples) {
  if (samples.empty()) throw DimensionError("stack_batch needs at least one sample");
  const Tensor& first = *samples.front();
  check_rank4(first.shape(), "stack_batch sample");
  int batch = 0;
  for (const Tensor* s : samples) {
    if (s->dim(1) != first.dim(1) || s->dim(2) != first.dim(2) || s->dim(3) != first.dim(3)) {
      throw DimensionError("stack_batch sample shape mismatch");
    }
    batch += s->dim(0);
  }
  Tensor out({batch, first.dim(1), first.dim(2), first.dim(3)});
  float* dst = out.data();
  for (const Tensor* s : samples) {
    std::memcpy(dst, s->data(), sizeof(float) * static_cast<size_t>(s->size()));
    dst += s->size();
  }
  return out;
}

}  // namespace condense::kernels
