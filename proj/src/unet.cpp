#include "lfsr/unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lfsr/errors.hpp"

namespace lfsr::nn {

void UNetSpec::validate() const {
  if (levels < 1) throw SpecError("unet: levels must be >= 1");
  if (layers < 1) throw SpecError("unet: layers per level must be >= 1");
  if (base_filters < 1) throw SpecError("unet: base filters must be >= 1");
  if (in_channels < 1 || out_channels < 1) throw SpecError("unet: channel counts must be >= 1");
  if (levels > 12) throw SpecError("unet: too many levels");
  if (head == Head::Softmax && out_channels < 2) throw SpecError("unet: softmax head needs >= 2 outputs");
}

void UNetSpec::check_input(const Index3& dims) const {
  const int div = 1 << (levels - 1);
  for (int a = 0; a < 3; ++a)
    if (dims[a] < 1 || dims[a] % div != 0)
      throw SpecError("unet: input dims must be divisible by " + std::to_string(div) + " (got " +
                      std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "x" + std::to_string(dims[2]) + ")");
}

std::size_t parameter_count(const UNetSpec& s) {
  s.validate();
  auto conv = [](std::size_t cin, std::size_t cout, std::size_t k) { return k * k * k * cin * cout + cout; };
  std::size_t n = 0;
  for (int l = 0; l < s.levels; ++l) {
    const std::size_t f = static_cast<std::size_t>(s.base_filters) << l;
    const std::size_t cin = l == 0 ? s.in_channels : f / 2;
    n += conv(cin, f, 3) + (s.layers - 1) * conv(f, f, 3);
  }
  for (int l = 0; l + 1 < s.levels; ++l) {
    const std::size_t f = static_cast<std::size_t>(s.base_filters) << l;
    n += conv(3 * f, f, 3) + (s.layers - 1) * conv(f, f, 3);
  }
  return n + conv(s.base_filters, s.out_channels, 1);
}

// ---------------------------------------------------------------------------
// Kernels

template <typename T>
void conv3d(const Tensor<T>& in, const T* w, const T* bias, int cout, int kernel, Tensor<T>& out) {
  const int cin = in.channels;
  const int nx = in.dims[0], ny = in.dims[1], nz = in.dims[2];
  const std::size_t plane = static_cast<std::size_t>(nx) * ny, vox = in.voxels();
  if (out.channels != cout || out.dims != in.dims) out = Tensor<T>(cout, in.dims);
  if (kernel == 1) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
      T* o = out.channel(co);
      std::fill(o, o + vox, bias ? bias[co] : T(0));
      for (int ci = 0; ci < cin; ++ci) {
        const T wv = w[static_cast<std::size_t>(co) * cin + ci];
        const T* ip = in.channel(ci);
        for (std::size_t n = 0; n < vox; ++n) o[n] += wv * ip[n];
      }
    }
    return;
  }
  if (kernel != 3) throw ShapeError("conv3d: kernel must be 1 or 3");
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < cout; ++co)
    for (int z = 0; z < nz; ++z) {
      T* o = out.channel(co) + z * plane;
      std::fill(o, o + plane, bias ? bias[co] : T(0));
      for (int ci = 0; ci < cin; ++ci) {
        const T* wk = w + (static_cast<std::size_t>(co) * cin + ci) * 27;
        for (int dz = -1; dz <= 1; ++dz) {
          const int zz = z + dz;
          if (zz < 0 || zz >= nz) continue;
          const T* ip = in.channel(ci) + zz * plane;
          for (int dy = -1; dy <= 1; ++dy) {
            const T* wr = wk + (dz + 1) * 9 + (dy + 1) * 3;
            const T w0 = wr[0], w1 = wr[1], w2 = wr[2];
            const int ylo = std::max(0, -dy), yhi = std::min(ny, ny - dy);
            for (int y = ylo; y < yhi; ++y) {
              const T* __restrict ir = ip + static_cast<std::size_t>(y + dy) * nx;
              T* __restrict orow = o + static_cast<std::size_t>(y) * nx;
              if (nx == 1) {
                orow[0] += w1 * ir[0];
                continue;
              }
              orow[0] += w1 * ir[0] + w2 * ir[1];
              for (int x = 1; x < nx - 1; ++x) orow[x] += w0 * ir[x - 1] + w1 * ir[x] + w2 * ir[x + 1];
              orow[nx - 1] += w0 * ir[nx - 2] + w1 * ir[nx - 1];
            }
          }
        }
      }
    }
}

namespace {

// d(loss)/d(weights) and d(loss)/d(bias), accumulated.
template <typename T>
void conv3d_param_grad(const Tensor<T>& in, const Tensor<T>& g, int kernel, T* gw, T* gb) {
  const int cin = in.channels, cout = g.channels;
  const int nx = in.dims[0], ny = in.dims[1], nz = in.dims[2];
  const std::size_t plane = static_cast<std::size_t>(nx) * ny, vox = in.voxels();
  for (int co = 0; co < cout; ++co) {
    double s = 0.0;
    const T* gp = g.channel(co);
    for (std::size_t n = 0; n < vox; ++n) s += gp[n];
    gb[co] += static_cast<T>(s);
  }
  if (kernel == 1) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < cout; ++co)
      for (int ci = 0; ci < cin; ++ci) {
        const T* gp = g.channel(co);
        const T* ip = in.channel(ci);
        double s = 0.0;
        for (std::size_t n = 0; n < vox; ++n) s += static_cast<double>(gp[n]) * ip[n];
        gw[static_cast<std::size_t>(co) * cin + ci] += static_cast<T>(s);
      }
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci) {
      // Per-x partial sums keep the inner loops free of reductions.
      std::vector<T> acc(static_cast<std::size_t>(27) * nx, T(0));
      const T* gch = g.channel(co);
      const T* ich = in.channel(ci);
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy) {
          T* a0 = acc.data() + static_cast<std::size_t>((dz + 1) * 9 + (dy + 1) * 3) * nx;
          T* a1 = a0 + nx;
          T* a2 = a1 + nx;
          const int zlo = std::max(0, -dz), zhi = std::min(nz, nz - dz);
          const int ylo = std::max(0, -dy), yhi = std::min(ny, ny - dy);
          for (int z = zlo; z < zhi; ++z)
            for (int y = ylo; y < yhi; ++y) {
              const T* __restrict gr = gch + z * plane + static_cast<std::size_t>(y) * nx;
              const T* __restrict ir = ich + (z + dz) * plane + static_cast<std::size_t>(y + dy) * nx;
              for (int x = 1; x < nx; ++x) a0[x] += gr[x] * ir[x - 1];
              for (int x = 0; x < nx; ++x) a1[x] += gr[x] * ir[x];
              for (int x = 0; x + 1 < nx; ++x) a2[x] += gr[x] * ir[x + 1];
            }
        }
      T* gk = gw + (static_cast<std::size_t>(co) * cin + ci) * 27;
      for (int t = 0; t < 27; ++t) {
        double s = 0.0;
        const T* a = acc.data() + static_cast<std::size_t>(t) * nx;
        for (int x = 0; x < nx; ++x) s += a[x];
        gk[t] += static_cast<T>(s);
      }
    }
}

// d(loss)/d(input): correlation of the output gradient with the flipped,
// channel-transposed kernel.
template <typename T>
void conv3d_input_grad(const Tensor<T>& g, const T* w, int cin, int kernel, Tensor<T>& gin) {
  const int cout = g.channels;
  const int k3 = kernel * kernel * kernel;
  std::vector<T> wt(static_cast<std::size_t>(cin) * cout * k3);
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int t = 0; t < k3; ++t)
        wt[(static_cast<std::size_t>(ci) * cout + co) * k3 + (k3 - 1 - t)] =
            w[(static_cast<std::size_t>(co) * cin + ci) * k3 + t];
  conv3d<T>(g, wt.data(), nullptr, cin, kernel, gin);
}

struct AxisMap {
  std::vector<int> i0, i1;
  std::vector<double> f;
};

AxisMap upsample_axis(int n) {
  AxisMap m;
  const int out = 2 * n;
  m.i0.resize(out);
  m.i1.resize(out);
  m.f.resize(out);
  for (int j = 0; j < out; ++j) {
    const double c = std::clamp((j + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(n - 1));
    const int a = std::min(static_cast<int>(std::floor(c)), std::max(n - 2, 0));
    m.i0[j] = a;
    m.i1[j] = std::min(a + 1, n - 1);
    m.f[j] = c - a;
  }
  return m;
}

template <typename T>
void upsample2_backward(const Tensor<T>& g, const Index3& src_dims, Tensor<T>& gin) {
  gin = Tensor<T>(g.channels, src_dims);
  const AxisMap mx = upsample_axis(src_dims[0]), my = upsample_axis(src_dims[1]), mz = upsample_axis(src_dims[2]);
  const int ox = g.dims[0], oy = g.dims[1], oz = g.dims[2];
  const std::size_t sx = src_dims[0], sxy = sx * src_dims[1];
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    const T* gp = g.channel(c);
    T* ip = gin.channel(c);
    for (int k = 0; k < oz; ++k)
      for (int j = 0; j < oy; ++j)
        for (int i = 0; i < ox; ++i) {
          const T v = gp[i + static_cast<std::size_t>(ox) * (j + static_cast<std::size_t>(oy) * k)];
          const T fx = static_cast<T>(mx.f[i]), fy = static_cast<T>(my.f[j]), fz = static_cast<T>(mz.f[k]);
          const std::size_t z0 = mz.i0[k] * sxy, z1 = mz.i1[k] * sxy, y0 = my.i0[j] * sx, y1 = my.i1[j] * sx;
          const std::size_t x0 = mx.i0[i], x1 = mx.i1[i];
          ip[z0 + y0 + x0] += v * (1 - fx) * (1 - fy) * (1 - fz);
          ip[z0 + y0 + x1] += v * fx * (1 - fy) * (1 - fz);
          ip[z0 + y1 + x0] += v * (1 - fx) * fy * (1 - fz);
          ip[z0 + y1 + x1] += v * fx * fy * (1 - fz);
          ip[z1 + y0 + x0] += v * (1 - fx) * (1 - fy) * fz;
          ip[z1 + y0 + x1] += v * fx * (1 - fy) * fz;
          ip[z1 + y1 + x0] += v * (1 - fx) * fy * fz;
          ip[z1 + y1 + x1] += v * fx * fy * fz;
        }
  }
}

template <typename T>
void add_into(Tensor<T>& dst, Tensor<T>&& src) {
  if (dst.data.empty()) {
    dst = std::move(src);
    return;
  }
  for (std::size_t n = 0; n < dst.data.size(); ++n) dst.data[n] += src.data[n];
}

}  // namespace

template <typename T>
Tensor<T> upsample2(const Tensor<T>& in) {
  const Index3 od{2 * in.dims[0], 2 * in.dims[1], 2 * in.dims[2]};
  Tensor<T> out(in.channels, od);
  const AxisMap mx = upsample_axis(in.dims[0]), my = upsample_axis(in.dims[1]), mz = upsample_axis(in.dims[2]);
  const std::size_t sx = in.dims[0], sxy = sx * in.dims[1];
#pragma omp parallel for schedule(static)
  for (int c = 0; c < in.channels; ++c) {
    const T* ip = in.channel(c);
    T* op = out.channel(c);
    for (int k = 0; k < od[2]; ++k)
      for (int j = 0; j < od[1]; ++j)
        for (int i = 0; i < od[0]; ++i) {
          const T fx = static_cast<T>(mx.f[i]), fy = static_cast<T>(my.f[j]), fz = static_cast<T>(mz.f[k]);
          const std::size_t z0 = mz.i0[k] * sxy, z1 = mz.i1[k] * sxy, y0 = my.i0[j] * sx, y1 = my.i1[j] * sx;
          const std::size_t x0 = mx.i0[i], x1 = mx.i1[i];
          const T c00 = ip[z0 + y0 + x0] + fx * (ip[z0 + y0 + x1] - ip[z0 + y0 + x0]);
          const T c10 = ip[z0 + y1 + x0] + fx * (ip[z0 + y1 + x1] - ip[z0 + y1 + x0]);
          const T c01 = ip[z1 + y0 + x0] + fx * (ip[z1 + y0 + x1] - ip[z1 + y0 + x0]);
          const T c11 = ip[z1 + y1 + x0] + fx * (ip[z1 + y1 + x1] - ip[z1 + y1 + x0]);
          const T c0 = c00 + fy * (c10 - c00), c1 = c01 + fy * (c11 - c01);
          op[i + static_cast<std::size_t>(od[0]) * (j + static_cast<std::size_t>(od[1]) * k)] = c0 + fz * (c1 - c0);
        }
  }
  return out;
}

// ---------------------------------------------------------------------------
// UNet

template <typename T>
UNet<T>::UNet(const UNetSpec& spec) : spec_(spec) {
  spec_.validate();
  assemble();
  params_.assign(parameter_count(spec_), T(0));
}

template <typename T>
void UNet<T>::assemble() {
  layers_.clear();
  nodes_.clear();
  std::size_t offset = 0;
  auto add_layer = [&](std::string path, int cin, int cout, int k) {
    ConvLayer l{std::move(path), cin, cout, k, offset};
    offset += l.count();
    layers_.push_back(l);
    return static_cast<int>(layers_.size() - 1);
  };
  int next = 1, t = 0;
  auto conv_node = [&](int layer, bool elu) {
    nodes_.push_back(Node{Node::Conv, layer, elu, t, -1, next});
    t = next++;
  };
  std::vector<int> skips(spec_.levels);
  int channels = spec_.in_channels;
  for (int l = 0; l < spec_.levels; ++l) {
    const int f = spec_.base_filters << l;
    if (l > 0) {
      nodes_.push_back(Node{Node::Pool, -1, false, t, -1, next});
      t = next++;
    }
    for (int m = 0; m < spec_.layers; ++m) {
      conv_node(add_layer("enc" + std::to_string(l) + ".conv" + std::to_string(m + 1), channels, f, 3), true);
      channels = f;
    }
    skips[l] = t;
  }
  for (int l = spec_.levels - 2; l >= 0; --l) {
    const int f = spec_.base_filters << l;
    nodes_.push_back(Node{Node::Up, -1, false, t, -1, next});
    t = next++;
    nodes_.push_back(Node{Node::Concat, -1, false, t, skips[l], next});
    t = next++;
    channels += f;
    for (int m = 0; m < spec_.layers; ++m) {
      conv_node(add_layer("dec" + std::to_string(l) + ".conv" + std::to_string(m + 1), channels, f, 3), true);
      channels = f;
    }
  }
  last_hidden_ = t;
  conv_node(add_layer("head", channels, spec_.out_channels, 1), false);
  if (spec_.head == Head::Softmax) {
    nodes_.push_back(Node{Node::Softmax, -1, false, t, -1, next});
    t = next++;
  }
  tensor_count_ = next;
  if (offset != parameter_count(spec_)) throw SpecError("unet: layer layout disagrees with the parameter count");
}

template <typename T>
UNet<T> UNet<T>::build(const UNetSpec& spec, Rng& rng) {
  UNet net(spec);
  for (const ConvLayer& l : net.layers_) {
    const double sd = std::sqrt(2.0 / (static_cast<double>(l.in) * l.kernel * l.kernel * l.kernel));
    for (std::size_t n = 0; n < l.weight_count(); ++n) net.params_[l.offset + n] = static_cast<T>(rng.normal(0.0, sd));
  }
  return net;
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& input, Cache* cache) const {
  if (layers_.empty()) throw SpecError("unet: network has not been built");
  if (input.channels != spec_.in_channels)
    throw ShapeError("unet: expected " + std::to_string(spec_.in_channels) + " input channels, got " +
                     std::to_string(input.channels));
  if (input.data.size() != static_cast<std::size_t>(input.channels) * input.voxels())
    throw ShapeError("unet: input tensor size mismatch");
  spec_.check_input(input.dims);

  Cache local;
  Cache& c = cache ? *cache : local;
  c.tensors.assign(tensor_count_, Tensor<T>());
  c.argmax.assign(nodes_.size(), {});
  c.tensors[0] = input;
  for (std::size_t ni = 0; ni < nodes_.size(); ++ni) {
    const Node& node = nodes_[ni];
    const Tensor<T>& a = c.tensors[node.a];
    Tensor<T>& out = c.tensors[node.out];
    switch (node.kind) {
      case Node::Conv: {
        const ConvLayer& l = layers_[node.layer];
        conv3d<T>(a, params_.data() + l.offset, params_.data() + l.offset + l.weight_count(), l.out, l.kernel, out);
        if (node.elu)
          for (T& v : out.data) v = v > T(0) ? v : std::expm1(v);
        break;
      }
      case Node::Pool: {
        const Index3 od{a.dims[0] / 2, a.dims[1] / 2, a.dims[2] / 2};
        out = Tensor<T>(a.channels, od);
        auto& am = c.argmax[ni];
        am.resize(out.data.size());
        const std::size_t sx = a.dims[0], sxy = sx * a.dims[1];
        for (int ch = 0; ch < a.channels; ++ch) {
          const T* ip = a.channel(ch);
          T* op = out.channel(ch);
          std::uint32_t* ap = am.data() + static_cast<std::size_t>(ch) * out.voxels();
          for (int k = 0; k < od[2]; ++k)
            for (int j = 0; j < od[1]; ++j)
              for (int i = 0; i < od[0]; ++i) {
                std::size_t best = 2 * i + sx * 2 * j + sxy * 2 * k;
                for (int d = 1; d < 8; ++d) {
                  const std::size_t n = (2 * i + (d & 1)) + sx * (2 * j + ((d >> 1) & 1)) + sxy * (2 * k + (d >> 2));
                  if (ip[n] > ip[best]) best = n;
                }
                const std::size_t o = i + static_cast<std::size_t>(od[0]) * (j + static_cast<std::size_t>(od[1]) * k);
                op[o] = ip[best];
                ap[o] = static_cast<std::uint32_t>(best);
              }
        }
        break;
      }
      case Node::Up:
        out = upsample2(a);
        break;
      case Node::Concat: {
        const Tensor<T>& b = c.tensors[node.b];
        out = Tensor<T>(a.channels + b.channels, a.dims);
        std::copy(a.data.begin(), a.data.end(), out.data.begin());
        std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
        break;
      }
      case Node::Softmax: {
        out = a;
        const std::size_t vox = a.voxels();
        for (std::size_t n = 0; n < vox; ++n) {
          T mx = a.data[n];
          for (int ch = 1; ch < a.channels; ++ch) mx = std::max(mx, a.data[ch * vox + n]);
          T s = 0;
          for (int ch = 0; ch < a.channels; ++ch) s += (out.data[ch * vox + n] = std::exp(a.data[ch * vox + n] - mx));
          for (int ch = 0; ch < a.channels; ++ch) out.data[ch * vox + n] /= s;
        }
        break;
      }
    }
  }
  Tensor<T> result = c.tensors[tensor_count_ - 1];
  return result;
}

template <typename T>
void UNet<T>::backward(const Cache& c, const Tensor<T>& grad_output, std::vector<T>* grad_params,
                       Tensor<T>* grad_input) const {
  if (static_cast<int>(c.tensors.size()) != tensor_count_) throw ShapeError("unet: cache from a different network");
  const Tensor<T>& final_out = c.tensors[tensor_count_ - 1];
  if (grad_output.channels != final_out.channels || grad_output.dims != final_out.dims)
    throw ShapeError("unet: output gradient shape mismatch");
  if (grad_params && grad_params->size() != params_.size()) grad_params->assign(params_.size(), T(0));

  std::vector<Tensor<T>> g(tensor_count_);
  g[tensor_count_ - 1] = grad_output;
  for (std::size_t ri = nodes_.size(); ri-- > 0;) {
    const Node& node = nodes_[ri];
    Tensor<T>& go = g[node.out];
    if (go.data.empty()) continue;
    const bool need_input = node.a != 0 || grad_input != nullptr;
    switch (node.kind) {
      case Node::Conv: {
        const ConvLayer& l = layers_[node.layer];
        if (node.elu) {
          const Tensor<T>& y = c.tensors[node.out];
          for (std::size_t n = 0; n < go.data.size(); ++n) go.data[n] *= y.data[n] > T(0) ? T(1) : y.data[n] + T(1);
        }
        if (grad_params)
          conv3d_param_grad<T>(c.tensors[node.a], go, l.kernel, grad_params->data() + l.offset,
                               grad_params->data() + l.offset + l.weight_count());
        if (need_input) {
          Tensor<T> gi;
          conv3d_input_grad<T>(go, params_.data() + l.offset, l.in, l.kernel, gi);
          add_into(g[node.a], std::move(gi));
        }
        break;
      }
      case Node::Pool: {
        const Tensor<T>& a = c.tensors[node.a];
        Tensor<T> gi(a.channels, a.dims);
        const auto& am = c.argmax[ri];
        const std::size_t ov = go.voxels();
        for (int ch = 0; ch < a.channels; ++ch)
          for (std::size_t o = 0; o < ov; ++o) gi.channel(ch)[am[ch * ov + o]] += go.data[ch * ov + o];
        add_into(g[node.a], std::move(gi));
        break;
      }
      case Node::Up: {
        Tensor<T> gi;
        upsample2_backward(go, c.tensors[node.a].dims, gi);
        add_into(g[node.a], std::move(gi));
        break;
      }
      case Node::Concat: {
        const Tensor<T>& a = c.tensors[node.a];
        const Tensor<T>& b = c.tensors[node.b];
        Tensor<T> ga(a.channels, a.dims), gb(b.channels, b.dims);
        std::copy(go.data.begin(), go.data.begin() + a.data.size(), ga.data.begin());
        std::copy(go.data.begin() + a.data.size(), go.data.end(), gb.data.begin());
        add_into(g[node.a], std::move(ga));
        add_into(g[node.b], std::move(gb));
        break;
      }
      case Node::Softmax: {
        const Tensor<T>& p = c.tensors[node.out];
        Tensor<T> gi(p.channels, p.dims);
        const std::size_t vox = p.voxels();
        for (std::size_t n = 0; n < vox; ++n) {
          T dot = 0;
          for (int ch = 0; ch < p.channels; ++ch) dot += p.data[ch * vox + n] * go.data[ch * vox + n];
          for (int ch = 0; ch < p.channels; ++ch)
            gi.data[ch * vox + n] = p.data[ch * vox + n] * (go.data[ch * vox + n] - dot);
        }
        add_into(g[node.a], std::move(gi));
        break;
      }
    }
    if (node.out != 0) go = Tensor<T>();  // release memory early
  }
  if (grad_input) {
    if (g[0].data.empty()) g[0] = Tensor<T>(spec_.in_channels, c.tensors[0].dims);
    *grad_input = std::move(g[0]);
  }
}

template <typename T>
const Tensor<T>& UNet<T>::last_hidden(const Cache& cache) const {
  return cache.tensors.at(last_hidden_);
}

template <typename T>
std::uint64_t UNet<T>::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(params_.data());
  for (std::size_t n = 0; n < params_.size() * sizeof(T); ++n) {
    h ^= bytes[n];
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
Tensor<T> to_tensor(const std::vector<const Volume*>& channels) {
  if (channels.empty()) throw ShapeError("to_tensor: no channels");
  Tensor<T> t(static_cast<int>(channels.size()), channels[0]->dims());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (channels[c]->dims() != t.dims) throw ShapeError("to_tensor: channel dims differ");
    const auto d = channels[c]->data();
    std::transform(d.begin(), d.end(), t.channel(static_cast<int>(c)), [](double v) { return static_cast<T>(v); });
  }
  return t;
}

namespace {
template <typename T>
Volume channel_volume_impl(const Tensor<T>& t, int c, const Grid& grid) {
  if (grid.dims != t.dims || c < 0 || c >= t.channels) throw ShapeError("channel_volume: shape mismatch");
  const T* p = t.channel(c);
  return Volume(grid, std::vector<double>(p, p + t.voxels()));
}
}  // namespace

Volume channel_volume(const Tensor<float>& t, int c, const Grid& grid) { return channel_volume_impl(t, c, grid); }
Volume channel_volume(const Tensor<double>& t, int c, const Grid& grid) { return channel_volume_impl(t, c, grid); }

template class UNet<float>;
template class UNet<double>;
template void conv3d<float>(const Tensor<float>&, const float*, const float*, int, int, Tensor<float>&);
template void conv3d<double>(const Tensor<double>&, const double*, const double*, int, int, Tensor<double>&);
template Tensor<float> upsample2<float>(const Tensor<float>&);
template Tensor<double> upsample2<double>(const Tensor<double>&);
template Tensor<float> to_tensor<float>(const std::vector<const Volume*>&);
template Tensor<double> to_tensor<double>(const std::vector<const Volume*>&);

}  // namespace lfsr::nn
