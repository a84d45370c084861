#pragma once

// Implementation details for nn.hpp. Everything is templated on the scalar
// type so the float training graph and the double gradient-check graph share
// one code path.

namespace ldankit::nn {

inline const char* layer_kind_name(LayerSpec::Kind k) {
  switch (k) {
    case LayerSpec::Kind::kConv3x3: return "conv3x3";
    case LayerSpec::Kind::kBatchNorm: return "batchnorm";
    case LayerSpec::Kind::kRelu: return "relu";
    case LayerSpec::Kind::kFc: return "fc";
    case LayerSpec::Kind::kDropout: return "dropout";
    case LayerSpec::Kind::kResidualBlock: return "residual_block";
    case LayerSpec::Kind::kGlobalFlatten: return "global_flatten";
    case LayerSpec::Kind::kTanh: return "tanh";
  }
  return "?";
}

namespace detail {

inline int conv_out_dim(int in, int stride) { return (in - 1) / stride + 1; }

template <class T>
void conv3x3_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b,
                     Tensor<T>& out, int stride, int threads) {
  const int n_batch = in.shape[0], ic_n = in.shape[1], h = in.shape[2], wd = in.shape[3];
  const int oc_n = out.shape[1], oh = out.shape[2], ow = out.shape[3];
  const int64_t in_plane = static_cast<int64_t>(h) * wd;
  const int64_t out_plane = static_cast<int64_t>(oh) * ow;

  parallel_for(n_batch, threads, [&](int64_t nb, int64_t ne) {
    for (int64_t n = nb; n < ne; ++n) {
      const T* in_n = in.ptr() + n * ic_n * in_plane;
      T* out_n = out.ptr() + n * oc_n * out_plane;
      for (int oc = 0; oc < oc_n; ++oc) {
        T* op = out_n + oc * out_plane;
        const T bias = b.data[oc];
        for (int64_t i = 0; i < out_plane; ++i) op[i] = bias;
        for (int ic = 0; ic < ic_n; ++ic) {
          const T* ip = in_n + ic * in_plane;
          const T* wp = w.ptr() + (static_cast<int64_t>(oc) * ic_n + ic) * 9;
          if (stride == 1) {
            for (int k = 0; k < 9; ++k) {
              const int dy = k / 3 - 1, dx = k % 3 - 1;
              const T wv = wp[k];
              const int y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
              const int x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? wd - 1 : wd;
              const int len = x1 - x0;
              for (int y = y0; y < y1; ++y) {
                const T* src = ip + (y + dy) * wd + (x0 + dx);
                T* dst = op + static_cast<int64_t>(y) * wd + x0;
                for (int i = 0; i < len; ++i) dst[i] += wv * src[i];
              }
            }
          } else {
            for (int k = 0; k < 9; ++k) {
              const int ky = k / 3, kx = k % 3;
              const T wv = wp[k];
              const int ymin = ky == 0 ? (1 + stride - 1) / stride : 0;
              const int ymax = std::min(oh - 1, (h - ky) / stride);
              const int xmin = kx == 0 ? (1 + stride - 1) / stride : 0;
              const int xmax = std::min(ow - 1, (wd - kx) / stride);
              for (int y = ymin; y <= ymax; ++y) {
                const T* src = ip + static_cast<int64_t>(stride * y + ky - 1) * wd + (kx - 1);
                T* dst = op + static_cast<int64_t>(y) * ow;
                for (int x = xmin; x <= xmax; ++x) dst[x] += wv * src[static_cast<int64_t>(stride) * x];
              }
            }
          }
        }
      }
    }
  });
}

template <class T>
void conv3x3_backward(const Tensor<T>& in, const Tensor<T>& w,
                      const Tensor<T>& gout, Tensor<T>& gin, Tensor<T>& gw,
                      Tensor<T>& gb, int stride, bool want_gin, int threads) {
  const int n_batch = in.shape[0], ic_n = in.shape[1], h = in.shape[2], wd = in.shape[3];
  const int oc_n = gout.shape[1], oh = gout.shape[2], ow = gout.shape[3];
  const int64_t in_plane = static_cast<int64_t>(h) * wd;
  const int64_t out_plane = static_cast<int64_t>(oh) * ow;

  // input gradient: each batch element is independent
  if (want_gin) {
    parallel_for(n_batch, threads, [&](int64_t nb, int64_t ne) {
      for (int64_t n = nb; n < ne; ++n) {
        T* gin_n = gin.ptr() + n * ic_n * in_plane;
        const T* gout_n = gout.ptr() + n * oc_n * out_plane;
        for (int oc = 0; oc < oc_n; ++oc) {
          const T* gp = gout_n + oc * out_plane;
          for (int ic = 0; ic < ic_n; ++ic) {
            T* dp = gin_n + ic * in_plane;
            const T* wp = w.ptr() + (static_cast<int64_t>(oc) * ic_n + ic) * 9;
            if (stride == 1) {
              for (int k = 0; k < 9; ++k) {
                const int dy = k / 3 - 1, dx = k % 3 - 1;
                const T wv = wp[k];
                const int y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
                const int x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? wd - 1 : wd;
                const int len = x1 - x0;
                for (int y = y0; y < y1; ++y) {
                  T* dst = dp + (y + dy) * wd + (x0 + dx);
                  const T* src = gp + static_cast<int64_t>(y) * wd + x0;
                  for (int i = 0; i < len; ++i) dst[i] += wv * src[i];
                }
              }
            } else {
              for (int k = 0; k < 9; ++k) {
                const int ky = k / 3, kx = k % 3;
                const T wv = wp[k];
                const int ymin = ky == 0 ? 1 : 0;
                const int ymax = std::min(oh - 1, (h - ky) / stride);
                const int xmin = kx == 0 ? 1 : 0;
                const int xmax = std::min(ow - 1, (wd - kx) / stride);
                for (int y = ymin; y <= ymax; ++y) {
                  T* dst = dp + static_cast<int64_t>(stride * y + ky - 1) * wd + (kx - 1);
                  const T* src = gp + static_cast<int64_t>(y) * ow;
                  for (int x = xmin; x <= xmax; ++x) dst[static_cast<int64_t>(stride) * x] += wv * src[x];
                }
              }
            }
          }
        }
      }
    });
  }

  // weight/bias gradients: parallel over output channels, serial over batch,
  // so accumulation order is fixed for any thread count
  parallel_for(oc_n, threads, [&](int64_t ob, int64_t oe) {
    for (int64_t oc = ob; oc < oe; ++oc) {
      double gbias = 0.0;
      for (int64_t n = 0; n < n_batch; ++n) {
        const T* gp = gout.ptr() + (n * oc_n + oc) * out_plane;
        for (int64_t i = 0; i < out_plane; ++i) gbias += static_cast<double>(gp[i]);
        const T* in_n = in.ptr() + n * ic_n * in_plane;
        for (int ic = 0; ic < ic_n; ++ic) {
          const T* ip = in_n + ic * in_plane;
          T* gwp = gw.ptr() + (oc * ic_n + ic) * 9;
          if (stride == 1) {
            for (int k = 0; k < 9; ++k) {
              const int dy = k / 3 - 1, dx = k % 3 - 1;
              const int y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
              const int x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? wd - 1 : wd;
              const int len = x1 - x0;
              T acc = T(0);
              for (int y = y0; y < y1; ++y) {
                const T* a = gp + static_cast<int64_t>(y) * wd + x0;
                const T* bb = ip + (y + dy) * wd + (x0 + dx);
                for (int i = 0; i < len; ++i) acc += a[i] * bb[i];
              }
              gwp[k] += acc;
            }
          } else {
            for (int k = 0; k < 9; ++k) {
              const int ky = k / 3, kx = k % 3;
              const int ymin = ky == 0 ? 1 : 0;
              const int ymax = std::min(oh - 1, (h - ky) / stride);
              const int xmin = kx == 0 ? 1 : 0;
              const int xmax = std::min(ow - 1, (wd - kx) / stride);
              T acc = T(0);
              for (int y = ymin; y <= ymax; ++y) {
                const T* a = gp + static_cast<int64_t>(y) * ow;
                const T* bb = ip + static_cast<int64_t>(stride * y + ky - 1) * wd + (kx - 1);
                for (int x = xmin; x <= xmax; ++x) acc += a[x] * bb[static_cast<int64_t>(stride) * x];
              }
              gwp[k] += acc;
            }
          }
        }
      }
      gb.data[oc] += static_cast<T>(gbias);
    }
  });
}

template <class T>
class Conv3x3Layer final : public Layer<T> {
 public:
  Conv3x3Layer(const LayerSpec& s, const std::vector<int>& in_shape) : spec_(s) {
    if (in_shape.size() != 3)
      throw invalid_input_error("conv3x3 expects (C,H,W) input");
    if (s.stride != 1 && s.stride != 2)
      throw invalid_input_error("conv3x3 stride must be 1 or 2");
    in_ch_ = in_shape[0];
    w_ = Tensor<T>({s.out_ch, in_ch_, 3, 3});
    b_ = Tensor<T>({s.out_ch});
    gw_ = zeros_like(w_);
    gb_ = zeros_like(b_);
  }

  LayerSpec spec() const override { return spec_; }
  std::string name() const override { return "conv3x3"; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    return {spec_.out_ch, conv_out_dim(in[1], spec_.stride), conv_out_dim(in[2], spec_.stride)};
  }

  void init_params(Rng& rng) override {
    const double std = std::sqrt(2.0 / (in_ch_ * 9.0));
    for (auto& v : w_.data) v = static_cast<T>(rng.normal() * std);
  }

  Tensor<T> forward(const Tensor<T>& in, TapeEntry<T>& tape, Mode, Rng&,
                    int threads) override {
    Tensor<T> out({in.shape[0], spec_.out_ch, conv_out_dim(in.shape[2], spec_.stride),
                   conv_out_dim(in.shape[3], spec_.stride)});
    detail::conv3x3_forward(in, w_, b_, out, spec_.stride, threads);
    tape.saved = {in};
    return out;
  }

  Tensor<T> backward(const TapeEntry<T>& tape, const Tensor<T>& gout,
                     bool want_gin, int threads) override {
    const Tensor<T>& in = tape.saved[0];
    Tensor<T> gin = want_gin ? zeros_like(in) : Tensor<T>();
    detail::conv3x3_backward(in, w_, gout, gin, gw_, gb_, spec_.stride, want_gin, threads);
    return gin;
  }

  void collect_params(const std::string& p, std::vector<ParamRef<T>>& out) override {
    out.push_back({p + ".w", &w_, &gw_, true});
    out.push_back({p + ".b", &b_, &gb_, true});
  }

 private:
  LayerSpec spec_;
  int in_ch_ = 0;
  Tensor<T> w_, b_, gw_, gb_;
};

template <class T>
class BatchNormLayer final : public Layer<T> {
 public:
  BatchNormLayer(const LayerSpec& s, const std::vector<int>& in_shape) : spec_(s) {
    channels_ = in_shape[0];
    gamma_ = Tensor<T>({channels_});
    beta_ = Tensor<T>({channels_});
    running_mean_ = Tensor<T>({channels_});
    running_var_ = Tensor<T>({channels_});
    for (auto& v : gamma_.data) v = T(1);
    for (auto& v : running_var_.data) v = T(1);
    ggamma_ = zeros_like(gamma_);
    gbeta_ = zeros_like(beta_);
  }

  LayerSpec spec() const override { return spec_; }
  std::string name() const override { return "batchnorm"; }
  std::vector<int> output_shape(const std::vector<int>& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& in, TapeEntry<T>& tape, Mode mode, Rng&,
                    int) override {
    const auto [n, c, s] = dims(in);
    Tensor<T> out(in.shape);
    tape.mode = mode;
    if (mode == Mode::kTrain) {
      Tensor<T> xhat(in.shape);
      Tensor<T> inv_std({c});
      const double m = static_cast<double>(n) * s;
      for (int ch = 0; ch < c; ++ch) {
        double sum = 0.0, sq = 0.0;
        for_channel(in, ch, [&](T v) {
          sum += v;
          sq += static_cast<double>(v) * v;
        });
        const double mean = sum / m;
        const double var = std::max(0.0, sq / m - mean * mean);
        const double istd = 1.0 / std::sqrt(var + kEps);
        inv_std.data[ch] = static_cast<T>(istd);
        const T g = gamma_.data[ch], b = beta_.data[ch];
        transform_channel(in, xhat, out, ch, [&](T v, T& xh) {
          xh = static_cast<T>((v - mean) * istd);
          return static_cast<T>(g * xh + b);
        });
        running_mean_.data[ch] =
            static_cast<T>(kMomentum * running_mean_.data[ch] + (1.0 - kMomentum) * mean);
        running_var_.data[ch] =
            static_cast<T>(kMomentum * running_var_.data[ch] + (1.0 - kMomentum) * var);
      }
      tape.saved = {std::move(xhat), std::move(inv_std)};
    } else {
      for (int ch = 0; ch < c; ++ch) {
        const double istd = 1.0 / std::sqrt(static_cast<double>(running_var_.data[ch]) + kEps);
        const double g = gamma_.data[ch], b = beta_.data[ch];
        const double mu = running_mean_.data[ch];
        copy_channel(in, out, ch, [&](T v) { return static_cast<T>(g * ((v - mu) * istd) + b); });
      }
    }
    return out;
  }

  Tensor<T> backward(const TapeEntry<T>& tape, const Tensor<T>& gout,
                     bool want_gin, int) override {
    const auto [n, c, s] = dims(gout);
    Tensor<T> gin = want_gin ? Tensor<T>(gout.shape) : Tensor<T>();
    if (tape.mode == Mode::kTrain) {
      const Tensor<T>& xhat = tape.saved[0];
      const Tensor<T>& inv_std = tape.saved[1];
      const double m = static_cast<double>(n) * s;
      for (int ch = 0; ch < c; ++ch) {
        double dg = 0.0, db = 0.0;
        const int64_t plane = s;
        for (int64_t bn = 0; bn < n; ++bn) {
          const T* gp = gout.ptr() + (bn * c + ch) * plane;
          const T* xp = xhat.ptr() + (bn * c + ch) * plane;
          for (int64_t i = 0; i < plane; ++i) {
            dg += static_cast<double>(gp[i]) * xp[i];
            db += gp[i];
          }
        }
        ggamma_.data[ch] += static_cast<T>(dg);
        gbeta_.data[ch] += static_cast<T>(db);
        if (want_gin) {
          const double scale = static_cast<double>(gamma_.data[ch]) * inv_std.data[ch];
          for (int64_t bn = 0; bn < n; ++bn) {
            const T* gp = gout.ptr() + (bn * c + ch) * plane;
            const T* xp = xhat.ptr() + (bn * c + ch) * plane;
            T* dp = gin.ptr() + (bn * c + ch) * plane;
            for (int64_t i = 0; i < plane; ++i)
              dp[i] = static_cast<T>(scale * (gp[i] - (db + static_cast<double>(xp[i]) * dg) / m));
          }
        }
      }
    } else if (want_gin) {
      for (int ch = 0; ch < c; ++ch) {
        const double scale = static_cast<double>(gamma_.data[ch]) /
                             std::sqrt(static_cast<double>(running_var_.data[ch]) + kEps);
        const int64_t plane = s;
        for (int64_t bn = 0; bn < n; ++bn) {
          const T* gp = gout.ptr() + (bn * c + ch) * plane;
          T* dp = gin.ptr() + (bn * c + ch) * plane;
          for (int64_t i = 0; i < plane; ++i) dp[i] = static_cast<T>(scale * gp[i]);
        }
      }
    }
    return gin;
  }

  void collect_params(const std::string& p, std::vector<ParamRef<T>>& out) override {
    out.push_back({p + ".gamma", &gamma_, &ggamma_, true});
    out.push_back({p + ".beta", &beta_, &gbeta_, true});
    out.push_back({p + ".running_mean", &running_mean_, nullptr, false});
    out.push_back({p + ".running_var", &running_var_, nullptr, false});
  }

 private:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;

  static std::tuple<int64_t, int, int64_t> dims(const Tensor<T>& t) {
    if (t.shape.size() == 4)
      return {t.shape[0], t.shape[1], static_cast<int64_t>(t.shape[2]) * t.shape[3]};
    if (t.shape.size() == 2) return {t.shape[0], t.shape[1], 1};
    throw invalid_input_error("batchnorm expects 2D or 4D input");
  }

  template <class Fn>
  void for_channel(const Tensor<T>& t, int ch, Fn&& fn) const {
    const auto [n, c, s] = dims(t);
    for (int64_t bn = 0; bn < n; ++bn) {
      const T* p = t.ptr() + (bn * c + ch) * s;
      for (int64_t i = 0; i < s; ++i) fn(p[i]);
    }
  }

  template <class Fn>
  void transform_channel(const Tensor<T>& in, Tensor<T>& xhat, Tensor<T>& out,
                         int ch, Fn&& fn) const {
    const auto [n, c, s] = dims(in);
    for (int64_t bn = 0; bn < n; ++bn) {
      const T* p = in.ptr() + (bn * c + ch) * s;
      T* xp = xhat.ptr() + (bn * c + ch) * s;
      T* op = out.ptr() + (bn * c + ch) * s;
      for (int64_t i = 0; i < s; ++i) op[i] = fn(p[i], xp[i]);
    }
  }

  template <class Fn>
  void copy_channel(const Tensor<T>& in, Tensor<T>& out, int ch, Fn&& fn) const {
    const auto [n, c, s] = dims(in);
    for (int64_t bn = 0; bn < n; ++bn) {
      const T* p = in.ptr() + (bn * c + ch) * s;
      T* op = out.ptr() + (bn * c + ch) * s;
      for (int64_t i = 0; i < s; ++i) op[i] = fn(p[i]);
    }
  }

  LayerSpec spec_;
  int channels_ = 0;
  Tensor<T> gamma_, beta_, running_mean_, running_var_, ggamma_, gbeta_;
};

template <class T>
class ReluLayer final : public Layer<T> {
 public:
  ReluLayer(const LayerSpec& s, const std::vector<int>&) : spec_(s) {}
  LayerSpec spec() const override { return spec_; }
  std::string name() const override { return "relu"; }
  std::vector<int> output_shape(const std::vector<int>& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& in, TapeEntry<T>& tape, Mode, Rng&, int) override {
    Tensor<T> out(in.shape);
    for (int64_t i = 0; i < in.numel(); ++i)
      out.data[i] = in.data[i] > T(0) ? in.data[i] : T(0);
    tape.saved = {in};
    return out;
  }

  Tensor<T> backward(const TapeEntry<T>& tape, const Tensor<T>& gout, bool want_gin,
                     int) override {
    if (!want_gin) return {};
    const Tensor<T>& in = tape.saved[0];
    Tensor<T> gin(gout.shape);
    for (int64_t i = 0; i < gout.numel(); ++i)
      gin.data[i] = in.data[i] > T(0) ? gout.data[i] : T(0);
    return gin;
  }

 private:
  LayerSpec spec_;
};

template <class T>
class FcLayer final : public Layer<T> {
 public:
  FcLayer(const LayerSpec& s, const std::vector<int>& in_shape) : spec_(s) {
    if (in_shape.size() != 1)
      throw invalid_input_error("fc expects flat input; add global_flatten first");
    in_dim_ = in_shape[0];
    w_ = Tensor<T>({s.out_ch, in_dim_});
    b_ = Tensor<T>({s.out_ch});
    gw_ = zeros_like(w_);
    gb_ = zeros_like(b_);
  }

  LayerSpec spec() const override { return spec_; }
  std::string name() const override { return "fc"; }
  std::vector<int> output_shape(const std::vector<int>&) const override {
    return {spec_.out_ch};
  }

  void init_params(Rng& rng) override {
    const double std = std::sqrt(2.0 / in_dim_);
    for (auto& v : w_.data) v = static_cast<T>(rng.normal() * std);
  }

  Tensor<T> forward(const Tensor<T>& in, TapeEntry<T>& tape, Mode, Rng&,
                    int threads) override {
    const int n = in.shape[0], o_n = spec_.out_ch;
    Tensor<T> out({n, o_n});
    parallel_for(n, threads, [&](int64_t nb, int64_t ne) {
      for (int64_t bn = nb; bn < ne; ++bn) {
        const T* ip = in.ptr() + bn * in_dim_;
        T* op = out.ptr() + bn * o_n;
        for (int o = 0; o < o_n; ++o) {
          const T* wp = w_.ptr() + static_cast<int64_t>(o) * in_dim_;
          T acc = b_.data[o];
          for (int i = 0; i < in_dim_; ++i) acc += wp[i] * ip[i];
          op[o] = acc;
        }
      }
    });
    tape.saved = {in};
    return out;
  }

  Tensor<T> backward(const TapeEntry<T>& tape, const Tensor<T>& gout, bool want_gin,
                     int threads) override {
    const Tensor<T>& in = tape.saved[0];
    const int n = in.shape[0], o_n = spec_.out_ch;
    Tensor<T> gin = want_gin ? zeros_like(in) : Tensor<T>();
    if (want_gin) {
      parallel_for(n, threads, [&](int64_t nb, int64_t ne) {
        for (int64_t bn = nb; bn < ne; ++bn) {
          const T* gp = gout.ptr() + bn * o_n;
          T* dp = gin.ptr() + bn * in_dim_;
          for (int o = 0; o < o_n; ++o) {
            const T g = gp[o];
            const T* wp = w_.ptr() + static_cast<int64_t>(o) * in_dim_;
            for (int i = 0; i < in_dim_; ++i) dp[i] += g * wp[i];
          }
        }
      });
    }
    parallel_for(o_n, threads, [&](int64_t ob, int64_t oe) {
      for (int64_t o = ob; o < oe; ++o) {
        T* gwp = gw_.ptr() + o * in_dim_;
        double gb_acc = 0.0;
        for (int64_t bn = 0; bn < n; ++bn) {
          const T g = gout.ptr()[bn * o_n + o];
          gb_acc += g;
          const T* ip = in.ptr() + bn * in_dim_;
          for (int i = 0; i < in_dim_; ++i) gwp[i] += g * ip[i];
        }
        gb_.data[o] += static_cast<T>(gb_acc);
      }
    });
    return gin;
  }

  void collect_params(const std::string& p, std::vector<ParamRef<T>>& out) override {
    out.push_back({p + ".w", &w_, &gw_, true});
    out.push_back({p + ".b", &b_, &gb_, true});
  }

 private:
  LayerSpec spec_;
  int in_dim_ = 0;
  Tensor<T> w_, b_, gw_, gb_;
};

template <class T>
class DropoutLayer final : public Layer<T> {
 public:
  DropoutLayer(const LayerSpec& s, const std::vector<int>&) : spec_(s) {
    if (!(s.rate >= 0.0 && s.rate < 1.0))
      throw invalid_input_error("dropout rate must be in [0,1)");
  }
  LayerSpec spec() const override { return spec_; }
  std::string name() const override { return "dropout"; }
  std::vector<int> output_shape(const std::vector<int>& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& in, TapeEntry<T>& tape, Mode mode, Rng& rng,
                    int) override {
    tape.mode = mode;
    if (mode == Mode::kInfer) return in;  // exact identity
    const T scale = static_cast<T>(1.0 / (1.0 - spec_.rate));
    Tensor<T> mask(in.shape);
    Tensor<T> out(in.shape);
    for (int64_t i = 0; i < in.numel(); ++i) {
      const T m = rng.uniform() >= spec_.rate ? scale : T(0);
      mask.data[i] = m;
      out.data[i] = in.data[i] * m;
    }
    tape.saved = {std::move(mask)};
    return out;
  }

  Tensor<T> backward(const TapeEntry<T>& tape, const Tensor<T>& gout, bool want_gin,
                     int) override {
    if (!want_gin) return {};
    if (tape.mode == Mode::kInfer) return gout;
    const Tensor<T>& mask = tape.saved[0];
    Tensor<T> gin(gout.shape);
    for (int64_t i = 0; i < gout.numel(); ++i) gin.data[i] = gout.data[i] * mask.data[i];
    return gin;
  }

 private:
  LayerSpec spec_;
};

template <class T>
class GlobalFlattenLayer final : public Layer<T> {
 public:
  GlobalFlattenLayer(const LayerSpec& s, const std::vector<int>&) : spec_(s) {}
  LayerSpec spec() const override { return spec_; }
  std::string name() const override { return "global_flatten"; }
  std::vector<int> output_shape(const std::vector<int>& in) const override {
    int f = 1;
    for (int d : in) f *= d;
    return {f};
  }

  Tensor<T> forward(const Tensor<T>& in, TapeEntry<T>& tape, Mode, Rng&, int) override {
    Tensor<T> out = in;  // row-major layout is already flat
    out.shape = {in.shape[0], static_cast<int>(in.numel() / in.shape[0])};
    tape.saved_shape = in.shape;
    return out;
  }

  Tensor<T> backward(const TapeEntry<T>& tape, const Tensor<T>& gout, bool want_gin,
                     int) override {
    if (!want_gin) return {};
    Tensor<T> gin = gout;
    gin.shape = tape.saved_shape;
    return gin;
  }

 private:
  LayerSpec spec_;
};

template <class T>
class TanhLayer final : public Layer<T> {
 public:
  TanhLayer(const LayerSpec& s, const std::vector<int>&) : spec_(s) {}
  LayerSpec spec() const override { return spec_; }
  std::string name() const override { return "tanh"; }
  std::vector<int> output_shape(const std::vector<int>& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& in, TapeEntry<T>& tape, Mode, Rng&, int) override {
    Tensor<T> out(in.shape);
    for (int64_t i = 0; i < in.numel(); ++i) out.data[i] = std::tanh(in.data[i]);
    tape.saved = {out};
    return out;
  }

  Tensor<T> backward(const TapeEntry<T>& tape, const Tensor<T>& gout, bool want_gin,
                     int) override {
    if (!want_gin) return {};
    const Tensor<T>& y = tape.saved[0];
    Tensor<T> gin(gout.shape);
    for (int64_t i = 0; i < gout.numel(); ++i)
      gin.data[i] = gout.data[i] * (T(1) - y.data[i] * y.data[i]);
    return gin;
  }

 private:
  LayerSpec spec_;
};

// conv-bn-relu-conv-bn with an identity skip, then relu. Channel count must
// match the input (the desk nets change width in the stride-2 convs between
// blocks).
template <class T>
class ResidualBlockLayer final : public Layer<T> {
 public:
  ResidualBlockLayer(const LayerSpec& s, const std::vector<int>& in_shape) : spec_(s) {
    if (in_shape.size() != 3 || in_shape[0] != s.out_ch)
      throw invalid_input_error("residual_block channels must match input");
    std::vector<LayerSpec> sub = {LayerSpec::conv3x3(s.out_ch, 1), LayerSpec::batchnorm(),
                                  LayerSpec::relu(), LayerSpec::conv3x3(s.out_ch, 1),
                                  LayerSpec::batchnorm()};
    std::vector<int> shape = in_shape;
    for (const auto& ls : sub) {
      sub_.push_back(make_layer<T>(ls, shape));
      shape = sub_.back()->output_shape(shape);
    }
  }

  LayerSpec spec() const override { return spec_; }
  std::string name() const override { return "residual_block"; }
  std::vector<int> output_shape(const std::vector<int>& in) const override { return in; }

  void init_params(Rng& rng) override {
    for (auto& l : sub_) l->init_params(rng);
  }

  Tensor<T> forward(const Tensor<T>& in, TapeEntry<T>& tape, Mode mode, Rng& rng,
                    int threads) override {
    tape.children.resize(sub_.size());
    Tensor<T> h = in;
    for (size_t i = 0; i < sub_.size(); ++i)
      h = sub_[i]->forward(h, tape.children[i], mode, rng, threads);
    Tensor<T> sum(in.shape);
    Tensor<T> out(in.shape);
    for (int64_t i = 0; i < in.numel(); ++i) {
      const T s = h.data[i] + in.data[i];
      sum.data[i] = s;
      out.data[i] = s > T(0) ? s : T(0);
    }
    tape.saved = {std::move(sum)};
    return out;
  }

  Tensor<T> backward(const TapeEntry<T>& tape, const Tensor<T>& gout, bool,
                     int threads) override {
    const Tensor<T>& sum = tape.saved[0];
    Tensor<T> gsum(gout.shape);
    for (int64_t i = 0; i < gout.numel(); ++i)
      gsum.data[i] = sum.data[i] > T(0) ? gout.data[i] : T(0);
    Tensor<T> g = gsum;
    for (size_t i = sub_.size(); i-- > 0;)
      g = sub_[i]->backward(tape.children[i], g, true, threads);
    for (int64_t i = 0; i < g.numel(); ++i) g.data[i] += gsum.data[i];
    return g;
  }

  void collect_params(const std::string& p, std::vector<ParamRef<T>>& out) override {
    for (size_t i = 0; i < sub_.size(); ++i)
      sub_[i]->collect_params(p + "." + std::to_string(i) + "." + sub_[i]->name(), out);
  }

 private:
  LayerSpec spec_;
  std::vector<std::unique_ptr<Layer<T>>> sub_;
};

}  // namespace detail

template <class T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec,
                                     const std::vector<int>& in_shape) {
  using K = LayerSpec::Kind;
  switch (spec.kind) {
    case K::kConv3x3: return std::make_unique<detail::Conv3x3Layer<T>>(spec, in_shape);
    case K::kBatchNorm: return std::make_unique<detail::BatchNormLayer<T>>(spec, in_shape);
    case K::kRelu: return std::make_unique<detail::ReluLayer<T>>(spec, in_shape);
    case K::kFc: return std::make_unique<detail::FcLayer<T>>(spec, in_shape);
    case K::kDropout: return std::make_unique<detail::DropoutLayer<T>>(spec, in_shape);
    case K::kResidualBlock:
      return std::make_unique<detail::ResidualBlockLayer<T>>(spec, in_shape);
    case K::kGlobalFlatten:
      return std::make_unique<detail::GlobalFlattenLayer<T>>(spec, in_shape);
    case K::kTanh: return std::make_unique<detail::TanhLayer<T>>(spec, in_shape);
  }
  throw invalid_input_error("unknown layer kind");
}

template <class T>
Net<T>::Net(std::vector<LayerSpec> specs, std::vector<int> input_shape,
            uint64_t init_seed)
    : specs_(std::move(specs)), input_shape_(std::move(input_shape)), init_seed_(init_seed) {
  std::vector<int> shape = input_shape_;
  for (const auto& s : specs_) {
    layers_.push_back(make_layer<T>(s, shape));
    shape = layers_.back()->output_shape(shape);
  }
  output_shape_ = shape;
  for (size_t i = 0; i < layers_.size(); ++i) {
    Rng r(derive_seed(init_seed_, "layer-init", i));
    layers_[i]->init_params(r);
  }
}

template <class T>
Tensor<T> Net<T>::forward(const Tensor<T>& in, Tape<T>& tape, Mode mode, Rng& rng,
                          int threads) {
  if (in.shape.size() != input_shape_.size() + 1)
    throw invalid_input_error("net forward: input rank mismatch");
  for (size_t i = 0; i < input_shape_.size(); ++i)
    if (in.shape[i + 1] != input_shape_[i])
      throw invalid_input_error("net forward: input shape mismatch");
  tape.entries.assign(layers_.size(), {});
  Tensor<T> x = in;
  for (size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i]->forward(x, tape.entries[i], mode, rng, threads);
    if (!x.all_finite())
      throw numerical_abort_error("non-finite activation after layer " +
                                  std::to_string(i) + " (" + layers_[i]->name() + ")");
  }
  return x;
}

template <class T>
Tensor<T> Net<T>::infer(const Tensor<T>& in, int threads) {
  Tape<T> tape;
  Rng dummy(0);
  return forward(in, tape, Mode::kInfer, dummy, threads);
}

template <class T>
Tensor<T> Net<T>::backward(const Tape<T>& tape, const Tensor<T>& grad_out,
                           int threads, bool want_input_grad) {
  if (tape.entries.size() != layers_.size())
    throw invalid_input_error("net backward: tape does not match this net");
  Tensor<T> g = grad_out;
  for (size_t i = layers_.size(); i-- > 0;) {
    const bool want = want_input_grad || i > 0;
    g = layers_[i]->backward(tape.entries[i], g, want, threads);
  }
  return g;
}

template <class T>
std::vector<ParamRef<T>> Net<T>::params() {
  std::vector<ParamRef<T>> out;
  for (size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->collect_params("layer" + std::to_string(i) + "." + layers_[i]->name(), out);
  return out;
}

template <class T>
void Net<T>::zero_grads() {
  for (auto& p : params())
    if (p.grad)
      for (auto& v : p.grad->data) v = T(0);
}

template <class T>
int64_t Net<T>::param_count() {
  int64_t n = 0;
  for (auto& p : params()) n += p.value->numel();
  return n;
}

template <class T>
Net<T> Net<T>::clone() const {
  Net<T> copy(specs_, input_shape_, init_seed_);
  auto* self = const_cast<Net<T>*>(this);
  auto src = self->params();
  auto dst = copy.params();
  for (size_t i = 0; i < src.size(); ++i) dst[i].value->data = src[i].value->data;
  return copy;
}

template <class T>
std::pair<double, Tensor<T>> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (!pred.same_shape(target)) throw invalid_input_error("mse_loss: shape mismatch");
  const int64_t n = pred.numel();
  if (n == 0) throw invalid_input_error("mse_loss: empty tensors");
  double acc = 0.0;
  Tensor<T> grad(pred.shape);
  const double inv = 1.0 / static_cast<double>(n);
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred.data[i]) - target.data[i];
    acc += d * d;
    grad.data[i] = static_cast<T>(2.0 * d * inv);
  }
  return {acc * inv, std::move(grad)};
}

template <class T>
CriticLosses<T> critic_losses(const Tensor<T>& d_synth, const Tensor<T>& d_real) {
  const int64_t ns = d_synth.numel(), nr = d_real.numel();
  if (ns == 0 || nr == 0) throw invalid_input_error("critic_losses: empty batch");
  double ms = 0.0, mr = 0.0;
  for (const T v : d_synth.data) ms += v;
  for (const T v : d_real.data) mr += v;
  ms /= static_cast<double>(ns);
  mr /= static_cast<double>(nr);
  CriticLosses<T> out;
  out.critic_objective = ms - mr;
  out.generator_objective = -mr;
  out.d_synth_grad_critic = Tensor<T>(d_synth.shape);
  out.d_real_grad_critic = Tensor<T>(d_real.shape);
  out.d_real_grad_generator = Tensor<T>(d_real.shape);
  const T gs = static_cast<T>(-1.0 / static_cast<double>(ns));
  const T gr = static_cast<T>(1.0 / static_cast<double>(nr));
  for (auto& v : out.d_synth_grad_critic.data) v = gs;
  for (auto& v : out.d_real_grad_critic.data) v = gr;
  for (auto& v : out.d_real_grad_generator.data) v = -gr;
  return out;
}

}  // namespace ldankit::nn
