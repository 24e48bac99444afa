#include "tempodet/temporal.hpp"

#include <cmath>

#include "tempodet/errors.hpp"
#include "tempodet/numkit/init.hpp"
#include "tempodet/numkit/ops.hpp"

namespace tempodet::temporal {

namespace {

thread_local std::uint64_t g_cell_calls = 0;

const char* kGateNames[4] = {"i", "f", "o", "c"};

void validate(const ConvLstmConfig& c) {
  if (c.input_channels < 1 || c.hidden_channels < 1) throw ShapeError("convlstm: channel counts must be positive");
  if (c.kernel < 1 || c.kernel % 2 == 0) throw ShapeError("convlstm: kernel must be odd");
}

// All four gates as one convolution over concat(x, h):
// weight [4Ch, Cin+Ch, k, k], bias [4Ch].
template <typename T>
struct Packed {
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
Packed<T> pack(const ConvLstmParams<T>& p) {
  const int Cin = p.config.input_channels, Ch = p.config.hidden_channels, k = p.config.kernel;
  const std::size_t kk = static_cast<std::size_t>(k) * k;
  Packed<T> out{Tensor<T>({4 * Ch, Cin + Ch, k, k}), Tensor<T>({4 * Ch})};
  for (int g = 0; g < 4; ++g)
    for (int o = 0; o < Ch; ++o) {
      T* row = out.weight.data() + static_cast<std::size_t>(g * Ch + o) * (Cin + Ch) * kk;
      std::copy_n(p.wx[static_cast<std::size_t>(g)].value.data() + static_cast<std::size_t>(o) * Cin * kk, Cin * kk, row);
      std::copy_n(p.wh[static_cast<std::size_t>(g)].value.data() + static_cast<std::size_t>(o) * Ch * kk, Ch * kk,
                  row + Cin * kk);
      out.bias[static_cast<std::size_t>(g * Ch + o)] = p.b[static_cast<std::size_t>(g)].value[static_cast<std::size_t>(o)];
    }
  return out;
}

template <typename T>
void scatter_grads(const Packed<T>& grad, ConvLstmParams<T>& p) {
  const int Cin = p.config.input_channels, Ch = p.config.hidden_channels, k = p.config.kernel;
  const std::size_t kk = static_cast<std::size_t>(k) * k;
  for (int g = 0; g < 4; ++g) {
    auto& wx = p.wx[static_cast<std::size_t>(g)].grad;
    auto& wh = p.wh[static_cast<std::size_t>(g)].grad;
    auto& b = p.b[static_cast<std::size_t>(g)].grad;
    for (int o = 0; o < Ch; ++o) {
      const T* row = grad.weight.data() + static_cast<std::size_t>(g * Ch + o) * (Cin + Ch) * kk;
      T* dx = wx.data() + static_cast<std::size_t>(o) * Cin * kk;
      T* dh = wh.data() + static_cast<std::size_t>(o) * Ch * kk;
      for (std::size_t i = 0; i < Cin * kk; ++i) dx[i] += row[i];
      for (std::size_t i = 0; i < Ch * kk; ++i) dh[i] += row[Cin * kk + i];
      b[static_cast<std::size_t>(o)] += grad.bias[static_cast<std::size_t>(g * Ch + o)];
    }
  }
}

template <typename T>
void check_step(const Tensor<T>& x, const ConvLstmState<T>& s, const ConvLstmParams<T>& p) {
  numkit::require_rank(x, 4, "convlstm input");
  if (x.dim(1) != p.config.input_channels) {
    throw ShapeError("convlstm: expected " + std::to_string(p.config.input_channels) + " input channels, got " +
                     numkit::shape_string(x.shape()));
  }
  const numkit::Shape expected{x.dim(0), p.config.hidden_channels, x.dim(2), x.dim(3)};
  if (s.h.shape() != expected || s.c.shape() != expected) {
    throw ShapeError("convlstm: state " + numkit::shape_string(s.h.shape()) + " incompatible with input " +
                     numkit::shape_string(x.shape()));
  }
}

template <typename T>
ConvLstmState<T> cell_with(const Tensor<T>& x, const ConvLstmState<T>& s, const ConvLstmParams<T>& p,
                           const Packed<T>& packed, CellCache<T>* cache) {
  check_step(x, s, p);
  ++g_cell_calls;
  const int B = x.dim(0), Ch = p.config.hidden_channels, H = x.dim(2), W = x.dim(3);
  const std::size_t area = static_cast<std::size_t>(H) * W;
  Tensor<T> stacked = numkit::concat_channels(x, s.h);
  Tensor<T> gates = numkit::conv2d(stacked, packed.weight, &packed.bias, {1, (p.config.kernel - 1) / 2});
  ConvLstmState<T> next{Tensor<T>(s.h.shape()), Tensor<T>(s.c.shape())};
  Tensor<T> tanh_c(s.c.shape());
  const std::size_t block = static_cast<std::size_t>(Ch) * area;
  for (int n = 0; n < B; ++n) {
    T* z = gates.data() + static_cast<std::size_t>(n) * 4 * block;
    const std::size_t base = static_cast<std::size_t>(n) * block;
    for (std::size_t j = 0; j < block; ++j) {
      const T i = numkit::sigmoid(z[j]);
      const T f = numkit::sigmoid(z[block + j]);
      const T o = numkit::sigmoid(z[2 * block + j]);
      const T g = std::tanh(z[3 * block + j]);
      z[j] = i;
      z[block + j] = f;
      z[2 * block + j] = o;
      z[3 * block + j] = g;
      const T c = f * s.c[base + j] + i * g;
      const T tc = std::tanh(c);
      next.c[base + j] = c;
      tanh_c[base + j] = tc;
      next.h[base + j] = o * tc;
    }
  }
  if (cache) {
    cache->stacked_input = std::move(stacked);
    cache->gates = std::move(gates);
    cache->c_prev = s.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

template <typename T>
CellGrad<T> cell_backward_with(const CellCache<T>& cache, const ConvLstmParams<T>& p, const Packed<T>& packed,
                               Packed<T>& packed_grad, const Tensor<T>& dh, const Tensor<T>& dc) {
  const Tensor<T>& c_prev = cache.c_prev;
  const int B = c_prev.dim(0), Ch = c_prev.dim(1);
  const std::size_t block = static_cast<std::size_t>(Ch) * c_prev.dim(2) * c_prev.dim(3);
  Tensor<T> dz(cache.gates.shape());
  CellGrad<T> out;
  out.dc_prev = Tensor<T>(c_prev.shape());
  for (int n = 0; n < B; ++n) {
    const T* gz = cache.gates.data() + static_cast<std::size_t>(n) * 4 * block;
    T* d = dz.data() + static_cast<std::size_t>(n) * 4 * block;
    const std::size_t base = static_cast<std::size_t>(n) * block;
    for (std::size_t j = 0; j < block; ++j) {
      const T i = gz[j], f = gz[block + j], o = gz[2 * block + j], g = gz[3 * block + j];
      const T tc = cache.tanh_c[base + j];
      const T gh = dh.empty() ? T(0) : dh[base + j];
      const T gc = (dc.empty() ? T(0) : dc[base + j]) + gh * o * (T(1) - tc * tc);
      d[j] = gc * g * i * (T(1) - i);
      d[block + j] = gc * c_prev[base + j] * f * (T(1) - f);
      d[2 * block + j] = gh * tc * o * (T(1) - o);
      d[3 * block + j] = gc * i * (T(1) - g * g);
      out.dc_prev[base + j] = gc * f;
    }
  }
  const Tensor<T> d_stacked = numkit::conv2d_backward(cache.stacked_input, packed.weight, packed_grad.weight,
                                                      &packed_grad.bias, {1, (p.config.kernel - 1) / 2}, dz);
  auto [dx, dh_prev] = numkit::split_channels(d_stacked, p.config.input_channels);
  out.dx = std::move(dx);
  out.dh_prev = std::move(dh_prev);
  return out;
}

template <typename T>
Packed<T> zero_packed(const ConvLstmParams<T>& p) {
  const int Cin = p.config.input_channels, Ch = p.config.hidden_channels, k = p.config.kernel;
  return Packed<T>{Tensor<T>({4 * Ch, Cin + Ch, k, k}), Tensor<T>({4 * Ch})};
}

}  // namespace

std::uint64_t cell_invocations() { return g_cell_calls; }

template <typename T>
std::vector<Param<T>*> ConvLstmParams<T>::params() {
  std::vector<Param<T>*> out;
  for (std::size_t g = 0; g < 4; ++g) {
    out.push_back(&wx[g]);
    out.push_back(&wh[g]);
    out.push_back(&b[g]);
  }
  return out;
}

template <typename T>
ConvLstmParams<T> zero_convlstm_params(const ConvLstmConfig& config, const std::string& prefix) {
  validate(config);
  const int Cin = config.input_channels, Ch = config.hidden_channels, k = config.kernel;
  ConvLstmParams<T> p;
  p.config = config;
  for (std::size_t g = 0; g < 4; ++g) {
    const std::string gate = kGateNames[g];
    p.wx[g] = Param<T>(prefix + ".wx_" + gate, Tensor<T>({Ch, Cin, k, k}));
    p.wh[g] = Param<T>(prefix + ".wh_" + gate, Tensor<T>({Ch, Ch, k, k}));
    p.b[g] = Param<T>(prefix + ".b_" + gate, Tensor<T>({Ch}));
  }
  return p;
}

template <typename T>
ConvLstmParams<T> make_convlstm_params(const ConvLstmConfig& config, const std::string& prefix, std::mt19937_64& rng) {
  ConvLstmParams<T> p = zero_convlstm_params<T>(config, prefix);
  const int Cin = config.input_channels, Ch = config.hidden_channels, k = config.kernel;
  const int fan_in = (Cin + Ch) * k * k;
  for (std::size_t g = 0; g < 4; ++g) {
    p.wx[g].value = numkit::he_normal<T>({Ch, Cin, k, k}, fan_in, rng);
    p.wh[g].value = numkit::he_normal<T>({Ch, Ch, k, k}, fan_in, rng, 0.5);
  }
  p.b[kForgetGate].value.fill(T(1));
  return p;
}

template <typename T>
ConvLstmState<T> zero_state(int batch, int hidden_channels, int height, int width) {
  return {Tensor<T>({batch, hidden_channels, height, width}), Tensor<T>({batch, hidden_channels, height, width})};
}

template <typename T>
ConvLstmState<T> convlstm_cell(const Tensor<T>& x, const ConvLstmState<T>& state, const ConvLstmParams<T>& p,
                               std::type_identity_t<CellCache<T>>* cache) {
  return cell_with(x, state, p, pack(p), cache);
}

template <typename T>
CellGrad<T> convlstm_cell_backward(const CellCache<T>& cache, ConvLstmParams<T>& p, const Tensor<T>& dh,
                                   const Tensor<T>& dc) {
  const Packed<T> packed = pack(p);
  Packed<T> grad = zero_packed(p);
  CellGrad<T> out = cell_backward_with(cache, p, packed, grad, dh, dc);
  scatter_grads(grad, p);
  return out;
}

template <typename T>
std::vector<ConvLstmState<T>> convlstm_rollout(const std::vector<Tensor<T>>& sequence, const ConvLstmParams<T>& p,
                                               const std::type_identity_t<ConvLstmState<T>>* init, std::type_identity_t<RolloutCache<T>>* cache) {
  if (sequence.empty()) throw ShapeError("convlstm_rollout: empty sequence");
  const Tensor<T>& first = sequence.front();
  numkit::require_rank(first, 4, "convlstm_rollout frame");
  for (const auto& frame : sequence) {
    if (frame.shape() != first.shape()) throw ShapeError("convlstm_rollout: frames differ in shape");
  }
  const Packed<T> packed = pack(p);
  ConvLstmState<T> state =
      init ? *init : zero_state<T>(first.dim(0), p.config.hidden_channels, first.dim(2), first.dim(3));
  std::vector<ConvLstmState<T>> states;
  states.reserve(sequence.size());
  if (cache) cache->steps.assign(sequence.size(), CellCache<T>{});
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    state = cell_with(sequence[t], state, p, packed, cache ? &cache->steps[t] : nullptr);
    states.push_back(state);
  }
  return states;
}

template <typename T>
std::vector<Tensor<T>> convlstm_rollout_backward(const RolloutCache<T>& cache, ConvLstmParams<T>& p,
                                                 const std::vector<Tensor<T>>& dh_per_step) {
  const std::size_t steps = cache.steps.size();
  if (dh_per_step.size() != steps) throw ShapeError("convlstm_rollout_backward: one gradient per step required");
  const Packed<T> packed = pack(p);
  Packed<T> grad = zero_packed(p);
  std::vector<Tensor<T>> dx(steps);
  Tensor<T> carry_h;
  Tensor<T> carry_c;
  for (std::size_t k = steps; k-- > 0;) {
    Tensor<T> dh = dh_per_step[k];
    if (!carry_h.empty()) {
      if (dh.empty()) {
        dh = carry_h;
      } else {
        dh += carry_h;
      }
    }
    CellGrad<T> g = cell_backward_with(cache.steps[k], p, packed, grad, dh, carry_c);
    dx[k] = std::move(g.dx);
    carry_h = std::move(g.dh_prev);
    carry_c = std::move(g.dc_prev);
  }
  scatter_grads(grad, p);
  return dx;
}

#define TEMPODET_INSTANTIATE_TEMPORAL(T)                                                                         \
  template struct ConvLstmParams<T>;                                                                             \
  template ConvLstmParams<T> zero_convlstm_params<T>(const ConvLstmConfig&, const std::string&);                 \
  template ConvLstmParams<T> make_convlstm_params<T>(const ConvLstmConfig&, const std::string&, std::mt19937_64&); \
  template ConvLstmState<T> zero_state<T>(int, int, int, int);                                                   \
  template ConvLstmState<T> convlstm_cell<T>(const Tensor<T>&, const ConvLstmState<T>&, const ConvLstmParams<T>&, \
                                             CellCache<T>*);                                                     \
  template CellGrad<T> convlstm_cell_backward<T>(const CellCache<T>&, ConvLstmParams<T>&, const Tensor<T>&,      \
                                                 const Tensor<T>&);                                              \
  template std::vector<ConvLstmState<T>> convlstm_rollout<T>(const std::vector<Tensor<T>>&,                      \
                                                             const ConvLstmParams<T>&, const ConvLstmState<T>*,  \
                                                             RolloutCache<T>*);                                  \
  template std::vector<Tensor<T>> convlstm_rollout_backward<T>(const RolloutCache<T>&, ConvLstmParams<T>&,       \
                                                               const std::vector<Tensor<T>>&);

TEMPODET_INSTANTIATE_TEMPORAL(float)
TEMPODET_INSTANTIATE_TEMPORAL(double)

}  // namespace tempodet::temporal
