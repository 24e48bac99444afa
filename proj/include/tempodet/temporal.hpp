#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "tempodet/numkit/tensor.hpp"

namespace tempodet::temporal {

using numkit::Param;
using numkit::Tensor;

enum Gate : int { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCandidate = 3 };

struct ConvLstmConfig {
  int input_channels = 0;
  int hidden_channels = 0;
  int kernel = 3;  // odd, padding (k-1)/2 keeps the spatial extent
};

/// Peephole-free ConvLSTM parameters: one input kernel, one hidden kernel and
/// one bias per gate (input, forget, output, candidate).
template <typename T>
struct ConvLstmParams {
  ConvLstmConfig config;
  std::array<Param<T>, 4> wx;  // [Ch, Cin, k, k]
  std::array<Param<T>, 4> wh;  // [Ch, Ch, k, k]
  std::array<Param<T>, 4> b;   // [Ch]

  std::vector<Param<T>*> params();
};

template <typename T>
ConvLstmParams<T> zero_convlstm_params(const ConvLstmConfig& config, const std::string& prefix);

template <typename T>
ConvLstmParams<T> make_convlstm_params(const ConvLstmConfig& config, const std::string& prefix, std::mt19937_64& rng);

template <typename T>
struct ConvLstmState {
  Tensor<T> h;  // [B,Ch,H,W], elements in (-1,1)
  Tensor<T> c;  // [B,Ch,H,W]
};

template <typename T>
ConvLstmState<T> zero_state(int batch, int hidden_channels, int height, int width);

template <typename T>
struct CellCache {
  Tensor<T> stacked_input;  // concat(x, h_prev)
  Tensor<T> gates;          // activated gates [B,4Ch,H,W] in Gate order
  Tensor<T> c_prev;
  Tensor<T> tanh_c;         // tanh(c_next)
};

template <typename T>
ConvLstmState<T> convlstm_cell(const Tensor<T>& x, const ConvLstmState<T>& state, const ConvLstmParams<T>& p,
                               std::type_identity_t<CellCache<T>>* cache = nullptr);

template <typename T>
struct CellGrad {
  Tensor<T> dx;
  Tensor<T> dh_prev;
  Tensor<T> dc_prev;
};

// dh and dc are the gradients w.r.t. the cell's outputs h' and c'.
template <typename T>
CellGrad<T> convlstm_cell_backward(const CellCache<T>& cache, ConvLstmParams<T>& p, const Tensor<T>& dh,
                                   const Tensor<T>& dc);

template <typename T>
struct RolloutCache {
  std::vector<CellCache<T>> steps;
};

/// Folds the cell over the sequence from `init` (zeros when null) and returns
/// every intermediate state.
template <typename T>
std::vector<ConvLstmState<T>> convlstm_rollout(const std::vector<Tensor<T>>& sequence, const ConvLstmParams<T>& p,
                                               const std::type_identity_t<ConvLstmState<T>>* init = nullptr, std::type_identity_t<RolloutCache<T>>* cache = nullptr);

// dh_per_step[t] is dL/dh_t (an empty tensor means zero). Returns dL/dx_t.
template <typename T>
std::vector<Tensor<T>> convlstm_rollout_backward(const RolloutCache<T>& cache, ConvLstmParams<T>& p,
                                                 const std::vector<Tensor<T>>& dh_per_step);

// Number of cell evaluations made by this thread so far.
std::uint64_t cell_invocations();

}  // namespace tempodet::temporal
