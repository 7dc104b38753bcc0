#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "aleph/environment.hpp"

namespace aleph {

// Layer shapes of the heuristic network:
//   conv(c1 filters) -> norm -> lrelu -> conv(c2 filters) -> norm -> lrelu
//   -> dense(hidden) -> norm -> lrelu -> dense(actions) -> abs
// Convolutions are unpadded and single-channel input is square.
struct Architecture {
  int input = kSensorSize;
  int conv1_filters = 16;
  int conv1_kernel = 8;
  int conv1_stride = 4;
  int conv2_filters = 32;
  int conv2_kernel = 4;
  int conv2_stride = 2;
  int hidden = 256;
  int actions = 35;

  int conv1_out() const { return (input - conv1_kernel) / conv1_stride + 1; }
  int conv2_out() const { return (conv1_out() - conv2_kernel) / conv2_stride + 1; }
  std::size_t input_size() const {
    return static_cast<std::size_t>(input) * static_cast<std::size_t>(input);
  }
  std::size_t flat_size() const;
  std::size_t parameter_count() const;

  // Single-line textual form stored in checkpoints, e.g.
  // "conv input=84 c1=16x8s4 c2=32x4s2 hidden=256 actions=35".
  std::string descriptor() const;
  static Architecture parse(const std::string& descriptor);
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

// Cache-line aligned storage. Vectorized reductions peel elements up to the
// first aligned address, so a fixed alignment keeps results bit-reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline constexpr double kLeakySlope = 0.3;
inline constexpr double kNormEpsilon = 1e-5;

// Per-layer intermediate values of one forward pass over a batch. Exposed so
// tests can inspect normalization statistics and kink proximity.
template <typename Scalar>
struct ForwardTrace {
  // Normalized pre-activations, one column block per sample.
  std::vector<Scalar> norm1, norm2, norm3;
  std::vector<Scalar> logits;  // final linear outputs before abs
};

// Trainable heuristic. Scalar is float for production; double instantiations
// exist for gradient checking.
template <typename Scalar>
class BasicHeuristicNet {
 public:
  explicit BasicHeuristicNet(Architecture arch);

  // He-uniform weights, zero biases.
  static BasicHeuristicNet initialized(Architecture arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  std::span<Scalar> parameters() { return params_; }
  std::span<const Scalar> parameters() const { return params_; }

  // images: k * input_size values; q: k * actions values. Throws ShapeError
  // or NonFiniteError.
  void forward(std::span<const float> images, std::span<Scalar> q) const;
  std::vector<Scalar> forward(std::span<const float> image) const;
  void forward(std::span<const float> images, std::span<Scalar> q,
               ForwardTrace<Scalar>& trace) const;

  // Mean over the batch of |target - q|^2 / actions and its gradient w.r.t.
  // the parameters (written to `gradient`, sized parameter_count()).
  // per_sample, when non-empty, receives each sample's loss.
  Scalar loss_and_gradient(std::span<const float> images, std::span<const Scalar> targets,
                           std::span<Scalar> gradient, std::span<Scalar> per_sample = {}) const;

  // theta <- theta - lr * grad; returns the pre-step batch loss.
  Scalar sgd_step(std::span<const float> images, std::span<const Scalar> targets,
                  Scalar learning_rate, std::span<Scalar> per_sample = {});

 private:
  struct Cache;
  std::size_t batch_of(std::span<const float> images) const;
  void run_forward(std::span<const float> images, std::size_t batch, Cache& cache) const;

  Architecture arch_;
  AlignedVector<Scalar> params_;
};

using HeuristicNet = BasicHeuristicNet<float>;

// Mean of squared per-action errors. Throws ShapeError on length mismatch.
double q_loss(std::span<const double> predicted, std::span<const double> target);

// Checkpoint I/O: "ALEPHNN1\n", descriptor line, little-endian float32 params.
inline constexpr std::string_view kCheckpointMagic = "ALEPHNN1";

void save_checkpoint(const std::filesystem::path& path, const std::string& descriptor,
                     std::span<const float> params);
struct RawCheckpoint {
  std::string descriptor;
  std::vector<float> params;
};
// Throws CheckpointError on bad magic or truncation.
RawCheckpoint read_checkpoint(const std::filesystem::path& path);

void save(const HeuristicNet& net, const std::filesystem::path& path);
HeuristicNet load(const std::filesystem::path& path);
// Also rejects a checkpoint whose architecture differs from `expected`.
HeuristicNet load(const std::filesystem::path& path, const Architecture& expected);

// Adapts a network to the Heuristic interface by rendering sensors first.
class NetHeuristic : public Heuristic {
 public:
  explicit NetHeuristic(const HeuristicNet& net) : net_(net) {}
  void evaluate(const Environment& env, const State& state, std::span<double> q) override;

 private:
  const HeuristicNet& net_;
  std::vector<float> image_ = std::vector<float>(kSensorPixels);
  std::vector<float> out_;
};

}  // namespace aleph
