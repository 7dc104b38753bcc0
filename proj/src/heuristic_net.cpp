#include "aleph/heuristic_net.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "aleph/error.hpp"

namespace aleph {

// ---------------------------------------------------------------------------
// Architecture

std::size_t Architecture::flat_size() const {
  const auto side = static_cast<std::size_t>(conv2_out());
  return static_cast<std::size_t>(conv2_filters) * side * side;
}

std::size_t Architecture::parameter_count() const {
  const auto c1 = static_cast<std::size_t>(conv1_filters);
  const auto c2 = static_cast<std::size_t>(conv2_filters);
  const auto k1 = static_cast<std::size_t>(conv1_kernel);
  const auto k2 = static_cast<std::size_t>(conv2_kernel);
  const auto h = static_cast<std::size_t>(hidden);
  const auto a = static_cast<std::size_t>(actions);
  return c1 * k1 * k1 + c1 + c2 * c1 * k2 * k2 + c2 + h * flat_size() + h + a * h + a;
}

std::string Architecture::descriptor() const {
  std::ostringstream out;
  out << "conv input=" << input << " c1=" << conv1_filters << 'x' << conv1_kernel << 's'
      << conv1_stride << " c2=" << conv2_filters << 'x' << conv2_kernel << 's' << conv2_stride
      << " hidden=" << hidden << " actions=" << actions;
  return out.str();
}

Architecture Architecture::parse(const std::string& descriptor) {
  Architecture arch;
  char x1 = 0, s1 = 0, x2 = 0, s2 = 0;
  std::string kind, input, c1, c2, hidden, actions;
  std::istringstream in(descriptor);
  in >> kind >> input >> c1 >> c2 >> hidden >> actions;
  std::string rest;
  const bool ok = in && !(in >> rest) && kind == "conv" &&
                  std::sscanf(input.c_str(), "input=%d", &arch.input) == 1 &&
                  std::sscanf(c1.c_str(), "c1=%d%c%d%c%d", &arch.conv1_filters, &x1,
                              &arch.conv1_kernel, &s1, &arch.conv1_stride) == 5 &&
                  std::sscanf(c2.c_str(), "c2=%d%c%d%c%d", &arch.conv2_filters, &x2,
                              &arch.conv2_kernel, &s2, &arch.conv2_stride) == 5 &&
                  x1 == 'x' && s1 == 's' && x2 == 'x' && s2 == 's' &&
                  std::sscanf(hidden.c_str(), "hidden=%d", &arch.hidden) == 1 &&
                  std::sscanf(actions.c_str(), "actions=%d", &arch.actions) == 1;
  if (!ok) throw CheckpointError("unrecognized architecture: " + descriptor);
  arch.validate();
  return arch;
}

void Architecture::validate() const {
  const bool positive = input > 0 && conv1_filters > 0 && conv1_kernel > 0 &&
                        conv1_stride > 0 && conv2_filters > 0 && conv2_kernel > 0 &&
                        conv2_stride > 0 && hidden > 0 && actions > 0;
  if (!positive || conv1_kernel > input || conv2_kernel > conv1_out()) {
    throw ShapeError("invalid network architecture: " + descriptor());
  }
}

// ---------------------------------------------------------------------------
// Network

namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct Offsets {
  std::size_t w1, b1, w2, b2, w3, b3, w4, b4;
};

Offsets offsets_of(const Architecture& a) {
  Offsets o{};
  const auto k1 = static_cast<std::size_t>(a.conv1_kernel);
  const auto k2 = static_cast<std::size_t>(a.conv2_kernel);
  const auto c1 = static_cast<std::size_t>(a.conv1_filters);
  const auto c2 = static_cast<std::size_t>(a.conv2_filters);
  const auto h = static_cast<std::size_t>(a.hidden);
  const auto n = static_cast<std::size_t>(a.actions);
  o.w1 = 0;
  o.b1 = o.w1 + c1 * k1 * k1;
  o.w2 = o.b1 + c1;
  o.b2 = o.w2 + c2 * c1 * k2 * k2;
  o.w3 = o.b2 + c2;
  o.b3 = o.w3 + h * a.flat_size();
  o.w4 = o.b3 + h;
  o.b4 = o.w4 + n * h;
  return o;
}

// Views over the flat parameter (or gradient) vector, in layer order.
template <typename S>
struct Layers {
  Eigen::Map<RowMat<S>> w1, w2, w3, w4;
  Eigen::Map<Vec<S>> b1, b2, b3, b4;

  Layers(const Architecture& a, S* p) : Layers(a, p, offsets_of(a)) {}
  Layers(const Architecture& a, S* p, const Offsets& o)
      : w1(p + o.w1, a.conv1_filters, a.conv1_kernel * a.conv1_kernel),
        w2(p + o.w2, a.conv2_filters, a.conv1_filters * a.conv2_kernel * a.conv2_kernel),
        w3(p + o.w3, a.hidden, static_cast<Eigen::Index>(a.flat_size())),
        w4(p + o.w4, a.actions, a.hidden),
        b1(p + o.b1, a.conv1_filters),
        b2(p + o.b2, a.conv2_filters),
        b3(p + o.b3, a.hidden),
        b4(p + o.b4, a.actions) {}
};

// Normalizes each block of `width` consecutive columns to zero mean and unit
// variance; stores 1/sqrt(var + eps) per block.
template <typename S>
void normalize_blocks(Mat<S>& m, Eigen::Index width, Vec<S>& inv_std) {
  const Eigen::Index blocks = m.cols() / width;
  inv_std.resize(blocks);
  for (Eigen::Index b = 0; b < blocks; ++b) {
    auto block = m.middleCols(b * width, width);
    const S n = static_cast<S>(block.size());
    const S mean = block.sum() / n;
    block.array() -= mean;
    const S var = block.squaredNorm() / n;
    const S inv = S(1) / std::sqrt(var + static_cast<S>(kNormEpsilon));
    block *= inv;
    inv_std(b) = inv;
  }
}

// In place: grad w.r.t. normalized values -> grad w.r.t. pre-normalization.
template <typename S>
void normalize_blocks_backward(Mat<S>& grad, const Mat<S>& normalized, Eigen::Index width,
                               const Vec<S>& inv_std) {
  const Eigen::Index blocks = grad.cols() / width;
  for (Eigen::Index b = 0; b < blocks; ++b) {
    auto g = grad.middleCols(b * width, width);
    const auto y = normalized.middleCols(b * width, width);
    const S n = static_cast<S>(g.size());
    const S mean_g = g.sum() / n;
    const S mean_gy = g.cwiseProduct(y).sum() / n;
    g = inv_std(b) * ((g.array() - mean_g) - y.array() * mean_gy).matrix();
  }
}

template <typename S>
Mat<S> leaky(const Mat<S>& x) {
  const S slope = static_cast<S>(kLeakySlope);
  return x.unaryExpr([slope](S v) { return v >= S(0) ? v : slope * v; });
}

template <typename S>
void leaky_backward(Mat<S>& grad, const Mat<S>& pre) {
  const S slope = static_cast<S>(kLeakySlope);
  grad = grad.binaryExpr(pre, [slope](S g, S v) { return v >= S(0) ? g : slope * g; });
}

}  // namespace

template <typename Scalar>
struct BasicHeuristicNet<Scalar>::Cache {
  std::size_t batch = 0;
  Mat<Scalar> col1, norm1, act1;
  Vec<Scalar> inv1;
  Mat<Scalar> col2, norm2, act2;
  Vec<Scalar> inv2;
  Mat<Scalar> flat, norm3, act3;
  Vec<Scalar> inv3;
  Mat<Scalar> logits;
};

template <typename Scalar>
BasicHeuristicNet<Scalar>::BasicHeuristicNet(Architecture arch) : arch_(arch) {
  arch_.validate();
  params_.assign(arch_.parameter_count(), Scalar(0));
}

template <typename Scalar>
BasicHeuristicNet<Scalar> BasicHeuristicNet<Scalar>::initialized(Architecture arch,
                                                                 std::uint64_t seed) {
  BasicHeuristicNet net(arch);
  std::mt19937_64 rng(seed);
  Layers<Scalar> layers(net.arch_, net.params_.data());
  auto he_uniform = [&rng](auto& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = static_cast<Scalar>(dist(rng));
    }
  };
  he_uniform(layers.w1);
  he_uniform(layers.w2);
  he_uniform(layers.w3);
  he_uniform(layers.w4);
  return net;
}

template <typename Scalar>
std::size_t BasicHeuristicNet<Scalar>::batch_of(std::span<const float> images) const {
  const std::size_t pixels = arch_.input_size();
  if (images.empty() || images.size() % pixels != 0) {
    throw ShapeError("input of " + std::to_string(images.size()) +
                     " values is not a whole number of " + std::to_string(arch_.input) + "x" +
                     std::to_string(arch_.input) + " images");
  }
  for (float v : images) {
    if (!std::isfinite(v)) throw NonFiniteError("non-finite input pixel");
  }
  return images.size() / pixels;
}

template <typename Scalar>
void BasicHeuristicNet<Scalar>::run_forward(std::span<const float> images, std::size_t batch,
                                            Cache& c) const {
  using Index = Eigen::Index;
  const auto& a = arch_;
  Layers<Scalar> L(a, const_cast<Scalar*>(params_.data()));
  const Index in = a.input;
  const Index k1 = a.conv1_kernel, s1 = a.conv1_stride, o1 = a.conv1_out();
  const Index k2 = a.conv2_kernel, s2 = a.conv2_stride, o2 = a.conv2_out();
  const Index p1 = o1 * o1, p2 = o2 * o2;
  const Index c1 = a.conv1_filters, c2 = a.conv2_filters;
  const auto nb = static_cast<Index>(batch);
  c.batch = batch;

  // conv1 as one GEMM over all patches of all samples.
  c.col1.resize(k1 * k1, p1 * nb);
  for (Index b = 0; b < nb; ++b) {
    const float* img = images.data() + b * in * in;
    for (Index oy = 0; oy < o1; ++oy) {
      for (Index ox = 0; ox < o1; ++ox) {
        Scalar* col = c.col1.col(b * p1 + oy * o1 + ox).data();
        for (Index ky = 0; ky < k1; ++ky) {
          const float* row = img + (oy * s1 + ky) * in + ox * s1;
          for (Index kx = 0; kx < k1; ++kx) col[ky * k1 + kx] = static_cast<Scalar>(row[kx]);
        }
      }
    }
  }
  c.norm1.noalias() = L.w1 * c.col1;
  c.norm1.colwise() += L.b1;
  normalize_blocks(c.norm1, p1, c.inv1);
  c.act1 = leaky(c.norm1);

  c.col2.resize(c1 * k2 * k2, p2 * nb);
  for (Index b = 0; b < nb; ++b) {
    for (Index oy = 0; oy < o2; ++oy) {
      for (Index ox = 0; ox < o2; ++ox) {
        Scalar* col = c.col2.col(b * p2 + oy * o2 + ox).data();
        for (Index ch = 0; ch < c1; ++ch) {
          for (Index ky = 0; ky < k2; ++ky) {
            for (Index kx = 0; kx < k2; ++kx) {
              *col++ = c.act1(ch, b * p1 + (oy * s2 + ky) * o1 + ox * s2 + kx);
            }
          }
        }
      }
    }
  }
  c.norm2.noalias() = L.w2 * c.col2;
  c.norm2.colwise() += L.b2;
  normalize_blocks(c.norm2, p2, c.inv2);
  c.act2 = leaky(c.norm2);

  // Channel-major flattening per sample.
  c.flat.resize(c2 * p2, nb);
  for (Index b = 0; b < nb; ++b) {
    for (Index ch = 0; ch < c2; ++ch) {
      c.flat.col(b).segment(ch * p2, p2) = c.act2.row(ch).segment(b * p2, p2).transpose();
    }
  }
  c.norm3.noalias() = L.w3 * c.flat;
  c.norm3.colwise() += L.b3;
  normalize_blocks(c.norm3, 1, c.inv3);
  c.act3 = leaky(c.norm3);

  c.logits.noalias() = L.w4 * c.act3;
  c.logits.colwise() += L.b4;
}

template <typename Scalar>
void BasicHeuristicNet<Scalar>::forward(std::span<const float> images,
                                        std::span<Scalar> q) const {
  const std::size_t batch = batch_of(images);
  if (q.size() != batch * static_cast<std::size_t>(arch_.actions)) {
    throw ShapeError("output buffer size mismatch");
  }
  Cache cache;
  run_forward(images, batch, cache);
  Eigen::Map<Mat<Scalar>>(q.data(), arch_.actions, static_cast<Eigen::Index>(batch)) =
      cache.logits.cwiseAbs();
}

template <typename Scalar>
std::vector<Scalar> BasicHeuristicNet<Scalar>::forward(std::span<const float> image) const {
  std::vector<Scalar> q(static_cast<std::size_t>(arch_.actions));
  if (image.size() != arch_.input_size()) {
    throw ShapeError("expected a single " + std::to_string(arch_.input) + "x" +
                     std::to_string(arch_.input) + " image");
  }
  forward(image, std::span<Scalar>(q));
  return q;
}

template <typename Scalar>
void BasicHeuristicNet<Scalar>::forward(std::span<const float> images, std::span<Scalar> q,
                                        ForwardTrace<Scalar>& trace) const {
  const std::size_t batch = batch_of(images);
  if (q.size() != batch * static_cast<std::size_t>(arch_.actions)) {
    throw ShapeError("output buffer size mismatch");
  }
  Cache c;
  run_forward(images, batch, c);
  Eigen::Map<Mat<Scalar>>(q.data(), arch_.actions, static_cast<Eigen::Index>(batch)) =
      c.logits.cwiseAbs();
  auto copy = [](const Mat<Scalar>& m) {
    return std::vector<Scalar>(m.data(), m.data() + m.size());
  };
  trace.norm1 = copy(c.norm1);
  trace.norm2 = copy(c.norm2);
  trace.norm3 = copy(c.norm3);
  trace.logits = copy(c.logits);
}

template <typename Scalar>
Scalar BasicHeuristicNet<Scalar>::loss_and_gradient(std::span<const float> images,
                                                    std::span<const Scalar> targets,
                                                    std::span<Scalar> gradient,
                                                    std::span<Scalar> per_sample) const {
  using Index = Eigen::Index;
  const std::size_t batch = batch_of(images);
  const auto& a = arch_;
  if (targets.size() != batch * static_cast<std::size_t>(a.actions)) {
    throw ShapeError("target batch size mismatch");
  }
  if (gradient.size() != params_.size()) {
    throw ShapeError("gradient buffer size mismatch");
  }
  if (!per_sample.empty() && per_sample.size() != batch) {
    throw ShapeError("per-sample loss buffer size mismatch");
  }

  Cache c;
  run_forward(images, batch, c);

  const Index nb = static_cast<Index>(batch);
  const Index actions = a.actions;
  const Eigen::Map<const Mat<Scalar>> target(targets.data(), actions, nb);
  const Mat<Scalar> diff = c.logits.cwiseAbs() - target;
  const Vec<Scalar> sample_loss =
      diff.cwiseAbs2().colwise().sum().transpose() / static_cast<Scalar>(actions);
  if (!per_sample.empty()) {
    Eigen::Map<Vec<Scalar>>(per_sample.data(), nb) = sample_loss;
  }
  const Scalar loss = sample_loss.mean();

  Layers<Scalar> L(a, const_cast<Scalar*>(params_.data()));
  // Accumulate into aligned scratch so the result does not depend on where
  // the caller's buffer lives.
  AlignedVector<Scalar> scratch(params_.size());
  Layers<Scalar> G(a, scratch.data());

  const Index o1 = a.conv1_out(), o2 = a.conv2_out();
  const Index p1 = o1 * o1, p2 = o2 * o2;
  const Index c1 = a.conv1_filters, c2 = a.conv2_filters;
  const Index k2 = a.conv2_kernel, s2 = a.conv2_stride;

  // d(loss)/d(logits); abs has slope +1 at zero.
  const Scalar scale = Scalar(2) / static_cast<Scalar>(actions * nb);
  Mat<Scalar> d4 = diff.binaryExpr(c.logits, [scale](Scalar d, Scalar z) {
    return z >= Scalar(0) ? scale * d : -scale * d;
  });
  G.w4.noalias() = d4 * c.act3.transpose();
  G.b4 = d4.rowwise().sum();

  Mat<Scalar> d3 = L.w4.transpose() * d4;
  leaky_backward(d3, c.norm3);
  normalize_blocks_backward(d3, c.norm3, 1, c.inv3);
  G.w3.noalias() = d3 * c.flat.transpose();
  G.b3 = d3.rowwise().sum();

  const Mat<Scalar> dflat = L.w3.transpose() * d3;
  Mat<Scalar> d2(c2, p2 * nb);
  for (Index b = 0; b < nb; ++b) {
    for (Index ch = 0; ch < c2; ++ch) {
      d2.row(ch).segment(b * p2, p2) = dflat.col(b).segment(ch * p2, p2).transpose();
    }
  }
  leaky_backward(d2, c.norm2);
  normalize_blocks_backward(d2, c.norm2, p2, c.inv2);
  G.w2.noalias() = d2 * c.col2.transpose();
  G.b2 = d2.rowwise().sum();

  const Mat<Scalar> dcol2 = L.w2.transpose() * d2;
  Mat<Scalar> d1 = Mat<Scalar>::Zero(c1, p1 * nb);
  for (Index b = 0; b < nb; ++b) {
    for (Index oy = 0; oy < o2; ++oy) {
      for (Index ox = 0; ox < o2; ++ox) {
        const Scalar* col = dcol2.col(b * p2 + oy * o2 + ox).data();
        for (Index ch = 0; ch < c1; ++ch) {
          for (Index ky = 0; ky < k2; ++ky) {
            for (Index kx = 0; kx < k2; ++kx) {
              d1(ch, b * p1 + (oy * s2 + ky) * o1 + ox * s2 + kx) += *col++;
            }
          }
        }
      }
    }
  }
  leaky_backward(d1, c.norm1);
  normalize_blocks_backward(d1, c.norm1, p1, c.inv1);
  G.w1.noalias() = d1 * c.col1.transpose();
  G.b1 = d1.rowwise().sum();

  std::copy(scratch.begin(), scratch.end(), gradient.begin());
  return loss;
}

template <typename Scalar>
Scalar BasicHeuristicNet<Scalar>::sgd_step(std::span<const float> images,
                                           std::span<const Scalar> targets,
                                           Scalar learning_rate, std::span<Scalar> per_sample) {
  AlignedVector<Scalar> grad(params_.size());
  const Scalar loss = loss_and_gradient(images, targets, grad, per_sample);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    params_[i] -= learning_rate * grad[i];
  }
  return loss;
}

template class BasicHeuristicNet<float>;
template class BasicHeuristicNet<double>;

double q_loss(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size() || predicted.empty()) {
    throw ShapeError("prediction and target lengths differ");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = target[i] - predicted[i];
    sum += d * d;
  }
  return sum / static_cast<double>(predicted.size());
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const std::string& descriptor,
                     std::span<const float> params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << kCheckpointMagic << '\n' << descriptor << '\n';
  std::vector<std::uint32_t> words(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::uint32_t w = std::bit_cast<std::uint32_t>(params[i]);
    if constexpr (std::endian::native == std::endian::big) {
      w = ((w & 0xffu) << 24) | ((w & 0xff00u) << 8) | ((w >> 8) & 0xff00u) | (w >> 24);
    }
    words[i] = w;
  }
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!out) throw Error("failed writing " + path.string());
}

RawCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string magic;
  RawCheckpoint raw;
  if (!std::getline(in, magic) || magic != kCheckpointMagic) {
    throw CheckpointError("checkpoint version mismatch: expected " +
                          std::string(kCheckpointMagic));
  }
  if (!std::getline(in, raw.descriptor)) {
    throw CheckpointError("truncated checkpoint header");
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw CheckpointError("truncated checkpoint body");
  raw.params.resize(bytes.size() / 4);
  for (std::size_t i = 0; i < raw.params.size(); ++i) {
    std::uint32_t w;
    std::memcpy(&w, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) {
      w = ((w & 0xffu) << 24) | ((w & 0xff00u) << 8) | ((w >> 8) & 0xff00u) | (w >> 24);
    }
    raw.params[i] = std::bit_cast<float>(w);
  }
  return raw;
}

void save(const HeuristicNet& net, const std::filesystem::path& path) {
  save_checkpoint(path, net.architecture().descriptor(), net.parameters());
}

HeuristicNet load(const std::filesystem::path& path) {
  RawCheckpoint raw = read_checkpoint(path);
  HeuristicNet net(Architecture::parse(raw.descriptor));
  if (raw.params.size() != net.parameters().size()) {
    throw CheckpointError("truncated checkpoint: expected " +
                          std::to_string(net.parameters().size()) + " parameters, found " +
                          std::to_string(raw.params.size()));
  }
  std::copy(raw.params.begin(), raw.params.end(), net.parameters().begin());
  return net;
}

HeuristicNet load(const std::filesystem::path& path, const Architecture& expected) {
  HeuristicNet net = load(path);
  if (net.architecture() != expected) {
    throw CheckpointError("architecture mismatch: checkpoint has '" +
                          net.architecture().descriptor() + "', expected '" +
                          expected.descriptor() + "'");
  }
  return net;
}

void NetHeuristic::evaluate(const Environment& env, const State& state, std::span<double> q) {
  env.sensors(state, image_);
  out_.resize(static_cast<std::size_t>(net_.architecture().actions));
  net_.forward(image_, out_);
  if (q.size() != out_.size()) throw ShapeError("heuristic output size mismatch");
  std::copy(out_.begin(), out_.end(), q.begin());
}

}  // namespace aleph
