#include "spiked/tensor.hpp"

#include <cmath>
#include <limits>
#include <new>
#include <sstream>

#include "spiked/errors.hpp"
#include "spiked/rng.hpp"

namespace spiked {

namespace {

constexpr std::array<double, kMaxOrder + 1> kFactorial = {1, 1, 2, 6, 24, 120, 720};

void check_order(int order) {
  if (order < 1 || order > kMaxOrder) {
    throw InvalidArgument("tensor order must lie in [1, " + std::to_string(kMaxOrder) + "], got " +
                          std::to_string(order));
  }
}

// Distinct values of a sorted index tuple and their multiplicities.
struct Runs {
  std::array<int, kMaxOrder> value{};
  std::array<int, kMaxOrder> count{};
  int n = 0;
};

Runs runs_of(std::span<const int> sorted) {
  Runs r;
  for (std::size_t p = 0; p < sorted.size(); ++p) {
    if (r.n > 0 && r.value[r.n - 1] == sorted[p]) {
      ++r.count[r.n - 1];
    } else {
      r.value[r.n] = sorted[p];
      r.count[r.n] = 1;
      ++r.n;
    }
  }
  return r;
}

double multinomial_of(const Runs& r, int order) {
  double denom = 1.0;
  for (int k = 0; k < r.n; ++k) denom *= kFactorial[r.count[k]];
  return kFactorial[order] / denom;
}

double ipow(double x, int e) {
  double out = 1.0;
  for (int k = 0; k < e; ++k) out *= x;
  return out;
}

void check_length(const SymTensor& t, Eigen::Index n) {
  if (n != t.dim()) {
    throw DimensionError("vector of length " + std::to_string(n) + " contracted with tensor of dim " +
                         std::to_string(t.dim()));
  }
}

}  // namespace

MultiIndex::MultiIndex(std::initializer_list<int> indices)
    : MultiIndex(std::span<const int>(indices.begin(), indices.size())) {}

MultiIndex::MultiIndex(std::span<const int> indices) {
  if (indices.empty() || indices.size() > static_cast<std::size_t>(kMaxOrder)) {
    throw InvalidArgument("multi-index must have between 1 and " + std::to_string(kMaxOrder) +
                          " components");
  }
  std::copy(indices.begin(), indices.end(), idx_.begin());
  order_ = static_cast<int>(indices.size());
}

MultiIndex MultiIndex::canonical() const {
  MultiIndex out = *this;
  std::sort(out.idx_.begin(), out.idx_.begin() + order_);
  return out;
}

std::vector<int> MultiIndex::multiplicities() const {
  const MultiIndex c = canonical();
  const Runs r = runs_of(c.indices());
  return {r.count.begin(), r.count.begin() + r.n};
}

std::uint64_t multinomial(std::span<const int> counts) {
  for (int c : counts) {
    if (c < 0) throw InvalidArgument("negative multiplicity");
  }
  // Build up as a product of binomials, each exact in 64 bits for the orders used here.
  std::uint64_t out = 1;
  int placed = 0;
  for (int c : counts) {
    for (int k = 1; k <= c; ++k) {
      out = out * static_cast<std::uint64_t>(placed + k) / static_cast<std::uint64_t>(k);
    }
    placed += c;
  }
  return out;
}

double noise_variance(const MultiIndex& index) {
  const auto m = index.multiplicities();
  return 1.0 / static_cast<double>(multinomial(m));
}

std::size_t multiset_count(int dim, int order) {
  if (dim < 1) throw InvalidArgument("tensor dim must be positive");
  check_order(order);
  // C(dim+order-1, order) built incrementally; every prefix is itself a binomial.
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max();
  std::size_t c = 1;
  for (int k = 1; k <= order; ++k) {
    const auto m = static_cast<std::size_t>(dim - 1 + k);
    if (c > kMax / m) {
      throw StorageError("symmetric tensor storage overflows the address space (order " + std::to_string(order) +
                             ", dim " + std::to_string(dim) + ")",
                         kMax);
    }
    c = c * m / static_cast<std::size_t>(k);
  }
  if (c > kMax / sizeof(double)) {
    throw StorageError("symmetric tensor storage overflows the address space", kMax);
  }
  return c;
}

SymTensor::SymTensor(int order, int dim) : order_(order), dim_(dim) {
  const std::size_t count = multiset_count(dim, order);
  const std::size_t width = static_cast<std::size_t>(dim_ + order_);
  binom_.assign(static_cast<std::size_t>(order_ + 1) * width, 0);
  for (int n = 0; n < dim_ + order_; ++n) {
    binom_[static_cast<std::size_t>(n)] = 1;
    for (int k = 1; k <= order_ && k <= n; ++k) {
      const std::size_t above = static_cast<std::size_t>(k) * width + static_cast<std::size_t>(n - 1);
      const std::size_t left = static_cast<std::size_t>(k - 1) * width + static_cast<std::size_t>(n - 1);
      binom_[static_cast<std::size_t>(k) * width + static_cast<std::size_t>(n)] = binom_[above] + binom_[left];
    }
  }
  try {
    values_.assign(count, 0.0);
  } catch (const std::bad_alloc&) {
    std::ostringstream msg;
    msg << "cannot allocate symmetric tensor of order " << order << " and dim " << dim << " ("
        << count << " canonical entries, " << count * sizeof(double) << " bytes)";
    throw StorageError(msg.str(), count * sizeof(double));
  }
}

std::size_t SymTensor::rank_of(const MultiIndex& index) const {
  if (index.order() != order_) {
    throw DimensionError("multi-index of order " + std::to_string(index.order()) +
                         " used on tensor of order " + std::to_string(order_));
  }
  const MultiIndex c = index.canonical();
  std::size_t rank = 0;
  for (int k = 0; k < order_; ++k) {
    const int i = c[k];
    if (i < 0 || i >= dim_) {
      throw DimensionError("index " + std::to_string(i) + " out of range for dim " + std::to_string(dim_));
    }
    rank += binom(i + k, k + 1);
  }
  return rank;
}

double SymTensor::squared_norm() const {
  double acc = 0.0;
  for_each_canonical([&](std::span<const int> idx, double v, std::size_t) {
    acc += multinomial_of(runs_of(idx), order_) * v * v;
  });
  return acc;
}

SymTensor& SymTensor::operator*=(double a) {
  for (double& v : values_) v *= a;
  return *this;
}

SymTensor& SymTensor::axpy(double a, const SymTensor& other) {
  if (other.order_ != order_ || other.dim_ != dim_) {
    throw DimensionError("axpy between tensors of different shape");
  }
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += a * other.values_[k];
  return *this;
}

void SpikeModel::validate() const {
  check_order(order);
  if (order < 3) throw InvalidArgument("model order must be at least 3");
  if (dim < 1) throw InvalidArgument("model dim must be positive");
  if (us.rows() != dim) {
    throw DimensionError("signal vectors have length " + std::to_string(us.rows()) + " but dim is " +
                         std::to_string(dim));
  }
  if (us.cols() != betas.size()) {
    throw DimensionError(std::to_string(betas.size()) + " weights for " + std::to_string(us.cols()) +
                         " signal vectors");
  }
  for (Eigen::Index i = 0; i < us.cols(); ++i) {
    const double n = us.col(i).norm();
    if (std::abs(n - 1.0) > 1e-12) {
      throw InvalidArgument("signal vector " + std::to_string(i) + " has norm " + std::to_string(n));
    }
  }
  for (Eigen::Index i = 1; i < betas.size(); ++i) {
    if (std::abs(betas[i]) > std::abs(betas[i - 1])) {
      throw InvalidArgument("weights must satisfy |beta_1| >= ... >= |beta_r|");
    }
  }
}

SymTensor sample_noise(int dim, int order, std::uint64_t seed) {
  SymTensor t(order, dim);
  auto vals = t.values();
  t.for_each_canonical([&](std::span<const int> idx, double, std::size_t rank) {
    const double sd = std::sqrt(1.0 / multinomial_of(runs_of(idx), order));
    vals[rank] = sd * normal_at(seed, 0, rank);
  });
  t.set_seed(seed);
  return t;
}

SymTensor build_spiked(const SpikeModel& model, bool with_noise) {
  model.validate();
  SymTensor t(model.order, model.dim);
  auto vals = t.values();
  const int r = model.rank();
  const double noise_scale = 1.0 / std::sqrt(static_cast<double>(model.dim));
  t.for_each_canonical([&](std::span<const int> idx, double, std::size_t rank) {
    double s = 0.0;
    for (int i = 0; i < r; ++i) {
      double p = model.betas[i];
      for (int k : idx) p *= model.us(k, i);
      s += p;
    }
    if (with_noise) {
      const double sd = std::sqrt(1.0 / multinomial_of(runs_of(idx), model.order));
      s += noise_scale * sd * normal_at(model.seed, 0, rank);
    }
    vals[rank] = s;
  });
  t.set_seed(with_noise ? model.seed : 0);
  return t;
}

Vector DenseTensor::as_vector() const {
  if (order != 1) throw DimensionError("dense tensor is not a vector");
  return Eigen::Map<const Vector>(data.data(), dim);
}

Matrix DenseTensor::as_matrix() const {
  if (order != 2) throw DimensionError("dense tensor is not a matrix");
  // Row-major data; the result is symmetric whenever the contracted vectors coincide.
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), dim, dim);
}

DenseTensor contract(const SymTensor& t, std::span<const Vector> vs) {
  const int d = t.order();
  const int k = static_cast<int>(vs.size());
  if (k > d) throw DimensionError("more vectors than tensor slots");
  for (const auto& v : vs) check_length(t, v.size());
  const int rest = d - k;
  std::size_t out_size = 1;
  for (int p = 0; p < rest; ++p) {
    if (out_size > std::numeric_limits<std::size_t>::max() / static_cast<std::size_t>(t.dim())) {
      throw StorageError("dense contraction result too large", std::numeric_limits<std::size_t>::max());
    }
    out_size *= static_cast<std::size_t>(t.dim());
  }
  DenseTensor out{rest, t.dim(), {}};
  try {
    out.data.assign(out_size, 0.0);
  } catch (const std::bad_alloc&) {
    throw StorageError("cannot allocate dense contraction result", out_size * sizeof(double));
  }
  std::array<int, kMaxOrder> perm{};
  t.for_each_canonical([&](std::span<const int> idx, double value, std::size_t) {
    if (value == 0.0) return;
    std::copy(idx.begin(), idx.end(), perm.begin());
    // Every distinct arrangement of the multiset is one entry of the full tensor.
    do {
      double w = value;
      for (int p = 0; p < k; ++p) w *= vs[static_cast<std::size_t>(p)][perm[p]];
      std::size_t offset = 0;
      for (int p = k; p < d; ++p) offset = offset * static_cast<std::size_t>(t.dim()) + static_cast<std::size_t>(perm[p]);
      out.data[offset] += w;
    } while (std::next_permutation(perm.begin(), perm.begin() + d));
  });
  return out;
}

namespace {

// Order-3 kernel over i <= j <= k in colex storage order. v and out are
// row-major (dim x r); the i < j contributions to rows j and k are folded into s.
void contract3(const SymTensor& t, const double* v, double* out, int r) {
  const int n = t.dim();
  const double* val = t.values().data();
  std::vector<double> s(static_cast<std::size_t>(r));
  std::size_t pos = 0;
  for (int k = 0; k < n; ++k) {
    const double* vk = v + static_cast<std::ptrdiff_t>(k) * r;
    double* ok = out + static_cast<std::ptrdiff_t>(k) * r;
    for (int j = 0; j <= k; ++j) {
      const double* vj = v + static_cast<std::ptrdiff_t>(j) * r;
      double* oj = out + static_cast<std::ptrdiff_t>(j) * r;
      std::fill(s.begin(), s.end(), 0.0);
      const bool jk = j == k;
      for (int i = 0; i < j; ++i) {
        const double x = val[pos++];
        const double* vi = v + static_cast<std::ptrdiff_t>(i) * r;
        double* oi = out + static_cast<std::ptrdiff_t>(i) * r;
        if (jk) {
          for (int c = 0; c < r; ++c) {
            oi[c] += x * vj[c] * vj[c];
            s[static_cast<std::size_t>(c)] += x * vi[c];
          }
        } else {
          for (int c = 0; c < r; ++c) {
            oi[c] += 2.0 * x * vj[c] * vk[c];
            s[static_cast<std::size_t>(c)] += x * vi[c];
          }
        }
      }
      const double x = val[pos++];
      for (int c = 0; c < r; ++c) {
        const double sc = s[static_cast<std::size_t>(c)];
        if (jk) {
          oj[c] += x * vj[c] * vj[c] + 2.0 * sc * vj[c];
        } else {
          oj[c] += 2.0 * x * vj[c] * vk[c] + 2.0 * sc * vk[c];
          ok[c] += x * vj[c] * vj[c] + 2.0 * sc * vj[c];
        }
      }
    }
  }
}

}  // namespace

Matrix contract_vectors(const SymTensor& t, const Matrix& vs) {
  check_length(t, vs.rows());
  if (t.order() == 3) {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowMajor v = vs;
    RowMajor out = RowMajor::Zero(vs.rows(), vs.cols());
    contract3(t, v.data(), out.data(), static_cast<int>(vs.cols()));
    return out;
  }
  Matrix out(vs.rows(), vs.cols());
  for (Eigen::Index c = 0; c < vs.cols(); ++c) out.col(c) = contract_vector(t, vs.col(c));
  return out;
}

Vector contract_vector(const SymTensor& t, const Vector& v) {
  check_length(t, v.size());
  const int d = t.order();
  if (d < 2) throw DimensionError("contract_vector needs order >= 2");
  if (d == 3) return contract_vectors(t, v);
  Vector out = Vector::Zero(t.dim());
  t.for_each_canonical([&](std::span<const int> idx, double value, std::size_t) {
    if (value == 0.0) return;
    const Runs r = runs_of(idx);
    const double base = value * multinomial_of(r, d) / d;
    for (int a = 0; a < r.n; ++a) {
      double p = base * r.count[a];
      for (int b = 0; b < r.n; ++b) p *= ipow(v[r.value[b]], r.count[b] - (a == b ? 1 : 0));
      out[r.value[a]] += p;
    }
  });
  return out;
}

Matrix contract_matrix(const SymTensor& t, const Vector& v) {
  check_length(t, v.size());
  const int d = t.order();
  if (d < 2) throw DimensionError("contract_matrix needs order >= 2");
  Matrix out = Matrix::Zero(t.dim(), t.dim());
  t.for_each_canonical([&](std::span<const int> idx, double value, std::size_t) {
    if (value == 0.0) return;
    const Runs r = runs_of(idx);
    const double base = value * multinomial_of(r, d) / (d * (d - 1));
    for (int a = 0; a < r.n; ++a) {
      for (int b = a; b < r.n; ++b) {
        const double pairs = (a == b) ? r.count[a] * (r.count[a] - 1.0) : double(r.count[a]) * r.count[b];
        if (pairs == 0.0) continue;
        double p = base * pairs;
        for (int c = 0; c < r.n; ++c) {
          p *= ipow(v[r.value[c]], r.count[c] - (c == a ? 1 : 0) - (c == b ? 1 : 0));
        }
        out(r.value[a], r.value[b]) += p;
        if (a != b) out(r.value[b], r.value[a]) += p;
      }
    }
  });
  return out;
}

double contract_scalar(const SymTensor& t, const Vector& v) {
  check_length(t, v.size());
  double acc = 0.0;
  t.for_each_canonical([&](std::span<const int> idx, double value, std::size_t) {
    const Runs r = runs_of(idx);
    double p = value * multinomial_of(r, t.order());
    for (int b = 0; b < r.n; ++b) p *= ipow(v[r.value[b]], r.count[b]);
    acc += p;
  });
  return acc;
}

Matrix random_orthonormal_frame(int dim, int r, std::uint64_t seed) {
  if (r < 0 || r > dim) {
    throw DimensionError("cannot fit " + std::to_string(r) + " orthonormal vectors in dim " + std::to_string(dim));
  }
  CounterRng rng(seed, 1);
  Matrix g(dim, r);
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < dim; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(dim, r);
  // Fixing the sign of diag(R) makes the frame Haar distributed.
  const Matrix rr = qr.matrixQR();
  for (int j = 0; j < r; ++j) {
    if (rr(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

Matrix correlated_unit_vectors(const Matrix& target_gram, int dim, std::uint64_t seed) {
  const Eigen::Index r = target_gram.rows();
  if (target_gram.cols() != r) throw DimensionError("target Gram matrix must be square");
  if (r > dim) throw DimensionError("more vectors than dimensions");
  for (Eigen::Index i = 0; i < r; ++i) {
    if (std::abs(target_gram(i, i) - 1.0) > 1e-12) throw InvalidArgument("target Gram matrix must have unit diagonal");
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(target_gram(i, j) - target_gram(j, i)) > 1e-12) {
        throw InvalidArgument("target Gram matrix must be symmetric");
      }
    }
  }
  // Row-by-row Cholesky; the k-th pivot is the ratio of consecutive leading minors.
  Matrix l = Matrix::Zero(r, r);
  double minor = 1.0;
  for (Eigen::Index k = 0; k < r; ++k) {
    for (Eigen::Index j = 0; j < k; ++j) {
      double s = target_gram(k, j);
      for (Eigen::Index m = 0; m < j; ++m) s -= l(k, m) * l(j, m);
      l(k, j) = s / l(j, j);
    }
    double pivot = target_gram(k, k);
    for (Eigen::Index m = 0; m < k; ++m) pivot -= l(k, m) * l(k, m);
    minor *= pivot;
    if (!(pivot > 1e-14)) {
      throw NotPositiveDefiniteError("target Gram matrix is not positive definite: leading minor of order " +
                                         std::to_string(k + 1) + " is " + std::to_string(minor),
                                     static_cast<int>(k + 1), minor);
    }
    l(k, k) = std::sqrt(pivot);
  }
  const Matrix q = random_orthonormal_frame(dim, static_cast<int>(r), seed);
  Matrix v = q * l.transpose();
  for (Eigen::Index j = 0; j < r; ++j) v.col(j).normalize();
  return v;
}

}  // namespace spiked
