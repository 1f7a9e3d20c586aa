#pragma once

// Dense symmetric tensors stored once per multiset index, symmetric Gaussian
// noise, spike construction and multilinear contractions.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spiked {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr int kMaxOrder = 6;

// Index tuple (i_1, ..., i_d), zero-based. Two tuples address the same tensor
// entry iff their canonical (sorted) forms are equal.
class MultiIndex {
 public:
  MultiIndex() = default;
  MultiIndex(std::initializer_list<int> indices);
  explicit MultiIndex(std::span<const int> indices);

  int order() const noexcept { return order_; }
  int operator[](int k) const noexcept { return idx_[static_cast<std::size_t>(k)]; }
  std::span<const int> indices() const noexcept { return {idx_.data(), static_cast<std::size_t>(order_)}; }

  MultiIndex canonical() const;

  // Multiplicities m_1..m_k of the distinct values, in increasing value order.
  std::vector<int> multiplicities() const;

  friend bool operator==(const MultiIndex& a, const MultiIndex& b) noexcept {
    return a.indices().size() == b.indices().size() &&
           std::equal(a.indices().begin(), a.indices().end(), b.indices().begin());
  }

 private:
  std::array<int, kMaxOrder> idx_{};
  int order_ = 0;
};

// d! / (m_1! ... m_k!)
std::uint64_t multinomial(std::span<const int> counts);

// Variance of a symmetrized standard Gaussian entry: 1 / multinomial(d; m).
double noise_variance(const MultiIndex& index);

// Number of multisets of size `order` drawn from `dim` values, C(dim+order-1, order).
// Throws StorageError when it does not fit in size_t.
std::size_t multiset_count(int dim, int order);

class SymTensor {
 public:
  // Zero tensor. Throws StorageError if the canonical storage cannot be allocated.
  SymTensor(int order, int dim);

  int order() const noexcept { return order_; }
  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return values_.size(); }

  // Seed of the noise draw, kept for provenance (0 when not sampled).
  std::uint64_t seed() const noexcept { return seed_; }
  void set_seed(std::uint64_t seed) noexcept { seed_ = seed; }

  // Position of the entry addressed by `index` in canonical storage. The index
  // need not be sorted.
  std::size_t rank_of(const MultiIndex& index) const;

  double operator()(const MultiIndex& index) const { return values_[rank_of(index)]; }
  double& at(const MultiIndex& index) { return values_[rank_of(index)]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  // Visits every canonical entry in storage order: f(sorted_indices, value, rank).
  template <class F>
  void for_each_canonical(F&& f) const;

  // Squared Frobenius norm of the full N^d tensor.
  double squared_norm() const;

  SymTensor& operator*=(double a);
  // this += a * other
  SymTensor& axpy(double a, const SymTensor& other);

 private:
  std::size_t binom(int n, int k) const noexcept {
    return binom_[static_cast<std::size_t>(k) * static_cast<std::size_t>(dim_ + order_) +
                  static_cast<std::size_t>(n)];
  }

  int order_;
  int dim_;
  std::uint64_t seed_ = 0;
  std::vector<std::size_t> binom_;
  std::vector<double> values_;
};

template <class F>
void SymTensor::for_each_canonical(F&& f) const {
  std::array<int, kMaxOrder> idx{};
  const std::span<const int> view(idx.data(), static_cast<std::size_t>(order_));
  const std::size_t n = values_.size();
  for (std::size_t rank = 0; rank < n; ++rank) {
    f(view, values_[rank], rank);
    // Colex successor: bump the first position that can grow, zero the ones below it.
    for (int k = 0; k < order_; ++k) {
      const bool can_grow = (k + 1 < order_) ? idx[k] < idx[k + 1] : idx[k] < dim_ - 1;
      if (can_grow) {
        ++idx[k];
        for (int m = 0; m < k; ++m) idx[m] = 0;
        break;
      }
    }
  }
}

// Signal model T = sum_i beta_i u_i^{(x)d} + X / sqrt(N).
struct SpikeModel {
  int order = 3;
  int dim = 0;
  Vector betas;  // length r, |beta_1| >= ... >= |beta_r|
  Matrix us;     // dim x r, unit columns
  std::uint64_t seed = 0;

  int rank() const noexcept { return static_cast<int>(betas.size()); }

  // Throws InvalidArgument / DimensionError when the invariants fail.
  void validate() const;
};

// Symmetric Gaussian noise with entry variances 1/multinomial(d; m). Entry k of
// canonical storage is a pure function of (seed, k).
SymTensor sample_noise(int dim, int order, std::uint64_t seed);

// sum_i beta_i u_i^{(x)d}, plus N^{-1/2} * sample_noise(model.seed) if requested.
SymTensor build_spiked(const SpikeModel& model, bool with_noise);

// Full dense tensor of order d-k, row-major over its N^{d-k} entries.
struct DenseTensor {
  int order = 0;
  int dim = 0;
  std::vector<double> data;

  double scalar() const { return data.at(0); }
  Vector as_vector() const;
  Matrix as_matrix() const;
};

// Contracts the first k = vs.size() slots of T with vs[0], ..., vs[k-1].
DenseTensor contract(const SymTensor& t, std::span<const Vector> vs);

// T(v, ..., v) over d-1 slots.
Vector contract_vector(const SymTensor& t, const Vector& v);
// Columns T(v_j^{d-1}) for every column v_j of vs, in one pass over storage.
Matrix contract_vectors(const SymTensor& t, const Matrix& vs);
// T(v, ..., v) over d-2 slots; symmetric N x N.
Matrix contract_matrix(const SymTensor& t, const Vector& v);
// T(v, ..., v) over all d slots.
double contract_scalar(const SymTensor& t, const Vector& v);

// r unit vectors (columns of the returned dim x r matrix) whose Gram matrix is
// exactly `target_gram`: V = Q L^T with Q a random orthonormal frame and L the
// Cholesky factor. Throws NotPositiveDefiniteError with the offending leading minor.
Matrix correlated_unit_vectors(const Matrix& target_gram, int dim, std::uint64_t seed);

// Uniformly random orthonormal frame (dim x r).
Matrix random_orthonormal_frame(int dim, int r, std::uint64_t seed);

// Textual format: header "spiked-symtensor 1 <d> <N> <seed>" then one row per
// canonical entry "<i_1> ... <i_d> <value>" (zero-based sorted indices,
// 17 significant digits). Round trips exactly.
void write_tensor(std::ostream& out, const SymTensor& t);
SymTensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const SymTensor& t);
SymTensor load_tensor(const std::string& path);

}  // namespace spiked
