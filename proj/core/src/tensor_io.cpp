#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "spiked/errors.hpp"
#include "spiked/tensor.hpp"

namespace spiked {

namespace {
constexpr const char* kMagic = "spiked-symtensor";
constexpr int kFormatVersion = 1;
}  // namespace

void write_tensor(std::ostream& out, const SymTensor& t) {
  out << kMagic << ' ' << kFormatVersion << ' ' << t.order() << ' ' << t.dim() << ' ' << t.seed() << '\n';
  out << std::setprecision(17);
  t.for_each_canonical([&](std::span<const int> idx, double value, std::size_t) {
    for (int i : idx) out << i << ' ';
    out << value << '\n';
  });
  if (!out) throw Error("failed writing tensor");
}

SymTensor read_tensor(std::istream& in) {
  std::string magic;
  int version = 0, order = 0, dim = 0;
  std::uint64_t seed = 0;
  if (!(in >> magic >> version >> order >> dim >> seed) || magic != kMagic) {
    throw InvalidArgument("not a symmetric tensor file");
  }
  if (version != kFormatVersion) {
    throw InvalidArgument("unsupported tensor file version " + std::to_string(version));
  }
  SymTensor t(order, dim);
  t.set_seed(seed);
  std::array<int, kMaxOrder> idx{};
  auto vals = t.values();
  std::vector<char> seen(vals.size(), 0);
  for (std::size_t row = 0; row < vals.size(); ++row) {
    for (int k = 0; k < order; ++k) {
      if (!(in >> idx[static_cast<std::size_t>(k)])) {
        throw InvalidArgument("truncated tensor file at row " + std::to_string(row));
      }
    }
    double value = 0.0;
    if (!(in >> value)) throw InvalidArgument("truncated tensor file at row " + std::to_string(row));
    const std::size_t rank = t.rank_of(MultiIndex(std::span<const int>(idx.data(), static_cast<std::size_t>(order))));
    if (seen[rank]) throw InvalidArgument("duplicate entry in tensor file at row " + std::to_string(row));
    seen[rank] = 1;
    vals[rank] = value;
  }
  return t;
}

void save_tensor(const std::string& path, const SymTensor& t) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_tensor(out, t);
}

SymTensor load_tensor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_tensor(in);
}

}  // namespace spiked
