#include "optstop/relu/serialize.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "optstop/errors.hpp"

namespace optstop::relu {

static_assert(std::endian::native == std::endian::little,
              "network serialization assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'O', 'S', 'R', 'E', 'L', 'U', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void get_bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  [[nodiscard]] bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw InputError("deserialize: truncated network container");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Layout choose_layout(const NeuralNetwork& net, std::uint64_t dense_limit_bytes) {
  std::uint64_t dense = 0;
  for (const auto& layer : net.layers()) {
    dense += static_cast<std::uint64_t>(layer.in_dim()) * layer.out_dim() * sizeof(double);
  }
  return dense > dense_limit_bytes ? Layout::sparse : Layout::dense;
}

std::vector<std::uint8_t> serialize(const NeuralNetwork& net, const std::optional<NetworkMetadata>& meta,
                                    std::optional<Layout> layout) {
  const Layout lay = layout.value_or(choose_layout(net));
  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(lay));
  w.put<std::uint64_t>(net.depth());
  for (std::size_t d : net.dims()) w.put<std::uint64_t>(d);
  for (const auto& layer : net.layers()) {
    const auto& m = layer.weights();
    if (lay == Layout::dense) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()), 0.0);
        for (SparseMatrix::InnerIterator it(m, r); it; ++it) row[static_cast<std::size_t>(it.col())] = it.value();
        w.put_bytes(row.data(), row.size() * sizeof(double));
      }
    } else {
      w.put<std::uint64_t>(static_cast<std::uint64_t>(m.nonZeros()));
      for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(m, r); it; ++it) {
          w.put<std::uint64_t>(static_cast<std::uint64_t>(it.row()));
          w.put<std::uint64_t>(static_cast<std::uint64_t>(it.col()));
          w.put<double>(it.value());
        }
      }
    }
    w.put_bytes(layer.bias().data(), static_cast<std::size_t>(layer.bias().size()) * sizeof(double));
  }
  w.put<std::uint8_t>(meta ? 1 : 0);
  if (meta) {
    w.put<std::uint64_t>(meta->declared_size);
    w.put<double>(meta->lipschitz.value_or(std::numeric_limits<double>::quiet_NaN()));
    w.put<std::uint64_t>(meta->provenance.size());
    w.put_bytes(meta->provenance.data(), meta->provenance.size());
  }
  return w.take();
}

StoredNetwork deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[8];
  r.get_bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw InputError("deserialize: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw InputError("deserialize: unsupported version " + std::to_string(version));
  const auto layout = static_cast<Layout>(r.get<std::uint32_t>());
  if (layout != Layout::dense && layout != Layout::sparse) throw InputError("deserialize: bad layout");
  const auto depth = r.get<std::uint64_t>();
  if (depth == 0 || depth > (1u << 20)) throw InputError("deserialize: implausible depth");
  std::vector<std::uint64_t> dims(depth + 1);
  for (auto& d : dims) {
    d = r.get<std::uint64_t>();
    if (d == 0 || d > (1ull << 32)) throw InputError("deserialize: implausible dimension");
  }
  std::vector<AffineLayer> layers;
  layers.reserve(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    const auto rows = static_cast<Eigen::Index>(dims[l + 1]);
    const auto cols = static_cast<Eigen::Index>(dims[l]);
    std::vector<Eigen::Triplet<double>> t;
    if (layout == Layout::dense) {
      std::vector<double> row(static_cast<std::size_t>(cols));
      for (Eigen::Index i = 0; i < rows; ++i) {
        r.get_bytes(row.data(), row.size() * sizeof(double));
        for (Eigen::Index j = 0; j < cols; ++j) {
          if (row[static_cast<std::size_t>(j)] != 0.0) t.emplace_back(i, j, row[static_cast<std::size_t>(j)]);
        }
      }
    } else {
      const auto nnz = r.get<std::uint64_t>();
      t.reserve(nnz);
      for (std::uint64_t k = 0; k < nnz; ++k) {
        const auto i = r.get<std::uint64_t>();
        const auto j = r.get<std::uint64_t>();
        const auto v = r.get<double>();
        if (i >= dims[l + 1] || j >= dims[l]) throw InputError("deserialize: triplet out of range");
        t.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), v);
      }
    }
    SparseMatrix w(rows, cols);
    w.setFromTriplets(t.begin(), t.end());
    Vector b(rows);
    r.get_bytes(b.data(), static_cast<std::size_t>(rows) * sizeof(double));
    layers.emplace_back(std::move(w), std::move(b));
  }
  StoredNetwork out{NeuralNetwork(std::move(layers)), std::nullopt};
  if (r.get<std::uint8_t>() == 1) {
    NetworkMetadata meta;
    meta.declared_size = r.get<std::uint64_t>();
    const double lip = r.get<double>();
    if (!std::isnan(lip)) meta.lipschitz = lip;
    const auto len = r.get<std::uint64_t>();
    meta.provenance.resize(len);
    r.get_bytes(meta.provenance.data(), len);
    out.metadata = std::move(meta);
  }
  if (!r.at_end()) throw InputError("deserialize: trailing bytes after network container");
  return out;
}

void save_network(const std::filesystem::path& path, const NeuralNetwork& net,
                  const std::optional<NetworkMetadata>& meta, std::optional<Layout> layout) {
  const auto bytes = serialize(net, meta, layout);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("save_network: cannot open " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw InputError("save_network: write failed for " + path.string());
}

StoredNetwork load_network(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("load_network: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

bool bitwise_equal(const NeuralNetwork& a, const NeuralNetwork& b) {
  if (a.dims() != b.dims()) return false;
  for (std::size_t l = 0; l < a.depth(); ++l) {
    const auto& la = a.layers()[l];
    const auto& lb = b.layers()[l];
    if (la.weights().nonZeros() != lb.weights().nonZeros()) return false;
    for (Eigen::Index r = 0; r < la.weights().outerSize(); ++r) {
      SparseMatrix::InnerIterator ia(la.weights(), r), ib(lb.weights(), r);
      for (; ia && ib; ++ia, ++ib) {
        if (ia.col() != ib.col()) return false;
        if (std::bit_cast<std::uint64_t>(ia.value()) != std::bit_cast<std::uint64_t>(ib.value())) return false;
      }
      if (ia || ib) return false;
    }
    if (std::memcmp(la.bias().data(), lb.bias().data(),
                    static_cast<std::size_t>(la.bias().size()) * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace optstop::relu
