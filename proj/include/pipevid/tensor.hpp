#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pipevid {

/// Dense n-dimensional array of doubles. Rank 0 is a scalar with one element.
/// Layout is row-major over `shape`; all kernels index through this class so
/// evaluation order (and therefore floating-point results) is fixed.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

  Tensor(std::vector<int64_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != checked_size(shape_)) {
      throw std::invalid_argument("tensor data length does not match shape");
    }
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "+=");
    for (int64_t i = 0; i < size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same_shape(o, "-=");
    for (int64_t i = 0; i < size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double s) { return a *= s; }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

  double max_abs_diff(const Tensor& o) const {
    require_same_shape(o, "max_abs_diff");
    double m = 0.0;
    for (int64_t i = 0; i < size(); ++i) {
      double d = std::abs(data_[i] - o.data_[i]);
      if (d > m) m = d;
    }
    return m;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) os << ",";
      os << shape_[i];
    }
    os << ")";
    return os.str();
  }

 private:
  static int64_t checked_size(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 1) throw std::invalid_argument("tensor extents must be >= 1");
      n *= d;
    }
    return n;
  }
  void require_same_shape(const Tensor& o, const char* what) const {
    if (shape_ != o.shape_) {
      throw std::invalid_argument(std::string("shape mismatch in ") + what + ": " +
                                  shape_str() + " vs " + o.shape_str());
    }
  }

  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

// Flat little-endian binary format: magic "PVTN", u32 rank, u64 dims, f64 data.
inline void save_tensor(const Tensor& t, std::ostream& os) {
  os.write("PVTN", 4);
  uint32_t rank = static_cast<uint32_t>(t.rank());
  os.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
  for (int i = 0; i < static_cast<int>(rank); ++i) {
    uint64_t d = static_cast<uint64_t>(t.dim(i));
    os.write(reinterpret_cast<const char*>(&d), sizeof(d));
  }
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline Tensor load_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "PVTN") {
    throw std::runtime_error("bad tensor file: missing PVTN magic");
  }
  uint32_t rank = 0;
  is.read(reinterpret_cast<char*>(&rank), sizeof(rank));
  std::vector<int64_t> shape(rank);
  for (auto& d : shape) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    shape[static_cast<size_t>(&d - shape.data())] = static_cast<int64_t>(v);
  }
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!is) throw std::runtime_error("bad tensor file: truncated data");
  return t;
}

inline void save_tensor_file(const Tensor& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  save_tensor(t, os);
}

inline Tensor load_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return load_tensor(is);
}

}  // namespace pipevid
