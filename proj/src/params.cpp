#include "poseforge/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "poseforge/errors.hpp"

namespace poseforge {

ag::Tensor ParameterStore::add(const std::string& name, ag::Shape shape, std::size_t fan_in) {
  if (contains(name)) throw ContractError("duplicate parameter " + name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(ag::numel(shape));
  for (double& x : v) x = dist(rng_);
  auto t = ag::Tensor::parameter(std::move(shape), std::move(v));
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

ag::Tensor ParameterStore::add_filled(const std::string& name, ag::Shape shape, double value) {
  if (contains(name)) throw ContractError("duplicate parameter " + name);
  const std::size_t n = ag::numel(shape);
  auto t = ag::Tensor::parameter(std::move(shape), std::vector<double>(n, value));
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

ag::LinearLayer ParameterStore::add_linear(const std::string& name, std::size_t in,
                                           std::size_t out) {
  return {add(name + ".w", {in, out}, in), add(name + ".b", {out}, in)};
}

ag::LinearLayer ParameterStore::add_linear_no_bias(const std::string& name, std::size_t in,
                                                   std::size_t out) {
  return {add(name + ".w", {in, out}, in), add_filled(name + ".b", {out}, 0.0)};
}

const ag::Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LoadError("unknown parameter " + name);
  return entries_[it->second].second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : entries_) {
    ag::Tensor copy = t;
    copy.zero_grad();
  }
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  for (auto& [name, t] : entries_) {
    const ag::Tensor& src = other.get(name);
    if (src.shape() != t.shape()) {
      throw LoadError("parameter " + name + " has shape " + ag::shape_str(src.shape()) +
                      ", expected " + ag::shape_str(t.shape()));
    }
    ag::Tensor dst = t;
    auto v = dst.mutable_values();
    std::copy(src.values().begin(), src.values().end(), v.begin());
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "PFW1 I/O assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw LoadError(std::string("truncated weights file while reading ") + what);
  }
  return v;
}

constexpr char kMagic[4] = {'P', 'F', 'W', '1'};
constexpr std::uint64_t kMaxValues = std::uint64_t{1} << 32;

}  // namespace

void write_weights(std::ostream& os, const std::vector<WeightEntry>& entries) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (ag::numel(e.shape) != e.values.size()) {
      throw ContractError("weight entry " + e.name + " shape/value count mismatch");
    }
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(e.values.data()),
             static_cast<std::streamsize>(e.values.size() * sizeof(double)));
  }
  if (!os) throw Error("failed writing weights");
}

std::vector<WeightEntry> read_weights(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw LoadError("truncated weights file: missing magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw LoadError("unknown weights magic (expected PFW1)");
  const auto count = take<std::uint32_t>(is, "entry count");
  std::vector<WeightEntry> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    WeightEntry e;
    const auto len = take<std::uint32_t>(is, "name length");
    if (len > 4096) throw LoadError("implausible parameter name length");
    e.name.resize(len);
    if (!is.read(e.name.data(), len)) throw LoadError("truncated weights file in name");
    const auto rank = take<std::uint32_t>(is, "rank");
    if (rank > 8) throw LoadError("implausible rank for " + e.name);
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = take<std::uint64_t>(is, "dims");
      e.shape.push_back(static_cast<std::size_t>(d));
      n *= d;
      if (n > kMaxValues) throw LoadError("implausible tensor size for " + e.name);
    }
    e.values.resize(static_cast<std::size_t>(n));
    if (!is.read(reinterpret_cast<char*>(e.values.data()),
                 static_cast<std::streamsize>(n * sizeof(double)))) {
      throw LoadError("truncated weights file in values of " + e.name);
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace poseforge
