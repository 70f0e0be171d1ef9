#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "poseforge/autograd.hpp"
#include "poseforge/ops.hpp"

namespace poseforge {

// Named learnable leaves in creation order. Initialization is
// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) from a seeded generator.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  ag::Tensor add(const std::string& name, ag::Shape shape, std::size_t fan_in);
  ag::Tensor add_filled(const std::string& name, ag::Shape shape, double value);
  ag::LinearLayer add_linear(const std::string& name, std::size_t in, std::size_t out);
  ag::LinearLayer add_linear_no_bias(const std::string& name, std::size_t in, std::size_t out);

  const ag::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  const std::vector<std::pair<std::string, ag::Tensor>>& entries() const { return entries_; }

  void zero_grad();
  // Overwrites values of every entry from `other`, matched by name.
  void copy_values_from(const ParameterStore& other);

 private:
  std::mt19937_64 rng_;
  std::vector<std::pair<std::string, ag::Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

// PFW1 container: "PFW1", u32 entry count, then per entry: u32 name length,
// name bytes, u32 rank, u64 dims[rank], f64 values (row-major, little endian).
struct WeightEntry {
  std::string name;
  ag::Shape shape;
  std::vector<double> values;
};

void write_weights(std::ostream& os, const std::vector<WeightEntry>& entries);
std::vector<WeightEntry> read_weights(std::istream& is);

}  // namespace poseforge
