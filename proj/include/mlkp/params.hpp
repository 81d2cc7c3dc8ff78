#ifndef MLKP_PARAMS_HPP
#define MLKP_PARAMS_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlkp/conv.hpp"

namespace mlkp {

// Non-owning registry of named parameter buffers, each paired with a gradient
// buffer of identical extent. Iteration order is registration order, which
// fixes the order optimizers and the weight archive see.
template <typename Scalar>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::vector<std::uint32_t> dims;
    Scalar* value = nullptr;
    Scalar* grad = nullptr;
    Index size = 0;
  };

  void add(const std::string& name, Scalar* value, Scalar* grad,
           std::vector<std::uint32_t> dims) {
    MLKP_CHECK(!name.empty(), "parameter name must be non-empty");
    MLKP_CHECK(index_.find(name) == index_.end(),
               "duplicate parameter name '" << name << "'");
    Index size = 1;
    for (auto d : dims) size *= static_cast<Index>(d);
    MLKP_CHECK(size >= 1, "parameter '" << name << "' has empty dims");
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, std::move(dims), value, grad, size});
  }

  void add(const std::string& name, Tensor<Scalar>& value, Tensor<Scalar>& grad) {
    MLKP_CHECK(value.sameShape(grad), "value/grad shape mismatch for '"
                                          << name << "': " << value.shapeString()
                                          << " vs " << grad.shapeString());
    add(name, value.data(), grad.data(),
        {static_cast<std::uint32_t>(value.n()), static_cast<std::uint32_t>(value.c()),
         static_cast<std::uint32_t>(value.h()), static_cast<std::uint32_t>(value.w())});
  }

  void add(const std::string& name, Vector<Scalar>& value, Vector<Scalar>& grad) {
    MLKP_CHECK(value.size() == grad.size(), "value/grad length mismatch for '"
                                                << name << "'");
    add(name, value.data(), grad.data(),
        {static_cast<std::uint32_t>(value.size())});
  }

  void addConv(const std::string& prefix, ConvParams<Scalar>& p,
               ConvGrads<Scalar>& g) {
    add(prefix + ".w", p.w, g.w);
    add(prefix + ".b", p.b, g.b);
  }

  const std::vector<Entry>& entries() const { return entries_; }
  size_t count() const { return entries_.size(); }

  bool contains(const std::string& name) const {
    return index_.find(name) != index_.end();
  }

  const Entry& at(const std::string& name) const {
    auto it = index_.find(name);
    MLKP_CHECK(it != index_.end(), "no parameter named '" << name << "'");
    return entries_[it->second];
  }

  void zeroGrads() {
    for (auto& e : entries_)
      Eigen::Map<Vector<Scalar>>(e.grad, e.size).setZero();
  }

  Index totalSize() const {
    Index total = 0;
    for (const auto& e : entries_) total += e.size;
    return total;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace mlkp

#endif  // MLKP_PARAMS_HPP
