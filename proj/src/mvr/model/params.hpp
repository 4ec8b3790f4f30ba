#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvr/core/tensor.hpp"

namespace mvr {

// Named parameter tensors in deterministic creation order (the checkpoint
// serialization order). All parameters of a model are created up front so
// that attention-variant ablations share identical parameter sets.
template <class T>
class ParamStore {
 public:
  Tensor<T>& create(const std::string& name, std::vector<int> shape) {
    if (index_.count(name)) throw std::logic_error("param '" + name + "' already exists");
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back({name, Tensor<T>::zeros(std::move(shape))});
    return entries_.back().tensor;
  }

  Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("unknown param '" + name + "'");
    return entries_[it->second].tensor;
  }
  const Tensor<T>& get(const std::string& name) const {
    return const_cast<ParamStore*>(this)->get(name);
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  size_t size() const { return entries_.size(); }
  const std::string& name_at(size_t i) const { return entries_[i].name; }
  Tensor<T>& at(size_t i) { return entries_[i].tensor; }
  const Tensor<T>& at(size_t i) const { return entries_[i].tensor; }

  size_t total_parameters() const {
    size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void set_requires_grad(bool on) {
    for (auto& e : entries_) e.tensor.requires_grad = on;
  }
  void zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) {
      Tensor<U>& t = out.create(e.name, e.tensor.shape);
      for (size_t i = 0; i < e.tensor.data.size(); ++i) t.data[i] = static_cast<U>(e.tensor.data[i]);
    }
    return out;
  }

 private:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace mvr
