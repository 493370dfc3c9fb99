#pragma once

#include "retssl/nn/tape.hpp"
#include "retssl/rng.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace retssl::model {

// Flat registry of named trainable matrices in a stable creation order. The
// order defines the checkpoint blob layout and the per-parameter init seeds,
// so it must not depend on runtime conditions other than the model config.
template <class S>
struct ParamStore {
  struct Entry {
    std::string name;
    nn::Mat<S> value;
    bool decay = true;
  };

  std::vector<Entry> entries;
  std::map<std::string, int> by_name;

  int add(std::string name, nn::Mat<S> value, bool decay) {
    if (by_name.count(name)) throw std::logic_error("duplicate parameter: " + name);
    const int idx = static_cast<int>(entries.size());
    by_name.emplace(name, idx);
    entries.push_back(Entry{std::move(name), std::move(value), decay});
    return idx;
  }

  int index(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }

  nn::Mat<S>& value(int idx) { return entries.at(idx).value; }
  const nn::Mat<S>& value(int idx) const { return entries.at(idx).value; }
  nn::Mat<S>& value(const std::string& name) { return entries[index(name)].value; }
  const nn::Mat<S>& value(const std::string& name) const { return entries[index(name)].value; }

  size_t count() const { return entries.size(); }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& e : entries) n += static_cast<size_t>(e.value.size());
    return n;
  }

  template <class T>
  ParamStore<T> cast() const {
    ParamStore<T> out;
    for (const auto& e : entries) out.add(e.name, e.value.template cast<T>(), e.decay);
    return out;
  }
};

}  // namespace retssl::model
