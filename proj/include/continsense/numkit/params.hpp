#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "continsense/errors.hpp"
#include "continsense/numkit/matrix.hpp"

namespace continsense::numkit {

using ParamId = std::size_t;

struct Parameter {
  ParamId id = 0;
  std::string name;
  DenseMatrix value;
  bool trainable = true;
};

// Owns every optimizable matrix of one model instance. Ids are dense indices
// in insertion order and stay valid for the lifetime of the store.
class ParamStore {
 public:
  ParamId add(std::string name, DenseMatrix value, bool trainable = true) {
    const ParamId id = params_.size();
    params_.push_back(Parameter{id, std::move(name), std::move(value), trainable});
    return id;
  }

  Parameter& operator[](ParamId id) { return at(id); }
  const Parameter& operator[](ParamId id) const { return at(id); }

  Parameter& at(ParamId id) {
    if (id >= params_.size()) throw InputError("ParamStore: unknown parameter id " + std::to_string(id));
    return params_[id];
  }
  const Parameter& at(ParamId id) const {
    if (id >= params_.size()) throw InputError("ParamStore: unknown parameter id " + std::to_string(id));
    return params_[id];
  }

  std::size_t size() const noexcept { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t trainable_scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += p.value.size();
    return n;
  }

 private:
  std::vector<Parameter> params_;
};

// Ordered so that iteration (and anything derived from it) is deterministic.
using GradientMap = std::map<ParamId, DenseMatrix>;

}  // namespace continsense::numkit
