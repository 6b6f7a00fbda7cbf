#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "artic/ad/tape.hpp"
#include "artic/core/random.hpp"

namespace artic::nn {

/// Trainable tensor plus its Adam state. Addresses are stable for the life of
/// the owning module, which is what ties tape leaves back to parameters.
struct ParamTensor {
  std::string name;
  Tensor value;
  Tensor adam_m;  // allocated by the optimizer on first use
  Tensor adam_v;
};

/// Base class with torch-style parameter/buffer/child registration.
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<ParamTensor*> parameters() {
    std::vector<ParamTensor*> out;
    collect_params_("", &out, nullptr);
    return out;
  }

  std::vector<std::pair<std::string, ParamTensor*>> named_parameters() {
    std::vector<std::pair<std::string, ParamTensor*>> named;
    collect_params_("", nullptr, &named);
    return named;
  }

  std::vector<std::pair<std::string, Tensor*>> named_buffers() {
    std::vector<std::pair<std::string, Tensor*>> out;
    collect_buffers_("", &out);
    return out;
  }

  std::int64_t parameter_count() {
    std::int64_t n = 0;
    for (auto* p : parameters()) n += p->value.numel();
    return n;
  }

 protected:
  ParamTensor& param(const std::string& name, Tensor init) {
    auto p = std::make_unique<ParamTensor>();
    p->name = name;
    p->value = std::move(init);
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Tensor& buffer(const std::string& name, Tensor init) {
    buffers_.emplace_back(name, std::make_unique<Tensor>(std::move(init)));
    return *buffers_.back().second;
  }

  void child(const std::string& name, Module& m) { children_.emplace_back(name, &m); }

  /// Parameter as a tape leaf (memoized per tape).
  static ad::Var pvar(ad::Tape& t, ParamTensor& p) {
    return t.shared_leaf(&p, p.value, true);
  }

 private:
  void collect_params_(const std::string& prefix, std::vector<ParamTensor*>* flat,
                       std::vector<std::pair<std::string, ParamTensor*>>* named) {
    for (auto& p : params_) {
      if (flat) flat->push_back(p.get());
      if (named) named->emplace_back(prefix + p->name, p.get());
    }
    for (auto& [name, m] : children_)
      m->collect_params_(prefix + name + ".", flat, named);
  }

  void collect_buffers_(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor*>>* out) {
    for (auto& [name, b] : buffers_) out->emplace_back(prefix + name, b.get());
    for (auto& [name, m] : children_) m->collect_buffers_(prefix + name + ".", out);
  }

  std::vector<std::unique_ptr<ParamTensor>> params_;
  std::vector<std::pair<std::string, std::unique_ptr<Tensor>>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
};

namespace init {

inline Tensor uniform_fan_in(Rng& rng, std::vector<int> shape, int fan_in) {
  Tensor t(std::move(shape));
  const real bound = real(1) / std::sqrt(static_cast<real>(fan_in));
  rng.fill_uniform(t, -bound, bound);
  return t;
}

inline Tensor normal(Rng& rng, std::vector<int> shape, real stddev = 1.0) {
  Tensor t(std::move(shape));
  rng.fill_normal(t, 0.0, stddev);
  return t;
}

}  // namespace init

}  // namespace artic::nn
