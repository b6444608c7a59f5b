#pragma once

#include <string>
#include <vector>

#include "pds/ops.hpp"
#include "pds/tensor.hpp"

namespace pds {

class Module {
 public:
  virtual ~Module() = default;
  virtual void collect_params(std::vector<Parameter*>& out) = 0;
  virtual void set_training(bool on) { training_ = on; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    collect_params(out);
    return out;
  }
  void zero_grads() {
    for (Parameter* p : parameters()) p->value.zero_grad();
  }
  bool training() const { return training_; }

 protected:
  bool training_ = false;
};

// y = x @ W + b applied per position; W is [in, out].
class Linear : public Module {
 public:
  Linear(const std::string& name, int64_t in, int64_t out, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

  void collect_params(std::vector<Parameter*>& out) override {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Parameter weight, bias;

 private:
  int64_t in_, out_;
  Tensor cached_x_;
};

class LayerNorm : public Module {
 public:
  LayerNorm(const std::string& name, int64_t dim, double eps = 1e-5);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

  void collect_params(std::vector<Parameter*>& out) override {
    out.push_back(&gain);
    out.push_back(&bias);
  }

  Parameter gain, bias;

 private:
  double eps_;
  ops::LayerNormCache cache_;
};

// Masked batch norm over (batch, time); running stats carried as state.
class BatchNorm1d : public Module {
 public:
  BatchNorm1d(const std::string& name, int64_t dim, double eps = 1e-5, double momentum = 0.1);

  Tensor forward(const Tensor& x, const ValidMask& mask);
  Tensor backward(const Tensor& gy);

  void collect_params(std::vector<Parameter*>& out) override {
    out.push_back(&gain);
    out.push_back(&bias);
  }

  Parameter gain, bias;
  Tensor running_mean, running_var;

 private:
  double eps_, momentum_;
  bool last_was_train_ = false;
  ops::BatchNormCache cache_;
  ValidMask eval_mask_;
};

// Inverted dropout; identity when eval or p == 0 (p == 0 draws no randoms,
// keeping downstream RNG consumption independent of the rate).
class Dropout : public Module {
 public:
  Dropout(double p, Rng* rng) : p_(p), rng_(rng) {}

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

  void collect_params(std::vector<Parameter*>&) override {}

 private:
  double p_;
  Rng* rng_;
  Tensor mask_;
  bool active_ = false;
};

// Token embedding scaled by sqrt(dim).
class Embedding : public Module {
 public:
  Embedding(const std::string& name, int64_t vocab, int64_t dim, Rng& rng);

  Tensor forward(const std::vector<std::vector<int64_t>>& tokens, int64_t max_time);
  void backward(const Tensor& gy);

  void collect_params(std::vector<Parameter*>& out) override { out.push_back(&weight); }

  Parameter weight;

 private:
  int64_t vocab_, dim_;
  std::vector<std::vector<int64_t>> cached_tokens_;
};

}  // namespace pds
