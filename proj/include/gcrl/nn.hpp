#pragma once

#include "gcrl/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace gcrl {

// Network input as a batch of columns. Discrete states enter as one-hot
// blocks (scattered directly into the first matrix product instead of being
// materialized), optionally followed by a dense tail such as a latent vector.
struct BatchInput {
  struct Block {
    int offset;              // row offset of the block
    double weight;           // scatter weight (+1 for one-hot, -1 for differences)
    std::vector<int> idx;    // one index per column
  };

  int rows = 0;
  int cols = 0;
  std::vector<Block> blocks;
  Matrix dense;  // (d x cols), occupying the last d rows; may be empty

  Matrix to_dense() const;
};

struct MlpSpec {
  int in = 0;
  std::vector<int> hidden;  // at least one hidden layer
  int out = 0;
  bool layer_norm = true;
};

// GELU via the tanh approximation, evaluated with a vectorized exp.
ArrayXd gelu(const ArrayXd& x);

struct ParamRef {
  std::string name;
  Matrix* value;
  Matrix* grad;
};

struct MlpCache {
  bool sparse_input = false;
  BatchInput input;        // kept when the input was sparse
  Matrix input_dense;      // kept when the input was dense
  std::vector<Matrix> h;   // post-activation per hidden layer
  std::vector<Matrix> nrm; // layer-norm normalized values (pre gain/offset)
  std::vector<Vector> inv_std;
  std::vector<Matrix> act_in;   // pre-activation input to gelu
  std::vector<Matrix> sig;      // cached sigmoid(2u) values for the gelu backward
};

// Fully-connected network: hidden layers apply linear -> layer norm ->
// gain/offset -> GELU; the output layer is linear. All math is double
// precision. Forward passes are pure; backward accumulates into internal
// gradient buffers.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, Rng& rng);

  const MlpSpec& spec() const { return spec_; }
  bool empty() const { return layers_.empty(); }

  Matrix forward(const BatchInput& x, MlpCache* cache = nullptr) const;
  Matrix forward(const Matrix& x, MlpCache* cache = nullptr) const;

  // dY is (out x B). Returns the gradient w.r.t. the dense input rows when
  // requested (full input for dense forward, dense tail for sparse forward).
  Matrix backward(const MlpCache& cache, const Matrix& dY, bool want_input_grad = false);

  void zero_grads();
  std::vector<ParamRef> params(const std::string& prefix = "");
  std::vector<std::pair<std::string, const Matrix*>> named_values(const std::string& prefix = "") const;

 private:
  struct Layer {
    Matrix W, b, gain, offset;      // b/gain/offset stored as (n x 1)
    Matrix gW, gb, ggain, goffset;
    bool norm = false;
  };

  Matrix run(const Matrix* xd, const BatchInput* xs, MlpCache* cache) const;

  MlpSpec spec_;
  std::vector<Layer> layers_;  // hidden layers then the output layer
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m, v;
  long t = 0;
};

AdamState make_adam_state(const std::vector<ParamRef>& params);
void adam_step(const std::vector<ParamRef>& params, AdamState& state, const AdamConfig& cfg);

// target <- (1 - rho) * target + rho * online, elementwise.
void polyak_update(Matrix& target, const Matrix& online, double rho);
void polyak_update(const std::vector<ParamRef>& target, const std::vector<ParamRef>& online,
                   double rho);

// Named-array checkpoint container; round-trips bit-exactly.
void save_arrays(const std::string& path,
                 const std::vector<std::pair<std::string, const Matrix*>>& arrays,
                 const std::string& meta_json);
std::map<std::string, Matrix> load_arrays(const std::string& path, std::string* meta_json = nullptr);

// Assign parameters by name; throws on missing names or shape mismatch.
void assign_params(const std::vector<ParamRef>& params, const std::map<std::string, Matrix>& arrays);

// SHA-1 over the raw bytes of all parameters in order; detects any mutation.
std::string params_hash(const std::vector<std::pair<std::string, const Matrix*>>& arrays);

enum class ReprMode { raw, phi_g, phi_gs, phi_diff };

ReprMode repr_mode_from_string(const std::string& s);
std::string to_string(ReprMode m);

struct ValueNetSpec {
  ReprMode mode = ReprMode::phi_gs;
  int n_cells = 0;
  int dz = 10;
  std::vector<int> phi_hidden{128, 128, 128};
  std::vector<int> trunk_hidden{128, 128, 128};
  bool layer_norm = true;
};

struct ValueNetCache {
  MlpCache phi;
  Matrix z_raw;       // pre-normalization head output
  Matrix z;           // unit columns
  MlpCache trunk;
};

// Goal-conditioned value function V(s, g). In the representation modes the
// goal passes through a head phi whose unit-norm output z is both an input to
// the value trunk and the latent action space of the high-level policy.
class ValueNet {
 public:
  ValueNet() = default;
  ValueNet(ValueNetSpec spec, Rng& rng);

  const ValueNetSpec& spec() const { return spec_; }
  bool has_phi() const { return spec_.mode != ReprMode::raw; }
  int dz() const { return spec_.dz; }

  Vector values(const std::vector<int>& s, const std::vector<int>& g,
                ValueNetCache* cache = nullptr) const;
  // Accumulates gradients of sum_i dV[i] * V_i into the internal buffers.
  void backward(const ValueNetCache& cache, const Vector& dV);

  // z = normalized phi input built from (g, s) per the representation mode.
  Matrix represent(const std::vector<int>& g, const std::vector<int>& s) const;
  // Same but keeping the cache so gradients can flow into phi.
  Matrix represent_cached(const std::vector<int>& g, const std::vector<int>& s,
                          MlpCache* phi_cache, Matrix* z_raw) const;
  void represent_backward(const MlpCache& phi_cache, const Matrix& z_raw, const Matrix& dZ);

  BatchInput phi_input(const std::vector<int>& g, const std::vector<int>& s) const;

  std::vector<ParamRef> params();
  std::vector<std::pair<std::string, const Matrix*>> named_values() const;
  void zero_grads();

  Mlp& phi() { return phi_; }
  Mlp& trunk() { return trunk_; }

 private:
  ValueNetSpec spec_;
  Mlp phi_, trunk_;
};

// Normalize columns to the unit sphere; softened at the origin.
Matrix normalize_columns(const Matrix& y);
// dY for Z = normalize_columns(Y) given dZ.
Matrix normalize_columns_backward(const Matrix& y, const Matrix& z, const Matrix& dZ);

// Dense (state x goal) value table for exact small-scale runs.
struct TabularValue {
  Matrix table;  // n_states x n_goals

  explicit TabularValue(int n_states, int n_goals, double init = 0.0)
      : table(Matrix::Constant(n_states, n_goals, init)) {}
  double operator()(int s, int g) const { return table(s, g); }
  void validate_finite() const;
};

}  // namespace gcrl
