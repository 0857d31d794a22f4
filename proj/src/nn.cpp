#include "gcrl/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace gcrl {

using nlohmann::json;

namespace {

constexpr double kGeluC1 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC2 = 0.044715;
constexpr double kLnEps = 1e-10;
constexpr double kNormEps = 1e-24;

// sigmoid(2 * c1 * (x + c2 x^3)); gelu(x) = x * s.
ArrayXd gelu_sigmoid(const ArrayXd& x) {
  const ArrayXd u = 2.0 * kGeluC1 * (x + kGeluC2 * x.cube());
  return 1.0 / (1.0 + (-u).exp());
}

}  // namespace

ArrayXd gelu(const ArrayXd& x) { return x * gelu_sigmoid(x); }

Matrix BatchInput::to_dense() const {
  Matrix X = Matrix::Zero(rows, cols);
  for (const auto& blk : blocks) {
    for (int j = 0; j < cols; ++j) {
      X(blk.offset + blk.idx[static_cast<std::size_t>(j)], j) += blk.weight;
    }
  }
  if (dense.size() > 0) X.bottomRows(dense.rows()) = dense;
  return X;
}

Mlp::Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  if (spec_.in < 1 || spec_.out < 1) throw std::invalid_argument("Mlp: bad input/output dims");
  if (spec_.hidden.empty()) throw std::invalid_argument("Mlp: at least one hidden layer required");
  int fan_in = spec_.in;
  for (std::size_t i = 0; i <= spec_.hidden.size(); ++i) {
    const bool is_out = i == spec_.hidden.size();
    const int n = is_out ? spec_.out : spec_.hidden[i];
    Layer L;
    L.norm = !is_out && spec_.layer_norm;
    const double scale = is_out ? 0.01 / std::sqrt(fan_in) : std::sqrt(2.0 / fan_in);
    L.W = Matrix::NullaryExpr(n, fan_in, [&]() { return rng.normal() * scale; });
    L.b = Matrix::Zero(n, 1);
    L.gW = Matrix::Zero(n, fan_in);
    L.gb = Matrix::Zero(n, 1);
    if (L.norm) {
      L.gain = Matrix::Ones(n, 1);
      L.offset = Matrix::Zero(n, 1);
      L.ggain = Matrix::Zero(n, 1);
      L.goffset = Matrix::Zero(n, 1);
    }
    layers_.push_back(std::move(L));
    fan_in = n;
  }
}

Matrix Mlp::run(const Matrix* xd, const BatchInput* xs, MlpCache* cache) const {
  const int B = xd ? static_cast<int>(xd->cols()) : xs->cols;
  if (xd && xd->rows() != spec_.in) throw std::invalid_argument("Mlp::forward: input dim mismatch");
  if (xs && xs->rows != spec_.in) throw std::invalid_argument("Mlp::forward: input dim mismatch");
  if (cache) {
    cache->sparse_input = xs != nullptr;
    if (xs) cache->input = *xs;
    if (xd) cache->input_dense = *xd;
    cache->h.clear();
    cache->nrm.clear();
    cache->inv_std.clear();
    cache->act_in.clear();
    cache->sig.clear();
  }

  Matrix cur;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& L = layers_[li];
    Matrix U;
    if (li == 0 && xs) {
      U = L.b.replicate(1, B);
      for (const auto& blk : xs->blocks) {
        for (int j = 0; j < B; ++j) {
          U.col(j).noalias() += blk.weight * L.W.col(blk.offset + blk.idx[static_cast<std::size_t>(j)]);
        }
      }
      if (xs->dense.size() > 0) {
        const int d = static_cast<int>(xs->dense.rows());
        U.noalias() += L.W.rightCols(d) * xs->dense;
      }
    } else {
      const Matrix& X = li == 0 ? *xd : cur;
      U.noalias() = L.W * X;
      U.colwise() += L.b.col(0);
    }

    const bool is_out = li + 1 == layers_.size();
    if (is_out) {
      cur = std::move(U);
      break;
    }

    Matrix A;
    if (L.norm) {
      const int n = static_cast<int>(U.rows());
      Matrix N(n, B);
      Vector inv_std(B);
      for (int j = 0; j < B; ++j) {
        const double mu = U.col(j).mean();
        N.col(j) = U.col(j).array() - mu;
        const double var = N.col(j).squaredNorm() / n;
        const double is = 1.0 / std::sqrt(var + kLnEps);
        N.col(j) *= is;
        inv_std(j) = is;
      }
      A = (N.array().colwise() * L.gain.col(0).array()).colwise() + L.offset.col(0).array();
      if (cache) {
        cache->nrm.push_back(N);
        cache->inv_std.push_back(std::move(inv_std));
      }
    } else {
      A = std::move(U);
      if (cache) {
        cache->nrm.emplace_back();
        cache->inv_std.emplace_back();
      }
    }

    const ArrayXd flat = Eigen::Map<const ArrayXd>(A.data(), A.size());
    const ArrayXd s = gelu_sigmoid(flat);
    Matrix H = (flat * s).matrix().reshaped(A.rows(), A.cols());
    if (cache) {
      cache->act_in.push_back(A);
      cache->sig.push_back(Eigen::Map<const Matrix>(s.data(), A.rows(), A.cols()));
      cache->h.push_back(H);
    }
    cur = std::move(H);
  }
  return cur;
}

Matrix Mlp::forward(const BatchInput& x, MlpCache* cache) const { return run(nullptr, &x, cache); }
Matrix Mlp::forward(const Matrix& x, MlpCache* cache) const { return run(&x, nullptr, cache); }

Matrix Mlp::backward(const MlpCache& cache, const Matrix& dY, bool want_input_grad) {
  Matrix dH = dY;
  const int B = static_cast<int>(dY.cols());
  for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
    Layer& L = layers_[static_cast<std::size_t>(li)];
    const bool is_out = li + 1 == static_cast<int>(layers_.size());

    Matrix dU;
    if (is_out) {
      dU = std::move(dH);
    } else {
      const Matrix& A = cache.act_in[static_cast<std::size_t>(li)];
      const Matrix& S = cache.sig[static_cast<std::size_t>(li)];
      // gelu'(a) = s + a s (1-s) * 2 c1 (1 + 3 c2 a^2)
      const auto aa = A.array();
      const auto ss = S.array();
      Matrix dA =
          (dH.array() * (ss + aa * ss * (1.0 - ss) * (2.0 * kGeluC1) * (1.0 + 3.0 * kGeluC2 * aa.square())))
              .matrix();
      if (L.norm) {
        const Matrix& N = cache.nrm[static_cast<std::size_t>(li)];
        const Vector& inv_std = cache.inv_std[static_cast<std::size_t>(li)];
        L.ggain.col(0).array() += (dA.array() * N.array()).rowwise().sum();
        L.goffset.col(0).array() += dA.array().rowwise().sum();
        Matrix dN = dA.array().colwise() * L.gain.col(0).array();
        const int n = static_cast<int>(dN.rows());
        dU.resize(n, B);
        for (int j = 0; j < B; ++j) {
          const double m1 = dN.col(j).mean();
          const double m2 = dN.col(j).dot(N.col(j)) / n;
          dU.col(j) = inv_std(j) * (dN.col(j).array() - m1 - N.col(j).array() * m2).matrix();
        }
      } else {
        dU = std::move(dA);
      }
    }

    L.gb.col(0).array() += dU.array().rowwise().sum();
    if (li == 0) {
      if (cache.sparse_input) {
        const BatchInput& X = cache.input;
        for (const auto& blk : X.blocks) {
          for (int j = 0; j < B; ++j) {
            L.gW.col(blk.offset + blk.idx[static_cast<std::size_t>(j)]).noalias() +=
                blk.weight * dU.col(j);
          }
        }
        if (X.dense.size() > 0) {
          const int d = static_cast<int>(X.dense.rows());
          L.gW.rightCols(d).noalias() += dU * X.dense.transpose();
          if (want_input_grad) return L.W.rightCols(d).transpose() * dU;
        } else if (want_input_grad) {
          return Matrix();
        }
      } else {
        L.gW.noalias() += dU * cache.input_dense.transpose();
        if (want_input_grad) return L.W.transpose() * dU;
      }
      return Matrix();
    }
    const Matrix& X = cache.h[static_cast<std::size_t>(li - 1)];
    L.gW.noalias() += dU * X.transpose();
    dH.noalias() = L.W.transpose() * dU;
  }
  return Matrix();
}

void Mlp::zero_grads() {
  for (auto& L : layers_) {
    L.gW.setZero();
    L.gb.setZero();
    if (L.norm) {
      L.ggain.setZero();
      L.goffset.setZero();
    }
  }
}

std::vector<ParamRef> Mlp::params(const std::string& prefix) {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& L = layers_[i];
    const std::string base = prefix + "L" + std::to_string(i) + "/";
    out.push_back({base + "W", &L.W, &L.gW});
    out.push_back({base + "b", &L.b, &L.gb});
    if (L.norm) {
      out.push_back({base + "gain", &L.gain, &L.ggain});
      out.push_back({base + "offset", &L.offset, &L.goffset});
    }
  }
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> Mlp::named_values(const std::string& prefix) const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& L = layers_[i];
    const std::string base = prefix + "L" + std::to_string(i) + "/";
    out.emplace_back(base + "W", &L.W);
    out.emplace_back(base + "b", &L.b);
    if (L.norm) {
      out.emplace_back(base + "gain", &L.gain);
      out.emplace_back(base + "offset", &L.offset);
    }
  }
  return out;
}

AdamState make_adam_state(const std::vector<ParamRef>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const auto& p : params) {
    st.m.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    st.v.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
  return st;
}

void adam_step(const std::vector<ParamRef>& params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state/parameter shape mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = *params[i].grad;
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v.array().matrix() + (1.0 - cfg.beta2) * g.array().square().matrix();
    params[i].value->array() -=
        cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }
}

void polyak_update(Matrix& target, const Matrix& online, double rho) {
  target = (1.0 - rho) * target + rho * online;
}

void polyak_update(const std::vector<ParamRef>& target, const std::vector<ParamRef>& online,
                   double rho) {
  if (target.size() != online.size())
    throw std::invalid_argument("polyak_update: parameter count mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) polyak_update(*target[i].value, *online[i].value, rho);
}

void save_arrays(const std::string& path,
                 const std::vector<std::pair<std::string, const Matrix*>>& arrays,
                 const std::string& meta_json) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_arrays: cannot open " + path);
  json header;
  header["meta"] = meta_json;
  json list = json::array();
  for (const auto& [name, mat] : arrays) {
    list.push_back({{"name", name}, {"rows", mat->rows()}, {"cols", mat->cols()}});
  }
  header["arrays"] = list;
  const std::string h = header.dump();
  f << "GCRLNA1\n" << h << "\n";
  for (const auto& [name, mat] : arrays) {
    f.write(reinterpret_cast<const char*>(mat->data()),
            static_cast<std::streamsize>(sizeof(double)) * mat->size());
  }
}

std::map<std::string, Matrix> load_arrays(const std::string& path, std::string* meta_json) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_arrays: cannot open " + path);
  std::string magic, header_line;
  std::getline(f, magic);
  if (magic != "GCRLNA1") throw std::runtime_error("load_arrays: bad magic in " + path);
  std::getline(f, header_line);
  const json header = json::parse(header_line);
  if (meta_json) *meta_json = header.at("meta").get<std::string>();
  std::map<std::string, Matrix> out;
  for (const auto& entry : header.at("arrays")) {
    const auto name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<long>();
    const auto cols = entry.at("cols").get<long>();
    Matrix m(rows, cols);
    f.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double)) * m.size());
    if (!f) throw std::runtime_error("load_arrays: truncated file " + path);
    out.emplace(name, std::move(m));
  }
  return out;
}

void assign_params(const std::vector<ParamRef>& params, const std::map<std::string, Matrix>& arrays) {
  for (const auto& p : params) {
    const auto it = arrays.find(p.name);
    if (it == arrays.end()) throw std::runtime_error("assign_params: missing array " + p.name);
    if (it->second.rows() != p.value->rows() || it->second.cols() != p.value->cols())
      throw std::runtime_error("assign_params: shape mismatch for " + p.name);
    *p.value = it->second;
  }
}

std::string params_hash(const std::vector<std::pair<std::string, const Matrix*>>& arrays) {
  std::string bytes;
  for (const auto& [name, mat] : arrays) {
    bytes += name;
    bytes.append(reinterpret_cast<const char*>(mat->data()), sizeof(double) * static_cast<std::size_t>(mat->size()));
  }
  return sha1_hex(bytes);
}

ReprMode repr_mode_from_string(const std::string& s) {
  if (s == "raw") return ReprMode::raw;
  if (s == "phi_g") return ReprMode::phi_g;
  if (s == "phi_gs") return ReprMode::phi_gs;
  if (s == "phi_diff") return ReprMode::phi_diff;
  throw std::invalid_argument("unknown representation mode: " + s);
}

std::string to_string(ReprMode m) {
  switch (m) {
    case ReprMode::raw: return "raw";
    case ReprMode::phi_g: return "phi_g";
    case ReprMode::phi_gs: return "phi_gs";
    case ReprMode::phi_diff: return "phi_diff";
  }
  return "?";
}

Matrix normalize_columns(const Matrix& y) {
  Matrix z = y;
  for (int j = 0; j < z.cols(); ++j) {
    z.col(j) /= std::sqrt(z.col(j).squaredNorm() + kNormEps);
  }
  return z;
}

Matrix normalize_columns_backward(const Matrix& y, const Matrix& z, const Matrix& dZ) {
  Matrix dY(y.rows(), y.cols());
  for (int j = 0; j < y.cols(); ++j) {
    const double r = std::sqrt(y.col(j).squaredNorm() + kNormEps);
    const double dot = z.col(j).dot(dZ.col(j));
    dY.col(j) = (dZ.col(j) - z.col(j) * dot) / r;
  }
  return dY;
}

ValueNet::ValueNet(ValueNetSpec spec, Rng& rng) : spec_(std::move(spec)) {
  if (spec_.n_cells < 1) throw std::invalid_argument("ValueNet: n_cells required");
  const int n = spec_.n_cells;
  if (spec_.mode == ReprMode::raw) {
    trunk_ = Mlp(MlpSpec{2 * n, spec_.trunk_hidden, 1, spec_.layer_norm}, rng);
  } else {
    const int phi_in = spec_.mode == ReprMode::phi_gs ? 2 * n : n;
    phi_ = Mlp(MlpSpec{phi_in, spec_.phi_hidden, spec_.dz, spec_.layer_norm}, rng);
    trunk_ = Mlp(MlpSpec{n + spec_.dz, spec_.trunk_hidden, 1, spec_.layer_norm}, rng);
  }
}

BatchInput ValueNet::phi_input(const std::vector<int>& g, const std::vector<int>& s) const {
  const int n = spec_.n_cells;
  const int B = static_cast<int>(g.size());
  BatchInput in;
  in.cols = B;
  switch (spec_.mode) {
    case ReprMode::phi_g:
      in.rows = n;
      in.blocks.push_back({0, 1.0, g});
      break;
    case ReprMode::phi_gs:
      in.rows = 2 * n;
      in.blocks.push_back({0, 1.0, g});
      in.blocks.push_back({n, 1.0, s});
      break;
    case ReprMode::phi_diff:
      in.rows = n;
      in.blocks.push_back({0, 1.0, g});
      in.blocks.push_back({0, -1.0, s});
      break;
    case ReprMode::raw:
      throw std::logic_error("ValueNet::phi_input: raw mode has no phi");
  }
  return in;
}

Vector ValueNet::values(const std::vector<int>& s, const std::vector<int>& g,
                        ValueNetCache* cache) const {
  if (s.size() != g.size()) throw std::invalid_argument("ValueNet::values: size mismatch");
  const int n = spec_.n_cells;
  const int B = static_cast<int>(s.size());
  BatchInput trunk_in;
  trunk_in.cols = B;
  if (spec_.mode == ReprMode::raw) {
    trunk_in.rows = 2 * n;
    trunk_in.blocks.push_back({0, 1.0, s});
    trunk_in.blocks.push_back({n, 1.0, g});
    const Matrix out = trunk_.forward(trunk_in, cache ? &cache->trunk : nullptr);
    return out.row(0).transpose();
  }
  const BatchInput pin = phi_input(g, s);
  const Matrix z_raw = phi_.forward(pin, cache ? &cache->phi : nullptr);
  const Matrix z = normalize_columns(z_raw);
  trunk_in.rows = n + spec_.dz;
  trunk_in.blocks.push_back({0, 1.0, s});
  trunk_in.dense = z;
  const Matrix out = trunk_.forward(trunk_in, cache ? &cache->trunk : nullptr);
  if (cache) {
    cache->z_raw = z_raw;
    cache->z = z;
  }
  return out.row(0).transpose();
}

void ValueNet::backward(const ValueNetCache& cache, const Vector& dV) {
  const Matrix dY = dV.transpose();
  if (spec_.mode == ReprMode::raw) {
    trunk_.backward(cache.trunk, dY, false);
    return;
  }
  const Matrix dZ = trunk_.backward(cache.trunk, dY, true);
  const Matrix dZraw = normalize_columns_backward(cache.z_raw, cache.z, dZ);
  phi_.backward(cache.phi, dZraw, false);
}

Matrix ValueNet::represent(const std::vector<int>& g, const std::vector<int>& s) const {
  if (!has_phi()) throw std::logic_error("ValueNet::represent: raw mode has no representation");
  return normalize_columns(phi_.forward(phi_input(g, s)));
}

Matrix ValueNet::represent_cached(const std::vector<int>& g, const std::vector<int>& s,
                                  MlpCache* phi_cache, Matrix* z_raw) const {
  if (!has_phi()) throw std::logic_error("ValueNet::represent_cached: raw mode");
  *z_raw = phi_.forward(phi_input(g, s), phi_cache);
  return normalize_columns(*z_raw);
}

void ValueNet::represent_backward(const MlpCache& phi_cache, const Matrix& z_raw, const Matrix& dZ) {
  const Matrix z = normalize_columns(z_raw);
  phi_.backward(phi_cache, normalize_columns_backward(z_raw, z, dZ), false);
}

std::vector<ParamRef> ValueNet::params() {
  std::vector<ParamRef> out;
  if (has_phi()) {
    for (auto& p : phi_.params("phi/")) out.push_back(p);
  }
  for (auto& p : trunk_.params("trunk/")) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ValueNet::named_values() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  if (has_phi()) {
    for (auto& p : phi_.named_values("phi/")) out.push_back(p);
  }
  for (auto& p : trunk_.named_values("trunk/")) out.push_back(p);
  return out;
}

void ValueNet::zero_grads() {
  if (has_phi()) phi_.zero_grads();
  trunk_.zero_grads();
}

void TabularValue::validate_finite() const {
  if (!table.allFinite()) throw std::runtime_error("TabularValue: non-finite entries");
}

}  // namespace gcrl
