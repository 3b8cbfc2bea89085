#include "icld/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "icld/rng.hpp"

namespace icld {

const char* to_string(Role r) { return r == Role::teacher ? "teacher" : "student"; }

void ModelConfig::validate() const {
  require(layers >= 1 && heads >= 1 && d_model >= 1 && d_ff >= 1 && vocab_size >= 1,
          Errc::invalid_config, "model config counts must be >= 1");
  require(context_len >= 8, Errc::invalid_config, "context_len must be >= 8");
  require(d_model % heads == 0, Errc::invalid_config,
          "d_model (" + std::to_string(d_model) + ") not divisible by heads (" +
              std::to_string(heads) + ")");
}

template <typename T>
Weights<T> make_weights(const ModelConfig& cfg) {
  const std::int64_t D = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size, C = cfg.context_len;
  Weights<T> w;
  w.tok_emb = Tensor<T>::zeros({V, D});
  w.pos_emb = Tensor<T>::zeros({C, D});
  w.blocks.resize(cfg.layers);
  for (auto& b : w.blocks) {
    b.ln1_g = Tensor<T>::zeros({D});
    b.ln1_b = Tensor<T>::zeros({D});
    b.wq = Tensor<T>::zeros({D, D});
    b.bq = Tensor<T>::zeros({D});
    b.wk = Tensor<T>::zeros({D, D});
    b.bk = Tensor<T>::zeros({D});
    b.wv = Tensor<T>::zeros({D, D});
    b.bv = Tensor<T>::zeros({D});
    b.wo = Tensor<T>::zeros({D, D});
    b.bo = Tensor<T>::zeros({D});
    b.ln2_g = Tensor<T>::zeros({D});
    b.ln2_b = Tensor<T>::zeros({D});
    b.fc1_w = Tensor<T>::zeros({D, F});
    b.fc1_b = Tensor<T>::zeros({F});
    b.fc2_w = Tensor<T>::zeros({F, D});
    b.fc2_b = Tensor<T>::zeros({D});
  }
  w.lnf_g = Tensor<T>::zeros({D});
  w.lnf_b = Tensor<T>::zeros({D});
  w.head_w = Tensor<T>::zeros({D, V});
  return w;
}

template <typename T>
void zero_weights(Weights<T>& w) {
  for_each_tensor(w, [](const std::string&, Tensor<T>& t) { t.fill(T(0)); });
}

static bool is_gain(const std::string& name) { return name.ends_with("_g"); }

static bool is_bias(const std::string& name) {
  auto dot = name.rfind('.');
  std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf.ends_with("_b") || (leaf.size() == 2 && leaf[0] == 'b');
}

template <typename T>
Parameters<T> init_params(const ModelConfig& cfg, std::uint64_t seed, Role role) {
  cfg.validate();
  Parameters<T> p;
  p.role = role;
  p.config = cfg;
  p.weights = make_weights<T>(cfg);
  Rng base = Rng(seed).fork("init");
  for_each_tensor(p.weights, [&](const std::string& name, Tensor<T>& t) {
    if (is_gain(name)) {
      t.fill(T(1));
    } else if (is_bias(name)) {
      t.fill(T(0));
    } else {
      Rng rng = base.fork(name);
      for (T& x : t.data) x = static_cast<T>(rng.normal(0.0, 0.02));
    }
  });
  return p;
}

template <typename To, typename From>
Parameters<To> cast_params(const Parameters<From>& p) {
  Parameters<To> out;
  out.role = p.role;
  out.config = p.config;
  out.weights = make_weights<To>(p.config);
  std::vector<const Tensor<From>*> src;
  for_each_tensor(p.weights,
                  [&](const std::string&, const Tensor<From>& t) { src.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(out.weights, [&](const std::string&, Tensor<To>& t) {
    for (std::size_t j = 0; j < t.data.size(); ++j)
      t.data[j] = static_cast<To>(src[i]->data[j]);
    ++i;
  });
  return out;
}

namespace {

template <typename T>
void layernorm_forward(const Tensor<T>& x, const Tensor<T>& g, const Tensor<T>& b, Tensor<T>& y,
                       std::vector<T>& mu, std::vector<T>& rstd) {
  const std::int64_t n = x.rows(), d = x.cols();
  constexpr T eps = T(1e-5);
  mu.resize(n);
  rstd.resize(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const T* xr = x.row(i);
    T m = 0;
    for (std::int64_t j = 0; j < d; ++j) m += xr[j];
    m /= static_cast<T>(d);
    T var = 0;
    for (std::int64_t j = 0; j < d; ++j) var += (xr[j] - m) * (xr[j] - m);
    var /= static_cast<T>(d);
    const T r = T(1) / std::sqrt(var + eps);
    mu[i] = m;
    rstd[i] = r;
    T* yr = y.row(i);
    for (std::int64_t j = 0; j < d; ++j) yr[j] = g.data[j] * ((xr[j] - m) * r) + b.data[j];
  }
}

template <typename T>
void layernorm_backward(const Tensor<T>& dy, const Tensor<T>& x, const std::vector<T>& mu,
                        const std::vector<T>& rstd, const Tensor<T>& g, Tensor<T>& dx,
                        Tensor<T>& dg, Tensor<T>& db) {
  const std::int64_t n = x.rows(), d = x.cols();
  for (std::int64_t i = 0; i < n; ++i) {
    const T* dyr = dy.row(i);
    const T* xr = x.row(i);
    T* dxr = dx.row(i);
    const T m = mu[i], r = rstd[i];
    T sum_dxhat = 0, sum_dxhat_xhat = 0;
    for (std::int64_t j = 0; j < d; ++j) {
      const T xhat = (xr[j] - m) * r;
      const T dxhat = dyr[j] * g.data[j];
      dg.data[j] += dyr[j] * xhat;
      db.data[j] += dyr[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
    }
    const T inv_d = T(1) / static_cast<T>(d);
    for (std::int64_t j = 0; j < d; ++j) {
      const T xhat = (xr[j] - m) * r;
      const T dxhat = dyr[j] * g.data[j];
      dxr[j] += (dxhat - sum_dxhat * inv_d - xhat * sum_dxhat_xhat * inv_d) * r;
    }
  }
}

template <typename T>
void linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Tensor<T>& y) {
  const std::int64_t n = x.rows(), out = w.cols();
  for (std::int64_t i = 0; i < n; ++i) std::memcpy(y.row(i), b.data.data(), sizeof(T) * out);
  matmul_add(x, w, y);
}

// dx += dy W^T; dW += x^T dy; db += column sums of dy
template <typename T>
void linear_backward(const Tensor<T>& dy, const Tensor<T>& x, const Tensor<T>& w, Tensor<T>& dx,
                     Tensor<T>& dw, Tensor<T>& db) {
  matmul_add_bt(dy, w, dx);
  matmul_add_at(x, dy, dw);
  const std::int64_t n = dy.rows(), out = dy.cols();
  for (std::int64_t i = 0; i < n; ++i) {
    const T* r = dy.row(i);
    for (std::int64_t j = 0; j < out; ++j) db.data[j] += r[j];
  }
}

template <typename T>
T gelu(T x) {
  return x * T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
  return cdf + x * pdf;
}

}  // namespace

template <typename T>
ForwardCache<T> forward_cached(const Parameters<T>& params, std::span<const TokenId> tokens) {
  const ModelConfig& cfg = params.config;
  const std::int64_t n = static_cast<std::int64_t>(tokens.size());
  require(n >= 1, Errc::invalid_input, "forward: empty token sequence");
  require(n <= cfg.context_len, Errc::context_overflow,
          "sequence of " + std::to_string(n) + " tokens exceeds context_len " +
              std::to_string(cfg.context_len));
  for (TokenId t : tokens)
    require(t >= 0 && t < cfg.vocab_size, Errc::invalid_input,
            "token id " + std::to_string(t) + " outside vocab of " +
                std::to_string(cfg.vocab_size));

  const std::int64_t D = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size, H = cfg.heads;
  const std::int64_t hd = cfg.head_dim();
  const T inv_sqrt_hd = T(1) / std::sqrt(static_cast<T>(hd));

  ForwardCache<T> c;
  c.tokens.assign(tokens.begin(), tokens.end());
  c.blocks.resize(cfg.layers);

  Tensor<T> x = Tensor<T>::zeros({n, D});
  for (std::int64_t i = 0; i < n; ++i) {
    const T* te = params.weights.tok_emb.row(tokens[i]);
    const T* pe = params.weights.pos_emb.row(i);
    T* xr = x.row(i);
    for (std::int64_t j = 0; j < D; ++j) xr[j] = te[j] + pe[j];
  }

  for (int l = 0; l < cfg.layers; ++l) {
    const BlockWeights<T>& w = params.weights.blocks[l];
    BlockCache<T>& bc = c.blocks[l];
    bc.x_in = x;

    bc.ln1_out = Tensor<T>::zeros({n, D});
    layernorm_forward(bc.x_in, w.ln1_g, w.ln1_b, bc.ln1_out, bc.ln1_mu, bc.ln1_rstd);

    bc.q = Tensor<T>::zeros({n, D});
    bc.k = Tensor<T>::zeros({n, D});
    bc.v = Tensor<T>::zeros({n, D});
    linear_forward(bc.ln1_out, w.wq, w.bq, bc.q);
    linear_forward(bc.ln1_out, w.wk, w.bk, bc.k);
    linear_forward(bc.ln1_out, w.wv, w.bv, bc.v);

    bc.att = Tensor<T>::zeros({H, n, n});
    bc.att_out = Tensor<T>::zeros({n, D});
    for (std::int64_t h = 0; h < H; ++h) {
      const std::int64_t off = h * hd;
      T* att_h = bc.att.data.data() + h * n * n;
      for (std::int64_t i = 0; i < n; ++i) {
        T* arow = att_h + i * n;
        // causal scores over j <= i; four accumulators keep the dot product
        // off the single-fma dependency chain
        T mx = -std::numeric_limits<T>::infinity();
        const T* qi = bc.q.row(i) + off;
        for (std::int64_t j = 0; j <= i; ++j) {
          const T* kj = bc.k.row(j) + off;
          T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
          std::int64_t d = 0;
          for (; d + 4 <= hd; d += 4) {
            s0 += qi[d] * kj[d];
            s1 += qi[d + 1] * kj[d + 1];
            s2 += qi[d + 2] * kj[d + 2];
            s3 += qi[d + 3] * kj[d + 3];
          }
          T s = (s0 + s1) + (s2 + s3);
          for (; d < hd; ++d) s += qi[d] * kj[d];
          s *= inv_sqrt_hd;
          arow[j] = s;
          mx = std::max(mx, s);
        }
        T denom = 0;
        for (std::int64_t j = 0; j <= i; ++j) {
          arow[j] = std::exp(arow[j] - mx);
          denom += arow[j];
        }
        const T inv = T(1) / denom;
        for (std::int64_t j = 0; j <= i; ++j) arow[j] *= inv;
        T* orow = bc.att_out.row(i) + off;
        for (std::int64_t j = 0; j <= i; ++j) {
          const T a = arow[j];
          const T* vj = bc.v.row(j) + off;
          for (std::int64_t d = 0; d < hd; ++d) orow[d] += a * vj[d];
        }
      }
    }

    bc.x_mid = bc.x_in;
    {
      Tensor<T> o = Tensor<T>::zeros({n, D});
      linear_forward(bc.att_out, w.wo, w.bo, o);
      for (std::size_t i = 0; i < o.data.size(); ++i) bc.x_mid.data[i] += o.data[i];
    }

    bc.ln2_out = Tensor<T>::zeros({n, D});
    layernorm_forward(bc.x_mid, w.ln2_g, w.ln2_b, bc.ln2_out, bc.ln2_mu, bc.ln2_rstd);

    bc.h_pre = Tensor<T>::zeros({n, F});
    linear_forward(bc.ln2_out, w.fc1_w, w.fc1_b, bc.h_pre);
    bc.h_act = Tensor<T>::zeros({n, F});
    for (std::size_t i = 0; i < bc.h_pre.data.size(); ++i)
      bc.h_act.data[i] = gelu(bc.h_pre.data[i]);

    x = bc.x_mid;
    {
      Tensor<T> h2 = Tensor<T>::zeros({n, D});
      linear_forward(bc.h_act, w.fc2_w, w.fc2_b, h2);
      for (std::size_t i = 0; i < h2.data.size(); ++i) x.data[i] += h2.data[i];
    }
  }

  c.x_final = x;
  c.lnf_out = Tensor<T>::zeros({n, D});
  layernorm_forward(c.x_final, params.weights.lnf_g, params.weights.lnf_b, c.lnf_out, c.lnf_mu,
                    c.lnf_rstd);
  c.logits = Tensor<T>::zeros({n, V});
  matmul_add(c.lnf_out, params.weights.head_w, c.logits);
  return c;
}

template <typename T>
Tensor<T> forward_logits(const Parameters<T>& params, std::span<const TokenId> tokens) {
  return forward_cached(params, tokens).logits;
}

template <typename T>
void backward(const Parameters<T>& params, const ForwardCache<T>& cache,
              const Tensor<T>& dlogits, Weights<T>& grads) {
  const ModelConfig& cfg = params.config;
  const std::int64_t n = static_cast<std::int64_t>(cache.tokens.size());
  const std::int64_t D = cfg.d_model, H = cfg.heads, hd = cfg.head_dim();
  const T inv_sqrt_hd = T(1) / std::sqrt(static_cast<T>(hd));
  require(dlogits.rows() == n && dlogits.cols() == cfg.vocab_size, Errc::contract,
          "backward: dlogits shape mismatch");

  // head projection and final norm
  Tensor<T> dx = Tensor<T>::zeros({n, D});
  matmul_add_bt(dlogits, params.weights.head_w, dx);  // d lnf_out
  matmul_add_at(cache.lnf_out, dlogits, grads.head_w);
  {
    Tensor<T> dxf = Tensor<T>::zeros({n, D});
    layernorm_backward(dx, cache.x_final, cache.lnf_mu, cache.lnf_rstd, params.weights.lnf_g,
                       dxf, grads.lnf_g, grads.lnf_b);
    dx = std::move(dxf);
  }

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const BlockWeights<T>& w = params.weights.blocks[l];
    BlockWeights<T>& g = grads.blocks[l];
    const BlockCache<T>& bc = cache.blocks[l];

    // MLP: x = x_mid + fc2(gelu(fc1(ln2(x_mid))))
    Tensor<T> dh_act = Tensor<T>::zeros({n, cfg.d_ff});
    linear_backward(dx, bc.h_act, w.fc2_w, dh_act, g.fc2_w, g.fc2_b);
    for (std::size_t i = 0; i < dh_act.data.size(); ++i)
      dh_act.data[i] *= gelu_grad(bc.h_pre.data[i]);
    Tensor<T> dln2 = Tensor<T>::zeros({n, D});
    linear_backward(dh_act, bc.ln2_out, w.fc1_w, dln2, g.fc1_w, g.fc1_b);
    // dx currently holds d x_mid via the residual; add the norm path
    layernorm_backward(dln2, bc.x_mid, bc.ln2_mu, bc.ln2_rstd, w.ln2_g, dx, g.ln2_g, g.ln2_b);

    // attention: x_mid = x_in + wo(att_out)
    Tensor<T> datt_out = Tensor<T>::zeros({n, D});
    linear_backward(dx, bc.att_out, w.wo, datt_out, g.wo, g.bo);

    Tensor<T> dq = Tensor<T>::zeros({n, D});
    Tensor<T> dk = Tensor<T>::zeros({n, D});
    Tensor<T> dv = Tensor<T>::zeros({n, D});
    std::vector<T> datt(static_cast<std::size_t>(n));
    for (std::int64_t h = 0; h < H; ++h) {
      const std::int64_t off = h * hd;
      const T* att_h = bc.att.data.data() + h * n * n;
      for (std::int64_t i = 0; i < n; ++i) {
        const T* arow = att_h + i * n;
        const T* du = datt_out.row(i) + off;
        // d attention weights and dv
        T dot = 0;
        for (std::int64_t j = 0; j <= i; ++j) {
          const T* vj = bc.v.row(j) + off;
          T s = 0;
          for (std::int64_t d = 0; d < hd; ++d) s += du[d] * vj[d];
          datt[j] = s;
          dot += arow[j] * s;
          T* dvj = dv.row(j) + off;
          const T a = arow[j];
          for (std::int64_t d = 0; d < hd; ++d) dvj[d] += a * du[d];
        }
        // softmax backward, then scores -> q, k
        T* dqi = dq.row(i) + off;
        const T* qi = bc.q.row(i) + off;
        for (std::int64_t j = 0; j <= i; ++j) {
          const T ds = arow[j] * (datt[j] - dot) * inv_sqrt_hd;
          const T* kj = bc.k.row(j) + off;
          T* dkj = dk.row(j) + off;
          for (std::int64_t d = 0; d < hd; ++d) {
            dqi[d] += ds * kj[d];
            dkj[d] += ds * qi[d];
          }
        }
      }
    }

    Tensor<T> dln1 = Tensor<T>::zeros({n, D});
    linear_backward(dq, bc.ln1_out, w.wq, dln1, g.wq, g.bq);
    linear_backward(dk, bc.ln1_out, w.wk, dln1, g.wk, g.bk);
    linear_backward(dv, bc.ln1_out, w.wv, dln1, g.wv, g.bv);
    // dx holds d x_in via the residual chain; add the norm path
    layernorm_backward(dln1, bc.x_in, bc.ln1_mu, bc.ln1_rstd, w.ln1_g, dx, g.ln1_g, g.ln1_b);
  }

  for (std::int64_t i = 0; i < n; ++i) {
    const T* dxr = dx.row(i);
    T* te = grads.tok_emb.row(cache.tokens[i]);
    T* pe = grads.pos_emb.row(i);
    for (std::int64_t j = 0; j < D; ++j) {
      te[j] += dxr[j];
      pe[j] += dxr[j];
    }
  }
}

template <typename T>
T row_logprob(const Tensor<T>& logits, std::int64_t row, TokenId id) {
  const std::int64_t V = logits.cols();
  const T* r = logits.row(row);
  T mx = r[0];
  for (std::int64_t j = 1; j < V; ++j) mx = std::max(mx, r[j]);
  T sum = 0;
  for (std::int64_t j = 0; j < V; ++j) sum += std::exp(r[j] - mx);
  return r[id] - mx - std::log(sum);
}

static void check_target(const Prompt& prompt) {
  prompt.validate();
  require(prompt.target_len >= 1, Errc::invalid_prompt, "prompt has an empty target span");
  require(prompt.target_start >= 1, Errc::invalid_prompt,
          "target span cannot start at position 0");
}

template <typename T>
T sequence_logprob_cached(const ForwardCache<T>& cache, const Prompt& prompt) {
  check_target(prompt);
  require(cache.tokens == prompt.tokens, Errc::contract,
          "forward cache does not match prompt tokens");
  T total = 0;
  for (std::size_t p = prompt.target_start; p < prompt.target_start + prompt.target_len; ++p)
    total += row_logprob(cache.logits, static_cast<std::int64_t>(p) - 1, prompt.tokens[p]);
  return total;
}

template <typename T>
T sequence_logprob(const Parameters<T>& params, const Prompt& prompt) {
  check_target(prompt);
  ForwardCache<T> cache = forward_cached(params, std::span<const TokenId>(prompt.tokens));
  return sequence_logprob_cached(cache, prompt);
}

template <typename T>
void add_logprob_grad(const ForwardCache<T>& cache, const Prompt& prompt, T scale,
                      Tensor<T>& dlogits) {
  check_target(prompt);
  const std::int64_t V = cache.logits.cols();
  for (std::size_t p = prompt.target_start; p < prompt.target_start + prompt.target_len; ++p) {
    const std::int64_t row = static_cast<std::int64_t>(p) - 1;
    const T* r = cache.logits.row(row);
    T mx = r[0];
    for (std::int64_t j = 1; j < V; ++j) mx = std::max(mx, r[j]);
    T sum = 0;
    for (std::int64_t j = 0; j < V; ++j) sum += std::exp(r[j] - mx);
    const T inv = T(1) / sum;
    T* d = dlogits.row(row);
    // d log p(tok) / d logit_j = 1[j == tok] - softmax_j
    for (std::int64_t j = 0; j < V; ++j) d[j] -= scale * std::exp(r[j] - mx) * inv;
    d[prompt.tokens[p]] += scale;
  }
}

int Distribution::argmax() const {
  int best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = static_cast<int>(i);
  return best;
}

void Distribution::validate() const {
  require(support.size() == probs.size(), Errc::contract,
          "distribution support/probs length mismatch");
  double sum = 0;
  for (double p : probs) {
    require(p >= 0.0, Errc::numeric, "negative probability");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-6, Errc::numeric, "probabilities sum to " +
                                                          std::to_string(sum));
}

Distribution softmax_distribution(std::span<const double> scores, double temperature) {
  require(temperature > 0.0, Errc::invalid_config, "temperature must be positive");
  require(!scores.empty(), Errc::contract, "empty score list");
  Distribution d;
  d.support.resize(scores.size());
  d.probs.resize(scores.size());
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double sum = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    d.support[i] = static_cast<int>(i);
    d.probs[i] = std::exp((scores[i] - mx) / temperature);
    sum += d.probs[i];
  }
  for (double& p : d.probs) p /= sum;
  return d;
}

namespace {

// Candidates can share one forward pass when they are all single tokens bound
// at the very end of the prompt: causality makes the scoring row identical
// across bindings.
bool shared_scoring_applies(const Prompt& prompt, const std::vector<TokenSeq>& candidates) {
  if (prompt.ordering != Ordering::direct) return false;
  if (prompt.candidate_start != prompt.tokens.size() || prompt.candidate_len != 0) return false;
  for (const TokenSeq& c : candidates)
    if (c.size() != 1) return false;
  return true;
}

}  // namespace

template <typename T>
CandidateScores<T> score_candidates_cached(const Parameters<T>& params, const Prompt& prompt,
                                           const std::vector<TokenSeq>& candidates) {
  require(!candidates.empty(), Errc::contract, "candidate list is empty");
  for (const TokenSeq& c : candidates)
    require(!c.empty(), Errc::contract, "empty candidate token sequence");

  CandidateScores<T> out;
  if (shared_scoring_applies(prompt, candidates)) {
    require(prompt.tokens.size() + 1 <= static_cast<std::size_t>(params.config.context_len),
            Errc::context_overflow, "bound prompt would exceed context_len");
    out.shared = true;
    out.shared_row = static_cast<std::int64_t>(prompt.tokens.size()) - 1;
    out.caches.push_back(forward_cached(params, std::span<const TokenId>(prompt.tokens)));
    const Tensor<T>& logits = out.caches[0].logits;
    for (const TokenSeq& c : candidates) {
      out.shared_ids.push_back(c[0]);
      out.logprobs.push_back(row_logprob(logits, out.shared_row, c[0]));
    }
    return out;
  }
  for (const TokenSeq& c : candidates) {
    Prompt bound = bind_label(prompt, c);
    ForwardCache<T> cache = forward_cached(params, std::span<const TokenId>(bound.tokens));
    out.logprobs.push_back(sequence_logprob_cached(cache, bound));
    out.caches.push_back(std::move(cache));
    out.prompts.push_back(std::move(bound));
  }
  return out;
}

template <typename T>
void add_candidate_score_grads(const Parameters<T>& params, const CandidateScores<T>& scores,
                               std::span<const T> dscores, Weights<T>& grads) {
  require(dscores.size() == scores.logprobs.size(), Errc::contract,
          "dscores length does not match candidate count");
  if (scores.shared) {
    const ForwardCache<T>& cache = scores.caches[0];
    const std::int64_t V = cache.logits.cols();
    Tensor<T> dlogits = Tensor<T>::zeros({cache.logits.rows(), V});
    const T* r = cache.logits.row(scores.shared_row);
    T mx = r[0];
    for (std::int64_t j = 1; j < V; ++j) mx = std::max(mx, r[j]);
    T sum = 0;
    for (std::int64_t j = 0; j < V; ++j) sum += std::exp(r[j] - mx);
    const T inv = T(1) / sum;
    T total = 0;
    for (const T& d : dscores) total += d;
    T* drow = dlogits.row(scores.shared_row);
    for (std::int64_t j = 0; j < V; ++j) drow[j] -= total * std::exp(r[j] - mx) * inv;
    for (std::size_t c = 0; c < dscores.size(); ++c) drow[scores.shared_ids[c]] += dscores[c];
    backward(params, cache, dlogits, grads);
    return;
  }
  for (std::size_t c = 0; c < dscores.size(); ++c) {
    if (dscores[c] == T(0)) continue;
    const ForwardCache<T>& cache = scores.caches[c];
    Tensor<T> dlogits = Tensor<T>::zeros({cache.logits.rows(), cache.logits.cols()});
    add_logprob_grad(cache, scores.prompts[c], dscores[c], dlogits);
    backward(params, cache, dlogits, grads);
  }
}

template <typename T>
std::vector<T> candidate_logprobs(const Parameters<T>& params, const Prompt& prompt,
                                  const std::vector<TokenSeq>& candidates) {
  require(!candidates.empty(), Errc::contract, "candidate list is empty");
  for (const TokenSeq& c : candidates)
    require(!c.empty(), Errc::contract, "empty candidate token sequence");
  std::vector<T> out;
  out.reserve(candidates.size());
  if (shared_scoring_applies(prompt, candidates)) {
    require(prompt.tokens.size() + 1 <= static_cast<std::size_t>(params.config.context_len),
            Errc::context_overflow, "bound prompt would exceed context_len");
    ForwardCache<T> cache = forward_cached(params, std::span<const TokenId>(prompt.tokens));
    const std::int64_t row = static_cast<std::int64_t>(prompt.tokens.size()) - 1;
    for (const TokenSeq& c : candidates) out.push_back(row_logprob(cache.logits, row, c[0]));
    return out;
  }
  for (const TokenSeq& c : candidates) out.push_back(sequence_logprob(params, bind_label(prompt, c)));
  return out;
}

template <typename T>
Distribution candidate_distribution(const Parameters<T>& params, const Prompt& prompt,
                                    const std::vector<TokenSeq>& candidates,
                                    double temperature) {
  require(temperature > 0.0, Errc::invalid_config, "temperature must be positive");
  std::vector<T> lp = candidate_logprobs(params, prompt, candidates);
  std::vector<double> scores(lp.begin(), lp.end());
  return softmax_distribution(scores, temperature);
}

double lr_at(std::int64_t step, double peak_lr, int warmup_steps, int max_steps) {
  if (step <= 0) return warmup_steps > 0 ? 0.0 : peak_lr;
  if (step <= warmup_steps)
    return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (step >= max_steps) return 0.0;
  return peak_lr * static_cast<double>(max_steps - step) /
         static_cast<double>(max_steps - warmup_steps);
}

template <typename T>
OptState<T> make_opt_state(const ModelConfig& cfg, double peak_lr, int warmup_steps,
                           int max_steps) {
  OptState<T> opt;
  opt.peak_lr = peak_lr;
  opt.warmup_steps = warmup_steps;
  opt.max_steps = max_steps;
  opt.m = make_weights<T>(cfg);
  opt.v = make_weights<T>(cfg);
  return opt;
}

template <typename T>
void adamw_step(Parameters<T>& params, const Weights<T>& grads, OptState<T>& opt,
                double weight_decay) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double lr = lr_at(opt.step, opt.peak_lr, opt.warmup_steps, opt.max_steps);
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));

  std::vector<const Tensor<T>*> gs;
  for_each_tensor(grads, [&](const std::string&, const Tensor<T>& t) { gs.push_back(&t); });
  std::vector<Tensor<T>*> ms, vs;
  for_each_tensor(opt.m, [&](const std::string&, Tensor<T>& t) { ms.push_back(&t); });
  for_each_tensor(opt.v, [&](const std::string&, Tensor<T>& t) { vs.push_back(&t); });

  std::size_t idx = 0;
  for_each_tensor(params.weights, [&](const std::string& name, Tensor<T>& w) {
    const Tensor<T>& g = *gs[idx];
    Tensor<T>& m = *ms[idx];
    Tensor<T>& v = *vs[idx];
    ++idx;
    require(g.same_shape(w), Errc::contract, "gradient shape mismatch for " + name);
    for (std::size_t i = 0; i < w.data.size(); ++i) {
      const double gi = static_cast<double>(g.data[i]);
      double mi = b1 * static_cast<double>(m.data[i]) + (1.0 - b1) * gi;
      double vi = b2 * static_cast<double>(v.data[i]) + (1.0 - b2) * gi * gi;
      m.data[i] = static_cast<T>(mi);
      v.data[i] = static_cast<T>(vi);
      const double update = (mi / bc1) / (std::sqrt(vi / bc2) + eps) +
                            weight_decay * static_cast<double>(w.data[i]);
      w.data[i] = static_cast<T>(static_cast<double>(w.data[i]) - lr * update);
    }
  });
}

// ---------------------------------------------------------------------------
// checkpoint io

namespace {

constexpr char kMagic[8] = {'I', 'C', 'L', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  require(in.good(), Errc::corrupt_checkpoint, "truncated checkpoint");
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  require(in.good(), Errc::corrupt_checkpoint, "truncated checkpoint");
  return v;
}

void write_array(std::ostream& out, const std::string& name, const Tensor<float>& t) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(out, static_cast<std::uint32_t>(t.shape.size()));
  for (std::int64_t d : t.shape) write_u64(out, static_cast<std::uint64_t>(d));
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

void read_array_into(std::istream& in, const std::string& expect_name, Tensor<float>& t) {
  const std::uint32_t name_len = read_u32(in);
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  require(in.good(), Errc::corrupt_checkpoint, "truncated checkpoint");
  require(name == expect_name, Errc::corrupt_checkpoint,
          "array order mismatch: expected " + expect_name + ", found " + name);
  const std::uint32_t ndim = read_u32(in);
  require(ndim == t.shape.size(), Errc::corrupt_checkpoint, "rank mismatch for " + name);
  for (std::size_t i = 0; i < ndim; ++i)
    require(read_u64(in) == static_cast<std::uint64_t>(t.shape[i]), Errc::corrupt_checkpoint,
            "shape mismatch for " + name);
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  require(in.good(), Errc::corrupt_checkpoint, "truncated checkpoint");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_checkpoint(const Parameters<float>& params, const OptState<float>* opt,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);

  std::ostringstream header;
  header << "role=" << to_string(params.role) << '\n'
         << "layers=" << params.config.layers << '\n'
         << "heads=" << params.config.heads << '\n'
         << "d_model=" << params.config.d_model << '\n'
         << "d_ff=" << params.config.d_ff << '\n'
         << "vocab_size=" << params.config.vocab_size << '\n'
         << "context_len=" << params.config.context_len << '\n'
         << "has_opt=" << (opt ? 1 : 0) << '\n';
  if (opt)
    header << "opt_step=" << opt->step << '\n'
           << "opt_peak_lr=" << format_double(opt->peak_lr) << '\n'
           << "opt_warmup_steps=" << opt->warmup_steps << '\n'
           << "opt_max_steps=" << opt->max_steps << '\n';
  const std::string h = header.str();
  write_u32(out, static_cast<std::uint32_t>(h.size()));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));

  for_each_tensor(params.weights, [&](const std::string& name, const Tensor<float>& t) {
    write_array(out, name, t);
  });
  if (opt) {
    for_each_tensor(opt->m, [&](const std::string& name, const Tensor<float>& t) {
      write_array(out, "opt.m." + name, t);
    });
    for_each_tensor(opt->v, [&](const std::string& name, const Tensor<float>& t) {
      write_array(out, "opt.v." + name, t);
    });
  }
  require(out.good(), Errc::io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, "cannot open " + path.string());

  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
          Errc::incompatible_checkpoint, path.string() + " is not a checkpoint file");
  const std::uint32_t version = read_u32(in);
  require(version == kVersion, Errc::incompatible_checkpoint,
          "checkpoint version " + std::to_string(version) + ", expected " +
              std::to_string(kVersion));

  const std::uint32_t hlen = read_u32(in);
  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  require(in.good(), Errc::corrupt_checkpoint, "truncated checkpoint header");

  std::map<std::string, std::string> kv;
  std::istringstream hs(htext);
  std::string line;
  while (std::getline(hs, line)) {
    auto eq = line.find('=');
    require(eq != std::string::npos, Errc::corrupt_checkpoint, "malformed header line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) {
    auto it = kv.find(key);
    require(it != kv.end(), Errc::corrupt_checkpoint, std::string("missing header key ") + key);
    return it->second;
  };

  Checkpoint ck;
  ck.params.role = get("role") == std::string("teacher") ? Role::teacher : Role::student;
  ck.params.config.layers = std::stoi(get("layers"));
  ck.params.config.heads = std::stoi(get("heads"));
  ck.params.config.d_model = std::stoi(get("d_model"));
  ck.params.config.d_ff = std::stoi(get("d_ff"));
  ck.params.config.vocab_size = std::stoi(get("vocab_size"));
  ck.params.config.context_len = std::stoi(get("context_len"));
  ck.params.config.validate();
  if (expected)
    require(ck.params.config == *expected, Errc::incompatible_checkpoint,
            path.string() + ": checkpoint config does not match the expected config");

  ck.params.weights = make_weights<float>(ck.params.config);
  for_each_tensor(ck.params.weights, [&](const std::string& name, Tensor<float>& t) {
    read_array_into(in, name, t);
  });

  if (get("has_opt") == "1") {
    OptState<float> opt = make_opt_state<float>(ck.params.config, std::stod(get("opt_peak_lr")),
                                                std::stoi(get("opt_warmup_steps")),
                                                std::stoi(get("opt_max_steps")));
    opt.step = std::stoll(get("opt_step"));
    for_each_tensor(opt.m, [&](const std::string& name, Tensor<float>& t) {
      read_array_into(in, "opt.m." + name, t);
    });
    for_each_tensor(opt.v, [&](const std::string& name, Tensor<float>& t) {
      read_array_into(in, "opt.v." + name, t);
    });
    ck.opt = std::move(opt);
  }
  char probe;
  in.read(&probe, 1);
  require(in.eof(), Errc::corrupt_checkpoint, "trailing bytes after checkpoint payload");
  return ck;
}

// explicit instantiations: float for training, double for gradient checks
template struct Parameters<float>;
template struct Parameters<double>;

#define ICLD_INSTANTIATE(T)                                                                   \
  template Weights<T> make_weights<T>(const ModelConfig&);                                    \
  template void zero_weights<T>(Weights<T>&);                                                 \
  template Parameters<T> init_params<T>(const ModelConfig&, std::uint64_t, Role);             \
  template ForwardCache<T> forward_cached<T>(const Parameters<T>&, std::span<const TokenId>); \
  template Tensor<T> forward_logits<T>(const Parameters<T>&, std::span<const TokenId>);      \
  template void backward<T>(const Parameters<T>&, const ForwardCache<T>&, const Tensor<T>&,  \
                            Weights<T>&);                                                     \
  template T row_logprob<T>(const Tensor<T>&, std::int64_t, TokenId);                         \
  template T sequence_logprob<T>(const Parameters<T>&, const Prompt&);                        \
  template T sequence_logprob_cached<T>(const ForwardCache<T>&, const Prompt&);               \
  template void add_logprob_grad<T>(const ForwardCache<T>&, const Prompt&, T, Tensor<T>&);    \
  template std::vector<T> candidate_logprobs<T>(const Parameters<T>&, const Prompt&,          \
                                                const std::vector<TokenSeq>&);                \
  template Distribution candidate_distribution<T>(const Parameters<T>&, const Prompt&,        \
                                                  const std::vector<TokenSeq>&, double);      \
  template CandidateScores<T> score_candidates_cached<T>(const Parameters<T>&, const Prompt&, \
                                                         const std::vector<TokenSeq>&);       \
  template void add_candidate_score_grads<T>(const Parameters<T>&, const CandidateScores<T>&, \
                                             std::span<const T>, Weights<T>&);                \
  template OptState<T> make_opt_state<T>(const ModelConfig&, double, int, int);               \
  template void adamw_step<T>(Parameters<T>&, const Weights<T>&, OptState<T>&, double);

ICLD_INSTANTIATE(float)
ICLD_INSTANTIATE(double)

template Parameters<double> cast_params<double, float>(const Parameters<float>&);
template Parameters<float> cast_params<float, double>(const Parameters<double>&);
template Parameters<float> cast_params<float, float>(const Parameters<float>&);
template Parameters<double> cast_params<double, double>(const Parameters<double>&);

}  // namespace icld
