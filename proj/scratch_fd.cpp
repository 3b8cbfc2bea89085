#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "icld/model.hpp"
#include "icld/objectives.hpp"

using namespace icld;

static ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.vocab_size = 8;
  cfg.context_len = 16;
  return cfg;
}

static double check(const char* name, Parameters<double>& p,
                    const std::function<double(const Parameters<double>&, Weights<double>*)>& f) {
  Weights<double> grads = make_weights<double>(p.config);
  f(p, &grads);
  std::vector<Tensor<double>*> gts;
  for_each_tensor(grads, [&](const std::string&, Tensor<double>& t) { gts.push_back(&t); });
  double max_rel = 0;
  std::string worst;
  std::size_t ti = 0;
  for_each_tensor(p.weights, [&](const std::string& tname, Tensor<double>& t) {
    Tensor<double>& g = *gts[ti++];
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double h = 1e-5, orig = t.data[i];
      t.data[i] = orig + h;
      const double fp = f(p, nullptr);
      t.data[i] = orig - h;
      const double fm = f(p, nullptr);
      t.data[i] = orig;
      const double fd = (fp - fm) / (2 * h);
      const double rel =
          std::abs(fd - g.data[i]) / std::max({1e-5, std::abs(fd), std::abs(g.data[i])});
      if (rel > max_rel) {
        max_rel = rel;
        worst = tname + "[" + std::to_string(i) + "]";
      }
    }
  });
  std::printf("%-10s max rel err %.3e at %s\n", name, max_rel, worst.c_str());
  return max_rel;
}

int main() {
  ModelConfig cfg = small_cfg();
  Parameters<double> student = init_params<double>(cfg, 3);
  Parameters<double> teacher = init_params<double>(cfg, 9, Role::teacher);

  Prompt direct;
  direct.tokens = {1, 5, 6, 2};
  direct.target_start = direct.candidate_start = 4;

  Prompt channel;  // BOS <cand> SEP_IO x
  channel.tokens = {1, 2, 5, 6};
  channel.candidate_start = 1;
  channel.candidate_len = 0;
  channel.target_start = 2;
  channel.target_len = 2;
  channel.ordering = Ordering::channel;

  std::vector<HardItem> hard{{direct, {7}}, {channel, {6}}};
  std::vector<SoftItem> soft{{direct, {{5}, {6}, {7}}},        // shared fast path
                             {direct, {{5, 6}, {7}}},          // multi-token path
                             {channel, {{5}, {7}}}};           // channel path
  std::vector<TokenSeq> docs{{1, 5, 6, 7, 5}, {1, 7, 6}};
  const double tau = 2.0;

  double worst = 0;
  worst = std::max(worst, check("ict_hard", student, [&](const Parameters<double>& q, Weights<double>* g) {
    return ict_hard_loss(q, std::span<const HardItem>(hard), g, 1.0);
  }));
  worst = std::max(worst, check("ict_soft", student, [&](const Parameters<double>& q, Weights<double>* g) {
    return ict_soft_loss(q, teacher, std::span<const SoftItem>(soft), tau, g, 1.0);
  }));
  worst = std::max(worst, check("lm_hard", student, [&](const Parameters<double>& q, Weights<double>* g) {
    return lm_hard_loss(q, std::span<const TokenSeq>(docs), g, 1.0);
  }));
  worst = std::max(worst, check("lm_soft", student, [&](const Parameters<double>& q, Weights<double>* g) {
    return lm_soft_loss(q, teacher, std::span<const TokenSeq>(docs), tau, g, 1.0);
  }));
  // blended total, ICL_D_LM composition
  KDConfig kd;
  kd.method = Method::ICL_D_LM;
  kd.beta = 0.7;
  kd.temperature = tau;
  kd.schedule_steps = 100;
  const LossCoeffs co = kd_coeffs(25, kd);
  worst = std::max(worst, check("total", student, [&](const Parameters<double>& q, Weights<double>* g) {
    const double ih = ict_hard_loss(q, std::span<const HardItem>(hard), g,
                                    co.hard);
    const double is = ict_soft_loss(q, teacher, std::span<const SoftItem>(soft), tau, g,
                                    co.soft);
    const double lh = lm_hard_loss(q, std::span<const TokenSeq>(docs), g,
                                   co.hard * kd.beta);
    const double ls = lm_soft_loss(q, teacher, std::span<const TokenSeq>(docs), tau, g,
                                   co.soft * kd.beta);
    return co.hard * (ih + kd.beta * lh) + co.soft * (is + kd.beta * ls);
  }));
  std::printf("overall max rel err %.3e\n", worst);
  return worst <= 1e-4 ? 0 : 1;
}
