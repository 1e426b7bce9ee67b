#include "iai/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace iai {

namespace {

constexpr double kProbFloor = 1e-12;

void check_target(std::size_t n, int target) {
  if (target < 0 || std::size_t(target) >= n)
    throw std::invalid_argument("id loss: target " + std::to_string(target) +
                                " out of range for " + std::to_string(n) + " classes");
}

}  // namespace

std::vector<double> softmax_vec(const std::vector<double>& logits) {
  std::vector<double> p(logits);
  double mx = p[0];
  for (double v : p) mx = v > mx ? v : mx;
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

double focal_id_loss(const std::vector<double>& probs, int target, const FocalParams& fp) {
  check_target(probs.size(), target);
  const double p = probs[target];
  const double pc = p < kProbFloor ? kProbFloor : p;
  return -fp.alpha * std::pow(1.0 - p, fp.lambda) * std::log(pc);
}

std::vector<double> focal_id_grad(const std::vector<double>& logits, int target,
                                  const FocalParams& fp) {
  check_target(logits.size(), target);
  const std::vector<double> p = softmax_vec(logits);
  const double pt = p[target];
  const double pc = pt < kProbFloor ? kProbFloor : pt;
  // d/dp of -alpha*(1-p)^lambda*ln(p); the lambda term is dropped at lambda=0
  // rather than evaluated (pow(0,-1) would blow up at p=1)
  double dldp = -fp.alpha * std::pow(1.0 - pt, fp.lambda) / pc;
  if (fp.lambda != 0.0 && pt != 1.0)
    dldp += fp.alpha * fp.lambda * std::pow(1.0 - pt, fp.lambda - 1.0) * std::log(pc);
  std::vector<double> g(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double jac = pt * ((int(j) == target ? 1.0 : 0.0) - p[j]);
    g[j] = dldp * jac;
  }
  return g;
}

double ce_id_loss(const std::vector<double>& probs, int target) {
  return focal_id_loss(probs, target, FocalParams{1.0, 0.0});
}

double total_loss(double cls_loss, double id_loss) { return cls_loss + id_loss; }

SequenceLabels assign_gt_ids(const std::vector<std::vector<char>>& presence, int n_ids) {
  SequenceLabels out;
  if (presence.empty()) return out;
  const std::size_t n_ann = presence[0].size();
  for (const auto& frame : presence)
    if (frame.size() != n_ann)
      throw std::invalid_argument("assign_gt_ids: ragged presence table");
  out.label.assign(presence.size(), std::vector<int>(n_ann, -1));
  out.id_of.assign(n_ann, -1);
  int next = 0;
  for (std::size_t t = 0; t < presence.size(); ++t) {
    for (std::size_t a = 0; a < n_ann; ++a) {
      if (!presence[t][a]) continue;
      if (out.id_of[a] < 0) {
        if (next >= n_ids - 1)
          throw std::invalid_argument("assign_gt_ids: " + std::to_string(next + 1) +
                                      " instances exceed the capacity of " +
                                      std::to_string(n_ids - 1) + " real IDs");
        out.id_of[a] = next++;
        out.label[t][a] = n_ids - 1;  // first appearance: the new-instance class
      } else {
        out.label[t][a] = out.id_of[a];
      }
    }
  }
  return out;
}

}  // namespace iai
