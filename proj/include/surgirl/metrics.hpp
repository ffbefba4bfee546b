#pragma once

#include <fstream>
#include <string>

#include "surgirl/learner.hpp"

namespace surgirl {

// Append-only metrics CSV with line-atomic writes:
// step,episode_return,success_rate,actor_loss,critic_loss,alpha,beta,mean_Hw,
// w_in,w_g1..w_gn
class MetricsCsvWriter {
 public:
  MetricsCsvWriter(const std::string& path, int n_external);
  void write(const MetricsRow& row);

 private:
  std::ofstream out_;
  int n_external_;
};

}  // namespace surgirl
