#include "surgirl/metrics.hpp"

#include <sstream>

namespace surgirl {

MetricsCsvWriter::MetricsCsvWriter(const std::string& path, int n_external)
    : out_(path, std::ios::trunc), n_external_(n_external) {
  if (!out_) throw ConfigError("cannot open metrics file: " + path);
  out_ << "step,episode_return,success_rate,actor_loss,critic_loss,alpha,beta,mean_Hw,w_in";
  for (int j = 1; j <= n_external_; ++j) out_ << ",w_g" << j;
  out_ << "\n";
  out_.flush();
}

void MetricsCsvWriter::write(const MetricsRow& row) {
  std::ostringstream line;
  line.precision(17);
  line << row.step << ',' << row.episode_return << ',' << row.success_rate << ','
       << row.actor_loss << ',' << row.critic_loss << ',' << row.alpha << ','
       << row.beta << ',' << row.mean_Hw;
  for (int j = 0; j <= n_external_; ++j) {
    line << ',' << (j < static_cast<int>(row.mean_w.size()) ? row.mean_w[j] : 0.0);
  }
  line << '\n';
  out_ << line.str();  // one write per row keeps lines atomic
  out_.flush();
}

}  // namespace surgirl
