#include "offpolicy/dataio/csv.hpp"

#include <fstream>
#include <limits>

#include "offpolicy/errors.hpp"

namespace offpolicy::dataio {

namespace {

class PrecisionGuard {
 public:
  explicit PrecisionGuard(std::ostream& out)
      : out_(out), old_(out.precision(std::numeric_limits<double>::max_digits10)) {}
  ~PrecisionGuard() { out_.precision(old_); }

 private:
  std::ostream& out_;
  std::streamsize old_;
};

}  // namespace

void write_train_log(std::ostream& out, std::span<const trainer::LogRow> rows) {
  PrecisionGuard guard(out);
  out << "iteration,loss_total,loss_mle,advantage_mean,ratio_mean,ratio_var,kl_mean\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << r.loss_total << ',' << r.loss_mle << ',' << r.advantage_mean << ','
        << r.ratio_mean << ',' << r.ratio_var << ',' << r.kl_mean << '\n';
  }
}

void write_metrics(std::ostream& out, std::span<const MetricsRow> rows) {
  PrecisionGuard guard(out);
  out << "split,count,bleu1,bleu2,bleu3,bleu4,cider\n";
  for (const auto& r : rows) {
    out << r.split << ',' << r.metrics.count;
    for (double b : r.metrics.bleu) out << ',' << b;
    out << ',' << r.metrics.cider << '\n';
  }
}

void write_epochs(std::ostream& out, std::span<const trainer::EpochSummary> rows) {
  PrecisionGuard guard(out);
  out << "epoch,train_loss,val_score\n";
  for (const auto& r : rows) out << r.epoch << ',' << r.train_loss << ',' << r.val_score << '\n';
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fill) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  fill(out);
  out.flush();
  if (!out) throw IoError("failed while writing " + path.string());
}

}  // namespace offpolicy::dataio
