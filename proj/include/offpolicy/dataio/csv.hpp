#ifndef OFFPOLICY_DATAIO_CSV_HPP_
#define OFFPOLICY_DATAIO_CSV_HPP_

#include <filesystem>
#include <functional>
#include <ostream>
#include <span>
#include <string>

#include "offpolicy/trainer/trainer.hpp"

namespace offpolicy::dataio {

// iteration,loss_total,loss_mle,advantage_mean,ratio_mean,ratio_var,kl_mean
void write_train_log(std::ostream& out, std::span<const trainer::LogRow> rows);

struct MetricsRow {
  std::string split;
  trainer::Metrics metrics;
};

// split,count,bleu1,bleu2,bleu3,bleu4,cider
void write_metrics(std::ostream& out, std::span<const MetricsRow> rows);

// epoch,train_loss,val_score
void write_epochs(std::ostream& out, std::span<const trainer::EpochSummary> rows);

// Opens `path` for writing (IoError on failure) and hands the stream to `fill`.
void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fill);

}  // namespace offpolicy::dataio

#endif  // OFFPOLICY_DATAIO_CSV_HPP_
