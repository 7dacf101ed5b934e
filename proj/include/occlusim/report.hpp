#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "occlusim/adaptation.hpp"
#include "occlusim/metrics.hpp"
#include "occlusim/training.hpp"

namespace occlusim {

void write_text(const std::filesystem::path& path, const std::string& text);

/// Fixed-precision number formatting shared by every report.
std::string format_number(double v);

std::string records_csv(const std::vector<MetricRecord>& records);
std::string records_json(const std::vector<MetricRecord>& records);
std::string summary_csv(const std::vector<SummaryRow>& rows);

/// One row per variant, columns per kind (PSNR/SSIM) plus the overall mean.
std::string summary_markdown(const std::vector<SummaryRow>& rows, const std::string& title);

std::string sweep_csv(const SweepResult& sweep);
std::string sweep_markdown(const SweepResult& sweep, const std::string& title);
std::string traces_json(const std::vector<std::pair<std::string, AdaptTrace>>& traces);

std::string train_report_json(const TrainReport& report);

}  // namespace occlusim
