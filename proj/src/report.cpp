#include "occlusim/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "occlusim/checkpoint.hpp"
#include "occlusim/config.hpp"

namespace occlusim {

using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json series(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number_or_null(x));
  return a;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string records_csv(const std::vector<MetricRecord>& records) {
  std::ostringstream s;
  s << "sample_id,kind,variant,psnr_db,psnr_capped,ssim,failed,error\n";
  for (const auto& r : records) {
    s << csv_escape(r.sample_id) << ',' << to_string(r.kind) << ',' << csv_escape(r.variant) << ','
      << format_number(r.psnr_db) << ',' << (r.psnr_capped ? 1 : 0) << ',' << format_number(r.ssim) << ','
      << (r.failed ? 1 : 0) << ',' << csv_escape(r.error) << '\n';
  }
  return s.str();
}

std::string records_json(const std::vector<MetricRecord>& records) {
  json a = json::array();
  for (const auto& r : records) {
    a.push_back(json{{"sample_id", r.sample_id},
                     {"kind", to_string(r.kind)},
                     {"variant", r.variant},
                     {"psnr_db", number_or_null(r.psnr_db)},
                     {"psnr_capped", r.psnr_capped},
                     {"ssim", number_or_null(r.ssim)},
                     {"failed", r.failed},
                     {"error", r.error}});
  }
  return a.dump(2) + "\n";
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream s;
  s << "variant,group,count,failures,psnr_db,ssim\n";
  for (const auto& r : rows) {
    s << csv_escape(r.variant) << ',' << r.group << ',' << r.count << ',' << r.failures << ','
      << format_number(r.psnr_db) << ',' << format_number(r.ssim) << '\n';
  }
  return s.str();
}

std::string summary_markdown(const std::vector<SummaryRow>& rows, const std::string& title) {
  std::vector<std::string> variants, groups;
  std::map<std::pair<std::string, std::string>, const SummaryRow*> cell;
  for (const auto& r : rows) {
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);
    if (r.group != "overall" && std::find(groups.begin(), groups.end(), r.group) == groups.end()) {
      groups.push_back(r.group);
    }
    cell[{r.variant, r.group}] = &r;
  }
  groups.push_back("overall");

  std::ostringstream s;
  if (!title.empty()) s << "## " << title << "\n\n";
  s << "| Variant |";
  for (const auto& g : groups) s << ' ' << g << " PSNR | " << g << " SSIM |";
  s << "\n|---|";
  for (size_t i = 0; i < groups.size(); ++i) s << "---:|---:|";
  s << '\n';
  char buf[64];
  for (const auto& v : variants) {
    s << "| " << v << " |";
    for (const auto& g : groups) {
      const auto it = cell.find({v, g});
      if (it == cell.end()) {
        s << " - | - |";
        continue;
      }
      std::snprintf(buf, sizeof buf, " %.2f | %.3f |", it->second->psnr_db, it->second->ssim);
      s << buf;
    }
    s << '\n';
  }
  return s.str();
}

std::string sweep_csv(const SweepResult& sweep) {
  std::ostringstream s;
  s << "n,group,count,failures,psnr_db,ssim\n";
  for (const auto& row : sweep.rows) {
    for (const auto& k : row.per_kind) {
      s << row.n << ',' << k.group << ',' << k.count << ',' << k.failures << ',' << format_number(k.psnr_db) << ','
        << format_number(k.ssim) << '\n';
    }
    s << row.n << ",overall," << row.overall.count << ',' << row.overall.failures << ','
      << format_number(row.overall.psnr_db) << ',' << format_number(row.overall.ssim) << '\n';
  }
  return s.str();
}

std::string sweep_markdown(const SweepResult& sweep, const std::string& title) {
  std::ostringstream s;
  if (!title.empty()) s << "## " << title << "\n\n";
  s << "| Updates n | PSNR | SSIM | images |\n|---:|---:|---:|---:|\n";
  char buf[96];
  for (const auto& row : sweep.rows) {
    std::snprintf(buf, sizeof buf, "| %d | %.2f | %.3f | %d |\n", row.n, row.overall.psnr_db, row.overall.ssim,
                  row.overall.count);
    s << buf;
  }
  return s.str();
}

std::string traces_json(const std::vector<std::pair<std::string, AdaptTrace>>& traces) {
  json a = json::array();
  for (const auto& [id, t] : traces) {
    a.push_back(json{{"sample_id", id},
                     {"auxiliary_loss", series(t.auxiliary_loss)},
                     {"psnr_db", series(t.psnr_db)},
                     {"step_seconds", series(t.step_seconds)},
                     {"fell_back", t.fell_back},
                     {"fallback_step", t.fallback_step}});
  }
  return a.dump(2) + "\n";
}

std::string train_report_json(const TrainReport& r) {
  const json j{{"mode", r.mode},
               {"seed", r.seed},
               {"iterations", r.joint_loss.size()},
               {"wall_seconds", r.wall_seconds},
               {"final_checkpoint", r.final_checkpoint},
               {"train", train_to_json(r.config)},
               {"loss", loss_to_json(r.config.loss)},
               {"network", config_to_json(r.config.network)},
               {"joint_loss", series(r.joint_loss)},
               {"primary_loss", series(r.primary_loss)},
               {"auxiliary_loss", series(r.auxiliary_loss)}};
  return j.dump(2) + "\n";
}

}  // namespace occlusim
