#include "pins/trace_csv.hpp"

#include <cstdio>
#include <ostream>

#include "pins/io.hpp"

namespace pins::csv {

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_header(std::ostream& out) { out << kHeader << "\r\n"; }

std::string format_row(std::string_view mode_label, const TraceRecord& rec) {
  char elapsed[64];
  std::snprintf(elapsed, sizeof elapsed, "%.6f", rec.elapsed_s);
  std::string line;
  line += escape(kSchema);
  line += ',' + escape(mode_label);
  line += ',' + std::to_string(rec.outer_k);
  line += ',' + std::to_string(rec.inner_t);
  line += ',' + std::string(to_string(rec.phase));
  line += ',' + std::string(elapsed);
  line += ',' + io::format_double(rec.primal_cost);
  line += ',' + io::format_double(rec.dual_objective);
  line += ',' + io::format_double(rec.marginal_violation);
  line += ',' + (rec.err_vs_exact ? io::format_double(*rec.err_vs_exact) : std::string());
  line += ',' + (rec.offblock_nnz ? std::to_string(*rec.offblock_nnz) : std::string());
  return line;
}

void write_rows(std::ostream& out, std::string_view mode_label,
                const std::vector<TraceRecord>& records) {
  for (const auto& rec : records) out << format_row(mode_label, rec) << "\r\n";
}

}  // namespace pins::csv
