#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "pins/solver.hpp"

namespace pins::csv {

inline constexpr std::string_view kSchema = "pins-trace-v1";
inline constexpr std::string_view kHeader =
    "schema,mode,outer_k,inner_t,phase,elapsed_s,primal_cost,dual_obj,marginal_violation,"
    "err_vs_exact,offblock_nnz";

// RFC-4180 field quoting.
std::string escape(std::string_view field);

void write_header(std::ostream& out);

// One line per record. Doubles use shortest round-trip text; elapsed_s is
// fixed at 6 decimals; absent optional columns are empty.
void write_rows(std::ostream& out, std::string_view mode_label,
                const std::vector<TraceRecord>& records);

std::string format_row(std::string_view mode_label, const TraceRecord& rec);

}  // namespace pins::csv
