#pragma once

#include <stdexcept>
#include <string>

namespace df {

// Stable error codes. The CLI maps kinds to exit codes and emits the code
// name in its machine-readable error record.
enum class errc {
  // data / validation
  missing_column,
  duplicate_key,
  orphan_product,
  missing_market,
  market_size_violation,
  zero_group_share,
  invalid_value,
  inconsistent_product,
  negative_input,
  invalid_kernel,
  insufficient_history,
  hausman_undefined,
  missing_residual,
  bad_config,
  // numeric
  domain_error,
  numeric_overflow,
  rank_deficient,
  non_convergence,
  singular_block,
  no_convergence,
  bracket_failure,
  degenerate_market,
  grid_too_coarse,
};

enum class error_kind { data, numeric, usage };

class Error : public std::runtime_error {
 public:
  Error(errc code, error_kind kind, std::string msg)
      : std::runtime_error(std::move(msg)), code_(code), kind_(kind) {}

  errc code() const noexcept { return code_; }
  error_kind kind() const noexcept { return kind_; }

 private:
  errc code_;
  error_kind kind_;
};

inline const char* errc_name(errc c) noexcept {
  switch (c) {
    case errc::missing_column: return "MissingColumn";
    case errc::duplicate_key: return "DuplicateKey";
    case errc::orphan_product: return "OrphanProduct";
    case errc::missing_market: return "MissingMarket";
    case errc::market_size_violation: return "MarketSizeViolation";
    case errc::zero_group_share: return "ZeroGroupShare";
    case errc::invalid_value: return "InvalidValue";
    case errc::inconsistent_product: return "InconsistentProduct";
    case errc::negative_input: return "NegativeInput";
    case errc::invalid_kernel: return "InvalidKernel";
    case errc::insufficient_history: return "InsufficientHistory";
    case errc::hausman_undefined: return "HausmanUndefined";
    case errc::missing_residual: return "MissingResidual";
    case errc::bad_config: return "BadConfig";
    case errc::domain_error: return "DomainError";
    case errc::numeric_overflow: return "NumericOverflow";
    case errc::rank_deficient: return "RankDeficient";
    case errc::non_convergence: return "NonConvergence";
    case errc::singular_block: return "SingularBlock";
    case errc::no_convergence: return "NoConvergence";
    case errc::bracket_failure: return "BracketFailure";
    case errc::degenerate_market: return "DegenerateMarket";
    case errc::grid_too_coarse: return "GridTooCoarse";
  }
  return "Error";
}

[[noreturn]] inline void throw_data(errc c, const std::string& msg) {
  throw Error(c, error_kind::data, msg);
}

[[noreturn]] inline void throw_numeric(errc c, const std::string& msg) {
  throw Error(c, error_kind::numeric, msg);
}

}  // namespace df
