#pragma once

#include <functional>
#include <string>
#include <vector>

namespace rbp::acceptance {

enum class Verdict { pass, fail, soft_fail };

struct CriterionResult {
  std::string id;
  Verdict verdict = Verdict::fail;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  int workers = 0;                  ///< 0: hardware concurrency
  std::vector<std::string> only;    ///< run only these ids (empty: all)
};

/// Ids of all criteria in execution order.
std::vector<std::string> criterion_ids();

/// Runs the criteria, reporting each result to `sink` as soon as it is known.
/// The rank-1 criterion summarises the eigenvalue ratios of every other solve,
/// so it always runs last.
std::vector<CriterionResult> run(const Options& options,
                                 const std::function<void(const CriterionResult&)>& sink = {});

/// One line: "PASS <id>: <detail> (<seconds> s)".
std::string format(const CriterionResult& result);

/// True when no criterion has a hard failure.
bool all_passed(const std::vector<CriterionResult>& results);

}  // namespace rbp::acceptance
