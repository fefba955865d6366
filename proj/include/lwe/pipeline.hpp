#pragma once

#include <string>
#include <vector>

#include "lwe/config.hpp"
#include "lwe/corpus.hpp"
#include "lwe/retrieval.hpp"

namespace lwe {

// TREC run rows: `qid Q0 docid rank score tag`. The header comment records
// the configuration hash and seed; readers skip any leading '#' lines.
void write_run_file(const std::string& path, const std::vector<RankedList>& run,
                    const std::string& tag, const std::string& header);
std::vector<RankedList> read_run_file(const std::string& path);

// Subcommand bodies. They throw UsageError for caller mistakes and
// DataError for broken inputs; the binary maps those to exit codes 1 and 2.
int cmd_index(const Config& config);
int cmd_run(const Config& config, bool cross_validate_params);
int cmd_eval(const Config& config);
int cmd_diagnose(const Config& config);
int cmd_neighbors(const Config& config);
int cmd_train_embedding(const Config& config);

}  // namespace lwe
