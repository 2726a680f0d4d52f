#pragma once

#include <array>
#include <string>
#include <vector>

#include "tqa/nn/tape.hpp"

namespace tqa {

/// Parsed score-dump record (one JSONL line from an evaluation run).
struct ScoreDumpEntry {
    std::string example_id;
    std::vector<double> eta_uns;
    std::vector<double> eta_cell;
    std::vector<double> eta;
    std::vector<std::string> cells;
    nn::Mat latent;  // (n_tokens x d) when the dump carried latents, else 0x0
};

std::vector<ScoreDumpEntry> parse_score_dump(const std::string& jsonl);

struct DumpDiagnostics {
    std::string label;
    std::array<long, 20> histogram{};  // eta_uns buckets over [0,1]
    long token_count = 0;
    double fraction_mid = 0.0;  // eta_uns in [0.4, 0.6]
    /// 2-D PCA coordinates of table-token latents (empty without latents).
    std::vector<std::array<double, 2>> projection;
    /// true when the token's fused eta is above its example's mean.
    std::vector<bool> relevant_label;
};

/// Histogram + deterministic 2-D projection for one dump. Throws on an
/// empty dump.
DumpDiagnostics diagnose_dump(const std::string& label, const std::vector<ScoreDumpEntry>& dump);

std::string diagnostics_to_json(const std::vector<DumpDiagnostics>& all);

}  // namespace tqa
