#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rkd/classifier.hpp"
#include "rkd/distill.hpp"
#include "rkd/tsa.hpp"

namespace rkd {

// How one ensemble member was produced: the TSA matrix rows it was distilled
// from (0 = the season's current teacher) and the strategy expression in
// force. The first season's member carries "pretrain" and no rows.
struct MemberProvenance {
    std::vector<int> teacher_rows;
    std::string strategy;
};

// The season-t classifier set S^t.
struct EnsembleState {
    int season_index = 0;
    std::vector<ClassifierParams> members;
    std::vector<MemberProvenance> provenance;
};

// Everything the recursion needs besides the data itself. classifier's
// input_dim / num_classes must match the data; init_seed is overridden with
// values derived from master_seed per (season, member).
struct RKDConfig {
    int ensemble_size = 4; // K
    Strategy strategy;
    ClassifierConfig classifier;
    TrainSpec pretrain_spec{.epochs = 30, .batch_size = 32, .temperature = 1.0};
    TrainSpec distill_spec{.epochs = 30, .batch_size = 32, .temperature = 10.0};
    AdamConfig adam;
    TransferSet transfer; // distillation corpus, shared by every season
    std::uint64_t master_seed = 0;
    // sequential distillation when set; otherwise students may train on
    // separate threads (results are identical either way)
    bool deterministic = true;
};

// S^1: a size-one ensemble pretrained on the first season's labeled data.
EnsembleState init_first_season(const RKDConfig& cfg, const SeasonDataset& d1);

// One adaptation step: pretrain the current teacher on dt, sample the TSA
// matrix (rng is consumed only for this draw), precompute every student's
// teacher targets on the transfer set, release all teachers, then distill K
// fresh students. Consumes the previous ensemble, so at no point are more
// than K+1 parameter sets retained.
EnsembleState season_step(EnsembleState prev, const SeasonDataset& dt,
                          const TransferSet& transfer, const RKDConfig& cfg,
                          Rng& rng);

// Ensemble checkpoint: member_<j>.rkdc files plus manifest.json (season
// index, strategy expression, provenance, master seed).
void save_ensemble(const EnsembleState& state, const RKDConfig& cfg,
                   const std::string& dir);
EnsembleState load_ensemble(const std::string& dir);

} // namespace rkd
