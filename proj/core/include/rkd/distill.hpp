#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rkd/classifier.hpp"
#include "rkd/data.hpp"

namespace rkd {

// Unlabeled corpus the distillation losses are computed on; independent of
// train/test data.
struct TransferSet {
    std::vector<std::vector<double>> features;

    std::size_t size() const { return features.size(); }
    std::size_t feature_dim() const {
        return features.empty() ? 0 : features.front().size();
    }
};

// One training run's knobs. temperature must be 1 for pretraining and is 10
// for distillation by default. One rng stream seeded by shuffle_seed drives
// both epoch shuffling and dropout.
struct TrainSpec {
    int epochs = 30;
    int batch_size = 32;
    double temperature = 1.0;
    std::uint64_t shuffle_seed = 0;
};

// -sum_i p_i log q_i. q entries are clamped below at 1e-300 before the log so
// a teacher assigning exact zero mass cannot produce -inf against p_i = 0.
double soft_loss(std::span<const double> p, std::span<const double> q);

// Gradient of soft_loss(p, temp_softmax(z, T)) with respect to z:
// (temp_softmax(z, T) - p) / T.
std::vector<double> soft_loss_grad(std::span<const double> z_student,
                                   std::span<const double> p_teacher,
                                   double temperature);

// Arithmetic mean over teachers of temp_softmax(teacher logits, T), teacher
// forwards in eval mode. Throws InvalidInputError for an empty teacher set or
// mismatched class counts.
ProbVector multi_teacher_targets(std::span<const ClassifierParams* const> teachers,
                                 std::span<const double> features,
                                 double temperature);
ProbVector multi_teacher_targets(std::span<const ClassifierParams> teachers,
                                 std::span<const double> features,
                                 double temperature);

// Hard-label training on a labeled season: init_params, then spec.epochs of
// shuffled mini-batch cross-entropy + Adam. Enforces spec.temperature == 1.
// Throws InvalidInputError for empty or unlabeled data.
ClassifierParams pretrain(const ClassifierConfig& config, const SeasonDataset& data,
                          const TrainSpec& spec, const AdamConfig& adam = {});

// Teacher-to-student distillation on the transfer set: mini-batch soft loss
// between the mean teacher target and the student's temperature-scaled
// softmax, via soft_loss_grad and adam_step. No hard-label term.
ClassifierParams distill_student(ClassifierParams student_init,
                                 std::span<const ClassifierParams* const> teachers,
                                 const TransferSet& transfer, const TrainSpec& spec,
                                 const AdamConfig& adam = {});
ClassifierParams distill_student(ClassifierParams student_init,
                                 std::span<const ClassifierParams> teachers,
                                 const TransferSet& transfer, const TrainSpec& spec,
                                 const AdamConfig& adam = {});

// Same loop over precomputed per-sample targets (targets[i] pairs with
// transfer.features[i]). This is what the recursion engine calls after it has
// evaluated and released the teachers.
ClassifierParams distill_to_targets(ClassifierParams student_init,
                                    const std::vector<ProbVector>& targets,
                                    const TransferSet& transfer,
                                    const TrainSpec& spec,
                                    const AdamConfig& adam = {});

// Precomputes multi_teacher_targets for every transfer sample.
std::vector<ProbVector> teacher_targets(
    std::span<const ClassifierParams* const> teachers, const TransferSet& transfer,
    double temperature);

// Desk-scale stand-in for the paper-style independent distillation corpus:
// a synthetic season whose per-sample drift position is drawn uniformly from
// the whole cycle, so the corpus covers every seasonal mode while matching no
// training season exactly.
TransferSet synth_transfer_set(const SynthConfig& config, std::uint64_t seed,
                               int size);

} // namespace rkd
