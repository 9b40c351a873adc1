#include "rkd/distill.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

#include "rkd/error.hpp"

namespace rkd {

double soft_loss(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) {
        throw InvalidInputError("soft_loss: length mismatch " +
                                std::to_string(p.size()) + " vs " +
                                std::to_string(q.size()));
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        loss -= p[i] * std::log(std::max(q[i], 1e-300));
    }
    return loss;
}

std::vector<double> soft_loss_grad(std::span<const double> z_student,
                                   std::span<const double> p_teacher,
                                   double temperature) {
    if (z_student.size() != p_teacher.size()) {
        throw InvalidInputError("soft_loss_grad: shape mismatch");
    }
    std::vector<double> grad = temp_softmax(z_student, temperature);
    for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i] = (grad[i] - p_teacher[i]) / temperature;
    }
    return grad;
}

ProbVector multi_teacher_targets(std::span<const ClassifierParams* const> teachers,
                                 std::span<const double> features,
                                 double temperature) {
    if (teachers.empty()) {
        throw InvalidInputError("multi_teacher_targets: empty teacher set");
    }
    const int num_classes = teachers.front()->config.num_classes;
    ProbVector mean(static_cast<std::size_t>(num_classes), 0.0);
    for (const ClassifierParams* t : teachers) {
        if (t->config.num_classes != num_classes) {
            throw InvalidInputError("multi_teacher_targets: teachers disagree on class count");
        }
        const auto q = temp_softmax(forward_logits(*t, features), temperature);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += q[i];
    }
    const double inv = 1.0 / static_cast<double>(teachers.size());
    for (double& v : mean) v *= inv;
    return mean;
}

ProbVector multi_teacher_targets(std::span<const ClassifierParams> teachers,
                                 std::span<const double> features,
                                 double temperature) {
    std::vector<const ClassifierParams*> ptrs;
    ptrs.reserve(teachers.size());
    for (const auto& t : teachers) ptrs.push_back(&t);
    return multi_teacher_targets(std::span<const ClassifierParams* const>(ptrs),
                                 features, temperature);
}

namespace {

void check_spec(const TrainSpec& spec) {
    if (spec.epochs < 0) throw InvalidInputError("train spec: epochs must be >= 0");
    if (spec.batch_size < 1) throw InvalidInputError("train spec: batch_size must be >= 1");
    if (!(spec.temperature > 0.0)) {
        throw InvalidInputError("train spec: temperature must be > 0");
    }
}

#ifndef NDEBUG
void debug_check_finite(const ClassifierParams& params) {
    assert(params.all_finite() && "optimizer step produced non-finite parameters");
}
#else
void debug_check_finite(const ClassifierParams&) {}
#endif

} // namespace

ClassifierParams pretrain(const ClassifierConfig& config, const SeasonDataset& data,
                          const TrainSpec& spec, const AdamConfig& adam) {
    check_spec(spec);
    if (spec.temperature != 1.0) {
        throw InvalidInputError("pretrain: temperature must be 1");
    }
    if (data.samples.empty()) {
        throw InvalidInputError("pretrain: empty dataset");
    }
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const auto& smp = data.samples[i];
        if (!smp.class_id) {
            throw InvalidInputError("pretrain: sample " + std::to_string(i) +
                                    " has no class_id");
        }
        if (*smp.class_id < 0 || *smp.class_id >= config.num_classes) {
            throw InvalidInputError("pretrain: sample " + std::to_string(i) +
                                    " class_id out of range");
        }
        if (static_cast<int>(smp.features.size()) != config.input_dim) {
            throw InvalidInputError("pretrain: sample " + std::to_string(i) +
                                    " feature dimension mismatch");
        }
    }

    ClassifierParams params = init_params(config);
    AdamState opt = make_adam_state(params, adam);
    Gradients grads = make_gradients(params);
    Rng rng(spec.shuffle_seed);

    std::vector<std::size_t> order(data.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(spec.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(spec.batch_size));
            grads.zero();
            for (std::size_t k = start; k < end; ++k) {
                const Sample& smp = data.samples[order[k]];
                const auto trace = forward_trace(params, smp.features, true, &rng);
                const auto hl = hard_loss_and_grad(trace.logits, *smp.class_id);
                backward_accumulate(params, trace, hl.grad, grads);
            }
            grads.scale(1.0 / static_cast<double>(end - start));
            adam_step(params, grads, opt);
            debug_check_finite(params);
        }
    }
    return params;
}

std::vector<ProbVector> teacher_targets(
    std::span<const ClassifierParams* const> teachers, const TransferSet& transfer,
    double temperature) {
    std::vector<ProbVector> targets;
    targets.reserve(transfer.size());
    for (const auto& features : transfer.features) {
        targets.push_back(multi_teacher_targets(teachers, features, temperature));
    }
    return targets;
}

ClassifierParams distill_to_targets(ClassifierParams student_init,
                                    const std::vector<ProbVector>& targets,
                                    const TransferSet& transfer,
                                    const TrainSpec& spec, const AdamConfig& adam) {
    check_spec(spec);
    if (targets.size() != transfer.size()) {
        throw InvalidInputError("distill: target/transfer size mismatch");
    }
    if (transfer.size() == 0) {
        throw InvalidInputError("distill: empty transfer set");
    }
    const auto& cfg = student_init.config;
    if (static_cast<int>(transfer.feature_dim()) != cfg.input_dim) {
        throw InvalidInputError("distill: transfer feature dimension mismatch");
    }
    for (const auto& p : targets) {
        if (static_cast<int>(p.size()) != cfg.num_classes) {
            throw InvalidInputError("distill: target class count mismatch");
        }
    }

    ClassifierParams params = std::move(student_init);
    AdamState opt = make_adam_state(params, adam);
    Gradients grads = make_gradients(params);
    Rng rng(spec.shuffle_seed);

    std::vector<std::size_t> order(transfer.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(spec.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(spec.batch_size));
            grads.zero();
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                const auto trace =
                    forward_trace(params, transfer.features[i], true, &rng);
                const auto g = soft_loss_grad(trace.logits, targets[i], spec.temperature);
                backward_accumulate(params, trace, g, grads);
            }
            grads.scale(1.0 / static_cast<double>(end - start));
            adam_step(params, grads, opt);
            debug_check_finite(params);
        }
    }
    return params;
}

ClassifierParams distill_student(ClassifierParams student_init,
                                 std::span<const ClassifierParams* const> teachers,
                                 const TransferSet& transfer, const TrainSpec& spec,
                                 const AdamConfig& adam) {
    if (teachers.empty()) {
        throw InvalidInputError("distill_student: empty teacher set");
    }
    for (const ClassifierParams* t : teachers) {
        if (t->config.num_classes != student_init.config.num_classes) {
            throw InvalidInputError(
                "distill_student: teacher/student class-count mismatch");
        }
    }
    const auto targets = teacher_targets(teachers, transfer, spec.temperature);
    return distill_to_targets(std::move(student_init), targets, transfer, spec, adam);
}

ClassifierParams distill_student(ClassifierParams student_init,
                                 std::span<const ClassifierParams> teachers,
                                 const TransferSet& transfer, const TrainSpec& spec,
                                 const AdamConfig& adam) {
    std::vector<const ClassifierParams*> ptrs;
    ptrs.reserve(teachers.size());
    for (const auto& t : teachers) ptrs.push_back(&t);
    return distill_student(std::move(student_init),
                           std::span<const ClassifierParams* const>(ptrs), transfer,
                           spec, adam);
}

TransferSet synth_transfer_set(const SynthConfig& config, std::uint64_t seed,
                               int size) {
    if (size < 1) {
        throw InvalidInputError("synth_transfer_set: size must be >= 1");
    }
    TransferSet ts;
    ts.features.reserve(static_cast<std::size_t>(size));
    Rng rng(mix_seed({seed, 0x7472616eULL}));
    for (int i = 0; i < size; ++i) {
        const int c = static_cast<int>(rng.uniform_int(0, config.classes - 1));
        const double pos = rng.uniform(0.0, static_cast<double>(config.drift_period));
        auto centroid = synth_centroid_at_phase(config, seed, c, pos);
        for (double& x : centroid) x += config.noise * rng.normal();
        ts.features.push_back(std::move(centroid));
    }
    return ts;
}

} // namespace rkd
