#include "rkd/engine.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <thread>

#include <nlohmann/json.hpp>

#include "rkd/error.hpp"

namespace rkd {

namespace {

// role tags for deriving independent rng streams from the master seed
constexpr std::uint64_t kTagTeacherInit = 0x74656163ULL;
constexpr std::uint64_t kTagTeacherShuffle = 0x74736866ULL;
constexpr std::uint64_t kTagStudentInit = 0x73747564ULL;
constexpr std::uint64_t kTagStudentShuffle = 0x73736866ULL;

void check_rkd_config(const RKDConfig& cfg) {
    if (cfg.ensemble_size < 1) {
        throw InvalidInputError("rkd config: ensemble_size must be >= 1");
    }
    if (cfg.strategy.total_students() != cfg.ensemble_size) {
        throw InvalidInputError("rkd config: strategy covers " +
                                std::to_string(cfg.strategy.total_students()) +
                                " students but ensemble_size is " +
                                std::to_string(cfg.ensemble_size));
    }
    if (cfg.pretrain_spec.temperature != 1.0) {
        throw InvalidInputError("rkd config: pretrain temperature must be 1");
    }
}

} // namespace

EnsembleState init_first_season(const RKDConfig& cfg, const SeasonDataset& d1) {
    check_rkd_config(cfg);
    if (d1.samples.empty()) {
        throw InvalidInputError("init_first_season: empty first season");
    }
    ClassifierConfig cc = cfg.classifier;
    cc.init_seed = mix_seed({cfg.master_seed, 1, kTagTeacherInit});
    TrainSpec spec = cfg.pretrain_spec;
    spec.shuffle_seed = mix_seed({cfg.master_seed, 1, kTagTeacherShuffle});

    EnsembleState state;
    state.season_index = 1;
    state.members.push_back(pretrain(cc, d1, spec, cfg.adam));
    state.provenance.push_back(MemberProvenance{{}, "pretrain"});
    return state;
}

EnsembleState season_step(EnsembleState prev, const SeasonDataset& dt,
                          const TransferSet& transfer, const RKDConfig& cfg,
                          Rng& rng) {
    check_rkd_config(cfg);
    const int t = prev.season_index + 1;
    if (prev.members.empty()) {
        throw InvalidInputError("season_step: previous ensemble is empty");
    }

    // (1) pretrain the current teacher c_0^t on this season's labeled data
    ClassifierConfig teacher_cc = cfg.classifier;
    teacher_cc.init_seed =
        mix_seed({cfg.master_seed, static_cast<std::uint64_t>(t), kTagTeacherInit});
    TrainSpec pre_spec = cfg.pretrain_spec;
    pre_spec.shuffle_seed =
        mix_seed({cfg.master_seed, static_cast<std::uint64_t>(t), kTagTeacherShuffle});
    std::optional<ClassifierParams> current =
        pretrain(teacher_cc, dt, pre_spec, cfg.adam);

    // (2) teacher-student assignment
    const int s = static_cast<int>(prev.members.size());
    const TSAMatrix matrix = sample_tsa(cfg.strategy, s, rng);
    const std::string strategy_text = render_strategy(cfg.strategy);

    // (3a) per-student soft targets over the transfer set, while the teachers
    // are still alive
    const int k = cfg.ensemble_size;
    std::vector<std::vector<ProbVector>> targets(static_cast<std::size_t>(k));
    std::vector<MemberProvenance> provenance(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        std::vector<const ClassifierParams*> teachers;
        for (int row : matrix.column_rows(j)) {
            teachers.push_back(row == 0 ? &*current
                                        : &prev.members[static_cast<std::size_t>(row - 1)]);
        }
        targets[static_cast<std::size_t>(j)] =
            teacher_targets(teachers, transfer, cfg.distill_spec.temperature);
        provenance[static_cast<std::size_t>(j)] =
            MemberProvenance{matrix.column_rows(j), strategy_text};
    }

    // (3b) the teachers are no longer needed; release them so the retained
    // parameter-set count never exceeds K+1
    prev.members.clear();
    prev.provenance.clear();
    current.reset();

    // (3c) distill K fresh students toward their targets
    std::vector<ClassifierParams> students(static_cast<std::size_t>(k));
    auto train_student = [&](int j) {
        ClassifierConfig cc = cfg.classifier;
        cc.init_seed = mix_seed({cfg.master_seed, static_cast<std::uint64_t>(t),
                                 static_cast<std::uint64_t>(j), kTagStudentInit});
        TrainSpec spec = cfg.distill_spec;
        spec.shuffle_seed = mix_seed({cfg.master_seed, static_cast<std::uint64_t>(t),
                                      static_cast<std::uint64_t>(j), kTagStudentShuffle});
        students[static_cast<std::size_t>(j)] =
            distill_to_targets(init_params(cc), targets[static_cast<std::size_t>(j)],
                               transfer, spec, cfg.adam);
    };

    if (cfg.deterministic || k == 1) {
        for (int j = 0; j < k; ++j) train_student(j);
    } else {
        // per-student rng streams derive from (master_seed, t, j), so the
        // schedule cannot change the result
        std::vector<std::thread> workers;
        workers.reserve(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) workers.emplace_back(train_student, j);
        for (auto& w : workers) w.join();
    }

    EnsembleState next;
    next.season_index = t;
    next.members = std::move(students);
    next.provenance = std::move(provenance);
    return next;
}

void save_ensemble(const EnsembleState& state, const RKDConfig& cfg,
                   const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("save_ensemble: cannot create '" + dir + "': " + ec.message());
    }

    nlohmann::json manifest;
    manifest["season_index"] = state.season_index;
    manifest["strategy"] = render_strategy(cfg.strategy);
    manifest["master_seed"] = cfg.master_seed;
    manifest["members"] = nlohmann::json::array();
    for (std::size_t j = 0; j < state.members.size(); ++j) {
        const std::string file = "member_" + std::to_string(j) + ".rkdc";
        save_checkpoint(state.members[j], dir + "/" + file);
        nlohmann::json m;
        m["file"] = file;
        m["teacher_rows"] = state.provenance[j].teacher_rows;
        m["strategy"] = state.provenance[j].strategy;
        manifest["members"].push_back(m);
    }

    std::ofstream out(dir + "/manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_ensemble: cannot write '" + dir + "/manifest.json'");
    out << manifest.dump(2) << "\n";
}

EnsembleState load_ensemble(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json", std::ios::binary);
    if (!in) throw IoError("load_ensemble: cannot open '" + dir + "/manifest.json'");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("load_ensemble: bad manifest in '" + dir + "': " + e.what());
    }

    EnsembleState state;
    try {
        state.season_index = manifest.at("season_index").get<int>();
        for (const auto& m : manifest.at("members")) {
            state.members.push_back(
                load_checkpoint(dir + "/" + m.at("file").get<std::string>()));
            MemberProvenance prov;
            prov.teacher_rows = m.at("teacher_rows").get<std::vector<int>>();
            prov.strategy = m.at("strategy").get<std::string>();
            state.provenance.push_back(std::move(prov));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("load_ensemble: bad manifest in '" + dir + "': " + e.what());
    }
    return state;
}

} // namespace rkd
