#include "pixeldiff/growing.hpp"

#include <cstring>

#include "pixeldiff/architecture.hpp"
#include "pixeldiff/schedule.hpp"

namespace pxd {

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "scratch") return TrainMode::Scratch;
    if (s == "finetune") return TrainMode::Finetune;
    if (s == "frozen") return TrainMode::Frozen;
    if (s == "freeze_unfreeze") return TrainMode::FreezeUnfreeze;
    throw std::invalid_argument("unknown training mode '" + s +
                                "' (scratch|finetune|frozen|freeze_unfreeze)");
}

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::Scratch: return "scratch";
        case TrainMode::Finetune: return "finetune";
        case TrainMode::Frozen: return "frozen";
        case TrainMode::FreezeUnfreeze: return "freeze_unfreeze";
    }
    return "?";
}

std::set<std::string> make_freeze_mask(const ParameterTree& tree, TrainMode mode, int64_t step,
                                       std::optional<int64_t> defrost_step) {
    if (mode == TrainMode::FreezeUnfreeze && !defrost_step)
        throw std::invalid_argument("freeze_unfreeze requires a defrost_step");
    std::set<std::string> frozen;
    bool freeze_now = mode == TrainMode::Frozen ||
                      (mode == TrainMode::FreezeUnfreeze && step < *defrost_step);
    if (!freeze_now) return frozen;
    for (const auto& [name, t] : tree.entries)
        if (group_frozen_in_frozen_mode(ParameterTree::group_of(name))) frozen.insert(name);
    return frozen;
}

ParameterTree transplant(const GrowPlan& plan, const ParameterTree& donor) {
    const ModelConfig& target = plan.target_config;
    if (target.is_shallow())
        throw std::invalid_argument("transplant: target config must be in grown form");
    validate_model_config(target);
    if (plan.mode == TrainMode::FreezeUnfreeze && !plan.defrost_step)
        throw std::invalid_argument("transplant: freeze_unfreeze requires a defrost_step");

    ParameterTree out = build_uvit<Real>(target, plan.seed);

    if (plan.mode != TrainMode::Scratch) {
        std::string want = core_fingerprint(target);
        std::string got = donor.metadata.value("core_fingerprint", "");
        if (got != want)
            throw IncompatibleDonorError("donor core fingerprint " + got +
                                         " does not match target " + want);
        for (auto& [name, t] : out.entries) {
            std::string group = ParameterTree::group_of(name);
            if (group != "text_enc" && group != "core" && group != "time_enc") continue;
            auto it = donor.entries.find(name);
            if (it == donor.entries.end())
                throw CheckpointError("donor checkpoint is missing parameter " + name);
            if (it->second.shape != t.shape)
                throw CheckpointError("donor parameter " + name + " has shape " +
                                      shape_str(it->second.shape) + ", expected " +
                                      shape_str(t.shape));
            std::memcpy(t.data(), it->second.data(), (size_t)t.numel() * sizeof(Real));
        }
        out.metadata["donor_fingerprint"] = donor.metadata.value("config_fingerprint", "");
    }

    out.frozen = make_freeze_mask(out, plan.mode, 0, plan.defrost_step);
    out.metadata["phase"] = "phase2";
    out.metadata["mode"] = to_string(plan.mode);
    if (plan.defrost_step) out.metadata["defrost_step"] = *plan.defrost_step;
    out.metadata["transplant_seed"] = plan.seed;
    // the shift follows the grown target resolution; the donor's is discarded
    out.metadata["schedule_shift"] = shift_for_resolution(target.encdec->target_resolution);
    return out;
}

ParameterTree transplant(const GrowPlan& plan) {
    if (plan.mode == TrainMode::Scratch) {
        ParameterTree none;
        return transplant(plan, none);
    }
    return transplant(plan, load_checkpoint(plan.donor_path));
}

}  // namespace pxd
