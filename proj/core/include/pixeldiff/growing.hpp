#ifndef PIXELDIFF_GROWING_HPP
#define PIXELDIFF_GROWING_HPP

#include <optional>
#include <set>
#include <string>

#include "pixeldiff/params.hpp"

namespace pxd {

enum class TrainMode { Scratch, Finetune, Frozen, FreezeUnfreeze };

TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode m);

struct IncompatibleDonorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GrowPlan {
    std::string donor_path;  // unused (may be empty) when mode == Scratch
    ModelConfig target_config;
    TrainMode mode = TrainMode::Frozen;
    std::optional<int64_t> defrost_step;
    uint64_t seed = 0;
};

// Parameter paths excluded from updates at the given step. Empty for
// scratch/finetune; {text_enc.*, core.*} for frozen and for freeze_unfreeze
// before the defrost step. time_enc.* is always trainable.
std::set<std::string> make_freeze_mask(const ParameterTree& tree, TrainMode mode, int64_t step,
                                       std::optional<int64_t> defrost_step);

// Grows a donor shallow checkpoint into the target architecture: text_enc,
// core and time_enc values are copied bitwise, everything else is freshly
// initialized from plan.seed. In scratch mode the whole tree is fresh.
ParameterTree transplant(const GrowPlan& plan, const ParameterTree& donor);
ParameterTree transplant(const GrowPlan& plan);  // loads plan.donor_path

}  // namespace pxd

#endif
