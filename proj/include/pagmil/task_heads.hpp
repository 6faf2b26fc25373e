#pragma once

#include <cstdint>
#include <vector>

#include "pagmil/numerics.hpp"

namespace pagmil {

/// Attention-weighted feature sum of one slide.
struct SlideEmbedding {
    Vec m;
};

/// One per-task linear classifier over the slide embedding.
struct Head {
    int task_id = -1;
    Mat W; // classes x d
    Vec b; // classes
    bool frozen = false;

    int classes() const { return W.rows; }
    bool operator==(const Head&) const = default;
};

/// Owns all task heads. At most one head is unfrozen at any time; frozen
/// heads are immutable for the rest of the run.
class HeadRegistry {
public:
    /// Creates a head with uniform +-1/sqrt(d) init and makes it active.
    /// Throws if another head is still unfrozen.
    int new_head(int classes, int feature_dim, uint64_t init_seed, int task_id);

    /// Freezes the active head; afterwards there is no active head.
    void freeze_active();

    const Head& head(int head_id) const;
    Head& active();

    bool has_active() const { return active_ >= 0; }
    int active_id() const { return active_; }
    int size() const { return int(heads_.size()); }
    const std::vector<Head>& all() const { return heads_; }
    std::vector<Head>& all_mutable() { return heads_; }

    bool operator==(const HeadRegistry&) const = default;

    /// Rebuild from persisted state (checkpoint loading only).
    static HeadRegistry restore(std::vector<Head> heads, int active_id);

private:
    std::vector<Head> heads_;
    int active_ = -1;
};

/// logits = W m + b
Vec predict(const SlideEmbedding& m, const Head& head);

} // namespace pagmil
