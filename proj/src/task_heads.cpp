#include "pagmil/task_heads.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pagmil/rng.hpp"

namespace pagmil {

int HeadRegistry::new_head(int classes, int feature_dim, uint64_t init_seed, int task_id) {
    if (classes < 2) throw std::invalid_argument("new_head: class count must be >= 2");
    if (active_ >= 0)
        throw std::logic_error("new_head: head " + std::to_string(active_) +
                               " is still unfrozen; freeze it first");
    Head h;
    h.task_id = task_id;
    h.W = Mat(classes, feature_dim);
    h.b.assign(classes, 0.0);
    double bound = 1.0 / std::sqrt(double(feature_dim));
    Rng rng(init_seed);
    for (double& w : h.W.a) w = rng.uniform(-bound, bound);
    for (double& b : h.b) b = rng.uniform(-bound, bound);
    heads_.push_back(std::move(h));
    active_ = int(heads_.size()) - 1;
    return active_;
}

void HeadRegistry::freeze_active() {
    if (active_ < 0) throw std::logic_error("freeze_active: no active head");
    heads_[active_].frozen = true;
    active_ = -1;
}

const Head& HeadRegistry::head(int head_id) const {
    if (head_id < 0 || head_id >= int(heads_.size()))
        throw std::invalid_argument("unknown head id " + std::to_string(head_id));
    return heads_[head_id];
}

Head& HeadRegistry::active() {
    if (active_ < 0) throw std::logic_error("no active head");
    return heads_[active_];
}

HeadRegistry HeadRegistry::restore(std::vector<Head> heads, int active_id) {
    for (size_t i = 0; i < heads.size(); ++i)
        if (!heads[i].frozen && int(i) != active_id)
            throw std::logic_error("HeadRegistry::restore: unfrozen head is not the active one");
    HeadRegistry r;
    r.heads_ = std::move(heads);
    r.active_ = active_id;
    return r;
}

Vec predict(const SlideEmbedding& m, const Head& head) {
    Vec logits = matvec(head.W, m.m);
    for (int c = 0; c < head.classes(); ++c) logits[c] += head.b[c];
    return logits;
}

} // namespace pagmil
