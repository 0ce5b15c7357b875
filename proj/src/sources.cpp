#include "delaynet/sources.hpp"

#include "delaynet/errors.hpp"
#include "delaynet/rng.hpp"

namespace delaynet {

Episode to_episode(CueSample sample) {
    Episode ep;
    ep.label = sample.label;
    ep.readout = sample.recall;
    ep.input = std::move(sample.spikes);
    return ep;
}

CueTaskSource::CueTaskSource(CueTaskConfig cfg, std::uint64_t root_seed) : cfg_(cfg), root_(root_seed) {
    cfg_.validate();
}

Episode CueTaskSource::train_episode(std::size_t epoch, std::size_t index) const {
    const auto seed = derive_seed(derive_seed(root_, "task/train", epoch), "sample", index);
    return to_episode(generate_cue_sample(cfg_, seed));
}

Episode CueTaskSource::eval_episode(std::size_t index) const {
    const auto seed = derive_seed(root_, "task/eval", index);
    CueTaskConfig cfg = cfg_;
    if (eval_cues_) cfg.n_cues = *eval_cues_;
    if (eval_wait_ms_) return to_episode(generate_wait_variant(cfg, *eval_wait_ms_, seed));
    return to_episode(generate_cue_sample(cfg, seed));
}

PsMnistSource::PsMnistSource(std::shared_ptr<const PsMnist> train, std::shared_ptr<const PsMnist> test,
                             std::uint64_t root_seed, std::size_t readout_ticks)
    : train_(std::move(train)), test_(std::move(test)), root_(root_seed), readout_ticks_(readout_ticks) {
    if (!train_ || train_->size() == 0) throw InvalidArgument("psmnist source: empty training set");
    if (!test_ || test_->size() == 0) throw InvalidArgument("psmnist source: empty test set");
    if (readout_ticks_ == 0 || readout_ticks_ > train_->sequence_length()) {
        throw InvalidArgument("psmnist source: readout window must fit inside the sequence");
    }
}

Episode PsMnistSource::make(const PsMnist& set, std::size_t i) const {
    Episode ep;
    ep.label = set.label(i);
    const std::size_t len = set.sequence_length();
    ep.readout = {len - readout_ticks_, len};
    ep.input = set.sequence(i);
    return ep;
}

Episode PsMnistSource::train_episode(std::size_t epoch, std::size_t index) const {
    Rng rng(derive_seed(derive_seed(root_, "psmnist/train", epoch), "sample", index));
    return make(*train_, uniform_int(rng, 0, train_->size() - 1));
}

Episode PsMnistSource::eval_episode(std::size_t index) const {
    return make(*test_, index % test_->size());
}

} // namespace delaynet
