#include "avloc/dataset.hpp"

#include "avloc/parallel.hpp"

namespace avloc {

std::vector<Example> prepare_examples(const std::vector<corpus::CorpusInstance>& instances,
                                      const dsp::LogMelConfig& lms_cfg, std::size_t threads) {
  std::vector<Example> out(instances.size());
  parallel_for(instances.size(), threads, [&](std::size_t i) {
    const auto& inst = instances[i];
    out[i].id = inst.instance_id;
    out[i].image = inst.image;
    out[i].lms = dsp::log_mel_spectrogram(inst.waveform, lms_cfg);
    out[i].sounding_boxes = inst.sounding_boxes();
    out[i].sounding_classes = inst.sounding_classes();
  });
  return out;
}

}  // namespace avloc
