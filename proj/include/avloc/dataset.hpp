#pragma once

#include <vector>

#include "avloc/corpus.hpp"
#include "avloc/dsp.hpp"
#include "avloc/tensor.hpp"

namespace avloc {

/// A corpus instance with its audio already turned into a log-mel spectrogram.
struct Example {
  std::size_t id = 0;
  Tensor image;
  dsp::Spectrogram lms;
  std::vector<corpus::BoundingBox> sounding_boxes;
  std::vector<std::size_t> sounding_classes;  // sorted
};

/// A contrastive batch; pointers into a stable Example vector.
using Batch = std::vector<const Example*>;

std::vector<Example> prepare_examples(const std::vector<corpus::CorpusInstance>& instances,
                                      const dsp::LogMelConfig& lms_cfg, std::size_t threads = 1);

}  // namespace avloc
