"""Iterative contrastive learning for unsupervised sound localization.

Thin wrappers over the C++ core. Configs are plain dicts with the same keys
as the JSON config files; arrays are float64 numpy arrays.
"""

import csv
import io
import json
import os

import numpy as np

from . import _avloc
from ._avloc import (
    ConfigError,
    ShapeError,
    ciou,
    consensus_map,
    contrastive_loss,
    iterative_loss,
    minmax_normalize,
    relation_matrix,
    success_curve,
    threshold_region,
    upsample_bilinear,
)

__all__ = [
    "ConfigError",
    "ShapeError",
    "ciou",
    "consensus_map",
    "contrastive_loss",
    "evaluate",
    "gen_corpus",
    "gradcheck",
    "iterative_loss",
    "localize",
    "log_mel",
    "minmax_normalize",
    "relation_matrix",
    "success_curve",
    "threshold_region",
    "train",
    "upsample_bilinear",
]


def _dump(config):
    return json.dumps(config) if config else ""


def gen_corpus(out, config=None, seed=0):
    """Write a synthetic corpus to `out`."""
    _avloc.gen_corpus(_dump(config), seed, os.fspath(out))


def train(corpus, out, config=None, variant="full", threads=1, stop_after=0, resume=None,
          evaluate=True):
    """Train one ablation variant; returns the per-epoch metrics as dicts."""
    text = _avloc.train(os.fspath(corpus), os.fspath(out), _dump(config), variant, threads,
                        stop_after, os.fspath(resume) if resume else "", evaluate)
    counts = {"epoch", "contrastive_evals", "iterative_evals"}
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        rows.append({k: int(v) if k in counts else (float(v) if v else None)
                     for k, v in row.items()})
    return rows


def evaluate(corpus, checkpoint, out, export_heatmaps=False, threads=1):
    """Evaluate a checkpoint on the test split; returns the result dict."""
    return json.loads(_avloc.evaluate(os.fspath(corpus), os.fspath(checkpoint), os.fspath(out),
                                      export_heatmaps, threads))


def localize(checkpoint, image, audio, out, audio_json=None, delta_v=None):
    """Heatmap, region patch indices and degenerate flag for one pair."""
    audio = os.fspath(audio)
    sidecar = os.fspath(audio_json) if audio_json else os.path.splitext(audio)[0] + ".json"
    heatmap, region, degenerate = _avloc.localize(os.fspath(checkpoint), os.fspath(image), audio,
                                                  sidecar, os.fspath(out), delta_v)
    return heatmap, [tuple(p) for p in region], degenerate


def gradcheck(seeds=10, seed=0, corrupt=False):
    """Finite-difference check of every loss and encoder gradient."""
    return json.loads(_avloc.gradcheck(seeds, seed, corrupt))


def log_mel(samples, sample_rate, config=None):
    """Log-mel spectrogram (mel_bins x frames) of a mono waveform."""
    return _avloc.log_mel(np.asarray(samples, dtype=np.float64).tolist(), sample_rate,
                          _dump(config))
