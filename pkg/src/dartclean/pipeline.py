"""End-to-end cleaning: preprocess -> detect -> refine -> postprocess.

Ties the stage modules together for the CLI and the benchmark suite.  The
reported spike mask is the hybrid-score detection (reconstruction error
blended with rolling-median deviation); the reported step mask is the
post-refinement validated set that actually drove baseline realignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import detector, postprocess, refiner
from .preprocess import NormStats, fill_gaps, make_windows, zscore_normalize
from .series_io import CleanedOutput, RawSeries


@dataclass
class CleanResult:
    output: CleanedOutput
    spike_mask: np.ndarray
    step_mask: np.ndarray           # validated step locations
    segments: list
    refine_log: list
    normalized_input: np.ndarray
    normalized_cleaned: np.ndarray
    latent_mu: np.ndarray           # per-window latent means of the input
    window_origins: np.ndarray
    step_warnings: list = field(default_factory=list)
    refine_history: list = field(default_factory=list)   # (series, gate) per iteration


def detect_anomalies(model, x_norm: np.ndarray, config: detector.DetectConfig):
    """Initial detection pass; returns (masks, hybrid score, per-sample RE)."""
    batch = make_windows(x_norm, w=model.config.window, s=1)
    recon = refiner.windows_to_series(model.reconstruct(batch.windows),
                                      batch.origins, len(x_norm))
    re = detector.reconstruction_error(x_norm, recon)
    stat_dev = detector.spike_deviation(x_norm, config)
    score, _, hybrid_idx = detector.hybrid_score(re, stat_dev,
                                                 config.hybrid_alpha, config.kappa)
    spike_mask = np.zeros(len(x_norm), dtype=bool)
    spike_mask[hybrid_idx] = True
    step_mask, _ = detector.detect_steps(x_norm, config)
    masks = detector.build_masks(spike_mask, step_mask, config.merge_gap)
    return masks, score, re


def clean_series(model, stats: NormStats, raw: RawSeries,
                 detect_config: detector.DetectConfig | None = None,
                 refine_config: refiner.RefineConfig | None = None,
                 smooth_config: postprocess.SmoothConfig | None = None,
                 realign: bool = True) -> CleanResult:
    detect_config = detect_config or detector.DetectConfig()
    refine_config = refine_config or refiner.RefineConfig()
    smooth_config = smooth_config or postprocess.SmoothConfig()

    filled = fill_gaps(raw)
    norm = zscore_normalize(filled, stats)
    x_norm = norm.values

    masks, _, _ = detect_anomalies(model, x_norm, detect_config)
    result = refiner.refine(model, x_norm, masks, detect_config, refine_config)

    validated, warned = postprocess.validate_steps(
        result.series, result.step_mask, masks.spike,
        w_l=detect_config.w_l, tau_l=detect_config.tau_l, w_s=detect_config.w_s,
    )
    series = result.series
    if realign:
        series = postprocess.realign_steps(series, validated, w_l=detect_config.w_l)
    series = postprocess.gaussian_smooth(series, smooth_config)
    cleaned = postprocess.denormalize(series, stats)

    # latent means of the original normalized input, for projection/export
    batch = make_windows(x_norm, w=model.config.window, s=1)
    latent, _ = model.encode(batch.windows, train=False)

    anomaly = detector.build_masks(masks.spike, validated, detect_config.merge_gap)
    output = CleanedOutput(
        timestamps=raw.timestamps,
        raw=filled.values,
        cleaned=cleaned,
        spike=masks.spike.astype(int),
        step=validated.astype(int),
    )
    return CleanResult(
        output=output,
        spike_mask=masks.spike,
        step_mask=validated,
        segments=anomaly.segments,
        refine_log=result.log,
        normalized_input=x_norm,
        normalized_cleaned=series,
        latent_mu=latent.mu,
        window_origins=batch.origins,
        step_warnings=warned,
        refine_history=result.history,
    )


def label_windows(origins: np.ndarray, window: int, segments) -> np.ndarray:
    """1 where a window overlaps any anomaly segment, else 0."""
    labels = np.zeros(len(origins), dtype=int)
    for _, start, end in segments:
        overlap = (origins <= end) & (origins + window - 1 >= start)
        labels[overlap] = 1
    return labels
