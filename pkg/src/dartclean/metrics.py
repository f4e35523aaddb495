"""Evaluation metrics: event F1, temporal consistency, residual and
rate-of-change summaries, latent PCA projection, and the classical
rolling-median despiking baseline."""

from __future__ import annotations

import warnings

import numpy as np

from . import detector
from .errors import DataError


def match_events(predicted_segments, true_indices, tolerance: int = 2):
    """Greedy one-to-one matching of predicted segments to true events.

    A segment [s, e] matches a true event index i when the interval expanded
    by ``tolerance`` contains i.  Returns (tp, n_pred, n_true, matched_true).
    """
    true_indices = list(true_indices)
    matched = set()
    tp = 0
    for start, end in predicted_segments:
        best = None
        for j, idx in enumerate(true_indices):
            if j in matched:
                continue
            if start - tolerance <= idx <= end + tolerance:
                dist = min(abs(idx - start), abs(idx - end))
                if best is None or dist < best[1]:
                    best = (j, dist)
        if best is not None:
            matched.add(best[0])
            tp += 1
    return tp, len(predicted_segments), len(true_indices), matched


def spike_f1(predicted_mask, true_spike_starts, tolerance: int = 2,
             merge_gap: int = 2) -> dict:
    """Event-level precision/recall/F1 with +-tolerance sample matching."""
    segments = detector.merge_segments(np.asarray(predicted_mask, dtype=bool),
                                       merge_gap)
    tp, n_pred, n_true, _ = match_events(segments, true_spike_starts, tolerance)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_true if n_true else 0.0
    denom = precision + recall
    f1 = 2.0 * precision * recall / denom if denom else 0.0
    return {"precision": precision, "recall": recall, "f1": f1,
            "true_positives": tp, "predicted": n_pred, "actual": n_true}


def temporal_consistency(x, xhat) -> float:
    """Pearson correlation of first differences."""
    x = np.asarray(x, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    if len(x) < 3 or len(x) != len(xhat):
        raise DataError("temporal consistency needs two equal series of length >= 3")
    dx = np.diff(x)
    dxhat = np.diff(xhat)
    if dx.std() <= 0 or dxhat.std() <= 0:
        raise DataError("zero-variance differences: correlation undefined")
    return float(np.corrcoef(dx, dxhat)[0, 1])


def residual_stats(raw, cleaned, bound: float = 0.5, bins: int = 40) -> dict:
    raw = np.asarray(raw, dtype=float)
    cleaned = np.asarray(cleaned, dtype=float)
    if raw.shape != cleaned.shape:
        raise DataError("residual stats need equal-length series")
    residual = raw - cleaned
    nonzero = residual[residual != 0.0]
    counts, edges = np.histogram(residual, bins=bins)
    return {
        "max_abs": float(np.abs(residual).max()) if residual.size else 0.0,
        "fraction_within_bound": float(np.mean(np.abs(residual) <= bound)),
        "nonzero_fraction_within_bound": (
            float(np.mean(np.abs(nonzero) <= bound)) if nonzero.size else 1.0
        ),
        "nonzero_count": int(nonzero.size),
        "bound": bound,
        "histogram_counts": counts.tolist(),
        "histogram_edges": edges.tolist(),
    }


def rate_of_change(series, cadence_seconds: float) -> dict:
    """First differences scaled to meters per minute, with min/max summary."""
    series = np.asarray(series, dtype=float)
    if len(series) < 2:
        raise DataError("rate of change needs at least two samples")
    rate = np.diff(series) / cadence_seconds * 60.0
    return {"rate": rate, "min": float(rate.min()), "max": float(rate.max())}


def project_latent(mu_vectors) -> dict:
    """Project latent means onto their top-two principal components.

    Returns coordinates, the orthonormal component directions, and the top
    eigenvalues.  Rank-deficient covariance falls back to the first two
    coordinate axes with a warning.
    """
    mu = np.asarray(mu_vectors, dtype=float)
    if mu.ndim != 2 or mu.shape[0] < 3:
        raise DataError("latent projection needs at least 3 windows")
    centered = mu - mu.mean(axis=0)
    cov = centered.T @ centered / mu.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    if mu.shape[1] < 2 or eigvals[1] <= 1e-300:
        warnings.warn("rank-deficient latent covariance; using coordinate axes")
        components = np.zeros((mu.shape[1], 2))
        components[0, 0] = 1.0
        if mu.shape[1] > 1:
            components[1, 1] = 1.0
    else:
        components = eigvecs[:, :2]
    coords = centered @ components
    return {"coords": coords, "components": components,
            "eigenvalues": eigvals[:2].tolist()}


def baseline_rolling_median(series, config: detector.DetectConfig | None = None):
    """Classical despiker: replace rolling-median outliers by the median.

    Returns (cleaned series, spike mask).  Steps are left untouched.
    """
    config = config or detector.DetectConfig()
    series = np.asarray(series, dtype=float)
    med, _ = detector.rolling_median_std(series, config.w_s)
    mask = detector.detect_spikes(series, config)
    cleaned = series.copy()
    cleaned[mask] = med[mask]
    return cleaned, mask
