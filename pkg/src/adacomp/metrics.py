"""CSV metric emission with a fixed, reproducible column set.

metrics.csv carries one `step` row per sync step and one `epoch` row per
epoch-end evaluation. Per-layer columns are suffixed with the layer name
(conv0, fc1, ...) in model order:

  kind, step, epoch, train_loss, test_error,
  payload_bits_<layer>..., rate_<layer>..., sel_mean_<layer>...,
  sel_max_<layer>..., rg_p95_<layer>...

Step rows leave test_error empty; epoch rows leave payload/rate/selection
empty and snapshot rg_p95. Identical configs and seeds reproduce the file
byte for byte.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from .sim import StepMetrics


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


class MetricsWriter:
    def __init__(self, path, layer_names: list[str]):
        self.layer_names = list(layer_names)
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        header = ["kind", "step", "epoch", "train_loss", "test_error"]
        for group in ("payload_bits", "rate", "sel_mean", "sel_max", "rg_p95"):
            header += [f"{group}_{name}" for name in self.layer_names]
        self._writer.writerow(header)

    def write_step(self, m: StepMetrics) -> None:
        row = ["step", fmt(m.step), fmt(m.epoch), fmt(m.train_loss), ""]
        for group in (m.payload_bits, m.rates, m.sel_mean, m.sel_max, m.rg_p95):
            row += [fmt(v) for v in group]
        self._writer.writerow(row)

    def write_epoch(self, step: int, epoch: int, train_loss: float,
                    test_error: float, rg_p95: list[float]) -> None:
        blank = [""] * len(self.layer_names)
        row = (["epoch", fmt(step), fmt(epoch), fmt(train_loss), fmt(test_error)]
               + blank * 4 + [fmt(v) for v in rg_p95])
        self._writer.writerow(row)

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def magnitude_histogram(values: np.ndarray, num_buckets: int = 64,
                        decades: float = 9.0) -> tuple[np.ndarray, np.ndarray]:
    """Log-spaced magnitude buckets spanning (0, max|values|].

    Returns (edges, counts) with len(edges) == num_buckets + 1; the lowest
    edge is pinned to 0 so zeros and sub-floor values land in bucket 0.
    """
    a = np.abs(np.asarray(values, dtype=np.float64))
    m = float(a.max()) if a.size else 0.0
    if m == 0.0:
        edges = np.zeros(num_buckets + 1)
        edges[1:] = np.geomspace(1e-12, 1.0, num_buckets)
        counts = np.zeros(num_buckets, dtype=np.int64)
        counts[0] = a.size
        return edges, counts
    edges = np.geomspace(m * 10.0 ** -decades, m, num_buckets + 1)
    edges[0] = 0.0
    counts, _ = np.histogram(a, edges)
    return edges, counts


def write_histogram_csv(path, layer_names: list[str], pooled_values: list[np.ndarray]) -> None:
    """One rg-histogram row per (layer, bucket)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "bucket", "lo", "hi", "count"])
        for name, values in zip(layer_names, pooled_values):
            edges, counts = magnitude_histogram(values)
            for i, c in enumerate(counts):
                w.writerow([name, i, fmt(float(edges[i])), fmt(float(edges[i + 1])), int(c)])
