"""Summaries of a Pareto archive: sparsity clusters, 2D projection, distance
to a known front, CSV rows and a markdown table."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..moo import ParetoArchive, pareto_filter


def sparsity_cluster(sr, n_bins=10):
    """Bin label of a sparsity rate, e.g. ``"SR 30-40%"``; ``"SR n/a"`` if unknown."""
    if sr is None or not np.isfinite(sr):
        return "SR n/a"
    width = 100 // n_bins
    lo = min(int(np.floor(sr * n_bins)), n_bins - 1) * width
    return f"SR {lo}-{lo + width}%"


def generational_distance(points, distance):
    """Mean Euclidean distance of ``points`` to a front given by ``distance``."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[0] == 0:
        raise DomainError("generational distance of an empty set is undefined")
    return float(np.mean([distance(p) for p in points]))


@dataclass
class FrontReport:
    preferences: np.ndarray
    objectives: np.ndarray
    metrics: list
    clusters: list
    projected: np.ndarray
    projected_index: np.ndarray
    gd: float | None

    def cluster_table(self):
        """``{label: [entry indices]}`` in order of first appearance by label."""
        table = {}
        for i, label in enumerate(self.clusters):
            table.setdefault(label, []).append(i)
        return dict(sorted(table.items(), key=lambda kv: _label_key(kv[0])))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        m = self.preferences.shape[1]
        w.writerow([f"k{i}" for i in range(m)] + [f"f{i}" for i in range(self.objectives.shape[1])]
                   + ["SR", "CR", "PS", "cluster"])
        for k, f, met, c in zip(self.preferences, self.objectives, self.metrics, self.clusters):
            w.writerow([repr(float(v)) for v in k] + [repr(float(v)) for v in f]
                       + [_fmt(met.get("sr")), _fmt(met.get("cr")), _fmt(met.get("ps")), c])
        return buf.getvalue()

    def to_markdown(self):
        lines = ["# Front report", "", f"Archive entries: {len(self.clusters)}"]
        if self.gd is not None:
            lines.append(f"Generational distance to the known front: {self.gd:.6g}")
        lines += ["", "## Entries grouped by sparsity rate", "",
                  "| cluster | entries | mean objectives |", "|---|---|---|"]
        for label, idx in self.cluster_table().items():
            mean = np.mean(self.objectives[idx], axis=0)
            lines.append(f"| {label} | {len(idx)} | {', '.join(f'{v:.4g}' for v in mean)} |")
        lines += ["", "## Front projected onto the main objectives", "",
                  f"{len(self.projected_index)} of {len(self.clusters)} entries stay nondominated "
                  "after dropping objective 0." if self.objectives.shape[1] > 2 else
                  "Two objectives: no projection needed.", ""]
        return "\n".join(lines)


def _label_key(label):
    digits = label.split()[1].split("-")[0]
    return (0, int(digits)) if digits.isdigit() else (1, 0)


def _fmt(v):
    return "" if v is None else repr(float(v))


def front_report(archive: ParetoArchive, problem=None, n_bins=10):
    """Summarize an archive.

    Entries get a sparsity-rate cluster label from their ``sr`` metric. With
    three or more objectives, objective 0 is dropped and the remaining
    vectors are re-filtered for dominance. When ``problem`` provides a
    ``front_distance`` the generational distance is reported.
    """
    entries = archive.entries
    if not entries:
        raise DomainError("cannot report on an empty archive")
    K = np.array([e.preference for e in entries], dtype=np.float64)
    F = np.array([e.objectives for e in entries], dtype=np.float64)
    metrics = [dict(e.metrics or {}) for e in entries]
    clusters = [sparsity_cluster(m.get("sr"), n_bins) for m in metrics]
    if F.shape[1] > 2:
        main = F[:, 1:]
        proj_idx = pareto_filter(main)
        projected = main[proj_idx]
    else:
        projected, proj_idx = F, np.arange(F.shape[0])
    gd = None
    if problem is not None and getattr(problem, "front_distance", None) is not None:
        gd = generational_distance(F, problem.front_distance)
    return FrontReport(K, F, metrics, clusters, projected, proj_idx, gd)
