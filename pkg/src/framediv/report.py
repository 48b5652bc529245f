"""Verification reports and their text serialisations.

A :class:`VerificationReport` holds one residual per sample for a single
identity.  Reports are written as one JSON object per sample (``.jsonl``)
plus one aggregate CSV line per report.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

CSV_FIELDS = (
    "suite",
    "fixture",
    "identity",
    "n_samples",
    "max_residual",
    "tolerance",
    "pass",
    "expected",
    "ok",
    "seed",
)


@dataclass
class VerificationReport:
    """Residuals of one identity over a set of samples.

    Parameters
    ----------
    identity : str
        Name of the checked identity.
    points : ndarray, shape (N, d)
        Sample coordinates (or any per-sample descriptor, e.g. a spectrum).
    residuals : ndarray, shape (N,)
        Non-negative residuals; ``nan`` counts as a failure.
    tolerance : float
        The identity passes iff every residual is ``<= tolerance``.
    metadata : dict
        Free-form context (metric name, frame rule, step, ...).
    expect_pass : bool
        Whether passing is the expected outcome.  Counterexample fixtures set
        this to False; :attr:`ok` compares the verdict with the expectation.
    """

    identity: str
    points: np.ndarray
    residuals: np.ndarray
    tolerance: float
    metadata: dict = field(default_factory=dict)
    expect_pass: bool = True

    def __post_init__(self) -> None:
        self.residuals = np.atleast_1d(np.asarray(self.residuals, dtype=float))
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None] if pts.shape[0] == self.residuals.shape[0] else pts[None, :]
        self.points = pts
        if self.points.shape[0] != self.residuals.shape[0]:
            raise ValueError("points and residuals must have the same length")

    @property
    def n_samples(self) -> int:
        return int(self.residuals.shape[0])

    @property
    def max_residual(self) -> float:
        if self.n_samples == 0:
            return 0.0
        if np.any(np.isnan(self.residuals)):
            return math.nan
        return float(np.max(self.residuals))

    @property
    def passed(self) -> bool:
        m = self.max_residual
        return (not math.isnan(m)) and m <= self.tolerance

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    @property
    def ok(self) -> bool:
        return self.passed == self.expect_pass

    def merge(self, other: "VerificationReport") -> "VerificationReport":
        """Concatenate two reports of the same identity and tolerance."""
        if other.identity != self.identity or other.tolerance != self.tolerance:
            raise ValueError("can only merge reports of the same identity and tolerance")
        return VerificationReport(
            identity=self.identity,
            points=np.concatenate([self.points, other.points]),
            residuals=np.concatenate([self.residuals, other.residuals]),
            tolerance=self.tolerance,
            metadata={**self.metadata, **other.metadata},
            expect_pass=self.expect_pass,
        )

    def rows(self, suite: str, fixture: str, seed: Optional[int]) -> Iterable[dict]:
        """Per-sample records."""
        for i in range(self.n_samples):
            r = float(self.residuals[i])
            yield {
                "suite": suite,
                "fixture": fixture,
                "identity": self.identity,
                "sample": i,
                "point": [float(v) for v in self.points[i]],
                "residual": r,
                "tolerance": self.tolerance,
                "verdict": "pass" if r <= self.tolerance else "fail",
                "seed": seed,
            }

    def summary(self, suite: str, fixture: str, seed: Optional[int]) -> dict:
        return {
            "suite": suite,
            "fixture": fixture,
            "identity": self.identity,
            "n_samples": self.n_samples,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "expected": "pass" if self.expect_pass else "fail",
            "ok": self.ok,
            "seed": seed,
        }


@dataclass
class ReportSet:
    """Several reports produced by one verification (one per identity)."""

    reports: tuple

    def __post_init__(self) -> None:
        self.reports = tuple(self.reports)

    def __iter__(self):
        return iter(self.reports)

    def __len__(self) -> int:
        return len(self.reports)

    def __getitem__(self, key):
        if isinstance(key, str):
            for r in self.reports:
                if r.identity == key:
                    return r
            raise KeyError(key)
        return self.reports[key]

    @property
    def identities(self) -> list:
        return [r.identity for r in self.reports]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.reports)

    def max_residuals(self) -> dict:
        return {r.identity: r.max_residual for r in self.reports}


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


class ReportCollector:
    """Single collector that serialises reports as they arrive.

    Parameters
    ----------
    out_dir : path or None
        Directory receiving ``report.jsonl`` and ``summary.csv``.  With
        ``None`` reports are only kept in memory.
    """

    def __init__(self, out_dir: Optional[Path], suite: str, seed: Optional[int]) -> None:
        self.suite = suite
        self.seed = seed
        self.summaries: list[dict] = []
        self.reports: list[VerificationReport] = []
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self._jsonl = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self._jsonl = open(self.out_dir / "report.jsonl", "w", encoding="utf-8")

    def add(self, fixture: str, report) -> dict:
        """Record a report (or every report of a :class:`ReportSet`); returns the last summary."""
        if isinstance(report, ReportSet):
            last: dict = {}
            for r in report:
                last = self.add(fixture, r)
            return last
        summary = report.summary(self.suite, fixture, self.seed)
        self.summaries.append(summary)
        self.reports.append(report)
        if self._jsonl is not None:
            for row in report.rows(self.suite, fixture, self.seed):
                row["expected"] = summary["expected"]
                self._jsonl.write(json.dumps(_jsonable(row)) + "\n")
        return summary

    @property
    def all_ok(self) -> bool:
        return all(s["ok"] for s in self.summaries)

    def close(self) -> None:
        if self._jsonl is not None:
            self._jsonl.close()
            self._jsonl = None
            with open(self.out_dir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
                writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
                writer.writeheader()
                for s in self.summaries:
                    writer.writerow({k: _jsonable(s[k]) for k in CSV_FIELDS})

    def __enter__(self) -> "ReportCollector":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
