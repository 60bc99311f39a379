"""Dataset ingestion, design definition, and treatment assignment."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import ColumnError


class CutoffSide(Enum):
    """A side of the cutoff; the rule is closed on the at-or-above side."""

    BELOW = "below"
    AT_OR_ABOVE = "at_or_above"


class Compliance(Enum):
    SHARP = "sharp"
    FUZZY = "fuzzy"


@dataclass(frozen=True)
class RDDesign:
    """Cutoff, direction of the assignment rule, and compliance regime.

    ``treated_side=BELOW`` is the sign-flip relabeling of the canonical
    at-or-above rule: a unit is assigned to treatment iff its score is
    strictly below the cutoff.
    """

    cutoff: float
    treated_side: CutoffSide = CutoffSide.AT_OR_ABOVE
    compliance: Compliance = Compliance.SHARP


@dataclass(frozen=True)
class RDDataset:
    """Immutable column store for one analysis sample.

    All arrays share length ``n``; rows with missing score or outcome (or
    missing received treatment, when that column is mapped) are dropped at
    ingestion and counted in ``n_dropped``. Covariate columns may contain
    NaN; balance tests exclude those rows per covariate.
    """

    score: np.ndarray
    outcome: np.ndarray
    received: np.ndarray | None = None
    covariates: dict[str, np.ndarray] = field(default_factory=dict)
    n_dropped: int = 0

    def __post_init__(self):
        score = np.ascontiguousarray(np.asarray(self.score, dtype=float))
        outcome = np.ascontiguousarray(np.asarray(self.outcome, dtype=float))
        object.__setattr__(self, "score", score)
        object.__setattr__(self, "outcome", outcome)
        n = score.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one row")
        if outcome.shape[0] != n:
            raise ValueError("score and outcome lengths differ")
        if not np.all(np.isfinite(score)):
            raise ValueError("score contains non-finite values")
        if not np.all(np.isfinite(outcome)):
            raise ValueError("outcome contains non-finite values")
        if self.received is not None:
            received = np.ascontiguousarray(np.asarray(self.received, dtype=float))
            if received.shape[0] != n:
                raise ValueError("received length differs from score")
            if not np.all((received == 0.0) | (received == 1.0)):
                raise ValueError("received must contain only 0 or 1")
            received.setflags(write=False)
            object.__setattr__(self, "received", received)
        covs = {}
        for name, col in self.covariates.items():
            arr = np.ascontiguousarray(np.asarray(col, dtype=float))
            if arr.shape[0] != n:
                raise ValueError(f"covariate {name!r} length differs from score")
            arr.setflags(write=False)
            covs[name] = arr
        object.__setattr__(self, "covariates", covs)
        score.setflags(write=False)
        outcome.setflags(write=False)

    @property
    def row_count(self) -> int:
        return self.score.shape[0]

    def column(self, name: str) -> np.ndarray:
        """Look up an analysis column by role name or covariate name."""
        if name == "score":
            return self.score
        if name == "outcome":
            return self.outcome
        if name == "received":
            if self.received is None:
                raise KeyError("dataset has no received-treatment column")
            return self.received
        if name in self.covariates:
            return self.covariates[name]
        raise KeyError(f"unknown column {name!r}")

    def subset(self, mask: np.ndarray) -> "RDDataset":
        """Row-filtered copy; ``n_dropped`` carries over unchanged."""
        return RDDataset(
            score=self.score[mask],
            outcome=self.outcome[mask],
            received=None if self.received is None else self.received[mask],
            covariates={k: v[mask] for k, v in self.covariates.items()},
            n_dropped=self.n_dropped,
        )

    def to_frame(self) -> pd.DataFrame:
        """Materialise as a DataFrame (score, outcome, received, covariates)."""
        data = {"score": self.score, "outcome": self.outcome}
        if self.received is not None:
            data["received"] = self.received
        for name, col in self.covariates.items():
            data[name] = col
        return pd.DataFrame(data)


@dataclass(frozen=True)
class ScoreProfile:
    """Support summary of the score: distinct values and side counts."""

    distinct_values: np.ndarray
    K: int
    K_minus: int
    K_plus: int
    max_multiplicity: int
    row_count: int


def _read_header(path: Path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            return next(reader)
        except StopIteration:
            raise ColumnError(f"{path}: file is empty, header row required")


def _numeric(frame: pd.DataFrame, column: str) -> np.ndarray:
    raw = frame[column]
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna() & raw.notna() & (raw.astype(str).str.strip() != "")
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise ColumnError(
            f"column {column!r}: non-numeric value {raw.iloc[row]!r} at data row {row}"
        )
    return values.to_numpy(dtype=float)


def load_csv(
    path: str | Path,
    score: str,
    outcome: str,
    received: str | None = None,
    covariates: Sequence[str] = (),
) -> RDDataset:
    """Load a header-row CSV (UTF-8, decimal point) into an :class:`RDDataset`.

    Rows missing the score, outcome, or (when mapped) received column are
    dropped and counted; rows missing only a covariate are retained with
    NaN in that covariate. Non-numeric cells in mapped columns raise
    :class:`~rdlab.errors.ColumnError` with the offending 0-based data row.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    header = _read_header(path)
    requested = [score, outcome] + ([received] if received else []) + list(covariates)
    if len(set(requested)) != len(requested):
        raise ColumnError(f"column bindings repeat a name: {requested}")
    for name in requested:
        found = header.count(name)
        if found == 0:
            raise ColumnError(f"column {name!r} not found in {path}")
        if found > 1:
            raise ColumnError(f"column {name!r} appears {found} times in {path}")
    # round_trip parsing keeps ingestion bit-exact against repr output.
    frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    x = _numeric(frame, score)
    y = _numeric(frame, outcome)
    keep = np.isfinite(x) & np.isfinite(y)
    d = None
    if received is not None:
        d = _numeric(frame, received)
        keep &= np.isfinite(d)
    covs = {name: _numeric(frame, name) for name in covariates}
    n_dropped = int((~keep).sum())
    return RDDataset(
        score=x[keep],
        outcome=y[keep],
        received=None if d is None else d[keep],
        covariates={name: col[keep] for name, col in covs.items()},
        n_dropped=n_dropped,
    )


def derive_assignment(data: RDDataset, design: RDDesign) -> np.ndarray:
    """Treatment assignment per row: 1 iff the score lies on the treated side.

    Scores exactly at the cutoff belong to the at-or-above group, so they
    are treated under ``AT_OR_ABOVE`` and control under ``BELOW``.
    """
    at_or_above = data.score >= design.cutoff
    if design.treated_side is CutoffSide.AT_OR_ABOVE:
        return at_or_above.astype(np.int8)
    return (~at_or_above).astype(np.int8)


def score_profile(data: RDDataset, design: RDDesign) -> ScoreProfile:
    """Distinct score values, side counts, and the largest mass point."""
    values, counts = np.unique(data.score, return_counts=True)
    k_minus = int(np.sum(values < design.cutoff))
    return ScoreProfile(
        distinct_values=values,
        K=int(values.shape[0]),
        K_minus=k_minus,
        K_plus=int(values.shape[0] - k_minus),
        max_multiplicity=int(counts.max()),
        row_count=data.row_count,
    )
