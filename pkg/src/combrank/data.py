"""Experiment data: CSV ingestion, validation and the one-time tie-breaking shuffle."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nulldist import DesignSpec, substream


class DataValidationError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentData:
    """Units in post-shuffle order; ties between outcomes are broken by this order."""

    unit_id: tuple[str, ...]
    z: np.ndarray
    y: np.ndarray
    stratum: np.ndarray | None = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.int8)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)
        if not (len(self.unit_id) == z.size == y.size):
            raise DataValidationError("columns have different lengths")
        if self.stratum is not None:
            object.__setattr__(self, "stratum", np.asarray(self.stratum, dtype=str))
            if self.stratum.size != z.size:
                raise DataValidationError("columns have different lengths")

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def n1(self) -> int:
        return int(self.z.sum())

    @property
    def stratified(self) -> bool:
        return self.stratum is not None

    def stratum_counts(self) -> dict[str, tuple[int, int]]:
        """``label -> (n_s, n_s1)``; a CRE reports one pseudo-stratum ``""``."""
        labels = self.stratum if self.stratified else np.full(self.n, "", dtype=str)
        return {str(lab): (int((labels == lab).sum()), int(self.z[labels == lab].sum()))
                for lab in np.unique(labels)}

    def design(self) -> DesignSpec:
        return DesignSpec(tuple(self.stratum_counts().values()))

    def shuffled(self, seed: int) -> "ExperimentData":
        perm = substream(seed, "tie-shuffle").permutation(self.n)
        return ExperimentData(
            tuple(self.unit_id[i] for i in perm),
            self.z[perm],
            self.y[perm],
            None if self.stratum is None else self.stratum[perm],
        )


def _parse_row(lineno: int, row: dict, has_stratum: bool):
    uid = (row.get("unit_id") or "").strip()
    if not uid:
        raise DataValidationError(f"row {lineno}: missing unit_id")
    zs = (row.get("z") or "").strip()
    if zs not in ("0", "1"):
        raise DataValidationError(f"row {lineno} (unit {uid}): z must be 0 or 1, got {zs!r}")
    try:
        y = float(row.get("y"))
    except (TypeError, ValueError):
        raise DataValidationError(f"row {lineno} (unit {uid}): y is not numeric") from None
    if not math.isfinite(y):
        raise DataValidationError(f"row {lineno} (unit {uid}): y must be finite")
    stratum = (row.get("stratum") or "").strip() if has_stratum else None
    if has_stratum and not stratum:
        raise DataValidationError(f"row {lineno} (unit {uid}): missing stratum")
    return uid, int(zs), y, stratum


def ingest(path, seed: int | None = 0) -> ExperimentData:
    """Read ``unit_id,z,y[,stratum]`` from CSV and apply the tie-breaking shuffle.

    With ``seed=None`` the file order is kept.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        fields = [f.strip() for f in (reader.fieldnames or [])]
        if fields[:3] != ["unit_id", "z", "y"] or fields[3:] not in ([], ["stratum"]):
            raise DataValidationError("header must be unit_id,z,y[,stratum]")
        reader.fieldnames = fields
        has_stratum = len(fields) == 4
        rows = [_parse_row(i, r, has_stratum) for i, r in enumerate(reader, start=2)]
    if not rows:
        raise DataValidationError("no data rows")
    ids, z, y, st = zip(*rows)
    if len(set(ids)) != len(ids):
        raise DataValidationError("unit_id values must be unique")
    data = ExperimentData(tuple(ids), np.array(z), np.array(y), np.array(st) if has_stratum else None)
    if data.n1 == 0 or data.n1 == data.n:
        raise DataValidationError("need at least one treated and one control unit")
    return data if seed is None else data.shuffled(seed)
