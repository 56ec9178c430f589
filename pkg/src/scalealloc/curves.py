"""Learning-curve data model shared by every other module.

A learning curve is a (compute, loss) trajectory for one model. Each point
carries its provenance so that surrogate-predicted tails can sit next to the
trained prefix of the same curve.
"""
from __future__ import annotations

import csv
import enum
import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple

import numpy as np

HEADER = ["model_id", "n_params", "compute_flops", "loss", "provenance"]


class Provenance(str, enum.Enum):
    TRAINED = "trained"
    PREDICTED = "predicted"


@dataclass(frozen=True)
class ModelSpec:
    id: str
    n_params: int
    tokens_per_step: int = 1

    def __post_init__(self):
        if int(self.n_params) < 1:
            raise ValueError(f"n_params must be >= 1, got {self.n_params}")
        if int(self.tokens_per_step) < 1:
            raise ValueError(f"tokens_per_step must be >= 1, got {self.tokens_per_step}")
        object.__setattr__(self, "n_params", int(self.n_params))
        object.__setattr__(self, "tokens_per_step", int(self.tokens_per_step))

    @property
    def step_cost(self) -> int:
        """FLOPs of one optimizer step under C = 6ND."""
        return 6 * self.n_params * self.tokens_per_step


class CurvePoint(NamedTuple):
    compute: float
    loss: float
    provenance: Provenance


@dataclass(frozen=True, eq=False)
class LearningCurve:
    """Ordered (compute, loss) points of one model.

    ``predicted`` flags points produced by a surrogate; everything else was
    trained. Compute must be strictly increasing.
    """

    model: ModelSpec
    compute: np.ndarray
    loss: np.ndarray
    predicted: np.ndarray = None

    def __post_init__(self):
        compute = np.asarray(self.compute, dtype=float).reshape(-1)
        loss = np.asarray(self.loss, dtype=float).reshape(-1)
        if self.predicted is None:
            predicted = np.zeros(compute.shape, dtype=bool)
        else:
            predicted = np.asarray(self.predicted, dtype=bool).reshape(-1)
        if not (compute.shape == loss.shape == predicted.shape):
            raise ValueError("compute, loss and provenance must have equal length")
        if compute.size:
            if not (np.all(np.isfinite(compute)) and np.all(np.isfinite(loss))):
                raise ValueError(f"curve {self.model.id}: non-finite compute or loss")
            if np.any(compute <= 0) or np.any(loss <= 0):
                raise ValueError(f"curve {self.model.id}: compute and loss must be > 0")
            if np.any(np.diff(compute) <= 0):
                raise ValueError(f"curve {self.model.id}: compute must be strictly increasing")
        for name, arr in (("compute", compute), ("loss", loss), ("predicted", predicted)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.compute.size

    def __iter__(self) -> Iterator[CurvePoint]:
        for c, l, p in zip(self.compute, self.loss, self.predicted):
            yield CurvePoint(float(c), float(l), Provenance.PREDICTED if p else Provenance.TRAINED)

    def __eq__(self, other):
        if not isinstance(other, LearningCurve):
            return NotImplemented
        return (
            self.model == other.model
            and np.array_equal(self.compute, other.compute)
            and np.array_equal(self.loss, other.loss)
            and np.array_equal(self.predicted, other.predicted)
        )

    @classmethod
    def from_points(cls, model: ModelSpec, points: Iterable[CurvePoint]) -> LearningCurve:
        pts = list(points)
        return cls(
            model,
            [p.compute for p in pts],
            [p.loss for p in pts],
            [Provenance(p.provenance) is Provenance.PREDICTED for p in pts],
        )

    @property
    def trained(self) -> LearningCurve:
        """The curve restricted to trained points."""
        keep = ~self.predicted
        return LearningCurve(self.model, self.compute[keep], self.loss[keep], self.predicted[keep])

    @property
    def max_compute(self) -> float:
        """Largest trained compute (0 for a curve with no trained points)."""
        c = self.compute[~self.predicted]
        return float(c[-1]) if c.size else 0.0

    def min_loss(self, include_predicted: bool = False) -> float:
        l = self.loss if include_predicted else self.loss[~self.predicted]
        if l.size == 0:
            raise ValueError(f"curve {self.model.id} has no points to take a minimum over")
        return float(l.min())

    def with_tail(self, compute, loss) -> LearningCurve:
        """Append predicted points beyond the last trained compute."""
        base = self.trained
        compute = np.asarray(compute, dtype=float)
        loss = np.asarray(loss, dtype=float)
        keep = compute > base.max_compute
        # a degenerate tail (start == end) may repeat compute values
        compute, first = np.unique(compute[keep], return_index=True)
        loss = loss[keep][first]
        return LearningCurve(
            self.model,
            np.concatenate([base.compute, compute]),
            np.concatenate([base.loss, loss]),
            np.concatenate([base.predicted, np.ones(compute.size, dtype=bool)]),
        )


@dataclass(frozen=True)
class CurveSet:
    """Learning curves keyed by model id."""

    curves: Mapping[str, LearningCurve] = field(default_factory=dict)

    def __post_init__(self):
        items = self.curves.values() if isinstance(self.curves, Mapping) else self.curves
        by_id: dict[str, LearningCurve] = {}
        for c in items:
            if c.model.id in by_id:
                raise ValueError(f"duplicate model id {c.model.id!r}")
            by_id[c.model.id] = c
        object.__setattr__(self, "curves", dict(sorted(by_id.items())))

    @classmethod
    def of(cls, curves: Iterable[LearningCurve]) -> CurveSet:
        return cls(list(curves))

    def __len__(self):
        return len(self.curves)

    def __iter__(self) -> Iterator[LearningCurve]:
        return iter(self.curves.values())

    def __getitem__(self, model_id: str) -> LearningCurve:
        return self.curves[model_id]

    def __contains__(self, model_id) -> bool:
        return model_id in self.curves

    @property
    def models(self) -> list[ModelSpec]:
        return [c.model for c in self.curves.values()]

    def subset(self, model_ids: Iterable[str]) -> CurveSet:
        return CurveSet([self.curves[m] for m in model_ids])

    def replace(self, curve: LearningCurve) -> CurveSet:
        new = dict(self.curves)
        new[curve.model.id] = curve
        return CurveSet(list(new.values()))

    def trained_only(self) -> CurveSet:
        return CurveSet([c.trained for c in self])


def total_compute(curves: CurveSet) -> float:
    """Sum over curves of the largest trained compute of each curve."""
    return float(sum(c.max_compute for c in curves))


def _rank_key(model: ModelSpec, loss: float):
    return (loss, model.n_params, model.id)


def min_loss(curves: CurveSet) -> tuple[str, float]:
    """Model id and value of the lowest trained loss in the set.

    Ties go to the smaller model, then to the lexicographically first id.
    """
    if len(curves) == 0:
        raise ValueError("empty curve set")
    best = None
    for c in curves:
        key = _rank_key(c.model, c.min_loss())
        if best is None or key < best:
            best = key
            winner = c.model.id
    return winner, best[0]


def write_curves(curves: CurveSet, path) -> None:
    """Write a curve set as CSV, one row per point.

    The ``tokens_per_step`` column is appended only if some model uses a value
    other than 1; readers accept either layout.
    """
    extra = any(m.tokens_per_step != 1 for m in curves.models)
    header = HEADER + (["tokens_per_step"] if extra else [])
    rows = []
    for c in curves:
        for p in c:
            row = [c.model.id, str(c.model.n_params), repr(p.compute), repr(p.loss), p.provenance.value]
            if extra:
                row.append(str(c.model.tokens_per_step))
            rows.append(row)
    rows.sort(key=lambda r: (r[0], float(r[2])))
    if isinstance(path, io.TextIOBase):
        _write_rows(path, header, rows)
        return
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        _write_rows(fh, header, rows)


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def read_curves(path) -> CurveSet:
    if isinstance(path, io.TextIOBase):
        return _read_rows(path)
    with open(path, newline="") as fh:
        return _read_rows(fh)


def _read_rows(fh) -> CurveSet:
    reader = csv.DictReader(fh)
    missing = set(HEADER) - set(reader.fieldnames or [])
    if missing:
        raise ValueError(f"curve file is missing columns: {sorted(missing)}")
    points: dict[str, list] = {}
    specs: dict[str, ModelSpec] = {}
    for row in reader:
        mid = row["model_id"]
        spec = ModelSpec(mid, int(row["n_params"]), int(row.get("tokens_per_step") or 1))
        if specs.setdefault(mid, spec) != spec:
            raise ValueError(f"inconsistent model metadata for {mid!r}")
        points.setdefault(mid, []).append(
            CurvePoint(float(row["compute_flops"]), float(row["loss"]), Provenance(row["provenance"].strip().lower()))
        )
    curves = []
    for mid, pts in points.items():
        pts.sort(key=lambda p: p.compute)
        curves.append(LearningCurve.from_points(specs[mid], pts))
    return CurveSet(curves)
