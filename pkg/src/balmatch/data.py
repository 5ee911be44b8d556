"""Dataset model, CSV ingestion and per-arm summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed input files or inconsistent datasets."""


class Unit(NamedTuple):
    id: str
    z: int
    y: float
    x: tuple


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar, read-only sample of units.

    Row order is the unit index used by every downstream computation.
    """

    ids: tuple
    z: np.ndarray
    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z)
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        n = len(self.ids)
        if z.shape != (n,) or y.shape != (n,) or x.shape[0] != n:
            raise DataError("ids, z, y and x must have the same number of rows")
        if not np.all((z == 0) | (z == 1)):
            raise DataError("z must be binary")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise DataError("outcomes and covariates must be finite")
        ids = tuple(str(i) for i in self.ids)
        if len(set(ids)) != n:
            raise DataError("unit ids must be unique")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "z", _frozen(z.astype(np.int8)))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x))

    @classmethod
    def from_arrays(cls, z, y, x, ids: Sequence | None = None) -> "Dataset":
        z = np.asarray(z)
        if ids is None:
            ids = [str(i + 1) for i in range(len(z))]
        return cls(tuple(ids), z, y, x)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def treated(self) -> np.ndarray:
        return np.flatnonzero(self.z == 1)

    @property
    def control(self) -> np.ndarray:
        return np.flatnonzero(self.z == 0)

    def unit(self, i: int) -> Unit:
        return Unit(self.ids[i], int(self.z[i]), float(self.y[i]), tuple(self.x[i].tolist()))

    def __iter__(self) -> Iterator[Unit]:
        return (self.unit(i) for i in range(self.n))

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.ids == other.ids
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.x, other.x)
        )

    def with_outcomes(self, y) -> "Dataset":
        return Dataset(self.ids, self.z, y, self.x)

    def require_both_arms(self):
        if not (np.any(self.z == 1) and np.any(self.z == 0)):
            raise DataError("matching needs at least one treated and one control unit")


def load_dataset(path) -> Dataset:
    """Read a CSV with header ``id,z,y,x1,...,xd``.

    Errors name the 1-based data row (the header is not counted).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for col in ("id", "z", "y"):
            if col not in header:
                raise DataError(f"{path}: missing column {col!r}")
        xcols = [h for h in header if h not in ("id", "z", "y")]
        if not xcols:
            raise DataError(f"{path}: no covariate columns")
        pos = {h: k for k, h in enumerate(header)}
        ids, zs, ys, xs = [], [], [], []
        seen = set()
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"row {row_no}: expected {len(header)} fields, got {len(row)}")
            uid = row[pos["id"]].strip()
            if uid == "":
                raise DataError(f"row {row_no}: empty id")
            if uid in seen:
                raise DataError(f"row {row_no}: duplicate id {uid!r}")
            seen.add(uid)
            zraw = row[pos["z"]].strip()
            if zraw not in ("0", "1"):
                raise DataError(f"row {row_no}: z must be 0 or 1, got {zraw!r}")
            vals = []
            for col in ["y", *xcols]:
                raw = row[pos[col]].strip()
                try:
                    v = float(raw)
                except ValueError:
                    raise DataError(f"row {row_no}: column {col!r} is not numeric ({raw!r})") from None
                if not math.isfinite(v):
                    raise DataError(f"row {row_no}: column {col!r} is missing or not finite")
                vals.append(v)
            ids.append(uid)
            zs.append(int(zraw))
            ys.append(vals[0])
            xs.append(vals[1:])
    if not ids:
        raise DataError(f"{path}: no data rows")
    return Dataset(tuple(ids), np.array(zs), np.array(ys), np.array(xs, dtype=float))


def write_dataset(ds: Dataset, path) -> None:
    # repr() of a float round-trips exactly
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "z", "y", *[f"x{k + 1}" for k in range(ds.d)]])
        for i in range(ds.n):
            w.writerow([ds.ids[i], int(ds.z[i]), repr(float(ds.y[i])),
                        *[repr(float(v)) for v in ds.x[i]]])


@dataclass(frozen=True)
class Summary:
    n: int
    n_treated: int
    n_control: int
    mean_treated: np.ndarray
    mean_control: np.ndarray
    mean_difference: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "mean_treated": self.mean_treated.tolist(),
            "mean_control": self.mean_control.tolist(),
            "mean_difference": self.mean_difference.tolist(),
        }


def summarize(ds: Dataset) -> Summary:
    t, c = ds.z == 1, ds.z == 0
    nan = np.full(ds.d, np.nan)
    mt = ds.x[t].mean(axis=0) if t.any() else nan
    mc = ds.x[c].mean(axis=0) if c.any() else nan
    return Summary(ds.n, int(t.sum()), int(c.sum()), mt, mc, mt - mc)
