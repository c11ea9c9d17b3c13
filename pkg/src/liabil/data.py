"""Paired competing-risks records, CSV ingestion and IPCW classification at a horizon."""

from __future__ import annotations

import csv
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

ZYGOSITIES = ("MZ", "DZ")
MODES = ("cap_at_tau", "strict", "naive")
WEIGHT_WARN = 100.0


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class PositivityError(RuntimeError):
    """A usable pair has zero estimated probability of remaining uncensored."""


@dataclass(frozen=True)
class PairRecord:
    pair_id: str
    zygosity: str
    time: tuple[float, float]
    status: tuple[int, int]
    x: tuple[tuple[float, ...], tuple[float, ...]] = ((), ())
    z: tuple[tuple[float, ...], tuple[float, ...]] = ((), ())

    def __post_init__(self):
        if self.zygosity not in ZYGOSITIES:
            raise DataError(f"pair {self.pair_id}: unknown zygosity {self.zygosity!r}")
        for t in self.time:
            if not (math.isfinite(t) and t >= 0):
                raise DataError(f"pair {self.pair_id}: time must be finite and nonnegative, got {t}")
        for s in self.status:
            if s not in (0, 1, 2):
                raise DataError(f"pair {self.pair_id}: status must be 0, 1 or 2, got {s}")
        if len(self.x[0]) != len(self.x[1]) or len(self.z[0]) != len(self.z[1]):
            raise DataError(f"pair {self.pair_id}: covariate dimension differs between members")


@dataclass
class TwinData:
    """Columnar collection of twin pairs.

    Arrays are indexed by pair along the first axis and by member (0, 1)
    along the second.
    """

    pair_id: np.ndarray
    mz: np.ndarray
    time: np.ndarray
    status: np.ndarray
    x: np.ndarray
    z: np.ndarray
    x_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()
    rejected: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.pair_id)
        self.pair_id = np.asarray(self.pair_id, dtype=object)
        self.mz = np.asarray(self.mz, dtype=bool)
        self.time = np.asarray(self.time, dtype=float).reshape(n, 2)
        self.status = np.asarray(self.status, dtype=int).reshape(n, 2)
        self.x = np.asarray(self.x, dtype=float).reshape(n, 2, len(self.x_names))
        self.z = np.asarray(self.z, dtype=float).reshape(n, 2, len(self.z_names))
        if np.any(~np.isfinite(self.time)) or np.any(self.time < 0):
            raise DataError("times must be finite and nonnegative")
        if np.any(~np.isin(self.status, (0, 1, 2))):
            raise DataError("status must be 0, 1 or 2")

    def __len__(self) -> int:
        return len(self.pair_id)

    def __getitem__(self, i: int) -> PairRecord:
        return PairRecord(
            pair_id=str(self.pair_id[i]),
            zygosity="MZ" if self.mz[i] else "DZ",
            time=(float(self.time[i, 0]), float(self.time[i, 1])),
            status=(int(self.status[i, 0]), int(self.status[i, 1])),
            x=(tuple(self.x[i, 0]), tuple(self.x[i, 1])),
            z=(tuple(self.z[i, 0]), tuple(self.z[i, 1])),
        )

    def __iter__(self) -> Iterator[PairRecord]:
        return (self[i] for i in range(len(self)))

    @property
    def zygosity(self) -> np.ndarray:
        return np.where(self.mz, "MZ", "DZ")

    @classmethod
    def from_records(cls, records: Sequence[PairRecord], x_names=(), z_names=()) -> "TwinData":
        records = list(records)
        return cls(
            pair_id=[r.pair_id for r in records],
            mz=[r.zygosity == "MZ" for r in records],
            time=[r.time for r in records],
            status=[r.status for r in records],
            x=[r.x for r in records],
            z=[r.z for r in records],
            x_names=tuple(x_names),
            z_names=tuple(z_names),
        )

    def subset(self, mask) -> "TwinData":
        mask = np.asarray(mask)
        return TwinData(
            self.pair_id[mask], self.mz[mask], self.time[mask], self.status[mask],
            self.x[mask], self.z[mask], self.x_names, self.z_names,
        )

    def x_columns(self, names: Sequence[str]) -> np.ndarray:
        """Outcome covariates restricted to ``names``, shape (n, 2, len(names))."""
        idx = [self._index(self.x_names, nm, "outcome") for nm in names]
        return self.x[:, :, idx]

    def z_columns(self, names: Sequence[str]) -> np.ndarray:
        idx = [self._index(self.z_names, nm, "censoring") for nm in names]
        return self.z[:, :, idx]

    @staticmethod
    def _index(names, nm, what):
        try:
            return names.index(nm)
        except ValueError:
            raise DataError(f"unknown {what} covariate {nm!r}; available: {list(names)}") from None

    def to_csv(self, path, digits: int | None = None) -> None:
        """Write the one-row-per-individual layout read by :func:`load_dataset`."""
        extra = list(OrderedDict.fromkeys(self.x_names + self.z_names))
        fmt = (lambda v: repr(float(v))) if digits is None else (lambda v: f"{float(v):.{digits}g}")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["pair_id", "member", "zygosity", "time", "status", *extra])
            for i in range(len(self)):
                for k in range(2):
                    vals = []
                    for nm in extra:
                        if nm in self.x_names:
                            vals.append(fmt(self.x[i, k, self.x_names.index(nm)]))
                        else:
                            vals.append(fmt(self.z[i, k, self.z_names.index(nm)]))
                    w.writerow([self.pair_id[i], k + 1, "MZ" if self.mz[i] else "DZ",
                                fmt(self.time[i, k]), int(self.status[i, k]), *vals])


@dataclass
class Schema:
    """Column mapping for :func:`load_dataset`.

    ``x_columns``/``z_columns`` of ``None`` mean every column not used by
    the fixed fields.
    """

    pair_id: str = "pair_id"
    member: str = "member"
    zygosity: str = "zygosity"
    time: str = "time"
    status: str = "status"
    x_columns: Sequence[str] | None = None
    z_columns: Sequence[str] | None = None

    @classmethod
    def from_dict(cls, d: dict | None) -> "Schema":
        return cls(**(d or {}))


def load_dataset(path: str | Path, schema: Schema | None = None) -> TwinData:
    """Read a one-row-per-individual CSV into :class:`TwinData`.

    Pairs with a single member are dropped and listed in ``rejected``;
    more than two rows for a pair, bad values and inconsistent zygosity
    raise :class:`DataError`.
    """
    schema = schema or Schema()
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file or missing header")
        header = [h.strip() for h in reader.fieldnames]
        fixed = [schema.pair_id, schema.member, schema.zygosity, schema.time, schema.status]
        missing = [c for c in fixed if c not in header]
        if missing:
            raise DataError(f"{path}: missing required columns {missing}")
        extra = [h for h in header if h not in fixed]
        x_names = list(extra if schema.x_columns is None else schema.x_columns)
        z_names = list(extra if schema.z_columns is None else schema.z_columns)
        for nm in x_names + z_names:
            if nm not in header:
                raise DataError(f"{path}: covariate column {nm!r} not in header")
        pairs: OrderedDict[str, dict] = OrderedDict()
        for lineno, raw in enumerate(reader, start=2):
            row = {k.strip(): (v.strip() if isinstance(v, str) else v) for k, v in raw.items() if k is not None}
            if None in raw or any(row.get(c) is None for c in header):
                raise DataError(f"{path}:{lineno}: wrong number of fields")
            try:
                pid = row[schema.pair_id]
                member = int(row[schema.member])
                zyg = row[schema.zygosity].upper()
                t = float(row[schema.time])
                s = int(float(row[schema.status]))
                xv = tuple(float(row[c]) for c in x_names)
                zv = tuple(float(row[c]) for c in z_names)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if zyg not in ZYGOSITIES:
                raise DataError(f"{path}:{lineno}: unknown zygosity label {row[schema.zygosity]!r}")
            if member not in (1, 2):
                raise DataError(f"{path}:{lineno}: member must be 1 or 2, got {member}")
            if s not in (0, 1, 2):
                raise DataError(f"{path}:{lineno}: status must be 0, 1 or 2, got {s}")
            if not (math.isfinite(t) and t >= 0):
                raise DataError(f"{path}:{lineno}: time must be finite and nonnegative, got {t}")
            entry = pairs.setdefault(pid, {"zyg": zyg, "rows": {}, "lines": []})
            entry["lines"].append(lineno)
            if len(entry["lines"]) > 2:
                raise DataError(f"{path}: pair_id {pid!r} has more than two rows (lines {entry['lines']})")
            if entry["zyg"] != zyg:
                raise DataError(f"{path}:{lineno}: pair_id {pid!r} has inconsistent zygosity")
            if member in entry["rows"]:
                raise DataError(f"{path}:{lineno}: pair_id {pid!r} repeats member {member}")
            entry["rows"][member] = (t, s, xv, zv)
    records, rejected = [], []
    for pid, entry in pairs.items():
        if len(entry["rows"]) != 2:
            rejected.append(pid)
            continue
        m1, m2 = entry["rows"][1], entry["rows"][2]
        records.append(PairRecord(pid, entry["zyg"], (m1[0], m2[0]), (m1[1], m2[1]), (m1[2], m2[2]), (m1[3], m2[3])))
    if rejected:
        log.warning("%s: rejected %d pair(s) with a missing member: %s", path, len(rejected), rejected[:10])
    data = TwinData.from_records(records, x_names, z_names)
    data.rejected = rejected
    return data


@dataclass(frozen=True)
class ClassifiedPair:
    y: tuple[int, int]
    delta_tau: tuple[int, int]
    weight: float
    usable: bool


@dataclass
class Classified:
    """Per-pair outcome at ``tau`` with IPCW weights (columnar)."""

    y: np.ndarray
    known: np.ndarray
    weight: np.ndarray
    usable: np.ndarray
    t_eval: np.ndarray
    tau: float
    mode: str

    def __len__(self) -> int:
        return len(self.weight)

    def __getitem__(self, i: int) -> ClassifiedPair:
        return ClassifiedPair(
            (int(self.y[i, 0]), int(self.y[i, 1])),
            (int(self.known[i, 0]), int(self.known[i, 1])),
            float(self.weight[i]),
            bool(self.usable[i]),
        )

    @property
    def n_used(self) -> int:
        return int(self.usable.sum())


def classify(data: TwinData, tau: float, censoring=None, mode: str = "cap_at_tau",
             weight_cap: float | None = None) -> Classified:
    """Outcome by ``tau`` and inverse-probability-of-censoring weights for every pair.

    ``cap_at_tau`` treats a member as known when it had an event or was
    followed past ``tau`` and evaluates the censoring survival at
    ``min(time, tau)``; ``strict`` requires an observed event and
    uses raw times; ``naive`` ignores censoring altogether (all pairs,
    weight one). ``censoring=None`` means no censoring model (G = 1).
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    time, status = data.time, data.status
    y = ((time <= tau) & (status == 1)).astype(int)
    n = len(data)
    if mode == "naive":
        known = np.ones((n, 2), dtype=bool)
        return Classified(y, known, np.ones(n), np.ones(n, dtype=bool), np.zeros(n), tau, mode)
    if mode == "cap_at_tau":
        known = (status != 0) | (time >= tau)
        t_eval = np.minimum(time, tau)
    else:
        known = status != 0
        t_eval = time.copy()
    usable = known.all(axis=1)
    weight = np.zeros(n)
    te = t_eval.max(axis=1)
    if censoring is None:
        g = np.ones(n)
    else:
        g = np.asarray(censoring.eval_gc_pair(t_eval[:, 0], t_eval[:, 1], data=data), dtype=float)
    bad = usable & ~(g > 0)
    if np.any(bad):
        ids = list(data.pair_id[bad][:5])
        raise PositivityError(
            f"censoring survival is zero for {int(bad.sum())} usable pair(s) (e.g. {ids}); "
            "the positivity condition G_c > 0 on [0, tau] fails"
        )
    weight[usable] = 1.0 / g[usable]
    if np.any(weight > WEIGHT_WARN):
        log.warning("%d pair weight(s) exceed %g (G_c < %g); estimates may be unstable",
                    int((weight > WEIGHT_WARN).sum()), WEIGHT_WARN, 1 / WEIGHT_WARN)
    if weight_cap is not None:
        weight = np.minimum(weight, weight_cap)
    y = np.where(known, y, 0)
    return Classified(y, known, weight, usable, te, tau, mode)


def classify_at_tau(pair: PairRecord, tau: float, censoring=None, mode: str = "cap_at_tau") -> ClassifiedPair:
    """Single-pair version of :func:`classify`."""
    return classify(TwinData.from_records([pair], _names(len(pair.x[0]), "x"), _names(len(pair.z[0]), "z")),
                    tau, censoring, mode)[0]


def _names(k, prefix):
    return tuple(f"{prefix}{j}" for j in range(k))
