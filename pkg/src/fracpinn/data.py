"""Synthetic observations and case-count ingestion.

Real data enters as a CSV with header ``day,confirmed,recovered,deaths``
holding integer cumulative counts (``recovered`` may be left empty).  Counts
are turned into population fractions: ``d = deaths/N``, ``r = recovered/N``,
``i = active/N`` and ``s = (N - confirmed)/N``.  The exposed class is never
observed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from fracpinn.errors import ConsistencyError
from fracpinn.fracsolver import Trajectory
from fracpinn.loss import ObservationSet
from fracpinn.model import COMPARTMENTS, SimplexState

CASE_HEADER = ("day", "confirmed", "recovered", "deaths")
OBS_HEADER = ("t",) + COMPARTMENTS + ("mask",)


@dataclass(frozen=True)
class RawCaseRecord:
    day_index: int
    confirmed_cum: int
    recovered_cum: int | None
    deaths_cum: int

    def __post_init__(self):
        counts = [self.confirmed_cum, self.deaths_cum] + (
            [self.recovered_cum] if self.recovered_cum is not None else []
        )
        if any(c < 0 for c in counts):
            raise ConsistencyError(f"day {self.day_index}: negative count")
        if self.deaths_cum + (self.recovered_cum or 0) > self.confirmed_cum:
            raise ConsistencyError(f"day {self.day_index}: deaths + recovered exceed confirmed")


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian noise on fractions.

    ``sigma_noise`` applies to every compartment unless ``per_compartment``
    supplies five separate standard deviations.
    """

    sigma_noise: float = 0.0
    seed: int = 0
    clip_to_simplex: bool = False
    per_compartment: tuple[float, float, float, float, float] | None = None

    def __post_init__(self):
        if not self.sigma_noise >= 0:
            raise ConsistencyError("sigma_noise must be >= 0")
        if self.per_compartment is not None:
            if len(self.per_compartment) != 5 or any(not s >= 0 for s in self.per_compartment):
                raise ConsistencyError("per_compartment needs five non-negative values")

    @property
    def sigmas(self) -> np.ndarray:
        if self.per_compartment is not None:
            return np.asarray(self.per_compartment, dtype=float)
        return np.full(5, self.sigma_noise)


def make_synthetic(traj: Trajectory, every: int = 1, noise: NoiseSpec = NoiseSpec()) -> ObservationSet:
    """Subsample every ``every``-th node and add i.i.d. Gaussian noise."""
    if every < 1:
        raise ConsistencyError("every must be >= 1")
    idx = np.arange(0, len(traj.states), every)
    truth = traj.states[idx]
    rng = np.random.default_rng(noise.seed)
    values = truth + rng.standard_normal(truth.shape) * noise.sigmas
    if noise.clip_to_simplex:
        values = np.clip(values, 0.0, 1.0)
    return ObservationSet(idx * traj.dt, values, strict=noise.clip_to_simplex)


def validate_records(records: Sequence[RawCaseRecord]) -> None:
    """Check ordering and monotonicity of cumulative series; errors name the row."""
    for row, (a, b) in enumerate(zip(records, records[1:]), start=1):
        if b.day_index <= a.day_index:
            raise ConsistencyError(f"row {row + 1}: day {b.day_index} does not follow day {a.day_index}")
        if b.confirmed_cum < a.confirmed_cum:
            raise ConsistencyError(f"row {row + 1}: cumulative confirmed decreases")
        if b.deaths_cum < a.deaths_cum:
            raise ConsistencyError(f"row {row + 1}: cumulative deaths decrease")
        if (a.recovered_cum is None) != (b.recovered_cum is None):
            raise ConsistencyError(f"row {row + 1}: recovered column present on some rows only")
        if a.recovered_cum is not None and b.recovered_cum < a.recovered_cum:
            raise ConsistencyError(f"row {row + 1}: cumulative recovered decreases")


def reconstruct_observations(
    records: Sequence[RawCaseRecord],
    population: int,
    exposed_multiplier: float = 2.0,
    dt: float = 1.0,
) -> tuple[ObservationSet, SimplexState]:
    """Convert cumulative counts into normalized observations and an initial state.

    Observation times are ``(day - first_day) * dt``.  The initial exposed
    fraction is ``exposed_multiplier * i_0`` and is taken out of ``s_0``.
    """
    records = list(records)
    if not records:
        raise ConsistencyError("no case records")
    validate_records(records)
    n = float(population)
    if not population > max(r.confirmed_cum for r in records):
        raise ConsistencyError(f"population {population} must exceed the largest confirmed count")
    has_recovered = records[0].recovered_cum is not None

    times = np.array([(r.day_index - records[0].day_index) * dt for r in records], dtype=float)
    values = np.full((len(records), 5), np.nan)
    for row, rec in enumerate(records):
        recovered = rec.recovered_cum or 0
        active = rec.confirmed_cum - recovered - rec.deaths_cum
        values[row, 0] = (n - rec.confirmed_cum) / n
        values[row, 2] = active / n
        values[row, 4] = rec.deaths_cum / n
        if has_recovered:
            values[row, 3] = recovered / n
    mask = (True, False, True, has_recovered, True)
    obs = ObservationSet(times, values, mask)

    s0, i0, d0 = values[0, 0], values[0, 2], values[0, 4]
    r0 = values[0, 3] if has_recovered else 0.0
    e0 = exposed_multiplier * i0
    if e0 > s0:
        raise ConsistencyError("exposed initialisation exceeds the susceptible fraction")
    ic = SimplexState(s0 - e0, e0, i0, r0, d0)
    return obs, ic


def _parse_int(text: str, line: int, column: str, optional: bool = False) -> int | None:
    text = text.strip()
    if text == "" and optional:
        return None
    try:
        return int(text)
    except ValueError:
        raise ConsistencyError(f"line {line}: cannot parse {column}={text!r} as an integer") from None


def load_csv(path: str | Path) -> list[RawCaseRecord]:
    """Read case records; parse and invariant errors carry the line number."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CASE_HEADER:
            raise ConsistencyError(f"{path}: expected header {','.join(CASE_HEADER)}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ConsistencyError(f"line {line}: expected 4 fields, got {len(row)}")
            try:
                records.append(
                    RawCaseRecord(
                        _parse_int(row[0], line, "day"),
                        _parse_int(row[1], line, "confirmed"),
                        _parse_int(row[2], line, "recovered", optional=True),
                        _parse_int(row[3], line, "deaths"),
                    )
                )
            except ConsistencyError as exc:
                msg = str(exc)
                raise ConsistencyError(msg if msg.startswith("line") else f"line {line}: {msg}") from None
    try:
        validate_records(records)
    except ConsistencyError as exc:
        raise ConsistencyError(f"{path}: {exc}") from None
    return records


def write_case_csv(records: Sequence[RawCaseRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CASE_HEADER)
        for r in records:
            w.writerow([r.day_index, r.confirmed_cum, "" if r.recovered_cum is None else r.recovered_cum,
                        r.deaths_cum])


def write_observations_csv(obs: ObservationSet, path: str | Path) -> None:
    """Write ``t,s,e,i,r,d,mask``; unobserved entries are left empty.

    ``mask`` is a five-character string of 0/1 flags in compartment order.
    """
    mask = obs.observed_mask
    flags = "".join("1" if m else "0" for m in mask)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_HEADER)
        for t, row in zip(obs.times, obs.values):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" if m else "" for v, m in zip(row, mask)] + [flags])


def read_observations_csv(path: str | Path) -> ObservationSet:
    times, rows, mask = [], [], None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != OBS_HEADER:
            raise ConsistencyError(f"{path}: expected header {','.join(OBS_HEADER)}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 7:
                raise ConsistencyError(f"line {line}: expected 7 fields, got {len(row)}")
            flags = row[6].strip()
            if len(flags) != 5 or set(flags) - {"0", "1"}:
                raise ConsistencyError(f"line {line}: bad mask {flags!r}")
            row_mask = tuple(c == "1" for c in flags)
            if mask is None:
                mask = row_mask
            elif row_mask != mask:
                raise ConsistencyError(f"line {line}: mask differs from earlier rows")
            try:
                times.append(float(row[0]))
                rows.append([float(v) if m else math.nan for v, m in zip(row[1:6], row_mask)])
            except ValueError:
                raise ConsistencyError(f"line {line}: cannot parse numeric field") from None
    if mask is None:
        return ObservationSet(np.empty(0), np.empty((0, 5)))
    return ObservationSet(np.array(times), np.array(rows), mask, strict=False)
