"""CSV formats: occupancy, weather, error matrices and run results."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DAY_S
from .occupancy import ErrorMatrix, OccupancyError, OccupancyString


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class OccupancyDataset:
    day_ids: tuple[str, ...]
    room_ids: tuple[str, ...]
    bits: np.ndarray  # (days, rooms, samples)
    granularity: int = 30

    def day_index(self, day_id: str) -> int:
        try:
            return self.day_ids.index(day_id)
        except ValueError:
            raise DataError(f"unknown day {day_id!r}") from None

    def day(self, day_id: str) -> list[OccupancyString]:
        d = self.day_index(day_id)
        return [OccupancyString(self.bits[d, j], self.granularity, day_id) for j in range(len(self.room_ids))]

    def strings(self) -> list[OccupancyString]:
        return [s for day_id in self.day_ids for s in self.day(day_id)]

    def labels(self) -> list[str]:
        return [f"{d}:{r}" for d in self.day_ids for r in self.room_ids]

    @classmethod
    def from_days(cls, days: list[list[OccupancyString]]) -> OccupancyDataset:
        bits = np.stack([np.stack([s.bits for s in row]) for row in days])
        return cls(tuple(row[0].day_id for row in days), tuple(str(j + 1) for j in range(len(days[0]))),
                   bits, days[0][0].granularity)


def write_occupancy_csv(path, data: OccupancyDataset) -> None:
    n = data.bits.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day_id", "room_id", *[f"t{i}" for i in range(n)]])
        for d, day_id in enumerate(data.day_ids):
            for j, room_id in enumerate(data.room_ids):
                w.writerow([day_id, room_id, *data.bits[d, j].tolist()])


def read_occupancy_csv(path, granularity: int = 30) -> OccupancyDataset:
    rows: dict[str, dict[str, np.ndarray]] = {}
    n = DAY_S // granularity
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["day_id", "room_id"]:
            raise DataError(f"{path}: header must start with day_id,room_id")
        if len(header) - 2 != n:
            raise DataError(f"{path}: expected {n} sample columns at {granularity} s, got {len(header) - 2}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != n + 2:
                raise DataError(f"{path}:{lineno}: expected {n + 2} cells, got {len(row)}")
            try:
                bits = np.array([int(c) for c in row[2:]], np.uint8)
                OccupancyString(bits, granularity, row[0])
            except (ValueError, OccupancyError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            day = rows.setdefault(row[0], {})
            if row[1] in day:
                raise DataError(f"{path}:{lineno}: duplicate room {row[1]!r} on day {row[0]!r}")
            day[row[1]] = bits
    if not rows:
        raise DataError(f"{path}: no occupancy rows")
    room_ids = tuple(next(iter(rows.values())).keys())
    for day_id, day in rows.items():
        if tuple(day.keys()) != room_ids:
            raise DataError(f"{path}: day {day_id!r} does not list rooms {room_ids}")
    bits = np.stack([np.stack([rows[d][r] for r in room_ids]) for d in rows])
    return OccupancyDataset(tuple(rows), room_ids, bits, granularity)


def write_weather_csv(path, series: np.ndarray, tau: int = 600) -> None:
    series = np.atleast_2d(series)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_s", "T_ex"])
        for d in range(series.shape[0]):
            for i, val in enumerate(series[d]):
                w.writerow([d * DAY_S + i * tau, repr(float(val))])


def read_weather_csv(path, tau: int = 600) -> np.ndarray:
    """Weather as (days, 86400 // tau); timestamps must be contiguous from 0."""
    ts, vals = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp_s", "T_ex"]:
            raise DataError(f"{path}: header must be timestamp_s,T_ex")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                ts.append(int(float(row[0])))
                vals.append(float(row[1]))
            except (ValueError, IndexError):
                raise DataError(f"{path}:{lineno}: malformed row {row!r}") from None
    per_day = DAY_S // tau
    ts = np.array(ts)
    if ts.size == 0 or ts.size % per_day or not np.array_equal(ts, np.arange(ts.size) * tau):
        raise DataError(f"{path}: timestamps must run 0, {tau}, ... over whole days")
    return np.array(vals).reshape(-1, per_day)


def write_error_matrix_csv(path, matrix: ErrorMatrix, labels) -> None:
    labels = list(labels)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day_id", *labels])
        for lab, row in zip(labels, matrix.d):
            w.writerow([lab, *[repr(float(x)) for x in row]])


def read_error_matrix_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        labels = header[1:]
        rows, row_labels = [], []
        for row in reader:
            row_labels.append(row[0])
            rows.append([float(x) for x in row[1:]])
    if row_labels != labels:
        raise DataError(f"{path}: row and column labels differ")
    return labels, np.array(rows)


RESULT_HEADER = ["t_s", "room", "T_hv", "T_oc", "T_un", "u", "v", "r", "S_he", "S_f",
                 "Po_kW", "occupied_true", "pmv", "D"]
SUMMARY_HEADER = ["run", "controller", "day_id", "error", "replicate", "E_kWh", "D_pct", "converged_frac"]


def write_result_csv(path, result) -> None:
    ts = result.series
    n = ts["Po"].shape[0]
    R = ts["T_hv"].shape[0]
    tau = result.tau_fine
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_HEADER)
        for i in range(n):
            for j in range(R):
                w.writerow([i * tau, j + 1, *(repr(float(ts[k][j, i])) for k in ("T_hv", "T_oc", "T_un")),
                            repr(float(ts["u"][i])), repr(float(ts["v"][j, i])), repr(float(ts["r"][i])),
                            int(ts["S_he"][j, i]), int(ts["S_f"][j, i]), repr(float(ts["Po"][i])),
                            int(ts["occ"][j, i]), repr(float(ts["pmv"][j, i])), repr(float(ts["D"][j, i]))])


def read_result_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != RESULT_HEADER:
            raise DataError(f"{path}: unexpected result header")
        data = np.array([[float(x) for x in row] for row in reader])
    rooms = int(data[:, 1].max())
    out = {}
    for c, name in enumerate(RESULT_HEADER):
        out[name] = data[:, c].reshape(-1, rooms).T
    return out


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    probe = p / ".write-test"
    probe.write_text("")
    probe.unlink()
    return p
