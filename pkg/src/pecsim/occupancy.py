"""Occupancy strings, Hamming error matrices and realistic erroneous forecasts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import DAY_S

log = logging.getLogger(__name__)

TOL_START = 0.01
TOL_STEP = 0.005
TOL_MAX = 0.03
POINT_RUN_MAX = 2


class OccupancyError(ValueError):
    pass


class NoCandidatesError(OccupancyError):
    def __init__(self, target: float, tol: float):
        self.target = target
        self.tol = tol
        super().__init__(f"no candidates at error level {target:g} (band widened to +/-{tol:g})")


@dataclass(frozen=True, eq=False)
class OccupancyString:
    bits: np.ndarray
    granularity: int = 30
    day_id: str = ""

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1:
            raise OccupancyError("occupancy bits must be one-dimensional")
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise OccupancyError("occupancy bits must be 0 or 1")
        if self.granularity <= 0 or DAY_S % self.granularity:
            raise OccupancyError(f"granularity {self.granularity} does not divide a day")
        expected = DAY_S // self.granularity
        if bits.size != expected:
            raise OccupancyError(f"expected {expected} samples at {self.granularity} s, got {bits.size}")
        bits = bits.astype(np.uint8)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return self.bits.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, OccupancyString):
            return NotImplemented
        return self.granularity == other.granularity and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.granularity, self.bits.tobytes()))

    def __str__(self) -> str:
        return self.to_text()

    def to_text(self) -> str:
        return (self.bits + ord("0")).tobytes().decode()

    @property
    def occupied_fraction(self) -> float:
        return float(self.bits.mean())

    def complement(self) -> OccupancyString:
        return OccupancyString(1 - self.bits, self.granularity, self.day_id)


def parse_occupancy_string(text: str, granularity: int = 30, day_id: str = "") -> OccupancyString:
    text = text.strip()
    bad = set(text) - {"0", "1"}
    if bad:
        raise OccupancyError(f"invalid occupancy character(s) {sorted(bad)!r}")
    bits = np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")
    return OccupancyString(bits, granularity, day_id)


def upsample_to_coarse(fine: OccupancyString, coarse_granularity: int = 600) -> OccupancyString:
    """A coarse window is unoccupied only if every fine sample in it is unoccupied."""
    if coarse_granularity % fine.granularity:
        raise OccupancyError(
            f"fine granularity {fine.granularity} s does not divide coarse {coarse_granularity} s"
        )
    factor = coarse_granularity // fine.granularity
    coarse = fine.bits.reshape(-1, factor).max(axis=1)
    return OccupancyString(coarse, coarse_granularity, fine.day_id)


def _check_pair(a: OccupancyString, b: OccupancyString) -> None:
    if len(a) != len(b) or a.granularity != b.granularity:
        raise OccupancyError(
            f"length/granularity mismatch: {len(a)}@{a.granularity}s vs {len(b)}@{b.granularity}s"
        )


def hamming_distance(a: OccupancyString, b: OccupancyString) -> tuple[int, float]:
    """Mismatch count and the count normalised by string length."""
    _check_pair(a, b)
    count = int(np.count_nonzero(a.bits != b.bits))
    return count, count / len(a)


@dataclass(frozen=True, eq=False)
class ErrorMatrix:
    """Pairwise normalised Hamming distances over a string dataset."""

    d: np.ndarray
    strings: tuple[OccupancyString, ...] = field(default=())
    day_ids: tuple[str, ...] = field(default=())

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def length(self) -> int:
        return len(self.strings[0])


def build_error_matrix(strings) -> ErrorMatrix:
    strings = tuple(strings)
    if len(strings) < 2:
        raise OccupancyError("an error matrix needs at least 2 strings")
    first = strings[0]
    for s in strings[1:]:
        _check_pair(first, s)
    bits = np.stack([s.bits for s in strings]).astype(np.float32)
    # mismatches = |a| + |b| - 2 a.b
    ones = bits.sum(axis=1)
    counts = ones[:, None] + ones[None, :] - 2.0 * (bits @ bits.T)
    d = np.rint(counts).astype(np.int64) / float(len(first))
    np.fill_diagonal(d, 0.0)
    d.setflags(write=False)
    return ErrorMatrix(d, strings, tuple(s.day_id for s in strings))


def select_reference(day: OccupancyString, matrix: ErrorMatrix) -> int:
    """Index of the dataset string closest to ``day``; ties go to the lowest index."""
    _check_pair(day, matrix.strings[0])
    stack = np.stack([s.bits for s in matrix.strings])
    dist = np.count_nonzero(stack != day.bits[None, :], axis=1)
    return int(np.argmin(dist))


@dataclass(frozen=True)
class Injection:
    strings: tuple[OccupancyString, ...]
    indices: tuple[int, ...]
    tol: float
    with_replacement: bool
    pool_size: int


def candidate_pool(reference_idx: int, matrix: ErrorMatrix, target: float) -> tuple[np.ndarray, float]:
    """Dataset indices within the error band around ``target``, widening the band if empty."""
    row = matrix.d[reference_idx]
    tol = TOL_START
    while True:
        pool = np.flatnonzero(np.abs(row - target) <= tol + 1e-12)
        if pool.size:
            return pool, tol
        if tol >= TOL_MAX - 1e-12:
            raise NoCandidatesError(target, tol)
        tol = min(TOL_MAX, round(tol + TOL_STEP, 10))


def inject_errors_detailed(
    reference_idx: int,
    matrix: ErrorMatrix,
    target: float,
    replicates: int,
    seed,
) -> Injection:
    if not 0.0 <= target <= 1.0:
        raise OccupancyError(f"error target must lie in [0, 1], got {target}")
    if replicates < 1:
        raise OccupancyError("replicates must be >= 1")
    ref = matrix.strings[reference_idx]
    if target == 0.0:
        return Injection((ref,) * replicates, (reference_idx,) * replicates, 0.0, True, 1)
    pool, tol = candidate_pool(reference_idx, matrix, target)
    rng = np.random.default_rng(seed)
    with_replacement = pool.size < replicates
    if with_replacement:
        log.info("error pool of %d < %d replicates at target %g; sampling with replacement",
                 pool.size, replicates, target)
    picks = rng.choice(pool, size=replicates, replace=with_replacement)
    idx = tuple(int(i) for i in picks)
    return Injection(tuple(matrix.strings[i] for i in idx), idx, tol, with_replacement, int(pool.size))


def inject_errors(
    reference_idx: int, matrix: ErrorMatrix, target: float, replicates: int, seed,
) -> list[OccupancyString]:
    """Draw erroneous forecasts: other dataset strings at distance ``target`` from the reference."""
    return list(inject_errors_detailed(reference_idx, matrix, target, replicates, seed).strings)


def mismatch_runs(truth: OccupancyString, forecast: OccupancyString) -> np.ndarray:
    """Lengths of maximal runs of mismatching positions."""
    _check_pair(truth, forecast)
    diff = np.concatenate(([0], (truth.bits != forecast.bits).astype(np.int8), [0]))
    edges = np.flatnonzero(np.diff(diff))
    return edges[1::2] - edges[0::2]


def classify_errors(truth: OccupancyString, forecast: OccupancyString,
                    point_run_max: int = POINT_RUN_MAX) -> tuple[int, int]:
    """Count short mismatch runs (point errors) and longer ones (burst errors)."""
    runs = mismatch_runs(truth, forecast)
    point = int(np.count_nonzero(runs <= point_run_max))
    return point, int(runs.size - point)
