"""Reception models for channels that can decode several concurrent frames.

Two models are supported: the simple capability model (up to ``k`` overlapping
frames all decode, one more kills every overlapping frame) and a generalized
reception matrix giving, for each number of concurrent transmitters ``i``, the
probability that exactly ``j`` of them are received.  The matrix form is used
for validation and for collapsing a measured channel onto the equivalent
capability an access protocol should assume; the simulation engine itself runs
on the capability model.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence, Union

ROW_SUM_TOLERANCE = 1e-9
TIE_TOLERANCE = 1e-9


class MatrixError(ValueError):
    """Base class for reception-matrix validation failures."""


class RowLengthError(MatrixError):
    """Row i must have entries for j = 0..i, i.e. i + 1 of them."""


class ProbabilityRangeError(MatrixError):
    """Matrix entries are probabilities and must lie in [0, 1]."""


class RowSumError(MatrixError):
    """Each row is a probability distribution and must sum to 1."""


class TieRule(enum.Enum):
    """How to break ties between transmitter counts with equal expected yield."""

    MINIMUM = "min"
    MIDDLE = "middle"


@dataclass(frozen=True)
class ReceptionMatrix:
    """Validated reception probabilities, rows indexed by transmitter count.

    ``rows[i - 1][j]`` is the probability that exactly ``j`` frames are
    received when ``i`` are transmitted concurrently (1 <= i <= n_max).
    Construct through :func:`validate_matrix`.
    """

    rows: tuple[tuple[float, ...], ...]

    @property
    def n_max(self) -> int:
        return len(self.rows)

    def row(self, transmitters: int) -> tuple[float, ...]:
        """Distribution of received-frame counts for ``transmitters`` senders."""
        if not 1 <= transmitters <= self.n_max:
            raise IndexError(
                f"transmitter count {transmitters} outside 1..{self.n_max}"
            )
        return self.rows[transmitters - 1]


def validate_matrix(raw: Sequence[Sequence[float]]) -> ReceptionMatrix:
    """Check shape, entry range and row sums; return the frozen matrix.

    Raises RowLengthError, ProbabilityRangeError or RowSumError, each naming
    the offending 1-indexed row.
    """
    if len(raw) == 0:
        raise RowLengthError("matrix needs at least one row")
    rows = []
    for idx, row in enumerate(raw, start=1):
        entries = tuple(float(x) for x in row)
        if len(entries) != idx + 1:
            raise RowLengthError(
                f"row {idx} has {len(entries)} entries, expected {idx + 1}"
            )
        for j, p in enumerate(entries):
            if not 0.0 <= p <= 1.0:
                raise ProbabilityRangeError(
                    f"row {idx} entry {j} is {p}, outside [0, 1]"
                )
        total = sum(entries)
        if abs(total - 1.0) > ROW_SUM_TOLERANCE:
            raise RowSumError(f"row {idx} sums to {total!r}, expected 1")
        rows.append(entries)
    return ReceptionMatrix(rows=tuple(rows))


def expected_successes(matrix: ReceptionMatrix, transmitters: int) -> float:
    """Mean number of frames received when ``transmitters`` send concurrently."""
    row = matrix.row(transmitters)
    return sum(j * p for j, p in enumerate(row))


def equivalent_capability(
    matrix: ReceptionMatrix, tie_rule: TieRule = TieRule.MINIMUM
) -> int:
    """Transmitter count that maximizes the expected number of received frames.

    This is the capability a threshold or adaptive policy should assume when
    the true channel is only known as a reception matrix.  Counts whose
    expected yield is within TIE_TOLERANCE of the maximum are tied; MINIMUM
    picks the smallest such count, MIDDLE the lower median of the tied set.
    """
    yields = [expected_successes(matrix, i) for i in range(1, matrix.n_max + 1)]
    best = max(yields)
    tied = [i + 1 for i, y in enumerate(yields) if y >= best - TIE_TOLERANCE]
    if tie_rule is TieRule.MINIMUM:
        return tied[0]
    if tie_rule is TieRule.MIDDLE:
        return tied[(len(tied) - 1) // 2]
    raise ValueError(f"unknown tie rule {tie_rule!r}")


def kmpr_success(concurrent: int, k: int) -> bool:
    """Whether a slot with ``concurrent`` senders decodes under capability ``k``."""
    if k < 1:
        raise ValueError(f"capability must be >= 1, got {k}")
    if concurrent < 0:
        raise ValueError(f"concurrent count must be >= 0, got {concurrent}")
    return concurrent <= k


def kmpr_matrix(k: int, n_max: int) -> ReceptionMatrix:
    """Reception matrix of the capability model: all-or-nothing at ``k``.

    For i <= k every frame is received (probability 1 at j = i); for i > k
    nothing is (probability 1 at j = 0).
    """
    if k < 1:
        raise ValueError(f"capability must be >= 1, got {k}")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    rows = []
    for i in range(1, n_max + 1):
        row = [0.0] * (i + 1)
        row[i if i <= k else 0] = 1.0
        rows.append(row)
    return validate_matrix(rows)


@dataclass(frozen=True)
class KMprChannel:
    """Channel that decodes up to ``k`` overlapping frames, none beyond that."""

    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"capability must be >= 1, got {self.k}")


@dataclass(frozen=True)
class GeneralizedChannel:
    """Channel described by a full reception matrix."""

    matrix: ReceptionMatrix

    def equivalent_capability(self, tie_rule: TieRule = TieRule.MINIMUM) -> int:
        return equivalent_capability(self.matrix, tie_rule)


ChannelModel = Union[KMprChannel, GeneralizedChannel]


def load_matrix(path: str) -> ReceptionMatrix:
    """Parse a reception matrix from text: one row per line, '#' comments.

    Entries are whitespace-separated decimals; blank and comment-only lines
    are skipped.  Raises MatrixError subclasses on malformed content.
    """
    rows: list[list[float]] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                rows.append([float(tok) for tok in text.split()])
            except ValueError as exc:
                raise MatrixError(f"line {lineno}: {exc}") from None
    return validate_matrix(rows)
