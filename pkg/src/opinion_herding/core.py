"""Trust matrices, stubborn-agent block structure and opinion states.

Edge convention: ``t[i, j] > 0`` is an edge from agent ``j`` to agent ``i``,
i.e. the trust that agent ``i`` puts in agent ``j``. Row ``i`` therefore lists
whom agent ``i`` listens to. Agent index 0 (agent 1 in every external file
format) is the stubborn agent.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np

TAU_ROW = 1e-9
ROW_DUST = 1e-14


class TrustMatrixError(ValueError):
    """Base class for malformed trust matrices."""


class NonSquareError(TrustMatrixError):
    pass


class NegativeEntryError(TrustMatrixError):
    def __init__(self, i: int, j: int, value: float):
        super().__init__(f"negative trust weight t[{i},{j}] = {value!r}")
        self.i, self.j, self.value = i, j, value


class RowSumExceedsOneError(TrustMatrixError):
    def __init__(self, i: int, total: float):
        super().__init__(f"row {i} sums to {total!r} > 1")
        self.i, self.total = i, total


class NotStubbornFormError(TrustMatrixError):
    pass


class HypothesisViolated(ValueError):
    """Raised when no ordinary agent puts positive trust in the stubborn agent
    (or a related structural hypothesis fails)."""


class Classification(enum.Enum):
    STOCHASTIC = "stochastic"
    SUB_STOCHASTIC = "sub-stochastic"
    STRICTLY_SUB_STOCHASTIC = "strictly-sub-stochastic"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TrustMatrix:
    weights: np.ndarray
    classification: Classification

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def row_sums(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)


def validate_trust_matrix(weights, tau_row: float = TAU_ROW) -> TrustMatrix:
    """Validate a non-negative square matrix and classify its row sums.

    Rows whose sum lies within ``tau_row`` of 1 are rescaled to sum to 1, which
    absorbs the error introduced by text round-trips.
    """
    w = np.array(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
        raise NonSquareError(f"trust matrix must be square and non-empty, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise TrustMatrixError("trust matrix contains non-finite entries")
    neg = np.argwhere(w < 0)
    if len(neg):
        i, j = (int(v) for v in neg[0])
        raise NegativeEntryError(i, j, float(w[i, j]))

    sums = w.sum(axis=1)
    for i, s in enumerate(sums):
        if s > 1 + tau_row:
            raise RowSumExceedsOneError(i, float(s))
    near_one = np.abs(sums - 1) <= tau_row
    # rows already within float dust of 1 stay untouched so reloading is exact
    rescale = near_one & (np.abs(sums - 1) > ROW_DUST)
    w[rescale] /= sums[rescale, None]

    if near_one.all():
        cls = Classification.STOCHASTIC
    elif np.all(sums < 1 - tau_row):
        cls = Classification.STRICTLY_SUB_STOCHASTIC
    else:
        cls = Classification.SUB_STOCHASTIC
    return TrustMatrix(_frozen(w), cls)


@dataclass(frozen=True, eq=False)
class StubbornPartition:
    """``T = [[1, 0], [gain, interior]]`` with agent 0 stubborn.

    ``gain`` is the trust each ordinary agent puts in the stubborn agent,
    ``interior`` the trust among ordinary agents.
    """

    gain: np.ndarray
    interior: np.ndarray

    @property
    def n_ordinary(self) -> int:
        return self.gain.shape[0]

    def assemble(self) -> np.ndarray:
        m = self.n_ordinary
        t = np.zeros((m + 1, m + 1))
        t[0, 0] = 1.0
        t[1:, 0] = self.gain
        t[1:, 1:] = self.interior
        return t


def is_stubborn_form(T: TrustMatrix, tau_row: float = TAU_ROW) -> bool:
    first = np.asarray(T.weights[0])
    target = np.zeros_like(first)
    target[0] = 1.0
    return bool(np.max(np.abs(first - target)) <= tau_row)


def partition_stubborn(T: TrustMatrix, tau_row: float = TAU_ROW) -> StubbornPartition:
    if T.classification is not Classification.STOCHASTIC:
        raise NotStubbornFormError(
            f"stubborn partition needs a stochastic trust matrix, got {T.classification.value}"
        )
    if not is_stubborn_form(T, tau_row):
        raise NotStubbornFormError(f"row 1 must be (1, 0, ..., 0), got {T.weights[0].tolist()}")
    w = T.weights
    return StubbornPartition(gain=_frozen(w[1:, 0]), interior=_frozen(w[1:, 1:]))


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def is_irreducible(Q) -> bool:
    """True iff the trust graph of ``Q`` is strongly connected.

    A 0x0 or 1x1 matrix counts as irreducible whatever its entry.
    """
    q = np.asarray(Q, dtype=float)
    if q.shape[0] <= 1:
        return True
    # q[i, j] > 0 is an edge j -> i; adj[j, i] follows edge direction
    adj = q.T > 0
    return bool(_reachable(adj, 0).all() and _reachable(adj.T, 0).all())


def stubborn_influence_exists(p: StubbornPartition) -> bool:
    return bool(np.any(p.gain > 0))


@dataclass(frozen=True, eq=False)
class OpinionState:
    """Opinions of all K agents; ``values[0]`` belongs to the stubborn agent."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("opinion state must be a non-empty vector")
        if not np.all((v >= 0) & (v <= 1)):
            raise ValueError(f"opinions must lie in [0, 1], got {v.tolist()}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_ordinary(cls, stubborn_value: float, ordinary) -> "OpinionState":
        return cls(np.concatenate([[stubborn_value], np.asarray(ordinary, dtype=float)]))

    @property
    def stubborn_value(self) -> float:
        return float(self.values[0])

    @property
    def ordinary(self) -> np.ndarray:
        return self.values[1:]

    def __len__(self) -> int:
        return self.values.size
