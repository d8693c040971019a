"""Perron data of the ordinary-agent block and the consensus limit of DeGroot."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    TAU_ROW,
    HypothesisViolated,
    StubbornPartition,
    TrustMatrix,
    is_irreducible,
    partition_stubborn,
    stubborn_influence_exists,
)

TAU_EIG = 1e-12
SHIFT = 0.5
MAX_ITER_CAP = 10**6


class NoConvergence(RuntimeError):
    def __init__(self, max_iter: int, residual: float, state=None):
        super().__init__(f"no convergence after {max_iter} iterations (residual {residual:.3e})")
        self.max_iter = max_iter
        self.residual = residual
        self.state = state


class SingularSystem(RuntimeError):
    pass


@dataclass(frozen=True)
class PerronData:
    radius: float
    left_vector: np.ndarray
    iterations: int
    residual: float


@dataclass(frozen=True)
class LimitMatrix:
    gain_column: np.ndarray
    size: int
    iterations: int = 0
    power: Optional[np.ndarray] = None

    def matrix(self) -> np.ndarray:
        """Dense ``T^inf = [[1, 0], [gain, 0]]``."""
        t = np.zeros((self.size, self.size))
        t[0, 0] = 1.0
        t[1:, 0] = self.gain_column
        return t


def default_max_iter(A) -> int:
    a = np.asarray(A, dtype=float)
    m = a.shape[0]
    bound = float(a.sum(axis=1).max())
    if bound >= 1.0:
        return MAX_ITER_CAP
    return int(min(MAX_ITER_CAP, 100 * m * math.ceil(1.0 / (1.0 - bound))))


def spectral_radius(A, tau_eig: float = TAU_EIG, max_iter: int | None = None) -> PerronData:
    """Dominant eigenvalue and left Perron vector of a non-negative irreducible matrix.

    Power iteration runs on the shifted transpose ``(A^T + s I) / (1 + s)``
    so periodic (e.g. bipartite) structures converge. Once the residual
    ``||psi^T A - lam psi^T||_inf`` drops below ``tau_eig`` the iteration keeps
    going while the residual still improves, up to as many extra steps again.
    """
    a = np.asarray(A, dtype=float)
    m = a.shape[0]
    if max_iter is None:
        max_iter = default_max_iter(a)
    at = a.T
    psi = np.full(m, 1.0 / m)

    def step(v):
        w = (at @ v + SHIFT * v) / (1.0 + SHIFT)
        mu = w.sum()
        return w / mu, mu * (1.0 + SHIFT) - SHIFT

    def residual(v, lam):
        return float(np.max(np.abs(at @ v - lam * v)))

    lam = float(psi @ (a @ np.ones(m)))
    res = residual(psi, lam)
    it = 0
    while res > tau_eig and it < max_iter:
        psi, lam = step(psi)
        res = residual(psi, lam)
        it += 1
    if res > tau_eig:
        raise NoConvergence(max_iter, res, psi)

    polish_budget = it
    for _ in range(polish_budget):
        cand, cand_lam = step(psi)
        cand_res = residual(cand, cand_lam)
        if cand_res >= res:
            break
        psi, lam, res = cand, cand_lam, cand_res
        it += 1
    return PerronData(float(lam), psi, it, res)


def _check_hypothesis(p: StubbornPartition) -> None:
    if not stubborn_influence_exists(p):
        raise HypothesisViolated("no ordinary agent trusts the stubborn agent (r = 0)")
    if not is_irreducible(p.interior):
        raise HypothesisViolated("trust among ordinary agents is not irreducible")


def consensus_gain(p: StubbornPartition, tau_solve: float = 1e-10) -> LimitMatrix:
    """Solve ``(I - Q) v = r``; ``v * x_1[0]`` is where the ordinary agents end up."""
    if not stubborn_influence_exists(p):
        raise HypothesisViolated("no ordinary agent trusts the stubborn agent (r = 0)")
    q, r = p.interior, p.gain
    system = np.eye(q.shape[0]) - q
    try:
        v = np.linalg.solve(system, r)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    res = float(np.max(np.abs(system @ v - r)))
    if not np.all(np.isfinite(v)) or res > tau_solve:
        raise SingularSystem(f"I - Q is numerically singular (residual {res:.3e})")
    return LimitMatrix(v, q.shape[0] + 1)


def neumann_partial_sum(Q, r, n: int) -> np.ndarray:
    """``sum_{k<n} Q^k r`` by Horner accumulation ``v <- r + Q v``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    q = np.asarray(Q, dtype=float)
    r = np.asarray(r, dtype=float)
    v = r.copy()
    for _ in range(n - 1):
        v = r + q @ v
    return v


def limit_power(
    T: TrustMatrix,
    tau_lim: float = 1e-10,
    max_iter: int = MAX_ITER_CAP,
    tau_row: float = TAU_ROW,
) -> LimitMatrix:
    """Brute-force ``T^n`` until successive powers agree and the Q^n block has vanished.

    Cross-checks :func:`consensus_gain`; the returned gain column is the first
    column of the converged power below the stubborn row and ``power`` holds
    the final ``T^n`` itself.
    """
    p = partition_stubborn(T, tau_row)
    _check_hypothesis(p)
    t = p.assemble()
    power = t.copy()
    for n in range(1, max_iter + 1):
        nxt = power @ t
        diff = float(np.max(np.abs(nxt - power)))
        power = nxt
        tail = float(np.abs(power[1:, 1:]).sum(axis=1).max()) if power.shape[0] > 1 else 0.0
        if diff <= tau_lim and tail <= tau_lim:
            upper = float(np.max(np.abs(power[0, 1:]), initial=0.0))
            if upper > tau_lim:
                raise AssertionError(f"upper-right block of T^n is {upper:.3e}, expected 0")
            return LimitMatrix(power[1:, 0].copy(), t.shape[0], n + 1, power)
    raise NoConvergence(max_iter, diff, power)
