"""Quantities behind the herding argument for the RA model.

``S[n] = psi^T Y[n]`` with ``psi`` the left Perron vector of the ordinary
block Q (normalised to sum 1) contracts in conditional mean by
``c = 1 - alpha (1 - lam)`` per step, and its conditional variance is
``alpha^2 lam^2 sum_k psi_k^2 y_k (1 - y_k)``. This module computes both in
closed form, by exhaustive enumeration of the action vectors, and by
restart-from-fixed-state Monte Carlo, plus the tail/middle-mass estimators
and the graph-side checks (trust layers, row-sum contraction).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import TAU_ROW, TrustMatrix, partition_stubborn
from .dynamics import EnsembleSummary, RAConfig, Trajectory, _ra_update, make_rng

ENUMERATION_LIMIT = 12


class DimensionMismatch(ValueError):
    pass


class IncompleteCoverage(ValueError):
    def __init__(self, uncovered):
        self.uncovered = frozenset(uncovered)
        super().__init__(f"agents not reachable from the stubborn agent: {sorted(self.uncovered)}")


class ContractionViolation(AssertionError):
    pass


# --- supermartingale -------------------------------------------------------


@dataclass(frozen=True)
class MartingaleSeries:
    values: np.ndarray
    differences: np.ndarray

    @property
    def terminal(self) -> float:
        """``S[N]``, the finite-horizon stand-in for the a.s. limit ``S[inf]``."""
        return float(self.values[-1])


def martingale_series(traj: Trajectory, psi) -> MartingaleSeries:
    psi = np.asarray(psi, dtype=float)
    y = traj.states[:, 1:]
    if y.shape[1] != psi.shape[0]:
        raise DimensionMismatch(f"psi has {psi.shape[0]} entries, trajectory has {y.shape[1]} ordinary agents")
    s = y @ psi
    return MartingaleSeries(s, np.diff(s))


def conditional_mean_factor(alpha: float, lam: float) -> float:
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not 0 <= lam < 1:
        raise ValueError(f"dominant eigenvalue must lie in [0, 1), got {lam}")
    c = 1.0 - alpha * (1.0 - lam)
    assert 0 < c < 1
    return c


def conditional_variance_analytic(y, psi, alpha: float, lam: float) -> float:
    y = np.asarray(y, dtype=float)
    psi = np.asarray(psi, dtype=float)
    return float(alpha**2 * lam**2 * np.sum(psi**2 * y * (1.0 - y)))


# --- exact one-step law ----------------------------------------------------


@dataclass(frozen=True)
class OneStepLaw:
    """All ``2^(K-1)`` successors of a fixed ordinary state and their probabilities."""

    probabilities: np.ndarray
    successors: np.ndarray

    def mean(self, psi) -> float:
        return float(self.probabilities @ (self.successors @ psi))

    def variance(self, psi) -> float:
        s = self.successors @ psi
        mu = self.probabilities @ s
        return float(self.probabilities @ (s - mu) ** 2)


def enumerate_one_step(cfg: RAConfig, y) -> OneStepLaw:
    """Exact distribution of ``Y[n+1]`` given ``Y[n] = y``."""
    y = np.asarray(y, dtype=float)
    m = y.shape[0]
    if m != cfg.size - 1:
        raise DimensionMismatch("state length does not match the trust matrix")
    if m > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration limited to {ENUMERATION_LIMIT} ordinary agents")
    b = np.array(list(itertools.product((0.0, 1.0), repeat=m)))
    prob = np.prod(np.where(b == 1.0, y, 1.0 - y), axis=1)
    q = cfg.t[1:, 1:]
    successors = (1.0 - cfg.alpha) * y[None, :] + cfg.alpha * b @ q.T
    return OneStepLaw(prob, successors)


def _branch(cfg: RAConfig, y, samples: int, seed: int) -> np.ndarray:
    """``samples`` independent one-step successors of ``(0, y)`` via the engine kernel."""
    rng = make_rng(seed)
    y = np.asarray(y, dtype=float)
    x = np.tile(np.concatenate([[0.0], y]), (samples, 1))
    a = np.zeros_like(x)
    a[:, 1:] = rng.random((samples, y.shape[0])) < y
    return _ra_update(cfg.t, cfg.alpha, x, a)[:, 1:]


def _z(empirical: float, analytic: float, stderr: float) -> float:
    if stderr > 0:
        return (empirical - analytic) / stderr
    return 0.0 if np.isclose(empirical, analytic, rtol=0, atol=1e-12) else float(np.copysign(np.inf, empirical - analytic))


@dataclass(frozen=True)
class VerificationReport:
    empirical: float
    analytic: float
    z_score: float
    samples: int

    def passed(self, z_bound: float) -> bool:
        return abs(self.z_score) <= z_bound

    def as_dict(self) -> dict:
        return {"empirical": self.empirical, "analytic": self.analytic,
                "z_score": self.z_score, "samples": self.samples}


def verify_conditional_mean(cfg: RAConfig, y, psi, lam: float, samples: int, seed: int) -> VerificationReport:
    psi = np.asarray(psi, dtype=float)
    s = _branch(cfg, y, samples, seed) @ psi
    analytic = conditional_mean_factor(cfg.alpha, lam) * float(psi @ np.asarray(y, dtype=float))
    empirical = float(s.mean())
    stderr = float(s.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return VerificationReport(empirical, analytic, _z(empirical, analytic, stderr), samples)


def verify_conditional_variance(cfg: RAConfig, y, psi, lam: float, samples: int, seed: int) -> VerificationReport:
    """Sample variance of ``Delta S`` from a fixed state against the closed form.

    The standard error of the sample variance uses the fourth central moment.
    """
    psi = np.asarray(psi, dtype=float)
    y = np.asarray(y, dtype=float)
    ds = _branch(cfg, y, samples, seed) @ psi - psi @ y
    shifted = ds - ds[0]
    centred = shifted - shifted.mean()
    empirical = float(centred @ centred / (samples - 1))
    m4 = float(np.mean(centred**4))
    stderr = float(np.sqrt(max(m4 - empirical**2, 0.0) / samples))
    analytic = conditional_variance_analytic(y, psi, cfg.alpha, lam)
    return VerificationReport(empirical, analytic, _z(empirical, analytic, stderr), samples)


# --- ensemble estimators ---------------------------------------------------


def polarization_series(ensemble: EnsembleSummary, k: int) -> np.ndarray:
    """``E[(X_k[n] (1 - X_k[n]))^2]`` for every recorded n."""
    return ensemble.polarization[:, k]


def middle_mass(ensemble: EnsembleSummary, k: int, n: int, eps: float = 0.05) -> float:
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")
    return float(ensemble.middle_mass[ensemble.eps_index(eps), n, k])


def herding_probability(ensemble: EnsembleSummary, n: int, eps: float = 0.05) -> np.ndarray:
    """``P(X_k[n] > eps)`` for each ordinary agent: mass still away from the stubborn opinion 0."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return ensemble.herd_prob[ensemble.eps_index(eps), n, 1:].copy()


def upper_herding_probability(ensemble: EnsembleSummary, n: int, eps: float = 0.05) -> np.ndarray:
    """``P(X_k[n] < 1 - eps)`` per ordinary agent, the upper tail reported alongside the herding estimate."""
    return ensemble.upper_herd_prob[ensemble.eps_index(eps), n, 1:].copy()


@dataclass(frozen=True)
class PropagationTable:
    i: int
    j: int
    eps: float
    delta: float
    mean_j: np.ndarray
    tail_j: np.ndarray
    middle_i: np.ndarray
    tail_i: np.ndarray

    @property
    def below_delta(self) -> np.ndarray:
        return self.tail_i < self.delta

    def first_time_below(self) -> Optional[int]:
        hits = np.flatnonzero(self.below_delta)
        return int(hits[0]) if len(hits) else None

    def rows(self):
        for n in range(self.tail_i.shape[0]):
            yield n, float(self.mean_j[n]), float(self.tail_j[n]), float(self.middle_i[n]), float(self.tail_i[n])


def neighbor_propagation_check(
    ensemble: EnsembleSummary, T: TrustMatrix, i: int, j: int, eps: float = 0.05, delta: float = 0.05
) -> PropagationTable:
    """Time table of how agent ``j`` herding toward 0 drags agent ``i`` along.

    Requires ``t_ij > 0``. Reported as data, since the underlying statement is
    asymptotic.
    """
    if not T.weights[i, j] > 0:
        raise ValueError(f"agent {i} puts no trust in agent {j}")
    e = ensemble.eps_index(eps)
    return PropagationTable(
        i=i, j=j, eps=eps, delta=delta,
        mean_j=ensemble.mean[:, j].copy(),
        tail_j=ensemble.herd_prob[e, :, j].copy(),
        middle_i=ensemble.middle_mass[e, :, i].copy(),
        tail_i=ensemble.herd_prob[e, :, i].copy(),
    )


# --- graph-side checks -----------------------------------------------------


@dataclass(frozen=True)
class LayerDecomposition:
    """Disjoint sets of ordinary agents (internal indices) by trust distance
    from the stubborn agent; ``layers[0]`` trusts it directly."""

    layers: tuple[frozenset, ...]

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    def layer_of(self) -> dict[int, int]:
        return {a: p for p, layer in enumerate(self.layers) for a in layer}


def layer_decomposition(T: TrustMatrix, tau_row: float = TAU_ROW) -> LayerDecomposition:
    p = partition_stubborn(T, tau_row)
    w = p.assemble()
    m = p.n_ordinary
    remaining = set(range(1, m + 1))
    frontier = {i for i in remaining if w[i, 0] > 0}
    layers = []
    while frontier:
        layers.append(frozenset(frontier))
        remaining -= frontier
        frontier = {i for i in remaining if any(w[i, j] > 0 for j in layers[-1])}
    if remaining:
        raise IncompleteCoverage(remaining)
    return LayerDecomposition(tuple(layers))


@dataclass(frozen=True)
class ContractionReport:
    row_sums: np.ndarray
    first_strict_power: int

    @property
    def max_row_sums(self) -> np.ndarray:
        return self.row_sums.max(axis=1)


def row_sum_contraction(A, M: Optional[int] = None, slack: float = 1e-12) -> ContractionReport:
    """Row sums of ``A, A^2, ..., A^M`` (``M`` defaults to the size of ``A``).

    Checks that row sums never increase with the power (up to ``slack``) and
    that every row sum of ``A^M`` is strictly below 1.
    """
    a = np.asarray(A, dtype=float)
    if M is None:
        M = a.shape[0]
    ones = np.ones(a.shape[0])
    first = a @ ones
    if not np.any(first < 1.0):
        raise ContractionViolation("no row sum is below 1; the contraction hypothesis fails")
    sums = [first]
    for n in range(2, M + 1):
        nxt = a @ sums[-1]
        bad = np.flatnonzero(nxt > sums[-1] + slack)
        if len(bad):
            raise ContractionViolation(f"row {int(bad[0])} sum increased at power {n}")
        sums.append(nxt)
    sums = np.array(sums)
    strict = np.flatnonzero(np.all(sums < 1.0, axis=1))
    if not len(strict) or sums[-1].max() >= 1.0:
        raise ContractionViolation(f"row sums of A^{M} are not all strictly below 1: {sums[-1].tolist()}")
    return ContractionReport(sums, int(strict[0]) + 1)
