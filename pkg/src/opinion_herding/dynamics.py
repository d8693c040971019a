"""DeGroot and Random Actions (RA) dynamics with one stubborn agent.

RA update: ``X[n+1] = (1 - alpha) X[n] + alpha T A[n]`` with
``A_k[n] ~ Bernoulli(X_k[n])``. The stubborn agent sits at opinion 0 and
always plays action 0; no random number is consumed for it.

Randomness
----------
Every trial owns a PCG64 stream. Ordinary agent ``k`` plays 1 iff
``u < X_k[n]`` with ``u`` uniform in [0, 1); each step consumes exactly K-1
doubles, in agent order. Ensemble trial ``i`` is seeded with
``trial_seed(base_seed, i)``, the SplitMix64 output for state
``base_seed + (i + 1) * 0x9E3779B97F4A7C15 (mod 2**64)``:

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .core import (
    TAU_ROW,
    OpinionState,
    TrustMatrix,
    partition_stubborn,
)
from .spectral import NoConvergence

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
DUST = 1e-12
TRIAL_BATCH = 1024
CHUNK_DOUBLES = 1 << 20


def splitmix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(base_seed: int, index: int) -> int:
    return splitmix64(base_seed + (index + 1) * GOLDEN_GAMMA)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


class ModelTag(enum.Enum):
    DEGROOT = "degroot"
    RA = "ra"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded states ``states[i]`` at times ``times[i]`` (every ``stride`` steps,
    plus the final step)."""

    states: np.ndarray
    times: np.ndarray
    model_tag: ModelTag
    seed: Optional[int] = None
    alpha: Optional[float] = None
    actions: Optional[np.ndarray] = None

    @property
    def steps(self) -> int:
        return int(self.times[-1])

    @property
    def final(self) -> OpinionState:
        return OpinionState(self.states[-1])

    def state(self, i: int) -> OpinionState:
        return OpinionState(self.states[i])


@dataclass(frozen=True, eq=False)
class RAConfig:
    alpha: float
    trust: TrustMatrix
    initial: OpinionState
    horizon: int
    record_actions: bool = False
    stride: int = 1
    tau_row: float = TAU_ROW

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if len(self.initial) != self.trust.size:
            raise ValueError("initial state and trust matrix disagree on K")
        if self.initial.stubborn_value != 0.0:
            raise ValueError("the stubborn agent's opinion is 0 in the RA model")
        part = partition_stubborn(self.trust, self.tau_row)
        # exact zeros in the stubborn row keep X_1 pinned at 0
        object.__setattr__(self, "_t", part.assemble())

    @property
    def t(self) -> np.ndarray:
        return self._t

    @property
    def size(self) -> int:
        return self.trust.size


def _snap(x: np.ndarray) -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    if lo < -DUST or hi > 1 + DUST:
        raise AssertionError(f"opinion left [0, 1]: range [{lo!r}, {hi!r}]")
    return np.clip(x, 0.0, 1.0, out=x)


def _ra_update(t: np.ndarray, alpha: float, x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Batched ``(1-alpha) x + alpha T a`` for rows of ``x`` and ``a``.

    Column-by-column accumulation in a fixed order keeps every row's result
    independent of how many rows are processed together.
    """
    acc = np.zeros_like(x)
    for j in range(1, t.shape[0]):
        acc += a[:, j, None] * t[None, :, j]
    return _snap((1.0 - alpha) * x + alpha * acc)


def _iterate(
    t: np.ndarray,
    alpha: float,
    x0: np.ndarray,
    rngs: Sequence[np.random.Generator],
    horizon: int,
) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(n, X[n], A[n-1])`` for n = 1..horizon over a batch of trials."""
    b, k = x0.shape
    m = k - 1
    chunk = max(1, CHUNK_DOUBLES // max(1, b * m))
    x = x0.copy()
    a = np.zeros((b, k))
    n = 0
    while n < horizon:
        c = min(chunk, horizon - n)
        u = np.stack([g.random((c, m)) for g in rngs])
        for s in range(c):
            a[:, 1:] = u[:, s, :] < x[:, 1:]
            x = _ra_update(t, alpha, x, a)
            n += 1
            yield n, x, a


def degroot_step(T: TrustMatrix, x: OpinionState, tau_row: float = TAU_ROW) -> OpinionState:
    t = partition_stubborn(T, tau_row).assemble()
    return OpinionState(_snap(t @ x.values))


def degroot_run(
    T: TrustMatrix,
    x0: OpinionState,
    tau_conv: float = 1e-12,
    max_iter: int = 10**6,
    stride: int = 1,
    tau_row: float = TAU_ROW,
) -> Trajectory:
    """Iterate ``x <- T x`` until successive states differ by at most ``tau_conv``.

    On failure, :class:`NoConvergence` carries the last state in ``.state``.
    """
    t = partition_stubborn(T, tau_row).assemble()
    x = np.array(x0.values)
    states, times = [x.copy()], [0]
    diff = np.inf
    for n in range(1, max_iter + 1):
        nxt = _snap(t @ x)
        diff = float(np.max(np.abs(nxt - x)))
        x = nxt
        if diff <= tau_conv:
            states.append(x.copy())
            times.append(n)
            return Trajectory(np.array(states), np.array(times), ModelTag.DEGROOT)
        if n % stride == 0:
            states.append(x.copy())
            times.append(n)
    raise NoConvergence(max_iter, diff, OpinionState(x))


def sample_actions(x: OpinionState, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli actions; the stubborn component is 0 without drawing."""
    a = np.zeros(len(x), dtype=np.int8)
    u = rng.random(len(x) - 1)
    a[1:] = u < x.ordinary
    return a


def ra_step(cfg: RAConfig, x: OpinionState, a) -> OpinionState:
    a = np.asarray(a, dtype=float)
    if a[0] != 0:
        raise ValueError("the stubborn agent always plays action 0")
    new = _ra_update(cfg.t, cfg.alpha, x.values[None, :].copy(), a[None, :])
    return OpinionState(new[0])


def ra_run(cfg: RAConfig, seed: int) -> Trajectory:
    rng = make_rng(seed)
    x0 = np.array(cfg.initial.values)[None, :]
    states, times = [x0[0].copy()], [0]
    actions = [] if cfg.record_actions else None
    for n, x, a in _iterate(cfg.t, cfg.alpha, x0, [rng], cfg.horizon):
        if actions is not None:
            actions.append(a[0].astype(np.int8))
        if n % cfg.stride == 0 or n == cfg.horizon:
            states.append(x[0].copy())
            times.append(n)
    if actions is not None:
        actions = np.array(actions, dtype=np.int8).reshape(cfg.horizon, cfg.size)
    return Trajectory(
        np.array(states), np.array(times), ModelTag.RA, seed=seed, alpha=cfg.alpha, actions=actions
    )


@dataclass
class _Accumulator:
    """Per-time sums and event counts over trials; combined by addition."""

    horizon: int
    size: int
    epsilons: tuple[float, ...]
    psi: Optional[np.ndarray] = None
    trials: int = 0
    sum_x: np.ndarray = field(init=False)
    sum_x2: np.ndarray = field(init=False)
    sum_pol: np.ndarray = field(init=False)
    n_mid: np.ndarray = field(init=False)
    n_herd: np.ndarray = field(init=False)
    n_upper: np.ndarray = field(init=False)
    n_herded: np.ndarray = field(init=False)
    sum_s: np.ndarray = field(init=False)
    sum_s2: np.ndarray = field(init=False)
    sum_ds: np.ndarray = field(init=False)
    sum_ds2: np.ndarray = field(init=False)

    def __post_init__(self):
        t, k, e = self.horizon + 1, self.size, len(self.epsilons)
        self.sum_x = np.zeros((t, k))
        self.sum_x2 = np.zeros((t, k))
        self.sum_pol = np.zeros((t, k))
        self.n_mid = np.zeros((e, t, k), dtype=np.int64)
        self.n_herd = np.zeros((e, t, k), dtype=np.int64)
        self.n_upper = np.zeros((e, t, k), dtype=np.int64)
        self.n_herded = np.zeros((e, t), dtype=np.int64)
        self.sum_s = np.zeros(t)
        self.sum_s2 = np.zeros(t)
        self.sum_ds = np.zeros(t)
        self.sum_ds2 = np.zeros(t)
        self._prev_s = None

    def observe(self, n: int, x: np.ndarray) -> None:
        self.sum_x[n] += x.sum(axis=0)
        self.sum_x2[n] += (x * x).sum(axis=0)
        p = x * (1.0 - x)
        self.sum_pol[n] += (p * p).sum(axis=0)
        for i, eps in enumerate(self.epsilons):
            self.n_mid[i, n] += ((x > eps) & (x < 1.0 - eps)).sum(axis=0)
            self.n_herd[i, n] += (x > eps).sum(axis=0)
            self.n_upper[i, n] += (x < 1.0 - eps).sum(axis=0)
            self.n_herded[i, n] += int(np.all(x[:, 1:] <= eps, axis=1).sum())
        if self.psi is not None:
            s = x[:, 1:] @ self.psi
            self.sum_s[n] += s.sum()
            self.sum_s2[n] += (s * s).sum()
            if n > 0:
                ds = s - self._prev_s
                self.sum_ds[n] += ds.sum()
                self.sum_ds2[n] += (ds * ds).sum()
            self._prev_s = s

    def merge(self, other: "_Accumulator") -> None:
        self.trials += other.trials
        for name in ("sum_x", "sum_x2", "sum_pol", "n_mid", "n_herd", "n_upper",
                     "n_herded", "sum_s", "sum_s2", "sum_ds", "sum_ds2"):
            getattr(self, name).__iadd__(getattr(other, name))

    def summary(self) -> "EnsembleSummary":
        n = float(self.trials)
        has_psi = self.psi is not None
        ds_mean = self.sum_ds / n if has_psi else None
        ds_sq = self.sum_ds2 / n if has_psi else None
        if has_psi:
            ds_mean[0] = np.nan
            ds_sq[0] = np.nan
        return EnsembleSummary(
            trials=self.trials,
            epsilons=self.epsilons,
            mean=self.sum_x / n,
            second_moment=self.sum_x2 / n,
            polarization=self.sum_pol / n,
            middle_mass=self.n_mid / n,
            herd_prob=self.n_herd / n,
            upper_herd_prob=self.n_upper / n,
            herded=self.n_herded / n,
            s_mean=self.sum_s / n if has_psi else None,
            s_second_moment=self.sum_s2 / n if has_psi else None,
            ds_mean=ds_mean,
            ds_second_moment=ds_sq,
        )


@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    """Per-time statistics over RA trials.

    Arrays indexed ``[n, k]`` (time, internal agent index) or
    ``[e, n, k]`` with ``e`` indexing ``epsilons``:

    - ``middle_mass``: P(eps < X_k[n] < 1 - eps)
    - ``herd_prob``: P(X_k[n] > eps), mass not yet at the stubborn opinion 0
    - ``upper_herd_prob``: P(X_k[n] < 1 - eps)
    - ``herded[e, n]``: P(every ordinary agent has X_k[n] <= eps)

    ``s_*``/``ds_*`` hold first and second moments of ``S[n] = psi^T Y[n]``
    and ``S[n] - S[n-1]`` when a Perron vector was supplied (``ds_*[0]`` is NaN).
    """

    trials: int
    epsilons: tuple[float, ...]
    mean: np.ndarray
    second_moment: np.ndarray
    polarization: np.ndarray
    middle_mass: np.ndarray
    herd_prob: np.ndarray
    upper_herd_prob: np.ndarray
    herded: np.ndarray
    s_mean: Optional[np.ndarray] = None
    s_second_moment: Optional[np.ndarray] = None
    ds_mean: Optional[np.ndarray] = None
    ds_second_moment: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        return self.mean.shape[0] - 1

    @property
    def size(self) -> int:
        return self.mean.shape[1]

    def eps_index(self, eps: float) -> int:
        for i, e in enumerate(self.epsilons):
            if np.isclose(e, eps, rtol=0, atol=1e-15):
                return i
        raise KeyError(f"epsilon {eps} not tabulated; available {self.epsilons}")

    def mean_stderr(self) -> np.ndarray:
        var = np.maximum(self.second_moment - self.mean**2, 0.0)
        return np.sqrt(var / self.trials)

    def s_stderr(self) -> np.ndarray:
        if self.s_mean is None:
            raise ValueError("ensemble was run without a Perron vector")
        var = np.maximum(self.s_second_moment - self.s_mean**2, 0.0)
        return np.sqrt(var / self.trials)

    @classmethod
    def from_states(cls, states, epsilons=(0.05,), psi=None) -> "EnsembleSummary":
        """Summarise stored trajectories shaped ``(trials, horizon + 1, K)``."""
        states = np.asarray(states, dtype=float)
        trials, t, k = states.shape
        acc = _Accumulator(t - 1, k, tuple(epsilons), None if psi is None else np.asarray(psi))
        acc.trials = trials
        for n in range(t):
            acc.observe(n, states[:, n, :])
        return acc.summary()


def _run_batch(cfg: RAConfig, seeds: Sequence[int], epsilons, psi) -> _Accumulator:
    acc = _Accumulator(cfg.horizon, cfg.size, epsilons, psi)
    acc.trials = len(seeds)
    x0 = np.tile(cfg.initial.values, (len(seeds), 1))
    acc.observe(0, x0)
    rngs = [make_rng(s) for s in seeds]
    for n, x, _ in _iterate(cfg.t, cfg.alpha, x0, rngs, cfg.horizon):
        acc.observe(n, x)
    return acc


def run_ensemble(
    cfg: RAConfig,
    trials: int,
    base_seed: int,
    psi=None,
    epsilons: Sequence[float] = (0.05,),
    workers: int = 1,
) -> EnsembleSummary:
    """Run ``trials`` independent RA trajectories and aggregate per-time statistics.

    Trials are split into fixed batches of ``TRIAL_BATCH`` and partial sums
    are combined in batch order, so the result does not depend on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    epsilons = tuple(float(e) for e in epsilons)
    if psi is not None:
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (cfg.size - 1,):
            raise ValueError("Perron vector must have one entry per ordinary agent")
    seeds = [trial_seed(base_seed, i) for i in range(trials)]
    batches = [seeds[i : i + TRIAL_BATCH] for i in range(0, trials, TRIAL_BATCH)]
    if workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda s: _run_batch(cfg, s, epsilons, psi), batches))
    else:
        parts = [_run_batch(cfg, s, epsilons, psi) for s in batches]
    total = parts[0]
    for part in parts[1:]:
        total.merge(part)
    return total.summary()
