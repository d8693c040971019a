"""Experiment configuration and the artifact-writing runner.

Artifacts written to ``out`` (agent indices 1-based, floats as shortest
round-trip decimals, CSVs start with a ``# format_version=1`` line):

- ``trajectory.csv`` (degroot) or ``trajectory_trial{i:04d}.csv`` (ra):
  columns ``n, agent_1 .. agent_K``
- ``ensemble.csv`` (ra): ``n, k, mean, middle_mass@eps, herd_prob@eps,
  upper_herd_prob@eps`` for every eps, then ``polarization``
- ``martingale.csv`` (ra): ``n, s_mean, s_stderr, s_predicted, ds_mean, ds_second_moment``
- ``analysis.json``: spectral data, consensus gain, layers, verification reports
- ``manifest.json``: the resolved configuration, seeds and library versions
"""

from __future__ import annotations

import json
import math
import platform
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (
    ENUMERATION_LIMIT,
    conditional_mean_factor,
    conditional_variance_analytic,
    enumerate_one_step,
    layer_decomposition,
    verify_conditional_mean,
    verify_conditional_variance,
)
from .core import TAU_ROW, OpinionState, TrustMatrix, is_irreducible, partition_stubborn
from .dynamics import RAConfig, degroot_run, ra_run, run_ensemble, splitmix64, trial_seed
from .networks import FORMAT_VERSION, GeneratorSpec, generate_network, load_network
from .spectral import consensus_gain, limit_power, spectral_radius

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_STRICT = 3

VERIFY_STREAM = 0x5EED_F00D_CAFE_D00D
MODELS = ("degroot", "ra")


class ConfigError(ValueError):
    pass


@dataclass
class Tolerances:
    tau_row: float = TAU_ROW
    tau_conv: float = 1e-12
    tau_eig: float = 1e-12
    tau_lim: float = 1e-10


@dataclass
class ExperimentConfig:
    model: str
    network: dict
    out: str = "out"
    alpha: Optional[float] = None
    initial: dict = field(default_factory=lambda: {"kind": "constant", "value": 0.5})
    stubborn_value: float = 0.0
    horizon: int = 100
    trials: int = 1000
    epsilons: list = field(default_factory=lambda: [0.05])
    tolerances: Tolerances = field(default_factory=Tolerances)
    max_iter: int = 10**6
    seed: int = 0
    stride: int = 1
    save_trajectories: int = 1
    verify_samples: int = 100_000
    strict_z: Optional[float] = None
    # output-invariant; not recorded in the manifest
    workers: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d.pop("format_version", None)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "tolerances" in d:
            d["tolerances"] = Tolerances(**d["tolerances"])
        cfg = cls(**d)
        cfg.check()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self, for_manifest: bool = False) -> dict:
        d = asdict(self)
        d["format_version"] = FORMAT_VERSION
        if for_manifest:
            d.pop("workers")
            d.pop("out")
        return d

    def check(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if not ("path" in self.network) ^ ("generator" in self.network):
            raise ConfigError("network needs exactly one of 'path' or 'generator'")
        if "path" in self.network and not Path(self.network["path"]).exists():
            raise ConfigError(f"network file {self.network['path']} does not exist")
        if self.horizon < 0 or self.stride < 1 or self.max_iter < 1:
            raise ConfigError("horizon must be >= 0, stride and max_iter >= 1")
        if not all(0 < e < 0.5 for e in self.epsilons) or not self.epsilons:
            raise ConfigError("epsilons must be a non-empty list of values in (0, 0.5)")
        if self.model == "ra":
            if self.alpha is None or not 0 < self.alpha < 1:
                raise ConfigError("ra model needs alpha in (0, 1)")
            if self.trials < 1:
                raise ConfigError("trials must be >= 1")
            if self.stubborn_value != 0.0:
                raise ConfigError("the stubborn opinion is 0 in the ra model")
        if not 0 <= self.stubborn_value <= 1:
            raise ConfigError("stubborn_value must lie in [0, 1]")
        if self.initial.get("kind") not in ("explicit", "constant", "uniform"):
            raise ConfigError("initial.kind must be explicit, constant or uniform")


def build_network(cfg: ExperimentConfig) -> TrustMatrix:
    tau = cfg.tolerances.tau_row
    if "generator" in cfg.network:
        return generate_network(GeneratorSpec(**cfg.network["generator"]), tau)
    net = cfg.network
    return load_network(net["path"], net.get("format"), K=net.get("K"),
                        renormalize=net.get("renormalize", False), tau_row=tau)


def build_initial(cfg: ExperimentConfig, K: int) -> OpinionState:
    spec = cfg.initial
    kind = spec["kind"]
    if kind == "explicit":
        y = np.asarray(spec["values"], dtype=float)
        if y.shape != (K - 1,):
            raise ConfigError(f"initial.values needs {K - 1} ordinary opinions")
    elif kind == "constant":
        y = np.full(K - 1, float(spec["value"]))
    else:
        y = np.random.default_rng(int(spec.get("seed", 0))).random(K - 1)
    try:
        return OpinionState.from_ordinary(cfg.stubborn_value, y)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _f(v) -> str:
    return repr(float(v))


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


class _Writer:
    def __init__(self, out: Path):
        self.out = out
        self.written: list[Path] = []

    def text(self, name: str, content: str) -> None:
        path = self.out / name
        path.write_text(content)
        self.written.append(path)

    def json(self, name: str, obj) -> None:
        self.text(name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def csv(self, name: str, header: list[str], rows) -> None:
        lines = [f"# format_version={FORMAT_VERSION}", ",".join(header)]
        lines.extend(",".join(row) for row in rows)
        self.text(name, "\n".join(lines) + "\n")

    def rollback(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)


def _trajectory_rows(traj):
    for n, state in zip(traj.times, traj.states):
        yield [str(int(n))] + [_f(v) for v in state]


def _spectral_section(T: TrustMatrix, cfg: ExperimentConfig) -> dict:
    p = partition_stubborn(T, cfg.tolerances.tau_row)
    perron = spectral_radius(p.interior, cfg.tolerances.tau_eig)
    gain = consensus_gain(p)
    layers = layer_decomposition(T, cfg.tolerances.tau_row)
    return {
        "K": T.size,
        "classification": T.classification.value,
        "interior_irreducible": is_irreducible(p.interior),
        "lambda": perron.radius,
        "psi": perron.left_vector,
        "perron_iterations": perron.iterations,
        "perron_residual": perron.residual,
        "consensus_gain": gain.gain_column,
        "layers": [sorted(a + 1 for a in layer) for layer in layers.layers],
    }, p, perron, gain


def _run_degroot(cfg, T, x0, w: _Writer, manifest: dict) -> int:
    section, p, perron, gain = _spectral_section(T, cfg)
    traj = degroot_run(T, x0, cfg.tolerances.tau_conv, cfg.max_iter, cfg.stride, cfg.tolerances.tau_row)
    lp = limit_power(T, cfg.tolerances.tau_lim, cfg.max_iter, cfg.tolerances.tau_row)
    predicted = gain.gain_column * x0.stubborn_value
    section.update({
        "steps": traj.steps,
        "limit": traj.states[-1],
        "predicted_limit": np.concatenate([[x0.stubborn_value], predicted]),
        "limit_error": float(np.max(np.abs(traj.states[-1][1:] - predicted))),
        "limit_power_gain": lp.gain_column,
        "limit_power_iterations": lp.iterations,
        "limit_power_discrepancy": float(np.max(np.abs(lp.gain_column - gain.gain_column))),
    })
    header = ["n"] + [f"agent_{k + 1}" for k in range(T.size)]
    w.csv("trajectory.csv", header, _trajectory_rows(traj))
    w.json("analysis.json", {"format_version": FORMAT_VERSION, "model": "degroot", **section})
    w.json("manifest.json", manifest)
    return EXIT_OK


def _run_ra(cfg, T, x0, w: _Writer, manifest: dict) -> int:
    section, p, perron, gain = _spectral_section(T, cfg)
    lam = perron.radius
    c = conditional_mean_factor(cfg.alpha, lam)
    ra_cfg = RAConfig(cfg.alpha, T, x0, cfg.horizon, stride=cfg.stride, tau_row=cfg.tolerances.tau_row)
    psi = perron.left_vector
    y0 = x0.ordinary

    verify = {}
    verify_seeds = {}
    if cfg.verify_samples > 1:
        s_mean = splitmix64(cfg.seed ^ VERIFY_STREAM)
        s_var = splitmix64(s_mean)
        verify_seeds = {"conditional_mean": s_mean, "conditional_variance": s_var}
        verify["conditional_mean"] = verify_conditional_mean(ra_cfg, y0, psi, lam, cfg.verify_samples, s_mean).as_dict()
        verify["conditional_variance"] = verify_conditional_variance(ra_cfg, y0, psi, lam, cfg.verify_samples, s_var).as_dict()
        if T.size - 1 <= ENUMERATION_LIMIT:
            law = enumerate_one_step(ra_cfg, y0)
            verify["enumeration"] = {
                "mean": law.mean(psi),
                "mean_analytic": c * float(psi @ y0),
                "variance": law.variance(psi),
                "variance_analytic": conditional_variance_analytic(y0, psi, cfg.alpha, lam),
            }

    ens = run_ensemble(ra_cfg, cfg.trials, cfg.seed, psi, cfg.epsilons, cfg.workers)

    header = ["n"] + [f"agent_{k + 1}" for k in range(T.size)]
    for i in range(min(cfg.save_trajectories, cfg.trials)):
        traj = ra_run(ra_cfg, trial_seed(cfg.seed, i))
        w.csv(f"trajectory_trial{i:04d}.csv", header, _trajectory_rows(traj))

    eh = ["n", "k", "mean"]
    for e in cfg.epsilons:
        eh += [f"middle_mass@{e!r}", f"herd_prob@{e!r}", f"upper_herd_prob@{e!r}"]
    eh.append("polarization")

    def ens_rows():
        for n in range(0, cfg.horizon + 1, cfg.stride):
            for k in range(T.size):
                row = [str(n), str(k + 1), _f(ens.mean[n, k])]
                for e in range(len(cfg.epsilons)):
                    row += [_f(ens.middle_mass[e, n, k]), _f(ens.herd_prob[e, n, k]),
                            _f(ens.upper_herd_prob[e, n, k])]
                row.append(_f(ens.polarization[n, k]))
                yield row

    w.csv("ensemble.csv", eh, ens_rows())

    s0 = float(psi @ y0)
    se = ens.s_stderr()

    def mart_rows():
        for n in range(cfg.horizon + 1):
            yield [str(n), _f(ens.s_mean[n]), _f(se[n]), _f(c**n * s0),
                   "" if n == 0 else _f(ens.ds_mean[n]), "" if n == 0 else _f(ens.ds_second_moment[n])]

    w.csv("martingale.csv", ["n", "s_mean", "s_stderr", "s_predicted", "ds_mean", "ds_second_moment"], mart_rows())

    N = cfg.horizon
    terminal = {
        "horizon": N,
        "herd_prob": {repr(e): ens.herd_prob[i, N, 1:] for i, e in enumerate(cfg.epsilons)},
        "upper_herd_prob": {repr(e): ens.upper_herd_prob[i, N, 1:] for i, e in enumerate(cfg.epsilons)},
        "middle_mass": {repr(e): ens.middle_mass[i, N, 1:] for i, e in enumerate(cfg.epsilons)},
        "herded": {repr(e): ens.herded[i, N] for i, e in enumerate(cfg.epsilons)},
        "polarization": ens.polarization[N, 1:],
        "s_mean": ens.s_mean[N],
        "s_predicted": c**N * s0,
    }
    section.update({"alpha": cfg.alpha, "c": c, "S0": s0, "verification": verify, "terminal": terminal})
    w.json("analysis.json", {"format_version": FORMAT_VERSION, "model": "ra", **section})
    manifest["seeds"]["verification"] = verify_seeds
    w.json("manifest.json", manifest)

    if cfg.strict_z is not None:
        zs = [abs(v["z_score"]) for k, v in verify.items() if "z_score" in v]
        if any(z > cfg.strict_z for z in zs):
            return EXIT_STRICT
    return EXIT_OK


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run one experiment and write its artifacts; returns a process exit code.

    Files written before a failure are removed.
    """
    cfg.check()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    w = _Writer(out)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": cfg.to_dict(for_manifest=True),
        "seeds": {
            "base": cfg.seed,
            "trial_seed": "splitmix64(base + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64), PCG64 per trial",
        },
        "versions": {
            "opinion_herding": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    try:
        T = build_network(cfg)
        x0 = build_initial(cfg, T.size)
        runner = _run_degroot if cfg.model == "degroot" else _run_ra
        return runner(cfg, T, x0, w, manifest)
    except BaseException:
        w.rollback()
        raise
