"""Command line entry point: ``opinion-herding <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    ENUMERATION_LIMIT,
    IncompleteCoverage,
    conditional_mean_factor,
    conditional_variance_analytic,
    enumerate_one_step,
    layer_decomposition,
    verify_conditional_mean,
    verify_conditional_variance,
)
from .core import HypothesisViolated, OpinionState, TrustMatrixError, is_irreducible, partition_stubborn
from .dynamics import RAConfig, splitmix64
from .experiment import (
    EXIT_CONFIG,
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_STRICT,
    ConfigError,
    ExperimentConfig,
    build_network,
    run_experiment,
)
from .networks import GeneratorSpec, InfeasibleSpec, generate_network, load_network, save_network
from .spectral import NoConvergence, spectral_radius


def _add_network_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("network")
    g.add_argument("--network", help="edge-list or matrix-json file")
    g.add_argument("--format", choices=("edge-list", "matrix-json"))
    g.add_argument("--kind", choices=("ring", "star", "complete", "random-irreducible"),
                   help="generate the network instead of loading it")
    g.add_argument("--K", type=int, help="number of agents, stubborn agent included")
    g.add_argument("--beta", type=float, default=0.5)
    g.add_argument("--links", choices=("one", "all"), default="one")
    g.add_argument("--network-seed", type=int, default=0)


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON; flags override it")
    _add_network_args(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--initial", help="constant:V | explicit:V2,V3,... | uniform:SEED")
    p.add_argument("--epsilon", type=float, action="append")
    p.add_argument("--out")
    p.add_argument("--stride", type=int)


def _network_dict(args) -> dict | None:
    if args.network:
        d = {"path": args.network}
        if args.format:
            d["format"] = args.format
        if args.K:
            d["K"] = args.K
        return d
    if args.kind:
        if args.K is None:
            raise ConfigError("--kind needs --K")
        return {"generator": GeneratorSpec(args.kind, args.K, args.beta, args.network_seed, args.links).to_dict()}
    return None


def _parse_initial(text: str) -> dict:
    kind, _, value = text.partition(":")
    if kind == "constant":
        return {"kind": kind, "value": float(value)}
    if kind == "explicit":
        return {"kind": kind, "values": [float(v) for v in value.split(",")]}
    if kind == "uniform":
        return {"kind": kind, "seed": int(value or 0)}
    raise ConfigError(f"bad --initial {text!r}")


def _experiment_config(args, model: str) -> ExperimentConfig:
    base = json.loads(Path(args.config).read_text()) if args.config else {}
    base["model"] = model
    net = _network_dict(args)
    if net is not None:
        base["network"] = net
    if "network" not in base:
        raise ConfigError("no network given (use --network, --kind or a config file)")
    overrides = {
        "seed": args.seed, "horizon": args.horizon, "out": args.out, "stride": args.stride,
        "epsilons": args.epsilon,
        "initial": _parse_initial(args.initial) if args.initial else None,
    }
    for key in ("alpha", "trials", "workers", "verify_samples", "x1"):
        if hasattr(args, key):
            overrides["stubborn_value" if key == "x1" else key] = getattr(args, key)
    if getattr(args, "strict", None) is not None:
        overrides["strict_z"] = args.strict
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(base)


def cmd_validate(args) -> int:
    T = load_network(args.path, args.format, K=args.K, stubborn=False, renormalize=args.renormalize)
    info = {"K": T.size, "classification": T.classification.value}
    try:
        p = partition_stubborn(T)
    except TrustMatrixError as exc:
        info["stubborn_form"] = False
        info["reason"] = str(exc)
    else:
        info["stubborn_form"] = True
        info["interior_irreducible"] = is_irreducible(p.interior)
        info["stubborn_influence"] = bool(np.any(p.gain > 0))
        if info["interior_irreducible"]:
            info["lambda"] = spectral_radius(p.interior).radius
    print(json.dumps(info, indent=2))
    return EXIT_OK


def cmd_generate(args) -> int:
    spec = GeneratorSpec(args.kind, args.K, args.beta, args.seed, args.links,
                         require_irreducible=not args.allow_reducible)
    T = generate_network(spec)
    save_network(T, args.out, args.format)
    return EXIT_OK


def cmd_run(args, model: str) -> int:
    cfg = _experiment_config(args, model)
    code = run_experiment(cfg)
    analysis = json.loads((Path(cfg.out) / "analysis.json").read_text())
    print(_summarise(analysis))
    return code


def cmd_verify(args) -> int:
    net = _network_dict(args)
    if net is None:
        raise ConfigError("no network given (use --network or --kind)")
    cfg = ExperimentConfig(model="ra", network=net, alpha=args.alpha)
    cfg.check()
    T = build_network(cfg)
    y = np.array([float(v) for v in args.state.split(",")])
    x0 = OpinionState.from_ordinary(0.0, y)
    ra_cfg = RAConfig(args.alpha, T, x0, horizon=0)
    perron = spectral_radius(partition_stubborn(T).interior)
    lam, psi = perron.radius, perron.left_vector
    s_mean = splitmix64(args.seed)
    mean = verify_conditional_mean(ra_cfg, y, psi, lam, args.samples, s_mean)
    var = verify_conditional_variance(ra_cfg, y, psi, lam, args.samples, splitmix64(s_mean))
    report = {"lambda": lam, "psi": psi.tolist(), "c": conditional_mean_factor(args.alpha, lam),
              "conditional_mean": mean.as_dict(), "conditional_variance": var.as_dict()}
    if len(y) <= ENUMERATION_LIMIT:
        law = enumerate_one_step(ra_cfg, y)
        report["enumeration"] = {
            "mean": law.mean(psi), "mean_analytic": report["c"] * float(psi @ y),
            "variance": law.variance(psi),
            "variance_analytic": conditional_variance_analytic(y, psi, args.alpha, lam),
        }
    print(json.dumps(report, indent=2))
    if args.strict is not None and not (mean.passed(args.strict) and var.passed(args.strict)):
        return EXIT_STRICT
    return EXIT_OK


def cmd_layers(args) -> int:
    T = load_network(args.path, args.format, K=args.K)
    try:
        layers = layer_decomposition(T)
    except IncompleteCoverage as exc:
        print(f"incomplete coverage; unreachable agents: {sorted(a + 1 for a in exc.uncovered)}")
        return EXIT_FAILURE
    for p, layer in enumerate(layers.layers):
        print(f"V{p}: {' '.join(str(a + 1) for a in sorted(layer))}")
    return EXIT_OK


def _summarise(a: dict) -> str:
    lines = [f"model={a['model']} K={a['K']} lambda={a['lambda']:.6g}",
             f"consensus gain={a['consensus_gain']}"]
    if a["model"] == "degroot":
        lines.append(f"steps={a['steps']} limit={a['limit']} limit_error={a['limit_error']:.3g}")
    else:
        t = a["terminal"]
        lines.append(f"alpha={a['alpha']} c={a['c']:.6g} horizon={t['horizon']}")
        for e, probs in t["herd_prob"].items():
            lines.append(f"P(X_k > {e}) at horizon: {probs}")
            lines.append(f"middle mass at horizon: {t['middle_mass'][e]}")
        for name, rep in a.get("verification", {}).items():
            if "z_score" in rep:
                lines.append(f"{name}: empirical={rep['empirical']:.6g} analytic={rep['analytic']:.6g} z={rep['z_score']:.2f}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    analysis = json.loads((Path(args.dir) / "analysis.json").read_text())
    print(_summarise(analysis))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opinion-herding",
                                     description="DeGroot and random-action opinion dynamics with a stubborn agent")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="classify a trust matrix and check the stubborn hypotheses")
    p.add_argument("path")
    p.add_argument("--format", choices=("edge-list", "matrix-json"))
    p.add_argument("--K", type=int)
    p.add_argument("--renormalize", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("generate", help="write a generated trust network")
    p.add_argument("--kind", required=True, choices=("ring", "star", "complete", "random-irreducible"))
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--links", choices=("one", "all"), default="one")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allow-reducible", action="store_true")
    p.add_argument("--format", choices=("edge-list", "matrix-json"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("degroot", help="run the deterministic model to its limit")
    _add_run_args(p)
    p.add_argument("--x1", type=float, help="stubborn opinion")
    p.set_defaults(func=lambda a: cmd_run(a, "degroot"))

    p = sub.add_parser("ra", help="run a random-actions ensemble")
    _add_run_args(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--verify-samples", type=int)
    p.add_argument("--strict", type=float, metavar="Z")
    p.set_defaults(func=lambda a: cmd_run(a, "ra"))

    p = sub.add_parser("verify", help="check the one-step conditional mean and variance from a fixed state")
    _add_network_args(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--state", required=True, help="ordinary opinions y2,...,yK")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict", type=float, metavar="Z")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("layers", help="trust layers around the stubborn agent")
    p.add_argument("path")
    p.add_argument("--format", choices=("edge-list", "matrix-json"))
    p.add_argument("--K", type=int)
    p.set_defaults(func=cmd_layers)

    p = sub.add_parser("report", help="summarise an output directory")
    p.add_argument("dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TrustMatrixError, InfeasibleSpec, HypothesisViolated, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
