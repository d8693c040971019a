"""Trust-network files and generators.

Edge-list format (1-based agents, agent 1 stubborn)::

    # optional comments
    2 1 0.5      # agent 2 trusts agent 1 with weight 0.5, i.e. t[2,1] = 0.5
    2 3 0.5
    3 2 1.0

A row with no entries for agent 1 defaults to the stubborn row (1, 0, ..., 0).
Matrix-JSON format: ``{"format_version": 1, "K": 3, "rows": [[...], ...]}``.
Floats are written with ``repr`` (shortest round-trip decimal).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (
    TAU_ROW,
    TrustMatrix,
    TrustMatrixError,
    is_irreducible,
    partition_stubborn,
    validate_trust_matrix,
)

FORMAT_VERSION = 1
FORMATS = ("edge-list", "matrix-json")


class ParseError(TrustMatrixError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class RowSumNotOneError(TrustMatrixError):
    def __init__(self, i: int, total: float):
        super().__init__(f"row {i + 1} sums to {total!r}, expected 1")
        self.i, self.total = i, total


class InfeasibleSpec(ValueError):
    pass


def _infer_format(path: Path) -> str:
    return "matrix-json" if path.suffix.lower() == ".json" else "edge-list"


def _parse_edge_list(text: str, K: Optional[int]) -> np.ndarray:
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'i j w', got {raw!r}", lineno)
        try:
            i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"cannot parse {raw!r}", lineno) from None
        if i < 1 or j < 1:
            raise ParseError("agent indices are 1-based", lineno)
        edges.append((lineno, i, j, w))
    if not edges:
        raise ParseError("no edges found")
    size = K if K is not None else max(max(i, j) for _, i, j, _ in edges)
    t = np.zeros((size, size))
    for lineno, i, j, w in edges:
        if i > size or j > size:
            raise ParseError(f"agent index exceeds K={size}", lineno)
        t[i - 1, j - 1] += w
    return t


def _parse_matrix_json(text: str) -> np.ndarray:
    try:
        doc = json.loads(text)
        rows = np.array(doc["rows"], dtype=float)
        K = int(doc.get("K", len(rows)))
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"bad matrix-json document: {exc}") from None
    if rows.ndim != 2 or rows.shape != (K, K):
        raise ParseError(f"rows must form a {K}x{K} matrix, got shape {rows.shape}")
    return rows


def load_network(
    path,
    format: Optional[str] = None,
    K: Optional[int] = None,
    stubborn: bool = True,
    renormalize: bool = False,
    tau_row: float = TAU_ROW,
) -> TrustMatrix:
    """Read a trust matrix; rows must sum to 1 (within ``tau_row``) unless
    ``renormalize`` rescales every non-empty row."""
    path = Path(path)
    fmt = format or _infer_format(path)
    text = path.read_text()
    if fmt == "edge-list":
        t = _parse_edge_list(text, K)
        if stubborn and not t[0].any():
            t[0, 0] = 1.0
    elif fmt == "matrix-json":
        t = _parse_matrix_json(text)
    else:
        raise ValueError(f"unknown network format {fmt!r}; expected one of {FORMATS}")

    sums = t.sum(axis=1)
    if renormalize:
        nz = sums > 0
        t[nz] /= sums[nz, None]
        sums = t.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tau_row)
    if len(bad):
        raise RowSumNotOneError(int(bad[0]), float(sums[bad[0]]))
    T = validate_trust_matrix(t, tau_row)
    if stubborn:
        partition_stubborn(T, tau_row)
    return T


def save_network(T: TrustMatrix, path, format: Optional[str] = None) -> None:
    path = Path(path)
    fmt = format or _infer_format(path)
    w = np.asarray(T.weights)
    if fmt == "matrix-json":
        doc = {"format_version": FORMAT_VERSION, "K": int(w.shape[0]),
               "rows": [[float(v) for v in row] for row in w]}
        path.write_text(json.dumps(doc) + "\n")
    elif fmt == "edge-list":
        lines = [f"# format_version={FORMAT_VERSION} K={w.shape[0]}"]
        for i, j in zip(*np.nonzero(w)):
            lines.append(f"{i + 1} {j + 1} {float(w[i, j])!r}")
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown network format {fmt!r}")


# --- generators ------------------------------------------------------------

KINDS = ("ring", "star", "complete", "random-irreducible")


@dataclass(frozen=True)
class GeneratorSpec:
    """``beta`` is the trust mass an ordinary agent places on the stubborn agent.

    ``links`` picks which ordinary agents trust the stubborn agent for the
    random kind: ``"one"`` (the weakest hypothesis) or ``"all"``. Ring uses one
    link by construction; star and complete link every ordinary agent.
    """

    kind: str
    K: int
    beta: float = 0.5
    seed: int = 0
    links: str = "one"
    edge_prob: float = 0.3
    require_irreducible: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _ring(K: int, beta: float) -> np.ndarray:
    t = np.zeros((K, K))
    t[0, 0] = 1.0
    if K == 2:
        t[1, 0], t[1, 1] = beta, 1.0 - beta
        return t
    # agent i trusts agent i+1, the last ordinary agent closes the cycle
    for i in range(1, K):
        t[i, i + 1 if i + 1 < K else 1] = 1.0
    t[1, 2] = 1.0 - beta
    t[1, 0] = beta
    return t


def _star(K: int, beta: float) -> np.ndarray:
    t = np.zeros((K, K))
    t[0, 0] = 1.0
    t[1:, 0] = beta
    t[np.arange(1, K), np.arange(1, K)] = 1.0 - beta
    return t


def _complete(K: int, beta: float) -> np.ndarray:
    t = np.zeros((K, K))
    t[0, 0] = 1.0
    t[1:, 0] = beta
    t[1:, 1:] = (1.0 - beta) / (K - 1)
    return t


def random_irreducible_block(rng: np.random.Generator, m: int, edge_prob: float = 0.3) -> np.ndarray:
    """Random non-negative ``m x m`` matrix with rows summing to 1 whose graph
    contains a random Hamiltonian cycle (hence irreducible) plus extra edges."""
    mask = rng.random((m, m)) < edge_prob
    perm = rng.permutation(m)
    mask[perm, np.roll(perm, 1)] = True
    w = np.where(mask, rng.uniform(0.05, 1.0, (m, m)), 0.0)
    return w / w.sum(axis=1, keepdims=True)


def _random_irreducible(spec: GeneratorSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    m = spec.K - 1
    q = random_irreducible_block(rng, m, spec.edge_prob)
    if spec.links == "one":
        linked = [int(rng.integers(m))]
    elif spec.links == "all":
        linked = list(range(m))
    else:
        raise InfeasibleSpec(f"links must be 'one' or 'all', got {spec.links!r}")
    t = np.zeros((spec.K, spec.K))
    t[0, 0] = 1.0
    t[1:, 1:] = q
    for i in linked:
        t[i + 1, 1:] *= 1.0 - spec.beta
        t[i + 1, 0] = spec.beta
    return t


def generate_network(spec: GeneratorSpec, tau_row: float = TAU_ROW) -> TrustMatrix:
    if spec.kind not in KINDS:
        raise InfeasibleSpec(f"unknown generator kind {spec.kind!r}; expected one of {KINDS}")
    if spec.K < 2:
        raise InfeasibleSpec("need at least one ordinary agent (K >= 2)")
    if not 0 < spec.beta <= 1:
        raise InfeasibleSpec("beta must lie in (0, 1]")
    build = {"ring": _ring, "star": _star, "complete": _complete}
    t = _random_irreducible(spec) if spec.kind == "random-irreducible" else build[spec.kind](spec.K, spec.beta)
    T = validate_trust_matrix(t, tau_row)
    p = partition_stubborn(T, tau_row)
    if spec.require_irreducible and not is_irreducible(p.interior):
        raise InfeasibleSpec(f"{spec.kind} network with K={spec.K}, beta={spec.beta} has reducible Q")
    if not np.any(p.gain > 0):
        raise InfeasibleSpec("no ordinary agent trusts the stubborn agent")
    return T


def random_stubborn_instance(rng: np.random.Generator, K: int, links: str = "one", edge_prob: float = 0.3) -> TrustMatrix:
    """Random stochastic trust matrix in stubborn form with irreducible Q and
    random stubborn-trust weights on the linked agents."""
    m = K - 1
    t = np.zeros((K, K))
    t[0, 0] = 1.0
    t[1:, 1:] = random_irreducible_block(rng, m, edge_prob)
    linked = [int(rng.integers(m))] if links == "one" else list(range(m))
    for i in linked:
        beta = rng.uniform(0.05, 0.95) if m > 1 else rng.uniform(0.05, 1.0)
        t[i + 1, 1:] *= 1.0 - beta
        t[i + 1, 0] = beta
    return validate_trust_matrix(t)


def random_substochastic(rng: np.random.Generator, m: int, edge_prob: float = 0.3) -> np.ndarray:
    """Random irreducible sub-stochastic matrix with at least one deficient row."""
    a = random_irreducible_block(rng, m, edge_prob)
    scale = np.where(rng.random(m) < 0.5, 1.0, rng.uniform(0.5, 1.0, m))
    scale[rng.integers(m)] = rng.uniform(0.05, 0.999)
    return a * scale[:, None]
