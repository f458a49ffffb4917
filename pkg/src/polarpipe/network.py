"""Signed mention network, force layout and party homogeneity."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .sentiment import SentimentLabel


@dataclass(frozen=True)
class SignedGraph:
    """Undirected graph with positive and negative mention counts per edge."""

    nodes: tuple[str, ...]
    edges: dict[tuple[str, str], tuple[int, int]]

    def __post_init__(self):
        known = set(self.nodes)
        for (a, b), (pos, neg) in self.edges.items():
            if a == b:
                raise ValueError(f"self-loop on {a!r}")
            if not a < b:
                raise ValueError(f"edge key ({a!r}, {b!r}) must be ordered")
            if pos < 0 or neg < 0 or pos + neg == 0:
                raise ValueError(f"bad counts {(pos, neg)} on edge ({a!r}, {b!r})")
            if a not in known or b not in known:
                raise ValueError(f"edge ({a!r}, {b!r}) references an unknown node")

    def weight(self, a: str, b: str) -> int:
        pos, neg = self.edges.get((min(a, b), max(a, b)), (0, 0))
        return pos - neg

    def merge(self, other: "SignedGraph") -> "SignedGraph":
        counts = {k: list(v) for k, v in self.edges.items()}
        for k, (pos, neg) in other.edges.items():
            c = counts.setdefault(k, [0, 0])
            c[0] += pos
            c[1] += neg
        nodes = tuple(sorted(set(self.nodes) | set(other.nodes)))
        return SignedGraph(nodes, {k: tuple(v) for k, v in sorted(counts.items())})


def build_graph(pairs: Iterable, nodes: Iterable[str] | None = None) -> SignedGraph:
    """Aggregate positive and negative (author, target) mentions; neutral ones are ignored.

    ``nodes`` adds isolated politicians; every author and target in
    ``pairs`` is a node regardless.
    """
    pos, neg = Counter(), Counter()
    members = set(nodes or ())
    for p in pairs:
        members.update((p.author, p.target))
        if p.author == p.target:
            continue
        key = (min(p.author, p.target), max(p.author, p.target))
        label = SentimentLabel.parse(p.sentiment)
        if label is SentimentLabel.POSITIVE:
            pos[key] += 1
        elif label is SentimentLabel.NEGATIVE:
            neg[key] += 1
    keys = sorted(set(pos) | set(neg))
    return SignedGraph(tuple(sorted(members)), {k: (pos[k], neg[k]) for k in keys})


@dataclass(frozen=True)
class LayoutConfig:
    iterations: int = 500
    seed: int = 0
    attraction_gain: float = 1.0
    repulsion_gain: float = 1.0
    base_repulsion: float = 0.1
    gravity: float = 0.05


@dataclass(frozen=True)
class Layout:
    nodes: tuple[str, ...]
    positions: np.ndarray
    iterations: int
    stress: float

    def position(self, node: str) -> np.ndarray:
        return self.positions[self.nodes.index(node)]

    def distance(self, a: str, b: str) -> float:
        return float(np.linalg.norm(self.position(a) - self.position(b)))


def _weight_matrix(graph: SignedGraph) -> np.ndarray:
    index = {n: i for i, n in enumerate(graph.nodes)}
    w = np.zeros((len(index), len(index)))
    for (a, b), (pos, neg) in graph.edges.items():
        w[index[a], index[b]] = w[index[b], index[a]] = pos - neg
    return w


def _energy(pos, attract, repel, k, gravity):
    centre = ((pos - pos.mean(axis=0)) ** 2).sum()
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    iu = np.triu_indices(len(pos), 1)
    d = np.maximum(dist[iu], 1e-9)
    return float((attract[iu] * d ** 3 / (3 * k)).sum() - (repel[iu] * k * k * np.log(d)).sum()
                 + 0.5 * gravity * centre)


def layout(graph: SignedGraph, config: LayoutConfig = LayoutConfig()) -> Layout:
    """Fruchterman-Reingold iteration with signed edge weights.

    Positive net weight ``w`` adds a spring force ``a * w * d**2 / k``;
    negative net weight adds repulsion ``r * |w| * k**2 / d`` on top of a
    weak repulsion between all pairs, and a weak pull towards the centroid
    keeps disconnected parts in frame.  Displacement per step is capped by
    a linearly cooling temperature.  ``stress`` is the energy whose
    negative gradient these forces are.
    """
    n = len(graph.nodes)
    if n < 2:
        raise ValueError("layout needs at least 2 nodes")
    rng = np.random.default_rng(config.seed)
    pos = rng.uniform(0.0, 1.0, (n, 2))
    k = 1.0 / np.sqrt(n)
    w = _weight_matrix(graph)
    attract = config.attraction_gain * np.clip(w, 0, None)
    repel = config.base_repulsion + config.repulsion_gain * np.clip(-w, 0, None)
    np.fill_diagonal(repel, 0.0)
    t0 = 0.1
    for step in range(config.iterations):
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        np.fill_diagonal(dist, 1.0)
        dist = np.maximum(dist, 1e-6)
        magnitude = repel * k * k / dist - attract * dist * dist / k
        disp = (diff / dist[..., None] * magnitude[..., None]).sum(axis=1)
        disp -= config.gravity * (pos - pos.mean(axis=0))
        length = np.maximum(np.linalg.norm(disp, axis=1, keepdims=True), 1e-12)
        temperature = t0 * (1.0 - step / config.iterations)
        pos = pos + disp / length * np.minimum(length, temperature)
    return Layout(graph.nodes, pos, config.iterations, _energy(pos, attract, repel, k, config.gravity))


def homogeneity(graph: SignedGraph, partition: Mapping[str, str]) -> tuple[float, dict[str, float | None]]:
    """Signed intra/inter contrast ``(net intra - net inter) / total |w|``.

    Returns the overall score and one score per party computed over the
    edges touching that party (None when it has no weighted edges).
    """
    missing = [n for n in graph.nodes if n not in partition]
    if missing:
        raise ValueError(f"nodes without a party: {missing[:5]}")
    intra, inter, total = 0.0, 0.0, 0.0
    parties = sorted({partition[n] for n in graph.nodes})
    per = {p: [0.0, 0.0, 0.0] for p in parties}
    for (a, b), (pos, neg) in graph.edges.items():
        w = pos - neg
        pa, pb = partition[a], partition[b]
        total += abs(w)
        if pa == pb:
            intra += w
            per[pa][0] += w
            per[pa][2] += abs(w)
        else:
            inter += w
            for p in (pa, pb):
                per[p][1] += w
                per[p][2] += abs(w)
    if total == 0:
        raise ValueError("homogeneity is undefined without weighted edges")
    scores = {p: ((v[0] - v[1]) / v[2] if v[2] > 0 else None) for p, v in per.items()}
    return (intra - inter) / total, scores


def write_edges(graph: SignedGraph, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["a", "b", "pos_count", "neg_count"])
        for (a, b), (pos, neg) in graph.edges.items():
            writer.writerow([a, b, pos, neg])


def write_positions(result: Layout, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["handle", "x", "y"])
        for node, (x, y) in zip(result.nodes, result.positions):
            writer.writerow([node, f"{x:.9f}", f"{y:.9f}"])


def render_svg(graph: SignedGraph, result: Layout, partition: Mapping[str, str],
               path: str | Path) -> None:
    """Scatter of the layout with party-coloured nodes and signed edges."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    parties = sorted({partition[n] for n in result.nodes})
    cmap = plt.get_cmap("tab10")
    colors = {p: cmap(i % 10) for i, p in enumerate(parties)}
    with matplotlib.rc_context({"svg.hashsalt": "polarpipe", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 7))
        for (a, b), (pos, neg) in graph.edges.items():
            w = pos - neg
            if w == 0:
                continue
            pa, pb = result.position(a), result.position(b)
            ax.plot([pa[0], pb[0]], [pa[1], pb[1]], color="tab:green" if w > 0 else "tab:red",
                    alpha=0.25, lw=0.6, zorder=1)
        for p in parties:
            idx = [i for i, n in enumerate(result.nodes) if partition[n] == p]
            ax.scatter(result.positions[idx, 0], result.positions[idx, 1], s=40,
                       color=colors[p], label=p, zorder=2, edgecolor="black", linewidth=0.4)
        ax.set_aspect("equal")
        ax.set_xticks([])
        ax.set_yticks([])
        ax.legend(loc="best", fontsize=8, frameon=False)
        fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
        plt.close(fig)
