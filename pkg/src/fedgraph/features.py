"""Per-customer feature rows: transaction statistics, transaction-graph metrics
and party-graph component counts."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .cycles import DEFAULT_BUDGET, DEFAULT_MAX_LEN, DEFAULT_WINDOW, temporal_cycles
from .errors import EmptyInput, ValidationError
from .graphs import CUSTOMER, PartyGraph, Scope, TransactionGraph, build_party_graph, build_transaction_graph
from .model import CHANNELS, World
from .pagerank import pagerank
from .resolution import GroupAssignment, resolve_world

DIRECTIONS = ("in", "out")
STATS = ("count", "min", "max", "mean", "std", "sum")
STAT_COLUMNS = [f"{ch.value}_{d}_{s}" for ch in CHANNELS for d in DIRECTIONS for s in STATS]
DEGREE_COLUMNS = ["degree_in", "degree_out"]
GRAPH_COLUMNS = [
    "pagerank",
    "egonet1_sar_count",
    "egonet2_sar_count",
    "temporal_cycle_count",
    "cc_alert_count",
    "cc_sar_count",
    "cc_exit_count",
    "cc_node_count",
]
KEY_COLUMNS = ["institution", "customer_id"]
LABEL_COLUMN = "label"


class FeatureSet(str, enum.Enum):
    TXN = "txn"
    TXN_GRAPH = "txn+graph"

    @property
    def columns(self) -> list[str]:
        cols = STAT_COLUMNS + DEGREE_COLUMNS
        return cols + GRAPH_COLUMNS if self is FeatureSet.TXN_GRAPH else cols

    @property
    def display(self) -> str:
        return "TransactionOnly" if self is FeatureSet.TXN else "TransactionPlusGraph"


def schema_hash(columns: list[str]) -> str:
    return hashlib.sha256("\n".join(columns).encode()).hexdigest()


# ---------------------------------------------------------------- transaction stats


def _slot_index(channel: np.ndarray, direction: int) -> np.ndarray:
    return channel.astype(np.int64) * len(DIRECTIONS) * len(STATS) + direction * len(STATS)


def transaction_stats_all(graph: TransactionGraph) -> np.ndarray:
    """(n_vertices, 60) matrix of per-channel, per-direction amount statistics.

    Amounts are in currency units; std is the population deviation.
    """
    n = graph.n_vertices
    n_groups = len(CHANNELS) * len(DIRECTIONS)
    amounts = graph.amount.astype(np.float64) / 100.0
    ch = graph.channel.astype(np.int64)
    vertex = np.concatenate([graph.dst, graph.src])
    group = np.concatenate([ch * 2 + 0, ch * 2 + 1])
    x = np.concatenate([amounts, amounts])
    frame = pd.DataFrame({"key": vertex * n_groups + group, "x": x})
    agg = frame.groupby("key", sort=True)["x"].agg(["count", "min", "max", "mean", "sum"])
    # two-pass variance for stability
    mean_per_row = agg["mean"].reindex(frame["key"]).to_numpy()
    dev = pd.Series((x - mean_per_row) ** 2).groupby(frame["key"].to_numpy()).sum()
    agg["std"] = np.sqrt(dev.reindex(agg.index).to_numpy() / agg["count"].to_numpy())
    out = np.zeros((n * n_groups, len(STATS)))
    keys = agg.index.to_numpy()
    for j, s in enumerate(STATS):
        out[keys, j] = agg[s].to_numpy(dtype=np.float64)
    return out.reshape(n, n_groups * len(STATS))


def transaction_stats(account: str, graph: TransactionGraph) -> dict[str, float]:
    """Stat slots for one account; all zero if it never transacts."""
    try:
        v = graph.index(account)
    except KeyError:
        return dict.fromkeys(STAT_COLUMNS, 0.0)
    out = dict.fromkeys(STAT_COLUMNS, 0.0)
    for d_i, ends in enumerate((graph.dst, graph.src)):
        mask = ends == v
        for c_i, ch in enumerate(CHANNELS):
            x = graph.amount[mask & (graph.channel == c_i)] / 100.0
            if len(x) == 0:
                continue
            prefix = f"{ch.value}_{DIRECTIONS[d_i]}_"
            out[prefix + "count"] = float(len(x))
            out[prefix + "min"] = float(x.min())
            out[prefix + "max"] = float(x.max())
            out[prefix + "mean"] = float(x.mean())
            out[prefix + "std"] = float(x.std())
            out[prefix + "sum"] = float(x.sum())
    return out


# ---------------------------------------------------------------- egonets


def _undirected_simple(graph: TransactionGraph) -> sparse.csr_matrix:
    n = graph.n_vertices
    a = sparse.coo_matrix((np.ones(graph.n_edges, dtype=np.int8), (graph.src, graph.dst)), shape=(n, n)).tocsr()
    a = a + a.T
    a.data[:] = 1
    a.setdiag(0)
    a.eliminate_zeros()
    return a.tocsr()


def egonet_counts(graph: TransactionGraph, flagged: np.ndarray, hops: int, centers: np.ndarray | None = None) -> np.ndarray:
    """Distinct flagged in-scope customers within ``hops`` undirected steps of each center.

    ``flagged`` is a bool per vertex (already restricted to in-scope customers
    by the caller or not; it is intersected with ``in_scope`` here). The
    center itself is never counted.
    """
    if hops not in (1, 2):
        raise ValidationError(f"hops must be 1 or 2, got {hops}")
    if centers is None:
        centers = np.arange(graph.n_vertices)
    target = np.flatnonzero(np.asarray(flagged, dtype=bool) & graph.in_scope)
    if len(centers) == 0:
        return np.zeros(0, dtype=np.int64)
    a = _undirected_simple(graph)
    rows = a[centers]
    reach = rows[:, target]
    if hops == 2:
        reach = reach + rows @ a[:, target]
    reach = reach.tocsr()
    reach.data[:] = 1
    # drop the center itself
    reach = reach.tocoo()
    self_hit = target[reach.col] == centers[reach.row]
    return np.bincount(reach.row[~self_hit], minlength=len(centers)).astype(np.int64)


def egonet_suspicious_count(graph: TransactionGraph, account: str, hops: int, flagged: np.ndarray) -> int:
    v = graph.index(account)
    return int(egonet_counts(graph, flagged, hops, np.array([v]))[0])


# ---------------------------------------------------------------- components


def component_labels(n: int, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Connected-component label per vertex: the smallest vertex index in it."""
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    adj = sparse.coo_matrix((np.ones(len(u), dtype=np.int8), (u, v)), shape=(n, n))
    _, comp = connected_components(adj, directed=True, connection="weak")
    smallest = np.full(comp.max() + 1, n, dtype=np.int64)
    np.minimum.at(smallest, comp, np.arange(n))
    return smallest[comp]


def weakly_connected_components(graph: PartyGraph) -> np.ndarray:
    """Per vertex, the smallest vertex id (string) of its component."""
    labels = component_labels(graph.n_vertices, graph.u, graph.v)
    return graph.vertices[labels]


class CcFeatures(NamedTuple):
    alert: int
    sar: int
    exit: int
    nodes: int


def risk_flags(world: World, graph: PartyGraph) -> np.ndarray:
    """(n_vertices, 3) bool: past_alert, sar_flag, exit marker; zero for non-customers."""
    flags = np.zeros((graph.n_vertices, 3), dtype=bool)
    refs, values = [], []
    for c in world.customers():
        refs.append(f"C:{c.institution}:{c.customer_id}")
        values.append((c.risk.past_alert, c.risk.sar_flag, c.risk.fincrime_exit_marker))
    refs = np.array(refs, dtype=object)
    idx = np.searchsorted(graph.vertices, refs)
    idx = np.minimum(idx, max(graph.n_vertices - 1, 0))
    hit = graph.vertices[idx] == refs if len(refs) else np.zeros(0, dtype=bool)
    flags[idx[hit]] = np.array(values, dtype=bool)[hit]
    return flags


def cc_feature_matrix(graph: PartyGraph, labels: np.ndarray, flags: np.ndarray) -> np.ndarray:
    """(n_vertices, 4) int: alert/sar/exit counts excluding the vertex itself, and component size."""
    comp = component_labels(graph.n_vertices, graph.u, graph.v) if labels is None else labels
    n = graph.n_vertices
    out = np.zeros((n, 4), dtype=np.int64)
    for j in range(3):
        totals = np.bincount(comp, weights=flags[:, j].astype(np.float64), minlength=n)
        out[:, j] = totals[comp].astype(np.int64) - flags[:, j]
    out[:, 3] = np.bincount(comp, minlength=n)[comp]
    return out


def cc_features(graph: PartyGraph, world: World, target: str) -> CcFeatures:
    """Component counts for one customer node ``C:<bank>:<id>``."""
    i = graph.index(target)
    if graph.kind[i] != CUSTOMER:
        raise ValidationError(f"{target} is not a customer node")
    labels = component_labels(graph.n_vertices, graph.u, graph.v)
    row = cc_feature_matrix(graph, labels, risk_flags(world, graph))[i]
    return CcFeatures(int(row[0]), int(row[1]), int(row[2]), int(row[3]))


# ---------------------------------------------------------------- exit-probability curve


def conditional_probability_curve(values, labels, bins=None) -> pd.DataFrame:
    """Empirical P(label = 1 | feature in bin); bins without support are omitted.

    With ``bins=None`` every distinct integer value is its own bin. Otherwise
    ``bins`` is a sequence of edges and the bin is reported by its left edge.
    """
    values = np.asarray(values)
    labels = np.asarray(labels).astype(np.float64)
    if len(values) != len(labels):
        raise ValidationError("values and labels differ in length")
    if len(values) == 0:
        raise EmptyInput("conditional_probability_curve on empty input")
    if bins is None:
        key = values.astype(np.int64)
    else:
        edges = np.asarray(bins, dtype=np.float64)
        pos = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, len(edges) - 2)
        key = edges[pos]
    frame = pd.DataFrame({"bin": key, "y": labels})
    g = frame.groupby("bin", sort=True)["y"]
    out = pd.DataFrame({"bin": g.mean().index, "probability": g.mean().to_numpy(), "support": g.size().to_numpy()})
    return out.reset_index(drop=True)


def weighted_spearman(x, y, w) -> float:
    """Spearman correlation with observation weights (weighted Pearson on ranks)."""
    from scipy.stats import rankdata

    x, y, w = (np.asarray(a, dtype=np.float64) for a in (x, y, w))
    rx, ry = rankdata(x), rankdata(y)
    w = w / w.sum()
    mx, my = (w * rx).sum(), (w * ry).sum()
    cov = (w * (rx - mx) * (ry - my)).sum()
    sx = np.sqrt((w * (rx - mx) ** 2).sum())
    sy = np.sqrt((w * (ry - my) ** 2).sum())
    if sx == 0 or sy == 0:
        return 0.0
    return float(cov / (sx * sy))


# ---------------------------------------------------------------- assembly


@dataclass(frozen=True)
class GraphParams:
    damping: float = 0.85
    tol: float = 1e-8
    max_iter: int = 100
    cycle_max_len: int = DEFAULT_MAX_LEN
    cycle_window: int = DEFAULT_WINDOW
    cycle_budget: int = DEFAULT_BUDGET


@dataclass
class FeatureMatrix:
    """Rows keyed by (institution, customer_id), sorted; ``x`` follows ``columns``."""

    feature_set: FeatureSet
    keys: pd.DataFrame
    x: np.ndarray
    y: np.ndarray
    columns: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.columns)

    @property
    def ids(self) -> np.ndarray:
        return (self.keys["institution"] + ":" + self.keys["customer_id"]).to_numpy(dtype=object)

    def select(self, mask_or_idx) -> FeatureMatrix:
        idx = np.arange(len(self))[mask_or_idx]
        return FeatureMatrix(self.feature_set, self.keys.iloc[idx].reset_index(drop=True), self.x[idx], self.y[idx], self.columns)

    def to_frame(self) -> pd.DataFrame:
        frame = self.keys.copy()
        frame[self.columns] = pd.DataFrame(self.x, columns=self.columns)
        frame[LABEL_COLUMN] = self.y.astype(np.int64)
        return frame

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n", float_format="%.17g")

    @classmethod
    def from_csv(cls, path, feature_set: FeatureSet) -> FeatureMatrix:
        frame = pd.read_csv(path, dtype={"institution": str, "customer_id": str}, float_precision="round_trip")
        expected = KEY_COLUMNS + feature_set.columns + [LABEL_COLUMN]
        if list(frame.columns) != expected:
            raise ValidationError(f"{path}: header does not match the {feature_set.value} schema")
        return cls(
            feature_set,
            frame[KEY_COLUMNS].reset_index(drop=True),
            frame[feature_set.columns].to_numpy(dtype=np.float64),
            frame[LABEL_COLUMN].to_numpy(dtype=np.int64),
            feature_set.columns,
        )


@dataclass
class GraphContext:
    """Graphs and groups computed once per scope, reused across feature sets."""

    scope: Scope
    txn: TransactionGraph
    party: PartyGraph
    groups: list[GroupAssignment]

    @classmethod
    def build(cls, world: World, scope: Scope = Scope()) -> GraphContext:
        groups = resolve_world(world, scope.institution)
        return cls(scope, build_transaction_graph(world, scope), build_party_graph(world, groups, scope), groups)


def _customer_table(world: World, scope: Scope) -> tuple[pd.DataFrame, np.ndarray]:
    inst, cid, label = [], [], []
    for code in scope.codes(world):
        for c in world.institution(code).customers:
            inst.append(code)
            cid.append(c.customer_id)
            label.append(int(c.risk.fincrime_exit_marker))
    keys = pd.DataFrame({"institution": inst, "customer_id": cid}, dtype=object)
    order = np.lexsort((keys["customer_id"].to_numpy(), keys["institution"].to_numpy()))
    return keys.iloc[order].reset_index(drop=True), np.asarray(label, dtype=np.int64)[order]


def build_feature_matrix(
    world: World,
    scope: Scope,
    feature_set: FeatureSet,
    ctx: GraphContext | None = None,
    graph_ctx: GraphContext | None = None,
    params: GraphParams = GraphParams(),
) -> FeatureMatrix:
    """One row per in-scope customer.

    ``ctx`` supplies the transaction statistics and degrees (scope ``scope``);
    ``graph_ctx`` supplies the graph columns and defaults to ``ctx``. Passing a
    global ``graph_ctx`` with a local ``ctx`` gives a bank its own
    transaction features plus globally computed graph features.
    """
    if ctx is None:
        ctx = GraphContext.build(world, scope)
    if ctx.scope != scope:
        raise ValidationError(f"graph context is for scope {ctx.scope}, not {scope}")
    keys, y = _customer_table(world, scope)
    refs = (keys["institution"] + ":" + keys["customer_id"]).to_numpy(dtype=object)
    tg = ctx.txn
    v = tg.indices(refs)
    stats = transaction_stats_all(tg)[v]
    degrees = np.column_stack([tg.in_degree()[v], tg.out_degree()[v]]).astype(np.float64)
    x = np.hstack([stats, degrees])
    if feature_set is FeatureSet.TXN_GRAPH:
        x = np.hstack([x, graph_columns(world, graph_ctx or ctx, refs, params)])
    cols = feature_set.columns
    if x.shape[1] != len(cols):
        raise AssertionError("feature width does not match schema")
    if not np.isfinite(x).all():
        raise AssertionError("non-finite feature value")
    return FeatureMatrix(feature_set, keys, x, y, cols)


def graph_columns(world: World, ctx: GraphContext, refs: np.ndarray, params: GraphParams = GraphParams()) -> np.ndarray:
    """The eight graph columns for the given customer refs (``INST:ID``)."""
    tg, pg = ctx.txn, ctx.party
    v = tg.indices(refs)
    pr = pagerank(tg, params.damping, params.tol, params.max_iter).scores[v]
    sar = _sar_by_vertex(world, tg)
    ego1 = egonet_counts(tg, sar, 1, v)
    ego2 = egonet_counts(tg, sar, 2, v)
    cyc = temporal_cycles(tg, params.cycle_max_len, params.cycle_window, params.cycle_budget)[v]
    party_ids = np.array(["C:" + r for r in refs], dtype=object)
    pv = np.searchsorted(pg.vertices, party_ids)
    labels = component_labels(pg.n_vertices, pg.u, pg.v)
    cc = cc_feature_matrix(pg, labels, risk_flags(world, pg))[pv]
    return np.column_stack([pr, ego1, ego2, cyc, cc]).astype(np.float64)


def _sar_by_vertex(world: World, tg: TransactionGraph) -> np.ndarray:
    refs = np.array([f"{c.institution}:{c.customer_id}" for c in world.customers() if c.risk.sar_flag], dtype=object)
    flags = np.zeros(tg.n_vertices, dtype=bool)
    if len(refs):
        idx = np.minimum(np.searchsorted(tg.vertices, refs), tg.n_vertices - 1)
        hit = tg.vertices[idx] == refs
        flags[idx[hit]] = True
    return flags & tg.in_scope
