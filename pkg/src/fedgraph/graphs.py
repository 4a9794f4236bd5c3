"""Transaction multigraph and party-relationship graph, at local or global scope."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import InconsistentGroups, ValidationError
from .model import World
from .resolution import GroupAssignment, profile_ref

GLOBAL = "global"


@dataclass(frozen=True)
class Scope:
    """``Scope()`` is global; ``Scope("BWBAGB")`` is that bank's local view."""

    institution: str | None = None

    @property
    def is_global(self) -> bool:
        return self.institution is None

    def codes(self, world: World) -> list[str]:
        if self.institution is None:
            return world.codes
        world.institution(self.institution)  # KeyError if unknown
        return [self.institution]

    def __str__(self) -> str:
        return GLOBAL if self.institution is None else f"local:{self.institution}"

    @classmethod
    def parse(cls, text: str) -> Scope:
        if text == GLOBAL:
            return cls()
        kind, sep, code = text.partition(":")
        if kind != "local" or not sep or not code:
            raise ValidationError(f"scope must be 'global' or 'local:<BANK>', got {text!r}")
        return cls(code)


@dataclass(frozen=True, eq=False)
class TransactionGraph:
    """Directed multigraph: one edge per transaction, vertices sorted by ref.

    ``boundary`` marks edges with one endpoint outside the scope (another bank
    or an external account); ``in_scope`` marks vertices that are customers of
    the scope's institutions.
    """

    scope: Scope
    vertices: np.ndarray  # object array of "INST:ID", sorted
    in_scope: np.ndarray  # bool per vertex
    src: np.ndarray
    dst: np.ndarray
    timestamp: np.ndarray
    amount: np.ndarray  # int64 cents
    channel: np.ndarray  # int8
    boundary: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def index(self, ref: str) -> int:
        i = int(np.searchsorted(self.vertices, ref))
        if i >= len(self.vertices) or self.vertices[i] != ref:
            raise KeyError(ref)
        return i

    def indices(self, refs) -> np.ndarray:
        refs = np.asarray(refs, dtype=object)
        idx = np.searchsorted(self.vertices, refs)
        idx = np.minimum(idx, max(len(self.vertices) - 1, 0))
        if len(refs) and not np.all(self.vertices[idx] == refs):
            missing = refs[self.vertices[idx] != refs][0]
            raise KeyError(missing)
        return idx

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n_vertices)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.n_vertices)

    def degree(self) -> np.ndarray:
        return self.out_degree() + self.in_degree()


def build_transaction_graph(world: World, scope: Scope = Scope()) -> TransactionGraph:
    codes = scope.codes(world)
    customers = np.array(
        [f"{inst.code}:{c.customer_id}" for inst in world.institutions if inst.code in codes for c in inst.customers],
        dtype=object,
    )
    if scope.is_global:
        frame = world.all_transactions().frame
    else:
        # a bank sees every transfer touching its customers, wherever it is filed
        frame = world.all_transactions().frame
        own = pd.Index(customers)
        keep = own.get_indexer(frame["source"]) >= 0
        keep |= own.get_indexer(frame["dest"]) >= 0
        frame = frame.loc[keep]
    src_refs = frame["source"].to_numpy(dtype=object)
    dst_refs = frame["dest"].to_numpy(dtype=object)
    vertices = np.unique(np.concatenate([customers, src_refs, dst_refs]).astype(object))
    in_scope = np.zeros(len(vertices), dtype=bool)
    in_scope[np.searchsorted(vertices, customers)] = True
    src = np.searchsorted(vertices, src_refs).astype(np.int64)
    dst = np.searchsorted(vertices, dst_refs).astype(np.int64)
    boundary = ~(in_scope[src] & in_scope[dst])
    return TransactionGraph(
        scope=scope,
        vertices=vertices,
        in_scope=in_scope,
        src=src,
        dst=dst,
        timestamp=frame["timestamp"].to_numpy(dtype=np.int64),
        amount=frame["amount"].to_numpy(dtype=np.int64),
        channel=frame["channel"].to_numpy(dtype=np.int8),
        boundary=boundary,
    )


# vertex kinds in the party graph
CUSTOMER, PARTY, GROUP = 0, 1, 2
MEMBER = "member"


@dataclass(frozen=True, eq=False)
class PartyGraph:
    """Undirected graph of customers, related parties and entity-group nodes.

    Vertex ids: ``C:<bank>:<id>``, ``P:<bank>:<id>``, ``G:<group_id>``.
    Edge labels are relation kinds for customer-party edges and ``"member"``
    for group-profile edges.
    """

    scope: Scope
    vertices: np.ndarray  # object, sorted
    kind: np.ndarray  # int8: CUSTOMER / PARTY / GROUP
    u: np.ndarray
    v: np.ndarray
    label: np.ndarray  # object

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.u)

    def index(self, vertex: str) -> int:
        i = int(np.searchsorted(self.vertices, vertex))
        if i >= len(self.vertices) or self.vertices[i] != vertex:
            raise KeyError(vertex)
        return i

    def degree(self) -> np.ndarray:
        return np.bincount(self.u, minlength=self.n_vertices) + np.bincount(self.v, minlength=self.n_vertices)


def build_party_graph(world: World, groups: list[GroupAssignment], scope: Scope = Scope()) -> PartyGraph:
    codes = set(scope.codes(world))
    profiles = [profile_ref(c) for inst in world.institutions if inst.code in codes for c in inst.customers]
    profiles += [profile_ref(p) for inst in world.institutions if inst.code in codes for p in inst.related_parties]
    profile_set = set(profiles)

    covered: set[str] = set()
    group_vertices = []
    edges: list[tuple[str, str, str]] = []
    for g in groups:
        gv = f"G:{g.group_id}"
        group_vertices.append(gv)
        for m in g.members:
            if m not in profile_set:
                raise InconsistentGroups(f"group {g.group_id} references {m}, which is outside scope {scope}")
            if m in covered:
                raise InconsistentGroups(f"profile {m} appears in more than one group")
            covered.add(m)
            edges.append((gv, m, MEMBER))
    uncovered = profile_set - covered
    if uncovered:
        raise InconsistentGroups(f"profile {min(uncovered)} is not assigned to any group")

    for inst in world.institutions:
        if inst.code not in codes:
            continue
        for r in inst.relations:
            edges.append((f"C:{inst.code}:{r.customer_id}", f"P:{inst.code}:{r.party_id}", r.relation_kind.value))

    vertices = np.array(sorted(profile_set | set(group_vertices)), dtype=object)
    kind = np.full(len(vertices), PARTY, dtype=np.int8)
    first = np.array([s[0] for s in vertices], dtype=object)
    kind[first == "C"] = CUSTOMER
    kind[first == "G"] = GROUP
    if edges:
        eu, ev, lab = zip(*edges)
        u = np.searchsorted(vertices, np.array(eu, dtype=object))
        v = np.searchsorted(vertices, np.array(ev, dtype=object))
        label = np.array(lab, dtype=object)
    else:
        u = v = np.zeros(0, dtype=np.int64)
        label = np.zeros(0, dtype=object)
    return PartyGraph(scope, vertices, kind, u.astype(np.int64), v.astype(np.int64), label)


def to_dot(graph: TransactionGraph | PartyGraph, max_vertices: int = 500) -> str:
    """GraphViz text for small graphs (debugging aid)."""
    if graph.n_vertices > max_vertices:
        raise ValidationError(f"graph has {graph.n_vertices} vertices; DOT export is limited to {max_vertices}")
    directed = isinstance(graph, TransactionGraph)
    arrow = "->" if directed else "--"
    lines = ["digraph G {" if directed else "graph G {"]
    for name in graph.vertices:
        lines.append(f'  "{name}";')
    if directed:
        for s, d, a in zip(graph.src, graph.dst, graph.amount):
            lines.append(f'  "{graph.vertices[s]}" {arrow} "{graph.vertices[d]}" [label="{a / 100:.2f}"];')
    else:
        for s, d, lab in zip(graph.u, graph.v, graph.label):
            lines.append(f'  "{graph.vertices[s]}" {arrow} "{graph.vertices[d]}" [label="{lab}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
