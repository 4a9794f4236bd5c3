from __future__ import annotations

import dataclasses
import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedgraph.cycles import temporal_cycle_counts, temporal_cycles
from fedgraph.errors import BudgetExceeded, EmptyInput, ValidationError
from fedgraph.features import (
    GRAPH_COLUMNS,
    STAT_COLUMNS,
    FeatureMatrix,
    FeatureSet,
    GraphContext,
    build_feature_matrix,
    cc_features,
    component_labels,
    conditional_probability_curve,
    egonet_counts,
    egonet_suspicious_count,
    transaction_stats,
    transaction_stats_all,
    weakly_connected_components,
    weighted_spearman,
)
from fedgraph.graphs import Scope, build_party_graph, build_transaction_graph
from fedgraph.model import Channel, InstitutionData, RelatedParty, Relation, RelationKind, RiskIntel, TransactionTable, World
from fedgraph.pagerank import pagerank, pagerank_edges
from fedgraph.resolution import resolve_world

from conftest import customer, person, txn
from fixtures import random_edges, random_undirected
from oracles import bfs_egonet_count, brute_force_cycle_counts, dense_pagerank, streaming_stats, union_find_labels

DAY = 86_400


def _world(customers, transactions=(), parties=(), relations=(), code="AAA"):
    from datetime import date

    inst = InstitutionData(code, tuple(customers), tuple(parties), tuple(relations), TransactionTable.from_rows(transactions))
    return World((inst,), (date(2020, 1, 1), date(2020, 1, 31)))


# ---------------------------------------------------------------- transaction stats


def test_cash_out_stats():
    w = _world(
        [customer("AAA", "C1", person("A"))],
        [txn(f"T{i}", 2, a, Channel.CASH, "AAA:C1", "EXTERNAL:X") for i, a in enumerate(("10.00", "20.00", "30.00"))],
    )
    s = transaction_stats("AAA:C1", build_transaction_graph(w))
    assert (s["Cash_out_count"], s["Cash_out_min"], s["Cash_out_max"], s["Cash_out_mean"], s["Cash_out_sum"]) == (3, 10, 30, 20, 60)
    assert s["Cash_out_std"] == pytest.approx(math.sqrt(200 / 3), abs=1e-12)
    assert s["Cash_in_count"] == 0


def test_no_transactions_all_zero():
    w = _world([customer("AAA", "C1", person("A"))])
    g = build_transaction_graph(w)
    assert set(transaction_stats("AAA:C1", g).values()) == {0.0}
    assert set(transaction_stats("AAA:NOPE", g).values()) == {0.0}
    assert not transaction_stats_all(g).any()


def test_stats_match_streaming_oracle(small_world):
    g = build_transaction_graph(small_world, Scope("NUBAGB"))
    table = transaction_stats_all(g)
    frame = small_world.all_transactions().frame
    channels = list(Channel)
    rng = np.random.default_rng(0)
    for v in rng.choice(np.flatnonzero(g.in_scope), size=40, replace=False):
        ref = g.vertices[v]
        acc: dict[str, list[float]] = {}
        for row in frame.itertuples(index=False):
            for direction, end in (("in", row.dest), ("out", row.source)):
                if end == ref:
                    acc.setdefault(f"{channels[row.channel].value}_{direction}", []).append(row.amount / 100)
        expect = np.zeros(len(STAT_COLUMNS))
        for prefix, values in acc.items():
            for stat, value in streaming_stats(values).items():
                expect[STAT_COLUMNS.index(f"{prefix}_{stat}")] = value
        np.testing.assert_allclose(table[v], expect, rtol=1e-9, atol=1e-9)


# ---------------------------------------------------------------- PageRank


def test_pagerank_small_cases():
    np.testing.assert_allclose(pagerank_edges([0, 1], [1, 0], 2).scores, [0.5, 0.5], atol=1e-12)
    assert pagerank_edges([], [], 1).scores.tolist() == [1.0]
    chain = pagerank_edges([0, 1], [1, 2], 3)
    assert np.abs(chain.scores - dense_pagerank([(0, 1), (1, 2)], 3)).max() < 1e-8
    with pytest.raises(EmptyInput):
        pagerank_edges([], [], 0)


def test_pagerank_nonconvergence_is_reported():
    res = pagerank_edges([0, 1, 2], [1, 2, 0], 3, max_iter=1, tol=0.0)
    assert not res.converged and res.iterations == 1
    assert abs(res.scores.sum() - 1) < 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 50))
def test_pagerank_matches_dense_oracle(seed, n):
    rng = np.random.default_rng(seed)
    src, dst, _ = random_edges(rng, n, int(rng.integers(0, 3 * n)))
    res = pagerank_edges(src, dst, n, tol=1e-13, max_iter=10_000)
    oracle = dense_pagerank(list(zip(src, dst)), n, iters=3000)
    assert np.abs(res.scores - oracle).max() < 1e-8
    assert abs(res.scores.sum() - 1) < 1e-9
    assert (res.scores > 0).all()


def test_pagerank_on_generated_world_sums_to_one(small_world):
    res = pagerank(build_transaction_graph(small_world))
    assert res.converged
    assert abs(res.scores.sum() - 1) < 1e-9


# ---------------------------------------------------------------- egonets


def test_egonet_direct_counterparties():
    w = _world(
        [customer("AAA", c, person(c), sar=c != "C0") for c in ("C0", "C1", "C2", "C3")],
        [
            txn("T1", 2, "1.00", Channel.CASH, "AAA:C0", "AAA:C1"),
            txn("T2", 2, "1.00", Channel.CASH, "AAA:C2", "AAA:C0"),
            txn("T3", 2, "1.00", Channel.CASH, "AAA:C2", "AAA:C3"),
        ],
    )
    g = build_transaction_graph(w)
    flagged = np.array([c in ("AAA:C1", "AAA:C2", "AAA:C3") for c in g.vertices])
    assert egonet_suspicious_count(g, "AAA:C0", 1, flagged) == 2
    assert egonet_suspicious_count(g, "AAA:C0", 2, flagged) == 3
    with pytest.raises(ValidationError):
        egonet_counts(g, flagged, 3)


def test_isolated_egonet_is_zero():
    g = build_transaction_graph(_world([customer("AAA", "C1", person("A"), sar=True)]))
    assert egonet_suspicious_count(g, "AAA:C1", 2, np.array([True])) == 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_egonet_matches_bfs_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 50
    src, dst, _ = random_edges(rng, n, int(rng.integers(0, 120)))
    flagged = rng.random(n) < 0.3
    in_scope = rng.random(n) < 0.8
    g = _fake_txn_graph(n, src, dst, in_scope)
    adj: dict[int, set[int]] = {}
    for s, d in zip(src.tolist(), dst.tolist()):
        if s != d:
            adj.setdefault(s, set()).add(d)
            adj.setdefault(d, set()).add(s)
    target = {int(v) for v in np.flatnonzero(flagged & in_scope)}
    for hops in (1, 2):
        got = egonet_counts(g, flagged, hops)
        want = [bfs_egonet_count(adj, v, hops, target) for v in range(n)]
        assert got.tolist() == want


def _fake_txn_graph(n, src, dst, in_scope, ts=None):
    from fedgraph.graphs import TransactionGraph

    m = len(src)
    return TransactionGraph(
        Scope(), np.array([f"B:{i:03d}" for i in range(n)], dtype=object), np.asarray(in_scope), np.asarray(src),
        np.asarray(dst), np.zeros(m, dtype=np.int64) if ts is None else np.asarray(ts), np.ones(m, dtype=np.int64),
        np.zeros(m, dtype=np.int8), np.zeros(m, dtype=bool),
    )


# ---------------------------------------------------------------- temporal cycles


def test_planted_triangle(tiny_world):
    g = build_transaction_graph(tiny_world)
    counts = temporal_cycles(g)
    for ref in ("AAA:C1", "BBB:C9", "BBB:C8"):
        assert counts[g.index(ref)] == 1
    assert counts[g.index("AAA:C2")] == 0


def test_out_of_order_triangle_has_no_cycle():
    counts = temporal_cycle_counts([0, 1, 2], [1, 2, 0], [10, 30, 20], 3)
    assert counts.tolist() == [0, 0, 0]
    assert temporal_cycle_counts([0, 1, 2], [1, 2, 0], [10, 20, 30], 3).tolist() == [1, 1, 1]


def test_cycle_window_and_length_limits():
    assert temporal_cycle_counts([0, 1], [1, 0], [0, 31 * DAY], 2).tolist() == [0, 0]
    assert temporal_cycle_counts([0, 1], [1, 0], [0, 30 * DAY], 2).tolist() == [1, 1]
    square = ([0, 1, 2, 3], [1, 2, 3, 0], [1, 2, 3, 4])
    assert temporal_cycle_counts(*square, 4, max_len=3).tolist() == [0] * 4
    assert temporal_cycle_counts(*square, 4, max_len=4).tolist() == [1] * 4
    with pytest.raises(ValidationError):
        temporal_cycle_counts(*square, 4, max_len=1)


def test_cycle_budget():
    rng = np.random.default_rng(1)
    src, dst, ts = random_edges(rng, 10, 300)
    with pytest.raises(BudgetExceeded):
        temporal_cycle_counts(src, dst, ts, 10, budget=50)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12), shift=st.integers(-10**9, 10**9))
def test_cycles_match_oracle_and_translate(seed, n, shift):
    rng = np.random.default_rng(seed)
    src, dst, ts = random_edges(rng, n, int(rng.integers(0, 3 * n)), t_max=60 * DAY)
    got = temporal_cycle_counts(src, dst, ts, n, max_len=4)
    want = brute_force_cycle_counts(list(zip(src.tolist(), dst.tolist(), ts.tolist())), n, 4, 30 * DAY)
    assert got.tolist() == want
    assert temporal_cycle_counts(src, dst, ts + shift, n, max_len=4).tolist() == want


# ---------------------------------------------------------------- components


def test_component_labels_basics():
    assert component_labels(0, np.array([]), np.array([])).tolist() == []
    assert component_labels(4, np.array([3, 1]), np.array([1, 2])).tolist() == [0, 1, 1, 1]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 1000))
def test_components_match_union_find(seed, n):
    u, v = random_undirected(np.random.default_rng(seed), n)
    assert component_labels(n, u, v).tolist() == union_find_labels(n, zip(u.tolist(), v.tolist()))


def test_shared_party_joins_one_component():
    w = _world(
        [customer("AAA", "C1", person("A")), customer("AAA", "C2", person("B"))],
        parties=[RelatedParty("P1", "AAA", person("Shared"))],
        relations=[Relation("AAA", "C1", "P1", RelationKind.FAMILY), Relation("AAA", "C2", "P1", RelationKind.FAMILY)],
    )
    pg = build_party_graph(w, resolve_world(w))
    labels = weakly_connected_components(pg)
    assert labels[pg.index("C:AAA:C1")] == labels[pg.index("C:AAA:C2")] == "C:AAA:C1"


# ---------------------------------------------------------------- component features


def _cc_world(target_sar=False):
    cs = [
        customer("AAA", "T", person("Target"), sar=target_sar, alert=True),
        customer("AAA", "X", person("X"), sar=True, alert=True),
        customer("AAA", "Y", person("Y"), sar=True, exit_=True),
        customer("AAA", "Z", person("Z")),
    ]
    parties = [RelatedParty("P1", "AAA", person("Pa")), RelatedParty("P2", "AAA", person("Pb"))]
    rel = [
        Relation("AAA", "T", "P1", RelationKind.FAMILY),
        Relation("AAA", "X", "P1", RelationKind.FAMILY),
        Relation("AAA", "Y", "P2", RelationKind.FAMILY),
        Relation("AAA", "X", "P2", RelationKind.OTHER),
    ]
    return _world(cs, parties=parties, relations=rel)


def test_cc_features_direct_count():
    w = _cc_world()
    pg = build_party_graph(w, resolve_world(w))
    # T, X, Y, P1, P2 and one group node each
    assert cc_features(pg, w, "C:AAA:T") == (1, 2, 1, 10)
    assert cc_features(pg, w, "C:AAA:Z") == (0, 0, 0, 2)
    with pytest.raises(ValidationError):
        cc_features(pg, w, "P:AAA:P1")


def test_own_flags_excluded():
    for w in (_cc_world(False), _cc_world(True)):
        pg = build_party_graph(w, resolve_world(w))
        assert cc_features(pg, w, "C:AAA:T")[:3] == (1, 2, 1)


def test_exclusion_invariant_on_generated_world(small_world):
    fm = build_feature_matrix(small_world, Scope(), FeatureSet.TXN_GRAPH)
    cc = [fm.columns.index(c) for c in ("cc_alert_count", "cc_sar_count", "cc_exit_count")]
    inst = small_world.institutions[0]
    flipped_customers = []
    targets = [c.customer_id for c in inst.customers[:5]]
    for c in inst.customers:
        if c.customer_id in targets:
            r = c.risk
            c = dataclasses.replace(c, risk=RiskIntel(not r.past_alert, not r.sar_flag or r.fincrime_exit_marker, r.fincrime_exit_marker))
        flipped_customers.append(c)
    world2 = dataclasses.replace(small_world, institutions=(dataclasses.replace(inst, customers=tuple(flipped_customers)),) + small_world.institutions[1:])
    fm2 = build_feature_matrix(world2, Scope(), FeatureSet.TXN_GRAPH)
    rows = np.flatnonzero((fm.keys.institution == inst.code) & fm.keys.customer_id.isin(targets))
    np.testing.assert_array_equal(fm.x[rows][:, cc], fm2.x[rows][:, cc])


# ---------------------------------------------------------------- curves


def test_conditional_probability_curve():
    c = conditional_probability_curve([0, 0, 1, 1], [0, 1, 0, 1])
    assert c.probability.tolist() == [0.5, 0.5]
    assert (conditional_probability_curve([3, 5, 5], [0, 0, 0]).probability == 0).all()
    binned = conditional_probability_curve([0, 1, 2, 7], [0, 0, 1, 1], bins=[0, 2, 10])
    assert binned.bin.tolist() == [0, 2] and binned.probability.tolist() == [0, 1]
    with pytest.raises(EmptyInput):
        conditional_probability_curve([], [])


def test_weighted_spearman():
    assert weighted_spearman([1, 2, 3], [10, 20, 30], [1, 1, 1]) == pytest.approx(1)
    assert weighted_spearman([1, 2, 3], [3, 2, 1], [1, 5, 1]) == pytest.approx(-1)
    assert weighted_spearman([1, 1], [1, 2], [1, 1]) == 0.0
    from scipy.stats import spearmanr

    rng = np.random.default_rng(3)
    x, y = rng.random(30), rng.random(30)
    assert weighted_spearman(x, y, np.ones(30)) == pytest.approx(spearmanr(x, y).statistic)


# ---------------------------------------------------------------- matrices


def test_schemas():
    assert len(FeatureSet.TXN.columns) == 62
    assert FeatureSet.TXN_GRAPH.columns == FeatureSet.TXN.columns + GRAPH_COLUMNS
    assert len(GRAPH_COLUMNS) == 8


def test_feature_matrix_matches_direct_calls(small_world):
    ctx = GraphContext.build(small_world)
    fm = build_feature_matrix(small_world, Scope(), FeatureSet.TXN_GRAPH, ctx)
    assert len(fm) == small_world.n_customers
    assert list(fm.ids) == sorted(fm.ids)
    assert (fm.x[:, fm.columns.index("cc_node_count")] >= 2).all()
    rng = np.random.default_rng(2)
    for i in rng.choice(len(fm), size=10, replace=False):
        ref = fm.ids[i]
        cc = cc_features(ctx.party, small_world, "C:" + ref)
        row = dict(zip(fm.columns, fm.x[i]))
        assert (row["cc_alert_count"], row["cc_sar_count"], row["cc_exit_count"], row["cc_node_count"]) == cc
        stats = transaction_stats(ref, ctx.txn)
        assert [row[c] for c in STAT_COLUMNS] == pytest.approx([stats[c] for c in STAT_COLUMNS])


def test_local_rows_with_global_graph_columns(small_world):
    code = small_world.codes[1]
    glob = GraphContext.build(small_world)
    local = build_feature_matrix(small_world, Scope(code), FeatureSet.TXN_GRAPH, graph_ctx=glob)
    full = build_feature_matrix(small_world, Scope(), FeatureSet.TXN_GRAPH, glob)
    assert set(local.keys.institution) == {code}
    sub = full.select((full.keys.institution == code).to_numpy())
    g = [local.columns.index(c) for c in GRAPH_COLUMNS]
    np.testing.assert_array_equal(local.x[:, g], sub.x[:, g])
    with pytest.raises(ValidationError):
        build_feature_matrix(small_world, Scope(code), FeatureSet.TXN, glob)


def test_csv_round_trip_and_determinism(small_world, tmp_path):
    a = build_feature_matrix(small_world, Scope("BWBAGB"), FeatureSet.TXN)
    b = build_feature_matrix(small_world, Scope("BWBAGB"), FeatureSet.TXN)
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = FeatureMatrix.from_csv(tmp_path / "a.csv", FeatureSet.TXN)
    np.testing.assert_array_equal(back.x, a.x)
    np.testing.assert_array_equal(back.y, a.y)
    header = pd.read_csv(tmp_path / "a.csv", nrows=0).columns.tolist()
    assert header == ["institution", "customer_id"] + FeatureSet.TXN.columns + ["label"]
    with pytest.raises(ValidationError):
        FeatureMatrix.from_csv(tmp_path / "a.csv", FeatureSet.TXN_GRAPH)
