"""End-to-end evaluation: per-bank local models, one federated model, reports."""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from .datagen import BANK_CODES, GenConfig
from .errors import InvalidConfig, IoFailure, ValidationError
from .features import (
    FeatureMatrix,
    FeatureSet,
    GraphContext,
    GraphParams,
    build_feature_matrix,
    conditional_probability_curve,
    graph_columns,
    weighted_spearman,
)
from .fed.protocol import FedConfig, FedResult, PartyData, Transport, simulate
from .graphs import Scope, build_transaction_graph
from .model import World
from .nn import Metrics, ModelArch, ModelParams, Standardizer, TrainConfig, evaluate, forward, init_params, train, undersample
from .store import format_amounts

REPORT_SCHEMA_VERSION = 1
SETS = (FeatureSet.TXN, FeatureSet.TXN_GRAPH)
TEST_SETS = ("local_balanced", "all_record")

# tags for derived seeds
_SPLIT, _UNDER_TRAIN, _UNDER_TEST, _SHUFFLE = 1, 2, 3, 4


def derive_seed(seed: int, *path: int) -> int:
    """A 63-bit seed derived from the master seed and a path of small ints."""
    words = np.random.SeedSequence([seed, *path]).generate_state(2, np.uint32)
    return int((int(words[0]) << 31) ^ int(words[1]))


def default_roster(world: World) -> tuple[str, ...]:
    known = [c for c in BANK_CODES if c in world.codes]
    return tuple(known + sorted(c for c in world.codes if c not in known))


def _default_fed() -> FedConfig:
    return FedConfig(local_epochs_per_round=50)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    test_fraction: float = 0.3
    graph_scope: str = "global"
    log1p: bool = True
    fed: FedConfig = field(default_factory=_default_fed)

    def validate(self) -> ExperimentConfig:
        if not 0 < self.test_fraction < 1:
            raise InvalidConfig(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if self.graph_scope not in ("global", "local"):
            raise InvalidConfig(f"graph_scope must be 'global' or 'local', got {self.graph_scope!r}")
        if self.fed.feature_set is not FeatureSet.TXN_GRAPH:
            raise InvalidConfig("the federated model uses transaction and graph features")
        return self

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, seed=seed, fed=replace(self.fed, seed=seed))

    @property
    def local_epochs(self) -> int:
        # local models get the same optimisation budget as a federated party
        return self.fed.rounds * self.fed.local_epochs_per_round

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.fed.learning_rate, self.fed.batch_size, self.local_epochs, seed)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "graph_scope": self.graph_scope,
            "log1p": self.log1p,
            "fed": self.fed.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = {"seed", "test_fraction", "graph_scope", "log1p", "fed"}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"ExperimentConfig: unknown fields {sorted(unknown)}")
        d = dict(d)
        if "fed" in d:
            d["fed"] = FedConfig.from_dict(d["fed"])
        try:
            return cls(**d).validate()
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc


# ---------------------------------------------------------------- data preparation


def stratified_split(labels: np.ndarray, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; returns sorted (train, test) positions."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls in (0, 1):
        members = rng.permutation(np.flatnonzero(labels == cls))
        n_test = int(round(test_fraction * len(members)))
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


@dataclass
class BankSplit:
    code: str
    rows: np.ndarray  # positions in the feature matrix
    train: np.ndarray  # balanced training positions
    test: np.ndarray  # full held-out positions
    test_balanced: np.ndarray
    train_seed: int


def local_transaction_features(world: World, code: str) -> FeatureMatrix:
    """What one bank can compute alone: stats and degrees over its own view."""
    scope = Scope(code)
    ctx = GraphContext(scope, build_transaction_graph(world, scope), None, [])  # type: ignore[arg-type]
    return build_feature_matrix(world, scope, FeatureSet.TXN, ctx=ctx)


def build_features(world: World, config: ExperimentConfig, roster: tuple[str, ...], params: GraphParams = GraphParams()) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Returns (features for every customer, global-scope features for the exit-probability curves).

    Transaction columns always come from each bank's local view; graph
    columns from the global graphs or, for the ablation, each bank's own.
    """
    global_ctx = GraphContext.build(world, Scope())
    overview = build_feature_matrix(world, Scope(), FeatureSet.TXN_GRAPH, ctx=global_ctx, params=params)
    parts = []
    for code in roster:
        local = local_transaction_features(world, code)
        refs = local.ids
        gctx = global_ctx if config.graph_scope == "global" else GraphContext.build(world, Scope(code))
        x = np.hstack([local.x, graph_columns(world, gctx, refs, params)])
        parts.append(FeatureMatrix(FeatureSet.TXN_GRAPH, local.keys, x, local.y, FeatureSet.TXN_GRAPH.columns))
    keys = pd.concat([p.keys for p in parts], ignore_index=True)
    fm = FeatureMatrix(
        FeatureSet.TXN_GRAPH,
        keys,
        np.vstack([p.x for p in parts]),
        np.concatenate([p.y for p in parts]),
        FeatureSet.TXN_GRAPH.columns,
    )
    return fm, overview


def split_banks(fm: FeatureMatrix, config: ExperimentConfig, roster: tuple[str, ...]) -> list[BankSplit]:
    inst = fm.keys["institution"].to_numpy()
    out = []
    for b, code in enumerate(roster):
        rows = np.flatnonzero(inst == code)
        y = fm.y[rows]
        tr, te = stratified_split(y, config.test_fraction, derive_seed(config.seed, _SPLIT, b))
        tr_bal = tr[undersample(y[tr], derive_seed(config.seed, _UNDER_TRAIN, b))]
        te_bal = te[undersample(y[te], derive_seed(config.seed, _UNDER_TEST, b))]
        out.append(BankSplit(code, rows, rows[tr_bal], rows[te], rows[te_bal], derive_seed(config.seed, _SHUFFLE, b)))
    return out


def check_hygiene(fm: FeatureMatrix, splits: list[BankSplit]) -> None:
    """No test row may appear in any training set (and so in any standardizer)."""
    ids = fm.ids
    test_ids = set(ids[np.concatenate([s.test for s in splits])])
    for s in splits:
        train_ids = set(ids[s.train])
        if train_ids & test_ids:
            raise AssertionError(f"{s.code}: training rows overlap the test pool")
        if not set(ids[s.test_balanced]) <= set(ids[s.test]):
            raise AssertionError(f"{s.code}: balanced test rows outside the held-out split")


# ---------------------------------------------------------------- report


@dataclass
class BankResult:
    code: str
    n_customers: int
    n_train: int
    n_test: int
    n_test_balanced: int
    metrics: dict[FeatureSet, dict[str, Metrics]]

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "n_customers": self.n_customers,
            "n_train_balanced": self.n_train,
            "n_test": self.n_test,
            "n_test_balanced": self.n_test_balanced,
            **{fs.display: {t: self.metrics[fs][t].to_dict() for t in TEST_SETS} for fs in SETS},
        }


@dataclass
class ExperimentReport:
    config: dict
    banks: list[BankResult]
    federated: Metrics
    round_log: list[dict]
    exit_curve: dict
    generated_at: str = ""

    @property
    def roster(self) -> list[str]:
        return [b.code for b in self.banks]

    def bank(self, code: str) -> BankResult:
        return next(b for b in self.banks if b.code == code)

    def f1(self, fs: FeatureSet, test_set: str = "all_record") -> np.ndarray:
        return np.array([b.metrics[fs][test_set].f1 for b in self.banks])

    def to_dict(self, with_timestamp: bool = True) -> dict:
        d = {"schema_version": REPORT_SCHEMA_VERSION}
        if with_timestamp:
            d["generated_at"] = self.generated_at
        d.update(
            {
                "config": self.config,
                "banks": [b.to_dict() for b in self.banks],
                "federated": {"all_record": self.federated.to_dict(), "per_round_log": self.round_log},
                "exit_curve": self.exit_curve,
            }
        )
        return d

    def to_json(self, with_timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(with_timestamp), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentReport:
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValidationError(f"unsupported report schema {d.get('schema_version')!r}")
        banks = [
            BankResult(
                b["code"],
                b["n_customers"],
                b["n_train_balanced"],
                b["n_test"],
                b["n_test_balanced"],
                {fs: {t: Metrics.from_dict(b[fs.display][t]) for t in TEST_SETS} for fs in SETS},
            )
            for b in d["banks"]
        ]
        fed = d["federated"]
        return cls(d["config"], banks, Metrics.from_dict(fed["all_record"]), fed["per_round_log"], d["exit_curve"], d.get("generated_at", ""))


@dataclass
class Prepared:
    """Features and splits shared by every model in one experiment."""

    config: ExperimentConfig
    fed: FedConfig  # with the roster filled in
    fm: FeatureMatrix
    overview: FeatureMatrix
    splits: list[BankSplit]
    pool: np.ndarray  # all-record test positions

    def split(self, code: str) -> BankSplit:
        for s in self.splits:
            if s.code == code:
                return s
        raise ValidationError(f"unknown institution {code!r}; roster is {list(self.fed.roster)}")

    def party(self, code: str) -> PartyData:
        s = self.split(code)
        fm = self.fm
        return PartyData(s.code, fm.x[s.train], fm.y[s.train], fm.ids[s.train], s.train_seed, log1p=self.config.log1p)


def prepare(
    world: World,
    config: ExperimentConfig,
    params: GraphParams = GraphParams(),
    features: tuple[FeatureMatrix, FeatureMatrix] | None = None,
) -> Prepared:
    config.validate()
    roster = config.fed.roster or default_roster(world)
    if sorted(roster) != sorted(world.codes):
        raise InvalidConfig(f"roster {list(roster)} does not match the world's institutions {world.codes}")
    fed_cfg = replace(config.fed, roster=tuple(roster))
    fm, overview = features if features is not None else build_features(world, config, roster, params)
    splits = split_banks(fm, config, roster)
    check_hygiene(fm, splits)
    pool = np.sort(np.concatenate([s.test for s in splits]))
    return Prepared(config, fed_cfg, fm, overview, splits, pool)


def train_local(prep: Prepared, code: str, fs: FeatureSet) -> tuple[ModelParams, Standardizer]:
    """One bank's model on its own balanced training rows."""
    s, fm, width = prep.split(code), prep.fm, len(fs.columns)
    st = Standardizer.fit(fm.x[s.train, :width], log1p=prep.config.log1p)
    params = train(
        init_params(ModelArch(width, prep.fed.hidden), prep.fed.seed),
        st.transform(fm.x[s.train, :width]),
        fm.y[s.train],
        prep.config.train_config(s.train_seed),
        ids=fm.ids[s.train],
    )
    return params, st


def evaluate_local(prep: Prepared, code: str, fs: FeatureSet, params: ModelParams, st: Standardizer) -> dict[str, Metrics]:
    s, fm, width = prep.split(code), prep.fm, len(fs.columns)
    return {
        "local_balanced": evaluate(params, st.transform(fm.x[s.test_balanced, :width]), fm.y[s.test_balanced]),
        "all_record": evaluate(params, st.transform(fm.x[prep.pool, :width]), fm.y[prep.pool]),
    }


def federated_all_record(prep: Prepared, params: ModelParams) -> Metrics:
    return _fed_all_record(params, prep.fm, prep.pool, {s.code: prep.party(s.code).standardizer for s in prep.splits})


def _fed_all_record(params: ModelParams, fm: FeatureMatrix, pool: np.ndarray, standardizers: dict[str, Standardizer]) -> Metrics:
    # each bank scores its own held-out customers with its own standardizer
    inst = fm.keys["institution"].to_numpy()[pool]
    pred = np.zeros(len(pool), dtype=bool)
    for code, st in standardizers.items():
        sel = inst == code
        if sel.any():
            pred[sel] = forward(params, st.transform(fm.x[pool[sel]])) >= 0.5
    return Metrics.from_predictions(pred, fm.y[pool])


def exit_curve_analysis(overview: FeatureMatrix) -> tuple[dict, pd.DataFrame, pd.DataFrame]:
    col = overview.columns.index("cc_sar_count")
    sar_curve = conditional_probability_curve(overview.x[:, col], overview.y)
    rho = weighted_spearman(sar_curve["bin"], sar_curve["probability"], sar_curve["support"])
    nodes = overview.x[:, overview.columns.index("cc_node_count")]
    top = max(2.0, float(nodes.max()))
    edges = 2.0 ** np.arange(0, int(np.ceil(np.log2(top))) + 2)
    node_curve = conditional_probability_curve(nodes, overview.y, bins=edges)
    summary = {
        "feature": "cc_sar_count",
        "weighted_spearman": rho,
        "curve": sar_curve.to_dict(orient="list"),
        "node_count_curve": node_curve.to_dict(orient="list"),
    }
    return summary, sar_curve, node_curve


def run_experiment(
    world: World,
    ground_truth=None,
    config: ExperimentConfig = ExperimentConfig(),
    transport: Transport = Transport.IN_PROCESS,
    gen_config: GenConfig | None = None,
    params: GraphParams = GraphParams(),
    generated_at: str | None = None,
    features: tuple[FeatureMatrix, FeatureMatrix] | None = None,
) -> tuple[ExperimentReport, FedResult]:
    """Run the local and federated pipelines and assemble the report.

    ``ground_truth`` is accepted for symmetry with the generator but never
    used for training or scoring; labels come only from the exit markers.
    """
    prep = prepare(world, config, params, features)
    fm, overview, splits, pool, fed_cfg = prep.fm, prep.overview, prep.splits, prep.pool, prep.fed

    results = []
    standardizers: dict[str, Standardizer] = {}
    parties = []
    for s in splits:
        metrics = {fs: evaluate_local(prep, s.code, fs, *train_local(prep, s.code, fs)) for fs in SETS}
        party = prep.party(s.code)
        standardizers[s.code] = party.standardizer
        parties.append(party)
        results.append(BankResult(s.code, len(s.rows), len(s.train), len(s.test), len(s.test_balanced), metrics))

    fed = simulate(fed_cfg, parties, transport)
    fed_metrics = _fed_all_record(fed.final_params, fm, pool, standardizers)
    exit_curve, _, _ = exit_curve_analysis(overview)
    echo = {
        "experiment": replace(config, fed=fed_cfg).to_dict(),
        "train": config.train_config(config.seed).to_dict() | {"seed": "derived per bank", "bank_seeds": {s.code: s.train_seed for s in splits}},
        "gen": gen_config.to_dict() if gen_config is not None else None,
        "graph": {
            "damping": params.damping,
            "tol": params.tol,
            "max_iter": params.max_iter,
            "cycle_max_len": params.cycle_max_len,
            "cycle_window": params.cycle_window,
            "cycle_budget": params.cycle_budget,
        },
        "world": {
            "generator_seed": world.generator_seed,
            "coverage": [world.coverage[0].isoformat(), world.coverage[1].isoformat()],
            "institutions": list(world.codes),
            "n_customers": world.n_customers,
        },
    }
    stamp = generated_at or datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    report = ExperimentReport(echo, results, fed_metrics, [r.to_dict() for r in fed.log], exit_curve, stamp)
    return report, fed


# ---------------------------------------------------------------- emitters


CSV_HEADER = ["section", "bank", "feature_set", "test_set", "accuracy", "f1", "tp", "fp", "tn", "fn"]


def report_rows(report: ExperimentReport) -> list[list]:
    rows = []
    for b in report.banks:
        for fs in SETS:
            for t in TEST_SETS:
                m = b.metrics[fs][t]
                rows.append(["local", b.code, fs.display, t, m.accuracy, m.f1, m.tp, m.fp, m.tn, m.fn])
    m = report.federated
    rows.append(["federated", "ALL", FeatureSet.TXN_GRAPH.display, "all_record", m.accuracy, m.f1, m.tp, m.fp, m.tn, m.fn])
    return rows


def to_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in report_rows(report):
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _pair(m: Metrics) -> str:
    return f"{m.accuracy:.3f}/{m.f1:.3f}"


def to_markdown(report: ExperimentReport) -> str:
    roster = report.roster
    head = "| Test set (Accuracy/F1) | " + " | ".join(roster) + " |"
    rule = "|---|" + "---|" * len(roster)
    labels = {"local_balanced": "Balanced local test set", "all_record": "All-record test set"}
    titles = {
        FeatureSet.TXN: "Local models, transaction features",
        FeatureSet.TXN_GRAPH: "Local models, transaction and graph features",
    }
    out = []
    for fs in SETS:
        out += [f"### {titles[fs]}", "", head, rule]
        for t in TEST_SETS:
            out.append(f"| {labels[t]} | " + " | ".join(_pair(report.bank(c).metrics[fs][t]) for c in roster) + " |")
        out.append("")
    out += [
        "### Federated model, transaction and graph features",
        "",
        "| Test set (Accuracy/F1) | Federated |",
        "|---|---|",
        f"| All-record test set | {_pair(report.federated)} |",
        "",
        f"Weighted Spearman correlation between cc_sar_count and exit-marker rate: {report.exit_curve['weighted_spearman']:.4f}",
        "",
    ]
    return "\n".join(out)


def emit_report(report: ExperimentReport, out_dir: str | Path, formats=("json", "csv", "markdown")) -> list[Path]:
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for fmt in formats:
            if fmt == "json":
                path, text = out / "report.json", report.to_json()
            elif fmt == "csv":
                path, text = out / "report.csv", to_csv(report)
            elif fmt in ("markdown", "md", "markdown-table"):
                path, text = out / "report.md", to_markdown(report)
            else:
                raise ValidationError(f"unknown report format {fmt!r}")
            path.write_text(text, encoding="utf-8", newline="\n")
            written.append(path)
        for name, key in (("exit_curve_by_sar.csv", "curve"), ("exit_curve_by_nodes.csv", "node_count_curve")):
            path = out / name
            pd.DataFrame(report.exit_curve[key]).to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
            written.append(path)
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out}: {exc}") from exc
    return written


# ---------------------------------------------------------------- privacy scan


_STRING = re.compile(r'"((?:[^"\\]|\\.)*)"')
_WORD = re.compile(r"[A-Za-z0-9]+")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")


def scan_transcript(payload: bytes, world: World) -> list[str]:
    """Sensitive values from ``world`` found in a wire transcript.

    Customer ids and names are searched inside every JSON string and among
    the alphanumeric words; amounts are compared against whole numeric
    tokens, since a 17-digit float can contain any short digit run.
    """
    text = payload.decode("utf-8", errors="replace")
    strings = set(_STRING.findall(text))
    words = set(_WORD.findall(text))
    numbers = set(_NUMBER.findall(text))
    hits = []
    for c in world.customers():
        if c.customer_id in words or any(c.customer_id in s for s in strings):
            hits.append(f"customer_id {c.customer_id}")
        name = c.identity.full_name
        if name and any(name in s for s in strings):
            hits.append(f"full_name {name}")
    amounts = set()
    for inst in world.institutions:
        amounts.update(format_amounts(inst.transactions.frame["amount"].to_numpy()))
    hits += [f"amount {a}" for a in sorted(amounts & numbers)]
    return hits
