"""Command-line entry point: ``fedgraph <subcommand> ...``.

Exit codes: 0 on success, 1 on usage or validation errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .datagen import GenConfig, GroundTruth, generate_world
from .errors import FedGraphError, InvalidConfig, ValidationError
from .experiment import (
    ExperimentConfig,
    ExperimentReport,
    emit_report,
    evaluate_local,
    federated_all_record,
    prepare,
    run_experiment,
    train_local,
)
from .features import FeatureSet, GraphContext, build_feature_matrix
from .fed.protocol import FedConfig, Transport, run_aggregator, run_party, simulate
from .fed.transport import SocketClient, SocketServer, parse_address
from .graphs import Scope, to_dot
from .nn import save_checkpoint
from .resolution import resolve_world
from .store import load_world, save_world

log = logging.getLogger("fedgraph")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
GEN_CONFIG_FILE = "gen_config.json"
GROUND_TRUTH_FILE = "ground_truth.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; this CLI reserves 2 for runtime failures."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- helpers


def _experiment_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise InvalidConfig(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc
        # accepts an experiment config, a bare FedConfig, or a report's config echo
        if "schema_version" in doc and "config" in doc:
            doc = doc["config"]
        if "experiment" in doc:
            doc = doc["experiment"]
        if "fed" in doc or "test_fraction" in doc or "graph_scope" in doc:
            cfg = ExperimentConfig.from_dict(doc)
        else:
            cfg = replace(cfg, fed=FedConfig.from_dict(doc))
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg.validate()


def _load(path: str):
    world = load_world(path)
    log.info("loaded world %s: %d institutions, %d customers", path, len(world.codes), world.n_customers)
    return world


def _side_file(world_dir: str, name: str) -> Path | None:
    p = Path(world_dir) / name
    return p if p.is_file() else None


def _print_metrics(label: str, metrics) -> None:
    print(f"{label}: accuracy {metrics.accuracy:.4f} f1 {metrics.f1:.4f} (tp={metrics.tp} fp={metrics.fp} tn={metrics.tn} fn={metrics.fn})")


# ---------------------------------------------------------------- subcommands


def cmd_gen(args) -> None:
    cfg = GenConfig.from_json(args.config) if args.config else GenConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    world, truth = generate_world(cfg)
    out = Path(args.out)
    save_world(world, out)
    (out / GROUND_TRUTH_FILE).write_text(truth.to_json(), encoding="utf-8")
    (out / GEN_CONFIG_FILE).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(world.codes)} institutions, {world.n_customers} customers, {len(truth.rings)} rings to {out}")


def cmd_resolve(args) -> None:
    world = _load(args.world)
    groups = resolve_world(world, args.institution)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(g.to_json() + "\n" for g in groups), encoding="utf-8")
    print(f"wrote {len(groups)} groups to {out}")


def cmd_features(args) -> None:
    world = _load(args.world)
    scope = Scope.parse(args.scope)
    ctx = GraphContext.build(world, scope)
    fm = build_feature_matrix(world, scope, FeatureSet(args.feature_set), ctx=ctx)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fm.to_csv(out)
    print(f"wrote {len(fm)} rows x {len(fm.columns)} features to {out}")
    if args.emit_dot:
        dot_dir = Path(args.emit_dot)
        dot_dir.mkdir(parents=True, exist_ok=True)
        (dot_dir / "transactions.dot").write_text(to_dot(ctx.txn), encoding="utf-8")
        (dot_dir / "party.dot").write_text(to_dot(ctx.party), encoding="utf-8")
        print(f"wrote GraphViz files to {dot_dir}")


def cmd_train_local(args) -> None:
    world = _load(args.world)
    cfg = _experiment_config(args)
    if args.epochs is not None:
        if args.epochs < 1:
            raise InvalidConfig("--epochs must be >= 1")
        cfg = replace(cfg, fed=replace(cfg.fed, rounds=1, local_epochs_per_round=args.epochs))
    prep = prepare(world, cfg)
    fs = FeatureSet(args.feature_set)
    params, st = train_local(prep, args.bank, fs)
    for name, m in evaluate_local(prep, args.bank, fs, params, st).items():
        _print_metrics(f"{args.bank} {fs.display} {name}", m)
    if args.out:
        save_checkpoint(args.out, params, st)
        print(f"wrote model to {args.out}")


def _write_fed_outputs(args, result) -> None:
    if args.out:
        save_checkpoint(args.out, result.final_params)
        print(f"wrote model to {args.out}")
    if getattr(args, "log", None):
        Path(args.log).write_text(json.dumps([r.to_dict() for r in result.log], indent=2) + "\n", encoding="utf-8")


def cmd_train_federated(args) -> None:
    if not args.simulate:
        raise UsageError("train-federated runs in-process only; pass --simulate, or use the aggregator and party commands")
    world = _load(args.world)
    prep = prepare(world, _experiment_config(args))
    parties = [prep.party(s.code) for s in prep.splits]
    result = simulate(prep.fed, parties, Transport(args.transport))
    for r in result.log:
        log.info("round %d: mean loss %.6f, param norm %.6f", r.round, r.mean_loss, r.param_norm)
    _print_metrics("federated all_record", federated_all_record(prep, result.final_params))
    _write_fed_outputs(args, result)


def cmd_aggregator(args) -> None:
    cfg = _experiment_config(args).fed
    if not cfg.roster:
        raise InvalidConfig("the aggregator needs a roster in its config")
    host, port = parse_address(args.listen)
    server = SocketServer(host, port)
    print(f"listening on {server.address[0]}:{server.address[1]}", flush=True)
    try:
        result = run_aggregator(cfg, server)
    finally:
        server.close()
    for r in result.log:
        print(f"round {r.round}: mean loss {r.mean_loss:.6f} param norm {r.param_norm:.6f}")
    _write_fed_outputs(args, result)


def cmd_party(args) -> None:
    world = _load(args.world)
    prep = prepare(world, _experiment_config(args))
    data = prep.party(args.bank)
    host, port = parse_address(args.connect)
    endpoint = SocketClient(host, port)
    try:
        params = run_party(data, prep.fed, endpoint)
    finally:
        endpoint.close()
    print(f"{args.bank}: finished, final parameter norm {params.norm():.6f}")
    if args.out:
        save_checkpoint(args.out, params, data.standardizer)


def cmd_evaluate(args) -> None:
    world = _load(args.world)
    cfg = _experiment_config(args)
    gen_path = _side_file(args.world, GEN_CONFIG_FILE)
    gen_cfg = GenConfig.from_json(gen_path) if gen_path else None
    truth_path = _side_file(args.world, GROUND_TRUTH_FILE)
    truth = GroundTruth.from_json(truth_path.read_text(encoding="utf-8")) if truth_path else None
    report, _ = run_experiment(world, truth, cfg, Transport(args.transport), gen_config=gen_cfg, generated_at=args.timestamp)
    for path in emit_report(report, args.out):
        print(f"wrote {path}")


def cmd_report(args) -> None:
    try:
        doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ValidationError(f"report not found: {args.report}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{args.report}: {exc}") from exc
    report = ExperimentReport.from_dict(doc)
    for path in emit_report(report, args.out, formats=args.format):
        print(f"wrote {path}")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fedgraph", description="Federated graph-feature AML simulation")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=None, help="master seed")
        return p

    p = add("gen", cmd_gen, "generate a synthetic multi-bank world")
    p.add_argument("--config", help="GenConfig JSON")
    p.add_argument("--out", required=True, help="output directory")

    p = add("resolve", cmd_resolve, "group profiles that denote the same entity")
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True, help="groups JSONL file")
    p.add_argument("--institution", default=None, help="resolve one bank only")

    p = add("features", cmd_features, "compute the per-customer feature matrix")
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True, help="feature CSV")
    p.add_argument("--scope", default="global", help="'global' or 'local:<BANK>'")
    p.add_argument("--feature-set", "--set", dest="feature_set", default=FeatureSet.TXN_GRAPH.value, choices=[f.value for f in FeatureSet])
    p.add_argument("--emit-dot", metavar="DIR", help="also write GraphViz files (small worlds only)")

    fed_help = "experiment config JSON, a FedConfig JSON, or a report's config echo"
    p = add("train-local", cmd_train_local, "train one bank's local model")
    p.add_argument("--world", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--feature-set", "--set", dest="feature_set", default=FeatureSet.TXN_GRAPH.value, choices=[f.value for f in FeatureSet])
    p.add_argument("--config", help=fed_help)
    p.add_argument("--epochs", type=int, default=None, help="override the training epochs")
    p.add_argument("--out", help="checkpoint path")

    p = add("train-federated", cmd_train_federated, "run all parties and the aggregator in one process")
    p.add_argument("--world", required=True)
    p.add_argument("--config", help=fed_help)
    p.add_argument("--simulate", action="store_true", help="in-process simulation (required)")
    p.add_argument("--transport", default=Transport.IN_PROCESS.value, choices=[t.value for t in Transport])
    p.add_argument("--out", help="checkpoint path for the global model")
    p.add_argument("--log", help="write the per-round log as JSON")

    p = add("aggregator", cmd_aggregator, "serve one federated run over TCP")
    p.add_argument("--listen", required=True, metavar="HOST:PORT")
    p.add_argument("--config", required=True, help=fed_help)
    p.add_argument("--out", help="checkpoint path for the global model")
    p.add_argument("--log", help="write the per-round log as JSON")

    p = add("party", cmd_party, "join a federated run as one bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--connect", required=True, metavar="HOST:PORT")
    p.add_argument("--config", help=fed_help)
    p.add_argument("--out", help="checkpoint path for the final model")

    p = add("evaluate", cmd_evaluate, "run the full experiment and write reports")
    p.add_argument("--world", required=True)
    p.add_argument("--config", help=fed_help)
    p.add_argument("--out", default="report", help="report directory")
    p.add_argument("--transport", default=Transport.IN_PROCESS.value, choices=[t.value for t in Transport])
    p.add_argument("--timestamp", default=None, help="fix the generated-at stamp")

    p = add("report", cmd_report, "re-emit csv/markdown from a report.json")
    p.add_argument("--report", required=True, help="report.json")
    p.add_argument("--out", default="report")
    p.add_argument("--format", nargs="+", default=["csv", "markdown"], choices=["json", "csv", "markdown"])
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"fedgraph {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValidationError as exc:
        print(f"fedgraph {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FedGraphError, OSError) as exc:
        print(f"fedgraph {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
