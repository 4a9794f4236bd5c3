"""Round-based federated averaging between one aggregator and a fixed roster of parties."""

from __future__ import annotations

import enum
import json
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import (
    ConnectionLost,
    DuplicateJoin,
    EmptyUpdateSet,
    FedGraphError,
    InvalidConfig,
    PartyTimeout,
    ProtocolError,
    RemoteError,
    SchemaMismatch,
    ShapeMismatch,
)
from ..features import FeatureSet, schema_hash
from ..nn import ModelArch, ModelParams, Standardizer, TrainConfig, init_params, train
from .transport import AggregatorEndpoint, InProcessHub, PartyEndpoint, SocketClient, SocketServer, Transcript
from .wire import Error, Finish, GlobalModel, Join, JoinAck, LocalUpdate, RoundComplete


class Aggregation(str, enum.Enum):
    UNIFORM = "UniformAverage"
    SAMPLE_WEIGHTED = "SampleWeighted"


@dataclass(frozen=True)
class FedConfig:
    rounds: int = 20
    local_epochs_per_round: int = 5
    roster: tuple[str, ...] = ()
    aggregation: Aggregation = Aggregation.SAMPLE_WEIGHTED
    timeout_per_round: float = 120.0
    seed: int = 0
    # model and optimiser shared by every party
    feature_set: FeatureSet = FeatureSet.TXN_GRAPH
    hidden: tuple[int, ...] = (16, 8)
    learning_rate: float = 0.05
    batch_size: int = 32

    def __post_init__(self) -> None:
        object.__setattr__(self, "roster", tuple(self.roster))
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
        object.__setattr__(self, "feature_set", FeatureSet(self.feature_set))

    def validate(self) -> FedConfig:
        if self.rounds < 1:
            raise InvalidConfig(f"FedConfig: rounds must be >= 1, got {self.rounds}")
        if self.local_epochs_per_round < 1:
            raise InvalidConfig("FedConfig: local_epochs_per_round must be >= 1")
        if not self.roster:
            raise InvalidConfig("FedConfig: roster is empty")
        if len(set(self.roster)) != len(self.roster):
            raise InvalidConfig("FedConfig: roster lists a party twice")
        if not self.timeout_per_round > 0:
            raise InvalidConfig("FedConfig: timeout_per_round must be > 0")
        TrainConfig(self.learning_rate, self.batch_size, 0, 0)
        return self

    @property
    def arch(self) -> ModelArch:
        return ModelArch(len(self.feature_set.columns), self.hidden)

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.feature_set.columns)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.local_epochs_per_round, seed)

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "local_epochs_per_round": self.local_epochs_per_round,
            "roster": list(self.roster),
            "aggregation": self.aggregation.value,
            "timeout_per_round": self.timeout_per_round,
            "seed": self.seed,
            "feature_set": self.feature_set.value,
            "hidden": list(self.hidden),
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FedConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"FedConfig: unknown fields {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"FedConfig: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> FedConfig:
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc


def aggregate(updates: list[tuple[ModelParams, int]], mode: Aggregation = Aggregation.SAMPLE_WEIGHTED) -> ModelParams:
    """Elementwise weighted mean of parameter sets, accumulated in list order."""
    if not updates:
        raise EmptyUpdateSet("no updates to aggregate")
    ref = [a.shape for a in updates[0][0].arrays()]
    for p, _ in updates[1:]:
        if [a.shape for a in p.arrays()] != ref:
            raise ShapeMismatch(f"update shapes {[a.shape for a in p.arrays()]} differ from {ref}")
    mode = Aggregation(mode)
    if mode is Aggregation.SAMPLE_WEIGHTED:
        total = sum(n for _, n in updates)
        if total <= 0:
            raise EmptyUpdateSet("sample counts sum to zero")
        weights = [n / total for _, n in updates]
    else:
        weights = [1.0 / len(updates)] * len(updates)
    out = [np.zeros(s) for s in ref]
    for (p, _), w in zip(updates, weights):
        for acc, a in zip(out, p.arrays()):
            acc += w * a
    return ModelParams.from_arrays(out)


@dataclass(frozen=True)
class RoundLog:
    round: int
    mean_loss: float
    param_norm: float

    def to_dict(self) -> dict:
        return {"round": self.round, "mean_loss": self.mean_loss, "param_norm": self.param_norm}


@dataclass
class FedResult:
    final_params: ModelParams
    log: list[RoundLog]
    transcript: Transcript | None = None


def _fail(endpoint: AggregatorEndpoint, conns, exc: ProtocolError) -> ProtocolError:
    for c in conns:
        try:
            endpoint.send(c, Error(exc.code, str(exc)))
        except FedGraphError:
            pass
    return exc


def run_aggregator(config: FedConfig, endpoint: AggregatorEndpoint) -> FedResult:
    """Drive the whole run: joins, ``config.rounds`` rounds of fusion, then Finish."""
    config.validate()
    arch = config.arch
    expected_hash = config.schema_hash
    index = {pid: i for i, pid in enumerate(config.roster)}
    conn_of: dict[str, int] = {}
    party_of: dict[int, str] = {}
    timeout = config.timeout_per_round

    def next_message(waiting_for: list[str]):
        try:
            conn, msg = endpoint.recv(timeout)
        except queue.Empty:
            raise _fail(endpoint, conn_of.values(), PartyTimeout(waiting_for[0], f"no message within {timeout}s")) from None
        if msg is None:
            pid = party_of.get(conn, f"connection-{conn}")
            raise _fail(endpoint, [c for c in conn_of.values() if c != conn], PartyTimeout(pid, "connection closed"))
        return conn, msg

    # joins
    while len(conn_of) < len(index):
        missing = [p for p in config.roster if p not in conn_of]
        conn, msg = next_message(missing)
        if not isinstance(msg, Join):
            raise _fail(endpoint, [conn], ProtocolError(f"expected Join, got {type(msg).__name__}"))
        if msg.party_id not in index:
            endpoint.send(conn, Error("UnknownParty", f"{msg.party_id} is not on the roster"))
            continue
        if msg.party_id in conn_of or conn in party_of:
            raise _fail(endpoint, conn_of.values(), DuplicateJoin(f"{msg.party_id} joined twice"))
        if msg.schema_hash != expected_hash:
            raise _fail(
                endpoint,
                list(conn_of.values()) + [conn],
                SchemaMismatch(f"{msg.party_id} sent schema {msg.schema_hash[:12]}, expected {expected_hash[:12]}"),
            )
        conn_of[msg.party_id] = conn
        party_of[conn] = msg.party_id

    params = init_params(arch, config.seed)
    for pid in config.roster:
        endpoint.send(conn_of[pid], JoinAck(index[pid], arch, params))
    for pid in config.roster:
        endpoint.send(conn_of[pid], GlobalModel(1, params))

    log: list[RoundLog] = []
    shapes = [a.shape for a in params.arrays()]
    for rnd in range(1, config.rounds + 1):
        got: dict[str, LocalUpdate] = {}
        while len(got) < len(index):
            missing = [p for p in config.roster if p not in got]
            conn, msg = next_message(missing)
            pid = party_of.get(conn)
            if isinstance(msg, Error):
                raise _fail(endpoint, [c for c in conn_of.values() if c != conn], RemoteError(f"{pid}: {msg.code}: {msg.detail}"))
            if not isinstance(msg, LocalUpdate) or msg.round != rnd or msg.party_id != pid or pid in got:
                raise _fail(endpoint, conn_of.values(), ProtocolError(f"unexpected {type(msg).__name__} from {pid} in round {rnd}"))
            if [a.shape for a in msg.params.arrays()] != shapes:
                raise _fail(endpoint, conn_of.values(), ShapeMismatch(f"{pid} sent parameters of the wrong shape"))
            got[pid] = msg
        ordered = [got[p] for p in config.roster]
        params = aggregate([(u.params, u.sample_count) for u in ordered], config.aggregation)
        log.append(RoundLog(rnd, float(np.mean([u.loss for u in ordered])), params.norm()))
        for pid in config.roster:
            endpoint.send(conn_of[pid], RoundComplete(rnd))
        for pid in config.roster:
            endpoint.send(conn_of[pid], GlobalModel(rnd + 1, params) if rnd < config.rounds else Finish(params))
    return FedResult(params, log, endpoint.transcript)


@dataclass
class PartyData:
    """A bank's balanced training rows, raw (unstandardized)."""

    party_id: str
    x: np.ndarray
    y: np.ndarray
    ids: np.ndarray
    seed: int
    log1p: bool = True
    standardizer: Standardizer = field(init=False)

    def __post_init__(self) -> None:
        self.standardizer = Standardizer.fit(self.x, log1p=self.log1p)


def run_party(data: PartyData, config: FedConfig, endpoint: PartyEndpoint) -> ModelParams:
    """Join, train locally each round, and return the final global parameters."""
    config.validate()
    timeout = config.timeout_per_round
    x = data.standardizer.transform(data.x)
    tc = config.train_config(data.seed)

    def expect(kind):
        msg = endpoint.recv(timeout)
        if isinstance(msg, Error):
            raise RemoteError(f"aggregator: {msg.code}: {msg.detail}")
        if not isinstance(msg, kind):
            names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
            raise ProtocolError(f"expected {names}, got {type(msg).__name__}")
        return msg

    endpoint.send(Join(data.party_id, config.schema_hash))
    ack = expect(JoinAck)
    if ack.arch.input_dim != x.shape[1]:
        exc = ShapeMismatch(f"model expects {ack.arch.input_dim} features, party has {x.shape[1]}")
        endpoint.send(Error(exc.code, str(exc)))
        raise exc
    msg = expect(GlobalModel)
    rnd = 0
    while True:
        rnd += 1
        if msg.round != rnd:
            raise ProtocolError(f"expected round {rnd}, got {msg.round}")
        losses: list[float] = []
        local = train(msg.params, x, data.y, tc, ids=data.ids, first_epoch=(rnd - 1) * tc.epochs, losses=losses)
        endpoint.send(LocalUpdate(rnd, data.party_id, local, int(len(data.y)), losses[-1] if losses else 0.0))
        done = expect(RoundComplete)
        if done.round != rnd:
            raise ProtocolError(f"RoundComplete for round {done.round} during round {rnd}")
        msg = expect((GlobalModel, Finish))
        if isinstance(msg, Finish):
            return msg.final_params


def centralized_equivalent(data: PartyData, config: FedConfig) -> ModelParams:
    """What a single party run must reproduce: plain training for rounds x epochs."""
    tc = TrainConfig(config.learning_rate, config.batch_size, config.rounds * config.local_epochs_per_round, data.seed)
    return train(init_params(config.arch, config.seed), data.standardizer.transform(data.x), data.y, tc, ids=data.ids)


class Transport(str, enum.Enum):
    IN_PROCESS = "inprocess"
    SOCKET = "socket"


def simulate(config: FedConfig, parties: list[PartyData], transport: Transport = Transport.IN_PROCESS) -> FedResult:
    """Run the aggregator plus one worker thread per party inside this process."""
    config.validate()
    transport = Transport(transport)
    if transport is Transport.IN_PROCESS:
        server: AggregatorEndpoint = InProcessHub()
        connect = server.connect  # type: ignore[attr-defined]
    else:
        server = SocketServer("127.0.0.1", 0)
        host, port = server.address  # type: ignore[attr-defined]

        def connect() -> PartyEndpoint:
            return SocketClient(host, port)

    errors: dict[str, BaseException] = {}
    results: dict[str, ModelParams] = {}

    def worker(p: PartyData) -> None:
        ep = None
        try:
            ep = connect()
            results[p.party_id] = run_party(p, config, ep)
        except BaseException as exc:  # reported after join
            errors[p.party_id] = exc
        finally:
            if ep is not None:
                ep.close()

    threads = [threading.Thread(target=worker, args=(p,), name=f"party-{p.party_id}", daemon=True) for p in parties]
    for t in threads:
        t.start()
    agg_exc: ProtocolError | None = None
    try:
        result = run_aggregator(config, server)
    except ProtocolError as exc:
        agg_exc = exc
    finally:
        server.close()
        for t in threads:
            t.join(timeout=config.timeout_per_round)
    if agg_exc is not None:
        # a party's own failure explains the aggregator's better than the echo does
        root = [e for _, e in sorted(errors.items()) if not isinstance(e, (ConnectionLost, RemoteError))]
        if root:
            raise root[0] from agg_exc
        raise agg_exc
    if errors:
        pid, exc = sorted(errors.items())[0]
        raise exc
    for pid, params in results.items():
        if not params.bit_equal(result.final_params):
            raise ProtocolError(f"{pid} finished with parameters that differ from the aggregator's")
    return result
