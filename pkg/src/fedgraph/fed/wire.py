"""Federated message types and their length-prefixed JSON framing.

A frame is a 4-byte big-endian payload length followed by UTF-8 JSON. Floats
are written with 17 significant digits so every double survives the trip.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import MISSING, dataclass, fields
from typing import Union

import numpy as np

from ..errors import FrameTooLarge, MalformedPayload, UnknownTag, ValidationError
from ..nn import ModelArch, ModelParams

PROTOCOL_VERSION = 1
MAX_FRAME = 64 * 1024 * 1024
HEADER = struct.Struct(">I")


@dataclass(frozen=True, eq=False)
class Join:
    party_id: str
    schema_hash: str


@dataclass(frozen=True, eq=False)
class JoinAck:
    party_index: int
    arch: ModelArch
    initial_params: ModelParams


@dataclass(frozen=True, eq=False)
class GlobalModel:
    round: int
    params: ModelParams


@dataclass(frozen=True, eq=False)
class LocalUpdate:
    round: int
    party_id: str
    params: ModelParams
    sample_count: int
    loss: float = 0.0  # mean training loss of the party's last local epoch


@dataclass(frozen=True, eq=False)
class RoundComplete:
    round: int


@dataclass(frozen=True, eq=False)
class Finish:
    final_params: ModelParams


@dataclass(frozen=True, eq=False)
class Error:
    code: str
    detail: str


FedMessage = Union[Join, JoinAck, GlobalModel, LocalUpdate, RoundComplete, Finish, Error]
TAGS: dict[str, type] = {cls.__name__: cls for cls in (Join, JoinAck, GlobalModel, LocalUpdate, RoundComplete, Finish, Error)}


def messages_equal(a: FedMessage, b: FedMessage) -> bool:
    """Field-wise equality; parameter arrays compare bit for bit."""
    if type(a) is not type(b):
        return False
    for f in fields(a):
        x, y = getattr(a, f.name), getattr(b, f.name)
        if isinstance(x, ModelParams):
            if not x.bit_equal(y):
                return False
        elif x != y:
            return False
    return True


# ---------------------------------------------------------------- JSON emitter


def _emit(obj, out: list[str]) -> None:
    if isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(json.dumps(k))
            out.append(":")
            _emit(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _emit(v, out)
        out.append("]")
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), out)
    elif isinstance(obj, bool) or obj is None or isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise MalformedPayload(f"non-finite float {obj!r} cannot be sent")
        text = format(float(obj), ".17g")
        # keep floats recognisable as floats on the way back
        if "." not in text and "e" not in text:
            text += ".0"
        out.append(text)
    else:
        raise MalformedPayload(f"cannot serialize {type(obj).__name__}")


def _params_obj(p: ModelParams) -> dict:
    return {"weights": p.weights, "biases": p.biases}


def _to_obj(msg: FedMessage) -> dict:
    tag = type(msg).__name__
    if tag not in TAGS:
        raise UnknownTag(f"not a protocol message: {tag}")
    body: dict = {"tag": tag}
    for f in fields(msg):
        v = getattr(msg, f.name)
        if isinstance(v, ModelParams):
            v = _params_obj(v)
        elif isinstance(v, ModelArch):
            v = v.to_dict()
        body[f.name] = v
    return body


def _params_from(obj) -> ModelParams:
    try:
        weights = [np.array(w, dtype=np.float64) for w in obj["weights"]]
        biases = [np.array(b, dtype=np.float64) for b in obj["biases"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedPayload(f"bad params block: {exc}") from exc
    if len(weights) != len(biases) or not weights:
        raise MalformedPayload("params need one bias vector per weight matrix")
    for w, b in zip(weights, biases):
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise MalformedPayload("params layer shapes are inconsistent")
    return ModelParams(weights, biases)


def _from_obj(obj) -> FedMessage:
    if not isinstance(obj, dict) or "tag" not in obj:
        raise MalformedPayload("payload is not a tagged object")
    tag = obj["tag"]
    cls = TAGS.get(tag)
    if cls is None:
        raise UnknownTag(f"unknown message tag {tag!r}")
    kwargs = {}
    try:
        for f in fields(cls):
            if f.name not in obj:
                if f.default is not MISSING:
                    continue
                raise MalformedPayload(f"{tag} is missing field {f.name!r}")
            v = obj[f.name]
            if f.name in ("params", "initial_params", "final_params"):
                v = _params_from(v)
            elif f.name == "arch":
                v = ModelArch.from_dict(v)
            elif f.name in ("round", "party_index", "sample_count"):
                if not isinstance(v, int) or isinstance(v, bool):
                    raise MalformedPayload(f"{tag}.{f.name} must be an integer")
            elif f.name == "loss":
                v = float(v)
            elif not isinstance(v, str):
                raise MalformedPayload(f"{tag}.{f.name} must be a string")
            kwargs[f.name] = v
    except (KeyError, TypeError, ValueError, ValidationError) as exc:
        raise MalformedPayload(f"bad {tag} payload: {exc}") from exc
    return cls(**kwargs)


def encode_payload(msg: FedMessage) -> bytes:
    out: list[str] = []
    _emit(_to_obj(msg), out)
    return "".join(out).encode("utf-8")


def encode_message(msg: FedMessage) -> bytes:
    payload = encode_payload(msg)
    if len(payload) > MAX_FRAME:
        raise FrameTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_FRAME}")
    return HEADER.pack(len(payload)) + payload


def decode_payload(payload: bytes) -> FedMessage:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedPayload(f"payload is not UTF-8 JSON: {exc}") from exc
    return _from_obj(obj)


def decode_message(frame: bytes) -> FedMessage:
    if len(frame) < HEADER.size:
        raise MalformedPayload("frame shorter than its length header")
    (length,) = HEADER.unpack_from(frame)
    if length > MAX_FRAME:
        raise FrameTooLarge(f"declared payload of {length} bytes exceeds {MAX_FRAME}")
    if len(frame) - HEADER.size != length:
        raise MalformedPayload(f"frame declares {length} payload bytes, carries {len(frame) - HEADER.size}")
    return decode_payload(frame[HEADER.size :])


def read_frame(recv_exact) -> bytes:
    """Read one frame using ``recv_exact(n) -> bytes`` (which returns b"" at EOF)."""
    head = recv_exact(HEADER.size)
    if len(head) < HEADER.size:
        raise EOFError
    (length,) = HEADER.unpack(head)
    if length > MAX_FRAME:
        raise FrameTooLarge(f"declared payload of {length} bytes exceeds {MAX_FRAME}")
    body = recv_exact(length)
    if len(body) < length:
        raise MalformedPayload("connection closed inside a frame")
    return head + body
