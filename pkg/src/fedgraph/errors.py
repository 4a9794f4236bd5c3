"""Exception hierarchy shared across the package."""

from __future__ import annotations


class FedGraphError(Exception):
    """Base class for every error raised by fedgraph."""


class ValidationError(FedGraphError):
    """Input data or configuration is invalid. CLI maps this to exit code 1."""


class MissingFile(ValidationError):
    pass


class SchemaViolation(ValidationError):
    def __init__(self, where: str, row: int | None, column: str | None, reason: str):
        self.where = where
        self.row = row
        self.column = column
        self.reason = reason
        loc = where
        if row is not None:
            loc += f" row {row}"
        if column is not None:
            loc += f" column {column!r}"
        super().__init__(f"{loc}: {reason}")


class DanglingReference(ValidationError):
    pass


class DuplicateId(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass


class InconsistentGroups(ValidationError):
    pass


class IoFailure(FedGraphError):
    pass


class EmptyInput(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class SingleClass(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class BudgetExceeded(FedGraphError):
    """Temporal cycle enumeration hit its path budget; no partial result is returned."""

    def __init__(self, paths: int, cap: int):
        self.paths = paths
        self.cap = cap
        super().__init__(f"enumerated {paths} paths, cap is {cap}")


# federated protocol

class ProtocolError(FedGraphError):
    code = "protocol"


class ShapeMismatch(ProtocolError):
    code = "shape_mismatch"


class EmptyUpdateSet(ProtocolError):
    code = "empty_update_set"


class PartyTimeout(ProtocolError):
    code = "party_timeout"

    def __init__(self, party_id: str, detail: str = "no update before deadline"):
        self.party_id = party_id
        super().__init__(f"party {party_id}: {detail}")


class DuplicateJoin(ProtocolError):
    code = "duplicate_join"


class SchemaMismatch(ProtocolError):
    code = "schema_mismatch"


class ConnectionLost(ProtocolError):
    code = "connection_lost"


class FrameTooLarge(ProtocolError):
    code = "frame_too_large"


class MalformedPayload(ProtocolError):
    code = "malformed_payload"


class UnknownTag(ProtocolError):
    code = "unknown_tag"


class RemoteError(ProtocolError):
    """The peer sent an Error message."""

    code = "remote"
