"""Domain types for the multi-bank world: profiles, relations, transactions.

Transactions are held column-wise (a pandas frame) because a default world
carries millions of them; everything else is plain frozen dataclasses.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from decimal import Decimal
from typing import Iterable, Iterator

import numpy as np
import pandas as pd

EXTERNAL = "EXTERNAL"
REF_SEP = ":"
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
SECONDS_PER_DAY = 86_400


class Kind(str, enum.Enum):
    INDIVIDUAL = "Individual"
    BUSINESS = "Business"


class DocType(str, enum.Enum):
    PASSPORT = "Passport"
    DRIVING_LICENCE = "DrivingLicence"
    NATIONAL_ID = "NationalId"


class RegType(str, enum.Enum):
    COMPANIES_HOUSE = "CompaniesHouse"
    LEI = "LEI"
    VAT = "VAT"


class RelationKind(str, enum.Enum):
    DIRECTOR = "Director"
    OWNER = "Owner"
    FAMILY = "Family"
    SELF = "Self"
    OTHER = "Other"


class Channel(str, enum.Enum):
    INTL_WIRE = "IntlWire"
    DOMESTIC_WIRE = "DomesticWire"
    CREDIT = "Credit"
    CASH = "Cash"
    CHECK = "Check"

    @property
    def code(self) -> int:
        return CHANNELS.index(self)


CHANNELS: tuple[Channel, ...] = tuple(Channel)


@dataclass(frozen=True, order=True)
class AccountRef:
    institution: str
    customer_id: str

    @property
    def is_external(self) -> bool:
        return self.institution == EXTERNAL

    def __str__(self) -> str:
        return f"{self.institution}{REF_SEP}{self.customer_id}"

    @classmethod
    def parse(cls, text: str) -> AccountRef:
        inst, sep, cid = text.partition(REF_SEP)
        if not sep or not inst or not cid:
            raise ValueError(f"malformed account reference {text!r}")
        return cls(inst, cid)


@dataclass(frozen=True)
class IdDocument:
    doc_type: DocType | None
    doc_number: str


@dataclass(frozen=True)
class CompanyRegistration:
    reg_type: RegType | None
    reg_number: str


@dataclass(frozen=True)
class RiskIntel:
    past_alert: bool = False
    sar_flag: bool = False
    fincrime_exit_marker: bool = False


@dataclass(frozen=True)
class Identity:
    """Kind-specific identity attributes shared by customers and related parties."""

    kind: Kind
    full_name: str = ""
    date_of_birth: date | None = None
    nationality: str | None = None
    id_document: IdDocument | None = None
    date_of_incorporation: date | None = None
    country_of_incorporation: str | None = None
    company_registration: CompanyRegistration | None = None

    def foreign_fields(self) -> list[str]:
        """Names of populated fields that belong to the other kind."""
        if self.kind is Kind.INDIVIDUAL:
            other = {
                "date_of_incorporation": self.date_of_incorporation,
                "country_of_incorporation": self.country_of_incorporation,
                "company_registration": self.company_registration,
            }
        else:
            other = {
                "date_of_birth": self.date_of_birth,
                "nationality": self.nationality,
                "id_document": self.id_document,
            }
        return [k for k, v in other.items() if v is not None]


@dataclass(frozen=True)
class CustomerProfile:
    customer_id: str
    institution: str
    identity: Identity
    account_open_date: date
    risk: RiskIntel = RiskIntel()

    @property
    def kind(self) -> Kind:
        return self.identity.kind

    @property
    def ref(self) -> AccountRef:
        return AccountRef(self.institution, self.customer_id)


@dataclass(frozen=True)
class RelatedParty:
    party_id: str
    institution: str
    identity: Identity

    @property
    def kind(self) -> Kind:
        return self.identity.kind


@dataclass(frozen=True)
class Relation:
    institution: str
    customer_id: str
    party_id: str
    relation_kind: RelationKind


@dataclass(frozen=True)
class Transaction:
    txn_id: str
    timestamp: datetime
    amount: Decimal
    currency: str
    channel: Channel
    source: AccountRef
    dest: AccountRef


def to_epoch(ts: datetime) -> int:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return int((ts - EPOCH).total_seconds())


def from_epoch(seconds: int) -> datetime:
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc)


def to_cents(amount: Decimal | str | int) -> int:
    d = Decimal(amount)
    cents = d * 100
    if cents != cents.to_integral_value():
        raise ValueError(f"amount {amount} has more than 2 fractional digits")
    return int(cents)


def cents_to_decimal(cents: int) -> Decimal:
    return Decimal(int(cents)).scaleb(-2)


TXN_COLUMNS = ("txn_id", "timestamp", "amount", "currency", "channel", "source", "dest")


class TransactionTable:
    """Column store of transactions.

    Columns: ``txn_id`` (str), ``timestamp`` (int64 epoch seconds),
    ``amount`` (int64 cents), ``currency`` (str), ``channel`` (int8 code
    into ``CHANNELS``), ``source`` / ``dest`` (``"INST:ID"`` strings).
    Treat instances as immutable.
    """

    __slots__ = ("frame",)

    def __init__(self, frame: pd.DataFrame):
        frame = frame.loc[:, list(TXN_COLUMNS)].reset_index(drop=True)
        frame = frame.astype(
            {
                "txn_id": object,
                "timestamp": np.int64,
                "amount": np.int64,
                "currency": object,
                "channel": np.int8,
                "source": object,
                "dest": object,
            },
            copy=False,
        )
        self.frame = frame

    @classmethod
    def empty(cls) -> TransactionTable:
        return cls(pd.DataFrame({c: [] for c in TXN_COLUMNS}))

    @classmethod
    def from_rows(cls, rows: Iterable[Transaction]) -> TransactionTable:
        rows = list(rows)
        if not rows:
            return cls.empty()
        return cls(
            pd.DataFrame(
                {
                    "txn_id": [r.txn_id for r in rows],
                    "timestamp": [to_epoch(r.timestamp) for r in rows],
                    "amount": [to_cents(r.amount) for r in rows],
                    "currency": [r.currency for r in rows],
                    "channel": [Channel(r.channel).code for r in rows],
                    "source": [str(r.source) for r in rows],
                    "dest": [str(r.dest) for r in rows],
                }
            )
        )

    @classmethod
    def concat(cls, tables: Iterable[TransactionTable]) -> TransactionTable:
        frames = [t.frame for t in tables if len(t)]
        if not frames:
            return cls.empty()
        return cls(pd.concat(frames, ignore_index=True))

    def __len__(self) -> int:
        return len(self.frame)

    def sorted_by_id(self) -> TransactionTable:
        ids = self.frame["txn_id"]
        if ids.is_monotonic_increasing:
            return self
        order = np.argsort(ids.to_numpy(dtype=object), kind="stable")
        return TransactionTable(self.frame.iloc[order])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TransactionTable):
            return NotImplemented
        if len(self) != len(other):
            return False
        return all(
            np.array_equal(self.frame[c].to_numpy(), other.frame[c].to_numpy())
            for c in TXN_COLUMNS
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"TransactionTable({len(self)} rows)"

    def rows(self) -> Iterator[Transaction]:
        f = self.frame
        for tid, ts, amt, cur, ch, src, dst in zip(
            f["txn_id"], f["timestamp"], f["amount"], f["currency"], f["channel"], f["source"], f["dest"]
        ):
            yield Transaction(
                txn_id=tid,
                timestamp=from_epoch(ts),
                amount=cents_to_decimal(amt),
                currency=cur,
                channel=CHANNELS[ch],
                source=AccountRef.parse(src),
                dest=AccountRef.parse(dst),
            )


@dataclass(frozen=True)
class InstitutionData:
    code: str
    customers: tuple[CustomerProfile, ...] = ()
    related_parties: tuple[RelatedParty, ...] = ()
    relations: tuple[Relation, ...] = ()
    transactions: TransactionTable = field(default_factory=TransactionTable.empty)

    def __post_init__(self) -> None:
        # canonical order so that structural equality survives a save/load cycle
        object.__setattr__(self, "customers", tuple(sorted(self.customers, key=lambda c: c.customer_id)))
        object.__setattr__(
            self, "related_parties", tuple(sorted(self.related_parties, key=lambda p: p.party_id))
        )
        object.__setattr__(
            self,
            "relations",
            tuple(sorted(self.relations, key=lambda r: (r.customer_id, r.party_id, r.relation_kind.value))),
        )
        object.__setattr__(self, "transactions", self.transactions.sorted_by_id())


@dataclass(frozen=True)
class World:
    institutions: tuple[InstitutionData, ...]
    coverage: tuple[date, date]
    generator_seed: int | None = None

    @property
    def codes(self) -> list[str]:
        return [inst.code for inst in self.institutions]

    def institution(self, code: str) -> InstitutionData:
        for inst in self.institutions:
            if inst.code == code:
                return inst
        raise KeyError(code)

    def customers(self) -> Iterator[CustomerProfile]:
        for inst in self.institutions:
            yield from inst.customers

    def related_parties(self) -> Iterator[RelatedParty]:
        for inst in self.institutions:
            yield from inst.related_parties

    def relations(self) -> Iterator[Relation]:
        for inst in self.institutions:
            yield from inst.relations

    def all_transactions(self) -> TransactionTable:
        return TransactionTable.concat(inst.transactions for inst in self.institutions)

    def coverage_seconds(self) -> tuple[int, int]:
        """Inclusive [first, last] epoch second of the coverage window."""
        start, end = self.coverage
        first = (start - EPOCH.date()).days * SECONDS_PER_DAY
        last = ((end - EPOCH.date()).days + 1) * SECONDS_PER_DAY - 1
        return first, last

    @property
    def n_customers(self) -> int:
        return sum(len(inst.customers) for inst in self.institutions)
