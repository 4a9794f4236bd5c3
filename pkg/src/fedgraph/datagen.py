"""Synthetic multi-bank world generator with planted cross-bank laundering rings.

Every random draw comes from a counter-based Philox stream keyed by
``(seed, stream kind, index)``, so each institution and each ring has its own
stream and the output does not depend on generation order.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field, fields
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InvalidConfig
from .model import (
    CHANNELS,
    EPOCH,
    EXTERNAL,
    SECONDS_PER_DAY,
    AccountRef,
    Channel,
    CompanyRegistration,
    CustomerProfile,
    DocType,
    IdDocument,
    Identity,
    InstitutionData,
    Kind,
    RegType,
    RelatedParty,
    Relation,
    RelationKind,
    RiskIntel,
    TransactionTable,
    World,
)

BANK_CODES = ("BWBAGB", "PCOBGB", "NUBAGB", "HCBGGB", "GVBCGB", "FOCSGB")

_FIRST = (
    "Oliver George Harry Jack Jacob Noah Charlie Muhammad Thomas Oscar William James Leo Alfie "
    "Henry Joshua Freddie Archie Ethan Isaac Alexander Joseph Edward Samuel Max Daniel Arthur "
    "Lucas Mohammed Logan Olivia Amelia Isla Ava Emily Isabella Mia Poppy Ella Lily Sophia Grace "
    "Evie Sophie Jessica Ruby Chloe Scarlett Freya Daisy Alice Florence Phoebe Sienna Matilda "
    "Evelyn Harper Elsie Rosie Priya Aisha Wei Mei Kenji Yuki Ana Mateo Lucia Pierre Chloé Lars "
    "Ingrid Dmitri Olga Kwame Ama Tunde Ngozi Ravi Anjali Omar Fatima Hannah Jakub Zofia"
).split()
_LAST = (
    "Smith Jones Taylor Brown Williams Wilson Johnson Davies Robinson Wright Thompson Evans Walker "
    "White Roberts Green Hall Wood Jackson Clarke Patel Khan Lewis James Phillips Mason Mitchell "
    "Rose Davis Rodriguez Cox Alexander Morgan Moore Hughes Shaw Turner Hill Parker Harris Cooper "
    "Ward Martin King Lee Baker Young Allen Scott Campbell Anderson Murphy Kelly Singh Ali Chen "
    "Wang Nguyen Kowalski Novak Müller Schmidt Dubois Rossi Garcia Fernandez Silva Okafor Mensah "
    "Ivanov Petrov Tanaka Sato Kim Park Haddad Nasser Byrne Walsh Reid Fraser Gallagher Doyle"
).split()
_BIZ_A = (
    "Northern Atlas Summit Harbour Crown Meridian Sterling Oak Granite Beacon Pioneer Vertex "
    "Riverside Apex Falcon Cedar Orion Silver Phoenix Horizon Anchor Bridge Castle Union Royal"
).split()
_BIZ_B = (
    "Trading Logistics Holdings Consulting Imports Property Ventures Foods Motors Textiles "
    "Electronics Services Capital Partners Freight Construction Retail Media Energy Metals"
).split()
_BIZ_SUFFIX = ("Ltd", "Limited", "PLC", "LLP", "Group Ltd")
_NATIONALITIES = ("GB", "GB", "GB", "GB", "GB", "GB", "IE", "FR", "DE", "PL", "IN", "PK", "NG", "CN", "US", "RO", "IT", "ES")
_COUNTRIES = ("GB", "GB", "GB", "GB", "GB", "IE", "NL", "LU", "CY", "AE", "HK", "US", "VG")

# channel mixes, order = CHANNELS (IntlWire, DomesticWire, Credit, Cash, Check)
_MIX_NORMAL = {
    "in": (0.01, 0.45, 0.30, 0.12, 0.12),
    "out": (0.02, 0.28, 0.40, 0.10, 0.20),
}
# cash placement in, international wires out; other channels shrink proportionally
_MIX_SUSPICIOUS = {
    "in": (0.005, 0.23, 0.153, 0.55, 0.062),
    "out": (0.45, 0.157, 0.224, 0.056, 0.113),
}


class Provenance(str, enum.Enum):
    CLEAN_BACKGROUND = "CleanBackground"
    RING_MEMBER = "RingMember"
    RANDOM_FLAG = "RandomFlag"


class _Stream(enum.IntEnum):
    GLOBAL = 0
    PROFILES = 1
    TRANSACTIONS = 2
    RING = 3
    SHARED = 4
    LOOKALIKE = 5


@dataclass(frozen=True)
class GenConfig:
    n_institutions: int = 6
    customers_per_institution: int = 5000
    duration_days: int = 730
    sar_rate: float = 0.05
    criminal_rate: float = 0.004
    shared_party_rate: float = 0.02
    ring_count: int = 30
    ring_size_range: tuple[int, int] = (3, 8)
    seed: int = 0
    # knobs below have no published values; they are stated defaults
    start_date: date = date(2019, 1, 1)
    txn_rate: float = 0.2
    amount_mu: float = 6.0
    amount_sigma: float = 1.0
    suspicion_strength: float = 1.0
    lookalike_fraction: float = 1.0
    lookalike_strength: float = 0.75
    alert_rate: float = 0.03
    business_fraction: float = 0.15
    customer_link_mean: float = 1.0
    customer_link_share: float = 0.1
    ring_window_days: int = 30

    def validate(self) -> None:
        def bad(msg: str) -> InvalidConfig:
            return InvalidConfig(f"GenConfig: {msg}")

        if self.n_institutions < 1:
            raise bad("n_institutions must be >= 1")
        if self.customers_per_institution < 1:
            raise bad("customers_per_institution must be >= 1")
        if self.duration_days < 1:
            raise bad("duration_days must be >= 1")
        if not 0 < self.criminal_rate <= self.sar_rate < 1:
            raise bad("need 0 < criminal_rate <= sar_rate < 1")
        if not 0 <= self.shared_party_rate <= 1:
            raise bad("shared_party_rate must be in [0, 1]")
        lo, hi = self.ring_size_range
        if lo < 2 or hi < lo:
            raise bad("ring_size_range must satisfy 2 <= min <= max")
        if self.ring_count < 0:
            raise bad("ring_count must be >= 0")
        if self.ring_count and self.n_institutions < 2:
            raise bad("rings span >= 2 institutions; need n_institutions >= 2")
        if self.ring_count and hi > self.n_institutions * self.customers_per_institution:
            raise bad("ring larger than the customer population")
        if self.ring_window_days < 1 or self.ring_window_days > self.duration_days:
            raise bad("ring_window_days must be in [1, duration_days]")
        for name in ("suspicion_strength", "lookalike_fraction", "lookalike_strength", "alert_rate", "business_fraction", "customer_link_share"):
            if not 0 <= getattr(self, name) <= 1:
                raise bad(f"{name} must be in [0, 1]")
        if self.txn_rate < 0 or self.amount_sigma <= 0:
            raise bad("txn_rate must be >= 0 and amount_sigma > 0")
        if not 0 <= self.seed < 2**64:
            raise bad("seed must be a 64-bit unsigned integer")

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=self.duration_days - 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ring_size_range"] = list(self.ring_size_range)
        d["start_date"] = self.start_date.isoformat()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> GenConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f"GenConfig: unknown fields {sorted(unknown)}")
        data = dict(data)
        if "ring_size_range" in data:
            data["ring_size_range"] = tuple(data["ring_size_range"])
        if "start_date" in data and isinstance(data["start_date"], str):
            data["start_date"] = date.fromisoformat(data["start_date"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | Path) -> GenConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Ring:
    ring_id: str
    members: tuple[AccountRef, ...]
    cycle_txn_count: int


@dataclass(frozen=True)
class GroundTruth:
    rings: tuple[Ring, ...]
    provenance: dict[AccountRef, Provenance] = field(hash=False)

    def to_json(self) -> str:
        doc = {
            "rings": [
                {"ring_id": r.ring_id, "members": [str(m) for m in r.members], "cycle_txn_count": r.cycle_txn_count}
                for r in self.rings
            ],
            "provenance": {str(k): v.value for k, v in sorted(self.provenance.items())},
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> GroundTruth:
        doc = json.loads(text)
        rings = tuple(
            Ring(r["ring_id"], tuple(AccountRef.parse(m) for m in r["members"]), r["cycle_txn_count"])
            for r in doc["rings"]
        )
        prov = {AccountRef.parse(k): Provenance(v) for k, v in doc["provenance"].items()}
        return cls(rings, prov)


@dataclass(frozen=True)
class RingSpec:
    ring_id: str
    members: tuple[int, ...]  # global customer indices, in cycle order


def bank_codes(n: int) -> list[str]:
    return [BANK_CODES[i] if i < len(BANK_CODES) else f"BK{i + 1:04d}" for i in range(n)]


def _stream(seed: int, kind: _Stream, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, int(kind), index])
    return np.random.Generator(np.random.Philox(ss))


def _random_person(rng: np.random.Generator, start: date) -> Identity:
    name = f"{_FIRST[rng.integers(len(_FIRST))]} {chr(65 + rng.integers(26))} {_LAST[rng.integers(len(_LAST))]}"
    dob = start - timedelta(days=int(rng.integers(18 * 365, 85 * 365)))
    nationality = _NATIONALITIES[rng.integers(len(_NATIONALITIES))]
    doc = None
    if rng.random() < 0.8:
        doc_type = (DocType.PASSPORT, DocType.DRIVING_LICENCE, DocType.NATIONAL_ID)[rng.integers(3)]
        doc = IdDocument(doc_type, f"{rng.integers(10**8, 10**9)}")
    return Identity(Kind.INDIVIDUAL, name, date_of_birth=dob, nationality=nationality, id_document=doc)


def _random_business(rng: np.random.Generator, start: date) -> Identity:
    name = (
        f"{_BIZ_A[rng.integers(len(_BIZ_A))]} {_BIZ_B[rng.integers(len(_BIZ_B))]} "
        f"{rng.integers(1, 1000)} {_BIZ_SUFFIX[rng.integers(len(_BIZ_SUFFIX))]}"
    )
    doi = start - timedelta(days=int(rng.integers(200, 40 * 365)))
    country = _COUNTRIES[rng.integers(len(_COUNTRIES))]
    reg = None
    if rng.random() < 0.9:
        reg_type = (RegType.COMPANIES_HOUSE, RegType.LEI, RegType.VAT)[rng.integers(3)]
        reg = CompanyRegistration(reg_type, f"{rng.integers(10**7, 10**8):08d}")
    return Identity(
        Kind.BUSINESS, name, date_of_incorporation=doi, country_of_incorporation=country, company_registration=reg
    )


class _WorldBuilder:
    """Mutable scratch space for one generation run."""

    def __init__(self, config: GenConfig):
        self.config = config
        self.codes = bank_codes(config.n_institutions)
        n = config.customers_per_institution
        self.n_total = n * config.n_institutions
        self.bank_of = np.repeat(np.arange(config.n_institutions), n)
        self.customer_ids = [f"C{i + 1:06d}" for i in range(n)]
        self.n_external = 4 * self.n_total
        self.refs = np.array(
            [f"{code}:{cid}" for code in self.codes for cid in self.customer_ids]
            + [f"{EXTERNAL}:XI{i:07d}" for i in range(self.n_external)]
            + [f"{EXTERNAL}:XO{i:07d}" for i in range(self.n_external)],
            dtype=object,
        )
        self.identities: list[Identity] = []
        self.open_dates: list[date] = []
        self.parties: list[list[tuple[str, Identity]]] = [[] for _ in self.codes]
        self.relations: list[list[Relation]] = [[] for _ in self.codes]
        self.sar = np.zeros(self.n_total, dtype=bool)
        self.exit = np.zeros(self.n_total, dtype=bool)
        self.alert = np.zeros(self.n_total, dtype=bool)
        # how far each customer's channel mix leans towards the suspicious mix, in [0, 1]
        self.suspicion = np.zeros(self.n_total)
        # ring and lookalike transactions: src global idx, dst global idx, epoch s, cents, channel code
        self.planted_txns: list[tuple[int, int, int, int, int]] = []

    def ref(self, g: int) -> AccountRef:
        return AccountRef(self.codes[self.bank_of[g]], self.customer_ids[g % self.config.customers_per_institution])

    def add_party(self, bank: int, identity: Identity) -> str:
        pid = f"P{len(self.parties[bank]) + 1:06d}"
        self.parties[bank].append((pid, identity))
        return pid

    def relate(self, g: int, party_id: str, kind: RelationKind) -> None:
        bank = int(self.bank_of[g])
        cid = self.customer_ids[g % self.config.customers_per_institution]
        self.relations[bank].append(Relation(self.codes[bank], cid, party_id, kind))


def plant_ring(builder: _WorldBuilder, spec: RingSpec, rng: np.random.Generator) -> list[AccountRef]:
    """Insert one laundering ring: a temporal cycle plus a shared controlling party.

    The cycle visits ``spec.members`` in order and closes back on the first
    member; timestamps strictly increase inside one window and amounts decay
    1-5% per hop. A single controller identity is copied into every member's
    bank so entity resolution links the members.
    """
    cfg = builder.config
    k = len(spec.members)
    window_s = cfg.ring_window_days * SECONDS_PER_DAY
    first_s = (cfg.start_date - EPOCH.date()).days * SECONDS_PER_DAY
    span_days = cfg.duration_days - cfg.ring_window_days
    t0 = first_s + int(rng.integers(0, span_days + 1)) * SECONDS_PER_DAY
    offsets = np.sort(rng.choice(window_s, size=k, replace=False))
    amount = float(np.exp(rng.normal(9.0, 0.4)))
    for hop in range(k):
        src = spec.members[hop]
        dst = spec.members[(hop + 1) % k]
        channel = Channel.INTL_WIRE if rng.random() < 0.5 else Channel.DOMESTIC_WIRE
        builder.planted_txns.append((src, dst, t0 + int(offsets[hop]), max(1, round(amount * 100)), channel.code))
        amount *= 1.0 - rng.uniform(0.01, 0.05)

    controller = _random_person(rng, cfg.start_date)
    copies: dict[int, str] = {}
    for g in spec.members:
        bank = int(builder.bank_of[g])
        if bank not in copies:
            copies[bank] = builder.add_party(bank, controller)
        kind = RelationKind.DIRECTOR if builder.identities[g].kind is Kind.BUSINESS else RelationKind.OTHER
        builder.relate(g, copies[bank], kind)

    members = np.array(spec.members)
    builder.exit[members] = True
    # exit markers imply SAR flags (RiskIntel invariant), so every member is SAR-flagged
    builder.sar[members] = True
    return [builder.ref(g) for g in spec.members]


def _lookalike_wires(b: _WorldBuilder, lookalikes: np.ndarray) -> None:
    """Large pass-through wires for non-criminal lookalikes.

    Each lookalike receives a wire from an external account and forwards a
    slightly smaller one to another external account inside the ring window,
    at ring-sized amounts. No cycle is formed and no party is shared, so only
    graph features can tell these customers apart from ring members.
    """
    cfg = b.config
    window_s = cfg.ring_window_days * SECONDS_PER_DAY
    first_s = (cfg.start_date - EPOCH.date()).days * SECONDS_PER_DAY
    span_days = cfg.duration_days - cfg.ring_window_days
    for g in np.sort(lookalikes):
        rng = _stream(cfg.seed, _Stream.LOOKALIKE, int(g))
        for _ in range(1 + int(rng.poisson(0.4))):
            t0 = first_s + int(rng.integers(0, span_days + 1)) * SECONDS_PER_DAY
            t_in, t_out = np.sort(rng.choice(window_s, size=2, replace=False))
            amount = float(np.exp(rng.normal(9.0, 0.4)))
            payer = b.n_total + int(rng.integers(b.n_external))
            payee = b.n_total + b.n_external + int(rng.integers(b.n_external))
            for src, dst, t in ((payer, int(g), t0 + int(t_in)), (int(g), payee, t0 + int(t_out))):
                channel = Channel.INTL_WIRE if rng.random() < 0.5 else Channel.DOMESTIC_WIRE
                b.planted_txns.append((src, dst, t, max(1, round(amount * 100)), channel.code))
                amount *= 1.0 - rng.uniform(0.01, 0.05)


def _build_profiles(b: _WorldBuilder) -> None:
    cfg = b.config
    n = cfg.customers_per_institution
    for bank in range(cfg.n_institutions):
        rng = _stream(cfg.seed, _Stream.PROFILES, bank)
        for i in range(n):
            if rng.random() < cfg.business_fraction:
                ident = _random_business(rng, cfg.start_date)
            else:
                ident = _random_person(rng, cfg.start_date)
            b.identities.append(ident)
            opened = cfg.start_date - timedelta(days=int(rng.integers(0, 15 * 365)))
            opened += timedelta(days=int(rng.integers(0, max(1, cfg.duration_days // 2))))
            b.open_dates.append(opened)

        for i in range(n):
            g = bank * n + i
            ident = b.identities[g]
            if ident.kind is Kind.BUSINESS:
                for _ in range(1 + rng.poisson(0.8)):
                    role = RelationKind.DIRECTOR if rng.random() < 0.6 else RelationKind.OWNER
                    b.relate(g, b.add_party(bank, _random_person(rng, cfg.start_date)), role)
                if rng.random() < 0.1:
                    b.relate(g, b.add_party(bank, _random_business(rng, cfg.start_date)), RelationKind.OWNER)
            else:
                for _ in range(1 + rng.poisson(0.6)):
                    role = RelationKind.FAMILY if rng.random() < 0.8 else RelationKind.OTHER
                    b.relate(g, b.add_party(bank, _random_person(rng, cfg.start_date)), role)
                if rng.random() < 0.1:
                    b.relate(g, b.add_party(bank, ident), RelationKind.SELF)


def _share_parties(b: _WorldBuilder) -> None:
    cfg = b.config
    if cfg.n_institutions < 2 or cfg.shared_party_rate == 0:
        return
    rng = _stream(cfg.seed, _Stream.SHARED)
    pool = [(bank, idx) for bank in range(cfg.n_institutions) for idx in range(len(b.parties[bank]))]
    n_share = int(round(cfg.shared_party_rate * len(pool)))
    n = cfg.customers_per_institution
    for j in rng.choice(len(pool), size=n_share, replace=False):
        bank, idx = pool[j]
        other = int(rng.integers(cfg.n_institutions - 1))
        other += other >= bank
        g = other * n + int(rng.integers(n))
        pid = b.add_party(other, b.parties[bank][idx][1])
        b.relate(g, pid, RelationKind.FAMILY if rng.random() < 0.5 else RelationKind.OTHER)


def _assign_rings(b: _WorldBuilder, rng: np.random.Generator) -> tuple[list[RingSpec], np.ndarray]:
    """Choose the criminal pool and fill ring slots from it.

    Pool members are used before any is reused, so when the slot total exceeds
    the pool some accounts serve several rings. When the pool is larger than
    the slot total, the unused members are criminals outside any ring.
    """
    cfg = b.config
    lo, hi = cfg.ring_size_range
    sizes = [int(_stream(cfg.seed, _Stream.RING, r).integers(lo, hi + 1)) for r in range(cfg.ring_count)]
    n_crim = int(round(cfg.criminal_rate * b.n_total))
    n_crim = max(n_crim, max(sizes, default=0))
    # spread criminals evenly over banks so every bank holds a comparable positive class
    n = cfg.customers_per_institution
    share = np.full(cfg.n_institutions, n_crim // cfg.n_institutions)
    share[: n_crim % cfg.n_institutions] += 1
    share = np.minimum(share, n)
    pool = np.concatenate([bank * n + rng.choice(n, size=int(k), replace=False) for bank, k in enumerate(share)])
    unused = list(rng.permutation(pool))
    specs = []
    for r, k in enumerate(sizes):
        members: list[int] = []
        while unused and len(members) < k:
            members.append(int(unused.pop()))
        while len(members) < k:
            cand = int(pool[rng.integers(len(pool))])
            if cand not in members:
                members.append(cand)
        banks = {int(b.bank_of[g]) for g in members}
        if len(banks) < 2:
            outside = [int(g) for g in pool if int(b.bank_of[g]) not in banks and int(g) not in members]
            if not outside:
                outside = [g for g in range(b.n_total) if int(b.bank_of[g]) not in banks]
            members[-1] = int(outside[rng.integers(len(outside))])
        order = rng.permutation(len(members))
        specs.append(RingSpec(f"R{r + 1:04d}", tuple(members[i] for i in order)))
    return specs, pool


def _background_transactions(b: _WorldBuilder, bank: int) -> dict[str, np.ndarray]:
    cfg = b.config
    n = cfg.customers_per_institution
    rng = _stream(cfg.seed, _Stream.TRANSACTIONS, bank)
    gidx = np.arange(bank * n, (bank + 1) * n)
    days = cfg.duration_days

    counts = rng.poisson(cfg.txn_rate, size=(n, days))
    cust_local, day = np.nonzero(counts)
    reps = counts[cust_local, day]
    cust_local = np.repeat(cust_local, reps)
    day = np.repeat(day, reps)
    m = len(cust_local)
    owner = gidx[cust_local]

    # habitual counterparties per customer
    n_ext = b.n_external
    k_in = 1 + rng.poisson(2.0, size=n)
    k_out = 1 + rng.poisson(3.0, size=n)
    k_cust = rng.poisson(cfg.customer_link_mean, size=n)
    payers = rng.integers(0, n_ext, size=k_in.sum())
    payees = rng.integers(0, n_ext, size=k_out.sum())
    links = rng.integers(0, b.n_total, size=k_cust.sum())
    off_in = np.concatenate([[0], np.cumsum(k_in)[:-1]])
    off_out = np.concatenate([[0], np.cumsum(k_out)[:-1]])
    off_cust = np.concatenate([[0], np.cumsum(k_cust)[:-1]])

    u_kind = rng.random(m)
    u_pick = rng.random(m)
    u_dir = rng.random(m)
    kc = k_cust[cust_local]
    if len(links):
        pick = off_cust[cust_local] + np.minimum((u_pick * kc).astype(np.int64), np.maximum(kc - 1, 0))
        link_target = np.where(kc > 0, links[np.minimum(pick, len(links) - 1)], owner)
    else:
        link_target = owner.copy()
    to_cust = (kc > 0) & (u_kind < cfg.customer_link_share) & (link_target != owner)
    ext_in = ~to_cust & (u_dir < 0.45)
    ext_out = ~to_cust & ~ext_in
    payer = payers[off_in[cust_local] + (u_pick * k_in[cust_local]).astype(np.int64)]
    payee = payees[off_out[cust_local] + (u_pick * k_out[cust_local]).astype(np.int64)]

    # customer-to-customer money only flows down a fixed random ranking: no background cycles
    rank = _stream(cfg.seed, _Stream.GLOBAL, 1).permutation(b.n_total)
    forward = rank[owner] < rank[link_target]

    # integer account keys: customers [0, n_total), payers next, then payees
    source = np.where(ext_in, b.n_total + payer, owner)
    dest = np.where(ext_out, b.n_total + n_ext + payee, owner)
    cust_src = to_cust & ~forward
    cust_dst = to_cust & forward
    source[cust_src] = link_target[cust_src]
    dest[cust_dst] = link_target[cust_dst]
    incoming = ext_in | cust_src

    lean = b.suspicion[owner] * cfg.suspicion_strength
    channel = np.empty(m, dtype=np.int8)
    u_ch = rng.random(m)
    for direction, mask_dir in (("in", incoming), ("out", ~incoming)):
        base = np.cumsum(_MIX_NORMAL[direction])
        shifted = np.cumsum(_MIX_SUSPICIOUS[direction])
        cdf = base + lean[mask_dir, None] * (shifted - base)
        picked = (cdf <= u_ch[mask_dir, None]).sum(axis=1)
        channel[mask_dir] = np.minimum(picked, len(CHANNELS) - 1)

    amount = np.maximum(1, np.round(np.exp(rng.normal(cfg.amount_mu, cfg.amount_sigma, size=m)) * 100)).astype(np.int64)
    intl = channel == Channel.INTL_WIRE.code
    currency = np.full(m, "GBP", dtype=object)
    u_cur = rng.random(m)
    currency[intl & (u_cur < 0.3)] = "USD"
    currency[intl & (u_cur >= 0.3) & (u_cur < 0.5)] = "EUR"

    first_s = (cfg.start_date - EPOCH.date()).days * SECONDS_PER_DAY
    ts = first_s + day.astype(np.int64) * SECONDS_PER_DAY + rng.integers(0, SECONDS_PER_DAY, size=m)
    return {"timestamp": ts, "amount": amount, "currency": currency, "channel": channel, "source": source, "dest": dest}


def generate_world(config: GenConfig) -> tuple[World, GroundTruth]:
    config.validate()
    b = _WorldBuilder(config)
    _build_profiles(b)
    _share_parties(b)

    rng = _stream(config.seed, _Stream.GLOBAL)
    specs, pool = _assign_rings(b, rng)
    b.exit[pool] = True
    b.sar[pool] = True
    b.suspicion[pool] = 1.0

    n_sar = int(round(config.sar_rate * b.n_total))
    clean = np.flatnonzero(~b.sar)
    n_random = max(0, min(n_sar - int(b.sar.sum()), len(clean)))
    random_sar = rng.choice(clean, size=n_random, replace=False) if n_random else np.array([], dtype=np.int64)
    b.sar[random_sar] = True
    n_look = int(round(config.lookalike_fraction * n_random))
    b.suspicion[random_sar[:n_look]] = config.lookalike_strength
    _lookalike_wires(b, random_sar[:n_look])
    b.alert = b.sar | (rng.random(b.n_total) < config.alert_rate)

    rings = []
    for spec in specs:
        members = plant_ring(b, spec, _stream(config.seed, _Stream.RING, int(spec.ring_id[1:]) - 1))
        rings.append(Ring(spec.ring_id, tuple(members), len(members)))

    provenance = {}
    ring_members = {g for s in specs for g in s.members}
    for g in range(b.n_total):
        if g in ring_members:
            p = Provenance.RING_MEMBER
        elif b.sar[g] or b.exit[g]:
            p = Provenance.RANDOM_FLAG
        else:
            p = Provenance.CLEAN_BACKGROUND
        provenance[b.ref(g)] = p

    cols: dict[str, list[np.ndarray]] = {k: [] for k in ("timestamp", "amount", "currency", "channel", "source", "dest")}
    for bank in range(config.n_institutions):
        part = _background_transactions(b, bank)
        for k in cols:
            cols[k].append(part[k])
    if b.planted_txns:
        rt = np.array(b.planted_txns, dtype=np.int64)
        cols["source"].append(rt[:, 0])
        cols["dest"].append(rt[:, 1])
        cols["timestamp"].append(rt[:, 2])
        cols["amount"].append(rt[:, 3])
        cols["channel"].append(rt[:, 4].astype(np.int8))
        cols["currency"].append(np.full(len(rt), "GBP", dtype=object))
    txn = {k: np.concatenate(v) if v else np.array([]) for k, v in cols.items()}

    src, dst = txn["source"], txn["dest"]
    owner = np.where(src < b.n_total, b.bank_of[np.minimum(src, b.n_total - 1)], b.bank_of[np.minimum(dst, b.n_total - 1)])

    institutions = []
    n = config.customers_per_institution
    for bank, code in enumerate(b.codes):
        sel = np.flatnonzero(owner == bank)
        order = np.lexsort(
            (txn["channel"][sel], txn["amount"][sel], dst[sel], src[sel], txn["timestamp"][sel])
        )
        sel = sel[order]
        frame = pd.DataFrame(
            {
                "txn_id": np.array([f"T{code}{i + 1:09d}" for i in range(len(sel))], dtype=object),
                "timestamp": txn["timestamp"][sel],
                "amount": txn["amount"][sel],
                "currency": txn["currency"][sel],
                "channel": txn["channel"][sel],
                "source": b.refs[src[sel]],
                "dest": b.refs[dst[sel]],
            }
        )
        customers = tuple(
            CustomerProfile(
                customer_id=b.customer_ids[i],
                institution=code,
                identity=b.identities[bank * n + i],
                account_open_date=b.open_dates[bank * n + i],
                risk=RiskIntel(
                    past_alert=bool(b.alert[bank * n + i]),
                    sar_flag=bool(b.sar[bank * n + i]),
                    fincrime_exit_marker=bool(b.exit[bank * n + i]),
                ),
            )
            for i in range(n)
        )
        parties = tuple(RelatedParty(pid, code, ident) for pid, ident in b.parties[bank])
        institutions.append(
            InstitutionData(code, customers, parties, tuple(b.relations[bank]), TransactionTable(frame))
        )
    world = World(tuple(institutions), (config.start_date, config.end_date), config.seed)
    return world, GroundTruth(tuple(rings), provenance)
