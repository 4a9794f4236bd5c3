from __future__ import annotations

import sys
from datetime import date, datetime, timezone
from decimal import Decimal
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fedgraph.datagen import GenConfig, generate_world
from fedgraph.model import (
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
    Transaction,
    TransactionTable,
    World,
)

# a few hundred customers over three banks: big enough for every pipeline stage, fast to build
SMALL_GEN = GenConfig(
    n_institutions=3,
    customers_per_institution=150,
    duration_days=120,
    sar_rate=0.1,
    criminal_rate=0.06,
    ring_count=4,
    ring_size_range=(3, 4),
    seed=11,
)


def person(name: str, dob=date(1980, 5, 1), nat="GB", doc: str | None = None) -> Identity:
    return Identity(
        Kind.INDIVIDUAL,
        name,
        date_of_birth=dob,
        nationality=nat,
        id_document=IdDocument(DocType.PASSPORT, doc) if doc else None,
    )


def business(name: str, doi=date(2001, 3, 3), country="GB", reg: str | None = None) -> Identity:
    return Identity(
        Kind.BUSINESS,
        name,
        date_of_incorporation=doi,
        country_of_incorporation=country,
        company_registration=CompanyRegistration(RegType.COMPANIES_HOUSE, reg) if reg else None,
    )


def customer(code: str, cid: str, ident: Identity, sar=False, exit_=False, alert=False) -> CustomerProfile:
    return CustomerProfile(cid, code, ident, date(2015, 1, 1), RiskIntel(alert, sar, exit_))


def txn(tid: str, day: int, amount: str, channel: Channel, src: str, dst: str) -> Transaction:
    ts = datetime(2020, 1, 1, tzinfo=timezone.utc).replace(day=day)
    return Transaction(tid, ts, Decimal(amount), "GBP", channel, AccountRef.parse(src), AccountRef.parse(dst))


def make_tiny_world() -> World:
    """Two banks, a shared director, a three-hop cycle across banks."""
    aaa = InstitutionData(
        "AAA",
        customers=(
            customer("AAA", "C1", person("Ann Smith", doc="P-1"), sar=True, exit_=True),
            customer("AAA", "C2", person("Bob Jones")),
            customer("AAA", "C3", business("Acme Ltd", reg="123"), alert=True),
        ),
        related_parties=(RelatedParty("P1", "AAA", person("Dan Director")),),
        relations=(Relation("AAA", "C1", "P1", RelationKind.DIRECTOR), Relation("AAA", "C3", "P1", RelationKind.OWNER)),
        transactions=TransactionTable.from_rows(
            [
                txn("T1", 2, "100.00", Channel.DOMESTIC_WIRE, "AAA:C1", "BBB:C9"),
                txn("T2", 5, "20.50", Channel.CASH, "EXTERNAL:X1", "AAA:C2"),
                txn("T3", 6, "7.25", Channel.CHECK, "AAA:C2", "AAA:C3"),
            ]
        ),
    )
    bbb = InstitutionData(
        "BBB",
        customers=(
            customer("BBB", "C9", person("Eve Black", doc="P-9"), sar=True),
            customer("BBB", "C8", person("Ann Smith", doc="Z-7")),
        ),
        related_parties=(RelatedParty("Q1", "BBB", person("Dan Director")),),
        relations=(Relation("BBB", "C9", "Q1", RelationKind.OTHER),),
        transactions=TransactionTable.from_rows(
            [
                txn("U1", 3, "98.00", Channel.INTL_WIRE, "BBB:C9", "BBB:C8"),
                txn("U2", 4, "96.00", Channel.INTL_WIRE, "BBB:C8", "AAA:C1"),
            ]
        ),
    )
    return World((aaa, bbb), (date(2020, 1, 1), date(2020, 1, 31)), generator_seed=None)


@pytest.fixture
def tiny_world() -> World:
    return make_tiny_world()


@pytest.fixture(scope="session")
def small_generated():
    return generate_world(SMALL_GEN)


@pytest.fixture(scope="session")
def small_world(small_generated) -> World:
    return small_generated[0]


@pytest.fixture(scope="session")
def small_world_dir(small_generated, tmp_path_factory) -> Path:
    from fedgraph.store import save_world

    world, truth = small_generated
    root = tmp_path_factory.mktemp("small_world")
    save_world(world, root)
    (root / "ground_truth.json").write_text(truth.to_json(), encoding="utf-8")
    return root


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
