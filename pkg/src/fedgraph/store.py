"""Directory layout for a World and its validating loader.

Layout::

    root/manifest.json
    root/<CODE>/customers.csv
    root/<CODE>/related_parties.csv
    root/<CODE>/relations.csv
    root/<CODE>/transactions.csv
    root/<CODE>/risk_intel.csv

Files are UTF-8 with ``\\n`` line endings and a mandatory header. Amounts are
fixed-point strings, timestamps ``YYYY-MM-DDTHH:MM:SSZ``.
"""

from __future__ import annotations

import csv
import json
import re
from datetime import date
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.compute as pc
from pyarrow import csv as pa_csv

from .errors import DanglingReference, DuplicateId, IoFailure, MissingFile, SchemaViolation
from .model import (
    CHANNELS,
    EXTERNAL,
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

SCHEMA_VERSION = 1

IDENTITY_COLUMNS = [
    "kind",
    "full_name",
    "date_of_birth",
    "nationality",
    "doc_type",
    "doc_number",
    "date_of_incorporation",
    "country_of_incorporation",
    "reg_type",
    "reg_number",
]
CUSTOMER_COLUMNS = ["customer_id", "institution", *IDENTITY_COLUMNS, "account_open_date"]
PARTY_COLUMNS = ["party_id", "institution", *IDENTITY_COLUMNS]
RELATION_COLUMNS = ["institution", "customer_id", "party_id", "relation_kind"]
RISK_COLUMNS = ["institution", "customer_id", "past_alert", "sar_flag", "fincrime_exit_marker"]
TXN_FILE_COLUMNS = ["txn_id", "timestamp", "amount", "currency", "channel", "source", "dest"]

FILES = {
    "customers.csv": CUSTOMER_COLUMNS,
    "related_parties.csv": PARTY_COLUMNS,
    "relations.csv": RELATION_COLUMNS,
    "transactions.csv": TXN_FILE_COLUMNS,
    "risk_intel.csv": RISK_COLUMNS,
}

_INDIVIDUAL_ONLY = ("date_of_birth", "nationality", "doc_type", "doc_number")
_BUSINESS_ONLY = ("date_of_incorporation", "country_of_incorporation", "reg_type", "reg_number")
_CODE_RE = re.compile(r"^[A-Z0-9]{1,16}$")
_AMOUNT_RE = r"^\d+\.\d{2}$"
_TS_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
_TS_RE = r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$"


# --------------------------------------------------------------------------
# save
# --------------------------------------------------------------------------

def _s(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, date):
        return value.isoformat()
    if hasattr(value, "value"):  # enums
        return str(value.value)
    return str(value)


def _identity_cells(ident: Identity) -> list[str]:
    doc = ident.id_document
    reg = ident.company_registration
    return [
        _s(ident.kind),
        ident.full_name,
        _s(ident.date_of_birth),
        _s(ident.nationality),
        _s(doc.doc_type) if doc else "",
        doc.doc_number if doc else "",
        _s(ident.date_of_incorporation),
        _s(ident.country_of_incorporation),
        _s(reg.reg_type) if reg else "",
        reg.reg_number if reg else "",
    ]


def _write_rows(path: Path, header: list[str], rows: Iterable[list[str]]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def format_amounts(cents: np.ndarray) -> pd.Series:
    cents = pd.Series(np.asarray(cents, dtype=np.int64))
    return (cents // 100).astype(str) + "." + (cents % 100).astype(str).str.zfill(2)


def format_timestamps(seconds: np.ndarray) -> np.ndarray:
    ts = np.asarray(seconds, dtype=np.int64).astype("datetime64[s]")
    return np.char.add(np.datetime_as_string(ts, unit="s"), "Z")


def _write_transactions(path: Path, table: TransactionTable) -> None:
    f = table.frame
    out = pd.DataFrame(
        {
            "txn_id": f["txn_id"],
            "timestamp": format_timestamps(f["timestamp"].to_numpy()) if len(f) else [],
            "amount": format_amounts(f["amount"].to_numpy()),
            "currency": f["currency"],
            "channel": np.array([c.value for c in CHANNELS], dtype=object)[f["channel"].to_numpy(dtype=np.int64)],
            "source": f["source"],
            "dest": f["dest"],
        },
        columns=TXN_FILE_COLUMNS,
    )
    out.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def save_world(world: World, root: str | Path) -> None:
    """Write ``world`` under ``root``. Output is byte-deterministic."""
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "institutions": world.codes,
            "coverage": {"start": world.coverage[0].isoformat(), "end": world.coverage[1].isoformat()},
            "generator_seed": world.generator_seed,
        }
        (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        for inst in world.institutions:
            d = root / inst.code
            d.mkdir(exist_ok=True)
            _write_rows(
                d / "customers.csv",
                CUSTOMER_COLUMNS,
                ([c.customer_id, c.institution, *_identity_cells(c.identity), _s(c.account_open_date)] for c in inst.customers),
            )
            _write_rows(
                d / "related_parties.csv",
                PARTY_COLUMNS,
                ([p.party_id, p.institution, *_identity_cells(p.identity)] for p in inst.related_parties),
            )
            _write_rows(
                d / "relations.csv",
                RELATION_COLUMNS,
                ([r.institution, r.customer_id, r.party_id, _s(r.relation_kind)] for r in inst.relations),
            )
            _write_rows(
                d / "risk_intel.csv",
                RISK_COLUMNS,
                (
                    [c.institution, c.customer_id, _s(c.risk.past_alert), _s(c.risk.sar_flag), _s(c.risk.fincrime_exit_marker)]
                    for c in inst.customers
                ),
            )
            _write_transactions(d / "transactions.csv", inst.transactions)
    except OSError as exc:
        raise IoFailure(f"cannot write world to {root}: {exc}") from exc


# --------------------------------------------------------------------------
# load
# --------------------------------------------------------------------------

def _require(path: Path) -> Path:
    if not path.is_file():
        raise MissingFile(f"missing file: {path}")
    return path


def _read_rows(path: Path, header: list[str]) -> list[dict[str, str]]:
    with _require(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got != header:
            raise SchemaViolation(str(path), 1, None, f"header must be {','.join(header)}, got {got}")
        rows = []
        for line, cells in enumerate(reader, start=2):
            if len(cells) != len(header):
                raise SchemaViolation(str(path), line, None, f"expected {len(header)} cells, got {len(cells)}")
            rows.append(dict(zip(header, cells)))
    return rows


class _RowCtx:
    def __init__(self, where: str, line: int, row: dict[str, str]):
        self.where, self.line, self.row = where, line, row

    def fail(self, column: str | None, reason: str) -> SchemaViolation:
        return SchemaViolation(self.where, self.line, column, reason)

    def text(self, column: str, required: bool = False) -> str:
        value = self.row[column]
        if required and not value:
            raise self.fail(column, "required value is empty")
        return value

    def date(self, column: str, required: bool = False) -> date | None:
        value = self.text(column, required)
        if not value:
            return None
        try:
            return date.fromisoformat(value)
        except ValueError:
            raise self.fail(column, f"not an ISO date: {value!r}") from None

    def enum(self, column: str, enum_cls, required: bool = False):
        value = self.text(column, required)
        if not value:
            return None
        try:
            return enum_cls(value)
        except ValueError:
            allowed = ", ".join(e.value for e in enum_cls)
            raise self.fail(column, f"{value!r} not one of {allowed}") from None

    def flag(self, column: str) -> bool:
        value = self.text(column, True)
        if value not in ("true", "false"):
            raise self.fail(column, f"boolean must be true/false, got {value!r}")
        return value == "true"


def _parse_identity(ctx: _RowCtx) -> Identity:
    kind = ctx.enum("kind", Kind, required=True)
    foreign = _BUSINESS_ONLY if kind is Kind.INDIVIDUAL else _INDIVIDUAL_ONLY
    for col in foreign:
        if ctx.row[col]:
            raise ctx.fail(col, f"field not allowed on {kind.value} profile")
    if kind is Kind.INDIVIDUAL:
        doc_type = ctx.enum("doc_type", DocType)
        doc_number = ctx.text("doc_number")
        return Identity(
            kind,
            ctx.text("full_name"),
            date_of_birth=ctx.date("date_of_birth"),
            nationality=ctx.text("nationality") or None,
            id_document=IdDocument(doc_type, doc_number) if (doc_type or doc_number) else None,
        )
    reg_type = ctx.enum("reg_type", RegType)
    reg_number = ctx.text("reg_number")
    return Identity(
        kind,
        ctx.text("full_name"),
        date_of_incorporation=ctx.date("date_of_incorporation"),
        country_of_incorporation=ctx.text("country_of_incorporation") or None,
        company_registration=CompanyRegistration(reg_type, reg_number) if (reg_type or reg_number) else None,
    )


def _rows(path: Path, header: list[str]) -> Iterable[_RowCtx]:
    for line, row in enumerate(_read_rows(path, header), start=2):
        yield _RowCtx(str(path), line, row)


def _check_institution(ctx: _RowCtx, code: str) -> None:
    if ctx.row["institution"] != code:
        raise ctx.fail("institution", f"expected {code!r}, got {ctx.row['institution']!r}")


def _first_bad(mask: np.ndarray) -> int | None:
    idx = np.flatnonzero(mask)
    return int(idx[0]) if len(idx) else None


def _load_transactions(
    path: Path, known_refs: pa.Array, codes: set[str], window: tuple[int, int], seen_ids: list[pa.Array]
) -> TransactionTable:
    where = str(_require(path))
    with path.open(encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh), None)
    if header != TXN_FILE_COLUMNS:
        raise SchemaViolation(where, 1, None, f"header must be {','.join(TXN_FILE_COLUMNS)}, got {header}")
    try:
        raw = pa_csv.read_csv(
            path,
            convert_options=pa_csv.ConvertOptions(
                column_types={c: pa.string() for c in TXN_FILE_COLUMNS}, strings_can_be_null=False
            ),
        )
    except pa.ArrowInvalid as exc:
        raise SchemaViolation(where, None, None, f"unparseable CSV: {exc}") from exc
    col = {c: raw.column(c).combine_chunks() for c in TXN_FILE_COLUMNS}

    def check(bad: pa.Array | np.ndarray, column: str, reason: Callable[[int], str]) -> None:
        if isinstance(bad, (pa.Array, pa.ChunkedArray)):
            bad = bad.fill_null(True).to_numpy(zero_copy_only=False)
        i = _first_bad(bad)
        if i is not None:
            raise SchemaViolation(where, i + 2, column, reason(i))

    for name in ("txn_id", "currency", "source", "dest"):
        check(pc.equal(pc.utf8_length(col[name]), 0), name, lambda i: "required value is empty")

    ts_text = col["timestamp"]
    ts = pc.strptime(ts_text, format=_TS_FORMAT, unit="s", error_is_null=True)
    bad_ts = pc.or_(pc.invert(pc.match_substring_regex(ts_text, _TS_RE)), pc.is_null(ts))
    check(bad_ts, "timestamp", lambda i: f"bad timestamp {ts_text[i].as_py()!r}")
    seconds = ts.cast(pa.int64()).to_numpy(zero_copy_only=False)
    check((seconds < window[0]) | (seconds > window[1]), "timestamp", lambda i: "outside the coverage window")

    amounts = col["amount"]
    check(pc.invert(pc.match_substring_regex(amounts, _AMOUNT_RE)), "amount",
          lambda i: f"amount must be a non-negative 2-decimal string, got {amounts[i].as_py()!r}")
    digits = pc.replace_substring(amounts, ".", "")
    if len(digits) and pc.max(pc.utf8_length(digits)).as_py() > 18:
        i = _first_bad(pc.greater(pc.utf8_length(digits), 18).to_numpy(zero_copy_only=False))
        raise SchemaViolation(where, i + 2, "amount", "amount out of range")
    cents = digits.cast(pa.int64()).to_numpy(zero_copy_only=False)

    names = pa.array([c.value for c in CHANNELS])
    channel = pc.index_in(col["channel"], value_set=names)
    check(pc.is_null(channel), "channel",
          lambda i: f"{col['channel'][i].as_py()!r} not one of {', '.join(names.to_pylist())}")

    for name in ("source", "dest"):
        refs = col[name]
        check(pc.invert(pc.match_substring_regex(refs, r"^[^:]+:.+$")), name,
              lambda i: f"malformed account reference {refs[i].as_py()!r}")
        resolved = pc.or_(pc.is_in(refs, value_set=known_refs), pc.starts_with(refs, EXTERNAL + ":"))
        i = _first_bad(pc.invert(resolved).to_numpy(zero_copy_only=False))
        if i is not None:
            ref = refs[i].as_py()
            what = "unknown institution" if ref.partition(":")[0] not in codes else "no such customer"
            raise DanglingReference(f"{where} row {i + 2} column {name!r}: {ref!r} ({what})")
    check(pc.equal(col["source"], col["dest"]), "dest", lambda i: "source and dest must differ")

    ids = col["txn_id"]
    dup = pd.Series(ids.to_numpy(zero_copy_only=False)).duplicated().to_numpy()
    if seen_ids:
        dup |= pc.is_in(ids, value_set=pa.concat_arrays(seen_ids)).to_numpy(zero_copy_only=False)
    i = _first_bad(dup)
    if i is not None:
        raise DuplicateId(f"{where} row {i + 2}: duplicate txn_id {ids[i].as_py()!r}")
    seen_ids.append(ids)

    def obj(a: pa.Array) -> np.ndarray:
        return a.to_numpy(zero_copy_only=False).astype(object)

    return TransactionTable(
        pd.DataFrame(
            {
                "txn_id": obj(ids),
                "timestamp": seconds.astype(np.int64),
                "amount": cents.astype(np.int64),
                "currency": obj(col["currency"]),
                "channel": channel.to_numpy(zero_copy_only=False).astype(np.int8),
                "source": obj(col["source"]),
                "dest": obj(col["dest"]),
            }
        )
    )


def _read_manifest(root: Path) -> tuple[list[str], tuple[date, date], int | None]:
    path = _require(root / "manifest.json")
    where = str(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(where, None, None, f"invalid JSON: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaViolation(where, None, "schema_version", f"expected {SCHEMA_VERSION}")
    codes = doc.get("institutions")
    if not isinstance(codes, list):
        raise SchemaViolation(where, None, "institutions", "must be a list")
    for code in codes:
        if not isinstance(code, str) or not _CODE_RE.match(code) or code == EXTERNAL:
            raise SchemaViolation(where, None, "institutions", f"bad institution code {code!r}")
    if len(set(codes)) != len(codes):
        raise DuplicateId(f"{where}: duplicate institution code")
    try:
        cov = doc["coverage"]
        start, end = date.fromisoformat(cov["start"]), date.fromisoformat(cov["end"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(where, None, "coverage", f"need ISO start/end dates ({exc})") from None
    if end < start:
        raise SchemaViolation(where, None, "coverage", "end before start")
    seed = doc.get("generator_seed")
    if seed is not None and (not isinstance(seed, int) or not 0 <= seed < 2**64):
        raise SchemaViolation(where, None, "generator_seed", "must be a 64-bit unsigned integer or null")
    return codes, (start, end), seed


def load_world(root: str | Path) -> World:
    """Read and fully validate a World written by :func:`save_world`."""
    root = Path(root)
    codes, coverage, seed = _read_manifest(root)
    for code in codes:
        for name in FILES:
            _require(root / code / name)

    staged = []
    known_refs: set[str] = set()
    for code in codes:
        d = root / code
        customers: dict[str, tuple[_RowCtx, Identity, date]] = {}
        for ctx in _rows(d / "customers.csv", CUSTOMER_COLUMNS):
            _check_institution(ctx, code)
            cid = ctx.text("customer_id", True)
            if cid in customers:
                raise DuplicateId(f"{ctx.where} row {ctx.line}: duplicate customer_id {cid!r}")
            customers[cid] = (ctx, _parse_identity(ctx), ctx.date("account_open_date", True))
        risks: dict[str, RiskIntel] = {}
        for ctx in _rows(d / "risk_intel.csv", RISK_COLUMNS):
            _check_institution(ctx, code)
            cid = ctx.text("customer_id", True)
            if cid not in customers:
                raise DanglingReference(f"{ctx.where} row {ctx.line}: unknown customer_id {cid!r}")
            if cid in risks:
                raise DuplicateId(f"{ctx.where} row {ctx.line}: duplicate risk row for {cid!r}")
            risk = RiskIntel(ctx.flag("past_alert"), ctx.flag("sar_flag"), ctx.flag("fincrime_exit_marker"))
            if risk.fincrime_exit_marker and not risk.sar_flag:
                raise ctx.fail("sar_flag", "fincrime_exit_marker requires sar_flag")
            risks[cid] = risk
        missing = sorted(set(customers) - set(risks))
        if missing:
            raise DanglingReference(f"{d / 'risk_intel.csv'}: no risk row for customer {missing[0]!r}")
        parties: dict[str, RelatedParty] = {}
        for ctx in _rows(d / "related_parties.csv", PARTY_COLUMNS):
            _check_institution(ctx, code)
            pid = ctx.text("party_id", True)
            if pid in parties:
                raise DuplicateId(f"{ctx.where} row {ctx.line}: duplicate party_id {pid!r}")
            parties[pid] = RelatedParty(pid, code, _parse_identity(ctx))
        relations: list[Relation] = []
        seen_rel: set[tuple[str, str, str]] = set()
        for ctx in _rows(d / "relations.csv", RELATION_COLUMNS):
            _check_institution(ctx, code)
            cid, pid = ctx.text("customer_id", True), ctx.text("party_id", True)
            kind = ctx.enum("relation_kind", RelationKind, required=True)
            if cid not in customers:
                raise DanglingReference(f"{ctx.where} row {ctx.line}: unknown customer_id {cid!r}")
            if pid not in parties:
                raise DanglingReference(f"{ctx.where} row {ctx.line}: unknown party_id {pid!r}")
            key = (cid, pid, kind.value)
            if key in seen_rel:
                raise DuplicateId(f"{ctx.where} row {ctx.line}: duplicate relation {key}")
            seen_rel.add(key)
            relations.append(Relation(code, cid, pid, kind))
        profiles = tuple(
            CustomerProfile(cid, code, ident, opened, risks[cid]) for cid, (_, ident, opened) in customers.items()
        )
        known_refs.update(f"{code}:{cid}" for cid in customers)
        staged.append((code, profiles, tuple(parties.values()), tuple(relations)))

    shell = World((), coverage, seed)
    window = shell.coverage_seconds()
    seen_ids: list[pa.Array] = []
    ref_set = pa.array(sorted(known_refs), type=pa.string())
    institutions = []
    for code, profiles, parties, relations in staged:
        table = _load_transactions(root / code / "transactions.csv", ref_set, set(codes), window, seen_ids)
        institutions.append(InstitutionData(code, profiles, parties, relations, table))
    return World(tuple(institutions), coverage, seed)
