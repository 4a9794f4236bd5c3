"""Random fixtures with deliberate collisions, shared by unit and acceptance tests."""

from __future__ import annotations

from datetime import date

import numpy as np

from fedgraph.model import (
    CompanyRegistration,
    CustomerProfile,
    DocType,
    IdDocument,
    Identity,
    Kind,
    RegType,
    RelatedParty,
    RiskIntel,
)

_NAMES = ["Ann Smith", "ann  SMITH", "Bob Jones", "Cy Lee", "Dee Patel", "Zoë Müller", "Zoë Müller"]
_BIZ = ["Acme Ltd", "ACME ltd", "Orion Freight", "Pine Co"]
_DATES = [date(1980, 1, 1), date(1990, 6, 15), date(2001, 3, 3)]
_COUNTRIES = ["GB", "gb", "FR", None]
_NUMBERS = ["AB-123", "ab 123", "X9", "77-1", ""]


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def random_identity(rng: np.random.Generator) -> Identity:
    if rng.random() < 0.6:
        doc = None
        if rng.random() < 0.7:
            doc = IdDocument(_pick(rng, [DocType.PASSPORT, DocType.NATIONAL_ID, None]), _pick(rng, _NUMBERS))
        return Identity(
            Kind.INDIVIDUAL,
            _pick(rng, _NAMES + [""]),
            date_of_birth=_pick(rng, _DATES + [None]),
            nationality=_pick(rng, _COUNTRIES),
            id_document=doc,
        )
    reg = None
    if rng.random() < 0.7:
        reg = CompanyRegistration(_pick(rng, [RegType.COMPANIES_HOUSE, RegType.LEI, None]), _pick(rng, _NUMBERS))
    return Identity(
        Kind.BUSINESS,
        _pick(rng, _BIZ + [""]),
        date_of_incorporation=_pick(rng, _DATES + [None]),
        country_of_incorporation=_pick(rng, _COUNTRIES),
        company_registration=reg,
    )


def random_profiles(rng: np.random.Generator, n: int, banks=("AAA", "BBB", "CCC")) -> list:
    """``n`` customers and related parties spread over a few banks."""
    out = []
    for i in range(n):
        bank = _pick(rng, list(banks))
        ident = random_identity(rng)
        if rng.random() < 0.5:
            out.append(CustomerProfile(f"C{i}", bank, ident, date(2015, 1, 1), RiskIntel()))
        else:
            out.append(RelatedParty(f"P{i}", bank, ident))
    return out


def random_edges(rng: np.random.Generator, n: int, m: int, t_max: int = 40 * 86_400):
    """``m`` directed edges on ``n`` vertices with timestamps; parallel edges and self-loops allowed."""
    src = rng.integers(0, n, size=m)
    dst = rng.integers(0, n, size=m)
    ts = rng.integers(0, t_max, size=m)
    return src.astype(np.int64), dst.astype(np.int64), ts.astype(np.int64)


def random_undirected(rng: np.random.Generator, n: int):
    """Sparse-ish random graph whose density varies, so component counts vary."""
    m = int(rng.integers(0, max(1, int(n * rng.uniform(0.2, 1.5)))))
    return rng.integers(0, n, size=m).astype(np.int64), rng.integers(0, n, size=m).astype(np.int64)
