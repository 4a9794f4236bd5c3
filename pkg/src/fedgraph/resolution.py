"""Exact-match entity resolution over customer and related-party profiles.

Two profiles denote the same entity when any of their normalized keys are
equal:

* Individuals: (name, date of birth, nationality) or
  (document type, document number, nationality)
* Businesses: (name, date of incorporation, country) or
  (registration type, registration number, country)

Matching is closed transitively with a union-find over hash buckets.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Union

from .model import CustomerProfile, Identity, Kind, RelatedParty, World

Profile = Union[CustomerProfile, RelatedParty]


class EntityKey(NamedTuple):
    rule: str  # "I-name", "I-doc", "B-name", "B-reg"
    first: str
    second: str
    country: str


@dataclass(frozen=True)
class GroupAssignment:
    group_id: str
    members: tuple[str, ...]  # sorted profile refs

    @property
    def seeded_by_customer(self) -> bool:
        return any(m.startswith("C:") for m in self.members)

    def to_json(self) -> str:
        return json.dumps({"group_id": self.group_id, "members": list(self.members)})


def profile_ref(profile: Profile) -> str:
    """Stable string id of a profile: ``C:<bank>:<customer_id>`` or ``P:<bank>:<party_id>``."""
    if isinstance(profile, CustomerProfile):
        return f"C:{profile.institution}:{profile.customer_id}"
    return f"P:{profile.institution}:{profile.party_id}"


def normalize_text(value: str | None) -> str:
    if not value:
        return ""
    return " ".join(unicodedata.normalize("NFC", value).casefold().split())


def normalize_number(value: str | None) -> str:
    return normalize_text(value).replace(" ", "").replace("-", "")


def _keys(ident: Identity) -> list[EntityKey]:
    keys = []
    if ident.kind is Kind.INDIVIDUAL:
        name, born, country = normalize_text(ident.full_name), ident.date_of_birth, normalize_text(ident.nationality)
        doc = ident.id_document
        if name and born and country:
            keys.append(EntityKey("I-name", name, born.isoformat(), country))
        if doc and doc.doc_type and country:
            number = normalize_number(doc.doc_number)
            if number:
                keys.append(EntityKey("I-doc", doc.doc_type.value.casefold(), number, country))
    else:
        name, formed = normalize_text(ident.full_name), ident.date_of_incorporation
        country = normalize_text(ident.country_of_incorporation)
        reg = ident.company_registration
        if name and formed and country:
            keys.append(EntityKey("B-name", name, formed.isoformat(), country))
        if reg and reg.reg_type and country:
            number = normalize_number(reg.reg_number)
            if number:
                keys.append(EntityKey("B-reg", reg.reg_type.value.casefold(), number, country))
    return keys


def entity_key(profile: Profile) -> list[EntityKey]:
    """Zero, one or two match keys, one per fully populated rule."""
    return _keys(profile.identity)


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller index wins so roots are order-independent within a component
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def resolve(profiles: Iterable[Profile]) -> list[GroupAssignment]:
    """Partition profiles into entity groups.

    Output is independent of input order: groups are sorted by their smallest
    member ref and numbered ``GCP000001...`` (groups holding at least one
    customer) or ``GRP000001...`` (related parties only).
    """
    refs = sorted({profile_ref(p): p for p in profiles}.items())
    uf = UnionFind(len(refs))
    bucket: dict[EntityKey, int] = {}
    for i, (_, profile) in enumerate(refs):
        for key in entity_key(profile):
            j = bucket.setdefault(key, i)
            if j != i:
                uf.union(i, j)
    components: dict[int, list[str]] = {}
    for i, (ref, _) in enumerate(refs):
        components.setdefault(uf.find(i), []).append(ref)
    groups = sorted(components.values(), key=lambda members: members[0])
    out = []
    counters = {"GCP": 0, "GRP": 0}
    for members in groups:
        prefix = "GCP" if members[0].startswith("C:") else "GRP"
        counters[prefix] += 1
        out.append(GroupAssignment(f"{prefix}{counters[prefix]:06d}", tuple(members)))
    return out


def world_profiles(world: World, institution: str | None = None) -> list[Profile]:
    insts = world.institutions if institution is None else [world.institution(institution)]
    out: list[Profile] = []
    for inst in insts:
        out.extend(inst.customers)
        out.extend(inst.related_parties)
    return out


def resolve_world(world: World, institution: str | None = None) -> list[GroupAssignment]:
    """Resolve every profile in the world, or in one institution only."""
    return resolve(world_profiles(world, institution))
