"""AS business relationships and the policies derived from them.

Relationship files use the CAIDA serial-1 layout ``as1|as2|rel`` where
``rel`` is -1 when as1 is a provider of as2 and 0 for peers.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable


class RelationshipError(Exception):
    pass


class AsRelation(str, Enum):
    """Relation of the first AS of an ordered pair to the second."""

    CUSTOMER_OF = "customer_of"
    PROVIDER_OF = "provider_of"
    PEER = "peer"


class Rel(str, Enum):
    """Role of the neighbor a route was learned from (or is exported to)."""

    CUSTOMER = "customer"
    PEER = "peer"
    PROVIDER = "provider"
    ORIGIN = "origin"


_INVERSE = {
    AsRelation.CUSTOMER_OF: AsRelation.PROVIDER_OF,
    AsRelation.PROVIDER_OF: AsRelation.CUSTOMER_OF,
    AsRelation.PEER: AsRelation.PEER,
}
# relation(neighbor, me) -> what the neighbor is to me
_ROLE = {
    AsRelation.CUSTOMER_OF: Rel.CUSTOMER,
    AsRelation.PROVIDER_OF: Rel.PROVIDER,
    AsRelation.PEER: Rel.PEER,
}


class AsRelationshipDb:
    def __init__(self, relations: dict[tuple[int, int], AsRelation] | None = None):
        self._rel: dict[tuple[int, int], AsRelation] = {}
        for (a, b), rel in (relations or {}).items():
            self._add(a, b, rel)

    def _add(self, a: int, b: int, rel: AsRelation, where: str = "") -> None:
        if a == b:
            raise RelationshipError(f"{where}self-relation for AS{a}")
        existing = self._rel.get((a, b))
        if existing is not None and existing is not rel:
            raise RelationshipError(
                f"{where}conflicting relation for AS{a}-AS{b}: {existing.value} vs {rel.value}"
            )
        self._rel[(a, b)] = rel
        self._rel[(b, a)] = _INVERSE[rel]

    def relation(self, a: int, b: int) -> AsRelation | None:
        return self._rel.get((a, b))

    def role(self, me: int, neighbor: int) -> Rel | None:
        """What ``neighbor`` is to ``me``, or None when the pair is unknown."""
        rel = self._rel.get((neighbor, me))
        return None if rel is None else _ROLE[rel]

    def role_or_peer(self, me: int, neighbor: int) -> Rel:
        return self.role(me, neighbor) or Rel.PEER

    def pairs(self) -> list[tuple[int, int, AsRelation]]:
        """One canonical entry per unordered pair (provider first for p2c, lower ASN first for p2p)."""
        out = []
        for (a, b), rel in self._rel.items():
            if rel is AsRelation.PROVIDER_OF or (rel is AsRelation.PEER and a < b):
                out.append((a, b, rel))
        return sorted(out)

    def __len__(self) -> int:
        return len(self._rel) // 2

    def __eq__(self, other: object) -> bool:
        return isinstance(other, AsRelationshipDb) and self._rel == other._rel


def parse_as_rel(path) -> AsRelationshipDb:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise RelationshipError(f"missing file: {path}") from None
    except OSError as exc:
        raise RelationshipError(f"unreadable file {path}: {exc}") from exc
    return parse_as_rel_lines(text.splitlines(), source=str(path))


def parse_as_rel_lines(lines: Iterable[str], source: str = "<lines>") -> AsRelationshipDb:
    db = AsRelationshipDb()
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{source}:{lineno}: "
        parts = line.split("|")
        try:
            a, b, code = int(parts[0]), int(parts[1]), int(parts[2])
        except (ValueError, IndexError):
            raise RelationshipError(f"{where}malformed line {line!r}") from None
        if a <= 0 or b <= 0:
            raise RelationshipError(f"{where}invalid ASN in {line!r}")
        if code == -1:
            db._add(a, b, AsRelation.PROVIDER_OF, where)
        elif code == 0:
            db._add(a, b, AsRelation.PEER, where)
        else:
            raise RelationshipError(f"{where}unknown relationship code {code}")
    return db


def format_as_rel(db: AsRelationshipDb) -> str:
    lines = ["# as1|as2|rel  (-1: as1 provider of as2, 0: peers)"]
    for a, b, rel in db.pairs():
        lines.append(f"{a}|{b}|{-1 if rel is AsRelation.PROVIDER_OF else 0}")
    return "\n".join(lines) + "\n"


def write_as_rel(db: AsRelationshipDb, path) -> None:
    Path(path).write_text(format_as_rel(db), encoding="utf-8")


def export_allowed(learned_from: Rel, export_to: Rel) -> bool:
    """Gao-Rexford export rule: customer and own routes go everywhere, the rest only to customers."""
    if export_to is Rel.ORIGIN:
        raise ValueError("cannot export to the origin role")
    return learned_from in (Rel.CUSTOMER, Rel.ORIGIN) or export_to is Rel.CUSTOMER


class PrefMode(str, Enum):
    GAO_REXFORD = "gao_rexford"
    NEUTRALIZED = "neutralized"


@dataclass(frozen=True)
class LocalPrefPolicy:
    mode: PrefMode = PrefMode.GAO_REXFORD
    customer_pref: int = 200
    peer_pref: int = 100
    provider_pref: int = 50

    def __post_init__(self):
        if self.mode is PrefMode.GAO_REXFORD:
            if not self.customer_pref > self.peer_pref > self.provider_pref:
                raise ValueError("Gao-Rexford preferences must satisfy customer > peer > provider")
        elif not self.customer_pref == self.peer_pref == self.provider_pref:
            raise ValueError("neutralized preferences must all be equal")

    @classmethod
    def gao_rexford(cls, customer: int = 200, peer: int = 100, provider: int = 50) -> "LocalPrefPolicy":
        return cls(PrefMode.GAO_REXFORD, customer, peer, provider)

    @classmethod
    def neutralized(cls, value: int = 100) -> "LocalPrefPolicy":
        return cls(PrefMode.NEUTRALIZED, value, value, value)


def local_pref(learned_from: Rel, policy: LocalPrefPolicy) -> int:
    if learned_from in (Rel.CUSTOMER, Rel.ORIGIN):
        return policy.customer_pref
    if learned_from is Rel.PEER:
        return policy.peer_pref
    return policy.provider_pref
