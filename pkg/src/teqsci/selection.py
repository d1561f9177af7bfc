"""From raw shots to a configuration set: filtering, spin completion, merging."""

from __future__ import annotations

import io
import itertools
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

from teqsci.determinants import from_bitstring, in_sector, to_bitstring
from teqsci.simulator import ShotBatch

BASELINE = "baseline"
SAMPLED = "sampled"
AUGMENTED = "spin-augmented"
_TAG_ORDER = (BASELINE, SAMPLED, AUGMENTED)


@dataclass(frozen=True)
class ConfigurationSet:
    """Ordered, duplicate-free determinants of one (N, ms2) sector.

    ``tags[i]`` records how ``members[i]`` entered the set.
    """

    n_qubits: int
    n_electrons: int
    ms2: int
    members: tuple[int, ...] = ()
    tags: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        if len(self.members) != len(self.tags):
            raise ValueError("members and tags differ in length")
        if len(set(self.members)) != len(self.members):
            raise ValueError("duplicate members")
        for d in self.members:
            if d >= 1 << self.n_qubits or not in_sector(d, self.n_electrons, self.ms2):
                raise ValueError(
                    f"{to_bitstring(d, self.n_qubits)} is outside the sector "
                    f"(N={self.n_electrons}, ms2={self.ms2}) on {self.n_qubits} qubits"
                )

    @classmethod
    def from_members(cls, n_qubits: int, n_electrons: int, ms2: int, dets: Iterable[int], tag: str = BASELINE):
        members = tuple(dict.fromkeys(int(d) for d in dets))
        return cls(n_qubits, n_electrons, ms2, members, tuple((tag,) for _ in members))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, det) -> bool:
        return det in self._lookup

    @property
    def _lookup(self) -> frozenset:
        cached = self.__dict__.get("_lookup_cache")
        if cached is None:
            cached = frozenset(self.members)
            object.__setattr__(self, "_lookup_cache", cached)
        return cached

    def count(self, tag: str, only: bool = False) -> int:
        """Members carrying ``tag`` (or carrying nothing else, with ``only``)."""
        if only:
            return sum(1 for t in self.tags if t == (tag,))
        return sum(1 for t in self.tags if tag in t)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_qubits": self.n_qubits,
                "n_electrons": self.n_electrons,
                "ms2": self.ms2,
                "members": [
                    {"bits": to_bitstring(d, self.n_qubits), "tags": list(t)} for d, t in zip(self.members, self.tags)
                ],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> ConfigurationSet:
        data = json.loads(text)
        return cls(
            data["n_qubits"],
            data["n_electrons"],
            data["ms2"],
            tuple(from_bitstring(m["bits"]) for m in data["members"]),
            tuple(tuple(m["tags"]) for m in data["members"]),
        )


def postselect(
    batch: ShotBatch, n_electrons: int, ms2: int, n_qubits: int | None = None
) -> tuple[list[tuple[int, int]], int]:
    """Keep outcomes with the right particle number and Sz.

    Returns ``(kept, rejected_count)`` where ``kept`` lists
    ``(determinant, multiplicity)`` in batch order.
    """
    kept = []
    rejected = 0
    for bits, count in batch.outcomes:
        if n_qubits is not None and len(bits) != n_qubits:
            raise ValueError(f"outcome {bits!r} has width {len(bits)}, expected {n_qubits}")
        det = from_bitstring(bits)
        if in_sector(det, n_electrons, ms2):
            kept.append((det, count))
        else:
            rejected += count
    return kept, rejected


def spin_augment(det: int) -> tuple[int, ...]:
    """Every determinant with ``det``'s spatial occupations and Sz.

    Singly occupied orbitals take all Sz-preserving spin assignments, so
    two open shells give the up-down and down-up pair.  Sorted ascending;
    includes ``det``.
    """
    doubles = 0
    singles = []
    n_up = 0
    p = 0
    while det >> (2 * p):
        a, b = (det >> (2 * p)) & 1, (det >> (2 * p + 1)) & 1
        if a and b:
            doubles |= 3 << (2 * p)
        elif a or b:
            singles.append(p)
            n_up += a
        p += 1
    out = []
    for ups in itertools.combinations(singles, n_up):
        d = doubles
        for q in singles:
            d |= 1 << (2 * q + (0 if q in ups else 1))
        out.append(d)
    return tuple(sorted(out))


def merge(
    batches: Sequence[Sequence[tuple[int, int]]],
    baseline: ConfigurationSet,
    augment: bool = True,
) -> ConfigurationSet:
    """Union of the baseline, every kept outcome, and (optionally) their spin partners.

    Order: baseline members first, then new determinants by first
    appearance.  Sector membership is checked again for every addition.
    """
    tags: dict[int, set[str]] = {d: set(t) for d, t in zip(baseline.members, baseline.tags)}

    def add(det: int, tag: str):
        if not in_sector(det, baseline.n_electrons, baseline.ms2) or det >= 1 << baseline.n_qubits:
            raise ValueError(f"{to_bitstring(det, baseline.n_qubits)} violates the sector constraints")
        tags.setdefault(det, set()).add(tag)

    for kept in batches:
        for det, _ in kept:
            add(det, SAMPLED)
            if augment:
                for partner in spin_augment(det):
                    if partner != det:
                        add(partner, AUGMENTED)
    members = tuple(tags)
    ordered = tuple(tuple(t for t in _TAG_ORDER if t in tags[d]) for d in members)
    return ConfigurationSet(baseline.n_qubits, baseline.n_electrons, baseline.ms2, members, ordered)


@dataclass(frozen=True)
class Histogram:
    """Per-configuration measured probability, one column per time step."""

    n_qubits: int
    dts: tuple[float, ...]
    rows: tuple[tuple[int, float, bool, tuple[float, ...]], ...]

    def column_sums(self) -> tuple[float, ...]:
        return tuple(sum(r[3][k] for r in self.rows) for k in range(len(self.dts)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(["config_bits", "reference_weight", "is_baseline"] + [f"p_dt_{dt!r}" for dt in self.dts]))
        buf.write("\n")
        for det, weight, is_base, probs in self.rows:
            fields = [to_bitstring(det, self.n_qubits), repr(weight), "1" if is_base else "0"] + [repr(p) for p in probs]
            buf.write(",".join(fields) + "\n")
        return buf.getvalue()


def histogram(
    batches: Sequence[ShotBatch],
    baseline: ConfigurationSet,
    reference: Mapping[int, float],
    min_weight: float = 1e-10,
) -> Histogram:
    """Measured probabilities of post-selected outcomes against a reference state.

    ``p`` is the kept count over all shots of that time step, so each
    column sums to the post-selection survival fraction.  Rows are the
    union of measured configurations and reference configurations with
    weight above ``min_weight``, ordered by descending reference weight.
    """
    dts = tuple(sorted({b.dt for b in batches}))
    counts = {dt: {} for dt in dts}
    shots = dict.fromkeys(dts, 0)
    for b in batches:
        kept, _ = postselect(b, baseline.n_electrons, baseline.ms2, baseline.n_qubits)
        shots[b.dt] += b.n_shots
        for det, c in kept:
            counts[b.dt][det] = counts[b.dt].get(det, 0) + c
    weights = {d: abs(c) ** 2 for d, c in reference.items()}
    dets = {d for d, w in weights.items() if w > min_weight}
    for dt in dts:
        dets.update(counts[dt])
    ordered = sorted(dets, key=lambda d: (-weights.get(d, 0.0), to_bitstring(d, baseline.n_qubits)))
    rows = tuple(
        (
            d,
            float(weights.get(d, 0.0)),
            d in baseline,
            tuple(counts[dt].get(d, 0) / shots[dt] if shots[dt] else 0.0 for dt in dts),
        )
        for d in ordered
    )
    return Histogram(baseline.n_qubits, dts, rows)
