"""FCIDUMP ingestion and active-space reduction of molecular integrals."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SYMMETRY_TOL = 1e-12
CONFLICT_TOL = 1e-12


class FcidumpError(ValueError):
    """Raised for malformed or inconsistent FCIDUMP input."""


class ActiveSpaceError(ValueError):
    """Raised when an active-space selection is infeasible for its parent."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class IntegralTable:
    """Real-orbital Hamiltonian integrals over ``n_orbitals`` spatial orbitals.

    ``h2[p, q, r, s]`` is the chemists'-notation integral ``(pq|rs)``.
    Energies are in hartree.
    """

    n_orbitals: int
    n_electrons: int
    ms2: int
    e_core: float
    h1: np.ndarray
    h2: np.ndarray

    def __post_init__(self):
        m = self.n_orbitals
        object.__setattr__(self, "h1", _readonly(self.h1))
        object.__setattr__(self, "h2", _readonly(self.h2))
        object.__setattr__(self, "e_core", float(self.e_core))
        if self.h1.shape != (m, m) or self.h2.shape != (m, m, m, m):
            raise ValueError(f"integral shapes {self.h1.shape}, {self.h2.shape} do not match n_orbitals={m}")
        if self.n_electrons < 0 or self.n_electrons > 2 * m:
            raise ValueError(f"n_electrons={self.n_electrons} outside [0, {2 * m}]")
        if (self.n_electrons + self.ms2) % 2 or abs(self.ms2) > self.n_electrons:
            raise ValueError(f"ms2={self.ms2} incompatible with n_electrons={self.n_electrons}")
        if abs(self.ms2) > 2 * m - self.n_electrons:
            raise ValueError(f"ms2={self.ms2} cannot be realised in {m} orbitals")
        if not np.allclose(self.h1, self.h1.T, rtol=0, atol=SYMMETRY_TOL):
            raise ValueError("h1 is not symmetric")
        g = self.h2
        for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if not np.allclose(g, g.transpose(perm), rtol=0, atol=SYMMETRY_TOL):
                raise ValueError(f"h2 breaks permutational symmetry {perm}")

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_orbitals

    def equals(self, other: IntegralTable, atol: float = 0.0) -> bool:
        return (
            self.n_orbitals == other.n_orbitals
            and self.n_electrons == other.n_electrons
            and self.ms2 == other.ms2
            and abs(self.e_core - other.e_core) <= atol
            and np.allclose(self.h1, other.h1, rtol=0, atol=atol)
            and np.allclose(self.h2, other.h2, rtol=0, atol=atol)
        )


@dataclass(frozen=True)
class ActiveSpaceSpec:
    """Electrons and (parent-indexed) spatial orbitals forming an active space."""

    n_active_electrons: int
    active_orbital_indices: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.active_orbital_indices)
        object.__setattr__(self, "active_orbital_indices", idx)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ActiveSpaceError(f"active orbital indices must be strictly increasing: {idx}")
        if idx and idx[0] < 0:
            raise ActiveSpaceError(f"negative orbital index in {idx}")
        if self.n_active_electrons < 0:
            raise ActiveSpaceError("negative active electron count")

    @property
    def n_active_orbitals(self) -> int:
        return len(self.active_orbital_indices)

    def frozen_orbitals(self, parent_orbitals: int, parent_electrons: int) -> tuple[int, ...]:
        """Lowest non-active orbitals that hold the removed electrons doubly."""
        removed = parent_electrons - self.n_active_electrons
        if removed < 0:
            raise ActiveSpaceError(
                f"{self.n_active_electrons} active electrons exceed the parent's {parent_electrons}"
            )
        if removed % 2:
            raise ActiveSpaceError(f"{removed} removed electrons cannot doubly occupy frozen orbitals")
        inactive = [p for p in range(parent_orbitals) if p not in set(self.active_orbital_indices)]
        if removed // 2 > len(inactive):
            raise ActiveSpaceError(f"{removed} removed electrons need more than {len(inactive)} inactive orbitals")
        return tuple(inactive[: removed // 2])

    def describe(self) -> str:
        return f"({self.n_active_electrons}e, orbitals {list(self.active_orbital_indices)})"


# ---------------------------------------------------------------------------
# FCIDUMP

_HEADER_END = re.compile(r"&END|/", re.IGNORECASE)


def _parse_namelist(header: str) -> dict[str, list[str]]:
    body = re.sub(r"^\s*&FCI", "", header, flags=re.IGNORECASE)
    values: dict[str, list[str]] = {}
    key = None
    for tok in re.split(r"[,\s]+", body):
        if not tok:
            continue
        if "=" in tok:
            key, _, rest = tok.partition("=")
            key = key.strip().upper()
            values[key] = [rest] if rest else []
        elif key is not None:
            values[key].append(tok)
        else:
            raise FcidumpError(f"unexpected token {tok!r} in FCIDUMP header")
    return values


def _header_int(values: dict[str, list[str]], key: str, default: int | None = None) -> int:
    if key not in values or not values[key]:
        if default is None:
            raise FcidumpError(f"FCIDUMP header lacks {key}")
        return default
    try:
        return int(values[key][0])
    except ValueError as exc:
        raise FcidumpError(f"FCIDUMP header {key}={values[key][0]!r} is not an integer") from exc


def _to_float(tok: str) -> float:
    if tok.startswith("("):
        raise FcidumpError(f"complex integral {tok!r} is not supported (orbitals must be real)")
    try:
        return float(tok.replace("D", "E").replace("d", "e"))
    except ValueError as exc:
        raise FcidumpError(f"integral value {tok!r} is not a number") from exc


def parse_fcidump(text: str) -> IntegralTable:
    """Parse Molpro-style FCIDUMP text into an :class:`IntegralTable`.

    Point-group labels (``ORBSYM``, ``ISYM``) are read but ignored.
    """
    m_end = _HEADER_END.search(text)
    if not re.match(r"\s*&FCI", text, re.IGNORECASE) or m_end is None:
        raise FcidumpError("missing '&FCI ... &END' namelist header")
    header = _parse_namelist(text[: m_end.start()])
    norb = _header_int(header, "NORB")
    nelec = _header_int(header, "NELEC")
    ms2 = _header_int(header, "MS2", 0)
    if header.get("UHF") and header["UHF"][0].strip(".").upper() in ("T", "TRUE", "1"):
        raise FcidumpError("UHF FCIDUMP files are not supported")
    if norb <= 0:
        raise FcidumpError(f"NORB={norb} must be positive")

    h1 = np.zeros((norb, norb))
    h2 = np.zeros((norb, norb, norb, norb))
    seen1: dict[tuple[int, int], float] = {}
    seen2: dict[tuple[int, int, int, int], float] = {}
    e_core: float | None = None

    for lineno, line in enumerate(text[m_end.end():].splitlines(), start=1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != 5:
            raise FcidumpError(f"integral record {lineno}: expected 5 fields, got {len(toks)}: {line!r}")
        value = _to_float(toks[0])
        try:
            i, j, k, l = (int(t) for t in toks[1:])
        except ValueError as exc:
            raise FcidumpError(f"integral record {lineno}: non-integer index in {line!r}") from exc
        if any(x < 0 or x > norb for x in (i, j, k, l)):
            raise FcidumpError(f"integral record {lineno}: index out of range 0..{norb} in {line!r}")
        if i == j == k == l == 0:
            if e_core is not None and abs(e_core - value) > CONFLICT_TOL:
                raise FcidumpError(f"conflicting core energies {e_core!r} and {value!r}")
            e_core = value
        elif k == l == 0 and i > 0 and j > 0:
            key = (max(i, j) - 1, min(i, j) - 1)
            if key in seen1 and abs(seen1[key] - value) > CONFLICT_TOL:
                raise FcidumpError(f"conflicting one-electron integral h[{i},{j}]: {seen1[key]!r} vs {value!r}")
            seen1[key] = value
            h1[i - 1, j - 1] = h1[j - 1, i - 1] = value
        elif i > 0 and j > 0 and k > 0 and l > 0:
            p, q, r, s = i - 1, j - 1, k - 1, l - 1
            pq, rs = (max(p, q), min(p, q)), (max(r, s), min(r, s))
            key = max(pq, rs) + min(pq, rs)
            if key in seen2 and abs(seen2[key] - value) > CONFLICT_TOL:
                raise FcidumpError(
                    f"conflicting two-electron integral ({i}{j}|{k}{l}): {seen2[key]!r} vs {value!r}"
                )
            seen2[key] = value
            for a, b, c, d in ((p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r)):
                h2[a, b, c, d] = h2[c, d, a, b] = value
        elif i > 0 and j == k == l == 0:
            continue  # orbital energy record
        else:
            raise FcidumpError(f"integral record {lineno}: unrecognised index pattern in {line!r}")

    try:
        return IntegralTable(norb, nelec, ms2, 0.0 if e_core is None else e_core, h1, h2)
    except ValueError as exc:
        raise FcidumpError(str(exc)) from exc


def read_fcidump(path: str | Path) -> IntegralTable:
    return parse_fcidump(Path(path).read_text())


def write_fcidump(table: IntegralTable) -> str:
    """Serialize ``table``; values are printed with enough digits to round-trip."""
    m = table.n_orbitals
    lines = [
        f"&FCI NORB={m},NELEC={table.n_electrons},MS2={table.ms2},",
        " ORBSYM=" + ",".join("1" for _ in range(m)) + ",",
        " ISYM=1,",
        "&END",
    ]
    for p in range(m):
        for q in range(p + 1):
            for r in range(m):
                for s in range(r + 1):
                    if p * (p + 1) // 2 + q < r * (r + 1) // 2 + s:
                        continue
                    v = table.h2[p, q, r, s]
                    if v != 0.0:
                        lines.append(f"{float(v)!r} {p + 1} {q + 1} {r + 1} {s + 1}")
    for p in range(m):
        for q in range(p + 1):
            v = table.h1[p, q]
            if v != 0.0:
                lines.append(f"{float(v)!r} {p + 1} {q + 1} 0 0")
    lines.append(f"{table.e_core!r} 0 0 0 0")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Active spaces


def restrict_active_space(parent: IntegralTable, spec: ActiveSpaceSpec) -> IntegralTable:
    """Integrals of an active space with the frozen core folded in.

    Frozen (doubly occupied) orbitals contribute their inactive-Fock
    potential to ``h1`` and their energy to ``e_core``; orbitals that are
    neither active nor frozen are dropped.
    """
    act = list(spec.active_orbital_indices)
    if act and act[-1] >= parent.n_orbitals:
        raise ActiveSpaceError(f"active orbital {act[-1]} out of range for {parent.n_orbitals} orbitals")
    n_act = len(act)
    if spec.n_active_electrons > 2 * n_act:
        raise ActiveSpaceError(f"{spec.n_active_electrons} electrons do not fit in {n_act} orbitals")
    if abs(parent.ms2) > min(spec.n_active_electrons, 2 * n_act - spec.n_active_electrons):
        raise ActiveSpaceError(f"ms2={parent.ms2} cannot be realised in the active space {spec.describe()}")
    frozen = list(spec.frozen_orbitals(parent.n_orbitals, parent.n_electrons))

    h1, g = parent.h1, parent.h2
    e_core = parent.e_core
    fock = h1.copy()
    if frozen:
        f = np.array(frozen)
        e_core += 2.0 * h1[f, f].sum()
        e_core += 2.0 * np.einsum("iijj->", g[np.ix_(f, f, f, f)]) - np.einsum("ijji->", g[np.ix_(f, f, f, f)])
        fock = h1 + 2.0 * np.einsum("pqii->pq", g[:, :, f][:, :, :, f]) - np.einsum("piiq->pq", g[:, f][:, :, f])
    a = np.array(act, dtype=int)
    h1_act = fock[np.ix_(a, a)]
    h1_act = 0.5 * (h1_act + h1_act.T)
    h2_act = g[np.ix_(a, a, a, a)]
    return IntegralTable(n_act, spec.n_active_electrons, parent.ms2, e_core, h1_act, h2_act)


def centered_window(
    full: ActiveSpaceSpec, n_electrons: int, n_orbitals: int
) -> ActiveSpaceSpec:
    """A smaller space inside ``full`` centred on its HOMO/LUMO gap.

    The electrons taken out of ``full`` doubly occupy its lowest orbitals,
    so the window starts right above them.
    """
    removed = full.n_active_electrons - n_electrons
    if removed < 0 or removed % 2:
        raise ActiveSpaceError(f"cannot take a {n_electrons}-electron window from {full.describe()}")
    start = removed // 2
    orbs = full.active_orbital_indices[start : start + n_orbitals]
    if len(orbs) != n_orbitals:
        raise ActiveSpaceError(f"a ({n_electrons},{n_orbitals}) window does not fit in {full.describe()}")
    return ActiveSpaceSpec(n_electrons, orbs)


def random_integral_table(
    n_orbitals: int,
    n_electrons: int,
    ms2: int = 0,
    seed: int = 0,
    coupling: float = 0.1,
) -> IntegralTable:
    """Synthetic table with molecule-like structure for testing.

    ``h1`` has ascending diagonal "orbital energies" plus a small symmetric
    perturbation; ``h2`` is a sum of squares of symmetric matrices, which
    makes it positive semidefinite and 8-fold symmetric by construction.
    """
    rng = np.random.default_rng(seed)
    m = n_orbitals
    off = rng.normal(scale=coupling, size=(m, m))
    h1 = np.diag(np.linspace(-2.0, 0.5, m)) + 0.5 * (off + off.T)
    h2 = np.zeros((m, m, m, m))
    for _ in range(m + 1):
        b = rng.normal(scale=0.25, size=(m, m))
        b = 0.5 * (b + b.T) + np.diag(np.full(m, 0.3))
        h2 += np.einsum("pq,rs->pqrs", b, b)
    e_core = float(rng.uniform(0.5, 2.0))
    return IntegralTable(m, n_electrons, ms2, e_core, h1, h2)
