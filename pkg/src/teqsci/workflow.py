"""End-to-end run: integrals -> initial states -> sampling -> selection -> subspace CI -> report.

Every stage persists its outputs in the run directory and the later stages
can be re-run from those files alone (``run(..., from_stage=...)``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import platform
import re
import sys
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy

from teqsci import __version__
from teqsci.determinants import from_bitstring, hartree_fock_determinant, remap_bits, sector_determinants, to_bitstring
from teqsci.fermion_qubit import PauliSum, embed_operator, jordan_wigner, orbital_placement, subtract
from teqsci.hamio import ActiveSpaceSpec, IntegralTable, centered_window, read_fcidump, restrict_active_space
from teqsci.oniom import (
    HARTREE_TO_EV,
    LayerEnergies,
    MethodRow,
    format_metrics,
    format_profile,
    load_sidecar,
    method_metrics,
    oniom_energy,
    relative_profile,
)
from teqsci.oracle import casci, determinant_energy, fidelity, s_squared
from teqsci.qsci import qsci_energies
from teqsci.selection import ConfigurationSet, histogram, merge, postselect
from teqsci.simulator import MAX_QUBITS, ShotBatch, build_trotter_plan, evolve, prepare_initial_state, sample

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

STAGES = ("hamiltonian", "initial_states", "sampling", "selection", "subspace", "histogram", "report")
BASELINES = ("initial-sector", "hf")
_STATE_RE = re.compile(r"^([STQ])(\d+)$")
_MULTIPLICITY = {"S": 0, "T": 1, "Q": 2}  # letter -> total spin S (singlet, triplet, quintet)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class RunConfig:
    fcidump_path: str
    full_active_space: ActiveSpaceSpec | None = None
    initial_active_space: ActiveSpaceSpec | None = None
    dt_grid: tuple[float, ...] = (1e-3, 2.5, 5.0, 7.5)
    shots_per_pair: int = 1500
    states: tuple[str, ...] = ("S0", "S1", "T0")
    trotter_steps: int = 2
    gate_budget: float = 500
    seed: int = 0
    baseline: str = "initial-sector"
    roots: int = 3
    oniom_sidecar_path: str | None = None
    oracle: bool = True
    augment: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("full_active_space", "initial_active_space"):
            spec = getattr(self, key)
            d[key] = None if spec is None else {
                "electrons": spec.n_active_electrons,
                "orbitals": list(spec.active_orbital_indices),
            }
        d["dt_grid"] = list(self.dt_grid)
        d["states"] = list(self.states)
        d["gate_budget"] = "inf" if math.isinf(self.gate_budget) else self.gate_budget
        return d

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> RunConfig:
        data = dict(data)
        kwargs = {}
        path = data.pop("fcidump_path", data.pop("fcidump", None))
        if path is None:
            raise ValueError("config lacks 'fcidump'")
        kwargs["fcidump_path"] = _resolve(path, base_dir)
        sidecar = data.pop("oniom_sidecar_path", data.pop("oniom_sidecar", None))
        if sidecar is not None:
            kwargs["oniom_sidecar_path"] = _resolve(sidecar, base_dir)
        for key in ("full_active_space", "initial_active_space"):
            spec = data.pop(key, None)
            if spec is not None:
                kwargs[key] = ActiveSpaceSpec(int(spec["electrons"]), tuple(spec["orbitals"]))
        if "dt_grid" in data:
            kwargs["dt_grid"] = tuple(float(x) for x in data.pop("dt_grid"))
        if "states" in data:
            kwargs["states"] = tuple(str(s) for s in data.pop("states"))
        if "gate_budget" in data:
            kwargs["gate_budget"] = float(data.pop("gate_budget"))
        for key in ("shots_per_pair", "trotter_steps", "seed", "roots"):
            if key in data:
                kwargs[key] = int(data.pop(key))
        for key in ("oracle", "augment"):
            if key in data:
                kwargs[key] = bool(data.pop(key))
        if "baseline" in data:
            kwargs["baseline"] = str(data.pop("baseline"))
        if data:
            raise ValueError(f"unknown config keys: {sorted(data)}")
        return cls(**kwargs)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _resolve(path: str, base_dir: Path | None) -> str:
    p = Path(path)
    if base_dir is not None and not p.is_absolute():
        p = base_dir / p
    return str(p)


def load_config(path: str | Path, **overrides) -> RunConfig:
    path = Path(path)
    with path.open("rb") as fh:
        data = tomllib.load(fh)
    cfg = RunConfig.from_dict(data, base_dir=path.parent)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides) if overrides else cfg


def parse_state_label(label: str) -> tuple[str, int] | int:
    """``"S1"`` -> ``("S", 1)``; a bare integer selects a root by energy order."""
    label = label.strip()
    if label.isdigit():
        return int(label)
    m = _STATE_RE.match(label)
    if not m:
        raise ValueError(f"state label {label!r} is neither an integer nor S<k>/T<k>/Q<k>")
    return m.group(1), int(m.group(2))


def spin_labels(s2_values: Sequence[float]) -> list[str]:
    """Label roots S0, S1, T0, ... by their nearest total spin, in energy order."""
    seen: dict[str, int] = {}
    labels = []
    letters = {v: k for k, v in _MULTIPLICITY.items()}
    for s2 in s2_values:
        spin = int(round((-1 + math.sqrt(1 + 4 * max(s2, 0.0))) / 2))
        letter = letters.get(spin, f"M{2 * spin + 1}_")
        labels.append(f"{letter}{seen.get(letter, 0)}")
        seen[letter] = seen.get(letter, 0) + 1
    return labels


def locate_states(labels: Sequence[str], wanted: Sequence[str]) -> dict[str, int] | None:
    out = {}
    for w in wanted:
        parsed = parse_state_label(w)
        if isinstance(parsed, int):
            if parsed >= len(labels):
                return None
            out[w] = parsed
        elif w in labels:
            out[w] = labels.index(w)
        else:
            return None
    return out


def solve_for_states(
    solver: Callable[[int], tuple[np.ndarray, np.ndarray, Sequence[int]]],
    dim: int,
    wanted: Sequence[str],
    n_orbitals: int,
    min_roots: int,
):
    """Grow the number of roots until every requested spin state appears.

    ``solver(k)`` returns ``(energies, vectors, basis)`` for ``k`` roots.
    """
    k = min(dim, max(min_roots, 2 * len(wanted)))
    while True:
        w, v, basis = solver(k)
        s2 = [s_squared(dict(zip(basis, v[:, r].tolist())), n_orbitals) for r in range(len(w))]
        labels = spin_labels(s2)
        found = locate_states(labels, wanted)
        if found is not None or k >= dim:
            if found is None:
                missing = [x for x in wanted if locate_states(labels, [x]) is None]
                raise ValueError(f"states {missing} not present among all {dim} roots")
            return w, v, s2, labels, found
        k = min(dim, 2 * k)


def pair_seed(seed: int, pair_index: int) -> int:
    """Independent 64-bit seed for the ``pair_index``-th (dt, state) circuit."""
    return int(np.random.SeedSequence([seed, pair_index]).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Spaces


@dataclass(frozen=True)
class Spaces:
    """Resolved active spaces and how the small register sits in the large one."""

    parent: IntegralTable
    full: ActiveSpaceSpec
    initial: ActiveSpaceSpec
    placement: tuple[int, ...]
    extra_occupied: tuple[int, ...]

    @property
    def n_qubits(self) -> int:
        return 2 * self.full.n_active_orbitals


def default_full_space(parent: IntegralTable) -> ActiveSpaceSpec:
    return ActiveSpaceSpec(parent.n_electrons, tuple(range(parent.n_orbitals)))


def nesting_problems(parent: IntegralTable, full: ActiveSpaceSpec, initial: ActiveSpaceSpec) -> list[str]:
    """Reasons why ``initial`` cannot seed a run in ``full`` (empty when nested)."""
    problems = []
    try:
        frozen_full = set(full.frozen_orbitals(parent.n_orbitals, parent.n_electrons))
        frozen_init = set(initial.frozen_orbitals(parent.n_orbitals, parent.n_electrons))
    except ValueError as exc:
        return [str(exc)]
    outside = set(initial.active_orbital_indices) - set(full.active_orbital_indices)
    if outside or initial.n_active_electrons > full.n_active_electrons:
        problems.append(
            f"initial space {initial.describe()} is not nested in full space {full.describe()}"
        )
    elif not frozen_full <= frozen_init or not (frozen_init - frozen_full) <= set(full.active_orbital_indices):
        problems.append(
            f"initial space {initial.describe()} freezes orbitals inconsistent with full space {full.describe()}"
        )
    return problems


def resolve_spaces(parent: IntegralTable, config: RunConfig) -> Spaces:
    full = config.full_active_space or default_full_space(parent)
    initial = config.initial_active_space or centered_window(
        full, max(full.n_active_electrons - 2, 0), max(full.n_active_orbitals - 2, 1)
    )
    problems = nesting_problems(parent, full, initial)
    if problems:
        raise ValueError("; ".join(problems))
    placement = orbital_placement(initial.active_orbital_indices, full.active_orbital_indices)
    frozen_full = set(full.frozen_orbitals(parent.n_orbitals, parent.n_electrons))
    frozen_init = initial.frozen_orbitals(parent.n_orbitals, parent.n_electrons)
    pos = {p: i for i, p in enumerate(full.active_orbital_indices)}
    extra = [2 * pos[p] + s for p in frozen_init if p not in frozen_full for s in (0, 1)]
    return Spaces(parent, full, initial, tuple(placement), tuple(sorted(extra)))


# ---------------------------------------------------------------------------
# Validation


def validate(config: RunConfig) -> list[str]:
    """All problems that would stop ``config`` from running; empty when runnable."""
    diags = []
    if not config.dt_grid:
        diags.append("dt_grid is empty")
    elif any(not (dt > 0) or not math.isfinite(dt) for dt in config.dt_grid):
        diags.append(f"dt_grid entries must be finite and > 0: {list(config.dt_grid)}")
    if config.shots_per_pair < 0:
        diags.append(f"shots_per_pair={config.shots_per_pair} is negative")
    if config.trotter_steps < 1:
        diags.append(f"trotter_steps={config.trotter_steps} must be >= 1")
    if config.gate_budget < 0:
        diags.append(f"gate_budget={config.gate_budget} is negative")
    if config.roots < 1:
        diags.append(f"roots={config.roots} must be >= 1")
    if config.baseline not in BASELINES:
        diags.append(f"baseline {config.baseline!r} is not one of {BASELINES}")
    if not config.states:
        diags.append("no states to sample")
    for s in config.states:
        try:
            parse_state_label(s)
        except ValueError as exc:
            diags.append(str(exc))
    if config.oniom_sidecar_path is not None and not Path(config.oniom_sidecar_path).is_file():
        diags.append(f"ONIOM sidecar {config.oniom_sidecar_path} not found")

    path = Path(config.fcidump_path)
    if not path.is_file():
        diags.append(f"FCIDUMP {path} not found")
        return diags
    try:
        parent = read_fcidump(path)
    except (OSError, ValueError) as exc:
        diags.append(f"FCIDUMP {path} unreadable: {exc}")
        return diags

    full = config.full_active_space or default_full_space(parent)
    for name, spec in (("full", full), ("initial", config.initial_active_space)):
        if spec is None:
            continue
        if spec.active_orbital_indices and spec.active_orbital_indices[-1] >= parent.n_orbitals:
            diags.append(f"{name} space {spec.describe()} exceeds the {parent.n_orbitals} parent orbitals")
        if spec.n_active_electrons > 2 * spec.n_active_orbitals:
            diags.append(f"{name} space {spec.describe()} holds more electrons than spin orbitals")
    if 2 * full.n_active_orbitals > MAX_QUBITS:
        diags.append(
            f"full space {full.describe()} needs {2 * full.n_active_orbitals} qubits, above the cap of {MAX_QUBITS}"
        )
    if not diags:
        try:
            resolve_spaces(parent, config)
        except ValueError as exc:
            diags.append(str(exc))
    return diags


# ---------------------------------------------------------------------------
# Artifact I/O


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False) + "\n"


def write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def shots_to_jsonl(batches: Sequence[ShotBatch], labels: Sequence[str]) -> str:
    lines = []
    for b in batches:
        for bits, count in b.outcomes:
            lines.append(json.dumps({"dt": b.dt, "j": b.j, "state": labels[b.j], "bitstring": bits, "count": count}))
    return "\n".join(lines) + ("\n" if lines else "")


def batches_from_files(jsonl: str, pairs: Sequence[dict]) -> list[ShotBatch]:
    outcomes: dict[tuple[float, int], list] = {(p["dt"], p["j"]): [] for p in pairs}
    for line in jsonl.splitlines():
        if line.strip():
            rec = json.loads(line)
            outcomes[(rec["dt"], rec["j"])].append((rec["bitstring"], rec["count"]))
    return [
        ShotBatch(tuple(sorted(outcomes[(p["dt"], p["j"])])), p["n_shots"], p["dt"], p["j"]) for p in pairs
    ]


# ---------------------------------------------------------------------------
# The run


class Run:
    """State of one workflow execution in ``outdir``."""

    def __init__(self, config: RunConfig, outdir: str | Path, dump_hamiltonian: bool = False):
        self.config = config
        self.outdir = Path(outdir)
        self.dump_hamiltonian = dump_hamiltonian
        self.data: dict = {}

    def path(self, name: str) -> Path:
        return self.outdir / name

    def write(self, name: str, text: str) -> None:
        write_atomic(self.path(name), text)
        self.data.setdefault("_artifacts", []).append(name)

    def read(self, name: str) -> str:
        return self.path(name).read_text()

    # -- shared in-memory objects -------------------------------------------

    @cached_property
    def spaces(self) -> Spaces:
        parent = read_fcidump(self.config.fcidump_path)
        return resolve_spaces(parent, self.config)

    @cached_property
    def table(self) -> IntegralTable:
        return restrict_active_space(self.spaces.parent, self.spaces.full)

    @cached_property
    def table0(self) -> IntegralTable:
        return restrict_active_space(self.spaces.parent, self.spaces.initial)

    @cached_property
    def baseline(self) -> ConfigurationSet:
        t, t0, sp_ = self.table, self.table0, self.spaces
        extra = sum(1 << q for q in sp_.extra_occupied)
        if self.config.baseline == "hf":
            dets = [hartree_fock_determinant(t.n_orbitals, t.n_electrons, t.ms2)]
        else:
            small = sector_determinants(t0.n_orbitals, t0.n_electrons, t0.ms2)
            dets = sorted((remap_bits(small, list(sp_.placement)) | extra).tolist())
        return ConfigurationSet.from_members(t.n_qubits, t.n_electrons, t.ms2, dets)

    @cached_property
    def reference(self):
        """Oracle CASCI of the full space with spin labels (only when enabled)."""
        t = self.table

        def solver(k):
            sol = casci(t, k)
            return sol.eigenvalues, sol.eigenvectors, sol.basis.tolist()

        dim = len(sector_determinants(t.n_orbitals, t.n_electrons, t.ms2))
        w, v, s2, labels, found = solve_for_states(solver, dim, self.config.states, t.n_orbitals, self.config.roots)
        basis = sector_determinants(t.n_orbitals, t.n_electrons, t.ms2).tolist()
        return {"energies": w, "vectors": v, "basis": basis, "s2": s2, "labels": labels, "found": found}

    def _subspace(self, configs: Sequence[int]):
        t = self.table

        def solver(k):
            res = qsci_energies(t, configs, k)
            return res.eigenvalues, res.eigenvectors, list(res.configurations)

        return solve_for_states(solver, len(configs), self.config.states, t.n_orbitals, self.config.roots)

    # -- stages ------------------------------------------------------------------

    def stage_hamiltonian(self, execute: bool):
        sp_, t, t0 = self.spaces, self.table, self.table0
        if not execute:
            return
        h = jordan_wigner(t)
        h0 = embed_operator(jordan_wigner(t0), sp_.placement, t.n_qubits)
        diff = subtract(h, h0)
        self.data["generator"] = diff
        summary = {
            "n_qubits": t.n_qubits,
            "full_space": {"electrons": sp_.full.n_active_electrons, "orbitals": list(sp_.full.active_orbital_indices)},
            "initial_space": {
                "electrons": sp_.initial.n_active_electrons,
                "orbitals": list(sp_.initial.active_orbital_indices),
            },
            "placement": list(sp_.placement),
            "extra_occupied": list(sp_.extra_occupied),
            "e_core": {"full": t.e_core, "initial": t0.e_core},
            "n_terms": {"H": len(h), "H0": len(h0), "H_minus_H0": len(diff)},
        }
        self.write("hamiltonian.json", _dumps(summary))
        if self.dump_hamiltonian:
            self.write(
                "hamiltonian_terms.json",
                _dumps({"H": json.loads(h.to_json()), "H0": json.loads(h0.to_json()), "H_minus_H0": json.loads(diff.to_json())}),
            )

    def generator(self) -> PauliSum:
        if "generator" not in self.data:
            t = self.table
            h0 = embed_operator(jordan_wigner(self.table0), self.spaces.placement, t.n_qubits)
            self.data["generator"] = subtract(jordan_wigner(t), h0)
        return self.data["generator"]

    def stage_initial_states(self, execute: bool):
        t0 = self.table0
        if not execute:
            data = json.loads(self.read("h0_eigenpairs.json"))
            self.data["initial_states"] = {
                s["request"]: ([from_bitstring(b) for b in s["bits"]], s["coeffs"]) for s in data["selected"]
            }
            return

        def solver(k):
            sol = casci(t0, k)
            return sol.eigenvalues, sol.eigenvectors, sol.basis.tolist()

        dim = len(sector_determinants(t0.n_orbitals, t0.n_electrons, t0.ms2))
        w, v, s2, labels, found = solve_for_states(solver, dim, self.config.states, t0.n_orbitals, self.config.roots)
        basis = sector_determinants(t0.n_orbitals, t0.n_electrons, t0.ms2).tolist()
        selected = []
        states = {}
        for req in self.config.states:
            r = found[req]
            coeffs = v[:, r].tolist()
            states[req] = (basis, coeffs)
            selected.append(
                {
                    "request": req,
                    "root": r,
                    "label": labels[r],
                    "energy": float(w[r]),
                    "bits": [to_bitstring(d, t0.n_qubits) for d in basis],
                    "coeffs": coeffs,
                }
            )
        self.data["initial_states"] = states
        roots = [{"energy": float(e), "s2": float(x), "label": l} for e, x, l in zip(w, s2, labels)]
        self.write("h0_eigenpairs.json", _dumps({"roots": roots, "selected": selected}))

    def stage_sampling(self, execute: bool):
        cfg = self.config
        if not execute:
            pairs = json.loads(self.read("sampling.json"))["pairs"]
            self.data["batches"] = batches_from_files(self.read("shots.jsonl"), pairs)
            return
        sp_ = self.spaces
        gen = self.generator()
        initial = {
            req: prepare_initial_state(dets, coeffs, sp_.placement, sp_.extra_occupied, sp_.n_qubits)
            for req, (dets, coeffs) in self.data["initial_states"].items()
        }
        batches, pairs = [], []
        k = 0
        for dt in cfg.dt_grid:
            plan = build_trotter_plan(gen, dt, cfg.trotter_steps, cfg.gate_budget)
            for j, req in enumerate(cfg.states):
                psi = evolve(initial[req], plan)
                batch = sample(psi, cfg.shots_per_pair, pair_seed(cfg.seed, k), dt=dt, j=j)
                batches.append(batch)
                pairs.append(
                    {
                        "dt": dt,
                        "j": j,
                        "state": req,
                        "n_shots": batch.n_shots,
                        "seed": pair_seed(cfg.seed, k),
                        "retained_terms": plan.n_retained,
                        "truncated_terms": sum(plan.truncated),
                        "two_qubit_gates_per_step": plan.gates_per_step,
                        "total_time": plan.total_time,
                    }
                )
                log.info("sampled dt=%g state=%s: %d distinct outcomes", dt, req, len(batch.outcomes))
                k += 1
        self.data["batches"] = batches
        self.write("shots.jsonl", shots_to_jsonl(batches, cfg.states))
        self.write("sampling.json", _dumps({"pairs": pairs}))

    def stage_selection(self, execute: bool):
        if not execute:
            self.data["configurations"] = ConfigurationSet.from_json(self.read("configurations.json"))
            return
        t = self.table
        base = self.baseline
        kept_all, stats = [], []
        for b in self.data["batches"]:
            kept, rejected = postselect(b, t.n_electrons, t.ms2, t.n_qubits)
            kept_all.append(kept)
            stats.append(
                {
                    "dt": b.dt,
                    "j": b.j,
                    "n_shots": b.n_shots,
                    "kept": b.n_shots - rejected,
                    "rejected": rejected,
                    "distinct_kept": len(kept),
                }
            )
        merged = merge(kept_all, base, augment=self.config.augment)
        sampled_new = {d for kept in kept_all for d, _ in kept if d not in base}
        summary = {
            "pairs": stats,
            "total_shots": sum(s["n_shots"] for s in stats),
            "total_kept": sum(s["kept"] for s in stats),
            "baseline_size": len(base),
            "new_sampled": len(sampled_new),
            "new_after_augmentation": len(merged) - len(base),
            "merged_size": len(merged),
        }
        self.data["configurations"] = merged
        self.write("postselection.json", _dumps(summary))
        self.write("configurations.json", merged.to_json() + "\n")

    def stage_subspace(self, execute: bool):
        configs = self.data["configurations"]
        if not execute:
            self.data["subspace"] = json.loads(self.read("subspace.json"))
            return
        t = self.table
        members = list(configs.members)
        w, v, s2, labels, found = self._subspace(members)
        states = {}
        for req in self.config.states:
            r = found[req]
            vec = v[:, r]
            top = np.argsort(-np.abs(vec), kind="stable")[:10]
            states[req] = {
                "root": r,
                "label": labels[r],
                "energy": float(w[r]),
                "top": [[to_bitstring(members[i], t.n_qubits), float(vec[i])] for i in top],
                "coeffs": vec.tolist(),
            }
        out = {
            "sector": {"n_electrons": t.n_electrons, "ms2": t.ms2},
            "dimension": len(members),
            "eigenvalues": [float(x) for x in w],
            "s2": [float(x) for x in s2],
            "labels": labels,
            "states": states,
        }
        self.data["subspace"] = out
        self.write("subspace.json", _dumps(out))

    def _reference_state(self, req: str) -> dict[int, float]:
        if self.config.oracle:
            ref = self.reference
            r = ref["found"][req]
            return dict(zip(ref["basis"], ref["vectors"][:, r].tolist()))
        coeffs = self.data["subspace"]["states"][req]["coeffs"]
        return dict(zip(self.data["configurations"].members, coeffs))

    def stage_histogram(self, execute: bool):
        if not execute:
            return
        batches = self.data.get("batches")
        if batches is None:
            pairs = json.loads(self.read("sampling.json"))["pairs"]
            batches = batches_from_files(self.read("shots.jsonl"), pairs)
        for j, req in enumerate(self.config.states):
            hist = histogram([b for b in batches if b.j == j], self.baseline, self._reference_state(req))
            self.write(f"histogram_{req}.csv", hist.to_csv())

    def stage_report(self, execute: bool):
        if not execute:
            return
        cfg, t, sub = self.config, self.table, self.data["subspace"]
        configs = self.data["configurations"]
        hf_det = hartree_fock_determinant(t.n_orbitals, t.n_electrons, t.ms2)
        e_hf = determinant_energy(t, hf_det)

        full_tag = f"({t.n_electrons},{t.n_orbitals})"
        init_tag = f"({self.table0.n_electrons},{self.table0.n_orbitals})"
        base_name = f"CASCI{init_tag}" if cfg.baseline == "initial-sector" else "HF-baseline"
        bw, bv, _, _, bfound = self._subspace(list(self.baseline.members))
        base_states = {req: dict(zip(self.baseline.members, bv[:, bfound[req]].tolist())) for req in cfg.states}
        te_states = {req: dict(zip(configs.members, sub["states"][req]["coeffs"])) for req in cfg.states}

        rows = {
            "HF": MethodRow("HF", {"S0": e_hf} if "S0" in cfg.states else {}),
            base_name: MethodRow(base_name, {req: float(bw[bfound[req]]) for req in cfg.states}),
            f"TE-QSCI{full_tag}": MethodRow(
                f"TE-QSCI{full_tag}", {req: sub["states"][req]["energy"] for req in cfg.states}
            ),
        }
        if cfg.oracle:
            ref = self.reference
            rows[f"CASCI{full_tag}"] = MethodRow(
                f"CASCI{full_tag}", {req: float(ref["energies"][ref["found"][req]]) for req in cfg.states}
            )
            exact = {req: self._reference_state(req) for req in cfg.states}
            fid = {
                "HF": {"S0": fidelity({hf_det: 1.0}, exact["S0"])} if "S0" in exact else {},
                base_name: {req: fidelity(base_states[req], exact[req]) for req in cfg.states},
                f"TE-QSCI{full_tag}": {req: fidelity(te_states[req], exact[req]) for req in cfg.states},
                f"CASCI{full_tag}": {req: 1.0 for req in cfg.states},
            }
            rows = {k: replace(r, fidelities=fid[k]) for k, r in rows.items()}

        post = json.loads(self.read("postselection.json")) if self.path("postselection.json").exists() else None
        report = {
            "e_hf": e_hf,
            "methods": [
                {"energies": dict(r.energies), **method_metrics(r, e_hf)} for r in rows.values()
            ],
            "sizes": {
                "baseline": len(self.baseline),
                "merged": len(configs),
                "sampled_only": configs.count("sampled"),
                "augmented_only": configs.count("spin-augmented", only=True),
                "new_sampled": None if post is None else post["new_sampled"],
                "new_after_augmentation": len(configs) - len(self.baseline),
            },
        }
        self.write("metrics.csv", format_metrics(list(rows.values()), e_hf))

        if cfg.oniom_sidecar_path:
            layers = []
            for layer in load_sidecar(cfg.oniom_sidecar_path):
                if layer.e_high_model is None:
                    state = layer.state or "S0"
                    if state not in sub["states"]:
                        raise ValueError(f"layer {layer.label!r} asks for state {state!r}, which was not computed")
                    layer = layer.with_high(sub["states"][state]["energy"], "qsci")
                layers.append(layer)
            ref_label = layers[0].label
            report["oniom"] = {
                "reference": ref_label,
                "layers": [
                    {
                        "label": l.label,
                        "e_oniom": oniom_energy(l),
                        "delta_e_ev": de,
                        "provenance": dict(l.provenance),
                    }
                    for l, (_, de) in zip(layers, relative_profile(layers, ref_label))
                ],
            }
            self.write("oniom.csv", format_profile(layers, ref_label))
        self.write("report.json", _dumps(report))

    def manifest(self) -> dict:
        names = sorted(set(self.data.get("_artifacts", [])) | {p.name for p in self.outdir.iterdir() if p.is_file()})
        names = [n for n in names if n not in ("manifest.json",) and not n.endswith(".tmp")]
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "versions": {
                "teqsci": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "stages": list(STAGES),
            "artifacts": {n: _sha256(self.path(n)) for n in names},
        }

    def execute(self, from_stage: str = STAGES[0]) -> Path:
        if from_stage not in STAGES:
            raise ValueError(f"unknown stage {from_stage!r}; choose from {STAGES}")
        self.outdir.mkdir(parents=True, exist_ok=True)
        start = STAGES.index(from_stage)
        write_atomic(self.path("run_config.json"), _dumps(self.config.to_dict()))
        for i, stage in enumerate(STAGES):
            try:
                getattr(self, f"stage_{stage}")(execute=i >= start)
            except Exception as exc:
                raise StageError(stage, exc) from exc
        write_atomic(self.path("manifest.json"), _dumps(self.manifest()))
        return self.outdir


def run(config: RunConfig, outdir: str | Path, from_stage: str = STAGES[0], dump_hamiltonian: bool = False) -> Path:
    """Execute the workflow and return the run directory."""
    diags = validate(config)
    if diags:
        raise StageError("validate", ValueError("; ".join(diags)))
    return Run(config, outdir, dump_hamiltonian).execute(from_stage)


def config_from_run_dir(outdir: str | Path) -> RunConfig:
    return RunConfig.from_dict(json.loads((Path(outdir) / "run_config.json").read_text()))
