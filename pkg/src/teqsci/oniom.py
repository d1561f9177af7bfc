"""Two-layer subtractive energies and the relative-energy / metrics reports."""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

HARTREE_TO_EV = 27.211386245988


@dataclass(frozen=True)
class LayerEnergies:
    """Energies (hartree) entering one ONIOM total, tagged by geometry/state."""

    label: str
    e_low_real: float
    e_low_model: float
    e_high_model: float | None = None
    provenance: Mapping[str, str] = field(default_factory=dict)

    @property
    def state(self) -> str | None:
        """State tag after the last ``/`` of the label (``"TS*/S1"`` -> ``"S1"``)."""
        return self.label.rsplit("/", 1)[1] if "/" in self.label else None

    def with_high(self, energy: float, source: str) -> LayerEnergies:
        prov = dict(self.provenance)
        prov["e_high_model"] = source
        return replace(self, e_high_model=float(energy), provenance=prov)


def oniom_energy(layers: LayerEnergies) -> float:
    """E_low(real) + E_high(model) - E_low(model).

    The model-system difference is taken first so equal model energies
    cancel exactly.
    """
    values = (layers.e_low_real, layers.e_high_model, layers.e_low_model)
    if any(v is None or not math.isfinite(v) for v in values):
        raise ValueError(f"non-finite or missing layer energy in {layers.label!r}: {values}")
    return layers.e_low_real + (layers.e_high_model - layers.e_low_model)


def relative_profile(entries: Sequence[LayerEnergies], reference_label: str) -> list[tuple[str, float]]:
    """ONIOM energies in eV relative to ``reference_label``, in input order."""
    by_label = {e.label: e for e in entries}
    if reference_label not in by_label:
        raise KeyError(f"reference {reference_label!r} not among {sorted(by_label)}")
    ref = oniom_energy(by_label[reference_label])
    return [(e.label, (oniom_energy(e) - ref) * HARTREE_TO_EV) for e in entries]


def load_sidecar(path: str | Path) -> list[LayerEnergies]:
    data = json.loads(Path(path).read_text())
    out = []
    for row in data["layers"]:
        high = row.get("e_high_model")
        prov = {"e_low_real": "ingested", "e_low_model": "ingested"}
        if high is not None:
            prov["e_high_model"] = "ingested"
        out.append(
            LayerEnergies(
                row["label"],
                float(row["e_low_real"]),
                float(row["e_low_model"]),
                None if high is None else float(high),
                prov,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Method comparison table


@dataclass(frozen=True)
class MethodRow:
    """Absolute energies (hartree) and fidelities of one method's states."""

    method: str
    energies: Mapping[str, float]
    fidelities: Mapping[str, float] = field(default_factory=dict)


STATE_COLUMNS = ("S0", "S1", "T0")


def method_metrics(row: MethodRow, e_hf: float, ground: str = "S0") -> dict:
    """Correlation energy and excitation energies in eV.

    E_corr = E(ground) - E_HF and dE(state) = E(state) - E(ground).
    """
    out: dict = {"method": row.method}
    e0 = row.energies.get(ground)
    out["e_corr_ev"] = None if e0 is None else (e0 - e_hf) * HARTREE_TO_EV
    for s in STATE_COLUMNS:
        if s == ground:
            continue
        e = row.energies.get(s)
        out[f"de_{s}_ev"] = None if e is None or e0 is None else (e - e0) * HARTREE_TO_EV
    for s in STATE_COLUMNS:
        out[f"f_{s}"] = row.fidelities.get(s)
    return out


def _fmt(v, digits: int) -> str:
    if v is None:
        return "-"
    s = f"{v:.{digits}f}"
    return "0." + "0" * digits if s == "-0." + "0" * digits else s


def format_metrics(rows: Sequence[MethodRow], e_hf: float) -> str:
    """CSV table with energies rounded to 0.01 eV and fidelities to 0.001."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    cols = ["method", "e_corr_ev"] + [f"de_{s}_ev" for s in STATE_COLUMNS[1:]] + [f"f_{s}" for s in STATE_COLUMNS]
    out.writerow(cols)
    for row in rows:
        m = method_metrics(row, e_hf)
        cells = [m["method"]]
        cells += [_fmt(m[c], 2) for c in cols[1:4]]
        cells += [_fmt(m[c], 3) for c in cols[4:]]
        out.writerow(cells)
    return buf.getvalue()


def format_profile(entries: Sequence[LayerEnergies], reference_label: str) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["label", "e_low_real", "e_low_model", "e_high_model", "e_oniom", "delta_e_ev"])
    for (label, de), e in zip(relative_profile(entries, reference_label), entries):
        out.writerow([label] + [repr(float(v)) for v in (e.e_low_real, e.e_low_model, e.e_high_model, oniom_energy(e), de)])
    return buf.getvalue()
