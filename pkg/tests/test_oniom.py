import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

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

finite = st.floats(-1e4, 1e4, allow_nan=False)


def reference_rows(data_dir):
    data = json.loads((data_dir / "reference_metrics.json").read_text())
    rows = [MethodRow(m["method"], m["energies"], m["fidelities"]) for m in data["methods"]]
    return data["e_hf"], rows


def test_oniom_arithmetic():
    assert oniom_energy(LayerEnergies("a", 10.0, 3.0, 2.0)) == 9.0
    assert oniom_energy(LayerEnergies("a", 10.0, 2.0, 3.0)) == 11.0


@given(finite, finite)
def test_cancellation_identity(real, model):
    assert oniom_energy(LayerEnergies("x", real, model, model)) == real


@given(finite, finite, finite, st.floats(-100, 100))
def test_common_shift_moves_total(real, low, high, shift):
    base = oniom_energy(LayerEnergies("x", real, low, high))
    moved = oniom_energy(LayerEnergies("x", real + shift, low + shift, high + shift))
    assert moved == pytest.approx(base + shift, abs=1e-9)


@pytest.mark.parametrize("bad", [math.nan, math.inf, None])
def test_non_finite_input_is_rejected(bad):
    with pytest.raises(ValueError, match="non-finite"):
        oniom_energy(LayerEnergies("x", 1.0, 2.0, bad))


def test_relative_profile():
    entries = [LayerEnergies("11-cis/S0", -1.0, 0.0, 0.0), LayerEnergies("all-trans/S0", -0.9, 0.0, 0.0)]
    prof = dict(relative_profile(entries, "11-cis/S0"))
    assert prof["11-cis/S0"] == 0.0
    assert prof["all-trans/S0"] == pytest.approx(0.1 * HARTREE_TO_EV, rel=1e-12)
    assert HARTREE_TO_EV * 0.1 == pytest.approx(2.7211386245988)
    with pytest.raises(KeyError):
        relative_profile(entries, "missing")


def test_profile_against_itself_is_zero():
    entries = [LayerEnergies(f"g{k}/S0", -k * 0.37, 0.1 * k, 0.2) for k in range(5)]
    for e in entries:
        assert dict(relative_profile(entries, e.label))[e.label] == 0.0


def test_state_tag_and_with_high():
    layer = LayerEnergies("TS/S1", 1.0, 2.0, provenance={"e_low_real": "ingested"})
    assert layer.state == "S1"
    filled = layer.with_high(3.0, "qsci")
    assert filled.e_high_model == 3.0 and filled.provenance["e_high_model"] == "qsci"
    assert LayerEnergies("plain", 0, 0).state is None


def test_sidecar_loading(tmp_path):
    path = tmp_path / "layers.json"
    path.write_text(json.dumps({"layers": [{"label": "a/S0", "e_low_real": -1, "e_low_model": -0.5}]}))
    (layer,) = load_sidecar(path)
    assert layer.e_high_model is None and layer.provenance["e_low_real"] == "ingested"


def test_method_metrics_definitions():
    row = MethodRow("m", {"S0": -1.0, "S1": -0.9, "T0": -0.95}, {"S0": 0.9})
    m = method_metrics(row, e_hf=-0.98)
    assert m["e_corr_ev"] == pytest.approx(-0.02 * HARTREE_TO_EV)
    assert m["de_S1_ev"] == pytest.approx(0.1 * HARTREE_TO_EV)
    assert m["f_S0"] == 0.9 and m["f_T0"] is None


def test_reference_metrics_reproduced(data_dir):
    e_hf, rows = reference_rows(data_dir)
    lines = format_metrics(rows, e_hf).splitlines()
    assert lines == [
        "method,e_corr_ev,de_S1_ev,de_T0_ev,f_S0,f_S1,f_T0",
        "HF,0.00,-,-,0.940,-,-",
        '"CASCI(2,2)",0.00,2.24,2.28,0.940,0.831,0.835',
        '"CASCI(6,6)",-0.43,1.44,1.48,0.975,0.955,0.954',
        '"TE-QSCI(8,8)",-0.69,1.23,1.27,0.994,0.995,0.996',
        '"CASCI(8,8)",-0.80,1.26,1.29,1.000,1.000,1.000',
    ]


def test_format_profile_matches_recomputation():
    entries = [LayerEnergies("a/S0", -10.0, -2.0, -2.5), LayerEnergies("a/S1", -10.0, -2.0, -2.4)]
    lines = format_profile(entries, "a/S0").splitlines()
    assert lines[0] == "label,e_low_real,e_low_model,e_high_model,e_oniom,delta_e_ev"
    de = float(lines[2].split(",")[-1])
    assert de == pytest.approx(0.1 * HARTREE_TO_EV, abs=1e-12)
    assert float(lines[1].split(",")[4]) == oniom_energy(entries[0])
