"""Checks on the paper-default run of the H8 (6,6) -> (8,8) stand-in."""

import csv
import json
from pathlib import Path

import pytest

from teqsci.determinants import from_bitstring
from teqsci.selection import spin_augment
from teqsci.workflow import load_config, run, validate

CONFIG = Path(__file__).parents[1] / "configs" / "h8_default.toml"


@pytest.fixture(scope="module")
def stand_in(tmp_path_factory):
    return run(load_config(CONFIG), tmp_path_factory.mktemp("h8") / "run")


def test_repo_config_is_valid():
    assert validate(load_config(CONFIG)) == []


def test_merged_size_recounted_from_shots(stand_in):
    configs = json.loads((stand_in / "configurations.json").read_text())
    baseline = {from_bitstring(m["bits"]) for m in configs["members"] if "baseline" in m["tags"]}
    sampled = set()
    for line in (stand_in / "shots.jsonl").read_text().splitlines():
        det = from_bitstring(json.loads(line)["bitstring"])
        if bin(det).count("1") == 8 and bin(det & 0x5555).count("1") == 4:
            sampled.add(det)
    augmented = {p for d in sampled for p in spin_augment(d)}
    assert len(configs["members"]) == len(baseline | sampled | augmented)
    post = json.loads((stand_in / "postselection.json").read_text())
    assert post["new_sampled"] == len(sampled - baseline)
    assert post["new_after_augmentation"] == len((sampled | augmented) - baseline)


@pytest.mark.parametrize("state", ["S0", "S1", "T0"])
def test_leading_reference_configurations_are_sampled(stand_in, state):
    rows = list(csv.DictReader((stand_in / f"histogram_{state}.csv").open()))
    for row in rows[:6]:
        assert any(float(v) > 0 for k, v in row.items() if k.startswith("p_dt_")), row["config_bits"]


def test_subspace_roots_are_spin_labelled(stand_in):
    sub = json.loads((stand_in / "subspace.json").read_text())
    for label, state in sub["states"].items():
        assert state["label"] == label
        s2 = sub["s2"][state["root"]]
        assert s2 == pytest.approx({"S": 0.0, "T": 2.0}[label[0]], abs=1e-8)
