"""Regenerate the molecular FCIDUMP fixtures and their reference energies.

Needs pyscf, which the package itself does not depend on:

    pip install pyscf
    python tests/data/make_fixtures.py

The outputs are committed; tests only read them.
"""

import json
from pathlib import Path

from pyscf import fci, gto, mcscf, scf
from pyscf.tools import fcidump

HERE = Path(__file__).parent


def chain(n, spacings):
    z, atoms = 0.0, []
    for k in range(n):
        atoms.append(f"H 0 0 {z:.6f}")
        if k < len(spacings):
            z += spacings[k]
    return "; ".join(atoms)


def build(name, atom, cas=()):
    mol = gto.M(atom=atom, basis="sto-3g", verbose=0)
    mf = scf.RHF(mol).run(conv_tol=1e-12)
    path = HERE / f"{name}.fcidump"
    fcidump.from_scf(mf, str(path), tol=1e-15)
    e_fci, _ = fci.FCI(mf).kernel(nroots=1)
    ref = {"fcidump": path.name, "e_hf": mf.e_tot, "e_fci": float(e_fci), "casci": {}}
    for ncas, nelecas in cas:
        mc = mcscf.CASCI(mf, ncas, nelecas)
        mc.verbose = 0
        e = mc.kernel()[0]
        ref["casci"][f"{nelecas},{ncas}"] = float(e)
    return ref


def main():
    refs = {
        "h2": build("h2", "H 0 0 0; H 0 0 0.74"),
        "h4": build("h4", chain(4, [0.9, 1.1, 0.95]), cas=[(2, 2), (3, 2)]),
        "h8": build("h8", chain(8, [1.6, 1.75, 1.65, 1.8, 1.7, 1.6, 1.75]), cas=[(6, 6)]),
    }
    (HERE / "pyscf_reference.json").write_text(json.dumps(refs, indent=2) + "\n")


if __name__ == "__main__":
    main()
