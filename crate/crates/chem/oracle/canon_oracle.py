#!/usr/bin/env python3
"""Standalone RDKit oracle for canonicalization fixtures.

Writes tests/fixtures/canon_oracle.json: for each input SMILES, the RDKit
canonical form, ten RDKit-generated random respellings and the molecular
formula. Regenerate with:  python3 oracle/canon_oracle.py
"""
import json
import os

from rdkit import Chem
from rdkit.Chem.rdMolDescriptors import CalcMolFormula

MOLECULES = [
    "OCC", "CCO", "C", "CC(=O)O", "CN", "CNC(C)=O", "CC(=O)NC(C)=O",
    "c1ccccc1", "C1=CC=CC=C1", "Cc1ccccc1", "Oc1ccccc1", "O=C(O)c1ccccc1",
    "c1ccc2ccccc2c1", "C1=CC2=CC=CC=C2C=C1", "c1ccc2[nH]ccc2c1", "c1cc[nH]c1",
    "c1ccncc1", "c1cncnc1", "c1ncc[nH]1", "c1cn[nH]c1", "c1ccsc1", "c1ccoc1",
    "c1ccc2ncccc2c1", "c1nc2ccccc2[nH]1", "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "O=c1cccc[nH]1", "O=C1C=CC=CN1", "c1nn[nH]n1", "c1cocn1", "c1ccc2c(c1)ccc1ccccc12",
    "[O-][N+](=O)c1ccccc1", "CS(=O)(=O)N", "CS(C)(=O)=O", "[NH4+]", "[O-]C(=O)C",
    "C[C@H](N)C(=O)O", "N[C@@H](C)C(=O)O", "C[C@@H](O)CC", "F/C=C/F", "F/C=C\\F",
    "C/C=C/C(=O)O", "CC(C)(C)OC(=O)N1CCCCC1", "CC(C)(C)OC(=O)NCc1ccccc1",
    "COC(=O)c1ccc(Br)cc1", "OB(O)c1ccccc1", "Brc1ccc(-c2ccccc2)cc1",
    "CNC(=O)c1ccc(-c2ccccc2)cc1", "COc1ccc(C(=O)N2CCN(C)CC2)cc1",
    "Clc1ccc(Nc2ncccn2)cc1", "O=C1CCCN1", "C1CC1", "C1CCC2CCCCC2C1", "C#N",
    "CC#CC", "[2H]C([2H])([2H])O", "[13CH4]", "OC1=CC=CC=C1", "c1ccc2c(c1)[nH]c1ccccc12",
    "Cc1cc(C)nc(N)n1", "O=C(O)CC(O)(CC(=O)O)C(=O)O", "CC(=O)Oc1ccccc1C(=O)O",
    "CN1CCC[C@H]1c1cccnc1", "Fc1ccc(cc1)C(F)(F)F", "O=S(=O)(Nc1ccccc1)c1ccccc1",
    "C1CCNCC1", "C1CNCCN1", "OC(=O)c1ccc2ccccc2c1",
    "C=CC=C", "CC(C)=O", "[Na+].[Cl-]", "CCO.CCO", "c1ccc(cc1)-c1ccccc1",
]


def main():
    out = []
    for smi in MOLECULES:
        mol = Chem.MolFromSmiles(smi)
        assert mol is not None, smi
        spellings = set()
        seed = 0
        while len(spellings) < 10 and seed < 200:
            spellings.add(Chem.MolToSmiles(mol, doRandom=True, canonical=False))
            seed += 1
        out.append({
            "input": smi,
            "rdkit": Chem.MolToSmiles(mol),
            "formula": CalcMolFormula(mol),
            "spellings": sorted(spellings),
        })
    path = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures", "canon_oracle.json")
    with open(path, "w") as fh:
        json.dump(out, fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    main()
