#!/usr/bin/env python3
"""Writes MATPOWER .m case files and a reference OPF fixture from PYPOWER.

PYPOWER ships ports of the standard MATPOWER test cases and its own
primal-dual interior-point OPF (PIPS). The fixture it produces is used as the
independent reference solution in the test suite.

    pip install pypower
    python3 tools/scripts/export_pypower_cases.py tests/data
"""

import json
import sys
from pathlib import Path

import numpy as np
from pypower.api import case9, case30, case57, case118, case300, ppoption, runopf
from pypower.idx_brch import BR_STATUS, F_BUS, MU_SF, MU_ST, T_BUS
from pypower.idx_bus import BUS_I, VA, VM
from pypower.idx_gen import PG, QG

CASES = {
    "case9": case9,
    "case30": case30,
    "case57": case57,
    "case118": case118,
    "case300": case300,
}

COLS = {"bus": 13, "gen": 21, "branch": 13}


def fmt(v):
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def write_matrix(out, name, rows, ncols=None):
    out.write(f"mpc.{name} = [\n")
    for row in rows:
        vals = row if ncols is None else row[:ncols]
        out.write("\t" + "\t".join(fmt(v) for v in vals) + ";\n")
    out.write("];\n\n")


def write_case(path, name, ppc):
    with open(path, "w") as out:
        out.write(f"function mpc = {name}\n")
        out.write(f"%{name.upper()}    Power flow data exported from PYPOWER.\n\n")
        out.write("mpc.version = '2';\n\n")
        out.write("%%-----  Power Flow Data  -----%%\n")
        out.write("%% system MVA base\n")
        out.write(f"mpc.baseMVA = {fmt(ppc['baseMVA'])};\n\n")
        out.write("%% bus data\n")
        out.write("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n")
        write_matrix(out, "bus", ppc["bus"], COLS["bus"])
        out.write("%% generator data\n")
        write_matrix(out, "gen", ppc["gen"], COLS["gen"])
        out.write("%% branch data\n")
        write_matrix(out, "branch", ppc["branch"], COLS["branch"])
        out.write("%%-----  OPF Data  -----%%\n")
        out.write("%% generator cost data\n")
        write_matrix(out, "gencost", ppc["gencost"])


def main(dest):
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    reference = {"solver": "PYPOWER runopf (PIPS)", "cases": {}}
    opt = ppoption(VERBOSE=0, OUT_ALL=0, PDIPM_GRADTOL=1e-10,
                   PDIPM_COMPTOL=1e-10, PDIPM_COSTTOL=1e-12)
    for name, fn in CASES.items():
        ppc = fn()
        write_case(dest / f"{name}.m", name, ppc)
        r = runopf(fn(), opt)
        assert r["success"], name
        bus = r["bus"]
        idx = {int(b): i for i, b in enumerate(bus[:, BUS_I])}
        br = r["branch"]
        on = br[:, BR_STATUS] > 0
        ang = np.deg2rad(bus[:, VA])
        dmax = max(abs(ang[idx[int(b[F_BUS])]] - ang[idx[int(b[T_BUS])]]) for b in br[on])
        binding = [int(k) for k in range(len(br))
                   if br[k, MU_SF] > 1e-6 or br[k, MU_ST] > 1e-6]
        reference["cases"][name] = {
            "objective": float(r["f"]),
            "max_angle_diff_deg": float(np.rad2deg(dmax)),
            "binding_branches": binding,
            "vm": [float(v) for v in bus[:, VM]],
            "va_rad": [float(v) for v in ang],
            "pg_pu": [float(v) / r["baseMVA"] for v in r["gen"][:, PG]],
            "qg_pu": [float(v) / r["baseMVA"] for v in r["gen"][:, QG]],
        }
        print(name, r["f"], binding)
    with open(dest / "reference_opf.json", "w") as out:
        json.dump(reference, out, indent=1)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
