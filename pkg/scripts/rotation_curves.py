"""Write the potential and rotation-speed tables of the Kepler model as CSV."""

import argparse
from pathlib import Path

import numpy as np

from nelsonlab.kepler import KeplerModel, potential_table, rotation_table, write_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="curves")
    ap.add_argument("--mass", type=float, default=1e10, help="solar masses")
    ap.add_argument("--v0", type=float, default=144.0, help="km/s")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / "potentials_natural.csv", potential_table(KeplerModel.natural(), np.linspace(0.1, 10.0, 100)))
    gal = KeplerModel.from_v0(4.3e-6, args.mass, args.v0, units="galactic")
    write_table(out / "rotation_galactic.csv", rotation_table(gal, np.linspace(0.1, 10.0, 100) * gal.r0))
    print(f"r0 = {gal.r0:.3g} kpc, flat speed {args.v0:g} km/s; tables in {out}/")


if __name__ == "__main__":
    main()
