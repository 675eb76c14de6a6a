"""Scale radius and noise level for galaxies of mass 10^p solar masses, plus the Milky Way preset."""

import argparse

from nelsonlab.kepler import galaxy_scan, milky_way_estimate, round_sig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--v0", type=float, default=144.0, help="flat speed in km/s")
    args = ap.parse_args()

    print(f"{'p':>3} {'r0 [kpc]':>10} {'2 s.f.':>8} {'quoted':>8} {'sigma^2 [kpc^2/s]':>18}  flags")
    for p, est in zip(range(8, 13), galaxy_scan(v0_kms=args.v0)):
        flags = {k: v for k, v in est.flags.items() if not k.endswith("note")}
        print(f"{p:3d} {est.r0_kpc:10.4g} {round_sig(est.r0_kpc, 2):8g} {est.quoted['r0_kpc']:8g} "
              f"{est.sigma2_kpc2_per_s:18.3e}  {flags}")
    mw = milky_way_estimate()
    state = "matches" if mw.flags["r0_match"] else "MISMATCH with"
    print(f"Milky Way: 2GM/v0^2 = {mw.r0_kpc:.2f} kpc, {state} the quoted {mw.quoted['r0_kpc']:g} kpc")


if __name__ == "__main__":
    main()
