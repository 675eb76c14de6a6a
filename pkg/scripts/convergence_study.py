"""Grid convergence of the Kepler ground state and of the grid-route induced potential."""

import math
import time

import numpy as np

from nelsonlab.fields import RadialGrid, ScalarField
from nelsonlab.kepler import KeplerModel, ground_state_density, kepler_induced_potential
from nelsonlab.potentials import Potential
from nelsonlab.schrodinger import ground_state
from nelsonlab.verify import induced_potential


def main():
    model = KeplerModel.natural()
    r0 = model.r0
    print(f"{'nodes':>6} {'E0 rel err':>11} {'psi L2':>9} {'U_ind err':>10} {'solve s':>8}")
    for n in (256, 512, 1024, 2048, 4096, 8192):
        grid = RadialGrid.uniform(n, 40 * r0)
        start = time.perf_counter()
        gs = ground_state(Potential.kepler(model.gmm), model.m, model.sigma, grid)
        elapsed = time.perf_counter() - start
        exact = ground_state_density(model, grid.r)
        e_err = abs(gs.energy / -model.energy_scale - 1)
        l2 = math.sqrt(grid.integrate((np.abs(gs.psi.psi) - np.sqrt(exact)) ** 2))
        num = induced_potential(ScalarField(grid, exact), model.m, model.sigma, floor=0.0).values
        sel = (grid.r >= 0.5 * r0) & (grid.r <= 10 * r0)
        u_err = np.max(np.abs(num - kepler_induced_potential(model, grid.r))[sel]) / model.energy_scale
        print(f"{n:6d} {e_err:11.2e} {l2:9.2e} {u_err:10.2e} {elapsed:8.3f}")


if __name__ == "__main__":
    main()
