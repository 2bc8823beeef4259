#!/usr/bin/env python3
"""Smoke test of the rodsim_py extension module.

Builds the extension with cargo if it is not already present, loads it, and
checks a handful of closed-form values through the bindings. Run from
anywhere inside the repository:

    python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def find_extension() -> Path:
    candidates = [
        REPO / "target" / profile / "librodsim_py.so"
        for profile in ("release", "debug")
    ]
    for path in candidates:
        if path.is_file():
            return path
    print("extension not built yet; running cargo build -p rodsim-py")
    subprocess.run(
        ["cargo", "build", "-p", "rodsim-py"], cwd=REPO, check=True
    )
    for path in candidates:
        if path.is_file():
            return path
    raise FileNotFoundError("librodsim_py.so not found after build")


def load_module():
    so_path = find_extension()
    staging = Path(tempfile.mkdtemp(prefix="rodsim_py_"))
    shutil.copy2(so_path, staging / "rodsim_py.so")
    sys.path.insert(0, str(staging))
    import rodsim_py

    return rodsim_py


def approx(actual, expected, rel=1e-9, abs_tol=0.0):
    scale = max(abs(expected), abs_tol / rel if rel else 0.0)
    assert abs(actual - expected) <= max(rel * scale, abs_tol), (
        f"{actual} != {expected} (rel {rel}, abs {abs_tol})"
    )


def main():
    rod = load_module()

    # Rotation kernel round trip.
    theta = (0.3, -0.7, 0.5)
    back = rod.log_rotation(rod.exp_rodrigues(theta))
    for a, b in zip(back, theta):
        approx(a, b, rel=1e-12, abs_tol=1e-12)
    print("[ok] exp/log round trip")

    chi = rod.drill_free_rotation((0.0, 0.0, 1.0), (1.0, 0.0, 0.0))
    image = [row[2] for row in chi]  # chi applied to e3 is its third column
    approx(image[0], 1.0, rel=1e-12, abs_tol=1e-12)
    approx(image[1], 0.0, rel=1e-12, abs_tol=1e-12)
    approx(image[2], 0.0, rel=1e-12, abs_tol=1e-12)
    print("[ok] drill-free map carries the director")

    # Uniform torsion: psi(L) = T L / GJ.
    res = rod.solve_static_ti(1.0, 8, 1e4, 1.0, 2.0, tip_moment=1.0)
    assert res["converged"]
    approx(res["psi_l"], 0.5, rel=0.0, abs_tol=1e-10)
    print("[ok] torsion twist T L / GJ")

    # Small-load cantilever: tip deflection F L^3 / (3 EI).
    res = rod.solve_static_ti(1.0, 32, 1e7, 1.0, 1.0, tip_force=(1e-3, 0.0, 0.0))
    approx(res["tip"][0], 1e-3 / 3.0, rel=5e-3)
    print("[ok] cantilever deflection F L^3 / 3 EI")

    # End moment bends the rod onto a circle of radius EI / M.
    res = rod.solve_static_general(
        1.0, 16, 1e4, 1.0, 1.0, 0.8, tip_bending_moment=(0.0, 0.3, 0.0)
    )
    kappa = 0.3
    tip = res["tip"]
    approx(tip[2], math.sin(kappa) / kappa, rel=1e-6)
    approx(abs(tip[0]), (1.0 - math.cos(kappa)) / kappa, rel=1e-6)
    print("[ok] pure bending arc")

    # Clamped-free column buckling near pi^2 EI / (4 L^2).
    load = rod.buckling_load(1.0, 16, 1e4, 1.0, 0.8, 2.0, 3.0)
    approx(load, math.pi**2 / 4.0, rel=1e-2)
    print("[ok] buckling load")

    # Released pluck rings at the first bending frequency and conserves
    # energy.
    omega1 = 1.8751040687119612**2  # EI = a_rho = L = 1
    dt = 2.0 * math.pi / omega1 / 64.0
    traj = rod.integrate_ti(
        1.0, 8, 1e4, 1.0, 0.8, 1.0, 1e-6, 2e-6, dt, 512,
        tip_force=(1e-3, 0.0, 0.0), release=True,
    )
    assert traj["energy_drift"] < 1e-4, traj["energy_drift"]
    measured = rod.dominant_frequency(traj["tip_x"], dt)
    approx(measured, omega1, rel=1e-2)
    print("[ok] pluck frequency and energy drift")

    # Transport holonomy of the 60 degree tangent circle.
    h = rod.holonomy(60.0, samples=4001)
    approx(h["holonomy"], h["cap_area"], rel=1e-3)
    approx(abs(h["correction"]), h["cap_area"], rel=1e-3)
    print("[ok] transport holonomy")

    print("smoke test passed")


if __name__ == "__main__":
    main()
