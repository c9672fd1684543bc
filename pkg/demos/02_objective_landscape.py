"""Sweep the test-dataset objective over a full turn of probe angles.

With PMU 2 spoofed by 0.7 pi, the objective is smallest near the probe that
undoes the spoof (-0.7 pi) and largest roughly half a turn away from it.
"""

import numpy as np

from pmu_gsa import AttackProfile, NoiseSpec, apply_gsa, build_test_dataset, load_feeder, make_placement, solve, synthesize
from pmu_gsa.identify import is_unimodal, sweep_objective

model = load_feeder("ieee34")
truth = solve(model)
placement = make_placement(model, [800, 816, 820, 836, 854, 858])
z = synthesize(model, truth, placement, NoiseSpec(), rng_seed=0)
z_spf = apply_gsa(z, AttackProfile.from_psi([0, 0.7, 0, 0, 0, 0]))

ds, sub = build_test_dataset(model, placement, z_spf, 2)
curve = sweep_objective(ds, sub, np.deg2rad(np.arange(-180, 181, 1)))
k = np.argmin(curve[:, 1])
print(f"argmin at {curve[k, 0] / np.pi:+.3f} pi, J_min = {curve[k, 1]:.1f}, J_max = {curve[:, 1].max():.3e}")
print("unimodal on the circle:", is_unimodal(curve))
for ang, j in curve[::30]:
    bar = "#" * int(60 * j / curve[:, 1].max())
    print(f"{ang / np.pi:+.2f} pi {bar}")
