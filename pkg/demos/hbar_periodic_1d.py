"""Effective Hamiltonian of the 1D cosine potential.

Tabulates Hbar on [-2, 2], prints the region labels and the sandwich
(|p|^2-1)^2 - vbar <= Hbar <= (|p|^2-1)^2, and writes hbar.csv / hbar.json.

    python demos/hbar_periodic_1d.py [outdir]
"""
import sys
import time

import numpy as np

from hjhomog.effham import CachedShapeProvider, tabulate
from hjhomog.field import EnsembleSpec, ShiftedPeriodic
from hjhomog.shape import ShapeSampler

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"

spec = EnsembleSpec(ShiftedPeriodic("cosine", 1.0, 0.2), dimension=1, bound=0.4, seed=7)
sampler = ShapeSampler(spec, radii=[25.0, 50.0, 100.0])
provider = CachedShapeProvider.from_sampler(sampler)

t0 = time.perf_counter()
p = np.round(np.arange(-2.0, 2.0001, 0.1), 10)[:, None]
table = tabulate(p, provider)
print(f"{len(p)} nodes, {len(provider.cache)} shapes, {time.perf_counter() - t0:.1f}s")
print(f"mu* = {table.constants.mu_star:.3f}, sigma* = {table.constants.sigma_star:.3f}")

h0 = (p[:, 0] ** 2 - 1) ** 2
print("   p      Hbar   region   H0-vbar      H0")
for pi, v, r, top in zip(p[:, 0], table.values, table.region, h0):
    if pi >= 0:
        print(f"{pi:5.2f}  {v:8.4f}   {r:>4}   {top - 0.4:8.4f}  {top:8.4f}")
print(f"sandwich violation {table.sandwich_violation():.2e}")

csv_path, json_path = table.export(f"{out}/hbar")
print("wrote", csv_path, json_path)
