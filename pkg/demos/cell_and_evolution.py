"""Two proxies for Hbar in the 1D cosine potential.

1. The discounted cell problem: -delta v(0, p) for shrinking delta.
2. The oscillatory evolution from plane data p.x: u_eps(0, 1) = -Hbar(p)
   in the limit, so -u_eps(0, 1) for shrinking eps.

Both columns approach the tabulated Hbar.

    python demos/cell_and_evolution.py
"""
import numpy as np

from hjhomog.cell import cell_domain, solve_cell
from hjhomog.effham import CachedShapeProvider, hbar
from hjhomog.evolve import evolution_grid, plane_dissipation, solve_oscillatory
from hjhomog.field import EnsembleSpec, ShiftedPeriodic, normalize, sample_potential
from hjhomog.shape import ShapeSampler

spec = EnsembleSpec(ShiftedPeriodic("cosine", 1.0, 0.2), dimension=1, bound=0.4, seed=7)
provider = CachedShapeProvider.from_sampler(ShapeSampler(spec, radii=[25.0, 50.0, 100.0]))
field = normalize(sample_potential(spec, cell_domain(spec, 0.025)))
v = spec.realization().normalized()

for p in (0.0, 0.5, 1.5):
    target, region = hbar(p, provider)
    cells = [solve_cell(field, [p], d).minus_delta_v0 for d in (0.1, 0.05, 0.025)]
    runs = []
    for eps in (1 / 8, 1 / 16, 1 / 32):
        grid = evolution_grid(eps, 0.0, 1.0, plane_dissipation([p], 0.4))
        res = solve_oscillatory(v, eps, lambda x: p * x[0], 1.0, grid)
        runs.append(-res.slices[-1][grid.index_of([0.0])])
    print(f"p = {p}: Hbar = {target:.4f} ({region})")
    print("  cell   delta 0.1, 0.05, 0.025:", "  ".join(f"{c:.4f}" for c in cells))
    print("  evolve eps 1/8, 1/16, 1/32:   ", "  ".join(f"{u:.4f}" for u in runs))
