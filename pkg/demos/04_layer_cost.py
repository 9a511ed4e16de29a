"""
Cost of one diffusion layer
===========================

Time one layer (learner, Laplacian assembly, sparse product) as the edge
count and stalk dimension grow. Diagonal maps scale with m d, general maps
pick up an extra factor of d. Below about 10k edges the per-node work
and Python overhead dominate and the fitted exponents drop under 1.
"""

import numpy as np

from sheaflab.experiments import (complexity_table, random_graph_with_m, scaling_exponent,
                                  time_gcn_layer, time_trivial_layer)

rows = complexity_table(1000, [20000, 40000, 80000], 16, [1, 2, 4], ("diagonal", "general"),
                        repeats=5)
for r in rows:
    print(f"{r.family:9s} m={r.m:6d} d={r.d}  {r.seconds * 1e3:7.2f} ms")

for fam in ("diagonal", "general"):
    sel = [r for r in rows if r.family == fam and r.d == 2]
    print(f"{fam}: exponent in m = {scaling_exponent([r.m for r in sel], [r.seconds for r in sel]):.2f}")

g = random_graph_with_m(1000, 20000, np.random.default_rng(0))
print(f"trivial sheaf layer {time_trivial_layer(g, 16) * 1e3:.2f} ms, "
      f"GCN layer {time_gcn_layer(g, 16) * 1e3:.2f} ms")
