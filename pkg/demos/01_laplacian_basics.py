"""
Sheaf Laplacians on small graphs
================================

A d = 1 sheaf with identity maps is just the graph. Rotating one map of a
triangle makes transport around the loop path-dependent and kills the
harmonic space.
"""

import numpy as np

from sheaflab.graph import cycle_graph, random_connected_graph
from sheaflab.laplacian import assemble, sheaf_laplacian
from sheaflab.sheaf import Family, Sheaf, exhaustive_radius, rotation2, trivial_sheaf
from sheaflab.spectral import eigh, harmonic_space, spectral_gap

np.set_printoptions(precision=3, suppress=True)

g = random_connected_graph(6, 0.4, np.random.default_rng(0))
A = g.adjacency_matrix()
L = assemble(trivial_sheaf(g)).to_dense()
print("L == D - A:", np.array_equal(L, np.diag(A.sum(1)) - A))
print("normalized spectrum:", eigh(sheaf_laplacian(trivial_sheaf(g)).to_dense()).eigenvalues)

# triangle with 2-dim stalks; one edge rotates by theta
tri = cycle_graph(3)
lo = np.stack([np.eye(2)] * 3)
for theta in (0.0, np.pi / 4, np.pi / 2, np.pi):
    hi = lo.copy()
    hi[0] = rotation2(theta)
    s = Sheaf(tri, 2, lo, hi, Family.ORTHOGONAL)
    H = harmonic_space(sheaf_laplacian(s))
    print(f"theta={np.degrees(theta):5.1f}  dim H0={H.dim}  gap={spectral_gap(s):.4f}"
          f"  bound r^2/2={exhaustive_radius(s) ** 2 / 2:.4f}")
