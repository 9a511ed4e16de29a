"""
Learning a sheaf on a bipartite graph
=====================================

Every edge joins the two classes. A learned d = 1 sheaf with unconstrained
maps discovers negative transports and separates the classes; forcing the
two maps of an edge to be equal caps what diffusion can do.
"""

from sheaflab.experiments import BipartiteSettings, bipartite_experiment

cfg = BipartiteSettings(nA=100, nB=100, p=0.03, t_grid=(0, 1, 5, 20), epochs=200, seed=0)
res = bipartite_experiment(cfg)
print(f"{'model':10s} {'t':>5s} {'train':>6s} {'test':>6s} {'neg':>6s}")
for row in res["rows"]:
    print(f"{row['model']:10s} {row['t']:5.1f} {row['train_acc']:6.3f} {row['test_acc']:6.3f} "
          f"{row['neg_fraction']:6.3f}")

h = res["histograms"][("general", 20.0)]
print("transport histogram (general, t=20):")
for lo, hi, c in zip(h["edges"][:-1], h["edges"][1:], h["counts"]):
    print(f"  [{lo:6.2f}, {hi:6.2f})  {'#' * (c // 4)}")
