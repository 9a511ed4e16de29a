"""Command-line entry point: ``sheaflab <subcommand> [--key value ...]``.

Settings come from three layers, highest first: command-line flags, a flat
``key = value`` file given with ``--config``, then built-in defaults. The
resolved settings are written to ``<out>/config.json`` before any work is
done. Exit codes: 0 success, 1 failed check or internal error, 2 usage or
input-format error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .diffusion import DiffusionError, node_features, write_trajectory_csv
from .graph import GraphError, GraphFormatError, load_dataset
from .learn import (NSDConfig, NSDModel, TrainConfig, TrainingDivergedError, save_checkpoint,
                    train, write_history_csv)
from .oracle import OracleError
from .sheaf import SheafError
from .spectral import EnergyMismatchError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


def _floats(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _ints(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def _strs(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(str(x) for x in text)
    return tuple(x.strip() for x in str(text).split(",") if x.strip())


# name -> (parser, default, help); shared keys live in COMMON
COMMON = {
    "seed": (int, 0, "global random seed"),
    "out": (str, "sheaflab_out", "output directory"),
}

COMMANDS = {
    "verify": {
        "suite": (str, "all", "all | gap | harmonic | energy | separation"),
        "n_draws": (int, None, "random draws per check family (suite default if unset)"),
    },
    "synthetic-bipartite": {
        "nA": (int, 100, "nodes in class A"),
        "nB": (int, 100, "nodes in class B"),
        "p": (float, 0.03, "cross-edge probability"),
        "mean_sep": (float, 0.5, "distance between the class feature means"),
        "sigma": (float, 1.0, "feature noise std"),
        "alpha_model": (str, "both", "restriction-map model: both | general | symmetric"),
        "t_grid": (_floats, (0.0, 1.0, 5.0, 20.0), "comma-separated diffusion times"),
        "dt": (float, 1.0, "diffusion step"),
        "lr": (float, 0.05, "Adam learning rate"),
        "epochs": (int, 200, "training epochs"),
    },
    "synthetic-multiclass": {
        "n": (int, 150, "number of nodes"),
        "C": (int, 3, "number of classes"),
        "h": (float, 0.2, "edge homophily"),
        "d": (_ints, (1, 2), "stalk dimensions to compare"),
        "mean_sep": (float, 2.0, "radius of the class-mean circle"),
        "layers": (int, 20, "diffusion layers"),
        "lr": (float, 0.02, "Adam learning rate"),
        "epochs": (int, 300, "training epochs"),
        "seeds": (int, 1, "number of consecutive seeds starting at --seed"),
    },
    "oracle-diffuse": {
        "construction": (str, "orth2", "signed | homophily | diagonal | orth2 | orth4 | regular"),
        "C": (int, 4, "number of classes (ignored for bipartite graph specs)"),
        "graph": (str, "random:40:0.2", "cycle:N | path:N | complete:N | regular:N:K | "
                                        "random:N:P | bipartite:NA:NB:P | file:PATH"),
        "d": (int, None, "stalk dimension for the diagonal construction (default C)"),
        "t_max": (float, 20.0, "final diffusion time"),
        "dt": (float, 0.5, "RK4 step"),
        "record_every": (int, 1, "record a snapshot every k steps"),
        "channels": (int, 1, "feature channels"),
        "alpha": (float, 10.0, "intra-class weight of the homophily construction"),
    },
    "train": {
        "data": (str, None, "dataset directory"),
        "family": (str, "diagonal", "diagonal | orthogonal | general"),
        "d": (int, 2, "stalk dimension"),
        "hidden": (int, 8, "channels per stalk"),
        "layers": (int, 2, "diffusion layers"),
        "sigma": (str, "elu", "activation"),
        "sheaf_mode": (str, "per_layer", "per_layer | fixed"),
        "dt": (float, 1.0, "diffusion step"),
        "lr": (float, 0.01, "Adam learning rate"),
        "wd": (float, 5e-4, "weight decay of regular parameters"),
        "sheaf_wd": (float, 5e-4, "weight decay of sheaf-learner parameters"),
        "epochs": (int, 200, "training epochs"),
        "patience": (int, 50, "early-stopping patience"),
    },
    "complexity": {
        "n": (int, 1000, "number of nodes"),
        "m": (_ints, (20000, 40000), "comma-separated edge counts"),
        "c": (int, 16, "channels per stalk"),
        "d": (_ints, (1, 2, 4), "comma-separated stalk dimensions"),
        "families": (_strs, ("diagonal", "general"), "comma-separated learner families"),
        "repeats": (int, 5, "timing repeats (median reported)"),
    },
}


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _canon(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sheaflab", description="Sheaf diffusion toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, spec in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key = value settings file")
        for key, (_, default, text) in {**COMMON, **spec}.items():
            extra = {}
            if key == "suite":
                extra["choices"] = ("all", "gap", "harmonic", "energy", "separation")
            p.add_argument(_flag(key), dest=key, default=argparse.SUPPRESS,
                           help=f"{text} (default: {default})", **extra)
    return parser


def read_config_file(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[_canon(key)] = value.strip()
    return out


def resolve(command: str, flags: dict, config_path: str | None = None) -> dict:
    """Merge flags over the config file over defaults; convert types."""
    spec = {**COMMON, **COMMANDS[command]}
    layered = {}
    if config_path is not None:
        for key, value in read_config_file(config_path).items():
            if key not in spec:
                raise UsageError(f"unknown config key {key!r} for {command}")
            layered[key] = value
    layered.update(flags)
    resolved = {}
    for key, (conv, default, _) in spec.items():
        if key in layered and layered[key] is not None:
            try:
                resolved[key] = conv(layered[key])
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {exc}") from None
        else:
            resolved[key] = default
    return resolved


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _write_rows(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


# --------------------------------------------------------------------------
# subcommands


def cmd_verify(cfg: dict, out: Path) -> int:
    from .verify import run_suite

    reports = run_suite(cfg["suite"], cfg["seed"], cfg["n_draws"])
    dicts = [r.to_dict() for r in reports]
    _write_json(out / "verify_report.json", dicts)
    failed = [r for r in reports if not r.holds]
    by_prop = {}
    for r in reports:
        ok, total = by_prop.get(r.prop, (0, 0))
        by_prop[r.prop] = (ok + int(r.holds), total + 1)
    for prop, (ok, total) in by_prop.items():
        print(f"{prop}: {ok}/{total} hold")
    if failed:
        print(f"{len(failed)} check(s) failed:")
        for r in failed[:20]:
            print(f"  {r.inputs.get('check', r.prop)}: lhs={r.lhs:.6g} rhs={r.rhs:.6g}")
        return EXIT_FAIL
    print(f"all {len(reports)} checks hold")
    return EXIT_OK


def cmd_synthetic_bipartite(cfg: dict, out: Path) -> int:
    from .experiments import BipartiteSettings, bipartite_experiment

    if cfg["alpha_model"] not in ("both", "general", "symmetric"):
        raise UsageError("alpha_model must be both, general or symmetric")
    settings = BipartiteSettings(nA=cfg["nA"], nB=cfg["nB"], p=cfg["p"], mean_sep=cfg["mean_sep"],
                                 sigma=cfg["sigma"], seed=cfg["seed"], t_grid=cfg["t_grid"],
                                 lr=cfg["lr"], epochs=cfg["epochs"], dt=cfg["dt"])
    models = ("general", "symmetric") if cfg["alpha_model"] == "both" else (cfg["alpha_model"],)
    res = bipartite_experiment(settings, models=models)
    _write_rows(out / "bipartite.csv", res["rows"])
    hist_rows = []
    for (model, t), h in res["histograms"].items():
        for k, count in enumerate(h["counts"]):
            hist_rows.append({"model": model, "t": t, "bin_lo": h["edges"][k],
                              "bin_hi": h["edges"][k + 1], "count": count})
    _write_rows(out / "transport_histogram.csv", hist_rows)
    _write_json(out / "bipartite.json", {"rows": res["rows"]})
    for row in res["rows"]:
        print(f"{row['model']:9s} t={row['t']:5.1f} train={row['train_acc']:.3f} "
              f"test={row['test_acc']:.3f} neg={row['neg_fraction']:.3f}")
    return EXIT_OK


def cmd_synthetic_multiclass(cfg: dict, out: Path) -> int:
    from .experiments import MulticlassSettings, multiclass_run

    settings = MulticlassSettings(n=cfg["n"], C=cfg["C"], h=cfg["h"], mean_sep=cfg["mean_sep"],
                                  layers=cfg["layers"], lr=cfg["lr"], epochs=cfg["epochs"],
                                  seed=cfg["seed"])
    rows, census = [], []
    for seed in range(cfg["seed"], cfg["seed"] + cfg["seeds"]):
        for d in cfg["d"]:
            r = multiclass_run(settings, d, seed)
            rows.append({"d": d, "seed": seed, "train_acc": r["train_acc"], "test_acc": r["test_acc"]})
            if "angles" in r:
                a = r["angles"]
                census.append({"seed": seed, **a})
            print(f"d={d} seed={seed} train={r['train_acc']:.3f} test={r['test_acc']:.3f}")
    _write_rows(out / "multiclass.csv", rows)
    angle_rows = []
    for c in census:
        for k, count in enumerate(c["hist_counts"]):
            angle_rows.append({"seed": c["seed"], "bin_lo": c["hist_edges"][k],
                               "bin_hi": c["hist_edges"][k + 1], "count": count})
    _write_rows(out / "rotation_angles.csv", angle_rows)
    summary = {}
    for d in cfg["d"]:
        accs = [r["test_acc"] for r in rows if r["d"] == d]
        summary[f"d{d}_mean_test_acc"] = float(np.mean(accs))
    if census:
        summary["intra_mean_angle"] = float(np.mean([c["intra_mean"] for c in census]))
        summary["inter_mean_angle"] = float(np.mean([c["inter_mean"] for c in census]))
    _write_json(out / "multiclass.json", {"rows": rows, "angles": census, "summary": summary})
    return EXIT_OK


def _pca2(F: np.ndarray) -> np.ndarray:
    """Top-two principal axes of the rows of F (identity when F is 2-D)."""
    if F.shape[1] <= 2:
        return np.eye(F.shape[1])
    _, _, Vt = np.linalg.svd(F - F.mean(axis=0), full_matrices=False)
    return Vt[:2].T


def cmd_oracle_diffuse(cfg: dict, out: Path) -> int:
    from .experiments import balanced_labels, oracle_diffuse, parse_graph_spec

    rng = np.random.default_rng(cfg["seed"])
    g, labels = parse_graph_spec(cfg["graph"], rng)
    if labels is None:
        labels = balanced_labels(g.n, cfg["C"], rng)
    res = oracle_diffuse(cfg["construction"], g, labels, cfg["t_max"], seed=cfg["seed"],
                         dt=cfg["dt"], record_every=cfg["record_every"], channels=cfg["channels"],
                         d=cfg["d"], alpha=cfg["alpha"])
    traj = res["trajectory"]
    s = res["sheaf"]
    write_trajectory_csv(out / "trajectory.csv", traj.times, traj.energies, res["train_acc"],
                         res["test_acc"])
    axes = _pca2(node_features(traj.final, s.n))
    proj_rows, angle_rows = [], []
    for t, X, A in zip(traj.times, traj.states, res["class_angles"]):
        P = node_features(X, s.n) @ axes
        for v in range(s.n):
            proj_rows.append({"t": t, "node": v, "label": int(labels[v]), "x": P[v, 0],
                              "y": P[v, 1] if P.shape[1] > 1 else 0.0})
        C = A.shape[0]
        for i in range(C):
            for j in range(i + 1, C):
                angle_rows.append({"t": t, "class_i": i, "class_j": j,
                                   "angle_deg": float(np.degrees(A[i, j]))})
    _write_rows(out / "projections.csv", proj_rows)
    _write_rows(out / "class_angles.csv", angle_rows)
    final = np.degrees(res["class_angles"][-1])
    C = final.shape[0]
    _write_json(out / "oracle.json", {
        "n": s.n, "d": s.d, "m": s.graph.m, "C": C,
        "final_energy": float(traj.energies[-1]),
        "final_train_acc": res["train_acc"][-1],
        "final_class_angles_deg": final[np.triu_indices(C, 1)].tolist(),
    })
    print(f"{cfg['construction']}: n={s.n} d={s.d} energy {traj.energies[0]:.4g} -> "
          f"{traj.energies[-1]:.4g}, probe acc {res['train_acc'][-1]:.3f}")
    return EXIT_OK


def cmd_train(cfg: dict, out: Path) -> int:
    if cfg["data"] is None:
        raise UsageError("--data is required")
    data = load_dataset(cfg["data"])
    model_cfg = NSDConfig(input_dim=data.features.shape[1], n_classes=int(data.labels.max()) + 1,
                          d=cfg["d"], hidden=cfg["hidden"], layers=cfg["layers"],
                          family=cfg["family"], sigma=cfg["sigma"], sheaf_mode=cfg["sheaf_mode"],
                          dt=cfg["dt"], seed=cfg["seed"])
    tc = TrainConfig(lr=cfg["lr"], epochs=cfg["epochs"], weight_decay=cfg["wd"],
                     sheaf_weight_decay=cfg["sheaf_wd"], patience=cfg["patience"], seed=cfg["seed"])
    res = train(NSDModel(model_cfg), data, tc)
    save_checkpoint(out / "checkpoint.json", res.model, res.best_epoch, res.metrics)
    write_history_csv(out / "history.csv", res.history)
    _write_json(out / "metrics.json", {"best_epoch": res.best_epoch, **res.metrics,
                                       "n_parameters": res.model.n_parameters(),
                                       "dataset_digest": data.digest()})
    print(f"best epoch {res.best_epoch}: train {res.metrics['train_acc']:.4f} "
          f"val {res.metrics['val_acc']:.4f} test {res.metrics['test_acc']:.4f}")
    return EXIT_OK


def cmd_complexity(cfg: dict, out: Path) -> int:
    from .experiments import complexity_table, scaling_exponent

    rows = complexity_table(cfg["n"], cfg["m"], cfg["c"], cfg["d"], cfg["families"],
                            cfg["repeats"], cfg["seed"])
    dict_rows = [vars(r) for r in rows]
    _write_rows(out / "complexity.csv", dict_rows)
    fits = []
    for fam in cfg["families"]:
        for d in cfg["d"]:
            sel = [r for r in rows if r.family == fam and r.d == d]
            if len(sel) >= 2:
                fits.append({"family": fam, "d": d, "vary": "m", "predicted": 1.0,
                             "measured": scaling_exponent([r.m for r in sel], [r.seconds for r in sel])})
        for m in cfg["m"]:
            sel = [r for r in rows if r.family == fam and r.m == m]
            if len(sel) >= 2:
                # the O(m d c) term dominates for diagonal maps; general maps add O(m d^2 c)
                fits.append({"family": fam, "m": m, "vary": "d",
                             "predicted": 1.0 if fam == "diagonal" else 2.0,
                             "measured": scaling_exponent([r.d for r in sel], [r.seconds for r in sel])})
    _write_json(out / "complexity.json", {"rows": dict_rows, "fits": fits})
    for r in rows:
        print(f"{r.family:9s} n={r.n} m={r.m} c={r.c} d={r.d}: {r.seconds * 1e3:.2f} ms")
    for f in fits:
        print(f"{f['family']} exponent in {f['vary']}: measured {f['measured']:.2f}, "
              f"predicted {f['predicted']:.1f}")
    return EXIT_OK


HANDLERS = {
    "verify": cmd_verify,
    "synthetic-bipartite": cmd_synthetic_bipartite,
    "synthetic-multiclass": cmd_synthetic_multiclass,
    "oracle-diffuse": cmd_oracle_diffuse,
    "train": cmd_train,
    "complexity": cmd_complexity,
}


def main(argv=None) -> int:
    os.environ.setdefault("SHEAFLAB_THREADS", "1")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = resolve(args.command, flags, args.config)
    except (UsageError, OSError) as exc:
        print(f"sheaflab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", {"command": args.command, **cfg})
    try:
        return HANDLERS[args.command](cfg, out)
    except (UsageError, FileNotFoundError, GraphFormatError) as exc:
        print(f"sheaflab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphError, SheafError, OracleError, ValueError) as exc:
        print(f"sheaflab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DiffusionError, EnergyMismatchError, TrainingDivergedError, AssertionError,
            FloatingPointError) as exc:
        print(f"sheaflab: internal check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except Exception as exc:  # anything else is a bug, not a usage problem
        print(f"sheaflab: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
