"""Command-line workbench.

Subcommands: ``demo-sin``, ``complexity-demo``, ``select``, ``asymptotics``
and ``bench-ntk``.  Each run writes CSV files plus ``manifest.txt`` into its
own output directory.  Settings come from an optional ``key=value`` config
file, overridden by ``--set key=value`` and by the dedicated flags.

The true response never reaches a smoother constructor or a y-free
criterion: y-free paths build smoothers from covariates (and random build
targets), select, and only then apply the smoother to ``y``.
"""
from __future__ import annotations

import argparse
import csv
import logging
import platform
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, asymptotics, criteria, data, ntk, selection, smoothers
from .criteria import CriterionSpec

logger = logging.getLogger("yfree")

DEFAULTS = {
    "seed": "0",
    "reps": "10",
    "n_train": "500",
    "n_test": "100",
    "n_val": "500",
    "model": "lrr",
    "norm": "frobenius",
    "folds": "10",
    "standardize": "train",  # or "all": fit on train and test rows together
    "n": "10",
    "noise_sd": "0.3",
    "n_trees": "100",
    "width": "20",
    "eta": "0.01",
    "momentum": "0.95",
    "epochs": "1000",
    "monitor_every": "1",
    "synth_d": "20",
    "synth_snr": "5",
    "synth_rows": "",
    "classes": "3",
    "build": "random",  # or "zero"
    "task": "classification",
    "gamma_min": "0.5",
    "gamma_max": "2",
    "gamma_step": "0.001",
    "snr_min": "1",
    "snr_max": "80",
    "snr_step": "1",
    "sigma2": "1",
    "panel_snr": "1,5,20",
    "panel_gamma_max": "4",
    "panel_gamma_step": "0.01",
}

METHODS = {
    "msv": "y-free Frobenius (or --norm) MSV",
    "msv_tr": "y-free MSV-Tr",
    "gcv": "y-free GCV",
    "cv": "k-fold cross-validation (y)",
    "loocv": "leave-one-out (y)",
    "gcv_y": "GCV (y)",
}


# ------------------------------------------------------------- config ---

def read_config(path) -> dict:
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in DEFAULTS and k not in ("data", "target", "classification", "criterion"):
                raise ValueError(f"{path}:{lineno}: unknown key {k!r}")
            out[k] = v
    return out


class Config(dict):
    def int(self, k):
        return int(self[k])

    def float(self, k):
        return float(self[k])

    def floats(self, k):
        return [float(v) for v in str(self[k]).split(",") if v.strip()]


def build_config(args) -> Config:
    cfg = Config(DEFAULTS)
    if args.config:
        cfg.update(read_config(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg[k.strip()] = v.strip()
    flag_map = {"seed": "seed", "reps": "reps", "n_train": "n_train", "n_test": "n_test", "n_val": "n_val",
                "model": "model", "norm": "norm", "data": "data", "target": "target"}
    for attr, key in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            cfg[key] = str(v)
    if getattr(args, "criterion", None):
        cfg["criterion"] = ",".join(args.criterion)
    if getattr(args, "classification", False):
        cfg["classification"] = "1"
    if cfg.int("reps") < 1:
        raise ValueError("reps must be at least 1")
    return cfg


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_rows(path, header, rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_manifest(out: Path, command: str, cfg: Config) -> None:
    import scipy
    import sklearn

    lines = [f"command={command}", f"yfree={__version__}", f"generator={data.GENERATOR}",
             f"python={platform.python_version()}", f"numpy={np.__version__}", f"scipy={scipy.__version__}",
             f"scikit-learn={sklearn.__version__}"]
    lines += [f"{k}={cfg[k]}" for k in sorted(cfg)]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _workers() -> int:
    return selection.default_workers()


# ----------------------------------------------------------- demo-sin ---

def _nn_smoother_predict(X, X_v, X_q, y_build, monitor, width, eta, momentum, epochs, seed, every):
    """y-free network: returns the selected ``(S_q, f0_train, f0_q)`` triple and the trace."""
    net = ntk.init_network(X.shape[1], width, 1, seed=seed)
    extra = np.vstack([X_v, X_q])
    res = ntk.train_smoother(net, X, extra, y_build, "squared", eta, momentum, epochs, monitor,
                             n_val=X_v.shape[0], monitor_every=every)
    f0_train, f0_extra = res.offsets(X.shape[0])
    return res.best.S_star, f0_train, f0_extra[X_v.shape[0]:], res


def cmd_demo_sin(cfg: Config, out: Path) -> list:
    seed = cfg.int("seed")
    n = cfg.int("n")
    ds, xg, fg = data.synth_sin(n, cfg.float("noise_sd"), seed)
    X, y = ds.X, ds.response
    y_mean = y.mean()
    yc = y - y_mean
    Xg = xg[:, None]
    X_v = data.sample_validation_covariates(X, cfg.int("n_val"), seed + 1)
    msv = CriterionSpec("msv_norm", cfg["norm"])
    loo = CriterionSpec("loocv")
    rows = []
    curves = out / "curves"
    curves.mkdir(exist_ok=True)

    def emit(model, method, params, f):
        f = np.asarray(f).ravel() + y_mean
        write_rows(curves / f"{model}_{method}.csv", ["x", "f_hat"], zip(xg, f))
        rows.append([model, method, params, data.r_squared(fg, f)])

    for fam in ("spline", "krr", "knn"):
        grid = selection.sin_grid(fam, n)
        for method, spec, yy in (("y", loo, yc), ("y_free", msv, None)):
            res = selection.grid_select(fam, grid, spec, X, X_v, y=yy)
            sm = selection.get_family(fam).smoother(X, None, Xg, **res.chosen)
            res.write_csv(out / f"trace_{fam}_{method}.csv")
            emit(fam, method, ";".join(f"{k}={v:g}" for k, v in res.chosen.items()), sm.S_star @ yc)

    n_trees = cfg.int("n_trees")
    forest = smoothers.fit_forest(X, yc, n_trees, seed)
    emit("rf", "y", f"n_trees={n_trees}", smoothers.rf_smoother(forest, X, None, Xg).S_star @ yc)
    y_r = data.random_response(n, "gaussian", seed + 2)
    forest = smoothers.fit_forest(X, y_r, n_trees, seed)
    emit("rf", "y_free", f"n_trees={n_trees}", smoothers.rf_smoother(forest, X, None, Xg).S_star @ yc)

    width, eta, mom, epochs = cfg.int("width"), cfg.float("eta"), cfg.float("momentum"), cfg.int("epochs")
    net = ntk.init_network(1, width, 1, seed=seed)
    theta, ep, _ = ntk.train_supervised(net, X, yc, "squared", eta, mom, epochs, 0.2, seed)
    emit("nn", "y", f"epochs={ep}", ntk.forward(net, Xg, theta))
    S_q, f0_tr, f0_q, res = _nn_smoother_predict(X, X_v, Xg, y_r, msv, width, eta, mom, epochs, seed,
                                                 cfg.int("monitor_every"))
    ntk.write_training_log(out / "nn_y_free_log.csv", res.trace)
    emit("nn", "y_free", f"epochs={res.best_epoch}", smoothers.predict(S_q, yc, f0_q, f0_tr))

    write_rows(out / "summary.csv", ["model", "method", "params", "r2"], rows)
    return rows


# ---------------------------------------------------- complexity-demo ---

COMPLEXITY_SIGMAS = (1.3, 0.16, 0.01)


def complexity_table(X, y, x_grid, sigmas=COMPLEXITY_SIGMAS, lam=0.0):
    """Per bandwidth: ``(sigma, lam, edof, msv_tr, max in-sample residual, S_grid)``."""
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for s in sigmas:
            sm = smoothers.krr_smoother(X, x_grid[:, None], lam, s)
            resid = float(np.max(np.abs(sm.S @ y - y)))
            out.append((s, lam, criteria.edof(sm.S), criteria.msv_tr(sm.S_v).value, resid, sm.S_v))
    return out


def cmd_complexity_demo(cfg: Config, out: Path) -> list:
    seed = cfg.int("seed")
    ds, xg, _ = data.synth_sin(cfg.int("n"), cfg.float("noise_sd"), seed)
    y = ds.response
    table = complexity_table(ds.X, y, xg)
    rows = []
    for s, lam, ed, mt, resid, S_g in table:
        write_rows(out / f"krr_sigma_{s:g}.csv", ["x", "f_hat"], zip(xg, S_g @ y))
        rows.append([s, lam, ed, mt, resid])
    write_rows(out / "complexity.csv", ["sigma", "lam", "edof", "msv_tr", "max_residual"], rows)
    write_rows(out / "train.csv", ["x", "y"], zip(ds.X[:, 0], y))
    return rows


# -------------------------------------------------------------- select ---

def load_dataset(cfg: Config) -> data.Dataset:
    src = cfg.get("data", "")
    cls = cfg.get("classification", "0") not in ("0", "", "false")
    if src in ("", "synth-linear"):
        rows = cfg.int("n_train") + cfg.int("n_test") if not cfg["synth_rows"] else cfg.int("synth_rows")
        ds, _ = data.synth_linear(rows, cfg.int("synth_d"), cfg.float("synth_snr"), cfg.int("seed"))
        return ds
    if src == "synth-sin":
        return data.synth_sin(cfg.int("n_train") + cfg.int("n_test"), cfg.float("noise_sd"), cfg.int("seed"))[0]
    if not cfg.get("target"):
        raise ValueError("--target is required with a CSV dataset")
    return data.read_csv(src, cfg["target"], cls)


def _method_spec(method: str, norm: str, folds: int):
    if method == "msv":
        return CriterionSpec("msv_norm", norm)
    if method == "msv_tr":
        return CriterionSpec("msv_tr")
    if method == "gcv":
        return CriterionSpec("gcv_yfree", norm)
    if method == "loocv":
        return CriterionSpec("loocv")
    if method == "gcv_y":
        return CriterionSpec("gcv")
    if method == "cv":
        return CriterionSpec("kfold_cv", folds=folds)
    raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}")


def split_rows(n: int, n_train: int, n_test: int, seed: int):
    if n_train + n_test > n:
        raise ValueError(f"dataset has {n} rows, split needs {n_train + n_test}")
    perm = data.make_rng(seed).permutation(n)
    return perm[:n_train], perm[n_train:n_train + n_test]


def _score(ds, test_target, pred, c):
    if ds.is_classification:
        return data.accuracy(test_target, data.decode_labels(pred, c))
    return data.r_squared(test_target, pred)


def run_repetition(ds: data.Dataset, cfg: Config, methods, rep: int) -> list:
    """One train/test/validation draw; returns ``(method, score, chosen)`` rows."""
    seed = cfg.int("seed") + 1000 * rep
    tr, te = split_rows(ds.n, cfg.int("n_train"), cfg.int("n_test"), seed)
    fit_rows = np.concatenate([tr, te]) if cfg["standardize"] == "all" else tr
    stats = data.fit_standardization(ds.X[fit_rows])
    Xtr, Xte = stats.apply(ds.X[tr]), stats.apply(ds.X[te])
    c = ds.n_classes
    if ds.is_classification:
        target = data.one_hot_compact(ds.labels[tr], c)
        shift = 0.0
        test_target = ds.labels[te]
    else:
        shift = ds.response[tr].mean()
        target = ds.response[tr] - shift
        test_target = ds.response[te]
    X_v = data.sample_validation_covariates(Xtr, cfg.int("n_val"), seed + 1)
    model = cfg["model"]
    rows = []
    if model == "rf":
        for method in methods:
            if method == "y":
                build = ds.labels[tr] if ds.is_classification else target
            elif method == "y_free":
                build = (data.make_rng(seed + 2).integers(1, c + 1, size=len(tr)) if ds.is_classification
                         else data.random_response(len(tr), "gaussian", seed + 2))
            else:
                raise ValueError("random forests take methods 'y' and 'y_free'")
            forest = smoothers.fit_forest(Xtr, build, cfg.int("n_trees"), seed, ds.is_classification)
            if ds.is_classification:
                pred = smoothers.rf_classify(forest, Xtr, Xte, ds.labels[tr], c)
                score = data.accuracy(test_target, pred)
            else:
                score = data.r_squared(test_target, smoothers.rf_smoother(forest, Xtr, Xte).S_v @ target + shift)
            rows.append((method, score, f"n_trees={cfg['n_trees']}"))
        return rows
    fam = selection.get_family(model)
    grid = selection.default_grid(model, len(tr))
    for method in methods:
        spec = _method_spec(method, cfg["norm"], cfg.int("folds"))
        if spec.kind == "kfold_cv":
            g = grid
            if model == "knn":
                kmax = len(tr) - int(np.ceil(len(tr) / spec.folds))
                g = selection.HyperGrid({"k": [k for k in grid.axes["k"] if k <= kmax]})
            if ds.is_classification:
                res = selection.kfold_cv_select(fam, g, spec.folds, Xtr, labels=ds.labels[tr], n_classes=c,
                                                seed=seed + 3, workers=1)
            else:
                res = selection.kfold_cv_select(fam, g, spec.folds, Xtr, y=target, seed=seed + 3, workers=1)
        else:
            res = selection.grid_select(fam, grid, spec, Xtr, X_v, y=None if spec.y_free else target, workers=1)
        sm = fam.smoother(Xtr, Xte, None, **res.chosen)
        pred = sm.S_v @ target + shift
        rows.append((method, _score(ds, test_target, pred, c),
                     ";".join(f"{k}={v:g}" for k, v in res.chosen.items())))
    return rows


def quartiles(v):
    return tuple(float(q) for q in np.quantile(np.asarray(v, dtype=float), [0.25, 0.5, 0.75]))


def cmd_select(cfg: Config, out: Path) -> list:
    ds = load_dataset(cfg)
    default = "y,y_free" if cfg["model"] == "rf" else "msv,gcv,cv"
    methods = [m for m in cfg.get("criterion", default).split(",") if m]
    reps = cfg.int("reps")
    workers = _workers()
    run = lambda r: run_repetition(ds, cfg, methods, r)  # noqa: E731
    if workers > 1 and reps > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(reps)))
    else:
        results = [run(r) for r in range(reps)]
    write_rows(out / "repetitions.csv", ["rep", "method", "score", "chosen"],
               [(r, m, s, ch) for r, rows in enumerate(results) for m, s, ch in rows])
    name = Path(cfg.get("data", "")).stem or "synth-linear"
    table = []
    for m in methods:
        scores = [s for rows in results for mm, s, _ in rows if mm == m]
        table.append([name, cfg["model"], m, *quartiles(scores)])
    write_rows(out / "table.csv", ["data", "model", "method", "q1", "q2", "q3"], table)
    return table


# --------------------------------------------------------- asymptotics ---

def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    """``lo, lo + step, ...`` up to ``hi`` inclusive, never past it."""
    if step <= 0 or hi < lo:
        raise ValueError(f"bad range {lo}..{hi} step {step}")
    return lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1)


def cmd_asymptotics(cfg: Config, out: Path) -> dict:
    s2 = cfg.float("sigma2")
    gmin, gmax, gstep = cfg.float("gamma_min"), cfg.float("gamma_max"), cfg.float("gamma_step")
    gammas = _axis(gmin, gmax, gstep)
    smin, smax, sstep = cfg.float("snr_min"), cfg.float("snr_max"), cfg.float("snr_step")
    snrs = _axis(smin, smax, sstep)
    mx, (g_at, s_at), table = asymptotics.ratio_scan(gammas, snrs, s2)
    cols = ["gamma", "snr", "lambda_T", "lambda_opt", "v_T", "r_T", "r_opt", "r_zero", "ratio", "divergent"]
    write_rows(out / "ratio_scan.csv", cols, zip(*(table[c] for c in cols)))

    pstep = cfg.float("panel_gamma_step")
    pg = pstep * np.arange(1, int(round(cfg.float("panel_gamma_max") / pstep)) + 1)
    panel = []
    for snr in cfg.floats("panel_snr"):
        _, _, t = asymptotics.ratio_scan(pg, [snr], s2)
        panel += list(zip(t["gamma"], t["snr"], t["r_T"], t["r_opt"], t["r_zero"], t["ratio"]))
    write_rows(out / "risk_curves.csv", ["gamma", "snr", "r_T", "r_opt", "r_zero", "ratio"], panel)
    summary = {"max_ratio": mx, "gamma": g_at, "snr": s_at, "n_points": len(table["gamma"])}
    write_rows(out / "summary.csv", list(summary), [list(summary.values())])
    return summary


# ----------------------------------------------------------- bench-ntk ---

def ntk_task(cfg: Config):
    """Toy task: Gaussian class blobs (classification) or a smooth 2-d surface (regression)."""
    seed = cfg.int("seed")
    rng = data.make_rng(seed)
    n = cfg.int("n_train") + cfg.int("n_test")
    if cfg["task"] == "classification":
        c = cfg.int("classes")
        lab = rng.integers(1, c + 1, size=n)
        ang = 2 * np.pi * (lab - 1) / c
        X = np.column_stack([np.cos(ang), np.sin(ang)]) * 1.5 + rng.standard_normal((n, 2))
        return data.Dataset(X, labels=lab, n_classes=c)
    X = rng.uniform(-1, 1, size=(n, 2))
    y = np.sin(2 * X[:, 0]) + X[:, 1] ** 2 + 0.2 * rng.standard_normal(n)
    return data.Dataset(X, response=y)


def cmd_bench_ntk(cfg: Config, out: Path) -> list:
    seed = cfg.int("seed")
    ds = load_dataset(cfg) if cfg.get("data") else ntk_task(cfg)
    n_tr, n_te = cfg.int("n_train"), cfg.int("n_test")
    if n_tr > 100:
        logger.warning("n_train=%d: the smoother recursion costs O(steps (n+m) n p)", n_tr)
    tr, te = split_rows(ds.n, n_tr, n_te, seed)
    stats = data.fit_standardization(ds.X[tr])
    Xtr, Xte = stats.apply(ds.X[tr]), stats.apply(ds.X[te])
    X_v = data.sample_validation_covariates(Xtr, cfg.int("n_val"), seed + 1)
    width, eta, mom, epochs = cfg.int("width"), cfg.float("eta"), cfg.float("momentum"), cfg.int("epochs")
    cls = ds.is_classification
    c = ds.n_classes
    d_out = c - 1 if cls else 1
    loss = "cross_entropy" if cls else "squared"
    head = "softmax" if cls else "identity"
    p = ntk.init_network(Xtr.shape[1], width, d_out, seed=seed, head=head).n_params
    est = epochs * (n_tr + X_v.shape[0] + n_te) * d_out * p * n_tr * d_out
    print(f"bench-ntk: n={n_tr} m={X_v.shape[0] + n_te} p={p} epochs={epochs}, about {est:.2e} flops")
    if cls:
        target = data.one_hot_compact(ds.labels[tr], c)
        shift = 0.0
    else:
        shift = ds.response[tr].mean()
        target = (ds.response[tr] - shift)[:, None]

    def score(F):
        F = np.asarray(F).reshape(len(te), d_out)
        if cls:
            return data.accuracy(ds.labels[te], data.decode_labels(F, c))
        return data.r_squared(ds.response[te], F[:, 0] + shift)

    if cls:
        # the zero matrix encodes "every row is class c"
        builds = {"random": data.random_response(n_tr, "categorical", seed + 2, c=c), "zero": np.zeros((n_tr, d_out))}
    else:
        builds = {"random": data.random_response(n_tr, "gaussian", seed + 2)[:, None], "zero": np.zeros((n_tr, 1))}
    monitors = {"msv": CriterionSpec("msv_norm", cfg["norm"]), "gcv": CriterionSpec("gcv_yfree", cfg["norm"])}
    rows = []
    extra = np.vstack([X_v, Xte])
    for build_name, y_build in builds.items():
        if cfg["build"] != "both" and build_name != cfg["build"]:
            continue
        for mon_name, spec in monitors.items():
            net = ntk.init_network(Xtr.shape[1], width, d_out, seed=seed, head=head)
            res = ntk.train_smoother(net, Xtr, extra, y_build, loss, eta, mom, epochs, spec,
                                     n_val=X_v.shape[0], monitor_every=cfg.int("monitor_every"))
            f0_tr, f0_x = res.offsets(n_tr * d_out)
            pred = smoothers.predict(res.best.S_star, target.ravel(), f0_x[X_v.shape[0] * d_out:], f0_tr)
            tag = f"{build_name}_{mon_name}"
            ntk.write_training_log(out / f"log_{tag}.csv", res.trace)
            rows.append([tag, res.best_epoch, score(pred)])
    net = ntk.init_network(Xtr.shape[1], width, d_out, seed=seed, head=head)
    theta, ep, _ = ntk.train_supervised(net, Xtr, target, loss, eta, mom, epochs, 0.2, seed)
    rows.append(["standard", ep, score(ntk.forward(net, Xte, theta))])
    write_rows(out / "results.csv", ["run", "epoch", "score"], rows)
    return rows


# ---------------------------------------------------------------- main ---

COMMANDS = {
    "demo-sin": cmd_demo_sin,
    "complexity-demo": cmd_complexity_demo,
    "select": cmd_select,
    "asymptotics": cmd_asymptotics,
    "bench-ntk": cmd_bench_ntk,
}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="yfree", description="y-free model selection workbench")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value settings file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
        sp.add_argument("--out", default=None, help="run directory (default runs/<command>)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("select", "bench-ntk"):
            sp.add_argument("--data", help="CSV path, 'synth-linear' or 'synth-sin'")
            sp.add_argument("--target", help="target column of the CSV")
            sp.add_argument("--classification", action="store_true")
            sp.add_argument("--n-train", dest="n_train", type=int)
            sp.add_argument("--n-test", dest="n_test", type=int)
            sp.add_argument("--n-val", dest="n_val", type=int)
            sp.add_argument("--norm", choices=criteria.NORMS)
        if name == "select":
            sp.add_argument("--model", choices=sorted(selection.FAMILIES) + ["rf"])
            sp.add_argument("--criterion", action="append", help="method (repeatable): " + ", ".join(METHODS))
            sp.add_argument("--reps", type=int)
        if name in ("demo-sin",):
            sp.add_argument("--norm", choices=criteria.NORMS)
            sp.add_argument("--n-val", dest="n_val", type=int)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        out = Path(args.out or Path("runs") / args.command)
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, args.command, cfg)
        result = COMMANDS[args.command](cfg, out)
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"yfree {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if isinstance(result, dict):
        print(", ".join(f"{k}={_fmt(v)}" for k, v in result.items()))
    else:
        for row in result:
            print(",".join(str(_fmt(v)) for v in row))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
