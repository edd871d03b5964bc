"""Command-line entry point: ``ted train|evaluate|ted-run|oracle|testbed``."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time

import numpy as np

from . import audit, oracle
from .config import ConfigError, RunConfig, load_config, parse_config
from .evaluation import (EvalConfig, optimize_benchmarks, per_run_values, relative_cost_gap,
                         relative_profit_gap, run_ted, summarize)
from .nn import WeightFileError, load_weights, save_weights
from .params import sample_parameterization
from .policies import feature_length, initial_policy, neural
from .sim import InstanceTable
from .superdcl import superdcl_train
from .testbed import build_testbed, load_testbed, save_testbed, with_lead_window

log = logging.getLogger("ted")
COMMANDS = ("train", "evaluate", "ted-run", "oracle", "testbed")


def _setup_logging(out):
    log.handlers.clear()
    log.setLevel(logging.INFO)
    fmt = logging.Formatter("%(asctime)s %(message)s", "%H:%M:%S")
    for h in (logging.FileHandler(os.path.join(out, "log.txt")), logging.StreamHandler(sys.stderr)):
        h.setFormatter(fmt)
        log.addHandler(h)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _instances(cfg: RunConfig, prefix: str):
    bounds = cfg.bounds
    path, case, limit = cfg[f"{prefix}.instances"], cfg[f"{prefix}.case"], cfg[f"{prefix}.limit"]
    if path:
        pars = load_testbed(path, bounds.eps)
    elif case == 0:
        # held-out draws from the configured space, on a stream disjoint from training
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed or 0, 0xE7A1]))
        pars = [sample_parameterization(bounds, rng) for _ in range(limit or 20)]
    else:
        pars = build_testbed(case)
    if limit:
        pars = pars[:limit]
    return [with_lead_window(p, bounds.L_max) for p in pars]


def _load_net(path, bounds):
    if not path:
        raise ConfigError("a weight file is required (set eval.weights or ted.weights)")
    if not os.path.exists(path):
        raise ConfigError(f"weight file not found: {path}")
    net = load_weights(path)
    if net.n_in != feature_length(bounds):
        raise ConfigError(f"{path}: network expects {net.n_in} features, bounds give {feature_length(bounds)}")
    return net


# -- commands ---------------------------------------------------------------

def cmd_train(cfg: RunConfig, out):
    cfg.require_seed()
    snap = cfg.snapshot()
    snap_path = os.path.join(out, "config.snapshot")
    if os.path.exists(snap_path):
        with open(snap_path) as fh:
            if fh.read() != snap:
                raise ConfigError(f"{out} holds a run with a different configuration")
    else:
        with open(snap_path, "w") as fh:
            fh.write(snap)
    dcl = cfg.dcl
    start = []
    while len(start) < dcl.iterations and os.path.exists(os.path.join(out, f"iter_{len(start) + 1}.net")):
        start.append(load_weights(os.path.join(out, f"iter_{len(start) + 1}.net")))
    if start:
        log.info("resuming after %d completed iteration(s)", len(start))
    metrics = os.path.join(out, "metrics.csv")
    header = "iteration,samples,train_accuracy,val_accuracy,epochs,best_epoch\n"
    if not start or not os.path.exists(metrics):
        with open(metrics, "w") as fh:
            fh.write(header)
    else:   # drop rows of iterations whose weights never landed
        with open(metrics) as fh:
            kept = fh.readlines()[: 1 + len(start)]
        with open(metrics, "w") as fh:
            fh.writelines(kept)
    t0 = time.time()

    def done(i, net, info, data):
        save_weights(net, os.path.join(out, f"iter_{i + 1}.net"))
        with open(metrics, "a") as fh:
            fh.write(",".join(_fmt(v) for v in (i + 1, info.samples, info.train_accuracy,
                                                info.val_accuracy, info.epochs, info.best_epoch)) + "\n")
        log.info("iteration %d: %d samples, val acc %.4f, %.0f s", i + 1, info.samples,
                 info.val_accuracy, time.time() - t0)

    superdcl_train(dcl, cfg.bounds, cfg.train, cfg.seed, on_iteration=done, start=start)
    return 0


def cmd_evaluate(cfg: RunConfig, out):
    cfg.require_seed()
    bounds, ev = cfg.bounds, cfg.eval
    which = cfg["eval.policy"]
    kinds = {"all": ["neural", "pi0", "bsp", "cbsp"]}.get(which, [which])
    for k in kinds:
        if k not in ("neural", "pi0", "bsp", "cbsp"):
            raise ConfigError(f"unknown eval.policy '{which}'")
    pars = _instances(cfg, "eval")
    table = InstanceTable(pars, bounds)
    results = {}   # policy -> list of (mean, ci, description)
    if "neural" in kinds:
        net = _load_net(cfg["eval.weights"], bounds)
        vals = per_run_values(neural(net), table, ev)
        results["neural"] = [summarize(v) + ("neural",) for v in vals]
    if "pi0" in kinds:
        vals = per_run_values(initial_policy(), table, ev)
        results["pi0"] = [summarize(v) + ("order-up-to I_max",) for v in vals]
    for kind in ("bsp", "cbsp"):
        if kind in kinds:
            tuned = optimize_benchmarks(table, kind, ev)
            rows = []
            for i, (handle, _) in enumerate(tuned):
                rows.append(summarize(per_run_values(handle, table, ev, [i])[0]) + (handle.describe(),))
            results[kind] = rows
            log.info("tuned %s on %d instances", kind, len(pars))
    gap = relative_cost_gap if ev.objective == "cost" else relative_profit_gap
    baselines = [k for k in ("bsp", "cbsp") if k in results]
    rows = []
    for i in range(len(pars)):
        for pol, res in results.items():
            mean, ci, desc = res[i]
            gaps = [gap(mean, results[b][i][0]) for b in baselines]
            precise = bool(ci < 0.01 * abs(mean)) if ev.runs > 1 else False
            rows.append([i, pol, desc, ev.runs, ev.horizon, mean, ci, int(precise), *gaps])
    header = ["instance", "policy", "detail", "runs", "horizon", "mean", "ci", "precise"]
    header += [f"gap_vs_{b}" for b in baselines]
    _write_csv(os.path.join(out, "evaluate.csv"), header, rows)
    for pol in results:
        for b in baselines:
            g = np.mean([gap(results[pol][i][0], results[b][i][0]) for i in range(len(pars))])
            log.info("%s vs %s: mean relative gap %+.4f", pol, b, g)
    return 0


def cmd_ted(cfg: RunConfig, out):
    bounds = cfg.bounds
    net = _load_net(cfg["ted.weights"], bounds)
    pars = _instances(cfg, "ted")
    ev = EvalConfig(runs=cfg["ted.runs"], horizon=max(cfg["ted.horizons"]), warmup=0,
                    seed=cfg.seed or 0, objective=cfg.eval.objective)
    hz = cfg["ted.horizons"]
    dk, lk = cfg["ted.demand_known"], cfg["ted.lead_known"]
    est = run_ted(pars, net, bounds, ev, hz, demand_known=dk, lead_known=lk)
    ref = run_ted(pars, net, bounds, ev, hz, demand_known=True, lead_known=True)
    rows = []
    for h in est.horizons:
        gaps = []
        for i in range(len(pars)):
            m, ci = summarize(est.cost[h][i])
            m_ref, _ = summarize(ref.cost[h][i])
            g = relative_cost_gap(m, m_ref)
            gaps.append(g)
            rows.append([i, h, ev.runs, int(dk), int(lk), m, ci, m_ref, g])
        log.info("horizon %d: mean gap to known-parameter run %+.4f", h, np.mean(gaps))
    _write_csv(os.path.join(out, "ted.csv"),
               ["instance", "horizon", "runs", "demand_known", "lead_known", "mean_cost", "ci",
                "known_cost", "gap"], rows)
    return 0


def cmd_oracle(cfg: RunConfig, out):
    seed = cfg.seed or 0
    ss = np.random.SeedSequence(seed)
    bridge_rng, bound_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    ev = EvalConfig(runs=cfg["oracle.runs"], horizon=2000, warmup=100, seed=seed)
    rows, failed = [], 0
    for t in range(cfg["oracle.tiny"]):
        r = audit.dp_bridge(audit.tiny_instance(bridge_rng), ev)
        rows.append(["bridge", t, abs(r.sim_mean - r.gain), 3 * r.ci, int(r.ok)])
        failed += not r.ok
    for t in range(cfg["oracle.trials"]):
        r = audit.bound_trial(bound_rng, cfg["oracle.horizon"], flip=cfg["oracle.flip_distance"])
        rows.append(["bound", t, r.lhs, r.rhs, int(r.holds)])
        failed += not r.holds
    par = audit.tiny_instance(bound_rng)
    d0 = oracle.param_distance(par, par)
    rows.append(["identity", 0, d0, 0.0, int(d0 == 0.0)])
    failed += d0 != 0.0
    _write_csv(os.path.join(out, "oracle.csv"), ["check", "trial", "lhs", "rhs", "holds"], rows)
    log.info("%d of %d checks failed", failed, len(rows))
    return 1 if failed else 0


def cmd_testbed(cfg: RunConfig, out):
    cases = [cfg["testbed.case"]] if cfg["testbed.case"] else [1, 2, 3]
    for c in cases:
        pars = build_testbed(c)
        save_testbed(pars, os.path.join(out, f"case{c}.txt"))
        log.info("case %d: %d instances", c, len(pars))
    return 0


HANDLERS = {"train": cmd_train, "evaluate": cmd_evaluate, "ted-run": cmd_ted,
            "oracle": cmd_oracle, "testbed": cmd_testbed}


def main(argv=None):
    ap = argparse.ArgumentParser(prog="ted", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat key=value configuration file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="run directory")
    args = ap.parse_args(argv)
    overrides = {"seed": args.seed, "out": args.out}
    try:
        if args.config:
            cfg = load_config(args.config, overrides, args.command)
        else:
            cfg = parse_config("", overrides, args.command)
        out = cfg["out"]
        os.makedirs(out, exist_ok=True)
        _setup_logging(out)
        return HANDLERS[args.command](cfg, out)
    except (ConfigError, WeightFileError, OSError) as err:
        print(f"ted {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
