"""Command-line entry points: prepare-state, run-qec, train, evaluate, enumerate."""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as C
from .checkpoints import load_checkpoint, save_checkpoint
from .gkp import (TruncationError, logical_ket, logical_state, mean_photon, pauli_operator,
                  stabilizer, wigner, write_amplitudes, write_wigner_csv)
from .policies import StandardPolicy, make_policy

log = logging.getLogger("gkpqec")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class NumericalFailure(RuntimeError):
    """Trace or positivity violated beyond tolerance."""


def run_dir(base, label: str) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    root = Path(base)
    path = root / f"{stamp}-{label}"
    k = 1
    while path.exists():
        path = root / f"{stamp}-{label}-{k}"
        k += 1
    path.mkdir(parents=True)
    return path


def check_state(rho, where: str, trace_tol=1e-8, eig_tol=1e-7) -> None:
    tr = float(np.real(np.trace(rho)))
    if not np.all(np.isfinite(rho)) or abs(tr - 1) > trace_tol:
        raise NumericalFailure(f"{where}: trace {tr!r} outside tolerance")
    lo = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if lo < -eig_tol:
        raise NumericalFailure(f"{where}: minimum eigenvalue {lo:.3g}")


def _policy(c):
    p = c["policy"]
    if p["checkpoint"]:
        return load_checkpoint(p["checkpoint"])["policy"]
    return make_policy(p["variant"], seed=p["seed"], bias_init=p["bias_init"],
                       zero_output=p["zero_output"], depth=p["depth"])


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# -- commands -------------------------------------------------------------------------

def cmd_prepare_state(c, out: Path) -> dict:
    cfg = C.hilbert(c)
    lat = C.lattice(c)
    spec = C.state_spec(c)
    psi = logical_ket(spec)
    rho = np.outer(psi, psi.conj())
    report = {
        "label": spec.label, "delta": spec.delta, "lattice": lat.kind, "n_fock": cfg.n_fock,
        "mean_photon": mean_photon(rho),
        "stabilizers": {w: float(np.real(np.vdot(psi, stabilizer(lat, w, cfg) @ psi))) for w in "XZ"},
        "paulis": {w: float(np.real(np.vdot(psi, pauli_operator(lat, w, cfg) @ psi))) for w in "XYZ"},
        "delta_ladder": [],
    }
    for d in c["prepare"]["delta_ladder"]:
        try:
            s = C.state_spec(c, delta=float(d))
            r = logical_state(s)
        except TruncationError as e:
            report["delta_ladder"].append({"delta": d, "error": str(e)})
            continue
        report["delta_ladder"].append({
            "delta": d, "mean_photon": mean_photon(r),
            "S_X": float(np.real(np.trace(stabilizer(lat, "X", cfg) @ r))),
            "S_Z": float(np.real(np.trace(stabilizer(lat, "Z", cfg) @ r)))})
    write_amplitudes(out / "state.json", psi)
    write_amplitudes(out / "state.csv", psi)
    ext, npts = c["prepare"]["wigner_extent"], c["prepare"]["wigner_points"]
    grid = np.linspace(-ext, ext, npts)
    write_wigner_csv(out / "wigner.csv", grid, grid, wigner(rho, grid, grid))
    (out / "report.json").write_text(json.dumps(report, indent=2))
    return report


def cmd_run_qec(c, out: Path, threads: int = 1) -> dict:
    from .evaluation import LABEL_PAULI, pauli_time_series
    from .grape import frame_sign
    from .sbs import run_trajectory

    eng = C.engine(c)
    policy = _policy(c)
    r = c["run"]
    mode = r["mode"]
    summary = {"mode": mode, "labels": {}}
    lat = C.lattice(c)
    for label in r["labels"]:
        psi = logical_ket(C.state_spec(c, label=label))
        op = pauli_operator(lat, LABEL_PAULI[label], eng.cfg)
        sign0 = -1.0 if label.startswith("-") else 1.0
        tag = label.replace("+", "p").replace("-", "m")
        if mode == "forced":
            if not r["outcomes"]:
                raise C.ConfigError("run.outcomes: forced mode needs an outcome string")
            seq = r["outcomes"]
            tr = run_trajectory(psi, policy, len(seq), eng, mode="forced", outcomes=seq, z_op=op)
            check_state(tr.final_rho, "final state")
            tr.to_jsonl(out / f"trajectory-{tag}.jsonl")
            v0 = sign0 * float(np.real(np.vdot(psi, op @ psi)))
            rows = [[0, v0, 0.0]]
            for k, z in enumerate(tr.z_snapshots[1::2], start=1):
                rows.append([k, sign0 * frame_sign(LABEL_PAULI[label], k) * z, 0.0])
            _write_csv(out / f"pauli-{tag}.csv", ["t_over_tau", "mean", "std"], rows)
            summary["labels"][label] = {"probability": tr.probability, "return": tr.return_value}
            continue
        n_half = 2 * r["n_cycles"]
        rng = np.random.default_rng(r["seed"])
        logs = []
        if mode == "stochastic" and n_half:
            with open(out / f"trajectories-{tag}.jsonl", "w") as fh:
                cache = {}
                for b in range(min(r["batch_size"], 64)):
                    tr = run_trajectory(psi, policy, n_half, eng, mode="stochastic", rng=rng,
                                        z_op=op, cache=cache)
                    check_state(tr.final_rho, "final state")
                    for k, rec in enumerate(tr.records):
                        fh.write(json.dumps({"trajectory": b, "half_cycle": k, "outcome": rec.outcome,
                                             "p": rec.probability, "log_p": rec.log_prob,
                                             "params": tr.params_used[k].tolist(),
                                             "z": tr.z_snapshots[k]}) + "\n")
                    logs.append(tr.return_value)
        elif n_half:
            tr = run_trajectory(psi, policy, n_half, eng, mode=mode, z_op=op)
            check_state(tr.final_rho, "final state")
            logs.append(tr.return_value)
        s = pauli_time_series(policy, eng, label, r["n_cycles"], r["n_batches"], r["batch_size"],
                              r["seed"], c["code"]["delta"], initial=psi,
                              mode=None if mode == "stochastic" else mode)
        s.write_csv(out / f"pauli-{tag}.csv")
        summary["labels"][label] = {"final_mean": float(s.mean[-1]),
                                    "mean_return": float(np.mean(logs)) if logs else 1.0}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def cmd_train(c, out: Path, threads: int = 1) -> dict:
    from .grape import train_agent

    cfg = C.train_config(c)
    variant = c["train"].get("policy") or "gru"
    resume = c["train"].get("resume")
    eng = cfg.engine()
    rho0 = cfg.initial_state()
    meta = {"seed": cfg.seed, "noise_preset": cfg.noise_preset, "variant": variant,
            "n_cycles_train": cfg.n_cycles_train, "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate}

    def one(k):
        from dataclasses import asdict
        from .grape import TrainConfig
        seed = cfg.seed + k
        acfg = TrainConfig(**{**asdict(cfg), "seed": seed})
        if resume:
            ck = load_checkpoint(resume)
            run, pol = ck["run"], ck["policy"]
        else:
            run = None
            pol = make_policy(variant, seed=seed, bias_init=cfg.bias_init, zero_output=cfg.zero_output,
                              depth=2 * cfg.n_cycles_train)
        run = train_agent(acfg, pol, run=run, engine=eng, rho0=rho0)
        save_checkpoint(out / f"agent-{k}.json", run, {**meta, "seed": run.seed, "epochs": run.epochs_done})
        _write_csv(out / f"curve-agent-{k}.csv", ["epoch", "infidelity", "z"],
                   [[p.epoch, repr(p.infidelity), repr(p.z_expectation)] for p in run.curve])
        return run

    n_agents = 1 if resume else cfg.n_agents
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        runs = list(ex.map(one, range(n_agents)))
    ok = [r for r in runs if not r.diverged] or runs
    best = min(range(len(runs)), key=lambda k: (runs[k] not in ok, runs[k].curve[-1].infidelity))
    save_checkpoint(out / "best.json", runs[best], {**meta, "agent": best})
    summary = {"agents": [{"seed": r.seed, "epochs": r.epochs_done, "diverged": r.diverged,
                           "final_infidelity": r.curve[-1].infidelity} for r in runs],
               "best_agent": best}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def _named_policy(name: str, c):
    if name == "standard":
        return StandardPolicy(), c
    if name == "autonomous":
        c2 = json.loads(json.dumps(c))
        c2["schedule"]["kind"] = "autonomous"
        return StandardPolicy(), c2
    return load_checkpoint(name)["policy"], c


def cmd_evaluate(c, out: Path, threads: int = 1) -> dict:
    from .evaluation import (BiasTable, BiasedPolicy, evaluate_lifetimes, injection_grid,
                             lifetime_from_series)

    e = c["evaluate"]
    results = {}

    def job(name):
        pol, cc = _named_policy(name, c)
        if e["bias"]:
            pol = BiasedPolicy(pol, BiasTable())
        res = evaluate_lifetimes(pol, C.engine(cc), tuple(e["labels"]), e["n_cycles"], e["n_batches"],
                                 e["batch_size"], e["seed"], c["code"]["delta"],
                                 c["code"]["max_truncation_loss"])
        return name, res

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        done = list(ex.map(job, e["policies"]))
    table = []
    for name, res in done:
        tag = Path(name).stem
        for lab, s in res["series"].items():
            s.write_csv(out / f"pauli-{tag}-{lab.replace('+', 'p').replace('-', 'm')}.csv")
        entry = {"lifetimes": {lab: f.to_dict() for lab, f in res["lifetimes"].items()}}
        for k in ("aggregate_T", "channel_fidelity_per_cycle", "entanglement_infidelity_per_cycle"):
            if k in res:
                entry[k] = None if math.isinf(res[k]) else res[k]
        results[name] = entry
        table.append([name, *[entry["lifetimes"][lab]["T"] for lab in e["labels"]],
                      entry.get("aggregate_T")])
    _write_csv(out / "comparison.csv", ["policy", *[f"T{lab}" for lab in e["labels"]], "T_aggregate"], table)
    if e["injection_alphas"]:
        pol, cc = _named_policy(e["policies"][0], c)
        rows = injection_grid(pol, C.engine(cc), tuple(e["injection_alphas"]), e["injection_cycles"],
                              c["code"]["delta"], c["code"]["max_truncation_loss"])
        _write_csv(out / "injection.csv", ["alpha", "cycle", "z"],
                   [[r["alpha"], r["cycle"], r["z"]] for r in rows])
    (out / "summary.json").write_text(json.dumps(results, indent=2))
    return results


def cmd_enumerate(c, out: Path, threads: int = 1) -> dict:
    from .grape import optimize_lookup
    from .sbs import enumerate_branches, expected_return

    eng = C.engine(c)
    n = c["enumerate"]["n_half_cycles"]
    policy = _policy(c)
    lat = C.lattice(c)
    psi = logical_ket(C.state_spec(c, label="+Z"))
    z = pauli_operator(lat, "Z", eng.cfg)
    branches = enumerate_branches(psi, policy, n, eng)
    rows = []
    for b in branches:
        rc = b.final_rho[0::2, 0::2] + b.final_rho[1::2, 1::2]
        rows.append([b.outcomes, repr(b.probability), repr(float(np.real(np.sum(z.T * rc)))),
                     repr(b.return_value)])
    _write_csv(out / "branches.csv", ["outcomes", "probability", "z", "fidelity"], rows)
    total = sum(b.probability for b in branches)
    summary = {"n_half_cycles": n, "n_branches": len(branches), "probability_sum": total,
               "expected_return": float(sum(b.probability * b.return_value for b in branches))}
    if c["enumerate"]["optimize_lookup"] and n > 0:
        pol, info = optimize_lookup(n, psi, eng, maxiter=c["enumerate"]["maxiter"])
        summary["lookup"] = info
        summary["standard_expected_return"] = float(expected_return(psi, StandardPolicy(), n, eng))
        save_checkpoint(out / "lookup.json", pol, {"n_half_cycles": n})
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


COMMANDS = {"prepare-state": cmd_prepare_state, "run-qec": cmd_run_qec, "train": cmd_train,
            "evaluate": cmd_evaluate, "enumerate": cmd_enumerate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gkpqec", description="GKP error-correction simulation and feedback training")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="YAML experiment config")
        s.add_argument("--seed", type=int, help="override every seed in the config")
        s.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        s.add_argument("--out", type=Path, help="parent directory for the run directory")
        s.add_argument("--label", help="run directory label (default: command name)")
        s.add_argument("--set", action="append", default=[], metavar="BLOCK.KEY=VALUE",
                       help="override a config value (YAML-parsed)")
    return p


def _apply_overrides(raw: dict, args) -> dict:
    import yaml

    raw = dict(raw or {})
    for item in args.set:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise C.ConfigError(f"{item}: override must look like block.key=value")
        key, val = item.split("=", 1)
        block, k = key.split(".", 1)
        raw.setdefault(block, {})
        raw[block] = dict(raw[block] or {})
        raw[block][k] = yaml.safe_load(val)
    if args.seed is not None:
        for block in ("run", "policy", "evaluate"):
            raw.setdefault(block, {})
            raw[block] = {**(raw[block] or {}), "seed": args.seed}
        if "train" in raw:
            raw["train"] = {**(raw["train"] or {}), "seed": args.seed}
    if args.out is not None:
        raw["output"] = {**(raw.get("output") or {}), "dir": str(args.out)}
    return raw


def main(argv=None) -> int:
    import yaml

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        raw = {}
        if args.config is not None:
            try:
                raw = yaml.safe_load(args.config.read_text()) or {}
            except OSError as e:
                raise C.ConfigError(f"<file>: cannot read {args.config}: {e}") from None
            except yaml.YAMLError as e:
                raise C.ConfigError(f"<file>: malformed YAML: {e}") from None
        raw = _apply_overrides(raw, args)
        c = C.merge(raw, args.command)
    except C.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    label = args.label or c["output"]["label"] or args.command
    out = run_dir(c["output"]["dir"], label)
    C.dump(c, out / "config.yaml")
    try:
        fn = COMMANDS[args.command]
        res = fn(c, out) if args.command == "prepare-state" else fn(c, out, threads=args.threads)
    except C.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        # invalid physical requests (depth guard, truncation overflow, impossible branch)
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(out)
    log.debug("result: %s", res)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
