"""Config-driven experiment runner.

Subcommands:
  run        full pipeline (generate -> simulate -> features -> train ->
             evaluate), writing CSV artifacts plus a run manifest
  validate   closed-form oracle suite for the Monte-Carlo engine
  gen-data   export labeled signal files for a task
  sweep-lesn digital-reservoir benchmark on the spiral

Every output CSV carries the config hash and master seed in its first
comment line; re-running a config reproduces the CSVs byte for byte, and
--threads changes wall time only.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from .errors import AqrcError, ConfigError
from .features import MomentFeatureSpec, feature_names, features_to_csv
from .fock import SystemParams, TWO_PI
from .engine import ProtocolConfig
from .harness import (
    DEFAULT_TARGET_PHOTONS,
    TaskSetup,
    build_dataset,
    calibrate_input_scale,
    default_protocol,
    desk_setup,
    lesn_spiral_benchmark,
    run_classification_task,
)
from .learn import TrainConfig
from .reservoir import (
    function_space_rank,
    geometric_phase_oracle,
    kerr_revival_check,
    parity_chain_bruteforce,
    parity_trajectory_oracle,
)
from .signals import SPIRAL, TASK_CLASS_COUNTS, write_signal

FLOAT_FMT = "%.17g"


def _limit_blas_threads():
    """Pin BLAS pools to one thread so --threads never changes results."""
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=1)
    except Exception:
        pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _get(cfg: dict, field: str, default, kind=None):
    value = cfg.get(field, default)
    if kind is not None and value is not None and not isinstance(value, kind):
        raise ConfigError(f"field '{field}': expected {kind}, got {value!r}")
    return value


def resolve_config(raw: dict) -> dict:
    """Validate and fill a run config with defaults; raises ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object")
    task = raw.get("task")
    if task not in TASK_CLASS_COUNTS:
        raise ConfigError(f"field 'task': must be one of "
                          f"{sorted(TASK_CLASS_COUNTS)}, got {task!r}")
    base = desk_setup(task)
    proto_raw = _get(raw, "protocol", {}, dict)
    base_proto = base.protocol
    alpha = proto_raw.get("alpha", None)
    if isinstance(alpha, list):
        alpha = complex(alpha[0], alpha[1])
    resolved = {
        "task": task,
        "n_train": _get(raw, "n_train", base.n_train, int),
        "n_test": _get(raw, "n_test", base.n_test, int),
        "shot_budgets": list(_get(raw, "shot_budgets",
                                  list(base.shot_budgets), list)),
        "master_seed": _get(raw, "master_seed", 2024, int),
        "target_photons": raw.get("target_photons",
                                  DEFAULT_TARGET_PHOTONS.get(task)),
        "protocol": {
            "alpha": [float(np.real(alpha if alpha is not None else base_proto.alpha)),
                      float(np.imag(alpha if alpha is not None else base_proto.alpha))],
            "cnod_phases": list(_get(proto_raw, "cnod_phases",
                                     list(base_proto.cnod_phases), list)),
            "rounds_per_shot": _get(proto_raw, "rounds_per_shot",
                                    base_proto.rounds_per_shot, int),
            "exposure_multiplier": _get(proto_raw, "exposure_multiplier",
                                        base_proto.exposure_multiplier, int),
            "chi_mhz": _get(proto_raw, "chi_mhz",
                            base_proto.system.chi / TWO_PI, (int, float)),
            "n_fock": _get(proto_raw, "n_fock", base_proto.system.n_fock, int),
            "guard_threshold": _get(proto_raw, "guard_threshold",
                                    base_proto.system.guard_threshold, (int, float)),
            "reset_qubit_each_round": _get(proto_raw, "reset_qubit_each_round",
                                           False, bool),
        },
        "feature": {
            "max_order": _get(_get(raw, "feature", {}, dict), "max_order",
                              base.feature.max_order, int),
            "d_h": _get(raw, "feature", {}, dict).get("d_h", base.feature.d_h),
            "orders": _get(raw, "feature", {}, dict).get("orders"),
        },
        "train": {
            "method": _get(_get(raw, "train", {}, dict), "method", "best", str),
            "ridge_eps": list(_get(_get(raw, "train", {}, dict), "ridge_eps",
                                   list(TrainConfig().ridge_eps), list)),
            "lr": _get(_get(raw, "train", {}, dict), "lr", 0.01, (int, float)),
            "beta1": _get(_get(raw, "train", {}, dict), "beta1", 0.9, (int, float)),
            "beta2": _get(_get(raw, "train", {}, dict), "beta2", 0.999, (int, float)),
            "epochs": _get(_get(raw, "train", {}, dict), "epochs", 2000, int),
            "seed": _get(_get(raw, "train", {}, dict), "seed", 0, int),
        },
    }
    budgets = resolved["shot_budgets"]
    if budgets != sorted(budgets) or not budgets:
        raise ConfigError("field 'shot_budgets': must be non-empty ascending")
    return resolved


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def setup_from_config(resolved: dict) -> TaskSetup:
    p = resolved["protocol"]
    system = SystemParams(chi=TWO_PI * p["chi_mhz"], n_fock=p["n_fock"],
                          guard_threshold=p["guard_threshold"])
    protocol = ProtocolConfig(
        alpha=complex(p["alpha"][0], p["alpha"][1]),
        cnod_phases=tuple(p["cnod_phases"]),
        rounds_per_shot=p["rounds_per_shot"],
        exposure_multiplier=p["exposure_multiplier"],
        system=system,
        reset_qubit_each_round=p["reset_qubit_each_round"],
    )
    f = resolved["feature"]
    feature = MomentFeatureSpec(max_order=f["max_order"], d_h=f["d_h"],
                                orders=tuple(f["orders"]) if f["orders"] else None)
    t = resolved["train"]
    train = TrainConfig(method=t["method"], ridge_eps=tuple(t["ridge_eps"]),
                        lr=t["lr"], beta1=t["beta1"], beta2=t["beta2"],
                        epochs=t["epochs"], seed=t["seed"])
    return TaskSetup(resolved["task"], resolved["n_train"], resolved["n_test"],
                     tuple(resolved["shot_budgets"]), protocol, feature=feature,
                     train=train, master_seed=resolved["master_seed"])


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------

def _write_csv(path, header_comment, columns, rows):
    with open(path, "w") as fh:
        fh.write(f"# {header_comment}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = [FLOAT_FMT % v if isinstance(v, float) else str(v)
                     for v in row]
            fh.write(",".join(cells) + "\n")


def cmd_run(args) -> int:
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 3
    except json.JSONDecodeError as exc:
        print(f"error: config line {exc.lineno}: {exc.msg}", file=sys.stderr)
        return 1
    try:
        if args.seed is not None:
            raw["master_seed"] = args.seed
        resolved = resolve_config(raw)
        setup = setup_from_config(resolved)
    except (ConfigError, ValueError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 1

    chash = config_hash(resolved)
    tag = f"config_hash={chash},master_seed={resolved['master_seed']}"
    out_dir = args.out or raw.get("output_dir") or "."
    t0 = time.time()
    _limit_blas_threads()
    try:
        result = run_classification_task(setup, threads=args.threads)
    except AqrcError as exc:
        print(f"error: simulation failed: {exc}", file=sys.stderr)
        return 2

    try:
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, "accuracy_curve.csv"), tag,
                   ["budget", "accuracy", "n_train", "n_test", "seed"],
                   [(b, a, ntr, nte, resolved["master_seed"])
                    for b, a, ntr, nte in result.curve])
        conf = result.confusion
        _write_csv(os.path.join(out_dir, "confusion.csv"), tag,
                   ["true\\pred"] + [str(c) for c in range(conf.shape[1])],
                   [[i] + [int(v) for v in row] for i, row in enumerate(conf)])
        features_to_csv(os.path.join(out_dir, "features.csv"),
                        result.feature_matrix, setup.feature,
                        labels=result.labels, header_comment=tag)
        _write_csv(os.path.join(out_dir, "svd_projection.csv"), tag,
                   ["class", "svd0", "svd1"],
                   [[int(lab), float(c0), float(c1)]
                    for lab, (c0, c1) in zip(result.labels, result.svd_coords)])
        manifest = {
            "config": resolved,
            "config_hash": chash,
            "master_seed": resolved["master_seed"],
            "versions": _versions(),
            "wall_time_s": round(time.time() - t0, 3),
            "input_scale": result.input_scale,
            "results": {
                "curve": result.curve,
                "final_accuracy": result.final_accuracy,
                "linear_baseline_accuracy": result.linear_baseline_accuracy,
            },
        }
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2)
    except OSError as exc:
        print(f"error: writing outputs: {exc}", file=sys.stderr)
        return 3
    print(f"task {setup.task}: final accuracy {result.final_accuracy:.4f} "
          f"(linear baseline {result.linear_baseline_accuracy:.4f}), "
          f"outputs in {out_dir}")
    return 0


def _versions():
    import scipy
    return {"python": sys.version.split()[0], "numpy": np.__version__,
            "scipy": scipy.__version__, "aqrc": "0.1.0"}


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    from .engine import constant_signal_trajectories
    from .errors import TruncationGuardTripped
    from .features import sample_distribution
    from .reservoir import signal_segment_provider
    from .engine import run_trajectories
    from .signals import ComplexSignal

    _limit_blas_threads()
    system = SystemParams(n_fock=args.n_fock,
                          guard_threshold=args.guard_threshold)
    results = []

    def report(name, passed, detail):
        results.append((name, passed))
        print(f"{'PASS' if passed else 'FAIL'}  {name:28s} {detail}")

    try:
        # 1. geometric-phase oracle vs round-1 qubit frequency
        cfg = ProtocolConfig(alpha=0.5, system=system)
        t_seg = cfg.seg_time
        shots = args.shots
        worst = 0.0
        from .harness import stream_id
        for mag in (0.1, 0.25, 0.5):
            for k, ph in enumerate(np.linspace(0.0, TWO_PI, 12, endpoint=False)):
                beta = mag * np.exp(1j * ph)
                bits, _ = constant_signal_trajectories(
                    cfg, 1j * beta / t_seg, shots, args.seed,
                    stream=stream_id("phase-grid", mag, k))
                p_hat = float(bits[:, 0].mean())
                p_or = geometric_phase_oracle(cfg.round_alpha(0), beta)
                sigma = max(np.sqrt(p_or * (1 - p_or) / shots), 1e-9)
                worst = max(worst, abs(p_hat - p_or) / sigma)
        report("geometric-phase oracle", worst < 4.0,
               f"worst deviation {worst:.2f} sigma (< 4)")

        # 2. parity-trajectory oracle
        beta = 0.4
        pcfg = ProtocolConfig(mode="parity_chain", rounds_per_shot=4,
                              system=system)
        sig = ComplexSignal.constant(1j * beta / pcfg.seg_time,
                                     pcfg.shot_exposure)
        provider = signal_segment_provider(sig, pcfg, shot_stride=0.0)
        bits, _ = run_trajectories(pcfg, provider, 10 * shots, args.seed,
                                   stream=77, chunk_size=20000)
        emp = sample_distribution(bits, 4)
        oracle = parity_trajectory_oracle(beta, 4)
        tv = 0.5 * float(np.abs(emp - oracle).sum())
        brute = parity_chain_bruteforce(beta, 4, n_fock=48)
        mad = float(np.max(np.abs(oracle - brute)))
        report("parity-trajectory oracle", tv < 0.02 and mad < 1e-8,
               f"TV {tv:.4f} (< 0.02), closed-vs-brute {mad:.2e} (< 1e-8)")

        # 3. expressivity rank
        ranks = {m: function_space_rank(m, np.linspace(0, 1, max(32, 2 ** m + 4)))
                 for m in (1, 2, 4)}
        ok = all(ranks[m] == m + 1 for m in ranks)
        report("function-space rank", ok,
               " ".join(f"M={m}:{r}" for m, r in ranks.items()) + "  (want M+1)")

        # 4. Kerr revival
        rcfg = ProtocolConfig(alpha=0.2, system=system)
        fid = kerr_revival_check(0.2, rcfg)
        report("Kerr revival", fid > 0.99, f"fidelity {fid:.6f} (> 0.99)")
    except TruncationGuardTripped as exc:
        print(f"error: simulation aborted: {exc}", file=sys.stderr)
        return 2

    return 0 if all(p for _n, p in results) else 2


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    from .harness import example_signal, shot_stride, split_indices

    task = args.task
    if task not in TASK_CLASS_COUNTS:
        print(f"error: unknown task {task!r}", file=sys.stderr)
        return 1
    setup = desk_setup(task, master_seed=args.seed)
    n_classes = TASK_CLASS_COUNTS[task]
    from dataclasses import replace as dc_replace
    setup = dc_replace(setup, n_train=args.n * n_classes if task != SPIRAL else args.n,
                       n_test=n_classes if task != SPIRAL else 2,
                       shot_budgets=(args.shots,))
    entries = build_dataset(setup)
    scale = calibrate_input_scale(task, setup.protocol, setup.master_seed)
    try:
        os.makedirs(args.out, exist_ok=True)
        files = []
        for e in entries:
            sig = example_signal(setup, e, args.shots, input_scale=scale)
            name = f"{task}_{e.index:05d}.sig"
            write_signal(os.path.join(args.out, name), sig)
            files.append({"file": name, "class": e.class_id, "seed": e.seed,
                          "dt": sig.dt, "n_samples": len(sig.samples)})
        manifest = {
            "task": task, "classes": n_classes, "master_seed": args.seed,
            "input_scale": scale, "shots_covered": args.shots,
            "shot_stride_us": shot_stride(task, setup.protocol),
            "format": "QRCSIG1: 16-byte header, little-endian float64 re/im",
            "signals": files,
        }
        with open(os.path.join(args.out, "dataset.json"), "w") as fh:
            json.dump(manifest, fh, indent=2)
    except OSError as exc:
        print(f"error: writing dataset: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {len(files)} signals to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# sweep-lesn
# ---------------------------------------------------------------------------

def cmd_sweep_lesn(args) -> int:
    _limit_blas_threads()
    rows = []
    for r in args.widths:
        cfg, accs = lesn_spiral_benchmark(r, args.instances,
                                          master_seed=args.seed)
        rows.append((r, cfg.depth, float(np.mean(accs)), float(np.std(accs))))
        print(f"r={r}: depth={cfg.depth} a={cfg.a} gamma={cfg.gamma} "
              f"w_in={cfg.w_in} rho={cfg.rho} p_s={cfg.p_s} -> "
              f"mean {np.mean(accs):.4f} std {np.std(accs):.4f}")
    if args.out:
        try:
            os.makedirs(args.out, exist_ok=True)
            _write_csv(os.path.join(args.out, "lesn_summary.csv"),
                       f"master_seed={args.seed}",
                       ["r", "depth", "mean_acc", "std_acc"], rows)
        except OSError as exc:
            print(f"error: writing outputs: {exc}", file=sys.stderr)
            return 3
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aqrc",
        description="Analog quantum reservoir computing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config end to end")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override master_seed")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--threads", type=int, default=1,
                       help="worker threads (wall time only, never results)")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="closed-form oracle checks")
    p_val.add_argument("--shots", type=int, default=10_000)
    p_val.add_argument("--seed", type=int, default=7)
    p_val.add_argument("--n-fock", type=int, default=32)
    p_val.add_argument("--guard-threshold", type=float, default=0.01)
    p_val.set_defaults(func=cmd_validate)

    p_gen = sub.add_parser("gen-data", help="export labeled signal files")
    p_gen.add_argument("--task", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--n", type=int, default=10, help="examples per class")
    p_gen.add_argument("--shots", type=int, default=16,
                       help="shots of signal per example")
    p_gen.add_argument("--seed", type=int, default=2024)
    p_gen.set_defaults(func=cmd_gen_data)

    p_lesn = sub.add_parser("sweep-lesn", help="LESN spiral benchmark")
    p_lesn.add_argument("--widths", type=lambda s: [int(x) for x in s.split(",")],
                        default=[32, 64])
    p_lesn.add_argument("--instances", type=int, default=100)
    p_lesn.add_argument("--seed", type=int, default=2024)
    p_lesn.add_argument("--out", default=None)
    p_lesn.set_defaults(func=cmd_sweep_lesn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
