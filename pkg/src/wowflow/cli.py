"""Command-line entry point: ``wowflow {rings,flow,distill,match,gradcheck,replay}``.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage error.
Every run that writes to ``--out`` also writes ``manifest.json``; running
``wowflow replay <manifest>`` reproduces the outputs bit for bit.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data_io import (SnapshotWriter, load_csv_labeled, load_idx_images, make_gaussian_blobs,
                      make_rings, write_csv_dataset)
from .errors import WowError
from .flow import FlowConfig, run_flow
from .kernels import KernelSpec
from .matching import align_labels, cost_matrix, solve_outer
from .measures import MetaMeasure, PointCloud
from .oracles import gradcheck
from .reweighting import ReweightConfig, killed_clouds, run_reweighted_flow
from .sliced import sample_projections, sw2_squared

log = logging.getLogger("wowflow")

GRADCHECK_TOLERANCE = 1e-4
EVAL_PROJECTIONS = 1000
EVAL_SEED = 20250101


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- argument types

def kernel_arg(text: str) -> KernelSpec:
    try:
        return KernelSpec.parse(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def momentum_arg(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"momentum must lie in [0, 1), got {text}")
    return value


# ---------------------------------------------------------------- helpers

def _add_flow_flags(p, kernel="riesz:r=1", lr=0.1, momentum=0.0, iters=1000, projections=500, every=100):
    p.add_argument("--kernel", type=kernel_arg, default=kernel_arg(kernel),
                   help="riesz:r=R | gaussian:h=H | laplace:h=H | imq:c=C (default %(default)s)")
    p.add_argument("--lr", type=positive_float, default=lr, help="step size tau")
    p.add_argument("--momentum", type=momentum_arg, default=momentum, help="momentum m in [0, 1)")
    p.add_argument("--iters", type=int, default=iters)
    p.add_argument("--projections", type=positive_int, default=projections, help="number L of SW directions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snapshot-every", type=positive_int, default=every)
    p.add_argument("--trace-every", type=positive_int, default=1, help="objective.csv stride")
    p.add_argument("--fixed-projections", action="store_true",
                   help="reuse one projection set instead of resampling every step")
    p.add_argument("--out", required=True, help="output directory")


def _add_reweight_flags(p):
    p.add_argument("--reweight", action="store_true", help="let mixture weights evolve (mirror-Sinkhorn phase)")
    p.add_argument("--reweight-eta", type=positive_float, default=1e-4)
    p.add_argument("--reweight-tau", type=positive_float, default=1e4)
    p.add_argument("--reweight-steps", type=positive_int, default=2000)
    p.add_argument("--reweight-exact-cost", action="store_true",
                   help="use exact W2^2 instead of SW2^2 between clouds (small clouds only)")


def _flow_config(args) -> FlowConfig:
    if args.iters < 0:
        raise UsageError("--iters must be non-negative")
    return FlowConfig(kernel=args.kernel, step_size=args.lr, momentum=args.momentum, iterations=args.iters,
                      n_projections=args.projections, seed=args.seed,
                      resample_projections=not args.fixed_projections, snapshot_every=args.snapshot_every,
                      trace_every=args.trace_every)


def _reweight_config(args) -> ReweightConfig:
    return ReweightConfig(eta=args.reweight_eta, tau_penalty=args.reweight_tau,
                          inner_steps=args.reweight_steps, exact_cost=args.reweight_exact_cost)


def _load_dataset(spec: str, per_class, seed: int, allow_ragged: bool):
    """``path.csv`` or ``idx:IMAGES,LABELS`` -> (labels, MetaMeasure)."""
    if spec.startswith("idx:"):
        try:
            images, labels_path = spec[4:].split(",")
        except ValueError:
            raise UsageError(f"IDX datasets are given as idx:IMAGES,LABELS, got {spec!r}") from None
        if per_class is None:
            raise UsageError("--per-class is required for IDX datasets")
        P = load_idx_images(images, labels_path, per_class, seed)
        raw = Path(labels_path).read_bytes()[8:]
        labels = [str(v) for v in sorted(set(raw))]
        return labels, P
    return load_csv_labeled(spec, allow_ragged=allow_ragged)


def _manifest(args, command: str) -> dict:
    resolved = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command"):
            continue
        if isinstance(value, KernelSpec):
            value = str(value)
        resolved[key] = value
    for key in ("source", "target", "a", "b"):
        if isinstance(resolved.get(key), str) and not resolved[key].startswith("idx:"):
            resolved[key] = str(Path(resolved[key]).resolve())
    return {"tool": "wowflow", "version": __version__, "command": command, "args": resolved}


def _write_manifest(out: Path, args, command: str) -> None:
    with open(out / "manifest.json", "w") as fh:
        json.dump(_manifest(args, command), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _aligned_sw(P: MetaMeasure, Q: MetaMeasure, perm, proj) -> list:
    return [float(np.sqrt(sw2_squared(P.clouds[a], Q.clouds[perm[a]], proj))) for a in range(P.C)]


def _align(P: MetaMeasure, Q: MetaMeasure, proj):
    """Outer assignment with exact W2^2 costs when possible, SW2^2 otherwise."""
    try:
        return align_labels(P, Q)
    except WowError:
        M = np.array([[sw2_squared(mu, nu, proj) for nu in Q.clouds] for mu in P.clouds])
        result = solve_outer(M, P.mix_weights, Q.mix_weights)
        if result.permutation is not None:
            return result.permutation
        return np.argmax(result.plan, axis=1)


class _TraceSink:
    """Writes snapshots and a CSV trace row per snapshot."""

    def __init__(self, snap_fh, trace_writer, Q, per_ring: bool):
        self.snapshots = SnapshotWriter(snap_fh)
        self.trace = trace_writer
        self.Q = Q
        self.per_ring = per_ring
        self.proj = sample_projections(EVAL_PROJECTIONS, Q.d, EVAL_SEED)

    def __call__(self, iteration, P, objective):
        self.snapshots(iteration, P, objective)
        row = [iteration, repr(float(objective))]
        if self.per_ring:
            perm = _align(P, self.Q, self.proj)
            row += [repr(v) for v in _aligned_sw(P, self.Q, perm, self.proj)]
        row += [repr(float(w)) for w in P.mix_weights]
        self.trace.writerow(row)


def _run_with_outputs(out: Path, P0, Q, cfg, args, per_ring: bool):
    out.mkdir(parents=True, exist_ok=True)
    reweight = getattr(args, "reweight", False)
    with open(out / "snapshots.wowz", "w") as snap_fh, open(out / "trace.csv", "w", newline="") as trace_fh:
        writer = csv.writer(trace_fh, lineterminator="\n")
        header = ["iteration", "objective"]
        if per_ring:
            header += [f"sw2_cloud{c}" for c in range(P0.C)]
        header += [f"weight{c}" for c in range(P0.C)]
        writer.writerow(header)
        sink = _TraceSink(snap_fh, writer, Q, per_ring)
        if reweight:
            state = run_reweighted_flow(P0, Q, cfg, _reweight_config(args), sink)
        else:
            state = run_flow(P0, Q, cfg, sink)
    with open(out / "objective.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "objective"])
        w.writerows((k, repr(float(v))) for k, v in state.objective_trace)
    if reweight:
        with open(out / "weights.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "max_marginal_error"] + [f"weight{c}" for c in range(P0.C)])
            w.writerows([k, repr(err)] + [repr(float(x)) for x in wts] for k, wts, err in state.weight_log)
    return state


# ---------------------------------------------------------------- commands

def rings_source(Q: MetaMeasure, args) -> MetaMeasure:
    n = Q.sizes[0]
    C = args.source_clouds or Q.C
    if args.init == "blobs":
        return make_gaussian_blobs(C, n, 2, spread=args.source_spread, seed=args.seed,
                                   center_scale=args.center_scale)
    # blobs centered on randomly chosen ring centers, then jittered
    rng = np.random.default_rng(args.seed)
    centers = np.array([c.points.mean(axis=0) for c in Q.clouds])
    pick = np.concatenate([rng.permutation(Q.C), rng.integers(0, Q.C, max(C - Q.C, 0))])[:C]
    base = centers[pick] + args.source_jitter * rng.standard_normal((C, 2))
    return MetaMeasure.from_array(base[:, None, :] + args.source_spread * rng.standard_normal((C, n, 2)))


def cmd_rings(args) -> int:
    out = Path(args.out)
    Q = make_rings(args.n_per_ring, args.rings, seed=args.ring_seed)
    P0 = rings_source(Q, args)
    cfg = _flow_config(args)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, args, "rings")
    state = _run_with_outputs(out, P0, Q, cfg, args, per_ring=P0.C == Q.C)
    write_csv_dataset(Q, out / "target.csv")
    write_csv_dataset(state.P, out / "final.csv")
    if P0.C == Q.C:
        proj = sample_projections(EVAL_PROJECTIONS, 2, EVAL_SEED)
        perm = _align(state.P, Q, proj)
        sw = _aligned_sw(state.P, Q, perm, proj)
        print(f"final per-ring SW2 to assigned target: {', '.join(f'{v:.4f}' for v in sw)}")
    print(f"final weights: {', '.join(f'{w:.4f}' for w in state.P.mix_weights)}")
    return 0


def cmd_flow(args) -> int:
    out = Path(args.out)
    _, P0 = _load_dataset(args.source, args.per_class, args.seed, args.allow_ragged)
    labels_q, Q = _load_dataset(args.target, args.per_class, args.seed, args.allow_ragged)
    if P0.d != Q.d:
        raise WowError(f"source dimension {P0.d} != target dimension {Q.d}")
    cfg = _flow_config(args)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, args, "flow")
    state = _run_with_outputs(out, P0, Q, cfg, args, per_ring=False)
    P = state.P
    dead = set(killed_clouds(P)) if args.reweight else set()
    proj = sample_projections(EVAL_PROJECTIONS, P.d, EVAL_SEED)
    perm = _align(P, Q, proj)
    keep = [a for a in range(P.C) if a not in dead]
    final = MetaMeasure([P.clouds[a] for a in keep])
    write_csv_dataset(final, out / "final_aligned.csv", labels=[labels_q[perm[a]] for a in keep])
    with open(out / "alignment.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_cloud", "target_class", "weight"])
        for a in range(P.C):
            w.writerow([a, labels_q[perm[a]], repr(float(P.mix_weights[a]))])
    print(f"flow finished after {state.iteration} iterations; alignment: "
          + ", ".join(f"{a}->{labels_q[perm[a]]}" for a in range(P.C)))
    return 0


def cmd_distill(args) -> int:
    out = Path(args.out)
    labels, Q = _load_dataset(args.target, args.target_per_class, args.seed, args.allow_ragged)
    rng = np.random.default_rng(args.seed)
    clouds = []
    for lab, cloud in zip(labels, Q.clouds):
        if args.per_class > cloud.n:
            raise WowError(f"class {lab} has {cloud.n} samples, fewer than --per-class {args.per_class}")
        idx = rng.choice(cloud.n, size=args.per_class, replace=False)
        clouds.append(PointCloud(cloud.points[idx]))
    P0 = MetaMeasure(clouds)
    args.fixed_projections = False
    cfg = _flow_config(args)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, args, "distill")
    state = _run_with_outputs(out, P0, Q, cfg, args, per_ring=False)
    write_csv_dataset(state.P, out / "synthetic.csv", labels=labels)
    print(f"wrote {state.P.C} classes x {args.per_class} synthetic samples to {out / 'synthetic.csv'}")
    return 0


def cmd_match(args) -> int:
    labels_a, A = load_csv_labeled(args.a, allow_ragged=args.allow_ragged)
    labels_b, B = load_csv_labeled(args.b, allow_ragged=args.allow_ragged)
    M = cost_matrix(A, B)
    result = solve_outer(M, A.mix_weights, B.mix_weights)
    lines = [f"wow_distance_squared,{result.cost!r}", f"wow_distance,{float(np.sqrt(max(result.cost, 0.0)))!r}"]
    if result.permutation is not None:
        lines.append("assignment")
        lines += [f"{labels_a[a]},{labels_b[b]}" for a, b in enumerate(result.permutation)]
    else:
        lines.append("plan")
        lines.append(",".join(["class"] + labels_b))
        lines += [",".join([labels_a[a]] + [repr(float(v)) for v in row]) for a, row in enumerate(result.plan)]
    lines.append("cost_matrix")
    lines.append(",".join(["class"] + labels_b))
    lines += [",".join([labels_a[a]] + [repr(float(v)) for v in row]) for a, row in enumerate(M)]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(out, args, "match")
        (out / "match.csv").write_text(text)
    return 0


def cmd_gradcheck(args) -> int:
    report = gradcheck(args.kernel, C=args.C, n=args.n, d=args.d, seed=args.seed,
                       n_projections=args.projections, h=args.fd_step)
    print(f"kernel {args.kernel}: {report}")
    ok = report.passed(GRADCHECK_TOLERANCE)
    print("PASS" if ok else f"FAIL (tolerance {GRADCHECK_TOLERANCE:g})")
    return 0 if ok else 1


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    if manifest.get("tool") != "wowflow":
        raise UsageError(f"{args.manifest} is not a wowflow manifest")
    if manifest.get("version") != __version__:
        log.warning("manifest written by wowflow %s, replaying with %s", manifest.get("version"), __version__)
    argv = manifest_to_argv(manifest, out=args.out)
    return main(argv)


def manifest_to_argv(manifest: dict, out=None) -> list:
    """Rebuild the command line recorded in a manifest (optionally redirecting --out)."""
    command = manifest["command"]
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices[command]
    argv = [command]
    values = dict(manifest["args"])
    if out is not None:
        values["out"] = str(out)
    for action in sub._actions:
        if not action.option_strings or action.dest not in values:
            continue
        value = values[action.dest]
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif value is not None:
            argv += [flag, str(value) if not isinstance(value, float) else repr(value)]
    return argv


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wowflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"wowflow {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--threads", type=positive_int, default=None,
                        help="bound BLAS threads (also WOWFLOW_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rings", help="flow Gaussian blobs onto a mixture of rings")
    _add_flow_flags(p, iters=5000, every=100)
    _add_reweight_flags(p)
    p.add_argument("--rings", type=positive_int, default=3)
    p.add_argument("--n-per-ring", type=positive_int, default=80)
    p.add_argument("--ring-seed", type=int, default=0)
    p.add_argument("--source-clouds", type=int, default=None, help="number of source blobs (default: one per ring)")
    p.add_argument("--init", choices=["blobs", "jittered"], default="blobs",
                   help="blobs: random centers; jittered: ring centers plus Gaussian offsets")
    p.add_argument("--center-scale", type=float, default=1.0)
    p.add_argument("--source-jitter", type=float, default=0.5)
    p.add_argument("--source-spread", type=float, default=0.5)
    p.set_defaults(func=cmd_rings)

    p = sub.add_parser("flow", help="flow a source dataset onto a target dataset")
    p.add_argument("--source", required=True, help="CSV file or idx:IMAGES,LABELS")
    p.add_argument("--target", required=True, help="CSV file or idx:IMAGES,LABELS")
    p.add_argument("--per-class", type=positive_int, default=None, help="samples per class for IDX inputs")
    p.add_argument("--allow-ragged", action="store_true", help="truncate classes to the smallest count")
    _add_flow_flags(p)
    _add_reweight_flags(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("distill", help="learn a few synthetic samples per class")
    p.add_argument("--target", required=True, help="CSV file or idx:IMAGES,LABELS")
    p.add_argument("--per-class", type=positive_int, required=True, help="synthetic samples per class")
    p.add_argument("--target-per-class", type=positive_int, default=None, help="samples per class for IDX targets")
    p.add_argument("--allow-ragged", action="store_true")
    _add_flow_flags(p)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("match", help="exact WoW distance and class matching between two CSV datasets")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--allow-ragged", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--kernel", type=kernel_arg, default=kernel_arg("riesz:r=1"))
    p.add_argument("--C", type=positive_int, default=3)
    p.add_argument("--n", type=positive_int, default=5)
    p.add_argument("--d", type=positive_int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--projections", type=positive_int, default=64)
    p.add_argument("--fd-step", type=positive_float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="write outputs here instead of the recorded directory")
    p.set_defaults(func=cmd_replay)
    return parser


def _thread_limit(args):
    n = args.threads or (int(os.environ["WOWFLOW_THREADS"]) if os.environ.get("WOWFLOW_THREADS") else None)
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(args):
            return args.func(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"wowflow: error: {err}", file=sys.stderr)
        return 2
    except (WowError, ValueError, OSError, FloatingPointError) as err:
        print(f"wowflow {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())


def main_entry() -> None:
    sys.exit(main())
