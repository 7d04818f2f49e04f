"""Command-line entry point: ``codeflow <command> [options]``.

Exit codes: 0 success, 1 usage, 2 verification failure, 3 input validation,
4 non-convergence, 5 blow-up.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import canonical, lie_engine, random_fields
from .flow import BlowUpError, ControlPath, FieldStack, commutator_sweep, integrate, integrate_with_variation
from .poly_vf import load_fields
from .trainer import TrainConfig, TrainingSet, TrainingSetError, train, validate_training_set

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_BLOWUP = range(6)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# shared plumbing


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _out_dir(args) -> Path:
    path = Path(os.environ.get("CODEFLOW_OUT") or args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(args, name: str, text: str) -> Path:
    path = _out_dir(args) / name
    path.write_text(text)
    return path


def _load_config(args) -> dict:
    if not args.config:
        return {}
    with open(args.config) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _seed(args, cfg: dict) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", 0))


def _omega(spec, m: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = spec if spec is not None else (-1.0, 1.0)
    return np.broadcast_to(np.asarray(lo, float), (m,)), np.broadcast_to(np.asarray(hi, float), (m,))


def build_fields(source: dict | str, m: int, seed: int) -> list:
    """Fields from a config entry: ``canonical``, ``sample_poly``, ``neural`` or ``file``."""
    if isinstance(source, str):
        source = {"source": source}
    kind = source.get("source", "canonical")
    if kind == "canonical":
        return list(canonical.canonical_five(m).fields)
    if kind == "sample_poly":
        spec = {"m": m, "d": 5, "k": 3, "seed": seed, **source.get("spec", {})}
        return random_fields.sample_polynomial_fields(random_fields.FieldSampleSpec.from_dict(spec))
    if kind == "neural":
        spec = {"m": m, "seed": seed, **source.get("spec", {})}
        return random_fields.neural_fields(random_fields.NeuralFieldSpec.from_dict(spec))
    if kind == "file":
        with open(source["path"]) as fh:
            return load_fields(fh.read())
    raise UsageError(f"unknown field source {kind!r}")


def build_training_set(spec: dict, m: int, seed: int) -> TrainingSet:
    lo, hi = _omega(spec.get("omega"), m)
    if "path" in spec:
        with open(spec["path"]) as fh:
            spec = {**json.load(fh), "omega": spec.get("omega")}
    if "inputs" in spec:
        return TrainingSet(spec["inputs"], spec["targets"], lo, hi)
    N = int(spec.get("N", 3))
    return TrainingSet.random(N, m, seed, lo, hi)


# ---------------------------------------------------------------------------
# commands


def cmd_verify(args) -> int:
    m, k = args.m, args.degree
    if m < 2:
        raise UsageError("--m must be >= 2")
    if k < 0:
        raise UsageError("--degree must be >= 0")
    A, B = canonical.sl_generators(m)
    sl_ok = canonical.verify_sl_generation(A, B)
    identities = canonical.verify_appendix_identities(m)
    cover = canonical.degree_cover_report(m, k)
    target = lie_engine.poly_space_dimension(m, k)
    failed = [label for label, r in identities["identities"].items() if not r["equal"] and not r.get("erratum")]
    report = {
        "m": m,
        "degree": k,
        "sl_generation": sl_ok,
        "identities": identities,
        "failed_identities": failed,
        "degree_cover": {"dimension": cover.dimension, "target": target, "depth_cap": cover.depth_cap,
                         "pass": cover.dimension == target},
    }
    ok = sl_ok and identities["all_pass"] and cover.dimension == target
    report["pass"] = ok
    _write(args, "verify.json", _dump(report))
    print(f"sl_generation={sl_ok} identities={identities['all_pass']} "
          f"degree_cover={cover.dimension}/{target}")
    for label in failed:
        print(f"FAILED: {label}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VERIFY


def witt_table(d: int, max_n: int) -> list[dict]:
    rows = []
    for n in range(1, max_n + 1):
        dim = lie_engine.witt_dimension(d, n)
        count = len(lie_engine.lyndon_words(d, n))
        if dim != count:
            raise AssertionError(f"Witt formula disagrees with Lyndon count at n={n}")
        rows.append({"n": n, "dim": dim, "d^n": d**n, "ratio": dim / d**n})
    return rows


def cmd_witt(args) -> int:
    if args.d < 1 or args.max_n < 1:
        raise UsageError("--d and --max-n must be >= 1")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "dim", "d^n", "ratio"])
    for r in witt_table(args.d, args.max_n):
        writer.writerow([r["n"], r["dim"], r["d^n"], f"{r['ratio']:.17g}"])
    text = buf.getvalue()
    _write(args, "witt.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def _trajectories_csv(fields, controls: ControlPath, inputs: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    m = inputs.shape[1]
    writer.writerow(["sample", "t"] + [f"x{i + 1}" for i in range(m)])
    stack = FieldStack(fields)
    for n, x in enumerate(inputs):
        traj = integrate(stack, controls, x)
        for t, X in zip(traj.times, traj.states):
            writer.writerow([n] + [f"{v:.17g}" for v in (t, *X)])
    return buf.getvalue()


def cmd_interpolate(args) -> int:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    m = int(args.m or cfg.get("m", 2))
    fields = build_fields(args.fields or cfg.get("fields", "canonical"), m, seed)
    ts_spec = dict(cfg.get("training_set", {}))
    if args.N is not None:
        ts_spec["N"] = args.N
    ts = build_training_set(ts_spec, m, seed)
    trainer_opts = {"seed": seed, **cfg.get("trainer", {})}
    if args.M is not None:
        trainer_opts["M"] = args.M
    if args.readout is not None:
        trainer_opts["readout"] = args.readout
    if args.optimizer is not None:
        trainer_opts["optimizer"] = args.optimizer
    try:
        tcfg = TrainConfig.from_dict(trainer_opts)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    try:
        min_dist = validate_training_set(ts)
    except TrainingSetError as exc:
        report = {"error": exc.kind, "indices": exc.indices, "message": str(exc)}
        _write(args, "result.json", _dump(report))
        print(f"invalid training set: {exc}", file=sys.stderr)
        return EXIT_INVALID
    result = train(fields, ts, tcfg)
    doc = result.to_dict()
    doc.update({"config": {"m": m, "seed": seed, "trainer": tcfg.__dict__},
                "training_set": ts.to_dict(), "min_input_distance": min_dist})
    _write(args, "result.json", _dump(doc))
    _write(args, "loss_history.csv", result.history_csv())
    if result.status != "blow_up":
        _write(args, "trajectories.csv", _trajectories_csv(fields, result.controls, ts.inputs))
    print(f"status={result.status} iterations={result.iterations} max_residual={result.max_residual:.3e}")
    if result.status == "converged":
        return EXIT_OK
    if result.status == "blow_up":
        return EXIT_BLOWUP
    return EXIT_NOT_CONVERGED


def _rank_one(fields, points, degree: int) -> dict:
    words = lie_engine.bracket_words(len(fields), degree)
    matrix = lie_engine.interpolation_matrix(fields, words, points)
    summary = lie_engine.rank_summary(matrix)
    summary["words"] = len(words)
    return summary


def cmd_rank(args) -> int:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    m = int(args.m or cfg.get("m", 2))
    degree = int(args.degree or cfg.get("degree", 3))
    N = int(args.N or cfg.get("N", 2))
    source = args.fields or cfg.get("fields", "canonical")
    lo, hi = _omega(cfg.get("omega"), m)
    runs = []
    try:
        if args.seeds:
            for s in range(seed, seed + args.seeds):
                fields = build_fields(source, m, s)
                points = np.random.default_rng(s).uniform(lo, hi, (N, m))
                runs.append({"seed": s, **_rank_one(fields, points, degree)})
        else:
            fields = build_fields(source, m, seed)
            if args.only_first:
                fields = fields[:1]
            if "tuple" in cfg:
                points = np.asarray(cfg["tuple"], dtype=float)
            else:
                points = np.random.default_rng(seed).uniform(lo, hi, (N, m))
            runs.append({"seed": seed, "tuple": points.tolist(), **_rank_one(fields, points, degree)})
    except lie_engine.DuplicatePointError as exc:
        print(f"invalid tuple: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NotImplementedError as exc:
        raise UsageError(str(exc)) from exc
    passes = sum(r["full_row_rank"] for r in runs)
    report = {"m": m, "N": N, "degree": degree, "runs": runs, "pass_count": passes, "total": len(runs)}
    _write(args, "rank.json", _dump(report))
    for r in runs:
        print(f"seed={r['seed']} shape={r['shape']} rank={r['rank']} "
              f"sigma_min={r['sigma_min']:.3e} interpolates={r['full_row_rank']}")
    if len(runs) > 1:
        print(f"pass_count={passes}/{len(runs)}")
    return EXIT_OK


NILPOTENT_PAIR = ([[0.0, 1.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]])


def cmd_flow(args) -> int:
    cfg = _load_config(args)
    if args.commutator:
        A, B = cfg.get("A", NILPOTENT_PAIR[0]), cfg.get("B", NILPOTENT_PAIR[1])
        x = cfg.get("x", [1.0] + [0.0] * (len(A) - 1))
        ts = cfg.get("t", [0.1, 0.05, 0.025, 0.0125])
        rows = commutator_sweep(A, B, x, ts)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "residual", "residual_over_t3"])
        for r in rows:
            writer.writerow([f"{r['t']:.17g}", f"{r['residual']:.17g}", f"{r['residual_over_t3']:.17g}"])
        _write(args, "commutator.csv", buf.getvalue())
        sys.stdout.write(buf.getvalue())
        return EXIT_OK
    seed = _seed(args, cfg)
    m = int(args.m or cfg.get("m", 2))
    fields = build_fields(args.fields or cfg.get("fields", "canonical"), m, seed)
    if args.controls or "controls" in cfg:
        if args.controls:
            with open(args.controls) as fh:
                data = json.load(fh)
            u = data["controls"] if isinstance(data, dict) else data
        else:
            u = cfg["controls"]
        controls = ControlPath(u)
    else:
        controls = ControlPath.zeros(args.M or int(cfg.get("M", 64)), len(fields))
    x0 = args.x0 or cfg.get("x0", [0.0] * m)
    try:
        if args.variation:
            traj = integrate_with_variation(fields, controls, x0)
        else:
            traj = integrate(fields, controls, x0)
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    path = _write(args, "trajectory.csv", traj.to_csv())
    print(f"wrote {path}")
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    m = int(args.m or cfg.get("m", 2))
    if args.neural:
        spec = random_fields.NeuralFieldSpec.from_dict({"m": m, "seed": seed, "sigma": args.sigma,
                                                        **cfg.get("spec", {})})
        random_fields.neural_fields(spec)  # validates
        text = _dump(spec.to_dict())
        name = "neural_fields.json"
    else:
        spec = random_fields.FieldSampleSpec.from_dict(
            {"m": m, "d": args.d, "k": args.k, "seed": seed, **cfg.get("spec", {})})
        try:
            fields = random_fields.sample_polynomial_fields(spec)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        text = random_fields.dump_sample(fields, spec) + "\n"
        name = "fields.json"
    path = _write(args, name, text)
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # subcommand copies must not reset values given before the command name
    dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=dflt(None))
    parser.add_argument("--out", default=dflt("codeflow_out"), help="output directory")
    parser.add_argument("--config", default=dflt(None), help="JSON config file")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)

    p = _Parser(prog="codeflow", description="Control-linear ODE experiments.")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", parents=[common], help="generation and identity checks")
    v.add_argument("--m", type=int, required=True)
    v.add_argument("--degree", type=int, default=2)
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("witt", parents=[common], help="free Lie algebra dimensions")
    w.add_argument("--d", type=int, required=True)
    w.add_argument("--max-n", type=int, required=True)
    w.set_defaults(func=cmd_witt)

    i = sub.add_parser("interpolate", parents=[common], help="train controls on a training set")
    i.add_argument("--m", type=int)
    i.add_argument("--N", type=int)
    i.add_argument("--M", type=int)
    i.add_argument("--fields", choices=["canonical", "sample_poly", "neural"])
    i.add_argument("--readout", choices=["identity", "lambda_residual"])
    i.add_argument("--optimizer", choices=["lm", "adam"])
    i.set_defaults(func=cmd_interpolate)

    r = sub.add_parser("rank", parents=[common], help="bracket-evaluation rank at a point tuple")
    r.add_argument("--m", type=int)
    r.add_argument("--N", type=int)
    r.add_argument("--degree", type=int, help="longest bracket word")
    r.add_argument("--fields", choices=["canonical", "sample_poly", "neural"])
    r.add_argument("--seeds", type=int, default=0, help="sweep this many consecutive seeds")
    r.add_argument("--only-first", action="store_true", help="keep only the first field")
    r.set_defaults(func=cmd_rank)

    f = sub.add_parser("flow", parents=[common], help="integrate a trajectory")
    f.add_argument("--m", type=int)
    f.add_argument("--M", type=int)
    f.add_argument("--fields", choices=["canonical", "sample_poly", "neural"])
    f.add_argument("--controls", help="JSON file with an (M, d) array")
    f.add_argument("--x0", type=float, nargs="+")
    f.add_argument("--variation", action="store_true")
    f.add_argument("--commutator", action="store_true")
    f.set_defaults(func=cmd_flow)

    s = sub.add_parser("sample", parents=[common], help="draw random fields")
    s.add_argument("--m", type=int)
    s.add_argument("--d", type=int, default=5)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--neural", action="store_true")
    s.add_argument("--sigma", choices=["tanh", "atan"], default="tanh")
    s.set_defaults(func=cmd_sample)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"codeflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"codeflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
