"""Pipeline entry point: profile, optimize, sample, simulate, eval, sweep.

Flag resolution: built-in defaults < --config JSON < explicit flags.  Every
run writes a manifest (<out>.manifest.json) echoing the fully-resolved
config and tool version; identical config and seed reproduce artifacts
byte-for-byte.  Relative output paths land in $VARTRAJ_OUT_DIR when set.

Exit codes:
  0  success
  2  usage error (unknown/missing flags or config keys)
  3  invalid input (unreadable file, schema mismatch)
  4  domain error (inputs violate an operation's preconditions)
  5  internal error
Failures print a JSON object {"error", "message", "exit_code"} to stderr.
"""

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import read_json, write_json
from .denoisers import data_spec_from_json, denoiser_from_spec
from .forward import linear_beta_schedule
from .metrics import EvalReport, cpe, moment_diagnostics, sliced_wasserstein
from .mlp import MlpDenoiser, train_mlp_denoiser
from .optimizer import OptimizeConfig, optimize
from .profiler import ErrorProfile, default_grid, f_delta, profile
from .sampler import SampleBatch, propagate_error_mc, sample
from .seeding import child_rng, child_seed_sequence
from .trajectory import Trajectory, make_trajectory

EXIT_USAGE, EXIT_INPUT, EXIT_DOMAIN, EXIT_INTERNAL = 2, 3, 4, 5

OUT_DIR_ENV = "VARTRAJ_OUT_DIR"


class CliInputError(Exception):
    """An input file is missing, unreadable, or fails schema validation."""


def _comma_floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v != ""]


def _comma_ints(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v != ""]


def _comma_strs(text):
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [s for s in str(text).split(",") if s != ""]


_SCHEDULE_ARGS = [
    ("--T", dict(dest="T", type=int, default=1000, help="dense schedule length")),
    ("--beta-start", dict(dest="beta_start", type=float, default=1e-4,
                          help="first variance increment")),
    ("--beta-end", dict(dest="beta_end", type=float, default=0.02,
                        help="last variance increment")),
]

# flag table: subcommand -> list of (flag, add_argument kwargs)
_SPEC = {
    "make-traj": [
        *_SCHEDULE_ARGS,
        ("--kind", dict(dest="kind", type=str, default="quadratic",
                        choices=["uniform", "quadratic", "logSNR"],
                        help="trajectory spacing")),
        ("--steps", dict(dest="steps", type=int, required=True,
                         help="number of sampling steps K")),
        ("--label", dict(dest="label", type=str, default=None)),
        ("--out", dict(dest="out", type=str, required=True,
                       help="trajectory JSON to write")),
    ],
    "profile": [
        *_SCHEDULE_ARGS,
        ("--denoiser", dict(dest="denoiser", type=str, required=True,
                            help="denoiser spec JSON (or MLP .bin weights)")),
        ("--data", dict(dest="data", type=str, required=True,
                        help="data spec JSON to draw the dataset from")),
        ("--data-size", dict(dest="data_size", type=int, default=10000)),
        ("--grid", dict(dest="grid", type=int, default=64,
                        help="number of profile knots")),
        ("--draws", dict(dest="draws", type=int, default=8,
                         help="noise draws per dataset sample")),
        ("--seed", dict(dest="seed", type=int, default=0)),
        ("--out", dict(dest="out", type=str, required=True,
                       help="profile CSV to write (plus .meta.json sidecar)")),
    ],
    "train-denoiser": [
        *_SCHEDULE_ARGS,
        ("--data", dict(dest="data", type=str, required=True)),
        ("--data-size", dict(dest="data_size", type=int, default=10000)),
        ("--hidden", dict(dest="hidden", type=_comma_ints, default=[64, 64],
                          help="hidden layer widths, comma separated")),
        ("--steps", dict(dest="steps", type=int, default=4000,
                         help="training iterations")),
        ("--batch-size", dict(dest="batch_size", type=int, default=256)),
        ("--lr", dict(dest="lr", type=float, default=1e-3)),
        ("--label", dict(dest="label", type=str, default="mlp")),
        ("--seed", dict(dest="seed", type=int, default=0)),
        ("--out", dict(dest="out", type=str, required=True,
                       help="weights container to write (plus .spec.json)")),
    ],
    "optimize": [
        ("--traj", dict(dest="traj", type=str, required=True,
                        help="base trajectory JSON")),
        ("--profile", dict(dest="profile", type=str, required=True,
                           help="error-profile CSV")),
        ("--gamma", dict(dest="gamma", type=float, default=None,
                         help="box radius (default: 0.1 for K<=10 else 0.01)")),
        ("--lambda", dict(dest="lam", type=float, default=1.0,
                          help="endpoint regularizer weight")),
        ("--step-size", dict(dest="step_size", type=float, default=1e-3)),
        ("--iters", dict(dest="iters", type=int, default=2000)),
        ("--tol", dict(dest="tol", type=float, default=1e-9,
                       help="projected-gradient stop tolerance")),
        ("--eps-open", dict(dest="eps_open", type=float, default=1e-6)),
        ("--out", dict(dest="out", type=str, required=True,
                       help="optimized trajectory JSON")),
        ("--trace", dict(dest="trace", type=str, default=None,
                         help="objective trace CSV (iter,cpe,reg,total)")),
    ],
    "sample": [
        ("--traj", dict(dest="traj", type=str, required=True)),
        ("--denoiser", dict(dest="denoiser", type=str, required=True)),
        ("--n", dict(dest="n", type=int, required=True)),
        ("--d", dict(dest="d", type=int, required=True)),
        ("--seed", dict(dest="seed", type=int, default=0)),
        ("--out", dict(dest="out", type=str, required=True,
                       help="sample-batch binary container")),
    ],
    "simulate": [
        ("--traj", dict(dest="traj", type=str, required=True)),
        ("--profile", dict(dest="profile", type=str, required=True)),
        ("--runs", dict(dest="runs", type=int, default=1000000)),
        ("--d", dict(dest="d", type=int, default=1)),
        ("--seed", dict(dest="seed", type=int, default=0)),
        ("--out", dict(dest="out", type=str, required=True,
                       help="propagation report JSON")),
    ],
    "eval": [
        ("--batch", dict(dest="batch", type=str, required=True)),
        ("--ref", dict(dest="ref", type=str, required=True,
                       help="data spec JSON with analytic moments")),
        ("--against", dict(dest="against", type=str, default=None,
                           help="optional second batch for the SWD")),
        ("--ref-size", dict(dest="ref_size", type=int, default=10000,
                            help="reference draw when --against is absent")),
        ("--projections", dict(dest="projections", type=int, default=128)),
        ("--seed", dict(dest="seed", type=int, default=0)),
        ("--out", dict(dest="out", type=str, required=True)),
    ],
    "sweep": [
        *_SCHEDULE_ARGS,
        ("--data", dict(dest="data", type=str, required=True)),
        ("--denoiser", dict(dest="denoiser", type=str, required=True)),
        ("--profile", dict(dest="profile", type=str, required=True)),
        ("--kinds", dict(dest="kinds", type=_comma_strs,
                         default=["quadratic"], help="trajectory kinds")),
        ("--steps", dict(dest="steps", type=_comma_ints, default=[10],
                         help="K values, comma separated")),
        ("--gammas", dict(dest="gammas", type=_comma_floats,
                          default=[0.0, 0.01, 0.05, 0.1])),
        ("--lambdas", dict(dest="lambdas", type=_comma_floats, default=[1.0])),
        ("--iters", dict(dest="iters", type=int, default=2000)),
        ("--step-size", dict(dest="step_size", type=float, default=1e-3)),
        ("--n", dict(dest="n", type=int, default=2000,
                     help="samples per trajectory for the SWD columns")),
        ("--ref-size", dict(dest="ref_size", type=int, default=10000)),
        ("--projections", dict(dest="projections", type=int, default=128)),
        ("--seed", dict(dest="seed", type=int, default=0)),
        ("--out", dict(dest="out", type=str, required=True, help="sweep CSV")),
    ],
}

_HELP = {
    "make-traj": "construct a predefined trajectory from a dense schedule",
    "profile": "measure a denoiser's prediction error over noise levels",
    "train-denoiser": "fit the small regression denoiser on a data spec",
    "optimize": "search a better trajectory inside the box around a base one",
    "sample": "generate a batch by running a trajectory",
    "simulate": "check predicted vs simulated error propagation",
    "eval": "score a batch against ground truth",
    "sweep": "grid over gamma/lambda/kind/K; CSV of cpe and SWD columns",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vartraj",
        description=__doc__.split("\n\n")[0],
        epilog="exit codes: 0 ok, 2 usage, 3 invalid input, 4 domain error, "
               "5 internal error",
    )
    parser.add_argument("--version", action="version",
                        version=f"vartraj {__version__}")
    subs = parser.add_subparsers(dest="command", metavar="subcommand")
    for name, args in _SPEC.items():
        sp = subs.add_parser(name, help=_HELP[name],
                             description=_HELP[name])
        sp.add_argument("--config", dest="config", type=str, default=None,
                        help="JSON file of flag values (flags override it)")
        for flag, kw in args:
            kw = dict(kw)
            kw.pop("required", None)
            kw["default"] = argparse.SUPPRESS
            sp.add_argument(flag, **kw)
    return parser


def _resolve_args(ns: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags; validates config keys."""
    spec = _SPEC[ns.command]
    merged = {kw["dest"]: kw.get("default") for _, kw in spec}
    converters = {kw["dest"]: kw.get("type") for _, kw in spec}
    config_path = getattr(ns, "config", None)
    if config_path:
        try:
            config = read_json(config_path)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliInputError(f"cannot read config {config_path}: {exc}")
        if not isinstance(config, dict):
            raise CliInputError(f"config {config_path} must be a JSON object")
        for key, value in config.items():
            if key not in merged:
                raise CliInputError(
                    f"config {config_path}: unknown key {key!r} for "
                    f"{ns.command}")
            conv = converters[key]
            merged[key] = conv(value) if conv and isinstance(value, str) else value
    explicit = {k: v for k, v in vars(ns).items()
                if k not in ("command", "config")}
    merged.update(explicit)
    missing = [flag for flag, kw in spec
               if kw.get("required") and merged.get(kw["dest"]) is None]
    if missing:
        raise SystemExit(_fail(f"missing required flags: {', '.join(missing)}",
                               "UsageError", EXIT_USAGE))
    return merged


def _out_path(p) -> Path:
    path = Path(p)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _fail(message: str, kind: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}),
          file=sys.stderr)
    return code


def _write_manifest(primary: Path, command: str, resolved: dict,
                    artifacts: list) -> None:
    manifest = {
        "tool": "vartraj",
        "version": __version__,
        "subcommand": command,
        "config": {k: (str(v) if isinstance(v, Path) else v)
                   for k, v in sorted(resolved.items())},
        "artifacts": [str(a) for a in artifacts],
    }
    write_json(Path(str(primary) + ".manifest.json"), manifest)


def _load_json_input(path, what: str) -> dict:
    try:
        return read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliInputError(f"cannot read {what} {path}: {exc}")


def _load_trajectory(path) -> Trajectory:
    obj = _load_json_input(path, "trajectory")
    try:
        return Trajectory.from_json(obj)
    except (KeyError, ValueError, TypeError) as exc:
        raise CliInputError(f"invalid trajectory {path}: {exc}")


def _load_profile(path) -> ErrorProfile:
    try:
        return ErrorProfile.load(path)
    except (OSError, ValueError, IndexError) as exc:
        raise CliInputError(f"invalid profile {path}: {exc}")


def _load_batch(path) -> SampleBatch:
    try:
        return SampleBatch.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliInputError(f"invalid sample batch {path}: {exc}")


def _load_data_spec(path):
    obj = _load_json_input(path, "data spec")
    try:
        return data_spec_from_json(obj)
    except (KeyError, ValueError, TypeError) as exc:
        raise CliInputError(f"invalid data spec {path}: {exc}")


def _load_denoiser(path):
    path = Path(path)
    try:
        if path.suffix == ".bin":
            return MlpDenoiser.load(path)
        obj = _load_json_input(path, "denoiser spec")
        return denoiser_from_spec(obj, base_dir=path.parent)
    except CliInputError:
        raise
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise CliInputError(f"invalid denoiser {path}: {exc}")


def _denoiser_dim(denoiser):
    if hasattr(denoiser, "d"):
        return denoiser.d
    if hasattr(denoiser, "spec"):
        return denoiser.spec.d
    if hasattr(denoiser, "inner"):
        return _denoiser_dim(denoiser.inner)
    return None


def _derived_seed(seed: int, *path) -> int:
    return int(child_seed_sequence(seed, *path).generate_state(1)[0])


def _write_csv(path: Path, header: list, rows: list) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue())


# -- subcommand handlers ----------------------------------------------------


def _cmd_make_traj(a: dict) -> None:
    schedule = linear_beta_schedule(a["T"], a["beta_start"], a["beta_end"])
    traj = make_trajectory(schedule, a["kind"], a["steps"], label=a["label"])
    out = _out_path(a["out"])
    traj.save(out)
    _write_manifest(out, "make-traj", a, [out])


def _cmd_profile(a: dict) -> None:
    schedule = linear_beta_schedule(a["T"], a["beta_start"], a["beta_end"])
    spec = _load_data_spec(a["data"])
    denoiser = _load_denoiser(a["denoiser"])
    dataset = spec.sample(child_rng(a["seed"], "profile-dataset"), a["data_size"])
    grid = default_grid(schedule, a["grid"])
    prof = profile(denoiser, dataset, grid, n_draws=a["draws"], seed=a["seed"],
                   dataset_id=Path(a["data"]).name,
                   denoiser_id=getattr(denoiser, "label", ""))
    out = _out_path(a["out"])
    prof.save(out)
    _write_manifest(out, "profile", a, [out, ErrorProfile.sidecar_path(out)])


def _cmd_train_denoiser(a: dict) -> None:
    schedule = linear_beta_schedule(a["T"], a["beta_start"], a["beta_end"])
    spec = _load_data_spec(a["data"])
    dataset = spec.sample(child_rng(a["seed"], "train-dataset"), a["data_size"])
    net = train_mlp_denoiser(dataset, schedule, hidden=tuple(a["hidden"]),
                             steps=a["steps"], batch_size=a["batch_size"],
                             learning_rate=a["lr"], seed=a["seed"],
                             label=a["label"])
    out = _out_path(a["out"])
    net.save(out)
    spec_path = Path(str(out) + ".spec.json")
    write_json(spec_path, {"type": "mlp", "weights": out.name})
    _write_manifest(out, "train-denoiser", a, [out, spec_path])


def _cmd_optimize(a: dict) -> None:
    base = _load_trajectory(a["traj"])
    prof = _load_profile(a["profile"])
    config = OptimizeConfig(gamma=a["gamma"], lam=a["lam"],
                            step_size=a["step_size"], max_iters=a["iters"],
                            grad_tolerance=a["tol"], eps_open=a["eps_open"])
    result = optimize(base, prof, config)
    out = _out_path(a["out"])
    result.trajectory.save(out)
    artifacts = [out]
    if a["trace"]:
        trace_path = _out_path(a["trace"])
        rows = [(i, float(c), float(r), float(t))
                for i, (c, r, t) in enumerate(result.trace)]
        _write_csv(trace_path, ["iter", "cpe", "reg", "total"], rows)
        artifacts.append(trace_path)
    _write_manifest(out, "optimize", a, artifacts)


def _cmd_sample(a: dict) -> None:
    traj = _load_trajectory(a["traj"])
    denoiser = _load_denoiser(a["denoiser"])
    known_d = _denoiser_dim(denoiser)
    if known_d is not None and known_d != a["d"]:
        raise ValueError(f"--d {a['d']} does not match denoiser "
                         f"dimensionality {known_d}")
    batch = sample(denoiser, traj, a["n"], a["d"], a["seed"])
    out = _out_path(a["out"])
    batch.save(out)
    _write_manifest(out, "sample", a, [out])


def _cmd_simulate(a: dict) -> None:
    traj = _load_trajectory(a["traj"])
    prof = _load_profile(a["profile"])
    report = propagate_error_mc(traj, lambda ab: f_delta(prof, ab),
                                a["runs"], a["d"], a["seed"])
    out = _out_path(a["out"])
    payload = report.to_json()
    payload["seed"] = a["seed"]
    payload["trajectory_label"] = traj.label
    write_json(out, payload)
    _write_manifest(out, "simulate", a, [out])


def _cmd_eval(a: dict) -> None:
    batch = _load_batch(a["batch"])
    ref_spec = _load_data_spec(a["ref"])
    if a["against"]:
        other = _load_batch(a["against"]).samples
    else:
        other = ref_spec.sample(child_rng(a["seed"], "eval-ref"), a["ref_size"])
    swd = sliced_wasserstein(batch.samples, other,
                             n_projections=a["projections"], seed=a["seed"])
    mean_err, cov_err = moment_diagnostics(batch, ref_spec)
    report = EvalReport(swd=swd, mean_error=mean_err, cov_error=cov_err,
                        n_a=batch.n, n_b=int(np.atleast_2d(other).shape[0]),
                        n_projections=a["projections"], seed=a["seed"])
    out = _out_path(a["out"])
    write_json(out, report.to_json())
    _write_manifest(out, "eval", a, [out])


def _cmd_sweep(a: dict) -> None:
    schedule = linear_beta_schedule(a["T"], a["beta_start"], a["beta_end"])
    spec = _load_data_spec(a["data"])
    denoiser = _load_denoiser(a["denoiser"])
    prof = _load_profile(a["profile"])
    ref = spec.sample(child_rng(a["seed"], "sweep-ref"), a["ref_size"])
    rows = []
    row_index = 0
    for kind in a["kinds"]:
        for K in a["steps"]:
            base = make_trajectory(schedule, kind, K)
            base_cpe = cpe(base, prof)
            for gamma in a["gammas"]:
                for lam in a["lambdas"]:
                    config = OptimizeConfig(gamma=gamma, lam=lam,
                                            step_size=a["step_size"],
                                            max_iters=a["iters"])
                    result = optimize(base, prof, config)
                    combo_seed = _derived_seed(a["seed"], "sweep", row_index)
                    swd_base = sliced_wasserstein(
                        sample(denoiser, base, a["n"], spec.d, combo_seed).samples,
                        ref, n_projections=a["projections"], seed=combo_seed)
                    swd_opt = sliced_wasserstein(
                        sample(denoiser, result.trajectory, a["n"], spec.d,
                               combo_seed).samples,
                        ref, n_projections=a["projections"], seed=combo_seed)
                    rows.append((gamma, lam, kind, K, base_cpe,
                                 result.breakdown.cpe, swd_base, swd_opt))
                    row_index += 1
    out = _out_path(a["out"])
    _write_csv(out, ["gamma", "lambda", "kind", "K", "cpe_base", "cpe_opt",
                     "swd_base", "swd_opt"], rows)
    _write_manifest(out, "sweep", a, [out])


_HANDLERS = {
    "make-traj": _cmd_make_traj,
    "profile": _cmd_profile,
    "train-denoiser": _cmd_train_denoiser,
    "optimize": _cmd_optimize,
    "sample": _cmd_sample,
    "simulate": _cmd_simulate,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if ns.command is None:
        parser.print_help()
        return EXIT_USAGE
    try:
        resolved = _resolve_args(ns)
        _HANDLERS[ns.command](resolved)
        return 0
    except SystemExit as exc:
        return int(exc.code or 0)
    except CliInputError as exc:
        return _fail(str(exc), "InputError", EXIT_INPUT)
    except (ValueError, FloatingPointError) as exc:
        return _fail(str(exc), type(exc).__name__, EXIT_DOMAIN)
    except RuntimeError as exc:
        return _fail(str(exc), "RuntimeError", EXIT_DOMAIN)
    except Exception as exc:  # pragma: no cover - safety net
        return _fail(f"{type(exc).__name__}: {exc}", "InternalError",
                     EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
