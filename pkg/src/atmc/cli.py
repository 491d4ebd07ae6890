"""Experiment driver.

Subcommands:

* ``sample``        run a configured chain, stream records to
                    ``<outdir>/chain.jsonl``, snapshots to
                    ``<outdir>/snapshots/``, and a manifest beside them.
* ``evaluate``      score persisted snapshot sets on a test set: accuracy
                    and NLL for the latest single sample and the posterior
                    predictive (optionally every sample), plus plot-ready
                    calibration data.
* ``calibrate``     standalone calibration report from a predictions file.
* ``derive-hypers`` print the step-size-linked hyperparameter conventions.
* ``schedule-dump`` print the step-size sequence for inspection.

Configs are flat ``section.key = value`` text; every output embeds the
config hash and seed through the run manifest.  Exit status: 0 success,
1 configuration error, 2 numerical abort, 3 I/O error.
"""

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import backend
from .errors import AtmcError, ConfigError, InvalidStateError
from .gradnoise import NoiseModel
from .integrator import StepSizeSchedule, step_size
from .kinetics import KineticsSpec
from .mlp import MlpClassifier, MlpTarget
from .posterior import accuracy, calibration, nll, posterior_predictive
from .sampler import CollectRule, Method, SamplerConfig, run_chain
from .targets import BayesLinRegTarget, GaussianTarget, load_dataset

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


# ---------------------------------------------------------------------------
# config file handling

def parse_config_text(text):
    """Flat ``section.key = value`` pairs; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().lower()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


class Config:
    """Typed access to the flat key-value map; errors name the field."""

    def __init__(self, values):
        self.values = dict(values)

    def has(self, key):
        return key in self.values

    def get_str(self, key, default=None, choices=None):
        if key not in self.values:
            if default is not None:
                return default
            raise ConfigError(f"missing required config field {key!r}")
        value = self.values[key]
        if choices is not None and value not in choices:
            raise ConfigError(f"{key} must be one of {sorted(choices)}, got {value!r}")
        return value

    def get_float(self, key, default=None, minimum=None):
        if key not in self.values:
            if default is not None:
                return default
            raise ConfigError(f"missing required config field {key!r}")
        try:
            value = float(self.values[key])
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {self.values[key]!r}") from None
        if minimum is not None and value < minimum:
            raise ConfigError(f"{key} must be >= {minimum}, got {value}")
        return value

    def get_int(self, key, default=None, minimum=None):
        if key not in self.values:
            if default is not None:
                return default
            raise ConfigError(f"missing required config field {key!r}")
        try:
            value = int(self.values[key])
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {self.values[key]!r}") from None
        if minimum is not None and value < minimum:
            raise ConfigError(f"{key} must be >= {minimum}, got {value}")
        return value

    def get_float_list(self, key, default=None):
        if key not in self.values:
            if default is not None:
                return default
            raise ConfigError(f"missing required config field {key!r}")
        try:
            return [float(v) for v in self.values[key].split(",")]
        except ValueError:
            raise ConfigError(f"{key} must be comma-separated numbers") from None

    def get_int_list(self, key, default=None):
        if key not in self.values:
            if default is not None:
                return default
            raise ConfigError(f"missing required config field {key!r}")
        try:
            return [int(v) for v in self.values[key].split(",")]
        except ValueError:
            raise ConfigError(f"{key} must be comma-separated integers") from None

    def get_path(self, key):
        path = self.get_str(key)
        if not os.path.exists(path):
            raise ConfigError(f"{key}: file not found: {path}")
        return path


def config_digest(values, seed):
    payload = "\n".join(f"{k}={values[k]}" for k in sorted(values))
    payload += f"\nseed={seed}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def target_digest(values, dataset_bytes=b""):
    payload = "\n".join(
        f"{k}={values[k]}" for k in sorted(values) if k.startswith("target.")
    )
    digest = hashlib.sha256(payload.encode("utf-8"))
    digest.update(dataset_bytes)
    return digest.hexdigest()[:16]


# ---------------------------------------------------------------------------
# hyperparameter conventions

def derive_hyperparameters(h0):
    """Step-size-linked defaults: mass, speed cap, and momentum noise.

    The mass makes the average per-step displacement 0.0003, the speed cap
    makes the maximum per-step displacement 0.001, and the momentum noise
    keeps per-step momentum retention exp(-D h0) at 0.9.
    """
    if h0 <= 0:
        raise ConfigError(f"h0 must be positive, got {h0}")
    momentum_noise = -math.log(0.9) / h0
    return {
        "m": (0.0003 / h0) ** -2,
        "c": 0.001 / h0,
        "D": momentum_noise,
        "retention": math.exp(-momentum_noise * h0),
    }


# ---------------------------------------------------------------------------
# target / sampler construction

def build_target(cfg: Config):
    kind = cfg.get_str("target.kind", choices={"gaussian", "linreg", "mlp"})
    if kind == "gaussian":
        dim = cfg.get_int("target.dim", default=1, minimum=1)
        mean = np.resize(cfg.get_float_list("target.mean", default=[0.0]), dim)
        variance = np.resize(cfg.get_float_list("target.variance", default=[1.0]), dim)
        return GaussianTarget(mean, variance), b""
    if kind == "linreg":
        n = cfg.get_int("target.n_examples", minimum=2)
        dim = cfg.get_int("target.dim", minimum=1)
        noise_var = cfg.get_float("target.noise_variance", default=1.0)
        prior_var = cfg.get_float("target.prior_variance", default=1.0)
        feature_scale = cfg.get_float("target.feature_scale", default=1.0)
        data_seed = cfg.get_int("target.data_seed", default=0)
        rng = np.random.default_rng(np.random.SeedSequence(data_seed))
        x = feature_scale * rng.standard_normal((n, dim))
        coeff = rng.standard_normal(dim)
        y = x @ coeff + math.sqrt(noise_var) * rng.standard_normal(n)
        return BayesLinRegTarget(x, y, noise_var, prior_var), b""
    path = cfg.get_path("target.dataset")
    widths = cfg.get_int_list("target.widths")
    residual = cfg.get_int_list("target.residual", default=[0] * (len(widths) - 1))
    model = MlpClassifier(
        widths,
        residual=[bool(r) for r in residual],
        laplace_scale=cfg.get_float("target.laplace_scale", default=5.0),
        direction_strength=(cfg.get_float("target.direction_strength")
                            if cfg.has("target.direction_strength") else None),
        bias_prior_var=cfg.get_float("target.bias_prior_var", default=100.0),
    )
    features, labels = load_dataset(path, n_features=widths[0])
    target = MlpTarget(model, features, labels,
                       branch_scale=cfg.get_float("target.branch_scale", default=0.1))
    with open(path, "rb") as fh:
        dataset_bytes = fh.read()
    return target, dataset_bytes


def _auto_float(cfg, key, auto_value, default=None):
    if not cfg.has(key):
        if default is None:
            return auto_value
        return default
    if cfg.values[key].strip().lower() == "auto":
        return auto_value
    return cfg.get_float(key)


def build_sampler_config(cfg: Config, seed_override=None):
    method = Method(cfg.get_str("sampler.method", choices={m.value for m in Method}))
    h0 = cfg.get_float("sampler.h0")
    if h0 <= 0:
        raise ConfigError(f"sampler.h0 must be positive, got {h0}")
    conventions = derive_hyperparameters(h0)

    schedule_kind = cfg.get_str("sampler.schedule", default="constant",
                                choices={"constant", "cyclic"})
    if schedule_kind == "cyclic":
        schedule = StepSizeSchedule.cyclic(h0, cfg.get_int("sampler.cycle_length", minimum=1))
    else:
        schedule = StepSizeSchedule.constant(h0)

    kin_kind = cfg.get_str("sampler.kinetics", default="gaussian",
                           choices={"gaussian", "hyperbolic"})
    mass = _auto_float(cfg, "sampler.mass", conventions["m"], default=1.0)
    if kin_kind == "hyperbolic":
        speed_cap = _auto_float(cfg, "sampler.speed_cap", conventions["c"])
        kinetics = KineticsSpec.hyperbolic(mass, speed_cap)
    else:
        kinetics = KineticsSpec.gaussian(mass)

    momentum_noise = _auto_float(cfg, "sampler.momentum_noise", conventions["D"])

    collect_raw = cfg.get_str(
        "sampler.collect",
        default="cycle_end" if schedule_kind == "cyclic" else "none",
    )
    if collect_raw == "none":
        collect = CollectRule.none()
    elif collect_raw == "cycle_end":
        collect = CollectRule.cycle_end()
    elif collect_raw.startswith("every:"):
        try:
            collect = CollectRule.every_k(int(collect_raw.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(
                f"sampler.collect: expected every:<int>, got {collect_raw!r}"
            ) from None
    else:
        raise ConfigError(
            f"sampler.collect must be none, cycle_end, or every:<k>, got {collect_raw!r}"
        )

    seed = seed_override if seed_override is not None else cfg.get_int("sampler.seed", default=0)
    config = SamplerConfig(
        method=method,
        kinetics=kinetics,
        schedule=schedule,
        momentum_noise=momentum_noise,
        total_steps=cfg.get_int("sampler.total_steps", minimum=0),
        burn_in_steps=cfg.get_int("sampler.burn_in_steps", default=-1),
        collect=collect,
        seed=seed,
        batch_size=cfg.get_int("sampler.batch_size", default=0, minimum=0),
        record_every=cfg.get_int("sampler.record_every", default=0, minimum=0),
        initial_momentum=(cfg.get_float("sampler.initial_momentum")
                          if cfg.has("sampler.initial_momentum") else None),
        initial_temperature=(cfg.get_float("sampler.initial_temperature")
                             if cfg.has("sampler.initial_temperature") else None),
    )
    config.validate()
    return config


def build_noise(cfg: Config):
    kind = cfg.get_str("noise.kind", default="none", choices={"none", "gaussian"})
    if kind == "none":
        return NoiseModel.none()
    sigma = cfg.get_float_list("noise.sigma")
    if any(s < 0 for s in sigma):
        raise ConfigError("noise.sigma must be non-negative")
    return NoiseModel.gaussian(sigma[0] if len(sigma) == 1 else np.asarray(sigma))


# ---------------------------------------------------------------------------
# sample

def cmd_sample(args):
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    cfg = Config(parse_config_text(raw))
    target, dataset_bytes = build_target(cfg)
    sampler_config = build_sampler_config(cfg, seed_override=args.seed)
    noise = build_noise(cfg)

    outdir = args.outdir
    manifest_path = os.path.join(outdir, "manifest.json")
    if os.path.exists(manifest_path) and not args.force:
        raise ConfigError(
            f"outdir: {outdir} already holds a run; pass --force to overwrite"
        )
    os.makedirs(os.path.join(outdir, "snapshots"), exist_ok=True)

    digest = config_digest(cfg.values, sampler_config.seed)
    tdigest = target_digest(cfg.values, dataset_bytes)

    t0 = time.perf_counter()
    result = run_chain(sampler_config, target, noise)
    elapsed = time.perf_counter() - t0

    with open(os.path.join(outdir, "chain.jsonl"), "w", encoding="utf-8") as fh:
        for record in result.records:
            fh.write(record.to_json_line())
            fh.write("\n")

    entries = []
    for record in result.records:
        if not record.collected:
            continue
        name = f"step{record.step:08d}.bin"
        with open(os.path.join(outdir, "snapshots", name), "wb") as fh:
            fh.write(np.ascontiguousarray(record.theta, dtype="<f8").tobytes())
        entries.append({"step": record.step, "file": f"snapshots/{name}"})

    manifest = {
        "dimension": target.dim,
        "seed": sampler_config.seed,
        "config_hash": digest,
        "target_hash": tdigest,
        "method": sampler_config.method.value,
        "backend": backend.name(),
        "min_friction": result.min_friction,
        "max_speed": result.max_speed,
        "aborted": result.aborted,
        "abort_reason": result.abort_reason,
        "config": cfg.values,
        "snapshots": entries,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    last = result.records[-1]
    print(f"method            {sampler_config.method.value}")
    print(f"backend           {backend.name()}")
    print(f"steps             {last.step}")
    print(f"collected         {len(entries)}")
    print(f"final loss        {last.loss:.6g}")
    print(f"min friction      {result.min_friction:.6g}")
    print(f"config hash       {digest}")
    print(f"wall time (s)     {elapsed:.3f}")
    if result.aborted:
        print(f"aborted           {result.abort_reason}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate

def _load_run(run_dir):
    manifest_path = os.path.join(run_dir, "manifest.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"run: cannot read manifest {manifest_path}: {exc}") from None
    members = []
    for entry in manifest["snapshots"]:
        path = os.path.join(run_dir, entry["file"])
        with open(path, "rb") as fh:
            theta = np.frombuffer(fh.read(), dtype="<f8")
        if theta.size != manifest["dimension"]:
            raise ConfigError(
                f"run: snapshot {path} has {theta.size} values, "
                f"manifest says {manifest['dimension']}"
            )
        members.append((entry["step"], np.ascontiguousarray(theta)))
    return manifest, members


def cmd_evaluate(args):
    manifests = []
    members = []
    for run_dir in args.run:
        manifest, run_members = _load_run(run_dir)
        manifests.append(manifest)
        members.extend(run_members)
    if not members:
        print("no snapshots found in the given runs", file=sys.stderr)
        return EXIT_CONFIG
    target_hashes = {m["target_hash"] for m in manifests}
    if len(target_hashes) != 1:
        raise ConfigError(
            f"run: snapshot sets target different models (hashes {sorted(target_hashes)})"
        )

    cfg = Config(manifests[0]["config"])
    if cfg.get_str("target.kind") != "mlp":
        raise ConfigError("target.kind: evaluate needs a classifier target (mlp)")
    target, _ = build_target(cfg)

    dataset_path = args.dataset or cfg.get_str("eval.dataset", default="")
    if not dataset_path:
        raise ConfigError("eval.dataset: no test set given (flag --dataset or config)")
    if not os.path.exists(dataset_path):
        raise ConfigError(f"eval.dataset: file not found: {dataset_path}")
    features, labels = load_dataset(dataset_path, n_features=target.model.n_features)

    method = manifests[0]["method"].upper()
    rows = []
    member_nlls = []
    for step, theta in members:
        probs = target.predict(theta, features)
        member_nlls.append(nll(probs, labels))
        if args.per_sample:
            rows.append((f"{method} (sample step={step})",
                         100.0 * accuracy(probs, labels), member_nlls[-1]))
    latest_step, latest_theta = members[-1]
    latest_probs = target.predict(latest_theta, features)
    rows.append((f"{method} (single sample)",
                 100.0 * accuracy(latest_probs, labels), nll(latest_probs, labels)))
    ensemble = posterior_predictive([theta for _, theta in members], target, features)
    rows.append((f"{method} (posterior predictive)",
                 100.0 * accuracy(ensemble.probabilities, labels),
                 nll(ensemble.probabilities, labels)))

    width = max(len(r[0]) for r in rows) + 2
    lines = [
        f"# config_hash={manifests[0]['config_hash']} seed={manifests[0]['seed']} "
        f"members={len(members)}",
        f"{'setup':<{width}}{'top1_acc_pct':>14}{'nll_nats':>12}",
    ]
    for name, acc, nats in rows:
        lines.append(f"{name:<{width}}{acc:>14.6f}{nats:>12.6f}")
    lines.append(f"mean single-sample nll: {float(np.mean(member_nlls)):.6f}")
    table = "\n".join(lines) + "\n"

    outdir = args.out or args.run[0]
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "evaluation.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    report = calibration(ensemble.probabilities, labels, scheme=args.bins_scheme)
    with open(os.path.join(outdir, "calibration.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(report.to_csv_lines()) + "\n")
    sys.stdout.write(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# calibrate / derive-hypers / schedule-dump

def cmd_calibrate(args):
    try:
        data = np.loadtxt(args.predictions, delimiter=",", ndmin=2)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        raise ConfigError(f"predictions: unparseable file ({exc})") from None
    if data.shape[1] < 3:
        raise ConfigError("predictions: need >= 2 probability columns plus a label column")
    probs = data[:, :-1]
    labels = data[:, -1].astype(np.int64)
    report = calibration(probs, labels, scheme=args.bins_scheme)
    text = "\n".join(report.to_csv_lines()) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_derive_hypers(args):
    values = derive_hyperparameters(args.h0)
    print(f"h0 = {args.h0!r}")
    print(f"m = {values['m']!r}")
    print(f"c = {values['c']!r}")
    print(f"D = {values['D']!r}")
    print(f"retention = {values['retention']!r}")
    return EXIT_OK


def cmd_schedule_dump(args):
    if args.cycle_length > 0:
        schedule = StepSizeSchedule.cyclic(args.h0, args.cycle_length)
    else:
        schedule = StepSizeSchedule.constant(args.h0)
    for i in range(args.steps):
        print(f"{i} {step_size(schedule, i)!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="atmc",
        description="Adaptive-thermostat SG-MCMC experiment driver",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="run a chain from a config file")
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.add_argument("--outdir", required=True, help="run output directory")
    p.add_argument("--seed", type=int, default=None, help="override sampler.seed")
    p.add_argument("--force", action="store_true", help="overwrite an existing run")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("evaluate", help="score snapshots on a test set")
    p.add_argument("--run", action="append", required=True, help="run directory (repeatable)")
    p.add_argument("--dataset", default=None, help="test-set path (else config eval.dataset)")
    p.add_argument("--out", default=None, help="where to write tables (default: first run)")
    p.add_argument("--per-sample", action="store_true", help="one table row per snapshot")
    p.add_argument("--bins-scheme", choices=("count", "width"), default="count")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("calibrate", help="calibration report from a predictions file")
    p.add_argument("--predictions", required=True,
                   help="CSV rows: class probabilities..., integer label")
    p.add_argument("--out", default=None, help="write the report here as well as stdout")
    p.add_argument("--bins-scheme", choices=("count", "width"), default="count")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("derive-hypers", help="step-size-linked hyperparameter conventions")
    p.add_argument("--h0", type=float, required=True)
    p.set_defaults(fn=cmd_derive_hypers)

    p = sub.add_parser("schedule-dump", help="print the step-size sequence")
    p.add_argument("--h0", type=float, required=True)
    p.add_argument("--cycle-length", type=int, default=0, help="0 for a constant schedule")
    p.add_argument("--steps", type=int, default=100)
    p.set_defaults(fn=cmd_schedule_dump)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidStateError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except AtmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
