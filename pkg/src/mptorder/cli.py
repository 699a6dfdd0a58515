"""Command-line front end.

Three subcommands: ``validate`` checks a model/data/constraints bundle,
``prior-sample`` writes prior draws on the parameter scale to CSV, and
``compare`` estimates marginal likelihoods and pairwise Bayes factors
for a requested set of model variants.

Every flag's default can be overridden by an environment variable named
``MPTORDER_<FLAG>`` (e.g. ``MPTORDER_DRAWS=500``); explicit flags win.
Identical invocations with identical seeds produce byte-identical
output.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import _kernels, oracle
from .inference import (
    ImportanceConfig,
    SamplerConfig,
    estimate_ml_importance,
    sample_posterior,
)
from .model import Dataset, load_eqn
from .priors import balanced, custom_beta, full_uniform, reparam, sample_prior
from .reparam import ConstraintConfig, check_chains, load_constraints

MODEL_NAMES = ("full", "balanced", "unbalanced", "null")
PRIOR_CHOICES = ("full", "balanced", "unbalanced", "adjusted")


class CliError(Exception):
    """User-facing invocation error; message printed to stderr, exit 1."""


def _env(name: str, cast, fallback):
    raw = os.environ.get(f"MPTORDER_{name}")
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except ValueError:
        raise CliError(f"cannot parse MPTORDER_{name}={raw!r}")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _load_bundle(args, need_data: bool):
    try:
        model = load_eqn(args.model)
    except (OSError, ValueError) as exc:
        raise CliError(f"model file: {exc}")
    data = None
    if getattr(args, "data", None):
        try:
            data = Dataset.load(args.data)
        except (OSError, ValueError) as exc:
            raise CliError(f"data file: {exc}")
    elif need_data:
        raise CliError("this command requires --data")
    config = ConstraintConfig()
    if getattr(args, "constraints", None):
        try:
            config = load_constraints(args.constraints)
        except (OSError, ValueError) as exc:
            raise CliError(f"constraints file: {exc}")
        if getattr(args, "method", None):
            config = config.with_method(args.method)
    return model, data, config


def _build_variant(model, config: ConstraintConfig, name: str, direct: bool):
    """The (model, prior) pair for one requested variant."""
    betas = config.beta_map

    def chainless_prior(m, names):
        usable = {k: v for k, v in betas.items() if k in names}
        return custom_beta(m, usable) if usable else full_uniform(m)

    if name == "full":
        chained = {p for c in config.chains for p in c.parameters}
        return model, chainless_prior(
            model, [p for p in model.free_parameters if p not in chained]
        )
    if name == "null":
        if not config.chains:
            raise CliError("the null variant requires order chains")
        aliases = {
            member: chain.parameters[0]
            for chain in config.chains
            for member in chain.parameters[1:]
        }
        null_model = model.with_aliases(aliases)
        return null_model, chainless_prior(null_model, null_model.free_parameters)
    if not config.chains:
        raise CliError(f"the {name} variant requires order chains")
    if name == "balanced":
        prior = (
            balanced(model, config.chains, betas)
            if direct
            else reparam(model, config.chains, adjusted=True, betas=betas)
        )
    elif name == "adjusted":
        prior = reparam(model, config.chains, adjusted=True, betas=betas)
    elif name == "unbalanced":
        prior = reparam(model, config.chains, adjusted=False, betas=betas)
    else:
        raise CliError(f"unknown model variant {name!r}")
    return model, prior


def cmd_validate(args) -> int:
    lines = []
    failures = 0

    def check(label, fn):
        nonlocal failures
        try:
            detail = fn()
        except (ValueError, OSError) as exc:
            lines.append(f"error: {label}: {exc}")
            failures += 1
            return None
        lines.append(f"ok: {label}" + (f" ({detail})" if detail else ""))
        return True

    try:
        model = load_eqn(args.model)
    except (OSError, ValueError) as exc:
        print(f"error: model: {exc}")
        return 1
    lines.append(
        f"ok: model parsed ({len(model.trees)} trees, "
        f"{len(model.categories)} categories, "
        f"{len(model.free_parameters)} free parameters)"
    )

    def tree_sums():
        problems = model.validate()
        if problems:
            raise ValueError("; ".join(problems))
        return "category probabilities sum to 1"

    check("tree structure", tree_sums)
    if args.data:
        def data_coverage():
            data = Dataset.load(args.data)
            totals = data.tree_totals(model)
            return f"counts cover all categories, totals {totals}"

        check("data", data_coverage)
    if args.constraints:
        def constraint_check():
            config = load_constraints(args.constraints)
            check_chains(model, config.chains)
            for name, a, b in config.betas:
                if name not in model.free_parameters:
                    raise ValueError(f"prior for unknown parameter {name!r}")
            return (
                f"{len(config.chains)} order chains, "
                f"{len(config.betas)} custom priors"
            )

        check("constraints", constraint_check)
    print("\n".join(lines))
    return 1 if failures else 0


def cmd_prior_sample(args) -> int:
    model, _, config = _load_bundle(args, need_data=False)
    if args.draws < 0:
        raise CliError("--draws must be nonnegative")
    _, prior = _build_variant(model, config, args.prior, False)
    draws = sample_prior(prior, args.draws, args.seed)
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(prior.param_names)
    for row in draws:
        writer.writerow([_fmt(float(x)) for x in row])
    _emit(buffer.getvalue(), args.out)
    return 0


def cmd_compare(args) -> int:
    model, data, config = _load_bundle(args, need_data=True)
    names = [n.strip() for n in args.models.split(",") if n.strip()]
    if not names:
        raise CliError("--models must name at least one variant")
    for name in names:
        if name not in MODEL_NAMES:
            raise CliError(f"unknown model variant {name!r}")
    if len(set(names)) != len(names):
        raise CliError("--models lists a variant twice")

    root = np.random.SeedSequence(args.seed)
    seed_state = root.generate_state(2 * len(names), dtype=np.uint64)
    if len(set(int(s) for s in seed_state)) != len(seed_state):
        raise CliError("seed derivation collision; choose another --seed")

    rows = []
    estimates = {}
    posterior_rows = []
    for j, name in enumerate(names):
        variant_model, prior = _build_variant(model, config, name, args.direct)
        seed_post = int(seed_state[2 * j])
        seed_is = int(seed_state[2 * j + 1])
        sampler_cfg = SamplerConfig(
            n_draws=args.draws,
            warmup=args.warmup,
            n_chains=args.chains,
            seed=seed_post,
        )
        posterior = sample_posterior(variant_model, data, prior, sampler_cfg)
        estimate = estimate_ml_importance(
            variant_model,
            data,
            prior,
            posterior,
            ImportanceConfig(n_is=args.is_samples, seed=seed_is),
            label=name,
        )
        estimates[name] = estimate
        method = (
            ",".join(sorted({c.method for c in prior.chains}))
            if prior.kind == "reparam"
            else ""
        )
        rows.append(
            {
                "model": name,
                "prior": prior.kind,
                "method": method,
                "estimator": estimate.estimator,
                "log_ml": estimate.log_ml,
                "se_log": estimate.se_log,
                "p": estimate.p,
                "se_p": estimate.se_p,
                "ess": estimate.ess,
                "n_samples": estimate.n_samples,
                "seed_posterior": seed_post,
                "seed_is": seed_is,
                "acceptance_rate": posterior.acceptance_rate,
                "max_r_hat": float(posterior.r_hat.max()),
                "warnings": "; ".join(estimate.warnings),
            }
        )
        if args.oracle:
            rows.append(_oracle_row(name, variant_model, data, prior))
        for prow in posterior.summary():
            posterior_rows.append((name,) + prow)

    bf_rows = []
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = estimates[names[i]], estimates[names[j]]
            if math.isfinite(a.log_ml) and math.isfinite(b.log_ml):
                bf_rows.append(
                    {
                        "numerator": names[i],
                        "denominator": names[j],
                        "log_bf": a.log_ml - b.log_ml,
                        "se_log_bf": math.hypot(a.se_log, b.se_log),
                    }
                )

    settings = [
        ("model", args.model),
        ("data", args.data),
        ("constraints", args.constraints or ""),
        ("models", ",".join(names)),
        ("method", args.method or ""),
        ("direct", str(args.direct).lower()),
        ("oracle", str(args.oracle).lower()),
        ("draws", args.draws),
        ("warmup", args.warmup),
        ("chains", args.chains),
        ("is_samples", args.is_samples),
        ("seed", args.seed),
        ("backend", _kernels.impl.backend_name),
    ]
    if args.format == "csv":
        doc = _compare_csv(settings, rows, bf_rows)
    else:
        doc = _compare_kv(settings, rows, bf_rows)
    _emit(doc, args.out)
    if args.posterior_csv:
        _write_posterior_csv(posterior_rows, args.posterior_csv)
    return 0


def _oracle_row(name, variant_model, data, prior):
    base = {
        "model": name,
        "prior": prior.kind,
        "method": "",
        "estimator": "quadrature",
        "log_ml": None,
        "se_log": None,
        "p": None,
        "se_p": None,
        "ess": None,
        "n_samples": None,
        "seed_posterior": None,
        "seed_is": None,
        "acceptance_rate": None,
        "max_r_hat": None,
        "warnings": "",
    }
    if prior.n_working > 3:
        base["warnings"] = "oracle skipped: more than 3 free dimensions"
        return base
    log_ml, delta = oracle.richardson_delta(variant_model, data, prior)
    base["log_ml"] = log_ml
    base["se_log"] = abs(delta)
    if log_ml >= math.log(np.finfo(float).tiny):
        base["p"] = math.exp(log_ml)
        base["se_p"] = math.exp(log_ml) * abs(delta)
    return base


_MODEL_COLUMNS = (
    "model", "prior", "method", "estimator", "log_ml", "se_log", "p", "se_p",
    "ess", "n_samples", "seed_posterior", "seed_is", "acceptance_rate",
    "max_r_hat", "warnings",
)
_BF_COLUMNS = ("numerator", "denominator", "log_bf", "se_log_bf")


def _compare_csv(settings, rows, bf_rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(("key", "value"))
    for key, value in settings:
        writer.writerow((key, _fmt(value)))
    writer.writerow(())
    writer.writerow(_MODEL_COLUMNS)
    for row in rows:
        writer.writerow(tuple(_fmt(row[c]) for c in _MODEL_COLUMNS))
    if bf_rows:
        writer.writerow(())
        writer.writerow(_BF_COLUMNS)
        for row in bf_rows:
            writer.writerow(tuple(_fmt(row[c]) for c in _BF_COLUMNS))
    return buffer.getvalue()


def _compare_kv(settings, rows, bf_rows) -> str:
    lines = []
    for key, value in settings:
        lines.append(f"settings.{key}={_fmt(value)}")
    for row in rows:
        stem = f"models.{row['model']}.{row['estimator']}"
        for column in _MODEL_COLUMNS[4:]:
            lines.append(f"{stem}.{column}={_fmt(row[column])}")
    for row in bf_rows:
        stem = f"bf.{row['numerator']}_vs_{row['denominator']}"
        lines.append(f"{stem}.log_bf={_fmt(row['log_bf'])}")
        lines.append(f"{stem}.se_log_bf={_fmt(row['se_log_bf'])}")
    return "\n".join(lines) + "\n"


def _write_posterior_csv(posterior_rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ("model", "parameter", "mean", "sd", "q025", "q500", "q975", "r_hat")
        )
        for row in posterior_rows:
            writer.writerow((row[0], row[1]) + tuple(_fmt(x) for x in row[2:]))


def _emit(doc: str, out) -> None:
    sys.stdout.write(doc)
    if out:
        with open(out, "w", newline="", encoding="utf-8") as handle:
            handle.write(doc)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mptorder",
        description=(
            "Bayesian evaluation of order-constrained multinomial "
            "processing tree models"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, need_data: bool):
        p.add_argument("--model", required=True, help="EQN model file")
        if need_data:
            p.add_argument("--data", required=True, help="CSV of tree,category,count")
        else:
            p.add_argument("--data", help="CSV of tree,category,count")
        p.add_argument("--constraints", help="order-chain and prior config file")
        p.add_argument(
            "--method",
            choices=("A", "B"),
            default=_env("METHOD", str, None),
            help="override the reparameterization method of every chain",
        )
        p.add_argument(
            "--seed", type=int, default=_env("SEED", int, 0), help="master seed"
        )
        p.add_argument("--out", help="write output to this file as well as stdout")

    p_validate = sub.add_parser("validate", help="check a model/data/constraints bundle")
    p_validate.add_argument("--model", required=True)
    p_validate.add_argument("--data")
    p_validate.add_argument("--constraints")
    p_validate.set_defaults(handler=cmd_validate)

    p_sample = sub.add_parser("prior-sample", help="write prior draws to CSV")
    add_common(p_sample, need_data=False)
    p_sample.add_argument(
        "--prior",
        choices=PRIOR_CHOICES,
        default=_env("PRIOR", str, "full"),
        help="prior variant to sample",
    )
    p_sample.add_argument(
        "--draws", type=int, default=_env("DRAWS", int, 10_000),
        help="number of prior draws",
    )
    p_sample.set_defaults(handler=cmd_prior_sample)

    p_compare = sub.add_parser(
        "compare", help="estimate marginal likelihoods and Bayes factors"
    )
    add_common(p_compare, need_data=True)
    p_compare.add_argument(
        "--models",
        default=_env("MODELS", str, "full,balanced,unbalanced,null"),
        help="comma-separated variants to evaluate",
    )
    p_compare.add_argument(
        "--draws", type=int, default=_env("DRAWS", int, 25_000),
        help="post-warmup sweeps per chain",
    )
    p_compare.add_argument(
        "--warmup", type=int, default=_env("WARMUP", int, 5_000),
        help="warmup sweeps per chain",
    )
    p_compare.add_argument(
        "--chains", type=int, default=_env("CHAINS", int, 4),
        help="number of chains",
    )
    p_compare.add_argument(
        "--is-samples", type=int, default=_env("IS_SAMPLES", int, 100_000),
        help="importance samples per model",
    )
    p_compare.add_argument(
        "--format", choices=("csv", "kv"), default=_env("FORMAT", str, "csv"),
        help="output format",
    )
    p_compare.add_argument(
        "--direct", action="store_true",
        help="sample the balanced variant on the parameter scale with a "
        "cone indicator instead of through the reparameterization",
    )
    p_compare.add_argument(
        "--oracle", action="store_true",
        help="add quadrature reference rows for models with at most 3 "
        "free dimensions",
    )
    p_compare.add_argument(
        "--posterior-csv", help="write per-parameter posterior summaries here"
    )
    p_compare.set_defaults(handler=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
