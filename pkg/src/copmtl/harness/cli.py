"""Command-line interface.

Subcommands: gen-images, gen-latent, fit, eval, cv, exp-consistency,
exp-mle-equiv, exp-efficiency, plot. Every command takes --seed, --out,
--threads, and an optional --config key:value file; experiment commands
write report.txt + records.csv plus SVG figures into --out.

Exit codes: 0 success, 2 usage/configuration, 3 data or parse failure,
4 numerical/estimation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from .. import copula as cop
from .. import fit, synthgen
from ..errors import (
    ConfigError,
    DataFormatError,
    DomainError,
    EstimationError,
    TrainingError,
    UsageError,
)
from ..model import load_checkpoint, save_checkpoint
from ..textio import read_kv, write_csv, write_kv
from . import experiments as exps
from .metrics import metrics
from .plots import emit_plots


def _load_config(path) -> dict[str, str]:
    if not path:
        return {}
    return read_kv(path)


def _coerce(current, text: str):
    if isinstance(current, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        try:
            return tuple(int(t) for t in items)
        except ValueError:
            return tuple(float(t) for t in items)
    return text


def apply_overrides(obj, doc: dict[str, str], prefix: str = ""):
    """Replace dataclass fields named in a key:value doc (typed by the
    field's current value)."""
    updates = {}
    for field in dataclasses.fields(obj):
        key = prefix + field.name
        if key in doc:
            updates[field.name] = _coerce(getattr(obj, field.name), doc[key])
    return dataclasses.replace(obj, **updates) if updates else obj


def _train_config(args, doc) -> fit.TrainConfig:
    cfg = fit.TrainConfig(seed=args.seed)
    return apply_overrides(cfg, doc, prefix="train.")


def _spec_from_config(args, doc) -> synthgen.LatentModelSpec:
    if args.design == "independent":
        base_kwargs = dict(
            rho_cont=0.0, rho_bin=0.0, rho_mixed=0.0, feature_corr=0.0, eps_corr=0.0
        )
    else:
        base_kwargs = {}
    kwargs = dict(base_kwargs)
    for name in ("d0", "rho_cont", "rho_bin", "rho_mixed", "feature_corr", "sigma_a", "sigma_b", "eps_corr"):
        if name in doc:
            kwargs[name] = int(doc[name]) if name == "d0" else float(doc[name])
    return synthgen.make_latent_spec(**kwargs)


# ----------------------------------------------------------------- commands


def cmd_gen_images(args):
    doc = _load_config(args.config)
    block_range = int(doc.get("block_range", args.block_range))
    ds = synthgen.gen_block_images(args.n, seed=args.seed, block_range=block_range)
    synthgen.write_dataset(args.out, ds)
    print(f"wrote {ds.n} image pairs to {args.out}")


def cmd_gen_latent(args):
    doc = _load_config(args.config)
    spec = _spec_from_config(args, doc)
    ds = synthgen.gen_latent_model(spec, args.n, seed=args.seed)
    synthgen.write_dataset(args.out, ds)
    print(f"wrote {ds.n} latent-model samples (d0={spec.d0}) to {args.out}")


def _prepare_model_inputs(ds: synthgen.Dataset, pool: int):
    if ds.kind == "images":
        return exps.pool_images(ds.x_left, pool), exps.pool_images(ds.x_right, pool)
    return np.asarray(ds.x_left, dtype=float), np.asarray(ds.x_right, dtype=float)


def _fit_specs(ds, doc, x_left):
    from ..model import EncoderSpec, HeadSpec

    kind = doc.get("encoder_kind", "linear" if ds.kind == "images" else "identity")
    dim = int(doc.get("encoder_dim", 16))
    hidden = tuple(int(t) for t in doc.get("hidden_dims", "").split(",") if t.strip())
    input_dim = x_left.shape[1]
    output_dim = input_dim if kind == "identity" else dim
    encoder = EncoderSpec(kind=kind, input_dim=input_dim, output_dim=output_dim, hidden_dims=hidden)
    head = HeadSpec(
        adapter_rank=int(doc.get("adapter_rank", 1)),
        adapter_scale=float(doc.get("adapter_scale", 0.1)),
    )
    return encoder, head


def _resolve_copula_arg(source: str, ds: synthgen.Dataset):
    if source == "empirical":
        return None
    if source == "oracle":
        if ds.truth is None:
            raise UsageError("--copula oracle requires a dataset with a truth record")
        return ds.truth.params
    if source.startswith("file:"):
        return cop.read_params(source[len("file:") :])
    raise UsageError(f"unknown --copula source {source!r}")


def cmd_fit(args):
    doc = _load_config(args.config)
    ds = synthgen.read_dataset(args.data)
    pool = int(doc.get("pool", 4))
    x_left, x_right = _prepare_model_inputs(ds, pool)
    encoder, head = _fit_specs(ds, doc, x_left)
    train_cfg = _train_config(args, doc)
    params_override = _resolve_copula_arg(args.copula, ds)
    result = fit.run_feasible(
        ds.labels,
        x_left,
        x_right,
        encoder,
        head,
        train_cfg,
        copula_params=params_override,
        empirical_only=(args.loss == "empirical"),
    )
    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(os.path.join(args.out, "checkpoint.bin"), result.model)
    fit.write_trace(os.path.join(args.out, "trace.csv"), result.trace)
    outcome = {
        "loss": args.loss,
        "n": ds.n,
        "pool": pool,
        "encoder_kind": encoder.kind,
        "final_train_loss": result.trace[-1].loss,
        "seed": args.seed,
    }
    if result.params is not None:
        cop.write_params(os.path.join(args.out, "copula_params.txt"), result.params)
    if result.diagnostics is not None:
        from ..estimator import write_diagnostics

        write_diagnostics(os.path.join(args.out, "estimator_diagnostics.txt"), result.diagnostics)
    write_kv(os.path.join(args.out, "report.txt"), outcome)
    print(f"fit complete: final train loss {result.trace[-1].loss:.6f} -> {args.out}")


def cmd_eval(args):
    ds = synthgen.read_dataset(args.data)
    model = load_checkpoint(args.model)
    if ds.kind == "images":
        per_channel = ds.x_left.shape[1] * ds.x_left.shape[2]
        ratio = per_channel / model.encoder.input_dim
        patch = int(round(np.sqrt(ratio)))
        if patch * patch != int(round(ratio)):
            raise UsageError(
                f"checkpoint input dim {model.encoder.input_dim} does not match any "
                f"integer pooling of {ds.x_left.shape[1]}x{ds.x_left.shape[2]} images"
            )
        x_left, x_right = _prepare_model_inputs(ds, patch)
    else:
        x_left, x_right = _prepare_model_inputs(ds, 1)
    mset = metrics(model.forward(x_left, x_right), ds.labels)
    record = dict(n=ds.n, **mset.as_record())
    os.makedirs(args.out, exist_ok=True)
    write_kv(os.path.join(args.out, "report.txt"), {"experiment": "eval", **record})
    write_csv(os.path.join(args.out, "records.csv"), list(record.keys()), [record])
    print(
        "eval: mse=({mse_left:.4f}, {mse_right:.4f}) acc=({acc_left:.4f}, {acc_right:.4f}) "
        "auc=({auc_left:.4f}, {auc_right:.4f})".format(**record)
    )


def cmd_cv(args):
    doc = _load_config(args.config)
    ds = synthgen.read_dataset(args.data)
    config = exps.CvConfig(
        folds=args.folds,
        repeats=args.repeats,
        loss=args.loss,
        seed=args.seed,
        threads=args.threads,
        copula_source=args.copula,
        train=_train_config(args, doc),
    )
    config = apply_overrides(config, doc)
    report = exps.run_cv(ds, config)
    paths = list(exps.write_report(args.out, report))
    paths += emit_plots(report, args.out)
    print(f"cv report written: {', '.join(paths)}")


def _run_experiment(args, config, runner):
    doc = _load_config(args.config)
    config = apply_overrides(config, doc)
    report = runner(config)
    paths = list(exps.write_report(args.out, report))
    paths += emit_plots(report, args.out)
    print(f"{report.experiment} report written: {', '.join(paths)}")


def cmd_exp_consistency(args):
    config = exps.ConsistencyConfig(seed=args.seed, threads=args.threads)
    _run_experiment(args, config, exps.exp_consistency)


def cmd_exp_mle_equiv(args):
    config = exps.MleEquivConfig(seed=args.seed, threads=args.threads)
    _run_experiment(args, config, exps.exp_mle_equiv)


def cmd_exp_efficiency(args):
    config = exps.EfficiencyConfig(seed=args.seed, threads=args.threads)
    _run_experiment(args, config, exps.exp_efficiency)


def cmd_plot(args):
    report = exps.read_report(args.report)
    paths = emit_plots(report, args.out)
    print(f"figures written: {', '.join(paths)}")


def _add_common(parser):
    parser.add_argument("--config", default=None, help="key:value config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="copmtl",
        description="Copula-coupled multi-task learning lab: generators, fitting, experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-images", help="generate paired block images with mixed responses")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--block-range", type=int, default=3, choices=(3, 24))
    _add_common(p)
    p.set_defaults(func=cmd_gen_images)

    p = sub.add_parser("gen-latent", help="generate latent-representation model data")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--design", default="correlated", choices=("correlated", "independent"))
    _add_common(p)
    p.set_defaults(func=cmd_gen_latent)

    p = sub.add_parser("fit", help="train the bi-channel model on a dataset")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--loss", default="copula", choices=("empirical", "copula"))
    p.add_argument("--copula", default="empirical", help="empirical | oracle | file:<path>")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="checkpoint path")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="repeated k-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=4)
    p.add_argument("--loss", default="copula", choices=("empirical", "copula"))
    p.add_argument("--copula", default="empirical", help="empirical | oracle | file:<path>")
    _add_common(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("exp-consistency", help="copula-estimator error rate experiment")
    _add_common(p)
    p.set_defaults(func=cmd_exp_consistency)

    p = sub.add_parser("exp-mle-equiv", help="feasible vs known-parameter estimator distance")
    _add_common(p)
    p.set_defaults(func=cmd_exp_mle_equiv)

    p = sub.add_parser("exp-efficiency", help="relative efficiency experiment")
    _add_common(p)
    p.set_defaults(func=cmd_exp_efficiency)

    p = sub.add_parser("plot", help="re-render figures from a saved report")
    p.add_argument("--report", required=True, help="directory holding report.txt/records.csv")
    _add_common(p)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (DomainError, EstimationError, TrainingError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
