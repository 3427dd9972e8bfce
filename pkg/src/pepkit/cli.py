"""Command-line entry point: ``pepkit <command> [options]``.

Exit codes: 0 success, 1 usage/config, 2 data/parse, 3 numeric failure.
Errors are printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
import warnings
from pathlib import Path

from .checkpoint import load_checkpoint
from .config import RunConfig, flag_names
from .curvature import curvature_report
from .data import Dataset
from .errors import ConfigError, NoPEPBenefitWarning, PepError, ShapeError, TrainingDiverged
from .metrics import calibration_report, symmetrized_kld
from .nn import forward, softmax
from .pep import (PerturbConfig, baseline_log_likelihood, ensemble_log_likelihood,
                  ensemble_predict, golden_section_sigma)
from .temperature import DEFAULT_BRACKET, fit_temperature, scale_logits
from .train import overfit_gap, train, write_series


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _load(cfg: RunConfig, checkpoint, descriptor=None):
    spec, params = load_checkpoint(checkpoint)
    data = cfg.dataset(descriptor)
    if data.dim != spec.input_width:
        raise ShapeError(f"dataset has {data.dim} features but the network expects {spec.input_width}")
    return spec, params, data


def _subset(data: Dataset, name: str) -> Dataset:
    return Dataset(data.features, data.labels) if name == "all" else data.subset(name)


def _perturb_config(cfg: RunConfig, sigma, members=None, seed=None) -> PerturbConfig:
    search = cfg.search_config()
    return PerturbConfig(
        sigma,
        members if members is not None else cfg.get("test.members"),
        search.distribution,
        search.mask,
        seed if seed is not None else cfg.derived_seed("pep-test"),
    )


def _method_probs(cfg, args, spec, params, features):
    """Predicted probabilities and provenance for baseline / pep / ts."""
    if args.method == "baseline":
        return softmax(forward(spec, params, features)), {"method": "baseline"}
    if args.method == "pep":
        if args.sigma is None:
            raise ConfigError("method 'pep' needs --sigma")
        pc = _perturb_config(cfg, args.sigma, args.members, args.pep_seed)
        return ensemble_predict(spec, params, pc, features), {
            "method": "pep", "sigma": pc.sigma, "members": pc.members, "seed": pc.seed,
            "distribution": pc.distribution,
        }
    if args.temperature is None:
        raise ConfigError("method 'ts' needs --temperature")
    return scale_logits(forward(spec, params, features), args.temperature), {
        "method": "ts", "temperature": args.temperature,
    }


def _reliability_rows(report):
    return list(report.bins.rows())


RELIABILITY_HEADER = ["bin_low", "bin_high", "count", "accuracy", "confidence"]


def cmd_train(cfg: RunConfig, args) -> int:
    data = cfg.dataset()
    train_split = data.subset("train")
    spec = cfg.network(data.dim, train_split.class_count)
    try:
        series = train(spec, data, cfg.train_config())
    except TrainingDiverged as exc:
        write_series(exc.series, cfg.output)
        raise
    write_series(series, cfg.output)
    return 0


def _search(cfg, spec, params, validation):
    search = cfg.search_config()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NoPEPBenefitWarning)
        sigma_star, curve = golden_section_sigma(spec, params, search, validation)
    no_benefit = any(issubclass(w.category, NoPEPBenefitWarning) for w in caught)
    return search, sigma_star, curve, no_benefit


def cmd_pep_search(cfg: RunConfig, args) -> int:
    spec, params, data = _load(cfg, args.checkpoint)
    validation = data.subset("validation")
    search, sigma_star, curve, no_benefit = _search(cfg, spec, params, validation)
    at_star, _ = ensemble_log_likelihood(spec, params, search.perturb(sigma_star), validation)
    header = ["sigma", "ensemble_ll"] + [f"member_ll_{j + 1}" for j in range(search.members)]
    _write_csv(cfg.output / "sigma_curve.csv", header,
               ([p.sigma, p.ensemble_ll, *p.member_ll] for p in curve.points))
    _write_json(cfg.output / "pep_search.json", {
        "sigma_star": sigma_star,
        "L_at_sigma_star": at_star,
        "L_baseline": baseline_log_likelihood(spec, params, validation),
        "split": "validation",
        "sigma_low": search.sigma_low,
        "sigma_high": search.sigma_high,
        "iterations": search.iterations,
        "members": search.members,
        "seed": search.seed,
        "evaluations": len(curve.points),
        "no_pep_benefit": no_benefit,
    })
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    spec, params, data = _load(cfg, args.checkpoint)
    part = _subset(data, args.split)
    probs, provenance = _method_probs(cfg, args, spec, params, part.features)
    provenance["split"] = args.split
    report = calibration_report(probs, part.labels, cfg.get("metrics.bins"), provenance)
    _write_json(cfg.output / f"evaluate_{args.method}.json", report.to_dict())
    _write_csv(cfg.output / f"reliability_{args.method}.csv", RELIABILITY_HEADER,
               _reliability_rows(report))
    return 0


def cmd_probe(cfg: RunConfig, args) -> int:
    spec, params, data = _load(cfg, args.checkpoint)
    report = curvature_report(spec, params, _subset(data, args.split), args.sigma,
                              members=args.members, h=args.step, probe_count=args.probes,
                              seed=cfg.derived_seed("probe"))
    payload = report.to_dict()
    payload["split"] = args.split
    _write_json(cfg.output / "probe.json", payload)
    return 0


def _epoch_of(path: Path) -> int:
    match = re.search(r"(\d+)", path.stem)
    if not match:
        raise ConfigError(f"cannot read an epoch number from {path.name}")
    return int(match.group(1))


def cmd_overfit_probe(cfg: RunConfig, args) -> int:
    paths = sorted(Path(args.checkpoints).glob("*.ckpt"), key=_epoch_of)
    if not paths:
        raise ConfigError(f"no .ckpt files in {args.checkpoints}")
    data = cfg.dataset()
    train_set, validation, test = (data.subset(n) for n in ("train", "validation", "test"))
    rows = []
    for path in paths:
        spec, params = load_checkpoint(path)
        if data.dim != spec.input_width:
            raise ShapeError(f"{path.name}: network expects {spec.input_width} features")
        _, sigma_star, _, _ = _search(cfg, spec, params, validation)
        effect, _ = ensemble_log_likelihood(spec, params, _perturb_config(cfg, sigma_star), test)
        effect -= baseline_log_likelihood(spec, params, test)
        rows.append([_epoch_of(path), overfit_gap(spec, params, train_set, test), sigma_star, effect])
    _write_csv(cfg.output / "overfit_probe.csv",
               ["epoch", "overfit_gap", "sigma_star", "pep_effect_observed"], rows)
    return 0


def cmd_ood(cfg: RunConfig, args) -> int:
    spec, params, in_data = _load(cfg, args.checkpoint, args.in_data)
    out_data = cfg.dataset(args.out_data)
    if out_data.dim != in_data.dim:
        raise ShapeError(f"in-distribution data has {in_data.dim} features, "
                         f"out-of-distribution data {out_data.dim}")
    bins = args.bins if args.bins is not None else cfg.get("metrics.kld_bins")
    x_in = _subset(in_data, args.split).features
    x_out = _subset(out_data, args.split).features
    base_in = softmax(forward(spec, params, x_in)).max(axis=1)
    base_out = softmax(forward(spec, params, x_out)).max(axis=1)
    m_in, provenance = _method_probs(cfg, args, spec, params, x_in)
    m_out, _ = _method_probs(cfg, args, spec, params, x_out)
    _write_json(cfg.output / "ood.json", {
        "kld_baseline": symmetrized_kld(base_in, base_out, bins),
        "kld_method": symmetrized_kld(m_in.max(axis=1), m_out.max(axis=1), bins),
        "bins": bins,
        "statistic": "max_probability",
        "provenance": provenance,
    })
    return 0


TABLE_ROWS = [("NLL", "nll", "{:.4f}"), ("Brier", "brier", "{:.4f}"),
              ("ECE %", "ece_percent", "{:.3f}"), ("Top-1 error %", "top1_error_percent", "{:.3f}")]


def cmd_report(cfg: RunConfig, args) -> int:
    spec, params, data = _load(cfg, args.checkpoint)
    validation, test = data.subset("validation"), data.subset("test")
    fit = fit_temperature(forward(spec, params, validation.features), validation.labels,
                          DEFAULT_BRACKET)
    _, sigma_star, _, no_benefit = _search(cfg, spec, params, validation)
    pc = _perturb_config(cfg, sigma_star)
    logits = forward(spec, params, test.features)
    bins = cfg.get("metrics.bins")
    reports = {
        "baseline": calibration_report(softmax(logits), test.labels, bins, {"method": "baseline"}),
        "ts": calibration_report(scale_logits(logits, fit.t_star), test.labels, bins,
                                 {"method": "ts", "temperature": fit.t_star}),
        "pep": calibration_report(ensemble_predict(spec, params, pc, test.features), test.labels,
                                  bins, {"method": "pep", "sigma": sigma_star,
                                         "members": pc.members, "seed": pc.seed,
                                         "distribution": pc.distribution}),
    }
    payload = {name: r.to_dict() for name, r in reports.items()}
    payload["t_star"] = fit.t_star
    payload["t_star_at_bracket_edge"] = fit.at_bracket_edge
    payload["sigma_star"] = sigma_star
    payload["no_pep_benefit"] = no_benefit
    _write_json(cfg.output / "report.json", payload)
    for name, r in reports.items():
        _write_csv(cfg.output / f"reliability_{name}.csv", RELIABILITY_HEADER, _reliability_rows(r))
    lines = [f"T* = {fit.t_star:.4f}   sigma* = {sigma_star:.6g}",
             f"{'metric':<15}{'BL':>12}{'TS':>12}{'PEP':>12}"]
    for label, key, fmt in TABLE_ROWS:
        cells = "".join(f"{fmt.format(payload[m][key]):>12}" for m in ("baseline", "ts", "pep"))
        lines.append(f"{label:<15}{cells}")
    (cfg.output / "report.txt").write_text("\n".join(lines) + "\n")
    return 0


COMMANDS = {
    "train": cmd_train,
    "pep-search": cmd_pep_search,
    "evaluate": cmd_evaluate,
    "probe": cmd_probe,
    "overfit-probe": cmd_overfit_probe,
    "ood": cmd_ood,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", dest="run.seed", help="master seed")
    common.add_argument("--out", dest="run.output", help="output directory")
    common.add_argument("--dataset", dest="data.dataset", help="dataset descriptor")
    for name in flag_names():
        if name in ("run.seed", "run.output", "data.dataset"):
            continue
        common.add_argument(f"--{name}", dest=name, metavar="VALUE")

    parser = _Parser(prog="pepkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="train and checkpoint every epoch")

    p = sub.add_parser("pep-search", parents=[common], help="golden-section search for sigma*")
    p.add_argument("--checkpoint", required=True)

    def method_args(p):
        p.add_argument("--method", choices=["baseline", "pep", "ts"], default="baseline")
        p.add_argument("--sigma", type=float)
        p.add_argument("--members", type=int)
        p.add_argument("--pep-seed", type=int)
        p.add_argument("--temperature", type=float)

    p = sub.add_parser("evaluate", parents=[common], help="calibration metrics for one method")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "validation", "test", "all"])
    method_args(p)

    p = sub.add_parser("probe", parents=[common], help="curvature report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sigma", type=float, default=1e-2)
    p.add_argument("--split", default="validation", choices=["train", "validation", "test", "all"])
    p.add_argument("--members", type=int, default=1000)
    p.add_argument("--probes", type=int, default=1000)
    p.add_argument("--step", type=float)

    p = sub.add_parser("overfit-probe", parents=[common], help="overfitting vs PEP effect per epoch")
    p.add_argument("--checkpoints", required=True, help="directory of epoch checkpoints")

    p = sub.add_parser("ood", parents=[common], help="symmetrized KLD of confidence histograms")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in-data", required=True)
    p.add_argument("--out-data", required=True)
    p.add_argument("--split", default="test", choices=["train", "validation", "test", "all"])
    p.add_argument("--bins", type=int)
    method_args(p)

    p = sub.add_parser("report", parents=[common], help="baseline vs TS vs PEP on the test split")
    p.add_argument("--checkpoint", required=True)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides = {name: getattr(args, name, None) for name in flag_names()}
        cfg = RunConfig.load(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except PepError as exc:
        kind = {1: "config", 2: "data", 3: "numeric"}[exc.exit_code]
        return _fail(kind, str(exc), exc.exit_code)
    except FloatingPointError as exc:
        return _fail("numeric", str(exc), 3)
    except (OSError, ValueError) as exc:
        return _fail("data", str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
