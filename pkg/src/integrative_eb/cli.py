"""Command-line entry point.

Exit status: 0 on success, 1 on usage errors, 2 on data errors.  When
``--out DIR`` is given, outputs are written there together with a
``manifest.json`` recording the arguments, input digests and version;
running the recorded ``argv`` again reproduces the outputs exactly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, classify, optimizer, simulate
from .kernel import NoiseSpec
from .optimizer import FitConfig, fit_integrative, fit_univariate
from .oracle import (
    MeanSet,
    ObservationSet,
    oracle_correlated,
    oracle_integrative,
    oracle_regularized,
    oracle_univariate,
)
from .risk import RuleParams, SupportVector, sure, sure_1d

log = logging.getLogger("integrative_eb")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}\n\n{self.format_help()}")


@dataclass
class RunManifest:
    subcommand: str
    argv: list
    config: dict
    input_digests: dict = field(default_factory=dict)
    version: str = __version__
    backend: str = optimizer.BACKEND
    seeds: dict = field(default_factory=dict)


def fmt(x) -> str:
    return format(float(x), ".17g")


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _read_table(path) -> dict:
    """Read a headed CSV into ``{column: list of str}``."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    for k, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}:{k}: expected {len(header)} fields, got {len(r)}")
    return {h: [r[c] for r in body] for c, h in enumerate(header)}


def _floats(table, column, path) -> np.ndarray:
    try:
        return np.array([float(v) for v in table[column]], dtype=float)
    except KeyError:
        raise DataError(f"{path} has no column {column!r}") from None
    except ValueError as exc:
        raise DataError(f"{path}: column {column!r}: {exc}") from None


def _write_csv(handle, header, rows):
    w = csv.writer(handle, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


class _Output:
    """Routes named outputs to ``--out DIR`` or to stdout."""

    def __init__(self, args, argv):
        self.dir = Path(args.out) if getattr(args, "out", None) else None
        self.args = args
        self.argv = argv
        self.inputs = {}

    def input(self, path):
        try:
            self.inputs[str(path)] = _digest(path)
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror}") from None
        return path

    def csv(self, name, header, rows, stdout=True):
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
            with open(self.dir / name, "w", newline="") as fh:
                _write_csv(fh, header, rows)
        elif stdout:
            _write_csv(sys.stdout, header, rows)

    def json(self, name, payload, stream=None):
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
            (self.dir / name).write_text(text)
        elif stream is not None:
            stream.write(text)

    def finish(self, seeds=None):
        if self.dir is None:
            return
        config = {k: v for k, v in vars(self.args).items() if k != "func"}
        name = " ".join(filter(None, [self.args.command, getattr(self.args, "mode", None)]))
        manifest = RunManifest(name, list(self.argv), config, self.inputs,
                               seeds=seeds or {})
        self.json("manifest.json", asdict(manifest))


def _fit_config(args) -> FitConfig:
    try:
        return FitConfig(rho=args.rho, box_halfwidth_m=args.m, candidates_k=args.k,
                         tol_epsilon=args.epsilon, max_sweeps=args.max_sweeps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_fit_flags(p, k_default=10):
    p.add_argument("--rho", type=float, default=0.0, help="regulariser added to the density sum")
    p.add_argument("--m", type=float, default=5.0, help="half-width of the search box in noise SDs")
    p.add_argument("--k", type=int, default=k_default, help="grid candidates per coordinate")
    p.add_argument("--epsilon", type=float, default=1e-5, help="convergence tolerance on SURE per sweep")
    p.add_argument("--max-sweeps", type=int, default=100)


def _noise(args) -> NoiseSpec:
    try:
        return NoiseSpec(args.sigma1, args.sigma2, getattr(args, "corr", 0.0))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _summary(result):
    return {"sure_value": result.sure_value, "sweeps_used": result.sweeps_used,
            "converged": result.converged}


def cmd_estimate(args, out):
    path = out.input(args.input)
    table = _read_table(path)
    x1 = _floats(table, "x1", path)
    x2 = _floats(table, "x2", path)
    index = table.get("index", [str(i) for i in range(x1.size)])
    obs = ObservationSet(x1, x2, _noise(args))
    res = fit_integrative(obs, _fit_config(args))
    rows = zip(index, x1, x2, res.support.t1, res.support.t2, res.estimates)
    out.csv("estimates.csv", ["index", "x1", "x2", "t1_hat", "t2_hat", "estimate"], rows)
    out.json("summary.json", _summary(res), sys.stderr)


def cmd_estimate_1d(args, out):
    path = out.input(args.input)
    table = _read_table(path)
    x1 = _floats(table, "x1", path)
    index = table.get("index", [str(i) for i in range(x1.size)])
    res = fit_univariate(x1, args.sigma1, _fit_config(args))
    rows = zip(index, x1, res.support.t1, res.estimates)
    out.csv("estimates.csv", ["index", "x1", "t1_hat", "estimate"], rows)
    out.json("summary.json", _summary(res), sys.stderr)


def cmd_oracle(args, out):
    obs_path = out.input(args.input)
    means_path = out.input(args.means)
    table = _read_table(obs_path)
    mtable = _read_table(means_path)
    x1 = _floats(table, "x1", obs_path)
    index = table.get("index", [str(i) for i in range(x1.size)])
    theta1 = _floats(mtable, "theta1", means_path)
    if args.kind == "univariate":
        est = oracle_univariate(x1, theta1, args.sigma1)
    else:
        obs = ObservationSet(x1, _floats(table, "x2", obs_path), _noise(args))
        means = MeanSet(theta1, _floats(mtable, "theta2", means_path))
        if args.kind == "integrative":
            est = oracle_integrative(obs, means)
        elif args.kind == "regularized":
            est = oracle_regularized(obs, means, args.rho)
        else:
            est = oracle_correlated(obs, means)
    out.csv("oracle.csv", ["index", "estimate"], zip(index, est))


def _support_columns(table, path):
    for a, b in (("t1", "t2"), ("x1", "x2")):
        if a in table:
            return _floats(table, a, path), (_floats(table, b, path) if b in table else None)
    raise DataError(f"{path} needs a t1 (or x1) column")


def cmd_sure(args, out):
    obs_path = out.input(args.input)
    sup_path = out.input(args.support)
    table = _read_table(obs_path)
    t1, t2 = _support_columns(_read_table(sup_path), sup_path)
    x1 = _floats(table, "x1", obs_path)
    if "x2" in table and t2 is not None:
        obs = ObservationSet(x1, _floats(table, "x2", obs_path), _noise(args))
        value = sure(RuleParams(SupportVector(t1, t2), args.rho), obs)
    else:
        value = sure_1d(t1, args.rho, x1, args.sigma1)
    print(fmt(value))
    out.json("summary.json", {"sure_value": value})


_SIM_DEFAULTS = {
    "n": 100, "theta1": "normal01", "theta2": "strong", "sigma1": 1.0, "sigma2": 1.0,
    "corr": 0.0, "reps": 200, "methods": "mle,oracle_integrative,oracle_univariate",
    "mean_seed": 0, "rep_seed": 1, "threads": 1,
}


def _sim_settings(args):
    settings = dict(_SIM_DEFAULTS)
    if args.config:
        path = args.config
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {path}: {exc}") from None
        unknown = set(k.replace("-", "_") for k in loaded) - set(settings)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        settings.update({k.replace("-", "_"): v for k, v in loaded.items()})
    for key in _SIM_DEFAULTS:
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    return settings


def cmd_simulate(args, out):
    if args.config:
        out.input(args.config)
    s = _sim_settings(args)
    try:
        spec = simulate.ScenarioSpec(
            int(s["n"]), simulate.parse_theta1(str(s["theta1"])), str(s["theta2"]),
            NoiseSpec(float(s["sigma1"]), float(s["sigma2"]), float(s["corr"])),
            int(s["mean_seed"]), int(s["rep_seed"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    methods = [m.strip() for m in str(s["methods"]).split(",") if m.strip()]
    unknown = [m for m in methods if m not in simulate.METHODS]
    if unknown:
        raise UsageError(f"unknown method(s): {', '.join(unknown)}")
    reports = simulate.run_replications(spec, methods, int(s["reps"]), _fit_config(args),
                                        workers=int(s["threads"]))
    tidy = [(spec.label, r.method, k, loss) for r in reports for k, loss in enumerate(r.losses)]
    out.csv("losses.csv", ["scenario", "method", "replication", "loss"], tidy, stdout=False)
    out.csv("summary.csv", ["method", "mean_loss", "se"],
            [(r.method, r.mean, r.se) for r in reports])
    return {"mean_seed": spec.mean_seed, "replication_seed_base": spec.replication_seed_base}


def cmd_table1(args, out):
    config = _fit_config(args)
    if (args.mu is None) != (args.nonzero is None):
        raise UsageError("give both --mu and --nonzero, or neither for the full grid")
    cells = [(args.nonzero, args.mu)] if args.mu is not None else sorted(simulate.TABLE1_REFERENCE)
    rows = []
    for nonzero, mu in cells:
        rep = simulate.table1_report(mu, nonzero, args.reps, config, n=args.n,
                                     mean_seed=args.mean_seed,
                                     replication_seed_base=args.rep_seed)
        ref = simulate.TABLE1_REFERENCE.get((nonzero, float(mu)), "")
        rows.append((nonzero, float(mu), rep.mean, rep.se, ref))
        log.info("nonzero=%s mu=%s: %.3f (se %.3f)", nonzero, mu, rep.mean, rep.se)
    header = ["nonzero", "mu", "mean_total_sq_error", "se", "reference"]
    if args.mu is not None:
        print(fmt(rows[0][2]))
        out.csv("table1.csv", header, rows, stdout=False)
    else:
        out.csv("table1.csv", header, rows)
    return {"mean_seed": args.mean_seed, "replication_seed_base": args.rep_seed}


def _read_matrix(path):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise DataError(f"{path} has no data rows")
    samples = [s.strip() for s in rows[0][1:]]
    genes, values = [], []
    for k, r in enumerate(rows[1:], start=2):
        if len(r) != len(samples) + 1:
            raise DataError(f"{path}:{k}: expected {len(samples) + 1} fields")
        genes.append(r[0].strip())
        try:
            values.append([float(v) for v in r[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{k}: {exc}") from None
    return genes, samples, np.asarray(values, dtype=float)


def _read_labels(path, samples):
    table = _read_table(path)
    if "sample_id" not in table or "label" not in table:
        raise DataError(f"{path} needs sample_id and label columns")
    lookup = dict(zip(table["sample_id"], table["label"]))
    try:
        return np.array([int(lookup[s]) for s in samples])
    except KeyError as exc:
        raise DataError(f"{path} has no label for sample {exc.args[0]!r}") from None


def cmd_classify_train(args, out):
    genes, samples, matrix = _read_matrix(out.input(args.train))
    labels = _read_labels(out.input(args.labels), samples)
    aux = None
    if args.aux:
        table = _read_table(out.input(args.aux))
        aux = dict(zip(table.get("gene_id", []), _floats(table, "z", args.aux)))
    data = classify.ExpressionDataset(matrix, labels, genes)
    model = classify.train(data, aux, _fit_config(args), args.threshold)
    if args.cutoff is not None:
        model.cutoff = args.cutoff
    out.json("model.json", model.to_dict(), sys.stdout)


def cmd_classify_predict(args, out):
    try:
        model = classify.TrainedClassifier.from_dict(json.loads(Path(out.input(args.model)).read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"cannot load model {args.model}: {exc}") from None
    genes, samples, matrix = _read_matrix(out.input(args.test))
    pos = {g: i for i, g in enumerate(genes)}
    missing = [g for g in model.gene_ids if g not in pos]
    if missing:
        raise DataError(f"test matrix lacks kept gene {missing[0]!r}")
    pred = classify.predict_matrix(model, matrix[[pos[g] for g in model.gene_ids]])
    out.csv("predictions.csv", ["sample_id", "label"], zip(samples, pred.tolist()))
    if args.truth:
        truth = _read_labels(out.input(args.truth), samples)
        rate = classify.misclassification_rate(pred, truth)
        out.json("summary.json", {"misclassification_rate": rate, "n_samples": len(samples)},
                 sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="integrative-eb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_noise(p):
        p.add_argument("--sigma1", type=float, default=1.0)
        p.add_argument("--sigma2", type=float, default=1.0)

    def with_out(p):
        p.add_argument("--out", help="directory for output files and manifest")

    p = sub.add_parser("estimate", help="integrative fit on paired observations")
    p.add_argument("--input", required=True, help="CSV with columns index,x1,x2")
    with_noise(p)
    _add_fit_flags(p)
    with_out(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("estimate-1d", help="fit without side information")
    p.add_argument("--input", required=True, help="CSV with columns index,x1")
    p.add_argument("--sigma1", type=float, default=1.0)
    _add_fit_flags(p)
    with_out(p)
    p.set_defaults(func=cmd_estimate_1d)

    p = sub.add_parser("oracle", help="oracle rules given the true means")
    p.add_argument("--input", required=True)
    p.add_argument("--means", required=True, help="CSV with columns index,theta1,theta2")
    p.add_argument("--kind", choices=["integrative", "regularized", "univariate", "correlated"],
                   default="integrative")
    with_noise(p)
    p.add_argument("--corr", type=float, default=0.0)
    p.add_argument("--rho", type=float, default=0.0)
    with_out(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sure", help="evaluate the unbiased risk estimate at a support")
    p.add_argument("--input", required=True)
    p.add_argument("--support", required=True, help="CSV with t1,t2 (or x1,x2) columns")
    with_noise(p)
    p.add_argument("--rho", type=float, default=0.0)
    with_out(p)
    p.set_defaults(func=cmd_sure)

    p = sub.add_parser("simulate", help="replicated simulations")
    p.add_argument("--config", help="JSON file of scenario settings; flags override it")
    p.add_argument("--n", type=int)
    p.add_argument("--theta1", help="normal01, uniform_m2_2, exp1, sparse or sparse:COUNT:VALUE")
    p.add_argument("--theta2", help="strong, weak or none")
    p.add_argument("--sigma1", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--corr", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--methods", help="comma-separated: " + ",".join(simulate.METHODS))
    p.add_argument("--mean-seed", type=int)
    p.add_argument("--rep-seed", type=int)
    p.add_argument("--threads", type=int)
    _add_fit_flags(p)
    with_out(p)
    p.set_defaults(func=cmd_simulate)
    simsub = p.add_subparsers(dest="mode", parser_class=_Parser)
    t = simsub.add_parser("table1", help="sparse means without side information")
    t.add_argument("--mu", type=float)
    t.add_argument("--nonzero", type=int)
    t.add_argument("--reps", type=int, default=100)
    t.add_argument("--n", type=int, default=1000)
    t.add_argument("--mean-seed", type=int, default=0)
    t.add_argument("--rep-seed", type=int, default=1)
    _add_fit_flags(t, k_default=50)
    with_out(t)
    t.set_defaults(func=cmd_table1)

    p = sub.add_parser("classify", help="integrative linear classifier")
    csub = p.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    t = csub.add_parser("train")
    t.add_argument("--train", required=True, help="matrix CSV: gene_id then one column per sample")
    t.add_argument("--labels", required=True, help="CSV with columns sample_id,label")
    t.add_argument("--aux", help="CSV with columns gene_id,z")
    t.add_argument("--threshold", type=float, default=0.2)
    t.add_argument("--cutoff", type=float, help="override the class-midpoint cutoff")
    _add_fit_flags(t)
    with_out(t)
    t.set_defaults(func=cmd_classify_train)
    t = csub.add_parser("predict")
    t.add_argument("--model", required=True)
    t.add_argument("--test", required=True)
    t.add_argument("--truth", help="CSV with columns sample_id,label")
    with_out(t)
    t.set_defaults(func=cmd_classify_predict)
    return parser


def dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        out = _Output(args, argv)
        seeds = args.func(args, out)
        out.finish(seeds)
    except UsageError as exc:
        sys.stderr.write(str(exc).rstrip() + "\n")
        return 1
    except (DataError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        sys.stderr.write(f"error: {msg}\n")
        return 2
    return 0


def main():
    sys.exit(dispatch())
