"""Command-line driver: simulate | fit | select | evaluate | rate.

Every command reads one YAML config. Seeds are derived from the master seed
with ``numpy.random.SeedSequence`` entropy tuples:

* data for replicate r:            (master, 0, r)
* EM restarts for replicate r:     (master, 1, r) -> integer fit seed
* evaluation chain (shared):       (master, 2)
* forgetting check sequences:      (master, 3)

so any replicate can be rerun alone and outputs do not depend on run order.
"""
import argparse
import csv
import datetime
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import yaml

from .fit import FitConfig, FitFailedError, fit_model
from .model_space import Constraints, EmptyGridError, ModelIndex, PenaltyConfig, model_grid
from .select import SelectionError, select_model
from .serialize import params_from_dict, params_to_dict, read_observations, truth_from_dict, write_observations
from .truth import EvaluationChain, check_forgetting

log = logging.getLogger("nphmm")


class ConfigError(ValueError):
    pass


def data_seed(master, replicate):
    return np.random.SeedSequence([master, 0, replicate])


def fit_seed(master, replicate):
    return int(np.random.SeedSequence([master, 1, replicate]).generate_state(1)[0])


def evaluation_seed(master):
    return np.random.SeedSequence([master, 2])


def forgetting_seed(master):
    return np.random.SeedSequence([master, 3])


@dataclass
class ExperimentConfig:
    raw: dict
    seed: int
    output_dir: str
    n: int = None
    n_grid: list = None
    replicates: int = 1
    truth: object = None
    constraint_kwargs: dict = field(default_factory=dict)
    K_max: int = None
    M_max: int = None
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    n_mc: int = 200_000
    burn_in: int = 1000
    batches: int = 30
    forgetting_sequences: int = 20
    forgetting_k: list = field(default_factory=lambda: list(range(1, 11)))

    @classmethod
    def from_dict(cls, raw, seed=None, theory_scale_penalty=False, output_dir=None):
        raw = dict(raw)
        if seed is not None:
            raw["seed"] = seed
        if theory_scale_penalty:
            raw["penalty"] = {"c_pen": 1.0, "r": 15.0}
        if output_dir is not None:
            raw["output_dir"] = output_dir
        try:
            cfg = cls(raw=raw, seed=int(raw.get("seed", 0)), output_dir=str(raw.get("output_dir", "out")))
            cfg.n = int(raw["n"]) if "n" in raw else None
            cfg.n_grid = [int(v) for v in raw["n_grid"]] if "n_grid" in raw else None
            cfg.replicates = int(raw.get("replicates", 1))
            cfg.truth = truth_from_dict(raw["truth"]) if "truth" in raw else None
            cfg.constraint_kwargs = dict(raw.get("constraints", {}))
            grid = raw.get("grid", {})
            cfg.K_max = grid.get("K_max")
            cfg.M_max = grid.get("M_max")
            cfg.penalty = PenaltyConfig(**raw.get("penalty", {}))
            fit = dict(raw.get("fit", {}))
            fit.setdefault("seed", cfg.seed)
            cfg.fit = FitConfig(**fit)
            ev = raw.get("evaluate", {})
            cfg.n_mc = int(ev.get("n_mc", cfg.n_mc))
            cfg.burn_in = int(ev.get("burn_in", cfg.burn_in))
            cfg.batches = int(ev.get("batches", cfg.batches))
            fg = raw.get("forgetting", {})
            cfg.forgetting_sequences = int(fg.get("sequences", cfg.forgetting_sequences))
            cfg.forgetting_k = [int(k) for k in fg.get("k_values", cfg.forgetting_k)]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc!r}") from None
        cfg.validate()
        return cfg

    def validate(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.n_mc > self.burn_in >= 0:
            raise ConfigError("evaluate.n_mc must exceed evaluate.burn_in")
        for n in [self.n] + list(self.n_grid or []):
            if n is None:
                continue
            try:
                self.grid(n)
            except (EmptyGridError, ValueError) as exc:
                raise ConfigError(f"n={n}: {exc}") from None

    def constraints(self, n):
        return Constraints(n=n, **self.constraint_kwargs)

    def grid(self, n):
        kwargs = dict(self.constraint_kwargs)
        c_sigma = kwargs.pop("c_sigma", 1.0)
        return model_grid(n, c_sigma, self.K_max, self.M_max, **kwargs)

    def fit_config(self, replicate):
        return FitConfig(**{**self.fit.to_dict(), "seed": fit_seed(self.seed, replicate)})

    def require_truth(self):
        if self.truth is None:
            raise ConfigError("this command needs a [truth] section")
        return self.truth

    def echo(self):
        return self.raw


def load_config(path, **overrides):
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(raw, **overrides)


def _metadata():
    return {"created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")}


def _write_json(path, payload):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _write_text(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _num(v):
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def cmd_simulate(cfg):
    truth = cfg.require_truth()
    if cfg.n is None:
        raise ConfigError("simulate needs n")
    files = []
    for r in range(cfg.replicates):
        y = truth.simulate(cfg.n, data_seed(cfg.seed, r))
        path = os.path.join(cfg.output_dir, "data", f"rep{r:03d}.csv")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        write_observations(path, y)
        files.append(os.path.relpath(path, cfg.output_dir))
    _write_json(os.path.join(cfg.output_dir, "simulate.json"),
                {"config": cfg.echo(), "files": files, "metadata": _metadata()})
    return files


def cmd_fit(cfg, data_path, K, M, replicate=0):
    y = read_observations(data_path)
    index = ModelIndex(K, M, cfg.constraints(y.size))
    fit = fit_model(y, index, cfg.fit_config(replicate))
    payload = {
        "config": cfg.echo(),
        "data": data_path,
        "K": K,
        "M": M,
        "log_likelihood": fit.final_log_likelihood,
        "converged": fit.converged,
        "restart_index": fit.restart_index,
        "trace": fit.trace,
        "params": params_to_dict(fit.params),
        "metadata": _metadata(),
    }
    _write_json(os.path.join(cfg.output_dir, "fit.json"), payload)
    return fit


def cmd_select(cfg, data_path, replicate=0, stem="select"):
    y = read_observations(data_path)
    report = select_model(y, cfg.grid(y.size), cfg.fit_config(replicate), cfg.penalty)
    payload = {"config": cfg.echo(), "data": data_path, **report.to_dict(), "metadata": _metadata()}
    _write_json(os.path.join(cfg.output_dir, f"{stem}.json"), payload)
    _write_text(os.path.join(cfg.output_dir, f"{stem}.csv"), report.to_csv())
    return report


def cmd_evaluate(cfg, params_path, forgetting=False):
    truth = cfg.require_truth()
    with open(params_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    params = params_from_dict(doc.get("chosen_params") or doc.get("params") or doc)
    chain = EvaluationChain(truth, cfg.n_mc, cfg.burn_in, evaluation_seed(cfg.seed), cfg.batches)
    est = chain.estimate(params)
    payload = {"config": cfg.echo(), "params": params_path, "prediction_error": est.to_dict()}
    if forgetting:
        rep = check_forgetting(truth, cfg.forgetting_sequences, cfg.forgetting_k, forgetting_seed(cfg.seed))
        payload["forgetting"] = rep.to_dict()
    payload["metadata"] = _metadata()
    _write_json(os.path.join(cfg.output_dir, "evaluate.json"), payload)
    return payload


RATE_COLUMNS = ("n", "replicate", "k_hat", "std_error", "K_hat", "M_hat")


def log_log_slope(ns, values):
    """Least-squares slope of log(values) on log(ns); None if any value is not positive."""
    values = np.asarray(values, dtype=float)
    if np.any(~(values > 0)):
        return None
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


def cmd_rate(cfg):
    truth = cfg.require_truth()
    if not cfg.n_grid or len(cfg.n_grid) < 3:
        raise ConfigError("rate needs an n_grid with at least 3 sizes")
    if cfg.replicates < 5:
        raise ConfigError("rate needs at least 5 replicates per size")
    chain = EvaluationChain(truth, cfg.n_mc, cfg.burn_in, evaluation_seed(cfg.seed), cfg.batches)
    csv_path = os.path.join(cfg.output_dir, "rate.csv")
    os.makedirs(cfg.output_dir, exist_ok=True)
    rows = []
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RATE_COLUMNS)
        for n in cfg.n_grid:
            for r in range(cfg.replicates):
                # data seeds are keyed by (n, replicate) so sizes are independent
                y = truth.simulate(n, np.random.SeedSequence([cfg.seed, 0, r, n]))
                report = select_model(y, cfg.grid(n), cfg.fit_config(r), cfg.penalty)
                est = chain.estimate(report.chosen_fit.params)
                row = (n, r, est.k_hat, est.std_error, report.chosen.K, report.chosen.M)
                rows.append(row)
                writer.writerow([_num(v) for v in row])
                fh.flush()
                log.info("n=%d rep=%d K=%d M=%d k_hat=%.5g (se %.2g)", n, r, row[4], row[5], row[2], row[3])
    medians = [float(np.median([row[2] for row in rows if row[0] == n])) for n in cfg.n_grid]
    summary = {
        "config": cfg.echo(),
        "n_grid": cfg.n_grid,
        "median_k_hat": medians,
        "slope": log_log_slope(cfg.n_grid, medians),
        "evaluation": {"n_mc": cfg.n_mc, "burn_in": cfg.burn_in, "batches": cfg.batches},
        "metadata": _metadata(),
    }
    _write_json(os.path.join(cfg.output_dir, "rate_summary.json"), summary)
    return rows, summary


def build_parser():
    parser = argparse.ArgumentParser(prog="nphmm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--theory-scale-penalty", action="store_true",
                       help="use c_pen=1, r=15")
        p.add_argument("--output-dir", help="override output_dir")
        return p

    common(sub.add_parser("simulate", help="write replicate data sets"))
    p = common(sub.add_parser("fit", help="fit one (K, M) model"))
    p.add_argument("--data", required=True)
    p.add_argument("-K", type=int, required=True)
    p.add_argument("-M", type=int, required=True)
    p = common(sub.add_parser("select", help="penalized selection over the grid"))
    p.add_argument("--data", required=True)
    p = common(sub.add_parser("evaluate", help="estimate the prediction error of fitted params"))
    p.add_argument("--params", required=True, help="fit.json or select.json")
    p.add_argument("--forgetting", action="store_true", help="also check the forgetting bound")
    common(sub.add_parser("rate", help="prediction error vs n experiment"))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed,
                          theory_scale_penalty=args.theory_scale_penalty,
                          output_dir=args.output_dir)
        if args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "fit":
            cmd_fit(cfg, args.data, args.K, args.M)
        elif args.command == "select":
            cmd_select(cfg, args.data)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.params, args.forgetting)
        elif args.command == "rate":
            cmd_rate(cfg)
    except (ConfigError, EmptyGridError, FitFailedError, SelectionError, OSError, ValueError) as exc:
        print(f"nphmm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
