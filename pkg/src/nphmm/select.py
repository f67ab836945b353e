"""Penalized selection of (K, M) over a model grid."""
import csv
import io
import json
import logging
from dataclasses import dataclass, field

from .fit import FitConfig, FitFailedError, fit_model
from .model_space import PenaltyConfig, penalty, penalty_value

log = logging.getLogger(__name__)

TABLE_COLUMNS = ("K", "M", "model_dimension", "log_likelihood", "penalty", "score", "status")


class SelectionError(RuntimeError):
    def __init__(self, table):
        msgs = [f"(K={r['K']}, M={r['M']}): {r['error']}" for r in table]
        super().__init__("every fit failed: " + "; ".join(msgs))
        self.table = table


@dataclass
class SelectionReport:
    chosen: object
    chosen_fit: object
    table: list
    fit_config: FitConfig
    penalty_config: PenaltyConfig
    fits: dict = field(default_factory=dict, repr=False)

    @property
    def chosen_score(self):
        return next(r["score"] for r in self.table
                    if (r["K"], r["M"]) == (self.chosen.K, self.chosen.M))

    def to_dict(self):
        from .serialize import params_to_dict

        return {
            "chosen": {"K": self.chosen.K, "M": self.chosen.M},
            "chosen_log_likelihood": self.chosen_fit.final_log_likelihood,
            "chosen_params": params_to_dict(self.chosen_fit.params),
            "constraints": self.chosen.constraints.to_dict(),
            "fit_config": self.fit_config.to_dict(),
            "penalty": {"c_pen": self.penalty_config.c_pen, "r": self.penalty_config.r},
            "table": self.table,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        for row in self.table:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()


def select_model(y, grid, fit_config=None, penalty_config=None, fitter=fit_model):
    """Fit every grid point and keep the maximizer of ``(1/n) l_n - pen_n``.

    Failed fits are recorded in the table and left out of the arg max. Ties go
    to the earliest grid entry, i.e. smallest K then smallest M for a grid from
    :func:`model_grid`.
    """
    fit_config = fit_config or FitConfig()
    penalty_config = penalty_config or PenaltyConfig()
    if not grid:
        raise ValueError("empty model grid")
    table, fits = [], {}
    best_row = None
    for index in grid:
        row = {"K": index.K, "M": index.M, "model_dimension": index.model_dimension}
        pen = penalty(index, penalty_config.c_pen, penalty_config.r)
        try:
            fit = fitter(y, index, fit_config)
        except FitFailedError as exc:
            row.update(log_likelihood=None, penalty=pen, score=None, status="failed", error=str(exc))
            table.append(row)
            continue
        fits[index.K, index.M] = fit
        score = fit.final_log_likelihood - pen
        row.update(log_likelihood=fit.final_log_likelihood, penalty=pen, score=score, status="ok")
        table.append(row)
        log.info("K=%d M=%d loglik/n=%.6f pen=%.6f score=%.6f",
                 index.K, index.M, fit.final_log_likelihood, pen, score)
        if best_row is None or score > best_row[1]["score"]:
            best_row = (index, row)
    if best_row is None:
        raise SelectionError(table)
    index = best_row[0]
    return SelectionReport(index, fits[index.K, index.M], table, fit_config, penalty_config, fits)


def rescore(table, penalty_config, n):
    """Arg max of a stored table under another penalty, without refitting."""
    best = None
    for row in table:
        if row.get("status") != "ok":
            continue
        pen = penalty_value(row["K"], row["M"], n, penalty_config.c_pen, penalty_config.r)
        score = row["log_likelihood"] - pen
        if best is None or score > best[1]:
            best = (row, score)
    return best[0]
