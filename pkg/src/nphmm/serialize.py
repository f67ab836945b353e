"""Plain-dict and CSV round trips for parameters, truths and observation files."""
import csv
import io

import numpy as np

from .hmm import GaussianEmission, HmmParams
from .model_space import Constraints, EmissionMixture
from .truth import CompactKernelHmm, FiniteHmm, IidMixture, cosine_kernel


def emission_from_dict(d, constraints=None):
    kind = d.get("kind", "gaussian")
    if kind == "gaussian":
        return GaussianEmission(d["mean"], d["sd"])
    if kind == "exp_power_mixture":
        use = constraints if d.get("floor_weight", 0.0) > 0 else None
        return EmissionMixture(d["weights"], d["locations"], d["scales"], use,
                               None if use is not None else d.get("p", 2))
    raise ValueError(f"unknown emission kind {kind!r}")


def params_to_dict(params):
    out = {
        "pi": params.pi.tolist(),
        "Q": params.Q.tolist(),
        "emissions": [e.to_dict() for e in params.emissions],
    }
    constraints = next((getattr(e, "constraints", None) for e in params.emissions
                        if getattr(e, "constraints", None) is not None), None)
    if constraints is not None:
        out["constraints"] = constraints.to_dict()
    return out


def params_from_dict(d):
    constraints = Constraints.from_dict(d["constraints"]) if "constraints" in d else None
    emissions = [emission_from_dict(e, constraints) for e in d["emissions"]]
    pi = d.get("pi")
    Q = np.asarray(d["Q"], dtype=float)
    if pi is None:
        from .hmm import stationary_distribution

        pi = stationary_distribution(Q)
    return HmmParams(pi, Q, emissions)


def _state_function(d):
    kind = d.get("kind", "linear")
    if kind == "linear":
        a, b = float(d.get("intercept", 0.0)), float(d["slope"])
        return lambda x: a + b * np.asarray(x)
    if kind == "cosine":
        a, off = float(d["amplitude"]), float(d.get("offset", 0.0))
        return lambda x: off + a * np.cos(2 * np.pi * np.asarray(x))
    raise ValueError(f"unknown emission mean kind {kind!r}")


def truth_from_dict(d):
    kind = d["type"]
    if kind == "finite_hmm":
        return FiniteHmm(params_from_dict(d))
    if kind == "iid_mixture":
        return IidMixture(emission_from_dict(d["emission"]))
    if kind == "compact_kernel":
        kern = d.get("kernel", {"kind": "cosine", "amplitude": 0.5})
        if kern.get("kind", "cosine") != "cosine":
            raise ValueError(f"unknown kernel kind {kern.get('kind')!r}")
        return CompactKernelHmm(
            cosine_kernel(float(kern["amplitude"])),
            _state_function(d["emission_mean"]),
            float(d["emission_sd"]),
            burn_in=int(d.get("burn_in", 1000)),
            grid_size=int(d.get("grid_size", 256)),
            description={"kernel": kern, "emission_mean": d["emission_mean"],
                         "emission_sd": float(d["emission_sd"])},
        )
    raise ValueError(f"unknown truth type {kind!r}")


def write_observations(path_or_buf, y):
    """One column ``y`` with a header; floats written as shortest round-trip decimals."""
    text = "y\n" + "".join(repr(float(v)) + "\n" for v in np.asarray(y, dtype=float))
    if isinstance(path_or_buf, io.TextIOBase):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def read_observations(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "y" not in reader.fieldnames:
            raise ValueError(f"{path}: expected a header with column 'y'")
        try:
            y = np.array([float(row["y"]) for row in reader])
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: unparsable value ({exc})") from None
    if y.size == 0 or not np.all(np.isfinite(y)):
        raise ValueError(f"{path}: no data or non-finite values")
    return y
