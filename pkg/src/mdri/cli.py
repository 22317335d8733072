"""Command-line front end: JSON experiment configs in, JSON summaries and CSV tables out.

Usage::

    mdri <subcommand> --config run.json [--out DIR] [--threads N] [--acceptance]

Every run writes ``<name>.json`` and ``<name>_<table>.csv`` files plus a
long-format ``<name>_plot.csv``. Outputs depend only on the config and the
seeds; the only varying content is the ``generated_at`` line (the second line
of the JSON file, the first line of each CSV). Exit codes: 0 success,
2 invalid config or parameters, 3 dominance violation in acceptance mode,
1 internal error.
"""
import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import chaining, fenchel, geometry, simulate, sums, tails
from .exceptions import MdriError
from .norm import DirectionSet, Lp, RandomVectorModel, mdri_norm, sandwich_check
from .space_functions import NuFunction

COMMANDS = ("norm", "conjugate", "tail-bound", "chain", "entropy", "sums-verify", "mc-verify")
EXIT_OK, EXIT_INTERNAL, EXIT_INVALID, EXIT_VIOLATION = 0, 1, 2, 3
SCHEMA_VERSION = 1

# constants the theory leaves open; acceptance runs must state them
REQUIRED_CONSTANTS = {
    "chernoff": ("c",),
    "polar": ("c0",),
    "normed-sum": ("n_max",),
    "chain": ("p0",),
}


class ConfigError(ValueError):
    """The configuration is syntactically valid JSON but unusable."""


@dataclass
class RunResult:
    """Everything a subcommand produces; written to disk by :func:`write_outputs`."""

    summary: dict
    tables: dict = field(default_factory=dict)
    plot: list = field(default_factory=list)
    violations: int = 0


# ---------------------------------------------------------------- config

def load_schema():
    text = resources.files("mdri").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def validate_config(config, acceptance=False):
    """Schema validation plus the acceptance-mode rule on explicit constants."""
    try:
        jsonschema.validate(config, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    if acceptance:
        _check_explicit_constants(config)
    return config


def _check_explicit_constants(config):
    cmd = config["command"]
    const = config.get("constants", {})
    need = []
    if cmd in ("tail-bound", "mc-verify"):
        need += REQUIRED_CONSTANTS.get(config["bound"]["kind"], ())
    if cmd == "chain":
        need += REQUIRED_CONSTANTS["chain"]
    missing = [k for k in need if k not in const]
    if cmd in ("mc-verify", "sums-verify", "chain") and "ci_multiplier" not in config:
        missing.append("ci_multiplier")
    if cmd in ("mc-verify", "sums-verify", "chain") and "seed" not in config:
        missing.append("seed")
    if missing:
        raise ConfigError(f"acceptance mode needs explicit values for: {', '.join(missing)}")


def axis(spec, name="axis"):
    """A 1-d grid from a list or ``{"start", "stop", "num", "spacing"}``."""
    if isinstance(spec, dict):
        lo, hi, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        if spec.get("spacing", "linear") == "log":
            if lo <= 0 or hi <= 0:
                raise ConfigError(f"{name}: log spacing needs positive end points")
            return np.geomspace(lo, hi, num)
        return np.linspace(lo, hi, num)
    return np.asarray(spec, dtype=float)


def point_grid(spec, name="points"):
    """Rows of query points from an explicit list or a tensor of axes ('ij' order)."""
    if isinstance(spec, dict):
        axes = [axis(a, name) for a in spec["tensor"]]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    P = np.asarray(spec, dtype=float)
    if P.ndim != 2:
        raise ConfigError(f"{name}: rows must have equal length")
    return P


def _matrix(M, name):
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError(f"{name} must be a square matrix")
    return A


# ---------------------------------------------------------------- builders

def build_nu(spec):
    if spec["family"] == "gaussian":
        if "covariance" not in spec:
            raise ConfigError("gaussian nu needs a covariance")
        return NuFunction.gaussian(_matrix(spec["covariance"], "nu.covariance"))
    if "dim" not in spec:
        raise ConfigError("rademacher nu needs dim")
    return NuFunction.rademacher(spec["dim"])


def _grid_conjugate(nu, grids, threads):
    if "mu_box" not in grids or "resolution" not in grids:
        raise ConfigError("a numerical conjugate needs grids.mu_box and grids.resolution")
    box, res = grids["mu_box"], grids["resolution"]
    return lambda X: fenchel.conjugate_points(nu, box, res, X, threads, warn=False)[0]


def nu_star_for(nu, grids, threads):
    """Closed form for quadratic ``nu``, tensor-grid conjugation otherwise."""
    if nu.family == "gaussian-quadratic":
        return fenchel.quadratic_conjugate(nu.covariance), "closed-form"
    return _grid_conjugate(nu, grids, threads), "grid"


def scalar_function(spec):
    """``(f, f_star or None, convex)`` for a scalar test function."""
    fam = spec["family"]
    if fam == "quadratic":
        s = float(spec.get("scale", 1.0))
        return lambda l: 0.5 * s * l * l, lambda x: x * x / (2.0 * s), True
    if fam == "quartic":
        return lambda l: l ** 4 / 4.0, lambda x: 0.75 * np.abs(x) ** (4.0 / 3.0), True
    if fam == "power":
        m = float(spec.get("m", 2.0))
        q = m / (m - 1.0)
        return lambda l: np.abs(l) ** m / m, lambda x: np.abs(x) ** q / q, True
    if fam == "exp-minus-one":
        def star(x):
            a = np.abs(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(a > 1.0, a * np.log(a) - a + 1.0, 0.0)
        return lambda l: np.expm1(np.abs(l)), star, True
    # non-convex dent: min(l^2, (|l| - 2)^2 + 1)
    return lambda l: np.minimum(l * l, (np.abs(l) - 2.0) ** 2 + 1.0), None, False


def phi_star_for(spec, lam_grid):
    f, star, _ = scalar_function(spec)
    if star is not None:
        return star
    lam = axis(lam_grid or {"start": -10, "stop": 10, "num": 4001})

    def numeric(r):
        r = np.asarray(r, float)
        g = fenchel.conjugate_1d(f, lam, r)
        return np.interp(r, g.axes[0], g.values)
    return numeric


def profile_for(spec, epsilon):
    """Greedy covering profile of a named point cloud."""
    kind = spec["kind"]
    n = int(spec.get("n", 0))
    metric = "euclidean"
    if kind == "square":
        if n < 2:
            raise ConfigError("square needs n >= 2 points per side")
        t = np.linspace(0.0, 1.0, n)
        X, Y = np.meshgrid(t, t, indexing="ij")
        P = np.column_stack([X.ravel(), Y.ravel()])
    elif kind == "circle":
        if n < 3:
            raise ConfigError("circle needs n >= 3 points")
        th = 2.0 * np.pi * np.arange(n) / n
        P = np.column_stack([np.cos(th), np.sin(th)])
    elif kind == "holder":
        if n < 2 or "alpha" not in spec:
            raise ConfigError("holder needs n >= 2 and alpha")
        alpha = float(spec["alpha"])
        P = np.linspace(0.0, 1.0, n)[:, None]

        def metric(X, x):
            return np.abs(X[:, 0] - x[0]) ** alpha
        metric.__name__ = f"holder-{alpha}"
    else:
        if "coordinates" not in spec:
            raise ConfigError("explicit points need coordinates")
        P = np.asarray(spec["coordinates"], float)
    return geometry.covering_profile(P, epsilon, metric)


DEFAULT_EPSILON = {"start": 0.25, "stop": 2.0 ** -7, "num": 6, "spacing": "log"}


def build_bound(config, threads, c0=None):
    """A :class:`~mdri.tails.BoundReport` from the ``bound`` section and the grids."""
    b = config["bound"]
    grids = config.get("grids", {})
    const = config.get("constants", {})
    kind = b["kind"]
    if kind in ("chernoff", "ellipsoid", "normed-sum"):
        if "x" not in grids:
            raise ConfigError(f"{kind} bounds need grids.x")
        x = point_grid(grids["x"], "grids.x")
    if kind == "chernoff":
        nu = build_nu(b.get("nu") or _missing("bound.nu"))
        nu_star, how = nu_star_for(nu, grids, threads)
        rep = tails.chernoff_tail_bound(nu_star, x, const.get("c", 1.0), b.get("xi_norm", 1.0),
                                        b.get("signs", "positive"))
        rep.params["conjugate"] = how
        return rep
    if kind == "ellipsoid":
        if "D" not in b or "phi" not in b:
            raise ConfigError("ellipsoid bounds need bound.D and bound.phi")
        return tails.ellipsoid_tail_bound(phi_star_for(b["phi"], grids.get("lambda")),
                                          _matrix(b["D"], "bound.D"), b.get("tau", 1.0), x)
    if kind == "normed-sum":
        nu = build_nu(b.get("nu") or _missing("bound.nu"))
        nbar_star, how = nu_bar_star(nu, const.get("n_max", 10 ** 4), grids, threads)
        rep = tails.sum_tail_bound(nbar_star, b.get("xi_norm", 1.0), x, b.get("signs", "positive"))
        rep.params["nu_bar"] = how
        return rep
    # polar
    if "u" not in grids or "p" not in b or "norm_p" not in b:
        raise ConfigError("polar bounds need grids.u, bound.p and bound.norm_p")
    I = integral_for(b)
    c0 = const.get("c0", 1.0) if c0 is None else c0
    if isinstance(c0, dict):
        raise ConfigError("a calibrated c0 needs a simulation (use mc-verify)")
    return tails.polar_tail_bound(b["norm_p"], I, b.get("dim", 2), axis(grids["u"]), b["p"], c0)


def _missing(name):
    raise ConfigError(f"{name} is required")


def integral_for(b):
    if "integral" in b:
        return float(b["integral"])
    if "profile" not in b:
        raise ConfigError("polar bounds need bound.integral or bound.profile")
    eps_min = b.get("eps_min", 0.004)
    eps = np.geomspace(1.0, eps_min, 24)
    res = geometry.entropy_integral(profile_for(b["profile"], eps), b["p"], eps_min)
    return res


def nu_bar_star(nu, n_max, grids, threads):
    """Conjugate of ``sup_n n nu(mu / sqrt n)``.

    When ``nu`` has a covariance and the finite-``n`` envelope never exceeds the
    quadratic limit on a probe grid, the supremum is that limit and its
    conjugate is closed-form.
    """
    if nu.covariance is not None:
        probe = np.linspace(-3.0, 3.0, 7)
        mesh = np.stack(np.meshgrid(*[probe] * nu.dim, indexing="ij"), -1).reshape(-1, nu.dim)
        vals = fenchel.nu_bar_values(nu, mesh, min(int(n_max), 256), nu.covariance,
                                     stability_check=False)
        limit = 0.5 * np.einsum("ki,ij,kj->k", mesh, nu.covariance, mesh)
        if np.allclose(vals.values, limit, rtol=1e-12, atol=1e-12):
            return fenchel.quadratic_conjugate(nu.covariance), "covariance-limit"
    nb = fenchel.nu_bar(nu, int(n_max), nu.covariance)
    return _grid_conjugate(nb, grids, threads), "grid"


# ---------------------------------------------------------------- subcommands

def cmd_norm(config, threads):
    m = config["model"]
    if m["kind"] == "gaussian":
        if "covariance" not in m:
            raise ConfigError("gaussian model needs a covariance")
        model = RandomVectorModel.gaussian(_matrix(m["covariance"], "model.covariance"))
    else:
        if "sampler" not in m or "dim" not in m or "n" not in m:
            raise ConfigError("sampler model needs sampler, dim and n")
        S = simulate.sample_named(m["sampler"], m["dim"], m["n"], m.get("seed", config.get("seed", 0)),
                                  0, threads)
        model = RandomVectorModel.empirical(S)
    base = Lp(config["base"]["p"])
    dirs = config.get("directions", "sphere")
    B = DirectionSet.sphere(model.dim) if dirs == "sphere" else DirectionSet.finite(dirs)
    kw = {"n_points": config.get("n_points"), "bootstrap": config.get("bootstrap", 0),
          "seed": config.get("seed", 0)}
    rep = mdri_norm(model, B, base, **kw)
    sw = sandwich_check(model, B, base, **kw)
    coords = model.coordinate_norms(base)
    summary = dict(rep.as_dict(), sandwich=sw.as_dict())
    rows = [[i + 1, float(c)] for i, c in enumerate(coords)]
    plot = [("coordinate-norm", i + 1, float(c)) for i, c in enumerate(coords)]
    plot.append(("norm", 0, rep.norm))
    return RunResult(summary, {"coordinates": (["coordinate", "norm"], rows)}, plot)


def cmd_conjugate(config, threads):
    grids = config.get("grids", {})
    if "nu" in config:
        nu = build_nu(config["nu"])
        if "x" not in grids or not isinstance(grids["x"], dict):
            raise ConfigError("a multidimensional conjugate needs grids.x as a tensor of axes")
        if "mu_box" not in grids or "resolution" not in grids:
            raise ConfigError("a multidimensional conjugate needs grids.mu_box and grids.resolution")
        axes = [axis(a) for a in grids["x"]["tensor"]]
        g = fenchel.conjugate_nd(nu, grids["mu_box"], grids["resolution"], axes, threads)
        summary = {"dim": g.dim, "boundary_points": int(np.sum(g.boundary)),
                   "convex": bool(g.is_convex())}
        if nu.family == "gaussian-quadratic":
            pts = fenchel._tensor_points(g.axes)
            exact = fenchel.quadratic_conjugate(nu.covariance)(pts).reshape(g.values.shape)
            inner = ~g.boundary
            summary["max_error_vs_closed_form"] = float(np.max(np.abs(g.values - exact)[inner])) \
                if np.any(inner) else None
        return RunResult(summary, {"conjugate": _grid_table(g)}, [])
    f, star, convex = scalar_function(config["function"])
    lam = axis(grids.get("lambda", {"start": -10.0, "stop": 10.0, "num": 4001}), "grids.lambda")
    x = axis(grids["x"]["tensor"][0]) if isinstance(grids.get("x"), dict) else (
        np.asarray(grids["x"], float).ravel() if "x" in grids else lam)
    g = fenchel.conjugate_1d(f, lam, x)
    gf = fenchel.GridFunction((lam,), f(lam), convex)
    check = fenchel.double_conjugate_check(gf)
    summary = {"family": config["function"]["family"], "lambda_grid": [float(lam[0]), float(lam[-1]),
                                                                     int(lam.size)],
               "double_conjugate_deviation": check.deviation, "tolerance": check.tolerance,
               "within_tolerance": bool(check.within_tolerance),
               "nonconvex_input": bool(check.expected_nonzero),
               "boundary_points": int(np.sum(g.boundary))}
    if star is not None:
        inner = ~g.boundary
        err = np.abs(g.values - star(g.axes[0]))[inner]
        summary["max_error_vs_closed_form"] = float(err.max()) if err.size else None
    plot = [("f", float(a), float(b)) for a, b in zip(lam, gf.values)]
    plot += [("conjugate", float(a), float(b)) for a, b in zip(g.axes[0], g.values)]
    plot += [("envelope", float(a), float(b)) for a, b in zip(lam, check.envelope)]
    return RunResult(summary, {"conjugate": _grid_table(g)}, plot)


def _grid_table(g):
    buf = io.StringIO()
    g.write_csv(buf)
    return _parse_csv(buf.getvalue())


def _parse_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], rows[1:]


def _bound_table(rep, empirical=None, ci_multiplier=1.0):
    buf = io.StringIO()
    rep.write_csv(buf, empirical, ci_multiplier)
    return _parse_csv(buf.getvalue())


def _point_plot(rep, empirical=None, family="bound"):
    out = [(f"{family}:bound", i, float(b)) for i, b in enumerate(rep.bound)]
    if empirical is not None:
        out += [(f"{family}:empirical", i, float(f)) for i, f in enumerate(empirical.frequency)]
    return out


def cmd_tail_bound(config, threads):
    rep = build_bound(config, threads)
    return RunResult({"bound": rep.as_dict()}, {"bound": _bound_table(rep)}, _point_plot(rep))


def cmd_mc_verify(config, threads):
    b = config["bound"]
    sim = config["simulation"]
    trials, seed = int(config["trials"]), int(config.get("seed", 0))
    stream = int(sim.get("stream", 0))
    ci = float(config.get("ci_multiplier", 1.0))
    const = config.get("constants", {})
    if b["kind"] == "normed-sum":
        return _mc_normed_sum(config, threads, trials, seed, stream, ci)
    sampler = _chunk_sampler(sim)
    statistic = sim.get("statistic", "euclidean-norm" if b["kind"] == "polar" else "orthant")
    extra = {}
    c0 = None
    if b["kind"] == "polar":
        if statistic != "euclidean-norm":
            raise ConfigError("polar bounds are checked against the euclidean-norm statistic")
        norm_stat = lambda X: np.linalg.norm(X, axis=1)
        c0 = const.get("c0", 1.0)
        if isinstance(c0, dict):
            at = float(c0["at"])
            cal = simulate.simulate_exceedance(sampler, norm_stat, [at], c0.get("trials", trials),
                                               seed, c0["stream"], threads)
            I = integral_for(b)
            c0 = tails.calibrate_c0(b["norm_p"], I, b["p"], at, float(cal.upper[0]))
            extra["calibration"] = {"u": at, "frequency": float(cal.frequency[0]),
                                    "upper": float(cal.upper[0]), "c0": c0}
        rep = build_bound(config, threads, c0)
        emp = simulate.simulate_exceedance(sampler, norm_stat, axis(config["grids"]["u"]), trials,
                                           seed, stream, threads)
    else:
        if statistic != "orthant":
            raise ConfigError(f"{b['kind']} bounds are checked against orthant tails")
        rep = build_bound(config, threads)
        emp = simulate.simulate_tail(sampler, trials, rep.points, seed, stream,
                                     b.get("signs", "positive"), threads)
        if "exponent" in rep.params:
            ratio = tails.exponent_ratio(emp.frequency, rep.params["exponent"])
            extra["exponent_ratio"] = [_num(r) for r in ratio]
    dom = simulate.dominance_report(rep, emp, ci)
    summary = {"bound": rep.as_dict(), "dominance": dom.as_dict(), "trials": trials, "seed": seed,
               "stream": stream, **extra}
    return RunResult(summary, {"dominance": _bound_table(rep, emp, ci)}, _point_plot(rep, emp),
                     dom.violations)


def _chunk_sampler(sim):
    if sim["sampler"] == "gaussian":
        if "covariance" not in sim:
            raise ConfigError("a gaussian simulation needs a covariance")
        return simulate.gaussian_chunk(_matrix(sim["covariance"], "simulation.covariance"))
    if "dim" not in sim:
        raise ConfigError("named samplers need simulation.dim")
    return simulate.named_chunk(sim["sampler"], sim["dim"])


def _mc_normed_sum(config, threads, trials, seed, stream, ci):
    sim = config["simulation"]
    if "n_terms" not in sim or "dim" not in sim:
        raise ConfigError("normed-sum checks need simulation.n_terms and simulation.dim")
    rep = build_bound(config, threads)
    signs = config["bound"].get("signs", "positive")
    summary = {"bound": rep.as_dict(), "families": [], "trials": trials, "seed": seed}
    tables, plot, violations = {}, [], 0
    for i, n in enumerate(sim["n_terms"]):
        S = simulate.sample_normed_sums(sim["sampler"], sim["dim"], n, trials, seed, stream + i,
                                        threads)
        emp = simulate.empirical_tail_multi(S, rep.points, signs)
        dom = simulate.dominance_report(rep, emp, ci)
        violations += dom.violations
        summary["families"].append({"n": int(n), "stream": stream + i, "dominance": dom.as_dict()})
        tables[f"n{n}"] = _bound_table(rep, emp, ci)
        plot += _point_plot(rep, emp, f"n={n}")
    summary["violations"] = violations
    return RunResult(summary, tables, plot, violations)


def cmd_chain(config, threads):
    f = config["field"]
    grids = config["grids"]
    const = config.get("constants", {})
    if "v" not in grids:
        raise ConfigError("chain needs grids.v")
    n = int(f["grid"])
    t = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(t, t, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    E = chaining.correlation_matrix(f["rho"], 2)
    model = chaining.FieldModel.gaussian(pts, E, length=f.get("length", 1.0))
    model.validate()
    eps = axis(grids["epsilon"]) if "epsilon" in grids else None
    profile = model.profile(eps)
    V = point_grid(grids["v"], "grids.v")
    p0 = const.get("p0", chaining.DEFAULT_P0)
    p_grid = axis(grids["p"]) if "p" in grids else None
    rep = chaining.chaining_tail_bound(profile, fenchel.quadratic_conjugate(E), V, p_grid, p0)
    kappa = const.get("kappa", geometry.entropy_dimension(profile).kappa)
    summary = {"field": {"points": model.size, "rho": float(f["rho"]), "center": model.center,
                         "max_distance": float(model.distance.max()),
                         "center_radius": float(model.distance[model.center].max())},
               "chaining": rep.as_dict(), "kappa": float(kappa)}
    summary["chaining"]["diagnostics"] = {k: v for k, v in rep.diagnostics.items()
                                          if k != "per_p_log_bound"}
    trials = config.get("trials")
    seed = int(config.get("seed", 0))
    ci = float(config.get("ci_multiplier", 3.0))
    C = const.get("C")
    poly = None
    if isinstance(C, dict):
        if trials is None:
            raise ConfigError("calibrating C needs trials")
        at = point_grid(C["at"], "constants.C.at") if not isinstance(C["at"], (int, float)) \
            else np.array([[C["at"], C["at"]]], float)
        cal, _ = simulate.empirical_field_sup(model.sampler(), at, C.get("trials", trials), seed,
                                              C["stream"], threads)
        C = chaining.calibrate_polynomial_constant(at, cal.upper, f["rho"], kappa)
        summary["calibration"] = {"at": at.tolist(), "upper": [float(u) for u in cal.upper], "C": C}
    if C is not None:
        poly = chaining.gaussian_polynomial_bound(V, f["rho"], kappa, C)
        summary["polynomial"] = {"C": float(C), "kappa": float(kappa),
                                 "bound": [float(b) for b in poly]}
    header = ["v1", "v2", "bound", "capped", "p_star"] + (["polynomial"] if poly is not None else [])
    rows = [[repr(float(v[0])), repr(float(v[1])), repr(float(rep.bound[i])), int(rep.capped[i]),
             repr(float(rep.p_star[i]))] + ([repr(float(poly[i]))] if poly is not None else [])
            for i, v in enumerate(V)]
    plot = [("w", float(p), _num(w)) for p, w in rep.w_table]
    plot += [("chaining:bound", i, float(b)) for i, b in enumerate(rep.bound)]
    violations = 0
    if trials is not None:
        joint, minimax = simulate.empirical_field_sup(model.sampler(), V, int(trials), seed,
                                                      int(config.get("stream", 0)), threads)
        dom = simulate.dominance_report(rep.bound, joint, ci, rep.capped)
        summary["dominance"] = dom.as_dict()
        violations = dom.violations
        header += ["empirical", "ci_low", "ci_high", "dominated"]
        lo, hi = joint.interval
        for i, r in enumerate(rows):
            r += [repr(float(joint.frequency[i])), repr(float(lo[i])), repr(float(hi[i])),
                  int(dom.dominated[i])]
        if poly is not None:
            pd_ = simulate.dominance_report(poly, joint, ci)
            summary["polynomial"]["dominance"] = pd_.as_dict()
            violations += pd_.violations
            header.append("polynomial_dominated")
            for i, r in enumerate(rows):
                r.append(int(pd_.dominated[i]))
        summary["minimax"] = _minimax_summary(V, rep, poly, minimax, ci)
        violations += summary["minimax"]["violations"]
        plot += [("chaining:empirical", i, float(fq)) for i, fq in enumerate(joint.frequency)]
    tables = {"bound": (header, rows), "w": (["p", "w"], [[repr(float(p)), repr(_num(w))]
                                                          for p, w in rep.w_table]),
              "profile": (["epsilon", "N", "H", "provenance"],
                          [[repr(e), repr(c), repr(h), pr] for e, c, h, pr in profile.rows()])}
    return RunResult(summary, tables, plot, violations)


def _minimax_summary(V, rep, poly, minimax, ci):
    """Tail of ``min_j max_y xi(j, y)`` against the bounds at diagonal points ``(v, v)``."""
    levels = minimax.points[:, 0]
    out = {"levels": [float(v) for v in levels], "frequency": [float(x) for x in minimax.frequency],
           "violations": 0}
    for name, vals in (("chaining", rep.bound), ("polynomial", poly)):
        if vals is None:
            continue
        b = np.array([vals[int(np.flatnonzero(np.all(V == lv, axis=1))[0])] for lv in levels])
        dom = simulate.dominance_report(b, minimax, ci)
        out[name] = dom.as_dict()
        out["violations"] += dom.violations
    return out


def cmd_entropy(config, threads):
    grids = config["grids"]
    eps = axis(grids.get("epsilon", DEFAULT_EPSILON), "grids.epsilon")
    profile = profile_for(config["points"], eps)
    summary = {"points": config["points"], "profile": [list(r[:3]) for r in profile.rows()]}
    try:
        summary["dimension"] = geometry.entropy_dimension(profile).as_dict()
    except MdriError as exc:
        summary["dimension"] = {"error": str(exc)}
    integrals = []
    for p in (axis(grids["p"]) if "p" in grids else []):
        r = geometry.entropy_integral(profile, p, float(eps.min()))
        integrals.append({k: _num(v) if isinstance(v, float) else v for k, v in r.as_dict().items()})
    summary["integrals"] = integrals
    rows = [[repr(e), repr(c), repr(h), pr] for e, c, h, pr in profile.rows()]
    plot = [("H", e, h) for e, _, h, _ in profile.rows()]
    return RunResult(summary, {"profile": (["epsilon", "N", "H", "provenance"], rows)}, plot)


def cmd_sums_verify(config, threads):
    grids = config["grids"]
    if "p" not in grids or "n" not in grids:
        raise ConfigError("sums-verify needs grids.p and grids.n")
    p_vals = axis(grids["p"])
    seed = int(config.get("seed", 0))
    ci = float(config.get("ci_multiplier", 3.0))
    records = []
    for k, name in enumerate(config["samplers"]):
        kind = "martingale" if name == "bounded-martingale" else config.get("kind", "independent")
        records += sums.rosenthal_verification(name, p_vals, grids["n"], int(config["trials"]), seed,
                                               kind, ci, threads, stream=1000 * k)
    failed = [r for r in records if not r.passed]
    header = ["sampler", "kind", "p", "n", "empirical", "half_width", "bound", "passed"]
    rows = [[r.sampler, r.kind, repr(r.p), r.n, repr(r.empirical), repr(r.half_width),
             repr(r.bound), int(r.passed)] for r in records]
    summary = {"records": len(records), "violations": len(failed),
               "max_ratio": max(r.empirical / r.bound for r in records), "ci_multiplier": ci}
    plot = [(f"{r.sampler}:p={r.p:g}", r.n, r.empirical / r.bound) for r in records]
    return RunResult(summary, {"rosenthal": (header, rows)}, plot, len(failed))


HANDLERS = {"norm": cmd_norm, "conjugate": cmd_conjugate, "tail-bound": cmd_tail_bound,
            "chain": cmd_chain, "entropy": cmd_entropy, "sums-verify": cmd_sums_verify,
            "mc-verify": cmd_mc_verify}


# ---------------------------------------------------------------- output

def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def timestamp():
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def dumps_report(summary, stamp):
    """JSON text whose second line is the only one carrying the timestamp."""
    body = json.dumps(_jsonable(summary), indent=2, sort_keys=True, allow_nan=False)
    head = "{\n" + f'  "generated_at": {json.dumps(stamp)}'
    rest = body[1:].lstrip("\n")
    if rest.strip() == "}":
        return head + "\n}\n"
    return head + ",\n" + rest + "\n"


def _write_csv(path, header, rows, stamp=None):
    with open(path, "w", newline="") as fh:
        if stamp is not None:
            fh.write(f"# generated_at: {stamp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_plot_data(report, path, stamp=None):
    """Long-format ``series,x,y`` CSV from a :class:`RunResult` or an iterable of triples.

    ``None`` or an empty report gives a header-only file.
    """
    triples = [] if report is None else (report.plot if isinstance(report, RunResult) else report)
    rows = [[s, repr(float(x)), "" if y is None else repr(float(y))] for s, x, y in triples]
    _write_csv(path, ["series", "x", "y"], rows, stamp)
    return Path(path)


def write_outputs(result, out_dir, name, stamp):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{name}.json"]
    paths[0].write_text(dumps_report(result.summary, stamp))
    for table, (header, rows) in sorted(result.tables.items()):
        p = out / f"{name}_{table}.csv"
        _write_csv(p, header, rows, stamp)
        paths.append(p)
    paths.append(emit_plot_data(result, out / f"{name}_plot.csv", stamp))
    return paths


# ---------------------------------------------------------------- entry points

def run(config_path, out_dir="mdri_out", threads=None, acceptance=False, command=None, stream=None):
    """Execute one config; returns an exit code. ``stream`` receives the error text."""
    stream = sys.stderr if stream is None else stream
    try:
        with open(config_path) as fh:
            config = json.load(fh)
        validate_config(config, acceptance)
        if command is not None and config["command"] != command:
            raise ConfigError(f"config is for {config['command']!r}, not {command!r}")
        n_threads = int(threads if threads is not None else config.get("threads", 1))
        if n_threads < 1:
            raise ConfigError("threads must be >= 1")
        result = HANDLERS[config["command"]](config, n_threads)
        write_outputs(result, out_dir, config.get("name", config["command"]), timestamp())
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"mdri: invalid configuration: {exc}", file=stream)
        return EXIT_INVALID
    except MdriError as exc:
        if isinstance(exc, ValueError):
            print(f"mdri: invalid parameters: {exc}", file=stream)
            return EXIT_INVALID
        print(f"mdri: {type(exc).__name__}: {exc}", file=stream)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        print(f"mdri: internal error: {type(exc).__name__}: {exc}", file=stream)
        return EXIT_INTERNAL
    if acceptance and result.violations:
        print(f"mdri: {result.violations} dominance violation(s)", file=stream)
        return EXIT_VIOLATION
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="mdri", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON experiment config")
        p.add_argument("--out", default="mdri_out", help="output directory (default: mdri_out)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: config or 1)")
        p.add_argument("--acceptance", action="store_true",
                       help="require explicit constants and exit 3 on dominance violations")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(args.config, args.out, args.threads, args.acceptance, args.command)


if __name__ == "__main__":
    sys.exit(main())
