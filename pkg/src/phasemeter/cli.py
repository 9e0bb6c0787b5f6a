"""
Batch front end.

    phasemeter COMMAND [--config FILE] [--set KEY=VALUE ...] [--out DIR]
                       [--profile default|fine] [--seed N] [inputs ...]

Config files are flat ``key = value`` text (``#`` starts a comment);
``--set`` overrides win over the file. Exit codes: 0 ok, 1 invalid input,
2 numerical accuracy failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import fock, joint, kernel1d
from . import phasespace as ps
from .errors import AccuracyError, PhasemeterError, ValidationError

log = logging.getLogger("phasemeter")

COMMANDS = ("simulate-joint", "husimi", "compare", "error-report", "posterior", "simulate-1d", "oracle")


def _pos(name, v):
    if not (math.isfinite(v) and v > 0):
        raise ValidationError(f"{name} must be positive and finite, got {v}")
    return v


def _nonneg(name, v):
    if not (math.isfinite(v) and v >= 0):
        raise ValidationError(f"{name} must be non-negative and finite, got {v}")
    return v


def _finite(name, v):
    if not math.isfinite(v):
        raise ValidationError(f"{name} must be finite, got {v}")
    return v


def _int_range(lo, hi):
    def check(name, v):
        if not lo <= v <= hi:
            raise ValidationError(f"{name} must lie in [{lo}, {hi}], got {v}")
        return v

    return check


def _floats(n):
    def parse(text):
        vals = [float(t) for t in text.split(",")]
        if len(vals) != n:
            raise ValueError(f"expected {n} comma-separated numbers")
        return vals

    return parse


# key -> (parser, checker, default); None default means "derived"
KEYS = {
    "state": (str, None, "fock:0"),
    "lambda": (float, _pos, 1.0),
    "coupling": (float, _nonneg, 1.0),
    "pointerWidth1": (float, _pos, None),
    "pointerWidth2": (float, _pos, None),
    "offsetX": (float, _finite, 0.0),
    "offsetP": (float, _finite, 0.0),
    "dim": (int, _int_range(2, 512), 48),
    "errorDim": (int, _int_range(3, 40), 8),
    "posteriorDim": (int, _int_range(2, 120), 32),
    "region": (_floats(4), None, [-0.025, 0.025, -0.025, 0.025]),
    "axes": (str, None, "state"),
    "maxOrder": (int, _int_range(0, 12), 6),
    "momentTol": (float, _pos, 1e-4),
    "charfnTol": (float, _pos, 1e-5),
    "l1Tol": (float, _pos, 1e-3),
    "kernel": (str, None, "gaussian:0.1"),
    "packet": (_floats(3), None, [1.0, 0.0, 2 * math.pi]),
    "grid1d": (_floats(2), None, [1024, 16.0]),
}


def read_config_file(path: str) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k] = v
    return out


def resolve_config(raw: dict[str, str]) -> dict:
    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise ValidationError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = {}
    for key, (parse, check, default) in KEYS.items():
        if key in raw:
            try:
                val = parse(raw[key])
            except ValueError as exc:
                raise ValidationError(f"{key}: cannot parse {raw[key]!r} ({exc})") from None
            if check is not None:
                val = check(key, val)
        else:
            val = default
        cfg[key] = val
    if cfg["axes"] not in ("state", "joint"):
        raise ValidationError(f"axes must be 'state' or 'joint', got {cfg['axes']!r}")
    s1, s2 = joint.optimal_widths(cfg["lambda"], cfg["coupling"] or 1.0)
    if cfg["pointerWidth1"] is None:
        cfg["pointerWidth1"] = s1
    if cfg["pointerWidth2"] is None:
        cfg["pointerWidth2"] = s2
    return cfg


# ---------------------------------------------------------------- builders


def parse_state(spec: str, lam: float, dim: int, seed: int) -> fock.StateVector:
    kind, _, arg = spec.partition(":")
    try:
        if kind == "fock":
            return fock.make_number_state(int(arg), dim, lam)
        if kind == "coeffs":
            c = np.array([complex(t.replace(" ", "")) for t in arg.split(",")])
            if c.size > dim:
                raise ValidationError(f"state has {c.size} coefficients but dim={dim}")
            return fock.StateVector(np.pad(c, (0, dim - c.size)), lam).normalized()
        if kind == "coherent":
            x, p = _floats(2)(arg)
            return ps.coherent_fock_coefficients(ps.CoherentLabel(x, p, lam), dim)
        if kind == "displaced":
            n, x, p = _floats(3)(arg)
            return fock.displace(fock.make_number_state(int(n), dim, lam), x, p)
        if kind == "random":
            return fock.random_finite_state(seed, int(arg), dim, lam)
        if kind == "json":
            return fock.state_from_json(Path(arg).read_text(encoding="utf-8"), lam).resized(dim).normalized()
    except ValueError as exc:
        if isinstance(exc, PhasemeterError):
            raise
        raise ValidationError(f"state: cannot parse {spec!r} ({exc})") from None
    raise ValidationError(f"state: unknown kind {kind!r} (fock, coeffs, coherent, displaced, random, json)")


def measurement_config(cfg: dict, profile: str) -> joint.MeasurementConfig:
    return joint.MeasurementConfig(
        cfg["pointerWidth1"], cfg["pointerWidth2"], cfg["coupling"], cfg["lambda"],
        profile=profile, offset_x=cfg["offsetX"], offset_p=cfg["offsetP"],
    )


def load_grid(path: str) -> ps.PhaseSpaceGrid:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        return ps.grid_from_json(text)
    return ps.grid_from_csv(text)


def kernel_from_spec(spec: str, x: np.ndarray):
    """``delta``, ``delta:s``, ``gaussian:w`` or ``json:path`` (form + parameters, or a sampled array)."""
    kind, _, arg = spec.partition(":")
    if kind == "json":
        doc = json.loads(Path(arg).read_text(encoding="utf-8"))
        form = doc.get("form")
        try:
            if form == "sampled":
                xs = np.asarray(doc["x"], dtype=float)
                K = np.asarray(doc["re"], dtype=float) + 1j * np.asarray(doc["im"], dtype=float)
                return kernel1d.sampled_kernel(K, xs)
            if form == "gaussian":
                return kernel1d.gaussian_kernel(float(doc["width"]), x)
            if form == "delta":
                return _delta(x, float(doc.get("shift", 0.0)))
        except KeyError as exc:
            raise ValidationError(f"kernel file: missing field {exc}") from None
        raise ValidationError(f"kernel file: unknown form {form!r}")
    try:
        if kind == "delta":
            return _delta(x, float(arg) if arg else 0.0)
        if kind == "gaussian":
            return kernel1d.gaussian_kernel(float(arg), x)
    except ValueError as exc:
        if isinstance(exc, PhasemeterError):
            raise
        raise ValidationError(f"kernel: cannot parse {spec!r}") from None
    raise ValidationError(f"kernel: unknown form {kind!r} (delta, gaussian, json)")


def _delta(x, shift):
    span = x[-1] - x[0] + (x[1] - x[0])
    f = np.full((x.size, x.size), span**-0.5, dtype=complex)
    return kernel1d.delta_kernel(f, x, shift)


# ---------------------------------------------------------------- commands


def _state_axes(cfg, state, profile):
    if cfg["axes"] == "joint":
        proc = joint.build_process(measurement_config(cfg, profile))
        return proc.mu_x, proc.mu_p
    return ps.axes_for_state(state, profile)


def _error_reports(proc, dim):
    return {r: joint.worst_case_errors(proc, r, dim).to_dict() for r in joint.REGIMES}


def cmd_simulate_joint(ctx):
    cfg = ctx["config"]
    mc = measurement_config(cfg, ctx["profile"])
    proc = joint.build_process(mc)
    state = parse_state(cfg["state"], cfg["lambda"], cfg["dim"], ctx["seed"])
    rho = joint.pointer_distribution(joint.evolve(proc, state))
    q = ps.husimi_q(state, proc.mu_x, proc.mu_p)
    ctx["write_text"]("rho.csv", ps.grid_to_csv(rho))
    ctx["write_text"]("rho.json", ps.grid_to_json(rho))
    return {
        "measurement": mc.to_dict(),
        "rho_mass": rho.mass,
        "l1_rho_vs_q": ps.l1_distance(rho, q),
        "error_reports": _error_reports(proc, cfg["errorDim"]),
    }


def cmd_husimi(ctx):
    cfg = ctx["config"]
    state = parse_state(cfg["state"], cfg["lambda"], cfg["dim"], ctx["seed"])
    q = ps.husimi_q(state, *_state_axes(cfg, state, ctx["profile"]))
    ctx["write_text"]("q.csv", ps.grid_to_csv(q))
    ctx["write_text"]("q.json", ps.grid_to_json(q))
    return {"q_mass": q.mass, "nx": int(q.x.size), "np": int(q.p.size)}


def cmd_compare(ctx):
    cfg = ctx["config"]
    if len(ctx["inputs"]) != 2:
        raise ValidationError("compare needs exactly two grid files")
    a, b = (load_grid(p) for p in ctx["inputs"])
    rep = ps.measure_equality_oracle(a, b, cfg["maxOrder"], None, cfg["momentTol"], cfg["charfnTol"], cfg["l1Tol"])
    return {"inputs": list(ctx["inputs"]), "equality": rep.to_dict()}


def cmd_error_report(ctx):
    cfg = ctx["config"]
    mc = measurement_config(cfg, ctx["profile"])
    return {"measurement": mc.to_dict(), "error_reports": _error_reports(joint.build_process(mc), cfg["errorDim"])}


def cmd_posterior(ctx):
    cfg = ctx["config"]
    mc = measurement_config(cfg, ctx["profile"])
    proc = joint.build_process(mc)
    state = parse_state(cfg["state"], cfg["lambda"], cfg["dim"], ctx["seed"])
    J = joint.evolve(proc, state)
    region = ps.Region(*cfg["region"])
    dim = cfg["posteriorDim"]
    rho, p_region = joint.condition_on_region(J, region, dim)
    weights = joint.pointer_distribution(J).restricted(region, renormalize=True)
    mixture = ps.p_mixture_density(weights, cfg["lambda"], dim)
    cx, cp = 0.5 * (region.x_min + region.x_max), 0.5 * (region.p_min + region.p_max)
    centre = ps.coherent_fock_coefficients(ps.CoherentLabel(cx, cp, cfg["lambda"]), dim)
    ctx["write_text"]("density.json", json.dumps({
        "schema": ps.SCHEMA,
        "lambda": cfg["lambda"],
        "density": [[[float(c.real), float(c.imag)] for c in row] for row in rho],
    }))
    return {
        "measurement": mc.to_dict(),
        "p_region": p_region,
        "fidelity_with_centre": ps.fidelity_with_pure(rho, centre.amplitudes),
        "trace_distance_to_mixture": ps.trace_distance(rho, mixture),
    }


def cmd_simulate_1d(ctx):
    cfg = ctx["config"]
    n, half = cfg["grid1d"]
    if n != int(n) or n < 16:
        raise ValidationError("grid1d point count must be an integer >= 16")
    _pos("grid1d half-extent", half)
    x = kernel1d.uniform_grid(int(n), half)
    K = kernel_from_spec(cfg["kernel"], x)
    x = K.x
    a, x0, p0 = cfg["packet"]
    _pos("packet width", a)
    psi = kernel1d.gaussian_packet(x, a, x0, p0)
    rho = kernel1d.outcome_distribution(K, psi)
    target = np.abs(psi) ** 2
    lines = [f"# {ps.SCHEMA} nx={x.size}", "mu,rho,psi_sq"]
    lines += [f"{float(m)!r},{float(r)!r},{float(t)!r}" for m, r, t in zip(x, rho, target)]
    ctx["write_text"]("rho1d.csv", "\n".join(lines) + "\n")
    return {
        "kernel": type(K).__name__,
        "retro_error": kernel1d.retro_error(K, psi),
        "rho_mass": float(rho.sum() * (x[1] - x[0])),
        "linf_rho_vs_psi_sq": float(np.max(np.abs(rho - target))),
    }


def _table_json(t: ps.MomentTable):
    return [[None if np.isnan(v) else [float(v.real), float(v.imag)] for v in row] for row in t.moments]


def cmd_oracle(ctx):
    cfg = ctx["config"]
    state = parse_state(cfg["state"], cfg["lambda"], cfg["dim"], ctx["seed"])
    q = ps.husimi_q(state, *_state_axes(cfg, state, ctx["profile"]))
    order = cfg["maxOrder"]
    op_t = ps.operator_moment_table(state, order)
    grid_t = ps.moment_table(q, order)
    d = op_t.defined()
    samples = []
    for kx, kp in ps.default_k_samples(cfg["lambda"]):
        v = ps.characteristic_function(q, kx, kp)
        samples.append({"kx": kx, "kp": kp, "value": [v.real, v.imag]})
    return {
        "max_order": order,
        "operator_moments": _table_json(op_t),
        "grid_moments": _table_json(grid_t),
        "max_moment_gap": float(np.max(np.abs(op_t.moments[d] - grid_t.moments[d]))),
        "characteristic_samples": samples,
    }


HANDLERS = {
    "simulate-joint": cmd_simulate_joint,
    "husimi": cmd_husimi,
    "compare": cmd_compare,
    "error-report": cmd_error_report,
    "posterior": cmd_posterior,
    "simulate-1d": cmd_simulate_1d,
    "oracle": cmd_oracle,
}


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="phasemeter", description="Joint position-momentum measurement simulator.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("inputs", nargs="*", help="grid files (compare only)")
    ap.add_argument("--config", help="flat key = value config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key (repeatable)")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--profile", default="default", choices=sorted(joint.PROFILES))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    raw = read_config_file(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    cfg = resolve_config(raw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = {"command": args.command, "profile": args.profile, "seed": args.seed, **cfg}

    def write_text(name, text):
        (out / name).write_text(text, encoding="utf-8")

    ctx = {"config": cfg, "profile": args.profile, "seed": args.seed, "inputs": args.inputs, "write_text": write_text}
    result = HANDLERS[args.command](ctx)
    report = {"schema": ps.SCHEMA, "config": echo, "seed": args.seed, "result": result}
    write_text("report.json", _dump(report))
    meta = {"schema": ps.SCHEMA, "created": _dt.datetime.now(_dt.timezone.utc).isoformat(), "numpy": np.__version__}
    write_text("meta.json", _dump(meta))
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except AccuracyError as exc:
        print(f"phasemeter: accuracy error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"phasemeter: invalid input: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        code = 1 if isinstance(exc, json.JSONDecodeError) else 3
        print(f"phasemeter: {'invalid input' if code == 1 else 'I/O error'}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
