"""Command line entry point: ``artifact <subcommand> [flags]``."""
import argparse
import csv
import io
import json
import re
import sys

from . import experiments as ex
from .errors import ArtifactError

SUBCOMMANDS = ["rays", "monodromy", "gauge-check", "cdybe-check", "poisson-check", "reduction-check", "groupoid-check", "suite"]

# config keys accepted from --config files and --set JSON, with their parsers
_FIELDS = {
    "n": int,
    "a0": None,
    "base_direction": float,
    "samples": int,
    "samples_gl3": int,
    "seed": int,
    "xnorm": float,
    "ode_rtol": float,
    "ode_atol": float,
    "fd_step": float,
    "series_order": int,
    "workers": int,
    "gauge_samples": int,
    "point_samples": int,
}


def parse_complex_list(text):
    """'0,1,1+i' -> (0, 1, 1+1j); both i and j are accepted as the imaginary unit."""
    out = []
    for t in text.split(","):
        t = t.strip().replace(" ", "").replace("i", "j")
        if t:
            out.append(complex(re.sub(r"(?<![0-9.])j", "1j", t)))
    return tuple(out)


def _coerce(key, value):
    if key == "a0":
        if isinstance(value, str):
            return parse_complex_list(value)
        return tuple(complex(*v) if isinstance(v, list) else complex(v) for v in value)
    return _FIELDS[key](value)


def build_parser():
    p = argparse.ArgumentParser(prog="artifact", description="Stokes data and dynamical r-matrix experiments.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--n", type=int)
    p.add_argument("--a0", help="comma separated complex diagonal entries, e.g. 0,1,1+1j")
    p.add_argument("--base-dir", type=float, dest="base_direction", help="base direction in radians")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--xnorm", type=float)
    p.add_argument("--ode-rtol", type=float, dest="ode_rtol")
    p.add_argument("--ode-atol", type=float, dest="ode_atol")
    p.add_argument("--fd-step", type=float, dest="fd_step")
    p.add_argument("--series-order", type=int, dest="series_order")
    p.add_argument("--workers", type=int)
    p.add_argument("--config", help="file of key=value lines")
    p.add_argument("--set", dest="json_override", help="JSON object overriding config keys")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--plot", help="write an SVG of the Stokes rays")
    return p


def split_tolerances(argv):
    """Pull --tol.<name> VALUE / --tol.<name>=VALUE out of argv."""
    rest, tols = [], {}
    it = iter(argv)
    for arg in it:
        if arg.startswith("--tol."):
            key, eq, value = arg[len("--tol."):].partition("=")
            if not eq:
                value = next(it, None)
                if value is None:
                    raise SystemExit(f"missing value for --tol.{key}")
            tols[key] = float(value)
        else:
            rest.append(arg)
    return rest, tols


def config_from_args(args, tols):
    settings = {}
    tolerances = {}
    if args.config:
        with open(args.config) as fh:
            for k, v in ex.load_config_text(fh.read()).items():
                if k.startswith("tol."):
                    tolerances[k[4:]] = float(v)
                else:
                    settings[k] = v
    if args.json_override:
        for k, v in json.loads(args.json_override).items():
            if k == "tolerances":
                tolerances.update(v)
            else:
                settings[k] = v
    for k in _FIELDS:
        v = getattr(args, k, None)
        if v is not None:
            settings[k] = v
    tolerances.update(tols)
    unknown = set(settings) - set(_FIELDS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kw = {k: _coerce(k, v) for k, v in settings.items()}
    if "n" not in kw and "a0" in kw:
        kw["n"] = len(kw["a0"])
    return ex.ExperimentConfig(tolerances=tolerances, **kw)


def render(report, fmt):
    if fmt == "json":
        return ex.to_json(report) + "\n"
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(ex.to_csv_rows(report))
    return buf.getvalue()


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    rest, tols = split_tolerances(argv)
    args = build_parser().parse_args(rest)
    try:
        cfg = config_from_args(args, tols)
    except (ValueError, ArtifactError) as exc:
        print(f"artifact: invalid configuration: {exc}", file=sys.stderr)
        return 2
    report = ex.run_suite(cfg, args.command)
    if args.plot:
        ex.plot_rays(cfg.a0, args.plot, cfg.base_direction)
    text = render(report, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for name, chk in report["checks"].items():
        if chk["mandatory"]:
            print(f"{name}: {'pass' if chk['pass'] else 'FAIL'}", file=sys.stderr)
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
