"""Command-line interface: ``order-density <command> ...``.

Exit codes: 0 success, 2 usage or bad input, 3 size guard, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional

from . import fixtures
from .arboreal import arboreal_from_spec, density_interval, failure_constant, fixed_density_level
from .curves import curve_from_spec, empirical_density
from .density import (DefectRule, DensityResult, ImageType, closed_density, denominator_audit, limit_audit,
                      series_partials, sum_series)
from .exactnum import format_decimal, format_rational, parse_rational
from .matgroups import (SizeGuardError, cartan, gl2_full, group_from_spec, normalizer_cartan, preimage_group,
                        standard_cartan_params)
from .measures import (FitRejected, coset_shares, fit_tail, measure_table, merge_tables, reduction_class_table,
                       singular_mass, split_coset_tables)

EXIT_OK, EXIT_USAGE, EXIT_GUARD, EXIT_VERIFY = 0, 2, 3, 4


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# shared helpers


def load_spec(text: str) -> dict:
    """A JSON object given inline or as a file path."""
    if text.lstrip().startswith("{"):
        return json.loads(text)
    return json.loads(Path(text).read_text())


def image_group(image: ImageType, ell: int):
    """Level-1 group of a closed-form image type."""
    if image is ImageType.GL2_FULL:
        return gl2_full(ell, 1)
    if image is ImageType.EXPLICIT:
        raise UsageError("explicit images need --group-spec")
    split = image in (ImageType.SPLIT_CARTAN, ImageType.NORM_SPLIT)
    d, r = standard_cartan_params(ell, split)
    c = cartan(ell, 1, d, r)
    return normalizer_cartan(c) if image in (ImageType.NORM_SPLIT, ImageType.NORM_NONSPLIT) else c


def fitted_model(group, level: int, max_level: Optional[int] = None):
    """Fit a tail model, raising the level until the fit is accepted."""
    max_level = max_level or level + 2
    last: Optional[Exception] = None
    for lvl in range(level, max_level + 1):
        try:
            tables = [measure_table(group, k) for k in range(max(group.level, lvl - 2), lvl + 1)]
            return fit_tail(tables)
        except FitRejected as exc:
            last = exc
    raise FitRejected(f"no geometric tail up to level {max_level}: {last}")


def _csv(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _flat_csv(obj: dict) -> str:
    keys = [k for k, v in obj.items() if not isinstance(v, (dict, list))]
    return _csv(keys, [[obj[k] for k in keys]])


def emit(obj: dict, args, csv_text: Optional[str] = None) -> None:
    text = csv_text if args.format == "csv" else json.dumps(obj, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_exact(args) -> int:
    image = ImageType.parse(args.image)
    d = args.defect + args.scale
    value = closed_density(image, args.ell, d)
    res = DensityResult(value, "closed", args.ell, defect=d, failure=Fraction(args.ell ** (2 * d)),
                        image=image.value)
    out = res.to_json()
    out["denominator_audit"] = denominator_audit(value, args.ell, image.is_cm)
    emit(out, args, _flat_csv(out))
    return EXIT_OK


def _series_table(args):
    if args.group_spec:
        spec = load_spec(args.group_spec)
        group = group_from_spec(spec, materialize=False)
        cm = group.ambient.kind != "gl2"
        return group, cm, spec.get("tag", "explicit")
    if not args.image or args.ell is None:
        raise UsageError("give --group-spec or both --image and --ell")
    image = ImageType.parse(args.image)
    return image_group(image, args.ell), image.is_cm, image.value


def cmd_series(args) -> int:
    group, cm, tag = _series_table(args)
    model = fitted_model(group, args.level)
    d = args.defect + args.scale
    rule = DefectRule(d)
    value = sum_series(model, rule)
    res = DensityResult(value, "series", group.ell, defect=d, failure=rule.failure(group.ell), image=tag)
    out = res.to_json()
    out["fit_level"] = model.level
    out["partials"] = {k: format_rational(v) for k, v in series_partials(model, rule).items()}
    out["denominator_audit"] = denominator_audit(value, group.ell, cm)
    emit(out, args, _flat_csv(out))
    return EXIT_OK


def cmd_measure(args) -> int:
    spec = load_spec(args.group_spec)
    group = group_from_spec(spec, materialize=False)
    level = args.level or int(spec["level"])
    if args.split_cosets:
        c_table, n_table = split_coset_tables(group, level)
        out = {"C": c_table.to_json(), "N-C": n_table.to_json()}
        rows = [[name, a, b, format_rational(t.mu(a, b))] for name, t in (("C", c_table), ("N-C", n_table))
                for a, b in t.cells()]
        if args.fit:
            out["C"]["tail"] = fit_tail(c_table).to_json()
            out["N-C"]["tail"] = fit_tail(n_table).to_json()
        emit(out, args, _csv(["coset", "a", "b", "mu"], rows))
        return EXIT_OK
    table = measure_table(group, level)
    out = table.to_json()
    if args.fit:
        out["tail"] = fit_tail([measure_table(group, k) for k in range(max(group.level, level - 2), level + 1)]).to_json()
    rows = [[a, b, format_rational(table.mu(a, b))] for a, b in table.cells()]
    emit(out, args, _csv(["a", "b", "mu"], rows))
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = load_spec(args.arboreal_spec)
    group = arboreal_from_spec(spec)
    tail = singular_mass(group.matrix_projection(), group.level)
    lo, hi = density_interval(group, tail)
    out = {
        "value": format_rational(hi),
        "decimal": format_decimal(hi),
        "method": "interval",
        "lower": format_rational(lo),
        "lower_decimal": format_decimal(lo),
        "ell": group.ell,
        "level": group.level,
        "order": group.order,
        "failure": format_rational(failure_constant(group)),
        "tail_bound": format_rational(tail),
    }
    emit(out, args, _flat_csv(out))
    return EXIT_OK


def cmd_empirical(args) -> int:
    curve, point = curve_from_spec(load_spec(args.curve_spec))
    exact = parse_rational(args.exact) if args.exact else None
    report = empirical_density(curve, point, args.ell, args.bound, args.scale, exact, workers=args.threads,
                               keep_rows=bool(args.rows))
    if args.rows:
        Path(args.rows).write_text(report.to_csv())
    out = report.to_json()
    out["label"] = curve.label
    emit(out, args, _flat_csv(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verification suite

Check = tuple  # (name, ok, detail)


def _eq(name: str, got, want) -> Check:
    return name, got == want, f"got {format_rational(got)}, want {format_rational(want)}"


def verify_closed() -> list:
    out = []
    for image, ell, d, want in fixtures.CLOSED:
        got = closed_density(image, ell, d)
        out.append(_eq(f"closed {image} l={ell} d={d}", got, parse_rational(want)))
        out.append((f"denominators {image} l={ell} d={d}", denominator_audit(got, ell, ImageType.parse(image).is_cm),
                    ""))
    for image in ImageType:
        if image is not ImageType.EXPLICIT:
            for ell in (2, 3, 5):
                out.append((f"limit {image.value} l={ell}", limit_audit(image, ell), ""))
    return out


def verify_index8() -> list:
    out = []
    g = group_from_spec(fixtures.INDEX8_SPEC)
    out.append(("index-8 image order", g.order == fixtures.INDEX8_ORDER, f"order {g.order}"))
    for n in (3, 4):
        table = measure_table(preimage_group(g, n))
        bad = [(a, b) for a, b in table.cells() if table.mu(a, b) != fixtures.index8_mu(a, b)]
        out.append((f"index-8 mu table level {n}", not bad, f"mismatches {bad}" if bad else ""))
    model = fitted_model(g, 5)
    bad = [(a, b) for a in range(12) for b in range(12) if model.mu(a, b) != fixtures.index8_mu(a, b)]
    out.append(("index-8 fitted tail", not bad, f"mismatches {bad[:5]}" if bad else ""))
    for d, want in fixtures.INDEX8_DENSITIES.items():
        got = sum_series(model, DefectRule(d))
        out.append(_eq(f"index-8 density d={d}", got, parse_rational(want)))
        out.append((f"index-8 denominators d={d}", denominator_audit(got, 3, False), ""))
    partials = series_partials(model, DefectRule(0))
    for kind, want in fixtures.INDEX8_PARTIALS.items():
        out.append(_eq(f"index-8 partial {kind}", partials.get(kind, Fraction(0)), parse_rational(want)))
    return out


def verify_normalizer13() -> list:
    out = []
    g = group_from_spec(fixtures.NORMALIZER13_SPEC)
    out.append(("13-normalizer image order", g.order == fixtures.NORMALIZER13_ORDER, f"order {g.order}"))
    for name, coset in (("C", 0), ("N-C", 1)):
        dist = reduction_class_table(g, coset)
        for cell, want in fixtures.NORMALIZER13_LEVEL1[name].items():
            out.append(_eq(f"13-normalizer level-1 {name} {cell}", dist.get(cell, Fraction(0)), parse_rational(want)))
    c_table, n_table = split_coset_tables(g, 5)
    shares = (c_table, n_table)
    for name, table, ref in (("C", c_table, fixtures.normalizer13_mu_c), ("N-C", n_table, fixtures.normalizer13_mu_star)):
        model = fit_tail(table)
        bad = [(a, b) for a in range(10) for b in range(10) if model.mu(a, b) != ref(a, b)]
        out.append((f"13-normalizer fitted {name} tail", not bad, f"mismatches {bad[:5]}" if bad else ""))
    merged = fit_tail(merge_tables(shares, list(coset_shares(g))))
    for d, want in fixtures.NORMALIZER13_DENSITIES.items():
        got = sum_series(merged, DefectRule(d))
        out.append(_eq(f"13-normalizer density d={d}", got, parse_rational(want)))
        out.append((f"13-normalizer denominators d={d}", denominator_audit(got, 13, True), ""))
    return out


def verify_cross() -> list:
    out = []
    for ell in (2, 3):
        for image in ImageType:
            if image is ImageType.EXPLICIT:
                continue
            model = fitted_model(image_group(image, ell), 5, 7)
            for d in range(3):
                out.append(_eq(f"series=closed {image.value} l={ell} d={d}", sum_series(model, DefectRule(d)),
                               closed_density(image, ell, d)))
    return out


def verify_arboreal() -> list:
    from .arboreal import standard_arboreal
    out = []
    values = []
    for n in range(1, 5):
        g = gl2_full(2, n)
        a = standard_arboreal(g, 0)
        values.append(fixed_density_level(a))
        if n == 4:
            lo, hi = density_interval(a, singular_mass(g, n))
            target = closed_density("gl2", 2, 0)
            out.append(("arboreal interval n=4 contains 11/21", lo <= target <= hi,
                        f"[{format_decimal(lo)}, {format_decimal(hi)}]"))
    out.append(_eq("arboreal D_1", values[0], Fraction(5, 8)))
    out.append(("arboreal D_n non-increasing", all(x >= y for x, y in zip(values, values[1:])),
                ", ".join(format_decimal(v) for v in values)))
    return out


def verify_empirical(bound: int = 100_000, workers: int = 1) -> list:
    from .curves import CurveQ, PointQ
    out = []
    for label, a, (x, y), ell, exact, _published in fixtures.EMPIRICAL:
        want = parse_rational(exact)
        rep = empirical_density(CurveQ.from_list(a, label), PointQ(x, y), ell, bound, 0, want, workers=workers)
        err = abs(rep.frequency - float(want))
        out.append((f"empirical {label} l={ell}", err <= fixtures.EMPIRICAL_TOLERANCE,
                    f"frequency {rep.frequency:.5f}, exact {format_decimal(want)}, error {err:.5f}"))
    return out


SUITES: dict[str, Callable[..., list]] = {
    "closed": verify_closed,
    "index8": verify_index8,
    "normalizer13": verify_normalizer13,
    "cross": verify_cross,
    "arboreal": verify_arboreal,
    "empirical": verify_empirical,
}


def cmd_verify(args) -> int:
    skip = set(args.skip or [])
    unknown = skip - set(SUITES)
    if unknown:
        raise UsageError(f"unknown suite(s): {', '.join(sorted(unknown))}")
    rows = []
    for name, fn in SUITES.items():
        if name in skip:
            continue
        t0 = time.perf_counter()
        checks = fn(workers=args.threads) if name == "empirical" else fn()
        elapsed = time.perf_counter() - t0
        for check, ok, detail in checks:
            rows.append((name, check, ok, detail))
            if args.format != "csv":
                print(f"{'PASS' if ok else 'FAIL'}  {check}" + (f"  ({detail})" if detail else ""))
        if args.format != "csv" and args.timing:
            print(f"      [{name}: {elapsed:.1f}s]")
    failed = sum(1 for r in rows if not r[2])
    if args.format == "csv":
        sys.stdout.write(_csv(["suite", "check", "ok", "detail"], [list(r) for r in rows]))
    else:
        print(f"{len(rows) - failed} passed, {failed} failed")
    return EXIT_VERIFY if failed else EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="order-density",
                                description="Exact and empirical densities of primes where a point has order prime to l.")
    p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", help="write the report here instead of stdout")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("exact", help="closed-form density for a surjective arboreal image")
    e.add_argument("--image", required=True, help=", ".join(m.value for m in ImageType if m is not ImageType.EXPLICIT))
    e.add_argument("--ell", type=int, required=True)
    e.add_argument("--defect", type=int, default=0)
    e.add_argument("--scale", type=int, default=0, help="density of l^k alpha")
    e.set_defaults(func=cmd_exact)

    s = sub.add_parser("series", help="density from measured and fitted mu tables")
    s.add_argument("--group-spec", help="group spec JSON (inline or path)")
    s.add_argument("--image")
    s.add_argument("--ell", type=int)
    s.add_argument("--level", type=int, default=5, help="measurement level for the tail fit")
    s.add_argument("--defect", type=int, default=0)
    s.add_argument("--scale", type=int, default=0)
    s.set_defaults(func=cmd_series)

    m = sub.add_parser("measure", help="mu(a, b) table of a group")
    m.add_argument("--group-spec", required=True)
    m.add_argument("--level", type=int)
    m.add_argument("--fit", action="store_true", help="also fit geometric tails")
    m.add_argument("--split-cosets", action="store_true", help="per-coset tables of a Cartan normalizer")
    m.set_defaults(func=cmd_measure)

    a = sub.add_parser("simulate", help="finite-level density interval of an arboreal group")
    a.add_argument("--arboreal-spec", required=True)
    a.set_defaults(func=cmd_simulate)

    c = sub.add_parser("empirical", help="prime sweep for a curve and point")
    c.add_argument("--curve-spec", required=True)
    c.add_argument("--ell", type=int, required=True)
    c.add_argument("--bound", type=int, default=100_000)
    c.add_argument("--scale", type=int, default=0)
    c.add_argument("--exact", help="reference rational for the report")
    c.add_argument("--rows", help="write per-prime CSV (p, N, ord, v_ell) here")
    c.set_defaults(func=cmd_empirical)

    v = sub.add_parser("verify", help="replay the reference tables")
    v.add_argument("--skip", action="append", choices=sorted(SUITES), help="suite to skip (repeatable)")
    v.add_argument("--timing", action="store_true")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be positive")
    try:
        return args.func(args)
    except SizeGuardError as exc:
        print(f"order-density: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (UsageError, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"order-density: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
