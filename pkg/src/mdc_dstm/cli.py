"""
Command-line front end.

    mdc-dstm code        dump a dispersion set
    mdc-dstm design      optimize a constellation and write it out
    mdc-dstm gain-sweep  coding gain against nu
    mdc-dstm bler        Monte Carlo block-error-rate sweep
    mdc-dstm verify      run the invariant battery

Exit codes: 0 ok, 1 verification failure, 2 bad arguments.  The worker count
for ``bler`` comes from ``--workers`` or the ``MDC_DSTM_WORKERS`` variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import subprocess
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import channel, codec, constellation as cons, plotting, stbc

log = logging.getLogger("mdc_dstm")

BLER_FIELDS = ["scheme", "n_t", "n_r", "constellation", "genie", "snr_db", "frames",
               "frame_errors", "bler", "seed"]
SCHEME_ALIASES = {"mdc": "mdc_qostbc_dstm", "mdc_qostbc_dstm": "mdc_qostbc_dstm",
                  "ostbc": "ostbc_dstm", "ostbc_dstm": "ostbc_dstm"}
SEED_FOR_NTX = {2: stbc.alamouti_set, 4: stbc.ostbc_rate34_4tx}


class UsageError(Exception):
    pass


def parse_snr(text: str) -> list[float]:
    """``"0:2:24"`` (start:step:stop, inclusive) or ``"10,15,20"``."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[1] <= 0:
            raise UsageError(f"bad SNR range {text!r}; use start:step:stop")
        start, step, stop = parts
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(n)]
    return [float(p) for p in text.split(",") if p.strip()]


def parse_grid(text: str) -> list[float]:
    return parse_snr(text)


def read_config(path) -> dict:
    """``key = value`` per line; ``#`` starts a comment."""
    out = {}
    for ln in Path(path).read_text().splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise UsageError(f"{path}: expected 'key = value', got {ln!r}")
        k, v = (s.strip() for s in ln.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def artifact_version() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# code ---------------------------------------------------------------------------


def cmd_code(args):
    if args.kind == "ostbc":
        if args.ntx not in SEED_FOR_NTX:
            raise UsageError(f"no square orthogonal design for {args.ntx} antennas")
        dset = SEED_FOR_NTX[args.ntx]()
    else:
        if args.ntx // 2 not in SEED_FOR_NTX or args.ntx % 2:
            raise UsageError(f"no MDC-QOSTBC for {args.ntx} antennas (use 4 or 8)")
        dset = stbc.mdc_map(SEED_FOR_NTX[args.ntx // 2]())
    print(f"{dset.kind}: n_t={dset.n_t} T={dset.t_len} K={dset.k} rate={dset.rate:g}")
    if dset.kind == "ostbc":
        print(f"amicable: {stbc.is_amicable(dset)}")
    if args.out:
        stbc.dump_dispersion_set(dset, args.out)
        print(f"wrote {args.out}")
    return 0


# design -------------------------------------------------------------------------


def _k_for(ntx):
    return {4: 4, 8: 6}.get(ntx, ntx)


def _print_report(report):
    for name, r in report.items():
        detail = ", ".join(f"{k}={v:.6g}" for k, v in r.items() if k != "pass")
        print(f"  {name:14s} {'PASS' if r['pass'] else 'FAIL'}  {detail}")


def cmd_design(args):
    if args.m < 4 or args.m % 2:
        raise UsageError(f"M must be even and >= 4, got {args.m}")
    try:
        cset = cons.optimize(args.m, args.nu, args.ntx, args.starts, args.seed)
    except cons.InfeasibleDesignError as exc:
        print(f"error: infeasible design: {exc}", file=sys.stderr)
        return 2
    obj = cons.objective(cset, args.ntx)
    print(f"M={cset.m} nu={cset.nu:g} radii={', '.join(f'{r:.6f}' for r in cset.radii)}")
    print(f"objective={obj:.12g} coding_gain={cons.coding_gain(cset, args.ntx, _k_for(args.ntx)):.12g}")
    _print_report(cons.check_criteria(cset, n_t=args.ntx))
    if args.out:
        out = Path(args.out)
        cons.write_constellation(cset, out)
        fig = plotting.plot_constellation(cset, out.with_suffix(".png"))
        print(f"wrote {out} and {fig}")
    return 0


def gain_sweep_rows(ms, grid, ntx, starts, seed):
    rows = []
    for m in ms:
        for nu in grid:
            cset = cons.optimize(m, nu, ntx, starts, seed)
            obj = cons.objective(cset, ntx)
            rows.append({"m": m, "nu": nu, "n_t": ntx, "objective": obj,
                         "coding_gain": cons.coding_gain(cset, ntx, _k_for(ntx)),
                         "radii": " ".join(f"{r:.9f}" for r in cset.radii)})
    return rows


def cmd_gain_sweep(args):
    grid = parse_grid(args.nu_grid)
    if not grid:
        raise UsageError("empty nu grid")
    rows = gain_sweep_rows(args.m, grid, args.ntx, args.starts, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.DictWriter(fh, ["m", "nu", "n_t", "objective", "coding_gain", "radii"],
                           lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "objective": f"{r['objective']:.12g}",
                        "coding_gain": f"{r['coding_gain']:.12g}"})
    for m in args.m:
        sub = [r for r in rows if r["m"] == m]
        plotting.write_xy(out.with_name(f"{out.stem}_m{m}.dat"), "nu coding_gain",
                          [r["nu"] for r in sub], [r["coding_gain"] for r in sub])
    fig = plotting.plot_gain_sweep(rows, out.with_suffix(".png"))
    for r in rows:
        print(f"M={r['m']} nu={r['nu']:<6g} objective={r['objective']:.6g} "
              f"coding_gain={r['coding_gain']:.6g}")
    print(f"wrote {out} and {fig}")
    return 0


# bler ---------------------------------------------------------------------------


def _bler_config(args):
    conf = read_config(args.config) if args.config else {}

    def pick(name, default, conv=str):
        v = getattr(args, name, None)
        if v is not None:
            return v
        return conv(conf[name]) if name in conf else default

    scheme = SCHEME_ALIASES.get(pick("scheme", "mdc"))
    if scheme is None:
        raise UsageError(f"unknown scheme; choose from {sorted(SCHEME_ALIASES)}")
    const_file = pick("constellation_file", None)
    const_name = const_file or pick("constellation", None)
    if const_name is None:
        const_name = "M1" if scheme == "mdc_qostbc_dstm" else "16QAM"
    snr = pick("snr", "0:2:24")
    genie = args.genie or conf.get("genie", "false").lower() in ("1", "true", "yes")
    try:
        cfg = channel.SimConfig(
            n_t=int(pick("ntx", 4, int)),
            n_r=int(pick("nrx", 1, int)),
            scheme=scheme,
            constellation=const_name,
            snr_db=tuple(parse_snr(snr) if isinstance(snr, str) else snr),
            min_frame_errors=int(pick("min_errors", 100, int)),
            max_frames=int(pick("max_frames", 2_000_000, int)),
            master_seed=int(pick("seed", 0, int)),
            genie=genie,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def write_bler_csv(path, cfg, points, label):
    """Append result rows (header only for a new file); returns (first_row, n_rows)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists() or path.stat().st_size == 0
    first = 0 if new else sum(1 for _ in path.open()) - 1
    with path.open("a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(BLER_FIELDS)
        for p in points:
            w.writerow([cfg.scheme, cfg.n_t, cfg.n_r, label, int(cfg.genie), f"{p.snr_db:g}",
                        p.frames_run, p.frame_errors, f"{p.bler:.10g}", cfg.master_seed])
    return first, len(points)


def read_bler_csv(path):
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))


def cmd_bler(args):
    cfg = _bler_config(args)
    try:
        link = channel.build_link(cfg)
    except codec.NotQuasiUnitaryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    workers = args.workers if args.workers is not None else channel.worker_count()
    label = Path(cfg.constellation).stem if Path(cfg.constellation).suffix else cfg.constellation
    nominal, effective = link.spectral_efficiency()
    se_label = f"{nominal:g} bps/Hz ({effective:.3g})"
    print(f"{cfg.scheme} {cfg.n_t}x{cfg.n_r} {label}{' genie' if cfg.genie else ''}: {se_label}, "
          f"{link.frame.info_blocks} info blocks/frame")
    started = _now()
    points = []
    for i in range(len(cfg.snr_db)):
        p = channel.run_point(link, i, workers)
        points.append(p)
        print(f"  snr={p.snr_db:6.2f} dB  frames={p.frames_run:8d}  errors={p.frame_errors:4d}  "
              f"bler={p.bler:.4g}", flush=True)
    out = Path(args.out)
    first, n = write_bler_csv(out, cfg, points, label)
    dat = out.with_name(f"{out.stem}_{label}{'_genie' if cfg.genie else ''}.dat")
    plotting.write_xy(dat, "snr_db bler", [p.snr_db for p in points], [p.bler for p in points])
    curves = {}
    for row in read_bler_csv(out):
        key = (f"{row['scheme']} {row['n_t']}x{row['n_r']} {row['constellation']}"
               f"{' genie' if row['genie'] == '1' else ''}")
        curves.setdefault(key, []).append((float(row["snr_db"]), float(row["bler"])))
    fig = plotting.plot_bler(curves, out.with_suffix(".png"))
    manifest = {
        "version": artifact_version(),
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(cfg).items()},
        "master_seed": cfg.master_seed,
        "spectral_efficiency": {"nominal": nominal, "after_reference_block": effective,
                                "label": se_label},
        "frame": {"symbols_per_antenna": link.frame.symbols_per_antenna,
                  "blocks": link.frame.blocks, "info_blocks": link.frame.info_blocks},
        "csv": str(out), "csv_rows": [first, first + n], "plot_data": str(dat),
        "figure": str(fig), "started": started, "finished": _now(), "workers": workers,
    }
    man = out.with_name(f"{out.stem}.manifest-{first:05d}.json")
    man.write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {out}, {dat}, {fig}, {man}")
    return 0


# verify -------------------------------------------------------------------------


def _check(name, fn):
    try:
        ok, detail = fn()
    except Exception as exc:  # a crashing check is a failing check
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return name, bool(ok), detail


def verification_checks(constellation_file=None, full=False, steps=200):
    m4 = stbc.mdc_map(stbc.alamouti_set())
    m8 = stbc.mdc_map(stbc.ostbc_rate34_4tx())
    m1 = cons.closed_form_m4()
    m2 = cons.named_constellation("M2")
    checks = []

    def amicable():
        res = [stbc.amicability_residuals(s) for s in (stbc.alamouti_set(), stbc.ostbc_rate34_4tx())]
        worst = max(v for r in res for k, v in r.items() if k != "scale")
        return worst <= 1e-12, f"max residual {worst:.2e}"

    def eq10():
        r = 0.5 * np.array([[1 + 1j, -1 + 1j, 0, 0], [1 + 1j, 1 - 1j, 0, 0],
                            [0, 0, 1 + 1j, -1 + 1j], [0, 0, 1 + 1j, 1 - 1j]])
        err = np.abs(stbc.assemble(m4, np.ones(4)) - r).max()
        return err <= 1e-12, f"max entry error {err:.2e}"

    def gram():
        worst = 0.0
        for dset, cset in ((m4, m1), (m4, m2), (m8, m2)):
            rng = np.random.default_rng(0)
            idx = rng.integers(0, cset.m, size=(2000, dset.k))
            al, be, res = stbc.gram_decompose(stbc.assemble(dset, cset.points[idx]), dset.k)
            worst = max(worst, np.abs(be).max(), res.max())
        return worst < 1e-9, f"max |beta|, residual {worst:.2e}"

    def criteria(cset):
        def run():
            rep = cons.check_criteria(cset)
            bad = [k for k, v in rep.items() if not v["pass"]]
            detail = "; ".join(
                f"{k}: objective {v['objective']:.3g}" if "objective" in v
                else f"{k}: residual {v['residual']:.3g}" for k, v in rep.items())
            return not bad, detail
        return run

    def quasi_unitary(cset):
        def run():
            prod = cset.points.real * cset.points.imag
            c = np.zeros(4, complex)
            for i, j in np.ndindex(cset.m, cset.m):
                c[0], c[2] = cset.points[i], cset.points[j]
                try:
                    codec.make_code_matrix(m4, c)
                except codec.NotQuasiUnitaryError as exc:
                    return False, f"beta = {exc.beta:.4g} for symbols ({i}, {j}); x*y spans " \
                                  f"[{prod.min():.4g}, {prod.max():.4g}]"
            return True, "beta = 0 for every symbol pair"
        return run

    def decoder_equivalence():
        rng = np.random.default_rng(1)
        syms, words = stbc.codebook(m4, m1.points)
        book = [codec.CodeMatrix(w, codec.gram_scale(m4) * np.sum(np.abs(s) ** 2))
                for s, w in zip(syms, words)]
        mism = 0
        for _ in range(steps):
            r0 = rng.standard_normal((1, 4)) + 1j * rng.standard_normal((1, 4))
            r1 = rng.standard_normal((1, 4)) + 1j * rng.standard_normal((1, 4))
            st = codec.DecoderState(r0, float(rng.choice([1 / 3, 1.0, 5 / 3])))
            i, _ = codec.decode_exhaustive(st, r1, book)
            j, _ = codec.decode_single_symbol(st, r1, m4, m1)
            mism += int(not np.array_equal(m1.points[j], syms[i]))
        return mism == 0, f"{mism} mismatches in {steps} steps"

    checks.append(_check("amicability of O-STBC seeds", amicable))
    checks.append(_check("rate-1 MDC-QOSTBC codeword layout", eq10))
    checks.append(_check("two-block Gram form, beta = 0", gram))
    checks.append(_check("criteria M1", criteria(m1)))
    checks.append(_check("criteria M2", criteria(m2)))
    checks.append(_check("single-symbol == exhaustive decoding", decoder_equivalence))
    if constellation_file:
        user = cons.read_constellation(constellation_file)
        checks.append(_check(f"criteria {constellation_file}", criteria(user)))
        checks.append(_check(f"quasi-unitary codewords {constellation_file}", quasi_unitary(user)))
    if full:
        checks.append(_check("full diversity 4Tx + M1", lambda: (
            (r := stbc.min_rank_all_pairs(m4, m1)) == 4, f"min rank {r}")))
        checks.append(_check("same-circle pairing loses diversity", lambda: (
            (r := stbc.min_rank_all_pairs(m4, [1, 1j, -1, -1j])) < 4, f"min rank {r}")))

        def closed_form():
            c = cons.optimize(4, 0.0, 4, starts=5, seed=0)
            err = np.abs(np.array(c.radii) - cons.closed_form_m4().radii).max()
            return err < 1e-6, f"radius error {err:.2e}"

        checks.append(_check("M=4 optimizer hits closed form", closed_form))
    return checks


def cmd_verify(args):
    checks = verification_checks(args.constellation_file, full=args.all)
    width = max(len(c[0]) for c in checks)
    for name, ok, detail in checks:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    failed = sum(not ok for _, ok, _ in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


# entry point ---------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="mdc-dstm", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("code", help="dump a dispersion set")
    c.add_argument("--ntx", type=int, default=4)
    c.add_argument("--kind", choices=["mdc", "ostbc"], default="mdc")
    c.add_argument("--out")
    c.set_defaults(func=cmd_code)

    d = sub.add_parser("design", help="optimize a quasi-unitary constellation")
    d.add_argument("--m", type=int, default=4)
    d.add_argument("--nu", type=float, default=0.0)
    d.add_argument("--ntx", type=int, default=4)
    d.add_argument("--starts", type=int, default=20)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out")
    d.set_defaults(func=cmd_design)

    g = sub.add_parser("gain-sweep", help="coding gain against nu")
    g.add_argument("--m", type=int, nargs="+", default=[4, 8])
    g.add_argument("--nu-grid", default="0,0.05,0.1,0.15,0.2")
    g.add_argument("--ntx", type=int, default=4)
    g.add_argument("--starts", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="gain_sweep.csv")
    g.set_defaults(func=cmd_gain_sweep)

    b = sub.add_parser("bler", help="Monte Carlo BLER sweep")
    b.add_argument("--config", help="key = value file; flags take precedence")
    b.add_argument("--scheme", choices=sorted(SCHEME_ALIASES))
    b.add_argument("--ntx", type=int)
    b.add_argument("--nrx", type=int)
    b.add_argument("--constellation", help="M1, M2, 16QAM, 8PSK, ...")
    b.add_argument("--constellation-file")
    b.add_argument("--snr", help="start:step:stop or comma list (dB)")
    b.add_argument("--genie", action="store_true", default=False)
    b.add_argument("--seed", type=int)
    b.add_argument("--min-errors", type=int)
    b.add_argument("--max-frames", type=int)
    b.add_argument("--workers", type=int)
    b.add_argument("--out", default="bler.csv")
    b.set_defaults(func=cmd_bler)

    v = sub.add_parser("verify", help="run the invariant battery")
    v.add_argument("--all", action="store_true", help="include the slower all-pairs checks")
    v.add_argument("--constellation-file")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
